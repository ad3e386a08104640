"""Core value types shared by every module.

All types are immutable after construction (numpy arrays are stored with the
writeable flag cleared), so instances can be shared freely across threads.

Serialization conventions:

* ``ModelParams``, ``VariationalParams``, ``GvaFit``, ``CiSet`` and
  ``CoverageReport`` round-trip through plain JSON dicts via
  ``*_to_dict`` / ``*_from_dict``.
* ``Dataset`` round-trips through CSV with header ``group_id,x,y``,
  ``group_id`` running 0..m-1 with n consecutive rows per group.  The
  latent intercepts are simulation-side diagnostics and are not part of
  the CSV format.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NegativeCount, NonFiniteValue, ShapeMismatch


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ModelParams:
    """The model parameter triple: intercept, slope, random-intercept variance."""

    beta0: float
    beta1: float
    sigma2: float  # must be > 0

    def __post_init__(self):
        for name in ("beta0", "beta1", "sigma2"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be > 0, got {self.sigma2}")

    def as_array(self) -> np.ndarray:
        return np.array([self.beta0, self.beta1, self.sigma2])


@dataclass(frozen=True)
class VariationalParams:
    """Per-group Gaussian posterior means and variances."""

    mu: np.ndarray  # (m,)
    lam: np.ndarray  # (m,), all > 0

    def __post_init__(self):
        object.__setattr__(self, "mu", _freeze(np.asarray(self.mu, dtype=np.float64)))
        object.__setattr__(self, "lam", _freeze(np.asarray(self.lam, dtype=np.float64)))
        if self.mu.ndim != 1 or self.lam.ndim != 1 or self.mu.shape != self.lam.shape:
            raise ValueError("mu and lam must be 1-d arrays of equal length")
        if not (np.isfinite(self.mu).all() and np.isfinite(self.lam).all()):
            raise ValueError("variational parameters must be finite")
        if (self.lam <= 0).any():
            i = int(np.argmax(self.lam <= 0))
            raise ValueError(f"lam[{i}] = {self.lam[i]} must be > 0")

    @property
    def m(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class Dataset:
    """An m-by-n panel of predictors and counts.

    ``u_latent`` holds the simulated random intercepts when the data came from
    the simulator; it exists for diagnostics only and is never read by any
    estimator.
    """

    x: np.ndarray  # (m, n) float64
    y: np.ndarray  # (m, n) int64, entries >= 0
    u_latent: Optional[np.ndarray] = None  # (m,) for simulated data

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y_raw = np.asarray(self.y)
        if not np.issubdtype(y_raw.dtype, np.integer):
            if not np.all(np.floor(y_raw) == y_raw):
                raise ValueError("y entries must be integers")
        y = y_raw.astype(np.int64)
        object.__setattr__(self, "x", _freeze(x))
        object.__setattr__(self, "y", _freeze(y))
        if self.u_latent is not None:
            object.__setattr__(
                self, "u_latent", _freeze(np.asarray(self.u_latent, dtype=np.float64))
            )

    @property
    def m(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def row_totals(self) -> np.ndarray:
        """Group count totals (one per group), computed on demand."""
        return self.y.sum(axis=1)


def validate_dataset(d: Dataset) -> None:
    """Check every Dataset invariant, raising a named error on the first violation.

    Raises:
        ShapeMismatch: x and y shapes differ, are not 2-d, or a dimension is 0;
            also when u_latent is present with the wrong length.
        NegativeCount: some y entry is < 0 (index reported).
        NonFiniteValue: some x entry is NaN/inf (index reported).
    """
    if d.x.ndim != 2 or d.y.ndim != 2:
        raise ShapeMismatch(f"x and y must be 2-d, got x.ndim={d.x.ndim}, y.ndim={d.y.ndim}")
    if d.x.shape != d.y.shape:
        raise ShapeMismatch(f"x shape {d.x.shape} != y shape {d.y.shape}")
    if d.m < 1 or d.n < 1:
        raise ShapeMismatch(f"need m >= 1 and n >= 1, got shape {d.x.shape}")
    if d.u_latent is not None and d.u_latent.shape != (d.m,):
        raise ShapeMismatch(
            f"u_latent length {d.u_latent.shape} does not match m = {d.m}"
        )
    if not np.isfinite(d.x).all():
        i, j = np.unravel_index(int(np.argmin(np.isfinite(d.x))), d.x.shape)
        raise NonFiniteValue("x", int(i), int(j))
    if (d.y < 0).any():
        i, j = np.unravel_index(int(np.argmax(d.y < 0)), d.y.shape)
        raise NegativeCount(int(i), int(j), int(d.y[i, j]))


@dataclass(frozen=True)
class GvaFit:
    """A converged variational fit: estimates, bound value, diagnostics."""

    params: ModelParams
    variational: VariationalParams
    lower_bound: float
    iterations: int
    converged: bool
    residual_sup_norm: float


@dataclass(frozen=True)
class CiSet:
    """Symmetric studentized confidence intervals for the three parameters.

    ``tau2_hat`` is the slope-variance constant estimate behind the slope
    interval; it is None for intervals derived from the exact-likelihood
    information matrix, which does not use it.
    """

    alpha: float
    beta0_interval: tuple[float, float]
    beta1_interval: tuple[float, float]
    sigma2_interval: tuple[float, float]
    tau2_hat: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must be in (0,1), got {self.alpha}")
        for name in ("beta0_interval", "beta1_interval", "sigma2_interval"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must satisfy lower < upper, got ({lo}, {hi})")
        object.__setattr__(self, "beta0_interval", tuple(map(float, self.beta0_interval)))
        object.__setattr__(self, "beta1_interval", tuple(map(float, self.beta1_interval)))
        object.__setattr__(self, "sigma2_interval", tuple(map(float, self.sigma2_interval)))

    def interval(self, which: str) -> tuple[float, float]:
        return {
            "beta0": self.beta0_interval,
            "beta1": self.beta1_interval,
            "sigma2": self.sigma2_interval,
        }[which]

    def length(self, which: str) -> float:
        lo, hi = self.interval(which)
        return hi - lo

    def contains(self, which: str, value: float) -> bool:
        lo, hi = self.interval(which)
        return lo <= value <= hi


@dataclass(frozen=True)
class ParameterCoverage:
    """Aggregated interval behavior for one parameter over many replications."""

    cover_count: int
    coverage_pct: float
    mean_length: float


@dataclass(frozen=True)
class CoverageReport:
    """Coverage of nominal intervals for one (m, n) simulation cell."""

    truth: ModelParams
    dist: str  # "normal" | "uniform"
    m: int
    n: int
    alpha: float
    replications: int
    seed: int
    beta0: ParameterCoverage
    beta1: ParameterCoverage
    sigma2: ParameterCoverage
    failures: int  # non-converged replications, excluded from the counts

    def __post_init__(self):
        used = self.replications - self.failures
        for name in ("beta0", "beta1", "sigma2"):
            pc: ParameterCoverage = getattr(self, name)
            if not 0 <= pc.cover_count <= used:
                raise ValueError(f"{name}.cover_count {pc.cover_count} outside [0, {used}]")
            expect = 100.0 * pc.cover_count / used if used > 0 else float("nan")
            if used > 0 and not math.isclose(pc.coverage_pct, expect, rel_tol=0, abs_tol=1e-9):
                raise ValueError(f"{name}.coverage_pct {pc.coverage_pct} != {expect}")


# --- JSON dict conversion -----------------------------------------------------


def model_params_to_dict(p: ModelParams) -> dict:
    return {"beta0": p.beta0, "beta1": p.beta1, "sigma2": p.sigma2}


def model_params_from_dict(d: dict) -> ModelParams:
    return ModelParams(float(d["beta0"]), float(d["beta1"]), float(d["sigma2"]))


def variational_params_to_dict(v: VariationalParams) -> dict:
    return {"mu": v.mu.tolist(), "lam": v.lam.tolist()}


def variational_params_from_dict(d: dict) -> VariationalParams:
    return VariationalParams(np.asarray(d["mu"]), np.asarray(d["lam"]))


def gva_fit_to_dict(fit: GvaFit) -> dict:
    return {
        "params": model_params_to_dict(fit.params),
        "variational": variational_params_to_dict(fit.variational),
        "lower_bound": fit.lower_bound,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "residual_sup_norm": fit.residual_sup_norm,
    }


def gva_fit_from_dict(d: dict) -> GvaFit:
    return GvaFit(
        params=model_params_from_dict(d["params"]),
        variational=variational_params_from_dict(d["variational"]),
        lower_bound=float(d["lower_bound"]),
        iterations=int(d["iterations"]),
        converged=bool(d["converged"]),
        residual_sup_norm=float(d["residual_sup_norm"]),
    )


def ci_set_to_dict(ci: CiSet) -> dict:
    return {
        "alpha": ci.alpha,
        "beta0_interval": list(ci.beta0_interval),
        "beta1_interval": list(ci.beta1_interval),
        "sigma2_interval": list(ci.sigma2_interval),
        "tau2_hat": ci.tau2_hat,
    }


def ci_set_from_dict(d: dict) -> CiSet:
    return CiSet(
        alpha=float(d["alpha"]),
        beta0_interval=tuple(d["beta0_interval"]),
        beta1_interval=tuple(d["beta1_interval"]),
        sigma2_interval=tuple(d["sigma2_interval"]),
        tau2_hat=None if d.get("tau2_hat") is None else float(d["tau2_hat"]),
    )


def _param_coverage_to_dict(pc: ParameterCoverage) -> dict:
    return {
        "cover_count": pc.cover_count,
        "coverage_pct": pc.coverage_pct,
        "mean_length": pc.mean_length,
    }


def _param_coverage_from_dict(d: dict) -> ParameterCoverage:
    return ParameterCoverage(int(d["cover_count"]), float(d["coverage_pct"]), float(d["mean_length"]))


def coverage_report_to_dict(r: CoverageReport) -> dict:
    return {
        "truth": model_params_to_dict(r.truth),
        "dist": r.dist,
        "m": r.m,
        "n": r.n,
        "alpha": r.alpha,
        "replications": r.replications,
        "seed": r.seed,
        "beta0": _param_coverage_to_dict(r.beta0),
        "beta1": _param_coverage_to_dict(r.beta1),
        "sigma2": _param_coverage_to_dict(r.sigma2),
        "failures": r.failures,
    }


def coverage_report_from_dict(d: dict) -> CoverageReport:
    return CoverageReport(
        truth=model_params_from_dict(d["truth"]),
        dist=str(d["dist"]),
        m=int(d["m"]),
        n=int(d["n"]),
        alpha=float(d["alpha"]),
        replications=int(d["replications"]),
        seed=int(d["seed"]),
        beta0=_param_coverage_from_dict(d["beta0"]),
        beta1=_param_coverage_from_dict(d["beta1"]),
        sigma2=_param_coverage_from_dict(d["sigma2"]),
        failures=int(d["failures"]),
    )


# --- Dataset CSV --------------------------------------------------------------


def dataset_to_csv(d: Dataset) -> str:
    """Render a dataset as CSV text with header ``group_id,x,y``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group_id", "x", "y"])
    for i in range(d.m):
        for j in range(d.n):
            w.writerow([i, repr(float(d.x[i, j])), int(d.y[i, j])])
    return buf.getvalue()


def dataset_from_csv(text: str) -> Dataset:
    """Parse the ``group_id,x,y`` CSV format back into a Dataset.

    The file must contain m contiguous blocks of n rows each, with group_id
    running 0..m-1 in order.
    """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["group_id", "x", "y"]:
        raise ShapeMismatch("CSV must start with header 'group_id,x,y'")
    body = [r for r in rows[1:] if r]
    if not body:
        raise ShapeMismatch("CSV has no data rows")
    try:
        gids = np.array([int(r[0]) for r in body])
        xs = np.array([float(r[1]) for r in body])
        ys = np.array([int(r[2]) for r in body], dtype=np.int64)
    except (IndexError, ValueError) as e:
        raise ShapeMismatch(f"malformed CSV row: {e}") from e
    m = int(gids.max()) + 1
    if len(body) % m != 0:
        raise ShapeMismatch(f"{len(body)} rows do not divide into {m} equal groups")
    n = len(body) // m
    expected = np.repeat(np.arange(m), n)
    if not np.array_equal(gids, expected):
        raise ShapeMismatch("group_id column must be 0..m-1 with n consecutive rows per group")
    return Dataset(x=xs.reshape(m, n), y=ys.reshape(m, n))
