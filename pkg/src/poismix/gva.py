"""Gaussian variational fitting of the Poisson random-intercept model.

The marginal log-likelihood is intractable (one integral per group), but a
Gaussian variational posterior N(mu_i, lam_i) per group yields the tractable
evidence lower bound

    L(b0, b1, s2, mu, lam)
        = sum_ij { y_ij (b0 + b1 x_ij + mu_i)
                   - exp(b0 + b1 x_ij + mu_i + lam_i/2) - log(y_ij!) }
          - (m/2) log(s2) + m/2
          - (1/(2 s2)) sum_i (mu_i^2 + lam_i)
          + (1/2) sum_i log(lam_i),

and the parameter estimates are the (b0, b1, s2) component of its argmax.

``fit_gva`` maximizes L by block-coordinate ascent:

  (a) the per-group variational pairs (mu_i, lam_i) by damped 2-d Newton
      (each group's subproblem is strictly concave);
  (b) s2 by its closed-form maximizer mean(lam + mu^2);
  (c) (b0, b1) by one damped Newton step of the Poisson regression with
      per-group offsets mu_i + lam_i/2.

All Newton steps run in unconstrained coordinates (log s2, log lam_i), so
positivity never needs projection.  Convergence requires BOTH a relative
lower-bound change below ``outer_tol`` and a stationarity residual sup-norm
below ``residual_tol``; the bound alone can plateau while s2 still moves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

from .errors import (
    AllZeroResponse,
    DegenerateDesign,
    InnerDivergence,
    NonFiniteBound,
    NotConverged,
)
from .types import Dataset, GvaFit, ModelParams, VariationalParams, validate_dataset

# Largest safe argument to exp() in double precision.
MAX_EXP = 700.0


@dataclass(frozen=True)
class FitOptions:
    """Tolerances and iteration caps for the variational fitter."""

    outer_tol: float = 1e-10  # relative lower-bound change between outer cycles
    residual_tol: float = 1e-8  # sup-norm of the stationarity residuals
    max_outer_iters: int = 500
    inner_tol: float = 1e-12  # per-group stationarity residual
    max_inner_iters: int = 100
    init: Optional[tuple[ModelParams, VariationalParams]] = None

    def __post_init__(self):
        if min(self.outer_tol, self.residual_tol, self.inner_tol) <= 0:
            raise ValueError("all tolerances must be > 0")
        if min(self.max_outer_iters, self.max_inner_iters) < 1:
            raise ValueError("iteration caps must be >= 1")


def _check_match(v: VariationalParams, d: Dataset) -> None:
    if v.m != d.m:
        raise ValueError(f"variational length {v.m} != number of groups {d.m}")


def lower_bound(p: ModelParams, v: VariationalParams, d: Dataset) -> float:
    """Evaluate the evidence lower bound L at the given point.

    Raises:
        NonFiniteBound: some exp() argument exceeds the double-precision
            limit (signals divergent iterates).
    """
    _check_match(v, d)
    eta = p.beta0 + p.beta1 * d.x + v.mu[:, None]
    w = eta + v.lam[:, None] / 2.0
    if float(w.max()) > MAX_EXP:
        raise NonFiniteBound(f"exp argument {w.max():.3g} exceeds {MAX_EXP}")
    m = d.m
    return float(
        (d.y * eta).sum()
        - np.exp(w).sum()
        - gammaln(d.y + 1.0).sum()
        - 0.5 * m * np.log(p.sigma2)
        + 0.5 * m
        - (v.mu**2 + v.lam).sum() / (2.0 * p.sigma2)
        + 0.5 * np.log(v.lam).sum()
    )


def lower_bound_gradient(p: ModelParams, v: VariationalParams, d: Dataset) -> np.ndarray:
    """Exact gradient of the lower bound in unconstrained coordinates.

    Coordinate order: (beta0, beta1, log sigma2, mu_1..mu_m,
    log lam_1..log lam_m), length 3 + 2m.  The beta0, beta1 and mu
    components are exactly the corresponding stationarity equations.
    """
    _check_match(v, d)
    eta = p.beta0 + p.beta1 * d.x + v.mu[:, None]
    w = eta + v.lam[:, None] / 2.0
    if float(w.max()) > MAX_EXP:
        raise NonFiniteBound(f"exp argument {w.max():.3g} exceeds {MAX_EXP}")
    ew = np.exp(w)
    resid = d.y - ew
    s2 = p.sigma2
    g_b0 = resid.sum()
    g_b1 = (d.x * resid).sum()
    g_logs2 = -0.5 * d.m + (v.mu**2 + v.lam).sum() / (2.0 * s2)
    g_mu = resid.sum(axis=1) - v.mu / s2
    a_tot = ew.sum(axis=1)  # B_i * exp(mu_i + lam_i/2)
    g_loglam = 0.5 - 0.5 * v.lam * (a_tot + 1.0 / s2)
    return np.concatenate(([g_b0, g_b1, g_logs2], g_mu, g_loglam))


# --- per-group variational solver ----------------------------------------------


def _solve_groups(
    s: np.ndarray,
    b: np.ndarray,
    sigma2: float,
    tol: float,
    max_iters: int,
    mu0: Optional[np.ndarray] = None,
    lam0: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Damped Newton on (mu_i, log lam_i) for all groups simultaneously.

    ``s`` holds the group count totals, ``b`` the group totals of
    exp(b0 + b1 x).  Each group's objective

        s mu - b exp(mu + lam/2) - (mu^2 + lam)/(2 s2) + (1/2) log lam

    is strictly concave, so undamped Newton converges quadratically near the
    solution and step-halving guarantees global ascent.
    """
    inv_s2 = 1.0 / sigma2
    logb = np.log(b)
    if mu0 is None:
        mu = np.clip(np.log((s + 0.5) / b), -30.0, 30.0)
    else:
        mu = mu0.copy()
    t = np.log(np.full_like(mu, sigma2 / 2.0) if lam0 is None else lam0)

    def objective(mu_a, t_a):
        lam_a = np.exp(t_a)
        loga = logb + mu_a + 0.5 * lam_a
        out = np.where(
            loga > MAX_EXP,
            -np.inf,
            s * mu_a
            - np.exp(np.minimum(loga, MAX_EXP))
            - (mu_a**2 + lam_a) * (0.5 * inv_s2)
            + 0.5 * t_a,
        )
        return out

    eps = np.finfo(float).eps

    def residual_state(mu_a, t_a):
        lam_a = np.exp(t_a)
        with np.errstate(over="ignore"):
            a_a = np.exp(logb + mu_a + 0.5 * lam_a)
        g1_a = s - a_a - mu_a * inv_s2  # d/d mu
        res25_a = 1.0 / lam_a - a_a - inv_s2
        worst_a = np.maximum(np.abs(g1_a), np.abs(res25_a))
        # The raw residuals cannot drop below fp noise of their own terms;
        # the floor keeps the stop criterion attainable for large groups.
        floor = np.maximum(tol, 64.0 * eps * (1.0 + np.abs(s) + a_a + 1.0 / lam_a))
        return lam_a, a_a, g1_a, res25_a, worst_a, floor

    for _ in range(max_iters):
        lam, a, g1, res25, worst, floor = residual_state(mu, t)
        active = worst > floor
        if not active.any():
            return mu, lam
        g2 = 0.5 - 0.5 * lam * (a + inv_s2)  # d/d log lam
        h11 = -a - inv_s2
        h12 = -0.5 * lam * a
        h22 = -0.5 * lam * (a + inv_s2) - 0.25 * lam**2 * a
        det = h11 * h22 - h12**2  # > 0: the Hessian is negative definite
        dmu = -(h22 * g1 - h12 * g2) / det
        dt = -(h11 * g2 - h12 * g1) / det

        base = objective(mu, t)
        step = np.where(active, 1.0, 0.0)
        # Slack sits well above fp evaluation noise; without it, noise-level
        # comparisons near the optimum reject full Newton steps and convergence
        # degrades from quadratic to linear.
        accept_tol = 1e-12 * (1.0 + np.abs(base))
        for _half in range(60):
            trial_mu = mu + step * dmu
            trial_t = t + step * dt
            trial = objective(trial_mu, trial_t)
            bad = active & ~(trial >= base - accept_tol)
            if not bad.any():
                break
            step = np.where(bad, step * 0.5, step)
        moved = step * np.maximum(np.abs(dmu) / (1.0 + np.abs(mu)), np.abs(dt) / (1.0 + np.abs(t)))
        mu = np.where(active, mu + step * dmu, mu)
        t = np.where(active, t + step * dt, t)
        if float(moved[active].max()) <= 4.0 * eps:
            break  # fp-limit stagnation; the state cannot improve further

    lam, a, g1, res25, worst, floor = residual_state(mu, t)
    if not (worst > floor).any():
        return mu, lam
    i = int(np.argmax(worst - floor))
    raise InnerDivergence(i, float(worst[i]))


def solve_variational(p: ModelParams, d: Dataset, opts: FitOptions = FitOptions()) -> VariationalParams:
    """Solve the per-group stationarity equations at fixed model parameters.

    For each group independently, returns the unique (mu_i, lam_i) at which
    both per-group derivatives of the lower bound vanish (to ``inner_tol``).
    The lam equation forces 0 < lam_i < sigma2 at any solution.

    Raises:
        InnerDivergence: a group failed to converge within the iteration cap.
    """
    s = d.row_totals().astype(np.float64)
    b = _group_exposures(p.beta0, p.beta1, d.x)
    mu, lam = _solve_groups(s, b, p.sigma2, opts.inner_tol, opts.max_inner_iters)
    return VariationalParams(mu=mu, lam=lam)


def _group_exposures(beta0: float, beta1: float, x: np.ndarray) -> np.ndarray:
    """Group totals of exp(beta0 + beta1 * x), the per-group rate mass."""
    eta = beta0 + beta1 * x
    if float(eta.max()) > MAX_EXP:
        raise NonFiniteBound(f"exp argument {eta.max():.3g} exceeds {MAX_EXP}")
    return np.exp(eta).sum(axis=1)


# --- full fit -------------------------------------------------------------------


class _Workspace:
    """Per-dataset constants reused across outer iterations."""

    def __init__(self, d: Dataset):
        self.x = d.x
        self.y = d.y
        self.m, self.n = d.m, d.n
        self.s = d.row_totals().astype(np.float64)  # group count totals
        self.y_total = float(self.s.sum())
        self.sxy = float((d.x * d.y).sum())
        self.lgamma_total = float(gammaln(d.y + 1.0).sum())
        self.x2 = d.x**2

    def exposures(self, beta0: float, beta1: float) -> tuple[np.ndarray, np.ndarray]:
        """exp(b0 + b1 x) as a matrix, plus its row totals."""
        eta = beta0 + beta1 * self.x
        if float(eta.max()) > MAX_EXP:
            raise NonFiniteBound(f"exp argument {eta.max():.3g} exceeds {MAX_EXP}")
        exb = np.exp(eta)
        return exb, exb.sum(axis=1)

    def bound_from_parts(self, beta, sigma2, mu, lam, b) -> float:
        """Lower bound via group totals; O(m) given the exposures ``b``."""
        g = np.exp(mu + 0.5 * lam)
        return (
            beta[0] * self.y_total
            + beta[1] * self.sxy
            + float(self.s @ mu)
            - float(b @ g)
            - self.lgamma_total
            - 0.5 * self.m * np.log(sigma2)
            + 0.5 * self.m
            - float((mu**2 + lam).sum()) / (2.0 * sigma2)
            + 0.5 * float(np.log(lam).sum())
        )


def _pooled_poisson_init(ws: _Workspace) -> np.ndarray:
    """Fixed-effects start: 5 damped Newton steps of the no-intercept-noise
    Poisson regression from (0, 0)."""
    beta = np.zeros(2)

    def pooled_obj(bv):
        eta = bv[0] + bv[1] * ws.x
        if float(eta.max()) > MAX_EXP:
            return -np.inf
        return bv[0] * ws.y_total + bv[1] * ws.sxy - float(np.exp(eta).sum())

    obj = pooled_obj(beta)
    for _ in range(5):
        eta = beta[0] + beta[1] * ws.x
        w = np.exp(np.minimum(eta, MAX_EXP))
        grad = np.array([ws.y_total - w.sum(), ws.sxy - (ws.x * w).sum()])
        hess = np.array(
            [[w.sum(), (ws.x * w).sum()], [(ws.x * w).sum(), (ws.x2 * w).sum()]]
        )
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        scale = 1.0
        for _half in range(30):
            trial = beta + scale * step
            trial_obj = pooled_obj(trial)
            if trial_obj >= obj:
                beta, obj = trial, trial_obj
                break
            scale *= 0.5
    return beta


def _residuals_from_parts(ws, beta, sigma2, mu, lam, b, bx) -> np.ndarray:
    """Raw stationarity residuals given precomputed exposures."""
    g = np.exp(mu + 0.5 * lam)
    a = b * g
    r_b0 = ws.s.sum() - a.sum()
    r_b1 = ws.sxy - float(bx @ g)
    r_s2 = float((lam + mu**2).mean()) - sigma2
    r_lam = 1.0 / lam - a - 1.0 / sigma2
    r_mu = ws.s - a - mu / sigma2
    return np.concatenate(([r_b0, r_b1, r_s2], r_lam, r_mu))


def stationarity_residuals(fit: GvaFit, d: Dataset) -> np.ndarray:
    """Left-hand sides of the five stationarity equations at a fit.

    Order: intercept equation, slope equation, variance fixed-point
    (mean(lam + mu^2) - sigma2), then the m per-group lam equations and the
    m per-group mu equations.  All residuals are raw (unscaled).
    """
    ws = _Workspace(d)
    exb, b = ws.exposures(fit.params.beta0, fit.params.beta1)
    bx = (ws.x * exb).sum(axis=1)
    return _residuals_from_parts(
        ws, [fit.params.beta0, fit.params.beta1], fit.params.sigma2,
        fit.variational.mu, fit.variational.lam, b, bx,
    )


def fit_gva(
    d: Dataset,
    opts: FitOptions = FitOptions(),
    on_iteration: Optional[Callable[[int, float, float], None]] = None,
) -> GvaFit:
    """Maximize the lower bound by block-coordinate ascent.

    Args:
        d: panel data (validated on entry).
        opts: tolerances, caps and optional warm start.
        on_iteration: optional hook called after each outer cycle with
            (iteration, lower_bound, residual_sup_norm); used for progress
            reporting and by ascent tests.

    Returns:
        The converged fit.  At convergence sigma2 equals mean(lam + mu^2)
        bit-exactly (the last variance update is closed-form), and the
        stationarity residual sup-norm is below ``opts.residual_tol``.

    Raises:
        AllZeroResponse: every count is zero (no interior maximum).
        DegenerateDesign: constant predictor (slope unidentified).
        NotConverged: iteration cap hit; ``.fit`` carries the best iterate.
        NonFiniteBound: iterates drove an exp() argument past overflow.
    """
    validate_dataset(d)
    if int(d.y.sum()) == 0:
        raise AllZeroResponse("all counts are zero; the intercept diverges")
    if float(d.x.max()) == float(d.x.min()):
        raise DegenerateDesign("predictor is constant; slope is unidentified")

    ws = _Workspace(d)
    if opts.init is not None:
        p0, v0 = opts.init
        _check_match(v0, d)
        beta = np.array([p0.beta0, p0.beta1])
        sigma2 = p0.sigma2
        mu, lam = v0.mu.copy(), v0.lam.copy()
    else:
        beta = _pooled_poisson_init(ws)
        sigma2 = 1.0
        mu = np.zeros(ws.m)
        lam = np.full(ws.m, sigma2 / 2.0)

    def build_fit(converged: bool, iters: int, lb: float, sup: float) -> GvaFit:
        return GvaFit(
            params=ModelParams(float(beta[0]), float(beta[1]), float(sigma2)),
            variational=VariationalParams(mu=mu, lam=lam),
            lower_bound=lb,
            iterations=iters,
            converged=converged,
            residual_sup_norm=sup,
        )

    lb_prev: Optional[float] = None
    lb = -np.inf
    sup = np.inf
    exb, b = ws.exposures(beta[0], beta[1])
    for it in range(1, opts.max_outer_iters + 1):
        # (a) variational block, warm-started from the previous cycle
        try:
            mu, lam = _solve_groups(
                ws.s, b, sigma2, opts.inner_tol, opts.max_inner_iters, mu0=mu, lam0=lam
            )
        except InnerDivergence as e:
            raise NotConverged(
                f"inner solver diverged at outer iteration {it}",
                fit=build_fit(False, it, lb, sup),
            ) from e

        # (a') exact ascent along the intercept/random-effect ridge:
        # shifting (beta0 + delta, mu - delta) leaves every Poisson term
        # unchanged and the quadratic penalty is minimized at delta =
        # mean(mu).  Without this move, coordinate ascent crawls along the
        # ridge at a rate that degrades as the group size grows.
        delta = float(mu.mean())
        if delta != 0.0:
            mu = mu - delta
            trial = np.array([beta[0] + delta, beta[1]])
            exb, b = ws.exposures(trial[0], trial[1])
            beta = trial

        # (b) closed-form variance update
        sigma2 = float((lam + mu**2).mean())

        # (c) one damped Newton step on the fixed effects
        g = np.exp(mu + 0.5 * lam)
        w = exb * g[:, None]
        grad = np.array([ws.y_total - w.sum(), ws.sxy - (ws.x * w).sum()])
        hess = np.array([[w.sum(), (ws.x * w).sum()], [(ws.x * w).sum(), (ws.x2 * w).sum()]])
        step = np.linalg.solve(hess, grad)
        lb_cur = ws.bound_from_parts(beta, sigma2, mu, lam, b)
        scale = 1.0
        for _half in range(60):
            trial = beta + scale * step
            try:
                exb_t, b_t = ws.exposures(trial[0], trial[1])
                lb_t = ws.bound_from_parts(trial, sigma2, mu, lam, b_t)
            except NonFiniteBound:
                lb_t = -np.inf
            if lb_t >= lb_cur - 1e-13 * (1.0 + abs(lb_cur)):
                beta, exb, b, lb = trial, exb_t, b_t, lb_t
                break
            scale *= 0.5
        else:
            lb = lb_cur  # no acceptable step; keep beta

        bx = (ws.x * exb).sum(axis=1)
        res = _residuals_from_parts(ws, beta, sigma2, mu, lam, b, bx)
        sup = float(np.abs(res).max())
        if on_iteration is not None:
            on_iteration(it, lb, sup)
        if (
            lb_prev is not None
            and abs(lb - lb_prev) <= opts.outer_tol * max(1.0, abs(lb))
            and sup < opts.residual_tol
        ):
            return build_fit(True, it, lb, sup)
        lb_prev = lb

    raise NotConverged(
        f"no convergence in {opts.max_outer_iters} outer iterations "
        f"(residual sup-norm {sup:.3g})",
        fit=build_fit(False, opts.max_outer_iters, lb, sup),
    )
