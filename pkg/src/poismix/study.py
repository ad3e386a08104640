"""Monte-Carlo coverage and interval-length studies.

For every (m, n) cell the harness simulates replications keyed by
(study seed, m, replication index), fits the variational estimator,
computes studentized intervals and aggregates containment of the true
parameters and interval lengths.  Replications whose fit fails are counted
and excluded rather than silently dropped, so reported coverage is never
biased by invisible exclusions.

Because every replication's stream is keyed independently, replications can
run serially, in any order, or across processes and produce an identical
report.
"""

from __future__ import annotations

import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

from .errors import PoismixError
from .ghq import exact_ci, fit_mle
from .gva import fit_gva
from .inference import confidence_intervals
from .predictors import PredictorDistribution
from .simulate import replication_seed, simulate_dataset
from .types import (
    CiSet,
    CoverageReport,
    ModelParams,
    ParameterCoverage,
    model_params_from_dict,
    model_params_to_dict,
)

_PARAMS = ("beta0", "beta1", "sigma2")


@dataclass(frozen=True)
class StudyConfig:
    """Design of a simulation study over one or more (m, n) cells.

    ``n_fixed`` pins the per-group size; when None, each cell uses
    n = m // 10 (the paper-style ratio design).
    """

    truth: ModelParams
    dist: PredictorDistribution
    m_values: tuple[int, ...]
    n_fixed: Optional[int] = None
    alpha: float = 0.05
    replications: int = 500
    seed: int = 0
    compare_exact: bool = False
    nodes: int = 25

    def __post_init__(self):
        object.__setattr__(self, "m_values", tuple(int(m) for m in self.m_values))
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must be in (0,1), got {self.alpha}")
        for m in self.m_values:
            if m < 2:
                raise ValueError(f"every m must be >= 2, got {m}")
            if self.n_for(m) < 1:
                raise ValueError(f"derived n for m={m} is < 1")

    def n_for(self, m: int) -> int:
        return self.n_fixed if self.n_fixed is not None else m // 10


def study_config_to_dict(cfg: StudyConfig) -> dict:
    return {
        "truth": model_params_to_dict(cfg.truth),
        "dist": cfg.dist.value,
        "m_values": list(cfg.m_values),
        "n_fixed": cfg.n_fixed,
        "alpha": cfg.alpha,
        "replications": cfg.replications,
        "seed": cfg.seed,
        "compare_exact": cfg.compare_exact,
        "nodes": cfg.nodes,
    }


def study_config_from_dict(d: dict) -> StudyConfig:
    return StudyConfig(
        truth=model_params_from_dict(d["truth"]),
        dist=PredictorDistribution.from_name(d["dist"]),
        m_values=tuple(d["m_values"]),
        n_fixed=d.get("n_fixed"),
        alpha=float(d.get("alpha", 0.05)),
        replications=int(d.get("replications", 500)),
        seed=int(d.get("seed", 0)),
        compare_exact=bool(d.get("compare_exact", False)),
        nodes=int(d.get("nodes", 25)),
    )


# --- per-replication workers (top level so they pickle for process pools) --------


def _coverage_rep(args) -> dict:
    truth_d, dist_name, m, n, alpha, seed, r = args
    truth = model_params_from_dict(truth_d)
    dist = PredictorDistribution.from_name(dist_name)
    data = simulate_dataset(truth, dist, m, n, replication_seed(seed, m, r))
    try:
        fit = fit_gva(data)
        ci = confidence_intervals(fit, data, alpha)
    except PoismixError as e:
        return {"r": r, "ok": False, "error": e.name}
    return {
        "r": r,
        "ok": True,
        "cover": {p: ci.contains(p, getattr(truth, p)) for p in _PARAMS},
        "length": {p: ci.length(p) for p in _PARAMS},
    }


def _compare_rep(args) -> dict:
    truth_d, dist_name, m, n, alpha, seed, r, nodes = args
    truth = model_params_from_dict(truth_d)
    dist = PredictorDistribution.from_name(dist_name)
    data = simulate_dataset(truth, dist, m, n, replication_seed(seed, m, r))
    try:
        fit = fit_gva(data)
        ci_gva = confidence_intervals(fit, data, alpha)
        mle, info = fit_mle(data, nodes=nodes)
        ci_mle = exact_ci(mle, info, alpha)
    except PoismixError as e:
        return {"r": r, "ok": False, "error": e.name}
    return {"r": r, "ok": True, "ratio": length_ratios(ci_gva, ci_mle)}


def _run_reps(worker, arg_list, threads: int) -> list[dict]:
    if threads <= 1:
        return [worker(a) for a in arg_list]
    chunk = max(1, len(arg_list) // (threads * 4))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, arg_list, chunksize=chunk))


# --- coverage ---------------------------------------------------------------------


def run_coverage(cfg: StudyConfig, threads: int = 1) -> list[CoverageReport]:
    """One CoverageReport per (m, n) cell; deterministic given the config.

    Failed replications (any named numerical error) are counted in
    ``failures`` and excluded from the coverage denominators.
    """
    reports = []
    for m in cfg.m_values:
        n = cfg.n_for(m)
        args = [
            (model_params_to_dict(cfg.truth), cfg.dist.value, m, n, cfg.alpha, cfg.seed, r)
            for r in range(cfg.replications)
        ]
        recs = _run_reps(_coverage_rep, args, threads)
        recs.sort(key=lambda rec: rec["r"])
        failures = sum(1 for rec in recs if not rec["ok"])
        used = cfg.replications - failures
        per_param = {}
        for p in _PARAMS:
            count = sum(1 for rec in recs if rec["ok"] and rec["cover"][p])
            lengths = [rec["length"][p] for rec in recs if rec["ok"]]
            per_param[p] = ParameterCoverage(
                cover_count=count,
                coverage_pct=100.0 * count / used if used else float("nan"),
                mean_length=statistics.fmean(lengths) if lengths else float("nan"),
            )
        reports.append(
            CoverageReport(
                truth=cfg.truth,
                dist=cfg.dist.value,
                m=m,
                n=n,
                alpha=cfg.alpha,
                replications=cfg.replications,
                seed=cfg.seed,
                beta0=per_param["beta0"],
                beta1=per_param["beta1"],
                sigma2=per_param["sigma2"],
                failures=failures,
            )
        )
    return reports


# --- interval-length comparison ---------------------------------------------------


def length_ratios(ci_a: CiSet, ci_b: CiSet) -> dict[str, float]:
    """Per-parameter interval length ratios len(a)/len(b)."""
    return {p: ci_a.length(p) / ci_b.length(p) for p in _PARAMS}


@dataclass(frozen=True)
class LengthStats:
    median_ratio: float
    frac_shorter: float  # fraction of replications with ratio < 1


@dataclass(frozen=True)
class LengthComparison:
    """Variational vs exact interval lengths for one (m, n) cell."""

    truth: ModelParams
    dist: str
    m: int
    n: int
    alpha: float
    replications: int
    seed: int
    nodes: int
    beta0: LengthStats
    beta1: LengthStats
    sigma2: LengthStats
    failures: int


def compare_lengths(cfg: StudyConfig, threads: int = 1) -> list[LengthComparison]:
    """Median variational/exact length ratio per parameter per cell.

    Requires ``cfg.compare_exact``; replications where either fit fails are
    counted and excluded.
    """
    if not cfg.compare_exact:
        raise ValueError("compare_lengths requires cfg.compare_exact = True")
    out = []
    for m in cfg.m_values:
        n = cfg.n_for(m)
        args = [
            (
                model_params_to_dict(cfg.truth),
                cfg.dist.value,
                m,
                n,
                cfg.alpha,
                cfg.seed,
                r,
                cfg.nodes,
            )
            for r in range(cfg.replications)
        ]
        recs = _run_reps(_compare_rep, args, threads)
        recs.sort(key=lambda rec: rec["r"])
        failures = sum(1 for rec in recs if not rec["ok"])
        stats = {}
        for p in _PARAMS:
            ratios = [rec["ratio"][p] for rec in recs if rec["ok"]]
            if ratios and not all(math.isfinite(v) and v > 0 for v in ratios):
                raise ValueError(f"non-positive or non-finite length ratio for {p}")
            stats[p] = LengthStats(
                median_ratio=statistics.median(ratios) if ratios else float("nan"),
                frac_shorter=(sum(1 for r in ratios if r < 1.0) / len(ratios))
                if ratios
                else float("nan"),
            )
        out.append(
            LengthComparison(
                truth=cfg.truth,
                dist=cfg.dist.value,
                m=m,
                n=n,
                alpha=cfg.alpha,
                replications=cfg.replications,
                seed=cfg.seed,
                nodes=cfg.nodes,
                beta0=stats["beta0"],
                beta1=stats["beta1"],
                sigma2=stats["sigma2"],
                failures=failures,
            )
        )
    return out


# --- tidy exports -----------------------------------------------------------------


def coverage_reports_to_csv(reports: list[CoverageReport]) -> str:
    """One row per cell and parameter, ready for external plotting."""
    lines = ["m,n,parameter,cover_count,coverage_pct,mean_length,failures,replications"]
    for rep in reports:
        for p in _PARAMS:
            pc: ParameterCoverage = getattr(rep, p)
            lines.append(
                f"{rep.m},{rep.n},{p},{pc.cover_count},{pc.coverage_pct!r},"
                f"{pc.mean_length!r},{rep.failures},{rep.replications}"
            )
    return "\n".join(lines) + "\n"


def comparisons_to_csv(comps: list[LengthComparison]) -> str:
    lines = ["m,n,parameter,median_ratio,frac_shorter,failures,replications"]
    for comp in comps:
        for p in _PARAMS:
            st: LengthStats = getattr(comp, p)
            lines.append(
                f"{comp.m},{comp.n},{p},{st.median_ratio!r},{st.frac_shorter!r},"
                f"{comp.failures},{comp.replications}"
            )
    return "\n".join(lines) + "\n"


def comparison_to_dict(comp: LengthComparison) -> dict:
    return {
        "truth": model_params_to_dict(comp.truth),
        "dist": comp.dist,
        "m": comp.m,
        "n": comp.n,
        "alpha": comp.alpha,
        "replications": comp.replications,
        "seed": comp.seed,
        "nodes": comp.nodes,
        "beta0": {"median_ratio": comp.beta0.median_ratio, "frac_shorter": comp.beta0.frac_shorter},
        "beta1": {"median_ratio": comp.beta1.median_ratio, "frac_shorter": comp.beta1.frac_shorter},
        "sigma2": {
            "median_ratio": comp.sigma2.median_ratio,
            "frac_shorter": comp.sigma2.frac_shorter,
        },
        "failures": comp.failures,
    }
