"""Command-line frontend.

Subcommands: ``simulate``, ``fit``, ``ci``, ``coverage``, ``compare`` and
``selftest``.  All randomness flows from explicit seeds (flags or config
files); nothing is ever seeded from the clock, so identical invocations
produce identical output files.

Exit codes: 0 on success, 1 on usage errors, 2 on numerical failures.  A
numerical failure prints one JSON line to stderr with the stable error name,
e.g. ``{"error": "AllZeroResponse", "message": "..."}``.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import PoismixError, UsageError
from .ghq import DEFAULT_NODES, exact_ci, exact_loglik, fit_mle
from .gva import fit_gva, lower_bound, lower_bound_gradient
from .inference import confidence_intervals, normal_quantile
from .predictors import PredictorDistribution
from .simulate import simulate_dataset
from .study import (
    StudyConfig,
    compare_lengths,
    comparison_to_dict,
    comparisons_to_csv,
    coverage_reports_to_csv,
    run_coverage,
    study_config_from_dict,
    study_config_to_dict,
)
from .types import (
    CiSet,
    Dataset,
    GvaFit,
    ModelParams,
    VariationalParams,
    ci_set_to_dict,
    coverage_report_to_dict,
    dataset_from_csv,
    dataset_to_csv,
    gva_fit_from_dict,
    gva_fit_to_dict,
    model_params_from_dict,
    model_params_to_dict,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2; we map usage errors to 1
        raise UsageError(message)


def _config_hash(payload: dict) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def _metadata(effective_config: dict, seed=None, nodes=None) -> dict:
    return {
        "version": __version__,
        "seed": seed,
        "config_sha256": _config_hash(effective_config),
        "nodes": nodes,
    }


def _write_json(path: str, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read JSON from {path}: {e}") from e


# --- subcommand handlers -----------------------------------------------------------


def _cmd_simulate(args) -> None:
    truth = ModelParams(args.beta0, args.beta1, args.sigma2)
    dist = PredictorDistribution.from_name(args.dist)
    data = simulate_dataset(truth, dist, args.m, args.n, args.seed)
    out = Path(args.out)
    out.write_text(dataset_to_csv(data))
    cfg = {
        "truth": model_params_to_dict(truth),
        "dist": dist.value,
        "m": args.m,
        "n": args.n,
        "seed": args.seed,
    }
    sidecar = out.with_suffix(".meta.json")
    _write_json(str(sidecar), {**cfg, "metadata": _metadata(cfg, seed=args.seed)})
    print(f"wrote {out} and {sidecar}")


def _variational_summary(fit: GvaFit) -> dict:
    mu, lam = fit.variational.mu, fit.variational.lam
    return {
        "mu_mean": float(mu.mean()),
        "mu_min": float(mu.min()),
        "mu_max": float(mu.max()),
        "lam_mean": float(lam.mean()),
        "lam_min": float(lam.min()),
        "lam_max": float(lam.max()),
    }


def _cmd_fit(args) -> None:
    data = dataset_from_csv(Path(args.data).read_text())
    cfg = {"data": os.path.basename(args.data), "method": args.method, "nodes": args.nodes}
    if args.method == "gva":
        fit = fit_gva(data)
        payload = {
            "method": "gva",
            **gva_fit_to_dict(fit),
            "variational_summary": _variational_summary(fit),
            "metadata": _metadata(cfg),
        }
        print(
            f"gva fit: beta0={fit.params.beta0:.6g} beta1={fit.params.beta1:.6g} "
            f"sigma2={fit.params.sigma2:.6g} lower_bound={fit.lower_bound:.6g} "
            f"iterations={fit.iterations} residual={fit.residual_sup_norm:.3g}"
        )
    else:
        mle, info = fit_mle(data, nodes=args.nodes)
        payload = {
            "method": "mle",
            "params": model_params_to_dict(mle),
            "loglik": exact_loglik(mle, data, nodes=args.nodes),
            "information": info.tolist(),
            "metadata": _metadata(cfg, nodes=args.nodes),
        }
        print(
            f"mle fit: beta0={mle.beta0:.6g} beta1={mle.beta1:.6g} sigma2={mle.sigma2:.6g}"
        )
    _write_json(args.out, payload)
    print(f"wrote {args.out}")


def _cmd_ci(args) -> None:
    fit_payload = _read_json(args.fit)
    data = dataset_from_csv(Path(args.data).read_text())
    method = fit_payload.get("method", "gva")
    if method == "gva":
        fit = gva_fit_from_dict(fit_payload)
        ci = confidence_intervals(fit, data, args.alpha)
        estimates = fit.params
    elif method == "mle":
        mle = model_params_from_dict(fit_payload["params"])
        info = np.asarray(fit_payload["information"], dtype=np.float64)
        ci = exact_ci(mle, info, args.alpha)
        estimates = mle
    else:
        raise UsageError(f"unknown fit method {method!r} in {args.fit}")
    cfg = {"fit": os.path.basename(args.fit), "alpha": args.alpha, "method": method}
    _write_json(args.out, {**ci_set_to_dict(ci), "method": method, "metadata": _metadata(cfg)})
    _print_ci_table(ci, estimates)
    print(f"wrote {args.out}")


def _print_ci_table(ci: CiSet, est: ModelParams) -> None:
    z = normal_quantile(1.0 - ci.alpha / 2.0)
    print(f"{100 * (1 - ci.alpha):.1f}% confidence intervals (z = {z:.6f})")
    print(f"{'parameter':<10}{'estimate':>12}{'lower':>12}{'upper':>12}")
    for name, value in (("beta0", est.beta0), ("beta1", est.beta1), ("sigma2", est.sigma2)):
        lo, hi = ci.interval(name)
        print(f"{name:<10}{value:>12.6f}{lo:>12.6f}{hi:>12.6f}")
    if ci.tau2_hat is not None:
        print(f"tau2_hat = {ci.tau2_hat:.6f}")


def _load_study_config(args) -> StudyConfig:
    cfg = study_config_from_dict(_read_json(args.config))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _cmd_coverage(args) -> None:
    cfg = _load_study_config(args)
    reports = run_coverage(cfg, threads=args.threads)
    cfg_dict = study_config_to_dict(cfg)
    md = _metadata(cfg_dict, seed=cfg.seed, nodes=cfg.nodes)
    base = Path(args.out)
    if args.format in ("json", "both"):
        _write_json(
            str(base.with_suffix(".json")),
            {
                "config": cfg_dict,
                "reports": [coverage_report_to_dict(r) for r in reports],
                "metadata": md,
            },
        )
    if args.format in ("csv", "both"):
        base.with_suffix(".csv").write_text(coverage_reports_to_csv(reports))
    for rep in reports:
        print(
            f"m={rep.m} n={rep.n}: coverage% beta0={rep.beta0.coverage_pct:.1f} "
            f"beta1={rep.beta1.coverage_pct:.1f} sigma2={rep.sigma2.coverage_pct:.1f} "
            f"failures={rep.failures}"
        )


def _cmd_compare(args) -> None:
    cfg = _load_study_config(args)
    if not cfg.compare_exact:
        cfg = dataclasses.replace(cfg, compare_exact=True)
    comps = compare_lengths(cfg, threads=args.threads)
    cfg_dict = study_config_to_dict(cfg)
    md = _metadata(cfg_dict, seed=cfg.seed, nodes=cfg.nodes)
    base = Path(args.out)
    if args.format in ("json", "both"):
        _write_json(
            str(base.with_suffix(".json")),
            {
                "config": cfg_dict,
                "comparisons": [comparison_to_dict(c) for c in comps],
                "metadata": md,
            },
        )
    if args.format in ("csv", "both"):
        base.with_suffix(".csv").write_text(comparisons_to_csv(comps))
    for comp in comps:
        print(
            f"m={comp.m} n={comp.n}: median length ratio beta0={comp.beta0.median_ratio:.4f} "
            f"beta1={comp.beta1.median_ratio:.4f} sigma2={comp.sigma2.median_ratio:.4f} "
            f"failures={comp.failures}"
        )


def _cmd_selftest(args) -> None:
    checks: list[tuple[str, bool, str]] = []
    rng_truth = ModelParams(-0.3, 0.2, 0.5)
    dist = PredictorDistribution.STANDARD_NORMAL

    # analytic gradient vs central differences on a few small instances
    worst = 0.0
    for seed in (11, 12, 13):
        data = simulate_dataset(rng_truth, dist, 8, 6, seed)
        fit = fit_gva(data)
        p, v = fit.params, fit.variational
        theta = np.concatenate(
            ([p.beta0, p.beta1, np.log(p.sigma2)], v.mu + 0.05, np.log(v.lam) + 0.05)
        )
        worst = max(worst, _gradient_check(theta, data))
    checks.append(("gradient-check", worst < 1e-6, f"max relative error {worst:.3g}"))

    # variational bound never exceeds the quadrature likelihood
    jensen_ok, worst_gap = True, np.inf
    for seed in (21, 22, 23, 24, 25):
        data = simulate_dataset(rng_truth, dist, 6, 5, seed)
        fit = fit_gva(data)
        gap = exact_loglik(fit.params, data, nodes=60) - fit.lower_bound
        worst_gap = min(worst_gap, gap)
        jensen_ok = jensen_ok and gap > -1e-6
    checks.append(("jensen-check", jensen_ok, f"smallest gap {worst_gap:.3g}"))

    # one tiny coverage cell end to end
    cfg = StudyConfig(
        truth=rng_truth, dist=dist, m_values=(20,), n_fixed=5, replications=20, seed=31
    )
    rep = run_coverage(cfg)[0]
    cov_ok = rep.failures <= 2 and 0.0 <= rep.beta1.coverage_pct <= 100.0
    checks.append(
        ("coverage-cell", cov_ok, f"beta1 coverage {rep.beta1.coverage_pct:.0f}%, "
                                  f"{rep.failures} failures")
    )

    failed = False
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failed = failed or not ok
    if failed:
        raise PoismixError("selftest failed")


def _gradient_check(theta: np.ndarray, data: Dataset) -> float:
    m = data.m

    def unpack(th):
        p = ModelParams(th[0], th[1], float(np.exp(th[2])))
        v = VariationalParams(th[3 : 3 + m], np.exp(th[3 + m :]))
        return p, v

    p, v = unpack(theta)
    grad = lower_bound_gradient(p, v, data)
    worst = 0.0
    for k in range(theta.size):
        h = 1e-6 * max(1.0, abs(theta[k]))
        up, dn = theta.copy(), theta.copy()
        up[k] += h
        dn[k] -= h
        fd = (lower_bound(*unpack(up), data) - lower_bound(*unpack(dn), data)) / (2 * h)
        worst = max(worst, abs(fd - grad[k]) / max(1.0, abs(grad[k])))
    return worst


# --- argument parsing ---------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="poismix", description=__doc__)
    parser.add_argument("--version", action="version", version=f"poismix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate a dataset and write CSV + sidecar")
    p_sim.add_argument("--m", type=int, required=True)
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--beta0", type=float, required=True)
    p_sim.add_argument("--beta1", type=float, required=True)
    p_sim.add_argument("--sigma2", type=float, required=True)
    p_sim.add_argument("--dist", choices=["normal", "uniform"], default="normal")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(handler=_cmd_simulate)

    p_fit = sub.add_parser("fit", help="fit a dataset CSV, write the fit as JSON")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--method", choices=["gva", "mle"], default="gva")
    p_fit.add_argument("--nodes", type=int, default=DEFAULT_NODES)
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(handler=_cmd_fit)

    p_ci = sub.add_parser("ci", help="confidence intervals from a fit JSON + dataset CSV")
    p_ci.add_argument("--fit", required=True)
    p_ci.add_argument("--data", required=True)
    p_ci.add_argument("--alpha", type=float, default=0.05)
    p_ci.add_argument("--out", required=True)
    p_ci.set_defaults(handler=_cmd_ci)

    for name, handler, desc in (
        ("coverage", _cmd_coverage, "coverage study from a config JSON"),
        ("compare", _cmd_compare, "interval-length comparison from a config JSON"),
    ):
        p_study = sub.add_parser(name, help=desc)
        p_study.add_argument("--config", required=True)
        p_study.add_argument("--seed", type=int, default=None, help="override config seed")
        p_study.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        p_study.add_argument("--format", choices=["json", "csv", "both"], default="both")
        p_study.add_argument("--out", required=True)
        p_study.set_defaults(handler=handler)

    p_self = sub.add_parser("selftest", help="run built-in numerical checks")
    p_self.set_defaults(handler=_cmd_selftest)

    return parser


def dispatch(argv) -> int:
    """Parse and run; returns the process exit code."""
    try:
        try:
            args = _build_parser().parse_args(argv)
        except SystemExit as e:  # --help / --version
            return int(e.code or 0)
        args.handler(args)
        return 0
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except PoismixError as e:
        print(json.dumps({"error": e.name, "message": str(e)}), file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))
