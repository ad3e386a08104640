"""Shared test helpers: instance generators and independent oracles.

The oracles here (finite differences, trapezoid integration, bisection mode
search) deliberately avoid the code paths they are used to check.
"""

from __future__ import annotations

import numpy as np

from poismix import (
    Dataset,
    ModelParams,
    PredictorDistribution,
    VariationalParams,
    lower_bound,
    simulate_dataset,
)

GRID_TRUTHS = [
    ModelParams(-0.3, 0.2, 0.5),
    ModelParams(2.2, -0.1, 0.16),
    ModelParams(1.2, 0.4, 0.1),
    ModelParams(0.02, 1.3, 1.0),
    ModelParams(-0.3, 0.2, 0.1),
]


def random_truth(rng: np.random.Generator) -> ModelParams:
    """Parameters drawn from the box spanned by the study grid."""
    return ModelParams(
        beta0=float(rng.uniform(-0.5, 2.2)),
        beta1=float(rng.uniform(-0.5, 1.3)),
        sigma2=float(rng.uniform(0.1, 1.0)),
    )


def random_instance(seed: int, m_max: int = 20, n_max: int = 20):
    """A random small simulated instance with at least one nonzero count.

    Returns (truth, dist, dataset); deterministic in ``seed``.
    """
    rng = np.random.default_rng(seed)
    truth = random_truth(rng)
    dist = (
        PredictorDistribution.STANDARD_NORMAL
        if rng.integers(2) == 0
        else PredictorDistribution.UNIFORM_M1_P1
    )
    m = int(rng.integers(2, m_max + 1))
    n = int(rng.integers(2, n_max + 1))
    for attempt in range(50):
        data = simulate_dataset(truth, dist, m, n, seed=int(rng.integers(2**31)))
        if int(data.y.sum()) > 0 and float(data.x.max()) > float(data.x.min()):
            return truth, dist, data
    raise AssertionError("could not draw a non-degenerate instance")


# --- packing helpers for gradient checks ------------------------------------------


def pack_point(p: ModelParams, v: VariationalParams) -> np.ndarray:
    return np.concatenate(([p.beta0, p.beta1, np.log(p.sigma2)], v.mu, np.log(v.lam)))


def unpack_point(theta: np.ndarray, m: int):
    p = ModelParams(float(theta[0]), float(theta[1]), float(np.exp(theta[2])))
    v = VariationalParams(theta[3 : 3 + m], np.exp(theta[3 + m :]))
    return p, v


def fd_lower_bound_gradient(theta: np.ndarray, d: Dataset) -> np.ndarray:
    """Central finite differences of the bound, step 1e-6*max(1,|coord|)."""
    out = np.empty_like(theta)
    for k in range(theta.size):
        h = 1e-6 * max(1.0, abs(float(theta[k])))
        up, dn = theta.copy(), theta.copy()
        up[k] += h
        dn[k] -= h
        f_up = lower_bound(*unpack_point(up, d.m), d)
        f_dn = lower_bound(*unpack_point(dn, d.m), d)
        out[k] = (f_up - f_dn) / (2.0 * h)
    return out


# --- independent likelihood oracle -------------------------------------------------


def _mode_by_bisection(s: float, b: float, sigma2: float) -> float:
    """Root of g'(u) = s - b e^u - u/sigma2 by pure bisection on [-60, 60]."""
    lo, hi = -60.0, 60.0

    def gp(u):
        return s - b * np.exp(u) - u / sigma2

    assert gp(lo) > 0 and gp(hi) < 0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gp(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def trapezoid_loglik(p: ModelParams, d: Dataset, points: int = 200001) -> float:
    """Marginal log-likelihood with each group integral done by a dense
    trapezoid rule over mode +- 12/sqrt(curvature)."""
    from scipy.special import gammaln

    s = d.y.sum(axis=1).astype(float)
    b = np.exp(p.beta0 + p.beta1 * d.x).sum(axis=1)
    total = float(
        (d.y * (p.beta0 + p.beta1 * d.x)).sum()
        - gammaln(d.y + 1.0).sum()
        - 0.5 * d.m * np.log(2.0 * np.pi * p.sigma2)
    )
    for i in range(d.m):
        u_star = _mode_by_bisection(s[i], b[i], p.sigma2)
        curv = b[i] * np.exp(u_star) + 1.0 / p.sigma2
        half = 12.0 / np.sqrt(curv)
        grid = np.linspace(u_star - half, u_star + half, points)
        g = s[i] * grid - b[i] * np.exp(grid) - grid**2 / (2.0 * p.sigma2)
        peak = g.max()
        integral = np.trapezoid(np.exp(g - peak), grid)
        total += peak + float(np.log(integral))
    return total
