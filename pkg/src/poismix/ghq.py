"""Exact marginal likelihood by adaptive Gauss-Hermite quadrature.

The marginal log-likelihood of the Poisson random-intercept model is

    l(b0, b1, s2) = sum_ij { y_ij (b0 + b1 x_ij) - log(y_ij!) }
                    - (m/2) log(2 pi s2)
                    + sum_i log INT exp{ s_i u - B_i e^u - u^2/(2 s2) } du,

with s_i the group count total and B_i the group total of exp(b0 + b1 x).
Each integrand is strictly log-concave, so its mode u* is found by a damped
1-d Newton and the quadrature grid is recentered at u* and rescaled by the
curvature there.  Node sums are accumulated in log space.

This module is the verification oracle for the variational bound and the
source of exact Wald intervals: ``fit_mle`` maximizes the quadrature
likelihood over (b0, b1, log s2) and ``exact_ci`` inverts the observed
information.
"""

from __future__ import annotations

import functools

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln, logsumexp

from .errors import (
    AllZeroResponse,
    DegenerateDesign,
    ModeSearchFailure,
    NonFiniteLikelihood,
    NonPositiveDefiniteInformation,
    NotConverged,
    SingularInformation,
)
from .gva import MAX_EXP, FitOptions, _Workspace, _pooled_poisson_init
from .inference import normal_quantile
from .types import CiSet, Dataset, ModelParams, validate_dataset

DEFAULT_NODES = 25


@functools.lru_cache(maxsize=16)
def _hermite_nodes(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite nodes and log-weights for weight exp(-t^2)."""
    t, w = np.polynomial.hermite.hermgauss(nodes)
    t.flags.writeable = False
    logw = np.log(w)
    logw.flags.writeable = False
    return t, logw


def _find_modes(s: np.ndarray, b: np.ndarray, sigma2: float) -> np.ndarray:
    """Vectorized damped Newton for the mode of each group integrand.

    g(u) = s u - b e^u - u^2/(2 s2) is strictly concave with g'(u) -> +inf
    as u -> -inf and -> -inf as u -> +inf, so the root of g' exists and is
    unique; halving on non-increase makes Newton globally convergent.
    """
    inv_s2 = 1.0 / sigma2
    u = np.clip(np.log((s + 0.5) / b), -30.0, 30.0)

    def gval(uu):
        return s * uu - b * np.exp(np.minimum(uu, MAX_EXP)) - 0.5 * inv_s2 * uu**2

    for _ in range(200):
        eu = np.exp(u)
        gp = s - b * eu - u * inv_s2
        scaled = np.abs(gp) / (1.0 + np.abs(s) + b * eu)
        if scaled.max() <= 1e-11:
            return u
        gpp = -b * eu - inv_s2
        du = np.clip(-gp / gpp, -20.0, 20.0)
        base = gval(u)
        step = np.ones_like(u)
        for _half in range(60):
            trial = gval(u + step * du)
            bad = ~(trial >= base - 1e-12 * (1.0 + np.abs(base)))
            if not bad.any():
                break
            step = np.where(bad, 0.5 * step, step)
        u = u + step * du
        if not np.isfinite(u).all():
            raise ModeSearchFailure(int(np.argmin(np.isfinite(u))))
    eu = np.exp(u)
    gp = s - b * eu - u * inv_s2
    scaled = np.abs(gp) / (1.0 + np.abs(s) + b * eu)
    if scaled.max() > 1e-8:
        raise ModeSearchFailure(int(np.argmax(scaled)))
    return u


def _group_log_integrals(
    s: np.ndarray, b: np.ndarray, sigma2: float, nodes: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Log of each group integral, plus the node grid and normalized weights.

    Returns (log_int (m,), u_nodes (m, nodes), post_w (m, nodes)); the
    posterior weights let callers take expectations against the same grid.
    """
    t, logw = _hermite_nodes(nodes)
    inv_s2 = 1.0 / sigma2
    u_star = _find_modes(s, b, sigma2)
    curv = b * np.exp(u_star) + inv_s2  # -g''(u*)
    h = np.sqrt(2.0 / curv)
    u_nodes = u_star[:, None] + h[:, None] * t[None, :]

    def g(uu, s_col, b_col):
        with np.errstate(over="ignore"):
            return s_col * uu - b_col * np.exp(uu) - 0.5 * inv_s2 * uu**2

    g_star = g(u_star, s, b)
    g_nodes = g(u_nodes, s[:, None], b[:, None])
    log_terms = logw[None, :] + t[None, :] ** 2 + g_nodes - g_star[:, None]
    log_int = np.log(h) + g_star + logsumexp(log_terms, axis=1)
    post_w = np.exp(log_terms - logsumexp(log_terms, axis=1)[:, None])
    return log_int, u_nodes, post_w


def exact_loglik(p: ModelParams, d: Dataset, nodes: int = DEFAULT_NODES) -> float:
    """Marginal log-likelihood via adaptive Gauss-Hermite quadrature.

    Args:
        p: model parameters.
        d: panel data.
        nodes: quadrature nodes per group (>= 5); 25 is plenty for doubles
            in routine use, verification suites use 60-80.

    Raises:
        ModeSearchFailure: a group integrand's mode could not be located.
        NonFiniteLikelihood: overflow or NaN in the evaluation.
    """
    if nodes < 5:
        raise ValueError(f"nodes must be >= 5, got {nodes}")
    ws = _Workspace(d)
    eta_max = p.beta0 + p.beta1 * d.x
    if float(eta_max.max()) > MAX_EXP:
        raise NonFiniteLikelihood("linear predictor overflows exp()")
    b = np.exp(eta_max).sum(axis=1)
    log_int, _, _ = _group_log_integrals(ws.s, b, p.sigma2, nodes)
    total = (
        p.beta0 * ws.y_total
        + p.beta1 * ws.sxy
        - ws.lgamma_total
        - 0.5 * ws.m * np.log(2.0 * np.pi * p.sigma2)
        + float(log_int.sum())
    )
    if not np.isfinite(total):
        raise NonFiniteLikelihood(f"log-likelihood evaluated to {total}")
    return float(total)


def _loglik_and_grad(theta: np.ndarray, ws: _Workspace, x: np.ndarray, nodes: int):
    """Value and analytic gradient in (b0, b1, log s2) coordinates.

    The gradient integrals reuse the same adapted node grid as the value:
    d/db0 needs E[e^u] per group, d/db1 the same against the x-weighted
    exposures, d/dlog s2 needs E[u^2].
    """
    beta0, beta1, logs2 = theta
    sigma2 = float(np.exp(logs2))
    eta = beta0 + beta1 * x
    if float(eta.max()) > MAX_EXP:
        return -np.inf, np.zeros(3)
    exb = np.exp(eta)
    b = exb.sum(axis=1)
    bx = (x * exb).sum(axis=1)
    log_int, u_nodes, post_w = _group_log_integrals(ws.s, b, sigma2, nodes)
    value = (
        beta0 * ws.y_total
        + beta1 * ws.sxy
        - ws.lgamma_total
        - 0.5 * ws.m * np.log(2.0 * np.pi * sigma2)
        + float(log_int.sum())
    )
    e_eu = (post_w * np.exp(u_nodes)).sum(axis=1)
    e_u2 = (post_w * u_nodes**2).sum(axis=1)
    grad = np.array(
        [
            ws.y_total - float(b @ e_eu),
            ws.sxy - float(bx @ e_eu),
            -0.5 * ws.m + float(e_u2.sum()) / (2.0 * sigma2),
        ]
    )
    return value, grad


def fit_mle(
    d: Dataset, nodes: int = DEFAULT_NODES, opts: FitOptions = FitOptions(), gtol: float = 1e-8
) -> tuple[ModelParams, np.ndarray]:
    """Exact maximum likelihood via quasi-Newton on (b0, b1, log s2).

    Returns the MLE and the observed information (negative Hessian of the
    log-likelihood at the optimum, by central differences of the analytic
    gradient, symmetrized).

    Raises:
        AllZeroResponse / DegenerateDesign: as for the variational fitter.
        NotConverged: the optimizer stalled with a large gradient.
        NonPositiveDefiniteInformation: optimum is not an interior maximum.
    """
    validate_dataset(d)
    if int(d.y.sum()) == 0:
        raise AllZeroResponse("all counts are zero; the intercept diverges")
    if float(d.x.max()) == float(d.x.min()):
        raise DegenerateDesign("predictor is constant; slope is unidentified")
    ws = _Workspace(d)
    beta_start = _pooled_poisson_init(ws)
    theta0 = np.array([beta_start[0], beta_start[1], 0.0])

    def neg(theta):
        value, grad = _loglik_and_grad(theta, ws, d.x, nodes)
        return -value, -grad

    result = minimize(neg, theta0, jac=True, method="BFGS",
                      options={"gtol": gtol, "maxiter": opts.max_outer_iters})
    theta = result.x
    # Newton polish: BFGS line searches stop early at tight tolerances.
    for _ in range(20):
        _, grad = _loglik_and_grad(theta, ws, d.x, nodes)
        if np.abs(grad).max() < gtol:
            break
        hess = _fd_hessian(theta, ws, d.x, nodes)
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            break
        theta = theta + step
    _, grad = _loglik_and_grad(theta, ws, d.x, nodes)
    if np.abs(grad).max() > 1e-6:
        raise NotConverged(
            f"exact-likelihood optimizer stalled (gradient sup-norm {np.abs(grad).max():.3g})"
        )
    info = -_fd_hessian(theta, ws, d.x, nodes)
    info = 0.5 * (info + info.T)
    if np.linalg.eigvalsh(info).min() <= 0:
        raise NonPositiveDefiniteInformation("observed information is not positive definite")
    mle = ModelParams(float(theta[0]), float(theta[1]), float(np.exp(theta[2])))
    return mle, info


def _fd_hessian(theta: np.ndarray, ws: _Workspace, x: np.ndarray, nodes: int) -> np.ndarray:
    """Central differences of the analytic gradient, step scaled per coordinate."""
    h = 1e-5 * np.maximum(1.0, np.abs(theta))
    cols = []
    for k in range(3):
        up = theta.copy()
        dn = theta.copy()
        up[k] += h[k]
        dn[k] -= h[k]
        _, g_up = _loglik_and_grad(up, ws, x, nodes)
        _, g_dn = _loglik_and_grad(dn, ws, x, nodes)
        cols.append((g_up - g_dn) / (2.0 * h[k]))
    return np.column_stack(cols)


def exact_ci(mle: ModelParams, info: np.ndarray, alpha: float) -> CiSet:
    """Wald intervals from the observed information.

    The information is in (b0, b1, log s2) coordinates; the variance
    interval is mapped to the natural scale by the delta method, keeping it
    symmetric about the point estimate.

    Raises:
        SingularInformation: the information cannot be (stably) inverted.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0,1), got {alpha}")
    info = np.asarray(info, dtype=np.float64)
    if info.shape != (3, 3):
        raise ValueError(f"info must be 3x3, got {info.shape}")
    try:
        chol = np.linalg.cholesky(info)
        inv_chol = np.linalg.inv(chol)
        cov = inv_chol.T @ inv_chol
    except np.linalg.LinAlgError as e:
        raise SingularInformation("observed information is singular") from e
    v = np.diag(cov)
    if (v <= 0).any() or not np.isfinite(v).all():
        raise SingularInformation("non-positive variance from information inverse")
    z = normal_quantile(1.0 - alpha / 2.0)
    hw_b0 = z * np.sqrt(v[0])
    hw_b1 = z * np.sqrt(v[1])
    hw_s2 = z * mle.sigma2 * np.sqrt(v[2])  # delta method from log s2
    return CiSet(
        alpha=alpha,
        beta0_interval=(mle.beta0 - hw_b0, mle.beta0 + hw_b0),
        beta1_interval=(mle.beta1 - hw_b1, mle.beta1 + hw_b1),
        sigma2_interval=(mle.sigma2 - hw_s2, mle.sigma2 + hw_s2),
        tau2_hat=None,
    )
