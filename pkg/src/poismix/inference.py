"""Studentized asymptotic inference for the variational estimates.

The three estimators are asymptotically normal and centered at the truth:
the intercept with variance sigma2/m, the variance estimate with variance
2*sigma2^2/m, and the slope with the faster variance tau2/(m*n), where

    tau2 = exp(-sigma2/2 - beta0) * phi(beta1)
           / (phi''(beta1) * phi(beta1) - phi'(beta1)^2)

and phi is the predictor's moment generating function.  Every unknown in
those variances admits a consistent plug-in: the three phi values are
estimated by the empirical averages of exp(x*b1), x*exp(x*b1) and
x^2*exp(x*b1) over all cells.  Studentizing with the plug-ins yields the
symmetric confidence intervals and Wald statistics implemented here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import predictors
from .errors import SingularDenominator
from .predictors import PredictorDistribution
from .types import CiSet, Dataset, GvaFit, ModelParams

_PARAMS = ("beta0", "beta1", "sigma2")


# --- standard normal quantile ---------------------------------------------------

# Rational minimax approximation to the inverse standard normal CDF
# (Wichura-style central/tail split), then one Halley correction through
# erfc.  The correction pins accuracy near machine precision regardless of
# the rational stage, comfortably under the 1e-9 requirement.

_CENTRAL_NUM = (
    3.387132872796366608,
    133.14166789178437745,
    1971.5909503065514427,
    13731.693765509461125,
    45921.953931549871457,
    67265.770927008700853,
    33430.575583588128105,
    2509.0809287301226727,
)
_CENTRAL_DEN = (
    1.0,
    42.313330701600911252,
    687.1870074920579083,
    5394.1960214247511077,
    21213.794301586595867,
    39307.89580009271061,
    28729.085735721942674,
    5226.495278852545661,
)
_TAIL1_NUM = (
    1.42343711074968357734,
    4.6303378461565452959,
    5.7694972214606914055,
    3.64784832476320460504,
    1.27045825245236838258,
    0.24178072517745061177,
    0.0227238449892691845833,
    7.7454501427834140764e-4,
)
_TAIL1_DEN = (
    1.0,
    2.05319162663775882187,
    1.6763848301838038494,
    0.68976733498510000455,
    0.14810397642748007459,
    0.0151986665636164571966,
    5.475938084995344946e-4,
    1.05075007164441684324e-9,
)
_TAIL2_NUM = (
    6.6579046435011037772,
    5.4637849111641143699,
    1.7848265399172913358,
    0.29656057182850489123,
    0.026532189526576123093,
    0.0012426609473880784386,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
)
_TAIL2_DEN = (
    1.0,
    0.59983220655588793769,
    0.13692988092273580531,
    0.0148753612908506148525,
    7.868691311456132591e-4,
    1.8463183175100546818e-5,
    1.4215117583164458887e-7,
    2.04426310338993978564e-15,
)


def _poly(coeffs, r: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * r + c
    return acc


def _ndtri_rational(p: float) -> float:
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _poly(_CENTRAL_NUM, r) / _poly(_CENTRAL_DEN, r)
    r = p if q < 0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        val = _poly(_TAIL1_NUM, r) / _poly(_TAIL1_DEN, r)
    else:
        r -= 5.0
        val = _poly(_TAIL2_NUM, r) / _poly(_TAIL2_DEN, r)
    return -val if q < 0 else val


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF on (0, 1), accurate to ~1 ulp."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0,1), got {p}")
    x = _ndtri_rational(p)
    # Halley step on Phi(x) - p = 0 with Phi via erfc.
    f = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    if pdf > 0.0:
        u = f / pdf
        x -= u / (1.0 + 0.5 * x * u)
    return x


# --- moment estimates and the slope-variance constant ----------------------------


@dataclass(frozen=True)
class MgfMoments:
    """Empirical estimates of phi, phi' and phi'' at the fitted slope."""

    phi0_hat: float
    phi1_hat: float
    phi2_hat: float

    def __post_init__(self):
        if self.phi0_hat <= 0:
            raise ValueError(f"phi0_hat must be > 0, got {self.phi0_hat}")


def estimate_mgf_moments(d: Dataset, beta1_hat: float) -> MgfMoments:
    """The three cell averages of x^k exp(x * beta1_hat), k = 0, 1, 2."""
    e = np.exp(d.x * beta1_hat)
    return MgfMoments(
        phi0_hat=float(e.mean()),
        phi1_hat=float((d.x * e).mean()),
        phi2_hat=float((d.x**2 * e).mean()),
    )


def tau_squared_from_moments(beta0: float, sigma2: float, mm: MgfMoments) -> float:
    """Slope-variance constant from intercept, variance and phi moments.

    Shared by the plug-in estimate and the closed-form truth; ``sigma2`` may
    be 0 here (useful for analytic checks) even though fitted variances are
    always positive.

    Raises:
        SingularDenominator: phi''*phi - phi'^2 is not positive (constant
            predictor; equality case of Cauchy-Schwarz).
    """
    denom = mm.phi2_hat * mm.phi0_hat - mm.phi1_hat**2
    floor = 1e3 * np.finfo(float).eps * max(abs(mm.phi2_hat * mm.phi0_hat), mm.phi1_hat**2)
    if denom <= floor:
        raise SingularDenominator(
            f"phi2*phi0 - phi1^2 = {denom:.3g} is not positive; design is degenerate"
        )
    return math.exp(-0.5 * sigma2 - beta0) * mm.phi0_hat / denom


def tau_squared_hat(fit: GvaFit, mm: MgfMoments) -> float:
    """Plug-in estimate of the slope-variance constant."""
    return tau_squared_from_moments(fit.params.beta0, fit.params.sigma2, mm)


def tau_squared_true(truth: ModelParams, dist: PredictorDistribution) -> float:
    """Closed-form slope-variance constant at the true parameters.

    Uses the exact moment generating function of the predictor law; test
    and oracle use only.
    """
    mm = MgfMoments(
        phi0_hat=predictors.mgf(dist, truth.beta1, 0),
        phi1_hat=predictors.mgf(dist, truth.beta1, 1),
        phi2_hat=predictors.mgf(dist, truth.beta1, 2),
    )
    return tau_squared_from_moments(truth.beta0, truth.sigma2, mm)


# --- intervals and tests ----------------------------------------------------------


def standard_errors(fit: GvaFit, d: Dataset) -> dict[str, float]:
    """Studentized standard errors for the three parameters.

    Intercept: sqrt(sigma2/m).  Slope: sqrt(tau2_hat/(m n)).  Variance:
    sigma2 * sqrt(2/m).  The slope entry estimates the phi moments from the
    data at the fitted slope.
    """
    m, n = d.m, d.n
    p = fit.params
    mm = estimate_mgf_moments(d, p.beta1)
    t2 = tau_squared_hat(fit, mm)
    return {
        "beta0": math.sqrt(p.sigma2 / m),
        "beta1": math.sqrt(t2 / (m * n)),
        "sigma2": p.sigma2 * math.sqrt(2.0 / m),
        "_tau2_hat": t2,
    }


def confidence_intervals(fit: GvaFit, d: Dataset, alpha: float) -> CiSet:
    """Symmetric studentized intervals at level 1 - alpha.

    Raises:
        SingularDenominator: degenerate design in the slope variance.
        ValueError: alpha outside (0, 1) or a non-converged fit.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0,1), got {alpha}")
    if not fit.converged:
        raise ValueError("confidence intervals require a converged fit")
    z = normal_quantile(1.0 - alpha / 2.0)
    se = standard_errors(fit, d)
    p = fit.params
    return CiSet(
        alpha=alpha,
        beta0_interval=(p.beta0 - z * se["beta0"], p.beta0 + z * se["beta0"]),
        beta1_interval=(p.beta1 - z * se["beta1"], p.beta1 + z * se["beta1"]),
        sigma2_interval=(p.sigma2 - z * se["sigma2"], p.sigma2 + z * se["sigma2"]),
        tau2_hat=se["_tau2_hat"],
    )


def wald_statistic(fit: GvaFit, d: Dataset, which: str, null_value: float) -> float:
    """(estimate - null) / SE with the same standard errors as the intervals."""
    if which not in _PARAMS:
        raise ValueError(f"which must be one of {_PARAMS}, got {which!r}")
    if not fit.converged:
        raise ValueError("Wald statistics require a converged fit")
    se = standard_errors(fit, d)
    estimate = getattr(fit.params, which)
    return (estimate - null_value) / se[which]
