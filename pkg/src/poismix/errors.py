"""Exception hierarchy for poismix.

Every numerical failure mode has its own class so that callers (and the
command line frontend) can map failures to stable, machine-readable names.
``PoismixError.name`` is the wire name used in error reports.
"""

from __future__ import annotations


class PoismixError(Exception):
    """Base class for all poismix-specific failures."""

    @property
    def name(self) -> str:
        return type(self).__name__


# --- dataset validation -----------------------------------------------------


class ShapeMismatch(PoismixError):
    """Predictor and count matrices disagree in shape, or a dimension is empty."""


class NegativeCount(PoismixError):
    """A count entry is negative; carries the offending (group, column) index."""

    def __init__(self, i: int, j: int, value: int):
        super().__init__(f"y[{i},{j}] = {value} is negative")
        self.index = (i, j)
        self.value = value


class NonFiniteValue(PoismixError):
    """A matrix entry is NaN or infinite; carries array name and index."""

    def __init__(self, array: str, i: int, j: int):
        super().__init__(f"{array}[{i},{j}] is not finite")
        self.array = array
        self.index = (i, j)


# --- simulation ---------------------------------------------------------------


class RateOverflow(PoismixError):
    """A Poisson mean exceeded the configured cap (pathological truth values)."""

    def __init__(self, max_rate: float, cap: float):
        super().__init__(f"Poisson mean {max_rate:.6g} exceeds cap {cap:.6g}")
        self.max_rate = max_rate
        self.cap = cap


# --- variational fitting ------------------------------------------------------


class NonFiniteBound(PoismixError):
    """An exp() argument in the lower bound exceeded the double-precision limit."""


class InnerDivergence(PoismixError):
    """The per-group variational solver failed to converge for group ``i``."""

    def __init__(self, i: int, residual: float):
        super().__init__(f"variational solve diverged for group {i} (residual {residual:.3g})")
        self.group = i
        self.residual = residual


class NotConverged(PoismixError):
    """Iteration cap reached before tolerances were met; carries the best iterate."""

    def __init__(self, message: str, fit=None):
        super().__init__(message)
        self.fit = fit


class DegenerateDesign(PoismixError):
    """The predictor matrix is constant, so the slope is unidentified."""


class AllZeroResponse(PoismixError):
    """Every count is zero; the intercept estimate diverges to -infinity."""


# --- inference ----------------------------------------------------------------


class SingularDenominator(PoismixError):
    """The moment denominator of the slope variance vanished (degenerate design)."""


class UnsupportedOrder(PoismixError):
    """A moment-generating-function derivative order outside {0, 1, 2}."""


# --- exact-likelihood oracle ----------------------------------------------------


class ModeSearchFailure(PoismixError):
    """The mode of a group integrand could not be located."""

    def __init__(self, i: int):
        super().__init__(f"mode search failed for group {i}")
        self.group = i


class NonFiniteLikelihood(PoismixError):
    """The exact log-likelihood evaluated to NaN or infinity."""


class NonPositiveDefiniteInformation(PoismixError):
    """The observed information at the optimum is not positive definite."""


class SingularInformation(PoismixError):
    """The observed information matrix could not be inverted."""


# --- command line ---------------------------------------------------------------


class UsageError(PoismixError):
    """Bad command-line arguments or config files."""
