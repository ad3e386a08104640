"""Dataset generation from the Poisson random-intercept model.

Counts follow Y_ij ~ Poisson(exp(beta0 + beta1*x_ij + u_i)) with u_i drawn
i.i.d. N(0, sigma2) and predictors drawn from the chosen law.  Generation is
keyed by counter-based Philox streams (one child stream each for x, u and y),
so a dataset is a pure function of its seed.
"""

from __future__ import annotations

import numpy as np

from . import predictors
from .errors import RateOverflow
from .predictors import PredictorDistribution
from .types import Dataset, ModelParams

# Poisson means above this cap signal pathological truth values rather than a
# scenario worth simulating.
DEFAULT_RATE_CAP = 1e12


def simulate_dataset(
    truth: ModelParams,
    dist: PredictorDistribution,
    m: int,
    n: int,
    seed: int,
    rate_cap: float = DEFAULT_RATE_CAP,
) -> Dataset:
    """Simulate an m-by-n panel; deterministic given the seed.

    The latent intercepts are stored on the returned Dataset for diagnostics
    (the fitters never read them).

    Raises:
        RateOverflow: some conditional Poisson mean exceeds ``rate_cap``.
    """
    if m < 1 or n < 1:
        raise ValueError(f"need m >= 1 and n >= 1, got ({m}, {n})")
    ss_x, ss_u, ss_y = np.random.SeedSequence(seed).spawn(3)
    x = predictors.draw(dist, np.random.Generator(np.random.Philox(ss_x)), (m, n))
    u = np.random.Generator(np.random.Philox(ss_u)).normal(
        0.0, np.sqrt(truth.sigma2), size=m
    )
    rate = np.exp(truth.beta0 + truth.beta1 * x + u[:, None])
    max_rate = float(rate.max())
    if not np.isfinite(max_rate) or max_rate > rate_cap:
        raise RateOverflow(max_rate, rate_cap)
    y = np.random.Generator(np.random.Philox(ss_y)).poisson(rate).astype(np.int64)
    return Dataset(x=x, y=y, u_latent=u)


def replication_seed(seed: int, m: int, r: int) -> int:
    """Derive the dataset seed for replication ``r`` of an (m,)-cell study.

    Keying streams by (study seed, m, replication index) makes replications
    independent of execution order, so they can run in parallel or be
    resumed without changing any draw.
    """
    state = np.random.SeedSequence((seed, m, r)).generate_state(2, np.uint64)
    return int(state[0])
