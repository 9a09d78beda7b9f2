import math

import numpy as np
import pytest

from densityeq.equilibrium import existence_two_region
from densityeq.market import MarketPrimitives


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def draw_admissible_two_region(rng, max_tries=200):
    """Random (lam1, lam2, N, t) satisfying all three existence conditions."""
    for _ in range(max_tries):
        lam2 = rng.uniform(1.0, 15.0)
        lam1 = lam2 * rng.uniform(1.0, 4.0)
        t = rng.uniform(0.2, 4.0)
        # Supply at the binding trough wait bounds N from below; pad upward.
        w_lo = 2.0 * math.sqrt(t / lam2)
        n1 = lam1 * (w_lo + math.sqrt(w_lo * w_lo - 4.0 * t / lam1)) / 2.0
        N = (n1 + math.sqrt(lam2 * t)) * rng.uniform(1.01, 2.5)
        if existence_two_region(lam1, lam2, N, t).all_hold:
            return lam1, lam2, N, t
    raise AssertionError("could not draw an admissible instance")


def draw_market_with_equilibrium(rng, n_regions=None):
    """Random multi-region market guaranteed to have an all-regions equilibrium."""
    if n_regions is None:
        n_regions = int(rng.integers(2, 7))
    lambdas = np.sort(rng.uniform(1.0, 20.0, n_regions))[::-1]
    sizes = rng.uniform(0.3, 4.0, n_regions)
    w_lo = max(2.0 * math.sqrt(t / lam) for lam, t in zip(lambdas, sizes))
    supply = sum(
        lam * (w_lo + math.sqrt(max(w_lo * w_lo - 4.0 * t / lam, 0.0))) / 2.0
        for lam, t in zip(lambdas, sizes)
    )
    N = supply * rng.uniform(1.05, 2.0)
    return MarketPrimitives.from_vectors(lambdas.tolist(), sizes.tolist(), total_drivers=N)
