import math

import numpy as np
import pytest

from densityeq.errors import DomainError, InfiniteWaitError
from densityeq.market import (
    Allocation,
    MarketPrimitives,
    RegionParams,
    access,
    demand_rate,
    region_outcome,
    ride_rate,
    wait_time,
)


class TestDemandRate:
    def test_zero_price_full_demand(self):
        assert demand_rate(10.0, 0.0, 1.0) == 10.0

    def test_choke_price(self):
        assert demand_rate(10.0, 1.0, 1.0) == 0.0

    def test_linear_interior(self):
        # 8 * (1 - 2 * 0.25) = 8 * 0.5
        assert demand_rate(8.0, 0.25, 2.0) == pytest.approx(4.0, rel=1e-15)

    def test_clamped_above_choke(self):
        assert demand_rate(10.0, 5.0, 1.0) == 0.0

    def test_rejects_non_finite(self):
        with pytest.raises(DomainError):
            demand_rate(math.inf, 0.1, 1.0)
        with pytest.raises(DomainError):
            demand_rate(10.0, math.nan, 1.0)


class TestWaitTime:
    def test_frictionless(self):
        assert wait_time(5.0, 10.0, 0.0) == 0.5

    def test_arithmetic(self):
        assert wait_time(2.0, 10.0, 2.0) == pytest.approx(1.2, rel=1e-15)

    def test_minimum_matches_grid_search(self):
        # Independent oracle: brute force over n in (0, 20] step 1e-4.
        grid = np.arange(1e-4, 20.0 + 1e-4, 1e-4)
        waits = grid / 10.0 + 2.0 / grid
        k = int(np.argmin(waits))
        assert grid[k] == pytest.approx(math.sqrt(20.0), abs=1e-4)
        assert waits[k] == pytest.approx(0.89443, abs=1e-4)
        assert wait_time(math.sqrt(20.0), 10.0, 2.0) == pytest.approx(
            2.0 * math.sqrt(2.0 / 10.0), rel=1e-12
        )

    def test_empty_region_positive_size_is_infinite(self):
        with pytest.raises(InfiniteWaitError):
            wait_time(0.0, 10.0, 2.0)

    def test_empty_frictionless_is_zero(self):
        assert wait_time(0.0, 10.0, 0.0) == 0.0

    def test_am_gm_lower_bound(self, rng):
        for _ in range(500):
            lam = rng.uniform(0.1, 50.0)
            t = rng.uniform(0.01, 10.0)
            n = rng.uniform(0.01, 100.0)
            assert wait_time(n, lam, t) >= 2.0 * math.sqrt(t / lam) - 1e-12
        lam, t = 7.0, 3.0
        n_star = math.sqrt(lam * t)
        assert wait_time(n_star, lam, t) == pytest.approx(
            2.0 * math.sqrt(t / lam), rel=1e-12
        )
        assert wait_time(n_star * 1.01, lam, t) > 2.0 * math.sqrt(t / lam)


class TestRideRate:
    def test_frictionless(self):
        assert ride_rate(5.0, 10.0, 0.0) == pytest.approx(10.0, rel=1e-15)

    def test_at_wait_minimum(self):
        assert ride_rate(math.sqrt(20.0), 10.0, 2.0) == pytest.approx(5.0, rel=1e-12)

    def test_zero_drivers(self):
        assert ride_rate(0.0, 10.0, 2.0) == 0.0

    def test_monotone_increasing_and_bounded(self):
        lam, t = 10.0, 2.0
        grid = np.geomspace(0.1, 1e6, 200)
        rates = [ride_rate(n, lam, t) for n in grid]
        assert all(b > a for a, b in zip(rates, rates[1:]))
        assert all(r < lam for r in rates)
        assert rates[-1] == pytest.approx(lam, rel=1e-6)


class TestAccess:
    def test_frictionless_full_price_pass(self):
        for n in (0.5, 3.0, 100.0):
            assert access(n, 7.0, 7.0, 0.0) == pytest.approx(1.0, rel=1e-15)

    def test_no_supply(self):
        assert access(0.0, 5.0, 5.0, 1.0) == 0.0

    def test_interior_value(self):
        # 1 / (1 + 2 * 10 / 20)
        assert access(math.sqrt(20.0), 10.0, 10.0, 2.0) == pytest.approx(0.5, rel=1e-12)

    def test_rejects_excess_demand(self):
        with pytest.raises(DomainError):
            access(1.0, 5.0, 6.0, 1.0)

    def test_increasing_in_n(self, rng):
        lam_bar, lam, t = 12.0, 9.0, 1.5
        ns = np.sort(rng.uniform(0.1, 50.0, 50))
        vals = [access(n, lam_bar, lam, t) for n in ns]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_identity_with_ride_rate(self, rng):
        for _ in range(300):
            lam_bar = rng.uniform(0.5, 30.0)
            lam = lam_bar * rng.uniform(0.1, 1.0)
            t = rng.uniform(0.0, 5.0)
            n = rng.uniform(0.01, 50.0)
            lhs = access(n, lam_bar, lam, t) * lam_bar
            rhs = ride_rate(n, lam, t)
            assert lhs == pytest.approx(rhs, rel=1e-12)


class TestRegionOutcome:
    def test_components_sum(self):
        o = region_outcome(4.0, 10.0, 10.0, 2.0)
        assert o.wait == pytest.approx(o.idle + o.pickup, rel=1e-15)
        assert o.ride_rate == pytest.approx(4.0 / o.wait, rel=1e-15)
        assert o.access == pytest.approx(o.ride_rate / 10.0, rel=1e-12)

    def test_empty_region(self):
        o = region_outcome(0.0, 10.0, 10.0, 2.0)
        assert math.isinf(o.wait)
        assert o.ride_rate == 0.0
        assert o.access == 0.0


class TestTypes:
    def test_regions_sorted_by_density(self):
        m = MarketPrimitives.from_vectors([5.0, 10.0, 4.0], [2.0, 2.0, 0.5])
        densities = [r.density for r in m.regions]
        assert densities == sorted(densities, reverse=True)
        assert m.regions[0].lambda_bar == 4.0  # density 8 leads

    def test_frictionless_regions_first(self):
        m = MarketPrimitives.from_vectors([1.0, 50.0], [0.0, 1.0])
        assert m.regions[0].size_t == 0.0

    def test_sort_is_stable_for_ties(self):
        m = MarketPrimitives.from_vectors([10.0, 5.0], [2.0, 1.0])
        assert [r.lambda_bar for r in m.regions] == [10.0, 5.0]

    def test_region_params_validation(self):
        with pytest.raises(DomainError):
            RegionParams(-1.0, 1.0)
        with pytest.raises(DomainError):
            RegionParams(1.0, -1.0)

    def test_allocation_total_check(self):
        a = Allocation((3.0, 7.0))
        a.check_total(10.0)
        with pytest.raises(DomainError):
            a.check_total(11.0)

    def test_market_requires_positive_entry_params(self):
        with pytest.raises(DomainError):
            MarketPrimitives.from_vectors([1.0], [1.0], reservation_wage=0.0)
        with pytest.raises(DomainError):
            MarketPrimitives.from_vectors([1.0], [1.0], price_sensitivity=-1.0)
