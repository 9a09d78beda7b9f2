import math

import numpy as np
import pytest

from densityeq.errors import DomainError
from densityeq.market import access as access_formula
from densityeq.market import demand_rate, wait_time
from densityeq.optimum import (
    access_of_strategy,
    density_sweep,
    entry_n,
    normalize,
    optimal_joint,
    optimal_joint_market,
    optimal_price,
    optimal_wage,
    region_profit,
    wage_from_access,
)
from densityeq.market import MarketPrimitives


def draw_served_params(rng):
    """Random (lambda_bar, t, cbar, alpha) with normalized density in [30, 1e5]."""
    t = rng.uniform(0.2, 3.0)
    cbar = rng.uniform(0.5, 3.0)
    alpha = rng.uniform(0.2, 2.0)
    lam_tilde = rng.uniform(30.0, 1e5)
    lambda_bar = lam_tilde * (cbar * alpha) ** 2 * t
    return lambda_bar, t, cbar, alpha


class TestEntry:
    def test_frictionless(self):
        assert entry_n(0.5, 0.2, 10.0, 0.0, 1.0, 1.0) == pytest.approx(4.0, rel=1e-12)

    def test_repeated_root(self):
        # c/cbar = 2 sqrt(t/lam(p)) makes the discriminant exactly zero.
        lam_bar, p, alpha, t, cbar = 10.0, 0.2, 1.0, 2.0, 1.0
        lam = demand_rate(lam_bar, p, alpha)
        c = cbar * 2.0 * math.sqrt(t / lam)
        n = entry_n(c, p, lam_bar, t, cbar, alpha)
        assert n == pytest.approx(lam * c / (2.0 * cbar), rel=1e-12)

    def test_reservation_earnings_hold(self, rng):
        for _ in range(200):
            lam_bar = rng.uniform(5.0, 100.0)
            t = rng.uniform(0.1, 2.0)
            cbar = rng.uniform(0.5, 2.0)
            alpha = rng.uniform(0.2, 1.5)
            p = rng.uniform(0.05, 0.9) / alpha
            c = rng.uniform(0.2, 1.5)
            n = entry_n(c, p, lam_bar, t, cbar, alpha)
            if n > 0:
                lam = demand_rate(lam_bar, p, alpha)
                assert c / wait_time(n, lam, t) == pytest.approx(cbar, rel=1e-9)

    def test_no_entry_below_wage_floor(self):
        assert entry_n(0.01, 0.2, 10.0, 5.0, 1.0, 1.0) == 0.0
        assert entry_n(0.0, 0.2, 10.0, 0.0, 1.0, 1.0) == 0.0


class TestRegionProfit:
    def test_zero_margin(self):
        assert region_profit(0.4, 0.4, 50.0, 0.5, 1.0, 1.0) == pytest.approx(0.0, abs=1e-15)

    def test_identity_with_ride_rate(self, rng):
        for _ in range(200):
            lam_bar = rng.uniform(5.0, 100.0)
            t = rng.uniform(0.1, 2.0)
            cbar = rng.uniform(0.5, 2.0)
            alpha = rng.uniform(0.2, 1.5)
            p = rng.uniform(0.05, 0.9) / alpha
            c = rng.uniform(0.2, 1.5)
            n = entry_n(c, p, lam_bar, t, cbar, alpha)
            if n == 0.0:
                continue
            lam = demand_rate(lam_bar, p, alpha)
            rides = n / wait_time(n, lam, t)
            assert region_profit(c, p, lam_bar, t, cbar, alpha) == pytest.approx(
                (p - c) * rides, rel=1e-9
            )

    def test_frictionless_serves_realized_demand(self):
        p, c, lam_bar, alpha = 0.3, 0.2, 20.0, 1.0
        assert region_profit(c, p, lam_bar, 0.0, 1.0, alpha) == pytest.approx(
            (p - c) * demand_rate(lam_bar, p, alpha), rel=1e-12
        )


class TestOptimalWage:
    def test_density_threshold(self):
        # cbar=1, p=0.5, alpha=1: threshold density is (4 / 0.5) / 0.25 = 32.
        assert (4.0 / 0.5) * (1.0 / 0.5) ** 2 == 32.0
        assert not optimal_wage(0.5, 31.0, 1.0, 1.0, 1.0).served
        assert optimal_wage(0.5, 33.0, 1.0, 1.0, 1.0).served

    def test_matches_grid_argmax(self, rng):
        for _ in range(10):
            lambda_bar, t, cbar, alpha = draw_served_params(rng)
            p = 0.55 / alpha
            opt = optimal_wage(p, lambda_bar, t, cbar, alpha)
            if not opt.served:
                continue
            grid = np.linspace(1e-4 * p, p, 100_000)
            profits = [region_profit(c, p, lambda_bar, t, cbar, alpha) for c in grid]
            k = int(np.argmax(profits))
            assert opt.wage == pytest.approx(grid[k], abs=2 * (grid[1] - grid[0]))
            assert opt.profit >= profits[k] - 1e-9 * max(1.0, profits[k])

    def test_wage_decreasing_in_density(self):
        wages = [
            optimal_wage(0.5, lam_bar, 1.0, 1.0, 1.0).wage
            for lam_bar in (40.0, 80.0, 200.0, 1000.0)
        ]
        assert all(b < a for a, b in zip(wages, wages[1:]))

    def test_wage_increasing_in_size_at_fixed_demand(self):
        # Same comparative static through the other primitive: larger t,
        # thinner region, higher optimal wage.
        wages = [
            optimal_wage(0.5, 400.0, t, 1.0, 1.0).wage for t in (0.5, 1.0, 2.0, 4.0)
        ]
        assert all(b > a for a, b in zip(wages, wages[1:]))

    def test_local_optimality(self, rng):
        for _ in range(20):
            lambda_bar, t, cbar, alpha = draw_served_params(rng)
            p = 0.6 / alpha
            opt = optimal_wage(p, lambda_bar, t, cbar, alpha)
            if not opt.served or opt.margin <= 1e-6:
                continue
            for eps in (-1e-4, 1e-4):
                perturbed = region_profit(
                    opt.wage * (1 + eps), p, lambda_bar, t, cbar, alpha
                )
                assert opt.profit >= perturbed - 1e-12


class TestOptimalPrice:
    def test_matches_grid_argmax(self, rng):
        for _ in range(10):
            lambda_bar, t, cbar, alpha = draw_served_params(rng)
            c = 0.4 / alpha
            opt = optimal_price(c, lambda_bar, t, cbar, alpha)
            if not opt.served:
                continue
            grid = np.linspace(c, 1.0 / alpha, 100_000)
            profits = [region_profit(c, p, lambda_bar, t, cbar, alpha) for p in grid]
            k = int(np.argmax(profits))
            assert opt.price == pytest.approx(grid[k], abs=2 * (grid[1] - grid[0]))

    def test_price_increasing_in_density(self):
        prices = [
            optimal_price(0.35, lam_bar, 1.0, 1.0, 1.0).price
            for lam_bar in (40.0, 80.0, 200.0, 1000.0)
        ]
        assert all(b > a for a, b in zip(prices, prices[1:]))

    def test_threshold_profit_is_zero(self):
        c, cbar, alpha = 0.5, 1.0, 1.0
        density = 4.0 / (1.0 - alpha * c) * (cbar / c) ** 2
        opt = optimal_price(c, density, 1.0, cbar, alpha)
        assert opt.served
        assert opt.profit == pytest.approx(0.0, abs=1e-9)
        assert not optimal_price(c, density * 0.999, 1.0, cbar, alpha).served


class TestNormalize:
    def test_unit_parameters_are_identity(self):
        norm = normalize(42.0, 1.0, 1.0, 1.0)
        assert norm.lambda_tilde == 42.0
        assert norm.to_physical_price(0.5) == 0.5
        assert norm.to_physical_drivers(3.0) == 3.0

    def test_round_trip(self, rng):
        for _ in range(50):
            lambda_bar, t, cbar, alpha = draw_served_params(rng)
            norm = normalize(lambda_bar, t, cbar, alpha)
            for v in rng.uniform(0.01, 5.0, 3):
                assert norm.to_normalized_price(norm.to_physical_price(v)) == pytest.approx(v, rel=1e-12)
                assert norm.to_normalized_drivers(norm.to_physical_drivers(v)) == pytest.approx(v, rel=1e-12)

    def test_composition_of_elementary_transforms(self, rng):
        # gamma = 1/(cbar*alpha) on (demand, reservation) then alpha on the
        # currency pair then 1/t on (demand, size) lands on unit parameters.
        for _ in range(50):
            lambda_bar, t, cbar, alpha = draw_served_params(rng)
            g1 = 1.0 / (cbar * alpha)
            lam1, cbar1, alpha1 = g1 * g1 * lambda_bar, g1 * cbar, alpha
            g2 = alpha1
            cbar2, alpha2 = g2 * cbar1, alpha1 / g2
            g3 = 1.0 / t
            lam3, t3 = g3 * lam1, g3 * t
            assert cbar2 == pytest.approx(1.0, rel=1e-12)
            assert alpha2 == pytest.approx(1.0, rel=1e-12)
            assert t3 == pytest.approx(1.0, rel=1e-12)
            assert lam3 == pytest.approx(
                normalize(lambda_bar, t, cbar, alpha).lambda_tilde, rel=1e-12
            )

    def test_rejects_degenerate(self):
        with pytest.raises(DomainError):
            normalize(10.0, 0.0, 1.0, 1.0)
        with pytest.raises(DomainError):
            normalize(10.0, 1.0, 0.0, 1.0)


class TestOptimalJoint:
    def test_threshold_point(self):
        opt = optimal_joint(27.0, 1.0, 1.0, 1.0)
        assert opt.served
        assert opt.price == pytest.approx(2.0 / 3.0, abs=1e-3)
        assert opt.wage == pytest.approx(2.0 / 3.0, abs=1e-3)
        assert opt.access == pytest.approx(1.0 / 6.0, abs=1e-3)
        assert opt.margin == pytest.approx(0.0, abs=1e-3)

    def test_below_threshold_unserved(self):
        opt = optimal_joint(26.9, 1.0, 1.0, 1.0)
        assert not opt.served
        assert opt.entry == 0.0 and opt.profit == 0.0

    def test_matches_two_dimensional_brute_force(self):
        # Independent oracle: direct profit maximization on a fine 2-D grid.
        for lam_tilde in (50.0, 400.0, 1e6):
            opt = optimal_joint(lam_tilde, 1.0, 1.0, 1.0)
            ps = np.linspace(0.01, 0.99, 900)
            cs = np.linspace(1e-4, 0.99, 900)
            P, C = np.meshgrid(ps, cs, indexing="ij")
            lam = lam_tilde * (1.0 - P)
            disc = 1.0 - 4.0 / lam / (C * C)
            pi = np.where(
                disc >= 0, (P - C) * lam / 2.0 * (1.0 + np.sqrt(np.maximum(disc, 0.0))), -np.inf
            )
            i, j = np.unravel_index(np.argmax(pi), pi.shape)
            assert opt.price == pytest.approx(ps[i], abs=2 * (ps[1] - ps[0]))
            assert opt.wage == pytest.approx(cs[j], abs=2 * (cs[1] - cs[0]))
            assert opt.profit >= pi[i, j] - 1e-6 * max(1.0, pi[i, j])

    def test_back_mapping_consistency(self, rng):
        for _ in range(20):
            lambda_bar, t, cbar, alpha = draw_served_params(rng)
            norm = normalize(lambda_bar, t, cbar, alpha)
            phys = optimal_joint(lambda_bar, t, cbar, alpha)
            tilde = optimal_joint(norm.lambda_tilde, 1.0, 1.0, 1.0)
            assert phys.price == pytest.approx(norm.to_physical_price(tilde.price), rel=1e-8)
            assert phys.wage == pytest.approx(norm.to_physical_wage(tilde.wage), rel=1e-8)
            assert phys.entry == pytest.approx(norm.to_physical_drivers(tilde.entry), rel=1e-8)
            assert phys.access == pytest.approx(tilde.access, rel=1e-8)

    def test_local_optimality(self):
        for lam_tilde in (40.0, 300.0, 5e4):
            opt = optimal_joint(lam_tilde, 1.0, 1.0, 1.0)

            def profit(p, c):
                lam = lam_tilde * (1.0 - p)
                disc = 1.0 - 4.0 / lam / (c * c)
                if disc < 0:
                    return 0.0
                return (p - c) * lam / 2.0 * (1.0 + math.sqrt(disc))

            base = profit(opt.price, opt.wage)
            for dp in (-1e-4, 0.0, 1e-4):
                for dc in (-1e-4, 0.0, 1e-4):
                    assert base >= profit(opt.price + dp, opt.wage + dc) - 1e-9 * base

    def test_currency_invariance(self, rng):
        # (lambda_bar, t, g*cbar, alpha/g) fixes entry and access, scales
        # price and wage by g.
        for _ in range(30):
            lambda_bar, t, cbar, alpha = draw_served_params(rng)
            g = rng.uniform(0.5, 4.0)
            base = optimal_joint(lambda_bar, t, cbar, alpha)
            scaled = optimal_joint(lambda_bar, t, g * cbar, alpha / g)
            assert scaled.entry == pytest.approx(base.entry, rel=1e-8)
            assert scaled.access == pytest.approx(base.access, rel=1e-8)
            assert scaled.price == pytest.approx(g * base.price, rel=1e-8)
            assert scaled.wage == pytest.approx(g * base.wage, rel=1e-8)

    def test_demand_reservation_scaling(self, rng):
        # (g^2 lambda_bar, t, g*cbar, alpha) scales entry by g and fixes the rest.
        for _ in range(30):
            lambda_bar, t, cbar, alpha = draw_served_params(rng)
            g = rng.uniform(0.5, 4.0)
            base = optimal_joint(lambda_bar, t, cbar, alpha)
            scaled = optimal_joint(g * g * lambda_bar, t, g * cbar, alpha)
            assert scaled.entry == pytest.approx(g * base.entry, rel=1e-8)
            assert scaled.price == pytest.approx(base.price, rel=1e-8)
            assert scaled.wage == pytest.approx(base.wage, rel=1e-8)
            assert scaled.access == pytest.approx(base.access, rel=1e-8)

    def test_size_demand_scaling(self, rng):
        # (g lambda_bar, g t, cbar, alpha) scales entry by g and fixes the rest.
        for _ in range(30):
            lambda_bar, t, cbar, alpha = draw_served_params(rng)
            g = rng.uniform(0.5, 4.0)
            base = optimal_joint(lambda_bar, t, cbar, alpha)
            scaled = optimal_joint(g * lambda_bar, g * t, cbar, alpha)
            assert scaled.entry == pytest.approx(g * base.entry, rel=1e-8)
            assert scaled.price == pytest.approx(base.price, rel=1e-8)
            assert scaled.access == pytest.approx(base.access, rel=1e-8)

    def test_market_separability(self):
        market = MarketPrimitives.from_vectors(
            [100.0, 60.0, 20.0], [1.0, 1.0, 1.0], reservation_wage=1.0, price_sensitivity=1.0
        )
        optima = optimal_joint_market(market)
        assert len(optima) == 3
        for region, opt in zip(market.regions, optima):
            single = optimal_joint(region.lambda_bar, region.size_t, 1.0, 1.0)
            assert opt.price == pytest.approx(single.price, rel=1e-12)


class TestAccessFunctions:
    def test_matches_entry_based_access(self, rng):
        for _ in range(100):
            lambda_bar, t, cbar, alpha = draw_served_params(rng)
            p = rng.uniform(0.2, 0.8) / alpha
            opt = optimal_wage(p, lambda_bar, t, cbar, alpha)
            if not opt.served:
                continue
            lam = demand_rate(lambda_bar, p, alpha)
            direct = access_formula(opt.entry, lambda_bar, lam, t)
            assert access_of_strategy(opt.wage, p, lambda_bar, t, cbar, alpha) == pytest.approx(
                direct, rel=1e-12
            )

    def test_depends_only_on_density(self, rng):
        for _ in range(50):
            lambda_bar, t, cbar, alpha = draw_served_params(rng)
            p, c = 0.5 / alpha, 1.0
            k = rng.uniform(0.5, 5.0)
            a1 = access_of_strategy(c, p, lambda_bar, t, cbar, alpha)
            a2 = access_of_strategy(c, p, k * lambda_bar, k * t, cbar, alpha)
            assert a1 == pytest.approx(a2, rel=1e-12)

    def test_boundary_access_is_half_f(self):
        lam_bar, t, cbar, alpha, p = 40.0, 1.0, 1.0, 1.0, 0.5
        lam = demand_rate(lam_bar, p, alpha)
        c = cbar * 2.0 * math.sqrt(t / lam)
        f = 1.0 - alpha * p
        assert access_of_strategy(c, p, lam_bar, t, cbar, alpha) == pytest.approx(
            f / 2.0, rel=1e-12
        )

    def test_wage_from_access_round_trip(self, rng):
        for _ in range(100):
            lambda_bar, t, cbar, alpha = draw_served_params(rng)
            p = rng.uniform(0.3, 0.7) / alpha
            f = 1.0 - alpha * p
            A = rng.uniform(0.51, 0.99) * f
            c = wage_from_access(A, p, lambda_bar, t, cbar, alpha)
            assert access_of_strategy(c, p, lambda_bar, t, cbar, alpha) == pytest.approx(
                A, rel=1e-10
            )

    def test_wage_pole_near_full_access(self):
        p, f = 0.5, 0.5
        A = f * (1.0 - 1e-12)
        assert wage_from_access(A, p, 1.0, 1.0, 1.0, 1.0) > 1e6

    def test_access_foc_matches_wage_foc(self, rng):
        # Second formulation of the wage optimum: first-order condition in
        # access space, solved on the stable branch [f/2, f).
        for _ in range(50):
            lambda_bar, t, cbar, alpha = draw_served_params(rng)
            p = rng.uniform(0.4, 0.7) / alpha
            opt = optimal_wage(p, lambda_bar, t, cbar, alpha)
            if not opt.served or opt.margin <= 1e-9:
                continue
            f = 1.0 - alpha * p
            lhs = 2.0 * p / (cbar * math.sqrt(f**3))

            def gap(A):
                return lhs - math.sqrt((t / lambda_bar) / A * (1.0 / (f - A)) ** 3)

            lo, hi = f / 2.0, f * (1.0 - 1e-12)
            if gap(lo) < 0.0:
                continue  # corner: profit decreasing on the whole branch
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if gap(mid) > 0.0:
                    lo = mid
                else:
                    hi = mid
            a_root = 0.5 * (lo + hi)
            c_from_access = wage_from_access(a_root, p, lambda_bar, t, cbar, alpha)
            assert c_from_access == pytest.approx(opt.wage, rel=1e-8)


class TestDensitySweep:
    GRID = (27.0, 30.0, 50.0, 100.0, 1e3, 1e6)

    def test_endpoints_match_examples(self):
        table = density_sweep(self.GRID)
        first, last = table.points[0], table.points[-1]
        assert first.price == pytest.approx(2.0 / 3.0, abs=1e-3)
        assert first.margin == pytest.approx(0.0, abs=1e-3)
        assert last.price == pytest.approx(0.5, abs=0.01)
        assert last.access == pytest.approx(0.5, abs=0.01)

    def test_row_count_and_monotonicity(self):
        table = density_sweep(self.GRID)
        assert len(table.points) == len(self.GRID)
        assert table.diagnostics.all_pass

    def test_concavity_residuals(self):
        table = density_sweep(self.GRID)
        assert all(r <= 1e-6 for r in table.diagnostics.concavity_residuals)

    def test_thickening_access_ratio_inequality(self):
        # For denser i and sparser j: A_j/A_i ratios rise toward 1 as the
        # whole market scales by gamma = 10.
        gamma = 10.0
        base = {g: optimal_joint(g, 1.0, 1.0, 1.0).access for g in self.GRID}
        thick = {g: optimal_joint(gamma * g, 1.0, 1.0, 1.0).access for g in self.GRID}
        for i, gi in enumerate(self.GRID):
            for gj in self.GRID[:i]:  # gj < gi: j is the sparser region
                r0 = base[gj] / base[gi]
                r1 = thick[gj] / thick[gi]
                assert r0 <= r1 + 1e-9
                assert r1 <= 1.0 + 1e-9

    def test_rejects_bad_grids(self):
        with pytest.raises(DomainError):
            density_sweep([26.0, 30.0])
        with pytest.raises(DomainError):
            density_sweep([30.0, 30.0])
        with pytest.raises(DomainError):
            density_sweep([])

    def test_parallel_jobs_match_serial(self):
        serial = density_sweep((27.0, 50.0, 500.0))
        parallel = density_sweep((27.0, 50.0, 500.0), jobs=2)
        for a, b in zip(serial.points, parallel.points):
            assert a == b
