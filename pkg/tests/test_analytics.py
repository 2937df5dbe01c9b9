import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multilru.analytics import (CIAValidityWarning, build_surface_model, che_multi_all_hit, che_multi_one_hit,
                                che_single_hit, solve_characteristic_time, two_cache_hit,
                                union_surface_monte_carlo)
from multilru.geometry import CoverageProfile, coverage_profile_ppp_boolean
from multilru.traffic import Catalogue, zipf_popularities

UNIFORM2 = Catalogue(np.array([0.5, 0.5]))
DESK = zipf_popularities(10_000, 0.78)


class TestCharacteristicTime:
    def test_closed_form(self):
        sol = solve_characteristic_time(UNIFORM2, 1.0, 1)
        assert sol.characteristic_time == pytest.approx(2 * math.log(2), abs=1e-8)
        assert abs(sol.residual) < 1e-8

    def test_everything_fits(self):
        sol = solve_characteristic_time(UNIFORM2, 1.0, 2)
        assert sol.fits_everything and np.all(sol.per_object_hit == 1)
        assert che_single_hit(UNIFORM2, 1.0, 2) == 1.0

    def test_fine_grid_oracle(self):
        cat = zipf_popularities(3, 1.0)
        sol = solve_characteristic_time(cat, 1.0, 1)
        a = cat.popularities

        def occ(t):
            return (1 - np.exp(-np.outer(t, a))).sum(axis=1)

        lo = sol.characteristic_time - 1e-6
        grid = lo + 1e-9 * np.arange(2001)
        root = grid[np.argmin(np.abs(occ(grid) - 1))]
        assert sol.characteristic_time == pytest.approx(root, abs=2e-9)

    def test_rejects(self):
        with pytest.raises(ValueError):
            solve_characteristic_time(UNIFORM2, 0.0, 1)
        with pytest.raises(ValueError):
            solve_characteristic_time(UNIFORM2, 1.0, 0)

    @given(st.integers(2, 3000), st.floats(0.0, 1.5), st.floats(1e-4, 1e4), st.floats(0.0, 0.99))
    @settings(max_examples=80, deadline=None)
    def test_residual_property(self, f, gamma, rate, frac):
        cat = zipf_popularities(f, gamma)
        k = max(1, int(frac * (f - 1)))
        sol = solve_characteristic_time(cat, rate, k)
        assert abs(sol.residual) < 1e-8
        assert 0 < sol.characteristic_time < math.inf
        # the occupancy map is increasing through the root
        t = sol.characteristic_time
        a = cat.popularities
        assert (-np.expm1(-rate * a * t * 0.99)).sum() <= k <= (-np.expm1(-rate * a * t * 1.01)).sum()


class TestSingle:
    def test_uniform_value(self):
        assert che_single_hit(UNIFORM2, 1.0, 1) == pytest.approx(0.5, abs=1e-9)

    def test_in_unit_interval_and_monotone(self):
        vals = [che_single_hit(DESK, 50.0, k) for k in (1, 10, 100, 1000, 5000)]
        assert all(0 <= v <= 1 for v in vals) and np.all(np.diff(vals) > 0)


class TestMultiOne:
    def test_single_coverage_collapse(self):
        v = che_multi_one_hit(DESK, 0.023, 2.0, CoverageProfile.single(1), 500)
        assert v == pytest.approx(che_single_hit(DESK, 0.023 * 2.0, 500), abs=1e-12)

    def test_no_coverage(self):
        assert che_multi_one_hit(DESK, 0.023, 2.0, CoverageProfile.single(0), 500) == 0.0

    def test_validity_warning(self):
        prof = coverage_profile_ppp_boolean(0.5, 0.7)
        with pytest.warns(CIAValidityWarning):
            che_multi_one_hit(DESK, 0.023, 2.0, prof, 500, coverage_radius=0.7)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            che_multi_one_hit(DESK, 0.023, 2.0, prof, 500, coverage_radius=1.2)

    def test_monotone_in_k_and_radius(self):
        prof = coverage_profile_ppp_boolean(0.5, 1.38)
        vals = [che_multi_one_hit(DESK, 0.023, 2.0, prof, k) for k in (10, 100, 500, 2000)]
        assert np.all(np.diff(vals) > 0)
        vals = [che_multi_one_hit(DESK, 0.023, 2.0, coverage_profile_ppp_boolean(0.5, r), 500)
                for r in np.linspace(0.8, 2.0, 7)]
        assert np.all(np.diff(vals) >= 0)

    def test_everything_fits(self):
        prof = coverage_profile_ppp_boolean(0.5, 1.0)
        assert che_multi_one_hit(UNIFORM2, 1.0, 2.0, prof, 2) == pytest.approx(1 - prof.pmf[0])


class TestSurfaces:
    def test_heuristic_endpoints(self):
        s = build_surface_model(1.3, 50)
        disc = math.pi * 1.3 ** 2
        assert s.areas[0] == 0 and s.areas[1] == pytest.approx(disc, rel=1e-12)
        assert s.decay == pytest.approx(math.log(25 / 16)) and s.decay == pytest.approx(0.4463, abs=1e-4)
        assert s.areas[50] == pytest.approx(25 / 9 * disc, rel=1e-9)
        assert np.all(np.diff(s.areas) > 0) and s.max_coverage == 50

    def test_monte_carlo_surfaces(self):
        s = union_surface_monte_carlo(0.5, 1.2, 20, n_samples=2000, rng=np.random.default_rng(0))
        disc = math.pi * 1.2 ** 2
        assert s.areas[1] == pytest.approx(disc)
        assert np.all(np.diff(s.areas) >= 0)
        assert s.areas.max() <= 4 * disc * 1.02
        # two discs with centres uniform within R of the user: mean union area near 1.58 discs
        assert s.areas[2] / disc == pytest.approx(1.58, abs=0.08)

    def test_rejects(self):
        with pytest.raises(ValueError):
            build_surface_model(0.0)


class TestMultiAll:
    def test_single_coverage_collapse(self):
        r = 1.2
        v = che_multi_all_hit(DESK, 0.023, r, CoverageProfile.single(1), 500)
        assert v == pytest.approx(che_single_hit(DESK, 0.023 * math.pi * r * r, 500), abs=1e-12)

    def test_no_coverage(self):
        assert che_multi_all_hit(DESK, 0.023, 1.2, CoverageProfile.single(0), 500) == 0.0

    def test_ordering_against_single(self):
        for r in (1.13, 1.38, 1.78):
            prof = coverage_profile_ppp_boolean(0.5, r)
            multi = che_multi_all_hit(DESK, 0.023, r, prof, 100)
            single = (1 - prof.pmf[0]) * che_single_hit(DESK, 0.023 * 2.0, 100)
            assert single <= multi <= 1

    def test_monotone_in_k(self):
        prof = coverage_profile_ppp_boolean(0.5, 1.38)
        vals = [che_multi_all_hit(DESK, 0.023, 1.38, prof, k) for k in (10, 100, 500, 2000)]
        assert np.all(np.diff(vals) > 0)


def test_degenerate_profile_agreement():
    # with |V| equal to the disc area every formula sees the same request rate
    r = 1.1
    disc = math.pi * r * r
    prof = CoverageProfile.single(1)
    single = che_single_hit(DESK, 0.023 * disc, 300)
    assert che_multi_one_hit(DESK, 0.023, disc, prof, 300) == pytest.approx(single, abs=1e-12)
    assert che_multi_all_hit(DESK, 0.023, r, prof, 300) == pytest.approx(single, abs=1e-12)


class TestTwoCache:
    def test_all_is_single_cache_of_union(self):
        # both caches see the full area and stay identical: one LRU with K=1 over two
        # equally likely objects hits exactly when the last request repeats, i.e. 1/2
        assert two_cache_hit("all", UNIFORM2, 1.0, 1.0, 1) == pytest.approx(0.5, abs=1e-9)

    def test_one_closed_form(self):
        assert two_cache_hit("one", UNIFORM2, 1.0, 1.0, 1) == pytest.approx(0.75, abs=1e-9)

    def test_rejects(self):
        with pytest.raises(ValueError):
            two_cache_hit("all", UNIFORM2, 1.0, 1.0, 2)
        with pytest.raises(ValueError):
            two_cache_hit("some", UNIFORM2, 1.0, 1.0, 1)

    def test_all_matches_generic_formula(self):
        cat = zipf_popularities(1000, 0.7)
        assert two_cache_hit("all", cat, 2.0, 3.0, 50) == pytest.approx(che_single_hit(cat, 12.0, 50))
