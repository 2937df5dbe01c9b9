"""Che-like hit-probability approximations for single and spatial multi-LRU.

All request-rate arguments are per unit time and per unit area, so that a
rate times an area is a request rate. ``Lambda`` denotes such a product.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import CoverageProfile
from .traffic import Catalogue

__all__ = [
    "CheSolution",
    "SurfaceModel",
    "solve_characteristic_time",
    "che_single_hit",
    "che_multi_one_hit",
    "che_multi_all_hit",
    "build_surface_model",
    "union_surface_monte_carlo",
    "two_cache_hit",
    "CIAValidityWarning",
]

RESIDUAL_TOL = 1e-8


class CIAValidityWarning(UserWarning):
    """Coverage discs smaller than the mean Voronoi cell."""


@dataclass
class CheSolution:
    """Characteristic time of an LRU cache and the per-object hit vector.

    ``characteristic_time`` is ``inf`` when the whole catalogue fits.
    """

    characteristic_time: float
    residual: float
    per_object_hit: np.ndarray

    @property
    def fits_everything(self) -> bool:
        return math.isinf(self.characteristic_time)


def _occupancy(a, rate, t):
    # expected number of cached objects: sum_j (1 - exp(-rate a_j t))
    return float(-np.expm1(-rate * a * t).sum())


def solve_characteristic_time(catalogue: Catalogue, rate: float, capacity: int,
                              tol: float = RESIDUAL_TOL) -> CheSolution:
    """Root of ``sum_j (1 - exp(-rate a_j T)) = capacity`` by bracketing bisection.

    Parameters
    ----------
    catalogue : Catalogue
        Object popularities.
    rate : float
        Request rate reaching the cache (intensity times area).
    capacity : int
        Cache size ``K``.
    """
    if not rate > 0:
        raise ValueError(f"request rate must be positive, got {rate}")
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    a = catalogue.popularities
    K = float(capacity)
    if capacity >= len(a):
        return CheSolution(math.inf, 0.0, np.ones(len(a)))
    lo, hi = 0.0, 1.0 / rate
    while _occupancy(a, rate, hi) < K:
        lo, hi = hi, 2.0 * hi
    t = hi
    for _ in range(400):
        t = 0.5 * (lo + hi)
        occ = _occupancy(a, rate, t)
        if abs(occ - K) < tol * 0.1 or hi - lo <= 4 * np.finfo(float).eps * hi:
            break
        if occ < K:
            lo = t
        else:
            hi = t
    per_obj = -np.expm1(-rate * a * t)
    return CheSolution(t, float(per_obj.sum() - K), per_obj)


def che_single_hit(catalogue: Catalogue, rate: float, capacity: int) -> float:
    """Che estimate of a single LRU cache: ``sum_j a_j (1 - exp(-rate a_j T_C))``."""
    sol = solve_characteristic_time(catalogue, rate, capacity)
    return float(np.dot(catalogue.popularities, sol.per_object_hit))


def _coverage_weighted_hit(a, pmf, per_area_exponent):
    # sum_j a_j sum_m p_m (1 - exp(-a_j * c_m)), c_m given per coverage level m
    hit_m = -np.expm1(-np.outer(a, per_area_exponent))
    return float(a @ hit_m @ pmf)


def che_multi_one_hit(catalogue: Catalogue, user_intensity: float, voronoi_area: float,
                      profile: CoverageProfile, capacity: int,
                      coverage_radius: Optional[float] = None) -> float:
    """Multi-LRU-One estimate under the cache independence approximation.

    Each cache behaves as a single LRU fed by its mean Voronoi cell, and the
    caches covering a user miss independently.
    """
    if coverage_radius is not None and math.pi * coverage_radius ** 2 <= voronoi_area:
        warnings.warn(
            f"coverage disc area {math.pi * coverage_radius ** 2:.4g} does not exceed the mean Voronoi "
            f"area {voronoi_area:.4g}; the independence approximation is outside its domain",
            CIAValidityWarning, stacklevel=2)
    rate = user_intensity * voronoi_area
    a = catalogue.popularities
    m = np.arange(len(profile.pmf))
    sol = solve_characteristic_time(catalogue, rate, capacity)
    if sol.fits_everything:
        return float(1.0 - profile.pmf[0])
    return _coverage_weighted_hit(a, profile.pmf, rate * m * sol.characteristic_time)


@dataclass(frozen=True)
class SurfaceModel:
    """Union surface ``|A_m|`` of the ``m`` discs covering a user."""

    coverage_radius: float
    areas: np.ndarray
    decay: float

    @property
    def max_coverage(self) -> int:
        return len(self.areas) - 1


def build_surface_model(coverage_radius: float, max_coverage: int = 50) -> SurfaceModel:
    """Exponential-saturation union surfaces.

    ``|A_m| = |A_inf| (1 - exp(-m rho))`` where ``|A_inf| = (5/3)^2 pi R^2``
    is the disc of radius ``R + 2R/3`` around the user and ``rho`` makes
    ``|A_1|`` equal to one coverage disc.
    """
    if not coverage_radius > 0:
        raise ValueError("coverage radius must be positive")
    disc = math.pi * coverage_radius ** 2
    a_inf = (5.0 / 3.0) ** 2 * disc
    rho = -math.log1p(-disc / a_inf)
    m = np.arange(max_coverage + 1)
    areas = -a_inf * np.expm1(-m * rho)
    return SurfaceModel(coverage_radius, areas, rho)


def union_surface_monte_carlo(intensity: float, coverage_radius: float, max_coverage: int = 50,
                              n_samples: int = 4_000, rng: Optional[np.random.Generator] = None,
                              min_samples: int = 50) -> SurfaceModel:
    """Union surfaces estimated from Poisson stations around a typical user.

    Covering stations of a user at the origin are uniform in the disc of
    radius ``R`` around it; the area of the union of their discs is
    estimated per coverage level ``m`` by a shared grid quadrature. Levels
    with fewer than ``min_samples`` draws fall back to the exponential
    model.
    """
    rng = rng if rng is not None else np.random.default_rng()
    R = coverage_radius
    heuristic = build_surface_model(R, max_coverage)
    nu = intensity * math.pi * R * R
    n_grid = 48
    g = np.linspace(-2 * R, 2 * R, n_grid + 1)
    g = 0.5 * (g[1:] + g[:-1])
    gx, gy = np.meshgrid(g, g)
    inside = gx ** 2 + gy ** 2 < 4 * R * R
    px, py = gx[inside], gy[inside]
    cell = (g[1] - g[0]) ** 2
    sums = np.zeros(max_coverage + 1)
    counts = np.zeros(max_coverage + 1, dtype=np.int64)
    for _ in range(n_samples):
        m = min(rng.poisson(nu), max_coverage)
        if m == 0:
            continue
        r = R * np.sqrt(rng.random(m))
        th = 2 * math.pi * rng.random(m)
        sx, sy = r * np.cos(th), r * np.sin(th)
        covered = ((px[:, None] - sx) ** 2 + (py[:, None] - sy) ** 2 < R * R).any(axis=1)
        sums[m] += covered.sum() * cell
        counts[m] += 1
    areas = heuristic.areas.copy()
    ok = counts >= min_samples
    areas[ok] = sums[ok] / counts[ok]
    areas[1] = math.pi * R * R
    areas[0] = 0.0
    areas = np.maximum.accumulate(areas)
    return SurfaceModel(R, areas, heuristic.decay)


def che_multi_all_hit(catalogue: Catalogue, user_intensity: float, coverage_radius: float,
                      profile: CoverageProfile, capacity: int,
                      surfaces: Optional[SurfaceModel] = None) -> float:
    """Multi-LRU-All estimate under the cache similarity approximation.

    Every cache is fed by its whole coverage disc, and a user covered by
    ``m`` stations misses only if no request for the object fell in the
    union of their discs during the characteristic time.
    """
    disc = math.pi * coverage_radius ** 2
    rate = user_intensity * disc
    pmf = profile.pmf
    if surfaces is None:
        surfaces = build_surface_model(coverage_radius, len(pmf) - 1)
    areas = np.zeros(len(pmf))
    n = min(len(pmf), len(surfaces.areas))
    areas[:n] = surfaces.areas[:n]
    areas[n:] = surfaces.areas[-1]
    sol = solve_characteristic_time(catalogue, rate, capacity)
    if sol.fits_everything:
        return float(1.0 - pmf[0])
    return _coverage_weighted_hit(catalogue.popularities, pmf, user_intensity * areas * sol.characteristic_time)


def two_cache_hit(policy: str, catalogue: Catalogue, user_intensity: float, half_area: float,
                  capacity: int) -> float:
    """Hit probability of two caches that both cover an area ``2 |V|``.

    ``policy`` is ``"one"`` (independence approximation, each cache fed by
    its own half) or ``"all"`` (similarity, exact here: both caches see
    the whole area and hold identical content).
    """
    if capacity >= catalogue.size:
        raise ValueError("two-cache formulas need capacity < catalogue size")
    a = catalogue.popularities
    if policy == "one":
        sol = solve_characteristic_time(catalogue, user_intensity * half_area, capacity)
        return float(np.dot(a, -np.expm1(-a * user_intensity * 2 * half_area * sol.characteristic_time)))
    if policy == "all":
        return che_single_hit(catalogue, user_intensity * 2 * half_area, capacity)
    raise ValueError(f"unknown two-cache policy {policy!r}; use 'one' or 'all'")
