"""Station point patterns, Boolean coverage queries and coverage-number laws.

Lengths are in km and intensities in km^-2 throughout.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

__all__ = [
    "Window",
    "StationField",
    "CoverageProfile",
    "sample_ppp_stations",
    "build_lattice_stations",
    "covering_stations",
    "closest_station",
    "coverage_profile_ppp_boolean",
    "coverage_profile_monte_carlo",
    "coverage_profile_lattice",
    "mean_coverage_number",
    "radius_from_snr_threshold",
    "write_station_field",
    "read_station_field",
    "mean_voronoi_area",
    "probe_points",
    "station_counts",
]

DEFAULT_MAX_COVERAGE = 50
PMF_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Window:
    """Rectangular simulation window ``[0, width] x [0, height]``.

    Stations are generated on the window enlarged by ``margin`` on each side;
    users only ever arrive inside the inner window.
    """

    width: float
    height: float
    margin: float = 0.0

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"window sides must be positive, got {self.width} x {self.height}")
        if not self.margin >= 0:
            raise ValueError(f"margin must be non-negative, got {self.margin}")

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def outer_bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the margin-expanded window."""
        m = self.margin
        return (-m, -m, self.width + m, self.height + m)

    @property
    def outer_area(self) -> float:
        return (self.width + 2 * self.margin) * (self.height + 2 * self.margin)

    def with_margin(self, margin: float) -> "Window":
        return Window(self.width, self.height, margin)


@dataclass
class StationField:
    """A realised set of transmitter positions with Boolean coverage discs."""

    positions: np.ndarray
    intensity: float
    coverage_radius: float
    window: Window
    kind: str = "ppp"
    seed: Optional[int] = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        if not self.intensity > 0:
            raise ValueError("station intensity must be positive")
        if not self.coverage_radius > 0:
            raise ValueError("coverage radius must be positive")
        if self.kind not in ("ppp", "lattice"):
            raise ValueError(f"unknown field kind {self.kind!r}")

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def spacing(self) -> float:
        """Lattice edge length implied by the intensity."""
        return self.intensity ** -0.5

    def with_radius(self, radius: float) -> "StationField":
        return StationField(self.positions, self.intensity, radius, self.window, self.kind, self.seed)


@dataclass
class CoverageProfile:
    """Probability mass of the coverage number, indexed ``m = 0..M``."""

    pmf: np.ndarray
    label: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.pmf = np.asarray(self.pmf, dtype=float)
        if self.pmf.ndim != 1 or len(self.pmf) < 2:
            raise ValueError("pmf must be a 1-d array covering at least m = 0, 1")
        if np.any(self.pmf < -1e-15) or np.any(self.pmf > 1 + 1e-15):
            raise ValueError("pmf entries must lie in [0, 1]")
        total = self.pmf.sum()
        if abs(total - 1.0) > PMF_TOLERANCE:
            raise ValueError(f"pmf sums to {total!r}, expected 1")

    @property
    def max_coverage(self) -> int:
        return len(self.pmf) - 1

    @property
    def mean(self) -> float:
        return mean_coverage_number(self)

    @classmethod
    def single(cls, m: int, max_coverage: Optional[int] = None) -> "CoverageProfile":
        """Degenerate profile with all mass on ``m`` covering stations."""
        size = max(m, max_coverage or 1) + 1
        pmf = np.zeros(size)
        pmf[m] = 1.0
        return cls(pmf, label=f"p_{m}=1")

    def conditional_on_covered(self) -> np.ndarray:
        """Coverage law conditioned on at least one covering station."""
        covered = 1.0 - self.pmf[0]
        if covered <= 0:
            raise ValueError("profile has no coverage")
        out = self.pmf.copy()
        out[0] = 0.0
        return out / covered


def _check_intensity(intensity):
    if not (np.isfinite(intensity) and intensity > 0):
        raise ValueError(f"station intensity must be positive, got {intensity}")


def sample_ppp_stations(intensity: float, window: Window, rng: np.random.Generator,
                        coverage_radius: float = 1.0) -> StationField:
    """Homogeneous Poisson stations on the margin-expanded window.

    The count is Poisson with mean ``intensity * outer_area`` and positions
    are i.i.d. uniform.
    """
    _check_intensity(intensity)
    xmin, ymin, xmax, ymax = window.outer_bounds
    n = rng.poisson(intensity * window.outer_area)
    pos = np.column_stack([rng.uniform(xmin, xmax, n), rng.uniform(ymin, ymax, n)])
    return StationField(pos, intensity, coverage_radius, window, "ppp")


def build_lattice_stations(intensity: float, window: Window, rng: Optional[np.random.Generator] = None,
                           coverage_radius: float = 1.0, translation=None) -> StationField:
    """Square lattice of spacing ``intensity ** -0.5`` with one random shift.

    ``translation`` overrides the uniform shift in ``[0, spacing)^2``; every
    grid point falling inside the expanded window is kept.
    """
    _check_intensity(intensity)
    eta = intensity ** -0.5
    if translation is None:
        if rng is None:
            raise ValueError("either rng or translation is required")
        translation = rng.uniform(0.0, eta, 2)
    ux, uy = (float(t) for t in translation)
    xmin, ymin, xmax, ymax = window.outer_bounds

    def axis(lo, hi, u):
        k0 = math.ceil((lo - u) / eta)
        k1 = math.floor((hi - u) / eta)
        pts = u + eta * np.arange(k0, k1 + 1)
        # half-open window so shifted copies tile without double counting
        return pts[(pts >= lo) & (pts < hi)]

    gx, gy = axis(xmin, xmax, ux), axis(ymin, ymax, uy)
    xx, yy = np.meshgrid(gx, gy, indexing="ij")
    pos = np.column_stack([xx.ravel(), yy.ravel()])
    return StationField(pos, intensity, coverage_radius, window, "lattice")


def covering_stations(field: StationField, point) -> list[int]:
    """Indices of stations whose coverage disc strictly contains ``point``,
    nearest first (ties by index)."""
    if len(field) == 0:
        return []
    d = np.hypot(field.positions[:, 0] - point[0], field.positions[:, 1] - point[1])
    idx = np.flatnonzero(d < field.coverage_radius)
    order = np.lexsort((idx, d[idx]))
    return [int(i) for i in idx[order]]


def closest_station(field: StationField, point) -> int:
    """Index of the Voronoi station of ``point``; lowest index wins ties."""
    if len(field) == 0:
        raise ValueError("closest_station on an empty field")
    d = np.hypot(field.positions[:, 0] - point[0], field.positions[:, 1] - point[1])
    return int(np.argmin(d))


def _fold_tail(pmf_head: np.ndarray, max_coverage: int) -> np.ndarray:
    pmf = np.zeros(max_coverage + 1)
    pmf[:max_coverage] = pmf_head[:max_coverage]
    pmf[max_coverage] = max(0.0, 1.0 - pmf[:max_coverage].sum())
    return pmf


def coverage_profile_ppp_boolean(intensity: float, radius: float,
                                 max_coverage: int = DEFAULT_MAX_COVERAGE) -> CoverageProfile:
    """Poisson coverage law of Boolean discs on a PPP, tail folded into ``p_M``."""
    _check_intensity(intensity)
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if max_coverage < 1:
        raise ValueError("max_coverage must be >= 1")
    nu = intensity * math.pi * radius ** 2
    head = stats.poisson.pmf(np.arange(max_coverage), nu)
    pmf = _fold_tail(head, max_coverage)
    return CoverageProfile(pmf, label="ppp", extra={"nu": nu, "intensity": intensity, "radius": radius})


def coverage_profile_monte_carlo(field_sampler: Callable[[np.random.Generator], StationField],
                                 radius: float, max_coverage: int = DEFAULT_MAX_COVERAGE,
                                 n_samples: int = 100_000, rng: Optional[np.random.Generator] = None,
                                 probes_per_field: int = 50) -> CoverageProfile:
    """Empirical coverage law from probe points dropped on sampled fields.

    Probes are drawn uniformly on the inner window, which must be shielded by
    a margin of at least ``radius`` so that no covering station is missing.

    Parameters
    ----------
    field_sampler : callable
        ``field_sampler(rng)`` returns a fresh :class:`StationField`.
    radius : float
        Boolean coverage radius.
    n_samples : int
        Total number of probe points.
    probes_per_field : int
        Probe points evaluated against each sampled field.
    """
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    rng = rng if rng is not None else np.random.default_rng()
    counts = np.zeros(max_coverage + 1, dtype=np.int64)
    remaining = int(n_samples)
    while remaining > 0:
        fld = field_sampler(rng)
        if fld.window.margin < radius:
            raise ValueError("field margin must be at least the coverage radius to avoid edge bias")
        n = min(probes_per_field, remaining)
        px = rng.uniform(0.0, fld.window.width, n)
        py = rng.uniform(0.0, fld.window.height, n)
        if len(fld):
            d2 = (px[:, None] - fld.positions[None, :, 0]) ** 2 + (py[:, None] - fld.positions[None, :, 1]) ** 2
            c = (d2 < radius * radius).sum(axis=1)
        else:
            c = np.zeros(n, dtype=np.int64)
        counts += np.bincount(np.minimum(c, max_coverage), minlength=max_coverage + 1)
        remaining -= n
    pmf = counts / counts.sum()
    return CoverageProfile(pmf, label="monte-carlo", extra={"radius": radius, "n_samples": int(n_samples)})


def coverage_profile_lattice(intensity: float, radius: float, max_coverage: int = DEFAULT_MAX_COVERAGE,
                             n_samples: int = 100_000, rng: Optional[np.random.Generator] = None) -> CoverageProfile:
    """Monte Carlo coverage law of Boolean discs on a randomly shifted lattice."""
    _check_intensity(intensity)
    eta = intensity ** -0.5
    # a few lattice cells are enough; the random shift makes the probe uniform
    side = 4 * eta
    window = Window(side, side, margin=radius + eta)

    def sampler(g):
        return build_lattice_stations(intensity, window, g, coverage_radius=radius)

    prof = coverage_profile_monte_carlo(sampler, radius, max_coverage, n_samples, rng, probes_per_field=200)
    prof.label = "lattice"
    prof.extra.update(intensity=intensity)
    return prof


def mean_coverage_number(profile: CoverageProfile) -> float:
    """Expected number of covering stations, ``sum_m m p_m``."""
    m = np.arange(len(profile.pmf))
    return float(np.dot(m, profile.pmf))


def radius_from_snr_threshold(threshold: float, pathloss_exponent: float, attenuation: float) -> float:
    """Noise-limited coverage radius ``T^(-1/beta) / B``."""
    if not threshold > 0:
        raise ValueError("SNR threshold must be positive")
    if not pathloss_exponent > 2:
        raise ValueError("path-loss exponent must exceed 2")
    if not attenuation > 0:
        raise ValueError("attenuation constant must be positive")
    return threshold ** (-1.0 / pathloss_exponent) / attenuation


def write_station_field(fld: StationField, path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` (index, x, y) and ``<path>.json`` header."""
    path = Path(path)
    csv_path, json_path = path.with_suffix(".csv"), path.with_suffix(".json")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "x", "y"])
        for i, (x, y) in enumerate(fld.positions):
            w.writerow([i, repr(float(x)), repr(float(y))])
    header = {
        "lambda_b": fld.intensity,
        "R_b": fld.coverage_radius,
        "kind": fld.kind,
        "window": {"width": fld.window.width, "height": fld.window.height, "margin": fld.window.margin},
        "seed": fld.seed,
    }
    json_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return csv_path, json_path


def read_station_field(path) -> StationField:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    with open(path.with_suffix(".csv"), newline="") as fh:
        rows = sorted(csv.DictReader(fh), key=lambda r: int(r["index"]))
    pos = np.array([[float(r["x"]), float(r["y"])] for r in rows]).reshape(-1, 2)
    w = header["window"]
    return StationField(pos, header["lambda_b"], header["R_b"], Window(w["width"], w["height"], w["margin"]),
                        header["kind"], header.get("seed"))


def mean_voronoi_area(intensity: float) -> float:
    """Mean Voronoi cell surface of a stationary pattern, ``1 / intensity``."""
    _check_intensity(intensity)
    return 1.0 / intensity


def probe_points(window: Window, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points on the inner window."""
    return np.column_stack([rng.uniform(0.0, window.width, n), rng.uniform(0.0, window.height, n)])


def station_counts(points: Sequence, fld: StationField) -> np.ndarray:
    """Number of covering stations at each of ``points``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(fld) == 0:
        return np.zeros(len(pts), dtype=np.int64)
    r2 = fld.coverage_radius ** 2
    d2 = (pts[:, None, 0] - fld.positions[None, :, 0]) ** 2 + (pts[:, None, 1] - fld.positions[None, :, 1]) ** 2
    return (d2 < r2).sum(axis=1)
