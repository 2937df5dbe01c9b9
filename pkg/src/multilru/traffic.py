"""Marked space-time request streams: IRM and temporal-locality traffic."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Optional

import numpy as np

from .geometry import Window

__all__ = [
    "Catalogue",
    "Request",
    "RequestStream",
    "TemporalTrafficConfig",
    "zipf_popularities",
    "generate_irm_stream",
    "generate_temporal_stream",
    "sample_lifespans",
    "write_stream_csv",
    "write_catalogue_csv",
]


@dataclass
class Catalogue:
    """Object popularities ``a_1 >= a_2 >= ... >= a_F > 0`` summing to one.

    Object ids are 0-based positions in this vector, so id 0 is the most
    popular object.
    """

    popularities: np.ndarray
    exponent: Optional[float] = None

    def __post_init__(self):
        a = np.asarray(self.popularities, dtype=float)
        if a.ndim != 1 or len(a) == 0:
            raise ValueError("catalogue must hold at least one object")
        if np.any(a <= 0):
            raise ValueError("popularities must be strictly positive")
        if np.any(np.diff(a) > 1e-15):
            raise ValueError("popularities must be non-increasing")
        if abs(a.sum() - 1.0) > 1e-9:
            raise ValueError(f"popularities sum to {a.sum()!r}, expected 1")
        self.popularities = a

    @property
    def size(self) -> int:
        return len(self.popularities)

    def __len__(self) -> int:
        return len(self.popularities)

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.popularities)


def zipf_popularities(size: int, exponent: float) -> Catalogue:
    """Zipf law ``a_j = j^-gamma / sum_k k^-gamma`` for ``j = 1..size``."""
    if size < 1:
        raise ValueError("catalogue size must be >= 1")
    if exponent < 0:
        raise ValueError("Zipf exponent must be non-negative")
    w = np.arange(1, size + 1, dtype=float) ** -float(exponent)
    return Catalogue(w / w.sum(), exponent=float(exponent))


class Request(NamedTuple):
    time: float
    x: float
    y: float
    object: int


@dataclass
class RequestStream:
    """Time-sorted requests stored column-wise.

    ``times``, ``xs``, ``ys`` and ``objects`` share one length; iteration
    yields :class:`Request` tuples.
    """

    times: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    objects: np.ndarray
    intensity: float
    duration: float

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self) -> Iterator[Request]:
        for t, x, y, o in zip(self.times, self.xs, self.ys, self.objects):
            yield Request(float(t), float(x), float(y), int(o))

    def __getitem__(self, i) -> Request:
        return Request(float(self.times[i]), float(self.xs[i]), float(self.ys[i]), int(self.objects[i]))

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.xs, self.ys])

    @classmethod
    def from_arrays(cls, times, xs, ys, objects, intensity, duration) -> "RequestStream":
        """Build a stream, sorting stably by time (ties keep generation order)."""
        order = np.argsort(times, kind="stable")
        return cls(np.asarray(times, float)[order], np.asarray(xs, float)[order],
                   np.asarray(ys, float)[order], np.asarray(objects, np.int64)[order],
                   float(intensity), float(duration))


def _uniform_locations(window: Window, n: int, rng: np.random.Generator):
    return rng.uniform(0.0, window.width, n), rng.uniform(0.0, window.height, n)


def generate_irm_stream(intensity: float, window: Window, duration: float, catalogue: Catalogue,
                        rng: np.random.Generator, count: Optional[int] = None) -> RequestStream:
    """Spatial IRM requests on the inner window.

    The count is Poisson with mean ``intensity * area * duration``; times and
    locations are uniform, and object marks are i.i.d. draws from the
    catalogue. ``count`` fixes the number of requests instead.
    """
    if not intensity > 0:
        raise ValueError("request intensity must be positive")
    if not duration > 0:
        raise ValueError("duration must be positive")
    n = int(rng.poisson(intensity * window.area * duration)) if count is None else int(count)
    times = rng.uniform(0.0, duration, n)
    xs, ys = _uniform_locations(window, n, rng)
    cdf = catalogue.cumulative()
    objects = np.minimum(np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right"), len(cdf) - 1)
    return RequestStream.from_arrays(times, xs, ys, objects, intensity, duration)


@dataclass(frozen=True)
class TemporalTrafficConfig:
    """Shot-noise traffic where objects are born, live and expire.

    Rates are per day and durations in days. Each object draws a lifespan
    of mean ``mean_lifespan`` and a Poisson number of requests of mean
    ``request_rate / birth_rate``, spread uniformly over its life (clipped at
    the horizon).

    ``lifespan`` picks the lifespan law: ``"exponential"``, ``"lognormal"``
    (log-scale deviation ``lifespan_shape``) or ``"pareto"`` (tail index
    ``lifespan_shape`` > 1). All are scaled to the requested mean.
    """

    birth_rate: float
    mean_lifespan: float
    request_rate: float
    duration: float
    window: Window
    lifespan: str = "exponential"
    lifespan_shape: float = 1.0

    def __post_init__(self):
        for name in ("birth_rate", "mean_lifespan", "request_rate", "duration"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.lifespan not in LIFESPAN_LAWS:
            raise ValueError(f"unknown lifespan law {self.lifespan!r}; choose from {', '.join(LIFESPAN_LAWS)}")
        if self.lifespan == "lognormal" and not self.lifespan_shape > 0:
            raise ValueError("lognormal lifespan needs a positive shape")
        if self.lifespan == "pareto" and not self.lifespan_shape > 1:
            raise ValueError("pareto lifespan needs a tail index above 1 for a finite mean")

    @property
    def mean_requests_per_object(self) -> float:
        return self.request_rate / self.birth_rate


LIFESPAN_LAWS = ("exponential", "lognormal", "pareto")


def sample_lifespans(law: str, mean: float, shape: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. lifespans of the given law with mean ``mean``."""
    if law == "exponential":
        return rng.exponential(mean, n)
    if law == "lognormal":
        return rng.lognormal(np.log(mean) - 0.5 * shape ** 2, shape, n)
    if law == "pareto":
        scale = mean * (shape - 1.0) / shape
        return scale * (1.0 + rng.pareto(shape, n))
    raise ValueError(f"unknown lifespan law {law!r}")


def generate_temporal_stream(config: TemporalTrafficConfig, rng: np.random.Generator,
                             return_objects: bool = False):
    """Requests for objects with finite lifespans.

    Object ids are assigned in birth order. With ``return_objects`` the
    per-object ``(births, lifespans)`` arrays are returned as well.
    """
    n_obj = int(rng.poisson(config.birth_rate * config.duration))
    births = np.sort(rng.uniform(0.0, config.duration, n_obj))
    lifespans = sample_lifespans(config.lifespan, config.mean_lifespan, config.lifespan_shape, n_obj, rng)
    per_obj = rng.poisson(config.mean_requests_per_object, n_obj)
    owner = np.repeat(np.arange(n_obj, dtype=np.int64), per_obj)
    end = np.minimum(births + lifespans, config.duration)
    start_r, end_r = births[owner], end[owner]
    times = start_r + rng.random(len(owner)) * (end_r - start_r)
    xs, ys = _uniform_locations(config.window, len(owner), rng)
    stream = RequestStream.from_arrays(times, xs, ys, owner, config.request_rate / config.window.area,
                                       config.duration)
    if return_objects:
        return stream, births, lifespans
    return stream


def write_stream_csv(stream: RequestStream, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y", "object_id"])
        for r in stream:
            w.writerow([repr(r.time), repr(r.x), repr(r.y), r.object])
    return path


def write_catalogue_csv(catalogue: Catalogue, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "popularity"])
        for j, a in enumerate(catalogue.popularities, start=1):
            w.writerow([j, repr(float(a))])
    return path
