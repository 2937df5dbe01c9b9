"""Event-driven replay of request streams over cached station fields."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _kernels
from .geometry import (CoverageProfile, StationField, Window, build_lattice_stations, coverage_profile_lattice,
                       coverage_profile_ppp_boolean, probe_points, sample_ppp_stations)
from .policies import Policy, gfi_place, lfu_fill, pbp_sample, pbp_solve
from .traffic import (Catalogue, RequestStream, TemporalTrafficConfig, generate_irm_stream,
                      generate_temporal_stream, zipf_popularities)

__all__ = [
    "ExperimentConfig",
    "HitReport",
    "run_replication",
    "run_experiment",
    "run_sweep",
    "replay_stream",
    "coverage_profile_for",
    "SWEEP_VARIABLES",
    "two_cache_simulation",
]

DEFAULT_USER_INTENSITY = 0.023  # requests per km^2 per second
DESK_REQUESTS = 1_000_000
SECONDS_PER_DAY = 86_400.0

SWEEP_VARIABLES = {
    "radius": "radius",
    "R_b": "radius",
    "zipf": "zipf_exponent",
    "gamma": "zipf_exponent",
    "alpha": "alpha",
    "q": "q",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one simulated hit probability.

    The cache size is ``capacity`` when given, else ``round(alpha * F)``.
    ``margin`` defaults to the coverage radius. IRM duration is in seconds;
    the temporal fields are per day / in days.
    """

    geometry: str = "ppp"
    intensity: float = 0.5
    radius: float = 1.13
    width: float = 12.0
    height: float = 12.0
    margin: Optional[float] = None
    user_intensity: float = DEFAULT_USER_INTENSITY
    duration: float = DESK_REQUESTS / (DEFAULT_USER_INTENSITY * 144.0)
    catalogue_size: int = 10_000
    zipf_exponent: float = 0.78
    alpha: float = 0.01
    capacity: Optional[int] = None
    policy: str = "multi-one"
    q: float = 1.0
    one_update: str = "closest"
    traffic: str = "irm"
    birth_rate: float = 240.0
    mean_lifespan: float = 100.0
    request_rate: float = 4000.0
    temporal_days: float = 180.0
    lifespan: str = "exponential"
    lifespan_shape: float = 1.0
    replications: int = 20
    seed: int = 0
    warmup: float = 0.0
    gfi_probes: int = 10_000
    profile_samples: int = 100_000

    def __post_init__(self):
        if self.geometry not in ("ppp", "lattice"):
            raise ValueError(f"geometry must be 'ppp' or 'lattice', got {self.geometry!r}")
        if self.traffic not in ("irm", "temporal"):
            raise ValueError(f"traffic must be 'irm' or 'temporal', got {self.traffic!r}")
        for name in ("intensity", "radius", "width", "height", "user_intensity", "duration",
                     "birth_rate", "mean_lifespan", "request_rate", "temporal_days"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v!r}")
        if self.margin is not None and self.margin < 0:
            raise ValueError("margin must be non-negative")
        if self.catalogue_size < 1:
            raise ValueError("catalogue_size must be >= 1")
        if self.zipf_exponent < 0:
            raise ValueError("zipf_exponent must be non-negative")
        if self.capacity is None and not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.capacity is not None and self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 0 <= self.warmup < 1:
            raise ValueError("warmup must lie in [0, 1)")
        self.policy_spec  # validates policy name and q

    @property
    def policy_spec(self) -> Policy:
        return Policy(self.policy, self.q, self.one_update)

    @property
    def cache_size(self) -> int:
        if self.capacity is not None:
            return int(self.capacity)
        return max(1, int(round(self.alpha * self.catalogue_size)))

    @property
    def window(self) -> Window:
        return Window(self.width, self.height, self.radius if self.margin is None else self.margin)

    def catalogue(self) -> Catalogue:
        return _zipf(self.catalogue_size, self.zipf_exponent)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


@lru_cache(maxsize=32)
def _zipf(size, exponent):
    return zipf_popularities(size, exponent)


@dataclass
class HitReport:
    """Hit counts of one or more replications.

    ``hit_probability`` pools all requests; ``mean`` and ``ci95`` are the
    average of the per-replication frequencies and its normal-approximation
    95% half-width (``nan`` with a single replication).
    """

    requests: int
    hits: int
    per_replication: list = field(default_factory=list)
    seeds: list = field(default_factory=list)

    @property
    def hit_probability(self) -> float:
        return self.hits / self.requests if self.requests else math.nan

    @property
    def n_replications(self) -> int:
        return len(self.per_replication)

    @property
    def mean(self) -> float:
        vals = [v for v in self.per_replication if not math.isnan(v)]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def ci95(self) -> float:
        vals = [v for v in self.per_replication if not math.isnan(v)]
        if len(vals) < 2:
            return math.nan
        return float(1.96 * np.std(vals, ddof=1) / math.sqrt(len(vals)))

    @property
    def defined(self) -> bool:
        return self.requests > 0

    @classmethod
    def combine(cls, reports: Sequence["HitReport"]) -> "HitReport":
        out = cls(0, 0)
        for r in reports:
            out.requests += r.requests
            out.hits += r.hits
            out.per_replication.extend(r.per_replication)
            out.seeds.extend(r.seeds)
        return out

    def as_dict(self) -> dict:
        return {
            "requests": self.requests,
            "hits": self.hits,
            "hit_probability": self.hit_probability,
            "mean": self.mean,
            "ci95": self.ci95,
            "n_replications": self.n_replications,
            "per_replication": list(self.per_replication),
            "seeds": list(self.seeds),
        }


@lru_cache(maxsize=64)
def _lattice_profile(intensity, radius, samples, seed):
    return coverage_profile_lattice(intensity, radius, n_samples=samples, rng=np.random.default_rng(seed))


def coverage_profile_for(config: ExperimentConfig) -> CoverageProfile:
    """Coverage law of the configured geometry (analytic for PPP, Monte Carlo for lattices)."""
    if config.geometry == "ppp":
        return coverage_profile_ppp_boolean(config.intensity, config.radius)
    return _lattice_profile(config.intensity, config.radius, config.profile_samples, config.seed)


@lru_cache(maxsize=32)
def _pbp_design(config_key: ExperimentConfig):
    cfg = config_key
    return pbp_solve(cfg.catalogue(), coverage_profile_for(cfg), cfg.cache_size)


def _stations(config: ExperimentConfig, rng: np.random.Generator) -> StationField:
    if config.geometry == "ppp":
        return sample_ppp_stations(config.intensity, config.window, rng, config.radius)
    return build_lattice_stations(config.intensity, config.window, rng, config.radius)


def _stream(config: ExperimentConfig, rng: np.random.Generator) -> RequestStream:
    if config.traffic == "irm":
        return generate_irm_stream(config.user_intensity, Window(config.width, config.height), config.duration,
                                   config.catalogue(), rng)
    tcfg = TemporalTrafficConfig(config.birth_rate, config.mean_lifespan, config.request_rate,
                                 config.temporal_days, Window(config.width, config.height),
                                 config.lifespan, config.lifespan_shape)
    return generate_temporal_stream(tcfg, rng)


_MODES = {
    "single-lru": _kernels.SINGLE,
    "q-lru": _kernels.SINGLE,
    "multi-one": _kernels.MULTI_ONE,
    "multi-all": _kernels.MULTI_ALL,
    "q-multi-all": _kernels.MULTI_ALL,
    "lfu": _kernels.STATIC,
    "pbp": _kernels.STATIC,
    "gfi": _kernels.STATIC,
}


def replay_stream(policy: Policy, field_: StationField, stream: RequestStream, n_objects: int, capacity: int,
                  rng: np.random.Generator, inventories: Optional[Sequence[Iterable[int]]] = None,
                  state: Optional[_kernels.CacheState] = None):
    """Replay ``stream`` over ``field_`` and return ``(hits, state)``.

    ``hits`` is a boolean array aligned with the stream. Static policies
    need ``inventories``; per-request policies start from empty caches
    unless a ``state`` is passed in.
    """
    offsets, stations = _kernels.covering_csr(stream.points, field_.positions, field_.coverage_radius)
    if state is None:
        state = _kernels.CacheState(len(field_), n_objects, capacity)
        if inventories is not None:
            for s, inv in enumerate(inventories):
                state.load(s, list(inv))
    if policy.is_static and inventories is None and state is None:
        raise ValueError(f"static policy {policy.name} needs inventories")
    uniforms = rng.random(len(stations)) if policy.q < 1 else np.zeros(len(stations))
    update = _kernels.UPDATE_NEAREST if policy.one_update == "nearest" else _kernels.UPDATE_CLOSEST
    hits = state.run(_MODES[policy.name], policy.q, update, stream.objects, offsets, stations, uniforms)
    return hits, state


def _static_inventories(config: ExperimentConfig, field_: StationField, rng: np.random.Generator):
    K, cat = config.cache_size, config.catalogue()
    name = config.policy
    if name == "lfu":
        inv = lfu_fill(cat, K).items()
        return [inv] * len(field_)
    if name == "pbp":
        b = _pbp_design(config.replace(policy="pbp", replications=1, seed=config.seed, warmup=0.0))
        return [pbp_sample(b, K, rng).items() for _ in range(len(field_))]
    probes = probe_points(field_.window, config.gfi_probes, rng)
    return [inv.items() for inv in gfi_place(field_, probes, cat, K)]


def run_replication(config: ExperimentConfig, seed: int) -> HitReport:
    """One realisation of stations and requests under ``config``.

    Independent child streams of ``seed`` drive the stations, the traffic,
    the static placement and the q-decisions, so the same seed always
    yields the same report.
    """
    st_rng, tr_rng, pl_rng, q_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4))
    policy = config.policy_spec
    if policy.is_static and config.traffic != "irm":
        raise ValueError("static placements need a fixed catalogue (IRM traffic)")
    field_ = _stations(config, st_rng)
    stream = _stream(config, tr_rng)
    n_objects = config.catalogue_size if config.traffic == "irm" else int(stream.objects.max(initial=-1)) + 1
    inventories = _static_inventories(config, field_, pl_rng) if policy.is_static else None
    hits, _ = replay_stream(policy, field_, stream, max(n_objects, 1), config.cache_size, q_rng, inventories)
    counted = stream.times >= config.warmup * stream.duration if config.warmup > 0 else slice(None)
    n_req = int(np.count_nonzero(counted)) if config.warmup > 0 else len(stream)
    n_hit = int(np.count_nonzero(hits[counted]))
    rep = HitReport(n_req, n_hit, seeds=[int(seed)])
    rep.per_replication.append(rep.hit_probability)
    return rep


def run_experiment(config: ExperimentConfig) -> HitReport:
    """Aggregate ``config.replications`` replications seeded ``seed + i``."""
    return HitReport.combine([run_replication(config, config.seed + i) for i in range(config.replications)])


def run_sweep(config: ExperimentConfig, variable: str, values: Sequence[float],
              policies: Optional[Sequence[str]] = None) -> list[dict]:
    """One aggregated report per (value, policy).

    Rows carry ``sweep_value, N_bs_mean, policy, p_hit_mean, ci95,
    n_replications, seed``. Point ``i`` of the sweep uses base seed
    ``config.seed + i * config.replications``; all policies at a point share
    it.
    """
    if not len(values):
        raise ValueError("sweep needs at least one value")
    if variable not in SWEEP_VARIABLES:
        raise ValueError(f"unknown sweep variable {variable!r}; choose from {sorted(set(SWEEP_VARIABLES))}")
    attr = SWEEP_VARIABLES[variable]
    policies = list(policies) if policies else [config.policy_spec.label.replace("(q=", ":").rstrip(")")]
    rows = []
    for i, value in enumerate(values):
        value = float(value)
        changes = {} if attr == "q" else {attr: value}
        if attr == "alpha":
            changes["capacity"] = None
        point = config.replace(**changes, seed=config.seed + i * config.replications)
        nbs = coverage_profile_for(point).mean
        for ptext in policies:
            pol = Policy.parse(ptext)
            q = value if attr == "q" and pol.name in ("q-lru", "q-multi-all") else pol.q
            cfg = point.replace(policy=pol.name, q=q)
            rep = run_experiment(cfg)
            rows.append({
                "sweep_value": value,
                "N_bs_mean": nbs,
                "policy": cfg.policy_spec.label,
                "p_hit_mean": rep.mean,
                "ci95": rep.ci95,
                "n_replications": rep.n_replications,
                "seed": cfg.seed,
            })
    return rows


def two_cache_simulation(policy: str, catalogue: Catalogue, capacity: int, n_requests: int,
                         seed: int = 0, warmup: float = 0.5) -> float:
    """Hit frequency of two caches that both cover the whole service area.

    Users fall uniformly on a 2 x 1 rectangle split into two equal Voronoi
    halves; ``policy`` is any per-request policy name (e.g. ``"multi-one"``).
    The first ``warmup`` fraction of requests only warms the caches.
    """
    rng = np.random.default_rng(seed)
    win = Window(2.0, 1.0)
    fld = StationField(np.array([[0.5, 0.5], [1.5, 0.5]]), 1.0, 10.0, win, "lattice")
    stream = generate_irm_stream(1.0, win, 1.0, catalogue, rng, count=n_requests)
    hits, _ = replay_stream(Policy.parse(policy), fld, stream, catalogue.size, capacity, rng)
    start = int(warmup * len(hits))
    return float(hits[start:].mean())
