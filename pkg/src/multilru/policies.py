"""Cache inventories and cache-management policies.

Two families are covered. Per-request policies (single-LRU, q-LRU and the
spatial multi-LRU variants) mutate inventories as requests arrive. Static
popularity-based placements (LFU, PBP, GFI) fill caches once and never change
them.

This module is the reference implementation of the request semantics; the
compiled simulation kernel in :mod:`multilru._kernels` is checked against it.
"""
from __future__ import annotations

import heapq
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .geometry import CoverageProfile, StationField
from .traffic import Catalogue

__all__ = [
    "CacheInventory",
    "Policy",
    "HitOutcome",
    "POLICY_NAMES",
    "lru_touch",
    "lru_insert",
    "handle_request",
    "lfu_fill",
    "pbp_solve",
    "pbp_sample",
    "gfi_place",
    "placement_objective",
    "hit_upper_bound",
]


class CacheInventory:
    """LRU-ordered inventory of at most ``capacity`` object ids.

    Iteration and :meth:`items` run from the MRU to the LRU position.
    """

    def __init__(self, capacity: int, items: Iterable[int] = ()):
        if capacity < 1:
            raise ValueError("cache capacity must be >= 1")
        self.capacity = int(capacity)
        self._od: OrderedDict[int, None] = OrderedDict()
        # MRU is kept at the end of the OrderedDict
        for obj in reversed(list(items)):
            if obj in self._od:
                raise ValueError(f"duplicate object {obj} in inventory")
            self._od[obj] = None
        if len(self._od) > self.capacity:
            raise ValueError("inventory exceeds capacity")

    def __contains__(self, obj) -> bool:
        return obj in self._od

    def __len__(self) -> int:
        return len(self._od)

    def __iter__(self):
        return reversed(self._od)

    def items(self) -> list[int]:
        return list(reversed(self._od))

    def __eq__(self, other) -> bool:
        if not isinstance(other, CacheInventory):
            return NotImplemented
        return self.capacity == other.capacity and self.items() == other.items()

    def __repr__(self) -> str:
        return f"CacheInventory(K={self.capacity}, {self.items()})"

    def copy(self) -> "CacheInventory":
        return CacheInventory(self.capacity, self.items())


def lru_touch(inv: CacheInventory, obj) -> bool:
    """Move ``obj`` to the MRU position if present; return whether it was."""
    if obj in inv._od:
        inv._od.move_to_end(obj)
        return True
    return False


def lru_insert(inv: CacheInventory, obj):
    """Insert a missing ``obj`` at MRU, returning the evicted LRU object if any."""
    if obj in inv._od:
        raise ValueError(f"object {obj} already cached; touch it instead")
    inv._od[obj] = None
    if len(inv._od) > inv.capacity:
        evicted, _ = inv._od.popitem(last=False)
        return evicted
    return None


POLICY_NAMES = ("single-lru", "q-lru", "lfu", "multi-one", "multi-all", "q-multi-all", "pbp", "gfi")
STATIC_POLICIES = ("lfu", "pbp", "gfi")


@dataclass(frozen=True)
class Policy:
    """A cache-management policy.

    ``q`` is the insertion probability of the q-variants. ``one_update``
    selects which holding cache multi-LRU-One refreshes on a hit:
    ``"nearest"`` is the nearest covering cache that holds the object,
    ``"closest"`` refreshes the user's closest station only, and only when it
    holds the object.
    """

    name: str
    q: float = 1.0
    one_update: str = "closest"

    def __post_init__(self):
        if self.name not in POLICY_NAMES:
            raise ValueError(f"unknown policy {self.name!r}; choose from {', '.join(POLICY_NAMES)}")
        if not 0 < self.q <= 1:
            raise ValueError(f"q must lie in (0, 1], got {self.q}")
        if self.name not in ("q-lru", "q-multi-all") and self.q != 1:
            raise ValueError(f"policy {self.name} takes no q parameter")
        if self.one_update not in ("nearest", "closest"):
            raise ValueError(f"unknown multi-LRU-One update rule {self.one_update!r}")

    @property
    def is_static(self) -> bool:
        return self.name in STATIC_POLICIES

    @property
    def label(self) -> str:
        return f"{self.name}(q={self.q:g})" if self.name in ("q-lru", "q-multi-all") else self.name

    @classmethod
    def parse(cls, text: str) -> "Policy":
        """Parse ``name`` or ``name:q`` (e.g. ``q-multi-all:0.5``)."""
        name, _, q = text.partition(":")
        return cls(name.strip(), float(q) if q else 1.0)


@dataclass
class HitOutcome:
    hit: bool
    serving_station: Optional[int] = None
    insertions: list = field(default_factory=list)
    evictions: list = field(default_factory=list)
    updated: list = field(default_factory=list)


def _draw(rng, q: float) -> bool:
    return q >= 1.0 or rng.random() < q


def handle_request(policy: Policy, caches: Mapping[int, CacheInventory] | Sequence[CacheInventory],
                   covering: Sequence[int], closest_overall: Optional[int], obj, rng=None) -> HitOutcome:
    """Apply one request for ``obj`` from a user covered by ``covering``.

    ``covering`` lists the covering stations nearest first. The single-LRU
    family only talks to the closest covering station; the multi-LRU family
    and the static placements serve the user from any covering cache.
    ``rng`` needs a ``random()`` method and is only consulted by the
    q-variants, once per insertion candidate in ``covering`` order.
    """
    known = caches.keys() if isinstance(caches, Mapping) else range(len(caches))
    for s in covering:
        if s not in known:
            raise ValueError(f"unknown station index {s}")
    if not covering:
        return HitOutcome(False)
    name = policy.name

    if name in ("single-lru", "q-lru"):
        s = covering[0]
        inv = caches[s]
        if lru_touch(inv, obj):
            return HitOutcome(True, s, updated=[s])
        out = HitOutcome(False)
        if _draw(rng, policy.q):
            ev = lru_insert(inv, obj)
            out.insertions.append(s)
            if ev is not None:
                out.evictions.append((s, ev))
        return out

    holders = [s for s in covering if obj in caches[s]]

    if policy.is_static:
        return HitOutcome(bool(holders), holders[0] if holders else None)

    if name == "multi-one":
        if holders:
            if policy.one_update == "nearest":
                target = holders[0]
            else:
                target = covering[0] if covering[0] in holders else None
            if target is not None:
                lru_touch(caches[target], obj)
            return HitOutcome(True, holders[0], updated=[] if target is None else [target])
        s = covering[0]
        out = HitOutcome(False, insertions=[s])
        ev = lru_insert(caches[s], obj)
        if ev is not None:
            out.evictions.append((s, ev))
        return out

    # multi-all and q-multi-all
    if holders:
        for s in holders:
            lru_touch(caches[s], obj)
        return HitOutcome(True, holders[0], updated=list(holders))
    out = HitOutcome(False)
    for s in covering:
        if _draw(rng, policy.q):
            ev = lru_insert(caches[s], obj)
            out.insertions.append(s)
            if ev is not None:
                out.evictions.append((s, ev))
    return out


def lfu_fill(catalogue: Catalogue, capacity: int) -> CacheInventory:
    """Static inventory holding the ``capacity`` most popular objects."""
    k = min(int(capacity), catalogue.size)
    return CacheInventory(capacity, range(k))


class _Slope:
    """``G(b) = sum_m m p_m (1-b)^(m-1)``, the marginal coverage gain of ``b``.

    ``G`` decreases from the mean coverage at ``b = 0`` to ``p_1`` at ``b = 1``.
    """

    def __init__(self, profile: CoverageProfile):
        pmf = profile.pmf
        m = np.arange(len(pmf))
        keep = (m >= 1) & (pmf > 0)
        if not keep.any():
            raise ValueError("profile has no coverage; every placement is useless")
        self.m = m[keep].astype(float)
        self.w = (m * pmf)[keep]
        grid = np.linspace(0.0, 1.0, 20001)
        self._grid = grid
        self._vals = self(grid)

    def __call__(self, b):
        x = 1.0 - np.asarray(b, dtype=float)
        return (self.w * x[..., None] ** (self.m - 1)).sum(axis=-1)

    def deriv(self, b):
        x = 1.0 - np.asarray(b, dtype=float)
        mm = self.m[self.m >= 2]
        ww = self.w[self.m >= 2]
        return -(ww * (mm - 1) * x[..., None] ** (mm - 2)).sum(axis=-1)

    def inverse(self, t):
        # table lookup on the decreasing curve, then Newton polishing
        b = np.interp(-t, -self._vals, self._grid)
        for _ in range(4):
            d = self.deriv(b)
            step = np.where(d < 0, (self(b) - t) / np.where(d < 0, d, -1.0), 0.0)
            b = np.clip(b - step, 0.0, 1.0)
        return b


def pbp_solve(catalogue: Catalogue, profile: CoverageProfile, capacity: int,
              tol: float = 1e-13, return_multiplier: bool = False):
    """Placement probabilities maximising the expected hit probability.

    Solves ``max sum_j a_j (1 - sum_m p_m (1 - b_j)^m)`` subject to
    ``sum_j b_j = capacity`` and ``0 <= b_j <= 1`` by bisection on the
    Lagrange multiplier of the budget constraint. Where the objective is
    flat in some coordinates (single coverage, tied popularities) the
    leftover budget is shared evenly among the tied objects.
    """
    a = catalogue.popularities
    F = len(a)
    K = int(capacity)
    if K < 0:
        raise ValueError("capacity must be non-negative")
    if K >= F:
        b = np.ones(F)
        return (b, 0.0) if return_multiplier else b
    G = _Slope(profile)
    g0, g1 = float(G(0.0)), float(G(1.0))

    def b_of(mu):
        # coordinate-wise maximiser of a_j * f(b) - mu * b with f concave
        target = mu / a
        b = np.where(target <= g1, 1.0, 0.0)
        mid = (target > g1) & (target < g0)
        if mid.any():
            b[mid] = G.inverse(target[mid])
        return b

    lo, hi = 0.0, float(a.max() * g0) * (1 + 1e-12)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if b_of(mid).sum() > K:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    b_hi, b_lo = b_of(lo), b_of(hi)
    gap = b_hi - b_lo
    rest = K - b_lo.sum()
    b = b_lo + (gap * (rest / gap.sum()) if gap.sum() > 0 else 0.0)
    b = np.clip(b, 0.0, 1.0)
    mu = 0.5 * (lo + hi)
    return (b, mu) if return_multiplier else b


def pbp_kkt_residual(catalogue: Catalogue, profile: CoverageProfile, b: np.ndarray, mu: float) -> float:
    """Largest violation of the stationarity/complementarity conditions."""
    a = catalogue.popularities
    m = np.arange(len(profile.pmf))
    grad = a * ((m * profile.pmf)[None, :] * (1.0 - b[:, None]) ** np.maximum(m - 1, 0)[None, :]).sum(axis=1)
    res = np.zeros_like(b)
    interior = (b > 1e-9) & (b < 1 - 1e-9)
    res[interior] = np.abs(grad[interior] - mu)
    res[b <= 1e-9] = np.maximum(grad[b <= 1e-9] - mu, 0.0)
    res[b >= 1 - 1e-9] = np.maximum(mu - grad[b >= 1 - 1e-9], 0.0)
    return float(res.max() / max(mu, 1e-300))


def pbp_sample(probabilities, capacity: int, rng: np.random.Generator) -> CacheInventory:
    """Draw ``capacity`` distinct objects with inclusion probabilities ``b``.

    Lays the ``b_j`` end to end on a circle of circumference ``capacity``
    and picks the objects hit by ``u, u+1, ..., u+capacity-1`` for a single
    uniform offset ``u``.
    """
    b = np.asarray(probabilities, dtype=float)
    K = int(capacity)
    if np.any(b < -1e-12) or np.any(b > 1 + 1e-12):
        raise ValueError("inclusion probabilities must lie in [0, 1]")
    if abs(b.sum() - K) > 1e-6 * max(K, 1):
        raise ValueError(f"inclusion probabilities sum to {b.sum()}, expected {K}")
    cum = np.cumsum(np.clip(b, 0.0, 1.0))
    cum *= K / cum[-1]
    u = rng.random()
    picks = np.searchsorted(cum, u + np.arange(K), side="right")
    picks = np.minimum(picks, len(b) - 1)
    if len(np.unique(picks)) != K:
        raise RuntimeError("ring sampling produced a duplicate; probabilities are not a valid design")
    return CacheInventory(K, [int(j) for j in picks])


def _probe_cover(field: StationField, probes: np.ndarray) -> list[np.ndarray]:
    r2 = field.coverage_radius ** 2
    out = []
    for x, y in field.positions:
        d2 = (probes[:, 0] - x) ** 2 + (probes[:, 1] - y) ** 2
        out.append(np.flatnonzero(d2 < r2))
    return out


def gfi_place(field: StationField, probe_points, catalogue: Catalogue, capacity: int) -> list[CacheInventory]:
    """Greedy full-information placement.

    Repeatedly adds the (station, object) pair with the largest gain in
    ``sum over probes of a_j * 1{j newly reachable at the probe}`` until
    every cache is full. Uses lazy evaluation, which is exact here because
    gains only shrink as objects get placed. Ties go to the lower
    (station, object) pair.
    """
    probes = np.asarray(probe_points, dtype=float).reshape(-1, 2)
    if len(probes) == 0:
        raise ValueError("gfi_place needs at least one probe point")
    a = catalogue.popularities
    F, K, S = len(a), min(int(capacity), catalogue.size), len(field)
    cover = _probe_cover(field, probes)
    ncov = np.array([len(c) for c in cover], dtype=float)
    reach: dict[int, np.ndarray] = {}
    chosen: list[list[int]] = [[] for _ in range(S)]
    in_cache = [set() for _ in range(S)]
    frontier = np.zeros(S, dtype=np.int64)
    heap = [(-a[0] * ncov[s], s, 0) for s in range(S)]
    heapq.heapify(heap)
    full = 0
    while heap and full < S:
        neg, s, j = heapq.heappop(heap)
        if j == frontier[s] and j + 1 < F:
            frontier[s] = j + 1
            heapq.heappush(heap, (-a[j + 1] * ncov[s], s, j + 1))
        if len(chosen[s]) >= K or j in in_cache[s]:
            continue
        r = reach.get(j)
        cnt = ncov[s] - (np.count_nonzero(r[cover[s]]) if r is not None else 0)
        gain = a[j] * cnt
        if gain != -neg:
            heapq.heappush(heap, (-gain, s, j))
            continue
        chosen[s].append(j)
        in_cache[s].add(j)
        if r is None:
            r = reach[j] = np.zeros(len(probes), dtype=bool)
        r[cover[s]] = True
        if len(chosen[s]) == K:
            full += 1
    return [CacheInventory(K, sorted(c)) for c in chosen]


def placement_objective(field: StationField, probe_points, catalogue: Catalogue,
                        inventories: Sequence[CacheInventory]) -> float:
    """Mean hit probability of static inventories over the probe points."""
    probes = np.asarray(probe_points, dtype=float).reshape(-1, 2)
    a = catalogue.popularities
    cover = _probe_cover(field, probes)
    reach: dict[int, np.ndarray] = {}
    for s, inv in enumerate(inventories):
        for j in inv:
            r = reach.setdefault(j, np.zeros(len(probes), dtype=bool))
            r[cover[s]] = True
    total = sum(a[j] * r.sum() for j, r in reach.items())
    return float(total / len(probes))


def hit_upper_bound(catalogue: Catalogue, profile: CoverageProfile, capacity: int) -> float:
    """``sum_m p_m sum_{j <= mK} a_j``: every covered user sees ``mK`` distinct top objects."""
    cum = np.concatenate([[0.0], catalogue.cumulative()])
    F = catalogue.size
    m = np.arange(len(profile.pmf))
    idx = np.minimum(m * int(capacity), F)
    return float(min(1.0, np.dot(profile.pmf[1:], cum[idx[1:]])))
