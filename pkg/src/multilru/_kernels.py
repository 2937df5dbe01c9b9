"""Compiled inner loops of the simulator.

Covering sets are produced in CSR form (``offsets``, ``stations``) with each
request's stations sorted nearest first. LRU inventories live in flat
doubly-linked lists indexed by ``station * n_objects + object``.
"""
from __future__ import annotations

import numpy as np
from numba import njit

SINGLE, MULTI_ONE, MULTI_ALL, STATIC = 0, 1, 2, 3
UPDATE_NEAREST, UPDATE_CLOSEST = 0, 1
NIL = -1


def build_grid(positions: np.ndarray, cell: float, origin: tuple[float, float], shape: tuple[int, int]):
    """Bucket stations into square cells of side ``cell``; returns CSR arrays."""
    nx, ny = shape
    if len(positions):
        cx = np.clip(((positions[:, 0] - origin[0]) // cell).astype(np.int64), 0, nx - 1)
        cy = np.clip(((positions[:, 1] - origin[1]) // cell).astype(np.int64), 0, ny - 1)
        cid = cx * ny + cy
    else:
        cid = np.zeros(0, dtype=np.int64)
    order = np.argsort(cid, kind="stable").astype(np.int64)
    start = np.zeros(nx * ny + 1, dtype=np.int64)
    np.add.at(start, cid + 1, 1)
    return np.cumsum(start), order


@njit(cache=True)
def _covering_counts(px, py, sx, sy, r2, cell, ox, oy, nx, ny, cell_start, cell_items):
    n = len(px)
    counts = np.zeros(n, dtype=np.int64)
    for i in range(n):
        cx = int((px[i] - ox) // cell)
        cy = int((py[i] - oy) // cell)
        c = 0
        for gx in range(max(cx - 1, 0), min(cx + 2, nx)):
            for gy in range(max(cy - 1, 0), min(cy + 2, ny)):
                g = gx * ny + gy
                for k in range(cell_start[g], cell_start[g + 1]):
                    s = cell_items[k]
                    dx = px[i] - sx[s]
                    dy = py[i] - sy[s]
                    if dx * dx + dy * dy < r2:
                        c += 1
        counts[i] = c
    return counts


@njit(cache=True)
def _covering_fill(px, py, sx, sy, r2, cell, ox, oy, nx, ny, cell_start, cell_items, offsets, out):
    n = len(px)
    dist = np.empty(len(sx), dtype=np.float64)
    for i in range(n):
        cx = int((px[i] - ox) // cell)
        cy = int((py[i] - oy) // cell)
        base = offsets[i]
        c = 0
        for gx in range(max(cx - 1, 0), min(cx + 2, nx)):
            for gy in range(max(cy - 1, 0), min(cy + 2, ny)):
                g = gx * ny + gy
                for k in range(cell_start[g], cell_start[g + 1]):
                    s = cell_items[k]
                    dx = px[i] - sx[s]
                    dy = py[i] - sy[s]
                    d = dx * dx + dy * dy
                    if d < r2:
                        # insertion sort by (distance, index)
                        j = c
                        while j > 0 and (dist[j - 1] > d or (dist[j - 1] == d and out[base + j - 1] > s)):
                            dist[j] = dist[j - 1]
                            out[base + j] = out[base + j - 1]
                            j -= 1
                        dist[j] = d
                        out[base + j] = s
                        c += 1


def covering_csr(points: np.ndarray, positions: np.ndarray, radius: float):
    """Covering stations of every point, nearest first, as CSR arrays."""
    points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 2)
    positions = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 2)
    if len(positions) == 0 or len(points) == 0:
        return np.zeros(len(points) + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    lo = np.minimum(points.min(axis=0), positions.min(axis=0)) - radius
    hi = np.maximum(points.max(axis=0), positions.max(axis=0)) + radius
    cell = float(radius)
    nx = int((hi[0] - lo[0]) // cell) + 1
    ny = int((hi[1] - lo[1]) // cell) + 1
    start, items = build_grid(positions, cell, (lo[0], lo[1]), (nx, ny))
    px, py = points[:, 0].copy(), points[:, 1].copy()
    sx, sy = positions[:, 0].copy(), positions[:, 1].copy()
    args = (px, py, sx, sy, radius * radius, cell, lo[0], lo[1], nx, ny, start, items)
    counts = _covering_counts(*args)
    offsets = np.zeros(len(points) + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    out = np.empty(offsets[-1], dtype=np.int64)
    _covering_fill(*args, offsets, out)
    return offsets, out


@njit(cache=True)
def _touch(s, j, F, nxt, prv, head, tail):
    k = s * F + j
    if head[s] == j:
        return
    # unlink
    p = prv[k]
    q = nxt[k]
    nxt[s * F + p] = q
    if q != NIL:
        prv[s * F + q] = p
    else:
        tail[s] = p
    # push front
    prv[k] = NIL
    nxt[k] = head[s]
    prv[s * F + head[s]] = j
    head[s] = j


@njit(cache=True)
def _insert(s, j, F, K, nxt, prv, head, tail, size, present):
    k = s * F + j
    present[k] = True
    prv[k] = NIL
    nxt[k] = head[s]
    if head[s] != NIL:
        prv[s * F + head[s]] = j
    else:
        tail[s] = j
    head[s] = j
    size[s] += 1
    if size[s] > K:
        t = tail[s]
        kt = s * F + t
        present[kt] = False
        p = prv[kt]
        tail[s] = p
        nxt[s * F + p] = NIL
        prv[kt] = NIL
        size[s] -= 1


@njit(cache=True)
def replay(mode, q, one_update, objects, offsets, stations, uniforms, n_stations, F, K, present,
           nxt, prv, head, tail, size, hits):
    """Replay requests against the caches; ``hits[i]`` records request ``i``.

    ``present``/``nxt``/``prv``/``head``/``tail``/``size`` hold the cache
    state and are updated in place, so a run can be resumed. ``uniforms``
    is aligned with ``stations`` and drives the q-insertions.
    """
    n = len(objects)
    for i in range(n):
        a = offsets[i]
        b = offsets[i + 1]
        if a == b:
            hits[i] = False
            continue
        j = objects[i]
        if mode == SINGLE:
            s = stations[a]
            if present[s * F + j]:
                hits[i] = True
                _touch(s, j, F, nxt, prv, head, tail)
            else:
                hits[i] = False
                if uniforms[a] < q:
                    _insert(s, j, F, K, nxt, prv, head, tail, size, present)
            continue
        first = -1
        for k in range(a, b):
            if present[stations[k] * F + j]:
                first = k
                break
        hit = first >= 0
        hits[i] = hit
        if mode == STATIC:
            continue
        if mode == MULTI_ONE:
            if hit:
                if one_update == UPDATE_NEAREST:
                    _touch(stations[first], j, F, nxt, prv, head, tail)
                elif first == a:
                    _touch(stations[a], j, F, nxt, prv, head, tail)
            else:
                _insert(stations[a], j, F, K, nxt, prv, head, tail, size, present)
            continue
        # MULTI_ALL with insertion probability q
        if hit:
            for k in range(first, b):
                s = stations[k]
                if present[s * F + j]:
                    _touch(s, j, F, nxt, prv, head, tail)
        else:
            for k in range(a, b):
                if uniforms[k] < q:
                    _insert(stations[k], j, F, K, nxt, prv, head, tail, size, present)


class CacheState:
    """Flat linked-list LRU state for ``n_stations`` caches of size ``K``."""

    def __init__(self, n_stations: int, n_objects: int, capacity: int):
        self.n_stations, self.n_objects, self.capacity = n_stations, n_objects, capacity
        total = max(n_stations * n_objects, 1)
        self.present = np.zeros(total, dtype=np.bool_)
        self.nxt = np.full(total, NIL, dtype=np.int64)
        self.prv = np.full(total, NIL, dtype=np.int64)
        self.head = np.full(max(n_stations, 1), NIL, dtype=np.int64)
        self.tail = np.full(max(n_stations, 1), NIL, dtype=np.int64)
        self.size = np.zeros(max(n_stations, 1), dtype=np.int64)

    def load(self, station: int, items_mru_first) -> None:
        """Fill an empty cache with ``items_mru_first``."""
        for j in reversed(list(items_mru_first)):
            _insert(station, int(j), self.n_objects, self.capacity, self.nxt, self.prv, self.head,
                    self.tail, self.size, self.present)

    def items(self, station: int) -> list[int]:
        out = []
        j = self.head[station]
        while j != NIL:
            out.append(int(j))
            j = self.nxt[station * self.n_objects + j]
        return out

    def run(self, mode, q, one_update, objects, offsets, stations, uniforms) -> np.ndarray:
        hits = np.zeros(len(objects), dtype=np.bool_)
        replay(mode, float(q), one_update, np.ascontiguousarray(objects, dtype=np.int64), offsets, stations,
               uniforms, self.n_stations, self.n_objects, self.capacity, self.present, self.nxt, self.prv,
               self.head, self.tail, self.size, hits)
        return hits
