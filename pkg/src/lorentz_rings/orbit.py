"""The deterministic map F, its orbits, excursions and crossing censuses.

Two routes are provided for most quantities: a literal per-site route
(:func:`step`, :func:`excursions`) and a vectorized route over the whole phase
space (:class:`RingMap`, :func:`crossing_census`).  Tests hold them equal.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from .lattice import (Dims, Site, check_site, decode, encode, horizontal_coords, horizontal_index, neighbors,
                      site_layers, torus_distance_array)
from .scatter import ScattererField, jump_coefficient, keyed_edge_bits, local_partner

#: Proximity radius of loop and intersection times.
PROXIMITY_RADIUS = 3

KINDS = ("LL", "RR", "LR", "RL")


# -- single-site map -------------------------------------------------------------
def step(field: ScattererField, x: Site) -> Site:
    """F(x): jump along the unique firing coefficient, else move up the ring."""
    dims = field.dims
    check_site(x, dims)
    k, i = x
    fired = [j for j in neighbors(i, dims, "slab1") if jump_coefficient(field, k, i, j)]
    if len(fired) > 1:
        raise RuntimeError(f"{len(fired)} jump coefficients fire at {x}")
    return Site((k + 1) % dims.N, fired[0] if fired else tuple(i))


def inverse_step(field: ScattererField, x: Site) -> Site:
    """F^{-1}(x); the level below ``x`` acts as an involution on rings."""
    dims = field.dims
    check_site(x, dims)
    k = (x.k - 1) % dims.N
    fired = [j for j in neighbors(x.i, dims, "slab1") if jump_coefficient(field, k, x.i, j)]
    return Site(k, fired[0] if fired else tuple(x.i))


def delta(field: ScattererField, x: Site, l: int) -> int:
    """+1 / -1 when F(x) crosses interface ``l`` (layers l, l+1) up / down."""
    if not 0 <= l <= field.dims.N - 2:
        raise ValueError(f"interface {l} out of range [0, {field.dims.N - 2}]")
    y = step(field, x)
    a, b = x.i[-1], y.i[-1]
    if a == l and b == l + 1:
        return 1
    if a == l + 1 and b == l:
        return -1
    return 0


# -- whole-field permutation ---------------------------------------------------------
@dataclass(eq=False)
class RingMap:
    """F and F^{-1} as permutations of site indices, plus per-site crossing data."""

    dims: Dims
    forward: np.ndarray
    backward: np.ndarray
    layer: np.ndarray
    cross_sign: np.ndarray = dc_field(init=False)
    cross_iface: np.ndarray = dc_field(init=False)

    def __post_init__(self):
        jump = self.layer[self.forward] - self.layer
        self.cross_sign = jump.astype(np.int8)
        self.cross_iface = np.where(jump == 1, self.layer, np.where(jump == -1, self.layer - 1, -1))

    @classmethod
    def from_partners(cls, dims: Dims, partners: np.ndarray) -> "RingMap":
        nh = dims.n_horizontal
        k = np.repeat(np.arange(dims.N), nh)
        forward = ((k + 1) % dims.N) * nh + partners.reshape(-1)
        backward = np.empty_like(forward)
        backward[forward] = np.arange(forward.size)
        return cls(dims, forward, backward, site_layers(dims))

    @classmethod
    def from_field(cls, field: ScattererField) -> "RingMap":
        cached = getattr(field, "_ringmap", None)
        if cached is None:
            cached = cls.from_partners(field.dims, field.partner_table())
            field._ringmap = cached
        return cached

    def is_permutation(self) -> bool:
        seen = np.zeros(self.forward.size, dtype=bool)
        seen[self.forward] = True
        return bool(seen.all())


def ring_map(field: ScattererField) -> RingMap:
    return RingMap.from_field(field)


def _as_map(obj) -> RingMap:
    return obj if isinstance(obj, RingMap) else RingMap.from_field(obj)


# -- orbits and excursions -------------------------------------------------------------
@dataclass
class OrbitRecord:
    start: Site
    period: int
    indices: np.ndarray
    touches_boundary: bool
    crossing_profile: dict[int, list[tuple[int, int]]]
    dims: Dims

    @property
    def sites(self) -> list[Site]:
        return [decode(int(v), self.dims) for v in self.indices]


@dataclass
class Excursion:
    start: Site
    length: int
    kind: str
    indices: np.ndarray
    crossing_times: dict[int, list[tuple[int, int]]]


def _profile(rmap: RingMap, idx: np.ndarray) -> dict[int, list[tuple[int, int]]]:
    prof: dict[int, list[tuple[int, int]]] = {}
    for t in np.flatnonzero(rmap.cross_sign[idx]):
        prof.setdefault(int(rmap.cross_iface[idx[t]]), []).append((int(t), int(rmap.cross_sign[idx[t]])))
    return prof


def _trace_cycle(rmap: RingMap, start: int) -> np.ndarray:
    limit = rmap.forward.size + 1
    out = [start]
    y = int(rmap.forward[start])
    while y != start:
        out.append(y)
        y = int(rmap.forward[y])
        if len(out) > limit:
            raise RuntimeError(f"no return to {start} within {limit} steps: F is not a bijection")
    return np.asarray(out, dtype=np.int64)


def orbit(field_or_map, x: Site) -> OrbitRecord:
    """Orbit of ``x`` up to its first return; period is the return time."""
    rmap = _as_map(field_or_map)
    check_site(x, rmap.dims)
    idx = _trace_cycle(rmap, encode(x, rmap.dims))
    layers = rmap.layer[idx]
    touches = bool(((layers == 0) | (layers == rmap.dims.N - 1)).any())
    return OrbitRecord(x, len(idx), idx, touches, _profile(rmap, idx), rmap.dims)


def exit_time(field_or_map, x: Site) -> int | None:
    """Smallest t >= 1 with F^t(x) on the boundary; None for internal orbits."""
    rmap = _as_map(field_or_map)
    start = encode(x, rmap.dims)
    N = rmap.dims.N
    y, t = int(rmap.forward[start]), 1
    while True:
        if rmap.layer[y] in (0, N - 1):
            return t
        if y == start:
            return None
        y, t = int(rmap.forward[y]), t + 1


def _kind(dims: Dims, start: int, end: int) -> str:
    a = "L" if start % dims.N == 0 else "R"
    b = "L" if end % dims.N == 0 else "R"
    return a + b


def excursions(field_or_map) -> tuple[list[Excursion], list[OrbitRecord]]:
    """Partition the phase space into excursions and internal orbits.

    Sweeps site indices in ascending order with a visited bitmap.
    """
    rmap = _as_map(field_or_map)
    dims = rmap.dims
    N = dims.N
    visited = np.zeros(dims.n_sites, dtype=bool)
    is_b = (rmap.layer == 0) | (rmap.layer == N - 1)
    out: list[Excursion] = []
    for x in np.flatnonzero(is_b):
        idx = [int(x)]
        y = int(rmap.forward[x])
        while not is_b[y]:
            idx.append(y)
            y = int(rmap.forward[y])
        idx = np.asarray(idx, dtype=np.int64)
        visited[idx] = True
        out.append(Excursion(decode(int(x), dims), len(idx), _kind(dims, int(x), y), idx, _profile(rmap, idx)))
    internal = []
    for x in range(dims.n_sites):
        if not visited[x]:
            idx = _trace_cycle(rmap, x)
            visited[idx] = True
            internal.append(OrbitRecord(decode(x, dims), len(idx), idx, False, _profile(rmap, idx), dims))
    return out, internal


def all_orbits(field_or_map) -> list[np.ndarray]:
    """Cycle decomposition of F as index arrays, in order of smallest start."""
    rmap = _as_map(field_or_map)
    visited = np.zeros(rmap.dims.n_sites, dtype=bool)
    cycles = []
    for x in range(rmap.dims.n_sites):
        if not visited[x]:
            idx = _trace_cycle(rmap, x)
            visited[idx] = True
            cycles.append(idx)
    return cycles


# -- vectorized excursion structure ------------------------------------------------------
@dataclass(eq=False)
class Backtrack:
    """Position of every site within its excursion.

    ``start[y]`` is the boundary site opening the excursion containing ``y``
    (-1 on internal orbits) and ``dist[y]`` the number of steps from it.
    ``exit_target[x]`` / ``exit_time[x]`` give, for boundary ``x``, the next
    boundary site and t_B(x); they are -1 elsewhere.
    """

    start: np.ndarray
    dist: np.ndarray
    exit_target: np.ndarray
    exit_time: np.ndarray


def backtrack(field_or_map) -> Backtrack:
    rmap = _as_map(field_or_map)
    n = rmap.dims.n_sites
    N = rmap.dims.N
    is_b = (rmap.layer == 0) | (rmap.layer == N - 1)
    ptr = np.where(is_b, np.arange(n), rmap.backward)
    dist = np.where(is_b, 0, 1).astype(np.int64)
    for _ in range(int(np.ceil(np.log2(max(n, 2)))) + 1):
        dist = dist + dist[ptr]
        ptr = ptr[ptr]
        np.minimum(dist, n + 1, out=dist)
    start = np.where(is_b[ptr], ptr, -1)
    dist = np.where(start >= 0, dist, -1)

    exit_target = np.full(n, -1, dtype=np.int64)
    exit_time = np.full(n, -1, dtype=np.int64)
    last = np.flatnonzero((start >= 0) & is_b[rmap.forward])
    exit_target[start[last]] = rmap.forward[last]
    exit_time[start[last]] = dist[last] + 1
    return Backtrack(start, dist, exit_target, exit_time)


@dataclass(eq=False)
class CrossingCensus:
    """Crossing numbers of one field.

    ``last_cross[l, b]`` is the largest excursion time at which the excursion
    opened by ``boundary[b]`` crosses interface ``l`` (-1 if never).
    """

    dims: Dims
    n_cross: int
    s_minus: np.ndarray
    s_plus: np.ndarray
    boundary: np.ndarray
    side: np.ndarray
    last_cross: np.ndarray

    def counts(self, l: int, t: int) -> tuple[int, int]:
        """(N_-(l, t), N_+(l, t)): excursions from B_-/B_+ crossing l after t."""
        late = self.last_cross[l] > t
        return int((late & (self.side < 0)).sum()), int((late & (self.side > 0)).sum())

    def to_record(self, times: Sequence[int] = ()) -> dict:
        table = {str(l): {str(t): list(self.counts(l, t)) for t in times}
                 for l in range(self.dims.N - 1)}
        return {
            "d": self.dims.d,
            "N": self.dims.N,
            "n_cross": self.n_cross,
            "n_minus": int(self.s_minus.size),
            "n_plus": int(self.s_plus.size),
            "N_pm_table": table,
        }


def crossing_census(field_or_map, bt: Backtrack | None = None) -> CrossingCensus:
    rmap = _as_map(field_or_map)
    dims = rmap.dims
    N = dims.N
    bt = backtrack(rmap) if bt is None else bt
    layer = rmap.layer
    boundary = np.flatnonzero((layer == 0) | (layer == N - 1))
    side = np.where(layer[boundary] == 0, -1, 1).astype(np.int8)
    tgt = bt.exit_target[boundary]
    tgt_layer = np.where(tgt >= 0, layer[np.maximum(tgt, 0)], -1)
    s_minus = boundary[(side < 0) & (tgt_layer == N - 1)]
    s_plus = boundary[(side > 0) & (tgt_layer == 0)]
    if s_minus.size != s_plus.size:
        raise RuntimeError(f"crossing imbalance: {s_minus.size} vs {s_plus.size}")

    pos = np.full(dims.n_sites, -1, dtype=np.int64)
    pos[boundary] = np.arange(boundary.size)
    last = np.full((max(N - 1, 1), boundary.size), -1, dtype=np.int64)
    ys = np.flatnonzero((rmap.cross_sign != 0) & (bt.start >= 0))
    np.maximum.at(last, (rmap.cross_iface[ys], pos[bt.start[ys]]), bt.dist[ys])
    return CrossingCensus(dims, int(s_minus.size), s_minus, s_plus, boundary, side, last[: N - 1])


def census_from_excursions(dims: Dims, excs: list[Excursion]) -> CrossingCensus:
    """Same census built from the literal excursion list (reference route)."""
    N = dims.N
    excs = sorted(excs, key=lambda e: encode(e.start, dims))
    boundary = np.array([encode(e.start, dims) for e in excs], dtype=np.int64)
    side = np.array([-1 if e.start.i[-1] == 0 else 1 for e in excs], dtype=np.int8)
    last = np.full((N - 1, len(excs)), -1, dtype=np.int64)
    for b, e in enumerate(excs):
        for l, crossings in e.crossing_times.items():
            last[l, b] = max(t for t, _ in crossings)
    s_minus = np.array([encode(e.start, dims) for e in excs if e.kind == "LR"], dtype=np.int64)
    s_plus = np.array([encode(e.start, dims) for e in excs if e.kind == "RL"], dtype=np.int64)
    return CrossingCensus(dims, len(s_minus), s_minus, s_plus, boundary, side, last)


# -- loop and intersection times ------------------------------------------------------------
def _stepper(field_or_map) -> tuple[Dims, Callable[[int, np.ndarray], tuple[int, np.ndarray]]]:
    if isinstance(field_or_map, RingMap) or field_or_map.storage == "dense":
        rmap = _as_map(field_or_map)
        dims = rmap.dims

        def advance(k, i):
            y = int(rmap.forward[k * dims.n_horizontal + horizontal_index(i, dims)])
            k2, h = divmod(y, dims.n_horizontal)
            return k2, horizontal_coords(h, dims)

        return dims, advance
    fld = field_or_map

    def advance(k, i):
        return (k + 1) % fld.dims.N, fld.local_partner(np.array([k]), np.array([i]))[0]

    return fld.dims, advance


def orbit_loop_time(field_or_map, x: Site, horizon: int | None = None,
                    radius: int = PROXIMITY_RADIUS) -> int | None:
    """First t > 0 with H_t within ``radius`` of an earlier H_s at the same level."""
    dims, advance = _stepper(field_or_map)
    N = dims.N
    horizon = dims.n_sites if horizon is None else horizon
    history: dict[int, list[np.ndarray]] = {x.k: [np.asarray(x.i)]}
    k, i = x.k, np.asarray(x.i)
    for t in range(1, horizon + 1):
        k, i = advance(k, i)
        seen = history.setdefault(k, [])
        if seen and torus_distance_array(np.asarray(seen), i, N).min() <= radius:
            return t
        seen.append(i)
    return None


def orbit_intersection_time(field_or_map, x: Site, y: Site, horizon: int | None = None,
                            radius: int = PROXIMITY_RADIUS) -> int | None:
    """min of the two one-sided first-proximity times t_I(x->y), t_I(y->x)."""
    if x == y:
        raise ValueError("intersection time needs distinct starting points")
    dims, advance = _stepper(field_or_map)
    N = dims.N
    horizon = dims.n_sites if horizon is None else horizon
    hist = ({x.k: [np.asarray(x.i)]}, {y.k: [np.asarray(y.i)]})
    cur = [(x.k, np.asarray(x.i)), (y.k, np.asarray(y.i))]
    for t in range(1, horizon + 1):
        cur = [advance(*c) for c in cur]
        for me in (0, 1):
            k, i = cur[me]
            other = hist[1 - me].get(k)
            if other and torus_distance_array(np.asarray(other), i, N).min() <= radius:
                return t
        for me in (0, 1):
            k, i = cur[me]
            hist[me].setdefault(k, []).append(i)
    return None


# -- batched tracks over many keyed fields ---------------------------------------------------
@dataclass
class KeyedTracks:
    """Horizontal tracks of one orbit per field, row b in field ``seeds[b]``.

    ``positions[t, b]`` is H_t of row b.  ``stop[b]`` is the truncation time
    (loop or intersection time, whichever applies) or -1 if none occurred
    within the horizon; rows stop advancing once truncated.
    """

    dims: Dims
    k0: np.ndarray
    positions: np.ndarray
    stop: np.ndarray

    def length(self) -> np.ndarray:
        """Number of recorded steps per row."""
        return np.where(self.stop >= 0, self.stop, self.positions.shape[0] - 1)


def _near_earlier(hist: list[np.ndarray], t: int, offset: int, N: int, rows: np.ndarray,
                  cur: np.ndarray, radius: int) -> np.ndarray:
    """Rows whose ``cur`` is within ``radius`` of hist[s], s < t, s = t + offset mod N."""
    first = (t - 1) - ((t - 1 - (t + offset)) % N)
    times = range(first, -1, -N)
    if not len(times):
        return np.zeros(rows.size, dtype=bool)
    back = np.stack([hist[s][rows] for s in times])
    return (torus_distance_array(back, cur[None], N) <= radius).any(axis=0)


def keyed_orbit_tracks(dims: Dims, mu: float, seeds, k0, i0, horizon: int,
                       radius: int = PROXIMITY_RADIUS) -> KeyedTracks:
    """Follow (k0[b], i0[b]) in keyed field ``seeds[b]`` until its loop time t_L."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    B, N = seeds.size, dims.N
    k = np.broadcast_to(np.asarray(k0, dtype=np.int64), (B,)).copy()
    hist = [np.broadcast_to(np.asarray(i0, dtype=np.int64), (B, dims.d)).copy()]
    stop = np.full(B, -1, dtype=np.int64)
    active = np.arange(B)
    k_start = k.copy()
    for t in range(1, horizon + 1):
        if not active.size:
            break
        new = hist[-1].copy()
        new[active] = local_partner(keyed_edge_bits(dims, mu, seeds[active]), dims, k[active], new[active])
        k = (k + 1) % N
        hist.append(new)
        hit = _near_earlier(hist, t, 0, N, active, new[active], radius)
        stop[active[hit]] = t
        active = active[~hit]
    return KeyedTracks(dims, k_start, np.stack(hist), stop)


def keyed_orbit_pairs(dims: Dims, mu: float, seeds, x: Site, y: Site, horizon: int,
                      radius: int = PROXIMITY_RADIUS) -> tuple[KeyedTracks, KeyedTracks]:
    """Two orbits per field, both truncated at min(t_I(x, y), t_L(x), t_L(y))."""
    if x == y:
        raise ValueError("intersection time needs distinct starting points")
    seeds = np.asarray(seeds, dtype=np.uint64)
    B, N = seeds.size, dims.N
    both = np.concatenate([seeds, seeds])
    k = np.concatenate([np.full(B, x.k), np.full(B, y.k)]).astype(np.int64)
    hist = [np.concatenate([np.tile(np.asarray(x.i, dtype=np.int64), (B, 1)),
                            np.tile(np.asarray(y.i, dtype=np.int64), (B, 1))])]
    stop = np.full(B, -1, dtype=np.int64)
    active = np.arange(B)
    shift = (x.k - y.k) % N  # H_t(x) and H_s(y) share a level when s = t + shift mod N
    for t in range(1, horizon + 1):
        if not active.size:
            break
        rows = np.concatenate([active, active + B])
        new = hist[-1].copy()
        new[rows] = local_partner(keyed_edge_bits(dims, mu, both[rows]), dims, k[rows], new[rows])
        k = (k + 1) % N
        hist.append(new)
        cx, cy = new[active], new[active + B]
        hit = (_near_earlier(hist, t, 0, N, active, cx, radius)
               | _near_earlier(hist, t, 0, N, active + B, cy, radius)
               | _near_earlier(hist, t, shift, N, active + B, cx, radius)
               | _near_earlier(hist, t, -shift, N, active, cy, radius))
        stop[active[hit]] = t
        active = active[~hit]
    pos = np.stack(hist)
    return (KeyedTracks(dims, np.full(B, x.k), pos[:, :B], stop),
            KeyedTracks(dims, np.full(B, y.k), pos[:, B:], stop))


def orbit_summary(field_or_map) -> dict:
    """Period histogram, excursion kind counts and n_cross as a JSON record."""
    rmap = _as_map(field_or_map)
    excs, internal = excursions(rmap)
    periods: dict[int, int] = {}
    for cyc in all_orbits(rmap):
        periods[len(cyc)] = periods.get(len(cyc), 0) + 1
    kinds = {k: 0 for k in KINDS}
    for e in excs:
        kinds[e.kind] += 1
    return {
        "d": rmap.dims.d,
        "N": rmap.dims.N,
        "n_orbits": sum(periods.values()),
        "period_histogram": {str(p): c for p, c in sorted(periods.items())},
        "kind_counts": kinds,
        "n_excursions": len(excs),
        "n_internal_orbits": len(internal),
        "n_cross": kinds["LR"],
    }
