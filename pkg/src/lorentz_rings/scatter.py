"""Quenched scatterer field, jump coefficients and the jump rate.

Storage layout
--------------
Edge bits live in an array of shape ``(d, N, N, ..., N, N + 2)``: axis 0 is
the edge direction ``a``, axis 1 the level ``k``, then the ``d - 1`` periodic
coordinates of the edge's base point ``p``, and the last axis is
``i_d + 1`` for ``i_d`` in ``[-1, N]``.  Entry ``[a, k, p]`` is the scatterer
between ``p`` and ``p + e_a``.

Any edge with an endpoint whose ``i_d`` falls outside ``[-1, N]`` is forced to
1.  This blocks every jump that would leave the box while keeping every
in-box jump probability at ``mu (1 - mu)^(4d - 2)``, boundary layers
included.  When ``N == 2`` a periodic direction has a single edge per pair;
the slot whose base coordinate is 1 mirrors the canonical one with base 0.
"""
from __future__ import annotations

import itertools
import json
import math
import struct
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .lattice import Dims, in_domain, neighbors, torus_distance
from .prf import prf_uniform, prf_uniform_array

FORMAT_VERSION = 1
_MAGIC = b"LRXIELD1"
STORAGE_MODES = ("dense", "keyed")


class EdgeKey(NamedTuple):
    k: int
    endpoints: tuple[tuple[int, ...], tuple[int, ...]]


def kappa(mu: float, d: int) -> float:
    """Per-direction jump probability ``mu (1 - mu)^(4d - 2)``."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must lie in [0, 1], got {mu}")
    return mu * (1 - mu) ** (4 * d - 2)


def _check_mu(mu: float) -> None:
    if not 0.0 < mu < 1.0:
        raise ValueError(f"mu must lie in (0, 1), got {mu}")


def bits_shape(dims: Dims) -> tuple[int, ...]:
    return (dims.d, dims.N) + (dims.N,) * (dims.d - 1) + (dims.N + 2,)


def edge_key(k: int, i: Sequence[int], j: Sequence[int], dims: Dims) -> EdgeKey:
    i, j = tuple(i), tuple(j)
    if torus_distance(i, j, dims) != 1:
        raise ValueError(f"{i} and {j} are not nearest neighbours")
    return EdgeKey(k % dims.N, (min(i, j), max(i, j)))


def _edge_slot(dims: Dims, p: np.ndarray, a: np.ndarray, s: np.ndarray):
    """Canonical base point and forced mask for the edge ``(p, p + s e_a)``.

    ``p`` has shape ``(B, d)``; ``a`` and ``s`` shape ``(B,)``.  Returns the
    base (``(B, d)``) and a boolean mask of forced edges.
    """
    N, d = dims.N, dims.d
    p = np.asarray(p, dtype=np.int64)
    rows = np.arange(p.shape[0])
    other = p.copy()
    other[rows, a] += s
    periodic = a < d - 1
    other[rows, a] = np.where(periodic, other[rows, a] % N, other[rows, a])
    forced = ((p[:, -1] < -1) | (p[:, -1] > N) | (other[:, -1] < -1) | (other[:, -1] > N))
    base = np.where((s > 0)[:, None], p, other)
    if N == 2:
        # single edge per periodic pair: canonical base coordinate 0
        base[rows, a] = np.where(periodic, 0, base[rows, a])
    return base, forced


def _slot_index(dims: Dims, k: np.ndarray, base: np.ndarray, a: np.ndarray) -> np.ndarray:
    N, d = dims.N, dims.d
    idx = np.asarray(a, dtype=np.int64) * N + (np.asarray(k, dtype=np.int64) % N)
    for c in range(d - 1):
        idx = idx * N + base[:, c]
    return idx * (N + 2) + (base[:, -1] + 1)


def _apply_structure(bits: np.ndarray, dims: Dims) -> np.ndarray:
    """Enforce forced edges and N == 2 mirroring in place."""
    bits[dims.d - 1, ..., dims.N + 1] = 1
    if dims.N == 2:
        for a in range(dims.d - 1):
            src = [slice(None)] * bits[a].ndim
            dst = list(src)
            src[1 + a], dst[1 + a] = 0, 1
            bits[a][tuple(dst)] = bits[a][tuple(src)]
    return bits


@dataclass(eq=False)
class ScattererField:
    """Scatterer bits for one disorder realisation.

    Use :func:`sample_field` for Bernoulli(mu) disorder or the ``from_*``
    constructors for hand-built fields.  Instances are treated as immutable.
    """

    dims: Dims
    mu: float | None
    seed: int | None
    storage: str
    bits: np.ndarray | None = None
    _partners: np.ndarray | None = dc_field(default=None, repr=False)

    # -- constructors ----------------------------------------------------
    @classmethod
    def from_bits(cls, dims: Dims, bits, mu: float | None = None, seed: int | None = None):
        bits = np.array(bits, dtype=np.uint8)
        if bits.shape != bits_shape(dims):
            raise ValueError(f"bits shape {bits.shape} != {bits_shape(dims)}")
        return cls(dims, mu, seed, "dense", _apply_structure(bits, dims))

    @classmethod
    def zeros(cls, dims: Dims):
        return cls.from_bits(dims, np.zeros(bits_shape(dims), np.uint8), mu=0.0)

    @classmethod
    def ones(cls, dims: Dims):
        return cls.from_bits(dims, np.ones(bits_shape(dims), np.uint8), mu=1.0)

    @classmethod
    def with_scatterers(cls, dims: Dims, scatterers: Sequence[tuple[int, Sequence[int], Sequence[int]]]):
        """Field whose only free scatterers are the listed ``(k, i, j)`` edges."""
        bits = np.zeros(bits_shape(dims), np.uint8)
        for k, i, j in scatterers:
            a, base = _base_of(dims, i, j)
            bits[(a, k % dims.N) + tuple(base[:-1]) + (base[-1] + 1,)] = 1
        return cls.from_bits(dims, bits, mu=None)

    # -- access ----------------------------------------------------------
    def edge_bits(self, k, p, a, s) -> np.ndarray:
        """Vectorized xi for edges ``(p, p + s e_a)`` at levels ``k``."""
        p = np.atleast_2d(np.asarray(p, dtype=np.int64))
        a = np.broadcast_to(np.asarray(a, dtype=np.int64), p.shape[:1])
        s = np.broadcast_to(np.asarray(s, dtype=np.int64), p.shape[:1])
        k = np.broadcast_to(np.asarray(k, dtype=np.int64), p.shape[:1])
        base, forced = _edge_slot(self.dims, p, a, s)
        base = np.where(forced[:, None], 0, base)
        slot = _slot_index(self.dims, k, base, a)
        if self.storage == "dense":
            free = self.bits.reshape(-1)[slot]
        else:
            free = (prf_uniform_array(self.seed, slot) < self.mu).astype(np.uint8)
        return np.where(forced, 1, free).astype(np.uint8)

    def xi(self, k: int, i: Sequence[int], j: Sequence[int]) -> int:
        i, j = tuple(i), tuple(j)
        a, base = _base_of(self.dims, i, j)
        if not (-1 <= i[-1] <= self.dims.N and -1 <= j[-1] <= self.dims.N):
            return 1
        if self.storage == "dense":
            return int(self.bits[(a, k % self.dims.N) + tuple(base[:-1]) + (base[-1] + 1,)])
        slot = _slot_index(self.dims, np.array([k]), np.array([base]), np.array([a]))[0]
        return int(prf_uniform(self.seed, int(slot)) < self.mu)

    def to_dense(self) -> "ScattererField":
        if self.storage == "dense":
            return self
        ids = np.arange(math.prod(bits_shape(self.dims)), dtype=np.uint64)
        bits = (prf_uniform_array(self.seed, ids) < self.mu).astype(np.uint8)
        bits = _apply_structure(bits.reshape(bits_shape(self.dims)), self.dims)
        return ScattererField(self.dims, self.mu, self.seed, "dense", bits)

    # -- dynamics support --------------------------------------------------
    def partner_table(self) -> np.ndarray:
        """Matching partner ``partner[k, h]`` of every box site (cached)."""
        if self._partners is None:
            self._partners = _partner_table(self.to_dense().bits, self.dims)
        return self._partners

    def local_partner(self, k, i) -> np.ndarray:
        return local_partner(self.edge_bits, self.dims, k, i)

    def degree(self, k: int, i: Sequence[int]) -> int:
        return sum(self.xi(k, i, j) for j in neighbors(i, self.dims, "slab2"))


def _base_of(dims: Dims, i: Sequence[int], j: Sequence[int]) -> tuple[int, tuple[int, ...]]:
    """Direction and canonical base point of the unordered pair ``{i, j}``."""
    i, j = tuple(i), tuple(j)
    if len(i) != dims.d or len(j) != dims.d or torus_distance(i, j, dims) != 1:
        raise ValueError(f"{i} and {j} are not nearest neighbours")
    a = next(c for c in range(dims.d) if i[c] != j[c])
    if a == dims.d - 1:
        return a, min(i, j, key=lambda p: p[-1])
    if dims.N == 2:
        return a, i if i[a] == 0 else j
    return a, i if (i[a] + 1) % dims.N == j[a] else j


def sample_field(dims: Dims, mu: float, seed: int, storage: str = "dense") -> ScattererField:
    """Bernoulli(mu) field whose free bits are ``PRF(seed, edge slot) < mu``."""
    _check_mu(mu)
    if storage not in STORAGE_MODES:
        raise ValueError(f"storage must be one of {STORAGE_MODES}")
    keyed = ScattererField(dims, mu, int(seed), "keyed")
    return keyed.to_dense() if storage == "dense" else keyed


def jump_coefficient(field: ScattererField, k: int, i: Sequence[int], j: Sequence[int]) -> int:
    """c(k, ij), evaluated literally as xi times the two isolation products."""
    dims = field.dims
    if not in_domain(i, dims, "box"):
        raise ValueError(f"{i} is not a box point")
    if not field.xi(k, i, j):
        return 0
    i, j = tuple(i), tuple(j)
    for l in neighbors(i, dims, "slab2"):
        if l != j and field.xi(k, i, l):
            return 0
    for l in neighbors(j, dims, "slab2"):
        if l != i and field.xi(k, j, l):
            return 0
    return 1


def _offsets(dims: Dims) -> list[tuple[int, int]]:
    """Distinct (direction, sign) moves; one per periodic axis when N == 2."""
    out = []
    for a in range(dims.d):
        out.append((a, 1))
        if not (dims.N == 2 and a < dims.d - 1):
            out.append((a, -1))
    return out


def _shift(p: np.ndarray, a: int, s: int, dims: Dims) -> np.ndarray:
    q = p.copy()
    q[:, a] += s
    if a < dims.d - 1:
        q[:, a] %= dims.N
    return q


def local_partner(edge_bits: Callable, dims: Dims, k, i) -> np.ndarray:
    """Vectorized F's horizontal image using only nearby edges.

    ``edge_bits(k, p, a, s)`` returns xi for a batch of edges.  ``k`` has
    shape ``(B,)`` and ``i`` shape ``(B, d)``; returns the partner ``(B, d)``.
    """
    i = np.atleast_2d(np.asarray(i, dtype=np.int64))
    k = np.broadcast_to(np.asarray(k, dtype=np.int64), i.shape[:1])
    moves = _offsets(dims)

    def deg(p):
        return sum(edge_bits(k, p, a, s).astype(np.int64) for a, s in moves)

    deg_i = deg(i)
    out = i.copy()
    for a, s in moves:
        q = _shift(i, a, s, dims)
        fire = (edge_bits(k, i, a, s) == 1) & (deg_i == 1) & (deg(q) == 1)
        out[fire] = q[fire]
    return out


def keyed_edge_bits(dims: Dims, mu: float, seeds) -> Callable:
    """``edge_bits`` reader where row b of every batch uses field ``seeds[b]``.

    Matches ``sample_field(dims, mu, seeds[b], storage="keyed").edge_bits``
    row by row, so many independent fields can be probed locally at once.
    """
    _check_mu(mu)
    seeds = np.asarray(seeds, dtype=np.uint64)

    def edge_bits(k, p, a, s):
        p = np.atleast_2d(np.asarray(p, dtype=np.int64))
        shape = p.shape[:1]
        a = np.broadcast_to(np.asarray(a, dtype=np.int64), shape)
        s = np.broadcast_to(np.asarray(s, dtype=np.int64), shape)
        k = np.broadcast_to(np.asarray(k, dtype=np.int64), shape)
        base, forced = _edge_slot(dims, p, a, s)
        base = np.where(forced[:, None], 0, base)
        slot = _slot_index(dims, k, base, a)
        free = prf_uniform_array(seeds, slot) < mu
        return np.where(forced, 1, free).astype(np.uint8)

    return edge_bits


def _partner_table(bits: np.ndarray, dims: Dims) -> np.ndarray:
    """Whole-field partner table by degree counting; shape ``(N, N**d)``."""
    d, N = dims.d, dims.N
    last = bits.ndim - 2  # layer axis inside bits[a]
    deg = np.zeros(bits.shape[1:], dtype=np.int16)
    for a in range(d):
        b = bits[a].astype(np.int16)
        deg += b
        if a < d - 1:
            if N > 2:
                deg += np.roll(b, 1, axis=1 + a)
        else:
            below = np.ones_like(b)
            below[..., 1:] = b[..., :-1]
            deg += below

    box = (slice(None),) * last + (slice(1, N + 1),)
    hgrid = np.arange(N ** d).reshape((N,) * d)
    hgrid = np.broadcast_to(hgrid, (N,) + (N,) * d)
    partner = hgrid.copy()
    fired = np.zeros(partner.shape, dtype=np.int16)
    for a, s in _offsets(dims):
        b = bits[a]
        if a < d - 1:
            axis = 1 + a
            edge = b if s > 0 else np.roll(b, 1, axis=axis)
            deg_q = np.roll(deg, -s, axis=axis)
            edge, deg_q, deg_p = edge[box], deg_q[box], deg[box]
            target = np.roll(hgrid, -s, axis=axis)
        else:
            if s > 0:
                edge = b[..., 1:N + 1]
                deg_q = deg[..., 2:N + 2]
            else:
                edge = b[..., 0:N]
                deg_q = deg[..., 0:N]
            deg_p = deg[box]
            target = hgrid + s
        fire = (edge == 1) & (deg_p == 1) & (deg_q == 1)
        fired += fire
        partner = np.where(fire, target, partner)
    if fired.max(initial=0) > 1:
        raise RuntimeError("more than one jump coefficient fired at a site")
    return partner.reshape(N, N ** d).astype(np.int64)


def enumerate_jump_probability(d: int) -> Callable[[float], float]:
    """Exhaustive oracle for the jump probability of a fixed interior pair.

    Every assignment of the ``4d - 1`` edges incident to an interior pair
    ``(i, i + e_d)`` is written into an otherwise empty field on a ``N = 5``
    lattice and ``jump_coefficient`` is evaluated on it.  Returns
    ``mu -> sum_config c * mu^ones (1 - mu)^zeros``; the count table is
    attached as ``.counts`` (index = number of ones).
    """
    if not 1 <= d <= 3:
        raise ValueError(f"enumeration is limited to d <= 3, got {d}")
    dims = Dims(d, 5)
    i = (2,) * d
    j = i[:-1] + (3,)
    edges = sorted({tuple(sorted((p, q))) for p in (i, j) for q in neighbors(p, dims, "slab2")})
    assert len(edges) == 4 * d - 1
    counts = [0] * (len(edges) + 1)
    for assignment in itertools.product((0, 1), repeat=len(edges)):
        chosen = [(0, p, q) for (p, q), bit in zip(edges, assignment) if bit]
        fld = ScattererField.with_scatterers(dims, chosen)
        counts[sum(assignment)] += jump_coefficient(fld, 0, i, j)
    n = len(edges)

    def probability(mu):
        return sum(c * mu ** m * (1 - mu) ** (n - m) for m, c in enumerate(counts) if c)

    probability.counts = counts
    return probability


def jump_probability_exact(d: int, mu: Fraction) -> Fraction:
    return Fraction(mu) * (1 - Fraction(mu)) ** (4 * d - 2)


# -- binary snapshots ----------------------------------------------------------
def save_field(fld: ScattererField, path) -> None:
    """Write a field snapshot: magic, header length, JSON header, packed bits.

    Key-derived fields are stored header-only; their bits follow from
    ``(seed, mu)``.
    """
    header = {
        "format_version": FORMAT_VERSION,
        "d": fld.dims.d,
        "N": fld.dims.N,
        "mu": fld.mu,
        "seed": fld.seed,
        "storage": fld.storage,
        "shape": list(bits_shape(fld.dims)),
    }
    payload = b"" if fld.storage == "keyed" else np.packbits(fld.bits.reshape(-1)).tobytes()
    raw = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<I", len(raw)) + raw + payload)


def load_field(path) -> ScattererField:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise ValueError(f"{path} is not a scatterer field snapshot")
    (hlen,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12:12 + hlen])
    if header["format_version"] != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {header['format_version']}")
    dims = Dims(header["d"], header["N"])
    if header["storage"] == "keyed":
        return ScattererField(dims, header["mu"], header["seed"], "keyed")
    shape = tuple(header["shape"])
    bits = np.unpackbits(np.frombuffer(data[12 + hlen:], dtype=np.uint8), count=math.prod(shape))
    return ScattererField(dims, header["mu"], header["seed"], "dense", bits.reshape(shape))
