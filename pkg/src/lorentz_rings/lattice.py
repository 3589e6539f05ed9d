"""Geometry of the ring phase space over the box {0..N-1}^d.

Coordinates are 0-based.  The first ``d - 1`` horizontal coordinates are
periodic (mod N); the last one, ``i_d``, is open.  Slab points may carry
``i_d`` in ``[-2, N + 1]`` so that every edge touched by a jump coefficient
can be addressed literally.

A site ``(k, i)`` is encoded row-major over ``(k, i_1, ..., i_d)``, so
``index = k * N**d + h`` with ``h`` the row-major horizontal index.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

#: Domains accepted by :func:`neighbors`, as inclusive ``i_d`` ranges.
DOMAINS = ("box", "slab1", "slab2")


@dataclass(frozen=True)
class Dims:
    d: int
    N: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.N < 2:
            raise ValueError(f"N must be >= 2, got {self.N}")

    @property
    def n_horizontal(self) -> int:
        return self.N ** self.d

    @property
    def n_sites(self) -> int:
        return self.N ** (self.d + 1)

    def layer_range(self, domain: str) -> tuple[int, int]:
        pad = DOMAINS.index(domain)
        return -pad, self.N - 1 + pad


class Site(NamedTuple):
    k: int
    i: tuple[int, ...]


class Side(Enum):
    MINUS = "minus"
    PLUS = "plus"
    NONE = "none"


def check_site(x: Site, dims: Dims) -> None:
    if len(x.i) != dims.d:
        raise ValueError(f"site {x} has {len(x.i)} horizontal coordinates, expected {dims.d}")
    if not 0 <= x.k < dims.N or not all(0 <= c < dims.N for c in x.i):
        raise ValueError(f"site {x} outside the box for N={dims.N}")


def in_domain(i: Sequence[int], dims: Dims, domain: str = "box") -> bool:
    lo, hi = dims.layer_range(domain)
    return (len(i) == dims.d and all(0 <= c < dims.N for c in i[:-1])
            and lo <= i[-1] <= hi)


def encode(x: Site, dims: Dims) -> int:
    idx = x.k
    for c in x.i:
        idx = idx * dims.N + c
    return idx


def decode(idx: int, dims: Dims) -> Site:
    coords = []
    for _ in range(dims.d):
        idx, c = divmod(idx, dims.N)
        coords.append(c)
    return Site(idx, tuple(reversed(coords)))


def horizontal_index(i: Sequence[int], dims: Dims) -> int:
    h = 0
    for c in i:
        h = h * dims.N + c
    return h


def horizontal_coords(h, dims: Dims) -> np.ndarray:
    """Box coordinates of horizontal indices; shape ``(..., d)``."""
    return np.stack(np.unravel_index(np.asarray(h), (dims.N,) * dims.d), axis=-1)


def torus_distance(i: Sequence[int], j: Sequence[int], dims: Dims) -> int:
    """L1 distance, minimised over periodic shifts of the first d-1 coordinates."""
    N = dims.N
    dist = abs(i[-1] - j[-1])
    for a, b in zip(i[:-1], j[:-1]):
        delta = (a - b) % N
        dist += min(delta, N - delta)
    return dist


def torus_distance_array(i: np.ndarray, j: np.ndarray, N: int, periodic: bool = True) -> np.ndarray:
    """Vectorized distance over trailing coordinate axes.

    With ``periodic=False`` the plain L1 norm is used (infinite lattice).
    """
    diff = np.abs(np.asarray(i) - np.asarray(j))
    if periodic:
        wrapped = diff[..., :-1] % N
        diff = np.concatenate([np.minimum(wrapped, N - wrapped), diff[..., -1:]], axis=-1)
    return diff.sum(axis=-1)


def neighbors(i: Sequence[int], dims: Dims, domain: str = "box") -> list[tuple[int, ...]]:
    """Distinct points at distance 1 from ``i`` lying in ``domain``, sorted."""
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}")
    i = tuple(i)
    out = set()
    for a in range(dims.d):
        for step in (-1, 1):
            j = list(i)
            if a < dims.d - 1:
                j[a] = (j[a] + step) % dims.N
            else:
                j[a] += step
            j = tuple(j)
            if j != i and in_domain(j, dims, domain):
                out.add(j)
    return sorted(out)


def boundary_side(x: Site, dims: Dims) -> Side:
    if x.i[-1] == 0:
        return Side.MINUS
    if x.i[-1] == dims.N - 1:
        return Side.PLUS
    return Side.NONE


def site_layers(dims: Dims) -> np.ndarray:
    """``i_d`` of every site index, as an int array of length ``N**(d+1)``."""
    return np.tile(np.arange(dims.N), dims.N ** dims.d)


def boundary_masks(dims: Dims) -> tuple[np.ndarray, np.ndarray]:
    layers = site_layers(dims)
    return layers == 0, layers == dims.N - 1
