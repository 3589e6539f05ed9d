"""Particle occupation dynamics with boundary reservoirs and the current J(l, t).

Occupations are stored as one uint8 per site; a leading batch axis holds
independent histories.  Expected currents for a fixed field are computed
exactly from the excursion structure, as integer coefficients of
``rho_minus``, ``rho_plus`` and ``rho_init``.
"""
from __future__ import annotations

import copy
import csv
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple

import numpy as np

from .lattice import Dims, boundary_masks
from .orbit import Backtrack, CrossingCensus, Excursion, RingMap, backtrack, crossing_census, ring_map
from .scatter import ScattererField


@dataclass(frozen=True)
class ReservoirParams:
    rho_minus: float
    rho_plus: float
    rho_init: float

    def __post_init__(self):
        for name in ("rho_minus", "rho_plus", "rho_init"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


@dataclass
class OccupationState:
    """Occupation bits ``sigma`` (shape ``(..., N**(d+1))``) at time ``t``.

    ``rng`` is the boundary stream; ``reservoir`` the densities it draws from.
    """

    dims: Dims
    sigma: np.ndarray
    t: int
    rng: np.random.Generator
    reservoir: ReservoirParams | None = None


def _as_map(obj) -> RingMap:
    return obj if isinstance(obj, RingMap) else ring_map(obj)


def init_state(dims: Dims, params: ReservoirParams, seed: int, replicas: int | None = None) -> OccupationState:
    """Independent Bernoulli occupations: rho_minus on B_-, rho_plus on B_+, rho_init elsewhere."""
    rng = np.random.default_rng(seed)
    minus, plus = boundary_masks(dims)
    p = np.where(minus, params.rho_minus, np.where(plus, params.rho_plus, params.rho_init))
    shape = (dims.n_sites,) if replicas is None else (replicas, dims.n_sites)
    sigma = (rng.random(shape) < p).astype(np.uint8)
    return OccupationState(dims, sigma, 0, rng, params)


def filled_state(dims: Dims, value: int, seed: int = 0, params: ReservoirParams | None = None) -> OccupationState:
    """Deterministic all-empty / all-full configuration."""
    sigma = np.full(dims.n_sites, value, dtype=np.uint8)
    return OccupationState(dims, sigma, 0, np.random.default_rng(seed), params)


def evolve(state: OccupationState, field_or_map, steps: int,
           boundary_density: tuple[float, float] | None = None) -> OccupationState:
    """Apply ``steps`` updates: pull back through F^{-1}, then refill the boundary.

    Boundary sites are redrawn in ascending index order from ``state.rng``.
    ``boundary_density`` overrides the reservoir densities (``(1, 1)`` fills
    both faces).
    """
    rmap = _as_map(field_or_map)
    if rmap.dims != state.dims:
        raise ValueError(f"dims mismatch: state {state.dims} vs field {rmap.dims}")
    if boundary_density is None:
        if state.reservoir is None:
            raise ValueError("state has no reservoir parameters")
        boundary_density = (state.reservoir.rho_minus, state.reservoir.rho_plus)
    minus, plus = boundary_masks(state.dims)
    bidx = np.flatnonzero(minus | plus)
    pb = np.where(minus[bidx], boundary_density[0], boundary_density[1])
    rng = copy.deepcopy(state.rng)
    sigma = state.sigma
    for _ in range(steps):
        sigma = sigma[..., rmap.backward]
        draws = rng.random(sigma.shape[:-1] + (bidx.size,)) < pb
        sigma[..., bidx] = draws
    return OccupationState(state.dims, np.ascontiguousarray(sigma, dtype=np.uint8),
                           state.t + steps, rng, state.reservoir)


def _interface_sites(rmap: RingMap, l: int) -> np.ndarray:
    """Sites (k, i) in layer l whose pair with i + e_d fires."""
    N = rmap.dims.N
    if not 0 <= l <= N - 2:
        raise ValueError(f"interface {l} out of range [0, {N - 2}]")
    src = np.flatnonzero(rmap.layer == l)
    return src[rmap.layer[rmap.forward[src]] == l + 1]


def current_numerator(sigma: np.ndarray, field_or_map, l: int) -> np.ndarray | int:
    """N^d J(l, t) for occupations ``sigma``; checks both current formulas agree."""
    rmap = _as_map(field_or_map)
    src = _interface_sites(rmap, l)
    sigma = np.asarray(sigma, dtype=np.int64)
    # partner of (k, i) at level k is (k, i + e_d): index + 1
    interface_form = (sigma[..., src] - sigma[..., src + 1]).sum(axis=-1)
    weights = np.where(rmap.cross_iface == l, rmap.cross_sign, 0).astype(np.int64)
    delta_form = sigma @ weights
    if not np.array_equal(interface_form, delta_form):
        raise AssertionError("interface and crossing forms of the current disagree")
    return interface_form if np.ndim(interface_form) else int(interface_form)


def current(state: OccupationState, field_or_map, l: int):
    """J(l, t) as an exact Fraction (or float array for batched states)."""
    num = current_numerator(state.sigma, field_or_map, l)
    if np.ndim(num):
        return num / state.dims.n_horizontal
    return Fraction(num, state.dims.n_horizontal)


class CurrentTerms(NamedTuple):
    """N^d E[J(l, t)] = minus*rho_minus + plus*rho_plus + interior*rho_init."""

    minus: int
    plus: int
    interior: int

    def value(self, params: ReservoirParams, n_horizontal: int) -> float:
        return (self.minus * params.rho_minus + self.plus * params.rho_plus
                + self.interior * params.rho_init) / n_horizontal


def expected_current_terms(field_or_map, l: int, t: int, bt: Backtrack | None = None) -> CurrentTerms:
    """Exact expected current via each site's backward distance to the boundary.

    E[sigma(y; t)] is the density of the face that opened y's excursion when
    that happened at most t steps ago, and rho_init otherwise.
    """
    rmap = _as_map(field_or_map)
    N = rmap.dims.N
    if not 0 <= l <= N - 2:
        raise ValueError(f"interface {l} out of range [0, {N - 2}]")
    bt = backtrack(rmap) if bt is None else bt
    ys = np.flatnonzero(rmap.cross_iface == l)
    sign = rmap.cross_sign[ys].astype(np.int64)
    start = bt.start[ys]
    fresh = (start >= 0) & (bt.dist[ys] <= t)
    from_minus = fresh & (rmap.layer[np.maximum(start, 0)] == 0)
    from_plus = fresh & ~from_minus
    return CurrentTerms(int(sign[from_minus].sum()), int(sign[from_plus].sum()), int(sign[~fresh].sum()))


def expected_current_terms_from_excursions(excs: list[Excursion], internal, l: int, t: int) -> CurrentTerms:
    """Reference route: per-excursion sums, internal orbits contributing zero.

    For an excursion from x on face s, times n <= min(t, t_B - 1) carry
    rho_s and later times carry rho_init.
    """
    minus = plus = interior = 0
    for e in excs:
        for n, sign in e.crossing_times.get(l, []):
            if n <= t:
                if e.start.i[-1] == 0:
                    minus += sign
                else:
                    plus += sign
            else:
                interior += sign
    for orb in internal:
        interior += sum(sign for _, sign in orb.crossing_profile.get(l, []))
    return CurrentTerms(minus, plus, interior)


def expected_current_exact(field_or_map, l: int, t: int, params: ReservoirParams) -> float:
    rmap = _as_map(field_or_map)
    return expected_current_terms(rmap, l, t).value(params, rmap.dims.n_horizontal)


def stationary_current(census: CrossingCensus, params: ReservoirParams) -> float:
    """(n_cross / N^d)(rho_minus - rho_plus)."""
    return census.n_cross * (params.rho_minus - params.rho_plus) / census.dims.n_horizontal


def remainder_terms(field_or_map, l: int, t: int, census: CrossingCensus | None = None,
                    bt: Backtrack | None = None) -> CurrentTerms:
    """Integer coefficients of N^d L(l, t)."""
    rmap = _as_map(field_or_map)
    bt = backtrack(rmap) if bt is None else bt
    census = crossing_census(rmap, bt) if census is None else census
    terms = expected_current_terms(rmap, l, t, bt)
    return CurrentTerms(terms.minus - census.n_cross, terms.plus + census.n_cross, terms.interior)


def finite_time_remainder(field_or_map, l: int, t: int, params: ReservoirParams,
                          census: CrossingCensus | None = None, bt: Backtrack | None = None) -> float:
    """L(l, t) = E[J(l, t)] - (n_cross / N^d)(rho_minus - rho_plus)."""
    rmap = _as_map(field_or_map)
    return remainder_terms(rmap, l, t, census, bt).value(params, rmap.dims.n_horizontal)


def remainder_bound(census: CrossingCensus, l: int, t: int, params: ReservoirParams) -> float:
    """3/N^d (N_-(l,t)(rho_minus + rho_init) + N_+(l,t)(rho_plus + rho_init))."""
    n_minus, n_plus = census.counts(l, t)
    return 3 * (n_minus * (params.rho_minus + params.rho_init)
                + n_plus * (params.rho_plus + params.rho_init)) / census.dims.n_horizontal


# -- exports -----------------------------------------------------------------------------
@dataclass
class CurrentSeries:
    interface: int
    samples: list[tuple[int, int, float, int, int]]  # (t, l, J, replica, seed)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "l", "J", "replica", "seed"])
            w.writerows(self.samples)


def record_current_series(state: OccupationState, field_or_map, l: int, times: Iterable[int],
                          seed: int) -> CurrentSeries:
    """Evolve a (batched) state and sample J(l, t) at the requested times."""
    rmap = _as_map(field_or_map)
    samples = []
    for t in sorted(times):
        if t < state.t:
            raise ValueError(f"time {t} is before the state time {state.t}")
        state = evolve(state, rmap, t - state.t)
        num = np.atleast_1d(current_numerator(state.sigma, rmap, l))
        for r, v in enumerate(num):
            samples.append((t, l, float(v) / rmap.dims.n_horizontal, r, seed))
    return CurrentSeries(l, samples)


def write_summary(path, field: ScattererField, params: ReservoirParams, t: int) -> dict:
    """JSON summary of the parameters and exact oracle values at time ``t``."""
    rmap = ring_map(field)
    bt = backtrack(rmap)
    census = crossing_census(rmap, bt)
    out = {
        "d": field.dims.d, "N": field.dims.N, "mu": field.mu, "seed": field.seed,
        "rho_minus": params.rho_minus, "rho_plus": params.rho_plus, "rho_init": params.rho_init,
        "t": t, "n_cross": census.n_cross,
        "stationary_current": stationary_current(census, params),
        "expected_current": {str(l): expected_current_terms(rmap, l, t, bt).value(params, field.dims.n_horizontal)
                             for l in range(field.dims.N - 1)},
    }
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
    return out
