"""Lazy random walks on the slab and on Z^d, and their first-passage times.

Layers passed to the exit-time generating function and gambler's-ruin helpers
use 1-based coordinates ``1..N`` (boundary layers 1 and N).  Walk positions
use the 0-based lattice coordinates of :mod:`lorentz_rings.lattice`.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded

from .lattice import Dims, neighbors, torus_distance_array
from .orbit import PROXIMITY_RADIUS

GEOMETRIES = ("slab", "infinite")


class InadmissibleLambda(ValueError):
    """lambda is outside the range where the cosine closed form is valid."""


class SingularSystem(ValueError):
    """The exit-time linear system has no admissible (finite) solution."""


@dataclass(frozen=True)
class WalkParams:
    nu: float | Fraction
    dims: Dims
    geometry: str = "slab"

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"geometry must be one of {GEOMETRIES}")
        if self.nu < 0 or 2 * self.dims.d * self.nu > 1:
            raise ValueError(f"need 0 <= nu <= 1/(2d), got nu={self.nu}, d={self.dims.d}")

    @property
    def periodic(self) -> bool:
        return self.geometry == "slab"


@dataclass
class WalkPath:
    start: tuple[int, ...]
    positions: np.ndarray
    tau_B: int | None = None
    tau_L: int | None = None
    tau_I: int | None = None


def walk_step_distribution(params: WalkParams, j: Sequence[int]) -> list[tuple[tuple[int, ...], object]]:
    """One-step kernel from ``j``: nu to each admissible neighbour, the rest to staying."""
    j = tuple(j)
    if params.geometry == "slab":
        nbrs = neighbors(j, params.dims, "box")
    else:
        nbrs = []
        for a in range(params.dims.d):
            for s in (-1, 1):
                q = list(j)
                q[a] += s
                nbrs.append(tuple(q))
        nbrs.sort()
    nu = params.nu
    return [(j, 1 - len(nbrs) * nu)] + [(q, nu) for q in nbrs]


def _moves(d: int) -> np.ndarray:
    out = np.zeros((2 * d, d), dtype=np.int64)
    for a in range(d):
        out[2 * a, a] = 1
        out[2 * a + 1, a] = -1
    return out


def step_walks(params: WalkParams, pos: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Advance a batch of walkers ``(B, d)`` by one step of the kernel."""
    d, N = params.dims.d, params.dims.N
    u = rng.random(pos.shape[0])
    choice = np.floor(u / params.nu).astype(np.int64) if params.nu > 0 else np.full(pos.shape[0], 2 * d)
    moving = choice < 2 * d
    new = pos.copy()
    new[moving] += _moves(d)[choice[moving]]
    if params.geometry == "slab":
        new[:, :-1] %= N
        out = (new[:, -1] < 0) | (new[:, -1] > N - 1)
        new[out] = pos[out]
    return new


def _distance(params: WalkParams, a, b) -> np.ndarray:
    return torus_distance_array(a, b, params.dims.N, periodic=params.periodic)


def _on_boundary(params: WalkParams, pos: np.ndarray) -> np.ndarray:
    return (pos[..., -1] == 0) | (pos[..., -1] == params.dims.N - 1)


def simulate_walk(params: WalkParams, start: Sequence[int], steps: int, rng: np.random.Generator) -> WalkPath:
    pos = np.asarray(start, dtype=np.int64)[None, :]
    path = [pos[0]]
    for _ in range(steps):
        pos = step_walks(params, pos, rng)
        path.append(pos[0])
    return WalkPath(tuple(start), np.asarray(path))


def simulate_to_exit(params: WalkParams, start: Sequence[int], rng: np.random.Generator,
                     max_steps: int = 10 ** 7) -> WalkPath:
    """Run until the first visit to b = {i_d = 0} U {i_d = N-1}; tau_B = 0 on b."""
    if params.geometry != "slab":
        raise ValueError("exit times are defined on the slab")
    pos = np.asarray(start, dtype=np.int64)[None, :]
    path = [pos[0]]
    while not _on_boundary(params, pos[0]):
        if len(path) > max_steps:
            raise RuntimeError(f"no exit within {max_steps} steps")
        pos = step_walks(params, pos, rng)
        path.append(pos[0])
    return WalkPath(tuple(start), np.asarray(path), tau_B=len(path) - 1)


def exit_times(nu: float, N: int, layer: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """tau_B for ``n`` walks started on 1-based ``layer``; only i_d matters."""
    x = np.full(n, layer, dtype=np.int64)
    tau = np.zeros(n, dtype=np.int64)
    active = np.flatnonzero((x > 1) & (x < N))
    t = 0
    while active.size:
        t += 1
        u = rng.random(active.size)
        x[active] += (u < nu).astype(np.int64) - ((u >= nu) & (u < 2 * nu)).astype(np.int64)
        done = (x[active] == 1) | (x[active] == N)
        tau[active[done]] = t
        active = active[~done]
    return tau


def _cos_omega(lam: float, nu: float) -> float:
    return 1.0 - (1.0 - math.exp(-lam)) / (2.0 * nu)


def exit_mgf_analytic(layer: int, lam: float, N: int, nu: float) -> float:
    """E[exp(lam tau_B)] from 1-based ``layer`` via the cosine closed form."""
    if not 1 <= layer <= N:
        raise ValueError(f"layer {layer} outside [1, {N}]")
    c = _cos_omega(lam, nu)
    if abs(c) > 1:
        raise InadmissibleLambda(f"|cos omega| = {abs(c):.6g} > 1 for lambda={lam}")
    omega = math.acos(c)
    if omega * (N - 1) >= math.pi:
        raise InadmissibleLambda(f"lambda={lam} beyond the convergence radius for N={N}")
    return (math.cos(omega * (layer - 1)) + math.cos(omega * (layer - N))) / (1 + math.cos(omega * (N - 1)))


def exit_mgf_solve(layer: int, lam: float, N: int, nu: float) -> float:
    """Same quantity from the (N-2)-unknown tridiagonal system."""
    return float(exit_mgf_solve_all(lam, N, nu)[layer - 1])


def exit_mgf_solve_all(lam: float, N: int, nu: float) -> np.ndarray:
    """h on every layer 1..N (boundary values are 1)."""
    h = np.ones(N)
    n = N - 2
    if n <= 0:
        return h
    a = (math.exp(-lam) - 1.0) / nu
    ab = np.zeros((3, n))
    ab[0, 1:] = 1.0
    ab[1, :] = -2.0 - a
    ab[2, :-1] = 1.0
    rhs = np.zeros(n)
    rhs[0] -= 1.0
    rhs[-1] -= 1.0
    try:
        sol = solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"singular exit system for lambda={lam}") from exc
    # a generating function of a nonnegative time is >= 1 for lam >= 0 and in (0, 1] below
    admissible = sol >= 1.0 - 1e-12 if lam >= 0 else (sol > 0) & (sol <= 1.0 + 1e-12)
    if not np.all(np.isfinite(sol)) or not np.all(admissible):
        raise SingularSystem(f"lambda={lam} too large: no finite generating function")
    h[1:-1] = sol
    return h


def exit_mgf_monte_carlo(layer: int, lam: float, N: int, nu: float, n: int,
                         rng: np.random.Generator) -> tuple[float, float]:
    """Sample mean of exp(lam tau_B) and its standard error."""
    vals = np.exp(lam * exit_times(nu, N, layer, n, rng))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


def exit_time_mean(layer: int, N: int, nu: float) -> float:
    """E[tau_B] from 1-based ``layer``: (layer - 1)(N - layer) / (2 nu)."""
    if not 1 <= layer <= N:
        raise ValueError(f"layer {layer} outside [1, {N}]")
    return (layer - 1) * (N - layer) / (2 * nu)


def write_mgf_table(path, N: int, nu: float, lam: float, mc: dict[int, float] | None = None) -> None:
    """CSV columns: layer, lambda, analytic, solved, mc (blank when not sampled)."""
    solved = exit_mgf_solve_all(lam, N, nu)
    mc = mc or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "lambda", "analytic", "solved", "mc"])
        for s in range(1, N + 1):
            w.writerow([s, lam, exit_mgf_analytic(s, lam, N, nu), solved[s - 1], mc.get(s, "")])


def estimator_record(estimate: float, sigma: float, n: int, seed: int) -> str:
    """JSON record of a Monte Carlo estimate."""
    return json.dumps({"estimate": estimate, "sigma": sigma, "n": n, "seed": seed}, sort_keys=True)


def exit_decay_rate(nu: float, N: int) -> float:
    """Exact asymptotic decay rate of P[tau_B > t] (top eigenvalue of the killed chain)."""
    return -math.log(1 - 2 * nu * (1 - math.cos(math.pi / (N - 1))))


def gambler_crossing(layer_start: int, N: int) -> Fraction:
    """P[i_d reaches N before 1] from 1-based ``layer_start``."""
    if not 1 <= layer_start <= N:
        raise ValueError(f"layer {layer_start} outside [1, {N}]")
    return Fraction(layer_start - 1, N - 1)


def gambler_crossing_solve(layer_start: int, N: int, nu: float) -> float:
    """Absorbing-chain solve (I - Q) p = r for the same probability."""
    if layer_start in (1, N):
        return float(layer_start == N)
    n = N - 2
    Q = np.eye(n) * (1 - 2 * nu) + np.eye(n, k=1) * nu + np.eye(n, k=-1) * nu
    r = np.zeros(n)
    r[-1] = nu
    p = np.linalg.solve(np.eye(n) - Q, r)
    return float(p[layer_start - 2])


def gambler_crossing_exact(N: int, nu: Fraction) -> list[Fraction]:
    """The absorbing-chain system solved in rationals (Thomas algorithm); layers 1..N."""
    nu = Fraction(nu)
    n = N - 2
    if n <= 0:
        return [Fraction(0), Fraction(1)][:N]
    # row i: -nu p_{i-1} + 2 nu p_i - nu p_{i+1} = rhs_i
    diag = [2 * nu] * n
    rhs = [Fraction(0)] * n
    rhs[-1] = nu
    for i in range(1, n):
        w = -nu / diag[i - 1]
        diag[i] -= w * -nu
        rhs[i] -= w * rhs[i - 1]
    p = [Fraction(0)] * n
    p[-1] = rhs[-1] / diag[-1]
    for i in range(n - 2, -1, -1):
        p[i] = (rhs[i] + nu * p[i + 1]) / diag[i]
    return [Fraction(0)] + p + [Fraction(1)]


def slab_crossing_monte_carlo(params: WalkParams, layer_start: int, n: int,
                              rng: np.random.Generator) -> tuple[float, float]:
    """Fraction of ``n`` slab walks from 1-based ``layer_start`` that reach b_+ before b_-."""
    if params.geometry != "slab":
        raise ValueError("crossing probabilities are defined on the slab")
    N = params.dims.N
    pos = np.zeros((n, params.dims.d), dtype=np.int64)
    pos[:, -1] = layer_start - 1
    active = np.flatnonzero(~_on_boundary(params, pos))
    while active.size:
        pos[active] = step_walks(params, pos[active], rng)
        active = active[~_on_boundary(params, pos[active])]
    p = float((pos[:, -1] == N - 1).mean())
    return p, math.sqrt(p * (1 - p) / n)


# -- loop and intersection times ---------------------------------------------------------
def walk_loop_time(params: WalkParams, start: Sequence[int], m: int, horizon: int,
                   rng: np.random.Generator, radius: int = PROXIMITY_RADIUS) -> int | None:
    """First t >= 1 with d(W_{t-qm}, W_t) <= radius for some q >= 1."""
    if m < 1:
        raise ValueError("m must be >= 1")
    pos = np.asarray(start, dtype=np.int64)[None, :]
    path = [pos[0]]
    for t in range(1, horizon + 1):
        pos = step_walks(params, pos, rng)
        path.append(pos[0])
        back = np.asarray(path[t - m::-m]) if t >= m else None
        if back is not None and _distance(params, back, pos[0]).min() <= radius:
            return t
    return None


def walk_intersection_time(params: WalkParams, start_i: Sequence[int], start_j: Sequence[int], m: int,
                           horizon: int, rng: np.random.Generator, radius: int = PROXIMITY_RADIUS) -> int | None:
    """min over both orderings of first t > 0 with d(W_t(i), W_{t-qm}(j)) <= radius, q >= 0."""
    if tuple(start_i) == tuple(start_j):
        raise ValueError("intersection time needs distinct starting points")
    if m < 1:
        raise ValueError("m must be >= 1")
    pos = np.asarray([start_i, start_j], dtype=np.int64)
    paths = ([pos[0]], [pos[1]])
    for t in range(1, horizon + 1):
        pos = step_walks(params, pos, rng)
        paths[0].append(pos[0])
        paths[1].append(pos[1])
        for me in (0, 1):
            back = np.asarray(paths[1 - me][t::-m])
            if _distance(params, back, pos[me]).min() <= radius:
                return t
    return None


class _Tracked:
    """Position histories of a batch of walkers, compacted as walkers finish."""

    def __init__(self, starts: list[np.ndarray]):
        self.hist = [[np.asarray(p, dtype=np.int16)] for p in starts]
        self.alive = np.ones(starts[0].shape[0], dtype=bool)

    def advance(self, params: WalkParams, rng: np.random.Generator) -> list[np.ndarray]:
        idx = np.flatnonzero(self.alive)
        out = []
        for h in self.hist:
            new = h[-1].copy()
            new[idx] = step_walks(params, h[-1][idx].astype(np.int64), rng)
            h.append(new)
            out.append(new[idx].astype(np.int64))
        return out

    def back(self, which: int, times: range) -> np.ndarray:
        """Positions of live walkers at ``times``: shape (len(times), live, d)."""
        idx = np.flatnonzero(self.alive)
        h = self.hist[which]
        return np.stack([h[s][idx] for s in times]).astype(np.int64)

    def retire(self, done: np.ndarray) -> None:
        """Drop live walkers flagged in ``done`` (indexed over live walkers)."""
        idx = np.flatnonzero(self.alive)
        self.alive[idx[done]] = False
        if self.alive.sum() * 2 < self.alive.size:
            keep = self.alive
            self.hist = [[a[keep] for a in h] for h in self.hist]
            self.alive = np.ones(int(keep.sum()), dtype=bool)

    @property
    def live(self) -> int:
        return int(self.alive.sum())


def _batches(n: int, size: int) -> list[int]:
    return [min(size, n - lo) for lo in range(0, n, size)]


def loop_before_exit(params: WalkParams, start: Sequence[int], m: int, n: int, rng: np.random.Generator,
                     horizon: int | None = None, radius: int = PROXIMITY_RADIUS,
                     batch: int = 4096) -> tuple[float, float]:
    """Estimate P[tau_L <= tau_B] over ``n`` slab walks; returns (p, standard error)."""
    N = params.dims.N
    horizon = 200 * N * N if horizon is None else horizon
    hits = 0
    for size in _batches(n, batch):
        tr = _Tracked([np.tile(np.asarray(start), (size, 1))])
        if _on_boundary(params, np.asarray(start)):
            continue
        for t in range(1, horizon + 1):
            if not tr.live:
                break
            (pos,) = tr.advance(params, rng)
            looped = np.zeros(pos.shape[0], dtype=bool)
            if t >= m:
                looped = (_distance(params, tr.back(0, range(t - m, -1, -m)), pos[None]) <= radius).any(axis=0)
            hits += int(looped.sum())
            tr.retire(looped | _on_boundary(params, pos))
    p = hits / n
    return p, math.sqrt(max(p * (1 - p), 1.0 / n) / n)


def intersection_before_exit(params: WalkParams, start_i: Sequence[int], start_j: Sequence[int], m: int,
                             n: int, rng: np.random.Generator, horizon: int | None = None,
                             radius: int = PROXIMITY_RADIUS, batch: int = 4096) -> tuple[float, float]:
    """Estimate P[tau_I < tau_B(i) v tau_B(j)] over ``n`` independent pairs."""
    if tuple(start_i) == tuple(start_j):
        raise ValueError("intersection time needs distinct starting points")
    N = params.dims.N
    horizon = 200 * N * N if horizon is None else horizon
    hits = 0
    for size in _batches(n, batch):
        tr = _Tracked([np.tile(np.asarray(start_i), (size, 1)), np.tile(np.asarray(start_j), (size, 1))])
        out_a = np.full(size, bool(_on_boundary(params, np.asarray(start_i))))
        out_b = np.full(size, bool(_on_boundary(params, np.asarray(start_j))))
        both = out_a & out_b
        tr.retire(both)
        out_a, out_b = out_a[~both], out_b[~both]
        for t in range(1, horizon + 1):
            if not tr.live:
                break
            pa, pb = tr.advance(params, rng)
            times = range(t, -1, -m)
            near = ((_distance(params, tr.back(1, times), pa[None]) <= radius).any(axis=0)
                    | (_distance(params, tr.back(0, times), pb[None]) <= radius).any(axis=0))
            out_a |= _on_boundary(params, pa)
            out_b |= _on_boundary(params, pb)
            meet = near & ~(out_a & out_b)
            hits += int(meet.sum())
            done = meet | (out_a & out_b)
            tr.retire(done)
            out_a, out_b = out_a[~done], out_b[~done]
    p = hits / n
    return p, math.sqrt(max(p * (1 - p), 1.0 / n) / n)
