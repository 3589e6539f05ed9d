"""Ensemble experiments: structural validation, Fick scaling, relaxation,
lazy-walk cross-checks, the orbit/walk coupling and orbit censuses.

Each ``run_*`` function takes an :class:`ExperimentConfig` and returns a
:class:`Report`.  Replica ``r`` always uses ``derive_seed(config.seed, r)``.
"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .config import ConfigError, ExperimentConfig
from .ensemble import Check, EnsembleStats, Report, non_increasing, replica_seeds, run_replicas, strictly_decreasing
from .lattice import Dims, Site, decode, encode
from .lazywalk import (WalkParams, exit_decay_rate, exit_mgf_analytic, exit_mgf_monte_carlo, exit_mgf_solve,
                       exit_times, gambler_crossing, gambler_crossing_exact, gambler_crossing_solve, intersection_before_exit,
                       loop_before_exit, slab_crossing_monte_carlo, walk_step_distribution)
from .orbit import (RingMap, _trace_cycle, backtrack, census_from_excursions, crossing_census, excursions,
                    keyed_orbit_pairs, keyed_orbit_tracks, orbit_loop_time, orbit_summary, ring_map, step)
from .prf import derive_seed
from .scatter import ScattererField, sample_field
from .transport import (ReservoirParams, current_numerator, expected_current_terms,
                        expected_current_terms_from_excursions, remainder_bound, remainder_terms)

# target-source tags embedded in reports
SRC_BIJECTION = "bijectivity and orbit structure of the ring map"
SRC_REMAINDER = "finite-time remainder bound 3/N^d (N_-(rho_- + rho_I) + N_+(rho_+ + rho_I))"
SRC_KAPPA = "disorder-averaged crossing density (N-1) n_cross / N^d -> kappa(mu) = mu (1-mu)^(4d-2)"
SRC_FICK = "Fick law N J -> kappa(mu) (rho_- - rho_+)"
SRC_VARIANCE = "variance of n_cross / N^(d-1) vanishes as N grows"
SRC_RELAX = "remainder L(l, t) vanishes for t >= N^(d+1) and decays in rescaled time t / N^2"
SRC_MGF = "exit-time generating function, cosine closed form"
SRC_GAMBLER = "gambler's ruin crossing probability (s - 1) / (N - 1)"
SRC_TAIL = "exit-time tail rate -log(1 - 2 nu (1 - cos(pi / (N - 1))))"
SRC_LOOP = "loop-before-exit probability decreases with N"
SRC_INTERSECT = "intersection-before-exit probability decreases with N"
SRC_COUPLING = "orbit tracks before t_L follow the lazy walk with nu = kappa(mu)"
SRC_PARTITION = "orbits partition the phase space"

EXPERIMENTS = {}


def experiment(kind):
    def register(fn):
        EXPERIMENTS[kind] = fn
        return fn
    return register


def run_experiment(config: ExperimentConfig) -> Report:
    return EXPERIMENTS[config.kind](config)


# -- validate ---------------------------------------------------------------------------
VALIDATE_PROPERTIES = ("bijective", "self_avoiding", "disjoint", "partition", "orbit_crossing_balance",
                       "census_balance", "current_formulas", "remainder_bound")


def validate_map(rmap: RingMap, field: ScattererField | None = None,
                 params: ReservoirParams | None = None, seed: int = 0) -> dict[str, int | None]:
    """Check every structural property of one map exactly.

    Returns property -> None when it holds, else a reproducing site index
    (-1 when no single site is to blame).  With ``field`` the table is also
    compared site by site with the literal definition of F.
    """
    dims = rmap.dims
    n = dims.n_sites
    params = params or ReservoirParams(0.8, 0.2, 0.5)
    out: dict[str, int | None] = {p: None for p in VALIDATE_PROPERTIES}

    hits = np.bincount(rmap.forward, minlength=n)
    bad = np.flatnonzero(hits != 1)
    if bad.size == 0 and not np.array_equal(rmap.backward[rmap.forward], np.arange(n)):
        bad = np.flatnonzero(rmap.backward[rmap.forward] != np.arange(n))
    if bad.size == 0 and field is not None:
        for x in range(n):
            if encode(step(field, decode(x, dims)), dims) != rmap.forward[x]:
                bad = np.array([x])
                break
    if bad.size:
        site = int(bad[0])
        return {p: site for p in VALIDATE_PROPERTIES}

    owner = np.full(n, -1, dtype=np.int64)
    cycles = []
    for x in range(n):
        if owner[x] >= 0:
            continue
        idx = _trace_cycle(rmap, x)
        if np.unique(idx).size != idx.size and out["self_avoiding"] is None:
            out["self_avoiding"] = x
        if (owner[idx] >= 0).any() and out["disjoint"] is None:
            out["disjoint"] = x
        owner[idx] = len(cycles)
        cycles.append(idx)
    if sum(len(c) for c in cycles) != n and out["disjoint"] is None:
        out["disjoint"] = -1

    excs, internal = excursions(rmap)
    covered = np.concatenate([e.indices for e in excs] + [o.indices for o in internal]) if n else np.array([])
    if covered.size != n or np.unique(covered).size != n:
        out["partition"] = -1

    lr = np.zeros(len(cycles), dtype=np.int64)
    rl = np.zeros(len(cycles), dtype=np.int64)
    for e in excs:
        if e.kind == "LR":
            lr[owner[encode(e.start, dims)]] += 1
        elif e.kind == "RL":
            rl[owner[encode(e.start, dims)]] += 1
    unbalanced = np.flatnonzero(lr != rl)
    if unbalanced.size:
        out["orbit_crossing_balance"] = int(cycles[unbalanced[0]][0])

    bt = backtrack(rmap)
    try:
        census = crossing_census(rmap, bt)
    except RuntimeError:
        out["census_balance"] = -1
        census = None
    ref = census_from_excursions(dims, excs)
    if census is not None and (census.n_cross != ref.n_cross or ref.s_minus.size != ref.s_plus.size
                               or not np.array_equal(census.last_cross, ref.last_cross)):
        out["census_balance"] = -1

    rng = np.random.default_rng(seed)
    sigma = (rng.random((4, n)) < 0.5).astype(np.uint8)
    T = max([e.length for e in excs] + [1])
    for l in range(dims.N - 1):
        try:
            current_numerator(sigma, rmap, l)
        except AssertionError:
            out["current_formulas"] = -1
        for t in range(T + 1):
            terms = expected_current_terms(rmap, l, t, bt)
            if terms != expected_current_terms_from_excursions(excs, internal, l, t):
                out["current_formulas"] = -1
            if census is None:
                continue
            L = remainder_terms(rmap, l, t, census, bt).value(params, dims.n_horizontal)
            if abs(L) > remainder_bound(census, l, t, params) + 1e-12 and out["remainder_bound"] is None:
                out["remainder_bound"] = -1
    if census is None:
        out["remainder_bound"] = -1
    return out


@experiment("validate")
def run_validate(config: ExperimentConfig) -> Report:
    dims = config.dims
    if dims.d > 3 or dims.N > 6:
        raise ConfigError("validate is exhaustive: needs d <= 3 and N <= 6")
    params = config.reservoir

    def one(r, seed):
        field = sample_field(dims, config.mu, seed)
        return validate_map(ring_map(field), field, params, seed)

    results = run_replicas(one, config.seed, config.replicas, config.threads)
    seeds = replica_seeds(config.seed, config.replicas)
    report = Report("validate", seeds=seeds)
    for prop in VALIDATE_PROPERTIES:
        failures = [(seeds[r], res[prop]) for r, res in enumerate(results) if res[prop] is not None]
        detail = {"failures": len(failures)}
        if failures:
            seed, site = failures[0]
            detail["seed"] = seed
            if site >= 0:
                x = decode(site, dims)
                detail["site"] = [x.k, list(x.i)]
        report.add(Check(prop, not failures, value=len(failures), target=0, source=SRC_BIJECTION
                         if prop != "remainder_bound" else SRC_REMAINDER, detail=detail))
    report.summary = {"replicas": config.replicas, "d": dims.d, "N": dims.N, "mu": config.mu}
    return report


# -- fick -------------------------------------------------------------------------------
def _crossing_count(dims: Dims, mu: float, seed: int) -> int:
    return crossing_census(ring_map(sample_field(dims, mu, seed))).n_cross


@experiment("fick")
def run_fick(config: ExperimentConfig) -> Report:
    config.check_feasible()
    kap = config.kappa
    drho = config.rho_minus - config.rho_plus
    sig = config.tol("sigma")
    rel = config.tol("fick_relative")
    seeds = replica_seeds(config.seed, config.replicas)
    report = Report("fick", seeds=seeds)
    per_n = {}
    for N in config.sweep():
        dims = Dims(config.d, N)
        counts = np.array(run_replicas(lambda r, s: _crossing_count(dims, config.mu, s),
                                       config.seed, config.replicas, config.threads))
        density = EnsembleStats((N - 1) * counts / dims.n_horizontal, kap, SRC_KAPPA, sig)
        current = EnsembleStats(N * counts / dims.n_horizontal * drho, kap * drho, SRC_FICK, sig)
        spread = EnsembleStats(counts / N ** (config.d - 1), None, SRC_VARIANCE, sig)
        per_n[N] = (density, current, spread)
        for r, c in enumerate(counts):
            report.census.append({"N": N, "replica": r, "seed": seeds[r], "n_cross": int(c),
                                  "crossing_density": (N - 1) * int(c) / dims.n_horizontal})
        if N == config.N:
            report.add(Check(f"crossing_density_N{N}", density.within(rel * kap), value=density.mean,
                             target=kap, tolerance=density.radius + rel * kap, source=SRC_KAPPA))
            report.add(Check(f"fick_current_N{N}", current.within(rel * kap * abs(drho)), value=current.mean,
                             target=kap * drho, tolerance=current.radius + rel * kap * abs(drho), source=SRC_FICK))
    ns = sorted(per_n)
    if len(ns) > 1:
        devs = [per_n[N][0].deviation() for N in ns]
        variances = [per_n[N][2].variance for N in ns]
        report.add(Check("deviation_non_increasing", non_increasing(devs), value=devs, source=SRC_KAPPA,
                         detail={"N": ns}))
        report.add(Check("variance_decreasing", strictly_decreasing(variances), value=variances,
                         source=SRC_VARIANCE, detail={"N": ns}))
    report.summary = {"kappa": kap, "per_N": {str(N): {"crossing_density": per_n[N][0].to_record(),
                                                      "fick_current": per_n[N][1].to_record(),
                                                      "scaled_crossings": per_n[N][2].to_record()}
                                              for N in ns}}
    return report


# -- relax ------------------------------------------------------------------------------
def relax_times(config: ExperimentConfig) -> list[int]:
    N = config.N
    return [math.ceil(t * N * N) for t in config.times]


def _remainder_row(dims: Dims, mu: float, seed: int, interfaces: Sequence[int], times: Sequence[int],
                   params: ReservoirParams) -> tuple[int, list[float], list[bool]]:
    rmap = ring_map(sample_field(dims, mu, seed))
    bt = backtrack(rmap)
    census = crossing_census(rmap, bt)
    worst, zero = [], []
    for t in times:
        terms = [remainder_terms(rmap, l, t, census, bt) for l in interfaces]
        worst.append(max(abs(tm.value(params, dims.n_horizontal)) for tm in terms))
        zero.append(all(tm == (0, 0, 0) for tm in terms))
    return census.n_cross, worst, zero


@experiment("relax")
def run_relax(config: ExperimentConfig) -> Report:
    config.check_feasible()
    dims = config.dims
    N, kap = dims.N, config.kappa
    params = config.reservoir
    interfaces = list(range(N - 1)) if config.interface in (None, "all") else [int(config.interface)]
    eps = config.epsilon
    if eps is None:
        eps = config.tol("epsilon_fraction") * kap * abs(params.rho_minus - params.rho_plus) / N
    times = relax_times(config)
    full = N ** (dims.d + 1)
    rows = run_replicas(lambda r, s: _remainder_row(dims, config.mu, s, interfaces, times + [full], params),
                        config.seed, config.replicas, config.threads)
    seeds = replica_seeds(config.seed, config.replicas)
    M = config.replicas
    report = Report("relax", seeds=seeds)
    worst = np.array([row[1] for row in rows])
    exceed = (worst[:, :-1] > eps).sum(axis=0)
    prob = exceed / M
    for r, row in enumerate(rows):
        rec = {"replica": r, "seed": seeds[r], "n_cross": row[0]}
        rec.update({f"L_t{t}": v for t, v in zip(times + [full], row[1])})
        report.census.append(rec)
    for t_res, t_abs, c, p in zip(config.times, times, exceed, prob):
        report.series.append({"t_rescaled": t_res, "t": t_abs, "epsilon": eps, "exceed": int(c), "probability": p})

    zero_full = all(row[2][-1] for row in rows)
    report.add(Check("zero_after_full_period", zero_full, value=int(sum(not row[2][-1] for row in rows)),
                     target=0, source=SRC_RELAX, detail={"t": full}))
    report.add(Check("probability_strictly_decreasing", strictly_decreasing(prob.tolist()), value=prob,
                     source=SRC_RELAX, detail={"t_rescaled": config.times, "epsilon": eps}))
    # continuity-corrected log probabilities keep empty tail bins finite
    logp = np.log((exceed + 0.5) / (M + 1))
    slope = float(np.polyfit(np.asarray(config.times, dtype=float), logp, 1)[0]) if len(times) > 1 else 0.0
    report.add(Check("log_linear_slope_negative", slope < 0, value=slope, target=0, source=SRC_RELAX))
    frac = config.tol("min_rate_fraction")
    report.add(Check("decay_rate", -slope >= frac * kap, value=-slope, target=kap, tolerance=frac,
                     source=SRC_RELAX))
    report.summary = {"kappa": kap, "epsilon": eps, "interfaces": interfaces, "times": times,
                      "probability": prob, "fitted_rate": -slope}
    return report


# -- walk -------------------------------------------------------------------------------
@experiment("walk")
def run_walk(config: ExperimentConfig) -> Report:
    nu = config.walk_nu
    sig = config.tol("sigma")
    n = config.samples
    report = Report("walk", seeds=[config.seed])
    stream = iter(range(1 << 20))

    def rng():
        return np.random.default_rng(derive_seed(config.seed, next(stream)))

    worst = 0.0
    for N in (4, 8, 16):
        lam = nu / N ** 2
        for s in range(1, N + 1):
            worst = max(worst, abs(exit_mgf_analytic(s, lam, N, nu) - exit_mgf_solve(s, lam, N, nu)))
    report.add(Check("mgf_analytic_vs_solve", worst <= config.tol("mgf_abs"), value=worst,
                     tolerance=config.tol("mgf_abs"), source=SRC_MGF))

    N = 6
    lam = nu / N ** 2
    mc = {}
    for s in range(2, N):
        mean, se = exit_mgf_monte_carlo(s, lam, N, nu, n, rng())
        exact = exit_mgf_analytic(s, lam, N, nu)
        mc[str(s)] = {"mc": mean, "se": se, "analytic": exact, "solve": exit_mgf_solve(s, lam, N, nu)}
    ok = all(abs(v["mc"] - v["analytic"]) <= sig * v["se"] and abs(v["mc"] - v["solve"]) <= sig * v["se"]
             for v in mc.values())
    report.add(Check("mgf_monte_carlo", ok, value=mc, tolerance=sig, source=SRC_MGF, detail={"N": N, "lambda": lam}))

    exact_ok, solve_err = True, 0.0
    for N in range(3, 11):
        exact = gambler_crossing_exact(N, Fraction(1, 4 * config.d))
        for s in range(1, N + 1):
            exact_ok &= gambler_crossing(s, N) == exact[s - 1]
            solve_err = max(solve_err, abs(gambler_crossing_solve(s, N, nu) - (s - 1) / (N - 1)))
    report.add(Check("gambler_exact", exact_ok, source=SRC_GAMBLER))
    report.add(Check("gambler_solve", solve_err <= config.tol("solve_abs"), value=solve_err,
                     tolerance=config.tol("solve_abs"), source=SRC_GAMBLER))
    gmc = {}
    for N in (3, 5, 9):
        p, _ = slab_crossing_monte_carlo(WalkParams(nu, Dims(config.d, N)), 2, n, rng())
        target = 1 / (N - 1)
        gmc[str(N)] = {"mc": p, "target": target, "radius": sig * math.sqrt(target * (1 - target) / n)}
    report.add(Check("gambler_monte_carlo", all(abs(v["mc"] - v["target"]) <= v["radius"] for v in gmc.values()),
                     value=gmc, source=SRC_GAMBLER))

    N = 8
    tau = exit_times(nu, N, N // 2, n, rng())
    fitted = _tail_rate(tau)
    exact = exit_decay_rate(nu, N)
    rel = config.tol("tail_rate_relative")
    report.add(Check("exit_tail_rate", fitted is not None and abs(fitted - exact) <= rel * exact,
                     value=fitted, target=exact, tolerance=rel, source=SRC_TAIL))

    loops, meets = [], []
    n_values = config.n_values or [4, 6, 8]
    for N in n_values:
        params = WalkParams(nu, Dims(config.d, N))
        start = (0,) * (config.d - 1) + (1,)
        far = (N // 2,) * (config.d - 1) + (1,)
        loops.append(loop_before_exit(params, start, N, n, rng())[0])
        meets.append(intersection_before_exit(params, start, far, N, n, rng())[0])
        report.series.append({"N": N, "loop_before_exit": loops[-1], "intersection_before_exit": meets[-1]})
    report.add(Check("loop_trend", strictly_decreasing(loops), value=loops, source=SRC_LOOP, detail={"N": n_values}))
    report.add(Check("intersection_trend", strictly_decreasing(meets), value=meets, source=SRC_INTERSECT,
                     detail={"N": n_values}))
    report.summary = {"nu": nu, "d": config.d, "samples": n}
    return report


def _tail_rate(tau: np.ndarray, hi: float = 0.2, lo: float = 1e-3) -> float | None:
    """Fitted decay rate of the empirical survival function on [lo, hi]."""
    ts = np.arange(int(tau.max()) + 1)
    surv = 1.0 - np.searchsorted(np.sort(tau), ts, side="right") / tau.size
    window = (surv <= hi) & (surv >= lo)
    if window.sum() < 3:
        return None
    return float(-np.polyfit(ts[window], np.log(surv[window]), 1)[0])


# -- couple -----------------------------------------------------------------------------
def _step_cells(dims: Dims, prev: np.ndarray, nxt: np.ndarray) -> np.ndarray:
    """Cell index: 0 = stay, 1 + 2a = +e_a, 2 + 2a = -e_a."""
    N = dims.N
    disp = nxt - prev
    disp[:, :-1] = (disp[:, :-1] + 1) % N - 1
    cell = np.zeros(prev.shape[0], dtype=np.int64)
    axis = np.argmax(disp != 0, axis=1)
    moved = (disp != 0).any(axis=1)
    sign = disp[np.arange(prev.shape[0]), axis]
    cell[moved] = 1 + 2 * axis[moved] + (sign[moved] < 0)
    return cell


def _kernel_cells(params: WalkParams, j) -> np.ndarray:
    d = params.dims.d
    probs = np.zeros(2 * d + 1)
    for q, p in walk_step_distribution(params, j):
        cell = _step_cells(params.dims, np.array([j]), np.array([q]))[0]
        probs[cell] += float(p)
    return probs


def _chi2(observed: np.ndarray, probs: np.ndarray) -> tuple[float, float, int]:
    """Chi-square p-value over cells with positive probability; min expected count."""
    total = observed.sum()
    live = probs > 0
    if (observed[~live] > 0).any():
        return math.inf, 0.0, 0
    if total == 0 or live.sum() < 2:
        return 0.0, 1.0, int(total)
    expected = probs[live] * total
    stat, p = sps.chisquare(observed[live], expected)
    return float(stat), float(p), int(expected.min())


@experiment("couple")
def run_couple(config: ExperimentConfig) -> Report:
    config.check_feasible()
    dims = config.dims
    d, N, nu = dims.d, dims.N, config.kappa
    sig = config.tol("sigma")
    horizon = config.horizon or 4 * N * N
    n = config.samples
    all_seeds = np.array([derive_seed(config.seed, r) for r in range(n)], dtype=np.uint64)
    counts = {"interior": np.zeros(2 * d + 1, dtype=np.int64), "boundary": np.zeros(2 * d + 1, dtype=np.int64)}
    lengths = []
    over = 0
    chunk = 10_000
    for lo in range(0, n, chunk):
        seeds = all_seeds[lo:lo + chunk]
        rows = np.arange(lo, lo + seeds.size)
        i0 = np.zeros((seeds.size, d), dtype=np.int64)
        i0[:, -1] = rows % N
        tracks = keyed_orbit_tracks(dims, config.mu, seeds, 0, i0, horizon)
        length = tracks.length()
        lengths.append(length)
        pos = tracks.positions
        for s in range(pos.shape[0] - 1):
            live = np.flatnonzero(length > s)
            if not live.size:
                break
            prev, nxt = pos[s, live], pos[s + 1, live]
            cells = _step_cells(dims, prev, nxt)
            edge = (prev[:, -1] == 0) | (prev[:, -1] == N - 1)
            counts["interior"] += np.bincount(cells[~edge], minlength=2 * d + 1)
            # fold the two boundary faces together by mirroring i_d at the top face
            top = prev[:, -1] == N - 1
            mirrored = np.where(top & (cells >= 2 * d - 1), np.where(cells == 2 * d - 1, 2 * d, 2 * d - 1), cells)
            counts["boundary"] += np.bincount(mirrored[edge], minlength=2 * d + 1)
        # dual-route truncation check on the first rows against the per-field loop time
        for b in range(min(20, seeds.size)):
            fld = sample_field(dims, config.mu, int(seeds[b]))
            tl = orbit_loop_time(fld, Site(0, tuple(int(c) for c in i0[b])), horizon)
            over += (tl if tl is not None else -1) != tracks.stop[b]
    lengths = np.concatenate(lengths)

    wp = WalkParams(nu, dims)
    interior_site = (0,) * (d - 1) + (N // 2,)
    kernels = {"interior": _kernel_cells(wp, interior_site), "boundary": _kernel_cells(wp, (0,) * d)}
    report = Report("couple", seeds=[config.seed])
    report.add(Check("truncation_consistent", bool(over == 0), value=int(over), target=0, source=SRC_COUPLING))
    groups = [g for g in ("interior", "boundary") if counts[g].sum() > 0]
    alpha = config.tol("chi2_alpha") / max(len(groups), 1)
    freq = {}
    min_expected = []
    for g in groups:
        obs, probs = counts[g], kernels[g]
        stat, p, emin = _chi2(obs, probs)
        min_expected.append(emin)
        report.add(Check(f"chi2_{g}", p >= alpha, value=p, target=alpha, source=SRC_COUPLING,
                         detail={"statistic": stat, "observed": obs, "expected_probs": probs}))
        total = obs.sum()
        for cell in range(1, 2 * d + 1):
            if probs[cell] == 0:
                continue
            f = obs[cell] / total
            radius = sig * math.sqrt(probs[cell] * (1 - probs[cell]) / total)
            freq[f"{g}_{cell}"] = {"freq": f, "target": probs[cell], "radius": radius}
    report.add(Check("direction_frequencies", all(abs(v["freq"] - v["target"]) <= v["radius"] for v in freq.values()),
                     value=freq, source=SRC_COUPLING))
    report.add(Check("sufficient_samples", bool(min_expected) and min(min_expected) >= 5, value=min_expected,
                     target=5, source=SRC_COUPLING))
    report.add(_independence_check(config, all_seeds[: min(n, 20_000)], horizon, sig))
    report.summary = {"nu": nu, "horizon": horizon, "starts": n, "steps": int(lengths.sum()),
                      "mean_track_length": float(lengths.mean()), "counts": counts}
    return report


def _wrapped_steps(dims: Dims, pos: np.ndarray) -> np.ndarray:
    disp = np.diff(pos, axis=0)
    disp[..., :-1] = (disp[..., :-1] + 1) % dims.N - 1
    return disp


def _independence_check(config: ExperimentConfig, seeds: np.ndarray, horizon: int, sig: float) -> Check:
    """Two orbits in the same field, different levels, far apart: step correlations vanish."""
    dims = config.dims
    d, N = dims.d, dims.N
    x = Site(0, (0,) * (d - 1) + (N // 2,))
    y = Site(N // 2, (N // 2,) * (d - 1) + (N // 2 - 1,))
    tx, ty = keyed_orbit_pairs(dims, config.mu, seeds, x, y, horizon)
    length = tx.length()
    sx, sy = _wrapped_steps(dims, tx.positions), _wrapped_steps(dims, ty.positions)
    live = np.arange(sx.shape[0])[:, None] < length[None, :]
    dot = (sx * sy).sum(axis=-1)[live]
    mx = (sx != 0).any(axis=-1)[live].astype(float)
    my = (sy != 0).any(axis=-1)[live].astype(float)
    cov = (mx - mx.mean()) * (my - my.mean())
    stats = {}
    ok = True
    for name, v in (("step_dot", dot), ("move_covariance", cov)):
        m, se = float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))
        stats[name] = {"mean": m, "se": se}
        ok &= abs(m) <= sig * se if se > 0 else m == 0
    return Check("pair_independence", ok, value=stats, target=0, tolerance=sig, source=SRC_COUPLING,
                 detail={"pairs": int(seeds.size), "steps": int(live.sum())})


# -- orbits -----------------------------------------------------------------------------
@experiment("orbits")
def run_orbits(config: ExperimentConfig, fields: Sequence[ScattererField] | None = None) -> Report:
    """Orbit census of sampled fields, or of the given ``fields``."""
    config.check_feasible()
    dims = config.dims
    if fields is None:
        def one(r, seed):
            return orbit_summary(ring_map(sample_field(dims, config.mu, seed)))
        summaries = run_replicas(one, config.seed, config.replicas, config.threads)
        seeds = replica_seeds(config.seed, config.replicas)
    else:
        summaries = [orbit_summary(ring_map(f)) for f in fields]
        seeds = [f.seed if f.seed is not None else -1 for f in fields]
    report = Report("orbits", seeds=seeds)
    periods: dict[int, int] = {}
    kinds = {"LL": 0, "RR": 0, "LR": 0, "RL": 0}
    partition_ok = balance_ok = True
    for r, s in enumerate(summaries):
        total = sum(int(p) * c for p, c in s["period_histogram"].items())
        partition_ok &= total == s["N"] ** (s["d"] + 1)
        balance_ok &= s["kind_counts"]["LR"] == s["kind_counts"]["RL"]
        for p, c in s["period_histogram"].items():
            periods[int(p)] = periods.get(int(p), 0) + c
        for k, c in s["kind_counts"].items():
            kinds[k] += c
        report.census.append({"replica": r, "seed": seeds[r], "n_cross": s["n_cross"], "n_orbits": s["n_orbits"],
                              "n_excursions": s["n_excursions"], "n_internal_orbits": s["n_internal_orbits"]})
    for p in sorted(periods):
        report.series.append({"period": p, "count": periods[p]})
    report.add(Check("partition", partition_ok, source=SRC_PARTITION))
    report.add(Check("crossing_balance", balance_ok, source=SRC_BIJECTION))
    report.summary = {"period_histogram": {str(p): periods[p] for p in sorted(periods)}, "kind_counts": kinds,
                      "n_cross": [s["n_cross"] for s in summaries]}
    return report
