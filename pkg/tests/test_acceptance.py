"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The long-running criteria (crossing density at d=7, relaxation at d=7) take
a few minutes each.
"""
from __future__ import annotations

import json
import math
import os

import numpy as np
import pytest

from lorentz_rings.cli import main
from lorentz_rings.config import config_from_dict
from lorentz_rings.experiments import VALIDATE_PROPERTIES, run_experiment
from lorentz_rings.lattice import Dims
from lorentz_rings.orbit import crossing_census, ring_map
from lorentz_rings.prf import derive_seed
from lorentz_rings.scatter import enumerate_jump_probability, kappa, keyed_edge_bits, local_partner, sample_field
from lorentz_rings.transport import ReservoirParams, current_numerator, evolve, init_state, stationary_current

THREADS = max(1, min(4, os.cpu_count() or 1))


@pytest.fixture
def verdict(capsys):
    def emit(number: int, title: str, passed: bool, detail: str = "") -> None:
        with capsys.disabled():
            print(f"\nACCEPTANCE {number} {'PASS' if passed else 'FAIL'}: {title}" + (f" ({detail})" if detail else ""))
    return emit


def _failed(report) -> list[str]:
    return [c.name for c in report.checks if not c.passed]


def test_exact_structural_suite(verdict):
    failures = []
    mus = (0.05, 0.15, 0.3, 0.5)
    for d in (1, 2, 3):
        for N in range(2, 6):
            for j, mu in enumerate(mus):
                # 4 x 25 = 100 seeds per (d, N), spread over the disorder range
                cfg = config_from_dict({"kind": "validate", "d": d, "N": N, "mu": mu, "replicas": 25,
                                        "seed": 1000 * d + 10 * N + j})
                rep = run_experiment(cfg)
                assert [c.name for c in rep.checks] == list(VALIDATE_PROPERTIES)
                failures += [(d, N, mu, name) for name in _failed(rep)]
    verdict(1, "exact structural suite", not failures, f"violations={failures[:5]}")
    assert not failures


def test_jump_probability_oracles(verdict):
    grid = np.linspace(0.05, 0.95, 19)
    worst = max(abs(enumerate_jump_probability(d)(mu) - mu * (1 - mu) ** (4 * d - 2))
                for d in (1, 2, 3) for mu in grid)
    n, mu = 100_000, 0.2
    freq_ok, rows = True, []
    for d in (1, 2, 3):
        dims = Dims(d, 6)
        seeds = np.array([derive_seed(77 + d, r) for r in range(n)], dtype=np.uint64)
        i = np.tile([2] * d, (n, 1))
        out = local_partner(keyed_edge_bits(dims, mu, seeds), dims, 3, i)
        kap = kappa(mu, d)
        radius = 3 * math.sqrt(kap * (1 - kap) / n)
        for a in range(d):
            for s in (-1, 1):
                target = i.copy()
                target[:, a] += s
                f = float((out == target).all(axis=1).mean())
                freq_ok &= abs(f - kap) <= radius
                rows.append(round(f / kap, 3))
    ok = worst <= 1e-12 and freq_ok
    verdict(2, "jump probability oracles", ok, f"max enumeration error={worst:.2e}, freq/kappa={rows}")
    assert worst <= 1e-12
    assert freq_ok


def test_stationary_current_identity(verdict):
    dims = Dims(2, 4)
    params = ReservoirParams(0.8, 0.2, 0.5)
    M = 10_000
    t = dims.N ** (dims.d + 1)
    radius = 3 * math.sqrt(2 / (M * dims.n_horizontal))
    # fixed fields: the first three sampled fields with crossings and two without
    with_cross, without = [], []
    for f in range(1000):
        rmap = ring_map(sample_field(dims, 0.2, derive_seed(2024, f)))
        (with_cross if crossing_census(rmap).n_cross else without).append(rmap)
        if len(with_cross) >= 3 and len(without) >= 2:
            break
    worst, crossing_fields = 0.0, 0
    for f, rmap in enumerate(with_cross[:3] + without[:2]):
        exact = stationary_current(crossing_census(rmap), params)
        crossing_fields += exact != 0
        state = evolve(init_state(dims, params, derive_seed(4048, f), replicas=M), rmap, t)
        for l in range(dims.N - 1):
            j = current_numerator(state.sigma, rmap, l) / dims.n_horizontal
            worst = max(worst, abs(float(j.mean()) - exact))
    ok = worst <= radius and crossing_fields > 0
    verdict(3, "stationary current identity", ok,
            f"max |mean J - oracle|={worst:.4f}, radius={radius:.4f}, fields with crossings={crossing_fields}")
    assert ok


@pytest.fixture(scope="module")
def walk_report():
    cfg = config_from_dict({"kind": "walk", "d": 7, "N": 6, "nu": 1 / 14, "samples": 100_000, "seed": 31})
    return run_experiment(cfg)


def test_exit_time_generating_function(verdict, walk_report):
    a, b = walk_report.check("mgf_analytic_vs_solve"), walk_report.check("mgf_monte_carlo")
    ok = a.passed and b.passed
    verdict(4, "exit-time generating function", ok, f"max |analytic - solve|={a.value:.2e}")
    assert ok


def test_gamblers_ruin(verdict, walk_report):
    names = ("gambler_monte_carlo", "gambler_solve", "gambler_exact")
    checks = [walk_report.check(n) for n in names]
    ok = all(c.passed for c in checks)
    mc = {N: round(v["mc"], 4) for N, v in checks[0].value.items()}
    verdict(5, "gambler's ruin", ok, f"crossing frequencies={mc}, solve error={checks[1].value:.1e}")
    assert ok


def test_crossing_density_at_desk_scale(verdict):
    cfg = config_from_dict({"kind": "fick", "d": 7, "N": 4, "mu": 0.1, "replicas": 200, "n_values": [3, 4, 5],
                            "seed": 7, "threads": THREADS})
    rep = run_experiment(cfg)
    means = {N: v["crossing_density"]["mean"] for N, v in rep.summary["per_N"].items()}
    verdict(6, "crossing density and Fick trends at d=7", rep.passed,
            f"kappa={rep.summary['kappa']:.3e}, means={means}, failing={_failed(rep)}")
    assert rep.passed, _failed(rep)


def test_relaxation(verdict):
    cfg = config_from_dict({"kind": "relax", "d": 7, "N": 4, "mu": 0.1, "replicas": 2000, "interface": "all",
                            "seed": 11, "threads": THREADS})
    rep = run_experiment(cfg)
    verdict(7, "relaxation of the finite-time remainder", rep.passed,
            f"P[|L|>eps]={[round(float(p), 4) for p in rep.summary['probability']]}, failing={_failed(rep)}")
    assert rep.passed, _failed(rep)


def test_orbit_walk_coupling(verdict):
    cfg = config_from_dict({"kind": "couple", "d": 2, "N": 16, "mu": 0.2, "samples": 100_000, "seed": 3})
    rep = run_experiment(cfg)
    p = {g: round(rep.check(f"chi2_{g}").value, 3) for g in ("interior", "boundary")}
    verdict(8, "orbit to lazy-walk coupling", rep.passed, f"chi2 p-values={p}, failing={_failed(rep)}")
    assert rep.passed, _failed(rep)


def test_reproducibility(verdict, tmp_path):
    runs = {}
    for name, threads in (("a", 1), ("b", 1), ("c", THREADS + 2)):
        for kind, dims in (("validate", "2,4"), ("fick", "3,4"), ("relax", "2,4")):
            out = tmp_path / f"{kind}_{name}"
            main([kind, "--dims", dims, "--replicas", "40", "--seed", "5", "--threads", str(threads),
                  "--out", str(out)])
            runs[kind, name] = {f: (out / f).read_bytes() for f in ("report.json", "series.csv", "census.csv")}
    identical = all(runs[k, "a"] == runs[k, "b"] for k in ("validate", "fick", "relax"))
    thread_free = all(runs[k, "a"] == runs[k, "c"] for k in ("validate", "fick", "relax"))
    nonempty = all(json.loads(runs[k, "a"]["report.json"])["checks"] for k in ("validate", "fick", "relax"))
    ok = identical and thread_free and nonempty
    verdict(9, "reproducibility", ok, f"byte-identical={identical}, thread-invariant={thread_free}")
    assert ok
