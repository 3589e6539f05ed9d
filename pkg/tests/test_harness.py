from __future__ import annotations

import json

import numpy as np
import pytest

from lorentz_rings.cli import main
from lorentz_rings.config import ConfigError, ExperimentConfig, config_from_dict, load_config
from lorentz_rings.ensemble import EnsembleStats, Report, Check, replica_seeds, run_replicas, strictly_decreasing
from lorentz_rings.experiments import VALIDATE_PROPERTIES, run_experiment, run_orbits, validate_map
from lorentz_rings.lattice import Dims
from lorentz_rings.orbit import RingMap, ring_map
from lorentz_rings.scatter import ScattererField, sample_field


# -- configuration ----------------------------------------------------------------------------------
def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError):
        config_from_dict({"kind": "validate", "bogus": 1})
    with pytest.raises(ConfigError):
        config_from_dict({"kind": "validate", "tolerances": {"nope": 1.0}})
    (tmp_path / "c.json").write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_config_file_and_overrides(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"kind": "fick", "dims": [3, 5], "mu": 0.1}))
    cfg = load_config(tmp_path / "c.json", mu=0.2, seed=None)
    assert (cfg.kind, cfg.d, cfg.N, cfg.mu, cfg.seed) == ("fick", 3, 5, 0.2, 12345)
    assert "threads" not in cfg.to_record() and cfg.to_record()["tolerances"]["sigma"] == 3.0


@pytest.mark.parametrize("bad", [{"mu": 0.0}, {"mu": 1.0}, {"N": 1}, {"replicas": 0}, {"threads": 0},
                                 {"rho_minus": 1.2}, {"kind": "nope"}, {"interface": "some"}, {"interface": 7},
                                 {"nu": 0.4}])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        config_from_dict(bad)


def test_feasibility_estimate():
    cfg = ExperimentConfig(kind="fick", d=7, N=10)
    with pytest.raises(ConfigError):
        cfg.check_feasible()
    ExperimentConfig(kind="fick", d=2, N=10).check_feasible()


# -- ensemble plumbing --------------------------------------------------------------------------------
def test_replica_scheduling_is_thread_invariant():
    fn = lambda r, s: (r, s % 1000)
    assert run_replicas(fn, 5, 50, 1) == run_replicas(fn, 5, 50, 4)
    seeds = replica_seeds(5, 50)
    assert len(set(seeds)) == 50 and seeds[:10] == replica_seeds(5, 10)


def test_replica_fields_are_independent():
    dims = Dims(2, 6)
    bits = np.array([sample_field(dims, 0.3, s).bits.ravel() for s in replica_seeds(1, 400)], dtype=float)
    bits = bits[:, bits.std(axis=0) > 0]
    corr = np.corrcoef(bits[:, :40].T)
    off = corr[~np.eye(corr.shape[0], dtype=bool)]
    assert np.abs(off).max() < 5 / np.sqrt(400)


def test_ensemble_stats():
    s = EnsembleStats([1.0, 2.0, 3.0], target=2.0)
    assert s.mean == 2.0 and s.variance == 1.0 and s.within()
    assert s.radius == pytest.approx(3 * np.sqrt(1 / 3))
    assert EnsembleStats([5.0]).variance == 0.0
    with pytest.raises(ValueError):
        EnsembleStats([])
    assert strictly_decreasing([3, 2, 1]) and not strictly_decreasing([3, 3, 1])
    r = Report("x", [Check("a", True, value=np.float64(1.5)), Check("b", np.bool_(False))])
    assert not r.passed and json.dumps(r.to_record())


# -- validate ---------------------------------------------------------------------------------------
def test_validate_zero_field_passes():
    fld = ScattererField.zeros(Dims(2, 4))
    assert all(v is None for v in validate_map(ring_map(fld), fld).values())


def test_corrupted_permutation_is_caught():
    fld = sample_field(Dims(2, 4), 0.3, 3)
    good = ring_map(fld)
    fwd = good.forward.copy()
    fwd[5] = fwd[6]  # two sites now share an image
    bad = RingMap(good.dims, fwd, good.backward.copy(), good.layer)
    res = validate_map(bad)
    assert res["bijective"] is not None
    assert set(res) == set(VALIDATE_PROPERTIES)
    # a valid permutation that is not the literal F is caught site by site
    swapped = good.forward.copy()
    swapped[[0, 1]] = swapped[[1, 0]]
    back = np.empty_like(swapped)
    back[swapped] = np.arange(swapped.size)
    assert validate_map(RingMap(good.dims, swapped, back, good.layer), fld)["bijective"] in (0, 1)


def test_validate_refuses_large_boxes():
    with pytest.raises(ConfigError):
        run_experiment(config_from_dict({"kind": "validate", "d": 4, "N": 3}))


# -- experiment edge cases --------------------------------------------------------------------------
def test_orbits_examples(two_scatterer_field):
    zero = run_orbits(config_from_dict({"kind": "orbits", "d": 2, "N": 4}), [ScattererField.zeros(Dims(2, 4))])
    assert zero.summary["period_histogram"] == {"4": 16}
    hand = run_orbits(config_from_dict({"kind": "orbits", "d": 1, "N": 3}), [two_scatterer_field])
    assert hand.summary["period_histogram"] == {"9": 1} and hand.summary["n_cross"] == [1]
    rep = run_experiment(config_from_dict({"kind": "orbits", "d": 2, "N": 4, "replicas": 5}))
    assert rep.passed
    for row in rep.census:
        assert row["n_orbits"] >= 1
    hist = rep.summary["period_histogram"]
    assert sum(int(p) * c for p, c in hist.items()) == 5 * 64


def test_fick_with_vanishing_disorder():
    rep = run_experiment(config_from_dict({"kind": "fick", "mu": 1e-12, "replicas": 5, "n_values": [3, 4]}))
    for stats in rep.summary["per_N"].values():
        assert stats["crossing_density"]["mean"] == 0.0
        assert stats["crossing_density"]["target"] < 1e-11


def test_relax_with_vanishing_disorder():
    rep = run_experiment(config_from_dict({"kind": "relax", "mu": 1e-12, "replicas": 5, "d": 1, "N": 4}))
    assert list(rep.summary["probability"]) == [0.0] * len(rep.summary["times"])
    assert rep.check("zero_after_full_period").passed


def test_couple_with_vanishing_disorder():
    rep = run_experiment(config_from_dict({"kind": "couple", "mu": 1e-9, "samples": 2000, "d": 2, "N": 8}))
    counts = rep.summary["counts"]
    assert all(sum(v[1:]) == 0 for v in counts.values())
    assert rep.check("truncation_consistent").passed


def test_walk_small_run_passes():
    rep = run_experiment(config_from_dict({"kind": "walk", "samples": 2000, "d": 2, "N": 4}))
    assert rep.passed, [c.to_record() for c in rep.checks if not c.passed]


# -- command line -------------------------------------------------------------------------------------
def _run(tmp_path, name, *args):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def test_cli_exit_codes_and_outputs(tmp_path, capsys):
    code, out = _run(tmp_path, "ok", "validate", "--dims", "2,4", "--replicas", "20")
    assert code == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["passed"] and doc["master_seed"] == 12345 and doc["config"]["N"] == 4
    assert (out / "series.csv").exists() and (out / "census.csv").exists()
    assert main(["validate", "--dims", "7,10"]) == 2
    assert main(["fick", "--dims", "7,30", "--replicas", "1"]) == 2
    assert main(["validate", "--mu", "1.5"]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["validate", "--dims", "oops"])
    code, _ = _run(tmp_path, "fail", "relax", "--dims", "1,4", "--mu", "1e-12", "--replicas", "3")
    assert code == 1


def test_cli_prints_report_without_out(capsys):
    assert main(["orbits", "--dims", "1,3", "--replicas", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["kind"] == "orbits"


def test_reports_are_byte_identical_and_thread_invariant(tmp_path):
    args = ["orbits", "--dims", "2,4", "--replicas", "30", "--seed", "99"]
    _, a = _run(tmp_path, "a", *args)
    _, b = _run(tmp_path, "b", *args)
    _, c = _run(tmp_path, "c", *args, "--threads", "3")
    for name in ("report.json", "series.csv", "census.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes() == (c / name).read_bytes()
    _, e = _run(tmp_path, "e", "orbits", "--dims", "2,4", "--replicas", "30", "--seed", "100")
    assert (e / "report.json").read_bytes() != (a / "report.json").read_bytes()
