from __future__ import annotations

import csv
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lorentz_rings.lattice import Dims, Site, boundary_masks, encode
from lorentz_rings.orbit import backtrack, crossing_census, excursions, ring_map
from lorentz_rings.scatter import ScattererField, sample_field
from lorentz_rings.transport import (ReservoirParams, current, current_numerator, evolve, expected_current_exact,
                                     expected_current_terms, expected_current_terms_from_excursions,
                                     filled_state, finite_time_remainder, init_state, record_current_series,
                                     remainder_bound, stationary_current, write_summary)

PARAMS = ReservoirParams(0.8, 0.2, 0.5)


def test_reservoir_params_validated():
    for bad in [(0.0, 0.5, 0.5), (0.5, 1.0, 0.5), (0.5, 0.5, -0.1)]:
        with pytest.raises(ValueError):
            ReservoirParams(*bad)


# -- current ----------------------------------------------------------------------------------
def test_single_particle_current(two_scatterer_field):
    dims = two_scatterer_field.dims
    state = filled_state(dims, 0)
    state.sigma[encode(Site(0, (0,)), dims)] = 1
    assert current(state, two_scatterer_field, 0) == Fraction(1, 3)
    state.sigma[encode(Site(0, (1,)), dims)] = 1
    assert current(state, two_scatterer_field, 0) == 0


def test_current_vanishes_without_scatterers():
    fld = ScattererField.zeros(Dims(2, 4))
    state = init_state(fld.dims, PARAMS, 3)
    assert all(current(state, fld, l) == 0 for l in range(3))


def test_current_of_empty_and_full_states():
    fld = sample_field(Dims(2, 5), 0.3, 4)
    for v in (0, 1):
        assert all(current(filled_state(fld.dims, v), fld, l) == 0 for l in range(4))


def test_interface_range_checked(two_scatterer_field):
    with pytest.raises(ValueError):
        current(filled_state(two_scatterer_field.dims, 0), two_scatterer_field, 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(2, 5), st.floats(0.05, 0.5), st.integers(0, 2 ** 32))
def test_current_bounded_and_forms_agree(d, N, mu, seed):
    dims = Dims(d, N)
    fld = sample_field(dims, mu, seed)
    sigma = np.random.default_rng(seed).integers(0, 2, (8, dims.n_sites)).astype(np.uint8)
    for l in range(N - 1):
        num = current_numerator(sigma, fld, l)  # raises if the two forms disagree
        assert (np.abs(num) <= dims.n_horizontal).all()


# -- dynamics ---------------------------------------------------------------------------------
def test_evolve_is_a_pure_shift_without_scatterers():
    dims = Dims(1, 4)
    fld = ScattererField.zeros(dims)
    state = init_state(dims, PARAMS, 9)
    after = evolve(state, fld, 1)
    interior = ~np.logical_or(*boundary_masks(dims))
    rm = ring_map(fld)
    assert np.array_equal(after.sigma[interior], state.sigma[rm.backward][interior])
    assert after.t == 1


def test_evolve_composes():
    fld = sample_field(Dims(2, 4), 0.3, 5)
    state = init_state(fld.dims, PARAMS, 6, replicas=3)
    a = evolve(evolve(state, fld, 3), fld, 4)
    b = evolve(state, fld, 7)
    assert np.array_equal(a.sigma, b.sigma) and a.t == b.t == 7
    assert np.array_equal(state.sigma, init_state(fld.dims, PARAMS, 6, replicas=3).sigma)  # input untouched


def test_boundary_fill_with_unit_density():
    fld = sample_field(Dims(2, 4), 0.3, 7)
    after = evolve(filled_state(fld.dims, 0), fld, 1, boundary_density=(1.0, 1.0))
    minus, plus = boundary_masks(fld.dims)
    assert after.sigma[minus | plus].all()
    with pytest.raises(ValueError):
        evolve(filled_state(fld.dims, 0), fld, 1)


def test_evolve_rejects_mismatched_dims():
    with pytest.raises(ValueError):
        evolve(init_state(Dims(1, 4), PARAMS, 0), ScattererField.zeros(Dims(1, 5)), 1)


def test_initial_state_densities():
    dims = Dims(1, 5)
    params = ReservoirParams(0.8, 0.2, 0.3)
    state = init_state(dims, params, 11, replicas=10_000)
    minus, plus = boundary_masks(dims)
    interior = ~(minus | plus)
    for mask, rho in ((minus, 0.8), (plus, 0.2), (interior, 0.3)):
        vals = state.sigma[:, mask].mean()
        n = 10_000 * mask.sum()
        assert abs(vals - rho) <= 4 * np.sqrt(rho * (1 - rho) / n)


def test_product_measure_is_stationary_in_law():
    dims = Dims(2, 4)
    fld = sample_field(dims, 0.3, 13)
    params = ReservoirParams(0.4, 0.4, 0.4)
    M = 4000
    state = init_state(dims, params, 14, replicas=M)
    later = evolve(state, fld, 9)
    p = later.sigma.mean(axis=0)
    z = (p - 0.4) / np.sqrt(0.4 * 0.6 / M)
    # Bonferroni at family level 1e-3 over all sites
    assert np.abs(z).max() < 4.5
    # pairwise occupations stay uncorrelated along the orbit structure
    a, b = later.sigma[:, 0].astype(float), later.sigma[:, 1].astype(float)
    assert abs(np.corrcoef(a, b)[0, 1]) < 4.5 / np.sqrt(M)


# -- expected currents -------------------------------------------------------------------------
def test_expected_current_hand_field(two_scatterer_field):
    fld = two_scatterer_field
    params = PARAMS
    census = crossing_census(fld)
    for t in range(27, 40):
        for l in range(2):
            assert expected_current_exact(fld, l, t, params) == pytest.approx((0.8 - 0.2) / 3, abs=1e-15)
            assert finite_time_remainder(fld, l, t, params) == pytest.approx(0.0, abs=1e-15)
    assert stationary_current(census, params) == pytest.approx(0.2)
    assert finite_time_remainder(fld, 0, 0, params) == pytest.approx((0.2 - 0.5) / 3)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(2, 5), st.floats(0.05, 0.5), st.integers(0, 2 ** 32))
def test_expected_current_routes_and_remainder_bound(d, N, mu, seed):
    dims = Dims(d, N)
    rmap = ring_map(sample_field(dims, mu, seed))
    bt = backtrack(rmap)
    census = crossing_census(rmap, bt)
    excs, internal = excursions(rmap)
    for l in range(N - 1):
        for t in (0, 1, 2, N, 3 * N, dims.n_sites):
            assert expected_current_terms(rmap, l, t, bt) == expected_current_terms_from_excursions(excs, internal, l, t)
            L = finite_time_remainder(rmap, l, t, PARAMS, census, bt)
            assert abs(L) <= remainder_bound(census, l, t, PARAMS) + 1e-12
        assert finite_time_remainder(rmap, l, dims.n_sites, PARAMS, census, bt) == 0


def test_expected_current_matches_simulation():
    fld = sample_field(Dims(2, 4), 0.3, 21)
    state = init_state(fld.dims, PARAMS, 22, replicas=20_000)
    for t in (1, 3, 6):
        later = evolve(state, fld, t)
        j = current_numerator(later.sigma, fld, 1) / fld.dims.n_horizontal
        target = expected_current_exact(fld, 1, t, PARAMS)
        assert abs(j.mean() - target) <= 4 * j.std(ddof=1) / np.sqrt(j.size) + 1e-12


# -- exports ----------------------------------------------------------------------------------
def test_series_and_summary_exports(tmp_path, two_scatterer_field):
    fld = two_scatterer_field
    series = record_current_series(init_state(fld.dims, PARAMS, 1, replicas=2), fld, 0, [0, 3, 5], seed=1)
    series.write_csv(tmp_path / "j.csv")
    rows = list(csv.DictReader(open(tmp_path / "j.csv")))
    assert len(rows) == 6 and set(rows[0]) == {"t", "l", "J", "replica", "seed"}
    out = write_summary(tmp_path / "s.json", fld, PARAMS, 30)
    assert json.loads((tmp_path / "s.json").read_text()) == out
    assert out["n_cross"] == 1
    assert out["expected_current"]["0"] == pytest.approx(0.2)
    with pytest.raises(ValueError):
        record_current_series(evolve(init_state(fld.dims, PARAMS, 1), fld, 4), fld, 0, [2], seed=1)
