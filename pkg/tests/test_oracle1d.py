import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from distsde.distributions import weierstrass
from distsde.drift import ClosedFormDrift, DriftSpec
from distsde.grid import DiffusionSpec, GridSpec, cutoff_profile, mollify, trig_interpolate
from distsde.oracle1d import (
    NonNormalizableError,
    exit_probability,
    export_csv,
    generator_residual,
    invariant_density,
    scale_function,
)
from distsde.sde import mollified_dynamics, simulate_exit

SQRT2 = math.sqrt(2.0)
WINDOW = GridSpec(1, 8.0, 2048)


def zero_potential(y):
    return np.zeros_like(np.asarray(y, dtype=float))


def harmonic(y):
    return -0.5 * np.asarray(y, dtype=float) ** 2


def rough_potential(y, terms=13):
    y = np.asarray(y, dtype=float)
    return harmonic(y) + cutoff_profile(np.abs(y) / 4.0) * weierstrass(y, terms)


def test_driftless_scale_is_identity():
    s = scale_function(zero_potential, 1.0, (-1.0, 1.0), quad_N=2**10)
    x = np.linspace(-1, 1, 21)
    assert np.max(np.abs(s(x) - s(np.array(0.0)) - x)) < 1e-14


def test_harmonic_scale_derivative():
    s = scale_function(harmonic, SQRT2, (-2.0, 2.0), quad_N=2**12)
    x = np.linspace(-2, 2, 17)
    assert np.max(np.abs(s.derivative(x) / np.exp(x**2 / 2) - 1)) < 1e-12


def test_rough_scale_increasing_and_stable():
    coarse = scale_function(rough_potential, 1.0, (-1.0, 1.0), quad_N=2**16)
    fine = scale_function(rough_potential, 1.0, (-1.0, 1.0), quad_N=2**18)
    assert np.all(np.diff(fine.s_values) > 0)
    x = np.linspace(-1, 1, 101)
    assert np.max(np.abs(coarse(x) - fine(x))) <= 1e-6 * fine.s_values[-1]


def test_scale_function_rejects_bad_input():
    with pytest.raises(ValueError):
        scale_function(zero_potential, 1.0, (1.0, -1.0))
    with pytest.raises(ValueError):
        scale_function(zero_potential, 1.0, (-1.0, 1.0), quad_N=7)
    with pytest.raises(ValueError):
        scale_function(zero_potential, 0.0, (-1.0, 1.0), quad_N=8)
    s = scale_function(zero_potential, 1.0, (-1.0, 1.0), quad_N=8)
    with pytest.raises(ValueError):
        s(np.array([2.0]))


def test_driftless_exit_symmetric():
    s = scale_function(zero_potential, 1.0, (-1.0, 1.0), quad_N=2**10)
    assert exit_probability(s, -1.0, 1.0, 0.0) == pytest.approx(0.5, abs=1e-15)


def test_exit_probability_boundary_limits():
    s = scale_function(rough_potential, 1.0, (-1.0, 1.0), quad_N=2**16)
    assert exit_probability(s, -1.0, 1.0, -1.0 + 1e-9) < 1e-8
    assert exit_probability(s, -1.0, 1.0, 1.0 - 1e-9) > 1 - 1e-8
    with pytest.raises(ValueError):
        exit_probability(s, -1.0, 1.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(-0.99, 0.98), dx=st.floats(1e-3, 0.01))
def test_exit_probability_monotone(rough_scale, x, dx):
    assert exit_probability(rough_scale, -1.0, 1.0, x) < exit_probability(rough_scale, -1.0, 1.0, x + dx)


@pytest.fixture(scope="module")
def rough_scale():
    return scale_function(rough_potential, 1.0, (-1.0, 1.0), quad_N=2**16)


def test_ou_exit_probability_matches_euler():
    s = scale_function(harmonic, SQRT2, (-1.0, 1.0), quad_N=2**14)
    oracle = exit_probability(s, -1.0, 1.0, 0.3)
    dyn = mollified_dynamics(DiffusionSpec.identity(1, SQRT2), DriftSpec(ClosedFormDrift("linear", 1.0)))
    sample = simulate_exit(dyn, 0.3, (-1.0, 1.0), 40.0, 2.0**-10, 20_000, seed=4)
    p, se = sample.high_fraction()
    assert sample.exited == 20_000
    assert abs(p - oracle) <= 3 * se


def test_invariant_density_standard_normal():
    s = scale_function(harmonic, SQRT2, (-1.0, 1.0), quad_N=2**10)
    dens = invariant_density(s, WINDOW)
    x = WINDOW.nodes()
    assert np.max(np.abs(dens.values - np.exp(-(x**2) / 2) / math.sqrt(2 * math.pi))) < 1e-8
    assert WINDOW.h * dens.values.sum() == pytest.approx(1.0, abs=1e-10)


def test_invariant_density_rejects_driftless():
    s = scale_function(zero_potential, SQRT2, (-1.0, 1.0), quad_N=2**10)
    with pytest.raises(NonNormalizableError):
        invariant_density(s, WINDOW)


def test_invariant_density_rough_closed_form():
    s = scale_function(rough_potential, SQRT2, (-1.0, 1.0), quad_N=2**10)
    dens = invariant_density(s, WINDOW, quad_N=2**18)
    y = np.linspace(-8.0, 8.0, 2**20 + 1)
    weight = lambda x: np.exp(rough_potential(x) - rough_potential(np.zeros(1))[0])
    mass = integrate.trapezoid(weight(y), y)
    assert np.max(np.abs(dens.values - weight(WINDOW.nodes()) / mass)) < 1e-8
    fine = GridSpec(1, 8.0, 2**18)
    vals = invariant_density(s, fine, quad_N=2**18).values
    assert integrate.simpson(np.r_[vals, vals[0]], dx=fine.h) == pytest.approx(1.0, abs=1e-10)


def test_generator_residual_vanishes_as_mollification_grows():
    grid = GridSpec(1, 8 * np.pi, 4096)
    bump = grid.from_callable(lambda x: 0.6 * np.cos(2 * x))
    potential = lambda y: harmonic(y) + 0.3 * np.sin(2 * np.asarray(y, dtype=float))
    s = scale_function(potential, SQRT2, (-1.0, 1.0), quad_N=2**12)
    res = []
    for n in (2.0, 8.0, 32.0, 128.0):
        smooth = mollify(bump, n)
        res.append(generator_residual(s, lambda y: -y + trig_interpolate(smooth, y)))
    assert all(b < a for a, b in zip(res, res[1:]))
    assert res[-1] < 1e-3


def test_export_csv(tmp_path):
    s = scale_function(harmonic, SQRT2, (-1.0, 1.0), quad_N=2**10)
    path = export_csv(s, tmp_path / "scale.csv", invariant_density(s, WINDOW), n_rows=11)
    rows = path.read_text().splitlines()
    assert rows[0] == "x,s,m"
    assert len(rows) == 12
