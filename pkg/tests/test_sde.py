import numpy as np
import pytest
from scipy import stats

from distsde.distributions import distribution_from_drift, make_distribution, weierstrass_drift
from distsde.drift import ClosedFormDrift, DriftSpec
from distsde.grid import DiffusionSpec, GridSpec
from distsde.sde import (
    StabilityError,
    fractional_brownian,
    load_ensemble,
    mollified_dynamics,
    simulate,
    simulate_mollified,
    simulate_transformed,
    transformed_dynamics,
    truncate_at_radius,
    young_integral,
    zero_energy_functional,
)
from distsde.zvonkin import identity_map, transformed_coeffs

GRID = GridSpec(1, 16.0, 1024)
SIGMA = DiffusionSpec.identity(1)
ZERO = DriftSpec(ClosedFormDrift("zero"))


@pytest.fixture(scope="module")
def weierstrass():
    return weierstrass_drift(GRID)


def brownian(x0=0.0, T=1.0, dt=2.0**-8, M=10_000, seed=0, d=1, **kw):
    return simulate(mollified_dynamics(DiffusionSpec.identity(d), ZERO), x0, T, dt, M, seed, **kw)


@pytest.mark.parametrize("d", [1, 2])
def test_brownian_variance(d):
    M = 20_000
    ens = brownian(np.zeros(d), M=M, d=d)
    var = ens.at(1.0).var(axis=0, ddof=1)
    assert np.all(np.abs(var - 1.0) <= 3 * np.sqrt(2 / M))


def test_ornstein_uhlenbeck_moments():
    M, x0, T = 20_000, 2.0, 2.0
    dyn = mollified_dynamics(SIGMA, DriftSpec(ClosedFormDrift("linear", 1.0)))
    xt = simulate(dyn, x0, T, 2.0**-10, M, seed=3).at(T)[:, 0]
    mean, var = x0 * np.exp(-T), (1 - np.exp(-2 * T)) / 2
    assert abs(xt.mean() - mean) <= 3 * np.sqrt(var / M)
    assert abs(xt.var(ddof=1) - var) <= 3 * var * np.sqrt(2 / M)


def test_transformed_identity_matches_direct_paths():
    b1 = ClosedFormDrift("saturating", 1.0)
    phi = identity_map(GRID)
    tc = transformed_coeffs(phi, SIGMA, b1, n_samples=2000)
    direct = simulate(mollified_dynamics(SIGMA, DriftSpec(b1)), 0.3, 1.0, 2.0**-8, 2000, seed=5, record_every=16)
    moved = simulate_transformed(0.3, phi, tc, 1.0, 2.0**-8, 2000, seed=5, record_every=16)
    assert np.max(np.abs(direct.states - moved.states)) <= 1e-10


def test_mollification_self_convergence(weierstrass):
    drift = DriftSpec(ClosedFormDrift("saturating", 1.0), weierstrass)
    levels = [6.25, 12.5, 25.0, 50.0]
    ends = [simulate(mollified_dynamics(SIGMA, drift, n), 0.0, 1.0, 2.0**-10, 20_000, seed=2).at(1.0)[:, 0] for n in levels]
    ks = [stats.ks_2samp(a, b).statistic for a, b in zip(ends, ends[1:])]
    assert all(b < a for a, b in zip(ks, ks[1:]))


def test_thread_count_does_not_change_paths(weierstrass):
    dyn = mollified_dynamics(SIGMA, DriftSpec(ClosedFormDrift("saturating", 1.0), weierstrass))
    one = simulate(dyn, 0.0, 0.5, 2.0**-10, 3000, seed=9, record_every=64, n_jobs=1)
    three = simulate(dyn, 0.0, 0.5, 2.0**-10, 3000, seed=9, record_every=64, n_jobs=3)
    assert one.states.tobytes() == three.states.tobytes()
    assert one.running_sup.tobytes() == three.running_sup.tobytes()
    assert one.scenario_hash == three.scenario_hash


def test_seed_changes_paths():
    assert not np.array_equal(brownian(M=100, seed=1).states, brownian(M=100, seed=2).states)


def test_running_sup_dominates_records():
    ens = brownian(M=500, record_every=16)
    assert np.all(ens.running_sup >= np.abs(ens.states[..., 0]) - 1e-15)
    assert np.all(np.diff(ens.running_sup, axis=1) >= 0)


def test_ensemble_round_trip(tmp_path):
    ens = brownian(M=300, record_every=32)
    back = load_ensemble(ens.save(tmp_path / "paths.ens"))
    assert np.array_equal(back.states, ens.states)
    assert back.header() == ens.header()


def test_record_schedule_validation():
    with pytest.raises(ValueError):
        brownian(M=10, record_every=7)
    with pytest.raises(ValueError):
        brownian(M=10, T=1.0, dt=0.3)
    ens = brownian(M=10, record_every=64)
    with pytest.raises(ValueError):
        ens.at(0.1)


def test_mollified_step_size_guard(weierstrass):
    drift = DriftSpec(ClosedFormDrift("zero"), weierstrass)
    with pytest.raises(StabilityError, match="dt"):
        simulate_mollified(0.0, SIGMA, drift, None, 1.0, 0.25, 10, seed=0)


def test_transformed_requires_certified_map():
    phi = identity_map(GRID)
    tc = transformed_coeffs(phi, SIGMA, ClosedFormDrift("zero"), n_samples=500)
    phi.certified = False
    with pytest.raises(ValueError):
        transformed_dynamics(tc)


def test_functional_of_zero_is_zero():
    ens = brownian(M=200, record_every=1)
    f = make_distribution(GRID.zeros(), 0.45, 4.0)
    out = zero_energy_functional(ens, f, [8.0, 16.0])
    assert not np.any(out.values)


def test_functional_of_smooth_integrand_matches_quadrature():
    ens = brownian(M=200, record_every=1)
    func = lambda x: np.exp(-(x**2))
    f = distribution_from_drift(GRID.from_callable(func), 0.45, 4.0)
    out = zero_energy_functional(ens, f, [1e4, 1e5, 1e6])
    vals = func(ens.states[:, :, 0])
    direct = np.zeros_like(vals)
    direct[:, 1:] = np.cumsum(vals[:, :-1], axis=1) * ens.dt
    assert np.max(np.abs(out.values - direct)) <= 1e-6
    assert out.converged


def test_functional_rejects_bad_schedule():
    ens = brownian(M=10, record_every=1)
    f = make_distribution(GRID.zeros(), 0.45, 4.0)
    with pytest.raises(ValueError):
        zero_energy_functional(ens, f, [16.0, 8.0])


def test_young_integral_constant_integrand_exact():
    A = np.cumsum(np.r_[0.0, np.random.default_rng(0).normal(size=256)])[None, :]
    K = np.full_like(A, 2.5)
    for n in range(9):
        assert young_integral(K, A, n)[0] == pytest.approx(2.5 * (A[0, -1] - A[0, 0]), rel=1e-12)


def test_young_integral_smooth_first_order():
    s = np.linspace(0, 1, 2**12 + 1)
    K, A = np.cos(s), s**2
    exact = 2 * (np.cos(1) + np.sin(1)) - 2
    errs = [abs(young_integral(K, A, n) - exact) for n in (6, 7, 8)]
    for a, b in zip(errs, errs[1:]):
        assert 1.8 <= a / b <= 2.2


def test_young_integral_rejects_bad_grid():
    with pytest.raises(ValueError):
        young_integral(np.zeros(10), np.zeros(10), 1)
    with pytest.raises(ValueError):
        young_integral(np.zeros(9), np.zeros(9), 4)


def test_fractional_brownian_variance():
    H = 0.75
    paths = fractional_brownian(H, 8, 20_000, seed=0)
    t = np.linspace(0, 1, 257)
    var = paths.var(axis=0)
    assert paths[:, 0].max() == 0.0
    for k in (64, 128, 256):
        assert var[k] == pytest.approx(t[k] ** (2 * H), rel=0.05)


def test_truncate_with_large_radius_is_unchanged():
    ens = brownian(M=200, record_every=16)
    cut = truncate_at_radius(ens, 1e6)
    assert np.all(cut.stop_index == ens.states.shape[1])
    assert np.array_equal(cut.states, ens.states)


def test_truncate_with_tiny_radius_stops_at_start():
    ens = brownian(x0=0.5, M=200, record_every=16)
    assert np.all(truncate_at_radius(ens, 1e-12).stop_index == 0)


def test_truncation_time_monotone_in_radius():
    ens = brownian(M=500, record_every=4)
    stops = [truncate_at_radius(ens, R).stop_index for R in (0.5, 1.0, 1.5, 2.0)]
    for a, b in zip(stops, stops[1:]):
        assert np.all(b >= a)
