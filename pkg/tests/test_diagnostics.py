import math

import numpy as np
import pytest

from distsde.diagnostics import (
    compare_laws,
    ergodic_suite,
    estimate_density,
    exact_estimate,
    fit_gaussian_envelope,
    gaussian_pdf,
    gradient_envelope,
    increment_scaling,
    krylov_scaling,
    l1_distance,
    moment_bounds,
    stochastic_gronwall_check,
    synthetic_gronwall,
    young_rate,
)
from distsde.distributions import distribution_from_drift
from distsde.drift import ClosedFormDrift, DriftSpec
from distsde.grid import DiffusionSpec, GridSpec
from distsde.sde import fractional_brownian, mollified_dynamics, simulate
from distsde.suite import _gap_pairs

GRID = GridSpec(1, 16.0, 1024)
BROWNIAN = mollified_dynamics(DiffusionSpec.identity(1), DriftSpec(ClosedFormDrift("zero")))
OU = mollified_dynamics(DiffusionSpec.identity(1, math.sqrt(2.0)), DriftSpec(ClosedFormDrift("linear", 1.0)))


def standard_normal(points):
    return gaussian_pdf(points, 0.0, np.eye(1))


@pytest.fixture(scope="module")
def brownian_paths():
    return simulate(BROWNIAN, 0.0, 1.0, 2.0**-8, 100_000, 0, record_every=64)


@pytest.fixture(scope="module")
def brownian_estimate(brownian_paths):
    return estimate_density(brownian_paths, 1.0, seed=0)


def test_brownian_density_estimate(brownian_estimate):
    assert l1_distance(brownian_estimate, standard_normal) <= 0.05


def test_bandwidth_halving_is_stable(brownian_paths, brownian_estimate):
    half = estimate_density(brownian_paths, 1.0, bandwidth=brownian_estimate.bandwidth[0] / 2,
                            window=brownian_estimate.grid, seed=0)
    base = l1_distance(brownian_estimate, standard_normal)
    assert abs(l1_distance(half, standard_normal) - base) < 0.03


def test_density_estimate_needs_enough_paths():
    small = simulate(BROWNIAN, 0.0, 1.0, 2.0**-8, 500, 0, record_every=256)
    with pytest.raises(ValueError):
        estimate_density(small, 1.0)


def test_ou_density_approaches_stationary_law():
    ens = simulate(OU, 2.0, 8.0, 2.0**-8, 10_000, 4, record_every=256)
    l1 = [l1_distance(estimate_density(ens, t, seed=0), standard_normal) for t in (1.0, 4.0, 8.0)]
    assert l1[0] > l1[1] > l1[2]
    assert l1[2] <= 0.05


def test_exact_gaussian_envelope(brownian_estimate):
    fit = fit_gaussian_envelope(exact_estimate(brownian_estimate.grid, 1.0, 0.0, standard_normal))
    assert fit.passed
    assert fit.c1 <= 1.2 and fit.c2 <= 1.2


def test_smaller_region_never_increases_c1(brownian_estimate):
    c1 = [fit_gaussian_envelope(brownian_estimate, r).c1 for r in (3.0, 2.0, 1.0)]
    assert all(b <= a for a, b in zip(c1, c1[1:]))


def test_envelope_without_admissible_bins_raises(brownian_estimate):
    with pytest.raises(ValueError):
        fit_gaussian_envelope(brownian_estimate, max_rel_halfwidth=0.0)


def test_exact_gaussian_gradient_envelope(brownian_estimate):
    grid, delta = brownian_estimate.grid, 0.125
    plus = exact_estimate(grid, 1.0, delta, lambda p: gaussian_pdf(p, delta, np.eye(1)))
    minus = exact_estimate(grid, 1.0, -delta, lambda p: gaussian_pdf(p, -delta, np.eye(1)))
    assert gradient_envelope([plus], [minus], delta).c3 <= 1.5


@pytest.fixture(scope="module")
def shifted_brownian():
    out = {}
    for t in (0.25, 1.0, 4.0):
        delta = math.sqrt(t) / 8
        ens = [simulate(BROWNIAN, s * delta, t, 2.0**-8, 20_000, 3, record_every=int(t * 256)) for s in (1, -1)]
        ref = estimate_density(ens[0], t, seed=0)
        out[t] = (delta, [estimate_density(e, t, window=ref.grid, bandwidth=ref.bandwidth, seed=0) for e in ens])
    return out


def test_gradient_constant_stable_across_times(shifted_brownian):
    c3 = [gradient_envelope([p], [m], delta).c3 for delta, (p, m) in shifted_brownian.values()]
    assert max(c3) <= 2 * min(c3)


def test_gradient_vanishes_at_start_for_symmetric_drift(shifted_brownian):
    for delta, (p, m) in shifted_brownian.values():
        grad = (p.density.values - m.density.values) / (2 * delta)
        centre = np.argmin(np.abs(p.grid.nodes()))
        assert abs(grad[centre]) <= 0.2 * np.max(np.abs(grad))


@pytest.mark.parametrize("m", [1, 2])
def test_krylov_smooth_integrand(m):
    ens = simulate(BROWNIAN, 0.0, 1.0, 2.0**-10, 2000, 1, record_every=1)
    f = distribution_from_drift(GRID.from_callable(lambda x: np.exp(-(x**2))), 0.45, 4.0)
    rep, _ = krylov_scaling(ens, f, _gap_pairs(1.0, 2.0**-10, 24), m=m)
    assert rep.slope >= 2 * m - 0.15


def test_krylov_needs_two_decades():
    ens = simulate(BROWNIAN, 0.0, 1.0, 2.0**-10, 20, 1, record_every=1)
    f = distribution_from_drift(GRID.from_callable(lambda x: np.exp(-(x**2))), 0.45, 4.0)
    pairs = np.stack([np.full(20, 0.25), 0.25 + np.linspace(0.01, 0.1, 20)], axis=1)
    with pytest.raises(ValueError):
        krylov_scaling(ens, f, pairs)


@pytest.mark.parametrize("m", [1, 2])
def test_brownian_increment_scaling(m):
    ens = simulate(BROWNIAN, 0.0, 1.0, 2.0**-10, 2000, 2, record_every=1)
    rep = increment_scaling(ens, _gap_pairs(1.0, 2.0**-10, 24), m)
    assert rep.passed and rep.slope >= m - 0.15


def test_young_rate_on_fractional_brownian():
    K, A = fractional_brownian(0.75, 10, 1000, 0), fractional_brownian(0.75, 10, 1000, 1)
    rep = young_rate(K, A, 0.75, 0.75)
    assert rep.passed and rep.slope >= 0.5 - 0.2


def test_young_rate_needs_complementary_regularity():
    K = np.zeros((1, 257))
    with pytest.raises(ValueError):
        young_rate(K, K, 0.4, 0.5)


def test_brownian_moment_constants_stable():
    ens = simulate(BROWNIAN, 0.0, 8.0, 2.0**-8, 10_000, 7, record_every=256)
    for m in (1, 2):
        assert moment_bounds({T: ens for T in (1.0, 2.0, 4.0, 8.0)}, m).passed


def test_ou_ergodic_density():
    window = GridSpec(1, 8.0, 2048)
    ens = simulate(OU, 0.0, 400.0, 2.0**-8, 20, 2, record_every=256, occupation_grid=window, burn_in=40.0)
    oracle = window.from_callable(lambda x: np.exp(-(x**2) / 2) / math.sqrt(2 * math.pi))
    inv = ergodic_suite(ens, 1.0, oracle=oracle, bandwidth=0.05)
    assert inv.l1 <= 0.05
    assert inv.mass == pytest.approx(1.0, abs=1e-6)


def test_ergodic_suite_guards():
    window = GridSpec(1, 8.0, 256)
    ens = simulate(OU, 0.0, 20.0, 2.0**-6, 4, 0, record_every=64, occupation_grid=window, burn_in=1.0)
    with pytest.raises(ValueError):
        ergodic_suite(ens, 1.0)
    with pytest.raises(ValueError):
        ergodic_suite(ens, 0.0)


@pytest.mark.parametrize("kind", ["trivial", "linear", "random"])
@pytest.mark.parametrize("pq", [(0.5, 0.25), (0.75, 0.5)])
def test_gronwall_constructions_hold(kind, pq):
    rep = stochastic_gronwall_check(*synthetic_gronwall(kind, 10_000, 500), *pq)
    assert rep.hypothesis_ok and rep.passed


def test_gronwall_negative_control_fails():
    rep = stochastic_gronwall_check(*synthetic_gronwall("violating", 10_000, 500), 0.5, 0.25)
    assert not rep.hypothesis_ok and not rep.passed


def test_gronwall_corrupted_process_fails():
    xi, eta, A, mart = synthetic_gronwall("linear", 10_000, 500)
    assert not stochastic_gronwall_check(xi + 10 * eta, eta, A, mart, 0.5, 0.25).passed


def test_gronwall_rejects_bad_exponents():
    procs = synthetic_gronwall("trivial", 10, 10)
    with pytest.raises(ValueError):
        stochastic_gronwall_check(*procs, 0.5, 0.5)


def test_compare_laws_against_itself(brownian_paths):
    cmp = compare_laws(brownian_paths, brownian_paths, 1.0, n_perm=50, seed=0)
    assert cmp.ks == [0.0] and cmp.w1 == [0.0]


def test_compare_laws_seeds_fall_below_null():
    a, b = (simulate(BROWNIAN, 0.0, 1.0, 2.0**-8, 20_000, s, record_every=256) for s in (5, 6))
    cmp = compare_laws(a, b, 1.0, n_perm=100, seed=0)
    assert cmp.ks[0] < cmp.null_q99[0]
    assert cmp.pvalue[0] > 0.01
