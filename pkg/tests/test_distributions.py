import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distsde.distributions import (
    compose_distribution,
    distribution_from_drift,
    load_distribution,
    make_distribution,
    product_with_smooth,
    realize_mollified,
    save_distribution,
    support_radius,
    weierstrass,
    weierstrass_drift,
    weierstrass_terms,
    working_level,
)
from distsde.grid import DiffusionSpec, GridFunction, GridSpec, cutoff, lp_norm, sobolev_norm
from distsde.zvonkin import build_map, identity_map

ALPHA, P = 0.45, 4.0
GRID = GridSpec(1, 16.0, 1024)


@pytest.fixture(scope="module")
def drift():
    return weierstrass_drift(GRID)


@pytest.fixture(scope="module")
def headroom():
    """Weierstrass drift with spectral room above its top term, and its certified map."""
    grid = GridSpec(1, 16.0, 2048)
    b = weierstrass_drift(grid, n_terms=7)
    return b, build_map(DiffusionSpec.identity(1), b)


def neg_norm(f):
    return sobolev_norm(f, (-ALPHA, P))


def bump(grid, seed):
    rng = np.random.default_rng(seed)
    c, w, a = rng.uniform(-2, 2), rng.uniform(0.3, 1.5), rng.normal()
    return grid.from_callable(lambda x: a * np.exp(-((x - c) / w) ** 2))


def test_zero_distribution_has_zero_norm():
    b = make_distribution(GRID.zeros(), ALPHA, P)
    assert b.norm() == 0.0 and b.is_zero()
    assert b.support_radius == 0.0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_norm_is_isometric_to_potential(seed):
    g = bump(GRID, seed)
    assert make_distribution(g, ALPHA, P).norm() == lp_norm(g, P)


def test_make_distribution_rejects_wide_support():
    g = GRID.from_callable(lambda x: np.cos(x))
    with pytest.raises(ValueError, match="support"):
        make_distribution(g, ALPHA, P)


@pytest.mark.parametrize("alpha", [0.0, -0.1, 1.2])
def test_make_distribution_rejects_order(alpha):
    with pytest.raises(ValueError):
        make_distribution(bump(GRID, 0), alpha, P)


def test_unresolved_weierstrass_fails_support_certificate():
    with pytest.raises(ValueError, match="support"):
        weierstrass_drift(GridSpec(1, 16.0, 1024), n_terms=13)


def test_resolved_terms_at_default_grid():
    assert weierstrass_terms(GRID) == 7
    assert weierstrass_terms(GridSpec(1, 16.0, 2048)) == 8


def test_weierstrass_series_at_origin():
    assert weierstrass(np.array([0.0]), 3, 0.6)[0] == pytest.approx(1 + 2**-0.6 + 2**-1.2)


def test_weierstrass_norm_stable_under_refinement():
    coarse = weierstrass_drift(GridSpec(1, 16.0, 8192), ALPHA, P, n_terms=13).norm()
    fine = weierstrass_drift(GridSpec(1, 16.0, 16384), ALPHA, P, n_terms=13).norm()
    assert np.isfinite(coarse)
    assert abs(fine / coarse - 1) <= 0.05


def test_weierstrass_drift_support(drift):
    assert drift.support_radius <= 8.0
    assert support_radius(drift.realize()) <= 8.0


def test_mollified_zero_is_zero():
    b = make_distribution(GRID.zeros(), ALPHA, P)
    assert not np.any(realize_mollified(b, 3.0).values)


def test_mollified_smooth_drift_recovered_at_large_level():
    raw = bump(GRID, 3)
    b = distribution_from_drift(raw, ALPHA, P)
    assert np.max(np.abs(realize_mollified(b, 1e6).values - raw.values)) < 1e-8


def test_mollified_sup_growth_rate(drift):
    levels = np.array([4.0, 8.0, 16.0, 32.0])
    sup = np.array([np.max(np.abs(realize_mollified(drift, n).values)) for n in levels])
    normalized = sup / levels ** (1 - 0.6)
    assert normalized.max() / normalized.min() <= 2.0


def test_mollification_contracts_norm(drift):
    for n in (1.0, 4.0, 16.0, 64.0, 256.0, 1e4):
        assert neg_norm(realize_mollified(drift, n)) <= drift.norm() * (1 + 1e-6)


def test_mollification_is_cauchy(drift):
    levels = [2.0**j for j in range(2, 9)]
    real = [realize_mollified(drift, n) for n in levels]
    gaps = [neg_norm(a - b) for a, b in zip(real[:-1], real[1:])]
    assert np.all(np.diff(gaps) < 0)


def test_product_with_one_is_mollified_drift(drift):
    one = GridFunction(GRID, np.ones(GRID.shape))
    prod = product_with_smooth(drift, one)
    ref = realize_mollified(drift, working_level(GRID))
    assert np.max(np.abs(prod.realize().values - ref.values)) < 1e-12 * np.max(np.abs(ref.values))


def test_product_with_one_recovers_drift_in_the_limit(drift):
    one = GridFunction(GRID, np.ones(GRID.shape))
    prod = product_with_smooth(drift, one, n=1e6)
    assert neg_norm(prod.realize() - drift.realize()) <= 1e-8 * drift.norm()


def test_product_of_zero_distribution():
    b = make_distribution(GRID.zeros(), ALPHA, P)
    assert product_with_smooth(b, cutoff(GRID, 2.0)).is_zero()


def test_product_rejects_vector_factor(drift):
    vec = GridFunction(GRID, np.ones((2,) + GRID.shape))
    with pytest.raises(ValueError):
        product_with_smooth(drift, vec)


def test_compose_with_identity(drift):
    out = compose_distribution(drift, identity_map(GRID))
    assert np.max(np.abs(out.realize().values - drift.realize().values)) < 1e-12 * np.max(np.abs(drift.realize().values))


def test_compose_rejects_uncertified_map(drift):
    phi = identity_map(GRID)
    phi.certified = False
    with pytest.raises(ValueError, match="certified"):
        compose_distribution(drift, phi)


def test_compose_round_trip(headroom):
    b, phi = headroom
    back = compose_distribution(compose_distribution(b, phi, inverse=True), phi)
    assert sobolev_norm(back.realize() - b.realize(), (-ALPHA, P)) <= 0.01 * b.norm()


def test_compose_smooth_matches_pointwise(headroom):
    b, phi = headroom
    grid = b.grid
    func = lambda x: np.exp(-x**2) * np.cos(x)
    smooth = distribution_from_drift(grid.from_callable(func), ALPHA, P)
    out = compose_distribution(smooth, phi).realize().values
    y = phi(grid.nodes()[:, None])[:, 0]
    assert np.max(np.abs(out - func(y))) < 1e-6


def test_compose_is_linear(headroom):
    b, phi = headroom
    c = distribution_from_drift(bump(b.grid, 5), ALPHA, P)
    lhs = compose_distribution(b + c, phi).realize().values
    rhs = compose_distribution(b, phi).realize().values + compose_distribution(c, phi).realize().values
    assert np.max(np.abs(lhs - rhs)) < 1e-10 * np.max(np.abs(rhs))


def test_distribution_arithmetic(drift):
    twice = drift + drift
    assert twice.norm() == pytest.approx(2 * drift.norm(), rel=1e-14)
    assert (-drift).norm() == pytest.approx(drift.norm(), rel=1e-14)
    with pytest.raises(ValueError):
        drift + distribution_from_drift(bump(GRID, 1), 0.3, P)


def test_distribution_round_trip(tmp_path, drift):
    gfn, sidecar = save_distribution(drift, tmp_path / "b2")
    assert gfn.suffix == ".gfn" and sidecar.suffix == ".json"
    back = load_distribution(tmp_path / "b2")
    assert back.idx == drift.idx
    assert back.support_radius == drift.support_radius
    assert np.array_equal(back.g.values, drift.g.values)
