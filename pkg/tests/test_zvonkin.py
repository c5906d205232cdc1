import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from sklearn.base import clone

from distsde.distributions import make_distribution, realize_mollified, weierstrass_drift, working_level
from distsde.drift import ClosedFormDrift
from distsde.grid import DiffusionSpec, GridFunction, GridSpec, sobolev_norm
from distsde.pde import resolvent_const
from distsde.zvonkin import (
    GRAD_BOUND,
    build_map,
    chain_rule_check,
    identity_map,
    inverse_class_norms,
    transformed_coeffs,
    verify_certificates,
    ZvonkinTransformer,
)

ALPHA, P = 0.45, 4.0
GRID = GridSpec(1, 16.0, 1024)
SIGMA = DiffusionSpec.identity(1)


@pytest.fixture(scope="module")
def drift():
    return weierstrass_drift(GRID)


@pytest.fixture(scope="module")
def phi(drift):
    return build_map(SIGMA, drift)


def gaussian(grid, width=1.0):
    return grid.from_callable(lambda x: np.exp(-((x / width) ** 2)))


def test_zero_drift_gives_identity():
    zero = make_distribution(GridFunction(GRID, np.zeros(GRID.shape)), ALPHA, P)
    out = build_map(SIGMA, zero)
    assert out.certified and out.sup_grad == 0.0
    assert not np.any(out.u.values)
    x = np.linspace(-5, 5, 11)[:, None]
    assert np.array_equal(out(x), x)


def test_zero_drift_needs_a_grid():
    with pytest.raises(ValueError):
        build_map(SIGMA, None)


def test_map_certificates(phi):
    assert phi.certified
    assert phi.sup_grad <= GRAD_BOUND
    c = phi.certificates
    assert c["residual"] <= 1e-8
    assert 0.5 <= c["bilipschitz_min"] <= c["bilipschitz_max"] <= 2.0
    assert c["min_det"] > 0
    assert phi.boundary_decay <= 1e-6 * np.max(np.abs(phi.u.values))
    assert c["spline_error"] <= 1e-6


def test_certificates_recheck_independently(phi):
    again = verify_certificates(phi, n_pairs=10_000, seed=99)
    assert again["ok"]
    assert again["sup_grad"] == pytest.approx(phi.sup_grad, rel=1e-12)


@pytest.mark.parametrize("eps", [1e-3, 1e-4])
def test_small_drift_linear_response(drift, eps):
    small = build_map(SIGMA, drift * eps)
    level = working_level(GRID)
    linear = resolvent_const(realize_mollified(drift, level) * -eps, 0.5 * np.eye(1), small.lam)
    u = small.u.values.reshape(GRID.shape)
    assert np.max(np.abs(u - linear.values)) <= 0.01 * np.max(np.abs(u))


def test_small_drift_norm_is_proportional(drift):
    ratios = [sobolev_norm(build_map(SIGMA, drift * eps).u, (2 - ALPHA, P)) / eps for eps in (1e-3, 1e-4)]
    assert ratios[0] == pytest.approx(ratios[1], rel=0.02)


def test_identity_inverts_in_one_step():
    y = np.linspace(-3, 3, 7)[:, None]
    x, iters = identity_map(GRID).invert(y, return_iterations=True)
    assert np.array_equal(x, y)
    assert np.all(iters == 1)


def test_invert_round_trip(phi):
    rng = np.random.default_rng(0)
    x = rng.uniform(-GRID.L, GRID.L, size=(10_000, 1))
    tol = 1e-12
    back, iters = phi.invert(phi(x), tol=tol, return_iterations=True)
    assert np.max(np.abs(back - x)) <= 2 * tol
    assert iters.max() <= math.ceil(math.log2(2 * GRID.L / tol))


def test_invert_is_reentrant(phi):
    rng = np.random.default_rng(1)
    chunks = [rng.uniform(-8, 8, size=(500, 1)) for _ in range(8)]
    serial = [phi.invert(c) for c in chunks]
    with ThreadPoolExecutor(4) as pool:
        threaded = list(pool.map(phi.invert, chunks))
    assert all(np.array_equal(a, b) for a, b in zip(serial, threaded))


def test_transformed_coeffs_of_identity_map():
    b1 = ClosedFormDrift("saturating", 1.0)
    tc = transformed_coeffs(identity_map(GRID), SIGMA, b1, n_samples=2000)
    y = np.linspace(-20, 20, 41)[:, None]
    assert np.array_equal(tc.b_tilde(y), b1(y))
    assert np.array_equal(tc.sigma_tilde(y), np.broadcast_to(SIGMA.base, (41, 1, 1)))


def test_transformed_dissipativity_survives_small_drift(drift):
    b1 = ClosedFormDrift("linear", 1.0)
    small = build_map(SIGMA, drift * 0.2)
    tc = transformed_coeffs(small, SIGMA, b1)
    assert tc.kappa_tilde[0] >= b1.constants[0] / 2


def test_transformed_ellipticity_window(phi):
    tc = transformed_coeffs(phi, SIGMA, ClosedFormDrift("saturating", 1.0))
    lo, hi = tc.ellipticity
    assert 1 / (4 * SIGMA.c0) <= lo <= hi <= 4 * SIGMA.c0


def test_chain_rule_identity_map():
    f = gaussian(GRID)
    r1, r2 = chain_rule_check(identity_map(GRID), SIGMA, ClosedFormDrift("saturating", 1.0), None, f)
    assert r1 < 1e-10 and r2 < 1e-10


def test_chain_rule_heavily_mollified(drift):
    level = 2.0
    smooth_map = build_map(SIGMA, drift, moll_level=level)
    residuals = chain_rule_check(smooth_map, SIGMA, ClosedFormDrift("saturating", 1.0), drift, gaussian(GRID), moll_level=level)
    assert max(residuals) <= 1e-6


def test_chain_rule_refinement():
    level, out = 4.0, []
    for N in (1024, 2048):
        grid = GridSpec(1, 16.0, N)
        b = weierstrass_drift(grid, n_terms=7)
        m = build_map(SIGMA, b, moll_level=level)
        out.append(max(chain_rule_check(m, SIGMA, ClosedFormDrift("saturating", 1.0), b, gaussian(grid), moll_level=level)))
    assert out[0] >= 4 * out[1]


def test_inverse_class_norms_stable_under_refinement():
    norms = []
    for N in (1024, 2048):
        grid = GridSpec(1, 16.0, N)
        norms.append(inverse_class_norms(build_map(SIGMA, weierstrass_drift(grid, n_terms=7)), 1 - ALPHA, P))
    for key in ("inverse_jacobian", "det_minus_one"):
        assert np.isfinite(norms[0][key])
        assert abs(norms[1][key] / norms[0][key] - 1) <= 0.15


def test_save_writes_fields_and_manifest(tmp_path, phi):
    paths = phi.save(tmp_path, "phi")
    assert [p.name for p in paths] == ["phi_u.gfn", "phi_grad_u.gfn", "phi.json"]
    assert all(p.stat().st_size > 0 for p in paths)


def test_transformer_facade(drift, phi):
    est = clone(ZvonkinTransformer(seed=0)).fit(drift)
    x = np.array([[-1.0], [0.0], [0.5]])
    assert np.array_equal(est.transform(x), phi(x))
    assert np.allclose(est.inverse_transform(est.transform(x)), x, atol=1e-11)
    with pytest.raises(TypeError):
        ZvonkinTransformer().fit(np.zeros((3, 1)))
