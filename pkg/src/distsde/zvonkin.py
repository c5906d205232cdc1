"""Zvonkin diffeomorphism ``Phi = id + u`` removing a distributional drift.

``u`` solves ``(L^a - lam + b2 . grad) u = -b2`` component-wise.  For ``lam``
large the map is a certified bi-Lipschitz perturbation of the identity and
the SDE for ``Y = Phi(X)`` has regular coefficients

    sigma_tilde = (grad Phi . sigma) o Phi^{-1},
    b_tilde     = (lam u + grad Phi . b1) o Phi^{-1}.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import _kernels
from .distributions import DistributionRep, realize_mollified, working_level
from .drift import ClosedFormDrift
from .grid import (
    DiffusionSpec,
    GridFunction,
    GridSpec,
    gradient,
    hessian,
    save_gfn,
    sobolev_norm,
    trig_interpolate,
)
from .interp import SplineField, spline_table
from .pde import EllipticProblem, SolverDivergence, solve_elliptic

__all__ = [
    "ZvonkinMap",
    "TransformedCoeffs",
    "CertificationError",
    "build_map",
    "identity_map",
    "verify_certificates",
    "transformed_coeffs",
    "chain_rule_check",
    "inverse_class_norms",
    "ZvonkinTransformer",
]

logger = logging.getLogger(__name__)

GRAD_BOUND = 0.5
LIPSCHITZ_SLACK = 1.05
DECAY_RTOL = 1e-6
LAMBDA0 = 4.0


class CertificationError(RuntimeError):
    """The map or the transformed coefficients failed a certificate."""


def _jacobian_field(u: GridFunction) -> np.ndarray:
    """``J[i, j] = d_j u_i`` on the nodes, shape ``(d, d, *grid)``."""
    return np.swapaxes(gradient(u).values, 0, 1)


def _op_norms(jac: np.ndarray) -> np.ndarray:
    """Spectral norm of each node's ``d x d`` matrix."""
    d = jac.shape[0]
    mats = np.moveaxis(jac.reshape(d, d, -1), -1, 0)
    if d == 1:
        return np.abs(mats[:, 0, 0])
    return np.linalg.norm(mats, ord=2, axis=(1, 2))


def _upsample_factor(d: int) -> int:
    return 16 if d == 1 else 4


@dataclass(eq=False)
class ZvonkinMap:
    """Certified map ``Phi = id + u`` on a periodic grid.

    Attributes
    ----------
    u : GridFunction
        Displacement with ``d`` components.
    lam : float
        Zeroth-order coefficient of the defining equation.
    grad_u : GridFunction
        Jacobian ``d_j u_i`` with components ``(d, d)``.
    sup_grad : float
        Node maximum of the operator norm of ``grad u``, inflated by 1.05.
    boundary_decay : float
        Max ``|u|`` on the shell ``|x|_inf >= 15 L / 16``.
    certificates : dict
        Named certificate values recorded at construction.
    """

    u: GridFunction
    lam: float
    grad_u: GridFunction
    sup_grad: float
    boundary_decay: float
    certificates: dict = field(default_factory=dict)
    certified: bool = False
    solve_residual: float = 0.0

    def __post_init__(self):
        factor = _upsample_factor(self.grid.d)
        self._u_spline = SplineField(self.u, factor)
        self._g_spline = SplineField(self.grad_u, factor)

    @property
    def grid(self) -> GridSpec:
        return self.u.grid

    @property
    def d(self) -> int:
        return self.grid.d

    def _pts(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float).reshape(-1, self.d)

    def displacement(self, x) -> np.ndarray:
        """``u(x)`` at points ``(m, d)``; shape ``(m, d)``."""
        return self._u_spline(self._pts(x)).T

    def __call__(self, x) -> np.ndarray:
        """``Phi(x) = x + u(x)``."""
        pts = self._pts(x)
        return pts + self.displacement(pts)

    def grad(self, x) -> np.ndarray:
        """``grad u`` at points ``(m, d)``; shape ``(m, d, d)``."""
        pts = self._pts(x)
        return np.moveaxis(self._g_spline(pts), -1, 0)

    def jacobian(self, x) -> np.ndarray:
        """``grad Phi = I + grad u``; shape ``(m, d, d)``."""
        return np.eye(self.d) + self.grad(x)

    def jacobian_det(self, x) -> np.ndarray:
        return np.linalg.det(self.jacobian(x))

    def invert(self, y, tol: float = 1e-12, return_iterations: bool = False):
        """``Phi^{-1}(y)`` by the contraction ``x <- y - u(x)``.

        Converges geometrically with ratio ``sup_grad <= 1/2``.
        """
        y = self._pts(y)
        x = y.copy()
        iters = np.zeros(y.shape[0], dtype=int)
        active = np.ones(y.shape[0], dtype=bool)
        for _ in range(200):
            if not active.any():
                break
            xa = y[active] - self.displacement(x[active])
            step = np.max(np.abs(xa - x[active]), axis=1)
            x[active] = xa
            iters[active] += 1
            idx = np.flatnonzero(active)
            active[idx[step <= tol]] = False
        return (x, iters) if return_iterations else x

    def spline_tables(self) -> tuple:
        """Coefficient table of ``[u, grad u]`` and its grid, for compiled evaluation."""
        return np.concatenate([self._u_spline.coef, self._g_spline.coef]), self._u_spline.grid

    def manifest(self) -> dict:
        return {
            "lambda": self.lam,
            "sup_grad": self.sup_grad,
            "boundary_decay": self.boundary_decay,
            "solve_residual": self.solve_residual,
            "certified": self.certified,
            "certificates": self.certificates,
        }

    def save(self, directory, stem: str = "zvonkin") -> list:
        """Component ``.gfn`` files plus a JSON manifest."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = [save_gfn(self.u, directory / f"{stem}_u.gfn"), save_gfn(self.grad_u, directory / f"{stem}_grad_u.gfn")]
        man = directory / f"{stem}.json"
        man.write_text(json.dumps(self.manifest(), indent=2, sort_keys=True))
        return paths + [man]


def identity_map(grid: GridSpec) -> ZvonkinMap:
    """``Phi = id`` with every certificate trivially satisfied."""
    d = grid.d
    zero_u = GridFunction(grid, np.zeros((d,) + grid.shape))
    zero_g = GridFunction(grid, np.zeros((d, d) + grid.shape))
    certs = {"sup_grad": 0.0, "bilipschitz_min": 1.0, "bilipschitz_max": 1.0, "min_det": 1.0, "residual": 0.0}
    return ZvonkinMap(zero_u, 0.0, zero_g, 0.0, 0.0, certs, True, 0.0)


def _boundary_decay(u: GridFunction) -> float:
    grid = u.grid
    shell = np.max(np.abs(grid.mesh()), axis=0) >= 15 * grid.L / 16
    mag = np.sqrt(np.sum(u.values**2, axis=0))
    return float(mag[shell].max())


def _bilipschitz(phi: ZvonkinMap, n_pairs: int, seed: int) -> tuple:
    """Extremes of ``|Phi(x)-Phi(y)|/|x-y|`` over random far and near pairs."""
    rng = np.random.default_rng(seed)
    d, L = phi.d, phi.grid.L
    half = n_pairs // 2
    x = rng.uniform(-L, L, size=(n_pairs, d))
    y = np.empty_like(x)
    y[:half] = rng.uniform(-L, L, size=(half, d))
    scale = 10.0 ** rng.uniform(-4, 0, size=(n_pairs - half, 1))
    y[half:] = np.clip(x[half:] + scale * rng.standard_normal((n_pairs - half, d)), -L, L - 1e-12)
    dist = np.linalg.norm(x - y, axis=1)
    keep = dist > 0
    ratio = np.linalg.norm(phi(x[keep]) - phi(y[keep]), axis=1) / dist[keep]
    return float(ratio.min()), float(ratio.max())


def verify_certificates(phi: ZvonkinMap, n_pairs: int = 10_000, seed: int = 12345) -> dict:
    """Independent re-check of the four map invariants from fresh spectral derivatives.

    Returns a dict with the recomputed values and an overall ``ok`` flag.
    """
    jac = _jacobian_field(phi.u)
    sup_grad = LIPSCHITZ_SLACK * float(_op_norms(jac).max())
    dets = np.linalg.det(np.moveaxis((jac + np.eye(phi.d).reshape((phi.d, phi.d) + (1,) * phi.d)).reshape(phi.d, phi.d, -1), -1, 0))
    umax = float(np.sqrt(np.sum(phi.u.values**2, axis=0)).max())
    decay = _boundary_decay(phi.u)
    lo, hi = _bilipschitz(phi, n_pairs, seed)
    out = {
        "sup_grad": sup_grad,
        "min_det": float(dets.min()),
        "boundary_decay": decay,
        "bilipschitz_min": lo,
        "bilipschitz_max": hi,
    }
    out["ok"] = bool(
        sup_grad <= GRAD_BOUND
        and out["min_det"] > 0
        and decay <= DECAY_RTOL * umax + 1e-300
        and lo >= 0.5
        and hi <= 2.0
    )
    return out


def build_map(
    sigma: DiffusionSpec,
    b2: DistributionRep | None,
    lambda0: float = LAMBDA0,
    moll_level: float | None = None,
    tol: float = 1e-10,
    n_pairs: int = 10_000,
    seed: int = 0,
    lambda_ceiling: float = 2.0**20,
) -> ZvonkinMap:
    """Solve for ``u`` and double ``lam`` from ``lambda0`` until the map certifies.

    The right-hand side is the mollified drift at ``moll_level`` so the map
    transforms exactly the SDE simulated by the direct pipeline.

    Raises
    ------
    CertificationError
        On boundary-decay failure (torus too small) or ceiling exhaustion.
    """
    if b2 is None or b2.is_zero():
        grid = b2.grid if b2 is not None else None
        if grid is None:
            raise ValueError("a zero drift still needs a grid; pass a zero DistributionRep")
        return identity_map(grid)
    grid = b2.grid
    d = grid.d
    level = working_level(grid) if moll_level is None else moll_level
    bn = realize_mollified(b2, level)
    rhs = GridFunction(grid, -bn.values.reshape((d,) + grid.shape))
    lam = float(lambda0)
    while True:
        prob = EllipticProblem(sigma, b2, lam, rhs, moll_level=level, idx=b2.idx)
        try:
            rep = solve_elliptic(prob, tol=tol, escalate=True, thetas=(0.0, 1.0, 2.0))
        except SolverDivergence as exc:
            raise CertificationError(str(exc)) from exc
        lam = rep.lambda_used
        jac = _jacobian_field(rep.u)
        sup_grad = LIPSCHITZ_SLACK * float(_op_norms(jac).max())
        if sup_grad <= GRAD_BOUND:
            break
        if 2 * lam > lambda_ceiling:
            raise CertificationError(
                f"inconclusive: gradient bound {sup_grad:.3f} > 1/2 at the lambda ceiling {lambda_ceiling:g}"
            )
        logger.info("sup |grad u| = %.3f at lambda=%g; doubling", sup_grad, lam)
        lam *= 2
    u = rep.u
    umax = float(np.sqrt(np.sum(u.values**2, axis=0)).max())
    decay = _boundary_decay(u)
    if decay > DECAY_RTOL * umax:
        raise CertificationError(
            f"boundary decay {decay:.3e} exceeds {DECAY_RTOL:g} * max|u| = {DECAY_RTOL * umax:.3e}; enlarge L"
        )
    certs = {"residual": rep.residual, "theta_norms": {str(k): v for k, v in rep.theta_norms.items()}}
    phi = ZvonkinMap(u, lam, GridFunction(grid, jac), sup_grad, decay, certs, False, rep.residual)
    check = verify_certificates(phi, n_pairs=n_pairs, seed=seed)
    phi.certificates.update({k: v for k, v in check.items() if k != "ok"})
    phi.certificates["spline_error"] = phi._u_spline.validate(1000, seed=seed)
    if not check["ok"]:
        raise CertificationError(f"map failed certification: {check}")
    phi.certified = True
    return phi


# -- transformed coefficients -------------------------------------------------------------


@dataclass(eq=False)
class TransformedCoeffs:
    """Coefficients of the SDE for ``Y = Phi(X)``.

    ``table`` stacks spline coefficients of ``U = u o Phi^{-1}``,
    ``G = (grad u) o Phi^{-1}`` and, if present, the diffusion perturbation
    ``P o Phi^{-1}`` on the refined grid ``table_grid``.  ``kappa_tilde`` are
    the fitted dissipativity constants.
    """

    phi: ZvonkinMap
    sigma: DiffusionSpec
    b1: ClosedFormDrift
    table: np.ndarray = field(repr=False)
    table_grid: GridSpec = None
    has_pert: bool = False
    kappa_tilde: tuple = (0.0, 0.0, 0.0)
    theta: float = 0.0
    ellipticity: tuple = (1.0, 1.0)

    @property
    def d(self) -> int:
        return self.phi.d

    def _eval(self, y):
        y = np.ascontiguousarray(np.asarray(y, dtype=float).reshape(-1, self.d))
        comps = _kernels.spline_batch(self.table, y, self.table_grid.L, self.table_grid.h)
        d = self.d
        U = comps[:d].T
        G = np.moveaxis(comps[d:d + d * d].reshape(d, d, -1), -1, 0)
        P = np.moveaxis(comps[d + d * d:].reshape(d, d, -1), -1, 0) if self.has_pert else 0.0
        return y, U, G, P

    def b_tilde(self, y) -> np.ndarray:
        y, U, G, _ = self._eval(y)
        b1 = self.b1(y - U)
        return self.phi.lam * U + b1 + np.einsum("mik,mk->mi", G, b1)

    def sigma_tilde(self, y) -> np.ndarray:
        y, U, G, P = self._eval(y)
        jac = np.eye(self.d) + G
        sig = np.broadcast_to(self.sigma.base + P, jac.shape)
        return np.einsum("mik,mkj->mij", jac, sig)


def transformed_coeffs(
    phi: ZvonkinMap,
    sigma: DiffusionSpec,
    b1: ClosedFormDrift,
    n_samples: int = 10_000,
    seed: int = 0,
) -> TransformedCoeffs:
    """Tabulate the transformed coefficients and fit dissipativity constants.

    Constants are fitted on ``n_samples`` uniform points of the ball of radius
    ``4 L``: ``kappa0`` is the largest value making the radial inequality hold
    on the tail ``|y| >= L/2`` with the closed-form ``kappa1``; ``kappa1`` and
    ``kappa2`` are then the tightest values over the whole sample.

    Raises
    ------
    CertificationError
        If no positive ``kappa0`` exists (growth ``> 0``) or ellipticity of
        ``sigma_tilde`` leaves ``[1/(4 c0), 4 c0]``.
    """
    grid = phi.grid
    d = grid.d
    fine = grid.refine(_upsample_factor(d))
    nodes = fine.mesh().reshape(d, -1).T
    x = phi.invert(nodes)
    U = phi.displacement(x).T.reshape((d,) + fine.shape)
    G = np.moveaxis(phi.grad(x), 0, -1).reshape((d, d) + fine.shape)
    parts = [U, G]
    has_pert = sigma.perturbation is not None
    if has_pert:
        pert = SplineField(sigma.perturbation, _upsample_factor(d))
        parts.append(pert(x).reshape((d, d) + fine.shape))
    values = np.concatenate([p.reshape((-1,) + fine.shape) for p in parts])
    table = spline_table(values, d)
    tc = TransformedCoeffs(phi, sigma, b1, table, fine, has_pert, theta=b1.growth)

    rng = np.random.default_rng(seed)
    R = 4 * grid.L
    direction = rng.standard_normal((n_samples, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = R * rng.uniform(0, 1, n_samples) ** (1.0 / d)
    y = direction * radius[:, None]
    bt = tc.b_tilde(y)
    r = np.linalg.norm(y, axis=1)
    lhs = np.sum(y * bt, axis=1) / np.sqrt(1 + r**2)
    k0, k1, k2, th = b1.constants
    if th > 0:
        tail = r >= grid.L / 2
        kt0 = float(np.min((k1 - lhs[tail]) / r[tail] ** th))
        if kt0 <= 0:
            raise CertificationError(f"no positive dissipativity constant (kappa0={kt0:.3g}); increase lambda")
    else:
        kt0 = 0.0
    kt1 = float(max(np.max(lhs + kt0 * r**th), 0.0))
    kt2 = float(np.max(np.linalg.norm(bt, axis=1) / (1 + r**th)))
    st = tc.sigma_tilde(y)
    eig = np.linalg.eigvalsh(np.einsum("mik,mjk->mij", st, st))
    lo, hi = float(eig.min()), float(eig.max())
    c0 = sigma.c0
    if lo < 1 / (4 * c0) or hi > 4 * c0:
        raise CertificationError(f"transformed ellipticity [{lo:.3g}, {hi:.3g}] outside [1/(4c0), 4c0], c0={c0:g}")
    tc.kappa_tilde = (kt0, kt1, kt2)
    tc.ellipticity = (lo, hi)
    return tc


# -- consistency checks -------------------------------------------------------------------------


def chain_rule_check(
    phi: ZvonkinMap,
    sigma: DiffusionSpec,
    b1: ClosedFormDrift,
    b2: DistributionRep | None,
    f: GridFunction,
    moll_level: float | None = None,
    interior: float = 0.5,
) -> tuple:
    """Relative residuals of the two Ito chain-rule identities behind the transformation.

    First identity: ``(L^{sigma_tilde} f) o Phi = L^sigma (f o Phi) - (L^sigma Phi) . (grad f) o Phi``.
    Second: ``(b_hat . grad f) o Phi = (L^sigma Phi) . (grad f) o Phi + b . grad (f o Phi)`` with
    ``b_hat o Phi = L^sigma Phi + grad Phi . b`` and ``b = b1 + b2_n``.
    Both sides are evaluated on nodes with ``|x|_inf <= interior * L``.
    """
    grid = phi.grid
    d = grid.d
    if sigma.perturbation is not None:
        raise ValueError("chain-rule check supports constant sigma only")
    nodes = grid.mesh().reshape(d, -1).T
    mask = np.max(np.abs(nodes), axis=1) <= interior * grid.L
    u = phi.u.values.reshape(d, -1).T
    jac = np.moveaxis(phi.grad_u.values.reshape(d, d, -1), -1, 0)
    J = np.eye(d) + jac
    y = nodes + u
    a = 0.5 * sigma.base @ sigma.base.T
    df = gradient(f)
    d2f = hessian(f)
    grad_f_phi = trig_interpolate(df, y).T
    hess_f_phi = np.moveaxis(trig_interpolate(d2f, y), -1, 0)
    f_phi = GridFunction(grid, trig_interpolate(f, y).reshape(grid.shape))
    st = J @ sigma.base
    a_tilde = 0.5 * np.einsum("mik,mjk->mij", st, st)
    lhs1 = np.einsum("mij,mij->m", a_tilde, hess_f_phi)
    lap_fphi = np.einsum("ij,ij...->...", a, hessian(f_phi).values).reshape(-1)
    lap_u = np.einsum("ij,cij...->c...", a, np.stack([hessian(phi.u[c]).values for c in range(d)])).reshape(d, -1).T
    rhs1 = lap_fphi - np.sum(lap_u * grad_f_phi, axis=1)
    b = b1(nodes)
    if b2 is not None and not b2.is_zero():
        level = working_level(grid) if moll_level is None else moll_level
        b = b + realize_mollified(b2, level).values.reshape(d, -1).T
    bhat = lap_u + np.einsum("mij,mj->mi", J, b)
    lhs2 = np.sum(bhat * grad_f_phi, axis=1)
    grad_fphi = gradient(f_phi).values.reshape(d, -1).T
    rhs2 = np.sum(lap_u * grad_f_phi, axis=1) + np.sum(b * grad_fphi, axis=1)

    def rel(l, r):
        scale = max(np.max(np.abs(l[mask])), np.max(np.abs(r[mask])), np.finfo(float).tiny)
        return float(np.max(np.abs(l[mask] - r[mask])) / scale)

    return rel(lhs1, rhs1), rel(lhs2, rhs2)


def inverse_class_norms(phi: ZvonkinMap, order: float, p: float) -> dict:
    """Discrete ``||I - grad(Phi^{-1})||_{order,p}`` and ``||det grad Phi - 1||_{order,p}``."""
    grid = phi.grid
    d = grid.d
    nodes = grid.mesh().reshape(d, -1).T
    x = phi.invert(nodes)
    jinv = np.linalg.inv(phi.jacobian(x))
    dev = (np.eye(d) - jinv).transpose(1, 2, 0).reshape((d, d) + grid.shape)
    det = np.linalg.det(phi.jacobian(nodes)) - 1.0
    return {
        "inverse_jacobian": sobolev_norm(GridFunction(grid, dev), (order, p)),
        "det_minus_one": sobolev_norm(GridFunction(grid, det.reshape(grid.shape)), (order, p)),
    }


# -- estimator facade -----------------------------------------------------------------------------


class ZvonkinTransformer(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` builds the certified map, ``transform`` applies it.

    Parameters
    ----------
    sigma : DiffusionSpec
    lambda0 : float
        Starting value of the doubling schedule.
    moll_level : float, optional
        Mollification level of the drift; half the Nyquist frequency by default.
    seed : int
        Seed of the bi-Lipschitz pair sample.
    """

    def __init__(self, sigma=None, lambda0=LAMBDA0, moll_level=None, seed=0):
        self.sigma = sigma
        self.lambda0 = lambda0
        self.moll_level = moll_level
        self.seed = seed

    def fit(self, X, y=None):
        """``X`` is the distributional drift (a :class:`DistributionRep`)."""
        if not isinstance(X, DistributionRep):
            raise TypeError("fit expects the drift as a DistributionRep")
        sigma = self.sigma if self.sigma is not None else DiffusionSpec.identity(X.grid.d)
        self.map_ = build_map(sigma, X, self.lambda0, self.moll_level, seed=self.seed)
        self.n_features_in_ = X.grid.d
        return self

    def transform(self, X):
        check_is_fitted(self, "map_")
        X = check_array(X, ensure_min_features=self.n_features_in_)
        return self.map_(X)

    def inverse_transform(self, X):
        check_is_fitted(self, "map_")
        X = check_array(X, ensure_min_features=self.n_features_in_)
        return self.map_.invert(X)
