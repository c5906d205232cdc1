"""Randomized measurement of the functional inequalities behind the construction.

Each check draws smooth, compactly supported test functions as closed-form
callables, samples them on a base grid and on its refinement, and records
``LHS / RHS``.  The harness measures constants; it proves nothing.

Catalog
-------
``product``            ``||fg||_{a,p} <= C ||f||_{a,p1} ||g||_{a,p2}``
``product_negative``   ``||fg||_{-a,p} <= C ||f||_{-a,p1} ||g||_{a,p2}``
``composition``        ``||f o Phi||_{a,p} <= C ||f||_{a,p}``
``composition_negative`` ``||f o Phi||_{-a,p} <= C ||f||_{-a,p}``
``translation``        ``||f(. + y) - f||_p <= C |y|^a ||Delta^{a/2} f||_p``
``holder``             ``|f(x + y) - f(x)| <= C |y|^{a - d/p} ||Delta^{a/2} f||_p``
``interpolation``      ``||Delta^{a/2} f||_{p b/a} <= C ||f||_inf^{1 - a/b} ||Delta^{b/2} f||_p^{a/b}``
``embedding``          ``||f||_inf + [f]_{a - d/p} <= C ||f||_{a,p}`` (``L^q`` endpoint when ``p a < d``)
``localization``       ``(int ||phi_z f||_{-a,p}^p dz)^{1/p} / ||f||_{-a,p}`` within ``[1/C, C]``
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .grid import GridFunction, GridSpec, cutoff_profile, frac_laplacian, lp_norm, sobolev_norm

__all__ = ["InequalityReport", "CATALOG", "verify_inequality"]

DRIFT_TOL = 0.15
SUPPORT = 2.0
LOCAL_STRIDE = 64


@dataclass
class InequalityReport:
    """Largest ``LHS / RHS`` over the trials and its relative change under ``N -> 2N``.

    For ``localization`` the ratio is two-sided and ``max_ratio`` is the
    smallest ``C`` with every trial inside ``[1/C, C]``.
    """

    id: str
    trials: int
    max_ratio: float
    refinement_drift: float
    max_ratio_refined: float
    exponents: dict = field(default_factory=dict)
    passed: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


class _Field:
    """Random ``chi(|x|/R) sum_k a_k cos(w_k . x + c_k)`` with ``R = SUPPORT``."""

    def __init__(self, gen: np.random.Generator, d: int, n_modes: int = 6, max_freq: float = 6.0):
        self.w = gen.uniform(-max_freq, max_freq, size=(n_modes, d))
        self.a = gen.standard_normal(n_modes) / (1.0 + np.linalg.norm(self.w, axis=1))
        self.c = gen.uniform(0, 2 * np.pi, n_modes)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at points with a leading component axis, shape ``(d, ...)``."""
        phase = np.tensordot(self.w, x, axes=(1, 0)) + self.c.reshape((-1,) + (1,) * (x.ndim - 1))
        series = np.tensordot(self.a, np.cos(phase), axes=(0, 0))
        return cutoff_profile(np.sqrt(np.sum(x**2, axis=0)) / SUPPORT) * series


def _sample(func: Callable, grid: GridSpec) -> GridFunction:
    return GridFunction(grid, func(grid.mesh()))


def _diffeomorphism(gen: np.random.Generator, d: int, strength: float = 0.5) -> Callable:
    """``x + eps psi(x)`` with ``|grad(eps psi)| <= strength`` measured on a fine reference grid."""
    parts = [_Field(gen, d, max_freq=3.0) for _ in range(d)]
    ref = GridSpec(d, 4 * SUPPORT, 4096 if d == 1 else 512)
    h = ref.h
    jac = 0.0
    for psi in parts:
        v = psi(ref.mesh())
        for ax in range(d):
            jac = np.maximum(jac, np.abs(np.gradient(v, h, axis=ax)))
    eps = strength / (d * float(np.max(jac))) if strength > 0 else 0.0

    def phi(x):
        return x + eps * np.stack([psi(x) for psi in parts])

    return phi


def _shift(gen: np.random.Generator, d: int, lo: float, hi: float) -> np.ndarray:
    direction = gen.standard_normal(d)
    return direction / np.linalg.norm(direction) * np.exp(gen.uniform(np.log(lo), np.log(hi)))


# -- individual measurements: each returns (lhs, rhs) on a grid --------------------------------


def _product(gen, grid, ex):
    a, p = ex["alpha"], ex["p"]
    f, g = _Field(gen, grid.d), _Field(gen, grid.d)

    def measure(grid):
        F, G = _sample(f, grid), _sample(g, grid)
        return sobolev_norm(F * G, (a, p)), sobolev_norm(F, (a, ex["p1"])) * sobolev_norm(G, (a, ex["p2"]))

    return measure


def _product_negative(gen, grid, ex):
    a, p = ex["alpha"], ex["p"]
    f, g = _Field(gen, grid.d, max_freq=16.0), _Field(gen, grid.d)

    def measure(grid):
        F, G = _sample(f, grid), _sample(g, grid)
        return sobolev_norm(F * G, (-a, p)), sobolev_norm(F, (-a, ex["p1"])) * sobolev_norm(G, (a, ex["p2"]))

    return measure


def _composition(gen, grid, ex, order_sign=1.0):
    a, p = order_sign * ex["alpha"], ex["p"]
    f = _Field(gen, grid.d, max_freq=8.0)
    phi = _diffeomorphism(gen, grid.d, ex["map_strength"])

    def measure(grid):
        x = grid.mesh()
        return sobolev_norm(GridFunction(grid, f(phi(x))), (a, p)), sobolev_norm(GridFunction(grid, f(x)), (a, p))

    return measure


def _translation(gen, grid, ex):
    a, p = ex["alpha"], ex["p"]
    f = _Field(gen, grid.d)
    y = _shift(gen, grid.d, 0.01, 1.0)

    def measure(grid):
        x = grid.mesh()
        diff = f(x + y.reshape((-1,) + (1,) * grid.d)) - f(x)
        return lp_norm(diff, p, grid), np.linalg.norm(y) ** a * lp_norm(frac_laplacian(_sample(f, grid), a), p)

    return measure


def _holder(gen, grid, ex):
    a, p, d = ex["alpha"], ex["p"], grid.d
    f = _Field(gen, d)
    y = _shift(gen, d, 0.01, 1.0)

    def measure(grid):
        x = grid.mesh()
        diff = np.max(np.abs(f(x + y.reshape((-1,) + (1,) * d)) - f(x)))
        return diff, np.linalg.norm(y) ** (a - d / p) * lp_norm(frac_laplacian(_sample(f, grid), a), p)

    return measure


def _interpolation(gen, grid, ex):
    a, b, p = ex["alpha"], ex["beta"], ex["p"]
    f = _Field(gen, grid.d)

    def measure(grid):
        F = _sample(f, grid)
        lhs = lp_norm(frac_laplacian(F, a), p * b / a)
        rhs = F.max_abs() ** (1 - a / b) * lp_norm(frac_laplacian(F, b), p) ** (a / b)
        return lhs, rhs

    return measure


def _embedding(gen, grid, ex):
    a, p, d = ex["alpha"], ex["p"], grid.d
    f = _Field(gen, d)
    shifts = [_shift(gen, d, 0.01, 1.0) for _ in range(8)]

    def measure(grid):
        x = grid.mesh()
        F = GridFunction(grid, f(x))
        rhs = sobolev_norm(F, (a, p))
        if p * a < d:
            return lp_norm(F, d * p / (d - p * a)), rhs
        theta = a - d / p
        semi = max(np.max(np.abs(f(x + y.reshape((-1,) + (1,) * d)) - F.values)) / np.linalg.norm(y) ** theta for y in shifts)
        return F.max_abs() + semi, rhs

    return measure


def _localization(gen, grid, ex):
    a, p, d = -ex["alpha"], ex["p"], grid.d
    f = _Field(gen, d, max_freq=8.0)

    def bump(x):
        return cutoff_profile(np.sqrt(np.sum(x**2, axis=0)))

    def measure(grid):
        x = grid.mesh()
        F = f(x)
        stride = 2 * grid.L / LOCAL_STRIDE
        zs = -grid.L + stride * np.arange(LOCAL_STRIDE)
        total = 0.0
        for z in np.stack(np.meshgrid(*([zs] * d), indexing="ij")).reshape(d, -1).T:
            local = bump(x - z.reshape((-1,) + (1,) * d)) * F
            if np.any(local):
                total += sobolev_norm(GridFunction(grid, local), (a, p)) ** p
        return (total * stride**d) ** (1 / p), sobolev_norm(GridFunction(grid, F), (a, p))

    return measure


def _conjugate(p: float) -> float:
    return p / (p - 1)


def _exponents(key: str, alpha: float, p: float, beta: float, q: float, d: int) -> dict:
    """Exponents for ``key``, raising ``ValueError`` naming the violated window."""
    ex = {"alpha": alpha, "p": p, "beta": beta, "q": q}
    if key in ("product", "product_negative", "composition", "translation", "holder", "embedding", "interpolation"):
        if not 0 < alpha <= 1:
            raise ValueError(f"{key}: α ∈ (0,1] violated: α={alpha:g}")
    if key == "product":
        # p1 = p2 = 2p sits on the lower edge 1/p <= 1/p1 + 1/p2 < 1/p + α/d.
        ex["p1"] = ex["p2"] = 2 * p
    elif key == "product_negative":
        if not alpha / d > 0:
            raise ValueError(f"{key}: α > 0 violated")
        ex["p1"] = p
        ex["p2"] = max(2 * d / alpha, _conjugate(p))
        if not 1 / ex["p2"] < alpha / d:
            raise ValueError(f"{key}: 1/p1 + 1/p2 < 1/p + α/d violated")
    elif key == "composition_negative":
        if not 0 < beta < 1 or not q > d / beta:
            raise ValueError(f"{key}: β ∈ (0,1), q > d/β violated: β={beta:g}, q={q:g}")
        if not 0 <= alpha <= beta:
            raise ValueError(f"{key}: α ∈ [0,β] violated: α={alpha:g}, β={beta:g}")
        if not p > d / (d - alpha):
            raise ValueError(f"{key}: p > d/(d−α) violated: p={p:g}")
    elif key == "holder":
        if not p * alpha > d:
            raise ValueError(f"{key}: pα > d violated: pα={p * alpha:g}")
    elif key == "interpolation":
        if not 0 < alpha < beta <= 1:
            raise ValueError(f"{key}: 0 < α < β ≤ 1 violated: α={alpha:g}, β={beta:g}")
    elif key == "embedding":
        if p * alpha == d:
            raise ValueError(f"{key}: pα ≠ d violated")
    return ex


_MEASURES = {
    "product": _product,
    "product_negative": _product_negative,
    "composition": _composition,
    "composition_negative": lambda gen, grid, ex: _composition(gen, grid, ex, -1.0),
    "translation": _translation,
    "holder": _holder,
    "interpolation": _interpolation,
    "embedding": _embedding,
    "localization": _localization,
}

CATALOG = tuple(_MEASURES)


def verify_inequality(
    key: str,
    trials: int = 100,
    alpha: float = 0.45,
    p: float = 4.0,
    beta: float = 0.9,
    q: float = 4.0,
    grid: GridSpec | None = None,
    seed: int = 0,
    map_strength: float = 0.5,
) -> InequalityReport:
    """Measure ``max LHS/RHS`` over ``trials`` random inputs on ``grid`` and its refinement.

    Trial ``i`` draws from a generator seeded by ``(seed, i)``, so trials
    are independent of one another and of the trial count.  The random maps
    of the composition checks satisfy ``|grad Phi - I| <= map_strength``
    (0 gives the identity).  Passes when the
    ratio is finite and moves by at most 15% under ``N -> 2N``.

    Raises
    ------
    ValueError
        Unknown ``key`` or exponents outside the inequality's window.
    """
    if key not in _MEASURES:
        raise ValueError(f"unknown inequality {key!r}; choose from {list(CATALOG)}")
    grid = GridSpec(1, 8.0, 256) if grid is None else grid
    if 2 * SUPPORT > grid.L / 2:
        raise ValueError("grid too small for the test-function support")
    ex = _exponents(key, alpha, p, beta, q, grid.d)
    if not 0 <= map_strength < 1:
        raise ValueError(f"map_strength must lie in [0, 1), got {map_strength}")
    ex["map_strength"] = map_strength
    fine = grid.refine(2)
    coarse_r, fine_r = [], []
    for i in range(trials):
        measure = _MEASURES[key](np.random.default_rng([seed, i]), grid, ex)
        for g, out in ((grid, coarse_r), (fine, fine_r)):
            lhs, rhs = measure(g)
            out.append(lhs / rhs if rhs > 0 else np.inf)
    coarse_r, fine_r = np.array(coarse_r), np.array(fine_r)
    if key == "localization":
        coarse_r, fine_r = np.maximum(coarse_r, 1 / coarse_r), np.maximum(fine_r, 1 / fine_r)
    c, f = float(np.max(coarse_r)), float(np.max(fine_r))
    drift = abs(f / c - 1) if np.isfinite(c) and c > 0 else np.inf
    ok = bool(np.isfinite(c) and np.isfinite(f) and drift <= DRIFT_TOL)
    return InequalityReport(key, trials, c, float(drift), f, ex, ok)
