"""Elliptic and parabolic solves with a distributional first-order term.

The elliptic equation ``L^a u - lam u + b . grad u = f`` is solved by a
fixed-point iteration preconditioned with the exact constant-coefficient
resolvent at the grid-mean diffusion matrix.  When the iteration fails to
contract, ``lam`` is doubled and the solve restarts.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .distributions import DistributionRep, realize_mollified, working_level
from .grid import (
    DiffusionSpec,
    GridFunction,
    SobolevIndex,
    apply_symbol,
    bessel_potential,
    gradient,
    hessian,
    lp_norm,
    quadratic_symbol,
)
from .hypotheses import elliptic_violations
from .reports import fit_scaling

__all__ = [
    "EllipticProblem",
    "SolveReport",
    "SolverDivergence",
    "resolvent_const",
    "apply_operator",
    "solve_elliptic",
    "solve_parabolic",
    "check_apriori_scaling",
    "negative_norm",
]

logger = logging.getLogger(__name__)

LAMBDA_CEILING = 2.0**20
DEFAULT_TOL = 1e-10
MAX_ITER = 200


class SolverDivergence(RuntimeError):
    """Raised when the iteration cannot reach tolerance within the lambda ceiling."""


def resolvent_const(f: GridFunction, a0, lam: float) -> GridFunction:
    """Exact solution of ``a0_ij d_i d_j u - lam u = f`` by the multiplier ``-1/(lam + xi.a0 xi)``."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    return apply_symbol(f, -1.0 / (lam + quadratic_symbol(f.grid, a0)))


def negative_norm(f: GridFunction, idx: SobolevIndex, theta: float = 0.0) -> float:
    """``||f||_{theta - alpha, p}`` for the index ``(alpha, p)``."""
    return lp_norm(bessel_potential(f, theta - idx.alpha), idx.p)


@dataclass(frozen=True, eq=False)
class EllipticProblem:
    """``L^a u - lam u + b2_n . grad u = f`` on the grid of ``f``.

    Parameters
    ----------
    sigma : DiffusionSpec
        Diffusion matrix; ``a = sigma sigma^T / 2``.
    b2 : DistributionRep or None
        Distributional drift, vector valued with ``d`` components.
    lam : float
        Zeroth-order coefficient.
    f : DistributionRep or GridFunction
        Right-hand side, scalar or vector valued.
    moll_level : float, optional
        Mollification level for ``b2``; defaults to half the Nyquist frequency.
    idx : SobolevIndex, optional
        ``(alpha, p)`` of the residual norm; defaults to that of ``b2`` or ``f``.
    """

    sigma: DiffusionSpec
    b2: DistributionRep | None
    lam: float
    f: DistributionRep | GridFunction
    moll_level: float | None = None
    idx: SobolevIndex | None = None

    def __post_init__(self):
        grid = self.rhs.grid
        if self.idx is None:
            src = self.b2 if self.b2 is not None else self.f
            if not isinstance(src, DistributionRep):
                raise ValueError("residual index must be given when neither b2 nor f is a distribution")
            object.__setattr__(self, "idx", src.idx)
        if self.moll_level is None:
            object.__setattr__(self, "moll_level", working_level(grid))
        if self.sigma.d != grid.d:
            raise ValueError("sigma dimension does not match the grid")
        if self.b2 is not None and (self.b2.grid != grid or self.b2.g.components != (grid.d,) * (grid.d > 1)):
            raise ValueError("b2 must be a d-vector distribution on the right-hand-side grid")

    @property
    def grid(self):
        return self.rhs.grid

    @property
    def rhs(self) -> GridFunction:
        return self.f.realize() if isinstance(self.f, DistributionRep) else self.f

    def violations(self) -> list:
        return elliptic_violations(self.idx.alpha, self.idx.p, self.sigma.beta, self.sigma.q, self.grid.d)


@dataclass
class SolveReport:
    """Outcome of an elliptic solve."""

    u: GridFunction
    residual: float
    iterations: int
    lambda_used: float
    theta_norms: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    restarts: int = 0

    def to_dict(self) -> dict:
        return {
            "residual": self.residual,
            "iterations": self.iterations,
            "lambda_used": self.lambda_used,
            "theta_norms": {str(k): v for k, v in self.theta_norms.items()},
            "restarts": self.restarts,
        }


class _Operator:
    """Precomputed coefficient fields of ``L^a - lam + b . grad``."""

    def __init__(self, prob: EllipticProblem):
        grid = prob.grid
        self.grid = grid
        self.a = prob.sigma.diffusion_field(grid)
        self.a0 = prob.sigma.mean_diffusion
        self.a_dev = self.a - self.a0.reshape(self.a0.shape + (1,) * grid.d)
        self.variable = bool(np.any(self.a_dev))
        if prob.b2 is None or prob.b2.is_zero():
            self.drift = None
        else:
            bn = realize_mollified(prob.b2, prob.moll_level).values
            self.drift = bn.reshape((grid.d,) + grid.shape)

    def _scalar_parts(self, u: np.ndarray, with_const: bool):
        """``(a - a0) : D^2 u + b . grad u`` and optionally the full ``a : D^2 u``."""
        f = GridFunction(self.grid, u)
        pert = np.zeros(self.grid.shape)
        full = None
        if self.variable or with_const:
            hess = hessian(f).values
            if self.variable:
                pert = pert + np.einsum("ij...,ij...->...", self.a_dev, hess)
            if with_const:
                full = np.einsum("ij...,ij...->...", self.a, hess)
        if self.drift is not None:
            pert = pert + np.einsum("i...,i...->...", self.drift, gradient(f).values)
        return pert, full

    def perturbation(self, u: GridFunction) -> GridFunction:
        """Part of the operator not inverted by the preconditioner."""
        vals = u.values.reshape((-1,) + self.grid.shape)
        out = np.stack([self._scalar_parts(v, False)[0] for v in vals])
        return GridFunction(self.grid, out.reshape(u.values.shape))

    def apply(self, u: GridFunction, lam: float) -> GridFunction:
        """Full operator ``a : D^2 u - lam u + b . grad u`` from fresh spectral derivatives."""
        vals = u.values.reshape((-1,) + self.grid.shape)
        out = []
        for v in vals:
            f = GridFunction(self.grid, v)
            hess = hessian(f).values
            res = np.einsum("ij...,ij...->...", self.a, hess) - lam * v
            if self.drift is not None:
                res = res + np.einsum("i...,i...->...", self.drift, gradient(f).values)
            out.append(res)
        return GridFunction(self.grid, np.stack(out).reshape(u.values.shape))


def apply_operator(prob: EllipticProblem, u: GridFunction, lam: float | None = None) -> GridFunction:
    """``(L^a - lam + b2_n . grad) u`` for the problem's coefficients."""
    return _Operator(prob).apply(u, prob.lam if lam is None else lam)


def _iterate(op: _Operator, rhs: GridFunction, lam: float, tol_abs: float, idx, u0=None):
    """Run the preconditioned iteration at fixed ``lam``; returns ``(u, history, converged)``."""
    u = resolvent_const(rhs, op.a0, lam) if u0 is None else u0
    history = []
    if op.drift is None and not op.variable:
        res = negative_norm(op.apply(u, lam) - rhs, idx)
        return u, [res], True
    for it in range(MAX_ITER):
        res = negative_norm(op.apply(u, lam) - rhs, idx)
        history.append(res)
        if res <= tol_abs:
            return u, history, True
        if not np.isfinite(res) or (it >= 3 and res > history[-2]):
            return u, history, False
        u = resolvent_const(rhs - op.perturbation(u), op.a0, lam)
    return u, history, False


def solve_elliptic(
    prob: EllipticProblem,
    tol: float = DEFAULT_TOL,
    escalate: bool = True,
    thetas=(0.0, 1.0, 2.0),
    check_hypotheses: bool = True,
) -> SolveReport:
    """Solve ``L^a u - lam u + b2_n . grad u = f`` to relative residual ``tol``.

    The residual is measured in ``||.||_{-alpha,p}`` relative to ``||f||_{-alpha,p}``.

    Parameters
    ----------
    prob : EllipticProblem
    tol : float
        Relative residual target.
    escalate : bool
        Double ``lam`` on divergence (up to ``2^20``); otherwise raise at once.
    thetas : iterable of float
        Orders ``theta`` at which ``||u||_{theta-alpha,p}`` is reported.

    Raises
    ------
    ValueError
        If the exponent hypotheses are violated.
    SolverDivergence
        If no ``lam`` below the ceiling yields a converged solve.
    """
    if not tol > 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    if check_hypotheses:
        bad = prob.violations()
        if bad:
            raise ValueError("hypothesis violation: " + "; ".join(bad))
    op = _Operator(prob)
    rhs = prob.rhs
    fnorm = negative_norm(rhs, prob.idx)
    if fnorm == 0:
        zero = GridFunction(prob.grid, np.zeros(rhs.values.shape))
        return SolveReport(zero, 0.0, 0, prob.lam, {t: 0.0 for t in thetas}, [0.0])
    tol_abs = tol * fnorm
    lam = float(prob.lam)
    restarts = 0
    while True:
        u, history, ok = _iterate(op, rhs, lam, tol_abs, prob.idx)
        if ok:
            break
        if not escalate:
            raise SolverDivergence(
                f"iteration stalled at lambda={lam:g} with relative residual {history[-1] / fnorm:.3e}"
            )
        if 2 * lam > LAMBDA_CEILING:
            raise SolverDivergence(
                f"inconclusive: lambda ceiling {LAMBDA_CEILING:g} reached, "
                f"last relative residual {history[-1] / fnorm:.3e}"
            )
        logger.info("elliptic iteration did not contract at lambda=%g; doubling", lam)
        lam *= 2
        restarts += 1
    residual = negative_norm(op.apply(u, lam) - rhs, prob.idx) / fnorm
    norms = {float(t): negative_norm(u, prob.idx, t) for t in thetas}
    return SolveReport(u, residual, len(history), lam, norms, [h / fnorm for h in history], restarts)


def solve_parabolic(phi0: GridFunction, prob: EllipticProblem, T: float, steps: int, tol: float = DEFAULT_TOL) -> list:
    """Implicit Euler for ``du/dt = (L^a - lam + b2_n . grad) u + f``, ``u(0) = phi0``.

    ``prob.lam`` may be zero here.  Each step is an elliptic solve with
    ``lam + 1/dt`` and right-hand side ``-(u_j/dt + f)``.  Returns the
    trajectory ``[u_0, ..., u_steps]``.
    """
    if steps < 8:
        raise ValueError(f"at least 8 time steps are required, got {steps}")
    if not T > 0:
        raise ValueError(f"horizon must be positive, got {T}")
    dt = T / steps
    lam_step = prob.lam + 1.0 / dt
    src = prob.rhs
    traj = [phi0]
    u = phi0
    for _ in range(steps):
        rhs = -(u * (1.0 / dt) + src)
        step = replace(prob, lam=lam_step, f=rhs, idx=prob.idx)
        rep = solve_elliptic(step, tol=tol, escalate=False, thetas=(), check_hypotheses=False)
        u = rep.u
        traj.append(u)
    return traj


def check_apriori_scaling(
    prob: EllipticProblem,
    lambda_schedule,
    theta_set=(0.0, 1.0, 2.0),
    tolerance: float = 0.15,
    tol: float = DEFAULT_TOL,
) -> dict:
    """Regress ``log ||u_lam||_{theta-alpha,p}`` on ``log lam`` for each ``theta``.

    The expected slope is ``-(1 - theta/2)``.  Every solve must converge at
    its scheduled ``lam``; escalation would corrupt the abscissae.

    Returns
    -------
    dict
        ``theta -> ScalingReport``.
    """
    lams = np.asarray(lambda_schedule, dtype=float)
    if lams.size < 4:
        raise ValueError("lambda schedule must have at least 4 entries")
    ratios = lams[1:] / lams[:-1]
    if not np.allclose(ratios, ratios[0]) or ratios[0] <= 1:
        raise ValueError("lambda schedule must be increasing geometric")
    norms = {float(t): [] for t in theta_set}
    for lam in lams:
        rep = solve_elliptic(replace(prob, lam=float(lam)), tol=tol, escalate=False, thetas=tuple(norms))
        for t in norms:
            norms[t].append(rep.theta_norms[t])
    return {
        t: fit_scaling(lams, vals, -(1 - t / 2), tolerance, "band", label=f"theta={t:g}")
        for t, vals in norms.items()
    }
