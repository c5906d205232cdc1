"""Exact one-dimensional answers from the scale function and the speed measure.

For ``dX = sigma(X) dB + b(X) dt`` with ``b = B'`` for a continuous ``B``,
the harmonic scale ``s`` solves ``a s'' + b s' = 0`` with ``a = sigma^2/2``:

    s'(y) = exp(-int_0^y 2 b / sigma^2),

and the speed density is ``m = 1 / (sigma^2 s')``.  The Stieltjes integral is
evaluated by parts, so only ``B`` itself (never ``b``) is sampled:

    int_0^y 2 b / sigma^2 = 2 B(y) / sigma^2(y) - 2 B(0) / sigma^2(0) - int_0^y 2 B (sigma^-2)' .
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .grid import GridFunction, GridSpec

__all__ = [
    "ScaleFunction",
    "NonNormalizableError",
    "scale_function",
    "exit_probability",
    "invariant_density",
    "generator_residual",
    "export_csv",
]

TAIL_TOL = 1e-8


class NonNormalizableError(ValueError):
    """The speed measure has infinite (or numerically unbounded) mass."""


def _sigma_callable(sigma) -> Callable:
    if callable(sigma):
        return sigma
    value = float(sigma)
    return lambda y: np.full_like(np.asarray(y, dtype=float), value)


def _drift_exponent(Bfun: Callable, sigma: Callable, y: np.ndarray) -> np.ndarray:
    """``int_0^y 2 b / sigma^2`` on an increasing grid ``y`` by integration by parts."""
    inv2 = 1.0 / sigma(y) ** 2
    B0 = float(Bfun(np.zeros(1))[0])
    s0 = float(sigma(np.zeros(1))[0])
    B = Bfun(y)
    out = 2.0 * B * inv2 - 2.0 * B0 / s0**2
    dinv2 = np.gradient(inv2, y, edge_order=2)
    if np.any(dinv2 != 0):
        corr = cumulative_simpson(2.0 * B * dinv2, x=y, initial=0.0)
        out -= corr - np.interp(0.0, y, corr)
    return out


def _log_speed(Bfun: Callable, sigma: Callable, y: np.ndarray) -> np.ndarray:
    """Unnormalized ``log m = int_0^y 2 b / sigma^2 - 2 log|sigma|``."""
    return _drift_exponent(Bfun, sigma, y) - 2.0 * np.log(np.abs(sigma(y)))


@dataclass(frozen=True, eq=False)
class ScaleFunction:
    """Scale function tabulated on a fine quadrature grid.

    Attributes
    ----------
    nodes : ndarray
        Increasing quadrature nodes spanning ``interval``.
    s_values : ndarray
        ``s`` at ``nodes`` with ``s(interval[0]) = 0``.
    s_prime : ndarray
        ``s'`` at ``nodes``.
    """

    Bfun: Callable
    sigma: Callable
    interval: tuple
    nodes: np.ndarray = field(repr=False)
    s_values: np.ndarray = field(repr=False)
    s_prime: np.ndarray = field(repr=False)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.interval
        if np.any((x < lo) | (x > hi)):
            raise ValueError(f"points outside the scale interval {self.interval}")
        return np.interp(x, self.nodes, self.s_values)

    def derivative(self, x) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=float), self.nodes, self.s_prime)


def scale_function(Bfun: Callable, sigma=1.0, interval: tuple = (-1.0, 1.0), quad_N: int = 2**20) -> ScaleFunction:
    """Tabulate the harmonic scale function on ``interval`` with ``quad_N`` Simpson cells.

    Parameters
    ----------
    Bfun : callable
        Continuous antiderivative ``B`` of the drift, vectorized.
    sigma : float or callable
        Diffusion coefficient; must stay bounded away from 0 on ``interval``.
    """
    lo, hi = map(float, interval)
    if not lo < hi:
        raise ValueError(f"empty interval {interval}")
    if quad_N < 2 or quad_N % 2:
        raise ValueError("quad_N must be a positive even number of cells")
    sig = _sigma_callable(sigma)
    y = np.linspace(lo, hi, quad_N + 1)
    sv = sig(y)
    if not np.all(np.isfinite(sv)) or np.min(np.abs(sv)) < 1e-8:
        raise ValueError("sigma degenerates on the scale interval")
    sp = np.exp(-_drift_exponent(Bfun, sig, y))
    s = cumulative_simpson(sp, x=y, initial=0.0)
    if not np.all(np.diff(s) > 0):
        raise ValueError("scale function is not strictly increasing; refine quad_N")
    return ScaleFunction(Bfun, sig, (lo, hi), y, s, sp)


def exit_probability(s: ScaleFunction, a: float, bb: float, x: float) -> float:
    """Probability of leaving ``(a, bb)`` through ``bb`` when started at ``x``."""
    if not a < x < bb:
        raise ValueError(f"need a < x < bb, got a={a}, x={x}, bb={bb}")
    sa, sx, sb = s(np.array([a, x, bb]))
    return float((sx - sa) / (sb - sa))


def _tail_mass(s: "ScaleFunction", edge: float, width: float, direction: int, offset: float, quad_N: int) -> float:
    """Speed mass beyond ``edge`` (scaled by ``exp(-offset)``): quadrature over ``2 width`` plus an exponential envelope."""
    y = np.linspace(edge, edge + 2.0 * width, quad_N + 1) if direction > 0 else np.linspace(edge - 2.0 * width, edge, quad_N + 1)
    logm = _log_speed(s.Bfun, s.sigma, y) - offset
    if direction < 0:
        logm = logm[::-1]
    mid, end = logm[quad_N // 2], logm[-1]
    if not end < mid:
        return np.inf
    near = simpson(np.exp(logm), dx=2.0 * width / quad_N)
    rate = (mid - end) / width
    return float(near + np.exp(end) / rate)


def invariant_density(s: ScaleFunction, window: GridSpec, quad_N: int = 2**18) -> GridFunction:
    """Normalized speed density ``m = 1 / (sigma^2 s')`` on ``window`` (a 1d grid).

    Only ``s.Bfun`` and ``s.sigma`` are used, so the window may exceed the
    scale interval.  The normalizing mass is the Simpson integral over
    ``[-L, L]``; the mass beyond it is bounded by quadrature over
    ``[L, 3L]`` and an exponential envelope fitted on ``[2L, 3L]``.

    Raises
    ------
    NonNormalizableError
        If the relative tail mass is not below ``1e-8``.
    """
    if window.d != 1:
        raise ValueError("invariant density oracle is one-dimensional")
    L = window.L
    y = np.linspace(-L, L, quad_N + 1)
    logm = _log_speed(s.Bfun, s.sigma, y)
    offset = float(np.max(logm))
    mass = simpson(np.exp(logm - offset), x=y)
    tails = sum(_tail_mass(s, e, L, dirn, offset, quad_N) for e, dirn in ((L, 1), (-L, -1)))
    if not tails / mass < TAIL_TOL:
        raise NonNormalizableError(f"speed measure tail mass outside the window is {tails / mass:.3g} of the total")
    x = window.nodes()
    return GridFunction(window, np.exp(_log_speed(s.Bfun, s.sigma, x) - offset) / mass)


def generator_residual(s: ScaleFunction, drift: Callable, interior: float = 0.9) -> float:
    """``max |a s'' + b s'| / max |b s'|`` on the central part of the scale interval.

    ``s''`` is the centred difference of the tabulated ``s'``.
    """
    y = s.nodes
    lo, hi = s.interval
    c, half = 0.5 * (lo + hi), 0.5 * interior * (hi - lo)
    keep = (y > c - half) & (y < c + half)
    spp = np.gradient(s.s_prime, y, edge_order=2)
    a = 0.5 * s.sigma(y) ** 2
    b = drift(y)
    res = a * spp + b * s.s_prime
    scale = max(np.max(np.abs(b * s.s_prime)[keep]), np.finfo(float).tiny)
    return float(np.max(np.abs(res[keep])) / scale)


def export_csv(s: ScaleFunction, path, density: GridFunction | None = None, n_rows: int = 2001) -> Path:
    """Write ``x, s(x), m(x)`` rows; ``m`` is the normalized density when given, else ``1/(sigma^2 s')``."""
    path = Path(path)
    lo, hi = s.interval
    x = np.linspace(lo, hi, n_rows)
    if density is not None:
        nodes = density.grid.nodes()
        m = np.interp(x, nodes, density.values, left=np.nan, right=np.nan)
    else:
        m = 1.0 / (s.sigma(x) ** 2 * s.derivative(x))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "s", "m"])
        for row in zip(x, s(x), m):
            w.writerow([f"{v:.17g}" for v in row])
    return path
