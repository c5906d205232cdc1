"""Constructive elements of negative-order Bessel-potential spaces.

A distribution ``b`` of order ``-alpha`` is stored through its potential
``g = (I - Delta)^{-alpha/2} b``, a plain grid function.  Membership in
``H^{-alpha,p}`` is then a finite computation: ``||b||_{-alpha,p} = ||g||_p``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import (
    GridFunction,
    GridSpec,
    SobolevIndex,
    bessel_potential,
    cutoff,
    downsample,
    gradient,
    load_gfn,
    lp_norm,
    mollify,
    save_gfn,
    trig_interpolate,
)

__all__ = [
    "DistributionRep",
    "make_distribution",
    "distribution_from_drift",
    "realize_mollified",
    "working_level",
    "product_with_smooth",
    "compose_distribution",
    "weierstrass",
    "weierstrass_terms",
    "weierstrass_drift",
    "support_radius",
    "save_distribution",
    "load_distribution",
]

SUPPORT_RTOL = 1e-6


def support_radius(f: GridFunction, rtol: float = SUPPORT_RTOL) -> float:
    """Largest node radius where ``|f|`` exceeds ``rtol * max|f|`` (0 for the zero field)."""
    vals = np.abs(f.values).reshape((-1,) + f.grid.shape).max(axis=0)
    peak = vals.max()
    if peak == 0:
        return 0.0
    return float(f.grid.radius()[vals > rtol * peak].max())


def working_level(grid: GridSpec) -> float:
    """Default mollification level: half the Nyquist frequency of ``grid``."""
    return grid.nyquist / 2.0


@dataclass(frozen=True, eq=False)
class DistributionRep:
    """Distribution ``b = (I - Delta)^{alpha/2} g`` with ``g`` a grid function.

    Parameters
    ----------
    idx : SobolevIndex
        ``(alpha, p)`` with ``alpha > 0``; the distribution lies in ``H^{-alpha,p}``.
    g : GridFunction
        Potential of the distribution, scalar or vector valued.
    support_radius : float
        Radius beyond which the certified field vanishes (to ``1e-6`` relative).
    """

    idx: SobolevIndex
    g: GridFunction = field(repr=False)
    support_radius: float = 0.0

    @property
    def alpha(self) -> float:
        return self.idx.alpha

    @property
    def p(self) -> float:
        return self.idx.p

    @property
    def grid(self) -> GridSpec:
        return self.g.grid

    def norm(self) -> float:
        """``||b||_{-alpha,p}``, equal to ``||g||_p`` by construction."""
        return lp_norm(self.g, self.p)

    def realize(self) -> GridFunction:
        """The distribution as a grid function at full grid resolution."""
        return bessel_potential(self.g, self.alpha)

    def __add__(self, other: "DistributionRep") -> "DistributionRep":
        if not isinstance(other, DistributionRep) or other.idx != self.idx:
            raise ValueError("can only add distributions with the same (alpha, p)")
        return DistributionRep(self.idx, self.g + other.g, max(self.support_radius, other.support_radius))

    def __mul__(self, scalar: float) -> "DistributionRep":
        return DistributionRep(self.idx, self.g * float(scalar), self.support_radius)

    __rmul__ = __mul__

    def __neg__(self) -> "DistributionRep":
        return self * -1.0

    def is_zero(self) -> bool:
        return not np.any(self.g.values)


def _check_index(alpha: float, p: float) -> SobolevIndex:
    if not 0 < alpha <= 1:
        raise ValueError(f"order alpha must lie in (0, 1], got {alpha}")
    return SobolevIndex(float(alpha), float(p))


def _check_support(f: GridFunction, what: str) -> float:
    radius = support_radius(f)
    if radius > f.grid.L / 2:
        raise ValueError(
            f"{what} is not supported in the inner half of the torus: "
            f"support radius {radius:.4g} > L/2 = {f.grid.L / 2:.4g}"
        )
    return radius


def make_distribution(g: GridFunction, alpha: float, p: float) -> DistributionRep:
    """Wrap a compactly supported potential ``g`` as an element of ``H^{-alpha,p}``."""
    idx = _check_index(alpha, p)
    return DistributionRep(idx, g, _check_support(g, "potential g"))


def distribution_from_drift(b: GridFunction, alpha: float, p: float) -> DistributionRep:
    """Canonicalize a compactly supported raw field ``b`` as ``(I - Delta)^{alpha/2} g``.

    Support is certified on ``b``; the potential ``g`` then has rapidly
    decaying (not compact) tails.
    """
    idx = _check_index(alpha, p)
    radius = _check_support(b, "drift b")
    return DistributionRep(idx, bessel_potential(b, -idx.alpha), radius)


def realize_mollified(b: DistributionRep, n: float) -> GridFunction:
    """``b_n = b * rho_n`` as a grid function."""
    return mollify(b.realize(), n)


def product_with_smooth(b: DistributionRep, g: GridFunction, n: float | None = None) -> DistributionRep:
    """The product ``b g`` as the working-level limit of ``b_n g``.

    ``g`` must be scalar; ``n`` defaults to :func:`working_level`.
    """
    if g.grid != b.grid:
        raise ValueError("product factors live on different grids")
    if g.components:
        raise ValueError("smooth factor must be scalar")
    level = working_level(b.grid) if n is None else n
    prod = realize_mollified(b, level) * g.values
    return DistributionRep(b.idx, bessel_potential(prod, -b.alpha), min(b.support_radius, b.grid.L / 2))


def compose_distribution(b: DistributionRep, phi, inverse: bool = False, oversample: int = 2) -> DistributionRep:
    """Pull back ``b`` through a certified diffeomorphism by duality.

    The Fourier coefficients of ``b o Phi`` are the pairings of ``b`` with
    ``exp(-i xi . Phi^{-1}(x)) |det grad Phi^{-1}(x)|``.  After the change of
    variables ``x = Phi(y)`` each pairing is the Fourier integral of
    ``b_N o Phi``, with ``b_N`` the band-limited realization of ``b``; it is
    evaluated on a grid ``oversample`` times finer and truncated back to the
    resolved band.  ``inverse=True`` gives ``b o Phi^{-1}`` the same way.
    """
    if not getattr(phi, "certified", False):
        raise ValueError("composition requires a certified bi-Lipschitz map")
    grid = b.grid
    if phi.grid != grid:
        raise ValueError("map and distribution live on different grids")
    d = grid.d
    fine = grid.refine(oversample)
    nodes = fine.mesh().reshape(d, -1).T
    moved = phi.invert(nodes) if inverse else phi(nodes)
    # wrap onto the torus; the displacement vanishes near the boundary shell
    moved = (moved + grid.L) % (2 * grid.L) - grid.L
    drift = b.realize()
    vals = trig_interpolate(drift, moved).reshape(drift.components + fine.shape)
    coarse = downsample(GridFunction(fine, vals), oversample)
    composed = GridFunction(grid, coarse.values)
    radius = min(support_radius(composed), grid.L)
    return DistributionRep(b.idx, bessel_potential(composed, -b.alpha), radius)


# -- Weierstrass-type drift --------------------------------------------------------


def weierstrass_terms(grid: GridSpec, max_terms: int = 13, decay: float = 0.6, band: float = 2.0 / 3.0) -> int:
    """Number of terms ``cos(2^k x)`` resolved within ``band`` of the Nyquist frequency."""
    count = 0
    while count < max_terms and 2.0**count < band * grid.nyquist:
        count += 1
    return count


def weierstrass(x: np.ndarray, n_terms: int = 13, decay: float = 0.6) -> np.ndarray:
    """``W(x) = sum_{k < n_terms} 2^{-decay k} cos(2^k x)``."""
    x = np.asarray(x, dtype=float)
    return sum(2.0 ** (-decay * k) * np.cos(2.0**k * x) for k in range(n_terms))


def weierstrass_drift(
    grid: GridSpec,
    alpha: float = 0.45,
    p: float = 4.0,
    amplitude: float = 1.0,
    n_terms: int | None = None,
    cutoff_radius: float = 4.0,
    decay: float = 0.6,
) -> DistributionRep:
    """``amplitude * d/dx (chi_R W)`` along the first axis, as a distribution.

    In 2d the drift points along the first coordinate and ``W`` depends on
    ``x_1`` only.  ``n_terms`` defaults to the number of resolved terms.
    """
    if n_terms is None:
        n_terms = weierstrass_terms(grid, decay=decay)
    chi = cutoff(grid, cutoff_radius)
    w = grid.from_callable(lambda *xs: weierstrass(xs[0], n_terms, decay))
    potential = chi * w
    deriv = gradient(potential)[0] * amplitude
    if grid.d == 2:
        deriv = GridFunction(grid, np.stack([deriv.values, np.zeros(grid.shape)]))
    return distribution_from_drift(deriv, alpha, p)


# -- serialization --------------------------------------------------------------------


def save_distribution(b: DistributionRep, path) -> tuple:
    """Write ``g`` as ``<path>.gfn`` and ``{alpha, p, support_radius}`` as ``<path>.json``."""
    path = Path(path)
    gfn = save_gfn(b.g, path.with_suffix(".gfn"))
    sidecar = path.with_suffix(".json")
    sidecar.write_text(
        json.dumps({"alpha": b.alpha, "p": b.p, "support_radius": b.support_radius}, sort_keys=True)
    )
    return gfn, sidecar


def load_distribution(path) -> DistributionRep:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    g = load_gfn(path.with_suffix(".gfn"))
    return DistributionRep(SobolevIndex(meta["alpha"], meta["p"]), g, meta["support_radius"])
