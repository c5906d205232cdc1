"""Fourier-multiplier calculus on a uniform periodic grid.

The torus ``[-L, L)^d`` stands in for ``R^d``.  Every operator here is a
diagonal multiplier on the discrete Fourier coefficients of a sampled field,
so Bessel potentials, fractional Laplacians, heat semigroups and
mollifications are exact for band-limited data.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
from scipy import special

__all__ = [
    "GridSpec",
    "GridFunction",
    "SobolevIndex",
    "DiffusionSpec",
    "bessel_potential",
    "frac_laplacian",
    "gamma_form",
    "mollify",
    "mollifier_hat",
    "mollifier_density",
    "cutoff",
    "cutoff_profile",
    "sobolev_norm",
    "lp_norm",
    "heat_semigroup",
    "gradient",
    "hessian",
    "apply_symbol",
    "trig_interpolate",
    "upsample",
    "downsample",
    "save_gfn",
    "load_gfn",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[-L, L)^d`` with ``N`` nodes per axis."""

    d: int
    L: float
    N: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"only d in (1, 2) is supported, got d={self.d}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        if self.N < 32 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 32, got {self.N}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @property
    def axes(self) -> tuple:
        return tuple(range(-self.d, 0))

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def nyquist(self) -> float:
        """Largest resolved angular frequency ``pi N / (2 L)``."""
        return np.pi * self.N / (2.0 * self.L)

    def nodes(self) -> np.ndarray:
        """1d node coordinates ``-L + j h``."""
        return -self.L + self.h * np.arange(self.N)

    def mesh(self) -> np.ndarray:
        """Node coordinates with a leading component axis, shape ``(d, *shape)``."""
        x = self.nodes()
        return np.stack(np.meshgrid(*([x] * self.d), indexing="ij"))

    def radius(self) -> np.ndarray:
        return np.sqrt(np.sum(self.mesh() ** 2, axis=0))

    def refine(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.d, self.L, self.N * factor)

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.shape))

    def from_callable(self, func) -> "GridFunction":
        """Sample ``func(*coords)`` on the nodes."""
        return GridFunction(self, np.asarray(func(*self.mesh()), dtype=float))


@lru_cache(maxsize=32)
def _wavenumbers(grid: GridSpec):
    """Angular frequencies in ``rfftn`` layout, one broadcastable array per axis."""
    scale = np.pi / grid.L
    out = []
    for ax in range(grid.d):
        if ax == grid.d - 1:
            k = np.fft.rfftfreq(grid.N, d=1.0 / grid.N)
        else:
            k = np.fft.fftfreq(grid.N, d=1.0 / grid.N)
        shape = [1] * grid.d
        shape[ax] = k.size
        out.append((scale * k).reshape(shape))
    return tuple(out)


@lru_cache(maxsize=32)
def _xi_squared(grid: GridSpec) -> np.ndarray:
    return sum(k**2 for k in _wavenumbers(grid))


@lru_cache(maxsize=32)
def _nyquist_mask(grid: GridSpec) -> np.ndarray:
    """True off the Nyquist planes; odd symbols must vanish there."""
    mask = np.ones(_xi_squared(grid).shape, dtype=bool)
    for ax in range(grid.d):
        idx = [slice(None)] * grid.d
        idx[ax] = grid.N // 2
        mask[tuple(idx)] = False
    return mask


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real field sampled on a :class:`GridSpec`.

    ``values`` has shape ``(*components, *grid.shape)``; leading axes carry
    vector or matrix components and every spectral operator acts on the
    trailing ``d`` axes only.
    """

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape[vals.ndim - self.grid.d:] != self.grid.shape or vals.ndim < self.grid.d:
            raise ValueError(
                f"values of shape {vals.shape} do not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("GridFunction values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @cached_property
    def spectral(self) -> np.ndarray:
        return np.fft.rfftn(self.values, axes=self.grid.axes)

    @property
    def components(self) -> tuple:
        return self.values.shape[: self.values.ndim - self.grid.d]

    def __getitem__(self, idx) -> "GridFunction":
        if not self.components:
            raise IndexError("scalar GridFunction has no components")
        return GridFunction(self.grid, self.values[idx])

    def _binary(self, other, op):
        if isinstance(other, GridFunction):
            _check_same_grid(self, other)
            other = other.values
        return GridFunction(self.grid, op(self.values, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def integral(self) -> float | np.ndarray:
        return np.sum(self.values, axis=self.grid.axes) * self.grid.cell_volume


def _check_same_grid(*fs):
    grid = fs[0].grid
    for f in fs[1:]:
        if f.grid != grid:
            raise ValueError(f"grid mismatch: {grid} vs {f.grid}")


def apply_symbol(f: GridFunction, symbol: np.ndarray) -> GridFunction:
    """Apply a Fourier multiplier given in ``rfftn`` layout."""
    out = np.fft.irfftn(f.spectral * symbol, s=f.grid.shape, axes=f.grid.axes)
    return GridFunction(f.grid, out)


@dataclass(frozen=True)
class SobolevIndex:
    """Smoothness order ``alpha`` and integrability ``p`` of ``H^{alpha,p}``."""

    alpha: float
    p: float

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"integrability exponent must exceed 1, got p={self.p}")


def _as_index(idx) -> SobolevIndex:
    if isinstance(idx, SobolevIndex):
        return idx
    alpha, p = idx
    return SobolevIndex(float(alpha), float(p))


def bessel_potential(f: GridFunction, s: float) -> GridFunction:
    """``(I - Delta)^{s/2} f``."""
    if s == 0:
        return f
    return apply_symbol(f, (1.0 + _xi_squared(f.grid)) ** (s / 2.0))


def frac_laplacian(f: GridFunction, s: float) -> GridFunction:
    """``Delta^{s/2} f = -(-Delta)^{s/2} f`` through the symbol ``-|xi|^s``."""
    if not 0 < s <= 2:
        raise ValueError(f"order s must lie in (0, 2], got {s}")
    return apply_symbol(f, -(_xi_squared(f.grid) ** (s / 2.0)))


def gamma_form(f: GridFunction, g: GridFunction, alpha: float) -> GridFunction:
    """Carre-du-champ of the fractional Laplacian.

    Uses ``Gamma(f, g) = Delta^{a/2}(fg) - f Delta^{a/2} g - g Delta^{a/2} f``.
    """
    _check_same_grid(f, g)
    fg = f * g
    return frac_laplacian(fg, alpha) - f * frac_laplacian(g, alpha) - g * frac_laplacian(f, alpha)


def gradient(f: GridFunction) -> GridFunction:
    """Spectral gradient; a new leading axis of length ``d`` is prepended."""
    mask = _nyquist_mask(f.grid)
    parts = [
        np.fft.irfftn(f.spectral * (1j * k * mask), s=f.grid.shape, axes=f.grid.axes)
        for k in _wavenumbers(f.grid)
    ]
    return GridFunction(f.grid, np.stack(parts))


def hessian(f: GridFunction) -> GridFunction:
    """Spectral Hessian; two leading axes of length ``d`` are prepended."""
    ks = _wavenumbers(f.grid)
    mask = _nyquist_mask(f.grid)
    d = f.grid.d
    rows = []
    for i in range(d):
        row = []
        for j in range(d):
            sym = -ks[i] * ks[j]
            if i != j:
                sym = sym * mask
            row.append(np.fft.irfftn(f.spectral * sym, s=f.grid.shape, axes=f.grid.axes))
        rows.append(np.stack(row))
    return GridFunction(f.grid, np.stack(rows))


# -- mollifier and cutoff -------------------------------------------------------


def _bump(r: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r, dtype=float)
    inside = r < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


@lru_cache(maxsize=4)
def _bump_quadrature(d: int, order: int = 2048):
    """Gauss-Legendre radii on [0, 1], normalized radial weights and raw mass."""
    t, w = np.polynomial.legendre.leggauss(order)
    r = 0.5 * (t + 1.0)
    w = 0.5 * w
    dens = _bump(r)
    if d == 1:
        weight = 2.0 * w * dens
    else:
        weight = 2.0 * np.pi * w * dens * r
    mass = weight.sum()
    return r, weight / mass, mass


def mollifier_density(x: np.ndarray, d: int) -> np.ndarray:
    """Unit-mass bump ``c exp(-1/(1-|x|^2))`` evaluated at radii ``|x|``."""
    mass = _bump_quadrature(d)[2]
    return _bump(np.abs(np.asarray(x, dtype=float))) / mass


def mollifier_hat(radius: np.ndarray, d: int) -> np.ndarray:
    """Fourier transform of the radial bump at frequency magnitudes ``radius``."""
    radius = np.asarray(radius, dtype=float)
    uniq, inverse = np.unique(radius.ravel(), return_inverse=True)
    r, weight, _ = _bump_quadrature(d)
    out = np.empty_like(uniq)
    chunk = 1024
    for start in range(0, uniq.size, chunk):
        k = uniq[start:start + chunk, None]
        kernel = np.cos(k * r) if d == 1 else special.j0(k * r)
        out[start:start + chunk] = kernel @ weight
    return out[inverse].reshape(radius.shape)


@lru_cache(maxsize=64)
def _mollifier_symbol(grid: GridSpec, n: float) -> np.ndarray:
    return mollifier_hat(np.sqrt(_xi_squared(grid)) / n, grid.d)


def mollify(f, n: float) -> GridFunction:
    """Convolution with ``rho_n(x) = n^d rho(n x)``.

    ``f`` may be a :class:`GridFunction` or a distribution representation,
    in which case the mollified distribution is realized as a grid function.
    """
    if not n > 0:
        raise ValueError(f"mollification level must be positive, got {n}")
    if hasattr(f, "realize"):
        f = f.realize()
    return apply_symbol(f, _mollifier_symbol(f.grid, float(n)))


def cutoff_profile(r: np.ndarray) -> np.ndarray:
    """Smooth nonincreasing profile: 1 on ``r <= 1``, 0 on ``r >= 2``."""
    r = np.asarray(r, dtype=float)
    out = np.where(r <= 1.0, 1.0, 0.0)
    mid = (r > 1.0) & (r < 2.0)
    a = np.exp(-1.0 / (2.0 - r[mid]))
    b = np.exp(-1.0 / (r[mid] - 1.0))
    out[mid] = a / (a + b)
    return out


def cutoff(grid: GridSpec, R: float) -> GridFunction:
    """``chi_R(x) = chi(|x| / R)`` on the grid."""
    if not R > 0 or 2 * R >= grid.L:
        raise ValueError(f"cutoff radius must satisfy 0 < 2R < L, got R={R}, L={grid.L}")
    return GridFunction(grid, cutoff_profile(grid.radius() / R))


# -- norms and semigroup ----------------------------------------------------------


def lp_norm(f, p: float, grid: GridSpec | None = None) -> float:
    """Discrete ``L^p`` norm ``(h^d sum |f|^p)^{1/p}``.

    Component axes are collapsed pointwise by the Euclidean (Frobenius) norm.
    """
    if isinstance(f, GridFunction):
        grid, vals = f.grid, f.values
    else:
        vals = np.asarray(f, dtype=float)
    lead = vals.ndim - grid.d
    mag = np.sqrt(np.sum(vals**2, axis=tuple(range(lead)))) if lead else np.abs(vals)
    if np.isinf(p):
        return float(mag.max())
    return float((np.sum(mag**p) * grid.cell_volume) ** (1.0 / p))


def sobolev_norm(f: GridFunction, idx) -> float:
    """``||(I - Delta)^{alpha/2} f||_p`` under grid quadrature."""
    idx = _as_index(idx)
    return lp_norm(bessel_potential(f, idx.alpha), idx.p)


def _check_spd(a0, d) -> np.ndarray:
    a0 = np.atleast_2d(np.asarray(a0, dtype=float))
    if a0.shape != (d, d):
        raise ValueError(f"coefficient matrix must be {d}x{d}, got {a0.shape}")
    if not np.allclose(a0, a0.T) or np.min(np.linalg.eigvalsh(a0)) <= 0:
        raise ValueError("coefficient matrix must be symmetric positive definite")
    return a0


def quadratic_symbol(grid: GridSpec, a0) -> np.ndarray:
    """``xi . a0 xi`` in ``rfftn`` layout."""
    a0 = _check_spd(a0, grid.d)
    ks = _wavenumbers(grid)
    return sum(a0[i, j] * ks[i] * ks[j] for i in range(grid.d) for j in range(grid.d))


def heat_semigroup(f: GridFunction, a0, t: float) -> GridFunction:
    """Semigroup generated by ``a0_ij d_i d_j``: symbol ``exp(-t xi.a0 xi)``."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    sym = quadratic_symbol(f.grid, a0)
    if t == 0:
        return f
    return apply_symbol(f, np.exp(-t * sym))


# -- off-grid evaluation and resampling ---------------------------------------------


def trig_interpolate(f: GridFunction, points: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Evaluate the trigonometric interpolant of ``f`` at arbitrary points.

    ``points`` has shape ``(m, d)`` (or ``(m,)`` in 1d).  Cost is
    ``O(m N^d)``; this is the reference evaluator, not the fast one.
    """
    grid = f.grid
    pts = np.asarray(points, dtype=float).reshape(-1, grid.d)
    coef = np.fft.fftn(f.values, axes=grid.axes) / grid.N**grid.d
    k = np.fft.fftfreq(grid.N, d=1.0 / grid.N)
    # Nyquist term split symmetrically so the interpolant stays real.
    weight = np.ones(grid.N)
    weight[grid.N // 2] = 0.5
    scale = np.pi / grid.L
    comps = f.components
    flat = coef.reshape((-1,) + grid.shape)
    out = np.empty((flat.shape[0], pts.shape[0]))
    for start in range(0, pts.shape[0], chunk):
        p = pts[start:start + chunk] + grid.L
        if grid.d == 1:
            ph = np.exp(1j * scale * p[:, 0:1] * k[None, :])
            out[:, start:start + chunk] = np.real((ph * weight) @ flat.T).T
        else:
            e0 = np.exp(1j * scale * p[:, 0:1] * k[None, :]) * weight
            e1 = np.exp(1j * scale * p[:, 1:2] * k[None, :]) * weight
            vals = np.einsum("mi,cij,mj->cm", e0, flat, e1)
            out[:, start:start + chunk] = np.real(vals)
    return out.reshape(comps + (pts.shape[0],))


def upsample(f: GridFunction, factor: int) -> GridFunction:
    """Band-limited (zero-padding) interpolation onto a grid ``factor`` times finer."""
    if factor == 1:
        return f
    grid = f.grid
    fine = grid.refine(factor)
    coef = np.fft.fftn(f.values, axes=grid.axes)
    N, M = grid.N, fine.N
    comps = f.components
    padded = np.zeros(comps + fine.shape, dtype=complex)
    half = N // 2
    src = [np.r_[0:half, half, half + 1:N]]
    # Split the Nyquist coefficient evenly between +/- frequencies.
    idx_dst = np.r_[0:half, half, M - half + 1:M]
    if grid.d == 1:
        padded[..., idx_dst] = coef[..., src[0]]
        padded[..., half] *= 0.5
        padded[..., M - half] = padded[..., half]
    else:
        sub = coef[..., src[0], :][..., src[0]]
        padded[..., idx_dst[:, None], idx_dst[None, :]] = sub
        for ax in (-2, -1):
            sl_pos = [slice(None)] * padded.ndim
            sl_neg = [slice(None)] * padded.ndim
            sl_pos[ax] = half
            sl_neg[ax] = M - half
            padded[tuple(sl_pos)] *= 0.5
            padded[tuple(sl_neg)] = padded[tuple(sl_pos)]
    vals = np.real(np.fft.ifftn(padded, axes=grid.axes)) * (M / N) ** grid.d
    return GridFunction(fine, vals)


def downsample(f: GridFunction, factor: int) -> GridFunction:
    """Spectral truncation onto a grid ``factor`` times coarser.

    Keeps the modes ``|k| < N/2`` of the coarse grid and drops its Nyquist
    mode, so ``downsample(upsample(f, r), r) = f`` when ``f`` has no Nyquist
    content.
    """
    if factor == 1:
        return f
    fine = f.grid
    if fine.N % factor:
        raise ValueError(f"grid size {fine.N} is not divisible by {factor}")
    coarse = GridSpec(fine.d, fine.L, fine.N // factor)
    N, M = coarse.N, fine.N
    keep = np.r_[0:N // 2, M - N // 2 + 1:M]
    dst = np.r_[0:N // 2, N // 2 + 1:N]
    coef = np.fft.fftn(f.values, axes=fine.axes)
    out = np.zeros(f.components + coarse.shape, dtype=complex)
    if fine.d == 1:
        out[..., dst] = coef[..., keep]
    else:
        out[..., dst[:, None], dst[None, :]] = coef[..., keep[:, None], keep[None, :]]
    vals = np.real(np.fft.ifftn(out, axes=coarse.axes)) / factor**fine.d
    return GridFunction(coarse, vals)


# -- serialization --------------------------------------------------------------------


def save_gfn(f: GridFunction, path) -> Path:
    """Write a one-line JSON header followed by little-endian float64 values."""
    path = Path(path)
    header = {"d": f.grid.d, "L": f.grid.L, "N": f.grid.N}
    if f.components:
        header["components"] = list(f.components)
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    return path


def load_gfn(path) -> GridFunction:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        data = np.frombuffer(fh.read(), dtype="<f8")
    grid = GridSpec(header["d"], header["L"], header["N"])
    shape = tuple(header.get("components", [])) + grid.shape
    return GridFunction(grid, data.reshape(shape).copy())


# -- diffusion coefficient ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiffusionSpec:
    """Diffusion matrix ``sigma(x) = base + perturbation(x)``.

    ``perturbation`` is a matrix-valued grid function (components ``(d, d)``)
    supported inside ``[-L/2, L/2]^d``.  ``c0`` is the ellipticity constant,
    checked on every node; ``beta``/``q`` record the claimed regularity.
    """

    base: np.ndarray
    perturbation: GridFunction | None = None
    c0: float = 1.0
    beta: float = 1.0
    q: float = np.inf

    def __post_init__(self):
        base = np.atleast_2d(np.asarray(self.base, dtype=float))
        object.__setattr__(self, "base", base)
        d = base.shape[0]
        if base.shape != (d, d):
            raise ValueError("base diffusion matrix must be square")
        if self.perturbation is not None:
            pert = self.perturbation
            if pert.components != (d, d) or pert.grid.d != d:
                raise ValueError("perturbation must be a (d, d) matrix field on a d-dim grid")
            outside = np.max(np.abs(pert.grid.mesh()), axis=0) > pert.grid.L / 2
            if np.any(np.abs(pert.values[..., outside]) > 0):
                raise ValueError("sigma perturbation must vanish outside [-L/2, L/2]^d")
        lo, hi = self.singular_value_range()
        if lo**2 < 1.0 / self.c0 * (1 - 1e-12) or hi**2 > self.c0 * (1 + 1e-12):
            raise ValueError(
                f"ellipticity fails: |sigma xi|^2 in [{lo**2:.4g}, {hi**2:.4g}] |xi|^2, c0={self.c0}"
            )

    @property
    def d(self) -> int:
        return self.base.shape[0]

    @classmethod
    def identity(cls, d: int, scale: float = 1.0) -> "DiffusionSpec":
        c0 = max(scale**2, 1.0 / scale**2)
        return cls(scale * np.eye(d), c0=c0)

    def field(self, grid: GridSpec) -> np.ndarray:
        """Matrix field of shape ``(d, d, *grid.shape)``."""
        out = np.broadcast_to(
            self.base.reshape(self.base.shape + (1,) * grid.d), (self.d, self.d) + grid.shape
        ).copy()
        if self.perturbation is not None:
            if self.perturbation.grid != grid:
                raise ValueError("sigma perturbation lives on a different grid")
            out += self.perturbation.values
        return out

    def diffusion_field(self, grid: GridSpec) -> np.ndarray:
        """``a = sigma sigma^T / 2`` on the grid."""
        s = self.field(grid)
        return 0.5 * np.einsum("ik...,jk...->ij...", s, s)

    def singular_value_range(self) -> tuple:
        if self.perturbation is None:
            sv = np.linalg.svd(self.base, compute_uv=False)
            return float(sv.min()), float(sv.max())
        s = self.field(self.perturbation.grid)
        mats = np.moveaxis(s.reshape(self.d, self.d, -1), -1, 0)
        sv = np.linalg.svd(mats, compute_uv=False)
        return float(sv.min()), float(sv.max())

    @property
    def mean_diffusion(self) -> np.ndarray:
        """Grid mean of ``a``, the frozen coefficient used by preconditioners."""
        if self.perturbation is None:
            return 0.5 * self.base @ self.base.T
        a = self.diffusion_field(self.perturbation.grid)
        return a.reshape(self.d, self.d, -1).mean(axis=-1)
