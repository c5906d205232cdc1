"""Off-grid evaluation of grid fields by periodic cubic B-splines."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from . import _kernels
from .grid import GridFunction, GridSpec, trig_interpolate, upsample

__all__ = ["SplineField", "spline_table"]


def spline_table(values: np.ndarray, d: int) -> np.ndarray:
    """Prefiltered cubic B-spline coefficients of periodic samples, shape ``(ncomp, n1, n)``."""
    flat = values.reshape((-1,) + values.shape[values.ndim - d:])
    tab = np.stack([ndimage.spline_filter(c, order=3, mode="grid-wrap") for c in flat])
    if d == 1:
        tab = tab[:, None, :]
    return np.ascontiguousarray(tab)


class SplineField:
    """Cubic-spline evaluator for a (possibly multi-component) grid field.

    The field is first refined by band-limited zero padding (``factor``)
    so the spline error stays far below the spectral truncation error.
    Points outside ``[-L, L)^d`` evaluate to zero.

    Parameters
    ----------
    f : GridFunction
    factor : int
        Spectral upsampling factor applied before spline fitting.
    refined : bool
        Treat ``f`` as already sampled on the evaluation grid (no upsampling).
    """

    def __init__(self, f: GridFunction, factor: int = 8, refined: bool = False):
        fine = f if refined else upsample(f, factor)
        self.source = f
        self.grid: GridSpec = fine.grid
        self.components = f.components
        self.coef = spline_table(fine.values, fine.grid.d)

    @property
    def L(self) -> float:
        return self.grid.L

    @property
    def hf(self) -> float:
        return self.grid.h

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Values at ``points`` ``(m, d)``; shape ``(*components, m)``."""
        pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, self.grid.d))
        out = _kernels.spline_batch(self.coef, pts, self.L, self.hf)
        return out.reshape(self.components + (pts.shape[0],))

    def validate(self, n_points: int = 1000, seed: int = 0, margin: float = 0.0) -> float:
        """Max deviation from exact trigonometric evaluation at random points, relative to ``max|f|``."""
        rng = np.random.default_rng(seed)
        lim = self.L - margin
        pts = rng.uniform(-lim, lim, size=(n_points, self.grid.d))
        exact = trig_interpolate(self.source, pts)
        scale = max(np.max(np.abs(self.source.values)), np.finfo(float).tiny)
        return float(np.max(np.abs(exact - self(pts))) / scale)
