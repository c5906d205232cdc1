"""Closed-form regular drift parts and their dissipativity constants."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import DistributionRep

__all__ = ["ClosedFormDrift", "DriftSpec", "DRIFT_KINDS"]

# Integer codes shared with the compiled stepping kernels.
DRIFT_KINDS = {"zero": 0, "linear": 1, "saturating": 2}


@dataclass(frozen=True)
class ClosedFormDrift:
    """Radial drift ``b1(x) = -kappa x`` (``linear``), ``-kappa x / sqrt(1+|x|^2)`` (``saturating``) or 0.

    ``constants`` returns ``(kappa0, kappa1, kappa2, growth)`` such that
    ``<x, b1(x)> / sqrt(1+|x|^2) <= -kappa0 |x|^growth + kappa1`` and
    ``|b1(x)| <= kappa2 (1 + |x|^growth)``.
    """

    kind: str = "zero"
    kappa: float = 1.0

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ValueError(f"unknown drift kind {self.kind!r}; choose from {sorted(DRIFT_KINDS)}")
        if self.kind != "zero" and not self.kappa > 0:
            raise ValueError(f"drift strength must be positive, got {self.kappa}")

    @property
    def code(self) -> int:
        return DRIFT_KINDS[self.kind]

    @property
    def growth(self) -> float:
        return 1.0 if self.kind == "linear" else 0.0

    @property
    def constants(self) -> tuple:
        if self.kind == "zero":
            return 0.0, 0.0, 0.0, 0.0
        return self.kappa, self.kappa, self.kappa, self.growth

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at points of shape ``(m, d)``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "linear":
            return -self.kappa * x
        r2 = np.sum(x**2, axis=-1, keepdims=True)
        return -self.kappa * x / np.sqrt(1.0 + r2)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """``d b1_i / d x_j`` at points ``(m, d)``; shape ``(m, d, d)``."""
        x = np.asarray(x, dtype=float)
        m, d = x.shape
        eye = np.broadcast_to(np.eye(d), (m, d, d))
        if self.kind == "zero":
            return np.zeros((m, d, d))
        if self.kind == "linear":
            return -self.kappa * eye.copy()
        s = np.sqrt(1.0 + np.sum(x**2, axis=-1))[:, None, None]
        return -self.kappa * (eye / s - np.einsum("mi,mj->mij", x, x) / s**3)

    def check_dissipativity(self, d: int, samples: int = 10_000, radius: float = 64.0, seed: int = 0) -> float:
        """Largest violation of the two dissipativity inequalities on a random sample (<= 0 when valid)."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(-radius, radius, size=(samples, d))
        k0, k1, k2, th = self.constants
        r = np.linalg.norm(x, axis=1)
        b = self(x)
        lhs = np.sum(x * b, axis=1) / np.sqrt(1 + r**2)
        v1 = lhs - (-k0 * r**th + k1)
        v2 = np.linalg.norm(b, axis=1) - k2 * (1 + r**th)
        return float(max(v1.max(), v2.max()))


@dataclass(frozen=True, eq=False)
class DriftSpec:
    """Drift ``b = b1 + b2`` with ``b1`` closed form and ``b2`` distributional."""

    b1: ClosedFormDrift
    b2: DistributionRep | None = None

    def __post_init__(self):
        if self.b2 is not None:
            d = self.b2.grid.d
            violation = self.b1.check_dissipativity(d)
            if violation > 1e-9:
                raise ValueError(f"closed-form drift violates its dissipativity constants by {violation:.3g}")
