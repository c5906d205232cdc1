"""Small result records shared across modules."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = ["ScalingReport", "fit_scaling"]


@dataclass
class ScalingReport:
    """Log-log regression of a measured quantity against a scale parameter.

    ``pass_`` is decided by ``mode``: ``"band"`` requires
    ``|slope - expected| <= tolerance``, ``"lower"`` requires
    ``slope >= expected - tolerance``.
    """

    slope: float
    intercept: float
    expected_slope: float
    tolerance: float
    passed: bool
    mode: str = "band"
    x: list = field(default_factory=list)
    y: list = field(default_factory=list)
    label: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def fit_scaling(scale, values, expected: float, tolerance: float, mode: str = "band", label: str = "") -> ScalingReport:
    """Least-squares slope of ``log(values)`` on ``log(scale)``."""
    scale = np.asarray(scale, dtype=float)
    values = np.asarray(values, dtype=float)
    if scale.size < 4:
        raise ValueError(f"scaling regression needs at least 4 abscissae, got {scale.size}")
    if np.any(values <= 0) or np.any(scale <= 0):
        raise ValueError("scaling regression needs positive data")
    lx, ly = np.log(scale), np.log(values)
    slope, intercept = np.polyfit(lx, ly, 1)
    if mode == "band":
        ok = abs(slope - expected) <= tolerance
    elif mode == "lower":
        ok = slope >= expected - tolerance
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return ScalingReport(
        float(slope), float(intercept), float(expected), float(tolerance), bool(ok), mode,
        lx.tolist(), ly.tolist(), label,
    )
