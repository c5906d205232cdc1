"""Exponent windows under which the well-posedness theory applies."""
from __future__ import annotations

__all__ = ["exponent_violations", "elliptic_violations"]


def exponent_violations(alpha: float, p: float, beta: float, q: float, d: int, strict: bool = False) -> list:
    """Human-readable list of violated exponent conditions (empty when admissible).

    ``strict`` adds the narrower window required for weak solutions in the
    classical sense: ``alpha < 1/2`` and ``p > d / (1/2 - alpha)``.
    """
    out = []
    if not 0 < alpha <= 0.5:
        out.append(f"α ∈ (0,1/2] violated: α={alpha:g}")
    elif not p > d / (1 - alpha):
        out.append(f"p > d/(1−α) violated: p={p:g} <= {d / (1 - alpha):.4g}")
    if not alpha <= beta <= 1:
        out.append(f"β ∈ [α,1] violated: β={beta:g}, α={alpha:g}")
    if beta > 0 and not q > d / beta:
        out.append(f"q > d/β violated: q={q:g} <= {d / beta:.4g}")
    if strict:
        if not 0 < alpha < 0.5:
            out.append(f"strict: α ∈ (0,1/2) violated: α={alpha:g}")
        elif not p > d / (0.5 - alpha):
            out.append(f"strict: p > d/(1/2−α) violated: p={p:g} <= {d / (0.5 - alpha):.4g}")
    return out


def elliptic_violations(alpha: float, p: float, beta: float, q: float, d: int) -> list:
    """Window for the elliptic solve with a distributional first-order term."""
    return exponent_violations(alpha, p, beta, q, d)
