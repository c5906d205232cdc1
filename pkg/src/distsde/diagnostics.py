"""Statistical checks on simulated ensembles.

Density estimates use a binned Gaussian kernel: samples are linearly binned
onto the nodes of a window grid and smoothed by a separable Gaussian filter,
so bootstrap resamples reduce to multinomial redraws of the bin counts.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage, stats

from .distributions import DistributionRep, working_level
from .grid import GridFunction, GridSpec, SobolevIndex, sobolev_norm
from .reports import ScalingReport, fit_scaling
from .sde import PathEnsemble, young_integral, zero_energy_functional

__all__ = [
    "KernelEstimate",
    "EnvelopeFit",
    "InvariantEstimate",
    "MomentReport",
    "GronwallReport",
    "LawComparison",
    "silverman_bandwidth",
    "estimate_density",
    "exact_estimate",
    "gaussian_pdf",
    "l1_distance",
    "fit_gaussian_envelope",
    "gradient_envelope",
    "krylov_scaling",
    "increment_scaling",
    "young_rate",
    "moment_bounds",
    "ergodic_suite",
    "stochastic_gronwall_check",
    "synthetic_gronwall",
    "compare_laws",
]

MIN_SAMPLES = 10_000
MIN_IN_WINDOW = 100
C1_CAP = 50.0
C2_RANGE = (1.0, 64.0)


# -- density estimation ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelEstimate:
    """Kernel estimate of the law of ``X_t`` started at ``x0``.

    ``halfwidth`` holds per-node 95% bootstrap half-widths; ``flagged`` is
    set when fewer than 100 samples fall inside the window.
    """

    t: float
    x0: np.ndarray
    density: GridFunction = field(repr=False)
    bandwidth: tuple = ()
    halfwidth: np.ndarray = field(default=None, repr=False)
    n_samples: int = 0
    n_in_window: int = 0
    flagged: bool = False

    @property
    def grid(self) -> GridSpec:
        return self.density.grid

    def mass(self) -> float:
        return float(self.density.integral())


def silverman_bandwidth(samples: np.ndarray) -> np.ndarray:
    """Per-axis Silverman bandwidth ``(4/(d+2))^{1/(d+4)} sd M^{-1/(d+4)}``."""
    samples = np.asarray(samples, dtype=float).reshape(len(samples), -1)
    M, d = samples.shape
    return (4.0 / (d + 2)) ** (1.0 / (d + 4)) * samples.std(axis=0, ddof=1) * M ** (-1.0 / (d + 4))


def _linear_bin(samples: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Linear-binning counts on the window nodes; samples beyond the outer nodes are dropped."""
    d = grid.d
    pos = (samples + grid.L) / grid.h
    base = np.floor(pos).astype(np.int64)
    frac = pos - base
    counts = np.zeros(grid.shape)
    for corner in range(1 << d):
        idx, w = [], np.ones(len(samples))
        for ax in range(d):
            off = (corner >> ax) & 1
            idx.append(base[:, ax] + off)
            w = w * (frac[:, ax] if off else 1.0 - frac[:, ax])
        ok = np.all([(i >= 0) & (i < grid.N) for i in idx], axis=0)
        np.add.at(counts, tuple(i[ok] for i in idx), w[ok])
    return counts


def _smooth(counts: np.ndarray, grid: GridSpec, bandwidth: np.ndarray) -> np.ndarray:
    out = counts
    for ax in range(grid.d):
        out = ndimage.gaussian_filter1d(out, bandwidth[ax] / grid.h, axis=out.ndim - grid.d + ax, mode="constant", truncate=6.0)
    return out


def _auto_window(samples: np.ndarray, bandwidth: np.ndarray) -> GridSpec:
    d = samples.shape[1]
    reach = np.max(np.abs(samples.mean(axis=0)) + 6.0 * samples.std(axis=0))
    L = float(2.0 ** math.ceil(math.log2(max(reach, 1e-3))))
    cap = 1 << (14 if d == 1 else 9)
    N = 64
    while N < cap and 2 * L / N > np.min(bandwidth) / 4:
        N *= 2
    return GridSpec(d, L, N)


def estimate_density(
    paths: PathEnsemble,
    t: float,
    bandwidth=None,
    window: GridSpec | None = None,
    n_boot: int = 100,
    seed: int = 0,
) -> KernelEstimate:
    """Gaussian-kernel estimate of the density of ``X_t`` with bootstrap 95% half-widths.

    ``bandwidth`` defaults to :func:`silverman_bandwidth`.  The estimate is
    normalized by the total sample count, so mass outside the window is lost
    rather than redistributed.
    """
    x = paths.at(t)
    M = len(x)
    if M < MIN_SAMPLES:
        raise ValueError(f"density estimation needs at least {MIN_SAMPLES} paths, got {M}")
    d = x.shape[1]
    bw = silverman_bandwidth(x) if bandwidth is None else np.broadcast_to(np.asarray(bandwidth, dtype=float), (d,))
    grid = _auto_window(x, bw) if window is None else window
    counts = _linear_bin(x, grid)
    norm = M * grid.cell_volume
    dens = np.clip(_smooth(counts, grid, bw), 0.0, None) / norm
    n_in = int(round(counts.sum()))
    gen = np.random.Generator(np.random.Philox(seed))
    flat = np.append(counts.ravel(), max(M - counts.sum(), 0.0)) / M
    flat = np.clip(flat, 0.0, None)
    flat /= flat.sum()
    draws = gen.multinomial(M, flat, size=n_boot)[:, :-1].reshape((n_boot,) + grid.shape).astype(float)
    boot = np.clip(_smooth(draws, grid, bw), 0.0, None) / norm
    lo, hi = np.percentile(boot, [2.5, 97.5], axis=0)
    x0 = paths.states[0, 0].copy()
    return KernelEstimate(
        t, x0, GridFunction(grid, dens), tuple(float(b) for b in bw), 0.5 * (hi - lo), M, n_in, n_in < MIN_IN_WINDOW,
    )


def gaussian_pdf(points: np.ndarray, mean, cov) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    d = points.shape[-1]
    return stats.multivariate_normal(np.broadcast_to(mean, (d,)), np.atleast_2d(cov)).pdf(points).reshape(points.shape[:-1])


def exact_estimate(grid: GridSpec, t: float, x0, pdf) -> KernelEstimate:
    """Wrap an exact density callable as a noise-free :class:`KernelEstimate`."""
    pts = np.moveaxis(grid.mesh(), 0, -1)
    vals = pdf(pts)
    return KernelEstimate(t, np.asarray(x0, dtype=float).reshape(grid.d), GridFunction(grid, vals), (0.0,) * grid.d,
                          np.zeros(grid.shape), 0, 0, False)


def l1_distance(est, pdf) -> float:
    """``int |est - pdf|`` over the window; ``pdf`` is a callable on points ``(..., d)`` or a GridFunction."""
    dens = est.density if isinstance(est, KernelEstimate) else est
    grid = dens.grid
    if isinstance(pdf, GridFunction):
        if pdf.grid != grid:
            raise ValueError("densities live on different grids")
        ref = pdf.values
    else:
        ref = pdf(np.moveaxis(grid.mesh(), 0, -1))
    return float(np.sum(np.abs(dens.values - ref)) * grid.cell_volume)


# -- heat-kernel envelopes ------------------------------------------------------------------


@dataclass
class EnvelopeFit:
    """Envelope constants relative to the reference Gaussian of variance ``variance * t``.

    Two-sided: ``c1^{-1} G(c2^{-1}) <= p <= c1 G(c2)`` with
    ``G(c) = (2 pi s^2)^{-d/2} exp(-|x-y|^2 / (2 c s^2))``.  Gradient:
    ``|grad_x p| <= c3 s^{-1} G(c4)``.
    """

    c1: float
    c2: float
    region_mult: float
    passed: bool
    violating_fraction: float
    n_bins: int
    c3: float | None = None
    c4: float | None = None
    level: str = "fail"

    def to_dict(self) -> dict:
        return asdict(self)


def _admissible(est: KernelEstimate, region_mult: float, max_rel: float):
    grid = est.grid
    pts = np.moveaxis(grid.mesh(), 0, -1)
    r2 = np.sum((pts - est.x0) ** 2, axis=-1)
    p = est.density.values
    keep = (r2 <= region_mult**2 * est.t) & (p > 0) & (est.halfwidth < max_rel * p)
    return keep, r2


def fit_gaussian_envelope(
    est: KernelEstimate,
    region_mult: float = 3.0,
    variance: float = 1.0,
    max_rel_halfwidth: float = 0.25,
    n_c2: int = 241,
) -> EnvelopeFit:
    """Smallest ``c1`` over a geometric ``c2`` grid on ``[1, 64]``; pass when ``c1 <= 50``.

    Only bins within ``region_mult * sqrt(t)`` of ``x0`` whose bootstrap
    half-width is below ``max_rel_halfwidth`` of the estimate are used.
    """
    keep, r2 = _admissible(est, region_mult, max_rel_halfwidth)
    if not keep.any():
        raise ValueError("no admissible bins for the envelope fit")
    d = est.grid.d
    s2 = variance * est.t
    base = (2 * np.pi * s2) ** (-d / 2)
    p, r2 = est.density.values[keep], r2[keep]
    best = (np.inf, np.nan)
    for c2 in np.geomspace(*C2_RANGE, n_c2):
        up = base * np.exp(-r2 / (2 * c2 * s2))
        lo = base * np.exp(-c2 * r2 / (2 * s2))
        c1 = max(1.0, float(np.max(p / up)), float(np.max(lo / p)))
        if c1 < best[0]:
            best = (c1, float(c2))
    c1, c2 = best
    cap = min(c1, C1_CAP)
    up = cap * base * np.exp(-r2 / (2 * c2 * s2))
    lo = base * np.exp(-c2 * r2 / (2 * s2)) / cap
    viol = float(np.mean((p > up * (1 + 1e-12)) | (p < lo * (1 - 1e-12))))
    ok = c1 <= C1_CAP
    return EnvelopeFit(c1, c2, region_mult, ok, viol, int(keep.sum()), level="pass" if ok else "fail")


def gradient_envelope(
    plus: list,
    minus: list,
    delta: float,
    region_mult: float = 3.0,
    variance: float = 1.0,
    max_rel_halfwidth: float = 0.25,
    n_c4: int = 241,
) -> EnvelopeFit:
    """Envelope for ``|grad_x p|`` from estimates started at ``x0 +/- delta e_i`` (warn-level).

    ``plus[i]`` and ``minus[i]`` are the estimates for axis ``i``; ``x0`` is
    their midpoint.  Returns ``level = "warn"`` instead of failing.
    """
    d = len(plus)
    ref = plus[0]
    grid, t = ref.grid, ref.t
    grad2 = np.zeros(grid.shape)
    keep = np.ones(grid.shape, dtype=bool)
    for ep, em in zip(plus, minus):
        if ep.grid != grid or em.grid != grid:
            raise ValueError("gradient estimates live on different windows")
        gi = (ep.density.values - em.density.values) / (2 * delta)
        grad2 += gi**2
        for e in (ep, em):
            keep &= (e.density.values > 0) & (e.halfwidth < max_rel_halfwidth * e.density.values)
    x0 = 0.5 * (plus[0].x0 + minus[0].x0)
    pts = np.moveaxis(grid.mesh(), 0, -1)
    r2 = np.sum((pts - x0) ** 2, axis=-1)
    keep &= r2 <= region_mult**2 * t
    if not keep.any():
        return EnvelopeFit(np.nan, np.nan, region_mult, False, 1.0, 0, np.inf, np.nan, level="warn")
    s2 = variance * t
    base = (2 * np.pi * s2) ** (-d / 2) / math.sqrt(s2)
    g, r2 = np.sqrt(grad2[keep]), r2[keep]
    best = (np.inf, np.nan)
    for c4 in np.geomspace(*C2_RANGE, n_c4):
        c3 = float(np.max(g / (base * np.exp(-r2 / (2 * c4 * s2)))))
        if c3 < best[0]:
            best = (c3, float(c4))
    c3, c4 = best
    ok = np.isfinite(c3) and c3 <= C1_CAP
    return EnvelopeFit(np.nan, np.nan, region_mult, bool(ok), 0.0, int(keep.sum()), c3, c4, level="pass" if ok else "warn")


# -- scaling regressions -------------------------------------------------------------------


def _check_pairs(pairs) -> tuple:
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2 or np.any(pairs[:, 1] <= pairs[:, 0]):
        raise ValueError("pairs must be (t0, t1) with t1 > t0")
    return pairs, pairs[:, 1] - pairs[:, 0]


def krylov_scaling(
    paths: PathEnsemble,
    f: DistributionRep,
    pairs,
    m: int = 1,
    n_schedule=None,
    tolerance: float = 0.15,
) -> tuple:
    """Regress ``log E|A^f_{t1} - A^f_{t0}|^{2m}`` on ``log(t1 - t0)``.

    The expected slope is ``(2 - alpha - d/p) m``; the check passes when the
    fitted slope is at least ``expected - tolerance``.  ``n_schedule``
    defaults to the working level divided by ``(4, 2, 1)``.

    Returns
    -------
    (ScalingReport, FunctionalSample)
    """
    pairs, gaps = _check_pairs(pairs)
    if len(pairs) < 20 or gaps.max() / gaps.min() < 100 * (1 - 1e-9):
        raise ValueError("Krylov regression needs at least 20 pairs spanning two decades")
    if n_schedule is None:
        n0 = working_level(f.grid)
        n_schedule = (n0 / 4, n0 / 2, n0)
    sample = zero_energy_functional(paths, f, n_schedule)
    A = sample.values
    i0 = np.array([paths.index_of(t) for t in pairs[:, 0]])
    i1 = np.array([paths.index_of(t) for t in pairs[:, 1]])
    vals = np.mean(np.abs(A[:, i1] - A[:, i0]) ** (2 * m), axis=0)
    d = paths.d
    expected = (2 - f.alpha - d / f.p) * m
    return fit_scaling(gaps, vals, expected, tolerance, "lower", label=f"krylov m={m}"), sample


def increment_scaling(paths: PathEnsemble, pairs, m: int = 1, tolerance: float = 0.15) -> ScalingReport:
    """Regress ``log E|X_{t1} - X_{t0}|^{2m}`` on ``log(t1 - t0)``; expected slope ``m``, lower-bound check."""
    pairs, gaps = _check_pairs(pairs)
    X = paths.states[~paths.flags]
    i0 = np.array([paths.index_of(t) for t in pairs[:, 0]])
    i1 = np.array([paths.index_of(t) for t in pairs[:, 1]])
    inc = np.linalg.norm(X[:, i1] - X[:, i0], axis=2)
    vals = np.mean(inc ** (2 * m), axis=0)
    return fit_scaling(gaps, vals, float(m), tolerance, "lower", label=f"increment m={m}")


def young_rate(K: np.ndarray, A: np.ndarray, beta: float, gamma: float, levels=None, tolerance: float = 0.2) -> ScalingReport:
    """Decay of ``||I_{n+1} - I_n||_{L^2}`` for the dyadic sums of ``int K dA``.

    Regresses the root-mean-square level difference on ``2^{-n}``; the
    check passes when the exponent is at least ``beta + gamma - 1 - tolerance``.
    ``levels`` defaults to ``4 .. n_max - 1``.
    """
    if not beta + gamma > 1:
        raise ValueError(f"need beta + gamma > 1, got {beta + gamma:g}")
    n_max = (np.shape(K)[-1] - 1).bit_length() - 1
    levels = np.arange(4, n_max) if levels is None else np.asarray(levels, dtype=int)
    sums = {n: young_integral(K, A, n) for n in np.union1d(levels, levels + 1)}
    rms = [float(np.sqrt(np.mean((sums[n + 1] - sums[n]) ** 2))) for n in levels]
    return fit_scaling(2.0 ** -levels.astype(float), rms, beta + gamma - 1, tolerance, "lower", label="young")


@dataclass
class MomentReport:
    """``C_T = E sup_{t<=T} |X_t|^m / (1 + |x0|^m + T^m)`` per horizon.

    ``passed`` when no horizon needs a constant more than ``1 + tolerance``
    times the one fitted at the shortest horizon.
    """

    m: int
    horizons: list
    moments: list
    constants: list
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def moment_bounds(ensembles: dict, m: int, tolerance: float = 0.25) -> MomentReport:
    """Supremum-moment constants over horizons; ``ensembles`` maps ``T`` to a run ending at ``T``."""
    horizons = sorted(ensembles)
    moments, consts = [], []
    for T in horizons:
        e = ensembles[T]
        x0 = float(np.linalg.norm(e.states[0, 0]))
        sup = e.running_sup[~e.flags, e.index_of(T)]
        mom = float(np.mean(sup**m))
        moments.append(mom)
        consts.append(mom / (1 + x0**m + T**m))
    ok = max(consts) <= (1 + tolerance) * consts[0]
    return MomentReport(m, horizons, moments, consts, tolerance, bool(ok))


# -- invariant measure ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InvariantEstimate:
    """Occupation-measure density with its diagnostics."""

    density: GridFunction = field(repr=False)
    burn_in: float = 0.0
    effective_samples: float = 0.0
    norm_value: float = 0.0
    norm_index: tuple = ()
    mass: float = 1.0
    l1: float | None = None
    bandwidth: float = 0.0


def _integrated_autocorr(x: np.ndarray) -> float:
    """Integrated autocorrelation time by the initial positive sequence rule."""
    x = x - x.mean()
    n = len(x)
    if n < 4 or not np.any(x):
        return 1.0
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf /= acf[0]
    tau = 1.0
    for k in range(1, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2 * pair
    return tau


def ergodic_suite(
    paths: PathEnsemble,
    growth: float,
    oracle: GridFunction | None = None,
    bandwidth: float = 0.01,
    gamma: float = 0.5,
    r: float = 1.5,
) -> InvariantEstimate:
    """Estimate the invariant density from the post-burn-in occupation histogram of ``paths``.

    The occupation grid doubles as the spectral grid for the discrete
    ``H^{gamma, r}`` norm; ``oracle`` must live on the same grid.

    Raises
    ------
    ValueError
        If ``growth == 0`` (no ergodicity claim), the burn-in is under 10%
        of the horizon, ``r`` is outside ``(1, d/(d+gamma-1))``, or no
        occupation histogram was recorded.
    """
    if not growth > 0:
        raise ValueError("ergodic analysis needs a dissipative drift with positive growth exponent")
    if paths.occupation is None:
        raise ValueError("ensemble carries no occupation histogram")
    if paths.burn_in < 0.1 * paths.T:
        raise ValueError(f"burn-in {paths.burn_in} is below 10% of the horizon {paths.T}")
    d = paths.d
    if not 0 < gamma < 1 or not 1 < r < d / (d + gamma - 1):
        raise ValueError(f"need gamma in (0, 1) and r in (1, {d / (d + gamma - 1):.4g})")
    grid = paths.occupation_grid
    burn_steps = int(round(paths.burn_in / paths.dt))
    total = (~paths.flags).sum() * (paths.steps - 1 - burn_steps)
    density = GridFunction(grid, _smooth(paths.occupation, grid, np.full(d, bandwidth)) / (total * grid.cell_volume))
    X = paths.states[~paths.flags]
    k0 = int(np.ceil(burn_steps / paths.record_every))
    series = X[:, k0:, 0]
    ess = float(sum(len(s) / _integrated_autocorr(s) for s in series))
    norm = sobolev_norm(density, SobolevIndex(gamma, r))
    mass = float(density.integral())
    l1 = None if oracle is None else l1_distance(density, oracle)
    return InvariantEstimate(density, paths.burn_in, ess, float(norm), (gamma, r), mass, l1, bandwidth)


# -- stochastic Gronwall ---------------------------------------------------------------------


@dataclass
class GronwallReport:
    """Monte Carlo comparison of both sides of the stochastic Gronwall bound."""

    p: float
    q: float
    lhs: float
    rhs: float
    se_lhs: float
    se_rhs: float
    hypothesis_ok: bool
    hypothesis_gap: float
    inequality_ok: bool
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def stochastic_gronwall_check(xi, eta, A, mart, p: float, q: float, tol: float = 1e-9) -> GronwallReport:
    """Check ``[E (xi*)^q]^{1/q} <= (p/(p-q))^{1/q} (E e^{p A/(1-p)})^{(1-p)/p} E eta*`` at the final time.

    Inputs are ``(M, n_times)`` arrays on a common time grid.  The
    hypothesis ``xi_t <= eta_t + int_0^t xi dA + mart_t`` is verified
    pathwise with left-point sums; if it fails, the check fails.  The
    inequality is accepted with a three-standard-error slack.
    """
    if not 0 < q < p < 1:
        raise ValueError(f"need 0 < q < p < 1, got p={p}, q={q}")
    xi, eta, A, mart = (np.asarray(v, dtype=float) for v in (xi, eta, A, mart))
    if not (xi.shape == eta.shape == A.shape == mart.shape) or xi.ndim != 2:
        raise ValueError("processes must share one (M, n_times) shape")
    if np.any(np.diff(A, axis=1) < -tol) or np.any(np.abs(A[:, 0]) > tol) or np.any(np.abs(mart[:, 0]) > tol):
        raise ValueError("A must be nondecreasing from 0 and the martingale must start at 0")
    if np.any(xi < 0) or np.any(eta < 0):
        raise ValueError("xi and eta must be nonnegative")
    M = xi.shape[0]
    integral = np.zeros_like(xi)
    integral[:, 1:] = np.cumsum(xi[:, :-1] * np.diff(A, axis=1), axis=1)
    slack = eta + integral + mart - xi
    scale = 1.0 + np.abs(xi)
    gap = float(np.min(slack / scale))
    hyp_ok = gap >= -tol

    xs = xi.max(axis=1) ** q
    es = eta.max(axis=1)
    ex = np.exp(p * A[:, -1] / (1 - p))
    m_xs, m_es, m_ex = xs.mean(), es.mean(), ex.mean()
    lhs = m_xs ** (1 / q)
    se_lhs = (1 / q) * m_xs ** (1 / q - 1) * xs.std(ddof=1) / math.sqrt(M)
    k = (p / (p - q)) ** (1 / q)
    e_pow = (1 - p) / p
    rhs = k * m_ex**e_pow * m_es
    rel_ex = e_pow * ex.std(ddof=1) / (m_ex * math.sqrt(M))
    rel_es = es.std(ddof=1) / (m_es * math.sqrt(M))
    se_rhs = rhs * math.hypot(rel_ex, rel_es)
    ineq_ok = lhs <= rhs + 3 * math.hypot(se_lhs, se_rhs)
    return GronwallReport(
        p, q, float(lhs), float(rhs), float(se_lhs), float(se_rhs), bool(hyp_ok), gap, bool(ineq_ok), bool(hyp_ok and ineq_ok),
    )


def synthetic_gronwall(kind: str, M: int = 10_000, steps: int = 1000, T: float = 1.0, seed: int = 0) -> tuple:
    """Processes ``(xi, eta, A, mart)`` satisfying the Gronwall hypothesis by construction.

    ``trivial``: ``A = 0``, ``mart = 0``, ``xi = eta = 1 + |B|``.
    ``linear``: ``eta = 1``, ``A_t = t``, ``xi`` the Euler solution of ``d xi = xi dA + 0.5 xi dB``.
    ``random``: ``eta_t = 1 + t``, ``A_t = int_0^t |B_s| ds``, ``xi`` the Euler solution of
    ``d xi = d eta + xi dA + 0.5 xi dW`` with ``W`` independent of ``B``.
    ``violating``: the ``trivial`` processes with ``xi = 50 eta``, which breaks
    the hypothesis and the conclusion at every ``(p, q)`` with ``(p/(p-q))^{1/q} < 50``.
    """
    gen = np.random.Generator(np.random.Philox(seed))
    dt = T / steps
    t = np.linspace(0.0, T, steps + 1)
    dB = gen.standard_normal((M, steps)) * math.sqrt(dt)
    B = np.concatenate([np.zeros((M, 1)), np.cumsum(dB, axis=1)], axis=1)
    zeros = np.zeros((M, steps + 1))
    if kind in ("trivial", "violating"):
        eta = 1.0 + np.abs(B)
        return (50.0 if kind == "violating" else 1.0) * eta, eta, zeros, zeros.copy()
    if kind == "linear":
        eta = np.ones((M, steps + 1))
        A = np.broadcast_to(t, (M, steps + 1)).copy()
        dW = dB
    elif kind == "random":
        eta = np.broadcast_to(1.0 + t, (M, steps + 1)).copy()
        A = np.concatenate([np.zeros((M, 1)), np.cumsum(np.abs(B[:, :-1]) * dt, axis=1)], axis=1)
        dW = gen.standard_normal((M, steps)) * math.sqrt(dt)
    else:
        raise ValueError(f"unknown construction {kind!r}")
    xi = np.empty((M, steps + 1))
    mart = np.zeros((M, steps + 1))
    xi[:, 0] = eta[:, 0]
    dA = np.diff(A, axis=1)
    deta = np.diff(eta, axis=1)
    for k in range(steps):
        dm = 0.5 * xi[:, k] * dW[:, k]
        mart[:, k + 1] = mart[:, k] + dm
        xi[:, k + 1] = xi[:, k] + deta[:, k] + xi[:, k] * dA[:, k] + dm
    if np.any(xi < 0):
        raise ValueError("construction produced a negative process; reduce the step")
    return xi, eta, A, mart


# -- law comparison -------------------------------------------------------------------------


@dataclass
class LawComparison:
    """Per-coordinate two-sample distances with permutation p-values for KS."""

    ks: list
    w1: list
    pvalue: list
    null_q99: list
    n_perm: int

    def to_dict(self) -> dict:
        return asdict(self)


def _ks_from_labels(labels: np.ndarray, last_of_tie: np.ndarray, na: int, nb: int) -> float:
    ca = np.cumsum(labels)[last_of_tie]
    cb = (last_of_tie + 1) - ca
    return float(np.max(np.abs(ca / na - cb / nb)))


def compare_laws(ensA: PathEnsemble, ensB: PathEnsemble, t: float, n_perm: int = 200, seed: int = 0) -> LawComparison:
    """Two-sample Kolmogorov-Smirnov and Wasserstein-1 distances of ``X_t`` per coordinate.

    KS p-values come from ``n_perm`` label permutations of the pooled sample;
    ``null_q99`` is the 99th percentile of the permutation distribution.
    """
    a_all, b_all = ensA.at(t), ensB.at(t)
    if a_all.shape[1] != b_all.shape[1]:
        raise ValueError("ensembles have different dimensions")
    gen = np.random.Generator(np.random.Philox(seed))
    ks, w1, pv, q99 = [], [], [], []
    for c in range(a_all.shape[1]):
        a, b = a_all[:, c], b_all[:, c]
        na, nb = len(a), len(b)
        pooled = np.concatenate([a, b])
        order = np.argsort(pooled, kind="stable")
        sorted_vals = pooled[order]
        last = np.flatnonzero(np.append(sorted_vals[1:] != sorted_vals[:-1], True))
        labels = (order < na).astype(np.int64)
        obs = _ks_from_labels(labels, last, na, nb)
        null = np.array([_ks_from_labels(gen.permutation(labels), last, na, nb) for _ in range(n_perm)])
        ks.append(obs)
        w1.append(float(stats.wasserstein_distance(a, b)))
        pv.append(float((1 + np.count_nonzero(null >= obs - 1e-15)) / (1 + n_perm)))
        q99.append(float(np.quantile(null, 0.99)))
    return LawComparison(ks, w1, pv, q99, n_perm)
