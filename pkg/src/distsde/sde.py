"""Euler-Maruyama path simulation for the mollified and the transformed SDE.

Both pipelines share one compiled stepping kernel and one counter-based
random stream, so with the same seed they are driven by the same Brownian
increments.  Paths run in fixed blocks (see :mod:`distsde.rng`) that are
reduced in block order, which makes every output independent of the number
of worker threads.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels, rng
from .distributions import DistributionRep, realize_mollified, working_level
from .drift import DriftSpec
from .grid import DiffusionSpec, GridFunction, GridSpec
from .interp import SplineField
from .zvonkin import TransformedCoeffs, ZvonkinMap, _upsample_factor

__all__ = [
    "Dynamics",
    "PathEnsemble",
    "FunctionalSample",
    "SimulationError",
    "StabilityError",
    "mollified_dynamics",
    "transformed_dynamics",
    "simulate",
    "simulate_mollified",
    "simulate_transformed",
    "simulate_exit",
    "zero_energy_functional",
    "young_integral",
    "fractional_brownian",
    "truncate_at_radius",
    "load_ensemble",
]

FLAG_RATE_LIMIT = 1e-3
STABILITY_LIMIT = 0.1
MAX_DT_TRANSFORMED = 1e-2
MAX_ABS = 1e6


class SimulationError(RuntimeError):
    """Too many paths blew up."""


class StabilityError(ValueError):
    """Step size too large for the tabulated drift."""


@dataclass(frozen=True, eq=False)
class Dynamics:
    """Everything the stepping kernel needs, in the simulated variable.

    In transformed mode the simulated variable is ``Y = Phi(X)``;
    ``to_state`` maps ``x0`` into it and ``from_state`` maps records back.
    """

    mode: int
    table: np.ndarray
    L: float
    hf: float
    b1_code: int
    kappa: float
    lam: float
    base: np.ndarray
    has_pert: bool
    drift_sup: float
    to_state: object = None
    from_state: object = None
    label: str = ""

    @property
    def d(self) -> int:
        return self.base.shape[0]

    def kernel_args(self) -> tuple:
        return (self.mode, self.table, self.L, self.hf, self.b1_code, self.kappa, self.lam, self.base, self.has_pert)


def mollified_dynamics(sigma: DiffusionSpec, drift: DriftSpec, n: float | None = None) -> Dynamics:
    """Direct dynamics with drift ``b1 + b2 * rho_n`` and diffusion ``sigma``.

    ``n`` defaults to the working mollification level of the drift grid.
    """
    d = sigma.d
    parts, grid = [], None
    drift_sup = 0.0
    if drift.b2 is not None and not drift.b2.is_zero():
        grid = drift.b2.grid
        level = working_level(grid) if n is None else n
        bn = realize_mollified(drift.b2, level)
        parts.append(bn.values.reshape((d,) + grid.shape))
        drift_sup = float(np.max(np.linalg.norm(parts[0].reshape(d, -1), axis=0)))
    has_pert = sigma.perturbation is not None
    if has_pert:
        pgrid = sigma.perturbation.grid
        if grid is not None and grid != pgrid:
            raise ValueError("drift and diffusion perturbation live on different grids")
        if grid is None:
            grid = pgrid
            parts.append(np.zeros((d,) + grid.shape))
        parts.append(sigma.perturbation.values.reshape((d * d,) + grid.shape))
    if grid is None:
        table = np.zeros((d, 1 if d == 1 else 4, 4))
        L, hf = 1.0, 0.5
    else:
        stacked = GridFunction(grid, np.concatenate(parts))
        spline = SplineField(stacked, _upsample_factor(d))
        table, L, hf = spline.coef, spline.L, spline.hf
    b1 = drift.b1
    return Dynamics(
        _kernels.MODE_DIRECT, table, L, hf, b1.code, float(b1.kappa), 0.0,
        np.ascontiguousarray(sigma.base), has_pert, drift_sup, label="mollified",
    )


def transformed_dynamics(coeffs: TransformedCoeffs) -> Dynamics:
    """Dynamics of ``Y = Phi(X)`` from tabulated transformed coefficients."""
    phi = coeffs.phi
    if not phi.certified:
        raise ValueError("transformed simulation requires a certified map")
    b1 = coeffs.b1
    g = coeffs.table_grid
    return Dynamics(
        _kernels.MODE_TRANSFORMED, coeffs.table, g.L, g.h, b1.code, float(b1.kappa), float(phi.lam),
        np.ascontiguousarray(coeffs.sigma.base), coeffs.has_pert, 0.0,
        to_state=phi, from_state=phi.invert, label="transformed",
    )


@dataclass(eq=False)
class PathEnsemble:
    """Recorded paths in the original variable.

    Attributes
    ----------
    states : ndarray, shape (M, n_records, d)
        ``X`` at ``times``; rows of flagged paths are NaN after the flag.
    running_sup : ndarray, shape (M, n_records)
        ``max_{s <= t} |X_s|`` over every Euler step up to each record time.
    stop_index : ndarray of int or None
        First record index with ``|X| >= stop_radius`` (``n_records`` if never).
    occupation : ndarray or None
        Post-burn-in counts of ``X`` over all steps and paths, in cells
        centred on the nodes of ``occupation_grid``.
    """

    T: float
    dt: float
    record_every: int
    states: np.ndarray = field(repr=False)
    running_sup: np.ndarray = field(repr=False)
    flags: np.ndarray = field(repr=False)
    seed: int = 0
    scenario_hash: str = ""
    stop_radius: float | None = None
    stop_index: np.ndarray | None = field(default=None, repr=False)
    occupation: np.ndarray | None = field(default=None, repr=False)
    occupation_grid: GridSpec | None = None
    burn_in: float = 0.0

    @property
    def M(self) -> int:
        return self.states.shape[0]

    @property
    def d(self) -> int:
        return self.states.shape[2]

    @property
    def steps(self) -> int:
        return (self.states.shape[1] - 1) * self.record_every

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.states.shape[1]) * self.record_every * self.dt

    def index_of(self, t: float) -> int:
        k = t / (self.record_every * self.dt)
        ki = int(round(k))
        if abs(k - ki) > 1e-9 or not 0 <= ki < self.states.shape[1]:
            raise ValueError(f"time {t} is not on the record schedule")
        return ki

    def at(self, t: float) -> np.ndarray:
        """States ``(M, d)`` of unflagged paths at time ``t``."""
        return self.states[~self.flags, self.index_of(t)]

    def header(self) -> dict:
        return {
            "M": self.M, "steps": self.steps, "d": self.d, "dt": self.dt, "seed": self.seed,
            "scenario_hash": self.scenario_hash, "T": self.T, "record_every": self.record_every,
        }

    def save(self, path) -> Path:
        """One JSON header line, then ``states`` as little-endian float64."""
        path = Path(path)
        with open(path, "wb") as fh:
            fh.write((json.dumps(self.header(), sort_keys=True) + "\n").encode("ascii"))
            fh.write(np.ascontiguousarray(self.states, dtype="<f8").tobytes())
        return path


def load_ensemble(path) -> PathEnsemble:
    with open(path, "rb") as fh:
        h = json.loads(fh.readline().decode("ascii"))
        data = np.frombuffer(fh.read(), dtype="<f8")
    states = data.reshape(h["M"], -1, h["d"]).copy()
    flags = ~np.all(np.isfinite(states), axis=(1, 2))
    sup = np.maximum.accumulate(np.linalg.norm(states, axis=2), axis=1)
    return PathEnsemble(h["T"], h["dt"], h["record_every"], states, sup, flags, h["seed"], h["scenario_hash"])


def _n_steps(T: float, dt: float) -> int:
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * T:
        raise ValueError(f"T={T} is not a multiple of dt={dt}")
    return steps


def _scenario_hash(dyn: Dynamics, x0, T, dt, M, record_every, extra=None) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(dyn.table).tobytes())
    meta = [dyn.mode, dyn.L, dyn.hf, dyn.b1_code, dyn.kappa, dyn.lam, dyn.base.tolist(), dyn.has_pert,
            np.asarray(x0, dtype=float).tolist(), T, dt, M, record_every, extra]
    h.update(json.dumps(meta).encode())
    return h.hexdigest()[:16]


def _map_threads(func, items, n_jobs: int) -> list:
    if n_jobs <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(func, items))


def simulate(
    dyn: Dynamics,
    x0,
    T: float,
    dt: float,
    M: int,
    seed: int,
    record_every: int | None = None,
    n_jobs: int = 1,
    occupation_grid: GridSpec | None = None,
    burn_in: float = 0.0,
) -> PathEnsemble:
    """Run ``M`` Euler-Maruyama paths of ``dyn`` from ``x0`` up to ``T``.

    Parameters
    ----------
    record_every : int, optional
        Record spacing in steps; defaults to recording only ``t = 0`` and ``T``.
    occupation_grid : GridSpec, optional
        Accumulate post-``burn_in`` occupation counts of ``X`` in cells
        centred on the nodes of this grid.

    Raises
    ------
    SimulationError
        If more than 0.1% of the paths leave ``|x| <= 1e6`` or turn non-finite.
    """
    d = dyn.d
    x0 = np.asarray(x0, dtype=float).reshape(d)
    steps = _n_steps(T, dt)
    re = steps if record_every is None else int(record_every)
    if re < 1 or steps % re:
        raise ValueError(f"record_every={re} must divide the step count {steps}")
    nrec = steps // re + 1
    y0 = x0 if dyn.to_state is None else dyn.to_state(x0[None])[0]
    if occupation_grid is not None:
        if occupation_grid.d != d:
            raise ValueError("occupation grid dimension differs from the state dimension")
        hist_h = occupation_grid.h
        lo = -occupation_grid.L - 0.5 * hist_h
        hist_shape = (occupation_grid.N, 1) if d == 1 else occupation_grid.shape
    else:
        lo, hist_h, hist_shape = 0.0, 1.0, (0, 1)
    burn_steps = int(round(burn_in / dt))
    args = dyn.kernel_args()
    n_chunks = -(-steps // rng.CHUNK)

    def run_block(job):
        b, sl = job
        B = sl.stop - sl.start
        x = np.tile(y0, (B, 1))
        rec = np.full((B, nrec, d), np.nan)
        rec[:, 0] = y0
        supn = np.zeros((B, nrec))
        flags = np.zeros(B, dtype=np.int8)
        hist = np.zeros(hist_shape)
        for c in range(n_chunks):
            S = min(rng.CHUNK, steps - c * rng.CHUNK)
            z = rng.normals(seed, b, c, rng.BLOCK, S, d)[:B]
            _kernels.euler_chunk(
                x, z, dt, c * rng.CHUNK, re, rec, supn, flags, *args,
                hist, lo, hist_h, burn_steps, MAX_ABS,
            )
        return rec, supn, flags, hist

    jobs = list(enumerate(rng.block_slices(M)))
    out = _map_threads(run_block, jobs, n_jobs)
    rec = np.concatenate([o[0] for o in out])
    supn = np.concatenate([o[1] for o in out])
    flags = np.concatenate([o[2] for o in out]).astype(bool)
    nflag = int(flags.sum())
    if nflag > FLAG_RATE_LIMIT * M:
        raise SimulationError(f"{nflag} of {M} paths flagged (limit {FLAG_RATE_LIMIT:.1%}); reduce dt")
    if dyn.from_state is not None:
        good = np.isfinite(rec).all(axis=2)
        rec[good] = dyn.from_state(rec[good])
    rec[flags] = np.nan
    rnorm = np.linalg.norm(rec, axis=2)
    running = np.maximum.accumulate(np.fmax(supn, rnorm), axis=1)
    occupation = None
    if occupation_grid is not None:
        occupation = np.zeros(hist_shape)
        for o in out:
            occupation += o[3]
        occupation = occupation[:, 0] if d == 1 else occupation
    return PathEnsemble(
        T, dt, re, rec, running, flags, seed,
        _scenario_hash(dyn, x0, T, dt, M, re, None if occupation_grid is None else [occupation_grid.L, occupation_grid.N, burn_in]),
        occupation=occupation,
        occupation_grid=occupation_grid,
        burn_in=burn_in,
    )


def simulate_mollified(
    x0, sigma: DiffusionSpec, drift: DriftSpec, n: float | None, T: float, dt: float, M: int, seed: int, **kwargs
) -> PathEnsemble:
    """Direct Euler-Maruyama with drift ``b1 + b2 * rho_n``.

    Raises
    ------
    StabilityError
        If ``dt * sup|b_n| > 0.1``.
    """
    dyn = mollified_dynamics(sigma, drift, n)
    if dt * dyn.drift_sup > STABILITY_LIMIT:
        raise StabilityError(
            f"dt * sup|b_n| = {dt * dyn.drift_sup:.3g} > {STABILITY_LIMIT}; use dt <= {STABILITY_LIMIT / dyn.drift_sup:.3g}"
        )
    return simulate(dyn, x0, T, dt, M, seed, **kwargs)


def simulate_transformed(
    x0, phi: ZvonkinMap, coeffs: TransformedCoeffs, T: float, dt: float, M: int, seed: int, **kwargs
) -> PathEnsemble:
    """Euler-Maruyama for ``Y = Phi(X)`` mapped back through ``Phi^{-1}``."""
    if coeffs.phi is not phi:
        raise ValueError("coefficients were tabulated for a different map")
    if dt > MAX_DT_TRANSFORMED:
        raise ValueError(f"dt={dt} exceeds {MAX_DT_TRANSFORMED}")
    return simulate(transformed_dynamics(coeffs), x0, T, dt, M, seed, **kwargs)


@dataclass(frozen=True)
class ExitSample:
    """First exits from an interval: ``side`` is -1 (low end), +1 (high end) or 0 (none by ``T``)."""

    side: np.ndarray
    exit_time: np.ndarray
    T: float

    @property
    def exited(self) -> int:
        return int(np.count_nonzero(self.side))

    def high_fraction(self) -> tuple:
        """Fraction of exited paths leaving through the high end, with its binomial standard error."""
        n = self.exited
        if n == 0:
            raise ValueError("no path exited")
        p = float(np.count_nonzero(self.side > 0)) / n
        return p, math.sqrt(p * (1 - p) / n)


def simulate_exit(dyn: Dynamics, x0: float, interval: tuple, T: float, dt: float, M: int, seed: int, n_jobs: int = 1) -> ExitSample:
    """First exit of 1d paths from ``interval`` with a Brownian-bridge crossing correction.

    In transformed mode the interval is mapped through ``Phi`` (monotone in 1d).
    """
    if dyn.d != 1:
        raise ValueError("exit simulation is one-dimensional")
    a, bb = map(float, interval)
    if not a < x0 < bb:
        raise ValueError(f"starting point {x0} not inside {interval}")
    steps = _n_steps(T, dt)
    if dyn.to_state is not None:
        a, y0, bb = dyn.to_state(np.array([[a], [x0], [bb]]))[:, 0]
    else:
        y0 = float(x0)
    args = dyn.kernel_args()
    n_chunks = -(-steps // rng.CHUNK)

    def run_block(job):
        b, sl = job
        B = sl.stop - sl.start
        x = np.full((B, 1), y0)
        side = np.zeros(B, dtype=np.int64)
        exit_step = np.zeros(B, dtype=np.int64)
        flags = np.zeros(B, dtype=np.int8)
        for c in range(n_chunks):
            if np.all((side != 0) | (flags != 0)):
                break
            S = min(rng.CHUNK, steps - c * rng.CHUNK)
            z = rng.normals(seed, b, c, rng.BLOCK, S, 1)[:B]
            u = rng.uniforms(seed, b, c, rng.BLOCK, S)[:B]
            _kernels.exit_chunk(x, z, u, dt, c * rng.CHUNK, a, bb, side, exit_step, flags, *args)
        return side, exit_step, flags

    out = _map_threads(run_block, list(enumerate(rng.block_slices(M))), n_jobs)
    side = np.concatenate([o[0] for o in out])
    flags = np.concatenate([o[2] for o in out])
    if np.count_nonzero(flags) > FLAG_RATE_LIMIT * M:
        raise SimulationError("too many non-finite exit paths; reduce dt")
    exit_time = np.where(side != 0, np.concatenate([o[1] for o in out]) * dt, np.inf)
    return ExitSample(side, exit_time, T)


# -- functionals --------------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FunctionalSample:
    """Time integrals ``int_0^t f_n(X_s) ds`` along recorded paths.

    ``values`` is the series for the largest level; ``deviations[j]`` is the
    path-mean of ``max_t |A^{n_j} - A^{n_{j+1}}|``.  ``converged`` requires the
    last deviation below ``threshold`` times the range of ``values`` and a
    strictly decreasing deviation sequence.
    """

    values: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)
    schedule: tuple = ()
    deviations: tuple = ()
    value_range: float = 0.0
    threshold: float = 0.05
    converged: bool = True
    tail_estimate: float = 0.0


def _path_integral(paths: PathEnsemble, fn: GridFunction) -> np.ndarray:
    spline = SplineField(fn, _upsample_factor(fn.grid.d))
    states = paths.states
    M, R, d = states.shape
    vals = spline(np.nan_to_num(states.reshape(-1, d))).reshape(M, R)
    h = paths.record_every * paths.dt
    A = np.zeros((M, R))
    A[:, 1:] = np.cumsum(vals[:, :-1], axis=1) * h
    if paths.stop_index is not None:
        idx = np.arange(R)
        stop = np.minimum(paths.stop_index, R - 1)
        A = np.where(idx[None, :] > stop[:, None], A[np.arange(M), stop][:, None], A)
    return A


def zero_energy_functional(
    paths: PathEnsemble, f: DistributionRep, n_schedule, threshold: float = 0.05
) -> FunctionalSample:
    """Left-endpoint quadrature of ``f_n = f * rho_n`` along each path for every level in ``n_schedule``.

    The quadrature uses the record spacing of ``paths``; after a path's stop
    index the integral is held constant.
    """
    schedule = tuple(float(n) for n in n_schedule)
    if len(schedule) < 2 or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("mollification schedule must be increasing with at least two levels")
    if f.grid.d != paths.d or (f.g.components not in ((), (1,))):
        raise ValueError("functional integrand must be scalar on the path dimension")
    flags = paths.flags
    series = []
    for n in schedule:
        fn = realize_mollified(f, n)
        if fn.components:
            fn = fn[0]
        series.append(_path_integral(paths, fn)[~flags])
    devs = tuple(float(np.mean(np.max(np.abs(a - b), axis=1))) for a, b in zip(series, series[1:]))
    top = series[-1]
    rng_val = float(np.max(top) - np.min(top))
    decreasing = all(b < a for a, b in zip(devs, devs[1:]))
    converged = devs[-1] <= threshold * max(rng_val, np.finfo(float).tiny) and (len(devs) < 2 or decreasing)
    tail = devs[-1]
    if len(devs) >= 2 and 0 < devs[-1] < devs[-2]:
        ratio = devs[-1] / devs[-2]
        tail = devs[-1] * ratio / (1 - ratio)
    return FunctionalSample(top, paths.times, schedule, devs, rng_val, threshold, converged, float(tail))


def young_integral(K: np.ndarray, A: np.ndarray, n: int) -> np.ndarray:
    """Dyadic left-point sums ``sum_k K(s_k) (A(s_{k+1}) - A(s_k))`` on the level-``n`` partition.

    ``K`` and ``A`` are sampled on the same dyadic grid of ``2**n_max + 1``
    points along their last axis.
    """
    K = np.asarray(K, dtype=float)
    A = np.asarray(A, dtype=float)
    if K.shape != A.shape:
        raise ValueError(f"integrand {K.shape} and integrator {A.shape} grids differ")
    npts = K.shape[-1] - 1
    n_max = npts.bit_length() - 1
    if npts < 1 or (1 << n_max) != npts:
        raise ValueError(f"series length {npts + 1} is not 2**n + 1")
    if not 0 <= n <= n_max:
        raise ValueError(f"level {n} outside [0, {n_max}]")
    stride = 1 << (n_max - n)
    k = K[..., ::stride]
    a = A[..., ::stride]
    return np.sum(k[..., :-1] * np.diff(a, axis=-1), axis=-1)


def fractional_brownian(hurst: float, n_levels: int, M: int, seed: int, T: float = 1.0) -> np.ndarray:
    """Exact fractional Brownian paths on ``2**n_levels + 1`` dyadic points by circulant embedding.

    Returns an ``(M, 2**n_levels + 1)`` array starting at 0.
    """
    if not 0 < hurst < 1:
        raise ValueError("Hurst index must lie in (0, 1)")
    n = 1 << n_levels
    k = np.arange(n + 1, dtype=float)
    two_h = 2 * hurst
    cov = 0.5 * ((k + 1) ** two_h - 2 * k**two_h + np.abs(k - 1) ** two_h)
    circ = np.concatenate([cov, cov[-2:0:-1]])
    eig = np.fft.fft(circ).real
    if eig.min() < -1e-10 * eig.max():
        raise ValueError("circulant embedding is not nonnegative definite")
    eig = np.clip(eig, 0.0, None)
    gen = np.random.Generator(np.random.Philox(seed))
    z = gen.standard_normal((M, 2 * n)) + 1j * gen.standard_normal((M, 2 * n))
    noise = np.fft.fft(np.sqrt(eig / (2 * n)) * z, axis=1)[:, :n].real
    out = np.zeros((M, n + 1))
    out[:, 1:] = np.cumsum(noise, axis=1) * (T / n) ** hurst
    return out


def truncate_at_radius(paths: PathEnsemble, R: float) -> PathEnsemble:
    """Record each path's first record index with ``|X| >= R``."""
    if not R > 0:
        raise ValueError("truncation radius must be positive")
    outside = np.linalg.norm(paths.states, axis=2) >= R
    hit = outside.any(axis=1)
    stop = np.where(hit, np.argmax(outside, axis=1), paths.states.shape[1])
    return replace(paths, stop_radius=float(R), stop_index=stop)
