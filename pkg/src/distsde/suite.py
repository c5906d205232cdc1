"""Config-driven scenarios and the named checks run by the command line.

Every check takes a :class:`Scenario` and a :class:`RunContext` and returns a
:class:`CheckResult` whose artifacts live in the context directory.
Artifacts depend only on the config (and its seed), never on the thread
count.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import sha256_file, write_csv, write_svg
from .config import config_hash
from .diagnostics import (
    compare_laws,
    ergodic_suite,
    estimate_density,
    fit_gaussian_envelope,
    gaussian_pdf,
    gradient_envelope,
    increment_scaling,
    krylov_scaling,
    l1_distance,
    moment_bounds,
    stochastic_gronwall_check,
    synthetic_gronwall,
    young_rate,
)
from .distributions import DistributionRep, make_distribution, weierstrass, weierstrass_drift, weierstrass_terms
from .drift import ClosedFormDrift, DriftSpec
from .grid import DiffusionSpec, GridFunction, GridSpec, cutoff_profile
from .inequalities import CATALOG, verify_inequality
from .oracle1d import exit_probability, export_csv, generator_residual, invariant_density, scale_function
from .pde import EllipticProblem, check_apriori_scaling
from .sde import (
    PathEnsemble,
    fractional_brownian,
    mollified_dynamics,
    simulate,
    simulate_exit,
    transformed_dynamics,
    young_integral,
)
from .zvonkin import build_map, transformed_coeffs

__all__ = ["Scenario", "RunContext", "CheckResult", "CHECK_FUNCS", "run_checks", "simulate_scenario"]

PASS, WARN, FAIL = "pass", "warn", "fail"
KDE_L1_LIMIT = 0.05
KS_LIMIT = 0.03
PVALUE_LIMIT = 0.01
EXIT_SE_LIMIT = 3.0
NONEXIT_LIMIT = 1e-3
RESIDUAL_LIMIT = 1e-8
GRADIENT_PATHS = 20_000
# increments probe the short-time scaling, before dissipation bends the curve
INCREMENT_MAX_STEPS = 128


@dataclass
class CheckResult:
    name: str
    status: str
    metrics: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    message: str = ""


@dataclass
class RunContext:
    directory: Path
    salt: str
    n_jobs: int = 1

    def path(self, name: str) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        return self.directory / name


class Scenario:
    """Model objects built from a validated config."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        g, s, dr, r = cfg["grid"], cfg["sobolev"], cfg["drift"], cfg["run"]
        self.grid = GridSpec(g["d"], g["L"], g["N"])
        d = self.grid.d
        scale = cfg["sigma"]["scale"]
        self.scale = scale
        self.sigma = DiffusionSpec(scale * np.eye(d), c0=max(scale**2, scale**-2), beta=s["beta"], q=s["q"])
        self.b1 = ClosedFormDrift(dr["b1"], dr["kappa"])
        self.alpha, self.p = s["alpha"], s["p"]
        self.b2 = None
        if dr["b2"] == "weierstrass":
            self.b2 = weierstrass_drift(self.grid, self.alpha, self.p, dr["amplitude"], cutoff_radius=dr["cutoff_radius"])
        self.x0 = np.broadcast_to(np.atleast_1d(np.asarray(r["x0"], dtype=float)), (d,)).copy()
        self.seed = r["seed"]

    @property
    def drift(self) -> DriftSpec:
        return DriftSpec(self.b1, self.b2)

    def zero_drift(self) -> DistributionRep:
        d = self.grid.d
        shape = ((d,) if d > 1 else ()) + self.grid.shape
        return make_distribution(GridFunction(self.grid, np.zeros(shape)), self.alpha, self.p)

    @cached_property
    def phi(self):
        return build_map(self.sigma, self.b2 if self.b2 is not None else self.zero_drift())

    def dynamics(self, pipeline: str | None = None):
        pipeline = pipeline or self.cfg["run"]["pipeline"]
        if pipeline == "transformed":
            return transformed_dynamics(transformed_coeffs(self.phi, self.sigma, self.b1))
        return mollified_dynamics(self.sigma, self.drift)

    def potential(self):
        """Continuous ``B`` with ``B' = b1 + b2`` in 1d, with the Weierstrass terms the grid resolves."""
        dr = self.cfg["drift"]
        n_terms = weierstrass_terms(self.grid)
        kappa, kind = self.b1.kappa, self.b1.kind
        amp, R = dr["amplitude"], dr["cutoff_radius"]
        weier = dr["b2"] == "weierstrass"

        def B(y):
            y = np.asarray(y, dtype=float)
            out = np.zeros_like(y)
            if kind == "linear":
                out = out - 0.5 * kappa * y**2
            elif kind == "saturating":
                out = out - kappa * np.sqrt(1.0 + y**2)
            if weier:
                out = out + amp * cutoff_profile(np.abs(y) / R) * weierstrass(y, n_terms)
            return out

        return B

    def exact_density(self, t: float):
        """Closed-form law of ``X_t`` when the drift is zero or linear without ``b2``."""
        if self.b2 is not None or self.b1.kind == "saturating":
            return None
        s2 = self.scale**2
        if self.b1.kind == "zero":
            mean, var = self.x0, s2 * t
        else:
            k = self.b1.kappa
            mean, var = self.x0 * math.exp(-k * t), s2 * (1 - math.exp(-2 * k * t)) / (2 * k)
        return lambda pts: gaussian_pdf(pts, mean, var * np.eye(self.grid.d))


def _steps(t: float, dt: float) -> int:
    k = int(round(t / dt))
    if abs(k * dt - t) > 1e-9 * max(t, dt):
        raise ValueError(f"time {t} is not a multiple of dt={dt}")
    return k


def _gap_pairs(T: float, dt: float, n: int, max_steps: int | None = None) -> np.ndarray:
    """About ``n`` pairs ``(T/4, T/4 + gap)`` with distinct geometric gaps up to ``3T/4``.

    Gaps start at ``4 dt``, or at one step when that leaves less than two
    decades; ``max_steps`` caps the largest gap.
    """
    t0 = _steps(T / 4, dt)
    top = _steps(T, dt) - t0
    if max_steps is not None:
        top = min(top, max_steps)
    low = 4 if top >= 400 else 1
    count = n
    gaps = np.unique(np.round(np.geomspace(low, top, count)).astype(int))
    while len(gaps) < min(n, 20) and count < 4 * n:
        count += 1
        gaps = np.unique(np.round(np.geomspace(low, top, count)).astype(int))
    if len(gaps) < 20 or gaps[-1] / gaps[0] < 100:
        raise ValueError("horizon too short for 20 distinct gaps spanning two decades")
    return np.stack([np.full(len(gaps), t0 * dt), (t0 + gaps) * dt], axis=1)


def _scalar_metrics(d: dict) -> dict:
    return {k: v for k, v in d.items() if isinstance(v, (int, float, bool, str)) or v is None}


# -- checks ----------------------------------------------------------------------------------


def check_zvonkin(sc: Scenario, ctx: RunContext) -> CheckResult:
    phi = sc.phi
    ident = build_map(sc.sigma, sc.zero_drift())
    identity_exact = not np.any(ident.u.values) and not np.any(ident.grad_u.values)
    arts = phi.save(ctx.directory, "zvonkin")
    c = phi.certificates
    metrics = {
        "lambda": phi.lam,
        "sup_grad": phi.sup_grad,
        "bilipschitz_min": c.get("bilipschitz_min"),
        "bilipschitz_max": c.get("bilipschitz_max"),
        "min_det": c.get("min_det"),
        "residual": phi.solve_residual,
        "identity_exact": identity_exact,
    }
    arts.append(write_csv(ctx.path("zvonkin_certificates.csv"), ["name", "value"], sorted(metrics.items())))
    ok = (
        phi.certified
        and phi.sup_grad <= 0.5
        and metrics["bilipschitz_min"] >= 0.5
        and metrics["bilipschitz_max"] <= 2.0
        and phi.solve_residual <= RESIDUAL_LIMIT
        and identity_exact
    )
    return CheckResult("zvonkin", PASS if ok else FAIL, metrics, arts)


def check_apriori(sc: Scenario, ctx: RunContext) -> CheckResult:
    a = sc.cfg["apriori"]
    dr = sc.cfg["drift"]
    grid = GridSpec(1, sc.grid.L, a["N"]) if sc.grid.d == 1 else sc.grid
    terms = min(a["terms"], weierstrass_terms(grid))
    b = weierstrass_drift(grid, sc.alpha, sc.p, dr["amplitude"], n_terms=terms, cutoff_radius=dr["cutoff_radius"])
    reports = check_apriori_scaling(EllipticProblem(sc.sigma, b, a["lambdas"][0], -b), a["lambdas"])
    rows = [(t, r.slope, r.expected_slope, r.tolerance, r.passed) for t, r in sorted(reports.items())]
    arts = [write_csv(ctx.path("apriori_scaling.csv"), ["theta", "slope", "expected", "tolerance", "passed"], rows)]

    def draw(ax):
        for t, r in sorted(reports.items()):
            ax.plot(r.x, r.y, "o-", label=f"theta={t:g} slope={r.slope:.3f}")
        ax.set_xlabel("log lambda")
        ax.set_ylabel("log norm")
        ax.legend()

    arts.append(write_svg(ctx.path("apriori_scaling.svg"), draw, ctx.salt))
    metrics = {f"slope_theta{t:g}": r.slope for t, r in reports.items()} | {"grid_N": grid.N, "terms": terms}
    ok = all(r.passed for r in reports.values())
    return CheckResult("apriori", PASS if ok else FAIL, metrics, arts)


def check_heatkernel(sc: Scenario, ctx: RunContext) -> CheckResult:
    h, r = sc.cfg["heatkernel"], sc.cfg["run"]
    dt, times = r["dt"], sorted(h["times"])
    steps = [_steps(t, dt) for t in times]
    rec = math.gcd(*steps)
    dyn = sc.dynamics()
    T = times[-1]
    ens = simulate(dyn, sc.x0, T, dt, r["M"], sc.seed, record_every=rec, n_jobs=ctx.n_jobs)
    var = sc.scale**2
    d = sc.grid.d
    mg = min(r["M"], GRADIENT_PATHS)

    def shifted(t, sgn, ax):
        # one seed for both signs: common random numbers keep the difference quotient quiet
        e = np.zeros(d)
        e[ax] = sgn * math.sqrt(t) / 8
        return simulate(dyn, sc.x0 + e, t, dt, mg, sc.seed + 1 + ax, record_every=_steps(t, dt), n_jobs=ctx.n_jobs)

    metrics, rows, status = {}, [], PASS
    panels = []
    for t in times:
        est = estimate_density(ens, t, seed=sc.seed)
        env = fit_gaussian_envelope(est, h["region_mult"], variance=var)
        metrics[f"c1_t{t:g}"], metrics[f"c2_t{t:g}"] = env.c1, env.c2
        if not env.passed:
            status = FAIL
        exact = sc.exact_density(t)
        if exact is not None:
            l1 = l1_distance(est, exact)
            metrics[f"l1_t{t:g}"] = l1
            if l1 > KDE_L1_LIMIT:
                status = FAIL
        plus, minus = ([estimate_density(shifted(t, sgn, ax), t, window=est.grid, bandwidth=est.bandwidth, seed=sc.seed)
                        for ax in range(d)] for sgn in (1, -1))
        genv = gradient_envelope(plus, minus, math.sqrt(t) / 8, h["region_mult"], variance=var)
        metrics[f"c3_t{t:g}"], metrics[f"c4_t{t:g}"] = genv.c3, genv.c4
        metrics[f"gradient_level_t{t:g}"] = genv.level
        if genv.level != PASS and status == PASS:
            status = WARN
        pts = est.grid.mesh().reshape(d, -1).T
        s2 = var * t
        r2 = np.sum((pts - sc.x0) ** 2, axis=1)
        g0 = (2 * np.pi * s2) ** (-d / 2)
        upper = env.c1 * g0 * np.exp(-r2 / (2 * env.c2 * s2))
        lower = g0 * np.exp(-env.c2 * r2 / (2 * s2)) / env.c1
        dens, hw = est.density.values.ravel(), est.halfwidth.ravel()
        rows.extend((t, *p, v, w, lo, up) for p, v, w, lo, up in zip(pts, dens, hw, lower, upper))
        panels.append((t, pts, dens, lower, upper))
    coords = [f"x{i + 1}" for i in range(d)]
    arts = [write_csv(ctx.path("heatkernel.csv"), ["t", *coords, "density", "halfwidth", "lower", "upper"], rows)]
    if d == 1:
        def draw(ax):
            for t, pts, dens, lo, up in panels:
                line, = ax.semilogy(pts[:, 0], np.maximum(dens, 1e-12), label=f"t={t:g}")
                ax.semilogy(pts[:, 0], lo, ":", color=line.get_color())
                ax.semilogy(pts[:, 0], up, "--", color=line.get_color())
            ax.set_ylim(1e-6, None)
            ax.set_xlabel("x")
            ax.legend()

        arts.append(write_svg(ctx.path("heatkernel.svg"), draw, ctx.salt))
    return CheckResult("heatkernel", status, metrics, arts)


def check_krylov(sc: Scenario, ctx: RunContext) -> CheckResult:
    k, r = sc.cfg["krylov"], sc.cfg["run"]
    dt = r["dt"]
    ens = simulate(sc.dynamics(), sc.x0, k["T"], dt, k["M"], sc.seed, record_every=1, n_jobs=ctx.n_jobs)
    pairs = _gap_pairs(k["T"], dt, k["pairs"])
    metrics, rows, ok = {}, [], True
    for m in (1, 2):
        rep, sample = krylov_scaling(ens, sc.b2, pairs, m=m)
        metrics[f"slope_m{m}"] = rep.slope
        metrics[f"expected_m{m}"] = rep.expected_slope
        metrics["functional_converged"] = sample.converged
        ok &= rep.passed
        rows.extend((m, math.exp(x), math.exp(y)) for x, y in zip(rep.x, rep.y))
    arts = [write_csv(ctx.path("krylov.csv"), ["m", "gap", "moment"], rows)]
    return CheckResult("krylov", PASS if ok else FAIL, metrics, arts)


def check_compare_laws(sc: Scenario, ctx: RunContext) -> CheckResult:
    c, r = sc.cfg["compare-laws"], sc.cfg["run"]
    dt, t = c["dt"], c["t"]
    rec = _steps(t, dt)
    ens_t = simulate(sc.dynamics("transformed"), sc.x0, t, dt, r["M"], sc.seed, record_every=rec, n_jobs=ctx.n_jobs)
    ens_m = simulate(sc.dynamics("mollified"), sc.x0, t, dt, r["M"], sc.seed + 1, record_every=rec, n_jobs=ctx.n_jobs)
    cmp = compare_laws(ens_t, ens_m, t, n_perm=c["n_perm"], seed=sc.seed)
    rows = list(zip(range(len(cmp.ks)), cmp.ks, cmp.w1, cmp.pvalue, cmp.null_q99))
    arts = [write_csv(ctx.path("compare_laws.csv"), ["coordinate", "ks", "w1", "pvalue", "null_q99"], rows)]
    ok = all(k <= KS_LIMIT for k in cmp.ks) and all(p > PVALUE_LIMIT for p in cmp.pvalue)
    metrics = {"ks_max": max(cmp.ks), "pvalue_min": min(cmp.pvalue), "w1_max": max(cmp.w1)}
    return CheckResult("compare-laws", PASS if ok else FAIL, metrics, arts)


def check_oracle(sc: Scenario, ctx: RunContext) -> CheckResult:
    o, r = sc.cfg["oracle"], sc.cfg["run"]
    a, b = o["interval"]
    B = sc.potential()
    s = scale_function(B, sc.scale, (a, b))
    ref = exit_probability(s, a, b, o["x0"])
    resid = generator_residual(s, lambda y: np.gradient(B(y), y))
    ex = simulate_exit(sc.dynamics(o["pipeline"]), o["x0"], (a, b), o["T"], r["dt"], r["M"], sc.seed, n_jobs=ctx.n_jobs)
    p, se = ex.high_fraction()
    z = (p - ref) / se if se > 0 else math.inf
    missing = r["M"] - ex.exited
    metrics = {"oracle": ref, "estimate": p, "se": se, "z": z, "not_exited": missing, "generator_residual": resid}
    arts = [export_csv(s, ctx.path("oracle_scale.csv"))]
    arts.append(write_csv(ctx.path("oracle_exit.csv"), ["oracle", "estimate", "se", "z", "not_exited"],
                          [(ref, p, se, z, missing)]))
    ok = abs(z) <= EXIT_SE_LIMIT and missing <= NONEXIT_LIMIT * r["M"]
    msg = "" if missing <= NONEXIT_LIMIT * r["M"] else f"{missing} paths did not exit by T={o['T']:g}; raise oracle.T"
    return CheckResult("oracle", PASS if ok else FAIL, metrics, arts, msg)


def check_ergodicity(sc: Scenario, ctx: RunContext) -> CheckResult:
    e = sc.cfg["ergodicity"]
    dt = e["dt"]
    window = GridSpec(1, e["window_L"], e["window_N"])
    ens = simulate(sc.dynamics(), sc.x0, e["T"], dt, e["M"], sc.seed, record_every=_steps(1.0, dt),
                   n_jobs=ctx.n_jobs, occupation_grid=window, burn_in=e["burn_in"])
    s = scale_function(sc.potential(), sc.scale, (-1.0, 1.0), quad_N=2**16)
    oracle = invariant_density(s, window)
    inv = ergodic_suite(ens, sc.b1.growth, oracle=oracle, bandwidth=e["bandwidth"])
    rows = zip(window.nodes(), inv.density.values, oracle.values)
    arts = [write_csv(ctx.path("ergodicity.csv"), ["x", "estimate", "oracle"], rows)]

    def draw(ax):
        ax.plot(window.nodes(), inv.density.values, label="occupation estimate")
        ax.plot(window.nodes(), oracle.values, "--", label="speed-measure density")
        ax.set_xlim(-4, 4)
        ax.set_xlabel("x")
        ax.legend()

    arts.append(write_svg(ctx.path("ergodicity.svg"), draw, ctx.salt))
    metrics = {"l1": inv.l1, "mass": inv.mass, "effective_samples": inv.effective_samples, "norm": inv.norm_value}
    return CheckResult("ergodicity", PASS if inv.l1 <= KDE_L1_LIMIT else FAIL, metrics, arts)


def check_moments(sc: Scenario, ctx: RunContext) -> CheckResult:
    mo, r = sc.cfg["moments"], sc.cfg["run"]
    dt = r["dt"]
    horizons = sorted(mo["horizons"])
    rec = math.gcd(*[_steps(t, dt) for t in horizons])
    ens = simulate(sc.dynamics(), sc.x0, horizons[-1], dt, mo["M"], sc.seed, record_every=rec, n_jobs=ctx.n_jobs)
    idt = mo["increment_dt"]
    inc = simulate(sc.dynamics(), sc.x0, 1.0, idt, min(mo["M"], 2000), sc.seed + 1, record_every=1, n_jobs=ctx.n_jobs)
    pairs = _gap_pairs(1.0, idt, mo["pairs"], max_steps=INCREMENT_MAX_STEPS)
    metrics, rows, ok = {}, [], True
    for m in (1, 2):
        rep = moment_bounds({T: ens for T in horizons}, m)
        ok &= rep.passed
        rows.extend(("sup", m, T, mom, c) for T, mom, c in zip(rep.horizons, rep.moments, rep.constants))
        metrics[f"constant_ratio_m{m}"] = max(rep.constants) / rep.constants[0]
        sl = increment_scaling(inc, pairs, m)
        ok &= sl.passed
        metrics[f"increment_slope_m{m}"] = sl.slope
        rows.extend(("increment", m, math.exp(x), math.exp(y), "") for x, y in zip(sl.x, sl.y))
    arts = [write_csv(ctx.path("moments.csv"), ["kind", "m", "horizon_or_gap", "moment", "constant"], rows)]
    return CheckResult("moments", PASS if ok else FAIL, metrics, arts)


def check_young(sc: Scenario, ctx: RunContext) -> CheckResult:
    y = sc.cfg["young"]
    hk, ha = y["hurst"]
    K = fractional_brownian(hk, y["levels"], y["M"], sc.seed)
    A = fractional_brownian(ha, y["levels"], y["M"], sc.seed + 1)
    rep = young_rate(K, A, hk, ha)
    const = np.full_like(K, 2.5)
    exact = 2.5 * (A[:, -1] - A[:, 0])
    const_err = max(float(np.max(np.abs(young_integral(const, A, n) - exact))) for n in range(y["levels"] + 1))
    tol = 1e-12 * max(1.0, float(np.max(np.abs(exact))))
    rows = [(round(-x / math.log(2)), math.exp(v)) for x, v in zip(rep.x, rep.y)]
    arts = [write_csv(ctx.path("young.csv"), ["level", "rms_difference"], rows)]
    ok = rep.passed and const_err <= tol
    metrics = {"rate": rep.slope, "expected": rep.expected_slope, "constant_error": const_err}
    return CheckResult("young", PASS if ok else FAIL, metrics, arts)


def check_gronwall(sc: Scenario, ctx: RunContext) -> CheckResult:
    g = sc.cfg["gronwall"]
    rows, ok, metrics = [], True, {}
    for kind in ("trivial", "linear", "random", "violating"):
        procs = synthetic_gronwall(kind, g["M"], g["steps"], seed=sc.seed)
        for p, q in g["pairs"]:
            rep = stochastic_gronwall_check(*procs, p, q)
            expect = kind != "violating"
            ok &= rep.passed == expect
            rows.append((kind, p, q, rep.lhs, rep.rhs, rep.hypothesis_ok, rep.inequality_ok, rep.passed))
            metrics[f"{kind}_p{p:g}_q{q:g}"] = rep.passed
    arts = [write_csv(ctx.path("gronwall.csv"),
                      ["construction", "p", "q", "lhs", "rhs", "hypothesis_ok", "inequality_ok", "passed"], rows)]
    return CheckResult("gronwall", PASS if ok else FAIL, metrics, arts)


def check_inequalities(sc: Scenario, ctx: RunContext) -> CheckResult:
    iq, s = sc.cfg["inequalities"], sc.cfg["sobolev"]
    grid = GridSpec(sc.grid.d, iq["L"], iq["N"])
    rows, ok, metrics = [], True, {}
    for key in CATALOG:
        rep = verify_inequality(key, iq["trials"], s["alpha"], s["p"], s["beta"], s["q"], grid=grid, seed=sc.seed)
        ok &= rep.passed
        rows.append((key, rep.trials, rep.max_ratio, rep.max_ratio_refined, rep.refinement_drift, rep.passed))
        metrics[f"{key}_max_ratio"] = rep.max_ratio
    arts = [write_csv(ctx.path("inequalities.csv"),
                      ["inequality", "trials", "max_ratio", "max_ratio_refined", "refinement_drift", "passed"], rows)]
    return CheckResult("inequalities", PASS if ok else FAIL, metrics, arts)


def simulate_scenario(sc: Scenario, ctx: RunContext) -> CheckResult:
    """Plain ensemble run: the path file plus per-record summary statistics."""
    r = sc.cfg["run"]
    steps = _steps(r["T"], r["dt"])
    rec = max(1, steps // 256)
    while steps % rec:
        rec -= 1
    ens: PathEnsemble = simulate(sc.dynamics(), sc.x0, r["T"], r["dt"], r["M"], sc.seed, record_every=rec,
                                 n_jobs=ctx.n_jobs)
    X = ens.states[~ens.flags]
    qs = np.quantile(X[..., 0], [0.05, 0.5, 0.95], axis=0)
    rows = zip(ens.times, X[..., 0].mean(axis=0), X[..., 0].var(axis=0), *qs, ens.running_sup[~ens.flags].mean(axis=0))
    arts = [
        ens.save(ctx.path("paths.ens")),
        write_csv(ctx.path("paths_summary.csv"), ["t", "mean_x1", "var_x1", "q05_x1", "q50_x1", "q95_x1", "mean_sup"], rows),
    ]
    metrics = {"flagged": int(ens.flags.sum()), "scenario_hash": ens.scenario_hash}
    return CheckResult("simulate", PASS, metrics, arts)


CHECK_FUNCS = {
    "zvonkin": check_zvonkin,
    "apriori": check_apriori,
    "heatkernel": check_heatkernel,
    "krylov": check_krylov,
    "compare-laws": check_compare_laws,
    "oracle": check_oracle,
    "ergodicity": check_ergodicity,
    "moments": check_moments,
    "young": check_young,
    "gronwall": check_gronwall,
    "inequalities": check_inequalities,
    "simulate": simulate_scenario,
}


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    return v


def run_checks(cfg: dict, names: list, out: Path, n_jobs: int = 1, strict: bool = False) -> dict:
    """Run ``names`` and merge the results into ``<out>/<config hash>/manifest.json``.

    Raises
    ------
    FileExistsError
        If the hash directory holds a manifest for a different config.
    """
    h = config_hash(cfg)
    directory = Path(out) / h
    man_path = directory / "manifest.json"
    manifest = {"config": cfg, "config_hash": h, "version": __version__, "seed": cfg["run"]["seed"],
                "strict_th29": strict, "checks": {}}
    if man_path.exists():
        old = json.loads(man_path.read_text())
        if old.get("config") != _jsonable(cfg):
            raise FileExistsError(f"hash collision: {directory} holds a different config")
        manifest["checks"] = old.get("checks", {})
    sc = Scenario(cfg)
    ctx = RunContext(directory, h, n_jobs)
    for name in names:
        res = CHECK_FUNCS[name](sc, ctx)
        manifest["checks"][name] = {
            "status": res.status,
            "metrics": _scalar_metrics(_jsonable(res.metrics)),
            "artifacts": [{"path": Path(a).name, "sha256": sha256_file(a)} for a in res.artifacts],
            "message": res.message,
        }
    directory.mkdir(parents=True, exist_ok=True)
    man_path.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return manifest
