"""Experiment configs and end-to-end pipelines.

A config is a YAML or JSON mapping; every output file carries the config
hash, the code version, the grid key and the master seed, and is a pure
function of (config, seed).
"""
import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .grid import GridSpec

EXPERIMENTS = (
    "mollifier", "env", "solve", "norms", "norm-equivalence", "solver-oracles",
    "verify-barrier", "verify-interior", "verify-shrink", "verify-ugrad",
    "brwre", "duality", "log-laplace", "compact-support", "renormalization",
)


class UsageError(ValueError):
    pass


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    side_length: float = 8.0
    points: int = 256
    alpha: float = 0.25
    eps: float = 0.1
    kappa: float = 2.0
    T: float = 0.5
    dt: float = 1e-3
    delta_j_max: int = None
    n_values: list = field(default_factory=list)
    l_values: list = field(default_factory=list)
    m_values: list = field(default_factory=list)
    trials: int = 0
    samples: int = 8
    seed: int = 0
    out: str = "runs"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise UsageError(f"unknown experiment {self.experiment!r}; available: {', '.join(EXPERIMENTS)}")

    @property
    def grid(self):
        return GridSpec(float(self.side_length), int(self.points))

    def canonical(self):
        d = asdict(self)
        d.pop("out")
        return json.dumps(d, sort_keys=True, default=float)

    @property
    def config_hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:12]

    def with_overrides(self, **kw):
        d = asdict(self)
        d.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig(**d)


def load_config(path):
    text = Path(path).read_text()
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    if not isinstance(data, dict):
        raise UsageError("config must be a mapping")
    known = {f.name for f in fields(ExperimentConfig)}
    extra = {k: data.pop(k) for k in list(data) if k not in known}
    if "experiment" not in data:
        raise UsageError("config needs an 'experiment' key")
    data.setdefault("params", {}).update(extra)
    return ExperimentConfig(**data)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (list, tuple)):
        return json.dumps([_plain(x) for x in v])
    return "" if v is None else str(v)


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return float(v)
    return v


def write_csv(path, rows, cfg):
    """Rows plus the provenance columns; column order is fixed by first appearance."""
    meta = {"config_hash": cfg.config_hash, "code_version": __version__,
            "grid": cfg.grid.key(), "seed": cfg.seed}
    cols = list(meta)
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            full = {**meta, **r}
            w.writerow([_fmt(full.get(c)) for c in cols])
    return cols


@dataclass
class ExperimentResult:
    tables: dict
    summary: dict
    passed: bool = None


def run_experiment(cfg, out_dir=None):
    """Run the named pipeline and write its tables; returns (directory, result)."""
    if cfg.experiment not in PIPELINES:
        raise UsageError(f"unknown experiment {cfg.experiment!r}; available: {', '.join(EXPERIMENTS)}")
    out = Path(out_dir or os.environ.get("ROUGHSBM_OUT") or cfg.out) / f"{cfg.experiment}-{cfg.config_hash}"
    out.mkdir(parents=True, exist_ok=True)
    marker = out / "INCOMPLETE"
    marker.write_text("running\n")
    try:
        result = PIPELINES[cfg.experiment](cfg)
    except Exception as exc:
        marker.write_text(f"failed: {type(exc).__name__}: {exc}\n")
        raise ExperimentError(f"experiment {cfg.experiment} ({cfg.config_hash}) failed: {exc}") from exc
    manifest = {}
    for name, rows in result.tables.items():
        manifest[f"{name}.csv"] = write_csv(out / f"{name}.csv", rows, cfg)
    summary = {"experiment": cfg.experiment, "config_hash": cfg.config_hash,
               "code_version": __version__, "grid": cfg.grid.key(), "seed": cfg.seed,
               "passed": result.passed, "summary": _plain(result.summary)}
    (out / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (out / "config.json").write_text(json.dumps(json.loads(cfg.canonical()), indent=2, sort_keys=True) + "\n")
    marker.unlink()
    return out, result


# ---------------------------------------------------------------- pipelines

def _kit(cfg, grid=None):
    from .mollifier import build_kit
    return build_kit(grid or cfg.grid, cfg.delta_j_max)


def _env(cfg, kit, seed=None, alpha=None):
    from .environment import build_environment
    return build_environment(kit.grid, cfg.seed if seed is None else seed, alpha or cfg.alpha, kit,
                             n_samples=cfg.samples)


def mollifier_pipeline(cfg):
    import time
    t0 = time.perf_counter()
    kit = _kit(cfg)
    cert = kit.certificates()
    elapsed = time.perf_counter() - t0
    rows = cert["scales"]
    mass_ok = abs(cert["phi_mass"] - 1) < 1e-8 and all(abs(r["mass"] - 1) < 1e-8 for r in rows)
    pos_ok = cert["phi_fourier_min"] > 0 and all(r["fourier_min"] > 0 for r in rows)
    self_ok = all(r["self_similarity"] < 1e-6 for r in rows)
    summary = {"phi_mass": cert["phi_mass"], "phi_fourier_min": cert["phi_fourier_min"],
               "seconds": elapsed, "mass_ok": mass_ok, "positivity_ok": pos_ok,
               "self_similarity_ok": self_ok}
    return ExperimentResult({"certificates": rows}, summary, bool(mass_ok and pos_ok and self_ok))


def env_pipeline(cfg):
    kit = _kit(cfg)
    env = _env(cfg, kit)
    n = cfg.params.get("box", cfg.grid.half_width - 1)
    norms = env.noise_norms(n, cfg.eps)
    rows = [{"symbol": k, "box": n, "eps": cfg.eps, "value": v} for k, v in norms.items()]
    out = Path(cfg.params["archive"]) if "archive" in cfg.params else None
    if out is not None:
        env.save(out)
    summary = {"C_alpha": env.C_alpha, "C_alpha_se": env.C_alpha_se, "J_xi_chi": env.J_xi_chi,
               "alpha": env.alpha, "potential_sup": float(np.abs(env.potential()).max())}
    return ExperimentResult({"noise_norms": rows}, summary)


def _gaussian(grid, amp, width, center=(0.0, 0.0)):
    x, y = grid.mesh()
    return amp * np.exp(-((x - center[0]) ** 2 + (y - center[1]) ** 2) / (2 * width**2))


def solve_pipeline(cfg):
    from .pam import SemilinearProblem, solve_imex
    kit = _kit(cfg)
    env = _env(cfg, kit)
    grid = cfg.grid
    p = cfg.params
    phi0 = _gaussian(grid, p.get("phi0_amp", 1.0), p.get("phi0_width", 0.5))
    forcing = _gaussian(grid, p.get("forcing_amp", 0.0), p.get("forcing_width", 0.5),
                        tuple(p.get("forcing_center", (1.0, 0.0))))
    prob = SemilinearProblem(grid, cfg.kappa, phi0, forcing, T=cfg.T, env=env)
    u = solve_imex(prob, cfg.dt, scheme=p.get("scheme", "lie"), n_saves=p.get("n_saves", 11),
                   laplacian=p.get("laplacian", "spectral"))
    return ExperimentResult({"trajectory": u.summary_rows()}, dict(u.scheme_meta))


def norms_pipeline(cfg):
    from .norms import Weight, neg_holder_seminorm
    kit = _kit(cfg)
    env = _env(cfg, kit)
    p = cfg.params
    box = p.get("box", 2)
    weight = Weight.parse(p["weight"]) if p.get("weight") else None
    rows = []
    for a in p.get("alphas", [-1.1]):
        rep = neg_holder_seminorm(env.xi_alpha, a, box, kit, weight, symbol="xi")
        rows.append(rep.row())
    return ExperimentResult({"norms": rows}, {"box": box})


def norm_equivalence_pipeline(cfg):
    from .norms import besov_norm, holder_norm, neg_holder_seminorm
    from .environment import sample_white_noise
    kit = _kit(cfg)
    grid = cfg.grid
    p = cfg.params
    n_samples = cfg.trials or 50
    box = p.get("box", grid.half_width - 1.5)
    mol = p.get("mollify", 2 * kit.delta_grid[-1])
    alphas = cfg.params.get("alphas", [-1.1, -0.2, 0.5])
    rows, summary = [], {}
    for a in alphas:
        ratios = []
        for s in range(n_samples):
            f = kit.mollify(sample_white_noise(grid, cfg.seed + s), kit.delta_grid[-1] if a < 0 else mol)
            b = besov_norm(f, a, grid)
            if a < 0:
                loc = neg_holder_seminorm(f, a, box, kit).value
            else:
                loc = holder_norm(f, a, None, grid, r=1.0)
            ratios.append(b / loc)
            rows.append({"alpha": a, "sample": s, "besov": b, "local": loc, "ratio": b / loc})
        lo, hi = min(ratios), max(ratios)
        summary[str(a)] = {"min": lo, "max": hi, "K": max(hi, 1 / lo)}
    return ExperimentResult({"ratios": rows}, summary, True)


def solver_oracles_pipeline(cfg):
    from .pam import SemilinearProblem, solve_imex, solve_picard
    from .grid import GridSpec
    p = cfg.params
    c, k, T = p.get("c", 1.0), cfg.kappa, p.get("riccati_T", 0.25)
    small = GridSpec(1.0, 16)
    prob = SemilinearProblem(small, k, np.full(small.shape, c), T=T)
    dt_r = p.get("riccati_dt", 2.5e-6)
    u = solve_imex(prob, dt_r, n_saves=2)
    exact = c / (1 + c * k * T / 2)
    ric = float(np.abs(u.final - exact).max() / exact)
    grid = cfg.grid
    kit = _kit(cfg)
    env = _env(cfg, kit)
    phi0 = _gaussian(grid, 3.0, 0.7)
    forcing = _gaussian(grid, 1.0, 0.7, (1.0, 0.0))
    prob = SemilinearProblem(grid, k, phi0, forcing, T=cfg.T, env=env)
    a = solve_imex(prob, cfg.dt)
    b = solve_picard(prob, p.get("iterations", 60), cfg.dt)
    diff = float(np.abs(a.final - b.final).max() / np.abs(a.values).max())
    res = b.scheme_meta["residuals"]
    rows = [{"check": "riccati", "value": ric, "tolerance": 1e-6},
            {"check": "imex_vs_picard", "value": diff, "tolerance": 1e-4}]
    rows += [{"check": "picard_residual", "iteration": i + 1, "value": r} for i, r in enumerate(res)]
    summary = {"riccati_rel_error": ric, "imex_picard_rel_diff": diff, "picard_iterations": len(res),
               "picard_within_initial_bound": b.scheme_meta["within_initial_bound"]}
    return ExperimentResult({"oracles": rows}, summary, bool(ric < 1e-6 and diff < 1e-4))


def barrier_pipeline(cfg):
    from .estimates import barrier_battery
    p = cfg.params
    rows = barrier_battery(cfg.grid, p.get("box", 4), cfg.trials or 20, cfg.seed, cfg.T, cfg.dt,
                           p.get("outside", 1e3), p.get("laplacian", "lattice"))
    v = sum(r["violations"] for r in rows)
    return ExperimentResult({"barrier": rows}, {"violations": v,
                                                "worst_ratio": max(r["worst_ratio"] for r in rows)}, v == 0)


def _interior_env(cfg, kit, noise):
    from .environment import zero_environment
    return _env(cfg, kit) if noise else zero_environment(kit.grid, kit)


def interior_pipeline(cfg):
    from .estimates import interior_bound_check
    kit = _kit(cfg)
    p = cfg.params
    n = p.get("box", 8)
    ls = cfg.l_values or [1, 2, 4]
    ms = cfg.m_values or [1e2, 1e3, 1e4]
    lap = p.get("laplacian", "lattice")
    clean = interior_bound_check(_interior_env(cfg, kit, False), cfg.kappa, n, ls, ms, cfg.T, cfg.dt,
                                 cfg.eps, laplacian=lap)
    noisy = interior_bound_check(_interior_env(cfg, kit, True), cfg.kappa, n, ls, ms,
                                 p.get("noise_T", cfg.T), cfg.dt, cfg.eps, laplacian=lap)
    rows = [dict(r, noise=False) for r in clean.rows] + [dict(r, noise=True) for r in noisy.rows]
    k_pin = p.get("K_pin", 28.0)
    summary = {"slope_noise_free": clean.slope, "K_noise_free": clean.K, "K_noise": noisy.K,
               "m_change_noise": noisy.m_change, "m_change_noise_free": clean.m_change,
               "noise_terms": noisy.noise_terms, "nested": clean.nested and noisy.nested}
    passed = (clean.slope is not None and clean.slope <= -1.8 and noisy.K <= k_pin
              and clean.K <= k_pin and noisy.m_change < 0.05 and clean.nested and noisy.nested)
    return ExperimentResult({"interior": rows}, summary, bool(passed))


def shrink_pipeline(cfg):
    from .estimates import interior_solve, shrink_iteration
    from .environment import zero_environment
    kit = _kit(cfg)
    n = cfg.params.get("box", 8)
    m = (cfg.m_values or [1e4])[-1]
    u = interior_solve(zero_environment(kit.grid, kit), cfg.kappa, n, m, cfg.T, cfg.dt,
                       laplacian=cfg.params.get("laplacian", "lattice"))
    tr = shrink_iteration(u, n)
    rows = [{"step": i, "R": R, "sup": M, "scaled": M * R * R} for i, (R, M) in enumerate(tr["trace"])]
    return ExperimentResult({"trace": rows}, {k: tr[k] for k in ("C0", "stop", "scaled_max", "halving")},
                            tr["halving"])


def ugrad_pipeline(cfg):
    from .estimates import heat_battery, heat_gradient_check
    grid = cfg.grid
    bat = heat_battery(grid, tuple(cfg.params.get("L_values", (0.5, 1.0, 2.0))), cfg.trials or 8, cfg.seed)
    rep = heat_gradient_check(bat, grid)
    return ExperimentResult({"gradient": rep["rows"]},
                            {k: rep[k] for k in ("K_by_L", "K", "scale_spread", "stable", "tracks_inverse_L")},
                            rep["stable"] and rep["tracks_inverse_L"])


def _phi0(grid, spec):
    amp, width, cx, cy = spec
    return _gaussian(grid, amp, width, (cx, cy))


def brwre_pipeline(cfg):
    from .brwre import branching_rates, point_mass, simulate
    kit = _kit(cfg)
    env = _env(cfg, kit)
    p = cfg.params
    n = (cfg.n_values or [32])[0]
    rates = branching_rates(env, n, cfg.kappa if p.get("use_kappa") else 0.0, p.get("K", 1))
    init = point_mass(rates.lattice, (0.0, 0.0), p.get("K", 1))
    phi0 = rates.lattice.restrict(_phi0(cfg.grid, p.get("phi0", (2.0, 0.3, 0.3, 0.0))))
    sim = simulate(rates, init, cfg.T, seed=cfg.seed, trials=cfg.trials or 100, phi0=phi0)
    mean, se = sim.laplace_estimate()
    return ExperimentResult({"runs": sim.rows()}, {"laplace_mean": mean, "laplace_se": se,
                                                   "truncated": int(sim.truncated.sum())})


def duality_pipeline(cfg):
    from .brwre import laplace_duality_experiment
    kit = _kit(cfg)
    env = _env(cfg, kit)
    p = cfg.params
    n = (cfg.n_values or [32])[0]
    specs = p.get("phi0_list", [(2.0, 0.3, 0.0, 0.0), (4.0, 0.5, 0.5, 0.0), (1.0, 1.0, -0.5, 0.5)])
    rows = []
    for i, spec in enumerate(specs):
        rep = laplace_duality_experiment(env, n, _phi0(cfg.grid, spec), cfg.T, cfg.trials or 2000,
                                         kappa=p.get("branch_kappa", 0.0), K=p.get("K", 1),
                                         seed=cfg.seed + 1000 * (i + 1))
        rows.append(dict(rep, phi0=list(spec)))
    ok = all(r["mc_dual_z"] <= 3 for r in rows)
    return ExperimentResult({"duality": rows}, {"max_z": max(r["mc_dual_z"] for r in rows)}, ok)


def log_laplace_pipeline(cfg):
    from .brwre import log_laplace_consistency
    kit = _kit(cfg)
    env = _env(cfg, kit)
    p = cfg.params
    rep = log_laplace_consistency(env, cfg.n_values or [32, 64], _phi0(cfg.grid, p.get("phi0", (3.0, 0.3, 0.3, 0.0))),
                                  cfg.T, cfg.kappa, p.get("mass_per_site", 0.25),
                                  continuum_dt=p.get("continuum_dt", cfg.dt), dual_dt=p.get("dual_dt"))
    return ExperimentResult({"log_laplace": rep["rows"]}, {"continuum": rep["continuum"],
                                                           "monotone": rep["monotone"]}, rep["monotone"])


def compact_support_pipeline(cfg):
    from .brwre import compact_support_experiment
    kit = _kit(cfg)
    env = _env(cfg, kit)
    p = cfg.params
    rep = compact_support_experiment(env, p.get("lattice_n", 16), cfg.n_values or [2, 3, 4],
                                     cfg.m_values or [1e2, 1e3, 1e4], cfg.T, cfg.trials or 2000,
                                     cfg.kappa, p.get("K", 16), seed=cfg.seed, dt=cfg.dt,
                                     laplacian=p.get("laplacian", "lattice"))
    check = compact_support_verdict(rep, p.get("moderate_box"))
    return ExperimentResult({"compact_support": rep["rows"]}, check, check["passed"])


def compact_support_verdict(rep, moderate_box=None, m_tol=0.02, allowance=0.05):
    """Stabilization in m, growth in the box size, and MC against the stabilized PDE value."""
    pde = rep["pde"]
    boxes = sorted({b for b, _ in pde})
    ms = sorted({m for _, m in pde})
    change = {b: abs(pde[(b, ms[-1])] - pde[(b, ms[-2])]) / pde[(b, ms[-1])] for b in boxes}
    stab = [pde[(b, ms[-1])] for b in boxes]
    increasing = all(y > x for x, y in zip(stab, stab[1:])) and stab[-1] <= 1
    box = moderate_box if moderate_box is not None else boxes[len(boxes) // 2]
    p, se = rep["mc"][box]
    gap = abs(p - pde[(box, ms[-1])])
    agree = gap <= 3 * se + allowance
    return {"m_change": change, "stabilized": stab, "increasing": increasing, "moderate_box": box,
            "mc": p, "mc_se": se, "gap": gap, "agree": agree,
            "passed": bool(all(c < m_tol for c in change.values()) and increasing and agree)}


def renormalization_pipeline(cfg):
    from .pam import renormalization_necessity
    kit = _kit(cfg)
    p = cfg.params
    rep = renormalization_necessity(kit, cfg.seed, p.get("alphas", [cfg.alpha, cfg.alpha / 2, cfg.alpha / 4]),
                                    cfg.kappa, cfg.T, cfg.dt, cfg.samples, p.get("box", 2.0))
    return ExperimentResult({"renormalization": rep["rows"]}, {k: v for k, v in rep.items() if k != "rows"},
                            rep["passed"])


PIPELINES = {
    "mollifier": mollifier_pipeline, "env": env_pipeline, "solve": solve_pipeline,
    "norms": norms_pipeline, "norm-equivalence": norm_equivalence_pipeline,
    "solver-oracles": solver_oracles_pipeline, "verify-barrier": barrier_pipeline,
    "verify-interior": interior_pipeline, "verify-shrink": shrink_pipeline,
    "verify-ugrad": ugrad_pipeline, "brwre": brwre_pipeline, "duality": duality_pipeline,
    "log-laplace": log_laplace_pipeline, "compact-support": compact_support_pipeline,
    "renormalization": renormalization_pipeline,
}
