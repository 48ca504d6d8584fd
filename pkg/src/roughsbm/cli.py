"""Command line entry point: ``python -m roughsbm <command> ...``.

Exit status: 0 on success or a passed verification, 2 when a verification
fails, 1 on any error (including usage errors).
"""
import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .experiments import (EXPERIMENTS, ExperimentConfig, ExperimentError, UsageError, load_config,
                          run_experiment, write_csv)

VERIFY_IDS = {"barrier": "verify-barrier", "interior": "verify-interior",
              "shrink": "verify-shrink", "ugrad": "verify-ugrad"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _number(text):
    """Accepts ``0.25`` or ``1/4``."""
    return float(Fraction(text)) if "/" in text else float(text)


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--out", default=None, help="output path or directory")
    p.add_argument("--config", default=None, help="YAML or JSON config file")
    p.add_argument("--delta-grid", type=int, default=None, dest="delta_j_max",
                   help="deepest scale index j_max of the delta grid 2^-j")


def build_parser():
    ap = _Parser(prog="roughsbm", description="Rough super-Brownian motion numerical laboratory")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    env = sub.add_parser("env", help="generate an environment")
    env.add_argument("action", choices=["gen"])
    env.add_argument("--n", type=int, default=256, help="grid points per side")
    env.add_argument("--side", type=float, default=8.0, help="torus side length")
    env.add_argument("--alpha", type=_number, default=0.25)
    env.add_argument("--samples", type=int, default=8, help="environments used for C_alpha")
    env.add_argument("--box", type=float, default=None, help="box P_n for the noise norms")
    _common(env)

    solve = sub.add_parser("solve", help="solve the renormalized equation")
    solve.add_argument("--env", required=True, help="environment archive (.npz)")
    solve.add_argument("--kappa", type=float, default=2.0)
    solve.add_argument("--phi0", default=None, help="initial data (.npy); default a unit Gaussian")
    solve.add_argument("--forcing", default=None, help="forcing (.npy)")
    solve.add_argument("--T", type=float, default=1.0)
    solve.add_argument("--dt", type=float, default=1e-3)
    solve.add_argument("--scheme", choices=["lie", "strang"], default="lie")
    solve.add_argument("--saves", type=int, default=11)
    _common(solve)

    norm = sub.add_parser("norm", help="evaluate local norms")
    norm.add_argument("action", choices=["eval", "batch"])
    norm.add_argument("--env", required=True)
    norm.add_argument("--symbol", default="xi", choices=["xi", "potential", "I_xi", "IxiXi", "xiX"])
    norm.add_argument("--alpha", type=float, default=-1.1)
    norm.add_argument("--region", default="P2", help="P<n> or 'all'")
    norm.add_argument("--weight", default=None, help="p:a or e:l[:sigma]")
    _common(norm)

    ver = sub.add_parser("verify", help="a-priori estimate checks")
    ver.add_argument("check", choices=sorted(VERIFY_IDS))
    ver.add_argument("--sweep", default=None, help="sweep config (YAML or JSON)")
    _common(ver)

    br = sub.add_parser("brwre", help="branching random walk runs")
    br.add_argument("action", choices=["run"])
    br.add_argument("--env", required=True)
    br.add_argument("--n", type=int, default=32, help="lattice scale")
    br.add_argument("--trials", type=int, default=2000)
    br.add_argument("--T", type=float, default=1.0)
    br.add_argument("--phi0", default=None, help="test function on the environment grid (.npy)")
    br.add_argument("--kappa", type=float, default=0.0)
    br.add_argument("--K", type=float, default=1.0, help="particles per unit mass")
    _common(br)

    for name in ("duality", "compact-support"):
        p = sub.add_parser(name, help=f"{name} experiment")
        _common(p)

    run = sub.add_parser("run", help="run any experiment from a config")
    run.add_argument("experiment", nargs="?", default=None, help="|".join(EXPERIMENTS))
    _common(run)
    return ap


def _cfg_for(args, experiment, **defaults):
    if args.config:
        cfg = load_config(args.config)
        if experiment and cfg.experiment != experiment:
            cfg = cfg.with_overrides(experiment=experiment)
    else:
        if experiment is None:
            raise UsageError(f"need an experiment id or --config; available: {', '.join(EXPERIMENTS)}")
        cfg = ExperimentConfig(experiment=experiment, **defaults)
    return cfg.with_overrides(seed=args.seed, delta_j_max=args.delta_j_max)


def _report(out, result):
    print(json.dumps({"out": str(out), "passed": result.passed}, sort_keys=True))
    return 2 if result.passed is False else 0


def _load_env(path, args):
    from .environment import load_environment
    from .mollifier import build_kit
    with np.load(path) as z:
        from .grid import GridSpec
        grid = GridSpec(float(z["side_length"]), int(z["points"]))
        j = args.delta_j_max if args.delta_j_max is not None else int(round(-np.log2(min(z["delta_grid"]))))
    return load_environment(path, build_kit(grid, j))


def cmd_env(args):
    from .environment import build_environment
    from .grid import GridSpec
    from .mollifier import build_kit
    grid = GridSpec(args.side, args.n)
    kit = build_kit(grid, args.delta_j_max)
    seed = 0 if args.seed is None else args.seed
    env = build_environment(grid, seed, args.alpha, kit, n_samples=args.samples)
    out = Path(args.out or f"env_{grid.key()}_s{seed}_a{args.alpha:g}.npz")
    env.save(out)
    box = args.box if args.box is not None else grid.half_width - 1
    norms = env.noise_norms(box, 0.1)
    print(json.dumps({"archive": str(out), "C_alpha": env.C_alpha, "C_alpha_se": env.C_alpha_se,
                      "J_xi_chi": env.J_xi_chi, "box": box, "noise_norms": norms}, sort_keys=True))
    return 0


def cmd_solve(args):
    from .pam import SemilinearProblem, solve_imex
    env = _load_env(args.env, args)
    grid = env.grid
    if args.phi0:
        phi0 = np.load(args.phi0)
    else:
        x, y = grid.mesh()
        phi0 = np.exp(-(x**2 + y**2) / 2)
    forcing = np.load(args.forcing) if args.forcing else None
    prob = SemilinearProblem(grid, args.kappa, phi0, forcing, T=args.T, env=env)
    u = solve_imex(prob, args.dt, scheme=args.scheme, n_saves=args.saves)
    out = Path(args.out or "traj.npz")
    u.save(out)
    cfg = ExperimentConfig("solve", grid.side_length, grid.n, env.alpha, kappa=args.kappa, T=args.T,
                           dt=args.dt, seed=env.seed)
    write_csv(out.with_suffix(".csv"), u.summary_rows(), cfg)
    print(json.dumps({"trajectory": str(out), "slices": str(out.with_suffix(".csv")),
                      "meta": {k: v for k, v in u.scheme_meta.items()}}, sort_keys=True, default=float))
    return 0


def _region(text):
    if text == "all":
        return None
    return float(text[1:]) if text.upper().startswith("P") else float(text)


def cmd_norm(args):
    from .environment import scale_sup
    from .norms import Weight, neg_holder_seminorm
    env = _load_env(args.env, args)
    weight = Weight.parse(args.weight) if args.weight else None
    region = _region(args.region)
    symbols = [args.symbol] if args.action == "eval" else ["xi", "IxiXi", "xiX"]
    rows = []
    for sym in symbols:
        if sym in ("xi", "potential", "I_xi"):
            f = {"xi": env.xi_alpha, "potential": env.potential(), "I_xi": env.I_xi}[sym]
            rows.append(neg_holder_seminorm(f, args.alpha if args.alpha < 0 else -args.alpha, region,
                                            env.kit, weight, symbol=sym).row())
        else:
            enh = env.enhancements()
            grid = env.grid
            mask = np.ones(grid.shape, bool) if region is None else grid.box_mask(region)
            theta = None if weight is None else weight(grid)
            fields = {d: (enh.IxiXi_average(d) if sym == "IxiXi" else enh.xiX_average(d))
                      for d in env.kit.delta_grid}
            v, d, idx = scale_sup(fields, -args.alpha, mask, theta)
            rows.append({"symbol": sym, "alpha": args.alpha, "region": args.region,
                         "weight": args.weight or "none", "value": v, "argmax_scale": d,
                         "argmax_point": [float(grid.coords[idx[0]]), float(grid.coords[idx[1]])]})
    if args.action == "eval":
        print(json.dumps(rows[0], sort_keys=True))
    else:
        cfg = ExperimentConfig("norms", env.grid.side_length, env.grid.n, env.alpha, seed=env.seed)
        out = Path(args.out or "norms.csv")
        write_csv(out, rows, cfg)
        print(json.dumps({"out": str(out)}))
    return 0


def cmd_verify(args):
    exp = VERIFY_IDS[args.check]
    if args.sweep:
        cfg = load_config(args.sweep).with_overrides(experiment=exp, seed=args.seed,
                                                     delta_j_max=args.delta_j_max)
    else:
        cfg = _cfg_for(args, exp, **DEFAULTS[exp])
    out, result = run_experiment(cfg, args.out)
    return _report(out, result)


def cmd_brwre(args):
    from .brwre import branching_rates, point_mass, simulate
    env = _load_env(args.env, args)
    rates = branching_rates(env, args.n, args.kappa, args.K)
    init = point_mass(rates.lattice, (0.0, 0.0), int(args.K))
    phi0 = rates.lattice.restrict(np.load(args.phi0)) if args.phi0 else None
    seed = env.seed if args.seed is None else args.seed
    sim = simulate(rates, init, args.T, seed=seed, trials=args.trials, phi0=phi0)
    cfg = ExperimentConfig("brwre", env.grid.side_length, env.grid.n, env.alpha, T=args.T,
                           trials=args.trials, seed=seed, n_values=[args.n])
    out = Path(args.out or "runs.csv")
    rows = [dict(r, seed=seed) for r in sim.rows()]
    write_csv(out, rows, cfg)
    print(json.dumps({"out": str(out), "truncated": int(sim.truncated.sum())}))
    return 0


# defaults used when a subcommand runs without --config
DEFAULTS = {
    "verify-barrier": dict(side_length=16.0, points=256, T=1.0, dt=2e-3, trials=20),
    "verify-interior": dict(side_length=24.0, points=256, alpha=0.5, kappa=1e4, T=4.0, dt=2e-3,
                            params={"noise_T": 4.0}),
    "verify-shrink": dict(side_length=24.0, points=256, alpha=0.5, kappa=1e4, T=4.0, dt=2e-3),
    "verify-ugrad": dict(side_length=16.0, points=256, trials=8),
    "duality": dict(side_length=8.0, points=256, T=0.5, trials=2000, n_values=[32]),
    "compact-support": dict(side_length=16.0, points=512, kappa=30.0, T=1.0, trials=2000,
                            n_values=[2, 3, 4], params={"lattice_n": 16, "K": 16}),
}


def cmd_experiment(args, experiment):
    cfg = _cfg_for(args, experiment, **DEFAULTS.get(experiment or "", {}))
    out, result = run_experiment(cfg, args.out)
    return _report(out, result)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "env":
            return cmd_env(args)
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "norm":
            return cmd_norm(args)
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "brwre":
            return cmd_brwre(args)
        if args.command in ("duality", "compact-support"):
            return cmd_experiment(args, args.command)
        return cmd_experiment(args, args.experiment)
    except UsageError as exc:
        print(f"roughsbm: usage error: {exc}", file=sys.stderr)
        return 1
    except (ExperimentError, ValueError, RuntimeError, OSError) as exc:
        print(f"roughsbm: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
