"""Command line entry point: ``thermbath <subcommand>``."""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _emit(payload: dict, out: str | None):
    text = json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_ensemble(args) -> int:
    from .experiment import PRESETS, ConfigError, EnsembleAbort, ExperimentConfig, emit_outputs, \
        prepare_output_dir, run_ensemble, with_overrides

    try:
        cfg = ExperimentConfig.load(args.config) if args.config else PRESETS[args.preset]
        cfg = with_overrides(cfg, seed=args.seed, workers=args.workers, out=args.out, L=args.L,
                             realizations=args.realizations,
                             deltas=tuple(_floats(args.deltas)) if args.deltas is not None else None)
        prepare_output_dir(cfg.out)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_ensemble(cfg)
    except EnsembleAbort as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        for f in exc.log[:20]:
            print(f"  {f}", file=sys.stderr)
        return EXIT_RUNTIME
    paths = emit_outputs(result)
    for name in sorted(paths):
        print(paths[name])
    return EXIT_OK


def cmd_convex_split(args) -> int:
    from .collision import verify_convex_split
    from .linalg import random_density
    from .rng import SplitMix64, derive_seed

    worst, fails = -math.inf, 0
    for k in range(args.pairs):
        rng = SplitMix64(derive_seed(args.seed, k))
        rho, sigma = random_density(args.d, rng), random_density(args.d, rng)
        for n in range(1, args.n_max + 1):
            m, b, ok = verify_convex_split(rho, sigma, n)
            worst = max(worst, m - b)
            fails += not ok
    _emit({"d": args.d, "pairs": args.pairs, "n_max": args.n_max, "violations": fails,
           "max_measured_minus_bound": worst}, args.out)
    return EXIT_OK if fails == 0 else EXIT_RUNTIME


def cmd_n_epsilon(args) -> int:
    from .collision import NotFoundError, find_n_epsilon
    from .thermal import gibbs_state

    E = np.array(_floats(args.energies))
    H = np.diag(E)
    tau = gibbs_state(H, args.beta) if args.beta is not None else np.eye(E.size) / E.size
    omega = np.diag(_floats(args.omega))
    try:
        r = find_n_epsilon(omega, tau, H, args.eps, args.n_max)
    except NotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_RUNTIME
    _emit({"n_epsilon": r.n, "epsilon": r.epsilon, "distances": list(r.distances),
           "upper_bound": r.upper_bound, "lower_bound": r.lower_bound, "flag": r.flag,
           "method": r.method}, args.out)
    return EXIT_OK


def cmd_esc(args) -> int:
    from .optimality import check_esc

    energies = args.energies.split(",")
    if args.exact:
        vals = [tuple(int(t) for t in e.split("/")) if "/" in e else e.strip() for e in energies]
        from fractions import Fraction
        vals = [v if isinstance(v, tuple) else Fraction(v) for v in vals]
    else:
        vals = [float(e) for e in energies]
    rep = check_esc(vals, args.n_max, exact=args.exact)
    _emit({"verdicts": {str(k): v for k, v in rep.verdicts.items()},
           "collisions": {str(k): [list(map(list, c)) for c in v] for k, v in rep.collisions.items()},
           "complete": rep.complete, "passes": rep.passes()}, args.out)
    return EXIT_OK


def cmd_counterexample(args) -> int:
    from .optimality import degenerate_gap_example, beta_half

    E = _floats(args.energies)
    betas = [args.beta] if args.beta is not None else list(np.linspace(0.0, beta_half(E), args.grid))
    rows = []
    for b in betas:
        r = degenerate_gap_example(E, float(b), allow_violation=True)
        rows.append({"beta": r.beta, "p1": float(r.populations[0]), "change": r.d_star - r.d_swap,
                     "predicted": r.predicted_change, "residual": r.residual,
                     "weights_preserved": r.weights_preserved, "strict": r.strict, "note": r.note})
    _emit({"energies": E, "rows": rows}, args.out)
    return EXIT_OK


def cmd_dynamics_check(args) -> int:
    from .collision import all_pairs_swap_process, evolve_rk4, evolve_series, evolve_trajectories
    from .linalg import random_density, trace_distance
    from .rng import SplitMix64, derive_seed

    rows = []
    for k in range(args.processes):
        rng = SplitMix64(derive_seed(args.seed, k))
        n = 2 + k % 2
        proc = all_pairs_swap_process(np.diag([0.0, rng.uniform(0.5, 1.5)]), n, rng.uniform(0.5, 2.0))
        rho0 = random_density(2**n, rng)
        a = evolve_series(proc, rho0, args.t)
        b = evolve_rk4(proc, rho0, args.t)
        c = evolve_trajectories(proc, rho0, args.t, args.n_traj, derive_seed(args.seed, k, 1),
                                workers=args.workers or 1)
        rows.append({"n": n, "series_vs_rk4": trace_distance(a, b), "series_vs_mc": trace_distance(a, c)})
    _emit({"t": args.t, "n_traj": args.n_traj, "rows": rows}, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thermbath", description="Collision-model thermalization toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_default=0):
        sp.add_argument("--seed", type=int, default=seed_default)
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("--out", default=None, help="output path (directory for ensemble)")

    e = sub.add_parser("ensemble", help="disorder-ensemble D_max curves and slopes")
    common(e, seed_default=None)
    e.add_argument("--config", default=None, help="flat key = value config file")
    e.add_argument("--preset", choices=("desk", "full"), default="desk")
    e.add_argument("--L", type=int, default=None)
    e.add_argument("--realizations", type=int, default=None)
    e.add_argument("--deltas", default=None, help="comma-separated disorder strengths")
    e.set_defaults(func=cmd_ensemble)

    c = sub.add_parser("convex-split", help="check the convex split bound on random pairs")
    common(c)
    c.add_argument("--d", type=int, default=2)
    c.add_argument("--pairs", type=int, default=100)
    c.add_argument("--n-max", type=int, default=8)
    c.set_defaults(func=cmd_convex_split)

    n = sub.add_parser("n-epsilon", help="smallest bath size for a diagonal state")
    common(n)
    n.add_argument("--energies", default="0,1")
    n.add_argument("--beta", type=float, default=None, help="thermal target; omitted means maximally mixed")
    n.add_argument("--omega", default="1,0", help="populations of the initial state")
    n.add_argument("--eps", type=float, default=0.1)
    n.add_argument("--n-max", type=int, default=10000)
    n.set_defaults(func=cmd_n_epsilon)

    s = sub.add_parser("esc", help="energy subspace condition")
    common(s)
    s.add_argument("--energies", required=True, help="comma-separated; with --exact, a/b rationals")
    s.add_argument("--n-max", type=int, default=4)
    s.add_argument("--exact", action="store_true")
    s.set_defaults(func=cmd_esc)

    x = sub.add_parser("counterexample", help="degenerate-gap four-level example")
    common(x)
    x.add_argument("--energies", default="0,0.3,0.9,1.2")
    x.add_argument("--beta", type=float, default=None)
    x.add_argument("--grid", type=int, default=20)
    x.set_defaults(func=cmd_counterexample)

    dchk = sub.add_parser("dynamics-check", help="series vs RK4 vs trajectories")
    common(dchk)
    dchk.add_argument("--processes", type=int, default=4)
    dchk.add_argument("--t", type=float, default=1.5)
    dchk.add_argument("--n-traj", type=int, default=20000)
    dchk.set_defaults(func=cmd_dynamics_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
