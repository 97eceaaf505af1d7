"""Command line front end.

Subcommands
-----------
boundary   crescent edges q_delta / q_nabla on a TPP grid for one shape
curve      instance-specific asymptotic trade-off curve for a prior
path       one simulated instance's full Lasso path, event by event
simulate   replicated paths averaged onto a TPP grid (tradeoff mode)
rank       first-false-selection rank statistics (rank mode)

Inline flags override --config values.  The fully resolved configuration is
echoed as a JSON comment in the output header, so a run can be reproduced
from its output file alone.  Exit codes: 0 success, 2 invalid input,
3 numerical infeasibility, 4 solver failure.
"""

import argparse
import json
import os
import sys

from . import __version__
from .crescent import crescent, touching_points
from .errors import ConvergenceError, InfeasibleRegionError
from .harness import (
    config_from_json,
    config_to_json,
    prior_from_json,
    run_rank_experiment,
    run_tradeoff_experiment,
    _simulate_instance,
)
from .lasso_path import lasso_path, tpp_fdp_along_path
from .state_evolution import DiscretePrior, ModelShape, tradeoff_curve

_OUTDIR_ENV = "LASSOCRESCENT_OUTDIR"


def _out_path(args, default_name):
    if args.out:
        return args.out
    outdir = os.environ.get(_OUTDIR_ENV, ".")
    os.makedirs(outdir, exist_ok=True)
    return os.path.join(outdir, default_name)


def _write_table(path, header_obj, columns, rows):
    lines = [f"# lassocrescent {__version__}"]
    lines.append("# config: " + json.dumps(header_obj, sort_keys=True))
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, int):
        return str(v)
    return format(float(v), ".12g")


def _write_gnuplot(out_csv, script_body):
    gp = out_csv + ".gp"
    with open(gp, "w") as fh:
        fh.write(
            "set datafile separator ','\n"
            "set datafile commentschars '#'\n"
            "set key left top\n" + script_body
        )
    return gp


def _load_config_arg(args):
    if not args.config:
        return None
    try:
        with open(args.config) as fh:
            return json.load(fh)
    except FileNotFoundError:
        # allow passing JSON inline
        return json.loads(args.config)


def _shape_from(args, obj, sigma_default=0.0):
    delta = args.delta if args.delta is not None else (obj or {}).get("delta")
    epsilon = args.epsilon if args.epsilon is not None else (obj or {}).get("epsilon")
    sigma = args.sigma if args.sigma is not None else (obj or {}).get("sigma", sigma_default)
    if delta is None or epsilon is None:
        raise ValueError("delta and epsilon are required (flags or --config)")
    return ModelShape(delta=float(delta), epsilon=float(epsilon), sigma=float(sigma))


def _cmd_boundary(args):
    obj = _load_config_arg(args)
    shape = _shape_from(args, obj)
    if shape.sigma != 0.0:
        raise ValueError("boundary curves are noiseless; omit sigma or pass 0")
    n_points = args.n_points or 99
    points = crescent(shape, n_points=n_points)
    header = {
        "command": "boundary",
        "delta": shape.delta,
        "epsilon": shape.epsilon,
        "n_points": n_points,
    }
    if len(points) < n_points:
        header["feasible_u"] = [points[0].u, points[-1].u]
        print(
            f"note: {n_points - len(points)} grid levels above the phase "
            f"transition were dropped; feasible TPP range "
            f"[{points[0].u:.4f}, {points[-1].u:.4f}]",
            file=sys.stderr,
        )
    gammas = None
    if args.touching:
        gammas = [float(g) for g in args.touching.split(",")]
        header["touching_gamma"] = gammas
    out = _out_path(args, "boundary.csv")
    rows = [
        (p.u, p.t_delta, p.q_delta, p.varsigma, p.t_nabla, p.q_nabla) for p in points
    ]
    _write_table(out, header, ["u", "t_delta", "q_delta", "varsigma", "t_nabla", "q_nabla"], rows)
    print(out)
    if gammas:
        tp = touching_points(gammas, shape)
        tp_out = out + ".touching.csv"
        _write_table(tp_out, header, ["u", "q_delta"], tp)
        print(tp_out)
    if args.gnuplot:
        print(
            _write_gnuplot(
                out,
                "set xlabel 'TPP'\nset ylabel 'FDP'\n"
                f"plot '{out}' using 1:3 with lines title 'q_delta', \\\n"
                f"     '{out}' using 1:6 with lines title 'q_nabla'\n",
            )
        )
    return 0


def _prior_from_args(args, obj):
    spec = None
    if args.prior:
        spec = json.loads(args.prior)
    elif obj and "prior" in obj:
        spec = obj["prior"]
    if spec is None:
        raise ValueError("curve needs a prior (--prior JSON or 'prior' in --config)")
    if "epsilon" not in spec and args.epsilon is not None:
        spec = {**spec, "epsilon": args.epsilon}
    return prior_from_json(spec)


def _cmd_curve(args):
    obj = _load_config_arg(args)
    shape = _shape_from(args, obj)
    prior = _prior_from_args(args, obj)
    n_points = args.n_points or 50
    curve = tradeoff_curve(prior, shape, n_points=n_points)
    header = {
        "command": "curve",
        "delta": shape.delta,
        "epsilon": shape.epsilon,
        "sigma": shape.sigma,
        "prior": {
            "values": [v for v, _ in prior.atoms],
            "probabilities": [p for _, p in prior.atoms],
        },
        "n_points": n_points,
    }
    out = _out_path(args, "curve.csv")
    rows = list(zip(curve.alpha, curve.lam, curve.tau, curve.tpp, curve.fdp))
    _write_table(out, header, ["alpha", "lambda", "tau", "tpp_inf", "fdp_inf"], rows)
    print(out)
    if args.gnuplot:
        print(
            _write_gnuplot(
                out,
                "set xlabel 'TPP'\nset ylabel 'FDP'\n"
                f"plot '{out}' using 4:5 with lines title 'trade-off'\n",
            )
        )
    return 0


def _config_from(args, mode):
    obj = _load_config_arg(args)
    if obj is None:
        raise ValueError(f"{mode} needs --config (JSON file or inline JSON)")
    obj = dict(obj)
    obj.setdefault("mode", mode)
    if args.seed is not None:
        obj["seed"] = args.seed
    if args.replicates is not None:
        obj["replicates"] = args.replicates
    if args.sigma is not None:
        obj["sigma"] = args.sigma
    return config_from_json(obj)


def _cmd_path(args):
    config = _config_from(args, "tradeoff")
    X, y, support = _simulate_instance(config, args.replicate)
    path = lasso_path(X, y)
    stats = tpp_fdp_along_path(path, support)
    header = {
        "command": "path",
        "replicate": args.replicate,
        "stopping_reason": path.stopping_reason,
        "config": config_to_json(config),
    }
    rows = [
        (i, ev.lam, ev.kind, ev.variable, len(ev.active_set), tpp, fdp)
        for i, (ev, (_, tpp, fdp)) in enumerate(zip(path.events, stats))
    ]
    out = _out_path(args, "path.csv")
    _write_table(
        out,
        header,
        ["event_index", "lambda", "kind", "variable", "n_active", "tpp", "fdp"],
        rows,
    )
    print(out)
    if args.gnuplot:
        print(
            _write_gnuplot(
                out,
                "set xlabel 'TPP'\nset ylabel 'FDP'\n"
                f"plot '{out}' using 6:7 with steps title 'path'\n",
            )
        )
    return 0


def _cmd_simulate(args):
    config = _config_from(args, "tradeoff")
    summary = run_tradeoff_experiment(config, jobs=args.jobs)
    header = {"command": "simulate", "config": config_to_json(config)}
    rows = [
        (g, m, s, summary.n_ok)
        for g, m, s in zip(summary.tpp_grid, summary.mean_fdp, summary.se_fdp)
    ]
    out = _out_path(args, "simulate.csv")
    _write_table(out, header, ["tpp_grid", "mean_fdp", "se_fdp", "n_ok"], rows)
    print(out)
    if args.gnuplot:
        print(
            _write_gnuplot(
                out,
                "set xlabel 'TPP'\nset ylabel 'FDP'\n"
                f"plot '{out}' using 1:2:3 with yerrorlines title 'mean FDP'\n",
            )
        )
    return 0


def _cmd_rank(args):
    config = _config_from(args, "rank")
    summary = run_rank_experiment(config, jobs=args.jobs)
    header = {"command": "rank", "config": config_to_json(config)}
    out = _out_path(args, "rank.csv")
    _write_table(
        out,
        header,
        ["sweep_value", "mean_T", "median_T", "q10", "q90", "n_censored"],
        summary.rows,
    )
    print(out)
    if args.gnuplot:
        print(
            _write_gnuplot(
                out,
                "set xlabel 'sweep value'\nset ylabel 'first false rank'\n"
                f"plot '{out}' using 1:3 with linespoints title 'median T', \\\n"
                f"     '{out}' using 1:4:5 with filledcurves fs transparent solid 0.2 title 'q10-q90'\n",
            )
        )
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lassocrescent",
        description="Asymptotic TPP/FDP trade-off curves, crescent boundaries, "
        "and Lasso-path Monte Carlo for Gaussian designs.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_shape=False):
        p.add_argument("--config", help="JSON config file (or inline JSON)")
        p.add_argument("--out", help=f"output CSV (default: ${_OUTDIR_ENV} or cwd)")
        p.add_argument("--gnuplot", action="store_true", help="also write a .gp plot script")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--sigma", type=float, default=None)
        if needs_shape:
            p.add_argument("--delta", type=float, default=None)
            p.add_argument("--epsilon", type=float, default=None)
            p.add_argument("--n-points", type=int, default=None, dest="n_points")

    pb = sub.add_parser("boundary", help="crescent edges for one shape")
    common(pb, needs_shape=True)
    pb.add_argument(
        "--touching",
        help="comma-separated mass split; also writes the touching levels "
        "of the matching geometric-ladder prior",
    )
    pb.set_defaults(func=_cmd_boundary)

    pc = sub.add_parser("curve", help="asymptotic trade-off curve of a prior")
    common(pc, needs_shape=True)
    pc.add_argument(
        "--prior",
        help='inline prior JSON, e.g. \'{"kind":"homogeneous","epsilon":0.2,"magnitude":1}\'',
    )
    pc.set_defaults(func=_cmd_curve)

    pp = sub.add_parser("path", help="event table of one simulated path")
    common(pp)
    pp.add_argument("--replicate", type=int, default=0, help="replicate id to draw")
    pp.set_defaults(func=_cmd_path)

    ps = sub.add_parser("simulate", help="replicated paths on a TPP grid")
    common(ps)
    ps.add_argument("--replicates", type=int, default=None)
    ps.add_argument("--jobs", type=int, default=1)
    ps.set_defaults(func=_cmd_simulate)

    pr = sub.add_parser("rank", help="first-false-selection rank experiment")
    common(pr)
    pr.add_argument("--replicates", type=int, default=None)
    pr.add_argument("--jobs", type=int, default=1)
    pr.set_defaults(func=_cmd_rank)

    # flags shared by signatures but not every subcommand
    for p in (pb, pc, pp):
        p.add_argument("--replicates", type=int, default=None, help=argparse.SUPPRESS)
        p.add_argument("--jobs", type=int, default=1, help=argparse.SUPPRESS)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleRegionError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3
    except (ConvergenceError, RuntimeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
