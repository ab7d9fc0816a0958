"""Command-line front end.

Every command writes CSV (header row first, 9 significant digits) to
stdout or ``--out``; ``--plot`` additionally renders a figure. Exit codes:
0 ok, 1 flagged result under ``--strict``, 2 grid too small, 3 Monte Carlo
failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys

import numpy as np

from . import branching, control, levy, reaction, semigroup
from .config import load_config, merge

EXIT_OK, EXIT_FLAGGED, EXIT_GRID, EXIT_MC, EXIT_USAGE = 0, 1, 2, 3, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


class Table:
    def __init__(self, header):
        self.header = list(header)
        self.rows = []

    def add(self, *row):
        self.rows.append([fmt(v) for v in row])

    def render(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        w.writerows(self.rows)
        return buf.getvalue()


# -- config plumbing ---------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--drift", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--jump-intensity", dest="jump_intensity", type=float)
    p.add_argument("--jumps", help="size:prob pairs, e.g. 0.5:0.25,1.0:0.75")
    p.add_argument("--theta-max", dest="theta_max", type=float)
    p.add_argument("--offspring", help="k:p pairs, e.g. 0:0.25,2:0.75")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.add_argument("--plot", help="render a figure to this file")
    p.add_argument("--strict", action="store_true", help="exit 1 on flagged results")


def _grid_opts(p):
    p.add_argument("--x-min", dest="x_min", type=float)
    p.add_argument("--x-max", dest="x_max", type=float)
    p.add_argument("-m", "--points", dest="m", type=int)
    p.add_argument("--u0", choices=["heaviside", "one", "alpha"], default=None)


def _cfg(args) -> dict:
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "func", "config")}
    return merge(load_config(args.config), flags)


def _model(cfg):
    return levy.model_from_config(cfg)


def _rf(cfg):
    return reaction.reaction_fn(reaction.law_from_config(cfg))


def _grid_u0(cfg, rf):
    kind = cfg.get("u0") or "heaviside"
    lims = (float(cfg["x_min"]), float(cfg["x_max"]), int(cfg["m"]))
    if kind == "heaviside":
        return semigroup.heaviside_grid(*lims), semigroup.heaviside
    c = 1.0 if kind == "one" else rf.alpha
    g = semigroup.constant_grid(c, *lims)
    return g, g


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _threads(cfg):
    t = cfg.get("threads")
    return int(t) if t else (os.cpu_count() or 1)


# -- commands ----------------------------------------------------------------

def cmd_speed(cfg):
    model, rf = _model(cfg), _rf(cfg)
    table = Table(["method", "q", "theta_star", "saturated"])
    flagged = False
    for name, res in levy.front_speed_all(model, rf.gamma).items():
        table.add(name, res.q, res.theta_star, res.saturated)
        flagged |= res.saturated
    return table, flagged, None


def _bracket_table(br):
    table = Table(["x", "lower", "upper", "mid"])
    mid = br.mid
    for row in zip(br.lower.x, br.lower.values, br.upper.values, mid.values):
        table.add(*row)
    return table


def cmd_solve(cfg):
    model, rf = _model(cfg), _rf(cfg)
    u0, _ = _grid_u0(cfg, rf)
    t = float(cfg["t"])
    _, br = semigroup.solve(model, rf, u0, t, float(cfg["tol"]), int(cfg["n_max"]),
                            int(cfg["seed"]))
    plot = (lambda path: _plot("bracket", br, path, f"t={t:g}, n={br.n}"))
    return _bracket_table(br), not br.converged, plot


def cmd_bounds(cfg):
    model, rf = _model(cfg), _rf(cfg)
    u0, _ = _grid_u0(cfg, rf)
    t = float(cfg["t"])
    br = semigroup.trotter_bounds(model, rf, u0, t, int(cfg.get("n") or 1), int(cfg["seed"]))
    plot = (lambda path: _plot("bracket", br, path, f"t={t:g}, n={br.n}"))
    return _bracket_table(br), False, plot


def cmd_median(cfg):
    model, rf = _model(cfg), _rf(cfg)
    u0, _ = _grid_u0(cfg, rf)
    ts = _floats(cfg.get("t_list") or "1,2,4")
    dyadic_bbm = rf.law == reaction.dyadic() and model == levy.standard_bm()
    table = Table(["t", "median", "lo_bound", "hi_bound"])
    rows = []
    flagged = False
    for t in ts:
        mid, br = semigroup.solve(model, rf, u0, t, float(cfg["tol"]), int(cfg["n_max"]),
                                  int(cfg["seed"]))
        flagged |= not br.converged
        m = semigroup.median(mid)
        lo, hi = semigroup.best_median_bounds(t) if dyadic_bbm else (math.nan, math.nan)
        table.add(t, m, lo, hi)
        rows.append((t, m, lo, hi))
    return table, flagged, (lambda path: _plot("median", rows, path))


def cmd_control(cfg):
    model, rf = _model(cfg), _rf(cfg)
    u0_grid, u0 = _grid_u0(cfg, rf)
    t, x = float(cfg["t"]), float(cfg.get("x") or 0.0)
    n_paths = int(cfg.get("n_paths") or 100_000)
    J = int(cfg.get("J") or control.DEFAULT_J)
    seed, threads = int(cfg["seed"]), _threads(cfg)
    names = cfg.get("policy") or ["zero", "minus-one", "gamma", "ramp", "optimal"]
    if isinstance(names, str):
        names = [n.strip() for n in names.split(",")]
    mid, br = semigroup.solve(model, rf, u0_grid, t, float(cfg["tol"]), int(cfg["n_max"]), seed)
    bundled = control.bundled_policies(rf, t, seed)
    sol = control.solution_path(model, rf, u0_grid, t, J, seed)
    table = Table(["policy", "t", "x", "mean", "stderr", "n_paths", "J"])
    rows = []
    failed = False
    for name in names:
        pol = control.optimal_policy(model, rf, u0_grid, t, J, snapshots=sol) \
            if name == "optimal" else bundled[name]
        est = control.estimate_value(model, x, t, pol, rf, u0, n_paths, J, seed, threads)
        failed |= not math.isfinite(est.mean)
        table.add(name, t, x, est.mean, est.stderr, est.n_paths, est.J)
        rows.append((name, est.mean, est.stderr))
    ref = float(mid(np.array([x]))[0])
    table.add("solve-midpoint", t, x, ref, br.gap, 0, br.n)
    mc = control.martingale_check(model, rf, sol, x, t, [t / 4, t / 2, 3 * t / 4, t],
                                  n_paths, seed, threads=threads)
    table.add("martingale-maxdev", t, x, mc.max_deviation, max(mc.stderrs), n_paths, J)
    if failed:
        raise MonteCarloError("non-finite Monte Carlo estimate")
    return table, False, (lambda path: _plot("policies", rows, ref, br.gap, path))


def cmd_branch(cfg):
    model, law = _model(cfg), reaction.law_from_config(cfg)
    bc = branching.BranchingConfig(model, law, cap=int(cfg["cap"]))
    seed, threads = int(cfg["seed"]), _threads(cfg)
    mode = cfg.get("mode") or "speed"
    n_runs = int(cfg.get("n_runs") or 10_000)
    if mode == "speed":
        rows = branching.speed_experiment(bc, _floats(cfg.get("t_list") or "1,2,4"), n_runs,
                                          seed, threads)
        table = Table(["t", "median_speed", "q10", "q90", "extinct_frac"])
        for r in rows:
            table.add(r.t, r.median_speed, r.q10, r.q90, r.extinct_frac)
        q = levy.front_speed(model, law.mean - 1.0).q if law.mean > 1 else math.nan
        return table, any(r.flagged for r in rows), (lambda path: _plot("speed", rows, q, path))
    t = float(cfg["t"])
    if mode == "runs":
        batch = branching.simulate_runs(bc, t, n_runs, seed, threads)
        table = Table(["t", "run", "status", "n_particles", "rightmost"])
        for i in range(batch.n_runs):
            table.add(t, i, batch.status[i], batch.n_particles[i], batch.rightmost[i])
        return table, bool(batch.mask(branching.Status.CAP_EXCEEDED).any()), None
    if mode == "mckean":
        rf = reaction.reaction_fn(law)
        _, u0 = _grid_u0(cfg, rf)
        xs = _floats(cfg.get("x_list") or cfg.get("x") or "0")
        table = Table(["t", "x", "mean", "stderr", "n_runs", "n_capped"])
        flagged = False
        for r in branching.mckean_check(bc, u0, t, xs, n_runs, seed, threads):
            table.add(t, r.x, r.estimate.mean, r.estimate.stderr, r.estimate.n_paths, r.n_capped)
            flagged |= r.flagged
        return table, flagged, None
    raise UsageError(f"unknown branch mode {mode!r}")


def cmd_extinction(cfg):
    law = reaction.law_from_config(cfg)
    bc = branching.BranchingConfig(_model(cfg), law, cap=int(cfg["cap"]))
    est = branching.extinction_estimate(bc, float(cfg.get("t_long") or 30.0),
                                        int(cfg.get("n_runs") or 100_000), int(cfg["seed"]))
    table = Table(["t_long", "estimate", "stderr", "n_runs", "alpha"])
    table.add(float(cfg.get("t_long") or 30.0), est.probability, est.stderr, est.n_runs,
              reaction.extinction_prob(law))
    return table, False, None


class MonteCarloError(RuntimeError):
    pass


def _plot(kind, *args):
    from . import plotting

    if kind == "bracket":
        br, path, title = args
        plotting.plot_bracket(br, path, title)
    elif kind == "median":
        plotting.plot_median_trace(*args)
    elif kind == "speed":
        plotting.plot_speed(*args)
    elif kind == "policies":
        plotting.plot_policies(*args)


COMMANDS = {
    "speed": cmd_speed,
    "solve": cmd_solve,
    "bounds": cmd_bounds,
    "median": cmd_median,
    "control": cmd_control,
    "branch": cmd_branch,
    "extinction": cmd_extinction,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="branchfront", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("speed", help="front speed by three equivalent formulas")
    _common(p)

    for name, helptext in (("solve", "refine the splitting bracket until gap < tol"),
                           ("bounds", "splitting bracket for a fixed n")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        _grid_opts(p)
        p.add_argument("--t", type=float)
        if name == "solve":
            p.add_argument("--tol", type=float)
            p.add_argument("--n-max", dest="n_max", type=int)
        else:
            p.add_argument("-n", "--n", dest="n", type=int, default=1)

    p = sub.add_parser("median", help="PDE median trace with analytic bounds")
    _common(p)
    _grid_opts(p)
    p.add_argument("--t-list", dest="t_list")
    p.add_argument("--tol", type=float)
    p.add_argument("--n-max", dest="n_max", type=int)

    p = sub.add_parser("control", help="Monte Carlo values of control policies")
    _common(p)
    _grid_opts(p)
    p.add_argument("--t", type=float)
    p.add_argument("--x", type=float)
    p.add_argument("--policy", action="append",
                   choices=["zero", "minus-one", "gamma", "random-constant", "ramp", "optimal"])
    p.add_argument("--n-paths", dest="n_paths", type=int)
    p.add_argument("-J", "--steps", dest="J", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--n-max", dest="n_max", type=int)

    p = sub.add_parser("branch", help="branching process simulations")
    _common(p)
    p.add_argument("--mode", choices=["speed", "runs", "mckean"])
    p.add_argument("--t", type=float)
    p.add_argument("--t-list", dest="t_list")
    p.add_argument("--x-list", dest="x_list")
    p.add_argument("--n-runs", dest="n_runs", type=int)
    p.add_argument("--cap", type=int)
    p.add_argument("--u0", choices=["heaviside", "one", "alpha"], default=None)

    p = sub.add_parser("extinction", help="empirical extinction probability")
    _common(p)
    p.add_argument("--t-long", dest="t_long", type=float)
    p.add_argument("--n-runs", dest="n_runs", type=int)
    p.add_argument("--cap", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _cfg(args)
        table, flagged, plot = COMMANDS[args.command](cfg)
    except semigroup.GridTooSmallError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GRID
    except MonteCarloError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MC
    except (UsageError, levy.DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = table.render()
    if cfg.get("out"):
        with open(cfg["out"], "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if cfg.get("plot") and plot is not None:
        plot(cfg["plot"])
    if flagged and cfg.get("strict"):
        return EXIT_FLAGGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
