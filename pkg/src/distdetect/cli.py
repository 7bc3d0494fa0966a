"""Command-line driver.

    distdetect validate     --model FILE
    distdetect simulate     --model FILE [--seed S] [--out DIR]
    distdetect filter       --model FILE [--observations CSV] [--seed S]
    distdetect solve-sensor --model FILE [--grid 1001]
    distdetect solve-game   --model FILE [--grid 21|reachable] [--horizon N]
    distdetect fuse-naive   --model FILE [--reps R] [--seed S]
    distdetect verify       --model FILE [--horizon N] [--deviations D]
    distdetect compare      --model FILE [--reps R] [--grid 21]

Exit status: 0 ok, 1 invalid input, 2 budget exceeded, 3 failed self-check
or equilibrium verification.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import plots
from .equilibrium import BudgetExceeded, solve_game, verify_equilibrium
from .fusion import NaivePolicy, individual_policies
from .mc import compare_policies, estimate_policy_risk
from .model import ModelError, simulate_net
from .modelfile import ModelFileError, load_model
from .oracles import all_paths, brute_posterior
from .posterior import ZeroLikelihood, posterior_drift_check, posterior_path
from .reports import config_hash, write_csv
from .simple_game import GameError, minimal_winning, members
from .single_solver import PiGrid, policy_risk_exact, solve_finite_horizon, solve_fixed_point
from .tree import TreeTooLarge, check_tree_size

log = logging.getLogger("distdetect")

DEFAULT_SEED = 0
DEFAULT_GRID = {"solve-sensor": "1001", "fuse-naive": "201", "solve-game": "21", "compare": "21"}


class SelfCheckFailed(RuntimeError):
    pass


def _grids(spec, arg: str, horizon: int):
    if arg == "reachable":
        return [PiGrid.reachable(s, horizon) for s in spec.net.sensors]
    n = int(arg)
    if n < 2:
        raise ValueError("--grid needs at least 2 points")
    return [PiGrid.uniform(n) for _ in spec.net.sensors]


def _need_game(spec, path):
    if spec.game is None:
        raise ModelFileError(path, 1, "this command needs a [game] block")
    return spec.game


def _horizon(spec, args):
    return spec.net.horizon if args.horizon is None else args.horizon


def _net(spec, args):
    from .model import NetModel
    return NetModel(spec.net.sensors, _horizon(spec, args))


# -- self-check ------------------------------------------------------------------


def self_check(spec, tol=1e-12):
    """Oracle cross-checks on the model's own sensors at tiny horizons."""
    for r, s in enumerate(spec.net.sensors):
        depth = 4 if s.states <= 3 else 3
        for n in range(1, depth + 1):
            for obs in all_paths(s, n):
                err = abs(posterior_path(np.array(obs), s)[-1] - brute_posterior(s, obs))
                if err > tol:
                    raise SelfCheckFailed(f"sensor {r}: filter off by {err:.3e} on path {obs}")
        for pi in np.linspace(0, 1, 11):
            for x in range(s.states):
                res = posterior_drift_check(float(pi), x, s)
                if abs(res) > tol:
                    raise SelfCheckFailed(f"sensor {r}: drift residual {res:.3e}")
        fh = solve_finite_horizon(s, PiGrid.reachable(s, 3), 3)
        risk = policy_risk_exact(s, fh, 3)[2]
        dp = fh.value_at(s.initial_state, s.prior.pi0)
        if abs(risk - dp) > 1e-10:
            raise SelfCheckFailed(f"sensor {r}: DP value {dp!r} vs exact policy risk {risk!r}")
    print("self-check passed")


# -- commands --------------------------------------------------------------------


def cmd_validate(spec, args, config, out):
    net = spec.net
    print(f"sensors: {net.p}, horizon: {net.horizon}")
    for name, s in zip(spec.names, net.sensors):
        print(f"  {name}: states={s.states} x0={s.initial_state} pi0={s.prior.pi0} "
              f"p={s.prior.p} c={s.delay_cost}")
    if spec.game is not None:
        mw = sorted(sorted(members(m)) for m in minimal_winning(spec.game))
        print(f"game: {spec.game.name}, minimal winning coalitions: {mw}")
    return 0


def cmd_simulate(spec, args, config, out):
    net = _net(spec, args)
    paths, thetas = simulate_net(net, args.seed)
    obs = np.stack([p.observations for p in paths], axis=1)
    pis = np.stack([posterior_path(p, s) for p, s in zip(paths, net.sensors)], axis=1)
    cols = ["n"] + [f"x_{n}" for n in spec.names] + [f"pi_{n}" for n in spec.names]
    rows = [[n, *obs[n], *pis[n]] for n in range(net.horizon + 1)]
    write_csv(out / "simulate.csv", "simulate", config, cols, rows)
    write_csv(out / "simulate_theta.csv", "simulate", config, ["sensor", "theta"],
              list(zip(spec.names, thetas)))
    plots.posterior_paths(out / "simulate.png", obs, pis, thetas, spec.names)
    return 0


def _read_observations(path, p):
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        vals = [int(t) for t in line.replace(",", " ").split()]
        if len(vals) != p:
            raise ValueError(f"{path}: expected {p} columns, got {len(vals)}")
        rows.append(vals)
    return np.array(rows, dtype=np.int64)


def cmd_filter(spec, args, config, out):
    net = _net(spec, args)
    if args.observations:
        obs = _read_observations(args.observations, net.p)
    else:
        paths, _ = simulate_net(net, args.seed)
        obs = np.stack([p.observations for p in paths], axis=1)
    rows = []
    for r, (name, s) in enumerate(zip(spec.names, net.sensors)):
        if obs[0, r] != s.initial_state:
            raise ValueError(f"sensor {name}: path starts at {obs[0, r]}, model x0 is {s.initial_state}")
        pis = posterior_path(obs[:, r], s)
        rows += [[n, name, obs[n, r], pis[n]] for n in range(len(obs))]
    write_csv(out / "filter.csv", "filter", config, ["n", "sensor", "x", "pi"], rows)
    return 0


def cmd_solve_sensor(spec, args, config, out):
    grid = _grids(spec, args.grid, _horizon(spec, args))
    thresholds, convergence, summary = [], [], []
    for r, (name, s) in enumerate(zip(spec.names, spec.net.sensors)):
        sol = solve_fixed_point(s, grid[r], tol=args.tol)
        pts = grid[r].points
        rows = [[x, pts[j], sol.values[x, j], sol.region.stop[x, j]]
                for x in range(s.states) for j in range(len(pts))]
        write_csv(out / f"sensor_{name}_values.csv", "solve-sensor", config, ["x", "pi", "value", "stop"], rows)
        thresholds += [[name, x, t, sol.region.upper_sets] for x, t in enumerate(sol.region.thresholds)]
        convergence += [[name, it, res] for it, res in sol.history]
        v0 = float(np.interp(s.prior.pi0, pts, sol.values[s.initial_state]))
        summary.append([name, sol.iterations, sol.residual, v0])
        plots.value_function(out / f"sensor_{name}_values.png", pts, sol.values, sol.region.stop,
                             title=f"sensor {name}")
    write_csv(out / "solve_sensor_thresholds.csv", "solve-sensor", config,
              ["sensor", "x", "threshold", "upper_set"], thresholds)
    write_csv(out / "solve_sensor_convergence.csv", "solve-sensor", config,
              ["sensor", "iteration", "residual"], convergence)
    write_csv(out / "solve_sensor_summary.csv", "solve-sensor", config,
              ["sensor", "iterations", "residual", "value_at_start"], summary)
    return 0


def _stage_rows(sol, names):
    jg = sol.grid
    idx = np.indices(jg.shape).reshape(jg.p, -1)
    xs = [idx[r] // len(g) for r, g in enumerate(jg.grids)]
    pis = [g.points[idx[r] % len(g)] for r, g in enumerate(jg.grids)]
    for st in sol.stages:
        vals = st.values.reshape(jg.p, -1)
        cont = st.cont.reshape(jg.p, -1)
        stops = st.stops.reshape(jg.p, -1)
        for j in range(idx.shape[1]):
            yield [st.k, *(x[j] for x in xs), *(p[j] for p in pis), *vals[:, j], *cont[:, j], *stops[:, j]]


def _value_curve(sol):
    return [sol.value_at(k=k) for k in range(sol.horizon + 1)]


def cmd_solve_game(spec, args, config, out):
    game = _need_game(spec, args.model)
    net = _net(spec, args)
    sol = solve_game(net, game, _grids(spec, args.grid, net.horizon), workers=args.workers)
    names = spec.names
    cols = (["stage"] + [f"x_{n}" for n in names] + [f"pi_{n}" for n in names] + [f"value_{n}" for n in names]
            + [f"cont_{n}" for n in names] + [f"stop_{n}" for n in names])
    write_csv(out / "game_values.csv", "solve-game", config, cols, _stage_rows(sol, names))
    curve = _value_curve(sol)
    rows = []
    for st, v in zip(sol.stages, curve):
        frac = st.stops.reshape(net.p, -1).mean(axis=1)
        rows += [[st.k, n, v[i], frac[i]] for i, n in enumerate(names)]
    write_csv(out / "game_summary.csv", "solve-game", config,
              ["stage", "sensor", "value_at_start", "stop_fraction"], rows)
    write_csv(out / "game_diagnostics.csv", "solve-game", config, ["stage", "iterations", "cycle"],
              [[d["stage"], d["iterations"], d["cycle"]] for d in sol.diagnostics])
    plots.value_by_horizon(out / "game_values.png", curve, names)
    return 0


def _estimate_rows(names, estimates):
    return [[n, e.reps, e.false_alarm.mean, e.false_alarm.se, e.delay.mean, e.delay.se, e.risk.mean, e.risk.se]
            for n, e in zip(names, estimates)]


ESTIMATE_COLS = ["sensor", "reps", "false_alarm", "false_alarm_se", "delay", "delay_se", "risk", "risk_se"]


def cmd_fuse_naive(spec, args, config, out):
    game = _need_game(spec, args.model)
    net = _net(spec, args)
    policies = individual_policies(net, _grids(spec, args.grid, net.horizon))
    est = estimate_policy_risk(net, NaivePolicy(policies), game, args.reps, args.seed, workers=args.workers)
    write_csv(out / "fusion.csv", "fuse-naive", config, ESTIMATE_COLS, _estimate_rows(spec.names, est))
    plots.risk_bars(out / "fusion.png", spec.names, {
        "false alarm": ([e.false_alarm.mean for e in est], [e.false_alarm.se for e in est]),
        "risk": ([e.risk.mean for e in est], [e.risk.se for e in est])})
    return 0


def cmd_verify(spec, args, config, out):
    game = _need_game(spec, args.model)
    net = _net(spec, args)
    # fail fast: reachable grids are as expensive to build as the tree itself
    check_tree_size(net.sensors, net.horizon)
    sol = solve_game(net, game, _grids(spec, "reachable", net.horizon), workers=args.workers)
    rep = verify_equilibrium(sol, deviation_budget=args.deviations, seed=args.seed)
    rows = [[n, rep.base_risk[i], rep.dp_value[i], rep.deviations[i], rep.max_decrease[i],
             rep.max_decrease[i] <= rep.tolerance] for i, n in enumerate(spec.names)]
    write_csv(out / "deviation.csv", "verify", config,
              ["sensor", "exact_risk", "dp_value", "deviations", "max_decrease", "pass"], rows)
    print("equilibrium verified" if rep.passed else "profitable deviation found")
    return 0 if rep.passed else 3


def cmd_compare(spec, args, config, out):
    game = _need_game(spec, args.model)
    net = _net(spec, args)
    grids = _grids(spec, args.grid, net.horizon)
    naive = NaivePolicy(individual_policies(net, grids))
    sol = solve_game(net, game, grids, workers=args.workers)
    rep = compare_policies(net, game, naive, sol, args.reps, args.seed, workers=args.workers)
    rows = []
    for i, n in enumerate(spec.names):
        a, b = rep.naive[i], rep.equilibrium[i]
        rows.append([n, rep.reps, a.risk.mean, a.risk.se, b.risk.mean, b.risk.se,
                     rep.difference[i].mean, rep.difference[i].se,
                     rep.difference_fa[i].mean, rep.difference_fa[i].se,
                     rep.difference_delay[i].mean, rep.difference_delay[i].se])
    write_csv(out / "compare.csv", "compare", config,
              ["sensor", "reps", "naive_risk", "naive_risk_se", "equilibrium_risk", "equilibrium_risk_se",
               "risk_diff", "risk_diff_se", "false_alarm_diff", "false_alarm_diff_se",
               "delay_diff", "delay_diff_se"], rows)
    diag = [[d["stage"], d["iterations"], d["cycle"]] for d in sol.diagnostics]
    write_csv(out / "compare_diagnostics.csv", "compare", config | {"path_digest": rep.digest},
              ["stage", "iterations", "cycle"], diag)
    plots.risk_bars(out / "compare.png", spec.names, {
        "naive": ([e.risk.mean for e in rep.naive], [e.risk.se for e in rep.naive]),
        "equilibrium": ([e.risk.mean for e in rep.equilibrium], [e.risk.se for e in rep.equilibrium])})
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "solve-sensor": cmd_solve_sensor,
    "solve-game": cmd_solve_game,
    "fuse-naive": cmd_fuse_naive,
    "verify": cmd_verify,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", required=True, help="model file")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--reps", type=int, default=10_000)
    common.add_argument("--grid", default=None, help="posterior grid points per sensor, or 'reachable'")
    common.add_argument("--horizon", type=int, default=None, help="override the model horizon")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--self-check", action="store_true", help="run oracle cross-checks first")
    common.add_argument("--tol", type=float, default=1e-9, help="fixed-point tolerance (solve-sensor)")
    common.add_argument("--deviations", type=int, default=200, help="random deviations per player (verify)")
    common.add_argument("--observations", default=None, help="observation file for filter")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="distdetect", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(args, model_text: str) -> dict:
    """Everything that determines artifact content; output dir and workers excluded."""
    return {
        "command": args.command,
        "model_sha256": hashlib.sha256(model_text.encode()).hexdigest(),
        "seed": args.seed,
        "reps": args.reps,
        "grid": args.grid,
        "horizon": args.horizon,
        "tol": args.tol,
        "deviations": args.deviations,
        "observations": Path(args.observations).name if args.observations else None,
        "self_check": args.self_check,
    }


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.grid is None:
        args.grid = DEFAULT_GRID.get(args.command, "21")
    try:
        text = Path(args.model).read_text()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    config = resolve_config(args, text)
    print(f"seed: {args.seed}")
    print(f"config: {json.dumps(config, sort_keys=True)} (hash {config_hash(config)})")
    out = Path(args.out)
    try:
        spec = load_model(args.model)
        if args.reps < 1:
            raise ValueError("--reps must be >= 1")
        if args.self_check:
            self_check(spec)
        return COMMANDS[args.command](spec, args, config, out)
    except (ModelFileError, ModelError, GameError, ZeroLikelihood, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (BudgetExceeded, TreeTooLarge) as exc:
        print(f"budget error: {exc}", file=sys.stderr)
        return 2
    except SelfCheckFailed as exc:
        print(f"self-check failed: {exc}", file=sys.stderr)
        return 3


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
