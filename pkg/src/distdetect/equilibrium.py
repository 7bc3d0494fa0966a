"""Equilibrium of the multilateral stopping game played by the sensors.

Stages are indexed by steps to go: stage ``k`` is time ``N - k``.  For every
player ``i`` and stage ``k`` we keep three tables over the joint grid
(every sensor's state and posterior):

``cont[i]``
    value of continuing past this time, ``v_{i,k}``; at ``k = 0`` it is the
    forced-stop payoff ``1 - pi_i``.
``stops[i]``
    the stopping set: ``1 - pi_i <= cont[i]`` (ties within ``TIE_TOL`` stop).
``values[i]``
    realized value once the stage's votes are aggregated: ``1 - pi_i`` where
    the profile stops, ``cont[i]`` elsewhere.

Going one stage back, player ``i`` only matters where it is pivotal, which
gives

    cont_{k+1} = c pi + E[g + (1 - pi' - g)^+ 1{stop without i}
                           - (1 - pi' - g)^- 1{stop with i}]

with ``g = cont_k`` evaluated at the next joint state.  Expectations factor
over sensors (independent chains and priors), so each sensor contributes a
linear operator on its own axis of the joint table: predictive law times
linear interpolation weights of the updated posterior.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import NetModel, SensorModel
from .posterior import predictive, update_array
from .simple_game import SimpleGame, aggregate_array, pivotal_gap_array
from .single_solver import PiGrid, stops_at
from .tree import DEFAULT_NODE_LIMIT, HistoryTree

log = logging.getLogger(__name__)

DEFAULT_STATE_BUDGET = 5_000_000


class BudgetExceeded(RuntimeError):
    def __init__(self, states: int, limit: int):
        super().__init__(f"joint grid has {states} states, budget is {limit}")
        self.states = states
        self.limit = limit


class CycleUnresolved(RuntimeError):
    pass


class OffGrid(ValueError):
    """A reachable posterior is not a grid point."""


def _interp_columns(points: np.ndarray, values: np.ndarray):
    g = len(points)
    j = np.clip(np.searchsorted(points, values, side="right") - 1, 0, g - 2)
    w = (values - points[j]) / (points[j + 1] - points[j])
    return j, np.clip(w, 0.0, 1.0)


def sensor_operator(model: SensorModel, grid: PiGrid) -> np.ndarray:
    """Matrix of h -> E[h(X', Pi') | X = x, Pi = pi] on the flattened (x, pi) grid."""
    pts = grid.points
    e, g = model.states, len(pts)
    pre, post, p = model.pre.probs, model.post.probs, model.prior.p
    op = np.zeros((e * g, e * g))
    rows = np.arange(g)
    for x in range(e):
        for y in range(e):
            f0, f1 = pre[x, y], post[x, y]
            w = predictive(pts, f0, f1, p)
            j, hi = _interp_columns(pts, update_array(pts, f0, f1, p))
            np.add.at(op, (x * g + rows, y * g + j), w * (1.0 - hi))
            np.add.at(op, (x * g + rows, y * g + j + 1), w * hi)
    return op


class JointGrid:
    """Product of per-sensor (x, pi) grids with the matching expectation operator."""

    def __init__(self, sensors: Sequence[SensorModel], grids: Sequence[PiGrid],
                 budget: int = DEFAULT_STATE_BUDGET):
        if len(sensors) != len(grids):
            raise ValueError("one grid per sensor required")
        self.sensors = tuple(sensors)
        self.grids = tuple(grids)
        self.p = len(sensors)
        self.shape = tuple(s.states * len(g) for s, g in zip(sensors, grids))
        size = int(np.prod(self.shape, dtype=float))
        if size > budget:
            raise BudgetExceeded(size, budget)
        self.size = size
        self.operators = [sensor_operator(s, g) for s, g in zip(sensors, grids)]
        self.costs = np.array([s.delay_cost for s in sensors])
        # per-axis posterior values, broadcastable against a joint table
        self.pis = []
        self.xs = []
        for r, (s, g) in enumerate(zip(sensors, grids)):
            view = [1] * self.p
            view[r] = self.shape[r]
            self.pis.append(np.tile(g.points, s.states).reshape(view))
            self.xs.append(np.repeat(np.arange(s.states), len(g)).reshape(view))

    def pi(self, i: int) -> np.ndarray:
        return np.broadcast_to(self.pis[i], self.shape)

    def expect(self, table: np.ndarray) -> np.ndarray:
        out = table
        for r, op in enumerate(self.operators):
            out = np.moveaxis(np.tensordot(op, out, axes=([1], [r])), 0, r)
        return out

    def locate(self, xs: np.ndarray, pis: np.ndarray) -> np.ndarray:
        """Flat joint-grid index of exact grid states; raises OffGrid otherwise."""
        idx = []
        for r, g in enumerate(self.grids):
            j = np.searchsorted(g.points, pis[:, r])
            j = np.clip(j, 0, len(g) - 1)
            if not np.array_equal(g.points[j], pis[:, r]):
                raise OffGrid(f"sensor {r}: posterior not on grid")
            idx.append(xs[:, r] * len(g) + j)
        return np.ravel_multi_index(tuple(idx), self.shape)

    def expect_at(self, table: np.ndarray, xs: np.ndarray, pis: np.ndarray, chunk: int = 20_000):
        """E[table(X', Pi')] from arbitrary joint states, interpolating multilinearly."""
        out = np.empty(len(xs))
        for start in range(0, len(xs), chunk):
            sl = slice(start, start + chunk)
            cols, wts = [], []
            for r, (s, g) in enumerate(zip(self.sensors, self.grids)):
                x, pi = xs[sl, r], pis[sl, r]
                c_r, w_r = [], []
                for y in range(s.states):
                    f0, f1 = s.pre.probs[x, y], s.post.probs[x, y]
                    w = predictive(pi, f0, f1, s.prior.p)
                    j, hi = _interp_columns(g.points, update_array(pi, f0, f1, s.prior.p))
                    c_r += [y * len(g) + j, y * len(g) + j + 1]
                    w_r += [w * (1.0 - hi), w * hi]
                cols.append(np.stack(c_r, axis=1))
                wts.append(np.stack(w_r, axis=1))
            m = len(cols[0])
            idx = []
            weight = np.ones((m,) + (1,) * self.p)
            for r in range(self.p):
                view = [m] + [1] * self.p
                view[r + 1] = cols[r].shape[1]
                idx.append(cols[r].reshape(view))
                weight = weight * wts[r].reshape(view)
            vals = table[tuple(idx)]
            out[sl] = (vals * weight).reshape(m, -1).sum(axis=1)
        return out


def _votes(stops: np.ndarray) -> np.ndarray:
    return np.moveaxis(stops, 0, -1)


def best_response_value(i: int, stops: np.ndarray, cont: np.ndarray, jg: JointGrid,
                        game: SimpleGame):
    """Player i's optimal expected payoff from one stage earlier, and its stopping set.

    ``stops`` holds every player's stopping table for the next stage (only
    the other players' are read) and ``cont`` is player i's continuation table
    there.  Returns ``(psi, stop)`` where ``psi`` is a table over the earlier
    stage's states (without the running cost) and ``stop`` is the
    best-response stopping table at the next stage.
    """
    without_i, with_i = pivotal_gap_array(game, i, _votes(stops))
    gap = (1.0 - jg.pi(i)) - cont
    term = cont + np.maximum(gap, 0.0) * without_i - np.maximum(-gap, 0.0) * with_i
    # outside the pivotal region the choice is payoff-irrelevant; use the same rule there
    return jg.expect(term), stops_at(1.0 - jg.pi(i), cont)


def realized_values(stops: np.ndarray, cont: np.ndarray, jg: JointGrid, game: SimpleGame):
    halt = aggregate_array(game, _votes(stops))
    return np.stack([np.where(halt, 1.0 - jg.pi(i), cont[i]) for i in range(jg.p)])


@dataclass
class StageSolution:
    k: int
    cont: np.ndarray        # (p, *shape)
    stops: np.ndarray       # (p, *shape) bool
    values: np.ndarray      # (p, *shape)
    iterations: int
    cycle: bool = False


def stage_equilibrium(k: int, cont: np.ndarray, jg: JointGrid, game: SimpleGame,
                      max_iter: int = 100) -> StageSolution:
    """Synchronous best-response iteration from the all-stop profile."""
    profile = np.ones((jg.p,) + jg.shape, dtype=bool)
    seen = {profile.tobytes(): 0}
    history = [profile]
    for it in range(1, max_iter + 1):
        new = np.stack([_best_response_stop(i, cont[i], jg) for i in range(jg.p)])
        if np.array_equal(new, profile):
            return StageSolution(k, cont, profile, realized_values(profile, cont, jg, game), it)
        key = new.tobytes()
        if key in seen:
            cycle = history[seen[key]:]
            log.warning("stage %d: best-response cycle of length %d", k, len(cycle))
            scores = [realized_values(c, cont, jg, game).sum() for c in cycle]
            best = cycle[int(np.argmin(scores))]
            if not np.isfinite(min(scores)):
                raise CycleUnresolved(f"stage {k}: no comparable profile in cycle")
            return StageSolution(k, cont, best, realized_values(best, cont, jg, game), it, cycle=True)
        seen[key] = len(history)
        history.append(new)
        profile = new
    raise CycleUnresolved(f"stage {k}: no convergence in {max_iter} iterations")


def _best_response_stop(i, cont_i, jg):
    # Optimal wherever player i is pivotal; elsewhere its vote cannot change the
    # outcome and the same rule is used as the canonical choice.
    return stops_at(1.0 - jg.pi(i), cont_i)


@dataclass
class EquilibriumSolution:
    net: NetModel
    game: SimpleGame
    grid: JointGrid
    stages: list
    diagnostics: list = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return len(self.stages) - 1

    def value_at(self, xs=None, pis=None, k: int | None = None) -> np.ndarray:
        """Equilibrium risk of every player with ``k`` steps to go (default: the horizon).

        Grid states read the stage table; other states use one-step lookahead.
        """
        k = self.horizon if k is None else k
        if xs is None:
            xs = [s.initial_state for s in self.net.sensors]
            pis = [s.prior.pi0 for s in self.net.sensors]
        xs = np.atleast_2d(np.asarray(xs, dtype=np.int64))
        pis = np.atleast_2d(np.asarray(pis, dtype=float))
        try:
            flat = self.grid.locate(xs, pis)[0]
        except OffGrid:
            conts = self.continuation(k, xs, pis)
            halt = aggregate_array(self.game, stops_at(1.0 - pis, conts))[0]
            return 1.0 - pis[0] if halt else conts[0]
        return np.array([v.ravel()[flat] for v in self.stages[k].values])

    def continuation(self, k: int, xs, pis) -> np.ndarray:
        """Every player's value of continuing with ``k`` steps to go, at arbitrary states."""
        xs = np.asarray(xs, dtype=np.int64)
        pis = np.asarray(pis, dtype=float)
        if k <= 0:
            return 1.0 - pis
        nxt = self.stages[k - 1].values
        return np.stack([self.grid.costs[i] * pis[:, i] + self.grid.expect_at(nxt[i], xs, pis)
                         for i in range(self.grid.p)], axis=1)

    def votes(self, n, xs, pis) -> np.ndarray:
        """Stopping votes at time n from arbitrary joint states (one-step lookahead)."""
        pis = np.asarray(pis, dtype=float)
        return stops_at(1.0 - pis, self.continuation(self.horizon - n, xs, pis))

    def table_policy(self) -> "TablePolicy":
        return TablePolicy(self.grid, [s.stops for s in self.stages])


class TablePolicy:
    """Joint policy read from per-stage stopping tables at exact grid states."""

    persistent = False

    def __init__(self, jg: JointGrid, stops: Sequence[np.ndarray]):
        self.grid = jg
        self.flat = [s.reshape(jg.p, -1) for s in stops]

    @property
    def horizon(self):
        return len(self.flat) - 1

    def votes(self, n, xs, pis):
        flat = self.grid.locate(xs, pis)
        return self.flat[self.horizon - n][:, flat].T


def solve_game(net: NetModel, game: SimpleGame, grids: Sequence[PiGrid], horizon: int | None = None,
               budget: int = DEFAULT_STATE_BUDGET, workers: int = 1) -> EquilibriumSolution:
    if game.p != net.p:
        raise ValueError(f"game has {game.p} players, net has {net.p} sensors")
    n_stages = net.horizon if horizon is None else horizon
    if n_stages < 0:
        raise ValueError("horizon must be >= 0")
    jg = JointGrid(net.sensors, grids, budget)
    cont = np.stack([1.0 - jg.pi(i) for i in range(jg.p)])
    stages = []
    diagnostics = []
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for k in range(n_stages + 1):
            st = stage_equilibrium(k, cont, jg, game)
            stages.append(st)
            diagnostics.append({"stage": k, "iterations": st.iterations, "cycle": st.cycle})
            if k == n_stages:
                break

            def back(i):
                psi, _ = best_response_value(i, st.stops, st.cont[i], jg, game)
                return jg.costs[i] * jg.pi(i) + psi

            parts = list(pool.map(back, range(jg.p))) if pool else [back(i) for i in range(jg.p)]
            cont = np.stack(parts)
    finally:
        if pool:
            pool.shutdown()
    return EquilibriumSolution(net, game, jg, stages, diagnostics)


def evaluate_profile(jg: JointGrid, game: SimpleGame, stops: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Per-stage realized value tables of an arbitrary stopping profile on the grid."""
    cont = np.stack([1.0 - jg.pi(i) for i in range(jg.p)])
    out = []
    for k, st in enumerate(stops):
        vals = realized_values(st, cont, jg, game)
        out.append(vals)
        cont = np.stack([jg.costs[i] * jg.pi(i) + jg.expect(vals[i]) for i in range(jg.p)])
    return out


# -- verification -------------------------------------------------------------------


@dataclass
class DeviationReport:
    base_risk: np.ndarray          # exact risk of the equilibrium profile, per player
    dp_value: np.ndarray           # solver's value at the initial state, per player
    max_decrease: np.ndarray       # largest risk reduction any tested deviation achieved
    deviations: np.ndarray         # number of deviations tested, per player
    worst: list                    # description of the best deviation per player
    tolerance: float = 1e-9

    @property
    def passed(self) -> bool:
        return bool(np.all(self.max_decrease <= self.tolerance))


def verify_equilibrium(solution: EquilibriumSolution, deviation_budget: int = 200, seed: int = 0,
                       limit: int = DEFAULT_NODE_LIMIT, tolerance: float = 1e-9) -> DeviationReport:
    """Exact no-deviation check on the history tree.

    Tests every single-entry flip of a player's stopping tables at states the
    tree visits (other entries cannot change the outcome), plus
    ``deviation_budget`` random multi-entry flips per player.
    """
    jg, game, horizon = solution.grid, solution.game, solution.horizon
    tree = HistoryTree(jg.sensors, horizon, limit)
    flats = [jg.locate(lvl.xs, lvl.pis) for lvl in tree.levels]
    base = [s.stops.reshape(jg.p, -1).copy() for s in solution.stages]

    def risk(tables):
        stops = [aggregate_array(game, tables[horizon - lvl.n][:, f].T)
                 for lvl, f in zip(tree.levels, flats)]
        return tree.risks(stops)[2]

    base_risk = risk(base)
    visited = sorted({(horizon - n, int(f)) for n, fl in enumerate(flats) for f in fl})
    rng = np.random.default_rng(seed)
    max_dec = np.zeros(jg.p)
    counts = np.zeros(jg.p, dtype=int)
    worst = [None] * jg.p
    for i in range(jg.p):
        candidates = [[e] for e in visited]
        for _ in range(deviation_budget):
            mask = rng.random(len(visited)) < rng.uniform(0.05, 0.95)
            candidates.append([e for e, m in zip(visited, mask) if m])
        for flips in candidates:
            tables = [t.copy() for t in base]
            for k, f in flips:
                tables[k][i, f] = ~tables[k][i, f]
            dec = base_risk[i] - risk(tables)[i]
            counts[i] += 1
            if dec > max_dec[i]:
                max_dec[i] = dec
                worst[i] = flips
    return DeviationReport(base_risk, solution.value_at(), max_dec, counts, worst, tolerance)
