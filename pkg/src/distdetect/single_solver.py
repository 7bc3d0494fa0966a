"""Single-sensor optimal detection by dynamic programming on a (x, pi) grid.

The Bellman operator is

    T(v)(x, pi) = min{1 - pi, c pi + sum_y P(y | x, pi) v(y, pi'(x, y, pi))}

with ``pi'`` the filter update and ``v`` linearly interpolated in ``pi``.
Stopping wins ties, where a tie is any gap within ``TIE_TOL``: exact ties
are common on grids and rounding alone should not decide them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .model import SensorModel
from .posterior import predictive, update_array
from .simple_game import dictator
from .tree import DEFAULT_NODE_LIMIT, HistoryTree, TreeTooLarge

log = logging.getLogger(__name__)

TIE_TOL = 1e-12


def stops_at(payoff, cont):
    """Stopping decision: stop when the payoff is no worse than continuing, up to TIE_TOL."""
    return payoff <= cont + TIE_TOL


class NoConvergence(RuntimeError):
    def __init__(self, max_iter: int, residual: float):
        super().__init__(f"no convergence after {max_iter} iterations (residual {residual:.3e})")
        self.max_iter = max_iter
        self.residual = residual


@dataclass(frozen=True, eq=False)
class PiGrid:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or len(pts) < 2 or pts[0] != 0.0 or pts[-1] != 1.0:
            raise ValueError("grid must start at 0 and end at 1")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    @property
    def resolution(self) -> int:
        return len(self.points) - 1

    @classmethod
    def uniform(cls, n_points: int) -> "PiGrid":
        return cls(np.linspace(0.0, 1.0, n_points))

    @classmethod
    def reachable(cls, model: SensorModel, horizon: int, limit: int = DEFAULT_NODE_LIMIT) -> "PiGrid":
        """Every posterior value the filter can produce within ``horizon`` steps, plus 0 and 1.

        On this grid the filter maps reachable nodes onto nodes, so
        interpolation is exact along every history.  Raises TreeTooLarge when
        a level holds more than ``limit`` distinct (x, pi) pairs.
        """
        pre, post, p = model.pre.probs, model.post.probs, model.prior.p
        xs = np.array([model.initial_state])
        pis = np.array([model.prior.pi0])
        seen = [pis, np.array([0.0, 1.0])]
        for _ in range(horizon):
            nx, npi = [], []
            for y in range(model.states):
                f0, f1 = pre[xs, y], post[xs, y]
                ok = predictive(pis, f0, f1, p) > 0
                nx.append(np.full(ok.sum(), y))
                npi.append(update_array(pis[ok], f0[ok], f1[ok], p))
            pairs = np.unique(np.column_stack([np.concatenate(nx), np.concatenate(npi)]), axis=0)
            xs, pis = pairs[:, 0].astype(np.int64), pairs[:, 1]
            if len(pis) > limit:
                raise TreeTooLarge(len(pis), limit)
            seen.append(pis)
        return cls(np.unique(np.concatenate(seen)))


def continuation(v: np.ndarray, model: SensorModel, grid: PiGrid, x, pi) -> np.ndarray:
    """c pi + E[v(X', Pi')] at arbitrary (x, pi), with ``v`` interpolated on the grid."""
    x = np.asarray(x, dtype=np.int64)
    pi = np.asarray(pi, dtype=float)
    pre, post, p = model.pre.probs, model.post.probs, model.prior.p
    total = model.delay_cost * pi
    for y in range(model.states):
        f0, f1 = pre[x, y], post[x, y]
        w = predictive(pi, f0, f1, p)
        total = total + w * np.interp(update_array(pi, f0, f1, p), grid.points, v[y])
    return total


def _backup(v: np.ndarray, model: SensorModel, grid: PiGrid):
    pts = grid.points
    cont = np.empty_like(v)
    for x in range(model.states):
        cont[x] = continuation(v, model, grid, np.full(len(pts), x), pts)
    stop_payoff = 1.0 - pts
    stop = stops_at(stop_payoff[None, :], cont)
    return np.minimum(stop_payoff[None, :], cont), stop


def bellman_backup(v: np.ndarray, model: SensorModel, grid: PiGrid) -> np.ndarray:
    return _backup(v, model, grid)[0]


def stopping_payoff(model: SensorModel, grid: PiGrid) -> np.ndarray:
    return np.tile(1.0 - grid.points, (model.states, 1))


@dataclass
class StopRegion:
    stop: np.ndarray                  # (states, grid)
    thresholds: list                  # per state, smallest stopping pi or None
    upper_sets: bool


def stop_region(stop: np.ndarray, grid: PiGrid) -> StopRegion:
    thresholds = []
    upper = True
    for x, row in enumerate(stop):
        if not row.any():
            thresholds.append(None)
            continue
        first = int(np.argmax(row))
        if not row[first:].all():
            upper = False
            thresholds.append(None)
            log.warning("stopping region for state %d is not an upper set in pi", x)
        else:
            thresholds.append(float(grid.points[first]))
    return StopRegion(stop, thresholds, upper)


@dataclass
class FixedPointSolution:
    model: SensorModel
    grid: PiGrid
    values: np.ndarray
    region: StopRegion
    iterations: int
    residual: float
    history: list = field(default_factory=list)

    def decide(self, n, x, pi):
        pi = np.asarray(pi, dtype=float)
        return stops_at(1.0 - pi, continuation(self.values, self.model, self.grid, x, pi))


def solve_fixed_point(model: SensorModel, grid: PiGrid, tol: float = 1e-9,
                      max_iter: int = 100_000) -> FixedPointSolution:
    """Value iteration from the stopping payoff until the sup-norm step is <= tol."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = stopping_payoff(model, grid)
    history = []
    for it in range(1, max_iter + 1):
        nv, stop = _backup(v, model, grid)
        residual = float(np.max(np.abs(nv - v)))
        history.append((it, residual))
        v = nv
        if residual <= tol:
            log.info("fixed point reached after %d iterations, residual %.3e", it, residual)
            return FixedPointSolution(model, grid, v, stop_region(stop, grid), it, residual, history)
    raise NoConvergence(max_iter, residual)


@dataclass
class FiniteHorizonSolution:
    """Backward induction; ``values[k]`` and ``stops[k]`` hold k steps to go."""

    model: SensorModel
    grid: PiGrid
    horizon: int
    values: list
    stops: list

    def value_at(self, x: int, pi: float, steps_left: int | None = None) -> float:
        k = self.horizon if steps_left is None else steps_left
        return float(np.interp(pi, self.grid.points, self.values[k][x]))

    def decide(self, n, x, pi):
        pi = np.asarray(pi, dtype=float)
        k = self.horizon - n
        if k <= 0:
            return np.ones(np.shape(pi), dtype=bool)
        return stops_at(1.0 - pi, continuation(self.values[k - 1], self.model, self.grid, x, pi))

    def regions(self) -> list[StopRegion]:
        return [stop_region(s, self.grid) for s in self.stops]


def solve_finite_horizon(model: SensorModel, grid: PiGrid, horizon: int) -> FiniteHorizonSolution:
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    v = stopping_payoff(model, grid)
    values = [v]
    stops = [np.ones_like(v, dtype=bool)]
    for _ in range(horizon):
        v, stop = _backup(v, model, grid)
        values.append(v)
        stops.append(stop)
    return FiniteHorizonSolution(model, grid, horizon, values, stops)


# -- exact policy evaluation ----------------------------------------------------


class ThresholdRule:
    """Stationary rule: stop once pi reaches a per-state threshold."""

    def __init__(self, thresholds):
        self.thresholds = np.asarray(thresholds, dtype=float)

    def decide(self, n, x, pi):
        return np.asarray(pi) >= self.thresholds[np.asarray(x)]


class ConstantRule:
    def __init__(self, stop: bool):
        self.stop = stop

    def decide(self, n, x, pi):
        return np.full(np.shape(pi), self.stop, dtype=bool)


class _AsJoint:
    def __init__(self, rule):
        self.rule = rule

    def votes(self, n, xs, pis):
        return np.asarray(self.rule.decide(n, xs[:, 0], pis[:, 0]), dtype=bool)[:, None]


def policy_risk_exact(model: SensorModel, policy, horizon: int, limit: int = DEFAULT_NODE_LIMIT):
    """Exact (false alarm, expected delay, risk) of a rule with a forced stop at ``horizon``."""
    tree = HistoryTree([model], horizon, limit)
    fa, dl, risk = tree.policy_risks(_AsJoint(policy), dictator(1, 0))
    return float(fa[0]), float(dl[0]), float(risk[0])


def policy_risk_posterior_form(model: SensorModel, policy, horizon: int,
                               limit: int = DEFAULT_NODE_LIMIT) -> float:
    """The same risk written as E[(1 - Pi_tau) + c sum_{k<tau} Pi_k]."""
    tree = HistoryTree([model], horizon, limit)
    return float(tree.posterior_form_risks(tree.stop_levels(_AsJoint(policy), dictator(1, 0)))[0])
