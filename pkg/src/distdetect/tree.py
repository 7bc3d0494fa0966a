"""Exact enumeration of observation histories with the disorder-time law.

Every node of the tree is a joint history ``(X_0..X_n)`` of positive
probability.  Alongside it we carry, per sensor, the joint mass
``P(history, theta = j)`` for ``j <= n`` and ``P(history, theta > n)``, built
forward from the prior and the two kernels, without going through the filter.
The false-alarm and delay terms of a stopping rule are then plain sums over
the nodes where the rule first stops.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import SensorModel
from .posterior import update_array
from .simple_game import SimpleGame, aggregate_array

DEFAULT_NODE_LIMIT = 1_000_000


class TreeTooLarge(RuntimeError):
    def __init__(self, nodes: int, limit: int):
        super().__init__(f"history tree would hold {nodes} nodes, limit is {limit}")
        self.nodes = nodes
        self.limit = limit


@dataclass
class _SensorLevel:
    x: np.ndarray          # (M,)
    pi: np.ndarray         # (M,) filter output
    parent: np.ndarray     # (M,) index into previous level
    joint: np.ndarray      # (M, n+1) P(history, theta=j)
    tail: np.ndarray       # (M,) P(history, theta>n)
    cum_pi: np.ndarray     # (M,) sum of pi over times < n

    @property
    def prob(self):
        return self.joint.sum(axis=1) + self.tail


def _sensor_levels(model: SensorModel, horizon: int) -> list[_SensorLevel]:
    pre, post = model.pre.probs, model.post.probs
    p, q, pi0 = model.prior.p, model.prior.q, model.prior.pi0
    e = model.states
    lvl = _SensorLevel(
        x=np.array([model.initial_state]), pi=np.array([pi0]), parent=np.array([-1]),
        joint=np.array([[pi0]]), tail=np.array([1.0 - pi0]), cum_pi=np.zeros(1))
    levels = [lvl]
    for n in range(1, horizon + 1):
        m = len(lvl.x)
        par = np.repeat(np.arange(m), e)
        xp = lvl.x[par]
        xn = np.tile(np.arange(e), m)
        f0, f1 = pre[xp, xn], post[xp, xn]
        joint = np.empty((m * e, n + 1))
        joint[:, :n] = lvl.joint[par] * f1[:, None]
        joint[:, n] = lvl.tail[par] * q * f1
        tail = lvl.tail[par] * p * f0
        keep = (joint.sum(axis=1) + tail) > 0
        par, xn = par[keep], xn[keep]
        pi = update_array(lvl.pi[par], f0[keep], f1[keep], p)
        lvl = _SensorLevel(xn, pi, par, joint[keep], tail[keep], lvl.cum_pi[par] + lvl.pi[par])
        levels.append(lvl)
    return levels


def check_tree_size(sensors: Sequence[SensorModel], horizon: int, limit: int = DEFAULT_NODE_LIMIT) -> int:
    """Upper bound on the number of joint history nodes; raises TreeTooLarge above ``limit``."""
    bound = sum(int(np.prod([s.states ** n for s in sensors], dtype=float)) for n in range(horizon + 1))
    if bound > limit:
        raise TreeTooLarge(bound, limit)
    return bound


@dataclass
class Level:
    n: int
    xs: np.ndarray        # (M, p)
    pis: np.ndarray       # (M, p)
    parent: np.ndarray    # (M,)
    prob: np.ndarray      # (M,)
    false_alarm: np.ndarray  # (M, p) P(node, theta_i > n)
    delay: np.ndarray     # (M, p) sum_j (n - j) P(node, theta_i = j)
    cum_pi: np.ndarray    # (M, p)


class HistoryTree:
    """All joint histories of a net of independent sensors up to ``horizon``."""

    def __init__(self, sensors: Sequence[SensorModel], horizon: int, limit: int = DEFAULT_NODE_LIMIT):
        self.sensors = tuple(sensors)
        self.horizon = horizon
        self.p = len(self.sensors)
        self.costs = np.array([s.delay_cost for s in self.sensors])
        check_tree_size(self.sensors, horizon, limit)
        per_sensor = [_sensor_levels(s, horizon) for s in self.sensors]
        self.levels: list[Level] = []
        for n in range(horizon + 1):
            lv = [ps[n] for ps in per_sensor]
            sizes = [len(l.x) for l in lv]
            grids = np.meshgrid(*[np.arange(s) for s in sizes], indexing="ij")
            idx = [g.ravel() for g in grids]
            probs = np.stack([l.prob[k] for l, k in zip(lv, idx)], axis=1)
            total = probs.prod(axis=1)
            fa = np.empty_like(probs)
            dl = np.empty_like(probs)
            weights = n - np.arange(n + 1)
            for i, (l, k) in enumerate(zip(lv, idx)):
                rest = np.prod(np.delete(probs, i, axis=1), axis=1)
                fa[:, i] = l.tail[k] * rest
                dl[:, i] = (l.joint[k] @ weights) * rest
            if n == 0:
                parent = np.full(len(total), -1)
            else:
                prev = [len(ps[n - 1].x) for ps in per_sensor]
                parent = np.ravel_multi_index(tuple(l.parent[k] for l, k in zip(lv, idx)), prev)
            self.levels.append(Level(
                n=n,
                xs=np.stack([l.x[k] for l, k in zip(lv, idx)], axis=1),
                pis=np.stack([l.pi[k] for l, k in zip(lv, idx)], axis=1),
                parent=parent, prob=total, false_alarm=fa, delay=dl,
                cum_pi=np.stack([l.cum_pi[k] for l, k in zip(lv, idx)], axis=1)))

    @property
    def size(self) -> int:
        return sum(len(l.prob) for l in self.levels)

    def first_stops(self, stop_levels: Sequence[np.ndarray]) -> list[np.ndarray]:
        """Indicator of the first stop along each history; stopping at the horizon is forced."""
        out = []
        alive = np.ones(1, dtype=bool)
        for lvl, stop in zip(self.levels, stop_levels):
            parent_alive = alive if lvl.n == 0 else alive[lvl.parent]
            stop = np.asarray(stop, dtype=bool) | (lvl.n == self.horizon)
            out.append(parent_alive & stop)
            alive = parent_alive & ~stop
        return out

    def risks(self, stop_levels: Sequence[np.ndarray]):
        """Exact (false_alarm, delay, risk) per sensor for given system stop flags."""
        first = self.first_stops(stop_levels)
        fa = sum(f @ lvl.false_alarm for f, lvl in zip(first, self.levels))
        dl = sum(f @ lvl.delay for f, lvl in zip(first, self.levels))
        return fa, dl, fa + self.costs * dl

    def posterior_form_risks(self, stop_levels: Sequence[np.ndarray]) -> np.ndarray:
        """E[(1 - Pi_tau) + c sum_{k < tau} Pi_k] per sensor, from filter output."""
        first = self.first_stops(stop_levels)
        total = np.zeros(self.p)
        for f, lvl in zip(first, self.levels):
            total += (f * lvl.prob) @ ((1.0 - lvl.pis) + self.costs * lvl.cum_pi)
        return total

    def vote_levels(self, policy) -> list[np.ndarray]:
        """Per-level vote matrices of a joint policy, made persistent if it asks for that."""
        out = []
        prev = None
        for lvl in self.levels:
            v = np.asarray(policy.votes(lvl.n, lvl.xs, lvl.pis), dtype=bool)
            if getattr(policy, "persistent", False) and prev is not None:
                v = v | prev[lvl.parent]
            out.append(v)
            prev = v
        return out

    def stop_levels(self, policy, game: SimpleGame) -> list[np.ndarray]:
        return [aggregate_array(game, v) for v in self.vote_levels(policy)]

    def policy_risks(self, policy, game: SimpleGame):
        return self.risks(self.stop_levels(policy, game))
