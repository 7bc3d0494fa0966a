"""Naive fusion: each sensor runs its own optimal rule, the game aggregates the alarms.

A sensor's vote is persistent: once its own rule has stopped it keeps voting
for an alarm at every later stage.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .model import NetModel, SensorPath
from .posterior import posterior_path
from .simple_game import SimpleGame, aggregate_array
from .single_solver import PiGrid, solve_finite_horizon


class NaivePolicy:
    """Joint policy built from independent single-sensor rules."""

    persistent = True

    def __init__(self, rules: Sequence):
        self.rules = list(rules)

    def votes(self, n, xs, pis):
        return np.stack([np.asarray(r.decide(n, xs[:, i], pis[:, i]), dtype=bool)
                         for i, r in enumerate(self.rules)], axis=1)


def individual_policies(net: NetModel, grids: Sequence[PiGrid], horizon: int | None = None):
    """Finite-horizon optimal rule for each sensor on its own grid."""
    n = net.horizon if horizon is None else horizon
    return [solve_finite_horizon(s, g, n) for s, g in zip(net.sensors, grids)]


def naive_votes(paths: Sequence[SensorPath], policies: Sequence, models) -> np.ndarray:
    """Vote matrix [stage, sensor]: sensor r votes from its own stopping time on."""
    horizon = paths[0].horizon
    votes = np.zeros((horizon + 1, len(paths)), dtype=bool)
    for r, (path, rule, model) in enumerate(zip(paths, policies, models)):
        pis = posterior_path(path, model)
        for n in range(horizon + 1):
            if rule.decide(n, np.array([path.observations[n]]), np.array([pis[n]]))[0]:
                votes[n:, r] = True
                break
    return votes


def system_alarm(votes: np.ndarray, game: SimpleGame):
    """First stage whose votes form a winning coalition, or None."""
    hits = np.flatnonzero(aggregate_array(game, np.asarray(votes, dtype=bool)))
    return int(hits[0]) if len(hits) else None


def evaluate_fusion_mc(net: NetModel, game: SimpleGame, policies: Sequence, reps: int, seed: int,
                       workers: int = 1):
    """Monte Carlo per-sensor risks of naive fusion at the system alarm time."""
    from .mc import estimate_policy_risk

    return estimate_policy_risk(net, NaivePolicy(policies), game, reps, seed, workers=workers)
