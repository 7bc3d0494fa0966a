"""Seeded Monte Carlo risk estimation for joint stopping policies.

Replications are split into fixed-size shards.  Shard ``s`` draws sensor
``r`` from the sub-stream keyed ``(s, r)`` below the master seed, and shard
results are concatenated in shard order, so the output does not depend on
how many workers ran the shards.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import NetModel, sample_disorder, sensor_rng, simulate_paths
from .posterior import posterior_paths
from .simple_game import SimpleGame, aggregate_array

SHARD_SIZE = 10_000


@dataclass(frozen=True)
class Estimate:
    mean: float
    se: float  # 1 sigma; nan when reps == 1

    @classmethod
    def of(cls, sample: np.ndarray) -> "Estimate":
        n = len(sample)
        mean = float(np.mean(sample))
        se = float(np.std(sample, ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
        return cls(mean, se)


@dataclass(frozen=True)
class RiskEstimate:
    sensor: int
    false_alarm: Estimate
    delay: Estimate
    risk: Estimate
    reps: int


@dataclass
class Batch:
    obs: np.ndarray     # (reps, horizon+1, p)
    theta: np.ndarray   # (reps, p)
    pis: np.ndarray     # (reps, horizon+1, p)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.obs).tobytes())
        h.update(np.ascontiguousarray(self.theta).tobytes())
        return h.hexdigest()


def _shard(net: NetModel, seed: int, shard: int, reps: int) -> Batch:
    obs = np.empty((reps, net.horizon + 1, net.p), dtype=np.int64)
    theta = np.empty((reps, net.p), dtype=np.int64)
    pis = np.empty(obs.shape)
    for r, sensor in enumerate(net.sensors):
        rng = sensor_rng(seed, shard, r)
        theta[:, r] = sample_disorder(sensor.prior, rng, reps)
        obs[:, :, r] = simulate_paths(sensor, theta[:, r], net.horizon, rng)
        pis[:, :, r] = posterior_paths(obs[:, :, r], sensor)
    return Batch(obs, theta, pis)


def _shard_sizes(reps: int):
    full, rest = divmod(reps, SHARD_SIZE)
    return [SHARD_SIZE] * full + ([rest] if rest else [])


def simulate_batch(net: NetModel, reps: int, seed: int, workers: int = 1) -> Batch:
    if reps < 1:
        raise ValueError("reps must be >= 1")
    sizes = _shard_sizes(reps)
    jobs = list(enumerate(sizes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda j: _shard(net, seed, *j), jobs))
    else:
        parts = [_shard(net, seed, *j) for j in jobs]
    return Batch(*(np.concatenate([getattr(b, f) for b in parts]) for f in ("obs", "theta", "pis")))


def alarm_times(batch: Batch, policy, game: SimpleGame) -> np.ndarray:
    """System alarm per replication; never alarming before the horizon counts as a stop at it."""
    reps, steps, _ = batch.obs.shape
    horizon = steps - 1
    alarm = np.full(reps, horizon, dtype=np.int64)
    alive = np.ones(reps, dtype=bool)
    held = np.zeros((reps, batch.obs.shape[2]), dtype=bool)
    persistent = getattr(policy, "persistent", False)
    for n in range(steps):
        idx = np.flatnonzero(alive)
        if len(idx) == 0:
            break
        v = np.asarray(policy.votes(n, batch.obs[idx, n], batch.pis[idx, n]), dtype=bool)
        if persistent:
            v = v | held[idx]
            held[idx] = v
        stop = aggregate_array(game, v)
        alarm[idx[stop]] = n
        alive[idx[stop]] = False
    return alarm


def losses(batch: Batch, alarm: np.ndarray, costs: np.ndarray):
    fa = (alarm[:, None] < batch.theta).astype(float)
    delay = np.maximum(alarm[:, None] - batch.theta, 0).astype(float)
    return fa, delay, fa + costs * delay


def _estimates(fa, delay, risk):
    reps = len(fa)
    return [RiskEstimate(r, Estimate.of(fa[:, r]), Estimate.of(delay[:, r]), Estimate.of(risk[:, r]), reps)
            for r in range(fa.shape[1])]


def estimate_policy_risk(net: NetModel, policy, game: SimpleGame, reps: int, seed: int,
                         workers: int = 1) -> list[RiskEstimate]:
    batch = simulate_batch(net, reps, seed, workers)
    costs = np.array([s.delay_cost for s in net.sensors])
    return _estimates(*losses(batch, alarm_times(batch, policy, game), costs))


@dataclass
class ComparisonReport:
    naive: list
    equilibrium: list
    difference: list        # per sensor: Estimate of (naive - equilibrium) risk
    difference_fa: list
    difference_delay: list
    digest: str
    reps: int


def compare_policies(net: NetModel, game: SimpleGame, naive_policy, eq_policy, reps: int, seed: int,
                     workers: int = 1) -> ComparisonReport:
    """Paired comparison of two joint policies on common simulated paths."""
    batch = simulate_batch(net, reps, seed, workers)
    costs = np.array([s.delay_cost for s in net.sensors])
    a = losses(batch, alarm_times(batch, naive_policy, game), costs)
    b = losses(batch, alarm_times(batch, eq_policy, game), costs)
    diffs = [[Estimate.of(x[:, r] - y[:, r]) for r in range(net.p)] for x, y in zip(a, b)]
    return ComparisonReport(_estimates(*a), _estimates(*b), diffs[2], diffs[0], diffs[1],
                            batch.digest(), reps)


def compare(net: NetModel, game: SimpleGame, reps: int, seed: int, grids, workers: int = 1,
            budget: int | None = None) -> tuple[ComparisonReport, object]:
    """Naive fusion vs the equilibrium profile, both solved on ``grids``."""
    from .equilibrium import DEFAULT_STATE_BUDGET, solve_game
    from .fusion import NaivePolicy, individual_policies

    naive = NaivePolicy(individual_policies(net, grids))
    sol = solve_game(net, game, grids, budget=budget or DEFAULT_STATE_BUDGET, workers=workers)
    return compare_policies(net, game, naive, sol, reps, seed, workers), sol
