"""Brute-force reference computations for tiny instances.

None of these go through the filter recursion, the grid operators or the
pivotal decomposition they are used to check.
"""

from __future__ import annotations

from itertools import product

import numpy as np

from .model import SensorModel, prior_pmf, prior_tail
from .posterior import predictive, update_array
from .simple_game import SimpleGame, aggregate
from .tree import HistoryTree


def path_likelihood(model: SensorModel, obs, theta: int) -> float:
    """P(X_1..X_n | X_0, theta) with transitions into X_k post-change iff k >= theta."""
    out = 1.0
    for k in range(1, len(obs)):
        kern = model.post if k >= theta else model.pre
        out *= kern.probs[obs[k - 1], obs[k]]
    return out


def brute_posterior(model: SensorModel, obs) -> float:
    """P(theta <= n | X_0..X_n) by summing the joint law over theta."""
    n = len(obs) - 1
    before = sum(prior_pmf(model.prior, j) * path_likelihood(model, obs, j) for j in range(n + 1))
    after = prior_tail(model.prior, n) * path_likelihood(model, obs, n + 1)
    return before / (before + after)


def path_probability(model: SensorModel, obs) -> float:
    n = len(obs) - 1
    total = sum(prior_pmf(model.prior, j) * path_likelihood(model, obs, j) for j in range(n + 1))
    return total + prior_tail(model.prior, n) * path_likelihood(model, obs, n + 1)


def all_paths(model: SensorModel, horizon: int):
    """Every observation sequence of length horizon+1 starting at x0 with positive probability."""
    for tail in product(range(model.states), repeat=horizon):
        obs = (model.initial_state,) + tail
        if path_probability(model, obs) > 0:
            yield obs


def exhaustive_min_risk(model: SensorModel, horizon: int):
    """Minimum exact risk over every history-dependent stopping rule, and its flags."""
    tree = HistoryTree([model], horizon)
    sizes = [len(l.prob) for l in tree.levels[:-1]]
    k = sum(sizes)
    if k > 20:
        raise ValueError(f"{k} decision nodes is too many to enumerate")
    best, best_flags = np.inf, None
    for bits in range(1 << k):
        flags = (bits >> np.arange(k)) & 1
        levels, start = [], 0
        for s in sizes:
            levels.append(flags[start:start + s].astype(bool))
            start += s
        levels.append(np.ones(len(tree.levels[-1].prob), dtype=bool))
        risk = tree.risks(levels)[2][0]
        if risk < best:
            best, best_flags = risk, levels
    return float(best), best_flags


def successors(sensors, grids, xs, pis):
    """Joint successor states with probabilities, as grid-point posteriors."""
    per = []
    for s, g, x, pi in zip(sensors, grids, xs, pis):
        opts = []
        for y in range(s.states):
            f0, f1 = s.pre.probs[x, y], s.post.probs[x, y]
            w = float(predictive(pi, f0, f1, s.prior.p))
            if w > 0:
                opts.append((y, float(update_array(pi, f0, f1, s.prior.p)), w))
        per.append(opts)
    for combo in product(*per):
        yield (tuple(c[0] for c in combo), tuple(c[1] for c in combo),
               float(np.prod([c[2] for c in combo])))


def subset_min_psi(i: int, stops: np.ndarray, cont_i: np.ndarray, jg, game: SimpleGame, xs, pis) -> float:
    """min over player i's stopping sets C among the successors of (xs, pis) of
    E[(1 - Pi'_i) 1{stop} + g_i 1{no stop}], enumerating every subset."""
    succ = list(successors(jg.sensors, jg.grids, xs, pis))
    flat = jg.locate(np.array([s[0] for s in succ]), np.array([s[1] for s in succ]))
    others = stops.reshape(jg.p, -1)[:, flat].T
    g = cont_i.ravel()[flat]
    best = np.inf
    for bits in range(1 << len(succ)):
        total = 0.0
        for k, (ys, nps, w) in enumerate(succ):
            votes = list(others[k])
            votes[i] = bool(bits >> k & 1)
            total += w * ((1.0 - nps[i]) if aggregate(game, votes) else g[k])
        best = min(best, total)
    return best
