"""Recursive Bayes filter for P(theta <= n | X_0..X_n).

With ``A = pi + (1 - pi) q`` the prior probability that the next transition is
already post-change, one observed transition ``x -> y`` gives

    pi' = A f1(y|x) / (A f1(y|x) + (1 - pi) p f0(y|x)).

``X_0`` carries no information, so the filter starts at ``pi0`` and the first
update consumes ``X_0 -> X_1``.
"""

from __future__ import annotations

import numpy as np

from .model import SensorModel, SensorPath


class ZeroLikelihood(ValueError):
    """Observed transition has zero probability under both regimes."""


def predictive(pi, f0, f1, p: float):
    """P(X_{n+1}=y | X_n=x, Pi_n=pi) for kernel rows/entries ``f0``, ``f1``."""
    pi = np.asarray(pi, dtype=float)
    a = pi + (1.0 - pi) * (1.0 - p)
    return a * f1 + (1.0 - pi) * p * f0


def update_array(pi, f0, f1, p: float):
    """Elementwise filter step; impossible transitions keep ``pi`` (zero weight downstream)."""
    pi = np.asarray(pi, dtype=float)
    a = pi + (1.0 - pi) * (1.0 - p)
    num = a * f1
    den = num + (1.0 - pi) * p * f0
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), pi)
    return np.where(pi >= 1.0, 1.0, out)


def posterior_update(pi: float, x_prev: int, x_next: int, model: SensorModel) -> float:
    if pi >= 1.0:
        return 1.0
    f0 = model.pre.probs[x_prev, x_next]
    f1 = model.post.probs[x_prev, x_next]
    p = model.prior.p
    a = pi + (1.0 - pi) * (1.0 - p)
    num = a * f1
    den = num + (1.0 - pi) * p * f0
    if den <= 0:
        raise ZeroLikelihood(f"transition {x_prev}->{x_next} impossible at pi={pi!r}")
    return float(num / den)


def posterior_path(path: SensorPath | np.ndarray, model: SensorModel) -> np.ndarray:
    obs = path.observations if isinstance(path, SensorPath) else np.asarray(path)
    if len(obs) == 0:
        raise ValueError("empty path")
    out = np.empty(len(obs))
    out[0] = model.prior.pi0
    for n in range(1, len(obs)):
        out[n] = posterior_update(out[n - 1], int(obs[n - 1]), int(obs[n]), model)
    return out


def posterior_paths(obs: np.ndarray, model: SensorModel) -> np.ndarray:
    """Filter many paths at once; ``obs`` has shape (reps, horizon+1)."""
    pre, post, p = model.pre.probs, model.post.probs, model.prior.p
    out = np.empty(obs.shape, dtype=float)
    out[:, 0] = model.prior.pi0
    for n in range(1, obs.shape[1]):
        xp, xn = obs[:, n - 1], obs[:, n]
        out[:, n] = update_array(out[:, n - 1], pre[xp, xn], post[xp, xn], p)
    return out


def posterior_drift_check(pi: float, x_prev: int, model: SensorModel) -> float:
    """Residual of E[Pi_{n+1} | F_n] = pi + (1 - pi) q, by exact summation."""
    p = model.prior.p
    total = 0.0
    for y in range(model.states):
        w = float(predictive(pi, model.pre.probs[x_prev, y], model.post.probs[x_prev, y], p))
        if w > 0:
            total += w * posterior_update(pi, x_prev, y, model)
    return total - (pi + (1.0 - pi) * (1.0 - p))
