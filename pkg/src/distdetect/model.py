"""Sensor models, geometric disorder priors and the regime-switching simulator.

Each sensor observes a Markov chain on a finite alphabet.  Before its disorder
time ``theta`` the chain moves with the ``pre`` kernel, from ``theta`` on it
moves with the ``post`` kernel, continuing from the last pre-change state.
The transition that produces ``X_n`` is drawn from ``post`` iff ``n >= theta``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROW_TOL = 1e-12


class ModelError(ValueError):
    """Malformed model input."""


class NonStochasticRow(ModelError):
    def __init__(self, row: int, total: float):
        super().__init__(f"row {row} sums to {total!r}, expected 1")
        self.row = row
        self.total = total


class NegativeEntry(ModelError):
    def __init__(self, row: int, col: int, value: float):
        super().__init__(f"entry ({row}, {col}) is {value!r}, expected a probability")
        self.row = row
        self.col = col
        self.value = value


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    probs: np.ndarray

    @property
    def states(self) -> int:
        return self.probs.shape[0]

    def __eq__(self, other):
        return isinstance(other, TransitionKernel) and np.array_equal(self.probs, other.probs)

    __hash__ = None


def validate_kernel(probs) -> TransitionKernel:
    """Build a kernel from a square row-stochastic matrix.

    Rows are never renormalized; any row off by more than ``ROW_TOL`` is
    rejected.
    """
    a = np.array(probs, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 2:
        raise ModelError(f"kernel must be a square matrix of side >= 2, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ModelError("kernel has non-finite entries")
    bad = np.argwhere((a < 0) | (a > 1))
    if len(bad):
        r, c = bad[0]
        raise NegativeEntry(int(r), int(c), float(a[r, c]))
    sums = a.sum(axis=1)
    for r, s in enumerate(sums):
        if abs(s - 1.0) > ROW_TOL:
            raise NonStochasticRow(r, float(s))
    a.setflags(write=False)
    return TransitionKernel(a)


@dataclass(frozen=True)
class GeometricPrior:
    """P(theta=0) = pi0, P(theta=j) = (1-pi0) p^(j-1) q for j >= 1."""

    pi0: float
    p: float

    def __post_init__(self):
        if not 0.0 <= self.pi0 <= 1.0:
            raise ModelError(f"pi0 must lie in [0, 1], got {self.pi0!r}")
        if not 0.0 < self.p < 1.0:
            raise ModelError(f"p must lie in (0, 1), got {self.p!r}")

    @property
    def q(self) -> float:
        return 1.0 - self.p


def prior_pmf(prior: GeometricPrior, j: int) -> float:
    if j < 0:
        raise ValueError("time index must be >= 0")
    if j == 0:
        return prior.pi0
    return (1.0 - prior.pi0) * prior.p ** (j - 1) * prior.q


def prior_tail(prior: GeometricPrior, n: int) -> float:
    """P(theta > n)."""
    return (1.0 - prior.pi0) * prior.p ** n


@dataclass(frozen=True)
class SensorModel:
    pre: TransitionKernel
    post: TransitionKernel
    prior: GeometricPrior
    delay_cost: float
    initial_state: int = 0

    def __post_init__(self):
        if self.pre.states != self.post.states:
            raise ModelError("pre and post kernels have different alphabets")
        if not self.delay_cost > 0:
            raise ModelError(f"delay cost must be positive, got {self.delay_cost!r}")
        if not 0 <= self.initial_state < self.states:
            raise ModelError(f"initial state {self.initial_state} outside alphabet of size {self.states}")

    @property
    def states(self) -> int:
        return self.pre.states


@dataclass(frozen=True)
class NetModel:
    sensors: tuple[SensorModel, ...]
    horizon: int

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        if len(self.sensors) < 1:
            raise ModelError("a net needs at least one sensor")
        if self.horizon < 0:
            raise ModelError("horizon must be >= 0")

    @property
    def p(self) -> int:
        return len(self.sensors)


@dataclass(frozen=True)
class SensorPath:
    observations: np.ndarray
    theta: int

    @property
    def horizon(self) -> int:
        return len(self.observations) - 1


def make_sensor(pre, post, pi0: float, p: float, c: float, x0: int = 0) -> SensorModel:
    return SensorModel(validate_kernel(pre), validate_kernel(post), GeometricPrior(pi0, p), c, x0)


# -- sampling ---------------------------------------------------------------


def sensor_rng(seed: int, *key: int) -> np.random.Generator:
    """Sub-stream addressed by an integer key below the master seed.

    The stream for key ``(k,)`` depends only on ``seed`` and ``k``, so adding
    or removing other keys never perturbs it.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def sample_disorder(prior: GeometricPrior, rng: np.random.Generator, size=None):
    """Inverse-CDF draw(s) of the disorder time."""
    u = rng.random(size)
    v = 1.0 - rng.random(size)  # (0, 1]
    tail = np.floor(np.log(v) / np.log(prior.p)).astype(np.int64) + 1
    theta = np.where(u < prior.pi0, 0, tail)
    if size is None:
        return int(theta)
    return theta


def _cumulative(kernel: TransitionKernel) -> np.ndarray:
    return np.cumsum(kernel.probs, axis=1)[:, :-1]


def simulate_paths(model: SensorModel, theta, horizon: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized regime-switching paths, one row per entry of ``theta``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.int64))
    reps = len(theta)
    cum = (_cumulative(model.pre), _cumulative(model.post))
    x = np.empty((reps, horizon + 1), dtype=np.int64)
    x[:, 0] = model.initial_state
    for n in range(1, horizon + 1):
        u = rng.random(reps)
        post = n >= theta
        rows = np.where(post[:, None], cum[1][x[:, n - 1]], cum[0][x[:, n - 1]])
        x[:, n] = (u[:, None] >= rows).sum(axis=1)
    return x


def simulate_sensor(model: SensorModel, theta: int, horizon: int, rng: np.random.Generator) -> SensorPath:
    if theta < 0 or horizon < 0:
        raise ValueError("theta and horizon must be >= 0")
    obs = simulate_paths(model, [theta], horizon, rng)[0]
    return SensorPath(obs, int(theta))


def simulate_net(net: NetModel, seed: int, reps: int | None = None):
    """Simulate every sensor of the net from its own sub-stream.

    With ``reps=None`` returns ``(paths, thetas)`` for a single run; otherwise
    returns arrays ``obs[reps, horizon+1, p]`` and ``theta[reps, p]``.
    """
    single = reps is None
    m = 1 if single else reps
    obs = np.empty((m, net.horizon + 1, net.p), dtype=np.int64)
    thetas = np.empty((m, net.p), dtype=np.int64)
    for r, sensor in enumerate(net.sensors):
        rng = sensor_rng(seed, r)
        th = sample_disorder(sensor.prior, rng, m)
        thetas[:, r] = th
        obs[:, :, r] = simulate_paths(sensor, th, net.horizon, rng)
    if single:
        paths = [SensorPath(obs[0, :, r].copy(), int(thetas[0, r])) for r in range(net.p)]
        return paths, [int(t) for t in thetas[0]]
    return obs, thetas
