import numpy as np

from distdetect.model import SensorModel, GeometricPrior, validate_kernel, make_sensor


def random_kernel(rng, states, zero_prob=0.0):
    k = rng.dirichlet(np.ones(states), size=states)
    if zero_prob:
        mask = rng.random((states, states)) < zero_prob
        mask[np.arange(states), rng.integers(0, states, states)] = False
        k = np.where(mask, 0.0, k)
        k = k / k.sum(axis=1, keepdims=True)
    # exact row sums
    k[:, -1] = 1.0 - k[:, :-1].sum(axis=1)
    k = np.clip(k, 0.0, 1.0)
    return k


def random_sensor(rng, states=2, zero_prob=0.0):
    return SensorModel(
        validate_kernel(random_kernel(rng, states, zero_prob)),
        validate_kernel(random_kernel(rng, states, zero_prob)),
        GeometricPrior(float(rng.uniform(0.01, 0.5)), float(rng.uniform(0.5, 0.95))),
        float(rng.uniform(0.02, 0.5)),
        int(rng.integers(0, states)),
    )


def random_game(rng, p):
    """Monotone game generated by a random family of nonempty coalitions."""
    from distdetect.simple_game import from_minimal

    k = int(rng.integers(1, 2**p))
    return from_minimal(p, rng.integers(1, 2**p, size=k))


TWO_STATE = make_sensor([[0.8, 0.2], [0.3, 0.7]], [[0.4, 0.6], [0.1, 0.9]], 0.05, 0.9, 0.1)
OTHER_TWO_STATE = make_sensor([[0.7, 0.3], [0.4, 0.6]], [[0.2, 0.8], [0.3, 0.7]], 0.1, 0.85, 0.2)


def edge_sensors():
    """Hand-built corner cases for the filter."""
    ident = [[1.0, 0.0], [0.0, 1.0]]
    return [
        # post-change chain frozen, pre-change chain moving
        make_sensor([[0.5, 0.5], [0.5, 0.5]], ident, 0.2, 0.7, 0.1),
        # observations carry no information
        make_sensor([[0.6, 0.4], [0.2, 0.8]], [[0.6, 0.4], [0.2, 0.8]], 0.1, 0.9, 0.1),
        # certain disorder at time 0
        make_sensor([[0.9, 0.1], [0.1, 0.9]], [[0.1, 0.9], [0.9, 0.1]], 1.0, 0.9, 0.1),
        # no mass at 0, sparse three-symbol kernels
        make_sensor([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
                    [[0.0, 0.0, 1.0], [0.0, 0.3, 0.7], [0.1, 0.0, 0.9]], 0.0, 0.6, 0.3, x0=1),
        # slow hazard, nearly identical kernels
        make_sensor([[0.5, 0.5], [0.5, 0.5]], [[0.5 + 1e-6, 0.5 - 1e-6], [0.5, 0.5]], 0.001, 0.99, 0.01),
    ]


def best_response_errors(solution, tree):
    """Largest gap between the solver's best-response value and the subset-enumeration
    oracle, over every player and every non-terminal history node."""
    from distdetect.equilibrium import best_response_value
    from distdetect.oracles import subset_min_psi

    jg, game, horizon = solution.grid, solution.game, solution.horizon
    worst = 0.0
    for level in tree.levels[:-1]:
        nxt = solution.stages[horizon - level.n - 1]
        for i in range(jg.p):
            psi, _ = best_response_value(i, nxt.stops, nxt.cont[i], jg, game)
            flat = jg.locate(level.xs, level.pis)
            for row, f in enumerate(flat):
                ref = subset_min_psi(i, nxt.stops, nxt.cont[i], jg, game, level.xs[row], level.pis[row])
                worst = max(worst, abs(psi.ravel()[f] - ref))
    return worst
