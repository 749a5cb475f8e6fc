"""Shared fixtures and randomized instance generators.

Generators are seeded by the caller so every test run sees the same
instances; structure (tree shape, payoffs, capitals) is random within the
small-tree regime the oracles can certify.
"""

import numpy as np
import pytest

from gamehedge import (ConditionalDistribution, GameClaim, LossFunction, MarketTree,
                       WealthProcess, admissible_interval, solve)


def random_distribution(rng, allow_degenerate=False, max_atoms=3):
    if allow_degenerate and rng.random() < 0.1:
        return ConditionalDistribution([(0.0, 1.0)])
    k = int(rng.integers(2, max_atoms + 1))
    rets = [-rng.uniform(0.1, 0.6), rng.uniform(0.1, 0.8)]
    if k == 3:
        rets.append(rng.uniform(-0.05, 0.05))
    rets = sorted(rets)
    probs = 0.2 + rng.random(k)
    probs /= probs.sum()
    return ConditionalDistribution(zip(rets, probs))


def random_tree(rng, max_horizon=3, allow_degenerate=False, max_atoms=3,
                horizon=None) -> MarketTree:
    if horizon is None:
        horizon = int(rng.integers(1, max_horizon + 1))
    s0 = rng.uniform(0.6, 1.5)
    level_dists = [[random_distribution(rng, allow_degenerate, max_atoms)]]
    count = len(level_dists[0][0])
    for _ in range(1, horizon):
        level_dists.append([random_distribution(rng, allow_degenerate, max_atoms)
                            for _ in range(count)])
        count = sum(len(d) for d in level_dists[-1])
    return MarketTree(s0, level_dists)


def random_claim(rng, tree) -> GameClaim:
    """Random payoffs with U = W + delta before maturity and U_N = W_N."""
    if rng.random() < 0.5:
        kind = "call" if rng.random() < 0.5 else "put"
        strike = tree.s0 * rng.uniform(0.7, 1.3)
        return GameClaim.vanilla(tree, kind, strike, penalty=rng.uniform(0.0, 0.5))
    lower = [rng.uniform(0.0, 1.2, size=len(lv)) for lv in tree.levels]
    return GameClaim.from_lower(tree, lower, penalty=rng.uniform(0.0, 0.5))


def random_loss(rng) -> LossFunction:
    return LossFunction(p=float(rng.choice([1.0, 1.0, 2.0, 1.5])))


def random_constant_gamma_wealth(rng, tree, x) -> WealthProcess:
    """Admissible wealth from one constant stock position (halved until safe)."""
    gamma = float(rng.uniform(-2.0, 2.0)) * x / tree.s0
    for _ in range(80):
        positions = [np.full(len(lv), gamma) for lv in tree.levels[:-1]]
        try:
            return WealthProcess.from_positions(tree, x, positions)
        except ValueError:
            gamma *= 0.5
    return WealthProcess.constant(tree, x)


def random_adapted_wealth(rng, tree, x) -> WealthProcess:
    """Admissible wealth from per-node positions drawn inside the bounds."""
    values = [np.array([float(x)])]
    positions = []
    for n in range(tree.horizon):
        cur = values[n]
        gam = np.empty(len(tree.levels[n]))
        nxt = np.empty(len(tree.levels[n + 1]))
        for node in tree.levels[n]:
            interval = admissible_interval(node, float(cur[node.index]))
            if interval.degenerate:
                z = 0.0
            else:
                z = interval.lo + rng.random() * (interval.hi - interval.lo)
            gam[node.index] = z
            for k, u in enumerate(node.dist.returns):
                nxt[node.child_index(k)] = max(
                    cur[node.index] + z * u * node.stock, 0.0)
        values.append(nxt)
        positions.append(gam)
    return WealthProcess(tree, values, positions)


def binomial_example():
    """The hand-derived one-period instance used throughout the tests."""
    dist = ConditionalDistribution([(-0.5, 0.5), (0.5, 0.5)])
    tree = MarketTree.iid(1.0, dist, 1)
    claim = GameClaim.from_tables(tree, upper=[[2.0], [0.5, 1.5]],
                                  lower=[[0.0], [0.5, 1.5]])
    return tree, claim, LossFunction(p=1.0)


@pytest.fixture(scope="session")
def binomial():
    return binomial_example()


@pytest.fixture(scope="session", autouse=True)
def warm_kernel():
    """Compile the scan kernel once so timed tests measure solving, not JIT."""
    tree, claim, lf = binomial_example()
    solve(tree, claim, lf, 0.5, scan_points=8, refine_rounds=2)
