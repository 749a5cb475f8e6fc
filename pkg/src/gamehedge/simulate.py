"""Monte Carlo replay of the optimal hedge against the buyer's best response.

Paths are drawn edge-by-edge from the tree's conditional laws. Each path's
uniform draws sit in their own row of a (seed-keyed) matrix, so replays are
reproducible and independent of processing order. The buyer plays the
best-response rule from the stopping-game solution; simulating any weaker
buyer would underestimate the risk being checked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .claims import GameClaim, LossFunction
from .dynkin import StoppingRule
from .market import MarketTree
from .shortfall import AdmissibilityError, HedgePolicy, extract_strategy

WEALTH_FLOOR = -1e-10


@dataclass
class PathSample:
    """Sampled paths: atom picks per step and the node index at each level."""

    atoms: np.ndarray   # (n_paths, N)
    nodes: np.ndarray   # (n_paths, N + 1)
    seed: int


def sample_paths(tree: MarketTree, n_paths: int, seed: int) -> PathSample:
    """i.i.d. paths drawn from the conditional distributions, seed-reproducible."""
    n_paths = int(n_paths)
    if n_paths < 1:
        raise ValueError("need at least one path")
    rng = np.random.default_rng(seed)
    draws = rng.random((n_paths, tree.horizon))

    atoms = np.empty((n_paths, tree.horizon), dtype=np.int64)
    nodes = np.empty((n_paths, tree.horizon + 1), dtype=np.int64)
    nodes[:, 0] = 0
    for n in range(tree.horizon):
        level = tree.levels[n]
        width = max(len(node.dist) for node in level)
        cums = np.full((len(level), width), np.inf)
        starts = np.empty(len(level), dtype=np.int64)
        for node in level:
            cums[node.index, :len(node.dist)] = np.cumsum(node.dist.probs)
            # the last atom absorbs any draw past the (possibly < 1) cumsum
            cums[node.index, len(node.dist) - 1] = np.inf
            starts[node.index] = node.child_start
        here = nodes[:, n]
        # atom k chosen when the draw falls in [cum_{k-1}, cum_k)
        atoms[:, n] = (draws[:, n][:, None] >= cums[here, :-1]).sum(axis=1) if width > 1 \
            else 0
        nodes[:, n + 1] = starts[here] + atoms[:, n]
    return PathSample(atoms=atoms, nodes=nodes, seed=int(seed))


@dataclass
class ReplayResult:
    loss: float
    stop_time: int
    seller_time: int
    buyer_time: int
    wealth: np.ndarray  # X_0 .. X_{stop}
    position: np.ndarray


@dataclass
class BatchReplay:
    losses: np.ndarray
    stop_times: np.ndarray
    seller_times: np.ndarray
    buyer_times: np.ndarray
    min_wealth: float


def _first_hits(rule: StoppingRule, nodes: np.ndarray, horizon: int) -> np.ndarray:
    out = np.full(nodes.shape[0], horizon, dtype=np.int64)
    undecided = np.ones(nodes.shape[0], dtype=bool)
    for n in range(horizon + 1):
        hit = undecided & rule.stops[n][nodes[:, n]]
        out[hit] = n
        undecided &= ~hit
    return out


def replay_paths(tree: MarketTree, claim: GameClaim, loss_fn: LossFunction,
                 policy: HedgePolicy, sigma: StoppingRule, tau: StoppingRule,
                 sample: PathSample, x: float) -> BatchReplay:
    """Vectorized replay of every sampled path."""
    n_paths, N = sample.atoms.shape
    seller = _first_hits(sigma, sample.nodes, N)
    buyer = _first_hits(tau, sample.nodes, N)
    stop = np.minimum(seller, buyer)

    # per-level market arrays for the policy lookup
    losses = np.empty(n_paths)
    min_wealth = float(x)
    wealth = np.full(n_paths, float(x))
    settled = np.zeros(n_paths, dtype=bool)

    for n in range(N + 1):
        at_stop = (stop == n) & ~settled
        if at_stop.any():
            idx = sample.nodes[at_stop, n]
            m, t = seller[at_stop], buyer[at_stop]
            payoff = np.where(m < t, claim.upper[n][idx], claim.lower[n][idx])
            losses[at_stop] = loss_fn(payoff - wealth[at_stop])
            settled[at_stop] = True
        if n == N:
            break

        level = tree.levels[n]
        kappa = np.array([node.stock for node in level])
        b = np.empty(len(level))
        a = np.empty(len(level))
        degen = np.zeros(len(level), dtype=bool)
        for node in level:
            b[node.index] = node.dist.returns[-1]
            a[node.index] = node.dist.returns[0]
            degen[node.index] = node.dist.is_degenerate
        here = sample.nodes[:, n]

        gi = np.minimum((wealth / policy.grid.step).astype(np.int64),
                        policy.grid.resolution)
        z = policy.positions[n][here, gi]
        if n == 0 and float(x) == policy.root_x:
            z[:] = policy.root_position
        kb = kappa[here] * b[here]
        ka = kappa[here] * a[here]
        with np.errstate(divide="ignore", invalid="ignore"):
            lo = np.where(degen[here], -np.inf, -wealth / kb)
            hi = np.where(degen[here], np.inf, -wealth / ka)
        z = np.clip(z, lo, hi)
        z[degen[here]] = 0.0

        # next-period wealth from the realized return
        ret = np.empty(n_paths)
        for node in level:
            sel = here == node.index
            if sel.any():
                ret[sel] = node.dist.returns[sample.atoms[sel, n]]
        wealth = wealth + z * ret * kappa[here]
        low = float(wealth.min())
        min_wealth = min(min_wealth, low)
        if low < WEALTH_FLOOR:
            raise AdmissibilityError(
                f"replayed wealth fell to {low:g} at time {n + 1}"
            )
        np.maximum(wealth, 0.0, out=wealth)

    return BatchReplay(losses=losses, stop_times=stop, seller_times=seller,
                       buyer_times=buyer, min_wealth=min_wealth)


def replay_hedge(tree: MarketTree, claim: GameClaim, loss_fn: LossFunction,
                 policy: HedgePolicy, sigma: StoppingRule, tau: StoppingRule,
                 path, x: float) -> ReplayResult:
    """Walk one path: hedge forward, stop at min(sigma, tau), price the loss."""
    path = [int(p) for p in path]
    if len(path) != tree.horizon:
        raise ValueError(f"path must have {tree.horizon} steps, got {len(path)}")
    strat = extract_strategy(policy, tree, x, path)

    node = tree.levels[0][0]
    chain = [node]
    for atom in path:
        node = tree.levels[node.time + 1][node.child_index(atom)]
        chain.append(node)

    seller = next((n for n, nd in enumerate(chain) if sigma.stops[n][nd.index]),
                  tree.horizon)
    buyer = next((n for n, nd in enumerate(chain) if tau.stops[n][nd.index]),
                 tree.horizon)
    t = min(seller, buyer)
    stop_node = chain[t]
    payoff = claim.upper[seller][chain[seller].index] if seller < buyer \
        else claim.lower[t][stop_node.index]
    loss = float(loss_fn(payoff - strat.wealth[t]))
    return ReplayResult(loss=loss, stop_time=t, seller_time=seller,
                        buyer_time=buyer, wealth=strat.wealth[:t + 1],
                        position=strat.position[:t])


@dataclass
class RiskEstimate:
    mean: float
    stderr: float
    n_paths: int
    min_wealth: float


def estimate_risk(tree: MarketTree, claim: GameClaim, loss_fn: LossFunction,
                  policy: HedgePolicy, sigma: StoppingRule, tau: StoppingRule,
                  x: float, n_paths: int, seed: int) -> RiskEstimate:
    """Sample mean and standard error of the replayed shortfall."""
    sample = sample_paths(tree, n_paths, seed)
    batch = replay_paths(tree, claim, loss_fn, policy, sigma, tau, sample, x)
    losses = batch.losses
    if np.all(losses == losses[0]):
        # deterministic loss: the estimate is exact
        return RiskEstimate(mean=float(losses[0]), stderr=0.0, n_paths=len(losses),
                            min_wealth=batch.min_wealth)
    mean = float(losses.mean())
    stderr = float(losses.std(ddof=1) / np.sqrt(len(losses))) if len(losses) > 1 else 0.0
    return RiskEstimate(mean=mean, stderr=stderr, n_paths=len(losses),
                        min_wealth=batch.min_wealth)
