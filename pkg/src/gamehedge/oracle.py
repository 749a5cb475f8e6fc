"""Exhaustive ground-truth solvers for tiny trees.

On a finite path tree there are finitely many stopping times, so the
stopping game can be solved by enumerating every adapted (seller, buyer)
rule pair. The strategy search enumerates one position choice per node from
a uniform grid over that node's admissible interval; because subtrees are
disjoint, the minimum over all grid-strategy combinations is computed by
propagating exact wealth states forward and folding the minimum backward,
which visits every combination's value without materializing the product
space (the tests cross-check this against the literal product loop).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .claims import GameClaim, LossFunction
from .dynkin import StoppingRule, WealthProcess
from .market import MarketNode, MarketTree, support_bounds

ENUM_GUARD = 10 ** 6
MAX_ORACLE_HORIZON = 3
MAX_ORACLE_ATOMS = 3
MAX_Z_GRID = 64


class GuardError(RuntimeError):
    """Instance exceeds the oracle's combinatorial guard."""


# -- stopping-time enumeration ------------------------------------------------

def stopping_time_count(tree: MarketTree, node: MarketNode | None = None) -> int:
    """Number of adapted stopping rules: 1 at leaves, else 1 + prod(children)."""
    if node is None:
        node = tree.levels[0][0]
    if node.dist is None:
        return 1
    count = 1
    for child in tree.children(node):
        count *= stopping_time_count(tree, child)
    return 1 + count


def _frontiers(tree: MarketTree, node: MarketNode) -> list[tuple[tuple[int, int], ...]]:
    if node.dist is None:
        return [((node.time, node.index),)]
    own = ((node.time, node.index),)
    out = [own]
    child_lists = [_frontiers(tree, child) for child in tree.children(node)]
    for combo in itertools.product(*child_lists):
        merged = tuple(itertools.chain.from_iterable(combo))
        out.append(merged)
    return out


def enumerate_stopping_times(tree: MarketTree, guard: int = ENUM_GUARD) -> list[StoppingRule]:
    """Complete, duplicate-free enumeration of adapted stopping rules.

    Each rule is returned as per-node stop flags set on its stopping
    frontier (terminal flags forced, as every rule stops by N).
    """
    count = stopping_time_count(tree)
    if count > guard:
        raise GuardError(f"{count} stopping times exceed the guard of {guard}")
    rules = []
    for frontier in _frontiers(tree, tree.levels[0][0]):
        stops = [np.zeros(len(lv), dtype=bool) for lv in tree.levels]
        for t, i in frontier:
            stops[t][i] = True
        stops[-1][:] = True
        rules.append(StoppingRule(stops))
    return rules


# -- Dynkin game by enumeration ------------------------------------------------

def _ancestor_indices(tree: MarketTree) -> np.ndarray:
    """anc[p, t] = index of the time-t node on terminal path p."""
    P = len(tree.levels[-1])
    N = tree.horizon
    anc = np.empty((P, N + 1), dtype=np.int64)
    anc[:, N] = np.arange(P)
    for t in range(N - 1, -1, -1):
        level = tree.levels[t + 1]
        anc[:, t] = [level[i].parent_index for i in anc[:, t + 1]]
    return anc


def oracle_dynkin(tree: MarketTree, claim: GameClaim, loss_fn: LossFunction,
                  wealth: WealthProcess, guard: int = ENUM_GUARD) -> float:
    """Exact min over seller rules of max over buyer rules of E Q(sigma, tau)."""
    rules = enumerate_stopping_times(tree, guard)
    anc = _ancestor_indices(tree)
    P, width = anc.shape

    upper = np.column_stack([
        loss_fn(claim.upper[t][anc[:, t]] - wealth.values[t][anc[:, t]])
        for t in range(width)
    ])
    lower = np.column_stack([
        loss_fn(claim.lower[t][anc[:, t]] - wealth.values[t][anc[:, t]])
        for t in range(width)
    ])
    probs = np.array([leaf.prob for leaf in tree.levels[-1]])

    times = np.stack([rule.times_by_terminal(tree) for rule in rules])  # (R, P)
    rows = np.arange(P)
    lower_at_tau = lower[rows[None, :], times]                           # (R, P)

    best = np.inf
    for m in times:
        q = np.where(m[None, :] < times, upper[rows, m][None, :], lower_at_tau)
        worst = float((q @ probs).max())
        if worst < best:
            best = worst
    return best


# -- strategy-grid risk search --------------------------------------------------

@dataclass
class OracleRisk:
    value: float         # min over grid strategies of the game value
    wealth_gap: float    # largest one-step wealth increment between grid choices
    value_bound: float   # crude loss-value error bound implied by the grid
    states: int          # exact wealth states visited


def oracle_risk(tree: MarketTree, claim: GameClaim, loss_fn: LossFunction,
                x: float, z_grid_size: int = MAX_Z_GRID) -> OracleRisk:
    """Exhaustive search over per-node position choices from uniform grids.

    Preconditions guard the combinatorics: horizon <= 3, at most 3 atoms per
    node, at most 64 grid points per node. The reported gap figures bound the
    discretization error of the grid restriction.
    """
    if tree.horizon > MAX_ORACLE_HORIZON:
        raise GuardError(f"oracle limited to horizon {MAX_ORACLE_HORIZON}")
    if any(len(node.dist) > MAX_ORACLE_ATOMS
           for lv in tree.levels[:-1] for node in lv):
        raise GuardError(f"oracle limited to {MAX_ORACLE_ATOMS} atoms per node")
    if not 2 <= z_grid_size <= MAX_Z_GRID:
        raise GuardError(f"z grid size must lie in 2..{MAX_Z_GRID}")
    if x <= 0.0:
        raise ValueError(f"initial capital must be positive, got {x}")

    N = tree.horizon
    # forward pass: exact wealth states per node, one entry per upstream choice
    states: list[list[np.ndarray]] = [[np.array([float(x)])]]
    wealth_gap = 0.0
    value_bound = 0.0
    n_states = 1
    for n in range(N):
        layer: list[np.ndarray] = [None] * len(tree.levels[n + 1])
        level_gap = 0.0
        for node in tree.levels[n]:
            w = states[n][node.index]
            sb = support_bounds(node)
            if sb.degenerate:
                layer[node.child_index(0)] = w
                continue
            lo = -w / (node.stock * sb.b)
            hi = -w / (node.stock * sb.a)
            steps = np.arange(z_grid_size) / (z_grid_size - 1)
            z = lo[:, None] + (hi - lo)[:, None] * steps[None, :]
            max_u = max(abs(sb.a), abs(sb.b))
            gap = float(((hi - lo) / (z_grid_size - 1)).max()) * node.stock * max_u
            level_gap = max(level_gap, gap)
            for k, u in enumerate(node.dist.returns):
                q = w[:, None] + z * (u * node.stock)
                np.maximum(q, 0.0, out=q)
                layer[node.child_index(k)] = q.reshape(-1)
        states.append(layer)
        n_states += sum(len(s) for s in layer)
        wealth_gap = max(wealth_gap, level_gap)
        value_bound += level_gap
    value_bound *= loss_fn.derivative_bound(claim.max_upper)

    # backward pass: fold the min over each node's grid into the game value
    vals = [loss_fn(claim.upper[N][i] - s) for i, s in enumerate(states[N])]
    for n in range(N - 1, -1, -1):
        nxt: list[np.ndarray] = [None] * len(tree.levels[n])
        for node in tree.levels[n]:
            w = states[n][node.index]
            a = loss_fn(claim.upper[n][node.index] - w)
            b = loss_fn(claim.lower[n][node.index] - w)
            if support_bounds(node).degenerate:
                cont = vals[node.child_index(0)]
            else:
                cont = np.zeros((len(w), z_grid_size))
                for k, p in enumerate(node.dist.probs):
                    cont += p * vals[node.child_index(k)].reshape(len(w), z_grid_size)
                cont = cont.min(axis=1)
            nxt[node.index] = np.minimum(a, np.maximum(b, cont))
        vals = nxt
    return OracleRisk(value=float(vals[0][0]), wealth_gap=wealth_gap,
                      value_bound=float(value_bound), states=n_states)
