"""Finite scenario-tree market model with explicit conditional return laws.

The market is discounted (bond price constant at 1), so the only primitive
is the stock. Trees are path trees: a node at time n is one realized return
history, and each non-terminal node carries the finite conditional
distribution of the next one-period return. Recombining dynamics must be
expanded into path form before construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

# |return| below this is snapped to exactly 0, so the degenerate-node
# dichotomy (support == {0}) is an exact comparison downstream.
ATOM_SNAP = 1e-14
PROB_TOL = 1e-12
PATH_MATCH_TOL = 1e-12


class TreePathError(ValueError):
    """A supplied return path does not exist in the tree."""


class ConditionalDistribution:
    """Finite law of the next one-period return.

    Atoms are strictly increasing with strictly positive probabilities
    summing to one; all return values live in (-1, inf).
    """

    __slots__ = ("returns", "probs")

    def __init__(self, atoms: Iterable[tuple[float, float]]):
        pairs = [(float(r), float(p)) for r, p in atoms]
        if not pairs:
            raise ValueError("distribution needs at least one atom")
        returns = np.array([r for r, _ in pairs], dtype=float)
        probs = np.array([p for _, p in pairs], dtype=float)
        returns[np.abs(returns) < ATOM_SNAP] = 0.0
        order = np.argsort(returns)
        returns, probs = returns[order], probs[order]
        if np.any(returns <= -1.0):
            raise ValueError(f"returns must lie in (-1, inf), got {returns}")
        if np.any(np.diff(returns) <= 0.0):
            raise ValueError(f"atom values must be distinct, got {returns}")
        if np.any(probs <= 0.0) or np.any(probs > 1.0):
            raise ValueError(f"atom probabilities must lie in (0, 1], got {probs}")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"atom probabilities sum to {probs.sum()!r}, not 1")
        returns.setflags(write=False)
        probs.setflags(write=False)
        self.returns = returns
        self.probs = probs

    @classmethod
    def from_arrays(cls, returns: Sequence[float], probs: Sequence[float]) -> "ConditionalDistribution":
        return cls(zip(returns, probs))

    def __len__(self) -> int:
        return len(self.returns)

    def __repr__(self) -> str:
        pairs = ", ".join(f"({r:g}, {p:g})" for r, p in zip(self.returns, self.probs))
        return f"ConditionalDistribution([{pairs}])"

    @property
    def is_degenerate(self) -> bool:
        """True iff the law is the point mass at zero."""
        return len(self.returns) == 1 and self.returns[0] == 0.0


@dataclass(frozen=True)
class SupportBounds:
    """Infimum and supremum of a conditional return support."""

    a: float
    b: float

    @property
    def degenerate(self) -> bool:
        return self.a == 0.0 or self.b == 0.0


class MarketNode:
    """One realized return history (a path-tree node)."""

    __slots__ = ("time", "index", "path", "returns", "prob", "stock", "dist",
                 "parent_index", "child_start")

    def __init__(self, time, index, path, returns, prob, stock, dist, parent_index, child_start):
        self.time = time                  # n
        self.index = index                # position within level n (lexicographic)
        self.path = path                  # tuple of atom indices from the root
        self.returns = returns            # tuple of realized returns rho_1..rho_n
        self.prob = prob                  # probability of reaching this node
        self.stock = stock                # S_n = S_0 * prod(1 + rho_k)
        self.dist = dist                  # ConditionalDistribution, None at time N
        self.parent_index = parent_index  # index within level n-1, None at root
        self.child_start = child_start    # index of first child within level n+1

    def child_index(self, atom: int) -> int:
        return self.child_start + atom

    def __repr__(self) -> str:
        return f"MarketNode(t={self.time}, i={self.index}, returns={self.returns})"


class MarketTree:
    """Non-recombining scenario tree of returns.

    ``level_dists[n]`` lists the conditional next-return distributions of the
    time-n nodes in lexicographic path order; its lengths must be consistent
    with the branching they induce.
    """

    def __init__(self, s0: float, level_dists: Sequence[Sequence[ConditionalDistribution]]):
        s0 = float(s0)
        if s0 <= 0.0:
            raise ValueError(f"initial stock price must be positive, got {s0}")
        if not level_dists:
            raise ValueError("need at least one level of distributions (horizon >= 1)")
        if len(level_dists[0]) != 1:
            raise ValueError("time 0 must have exactly one node (the root)")
        self.s0 = s0
        self.horizon = len(level_dists)

        root = MarketNode(0, 0, (), (), 1.0, s0, level_dists[0][0], None, 0)
        self.levels: list[list[MarketNode]] = [[root]]
        for n in range(self.horizon):
            dists = level_dists[n]
            parents = self.levels[n]
            if len(dists) != len(parents):
                raise ValueError(
                    f"level {n} has {len(parents)} nodes but {len(dists)} distributions"
                )
            nxt: list[MarketNode] = []
            for parent, dist in zip(parents, dists):
                if dist is not parent.dist:
                    parent.dist = dist
                parent.child_start = len(nxt)
                for atom, (r, p) in enumerate(zip(dist.returns, dist.probs)):
                    nxt.append(MarketNode(
                        time=n + 1,
                        index=len(nxt),
                        path=parent.path + (atom,),
                        returns=parent.returns + (float(r),),
                        prob=parent.prob * float(p),
                        stock=parent.stock * (1.0 + float(r)),
                        dist=None,
                        parent_index=parent.index,
                        child_start=0,
                    ))
            if n + 1 < self.horizon:
                if len(level_dists[n + 1]) != len(nxt):
                    raise ValueError(
                        f"level {n + 1} has {len(nxt)} nodes but "
                        f"{len(level_dists[n + 1])} distributions"
                    )
                for node, dist in zip(nxt, level_dists[n + 1]):
                    node.dist = dist
            self.levels.append(nxt)

    @classmethod
    def iid(cls, s0: float, dist: ConditionalDistribution, horizon: int) -> "MarketTree":
        """Tree with the same return law at every node (product measure)."""
        horizon = int(horizon)
        if horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {horizon}")
        level_dists = []
        count = 1
        for _ in range(horizon):
            level_dists.append([dist] * count)
            count *= len(dist)
        return cls(s0, level_dists)

    def level(self, n: int) -> list[MarketNode]:
        if not 0 <= n <= self.horizon:
            raise ValueError(f"time {n} outside 0..{self.horizon}")
        return self.levels[n]

    def node_at(self, returns: Sequence[float]) -> MarketNode:
        """Node reached by a sequence of realized return values."""
        node = self.levels[0][0]
        for k, r in enumerate(returns):
            if node.dist is None:
                raise TreePathError(f"path longer than horizon {self.horizon}")
            hits = np.nonzero(np.abs(node.dist.returns - float(r)) <= PATH_MATCH_TOL)[0]
            if len(hits) != 1:
                raise TreePathError(f"return {r!r} at step {k + 1} is not an atom of {node!r}")
            node = self.levels[node.time + 1][node.child_index(int(hits[0]))]
        return node

    def node_by_path(self, path: Sequence[int]) -> MarketNode:
        """Node reached by a sequence of atom indices."""
        node = self.levels[0][0]
        for k, atom in enumerate(path):
            if node.dist is None:
                raise TreePathError(f"path longer than horizon {self.horizon}")
            atom = int(atom)
            if not 0 <= atom < len(node.dist):
                raise TreePathError(f"atom index {atom} at step {k + 1} out of range")
            node = self.levels[node.time + 1][node.child_index(atom)]
        return node

    def children(self, node: MarketNode) -> list[MarketNode]:
        if node.dist is None:
            return []
        nxt = self.levels[node.time + 1]
        return [nxt[node.child_start + k] for k in range(len(node.dist))]

    def __repr__(self) -> str:
        sizes = "/".join(str(len(lv)) for lv in self.levels)
        return f"MarketTree(s0={self.s0:g}, horizon={self.horizon}, nodes={sizes})"


def support_bounds(node: MarketNode) -> SupportBounds:
    """Smallest and largest atom of the node's conditional return law."""
    if node.dist is None:
        raise ValueError(f"terminal node {node!r} has no conditional distribution")
    return SupportBounds(float(node.dist.returns[0]), float(node.dist.returns[-1]))


def check_no_arbitrage(tree: MarketTree) -> list[tuple[MarketNode, SupportBounds]]:
    """Support-condition screen: each node needs a < 0 < b or a point mass at 0.

    Returns the list of violating nodes with their bounds; empty means pass.
    """
    violations = []
    for n in range(tree.horizon):
        for node in tree.levels[n]:
            sb = support_bounds(node)
            ok = (sb.a < 0.0 < sb.b) or (sb.a == 0.0 and sb.b == 0.0)
            if not ok:
                violations.append((node, sb))
    return violations


def stock_price(tree: MarketTree, path: Sequence[float]) -> float:
    """S_n = S_0 * prod(1 + rho_k) along a realized return path."""
    return tree.node_at(path).stock


def enumerate_nodes(tree: MarketTree, n: int) -> Iterator[MarketNode]:
    """Time-n nodes in lexicographic path order."""
    return iter(tree.level(n))
