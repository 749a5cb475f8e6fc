"""Game contingent claims and convex loss functions.

A game claim carries two nonnegative payoff processes on the tree: the
seller's cancellation payment ``upper`` (U_n) and the buyer's exercise value
``lower`` (W_n), with U_n >= W_n >= 0 everywhere. The two-sided payoff is
``U_m`` when the seller cancels strictly first, else ``W_n``.
"""

from __future__ import annotations

import warnings
from typing import Sequence

import numpy as np

from .market import MarketTree

CONVEXITY_TOL = 1e-12


class ClaimError(ValueError):
    """Payoff tables violate the claim constraints."""


class LossFunction:
    """Power shortfall loss: zero on nonpositives, (v+)**p / p otherwise.

    p = 1 is the plain positive part. Monotonicity and midpoint convexity
    are spot-checked on a sample grid at construction.
    """

    __slots__ = ("family", "p")

    def __init__(self, p: float = 1.0, family: str = "power"):
        if family != "power":
            raise ValueError(f"unknown loss family {family!r}")
        p = float(p)
        if p < 1.0:
            raise ValueError(f"power loss needs p >= 1, got {p}")
        self.family = family
        self.p = p
        self._check_shape()

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        pos = np.maximum(v, 0.0)
        if self.p == 1.0:
            out = pos
        elif self.p == 2.0:
            out = 0.5 * pos * pos
        else:
            out = pos ** self.p / self.p
        return float(out) if out.ndim == 0 else out

    def derivative_bound(self, v_max: float) -> float:
        """Upper bound on the slope over [0, v_max] (Lipschitz constant)."""
        v_max = max(float(v_max), 0.0)
        return v_max ** (self.p - 1.0) if self.p != 1.0 else 1.0

    def _check_shape(self):
        v = np.linspace(-2.0, 4.0, 121)
        vals = self(v)
        if np.any(vals[v <= 0.0] != 0.0):
            raise ValueError("loss must vanish on nonpositive arguments")
        if np.any(np.diff(vals) < 0.0):
            raise ValueError("loss must be nondecreasing")
        mid = self(0.5 * (v[:-1] + v[1:]))
        if np.any(mid > 0.5 * (vals[:-1] + vals[1:]) + CONVEXITY_TOL):
            raise ValueError("loss failed the midpoint convexity check")

    def __repr__(self) -> str:
        return f"LossFunction(p={self.p:g})"


def loss(loss_fn: LossFunction, v: float):
    """Value of the loss function at v."""
    return loss_fn(v)


class GameClaim:
    """Upper/lower payoff processes aligned to the tree's levels."""

    __slots__ = ("tree", "upper", "lower")

    def __init__(self, tree: MarketTree, upper: Sequence[Sequence[float]],
                 lower: Sequence[Sequence[float]]):
        self.tree = tree
        self.upper = _as_level_arrays(tree, upper, "upper")
        self.lower = _as_level_arrays(tree, lower, "lower")
        bad = validate_claim(self, tree)
        if bad:
            t, i, u, w = bad[0]
            raise ClaimError(
                f"{len(bad)} node(s) violate U >= W >= 0, first at time {t} "
                f"node {i}: U={u:g}, W={w:g}"
            )
        gap = np.max(self.upper[-1] - self.lower[-1])
        if gap > 0.0:
            warnings.warn(
                "claim has U_N > W_N at maturity; the value recursion settles "
                "the terminal layer on the upper payoff, while the raw game "
                "payoff at sigma = tau = N pays the lower one",
                stacklevel=2,
            )

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_tables(cls, tree: MarketTree, upper, lower) -> "GameClaim":
        return cls(tree, upper, lower)

    @classmethod
    def from_lower(cls, tree: MarketTree, lower, penalty: float) -> "GameClaim":
        """U_n = W_n + penalty before maturity, U_N = W_N."""
        penalty = float(penalty)
        if penalty < 0.0:
            raise ClaimError(f"cancellation penalty must be >= 0, got {penalty}")
        lower = _as_level_arrays(tree, lower, "lower")
        upper = [w + penalty for w in lower[:-1]] + [lower[-1].copy()]
        return cls(tree, upper, lower)

    @classmethod
    def vanilla(cls, tree: MarketTree, kind: str, strike: float, penalty: float = 0.0) -> "GameClaim":
        """Call/put on S_n with a constant cancellation penalty before maturity."""
        strike = float(strike)
        lower = []
        for level in tree.levels:
            s = np.array([node.stock for node in level])
            if kind == "call":
                lower.append(np.maximum(s - strike, 0.0))
            elif kind == "put":
                lower.append(np.maximum(strike - s, 0.0))
            else:
                raise ClaimError(f"unknown claim kind {kind!r}")
        return cls.from_lower(tree, lower, penalty)

    # -- accessors ----------------------------------------------------------

    @property
    def max_upper(self) -> float:
        return max(float(u.max()) for u in self.upper)

    def __repr__(self) -> str:
        return f"GameClaim(horizon={self.tree.horizon}, max_upper={self.max_upper:g})"


def _as_level_arrays(tree: MarketTree, tables, name: str) -> list[np.ndarray]:
    if len(tables) != tree.horizon + 1:
        raise ClaimError(
            f"{name} payoff needs {tree.horizon + 1} levels, got {len(tables)}"
        )
    out = []
    for n, row in enumerate(tables):
        arr = np.asarray(row, dtype=float).reshape(-1).copy()
        if len(arr) != len(tree.levels[n]):
            raise ClaimError(
                f"{name} payoff level {n} has {len(arr)} entries for "
                f"{len(tree.levels[n])} nodes"
            )
        out.append(arr)
    return out


def validate_claim(claim: GameClaim, tree: MarketTree) -> list[tuple[int, int, float, float]]:
    """Nodes violating U >= W >= 0, as (time, node index, U, W). Empty = pass."""
    if len(claim.upper) != tree.horizon + 1:
        raise ClaimError("claim and tree have different horizons")
    bad = []
    for n in range(tree.horizon + 1):
        u, w = claim.upper[n], claim.lower[n]
        if len(u) != len(tree.levels[n]) or len(w) != len(tree.levels[n]):
            raise ClaimError(f"claim level {n} does not match the tree topology")
        for i in np.nonzero((w < 0.0) | (u < w))[0]:
            bad.append((n, int(i), float(u[i]), float(w[i])))
    return bad


def game_payoff(claim: GameClaim, m: int, n: int, path: Sequence[float]) -> float:
    """Two-sided payoff H(m, n): U_m if the seller cancels first, else W_n."""
    N = claim.tree.horizon
    if not (0 <= m <= N and 0 <= n <= N):
        raise ValueError(f"stopping times must lie in 0..{N}, got ({m}, {n})")
    if len(path) < max(m, n):
        raise ValueError(f"path of length {len(path)} too short for ({m}, {n})")
    if m < n:
        node = claim.tree.node_at(path[:m])
        return float(claim.upper[m][node.index])
    node = claim.tree.node_at(path[:n])
    return float(claim.lower[n][node.index])
