"""Dynkin stopping game for a fixed hedging strategy.

Given a self-financing wealth process X on the tree, the seller (minimizer)
and buyer (maximizer) play a stopping game on the loss-valued payoff

    Q(m, n) = loss(U_m - X_m) if m < n else loss(W_n - X_n).

The game value solves the backward recursion

    psi_N = loss(U_N - X_N)
    psi_n = min(loss(U_n - X_n), max(loss(W_n - X_n), E[psi_{n+1} | node]))

and equals the shortfall risk of the strategy. Both players' optimal rules
are the first times their own payoff loss meets the game value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .claims import GameClaim, LossFunction
from .market import MarketTree

SELF_FINANCING_TOL = 1e-10
WEALTH_FLOOR = -1e-10
# Stop-rule equality tests run on floating-point psi values.
STOP_EQ_TOL = 1e-12


class StoppingRule:
    """Adapted stop/continue flags per node; every path stops by N."""

    __slots__ = ("stops",)

    def __init__(self, stops: Sequence[np.ndarray]):
        self.stops = [np.asarray(s, dtype=bool).copy() for s in stops]
        if len(self.stops) == 0 or not self.stops[-1].all():
            raise ValueError("stopping rule must stop on every terminal node")

    @classmethod
    def constant(cls, tree: MarketTree, time: int) -> "StoppingRule":
        stops = []
        for n in range(tree.horizon + 1):
            flag = (n >= time) or (n == tree.horizon)
            stops.append(np.full(len(tree.levels[n]), flag, dtype=bool))
        return cls(stops)

    def stop_time(self, tree: MarketTree, path: Sequence[int]) -> int:
        """First stop along a path of atom indices (padded to the horizon)."""
        node = tree.levels[0][0]
        for k in range(tree.horizon + 1):
            if self.stops[k][node.index]:
                return k
            node = tree.levels[k + 1][node.child_index(int(path[k]))]
        return tree.horizon

    def times_by_terminal(self, tree: MarketTree) -> np.ndarray:
        """Stop time per terminal node (one entry per full path)."""
        out = np.full(len(tree.levels[-1]), tree.horizon, dtype=np.int64)
        settled = np.zeros(len(tree.levels[-1]), dtype=bool)
        spans = _terminal_spans(tree)
        for n in range(tree.horizon + 1):
            for i in np.nonzero(self.stops[n])[0]:
                lo, hi = spans[n][i]
                sel = slice(lo, hi)
                out[sel] = np.where(settled[sel], out[sel], n)
                settled[sel] = True
        return out


def _terminal_spans(tree: MarketTree) -> list[np.ndarray]:
    """spans[n][i] = (lo, hi): terminal indices descending from node (n, i)."""
    spans = [None] * (tree.horizon + 1)
    m = len(tree.levels[-1])
    spans[tree.horizon] = np.stack([np.arange(m), np.arange(m) + 1], axis=1)
    for n in range(tree.horizon - 1, -1, -1):
        below = spans[n + 1]
        rows = []
        for node in tree.levels[n]:
            lo = below[node.child_start][0]
            hi = below[node.child_start + len(node.dist) - 1][1]
            rows.append((lo, hi))
        spans[n] = np.asarray(rows, dtype=np.int64)
    return spans


class WealthProcess:
    """Self-financing portfolio value per node, nonnegative (admissible).

    ``positions[n][i]`` is the stock count chosen at time-n node i and held
    over (n, n+1]; values obey X_{n+1} = X_n + gamma * (S_{n+1} - S_n) along
    every edge.
    """

    __slots__ = ("tree", "values", "positions")

    def __init__(self, tree: MarketTree, values: Sequence[np.ndarray],
                 positions: Sequence[np.ndarray] | None = None):
        self.tree = tree
        self.values = [np.asarray(v, dtype=float).copy() for v in values]
        if len(self.values) != tree.horizon + 1:
            raise ValueError("wealth process must cover every level")
        for n, v in enumerate(self.values):
            if len(v) != len(tree.levels[n]):
                raise ValueError(f"wealth level {n} does not match the tree")
            if v.min() < WEALTH_FLOOR:
                raise ValueError(
                    f"wealth {v.min():g} at time {n} violates admissibility"
                )
            np.maximum(v, 0.0, out=v)
        if positions is None:
            self.positions = self._derive_positions()
        else:
            self.positions = [np.asarray(g, dtype=float).copy() for g in positions]
            if len(self.positions) != tree.horizon:
                raise ValueError("need one position layer per trading period")
            self._check_self_financing()

    @classmethod
    def constant(cls, tree: MarketTree, c: float) -> "WealthProcess":
        values = [np.full(len(lv), float(c)) for lv in tree.levels]
        positions = [np.zeros(len(lv)) for lv in tree.levels[:-1]]
        return cls(tree, values, positions)

    @classmethod
    def from_positions(cls, tree: MarketTree, x0: float,
                       positions: Sequence[np.ndarray]) -> "WealthProcess":
        positions = [np.asarray(g, dtype=float) for g in positions]
        values = [np.array([float(x0)])]
        for n in range(tree.horizon):
            cur = values[n]
            nxt = np.empty(len(tree.levels[n + 1]))
            for node in tree.levels[n]:
                z = positions[n][node.index]
                for k, u in enumerate(node.dist.returns):
                    nxt[node.child_index(k)] = cur[node.index] + z * u * node.stock
            values.append(nxt)
        return cls(tree, values, positions)

    def _derive_positions(self) -> list[np.ndarray]:
        positions = []
        for n in range(self.tree.horizon):
            gam = np.zeros(len(self.tree.levels[n]))
            for node in self.tree.levels[n]:
                x = self.values[n][node.index]
                implied = None
                for k, u in enumerate(node.dist.returns):
                    ds = u * node.stock
                    dx = self.values[n + 1][node.child_index(k)] - x
                    if ds == 0.0:
                        if abs(dx) > SELF_FINANCING_TOL:
                            raise ValueError(
                                f"wealth jump {dx:g} across a zero-return edge at time {n}"
                            )
                        continue
                    g = dx / ds
                    if implied is None:
                        implied = g
                    elif abs(g - implied) * abs(ds) > SELF_FINANCING_TOL * (1.0 + abs(x)):
                        raise ValueError(
                            f"values at time {n} node {node.index} admit no single "
                            f"self-financing position ({implied:g} vs {g:g})"
                        )
                gam[node.index] = 0.0 if implied is None else implied
            positions.append(gam)
        return positions

    def _check_self_financing(self):
        for n in range(self.tree.horizon):
            for node in self.tree.levels[n]:
                x = self.values[n][node.index]
                z = self.positions[n][node.index]
                for k, u in enumerate(node.dist.returns):
                    got = self.values[n + 1][node.child_index(k)]
                    want = x + z * u * node.stock
                    if abs(got - want) > SELF_FINANCING_TOL * (1.0 + abs(want)):
                        raise ValueError(
                            f"self-financing identity broken at time {n} node "
                            f"{node.index}: {got:g} != {want:g}"
                        )

    def shifted(self, c: float) -> "WealthProcess":
        """Same positions with all values raised by a constant c >= 0."""
        return WealthProcess(self.tree, [v + float(c) for v in self.values],
                             self.positions)

    def cash_account(self) -> list[np.ndarray]:
        """beta_n = X_n - gamma_n S_n per node (all cash before trading starts)."""
        out = [self.values[0].copy()]
        for n in range(1, self.tree.horizon + 1):
            arr = np.empty(len(self.tree.levels[n]))
            for node in self.tree.levels[n]:
                gam = self.positions[n - 1][node.parent_index]
                arr[node.index] = self.values[n][node.index] - gam * node.stock
            out.append(arr)
        return out


@dataclass
class DynkinSolution:
    psi: list[np.ndarray]       # game value per node
    risk: float                 # psi at the root
    sigma_star: StoppingRule    # seller's first-hitting rule
    tau_star: StoppingRule      # buyer's first-hitting rule


def _loss_layers(claim: GameClaim, loss_fn: LossFunction, wealth: WealthProcess,
                 which: str) -> list[np.ndarray]:
    tables = claim.upper if which == "upper" else claim.lower
    return [loss_fn(t - v) for t, v in zip(tables, wealth.values)]


def q_payoff(claim: GameClaim, loss_fn: LossFunction, wealth: WealthProcess,
             m: int, n: int, path: Sequence[float]) -> float:
    """Loss-valued game payoff Q(m, n) along a realized return path."""
    N = claim.tree.horizon
    if not (0 <= m <= N and 0 <= n <= N):
        raise ValueError(f"stopping times must lie in 0..{N}, got ({m}, {n})")
    if len(path) < max(m, n):
        raise ValueError(f"path of length {len(path)} too short for ({m}, {n})")
    if m < n:
        node = claim.tree.node_at(path[:m])
        return float(loss_fn(claim.upper[m][node.index] - wealth.values[m][node.index]))
    node = claim.tree.node_at(path[:n])
    return float(loss_fn(claim.lower[n][node.index] - wealth.values[n][node.index]))


def _conditional_expectation(tree: MarketTree, n: int, child_vals: np.ndarray) -> np.ndarray:
    out = np.empty(len(tree.levels[n]))
    for node in tree.levels[n]:
        sel = slice(node.child_start, node.child_start + len(node.dist))
        out[node.index] = float(np.dot(node.dist.probs, child_vals[sel]))
    return out


def solve_dynkin(tree: MarketTree, claim: GameClaim, loss_fn: LossFunction,
                 wealth: WealthProcess) -> DynkinSolution:
    """Backward induction for the stopping game at a fixed strategy."""
    upper = _loss_layers(claim, loss_fn, wealth, "upper")
    lower = _loss_layers(claim, loss_fn, wealth, "lower")
    N = tree.horizon

    psi: list[np.ndarray] = [None] * (N + 1)
    psi[N] = upper[N].copy()
    for n in range(N - 1, -1, -1):
        cont = _conditional_expectation(tree, n, psi[n + 1])
        psi[n] = np.minimum(upper[n], np.maximum(lower[n], cont))

    sigma_stops, tau_stops = [], []
    for n in range(N + 1):
        tol = STOP_EQ_TOL * (1.0 + np.abs(psi[n]))
        sigma_stops.append(np.abs(upper[n] - psi[n]) <= tol)
        tau_stops.append(np.abs(lower[n] - psi[n]) <= tol)
    sigma_stops[N][:] = True
    tau_stops[N][:] = True

    return DynkinSolution(
        psi=psi,
        risk=float(psi[0][0]),
        sigma_star=StoppingRule(sigma_stops),
        tau_star=StoppingRule(tau_stops),
    )


def risk_given_sigma(tree: MarketTree, claim: GameClaim, loss_fn: LossFunction,
                     wealth: WealthProcess, sigma: StoppingRule) -> float:
    """sup over buyer rules of E Q(sigma, tau) for a fixed seller rule.

    One-sided backward induction: where sigma has stopped at n < N the buyer
    collects the cancellation loss by waiting (tau > n beats tau = n since
    U >= W); at maturity only the exercise loss remains.
    """
    upper = _loss_layers(claim, loss_fn, wealth, "upper")
    lower = _loss_layers(claim, loss_fn, wealth, "lower")
    N = tree.horizon

    val = lower[N].copy()
    for n in range(N - 1, -1, -1):
        cont = _conditional_expectation(tree, n, val)
        val = np.where(sigma.stops[n],
                       np.maximum(lower[n], upper[n]),
                       np.maximum(lower[n], cont))
    return float(val[0])


def expected_game_loss(tree: MarketTree, claim: GameClaim, loss_fn: LossFunction,
                       wealth: WealthProcess, sigma: StoppingRule,
                       tau: StoppingRule) -> float:
    """Exact E Q(sigma, tau) over path probabilities (no sampling)."""
    upper = _loss_layers(claim, loss_fn, wealth, "upper")
    lower = _loss_layers(claim, loss_fn, wealth, "lower")
    m_times = sigma.times_by_terminal(tree)
    n_times = tau.times_by_terminal(tree)

    total = 0.0
    for leaf in tree.levels[-1]:
        m, n = int(m_times[leaf.index]), int(n_times[leaf.index])
        t = m if m < n else n
        node = tree.node_by_path(leaf.path[:t])
        q = upper[m][node.index] if m < n else lower[n][node.index]
        total += leaf.prob * q
    return float(total)


def random_stopping_rule(tree: MarketTree, rng: np.random.Generator,
                         stop_prob: float = 0.35) -> StoppingRule:
    """Random adapted rule: independent per-node stop flags, forced at N."""
    stops = [rng.random(len(lv)) < stop_prob for lv in tree.levels]
    stops[-1][:] = True
    return StoppingRule(stops)
