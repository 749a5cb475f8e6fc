"""Backward induction over (node, wealth) for the minimal shortfall risk.

For every node and wealth level y the recursion computes

    J_n(node, y) = inf over admissible positions z of
                   min(A_n(y), max(B_n(y), E[J_{n+1}(child, y + z u kappa)]))

with A/B the upper/lower payoff losses, together with the smallest-minimizer
policy. The admissible positions are those keeping next-period wealth
nonnegative under every support point of the node's return law.

Wealth is discretized on a uniform grid; interior layers are read back by
piecewise-linear interpolation while the terminal layer is evaluated in
closed form. The risk at the initial capital is produced by one extra
minimization at exactly that wealth, so the reported value carries no
root-layer interpolation error.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._kernels import scan_minimize
from .claims import GameClaim, LossFunction, validate_claim
from .dynkin import WealthProcess, StoppingRule, solve_dynkin
from .market import MarketNode, MarketTree, check_no_arbitrage, support_bounds

DEFAULT_WEALTH_POINTS = 2000   # M: grid intervals
DEFAULT_SCAN_POINTS = 2000     # K: position-scan intervals
DEFAULT_REFINE_ROUNDS = 30     # R
REFINE_POINTS = 16             # points per refinement bracket
CHILD_WEALTH_TOL = -1e-12


class AdmissibilityError(ValueError):
    """A position drives next-period wealth negative beyond tolerance."""


class WealthGrid:
    """Uniform wealth grid {0, y_max/M, ..., y_max} (M + 1 points)."""

    __slots__ = ("y_max", "resolution", "points", "step")

    def __init__(self, y_max: float, resolution: int):
        y_max = float(y_max)
        resolution = int(resolution)
        if y_max <= 0.0:
            raise ValueError(f"y_max must be positive, got {y_max}")
        if resolution < 1:
            raise ValueError(f"resolution must be >= 1, got {resolution}")
        self.y_max = y_max
        self.resolution = resolution
        self.points = np.linspace(0.0, y_max, resolution + 1)
        self.points.setflags(write=False)
        self.step = y_max / resolution

    @classmethod
    def for_problem(cls, claim: GameClaim, x: float,
                    resolution: int = DEFAULT_WEALTH_POINTS,
                    y_max: float | None = None) -> "WealthGrid":
        """Default span max(2x, 1.1 * max U): the zero-shortfall region fits."""
        needed = max(float(x), claim.max_upper)
        if y_max is None:
            y_max = max(2.0 * float(x), 1.1 * claim.max_upper)
        if y_max < needed:
            raise ValueError(
                f"y_max={y_max:g} cannot represent capital {x:g} and "
                f"max upper payoff {claim.max_upper:g}"
            )
        return cls(y_max, resolution)

    def __repr__(self) -> str:
        return f"WealthGrid(y_max={self.y_max:g}, resolution={self.resolution})"


@dataclass(frozen=True)
class AdmissibleInterval:
    """Positions keeping next-period wealth nonnegative at the node."""

    lo: float
    hi: float
    degenerate: bool = False

    def clip(self, z: float) -> float:
        if self.degenerate:
            return float(z)
        return float(min(max(z, self.lo), self.hi))

    def contains(self, z: float, tol: float = 1e-12) -> bool:
        if self.degenerate:
            return True
        slack = tol * (1.0 + max(abs(self.lo), abs(self.hi)))
        return self.lo - slack <= z <= self.hi + slack


def admissible_interval(node: MarketNode, y: float) -> AdmissibleInterval:
    """[-y/(kappa b), -y/(kappa a)], or unconstrained at a point-mass node."""
    y = float(y)
    if y < 0.0:
        raise ValueError(f"wealth must be nonnegative, got {y}")
    sb = support_bounds(node)
    if sb.degenerate:
        return AdmissibleInterval(-np.inf, np.inf, degenerate=True)
    lo = (-y / (node.stock * sb.b)) + 0.0
    hi = (-y / (node.stock * sb.a)) + 0.0
    return AdmissibleInterval(lo, hi)


class ValueField:
    """J values per (time, node, wealth gridpoint).

    Interior layers are piecewise linear in wealth (clamped to the grid span;
    J is nonincreasing, so holding the top value past y_max is conservative).
    The terminal layer is the closed-form payoff loss.
    """

    __slots__ = ("tree", "claim", "loss_fn", "grid", "values")

    def __init__(self, tree: MarketTree, claim: GameClaim, loss_fn: LossFunction,
                 grid: WealthGrid, values: list[np.ndarray]):
        self.tree = tree
        self.claim = claim
        self.loss_fn = loss_fn
        self.grid = grid
        self.values = values

    def value_at(self, n: int, node_index: int, y):
        if n == self.tree.horizon:
            return self.loss_fn(self.claim.upper[n][node_index] - np.asarray(y, dtype=float))
        return np.interp(y, self.grid.points, self.values[n][node_index])


class HedgePolicy:
    """Chosen position per (time < N, node, wealth gridpoint).

    Off-grid wealth reads the nearest-lower gridpoint and re-projects into
    the admissible interval at the actual wealth. The exact-capital position
    from the final root minimization is kept alongside the grid.
    """

    __slots__ = ("tree", "grid", "positions", "root_x", "root_position")

    def __init__(self, tree: MarketTree, grid: WealthGrid, positions: list[np.ndarray],
                 root_x: float, root_position: float):
        self.tree = tree
        self.grid = grid
        self.positions = positions
        self.root_x = root_x
        self.root_position = root_position

    def position(self, node: MarketNode, y: float) -> float:
        interval = admissible_interval(node, y)
        if interval.degenerate:
            return 0.0
        if node.time == 0 and y == self.root_x:
            return interval.clip(self.root_position)
        i = int(y / self.grid.step)
        if i > self.grid.resolution:
            i = self.grid.resolution
        return interval.clip(float(self.positions[node.time][node.index, i]))


@dataclass
class SolveResult:
    field: ValueField
    policy: HedgePolicy
    risk: float                # J_0 at the initial capital
    root_position: float       # smallest-minimizer position at the root
    x: float
    scan_points: int
    refine_rounds: int


# -- single-point operations ------------------------------------------------

def continuation_integral(node: MarketNode, y: float, z: float,
                          next_layer: ValueField) -> float:
    """Exact expectation of next-layer values over the node's return law."""
    tree = next_layer.tree
    total = 0.0
    for k, (u, p) in enumerate(zip(node.dist.returns, node.dist.probs)):
        q = y + z * u * node.stock
        if q < CHILD_WEALTH_TOL:
            raise AdmissibilityError(
                f"position {z:g} at time {node.time} node {node.index} drives "
                f"wealth to {q:g}"
            )
        q = max(q, 0.0)
        child = tree.levels[node.time + 1][node.child_index(k)]
        total += p * float(next_layer.value_at(node.time + 1, child.index, q))
    return total


def local_value(node: MarketNode, y: float, z: float, next_layer: ValueField) -> float:
    """I_n(y, z): continuation clamped between the two payoff losses."""
    claim, loss_fn = next_layer.claim, next_layer.loss_fn
    if node.time == next_layer.tree.horizon:
        return float(loss_fn(claim.upper[node.time][node.index] - y))
    a = float(loss_fn(claim.upper[node.time][node.index] - y))
    b = float(loss_fn(claim.lower[node.time][node.index] - y))
    return min(a, max(b, continuation_integral(node, y, z, next_layer)))


def _kernel_args(node: MarketNode, next_layer: ValueField):
    tree = next_layer.tree
    grid = next_layer.grid
    mu = node.dist.returns * node.stock
    pw = node.dist.probs
    terminal = node.time + 1 == tree.horizon
    cs, width = node.child_start, len(node.dist)
    if terminal:
        u_next = next_layer.claim.upper[tree.horizon][cs:cs + width].copy()
        j_next = np.zeros((width, 1))
    else:
        u_next = np.zeros(width)
        j_next = np.ascontiguousarray(next_layer.values[node.time + 1][cs:cs + width])
    inv_h = 1.0 / grid.step
    last = grid.resolution
    return mu, pw, terminal, u_next, j_next, inv_h, last


def _minimize_node(node: MarketNode, Y: np.ndarray, A: np.ndarray, B: np.ndarray,
                   next_layer: ValueField, scan_points: int, refine_rounds: int):
    """Vectorized-over-wealth smallest-minimizer search at one node."""
    sb = support_bounds(node)
    if sb.degenerate:
        child = node.child_index(0)
        cont = np.asarray(next_layer.value_at(node.time + 1, child, Y), dtype=float)
        j = np.minimum(A, np.maximum(B, cont))
        return j, np.zeros_like(j)
    mu, pw, terminal, u_next, j_next, inv_h, last = _kernel_args(node, next_layer)
    out_j = np.empty(len(Y))
    out_lam = np.empty(len(Y))
    scan_minimize(np.ascontiguousarray(Y, dtype=float), A, B,
                  node.stock * sb.b, node.stock * sb.a,
                  mu, pw, terminal, u_next, j_next, inv_h, last,
                  next_layer.loss_fn.p, scan_points, REFINE_POINTS, refine_rounds,
                  out_j, out_lam)
    return out_j, out_lam


def minimize_over_interval(node: MarketNode, y: float, next_layer: ValueField,
                           scan_points: int = DEFAULT_SCAN_POINTS,
                           refine_rounds: int = DEFAULT_REFINE_ROUNDS) -> tuple[float, float]:
    """(J value, chosen position) at one wealth level."""
    claim, loss_fn = next_layer.claim, next_layer.loss_fn
    Y = np.array([float(y)])
    A = np.atleast_1d(np.asarray(loss_fn(claim.upper[node.time][node.index] - Y), dtype=float))
    B = np.atleast_1d(np.asarray(loss_fn(claim.lower[node.time][node.index] - Y), dtype=float))
    j, lam = _minimize_node(node, Y, A, B, next_layer, scan_points, refine_rounds)
    return float(j[0]), float(lam[0])


# -- full solve ---------------------------------------------------------------

def _validate_problem(tree: MarketTree, claim: GameClaim, x: float):
    bad = check_no_arbitrage(tree)
    if bad:
        nodes = ", ".join(f"t={n.time} i={n.index} (a={sb.a:g}, b={sb.b:g})"
                          for n, sb in bad[:5])
        raise ValueError(f"market admits arbitrage at {len(bad)} node(s): {nodes}")
    bad = validate_claim(claim, tree)
    if bad:
        raise ValueError(f"claim violates U >= W >= 0 at {len(bad)} node(s)")
    if x <= 0.0:
        raise ValueError(f"initial capital must be positive, got {x}")


def _solve_field(tree: MarketTree, claim: GameClaim, loss_fn: LossFunction,
                 grid: WealthGrid, scan_points: int, refine_rounds: int):
    """Fill the value field and grid policy for every layer below the horizon."""
    N = tree.horizon
    Y = grid.points
    values: list[np.ndarray] = [None] * (N + 1)
    positions: list[np.ndarray] = [None] * N
    values[N] = np.stack([loss_fn(u - Y) for u in claim.upper[N]])
    field = ValueField(tree, claim, loss_fn, grid, values)
    for n in range(N - 1, -1, -1):
        nodes = tree.levels[n]
        values[n] = np.empty((len(nodes), len(Y)))
        positions[n] = np.empty((len(nodes), len(Y)))
        for node in nodes:
            A = loss_fn(claim.upper[n][node.index] - Y)
            B = loss_fn(claim.lower[n][node.index] - Y)
            j, lam = _minimize_node(node, Y, A, B, field, scan_points, refine_rounds)
            values[n][node.index] = j
            positions[n][node.index] = lam
    return field, positions


def _root_minimize(field: ValueField, x: float, scan_points: int, refine_rounds: int):
    root = field.tree.levels[0][0]
    return minimize_over_interval(root, x, field, scan_points, refine_rounds)


def solve(tree: MarketTree, claim: GameClaim, loss_fn: LossFunction, x: float,
          grid: WealthGrid | None = None,
          scan_points: int = DEFAULT_SCAN_POINTS,
          refine_rounds: int = DEFAULT_REFINE_ROUNDS) -> SolveResult:
    """Full backward induction plus one exact minimization at capital x."""
    x = float(x)
    _validate_problem(tree, claim, x)
    if grid is None:
        grid = WealthGrid.for_problem(claim, x)
    elif grid.y_max < max(x, claim.max_upper):
        raise ValueError("grid span too small for the capital or payoff")
    field, positions = _solve_field(tree, claim, loss_fn, grid, scan_points, refine_rounds)
    risk, lam0 = _root_minimize(field, x, scan_points, refine_rounds)
    policy = HedgePolicy(tree, grid, positions, x, lam0)
    return SolveResult(field=field, policy=policy, risk=risk, root_position=lam0,
                       x=x, scan_points=scan_points, refine_rounds=refine_rounds)


def price_sweep(tree: MarketTree, claim: GameClaim, loss_fn: LossFunction,
                capitals: Sequence[float],
                grid: WealthGrid | None = None,
                scan_points: int = DEFAULT_SCAN_POINTS,
                refine_rounds: int = DEFAULT_REFINE_ROUNDS) -> np.ndarray:
    """J_0 at several capitals off one shared field (grid spans the largest)."""
    capitals = np.asarray(capitals, dtype=float)
    if np.any(capitals <= 0.0):
        raise ValueError("capitals must be positive")
    _validate_problem(tree, claim, float(capitals.max()))
    if grid is None:
        grid = WealthGrid.for_problem(claim, float(capitals.max()))
    field, _ = _solve_field(tree, claim, loss_fn, grid, scan_points, refine_rounds)
    return np.array([_root_minimize(field, float(c), scan_points, refine_rounds)[0]
                     for c in capitals])


# -- strategy extraction ------------------------------------------------------

@dataclass
class StrategyPath:
    """Realized hedge along one path: X_n, the position held over (n, n+1],
    and the implied cash account beta_{n+1} = X_{n+1} - gamma_{n+1} S_{n+1}."""

    wealth: np.ndarray
    position: np.ndarray
    cash: np.ndarray


def extract_strategy(policy: HedgePolicy, tree: MarketTree, x: float,
                     path: Sequence[int]) -> StrategyPath:
    """Forward recursion X_{n+1} = X_n + position * (S_{n+1} - S_n)."""
    node = tree.levels[0][0]
    wealth = [float(x)]
    position = []
    cash = []
    for atom in path:
        z = policy.position(node, wealth[-1])
        atom = int(atom)
        u = float(node.dist.returns[atom])
        nxt = tree.levels[node.time + 1][node.child_index(atom)]
        xn = wealth[-1] + z * u * node.stock
        if xn < -1e-10:
            raise AdmissibilityError(
                f"policy produced wealth {xn:g} at time {node.time + 1}"
            )
        xn = max(xn, 0.0)
        wealth.append(xn)
        position.append(z)
        cash.append(xn - z * nxt.stock)
        node = nxt
    return StrategyPath(np.array(wealth), np.array(position), np.array(cash))


def policy_wealth(policy: HedgePolicy, tree: MarketTree, x: float) -> WealthProcess:
    """Wealth process induced by the policy on the whole tree."""
    values = [np.array([float(x)])]
    positions = []
    for n in range(tree.horizon):
        cur = values[n]
        gam = np.empty(len(tree.levels[n]))
        nxt = np.empty(len(tree.levels[n + 1]))
        for node in tree.levels[n]:
            z = policy.position(node, float(cur[node.index]))
            gam[node.index] = z
            for k, u in enumerate(node.dist.returns):
                child_x = cur[node.index] + z * u * node.stock
                nxt[node.child_index(k)] = max(child_x, 0.0)
                if child_x < -1e-10:
                    raise AdmissibilityError(
                        f"policy produced wealth {child_x:g} at time {n + 1}"
                    )
        values.append(nxt)
        positions.append(gam)
    return WealthProcess(tree, values, positions)


def optimal_stopping_rule(tree: MarketTree, claim: GameClaim, loss_fn: LossFunction,
                          policy: HedgePolicy, x: float) -> StoppingRule:
    """Seller's rule: first time the cancellation loss meets the game value
    along the extracted strategy."""
    wealth = policy_wealth(policy, tree, x)
    return solve_dynkin(tree, claim, loss_fn, wealth).sigma_star


# -- export -------------------------------------------------------------------

def export_csv(result: SolveResult, path: str) -> int:
    """Value field and policy as CSV, written atomically. Returns row count."""
    tree = result.field.tree
    grid = result.field.grid
    rows = 0
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "node", "y", "J", "lambda"])
            for n in range(tree.horizon + 1):
                vals = result.field.values[n]
                lams = result.policy.positions[n] if n < tree.horizon else None
                for i in range(vals.shape[0]):
                    for g, y in enumerate(grid.points):
                        lam = "" if lams is None else f"{lams[i, g]:.12g}"
                        writer.writerow([n, i, f"{y:.12g}", f"{vals[i, g]:.12g}", lam])
                        rows += 1
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return rows
