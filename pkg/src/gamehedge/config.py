"""Problem-specification files: JSON in, model objects out.

Sections: ``market`` (s0, horizon, nodes as per-node atom lists or an i.i.d.
shorthand ``{"atoms": [...], "repeat": N}``), ``claim`` (builder or explicit
tables), ``loss`` (family and exponent) and ``solver`` (M, K, R, y_max).
Structural problems raise ConfigError; value-level violations (bad
probabilities, arbitrage, U < W) surface as domain errors from the model
constructors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .claims import GameClaim, LossFunction
from .market import ConditionalDistribution, MarketTree
from .shortfall import DEFAULT_REFINE_ROUNDS, DEFAULT_SCAN_POINTS, DEFAULT_WEALTH_POINTS


class ConfigError(ValueError):
    """The configuration document is structurally invalid."""


@dataclass
class Problem:
    tree: MarketTree
    claim: GameClaim
    loss_fn: LossFunction
    wealth_points: int        # M
    scan_points: int          # K
    refine_rounds: int        # R
    y_max: float | None


def _need(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing key {key!r} in {where}")
    return section[key]


def _atom_list(raw, where: str) -> ConditionalDistribution:
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"{where} must be a non-empty list of [return, prob] pairs")
    pairs = []
    for item in raw:
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise ConfigError(f"{where} entries must be [return, prob] pairs")
        pairs.append((float(item[0]), float(item[1])))
    return ConditionalDistribution(pairs)


def _build_tree(section: dict) -> MarketTree:
    s0 = float(_need(section, "s0", "market"))
    nodes = _need(section, "nodes", "market")
    if isinstance(nodes, dict):
        dist = _atom_list(_need(nodes, "atoms", "market.nodes"), "market.nodes.atoms")
        repeat = nodes.get("repeat", section.get("horizon"))
        if repeat is None:
            raise ConfigError("i.i.d. market needs 'repeat' or 'horizon'")
        horizon = int(repeat)
        declared = section.get("horizon")
        if declared is not None and int(declared) != horizon:
            raise ConfigError(f"horizon {declared} conflicts with repeat {horizon}")
        return MarketTree.iid(s0, dist, horizon)
    if not isinstance(nodes, list):
        raise ConfigError("market.nodes must be a list of levels or an i.i.d. dict")
    level_dists = []
    for n, level in enumerate(nodes):
        if not isinstance(level, list):
            raise ConfigError(f"market.nodes[{n}] must list one atom table per node")
        level_dists.append([_atom_list(node, f"market.nodes[{n}][{i}]")
                            for i, node in enumerate(level)])
    declared = section.get("horizon")
    if declared is not None and int(declared) != len(level_dists):
        raise ConfigError(f"horizon {declared} conflicts with {len(level_dists)} node levels")
    return MarketTree(s0, level_dists)


def _build_claim(section: dict, tree: MarketTree) -> GameClaim:
    builder = section.get("builder")
    tables = section.get("tables")
    if (builder is None) == (tables is None):
        raise ConfigError("claim needs exactly one of 'builder' or 'tables'")
    if tables is not None:
        return GameClaim.from_tables(tree, _need(tables, "upper", "claim.tables"),
                                     _need(tables, "lower", "claim.tables"))
    kind = _need(builder, "kind", "claim.builder")
    penalty = float(builder.get("penalty", 0.0))
    if kind in ("call", "put"):
        return GameClaim.vanilla(tree, kind, _need(builder, "strike", "claim.builder"),
                                 penalty)
    if kind == "penalty":
        return GameClaim.from_lower(tree, _need(builder, "lower", "claim.builder"),
                                    penalty)
    raise ConfigError(f"unknown claim builder kind {kind!r}")


def _build_loss(section: dict | None) -> LossFunction:
    if section is None:
        return LossFunction(p=1.0)
    family = section.get("family", "power")
    return LossFunction(p=float(section.get("p", 1.0)), family=family)


def parse_config(doc: dict) -> Problem:
    if not isinstance(doc, dict):
        raise ConfigError("configuration root must be an object")
    tree = _build_tree(_need(doc, "market", "configuration"))
    claim = _build_claim(_need(doc, "claim", "configuration"), tree)
    loss_fn = _build_loss(doc.get("loss"))
    solver = doc.get("solver", {})
    if not isinstance(solver, dict):
        raise ConfigError("solver section must be an object")
    y_max = solver.get("y_max")
    return Problem(
        tree=tree,
        claim=claim,
        loss_fn=loss_fn,
        wealth_points=int(solver.get("M", DEFAULT_WEALTH_POINTS)),
        scan_points=int(solver.get("K", DEFAULT_SCAN_POINTS)),
        refine_rounds=int(solver.get("R", DEFAULT_REFINE_ROUNDS)),
        y_max=None if y_max is None else float(y_max),
    )


def load_config(path: str) -> Problem:
    with open(path, "r") as fh:
        doc = json.load(fh)
    return parse_config(doc)
