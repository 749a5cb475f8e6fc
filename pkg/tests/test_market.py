import numpy as np
import pytest

from gamehedge import (ConditionalDistribution, MarketTree, TreePathError,
                       check_no_arbitrage, enumerate_nodes, stock_price,
                       support_bounds)

from conftest import random_tree


def binomial_tree(n=2):
    dist = ConditionalDistribution([(-0.5, 0.5), (0.5, 0.5)])
    return MarketTree.iid(1.0, dist, n)


class TestConditionalDistribution:
    def test_sorted_and_validated(self):
        d = ConditionalDistribution([(0.5, 0.5), (-0.5, 0.5)])
        assert list(d.returns) == [-0.5, 0.5]

    def test_rejects_bad_probabilities(self):
        with pytest.raises(ValueError):
            ConditionalDistribution([(-0.5, 0.6), (0.5, 0.6)])
        with pytest.raises(ValueError):
            ConditionalDistribution([(-0.5, 0.0), (0.5, 1.0)])

    def test_rejects_returns_at_or_below_minus_one(self):
        with pytest.raises(ValueError):
            ConditionalDistribution([(-1.0, 0.5), (0.5, 0.5)])

    def test_rejects_duplicate_atoms(self):
        with pytest.raises(ValueError):
            ConditionalDistribution([(0.2, 0.5), (0.2, 0.5)])

    def test_tiny_atoms_snap_to_zero(self):
        d = ConditionalDistribution([(-1e-16, 1.0)])
        assert d.returns[0] == 0.0
        assert d.is_degenerate


class TestSupportBounds:
    def test_point_mass_at_zero(self):
        tree = MarketTree.iid(1.0, ConditionalDistribution([(0.0, 1.0)]), 1)
        sb = support_bounds(tree.levels[0][0])
        assert (sb.a, sb.b) == (0.0, 0.0)
        assert sb.degenerate

    def test_symmetric_binomial(self):
        sb = support_bounds(binomial_tree(1).levels[0][0])
        assert (sb.a, sb.b) == (-0.5, 0.5)

    def test_min_max_of_atom_set(self):
        d = ConditionalDistribution([(-0.1, 0.2), (0.0, 0.3), (0.2, 0.5)])
        tree = MarketTree(1.0, [[d]])
        sb = support_bounds(tree.levels[0][0])
        assert (sb.a, sb.b) == (-0.1, 0.2)


class TestNoArbitrage:
    def test_straddling_node_passes(self):
        assert check_no_arbitrage(binomial_tree(2)) == []

    def test_positive_support_fails(self):
        d = ConditionalDistribution([(0.1, 0.5), (0.3, 0.5)])
        tree = MarketTree(1.0, [[d]])
        report = check_no_arbitrage(tree)
        assert len(report) == 1
        node, sb = report[0]
        assert node.time == 0 and (sb.a, sb.b) == (0.1, 0.3)

    def test_degenerate_node_passes(self):
        tree = MarketTree.iid(1.0, ConditionalDistribution([(0.0, 1.0)]), 2)
        assert check_no_arbitrage(tree) == []

    def test_negative_support_fails(self):
        d = ConditionalDistribution([(-0.3, 0.5), (-0.1, 0.5)])
        tree = MarketTree(1.0, [[d]])
        assert len(check_no_arbitrage(tree)) == 1

    def test_bounds_straddle_after_pass(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            tree = random_tree(rng, allow_degenerate=True)
            assert check_no_arbitrage(tree) == []
            for n in range(tree.horizon):
                for node in tree.levels[n]:
                    sb = support_bounds(node)
                    assert sb.a <= 0.0 <= sb.b


class TestStockPrice:
    def test_empty_product(self):
        assert stock_price(binomial_tree(1), ()) == 1.0

    def test_single_factor(self):
        assert stock_price(binomial_tree(1), (0.5,)) == 1.5

    def test_two_factors(self):
        d = ConditionalDistribution([(-0.1, 0.5), (0.1, 0.5)])
        tree = MarketTree.iid(100.0, d, 2)
        assert stock_price(tree, (0.1, -0.1)) == pytest.approx(99.0, abs=1e-12)

    def test_unknown_return_raises(self):
        with pytest.raises(TreePathError):
            stock_price(binomial_tree(1), (0.25,))

    def test_strictly_positive_everywhere(self):
        rng = np.random.default_rng(5)
        tree = random_tree(rng, allow_degenerate=True)
        for lv in tree.levels:
            for node in lv:
                assert node.stock > 0.0


class TestEnumerateNodes:
    def test_root_level(self):
        nodes = list(enumerate_nodes(binomial_tree(2), 0))
        assert len(nodes) == 1 and nodes[0].path == ()

    def test_binomial_depth_two(self):
        nodes = list(enumerate_nodes(binomial_tree(2), 2))
        assert [n.path for n in nodes] == [(0, 0), (0, 1), (1, 0), (1, 1)]

    def test_trinomial_depth_two(self):
        d = ConditionalDistribution([(-0.3, 0.3), (0.0, 0.3), (0.4, 0.4)])
        tree = MarketTree.iid(1.0, d, 2)
        nodes = list(enumerate_nodes(tree, 2))
        assert len(nodes) == 9
        assert [n.path for n in nodes] == sorted(n.path for n in nodes)


class TestTreeInvariants:
    def test_level_probabilities_sum_to_one(self):
        rng = np.random.default_rng(23)
        for _ in range(10):
            tree = random_tree(rng, allow_degenerate=True)
            for n in range(tree.horizon + 1):
                total = sum(node.prob for node in tree.levels[n])
                assert total == pytest.approx(1.0, abs=1e-10)

    def test_every_node_has_one_parent(self):
        rng = np.random.default_rng(29)
        tree = random_tree(rng)
        for n in range(1, tree.horizon + 1):
            for node in tree.levels[n]:
                parent = tree.levels[n - 1][node.parent_index]
                assert parent.child_start <= node.index < parent.child_start + len(parent.dist)

    def test_mismatched_level_sizes_rejected(self):
        d = ConditionalDistribution([(-0.5, 0.5), (0.5, 0.5)])
        with pytest.raises(ValueError):
            MarketTree(1.0, [[d], [d]])  # level 1 needs 2 nodes

    def test_bad_s0_rejected(self):
        d = ConditionalDistribution([(-0.5, 0.5), (0.5, 0.5)])
        with pytest.raises(ValueError):
            MarketTree(0.0, [[d]])
