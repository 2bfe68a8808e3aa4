import itertools

import pytest

from gmelim.errors import OrderingError, StructureError
from gmelim.generators import random_graph, random_tree_edges
from gmelim.graph import Graph
from gmelim.treewidth import (
    EliminationOrdering,
    TreeDecomposition,
    decomposition_from_ordering,
    elimination_game,
    greedy_order,
    is_chordal,
    ordering_from_decomposition,
    parse_decomposition,
    randomized_iterative_minfill,
    validate_decomposition,
    write_decomposition,
)


def oracle_width(g: Graph, order) -> int:
    """Independent elimination game: width = max |later neighbours| in the filled graph."""
    adj = {v: set(g.neighbors(v)) for v in g.vertices}
    width = 0
    for v in order:
        nb = adj.pop(v)
        width = max(width, len(nb))
        for u in nb:
            adj[u] |= nb - {u}
            adj[u].discard(v)
    return width


class TestEliminationGame:
    def test_example_orderings(self, fig_graph):
        rep = elimination_game(fig_graph, (7, 6, 5, 4, 3, 2, 1))
        assert rep.width == 2
        assert rep.fill_edges == [(2, 3)]
        rep = elimination_game(fig_graph, (7, 5, 3, 1, 6, 4, 2))
        assert rep.width == 3
        assert len(rep.fill_edges) == 5

    def test_not_a_permutation(self, fig_graph):
        with pytest.raises(OrderingError):
            elimination_game(fig_graph, (1, 2, 3))
        with pytest.raises(OrderingError):
            EliminationOrdering((1, 1))

    def test_matches_oracle_on_random_graphs(self, rng):
        for _ in range(30):
            g = random_graph(rng, int(rng.integers(2, 10)), 0.4)
            order = rng.permutation(g.vertices).tolist()
            assert elimination_game(g, order).width == oracle_width(g, order)

    def test_induced_graph_is_chordal(self, rng):
        for _ in range(20):
            g = random_graph(rng, 9, 0.35)
            rep = elimination_game(g, rng.permutation(9).tolist())
            assert is_chordal(rep.induced_graph())[0]

    def test_exhaustive_optimum_is_two(self, fig_graph):
        best = min(oracle_width(fig_graph, p) for p in itertools.permutations(fig_graph.vertices))
        assert best == 2


class TestHeuristics:
    @pytest.mark.parametrize("criterion", ["min-fill", "min-degree", "mcs"])
    def test_trees_have_width_one(self, rng, criterion):
        for n in (5, 17, 50):
            g = Graph(range(n), random_tree_edges(rng, n))
            _, rep = greedy_order(g, criterion)
            assert rep.width == 1

    def test_min_fill_on_example(self, fig_graph):
        _, rep = greedy_order(fig_graph, "min-fill")
        assert rep.width == 2

    def test_aliases_and_unknown(self, fig_graph):
        assert greedy_order(fig_graph, "minfill")[1].width == 2
        with pytest.raises(ValueError):
            greedy_order(fig_graph, "best")

    @pytest.mark.parametrize("r,c", [(r, c) for c in range(2, 6) for r in range(1, c + 1)])
    def test_grid_widths(self, r, c):
        res = randomized_iterative_minfill(Graph.grid(r, c), max_iters=30, time_budget=None, seed=1)
        assert res.report.width == min(r, c)

    def test_randomized_is_reproducible(self):
        g = Graph.grid(4, 5)
        a = randomized_iterative_minfill(g, 20, None, seed=7)
        b = randomized_iterative_minfill(g, 20, None, seed=7)
        assert list(a.ordering) == list(b.ordering)
        assert a.stopped_by == "iterations" and a.iterations == 20

    def test_randomized_never_worse_than_min_fill(self, rng):
        for _ in range(10):
            g = random_graph(rng, 12, 0.3)
            base = greedy_order(g, "min-fill")[1].width
            assert randomized_iterative_minfill(g, 10, None, seed=0).report.width <= base

    def test_time_budget_stop(self):
        res = randomized_iterative_minfill(Graph.grid(5, 5), max_iters=10**6, time_budget=0.0)
        assert res.stopped_by == "time"


class TestChordality:
    def test_example_is_not_chordal(self, fig_graph):
        assert is_chordal(fig_graph) == (False, None)

    def test_chordal_graph_gives_perfect_ordering(self, fig_graph):
        induced = elimination_game(fig_graph, (7, 6, 5, 4, 3, 2, 1)).induced_graph()
        ok, order = is_chordal(induced)
        assert ok
        assert elimination_game(induced, order).fill_edges == []


class TestDecomposition:
    def test_example_clusters(self, fig_graph):
        td = decomposition_from_ordering(fig_graph, (7, 6, 5, 4, 3, 2, 1))
        assert sorted(td.clusters) == [(1, 2, 3), (2, 3, 4), (3, 4, 5), (5, 6), (5, 7)]
        assert td.width == 2
        assert validate_decomposition(fig_graph, td)

    def test_other_chord_gives_mirror_clusters(self, fig_graph):
        td = decomposition_from_ordering(fig_graph, (7, 6, 5, 2, 3, 1, 4))
        assert sorted(td.clusters) == [(1, 2, 4), (1, 3, 4), (3, 4, 5), (5, 6), (5, 7)]

    def test_running_intersection_violation(self, fig_graph):
        good = decomposition_from_ordering(fig_graph, (7, 6, 5, 2, 3, 1, 4))
        idx = {c: k for k, c in enumerate(good.clusters)}
        c1, c2, c3 = idx[(1, 2, 4)], idx[(1, 3, 4)], idx[(3, 4, 5)]
        c5 = idx[(5, 7)]
        edges = [e for e in good.tree_edges if set(e) != {c2, c3}] + [tuple(sorted((c1, c5)))]
        bad = TreeDecomposition(good.clusters, tuple(edges))
        res = validate_decomposition(fig_graph, bad)
        assert not res and "running intersection" in res.reason

    def test_coverage_violations(self, fig_graph):
        td = TreeDecomposition(((1, 2, 3), (3, 4, 5)), ((0, 1),))
        res = validate_decomposition(fig_graph, td)
        assert not res
        td = TreeDecomposition(((1, 2), (1, 3), (2, 4), (3, 4, 5), (5, 6), (5, 7)),
                               ((0, 1), (0, 2), (1, 3), (3, 4), (3, 5)))
        assert not validate_decomposition(fig_graph, td)

    def test_not_a_tree(self, fig_graph):
        td = TreeDecomposition(((1, 2, 3), (2, 3, 4), (3, 4, 5), (5, 6), (5, 7)), ((0, 1), (1, 2)))
        res = validate_decomposition(fig_graph, td)
        assert not res and "tree" in res.reason

    def test_malformed_indices(self, fig_graph):
        with pytest.raises(StructureError):
            validate_decomposition(fig_graph, TreeDecomposition(((1, 2),), ((0, 3),)))

    def test_random_pairs_are_valid(self, rng):
        for _ in range(200):
            g = random_graph(rng, int(rng.integers(1, 10)), float(rng.uniform(0.1, 0.7)))
            td = decomposition_from_ordering(g, rng.permutation(g.vertices).tolist())
            res = validate_decomposition(g, td)
            assert res, res.reason

    def test_ordering_from_decomposition_round_trip(self, rng):
        for _ in range(50):
            g = random_graph(rng, 8, 0.4)
            order, rep = greedy_order(g, "min-fill")
            td = decomposition_from_ordering(g, order)
            back = ordering_from_decomposition(td)
            assert sorted(back) == g.vertices
            assert elimination_game(g, back).width <= td.width

    def test_text_round_trip(self, fig_graph):
        td = decomposition_from_ordering(fig_graph, (7, 6, 5, 4, 3, 2, 1))
        assert parse_decomposition(write_decomposition(td)) == td
