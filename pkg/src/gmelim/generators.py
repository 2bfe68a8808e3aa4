"""Random and structured model generators for tests, benchmarks and demos."""

from __future__ import annotations

import numpy as np

from .graph import Graph
from .model import Factor, GraphicalModel

# the 7-vertex example graph used throughout the documentation (1-based ids)
EXAMPLE_GRAPH_EDGES = ((1, 2), (1, 3), (2, 4), (3, 4), (3, 5), (4, 5), (5, 6), (5, 7))


def example_graph() -> Graph:
    return Graph(range(1, 8), EXAMPLE_GRAPH_EDGES)


def _table(rng: np.random.Generator, shape, low: float = 0.1) -> np.ndarray:
    return rng.uniform(low, 1.0, size=shape)


def random_model(rng: np.random.Generator, n: int, max_card: int = 4, max_arity: int = 3,
                 n_factors: int | None = None, zero_prob: float = 0.0) -> GraphicalModel:
    """Random Markov network with cardinalities in 2..max_card and scopes up to ``max_arity``.

    Every variable gets a unary factor so that it appears in some scope.
    With ``zero_prob > 0`` table entries are zeroed independently.
    """
    cards = rng.integers(2, max_card + 1, size=n)
    if n_factors is None:
        n_factors = int(rng.integers(n // 2, n + 2))
    factors = []
    for v in range(n):
        factors.append(Factor((v,), _table(rng, (cards[v],))))
    for _ in range(n_factors):
        arity = int(rng.integers(1, min(max_arity, n) + 1))
        scope = sorted(rng.choice(n, size=arity, replace=False).tolist())
        values = _table(rng, tuple(cards[v] for v in scope))
        if zero_prob:
            values = np.where(rng.random(values.shape) < zero_prob, 0.0, values)
        factors.append(Factor(scope, values))
    return GraphicalModel.from_cards(cards.tolist(), factors)


def random_tree_edges(rng: np.random.Generator, n: int) -> list[tuple[int, int]]:
    """Uniform-attachment random tree on vertices 0..n-1."""
    return [tuple(sorted((int(rng.integers(0, v)), v))) for v in range(1, n)]


def random_tree_model(rng: np.random.Generator, n: int, max_card: int = 4, unary: bool = True,
                      edges=None) -> GraphicalModel:
    """Pairwise model on a random tree (or on ``edges`` if given)."""
    cards = rng.integers(2, max_card + 1, size=n)
    edges = random_tree_edges(rng, n) if edges is None else edges
    factors = []
    if unary:
        factors += [Factor((v,), _table(rng, (cards[v],))) for v in range(n)]
    factors += [Factor((i, j), _table(rng, (cards[i], cards[j]))) for i, j in edges]
    return GraphicalModel.from_cards(cards.tolist(), factors)


def pairwise_model(rng: np.random.Generator, graph: Graph, card: int = 2) -> GraphicalModel:
    """Random unary and pairwise tables over the edges of ``graph`` (vertices 0..n-1)."""
    n = len(graph)
    factors = [Factor((v,), _table(rng, (card,))) for v in range(n)]
    factors += [Factor((i, j), _table(rng, (card, card))) for i, j in graph.edges()]
    return GraphicalModel.from_cards([card] * n, factors)


def graph_model(graph: Graph, card: int = 2) -> GraphicalModel:
    """Uniform pairwise model whose primal graph is ``graph`` (vertex ids shifted to 0-based)."""
    vertices = graph.vertices
    pos = {v: k for k, v in enumerate(vertices)}
    factors = [Factor(sorted((pos[i], pos[j])), np.ones((card, card))) for i, j in graph.edges()]
    factors += [Factor((pos[v],), np.ones(card)) for v in vertices if not graph.neighbors(v)]
    return GraphicalModel.from_cards([card] * len(vertices), factors)


def random_graph(rng: np.random.Generator, n: int, p: float) -> Graph:
    g = Graph(range(n))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                g.add_edge(i, j)
    return g
