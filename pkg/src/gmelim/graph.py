"""A small undirected simple graph keyed by integer vertex ids."""

from __future__ import annotations

from itertools import combinations
from typing import Iterable


class Graph:
    """Undirected simple graph with adjacency sets.

    Vertices are arbitrary hashable, orderable ids (integers throughout the
    package).  Self-loops are ignored.
    """

    def __init__(self, vertices: Iterable = (), edges: Iterable = ()):
        self.adj = {v: set() for v in vertices}
        for u, v in edges:
            self.add_edge(u, v)

    @classmethod
    def complete(cls, vertices) -> "Graph":
        vertices = list(vertices)
        return cls(vertices, combinations(vertices, 2))

    @classmethod
    def grid(cls, rows: int, cols: int) -> "Graph":
        """r x c lattice with vertex id ``r * cols + c``."""
        g = cls(range(rows * cols))
        for r in range(rows):
            for c in range(cols):
                v = r * cols + c
                if c + 1 < cols:
                    g.add_edge(v, v + 1)
                if r + 1 < rows:
                    g.add_edge(v, v + cols)
        return g

    def add_vertex(self, v):
        self.adj.setdefault(v, set())

    def add_edge(self, u, v):
        if u == v:
            self.add_vertex(u)
            return
        self.adj.setdefault(u, set()).add(v)
        self.adj.setdefault(v, set()).add(u)

    def has_edge(self, u, v) -> bool:
        return v in self.adj.get(u, ())

    @property
    def vertices(self) -> list:
        return sorted(self.adj)

    def edges(self) -> list[tuple]:
        return sorted((u, v) for u in self.adj for v in self.adj[u] if u < v)

    def neighbors(self, v) -> set:
        return self.adj[v]

    def degree(self, v) -> int:
        return len(self.adj[v])

    def copy(self) -> "Graph":
        g = Graph()
        g.adj = {v: set(n) for v, n in self.adj.items()}
        return g

    def subgraph(self, vertices) -> "Graph":
        keep = set(vertices)
        g = Graph(sorted(keep))
        for u, v in self.edges():
            if u in keep and v in keep:
                g.add_edge(u, v)
        return g

    def is_clique(self, vertices) -> bool:
        return all(self.has_edge(u, v) for u, v in combinations(vertices, 2))

    def connected_components(self) -> list[list]:
        seen, comps = set(), []
        for s in self.vertices:
            if s in seen:
                continue
            comp, stack = [], [s]
            seen.add(s)
            while stack:
                u = stack.pop()
                comp.append(u)
                for w in self.adj[u]:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            comps.append(sorted(comp))
        return comps

    def is_forest(self) -> bool:
        n_edges = sum(len(n) for n in self.adj.values()) // 2
        return n_edges == len(self.adj) - len(self.connected_components())

    def __len__(self):
        return len(self.adj)

    def __eq__(self, other):
        return isinstance(other, Graph) and self.adj == other.adj

    def __repr__(self):
        return f"Graph(n={len(self)}, edges={self.edges()})"
