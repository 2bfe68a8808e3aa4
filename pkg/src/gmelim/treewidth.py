"""Elimination orderings, the elimination game, and tree decompositions.

Width convention: the width of an ordering is the largest neighbourhood
``|N_i|`` met while eliminating, and the width of a tree decomposition is
``max |C_k| - 1``.  With this convention a tree has width 1 and the two
notions agree (the minimum over orderings equals the minimum over
decompositions).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from itertools import combinations
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import OrderingError, StructureError
from .graph import Graph

log = logging.getLogger(__name__)

CRITERIA = ("min-degree", "min-fill", "mcs")
TIE_BREAKS = ("max-degree", "random", "lowest-id")


@dataclass(frozen=True)
class EliminationOrdering:
    """Vertex permutation; position 0 is eliminated first."""

    order: tuple

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(self.order))
        if len(set(self.order)) != len(self.order):
            raise OrderingError(f"ordering repeats a vertex: {self.order}")

    def __iter__(self):
        return iter(self.order)

    def __len__(self):
        return len(self.order)

    def __getitem__(self, k):
        return self.order[k]

    def positions(self) -> dict:
        return {v: k for k, v in enumerate(self.order)}


def as_ordering(order) -> EliminationOrdering:
    return order if isinstance(order, EliminationOrdering) else EliminationOrdering(tuple(order))


@dataclass(frozen=True)
class EliminationReport:
    order: tuple
    width: int
    fill_edges: list
    per_vertex_degree: list
    induced_edges: list

    def induced_graph(self) -> Graph:
        return Graph(self.order, self.induced_edges)


def _check_permutation(g: Graph, order: Sequence) -> None:
    if len(order) != len(g) or set(order) != set(g.adj):
        missing = sorted(set(g.adj) - set(order))
        extra = sorted(set(order) - set(g.adj))
        raise OrderingError(f"ordering is not a permutation of the vertices (missing {missing}, unknown {extra})")
    if len(set(order)) != len(order):
        raise OrderingError("ordering repeats a vertex")


def elimination_game(g: Graph, order) -> EliminationReport:
    """Simulate elimination along ``order``; record |N_i|, fill-in and the induced graph."""
    order = tuple(as_ordering(order))
    _check_permutation(g, order)
    work = g.copy()
    fill, degrees = [], []
    induced = set(g.edges())
    for v in order:
        nbrs = sorted(work.adj[v])
        degrees.append(len(nbrs))
        for a, b in combinations(nbrs, 2):
            if not work.has_edge(a, b):
                work.add_edge(a, b)
                e = (a, b) if a < b else (b, a)
                fill.append(e)
                induced.add(e)
        for u in nbrs:
            work.adj[u].discard(v)
        del work.adj[v]
    return EliminationReport(order, max(degrees, default=0), fill, degrees, sorted(induced))


def _fill_count(work: Graph, v) -> int:
    nbrs = list(work.adj[v])
    missing = 0
    for k, a in enumerate(nbrs):
        adj_a = work.adj[a]
        for b in nbrs[k + 1 :]:
            if b not in adj_a:
                missing += 1
    return missing


def _pick(candidates, tie_break, work, rng):
    if len(candidates) == 1:
        return candidates[0]
    if tie_break == "random":
        return candidates[int(rng.integers(len(candidates)))]
    if tie_break == "max-degree":
        best = max(work.degree(c) for c in candidates)
        return min(c for c in candidates if work.degree(c) == best)
    return min(candidates)


def _greedy_elimination(g: Graph, criterion: str, tie_break: str, rng) -> list:
    work = g.copy()
    if criterion == "min-fill":
        score = {v: _fill_count(work, v) for v in work.adj}
    else:
        score = {v: work.degree(v) for v in work.adj}
    order = []
    while work.adj:
        best = min(score.values())
        candidates = sorted(v for v, s in score.items() if s == best)
        v = _pick(candidates, tie_break, work, rng)
        order.append(v)
        nbrs = list(work.adj[v])
        for a, b in combinations(nbrs, 2):
            work.add_edge(a, b)
        for u in nbrs:
            work.adj[u].discard(v)
        del work.adj[v]
        del score[v]
        if criterion == "min-fill":
            touched = set(nbrs)
            for u in nbrs:
                touched |= work.adj[u]
            for u in touched:
                score[u] = _fill_count(work, u)
        else:
            for u in nbrs:
                score[u] = work.degree(u)
    return order


def _mcs(g: Graph, tie_break: str, rng) -> list:
    """Maximum cardinality search; returns the elimination order (reverse visit order)."""
    numbered = {v: 0 for v in g.adj}
    visit = []
    unvisited = set(g.adj)
    while unvisited:
        best = max(numbered[v] for v in unvisited)
        candidates = sorted(v for v in unvisited if numbered[v] == best)
        v = _pick(candidates, tie_break, g, rng)
        visit.append(v)
        unvisited.remove(v)
        for u in g.adj[v]:
            if u in unvisited:
                numbered[u] += 1
    return visit[::-1]


def greedy_order(g: Graph, criterion: str = "min-fill", tie_break: Optional[str] = None,
                 seed: Optional[int] = None) -> tuple[EliminationOrdering, EliminationReport]:
    """Greedy elimination ordering by min-degree, min-fill or MCS.

    ``tie_break`` defaults to ``max-degree`` for min-fill and ``lowest-id``
    otherwise; ``random`` draws uniformly among tied vertices using ``seed``.
    """
    criterion = _norm_criterion(criterion)
    if tie_break is None:
        tie_break = "max-degree" if criterion == "min-fill" else "lowest-id"
    if tie_break not in TIE_BREAKS:
        raise ValueError(f"unknown tie-break {tie_break!r}")
    rng = np.random.default_rng(seed)
    if criterion == "mcs":
        order = _mcs(g, tie_break, rng)
    else:
        order = _greedy_elimination(g, criterion, tie_break, rng)
    return EliminationOrdering(order), elimination_game(g, order)


def _norm_criterion(name: str) -> str:
    aliases = {"minfill": "min-fill", "mindegree": "min-degree", "min_fill": "min-fill",
               "min_degree": "min-degree", "maxcard": "mcs"}
    name = aliases.get(name, name)
    if name not in CRITERIA:
        raise ValueError(f"unknown ordering criterion {name!r}; expected one of {CRITERIA}")
    return name


class SearchResult(NamedTuple):
    ordering: EliminationOrdering
    report: EliminationReport
    iterations: int
    stopped_by: str


def randomized_iterative_minfill(g: Graph, max_iters: int = 100, time_budget: Optional[float] = 10.0,
                                 seed: int = 0) -> SearchResult:
    """Best of repeated min-fill runs with random tie-breaking.

    Restart 0 uses the deterministic max-degree tie-break; restart ``k``
    draws from ``default_rng([seed, k])`` so each restart is reproducible on
    its own.  Stops at ``max_iters`` or once ``time_budget`` seconds elapse,
    whichever comes first; ``stopped_by`` records which.  ``time_budget=None``
    removes the time limit, which makes the result depend on the seed only.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    start = time.perf_counter()
    best_order, best_report = greedy_order(g, "min-fill", "max-degree")
    iterations, stopped_by = 1, "iterations"
    for k in range(1, max_iters):
        if time_budget is not None and time.perf_counter() - start > time_budget:
            stopped_by = "time"
            break
        rng = np.random.default_rng([seed, k])
        order = _greedy_elimination(g, "min-fill", "random", rng)
        report = elimination_game(g, order)
        iterations += 1
        if (report.width, len(report.fill_edges)) < (best_report.width, len(best_report.fill_edges)):
            best_order, best_report = EliminationOrdering(order), report
    log.debug("randomized min-fill: %d iterations, width %d, stopped by %s",
              iterations, best_report.width, stopped_by)
    return SearchResult(best_order, best_report, iterations, stopped_by)


def is_chordal(g: Graph) -> tuple[bool, Optional[EliminationOrdering]]:
    """Chordality via MCS: chordal iff the MCS ordering adds no fill-in edge."""
    order, report = greedy_order(g, "mcs", "lowest-id")
    if report.fill_edges:
        return False, None
    return True, order


@dataclass(frozen=True)
class TreeDecomposition:
    clusters: tuple
    tree_edges: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(tuple(sorted(c)) for c in self.clusters))
        object.__setattr__(self, "tree_edges", tuple(tuple(sorted(e)) for e in self.tree_edges))

    @property
    def separators(self) -> list[tuple]:
        return [tuple(sorted(set(self.clusters[i]) & set(self.clusters[j]))) for i, j in self.tree_edges]

    @property
    def width(self) -> int:
        return max((len(c) for c in self.clusters), default=0) - 1

    def neighbors(self) -> dict[int, list[int]]:
        adj = {k: [] for k in range(len(self.clusters))}
        for i, j in self.tree_edges:
            adj[i].append(j)
            adj[j].append(i)
        return {k: sorted(v) for k, v in adj.items()}

    def rooted(self, root: int = 0) -> tuple[list[int], dict[int, Optional[int]]]:
        """Breadth-first cluster order from ``root`` and each cluster's parent."""
        adj = self.neighbors()
        if not 0 <= root < len(self.clusters):
            raise StructureError(f"root {root} is not a cluster index")
        parent = {root: None}
        order, queue = [], [root]
        while queue:
            c = queue.pop(0)
            order.append(c)
            for d in adj[c]:
                if d not in parent:
                    parent[d] = c
                    queue.append(d)
        return order, parent


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    reason: Optional[str] = None

    def __bool__(self):
        return self.ok


def _maximum_spanning_tree(clusters: list[tuple]) -> list[tuple]:
    sets = [set(c) for c in clusters]
    candidates = sorted(
        ((len(sets[i] & sets[j]), i, j) for i, j in combinations(range(len(sets)), 2)),
        key=lambda t: (-t[0], t[1], t[2]),
    )
    parent = list(range(len(sets)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges = []
    for _, i, j in candidates:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            edges.append((i, j))
            if len(edges) == len(sets) - 1:
                break
    return sorted(edges)


def decomposition_from_ordering(g: Graph, order) -> TreeDecomposition:
    """Clusters are the maximal cliques of the induced graph, joined by a maximum spanning tree."""
    report = elimination_game(g, order)
    induced = report.induced_graph()
    pos = {v: k for k, v in enumerate(report.order)}
    candidates = []
    for v in report.order:
        later = {u for u in induced.adj[v] if pos[u] > pos[v]}
        candidates.append(frozenset(later | {v}))
    clusters = []
    for k, c in enumerate(candidates):
        if any(c < d for d in candidates) or c in candidates[:k]:
            continue
        clusters.append(tuple(sorted(c)))
    return TreeDecomposition(tuple(clusters), tuple(_maximum_spanning_tree(clusters)))


def _check_indices(td: TreeDecomposition) -> None:
    n = len(td.clusters)
    for e in td.tree_edges:
        if len(e) != 2 or not all(0 <= k < n for k in e) or e[0] == e[1]:
            raise StructureError(f"tree edge {e} does not join two distinct clusters among {n}")


def _tree_problem(td: TreeDecomposition) -> Optional[str]:
    n = len(td.clusters)
    if n == 0:
        return None
    if len(set(td.tree_edges)) != len(td.tree_edges):
        return "tree: duplicate tree edge"
    if len(td.tree_edges) != n - 1:
        return f"tree: {len(td.tree_edges)} edges for {n} clusters"
    order, _ = td.rooted(0)
    if len(order) != n:
        return "tree: cluster graph is disconnected"
    return None


def _running_intersection_problem(td: TreeDecomposition) -> Optional[str]:
    adj = td.neighbors()
    for v in sorted({v for c in td.clusters for v in c}):
        holders = {k for k, c in enumerate(td.clusters) if v in c}
        start = min(holders)
        seen, stack = {start}, [start]
        while stack:
            c = stack.pop()
            for d in adj[c]:
                if d in holders and d not in seen:
                    seen.add(d)
                    stack.append(d)
        if seen != holders:
            return f"running intersection: clusters holding vertex {v} are not connected"
    return None


def validate_decomposition(g: Graph, td: TreeDecomposition) -> ValidationResult:
    """Check tree-ness, vertex coverage, edge coverage and running intersection."""
    _check_indices(td)
    problem = _tree_problem(td)
    if problem:
        return ValidationResult(False, problem)
    covered = {v for c in td.clusters for v in c}
    missing = sorted(set(g.adj) - covered)
    if missing:
        return ValidationResult(False, f"coverage: vertices {missing} are in no cluster")
    cluster_sets = [set(c) for c in td.clusters]
    for u, v in g.edges():
        if not any(u in c and v in c for c in cluster_sets):
            return ValidationResult(False, f"edge coverage: edge ({u}, {v}) is in no cluster")
    problem = _running_intersection_problem(td)
    if problem:
        return ValidationResult(False, problem)
    return ValidationResult(True)


def ordering_from_decomposition(td: TreeDecomposition, root: int = 0) -> EliminationOrdering:
    """Eliminate clusters leaves-to-root, emitting ``C_i minus C_parent`` in ascending order."""
    _check_indices(td)
    problem = _tree_problem(td) or _running_intersection_problem(td)
    if problem:
        raise StructureError(f"invalid decomposition: {problem}")
    order, parent = td.rooted(root)
    out = []
    for c in reversed(order):
        p = parent[c]
        own = set(td.clusters[c]) - (set(td.clusters[p]) if p is not None else set())
        out.extend(sorted(own))
    return EliminationOrdering(out)


def write_decomposition(td: TreeDecomposition) -> str:
    """Plain-text form: cluster count, one line per cluster, then one line per tree edge."""
    lines = [str(len(td.clusters))]
    lines += [" ".join(str(v) for v in c) for c in td.clusters]
    lines += [f"{i} {j}" for i, j in td.tree_edges]
    return "\n".join(lines) + "\n"


def parse_decomposition(text: str) -> TreeDecomposition:
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not lines:
        return TreeDecomposition(())
    try:
        n = int(lines[0][0])
        clusters = [tuple(int(t) for t in ln) for ln in lines[1 : n + 1]]
        edges = [tuple(int(t) for t in ln) for ln in lines[n + 1 :]]
    except ValueError as exc:
        raise StructureError(f"malformed decomposition text: {exc}") from None
    if len(clusters) != n or any(len(e) != 2 for e in edges):
        raise StructureError("malformed decomposition text")
    return TreeDecomposition(tuple(clusters), tuple(edges))
