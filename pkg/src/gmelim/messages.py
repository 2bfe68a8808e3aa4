"""Message passing on pairwise models and on cluster trees.

Messages live on directed edges ``(i, j)`` of the pairwise graph and are
arrays over the states of ``x_j``.  Every update is rescaled by its total
(sum-product) or maximum (max-product), which keeps values in range without
changing beliefs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import (
    ArityError,
    AssignmentError,
    InconsistentEvidenceError,
    NotATreeError,
    ReparametrizationError,
    StructureError,
)
from .graph import Graph
from .model import Factor, GraphicalModel, combine_all, eliminate
from .semiring import MAX_PRODUCT, SUM_PRODUCT, Semiring, get_semiring
from .treewidth import TreeDecomposition


def _check_semiring(s: Semiring) -> Semiring:
    s = get_semiring(s)
    if s not in (SUM_PRODUCT, MAX_PRODUCT):
        raise ValueError(f"message passing supports sum-product and max-product, not {s.name}")
    return s


@dataclass
class PairwiseView:
    """A model regrouped as one unary table per vertex and one table per edge.

    Several factors over the same scope are multiplied together.  Scalar
    factors are collected into ``log_constant``.  Edge tables are indexed
    ``[x_i, x_j]`` with ``i < j``.
    """

    vertices: list[int]
    cards: dict[int, int]
    unary: dict[int, np.ndarray]
    pair: dict[tuple[int, int], np.ndarray]
    log_constant: float
    graph: Graph

    @property
    def degrees(self) -> dict[int, int]:
        return {v: self.graph.degree(v) for v in self.vertices}

    def edge_table(self, i: int, j: int) -> np.ndarray:
        """Table over ``(x_i, x_j)`` in the requested orientation."""
        return self.pair[(i, j)] if i < j else self.pair[(j, i)].T

    def directed_edges(self) -> list[tuple[int, int]]:
        return sorted([(i, j) for i, j in self.pair] + [(j, i) for i, j in self.pair])


def pairwise_view(model: GraphicalModel) -> PairwiseView:
    vertices = model.free_variables
    cards = {v: model.variables[v].cardinality for v in vertices}
    unary = {v: np.ones(cards[v]) for v in vertices}
    pair = {}
    log_constant = 0.0
    for k, f in enumerate(model.factors):
        lin = f.to_linear().values
        if len(f.scope) > 2:
            raise ArityError(f"factor {k} has arity {len(f.scope)}; only unary and pairwise factors are supported")
        if len(f.scope) == 0:
            with np.errstate(divide="ignore"):
                log_constant += float(np.log(lin))
        elif len(f.scope) == 1:
            unary[f.scope[0]] = unary[f.scope[0]] * lin
        else:
            key = f.scope
            pair[key] = pair[key] * lin if key in pair else np.array(lin)
    graph = Graph(vertices, pair.keys())
    return PairwiseView(vertices, cards, unary, pair, log_constant, graph)


@dataclass
class MessageStore:
    """Messages per directed edge, plus the sweep counter and last residual."""

    messages: dict[tuple[int, int], np.ndarray]
    iterations: int = 0
    residual: float = float("inf")

    @classmethod
    def initial(cls, view: PairwiseView) -> "MessageStore":
        """All messages start as the constant-1 function."""
        return cls({(i, j): np.ones(view.cards[j]) for i, j in view.directed_edges()})

    def __getitem__(self, edge):
        return self.messages[edge]

    def __len__(self):
        return len(self.messages)


@dataclass
class PseudoMarginals:
    """Singleton and pairwise beliefs; pairwise keys are ``(i, j)`` with ``i < j``."""

    singles: dict[int, np.ndarray]
    pairs: dict[tuple[int, int], np.ndarray]
    degrees: dict[int, int]
    messages: Optional[MessageStore] = field(default=None, repr=False)

    def pair(self, i: int, j: int) -> np.ndarray:
        return self.pairs[(i, j)] if i < j else self.pairs[(j, i)].T

    def as_factors(self) -> list[Factor]:
        return [Factor((v,), b) for v, b in sorted(self.singles.items())]


def _normalize(x: np.ndarray, s: Semiring) -> np.ndarray:
    k = x.max() if s is MAX_PRODUCT else x.sum()
    if k <= 0:
        return x
    return x / k


def _incoming(view, store, i, exclude=None) -> np.ndarray:
    out = view.unary[i].copy()
    for k in view.graph.neighbors(i):
        if k != exclude:
            out = out * store.messages[(k, i)]
    return out


def _message(view: PairwiseView, store: MessageStore, i: int, j: int, s: Semiring) -> np.ndarray:
    pre = _incoming(view, store, i, exclude=j)
    table = view.edge_table(i, j) * pre[:, None]
    raw = table.max(axis=0) if s is MAX_PRODUCT else table.sum(axis=0)
    return _normalize(raw, s)


def _beliefs(view: PairwiseView, store: MessageStore, s: Semiring) -> PseudoMarginals:
    singles, pairs = {}, {}
    for i in view.vertices:
        b = _incoming(view, store, i)
        singles[i] = _normalize(b, s) if s is MAX_PRODUCT else _sum_normalize(b, f"vertex {i}")
    for i, j in view.pair:
        b = (view.pair[(i, j)] * _incoming(view, store, i, exclude=j)[:, None]
             * _incoming(view, store, j, exclude=i)[None, :])
        pairs[(i, j)] = _normalize(b, s) if s is MAX_PRODUCT else _sum_normalize(b, f"edge {(i, j)}")
    return PseudoMarginals(singles, pairs, view.degrees, store)


def _sum_normalize(b: np.ndarray, where: str) -> np.ndarray:
    total = b.sum()
    if not total > 0:
        raise InconsistentEvidenceError(f"belief at {where} vanishes everywhere")
    return b / total


def tree_message_pass(model: GraphicalModel, semiring: Semiring = SUM_PRODUCT,
                      root: Optional[int] = None) -> tuple[MessageStore, PseudoMarginals]:
    """Exact two-pass message passing on a tree (or forest) shaped pairwise model.

    Each component is processed leaves-to-root and then root-to-leaves; the
    component containing ``root`` is rooted there, the others at their
    smallest vertex.
    """
    s = _check_semiring(semiring)
    view = pairwise_view(model)
    if not view.graph.is_forest():
        raise NotATreeError("the pairwise graph contains a cycle")
    store = MessageStore.initial(view)
    for comp in view.graph.connected_components():
        r = root if root is not None and root in comp else comp[0]
        order, parent = [r], {r: None}
        for u in order:
            for w in sorted(view.graph.neighbors(u)):
                if w not in parent:
                    parent[w] = u
                    order.append(w)
        for u in reversed(order[1:]):
            store.messages[(u, parent[u])] = _message(view, store, u, parent[u], s)
        for u in order[1:]:
            store.messages[(parent[u], u)] = _message(view, store, parent[u], u, s)
    store.iterations = 1
    store.residual = 0.0
    return store, _beliefs(view, store, s)


class LBPResult(NamedTuple):
    beliefs: PseudoMarginals
    converged: bool
    iterations: int


def loopy_bp(model: GraphicalModel, semiring: Semiring = SUM_PRODUCT, schedule: str = "sequential",
             damping: float = 0.0, tol: float = 1e-8, max_iter: int = 1000) -> LBPResult:
    """Iterate message updates until the largest change in a sweep drops below ``tol``.

    ``schedule`` is ``"sequential"`` (directed edges in lexicographic order,
    each update seeing the latest messages) or ``"synchronous"`` (every
    update computed from the previous sweep).  Damping mixes
    ``damping * old + (1 - damping) * update``.  Beliefs are returned even
    when the run does not converge.
    """
    s = _check_semiring(semiring)
    if schedule not in ("sequential", "synchronous"):
        raise ValueError(f"unknown schedule {schedule!r}")
    if not 0.0 <= damping < 1.0:
        raise ValueError(f"damping must lie in [0, 1), got {damping}")
    view = pairwise_view(model)
    store = MessageStore.initial(view)
    edges = view.directed_edges()
    converged = not edges
    if converged:
        store.residual = 0.0
    while not converged and store.iterations < max_iter:
        source = MessageStore(dict(store.messages)) if schedule == "synchronous" else store
        residual = 0.0
        for i, j in edges:
            new = _message(view, source, i, j, s)
            old = store.messages[(i, j)]
            if damping:
                new = _normalize(damping * old + (1.0 - damping) * new, s)
            residual = max(residual, float(np.max(np.abs(new - old))))
            store.messages[(i, j)] = new
        store.iterations += 1
        store.residual = residual
        converged = residual < tol
    return LBPResult(_beliefs(view, store, s), converged, store.iterations)


def _assign(model: GraphicalModel, td: TreeDecomposition) -> dict[int, list[int]]:
    cluster_sets = [set(c) for c in td.clusters]
    assigned = {c: [] for c in range(len(td.clusters))}
    for k, f in enumerate(model.factors):
        holders = [c for c, cs in enumerate(cluster_sets) if set(f.scope) <= cs]
        if not holders:
            raise AssignmentError(f"factor {k} with scope {f.scope} fits in no cluster")
        assigned[holders[0]].append(k)
    return assigned


def calibrate_junction_tree(model: GraphicalModel, td: TreeDecomposition,
                            semiring: Semiring = SUM_PRODUCT) -> list[Factor]:
    """Two-pass cluster message passing; returns one normalized belief per cluster.

    Messages are factors over separators.  For sum-product each belief is the
    exact marginal over its (unobserved) cluster variables; for max-product
    it is the max-marginal scaled to a maximum of one.
    """
    s = _check_semiring(semiring)
    assigned = _assign(model, td)
    cards = model.cards
    observed = set(model.evidence)
    scopes = [tuple(v for v in c if v not in observed) for c in td.clusters]
    potentials = []
    for c, scope in enumerate(scopes):
        base = Factor.identity(scope, [cards[v] for v in scope], s)
        potentials.append(combine_all([base] + [model.factors[k].to_linear() for k in assigned[c]], s))
    nbrs = td.neighbors()
    msgs: dict[tuple[int, int], Factor] = {}

    def send(a: int, b: int):
        parts = [potentials[a]] + [msgs[(e, a)] for e in nbrs[a] if e != b]
        local = combine_all(parts, s)
        keep = set(scopes[b])
        out = eliminate(local, [v for v in scopes[a] if v not in keep], s)
        msgs[(a, b)] = Factor(out.scope, _normalize(np.asarray(out.values), s))

    seen = set()
    for r in range(len(td.clusters)):
        if r in seen:
            continue
        order, parent = td.rooted(r)
        seen.update(order)
        for c in reversed(order[1:]):
            send(c, parent[c])
        for c in order[1:]:
            send(parent[c], c)
    beliefs = []
    for c in range(len(td.clusters)):
        b = combine_all([potentials[c]] + [msgs[(e, c)] for e in nbrs[c]], s)
        values = np.asarray(b.values)
        if s is SUM_PRODUCT:
            values = _sum_normalize(values, f"cluster {c}")
        else:
            values = _normalize(values, s)
        beliefs.append(Factor(b.scope, values))
    return beliefs


def _inverse_power(p: np.ndarray, power: int) -> np.ndarray:
    """p ** -power with the convention that the inverse of zero is zero."""
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = p[nz] ** (-power)
    return out


def reparametrize_tree(model: GraphicalModel) -> GraphicalModel:
    """Equivalent tree model whose pairwise factors are the exact pairwise marginals.

    Unary factors become ``p_i ** -(d_i - 1)`` (omitted when ``d_i = 1``), so
    the product of all factors equals the joint distribution.
    """
    view = pairwise_view(model)
    _, q = tree_message_pass(model, SUM_PRODUCT)
    factors = []
    for (i, j), p in sorted(q.pairs.items()):
        for axis, v in ((1, i), (0, j)):
            if np.any((q.singles[v] == 0) & (p.sum(axis=axis) > 0)):
                raise ReparametrizationError(f"vertex {v}: zero marginal under nonzero pairwise mass")
        factors.append(Factor((i, j), p))
    for v in view.vertices:
        d = view.graph.degree(v)
        if d != 1:
            factors.append(Factor((v,), _inverse_power(q.singles[v], d - 1)))
    return GraphicalModel(model.variables, factors, model.kind, model.evidence)


class CalibrationResult(NamedTuple):
    ok: bool
    vertex: Optional[int] = None
    reason: str = ""

    def __bool__(self):
        return self.ok


def check_calibration(model: GraphicalModel, semiring: Semiring = SUM_PRODUCT,
                      tol: float = 1e-9) -> CalibrationResult:
    """True iff, at every vertex, all incident pairwise factors eliminate to the same unary table."""
    s = _check_semiring(semiring)
    view = pairwise_view(model)
    for i in view.vertices:
        reference, ref_edge = None, None
        for j in sorted(view.graph.neighbors(i)):
            t = view.edge_table(i, j)
            m = t.max(axis=1) if s is MAX_PRODUCT else t.sum(axis=1)
            if reference is None:
                reference, ref_edge = m, j
            elif not np.allclose(m, reference, rtol=tol, atol=tol * max(1.0, float(np.abs(reference).max()))):
                return CalibrationResult(False, i, f"vertex {i}: edges to {ref_edge} and {j} disagree")
    return CalibrationResult(True)


def _plogq(p: np.ndarray, q: np.ndarray) -> float:
    """sum p * ln q with 0 * ln(anything) = 0."""
    mask = p > 0
    with np.errstate(divide="ignore"):
        return float(np.sum(p[mask] * np.log(q[mask])))


def bethe_free_energy(model: GraphicalModel, q: PseudoMarginals) -> float:
    """Average energy minus the degree-weighted Bethe entropy of the beliefs.

    Scalar factors contribute ``-ln`` of their value.  On a tree with exact
    marginals the result equals ``-ln Z``.
    """
    view = pairwise_view(model)
    if set(q.singles) != set(view.vertices) or set(q.pairs) != set(view.pair):
        raise StructureError("beliefs do not match the vertices and edges of the model")
    energy = -view.log_constant
    entropy_term = 0.0
    for v in view.vertices:
        b = np.asarray(q.singles[v])
        if b.shape != (view.cards[v],):
            raise StructureError(f"belief for vertex {v} has shape {b.shape}, expected {(view.cards[v],)}")
        energy -= _plogq(b, view.unary[v])
        entropy_term -= (view.graph.degree(v) - 1) * _plogq(b, b)
    for e, t in view.pair.items():
        b = np.asarray(q.pairs[e])
        if b.shape != t.shape:
            raise StructureError(f"belief for edge {e} has shape {b.shape}, expected {t.shape}")
        energy -= _plogq(b, t)
        entropy_term += _plogq(b, b)
    return energy + entropy_term
