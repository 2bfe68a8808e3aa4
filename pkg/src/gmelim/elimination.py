"""Exact inference by sequential and block-by-block variable elimination."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import (
    AssignmentError,
    CapacityError,
    InconsistentEvidenceError,
    OrderingError,
    QueryError,
)
from .model import (
    Factor,
    GraphicalModel,
    as_evidence,
    combine,
    combine_all,
    condition,
    eliminate,
    eliminate_var,
    primal_graph,
)
from .semiring import MAX_PRODUCT, SUM_PRODUCT, Semiring, get_semiring
from .treewidth import EliminationOrdering, TreeDecomposition, greedy_order

DEFAULT_CELL_CAP = 10**8
LOG_DOMAIN_THRESHOLD = 30


@dataclass
class EliminationStep:
    variable: int
    absorbed: tuple[int, ...]
    new_factor: Factor
    combined: Optional[Factor] = None


@dataclass
class EliminationTrace:
    """Per-step record of an elimination run.

    Factor indices below ``len(model.factors)`` are the original factors;
    step ``k`` creates factor ``len(model.factors) + k``.
    """

    ordering: EliminationOrdering
    steps: list[EliminationStep] = field(default_factory=list)


def default_ordering(model: GraphicalModel) -> EliminationOrdering:
    order, _ = greedy_order(primal_graph(model), "min-fill")
    return order


def _resolve_order(model: GraphicalModel, order, eliminated: set) -> list[int]:
    if order is None:
        order = default_ordering(model)
    order = [int(v) for v in order]
    if len(set(order)) != len(order):
        raise OrderingError("ordering repeats a variable")
    unknown = [v for v in order if not 0 <= v < model.n]
    if unknown:
        raise OrderingError(f"ordering mentions unknown variables {unknown}")
    missing = sorted(eliminated - set(order))
    if missing:
        raise OrderingError(f"ordering misses variables {missing}")
    return [v for v in order if v in eliminated]


def variable_elimination(model: GraphicalModel, semiring: Semiring = SUM_PRODUCT, order=None,
                         keep: Iterable[int] = (), evidence=None, *, log_domain: Optional[bool] = None,
                         retain: bool = False, cap: int = DEFAULT_CELL_CAP) -> tuple[Factor, EliminationTrace]:
    """Eliminate every free variable outside ``keep`` and return the factor over ``keep``.

    ``order`` may list all variables; kept and observed ones are skipped.  With
    ``retain=True`` each step stores its pre-elimination combined factor,
    which mode backtracking needs.  ``log_domain`` defaults to True for
    sum-product on models with more than 30 free variables.
    """
    s = get_semiring(semiring)
    ev = as_evidence(evidence)
    if ev.assignments:
        model = condition(model, ev)
    keep = set(int(v) for v in keep)
    free = set(model.free_variables)
    bad = keep - free
    if bad:
        raise QueryError(f"kept variables {sorted(bad)} are observed or unknown")
    to_eliminate = free - keep
    order = _resolve_order(model, order, to_eliminate)
    if s.log is None:
        # additive carriers (max-plus, min-plus) live in log-flagged tables
        native = s.one == 0.0
        if log_domain is not None and log_domain != native:
            raise ValueError(f"semiring {s.name} has no {'log' if log_domain else 'linear'}-domain form")
        log_domain = native
        pool = dict(enumerate(model.factors))
    else:
        if log_domain is None:
            log_domain = s is SUM_PRODUCT and len(free) > LOG_DOMAIN_THRESHOLD
        pool = {k: f.to_log() if log_domain else f.to_linear() for k, f in enumerate(model.factors)}
    next_id = len(model.factors)
    trace = EliminationTrace(EliminationOrdering(order))
    for var in order:
        absorbed = tuple(k for k, f in pool.items() if var in f.scope)
        scope = sorted({v for k in absorbed for v in pool[k].scope})
        cells = math.prod(model.variables[v].cardinality for v in scope)
        if cells > cap:
            raise CapacityError(
                f"eliminating variable {var} needs a table of {cells} cells over |N_i| = {len(scope) - 1} "
                f"neighbours (cap {cap})",
                neighborhood_size=len(scope) - 1,
            )
        if absorbed:
            combined = combine_all((pool.pop(k) for k in absorbed), s)
        else:
            combined = Factor.identity((var,), (model.variables[var].cardinality,), s, log_domain)
        new = eliminate_var(combined, var, s)
        pool[next_id] = new
        trace.steps.append(EliminationStep(var, absorbed, new, combined if retain else None))
        next_id += 1

    kept = sorted(keep)
    base = Factor.identity(kept, [model.variables[v].cardinality for v in kept], s, log_domain)
    result = combine_all([base, *pool.values()], s)
    return result, trace


def log_partition(model: GraphicalModel, order=None, evidence=None) -> float:
    """ln Z (of the conditioned model when evidence is given), computed in log space."""
    z, _ = variable_elimination(model, SUM_PRODUCT, order, (), evidence, log_domain=True)
    return float(z.values)


def partition_function(model: GraphicalModel, order=None, evidence=None) -> float:
    z, _ = variable_elimination(model, SUM_PRODUCT, order, (), evidence, log_domain=False)
    return float(z.values)


def marginal(model: GraphicalModel, variables: Iterable[int], order=None, evidence=None) -> Factor:
    """Normalized marginal p(x_A | x_O) over the query set ``A``."""
    query = sorted(set(int(v) for v in variables))
    if not query:
        raise QueryError("marginal query set is empty")
    ev = as_evidence(evidence)
    overlap = set(query) & (set(ev.assignments) | set(model.evidence))
    if overlap:
        raise QueryError(f"query variables {sorted(overlap)} are observed")
    f, _ = variable_elimination(model, SUM_PRODUCT, order, query, ev, log_domain=True)
    total = np.logaddexp.reduce(f.values.reshape(-1))
    if total == -np.inf:
        raise InconsistentEvidenceError("evidence has zero probability (Z = 0)")
    return Factor(f.scope, np.exp(f.values - total))


def map_assignment(model: GraphicalModel, order=None, evidence=None, *,
                   log: bool = False) -> tuple[dict[int, int], float]:
    """Most probable completion and its unnormalized value max_x prod psi_B(x_B).

    Backtracking visits the steps in reverse and instantiates each eliminated
    variable at the lowest value index maximizing its retained combined
    factor.  With ``log=True`` the value is returned as a natural log and the
    run is carried out in log space.
    """
    ev = as_evidence(evidence)
    cond = condition(model, ev) if ev.assignments else model
    value, trace = variable_elimination(cond, MAX_PRODUCT, order, (), None, log_domain=log, retain=True)
    assignment = dict(cond.evidence)
    for step in reversed(trace.steps):
        f = step.combined
        index = tuple(slice(None) if v == step.variable else assignment[v] for v in f.scope)
        column = np.asarray(f.values[index]).reshape(-1)
        assignment[step.variable] = int(np.argmax(column))
    out = {v: assignment[v] for v in sorted(assignment)}
    return out, float(value.values)


def entropy(model: GraphicalModel, order=None) -> float:
    """H(p) = ln Z - sum_B sum_{x_B} p(x_B) ln psi_B(x_B)."""
    if model.evidence:
        raise QueryError("entropy is defined for the unconditioned model only")
    if order is None:
        order = default_ordering(model)
    h = log_partition(model, order)
    for f in model.factors:
        lin = f.to_linear()
        if not f.scope:
            h -= float(np.log(lin.values)) if lin.values > 0 else 0.0
            continue
        p = marginal(model, f.scope, order).values
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0, p * np.log(lin.values), 0.0)
        h -= float(terms.sum())
    return h


def _assign_factors(model: GraphicalModel, td: TreeDecomposition, root: int):
    order, parent = td.rooted(root)
    depth = {root: 0}
    for c in order[1:]:
        depth[c] = depth[parent[c]] + 1
    assigned = {c: [] for c in order}
    cluster_sets = [set(c) for c in td.clusters]
    for k, f in enumerate(model.factors):
        holders = [c for c in order if set(f.scope) <= cluster_sets[c]]
        if not holders:
            raise AssignmentError(f"factor {k} with scope {f.scope} fits in no cluster")
        assigned[min(holders, key=lambda c: (depth[c], c))].append(k)
    return order, parent, assigned


def block_messages(model: GraphicalModel, td: TreeDecomposition, root: int = 0,
                   semiring: Semiring = SUM_PRODUCT) -> tuple[dict[int, Factor], Factor]:
    """Cluster-by-cluster elimination towards ``root``.

    Returns the message each non-root cluster sends to its parent (the factor
    left after eliminating ``C_i minus C_parent``) and the final scalar.
    """
    s = get_semiring(semiring)
    order, parent, assigned = _assign_factors(model, td, root)
    inbox = {c: [] for c in order}
    messages = {}
    cards = model.cards
    for c in reversed(order):
        parts = [model.factors[k].to_linear() for k in assigned[c]] + inbox[c]
        local = combine_all(parts, s)
        p = parent[c]
        keep = set(td.clusters[p]) if p is not None else set()
        drop = [v for v in td.clusters[c] if v not in keep and v not in model.evidence]
        for v in drop:
            if v not in local.scope:
                local = combine(local, Factor.identity((v,), (cards[v],), s), s)
        out = eliminate(local, drop, s)
        if p is None:
            return messages, out
        messages[c] = out
        inbox[p].append(out)
    raise AssertionError("unreachable: rooted order always ends at the root")


def block_elimination(model: GraphicalModel, td: TreeDecomposition, root: int = 0,
                      semiring: Semiring = SUM_PRODUCT) -> Factor:
    """Eliminate a tree decomposition cluster by cluster; returns the scalar result."""
    _, result = block_messages(model, td, root, semiring)
    return result
