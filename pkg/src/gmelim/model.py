"""Variables, factors, graphical models and the two primitive operators.

Tables are numpy arrays whose axes follow the factor scope, which is kept in
strictly ascending variable-id order.  Flattening a table in C order therefore
gives the row-major layout with the last scope variable varying fastest,
which makes factors from different code paths directly comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DomainFlagError,
    EvidenceError,
    ModelMismatchError,
    OracleTooLargeError,
    ScopeError,
)
from .graph import Graph
from .semiring import SUM_PRODUCT, Semiring, get_semiring

DEFAULT_ORACLE_CAP = 10**7


@dataclass(frozen=True)
class DiscreteVariable:
    id: int
    cardinality: int

    def __post_init__(self):
        if self.cardinality < 1:
            raise ValueError(f"variable {self.id}: cardinality must be >= 1, got {self.cardinality}")


class Factor:
    """A table over an ascending scope of discrete variables.

    In the linear domain entries are nonnegative reals.  With
    ``log_domain=True`` entries are natural logs (``-inf`` encodes zero);
    additive carriers such as min-plus costs are stored this way too, which
    lifts the nonnegativity requirement.
    """

    __slots__ = ("scope", "values", "log_domain")

    def __init__(self, scope: Sequence[int], values, log_domain: bool = False):
        scope = tuple(int(v) for v in scope)
        if len(set(scope)) != len(scope):
            raise ScopeError(f"duplicate variable in scope {scope}")
        if any(a >= b for a, b in zip(scope, scope[1:])):
            raise ScopeError(f"scope must be strictly ascending, got {scope}")
        values = np.array(values, dtype=np.float64)
        if values.ndim != len(scope):
            raise ValueError(
                f"table has {values.ndim} axes but scope {scope} has {len(scope)} variables"
            )
        if np.isnan(values).any():
            raise ValueError("factor table contains NaN")
        if not log_domain and (values < 0).any():
            raise ValueError("linear-domain factor values must be nonnegative")
        values.flags.writeable = False
        self.scope = scope
        self.values = values
        self.log_domain = bool(log_domain)

    @classmethod
    def from_flat(cls, scope, cards, flat, log_domain=False) -> "Factor":
        return cls(scope, np.asarray(flat, dtype=np.float64).reshape(tuple(cards)), log_domain)

    @classmethod
    def from_unordered(cls, scope, values, log_domain=False) -> "Factor":
        """Build a factor from a table whose axes follow an arbitrary scope order."""
        scope = list(scope)
        perm = sorted(range(len(scope)), key=scope.__getitem__)
        values = np.transpose(np.asarray(values, dtype=np.float64), perm)
        return cls([scope[p] for p in perm], values, log_domain)

    @classmethod
    def scalar(cls, value, log_domain=False) -> "Factor":
        return cls((), np.array(value, dtype=np.float64), log_domain)

    @classmethod
    def identity(cls, scope=(), cards=(), semiring: Semiring = SUM_PRODUCT, log_domain=False) -> "Factor":
        one = semiring.for_domain(log_domain).one
        return cls(scope, np.full(tuple(cards), one), log_domain)

    @property
    def cards(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def table(self) -> np.ndarray:
        """Row-major flat view of the values."""
        return self.values.reshape(-1)

    @property
    def size(self) -> int:
        return self.values.size

    def card_of(self, var) -> int:
        return self.values.shape[self.scope.index(var)]

    def to_log(self) -> "Factor":
        if self.log_domain:
            return self
        with np.errstate(divide="ignore"):
            return Factor(self.scope, np.log(self.values), True)

    def to_linear(self) -> "Factor":
        if not self.log_domain:
            return self
        return Factor(self.scope, np.exp(self.values), False)

    def normalized(self) -> "Factor":
        """Linear-domain copy scaled to sum to one."""
        if self.log_domain:
            v = self.values - np.logaddexp.reduce(self.values.reshape(-1))
            return Factor(self.scope, np.exp(v))
        return Factor(self.scope, self.values / self.values.sum())

    def value_at(self, assignment: Mapping[int, int]) -> float:
        return float(self.values[tuple(assignment[v] for v in self.scope)])

    def __repr__(self):
        flag = ", log" if self.log_domain else ""
        return f"Factor(scope={self.scope}, table={self.table.tolist()}{flag})"


@dataclass(frozen=True)
class Evidence:
    """Observed values keyed by variable id."""

    assignments: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "assignments", {int(k): int(v) for k, v in dict(self.assignments).items()})

    def validate(self, model: "GraphicalModel"):
        for var, val in self.assignments.items():
            if not 0 <= var < model.n:
                raise EvidenceError(f"evidence on unknown variable {var}")
            card = model.variables[var].cardinality
            if not 0 <= val < card:
                raise EvidenceError(f"variable {var}: observed value {val} out of range 0..{card - 1}")

    def __len__(self):
        return len(self.assignments)

    def __iter__(self):
        return iter(self.assignments)


def as_evidence(e) -> Evidence:
    if e is None:
        return Evidence()
    if isinstance(e, Evidence):
        return e
    return Evidence(dict(e))


@dataclass(frozen=True)
class GraphicalModel:
    """Variables plus a list of factors whose product is the unnormalized joint.

    ``evidence`` lists variables already instantiated by :func:`condition`;
    they no longer appear in any scope and are ignored by inference.
    """

    variables: tuple[DiscreteVariable, ...]
    factors: tuple[Factor, ...]
    kind: str = "markov"
    evidence: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "evidence", dict(self.evidence))
        if self.kind not in ("markov", "bayes"):
            raise ValueError(f"kind must be 'markov' or 'bayes', got {self.kind!r}")
        for i, v in enumerate(self.variables):
            if v.id != i:
                raise ModelMismatchError(f"variable ids must be dense 0..n-1; position {i} has id {v.id}")
        for k, f in enumerate(self.factors):
            for var, card in zip(f.scope, f.cards):
                if not 0 <= var < len(self.variables):
                    raise ModelMismatchError(f"factor {k} refers to unknown variable {var}")
                if self.variables[var].cardinality != card:
                    raise ModelMismatchError(
                        f"factor {k}: variable {var} has cardinality {self.variables[var].cardinality}, table axis {card}"
                    )

    @classmethod
    def from_cards(cls, cards: Sequence[int], factors: Iterable[Factor], kind="markov") -> "GraphicalModel":
        return cls(tuple(DiscreteVariable(i, int(c)) for i, c in enumerate(cards)), tuple(factors), kind)

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def cards(self) -> tuple[int, ...]:
        return tuple(v.cardinality for v in self.variables)

    @property
    def max_cardinality(self) -> int:
        return max(self.cards, default=1)

    @property
    def free_variables(self) -> list[int]:
        return [v.id for v in self.variables if v.id not in self.evidence]

    @property
    def scopes(self) -> list[tuple[int, ...]]:
        return [f.scope for f in self.factors]

    def factors_with(self, var) -> list[int]:
        """Indices of the factors whose scope contains ``var``."""
        return [k for k, f in enumerate(self.factors) if var in f.scope]

    def with_factors(self, factors) -> "GraphicalModel":
        return GraphicalModel(self.variables, tuple(factors), self.kind, self.evidence)

    def evaluate(self, assignment: Mapping[int, int], semiring: Semiring = SUM_PRODUCT) -> float:
        """Combination of all factors at one full assignment."""
        s = semiring
        value = s.one
        for f in self.factors:
            value = s.for_domain(f.log_domain).otimes(value, f.value_at(assignment))
        return float(value)


def _aligned(f: Factor, union: tuple[int, ...]) -> np.ndarray:
    shape = [1] * len(union)
    pos = {v: k for k, v in enumerate(union)}
    for v, c in zip(f.scope, f.cards):
        shape[pos[v]] = c
    return f.values.reshape(shape)


def combine(a: Factor, b: Factor, semiring: Semiring = SUM_PRODUCT) -> Factor:
    """Pointwise otimes of two factors over the union of their scopes."""
    if a.log_domain != b.log_domain:
        raise DomainFlagError("cannot combine a log-domain factor with a linear-domain factor")
    s = get_semiring(semiring).for_domain(a.log_domain)
    cards = dict(zip(a.scope, a.cards))
    for v, c in zip(b.scope, b.cards):
        if cards.setdefault(v, c) != c:
            raise ModelMismatchError(f"variable {v} has cardinality {cards[v]} in one factor and {c} in the other")
    union = tuple(sorted(cards))
    with np.errstate(invalid="ignore"):
        out = s.otimes(_aligned(a, union), _aligned(b, union))
    out = np.broadcast_to(out, tuple(cards[v] for v in union))
    if np.isnan(out).any():
        # 0 * inf style products resolve to the annihilator
        out = np.where(np.isnan(out), s.zero, out)
    return Factor(union, out, a.log_domain)


def combine_all(factors: Iterable[Factor], semiring: Semiring = SUM_PRODUCT, log_domain=False) -> Factor:
    result = None
    for f in factors:
        result = f if result is None else combine(result, f, semiring)
    if result is None:
        return Factor.identity(semiring=get_semiring(semiring), log_domain=log_domain)
    return result


def eliminate_var(f: Factor, var: int, semiring: Semiring = SUM_PRODUCT) -> Factor:
    """oplus-marginalize one variable out of a factor."""
    if var not in f.scope:
        raise ScopeError(f"variable {var} is not in scope {f.scope}")
    s = get_semiring(semiring).for_domain(f.log_domain)
    axis = f.scope.index(var)
    out = s.reduce(f.values, axis)
    return Factor(f.scope[:axis] + f.scope[axis + 1 :], out, f.log_domain)


def eliminate(f: Factor, variables: Iterable[int], semiring: Semiring = SUM_PRODUCT) -> Factor:
    for v in variables:
        f = eliminate_var(f, v, semiring)
    return f


def slice_factor(f: Factor, assignments: Mapping[int, int]) -> Factor:
    index, scope = [], []
    for v in f.scope:
        if v in assignments:
            index.append(assignments[v])
        else:
            index.append(slice(None))
            scope.append(v)
    return Factor(scope, f.values[tuple(index)], f.log_domain)


def condition(model: GraphicalModel, evidence) -> GraphicalModel:
    """Instantiate observed variables, removing them from every scope.

    The observed variables stay in ``model.variables`` (ids remain dense) but
    are recorded in ``model.evidence`` and skipped by inference.
    """
    ev = as_evidence(evidence)
    ev.validate(model)
    if not ev.assignments:
        return model
    for var, val in ev.assignments.items():
        if model.evidence.get(var, val) != val:
            raise EvidenceError(f"variable {var} already observed with value {model.evidence[var]}")
    factors = tuple(
        slice_factor(f, ev.assignments) if any(v in ev.assignments for v in f.scope) else f
        for f in model.factors
    )
    return GraphicalModel(model.variables, factors, model.kind, {**model.evidence, **ev.assignments})


def primal_graph(model: GraphicalModel) -> Graph:
    """Vertices are the unobserved variables; i-j is an edge iff some scope holds both."""
    g = Graph(model.free_variables)
    for f in model.factors:
        for a in range(len(f.scope)):
            for b in range(a + 1, len(f.scope)):
                g.add_edge(f.scope[a], f.scope[b])
    return g


def enumerate_joint(model: GraphicalModel, semiring: Semiring = SUM_PRODUCT, cap: int = DEFAULT_ORACLE_CAP,
                    log_domain: bool = False) -> Factor:
    """Evaluate the otimes of all factors at every joint state, by direct indexing.

    This is the brute-force oracle: each cell is computed from the factor
    tables by looking up the projected coordinates of that state.  It shares
    no code with :func:`combine`.
    """
    s = get_semiring(semiring).for_domain(log_domain)
    free = model.free_variables
    cards = [model.variables[v].cardinality for v in free]
    total = math.prod(cards)
    if total > cap:
        raise OracleTooLargeError(f"joint state space has {total} states, cap is {cap}")
    pos = {v: k for k, v in enumerate(free)}
    out = np.full(total, s.one, dtype=np.float64)
    chunk = 1 << 18
    for start in range(0, total, chunk):
        flat = np.arange(start, min(total, start + chunk))
        states = np.unravel_index(flat, cards) if cards else ()
        acc = np.full(flat.shape, s.one)
        for f in model.factors:
            if f.log_domain != log_domain:
                f = f.to_log() if log_domain else f.to_linear()
            idx = tuple(states[pos[v]] for v in f.scope)
            vals = f.values[idx] if idx else np.full(flat.shape, f.values[()])
            with np.errstate(invalid="ignore"):
                acc = s.otimes(acc, vals)
            acc = np.where(np.isnan(acc), s.zero, acc)
        out[start : start + len(flat)] = acc
    return Factor(free, out.reshape(cards), log_domain)


def brute_force(model: GraphicalModel, semiring: Semiring = SUM_PRODUCT, keep: Iterable[int] = (),
                cap: int = DEFAULT_ORACLE_CAP, log_domain: bool = False) -> Factor:
    """Exact oplus over all completions of ``keep``, by full enumeration."""
    s = get_semiring(semiring)
    keep = set(keep)
    joint = enumerate_joint(model, s, cap, log_domain)
    missing = keep - set(joint.scope)
    if missing:
        raise ModelMismatchError(f"keep variables {sorted(missing)} are not free variables of the model")
    return reduce_to(joint, keep, s)


def reduce_to(f: Factor, keep: Iterable[int], semiring: Semiring = SUM_PRODUCT) -> Factor:
    """oplus away every variable of ``f`` outside ``keep`` in a single reduction."""
    keep = set(keep)
    s = get_semiring(semiring).for_domain(f.log_domain)
    axes = tuple(k for k, v in enumerate(f.scope) if v not in keep)
    if not axes:
        return f
    vals = f.values
    for ax in reversed(axes):
        vals = s.reduce(vals, ax)
    return Factor(tuple(v for v in f.scope if v in keep), vals, f.log_domain)
