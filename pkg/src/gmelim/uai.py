"""Reading and writing models, evidence, coupled-HMM parameters and results.

Models use the UAI competition text format.  Tokens are separated by any
whitespace.  The writer is canonical: scopes are written in ascending
order and values with ``repr`` precision, so ``parse(write(parse(t)))``
equals ``parse(t)``.
"""

from __future__ import annotations

import logging
import math
from typing import Iterable, Mapping, Optional

import numpy as np

from .chmm import CHMMParams
from .errors import DomainError, EvidenceError, ParseError
from .model import Evidence, Factor, GraphicalModel

log = logging.getLogger(__name__)

PREAMBLES = {"MARKOV": "markov", "BAYES": "bayes"}


class _Tokens:
    def __init__(self, text: str):
        self.items = [(tok, n) for n, line in enumerate(text.splitlines(), 1) for tok in line.split()]
        self.pos = 0
        self.last_line = self.items[-1][1] if self.items else 1

    def done(self) -> bool:
        return self.pos >= len(self.items)

    def next(self, what: str) -> tuple[str, int]:
        if self.done():
            raise ParseError(f"unexpected end of input, expected {what}", self.last_line)
        tok = self.items[self.pos]
        self.pos += 1
        return tok

    def int(self, what: str, minimum: Optional[int] = None) -> int:
        tok, line = self.next(what)
        try:
            value = int(tok)
        except ValueError:
            raise ParseError(f"expected integer {what}, got {tok!r}", line) from None
        if minimum is not None and value < minimum:
            raise ParseError(f"{what} must be >= {minimum}, got {value}", line)
        return value

    def float(self, what: str) -> tuple[float, int]:
        tok, line = self.next(what)
        try:
            value = float(tok)
        except ValueError:
            raise ParseError(f"expected number {what}, got {tok!r}", line) from None
        if math.isnan(value):
            raise ParseError(f"{what} is NaN", line)
        return value, line


def parse_model(text: str) -> GraphicalModel:
    """Parse a UAI model; tables over non-ascending scopes are transposed."""
    tok = _Tokens(text)
    word, line = tok.next("preamble")
    kind = PREAMBLES.get(word.upper())
    if kind is None:
        raise ParseError(f"unknown preamble {word!r}; expected MARKOV or BAYES", line)
    n = tok.int("variable count", 0)
    cards = [tok.int(f"cardinality of variable {v}", 1) for v in range(n)]
    n_factors = tok.int("factor count", 0)
    scopes = []
    for k in range(n_factors):
        arity = tok.int(f"arity of factor {k}", 0)
        scope = []
        for _ in range(arity):
            _, line = tok.items[tok.pos] if not tok.done() else (None, tok.last_line)
            v = tok.int(f"variable id in scope of factor {k}", 0)
            if v >= n:
                raise ParseError(f"factor {k} refers to variable {v} but n = {n}", line)
            scope.append(v)
        if len(set(scope)) != len(scope):
            raise ParseError(f"factor {k} repeats a variable in its scope", line)
        scopes.append(scope)
    factors = []
    for k, scope in enumerate(scopes):
        shape = [cards[v] for v in scope]
        count = tok.int(f"table size of factor {k}", 0)
        _, line = tok.items[tok.pos - 1]
        if count != math.prod(shape):
            raise ParseError(f"factor {k}: table has {count} entries, scope needs {math.prod(shape)}", line)
        values = []
        for _ in range(count):
            value, vline = tok.float(f"table entry of factor {k}")
            if value < 0:
                raise DomainError(f"factor {k}: negative table entry {value}", vline)
            values.append(value)
        factors.append(Factor.from_unordered(scope, np.array(values).reshape(shape)))
    if not tok.done():
        _, line = tok.items[tok.pos]
        raise ParseError("trailing tokens after the last table", line)
    return GraphicalModel.from_cards(cards, factors, kind)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_model(model: GraphicalModel) -> str:
    preamble = "BAYES" if model.kind == "bayes" else "MARKOV"
    lines = [preamble, str(model.n), " ".join(str(c) for c in model.cards), str(len(model.factors))]
    for f in model.factors:
        lines.append(" ".join(str(x) for x in (len(f.scope), *f.scope)))
    lines.append("")
    for f in model.factors:
        lin = f.to_linear()
        lines.append(str(lin.size))
        lines.append(" ".join(_fmt(x) for x in lin.table))
        lines.append("")
    return "\n".join(lines)


def parse_evidence(text: str, model: Optional[GraphicalModel] = None) -> Evidence:
    """``count`` then ``count`` (variable, value) pairs; an empty file is empty evidence.

    A variable listed twice keeps its last value and a warning is logged.
    """
    tok = _Tokens(text)
    if tok.done():
        return Evidence()
    count = tok.int("evidence count", 0)
    assignments: dict[int, int] = {}
    for _ in range(count):
        var = tok.int("evidence variable", None)
        val = tok.int("evidence value", None)
        if var in assignments:
            log.warning("evidence lists variable %d twice; keeping the last value %d", var, val)
        assignments[var] = val
    if not tok.done():
        _, line = tok.items[tok.pos]
        raise ParseError("trailing tokens after the evidence pairs", line)
    for var, val in assignments.items():
        if var < 0 or val < 0:
            raise EvidenceError(f"negative index in evidence pair ({var}, {val})")
    ev = Evidence(assignments)
    if model is not None:
        ev.validate(model)
    return ev


def write_evidence(ev: Mapping[int, int] | Evidence) -> str:
    items = ev.assignments if isinstance(ev, Evidence) else dict(ev)
    parts = [str(len(items))] + [f"{v} {x}" for v, x in sorted(items.items())]
    return " ".join(parts) + "\n"


def parse_ordering(text: str) -> list[int]:
    """Elimination ordering file: a count followed by that many variable ids."""
    tok = _Tokens(text)
    count = tok.int("ordering length", 0)
    order = [tok.int("variable id", 0) for _ in range(count)]
    if not tok.done():
        _, line = tok.items[tok.pos]
        raise ParseError("trailing tokens after the ordering", line)
    return order


# ---- coupled HMM parameters and observations ----

_CHMM_TABLES = ("psiInit", "psiM", "psiC", "psiE")


def write_chmm_params(p: CHMMParams) -> str:
    lines = ["CHMM", f"I {p.I}", f"T {p.T}", f"K {p.K}", f"M {p.M}", f"coupling {p.coupling}"]
    for name in _CHMM_TABLES:
        table = getattr(p, name).reshape(-1)
        lines.append(f"{name} {table.size}")
        lines.append(" ".join(_fmt(x) for x in table))
    return "\n".join(lines) + "\n"


def parse_chmm_params(text: str) -> CHMMParams:
    """Sections ``I``, ``T``, ``K``, ``M``, ``coupling`` and the four tables, in any order."""
    tok = _Tokens(text)
    word, line = tok.next("preamble")
    if word.upper() != "CHMM":
        raise ParseError(f"expected CHMM preamble, got {word!r}", line)
    dims: dict[str, int] = {}
    coupling = "pairwise"
    tables: dict[str, np.ndarray] = {}
    while not tok.done():
        name, line = tok.next("section name")
        if name in ("I", "T", "K", "M"):
            dims[name] = tok.int(f"value of {name}", 1)
        elif name == "coupling":
            coupling, line = tok.next("coupling kind")
            if coupling not in ("pairwise", "full"):
                raise ParseError(f"coupling must be pairwise or full, got {coupling!r}", line)
        elif name in _CHMM_TABLES:
            count = tok.int(f"size of {name}", 0)
            values = []
            for _ in range(count):
                value, vline = tok.float(f"entry of {name}")
                if value < 0:
                    raise DomainError(f"{name}: negative entry {value}", vline)
                values.append(value)
            tables[name] = np.array(values)
        else:
            raise ParseError(f"unknown section {name!r}", line)
    missing = [s for s in ("I", "T", "K", "M", *_CHMM_TABLES) if s not in dims and s not in tables]
    if missing:
        raise ParseError(f"missing sections {missing}", tok.last_line)
    I, K = dims["I"], dims["K"]
    shapes = {"psiInit": (K,), "psiM": (K, K), "psiE": (K, dims["M"]),
              "psiC": (K, K) if coupling == "pairwise" else (K,) * I}
    for name, shape in shapes.items():
        if tables[name].size != math.prod(shape):
            raise ParseError(f"{name} has {tables[name].size} entries, expected {math.prod(shape)}")
        tables[name] = tables[name].reshape(shape)
    return CHMMParams(I, dims["T"], K, dims["M"], tables["psiM"], tables["psiC"], tables["psiE"],
                      tables["psiInit"], coupling)


def parse_observations(text: str) -> np.ndarray:
    """Integer grid with one row per time step and one column per chain; returns ``(I, T)``."""
    rows = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append([int(t) for t in line.split()])
        except ValueError:
            raise ParseError("observation grid holds a non-integer token", n) from None
        if len(rows[-1]) != len(rows[0]):
            raise ParseError(f"row has {len(rows[-1])} columns, expected {len(rows[0])}", n)
    if not rows:
        raise ParseError("observation grid is empty", 1)
    return np.array(rows, dtype=np.int64).T


def write_observations(obs) -> str:
    obs = np.asarray(obs)
    return "".join(" ".join(str(int(x)) for x in row) + "\n" for row in obs.T)


# ---- result formats ----


def _p(x: float) -> str:
    return f"{float(x):.6g}"


def format_pr(log10_z: float) -> str:
    return f"PR\n{float(log10_z)!r}\n"


def format_mar(marginals: Iterable[np.ndarray]) -> str:
    marginals = list(marginals)
    parts = [str(len(marginals))]
    for m in marginals:
        parts.append(str(len(m)))
        parts.extend(_p(x) for x in m)
    return "MAR\n" + " ".join(parts) + "\n"


def format_map(assignment: Mapping[int, int], value: float) -> str:
    values = [assignment[v] for v in sorted(assignment)]
    return f"MAP\n{len(values)} " + " ".join(str(x) for x in values) + f"\nVALUE {_p(value)}\n"
