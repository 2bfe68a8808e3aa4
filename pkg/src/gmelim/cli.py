"""Command-line front end: ``gm <task> <model> [options]``.

Exit codes: 0 success, 2 invalid flags, 3 unreadable or malformed input,
4 capacity exceeded, 5 any other inference error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .bench import HEURISTICS, benchmark_orderings, run_heuristic
from .chmm import exact_em, variational_em
from .elimination import entropy, log_partition, map_assignment, marginal
from .errors import CapacityError, GMError, ParseError
from .messages import loopy_bp
from .model import condition, primal_graph
from .treewidth import decomposition_from_ordering, write_decomposition
from .uai import (
    format_map,
    format_mar,
    format_pr,
    parse_chmm_params,
    parse_evidence,
    parse_model,
    parse_observations,
    parse_ordering,
    write_chmm_params,
)
from .variational import mean_field_fit, potts_from_model

TASKS = ("pr", "mar", "map", "ent", "tw", "lbp", "mf", "chmm-em", "bench")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gm", description="Exact and approximate inference on discrete graphical models.")
    p.add_argument("task", choices=TASKS, type=str.lower)
    p.add_argument("model", nargs="+", help="model file (several files for bench)")
    p.add_argument("--evidence", help="evidence file; for chmm-em the observation grid")
    p.add_argument("--heuristic", choices=HEURISTICS, default="minfill")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--damping", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--ordering", help="elimination ordering file (count then ids)")
    p.add_argument("--family", choices=("exact", "q0", "qm", "bethe"), default="exact", type=str.lower)
    p.add_argument("--out", help="extra output file (decomposition, EM trace or benchmark CSV)")
    p.add_argument("--timing", action="store_true", help="include wall-clock columns on stdout")
    return p


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None


def _load(args):
    model = parse_model(_read(args.model[0]))
    ev = parse_evidence(_read(args.evidence), model) if args.evidence else None
    order = parse_ordering(_read(args.ordering)) if args.ordering else None
    if order is None and args.heuristic != "minfill":
        graph = primal_graph(condition(model, ev) if ev else model)
        order = list(run_heuristic(graph, args.heuristic, args.seed or 0, args.max_iter or 20)[0])
    return model, ev, order


def _single_model(args, parser):
    if len(args.model) != 1:
        parser.error(f"task {args.task} takes exactly one model file")


def _task_pr(args) -> str:
    model, ev, order = _load(args)
    return format_pr(log_partition(model, order, ev) / math.log(10))


def _task_mar(args) -> str:
    model, ev, order = _load(args)
    observed = dict(ev.assignments) if ev else {}
    out = []
    for v in range(model.n):
        if v in observed:
            m = np.zeros(model.variables[v].cardinality)
            m[observed[v]] = 1.0
        else:
            m = marginal(model, [v], order, ev).values
        out.append(m)
    return format_mar(out)


def _task_map(args) -> str:
    model, ev, order = _load(args)
    assignment, value = map_assignment(model, order, ev, log=True)
    return format_map(assignment, math.exp(value))


def _task_ent(args) -> str:
    model, ev, order = _load(args)
    if ev:
        raise GMError("entropy is computed for the unconditioned model; drop --evidence")
    return f"ENT\n{entropy(model, order)!r}\n"


def _task_tw(args) -> str:
    model, ev, _ = _load(args)
    graph = primal_graph(condition(model, ev) if ev else model)
    order, report = run_heuristic(graph, args.heuristic, args.seed or 0, args.max_iter or 20)
    if args.out:
        Path(args.out).write_text(write_decomposition(decomposition_from_ordering(graph, order)))
    return (f"TW\nwidth {report.width}\nfill_edges {len(report.fill_edges)}\n"
            f"ordering {' '.join(str(v) for v in order)}\n")


def _task_lbp(args) -> str:
    model, ev, _ = _load(args)
    cond = condition(model, ev) if ev else model
    res = loopy_bp(cond, damping=args.damping, tol=args.tol if args.tol is not None else 1e-8,
                   max_iter=args.max_iter or 1000)
    observed = dict(cond.evidence)
    beliefs = []
    for v in range(model.n):
        if v in observed:
            b = np.zeros(model.variables[v].cardinality)
            b[observed[v]] = 1.0
        else:
            b = res.beliefs.singles[v]
        beliefs.append(b)
    status = f"converged {'true' if res.converged else 'false'} iterations {res.iterations}\n"
    return format_mar(beliefs) + status


def _task_mf(args) -> str:
    model, ev, _ = _load(args)
    if ev:
        raise GMError("mean field runs on the unconditioned binary model; drop --evidence")
    potts = potts_from_model(model)
    init = "half" if args.seed is None else "random"
    state = mean_field_fit(potts, init=init, seed=args.seed, tol=args.tol if args.tol is not None else 1e-10,
                           max_iter=args.max_iter or 1000)
    q = " ".join(f"{x:.6g}" for x in state.q)
    return (f"MF\n{potts.n} {q}\nconverged {'true' if state.converged else 'false'} "
            f"iterations {state.iterations}\nobjective {state.free_energy!r}\n")


def _task_chmm_em(args) -> str:
    params = parse_chmm_params(_read(args.model[0]))
    if not args.evidence:
        raise ParseError("chmm-em needs the observation grid via --evidence")
    obs = parse_observations(_read(args.evidence))
    iters = args.max_iter or 50
    tol = args.tol if args.tol is not None else 1e-7
    if args.family == "exact":
        fitted, trace = exact_em(params, obs, iters, tol)
    else:
        fitted, trace = variational_em(params, obs, args.family, iters, tol, damping=args.damping)
    if args.out:
        Path(args.out).write_text(trace.to_csv(include_time=True))
    return trace.to_csv(include_time=args.timing) + write_chmm_params(fitted)


def _task_bench(args) -> str:
    report = benchmark_orderings(args.model, seed=args.seed or 0, budget=args.max_iter or 20)
    for path in report.skipped:
        print(f"skipped unreadable model {path}", file=sys.stderr)
    if not report.rows:
        raise ParseError("no readable model files")
    if args.out:
        Path(args.out).write_text(report.to_csv(include_time=True))
    return report.to_csv(include_time=args.timing)


HANDLERS = {
    "pr": _task_pr, "mar": _task_mar, "map": _task_map, "ent": _task_ent, "tw": _task_tw,
    "lbp": _task_lbp, "mf": _task_mf, "chmm-em": _task_chmm_em, "bench": _task_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    if args.task != "bench":
        try:
            _single_model(args, parser)
        except SystemExit as exc:
            return int(exc.code or 0)
    try:
        sys.stdout.write(HANDLERS[args.task](args))
    except ParseError as exc:
        print(f"gm: parse error: {exc}", file=sys.stderr)
        return 3
    except CapacityError as exc:
        print(f"gm: capacity exceeded: {exc}", file=sys.stderr)
        return 4
    except GMError as exc:
        print(f"gm: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 5
    except ValueError as exc:
        print(f"gm: invalid argument: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
