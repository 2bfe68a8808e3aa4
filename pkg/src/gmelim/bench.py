"""Compare ordering heuristics on a set of model files."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import GMError
from .model import primal_graph
from .treewidth import greedy_order, randomized_iterative_minfill
from .uai import parse_model

log = logging.getLogger(__name__)

HEURISTICS = ("mindegree", "minfill", "mcs", "rand")


@dataclass
class BenchmarkRow:
    instance: str
    heuristic: str
    width: int
    fill_edges: int
    seed: int
    seconds: float


@dataclass
class BenchmarkReport:
    rows: list[BenchmarkRow] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    def to_csv(self, include_time: bool = False) -> str:
        head = "instance,heuristic,width,fill_edges,seed"
        lines = [head + (",seconds" if include_time else "")]
        for r in self.rows:
            line = f"{r.instance},{r.heuristic},{r.width},{r.fill_edges},{r.seed}"
            lines.append(line + (f",{r.seconds:.6f}" if include_time else ""))
        return "\n".join(lines) + "\n"

    def mean_width(self, heuristic: str) -> float:
        widths = [r.width for r in self.rows if r.heuristic == heuristic]
        return sum(widths) / len(widths) if widths else float("nan")


def run_heuristic(graph, heuristic: str, seed: int = 0, budget: int = 20):
    """Returns (ordering, report) for one heuristic name."""
    if heuristic == "rand":
        res = randomized_iterative_minfill(graph, max_iters=budget, time_budget=None, seed=seed)
        return res.ordering, res.report
    criterion = {"mindegree": "min-degree", "minfill": "min-fill", "mcs": "mcs"}[heuristic]
    return greedy_order(graph, criterion)


def benchmark_orderings(paths: Iterable, heuristics: Optional[Sequence[str]] = None, seed: int = 0,
                        budget: int = 20) -> BenchmarkReport:
    """Width and fill count of each heuristic on each readable model file.

    Rows are sorted by path.  Unreadable files are skipped and listed in
    ``report.skipped``.
    """
    heuristics = list(heuristics or HEURISTICS)
    unknown = [h for h in heuristics if h not in HEURISTICS]
    if unknown:
        raise ValueError(f"unknown heuristics {unknown}; expected a subset of {HEURISTICS}")
    report = BenchmarkReport()
    for path in sorted(str(p) for p in paths):
        try:
            model = parse_model(Path(path).read_text())
        except (OSError, UnicodeDecodeError, GMError) as exc:
            log.warning("skipping %s: %s", path, exc)
            report.skipped.append(path)
            continue
        graph = primal_graph(model)
        for h in heuristics:
            start = time.perf_counter()
            _, rep = run_heuristic(graph, h, seed, budget)
            report.rows.append(BenchmarkRow(path, h, rep.width, len(rep.fill_edges), seed,
                                            time.perf_counter() - start))
    return report
