import logging
import math

import numpy as np
import pytest

from gmelim.chmm import random_params, sample_chmm
from gmelim.cli import main
from gmelim.elimination import log_partition
from gmelim.errors import DomainError, EvidenceError, ParseError
from gmelim.generators import example_graph, graph_model, random_model, random_tree_model
from gmelim.graph import Graph
from gmelim.model import primal_graph
from gmelim.uai import (
    format_map,
    format_mar,
    parse_chmm_params,
    parse_evidence,
    parse_model,
    parse_observations,
    parse_ordering,
    write_chmm_params,
    write_evidence,
    write_model,
    write_observations,
)

MINIMAL = "MARKOV 1 2 1 1 0 2 1.0 3.0"
CHAIN = """MARKOV
3
2 2 2
2
2 0 1
2 1 2

4
1 2 3 4

4
2 1 1 2
"""
MAP_MODEL = "MARKOV\n2\n2 2\n1\n2 0 1\n4\n5 7 10 14\n"


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestParseModel:
    def test_minimal(self):
        m = parse_model(MINIMAL)
        assert m.n == 1 and list(m.cards) == [2]
        np.testing.assert_array_equal(m.factors[0].values, [1.0, 3.0])
        assert m.kind == "markov"

    def test_chain_primal_graph(self):
        g = primal_graph(parse_model(CHAIN))
        assert sorted(g.edges()) == [(0, 1), (1, 2)]

    def test_bayes_preamble_keeps_tables(self):
        m = parse_model(MINIMAL.replace("MARKOV", "BAYES"))
        assert m.kind == "bayes"
        np.testing.assert_array_equal(m.factors[0].values, [1.0, 3.0])

    def test_unsorted_scope_is_transposed(self):
        m = parse_model("MARKOV 2 2 3 1 2 1 0 6 1 2 3 4 5 6")
        f = m.factors[0]
        assert f.scope == (0, 1)
        # the file lists (x1, x0) with x0 varying fastest
        assert f.values[1, 0] == 2.0 and f.values[0, 2] == 5.0 and f.values[1, 2] == 6.0

    def test_round_trip_corpus(self, rng):
        for _ in range(30):
            m = random_model(rng, int(rng.integers(1, 9)), zero_prob=0.1)
            text = write_model(m)
            again = parse_model(text)
            assert write_model(again) == text
            assert log_partition(again) == pytest.approx(log_partition(m), rel=1e-12) \
                if np.isfinite(log_partition(m)) else True

    @pytest.mark.parametrize("text,line", [
        ("", 1),
        ("MRF 1 2 1 1 0 2 1 3", 1),
        ("MARKOV\n1\n2\n1\n1 0\n3\n1 2 3\n", 6),
        ("MARKOV\n1\n2\n1\n1 4\n2\n1 2\n", 5),
        ("MARKOV\n1\n2\n1\n1 0\n2\n1 x\n", 7),
        ("MARKOV\n1\n2\n1\n1 0\n2\n1 2\n9\n", 8),
        ("MARKOV\n1\n2\n1\n1 0\n2\n1\n", 7),
    ])
    def test_errors_carry_line(self, text, line):
        with pytest.raises(ParseError) as exc:
            parse_model(text)
        assert exc.value.line == line

    def test_negative_value(self):
        with pytest.raises(DomainError) as exc:
            parse_model("MARKOV\n1\n2\n1\n1 0\n2\n1 -2\n")
        assert exc.value.line == 7


class TestEvidenceAndOrdering:
    def test_cases(self):
        assert len(parse_evidence("0")) == 0
        assert len(parse_evidence("")) == 0
        assert parse_evidence("1 0 1").assignments == {0: 1}

    def test_duplicate_last_wins(self, caplog):
        with caplog.at_level(logging.WARNING):
            ev = parse_evidence("2 0 1 0 0")
        assert ev.assignments == {0: 0}
        assert "twice" in caplog.text

    def test_out_of_range(self):
        m = parse_model(CHAIN)
        with pytest.raises(EvidenceError):
            parse_evidence("1 5 0", m)
        with pytest.raises(EvidenceError):
            parse_evidence("1 0 2", m)
        with pytest.raises(EvidenceError):
            parse_evidence("1 -1 0")
        with pytest.raises(ParseError):
            parse_evidence("2 0 1")

    def test_write_evidence(self):
        assert write_evidence({2: 1, 0: 0}) == "2 0 0 2 1\n"
        assert parse_evidence(write_evidence({2: 1, 0: 0})).assignments == {0: 0, 2: 1}

    def test_ordering(self):
        assert parse_ordering("3\n2 0 1\n") == [2, 0, 1]
        with pytest.raises(ParseError):
            parse_ordering("2 1 0 3")


class TestChmmFiles:
    @pytest.mark.parametrize("coupling", ["pairwise", "full"])
    def test_params_round_trip(self, rng, coupling):
        p = random_params(3, 4, 2, 3, rng, coupling)
        q = parse_chmm_params(write_chmm_params(p))
        assert (q.I, q.T, q.K, q.M, q.coupling) == (3, 4, 2, 3, coupling)
        for name in ("psiM", "psiC", "psiE", "psiInit"):
            np.testing.assert_array_equal(getattr(q, name), getattr(p, name))

    def test_params_errors(self, rng):
        text = write_chmm_params(random_params(2, 3, 2, 2, rng))
        with pytest.raises(ParseError):
            parse_chmm_params(text.replace("CHMM", "HMM"))
        with pytest.raises(ParseError):
            parse_chmm_params(text.replace("psiE 4", "psiE 3"))
        with pytest.raises(ParseError):
            parse_chmm_params("\n".join(line for line in text.splitlines() if not line.startswith("K ")))

    def test_observations(self, rng):
        _, obs = sample_chmm(random_params(3, 5, 2, 4, rng), rng)
        text = write_observations(obs)
        assert len(text.splitlines()) == 5
        np.testing.assert_array_equal(parse_observations(text), obs)
        with pytest.raises(ParseError):
            parse_observations("0 1\n1\n")
        with pytest.raises(ParseError):
            parse_observations("")


class TestFormats:
    def test_mar_and_map(self):
        assert format_mar([np.array([0.25, 0.75])]) == "MAR\n1 2 0.25 0.75\n"
        assert format_map({1: 0, 0: 1}, 14.0) == "MAP\n2 1 0\nVALUE 14\n"


class TestCLI:
    def run(self, capsys, *argv):
        code = main([str(a) for a in argv])
        out, err = capsys.readouterr()
        return code, out, err

    def test_pr_minimal(self, tmp_path, capsys):
        code, out, _ = self.run(capsys, "pr", write(tmp_path, "m.uai", MINIMAL))
        assert code == 0
        assert out.splitlines()[0] == "PR"
        assert float(out.splitlines()[1]) == pytest.approx(math.log10(4), abs=1e-15)

    def test_map(self, tmp_path, capsys):
        code, out, _ = self.run(capsys, "map", write(tmp_path, "m.uai", MAP_MODEL))
        assert code == 0
        assert out == "MAP\n2 1 1\nVALUE 14\n"

    def test_mar_with_evidence(self, tmp_path, capsys):
        m = write(tmp_path, "m.uai", CHAIN)
        ev = write(tmp_path, "m.evid", "1 0 1")
        code, out, _ = self.run(capsys, "mar", m, "--evidence", ev)
        assert code == 0
        tokens = out.split()
        assert tokens[:6] == ["MAR", "3", "2", "0", "1", "2"]

    def test_tw_example_graph(self, tmp_path, capsys):
        m = write(tmp_path, "g.uai", write_model(graph_model(example_graph())))
        td = tmp_path / "g.td"
        code, out, _ = self.run(capsys, "tw", m, "--heuristic", "minfill", "--out", td)
        assert code == 0
        assert "width 2" in out
        assert td.read_text().splitlines()[0].isdigit()

    def test_ent_lbp_mf(self, tmp_path, capsys):
        m = write(tmp_path, "c.uai", CHAIN)
        assert self.run(capsys, "ent", m)[0] == 0
        code, out, _ = self.run(capsys, "lbp", m)
        assert code == 0 and "converged true" in out
        code, out, _ = self.run(capsys, "mf", m, "--seed", 3)
        assert code == 0 and out.startswith("MF\n3 ")

    def test_chmm_em(self, tmp_path, capsys, rng):
        p = random_params(2, 6, 2, 3, rng)
        _, obs = sample_chmm(p, rng)
        pf = write(tmp_path, "p.chmm", write_chmm_params(p))
        of = write(tmp_path, "o.txt", write_observations(obs))
        trace = tmp_path / "trace.csv"
        code, out, _ = self.run(capsys, "chmm-em", pf, "--evidence", of, "--max-iter", 5, "--out", trace)
        assert code == 0
        assert out.startswith("iteration,objective\n0,")
        assert "CHMM" in out
        assert trace.read_text().startswith("iteration,objective,seconds")
        code, out2, _ = self.run(capsys, "chmm-em", pf, "--evidence", of, "--max-iter", 5)
        assert out2 == out
        for family in ("q0", "qm", "bethe"):
            assert self.run(capsys, "chmm-em", pf, "--evidence", of, "--family", family, "--max-iter", 2)[0] == 0

    def test_exit_codes(self, tmp_path, capsys):
        good = write(tmp_path, "m.uai", CHAIN)
        assert self.run(capsys, "pr", good, "--heuristic", "bogus")[0] == 2
        assert self.run(capsys, "frobnicate", good)[0] == 2
        assert self.run(capsys, "pr", good, "--damping", "x")[0] == 2
        assert self.run(capsys, "pr", str(tmp_path / "missing.uai"))[0] == 3
        assert self.run(capsys, "pr", write(tmp_path, "bad.uai", "MARKOV 1 2 1 1 0 2 1 -3"))[0] == 3
        assert self.run(capsys, "pr", write(tmp_path, "cut.uai", "MARKOV 1 2"))[0] == 3
        assert self.run(capsys, "pr", good, "--evidence", write(tmp_path, "e", "1 7 0"))[0] == 5
        assert self.run(capsys, "ent", good, "--evidence", write(tmp_path, "e2", "1 0 0"))[0] == 5
        zero = write(tmp_path, "z.uai", "MARKOV 1 2 1 1 0 2 0 0")
        assert self.run(capsys, "mar", zero)[0] == 5
        big = write(tmp_path, "p.chmm", write_chmm_params(random_params(13, 2, 2, 2, np.random.default_rng(0))))
        obs = write(tmp_path, "o.txt", write_observations(np.zeros((13, 2), dtype=int)))
        assert self.run(capsys, "chmm-em", big, "--evidence", obs)[0] == 4

    def test_determinism(self, tmp_path, capsys, rng):
        general = write(tmp_path, "r.uai", write_model(random_model(rng, 8)))
        pairwise = write(tmp_path, "b.uai", write_model(random_tree_model(rng, 6, max_card=2)))
        for task, m, extra in [("pr", general, []), ("mar", general, []), ("map", general, []),
                               ("tw", general, ["--heuristic", "rand", "--seed", 5]),
                               ("lbp", pairwise, ["--damping", 0.3]), ("mf", pairwise, ["--seed", 2])]:
            first = self.run(capsys, task, m, *extra)
            assert first[0] == 0, first[2]
            assert self.run(capsys, task, m, *extra)[1] == first[1]

    def test_bench(self, tmp_path, capsys, rng):
        trees = [write(tmp_path, f"tree{k:02d}.uai", write_model(random_tree_model(rng, int(rng.integers(3, 15)))))
                 for k in range(20)]
        code, out, _ = self.run(capsys, "bench", *trees)
        assert code == 0
        rows = [r.split(",") for r in out.splitlines()[1:]]
        assert len(rows) == 80
        assert {r[2] for r in rows} == {"1"}
        assert self.run(capsys, "bench", *trees)[1] == out

    def test_bench_grids(self, tmp_path, capsys):
        paths = []
        for r in range(2, 6):
            for c in range(r, 6):
                g = Graph(range(r * c))
                for a in range(r):
                    for b in range(c):
                        if a + 1 < r:
                            g.add_edge(a * c + b, (a + 1) * c + b)
                        if b + 1 < c:
                            g.add_edge(a * c + b, a * c + b + 1)
                paths.append((min(r, c), write(tmp_path, f"grid{r}x{c}.uai", write_model(graph_model(g)))))
        code, out, _ = self.run(capsys, "bench", *[p for _, p in paths], "--seed", 1)
        assert code == 0
        widths = {row.split(",")[0]: int(row.split(",")[2]) for row in out.splitlines()[1:]
                  if row.split(",")[1] == "rand"}
        for expected, path in paths:
            assert widths[path] == expected

    def test_bench_skips_unreadable(self, tmp_path, capsys, rng):
        good = write(tmp_path, "a.uai", write_model(random_tree_model(rng, 5)))
        bad = write(tmp_path, "b.uai", "junk")
        code, out, err = self.run(capsys, "bench", good, bad)
        assert code == 0 and "skipped" in err
        assert self.run(capsys, "bench", bad)[0] == 3
