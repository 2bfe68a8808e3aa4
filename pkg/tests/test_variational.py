import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmelim.elimination import log_partition, marginal
from gmelim.errors import ParameterError, StructureError
from gmelim.generators import random_graph
from gmelim.model import Factor, GraphicalModel
from gmelim.variational import (
    PottsModel,
    fixed_point_residual,
    kl_divergence,
    mean_field_fit,
    mf_objective,
    potts_from_model,
    potts_to_model,
    random_potts,
    sigmoid,
)


class TestMeanField:
    def test_independent_case_is_exact(self, rng):
        a = rng.normal(size=6)
        m = PottsModel(a)
        state = mean_field_fit(m)
        np.testing.assert_allclose(state.q, np.exp(a) / (1 + np.exp(a)), rtol=1e-14)
        gm = potts_to_model(m)
        for i in range(6):
            assert state.q[i] == pytest.approx(marginal(gm, [i]).values[1], rel=1e-12)

    @pytest.mark.parametrize("b", [-2.0, 0.0, 1.5])
    def test_two_node_symmetry(self, b):
        state = mean_field_fit(PottsModel([0.0, 0.0], {(0, 1): b}))
        assert state.q[0] == pytest.approx(state.q[1], abs=1e-8)
        if b == 0.0:
            np.testing.assert_allclose(state.q, [0.5, 0.5])

    def test_triangle(self, rng):
        m = random_potts(3, [(0, 1), (1, 2), (0, 2)], rng)
        state = mean_field_fit(m)
        assert state.converged
        for i in range(3):
            assert state.q[i] == pytest.approx(float(sigmoid(m.field_at(i, state.q))), abs=1e-9)
        baseline = sigmoid(m.a)
        assert state.free_energy <= mf_objective(m, baseline) + 1e-12

    def test_monotone_descent(self, rng):
        for _ in range(10):
            g = random_graph(rng, 10, 0.4)
            m = random_potts(10, g.edges(), rng, coupling_scale=2.0)
            state = mean_field_fit(m, init="random", seed=int(rng.integers(1000)))
            assert np.all(np.diff(state.history) <= 1e-12)
            assert fixed_point_residual(m, state.q) < 1e-9

    def test_random_init_is_seeded(self, rng):
        m = random_potts(5, [(0, 1), (1, 2)], rng)
        a = mean_field_fit(m, init="random", seed=3)
        b = mean_field_fit(m, init="random", seed=3)
        np.testing.assert_array_equal(a.q, b.q)
        with pytest.raises(ValueError):
            mean_field_fit(m, init="zeros")
        with pytest.raises(ValueError):
            mean_field_fit(m, tol=0)

    def test_attractive_chain_band(self, rng):
        n = 8
        m = PottsModel(rng.uniform(-1, 1, n), {(i, i + 1): float(rng.uniform(0, 0.2)) for i in range(n - 1)})
        state = mean_field_fit(m)
        gm = potts_to_model(m)
        for i in range(n):
            assert abs(state.q[i] - marginal(gm, [i]).values[1]) < 0.05


class TestObjectiveAndKL:
    def test_hand_value(self):
        m = PottsModel([0.0, 0.0])
        assert mf_objective(m, [0.5, 0.5]) == pytest.approx(-2 * np.log(2))
        assert -log_partition(potts_to_model(m)) == pytest.approx(-2 * np.log(2))

    def test_identity_with_kl(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 9))
            g = random_graph(rng, n, 0.5)
            m = random_potts(n, g.edges(), rng)
            q = rng.uniform(0, 1, n)
            gm = potts_to_model(m)
            kl = kl_divergence(q, gm)
            assert kl >= 0
            assert mf_objective(m, q) + log_partition(gm) == pytest.approx(kl, abs=1e-9)

    def test_kl_zero_cases(self):
        m = PottsModel([0.3, -0.2])
        gm = potts_to_model(m)
        assert kl_divergence(sigmoid(m.a), gm) == pytest.approx(0.0, abs=1e-12)
        uniform = potts_to_model(PottsModel([0.0, 0.0, 0.0]))
        assert kl_divergence([0.5, 0.5, 0.5], uniform) == pytest.approx(0.0, abs=1e-12)

    def test_kl_support_violation(self):
        gm = GraphicalModel.from_cards([2], [Factor((0,), [1.0, 0.0])])
        assert kl_divergence([0.5], gm) == np.inf
        assert kl_divergence([[1.0, 0.0]], gm) == pytest.approx(0.0)
        with pytest.raises(StructureError):
            kl_divergence([0.5, 0.5], gm)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=3, max_size=3), st.floats(-3, 3))
    def test_objective_bounds_minus_log_z(self, q, b):
        m = PottsModel([0.2, -0.1, 0.4], {(0, 1): b, (1, 2): -b})
        assert mf_objective(m, q) + log_partition(potts_to_model(m)) >= -1e-10


class TestConversion:
    def test_round_trip(self, rng):
        m = random_potts(5, [(0, 1), (1, 2), (3, 4)], rng)
        back = potts_from_model(potts_to_model(m))
        np.testing.assert_allclose(back.a, m.a, atol=1e-12)
        for e, w in m.b.items():
            assert back.b[e] == pytest.approx(w)

    def test_general_tables_preserve_distribution(self, rng):
        factors = [Factor((0, 1), rng.uniform(0.5, 2, (2, 2))), Factor((1,), rng.uniform(0.5, 2, 2)),
                   Factor((1, 2), rng.uniform(0.5, 2, (2, 2)))]
        gm = GraphicalModel.from_cards([2, 2, 2], factors)
        p = potts_from_model(gm)
        assert log_partition(potts_to_model(p)) == pytest.approx(log_partition(gm), rel=1e-12)
        for v in range(3):
            np.testing.assert_allclose(marginal(potts_to_model(p), [v]).values, marginal(gm, [v]).values)

    def test_rejects_non_binary_and_zeros(self):
        with pytest.raises(ParameterError):
            potts_from_model(GraphicalModel.from_cards([3], [Factor((0,), [1, 1, 1])]))
        with pytest.raises(ParameterError):
            potts_from_model(GraphicalModel.from_cards([2], [Factor((0,), [1, 0])]))

    def test_bad_edges(self):
        with pytest.raises(StructureError):
            PottsModel([0.0, 0.0], {(0, 0): 1.0})
        with pytest.raises(StructureError):
            PottsModel([0.0, 0.0], {(0, 5): 1.0})
