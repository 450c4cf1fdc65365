import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupled_decent.errors import InfeasibleInstance, InvalidParam, ShapeMismatch, SplitMismatch
from coupled_decent.graphs import make_graph
from coupled_decent.libsvm import parse_libsvm
from coupled_decent.oracle import dual_minimizer, kkt_oracle
from coupled_decent.problems import (ObjectiveBlock, ProblemInstance, chain_decay_ratio,
                                     gen_conditioned_quadratic, gen_lower_bound_instance,
                                     gen_resource_allocation, gen_synthetic_regression, gen_vfl,
                                     nominal_decay_ratio)
from coupled_decent.spectral import constraint_spectrum


def feasibility_certificate(inst):
    sol, *_ = np.linalg.lstsq(inst.A_row, inst.b_total, rcond=None)
    return float(np.linalg.norm(inst.A_row @ sol - inst.b_total))


class TestObjectiveBlock:
    def test_quadratic_constants(self):
        f = ObjectiveBlock.quadratic(np.diag([1.0, 4.0]), [0.0, 1.0])
        assert (f.mu_f_local, f.L_f_local) == (1.0, 4.0)
        assert np.array_equal(f.grad(np.zeros(2)), [0.0, 1.0])
        assert f.value(np.array([1.0, 0.0])) == 0.5

    def test_rejects_indefinite_and_asymmetric(self):
        with pytest.raises(InvalidParam):
            ObjectiveBlock.quadratic(np.diag([1.0, 0.0]), [0, 0])
        with pytest.raises(InvalidParam):
            ObjectiveBlock.quadratic([[1.0, 0.5], [0.0, 1.0]], [0, 0])
        with pytest.raises(ShapeMismatch):
            ObjectiveBlock.quadratic(np.eye(2), [0, 0, 0])

    def test_oracle_block(self):
        f = ObjectiveBlock.oracle(lambda x: 2 * x, 3, L=2.0, mu=2.0)
        assert np.array_equal(f.grad(np.ones(3)), [2, 2, 2])
        assert math.isnan(f.value(np.ones(3)))


class TestInstance:
    def test_shape_checks(self):
        g = make_graph("path", 2)
        f = ObjectiveBlock.quadratic(np.eye(2), np.zeros(2))
        with pytest.raises(ShapeMismatch):
            ProblemInstance(g, [f], [np.eye(2)], [np.zeros(2)])
        with pytest.raises(ShapeMismatch):
            ProblemInstance(g, [f, f], [np.eye(2), np.eye(3)], [np.zeros(2), np.zeros(3)])

    def test_infeasible_rejected(self):
        g = make_graph("path", 2)
        f = ObjectiveBlock.quadratic(np.eye(1), np.zeros(1))
        A = [np.array([[1.0], [0.0]]), np.array([[1.0], [0.0]])]
        with pytest.raises(InfeasibleInstance):
            ProblemInstance(g, [f, f], A, [np.array([0.0, 1.0]), np.zeros(2)])

    def test_global_constants(self):
        g = make_graph("path", 2)
        fs = [ObjectiveBlock.quadratic(np.diag([1.0, 3.0]), np.zeros(2)),
              ObjectiveBlock.quadratic(np.diag([0.5, 2.0]), np.zeros(2))]
        inst = ProblemInstance(g, fs, [np.eye(2)] * 2, [np.zeros(2)] * 2)
        assert (inst.L_f, inst.mu_f, inst.kappa_f) == (3.0, 0.5, 6.0)
        assert inst.dims == (2, 2) and inst.d == 4 and inst.m == 2

    def test_json_round_trip(self, tmp_path):
        g = make_graph("erdos_renyi", 8, 0.5, seed=1)
        inst = gen_synthetic_regression(8, 3, 4, 1e-2, g, seed=5)
        path = tmp_path / "inst.json"
        inst.save(path)
        back = ProblemInstance.load(path)
        assert back.graph == inst.graph
        for a, b in zip(inst.A, back.A):
            assert np.array_equal(a, b)
        for f, h in zip(inst.objectives, back.objectives):
            assert np.array_equal(f.Q, h.Q) and np.array_equal(f.c, h.c) and f.offset == h.offset

    def test_sparse_encoding_round_trip(self):
        inst, _ = gen_lower_bound_instance(3, 2.0, 1.0, 2.0, 1.0, 12)
        data = inst.to_dict()
        assert isinstance(data["blocks"][1]["A"], dict)
        back = ProblemInstance.from_dict(data)
        assert all(np.array_equal(a, b) for a, b in zip(inst.A, back.A))

    def test_oracle_blocks_not_loadable(self):
        g = make_graph("path", 2)
        f = ObjectiveBlock.oracle(lambda x: x, 1, 1.0, 1.0)
        inst = ProblemInstance(g, [f, f], [np.eye(1)] * 2, [np.zeros(1)] * 2)
        with pytest.raises(InvalidParam):
            ProblemInstance.from_dict(inst.to_dict())


class TestSynthetic:
    def test_shape(self):
        g = make_graph("erdos_renyi", 20, 0.3, seed=42)
        inst = gen_synthetic_regression(20, 3, 10, 1e-3, g, seed=0)
        assert (inst.n, inst.m, inst.d) == (20, 10, 60)
        assert inst.dims == (3,) * 20

    def test_zero_design_gives_identity(self):
        inst = gen_synthetic_regression(4, 2, 2, 1.0, make_graph("ring", 4), design_scale=0.0)
        for f in inst.objectives:
            assert np.array_equal(f.Q, np.eye(2))
        assert inst.mu_f == inst.L_f == 1.0

    def test_reproducible(self):
        g = make_graph("ring", 5)
        a = gen_synthetic_regression(5, 2, 3, 0.1, g, seed=9)
        b = gen_synthetic_regression(5, 2, 3, 0.1, g, seed=9)
        assert a.to_dict() == b.to_dict()

    def test_theta_positive(self):
        with pytest.raises(InvalidParam):
            gen_synthetic_regression(3, 2, 2, 0.0, make_graph("path", 3))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 8), st.integers(1, 4), st.integers(1, 12), st.integers(0, 2**31))
    def test_always_feasible(self, n, d_i, m, seed):
        # m may exceed the total dimension; b is then projected onto the range.
        inst = gen_synthetic_regression(n, d_i, m, 1e-2, make_graph("ring", n), seed=seed)
        assert feasibility_certificate(inst) <= 1e-10 * (1 + np.linalg.norm(inst.b_total))


class TestResourceAllocation:
    def test_two_nodes(self):
        inst = gen_resource_allocation(2, 1, [0.0, 0.0], [1.0], make_graph("path", 2))
        assert np.allclose(kkt_oracle(inst).x_flat, [0.5, 0.5], atol=1e-12)

    def test_closed_form(self, rng):
        n, d = 5, 3
        centers = rng.standard_normal((n, d))
        budget = rng.standard_normal(d)
        inst = gen_resource_allocation(n, d, centers, budget, make_graph("ring", n))
        expected = centers - (centers.sum(axis=0) - budget) / n
        assert np.allclose(kkt_oracle(inst).x_flat, expected.reshape(-1), atol=1e-10)

    def test_bad_centers(self):
        with pytest.raises(InvalidParam):
            gen_resource_allocation(3, 2, np.zeros(5), [0, 0], make_graph("path", 3))


class TestConditioned:
    @pytest.mark.parametrize("kappa", [1.0, 10.0, 100.0])
    def test_kappa_f(self, kappa):
        inst = gen_conditioned_quadratic(make_graph("ring", 4), 3, 2, kappa)
        assert inst.kappa_f == pytest.approx(kappa, rel=1e-10)

    def test_kappa_A_diagonal(self):
        inst = gen_conditioned_quadratic(make_graph("ring", 4), 4, 3, 5.0,
                                         constraint="diagonal", kappa_A=30.0)
        assert constraint_spectrum(inst.A).kappa_A == pytest.approx(30.0, rel=1e-10)

    def test_constraints_independent_of_kappa_f(self):
        g = make_graph("ring", 4)
        a = gen_conditioned_quadratic(g, 3, 2, 1.0, seed=3)
        b = gen_conditioned_quadratic(g, 3, 2, 50.0, seed=3)
        assert all(np.array_equal(x, y) for x, y in zip(a.A, b.A))


VFL_TEXT = """\
1 1:0.5 3:1 5:-1
-1 2:1 4:0.5
0.5 1:1 2:1 6:2
2 3:1 5:1 6:-0.5
"""


class TestVFL:
    def test_structure(self):
        ex = parse_libsvm(VFL_TEXT)
        inst = gen_vfl(ex, 0.1, make_graph("path", 3), [2, 2, 2])
        assert inst.m == 4
        assert inst.dims == (2 + 4, 2, 2)
        F = ex.to_dense()
        assert np.array_equal(inst.A[0], np.hstack([F[:, :2], -np.eye(4)]))
        assert np.array_equal(inst.A[2], F[:, 4:])
        assert all(np.array_equal(v, np.zeros(4)) for v in inst.b)

    def test_matches_centralized_ridge(self):
        ex = parse_libsvm(VFL_TEXT)
        lam = 0.1
        inst = gen_vfl(ex, lam, make_graph("path", 3), [2, 2, 2])
        x = kkt_oracle(inst).x_flat
        w = np.concatenate([x[:2], x[6:8], x[8:10]])
        F, l = ex.to_dense(), ex.labels
        # min 0.5||Fw - l||^2 + lam ||w||^2
        ridge = np.linalg.solve(F.T @ F + 2 * lam * np.eye(6), F.T @ l)
        assert np.allclose(w, ridge, atol=1e-9)
        assert np.allclose(x[2:6], F @ ridge, atol=1e-9)

    def test_split_mismatch(self):
        ex = parse_libsvm(VFL_TEXT)
        with pytest.raises(SplitMismatch):
            gen_vfl(ex, 0.1, make_graph("path", 3), [2, 2, 1])
        with pytest.raises(SplitMismatch):
            gen_vfl(ex, 0.1, make_graph("path", 2), [2, 2, 2])

    def test_lambda_positive(self):
        ex = parse_libsvm("1 1:1\n")
        with pytest.raises(InvalidParam):
            gen_vfl(ex, 0.0, make_graph("path", 2), [1, 0])


def interior_ratios(inst, meta):
    z = dual_minimizer(inst)
    k = np.arange(1, meta.dim // 2)
    return z[k + 1] / z[k]


class TestLowerBound:
    def test_constraint_constants_exact(self):
        inst, meta = gen_lower_bound_instance(6, 2.0, 1.0, 2.0, 1.0, 8)
        cs = constraint_spectrum(inst.A)
        assert cs.L_A == pytest.approx(2.0, abs=1e-10)
        assert cs.mu_A == pytest.approx(1.0, abs=1e-10)
        assert meta.L_hat == 0.25 and meta.mu_hat == 1.5
        assert 2 * meta.L_hat + meta.mu_hat == pytest.approx(2.0)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.1, 5.0), st.floats(1.5, 20.0), st.integers(3, 14))
    def test_constants_exact_property(self, mu_A, ratio, dim):
        inst, _ = gen_lower_bound_instance(3, 3.0, 1.0, ratio * mu_A, mu_A, dim)
        cs = constraint_spectrum(inst.A)
        assert cs.L_A == pytest.approx(ratio * mu_A, rel=1e-10)
        assert cs.mu_A == pytest.approx(mu_A, rel=1e-10)

    def test_group_structure(self):
        inst, meta = gen_lower_bound_instance(6, 2.0, 1.0, 2.0, 1.0, 8)
        assert meta.groups == ((0, 1), (2, 3), (4, 5))
        assert np.linalg.matrix_rank(inst.A[2]) == 1
        assert inst.graph == make_graph("path", 6)

    @pytest.mark.parametrize("n", [5, 0, 4])
    def test_divisibility(self, n):
        with pytest.raises(InvalidParam):
            gen_lower_bound_instance(n, 2.0, 1.0, 2.0, 1.0, 8)

    def test_L_hat_negative(self):
        with pytest.raises(InvalidParam):
            gen_lower_bound_instance(3, 2.0, 1.0, 1.0, 1.0, 8)

    def test_nominal_ratio(self):
        assert nominal_decay_ratio(1.0, 1.0, 2.0, 2.0) == pytest.approx(0.5, abs=1e-15)

    def test_chain_ratio_matches_dual_minimizer(self):
        # Independent check: homogeneous solution of the tridiagonal dual system.
        for params in [(2.0, 1.0, 2.0, 1.0), (10.0, 1.0, 4.0, 1.0), (5.0, 0.5, 30.0, 2.0)]:
            inst, meta = gen_lower_bound_instance(6, *params, dim=60)
            ratios = interior_ratios(inst, meta)
            assert np.allclose(ratios, chain_decay_ratio(meta), rtol=1e-5)
