"""Aggregation: score logits, Sinkhorn balancing, descriptor assembly."""

import numpy as np
import pytest

from fol import _kernels
from fol.aggregation import (
    SinkhornConfig,
    aggregate,
    drop_dustbin,
    global_descriptor,
    score_matrix,
    sinkhorn,
)
from fol.core import AssignmentMatrix, ClusterParams, DegenerateInputError


def reference_sinkhorn(logits, iterations):
    """Brute-force alternating normalization in probability space."""
    p = np.exp(np.asarray(logits, dtype=np.float64) - np.max(logits))
    n, k = p.shape
    for _ in range(iterations):
        p *= (1.0 / n) / p.sum(axis=1, keepdims=True)
        p *= (1.0 / k) / p.sum(axis=0, keepdims=True)
    return p


def clusters_of(weights, biases=None, dustbin=0.0):
    weights = np.asarray(weights, dtype=np.float64)
    if biases is None:
        biases = np.zeros(weights.shape[0])
    return ClusterParams(weights=weights, biases=np.asarray(biases, float),
                         dustbin_score=dustbin)


class TestScoreMatrix:
    def test_zero_features_give_bias_columns(self, rng):
        cp = clusters_of(rng.normal(size=(3, 4)), biases=[0.5, -1.0, 2.0])
        z = score_matrix(np.zeros((5, 4)), cp)
        for j, b in enumerate([0.5, -1.0, 2.0]):
            np.testing.assert_allclose(z[:, j], b)

    def test_self_weight_dot(self):
        f = np.array([[1.0, 1.0]])  # squared norm 2
        cp = clusters_of(f, biases=[0.0])
        z = score_matrix(f, cp)
        assert z[0, 0] == pytest.approx(2.0)

    def test_dustbin_column_constant(self, rng):
        cp = clusters_of(rng.normal(size=(3, 4)), dustbin=-1.0)
        z = score_matrix(rng.normal(size=(6, 4)), cp)
        np.testing.assert_array_equal(z[:, 3], -1.0)
        assert z.shape == (6, 4)

    def test_dim_mismatch(self, rng):
        cp = clusters_of(rng.normal(size=(3, 4)))
        with pytest.raises(ValueError, match="dim"):
            score_matrix(rng.normal(size=(6, 5)), cp)


class TestSinkhorn:
    def test_uniform_logits_uniform_plan(self):
        n = 4
        out = sinkhorn(np.ones((n, n)) * 2.5)
        np.testing.assert_allclose(out.plan, 1.0 / (n * n), atol=1e-12)
        assert out.converged

    def test_concentration_against_reference(self):
        logits = np.array([[0.0, 0.0], [0.0, 10.0]])
        out = sinkhorn(logits, SinkhornConfig(max_iterations=5000, tolerance=1e-10))
        ref = reference_sinkhorn(logits, 10_000)
        np.testing.assert_allclose(out.plan, ref, atol=1e-8)
        assert out.plan[0, 0] > out.plan[0, 1]
        assert out.plan[1, 1] > out.plan[1, 0]
        assert out.marginal_violation() <= 1e-6

    def test_three_by_three_matches_long_reference(self, rng):
        logits = rng.normal(size=(3, 3)) * 2.0
        out = sinkhorn(logits, SinkhornConfig(max_iterations=10_000, tolerance=1e-13))
        ref = reference_sinkhorn(logits, 100_000)
        assert out.converged
        np.testing.assert_allclose(out.plan, ref, atol=1e-8)

    def test_marginals_postcondition(self, rng):
        for _ in range(25):
            n = int(rng.integers(2, 20))
            m = int(rng.integers(1, 8))
            out = sinkhorn(rng.normal(size=(n, m + 1)) * 3.0)
            assert out.converged
            np.testing.assert_allclose(out.plan.sum(axis=1), 1.0 / n, atol=1e-6)
            np.testing.assert_allclose(out.plan.sum(axis=0), 1.0 / (m + 1), atol=1e-6)

    def test_nonconvergence_flag_not_error(self, rng):
        logits = rng.normal(size=(6, 4)) * 5.0
        out = sinkhorn(logits, SinkhornConfig(max_iterations=1, tolerance=1e-14))
        assert not out.converged
        assert isinstance(out, AssignmentMatrix)

    def test_shift_invariance(self, rng):
        logits = rng.normal(size=(8, 5))
        a = sinkhorn(logits).plan
        b = sinkhorn(logits + 123.0).plan
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_exp_domain_parity(self, rng):
        logits = rng.normal(size=(7, 4))
        a = sinkhorn(logits, SinkhornConfig(log_domain=True)).plan
        b = sinkhorn(logits, SinkhornConfig(log_domain=False)).plan
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError, match="non-finite"):
            sinkhorn(np.array([[0.0, np.inf]]))

    @pytest.mark.skipif(not _kernels.NUMBA_AVAILABLE, reason="numba not installed")
    def test_backends_agree(self, rng):
        for _ in range(10):
            logits = rng.normal(size=(9, 6)) * 2.0
            mu = np.full(9, 1.0 / 9)
            kappa = np.full(6, 1.0 / 6)
            log_a, it_a, conv_a = _kernels.sinkhorn_log_numpy(logits, mu, kappa, 200, 1e-8)
            log_b, it_b, conv_b = _kernels.sinkhorn_log_numba(logits, mu, kappa, 200, 1e-8)
            assert (it_a, conv_a) == (it_b, conv_b)
            np.testing.assert_allclose(np.exp(log_a), np.exp(log_b), atol=1e-12)


class TestDropDustbin:
    def test_single_cluster(self):
        am = AssignmentMatrix(plan=np.array([[0.3, 0.7]]), m=1)
        np.testing.assert_array_equal(drop_dustbin(am), [[0.3]])

    def test_shape_and_values(self, rng):
        plan = rng.uniform(size=(5, 4))
        am = AssignmentMatrix(plan=plan, m=3)
        out = drop_dustbin(am)
        assert out.shape == (5, 3)
        assert out.tobytes() == plan[:, :3].tobytes()


class TestAggregate:
    def test_one_hot_rows_sum_assigned_features(self, rng):
        feats = rng.normal(size=(4, 3))
        plan = np.zeros((4, 2))
        plan[:2, 0] = 1.0
        plan[2:, 1] = 1.0
        v = aggregate(plan, feats)
        np.testing.assert_allclose(v[0], feats[:2].sum(axis=0))
        np.testing.assert_allclose(v[1], feats[2:].sum(axis=0))

    def test_uniform_plan_gives_scaled_mean(self):
        feats = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        n, m = 3, 2
        plan = np.full((n, m), 1.0 / (n * m))
        v = aggregate(plan, feats)
        expected_row = feats.mean(axis=0) / m  # = (1.5, 2.0)
        for j in range(m):
            np.testing.assert_allclose(v[j], expected_row)

    def test_scalar_case(self):
        np.testing.assert_allclose(
            aggregate(np.array([[0.5]]), np.array([[2.0]])), [[1.0]]
        )

    def test_linearity(self, rng):
        plan = rng.uniform(size=(6, 3))
        f = rng.normal(size=(6, 4))
        g = rng.normal(size=(6, 4))
        lhs = aggregate(plan, 2.5 * f - 0.5 * g)
        rhs = 2.5 * aggregate(plan, f) - 0.5 * aggregate(plan, g)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError, match="rows"):
            aggregate(rng.uniform(size=(5, 2)), rng.normal(size=(4, 3)))


class TestGlobalDescriptor:
    def test_scene_vector_only(self):
        d = global_descriptor(np.array([1.0, 0.0]), np.zeros((1, 2)))
        np.testing.assert_allclose(d.vector, [1.0, 0.0, 0.0, 0.0])

    def test_cluster_block_only(self):
        # 3-4-5 triangle: inner normalization yields (0.6, 0.8).
        d = global_descriptor(np.zeros(2), np.array([[3.0, 4.0]]))
        np.testing.assert_allclose(d.vector, [0.0, 0.0, 0.6, 0.8])

    def test_unit_norm_always(self, rng):
        for _ in range(50):
            d = global_descriptor(rng.normal(size=5), rng.normal(size=(3, 4)))
            assert abs(np.linalg.norm(d.vector) - 1.0) <= 1e-6
            assert d.dim == 17

    def test_all_zero_rejected(self):
        with pytest.raises(DegenerateInputError):
            global_descriptor(np.zeros(2), np.zeros((2, 2)))
