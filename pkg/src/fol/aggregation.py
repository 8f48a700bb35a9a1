"""Optimal-transport feature aggregation into a global descriptor.

Features are scored against learnable clusters plus a dustbin column,
balanced with the Sinkhorn algorithm, and the resulting plan weights the
feature sum per cluster. The final descriptor concatenates the scene
vector with the flattened, intra-normalized cluster aggregate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import (
    AssignmentMatrix,
    ClusterParams,
    DegenerateInputError,
    FeatureMap,
    GlobalDescriptor,
)


@dataclass(frozen=True)
class SinkhornConfig:
    max_iterations: int = 100
    tolerance: float = 1e-6
    log_domain: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")


def _features_2d(features) -> np.ndarray:
    if isinstance(features, FeatureMap):
        return features.aggregation_features()
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr.reshape(-1, arr.shape[2])
    if arr.ndim != 2:
        raise ValueError(f"features must be (n, d) or (h, w, d), got {arr.shape}")
    return arr


def score_matrix(features, clusters: ClusterParams) -> np.ndarray:
    """Cluster-affinity logits: (n, m+1) with the dustbin as the last column."""
    feats = _features_2d(features)
    if feats.shape[1] != clusters.dim:
        raise ValueError(
            f"feature dim {feats.shape[1]} != cluster weight dim {clusters.dim}"
        )
    logits = feats @ clusters.weights.T + clusters.biases[None, :]
    out = np.empty((feats.shape[0], clusters.m + 1), dtype=np.float64)
    out[:, : clusters.m] = logits
    out[:, clusters.m] = clusters.dustbin_score
    return out


def sinkhorn(logits, config: SinkhornConfig | None = None) -> AssignmentMatrix:
    """Balance logits into a transport plan with uniform marginals.

    Row sums converge to 1/n and column sums to 1/(m+1). Non-convergence
    within ``max_iterations`` is reported through the ``converged`` flag,
    not an exception.
    """
    config = config or SinkhornConfig()
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise ValueError(f"logits must be (n, m+1) with m >= 1, got {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits contain non-finite entries")
    n, cols = logits.shape
    mu = np.full(n, 1.0 / n)
    kappa = np.full(cols, 1.0 / cols)
    if config.log_domain:
        log_plan, _, converged = _kernels.sinkhorn_log(
            logits, mu, kappa, config.max_iterations, config.tolerance
        )
        plan = np.exp(log_plan)
    else:
        plan, converged = _sinkhorn_exp(
            logits, mu, kappa, config.max_iterations, config.tolerance
        )
    return AssignmentMatrix(plan=plan, m=cols - 1, converged=converged)


def _sinkhorn_exp(logits, mu, kappa, max_iterations, tolerance):
    # Direct scaling variant; kept for parity checks against the log path.
    plan = np.exp(logits - logits.max())
    converged = False
    for _ in range(max_iterations):
        plan *= (mu / plan.sum(axis=1))[:, None]
        plan *= (kappa / plan.sum(axis=0))[None, :]
        row_dev = np.abs(plan.sum(axis=1) - mu).max()
        col_dev = np.abs(plan.sum(axis=0) - kappa).max()
        if max(row_dev, col_dev) <= tolerance:
            converged = True
            break
    return plan, converged


def drop_dustbin(assignment: AssignmentMatrix) -> np.ndarray:
    """First m columns of the plan, dustbin removed, values untouched."""
    return assignment.plan[:, : assignment.m].copy()


def aggregate(plan_nodust, features) -> np.ndarray:
    """Plan-weighted feature sums per cluster: V[j, k] = sum_i P[i, j] f[i, k]."""
    plan = np.asarray(plan_nodust, dtype=np.float64)
    feats = _features_2d(features)
    if plan.ndim != 2:
        raise ValueError(f"plan must be 2-D, got shape {plan.shape}")
    if plan.shape[0] != feats.shape[0]:
        raise ValueError(
            f"plan rows {plan.shape[0]} != feature rows {feats.shape[0]}"
        )
    return plan.T @ feats


def global_descriptor(scene_vector, cluster_aggregate) -> GlobalDescriptor:
    """L2Norm([g; L2Norm(V)]) with V flattened row-major.

    The inner normalization treats V as one vector. An all-zero V passes
    through as zeros so the descriptor can still be formed from g alone;
    only an all-zero concatenation is an error.
    """
    g = np.asarray(scene_vector, dtype=np.float64).reshape(-1)
    v = np.asarray(cluster_aggregate, dtype=np.float64).reshape(-1)
    v_norm = np.linalg.norm(v)
    if v_norm > 0.0:
        v = v / v_norm
    full = np.concatenate([g, v])
    norm = np.linalg.norm(full)
    if norm == 0.0:
        raise DegenerateInputError("scene vector and cluster aggregate are both zero")
    return GlobalDescriptor(vector=full / norm)
