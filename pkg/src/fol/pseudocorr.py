"""Pseudo-correspondence ground truth between a query and a positive view.

Patch pairs are inferred from shared cluster assignment: the query's most
discriminative patches are matched against positive-image patches assigned
to the same cluster, gated by an absolute similarity threshold and a
first-to-second ratio test. The output serves as weak supervision for
local feature learning; it is never used at query time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AssignmentMatrix, DiscriminativeMask, FeatureMap, cosine_sim


@dataclass(frozen=True)
class PseudoCorrConfig:
    thr1: float = 0.8
    thr2: float = 0.5
    n_max: int = 8

    def __post_init__(self):
        if not (0.0 < self.thr1 <= 1.0):
            raise ValueError("thr1 must be in (0, 1]")
        if not (0.0 < self.thr2 < 1.0):
            raise ValueError("thr2 must be in (0, 1)")
        if self.n_max <= 1:
            raise ValueError("n_max must be > 1")


@dataclass(frozen=True)
class Correspondence:
    p: int
    p_prime: int
    confidence: float


def _foreground_argmax(assignment: AssignmentMatrix) -> np.ndarray:
    # Hard cluster id per token over the non-dustbin columns.
    return assignment.plan[:, : assignment.m].argmax(axis=1)


def build_correspondences(
    mask_q: DiscriminativeMask,
    features_q: FeatureMap,
    features_pos: FeatureMap,
    plan_q: AssignmentMatrix,
    plan_pos: AssignmentMatrix,
    cfg: PseudoCorrConfig | None = None,
) -> list[Correspondence]:
    """Match query patches to positive patches sharing their cluster.

    Query patches are visited in decreasing mask order (ties to the lower
    flat index). A candidate set with exactly one member skips the ratio
    test; each positive patch is consumed by at most one pair.
    """
    cfg = cfg or PseudoCorrConfig()
    n_q = features_q.n_tokens
    n_pos = features_pos.n_tokens
    if mask_q.values.shape != features_q.grid_shape:
        raise ValueError("query mask not aligned with query features")
    if plan_q.n_tokens != n_q or plan_pos.n_tokens != n_pos:
        raise ValueError("assignment rows do not match feature grids")

    feats_q = features_q.patches_flat()
    feats_pos = features_pos.patches_flat()
    clusters_q = _foreground_argmax(plan_q)
    clusters_pos = _foreground_argmax(plan_pos)

    # -mask then index: stable sort gives decreasing value, lower index first.
    order = np.argsort(-mask_q.flat(), kind="stable")
    used_pos = np.zeros(n_pos, dtype=bool)
    out: list[Correspondence] = []
    for p in order:
        if len(out) >= cfg.n_max:
            break
        candidates = np.flatnonzero((clusters_pos == clusters_q[p]) & ~used_pos)
        if candidates.size == 0:
            continue
        sims = np.array([cosine_sim(feats_q[p], feats_pos[c]) for c in candidates])
        ranked = np.argsort(-sims, kind="stable")
        best = ranked[0]
        sim1 = sims[best]
        if sim1 <= cfg.thr1:
            continue
        if candidates.size > 1:
            sim2 = sims[ranked[1]]
            if sim2 / sim1 >= cfg.thr2:
                continue
        p_prime = int(candidates[best])
        used_pos[p_prime] = True
        out.append(Correspondence(p=int(p), p_prime=p_prime, confidence=float(sim1)))
    return out
