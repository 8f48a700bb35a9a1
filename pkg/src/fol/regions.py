"""Discriminative-region mask construction.

Two cues are combined: the extractor mask (cls attention averaged over
heads) and the aggregator mask (per-token foreground transport mass),
fused by averaging. Fused masks are smoothed, binarized to a top-k
subset, and upsampled to the local-feature resolution for re-ranking.
"""

from __future__ import annotations

import math

import numpy as np

from .core import (
    AssignmentMatrix,
    AttentionStack,
    DegenerateInputError,
    DiscriminativeMask,
)


def attention_mask(attention: AttentionStack, h_p: int, w_p: int) -> DiscriminativeMask:
    """Head-averaged cls attention, normalized to a spatial distribution."""
    n = h_p * w_p
    if attention.n_tokens != n:
        raise ValueError(
            f"attention length {attention.n_tokens} != grid size {h_p}x{w_p}"
        )
    mean = attention.heads.mean(axis=0, dtype=np.float64)
    total = mean.sum()
    if total == 0.0:
        raise DegenerateInputError("attention is zero everywhere")
    return DiscriminativeMask(values=(mean / total).reshape(h_p, w_p), kind="extractor")


def aggregation_mask(assignment: AssignmentMatrix, h_p: int, w_p: int) -> DiscriminativeMask:
    """Foreground transport mass per token, softmax-normalized spatially.

    The per-token mass (row sum excluding the dustbin) is divided by its
    mean before the softmax so the sharpness does not depend on n.
    """
    n = h_p * w_p
    if assignment.n_tokens != n:
        raise ValueError(f"plan rows {assignment.n_tokens} != grid size {h_p}x{w_p}")
    raw = assignment.plan[:, : assignment.m].sum(axis=1, dtype=np.float64)
    tau = raw.mean()
    scaled = raw / tau if tau > 0.0 else np.zeros_like(raw)
    scaled -= scaled.max()
    weights = np.exp(scaled)
    values = weights / weights.sum()
    return DiscriminativeMask(values=values.reshape(h_p, w_p), kind="aggregator")


def nearest_rank_percentile(values, q: float) -> float:
    """Order-statistic percentile: the value at ascending rank ceil(q/100 * n)."""
    flat = np.sort(np.asarray(values, dtype=np.float64), axis=None)
    rank = math.ceil(q / 100.0 * flat.size)
    rank = min(max(rank, 1), flat.size)
    return float(flat[rank - 1])


def smooth_mask(mask: DiscriminativeMask, percentile: float = 10.0) -> DiscriminativeMask:
    """Clamp the top ``percentile`` percent of values and renormalize.

    The clamp level is the (100 - p)-th percentile, so at most that top
    fraction of entries changes. A mask whose mass lies entirely in the
    clamped entries is returned unchanged.
    """
    if mask.kind == "binary":
        raise ValueError("smooth_mask applies to distribution-kind masks")
    if not (0.0 < percentile < 100.0):
        raise ValueError("percentile must be in (0, 100)")
    cutoff = nearest_rank_percentile(mask.values, 100.0 - percentile)
    clamped = np.minimum(mask.values, cutoff)
    total = clamped.sum(dtype=np.float64)
    if total == 0.0:
        return mask
    return DiscriminativeMask(values=clamped / total, kind=mask.kind)


def fuse(mask_e: DiscriminativeMask, mask_a: DiscriminativeMask) -> DiscriminativeMask:
    """Elementwise mean of the extractor and aggregator masks."""
    if mask_e.kind == "binary" or mask_a.kind == "binary":
        raise ValueError("fuse applies to distribution-kind masks")
    if mask_e.values.shape != mask_a.values.shape:
        raise ValueError(
            f"mask shapes differ: {mask_e.values.shape} vs {mask_a.values.shape}"
        )
    return DiscriminativeMask(values=(mask_e.values + mask_a.values) / 2.0, kind="fused")


def binarize_topk(mask: DiscriminativeMask, fraction: float = 0.40) -> DiscriminativeMask:
    """Binary mask selecting the floor(fraction * n) largest entries.

    Ties at the threshold resolve to the lower row-major index.
    """
    if not (0.0 < fraction <= 1.0):
        raise ValueError("fraction must be in (0, 1]")
    flat = mask.flat()
    # Nudge before flooring so decimal fractions behave exactly
    # (0.7 * 90 is 62.999... in binary but means 63).
    t = int(math.floor(fraction * flat.size + 1e-9))
    order = np.argsort(-flat, kind="stable")
    out = np.zeros(flat.size, dtype=np.float64)
    out[order[:t]] = 1.0
    return DiscriminativeMask(values=out.reshape(mask.values.shape), kind="binary")


def upsample_mask(mask_bin: DiscriminativeMask, h_l: int, w_l: int) -> DiscriminativeMask:
    """Nearest-neighbor upsampling of a binary mask to (h_l, w_l)."""
    if mask_bin.kind != "binary":
        raise ValueError("upsample_mask applies to binary masks")
    h_p, w_p = mask_bin.values.shape
    if h_l < h_p or w_l < w_p:
        raise ValueError(
            f"target ({h_l}, {w_l}) must be >= source ({h_p}, {w_p})"
        )
    ys = (np.arange(h_l) * h_p) // h_l
    xs = (np.arange(w_l) * w_p) // w_l
    return DiscriminativeMask(values=mask_bin.values[np.ix_(ys, xs)], kind="binary")
