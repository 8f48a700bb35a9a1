"""Forward-only loss kernels.

These are numerical kernels, not training code: no gradients are
computed. Where a training recipe stops gradients (the contrast loss
freezes the backbone features), that is a documentation note here.
"""

from __future__ import annotations

import math
import warnings
from typing import Sequence

import numpy as np

from . import _kernels
from .core import (
    DegenerateInputError,
    DiscriminativeMask,
    FeatureMap,
    GlobalDescriptor,
    LocalFeatureMap,
    LossConfig,
    cosine_sim,
)
from .regions import smooth_mask

# Floor applied to the denominator side of a KL term whose numerator side
# is positive; a zero numerator contributes exactly 0.
_KL_EPS = 1e-12


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    total = 0.0
    for pi, qi in zip(p, q):
        if pi > 0.0:
            total += pi * math.log(pi / max(qi, _KL_EPS))
    return total


def sal_loss(mask_a: DiscriminativeMask, mask_e: DiscriminativeMask,
             cfg: LossConfig | None = None) -> float:
    """Symmetric KL (Jeffreys) divergence between the two smoothed masks."""
    cfg = cfg or LossConfig()
    if mask_a.values.shape != mask_e.values.shape:
        raise ValueError(
            f"mask shapes differ: {mask_a.values.shape} vs {mask_e.values.shape}"
        )
    a = smooth_mask(mask_a, cfg.smoothing_percentile).flat()
    e = smooth_mask(mask_e, cfg.smoothing_percentile).flat()
    return _kl(a, e) + _kl(e, a)


def prototypes(mask: DiscriminativeMask, features) -> tuple[np.ndarray, np.ndarray]:
    """Foreground and background prototypes under mask weights.

    f_fg normalizes the M-weighted feature sum; f_bg uses weights 1 - M(i)
    taken literally on the distribution-valued mask.
    """
    feats = features.patches if isinstance(features, FeatureMap) else np.asarray(
        features, dtype=np.float64
    )
    if feats.ndim != 3 or feats.shape[:2] != mask.values.shape:
        raise ValueError(
            f"features {feats.shape} not aligned with mask {mask.values.shape}"
        )
    flat = feats.reshape(-1, feats.shape[2])
    w = mask.flat()
    fg = (w[:, None] * flat).sum(axis=0, dtype=np.float64)
    bg = ((1.0 - w)[:, None] * flat).sum(axis=0, dtype=np.float64)
    fg_norm = np.linalg.norm(fg)
    bg_norm = np.linalg.norm(bg)
    if fg_norm == 0.0 or bg_norm == 0.0:
        raise DegenerateInputError("prototype weighted sum has zero norm")
    return fg / fg_norm, bg / bg_norm


def cel_loss(f_fg, f_fg_pos, f_bg, cfg: LossConfig | None = None) -> float:
    """Triplet-style contrast: max(0, margin - (fg.fg_pos - fg.bg))."""
    cfg = cfg or LossConfig()
    f_fg = np.asarray(f_fg, dtype=np.float64)
    pos = float(np.dot(f_fg, np.asarray(f_fg_pos, dtype=np.float64)))
    neg = float(np.dot(f_fg, np.asarray(f_bg, dtype=np.float64)))
    return max(0.0, cfg.margin - (pos - neg))


def pc_loss(pairs: Sequence[tuple]) -> float:
    """Confidence-weighted descriptor disagreement over pseudo pairs.

    Each pair is (f_query, f_pos, d_query, d_pos): backbone features set
    the confidence weight exp(sim(f, f')), local descriptors pay the cost
    1 - sim(d, d').
    """
    if len(pairs) == 0:
        raise DegenerateInputError("pc_loss requires at least one pair")
    num = 0.0
    den = 0.0
    for f_q, f_p, d_q, d_p in pairs:
        weight = math.exp(cosine_sim(f_q, f_p))
        num += weight * (1.0 - cosine_sim(d_q, d_p))
        den += weight
    return num / den


def ms_loss(descriptors, labels, *, pos_scale: float = 1.0, neg_scale: float = 50.0,
            offset: float = 0.5, pos_margin: float = 0.1, neg_margin: float = 0.1) -> float:
    """Multi-similarity loss with online hard mining.

    Positives are kept when their similarity is below max_neg + pos_margin,
    negatives when above min_pos - neg_margin; an anchor with no same-label
    partner keeps all its negatives (nothing to mine against). A one-class
    batch cannot be contrasted and returns 0 with a warning.
    """
    mat = _descriptor_matrix(descriptors)
    labels = list(labels)
    if len(labels) != mat.shape[0]:
        raise ValueError(f"{len(labels)} labels for {mat.shape[0]} descriptors")
    if len(set(labels)) < 2:
        warnings.warn("ms_loss: single-class batch, returning 0", stacklevel=2)
        return 0.0
    sims = mat @ mat.T
    labels_arr = np.asarray(labels)
    total = 0.0
    for a in range(mat.shape[0]):
        same = labels_arr == labels_arr[a]
        pos_idx = np.flatnonzero(same)
        pos_idx = pos_idx[pos_idx != a]
        neg_idx = np.flatnonzero(~same)
        s_pos = sims[a, pos_idx]
        s_neg = sims[a, neg_idx]
        if pos_idx.size:
            mined_pos = s_pos[s_pos < s_neg.max() + pos_margin]
            mined_neg = s_neg[s_neg > s_pos.min() - neg_margin]
        else:
            mined_pos = s_pos
            mined_neg = s_neg
        anchor = 0.0
        if mined_pos.size:
            anchor += math.log1p(np.exp(-pos_scale * (mined_pos - offset)).sum()) / pos_scale
        if mined_neg.size:
            anchor += math.log1p(np.exp(neg_scale * (mined_neg - offset)).sum()) / neg_scale
        total += anchor
    return total / mat.shape[0]


def _descriptor_matrix(descriptors) -> np.ndarray:
    if len(descriptors) and isinstance(descriptors[0], GlobalDescriptor):
        return np.stack([d.vector for d in descriptors])
    mat = np.asarray(descriptors, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] < 2:
        raise ValueError(f"descriptors must be (B >= 2, D), got {mat.shape}")
    return mat


def mnn_loss(query: LocalFeatureMap, positive: LocalFeatureMap) -> float:
    """Mean (1 - sim) over mutual nearest-neighbor local feature pairs."""
    _, _, sims = _kernels.mutual_nn(query.flat(), positive.flat())
    if sims.size == 0:
        return 0.0
    return float(np.mean(1.0 - sims))


def total_loss(ms: float, mnn: float, ce: float, sa: float, pc: float,
               cfg: LossConfig | None = None) -> float:
    """Weighted sum of all loss parts: ms + mnn + ce + alpha*sa + beta*pc."""
    cfg = cfg or LossConfig()
    parts = (ms, mnn, ce, sa, pc)
    if not all(math.isfinite(p) for p in parts):
        raise ValueError(f"loss parts must be finite, got {parts}")
    return ms + mnn + ce + cfg.alpha * sa + cfg.beta * pc
