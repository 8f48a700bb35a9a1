"""Stage-two re-ranking by masked mutual-NN local feature matching.

Only local features inside each image's binary discriminative mask take
part in matching, which cuts the pairwise-similarity work quadratically
in the kept fraction. No geometric verification is applied.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .core import DiscriminativeMask, LocalFeatureMap

# Running count of pairwise similarity evaluations, for efficiency checks.
_comparison_count = 0
_count_lock = threading.Lock()


def reset_comparison_count() -> None:
    global _comparison_count
    with _count_lock:
        _comparison_count = 0


def comparison_count() -> int:
    return _comparison_count


@dataclass(frozen=True)
class MaskedLocalSet:
    """Local features kept by a binary mask, with their grid coordinates."""

    coords: tuple[tuple[int, int], ...]
    features: np.ndarray

    def __len__(self) -> int:
        return len(self.coords)


def masked_features(local_map: LocalFeatureMap, mask: DiscriminativeMask) -> MaskedLocalSet:
    """Features at mask-1 positions in row-major order."""
    if mask.kind != "binary":
        raise ValueError("masked_features requires a binary mask")
    if mask.values.shape != local_map.grid_shape:
        raise ValueError(
            f"mask shape {mask.values.shape} != local map shape {local_map.grid_shape}"
        )
    ys, xs = np.nonzero(mask.values)
    coords = tuple((int(y), int(x)) for y, x in zip(ys, xs))
    depth = local_map.grid.shape[2]
    features = local_map.grid[ys, xs].reshape(len(coords), depth)
    return MaskedLocalSet(coords=coords, features=features)


def mutual_nn_matches(a: MaskedLocalSet, b: MaskedLocalSet) -> list[tuple[int, int, float]]:
    """Pairs (i, j, sim) where i and j are each other's best match."""
    global _comparison_count
    if len(a) == 0 or len(b) == 0:
        return []
    with _count_lock:
        _comparison_count += len(a) * len(b)
    idx_a, idx_b, sims = _kernels.mutual_nn(a.features, b.features)
    return [(int(i), int(j), float(s)) for i, j, s in zip(idx_a, idx_b, sims)]


@dataclass(frozen=True)
class RerankCandidate:
    id: str
    global_sim: float
    local_map: LocalFeatureMap
    mask: DiscriminativeMask


def match_score(query: MaskedLocalSet, candidate: MaskedLocalSet,
                count_matches: bool = False) -> float:
    matches = mutual_nn_matches(query, candidate)
    if count_matches:
        return float(len(matches))
    return float(sum(s for _, _, s in matches))


def rerank(
    query_local: LocalFeatureMap,
    query_mask: DiscriminativeMask,
    candidates: Sequence[RerankCandidate],
    count_matches: bool = False,
    threads: int = 1,
) -> list[tuple[str, float, float]]:
    """Reorder candidates by masked mutual-NN score.

    Ties fall back to global similarity, then to the input rank, so an
    all-empty matching stage reproduces the stage-one order.
    """
    if not candidates:
        raise ValueError("candidate list must be nonempty")
    query_set = masked_features(query_local, query_mask)

    def score_one(cand: RerankCandidate) -> float:
        cand_set = masked_features(cand.local_map, cand.mask)
        return match_score(query_set, cand_set, count_matches)

    if threads <= 1:
        scores = [score_one(c) for c in candidates]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(score_one, candidates))

    ranked = sorted(
        range(len(candidates)),
        key=lambda i: (-scores[i], -candidates[i].global_sim, i),
    )
    return [(candidates[i].id, scores[i], candidates[i].global_sim) for i in ranked]
