"""Shared domain types and elementary vector math.

All array-holding types validate their invariants on construction and are
frozen afterwards; instances are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class FolError(Exception):
    """Base class for errors raised by this package."""


class DegenerateInputError(FolError, ValueError):
    """An input is mathematically unusable (zero norm, empty set, ...)."""


class FoltFormatError(FolError, ValueError):
    """A tensor file is malformed; the message names the byte offset."""


def _as_float_array(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class FeatureMap:
    """Patch-token grid plus cls token from a backbone.

    ``patches`` is (h, w, d); ``cls`` is (d,); ``reduced`` optionally holds
    (h, w, l) dimensionality-reduced features used by the aggregator.
    """

    patches: np.ndarray
    cls: np.ndarray
    reduced: Optional[np.ndarray] = None

    def __post_init__(self):
        patches = _as_float_array(self.patches, "patches")
        cls = _as_float_array(self.cls, "cls")
        if patches.ndim != 3:
            raise ValueError(f"patches must be (h, w, d), got shape {patches.shape}")
        h, w, d = patches.shape
        if h < 1 or w < 1 or d < 1:
            raise ValueError(f"patch grid dims must be >= 1, got {patches.shape}")
        if cls.shape != (d,):
            raise ValueError(f"cls must have shape ({d},), got {cls.shape}")
        object.__setattr__(self, "patches", patches)
        object.__setattr__(self, "cls", cls)
        if self.reduced is not None:
            reduced = _as_float_array(self.reduced, "reduced")
            if reduced.ndim != 3 or reduced.shape[:2] != (h, w):
                raise ValueError(
                    f"reduced must be ({h}, {w}, l), got shape {reduced.shape}"
                )
            object.__setattr__(self, "reduced", reduced)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.patches.shape[0], self.patches.shape[1]

    @property
    def n_tokens(self) -> int:
        return self.patches.shape[0] * self.patches.shape[1]

    def patches_flat(self) -> np.ndarray:
        """Row-major (n, d) view of the patch grid."""
        return self.patches.reshape(self.n_tokens, -1)

    def aggregation_features(self) -> np.ndarray:
        """(n, l) features fed to the aggregator: reduced if present, else patches."""
        if self.reduced is not None:
            return self.reduced.reshape(self.n_tokens, -1)
        return self.patches_flat()


@dataclass(frozen=True)
class AttentionStack:
    """cls-to-patch attention rows, one per head: (H, n), nonnegative."""

    heads: np.ndarray

    def __post_init__(self):
        heads = _as_float_array(self.heads, "heads")
        if heads.ndim != 2 or heads.shape[0] < 1:
            raise ValueError(f"heads must be (H, n) with H >= 1, got {heads.shape}")
        if np.any(heads < 0):
            raise ValueError("attention scores must be nonnegative")
        object.__setattr__(self, "heads", heads)

    @property
    def n_tokens(self) -> int:
        return self.heads.shape[1]


@dataclass(frozen=True)
class AssignmentMatrix:
    """Feature-to-cluster transport plan: (n, m+1), last column is the dustbin."""

    plan: np.ndarray
    m: int
    converged: bool = True

    def __post_init__(self):
        plan = _as_float_array(self.plan, "plan")
        if plan.ndim != 2:
            raise ValueError(f"plan must be 2-D, got shape {plan.shape}")
        if self.m < 1 or plan.shape[1] != self.m + 1:
            raise ValueError(
                f"plan must have m+1 = {self.m + 1} columns, got {plan.shape[1]}"
            )
        if np.any(plan < 0):
            raise ValueError("plan entries must be nonnegative")
        object.__setattr__(self, "plan", plan)

    @property
    def n_tokens(self) -> int:
        return self.plan.shape[0]

    def marginal_violation(self) -> float:
        """Max absolute deviation from uniform row/column marginals."""
        n, cols = self.plan.shape
        row_dev = np.abs(self.plan.sum(axis=1) - 1.0 / n).max()
        col_dev = np.abs(self.plan.sum(axis=0) - 1.0 / cols).max()
        return float(max(row_dev, col_dev))


MASK_KINDS = ("extractor", "aggregator", "fused", "binary")

# Distribution-kind masks must sum to 1 within this tolerance.
MASK_SUM_TOL = 1e-9


@dataclass(frozen=True)
class DiscriminativeMask:
    """Per-patch spatial importance map.

    Distribution kinds (extractor/aggregator/fused) sum to 1; the binary
    kind holds only 0/1 entries.
    """

    values: np.ndarray
    kind: str

    def __post_init__(self):
        values = _as_float_array(self.values, "mask values")
        if values.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {values.shape}")
        if self.kind not in MASK_KINDS:
            raise ValueError(f"unknown mask kind {self.kind!r}")
        if np.any(values < 0):
            raise ValueError("mask entries must be nonnegative")
        if self.kind == "binary":
            if not np.all((values == 0.0) | (values == 1.0)):
                raise ValueError("binary mask entries must be 0 or 1")
        else:
            total = values.sum(dtype=np.float64)
            if abs(total - 1.0) > MASK_SUM_TOL:
                raise ValueError(
                    f"{self.kind} mask must sum to 1, got {total!r}"
                )
        object.__setattr__(self, "values", values)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.values.shape

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


@dataclass(frozen=True)
class GlobalDescriptor:
    """Unit-norm concatenation of scene vector and flattened cluster aggregate."""

    vector: np.ndarray

    def __post_init__(self):
        vector = _as_float_array(self.vector, "descriptor")
        if vector.ndim != 1 or vector.size < 1:
            raise ValueError(f"descriptor must be a 1-D vector, got {vector.shape}")
        norm = float(np.linalg.norm(vector))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"descriptor norm must be 1 within 1e-6, got {norm!r}")
        object.__setattr__(self, "vector", vector)

    @property
    def dim(self) -> int:
        return self.vector.size


@dataclass(frozen=True)
class LocalFeatureMap:
    """Dense grid (h, w, d) of per-location unit vectors (decoder output)."""

    grid: np.ndarray

    def __post_init__(self):
        grid = _as_float_array(self.grid, "local feature grid")
        if grid.ndim != 3:
            raise ValueError(f"local map must be (h, w, d), got shape {grid.shape}")
        norms = np.linalg.norm(grid, axis=2)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("each local feature vector must be unit norm within 1e-6")
        object.__setattr__(self, "grid", grid)

    @classmethod
    def from_raw(cls, grid) -> "LocalFeatureMap":
        """Build from unnormalized vectors; producers are not trusted to normalize."""
        arr = _as_float_array(grid, "local feature grid")
        if arr.ndim != 3:
            raise ValueError(f"local map must be (h, w, d), got shape {arr.shape}")
        norms = np.linalg.norm(arr, axis=2)
        if np.any(norms == 0.0):
            raise DegenerateInputError("local feature map has a zero-norm location")
        return cls(arr / norms[:, :, None])

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.grid.shape[0], self.grid.shape[1]

    def flat(self) -> np.ndarray:
        return self.grid.reshape(-1, self.grid.shape[2])


@dataclass(frozen=True)
class ClusterParams:
    """Per-cluster score weights/biases plus the shared dustbin logit."""

    weights: np.ndarray
    biases: np.ndarray
    dustbin_score: float

    def __post_init__(self):
        weights = _as_float_array(self.weights, "cluster weights")
        biases = _as_float_array(self.biases, "cluster biases")
        if weights.ndim != 2 or weights.shape[0] < 1:
            raise ValueError(f"weights must be (m, d), got shape {weights.shape}")
        if biases.shape != (weights.shape[0],):
            raise ValueError(
                f"biases must have shape ({weights.shape[0]},), got {biases.shape}"
            )
        if not np.isfinite(self.dustbin_score):
            raise ValueError("dustbin_score must be finite")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)
        object.__setattr__(self, "dustbin_score", float(self.dustbin_score))

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class LossConfig:
    """Loss weights and kernel constants."""

    alpha: float = 1.0
    beta: float = 1.0
    margin: float = 1.0
    smoothing_percentile: float = 10.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if not (0.0 < self.smoothing_percentile < 100.0):
            raise ValueError("smoothing_percentile must be in (0, 100)")


def cosine_sim(a, b) -> float:
    """Cosine similarity of two nonzero vectors, in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine_sim requires nonzero vectors")
    return float(np.dot(a, b) / (na * nb))
