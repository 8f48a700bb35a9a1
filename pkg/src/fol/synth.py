"""Seeded synthetic scene sets for desk-scale pipeline verification.

Each place gets a latent bundle (patch features, scene vector, attention,
local feature grid) and views are noisy copies of it. A fixed central
patch block acts as the discriminative region: its patch features carry
strong cluster evidence while background patches score below the dustbin,
and attention peaks on it.

Aliased place pairs share the global latent (patches, scene vector,
attention) but get independent local-feature content inside the block, so
global retrieval confuses them while masked local matching separates them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import folt
from .aggregation import SinkhornConfig, score_matrix, sinkhorn
from .core import (
    AssignmentMatrix,
    AttentionStack,
    ClusterParams,
    FeatureMap,
    LocalFeatureMap,
)
from .evaluation import DatasetManifest, ManifestRecord, save_manifest

# Base amplitudes of the latent bundles. Block patches mix a cluster
# direction with a patch-unique direction so that matching the same patch
# across views is unambiguous (high first-to-second similarity gap), while
# background patches stay below the dustbin score.
_CLUSTER_AMP = 1.5
_PATCH_AMP = 2.5
_BACKGROUND_AMP = 0.5
_DUSTBIN_SCORE = 1.0
_ATTN_BLOCK = 4.0
_ATTN_BACKGROUND = 0.5

_PLACE_SPACING_M = 150.0
_VIEW_JITTER_M = 3.0


@dataclass(frozen=True)
class SynthParams:
    places: int = 64
    views_per_place: int = 4
    patch_grid: tuple[int, int] = (6, 6)
    feature_dim: int = 32
    local_grid: tuple[int, int] = (12, 12)
    local_dim: int = 16
    clusters: int = 8
    heads: int = 4
    noise: float = 0.05
    alias_pairs: int = 0

    def __post_init__(self):
        if self.places < 2:
            raise ValueError("places must be >= 2")
        if self.views_per_place < 2:
            raise ValueError("views_per_place must be >= 2")
        if 2 * self.alias_pairs > self.places:
            raise ValueError("alias_pairs exceed available places")
        if self.alias_pairs < 0 or self.noise < 0:
            raise ValueError("alias_pairs and noise must be >= 0")
        h_p, w_p = self.patch_grid
        h_l, w_l = self.local_grid
        if h_p < 3 or w_p < 3:
            raise ValueError("patch grid must be at least 3x3")
        if h_l < h_p or w_l < w_p:
            raise ValueError("local grid must be >= patch grid")
        if min(self.feature_dim, self.local_dim, self.clusters, self.heads) < 1:
            raise ValueError("dims, clusters and heads must be >= 1")


@dataclass(frozen=True)
class SceneImage:
    id: str
    place: int
    view: int
    features: FeatureMap
    attention: AttentionStack
    local: LocalFeatureMap


@dataclass(frozen=True)
class SceneSet:
    images: tuple[SceneImage, ...]
    clusters: ClusterParams
    manifest: DatasetManifest
    assignments: dict[str, AssignmentMatrix] = field(repr=False)
    params: SynthParams = SynthParams()


def block_slices(params: SynthParams) -> tuple[slice, slice]:
    """Discriminative patch block: ~2/9 of the grid, centered-ish."""
    h_p, w_p = params.patch_grid
    rows = slice(h_p // 3, h_p // 3 + max(1, h_p // 3))
    cols = slice(w_p // 6, w_p // 6 + max(1, (2 * w_p) // 3))
    return rows, cols


def _unit(rng: np.random.Generator, *shape) -> np.ndarray:
    v = rng.normal(size=shape)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass(frozen=True)
class _PlaceLatent:
    patches: np.ndarray
    cls: np.ndarray
    attention: np.ndarray
    local: np.ndarray


def _place_latent(rng, params: SynthParams, weights: np.ndarray) -> _PlaceLatent:
    h_p, w_p = params.patch_grid
    h_l, w_l = params.local_grid
    rows, cols = block_slices(params)
    patches = _BACKGROUND_AMP * _unit(rng, h_p, w_p, params.feature_dim)
    block_idx = 0
    for r in range(rows.start, rows.stop):
        for c in range(cols.start, cols.stop):
            cluster = block_idx % params.clusters
            patches[r, c] = (
                _CLUSTER_AMP * weights[cluster]
                + _PATCH_AMP * _unit(rng, params.feature_dim)
            )
            block_idx += 1
    cls = _unit(rng, params.feature_dim)
    attention = np.full((h_p, w_p), _ATTN_BACKGROUND)
    attention[rows, cols] = _ATTN_BLOCK
    local = _unit(rng, h_l, w_l, params.local_dim)
    return _PlaceLatent(patches=patches, cls=cls, attention=attention, local=local)


def _alias_local(rng, params: SynthParams, source: np.ndarray) -> np.ndarray:
    # Same background content, fresh content inside the upsampled block.
    h_p, w_p = params.patch_grid
    h_l, w_l = params.local_grid
    rows, cols = block_slices(params)
    local = source.copy()
    for y in range(h_l):
        for x in range(w_l):
            pr = (y * h_p) // h_l
            pc = (x * w_p) // w_l
            if rows.start <= pr < rows.stop and cols.start <= pc < cols.stop:
                local[y, x] = _unit(rng, params.local_dim)
    return local


def synth_scene_set(seed: int, params: SynthParams | None = None) -> SceneSet:
    """Deterministic scene set: same (seed, params) means identical output."""
    params = params or SynthParams()
    rng = np.random.default_rng(seed)
    h_p, w_p = params.patch_grid
    n = h_p * w_p

    weights = _unit(rng, params.clusters, params.feature_dim)
    clusters = ClusterParams(
        weights=weights,
        biases=np.zeros(params.clusters),
        dustbin_score=_DUSTBIN_SCORE,
    )

    latents: list[_PlaceLatent] = []
    for place in range(params.places):
        aliased_from = place - 1 if place % 2 == 1 and place // 2 < params.alias_pairs else None
        if aliased_from is None:
            latents.append(_place_latent(rng, params, weights))
        else:
            src = latents[aliased_from]
            latents.append(
                _PlaceLatent(
                    patches=src.patches.copy(),
                    cls=src.cls.copy(),
                    attention=src.attention.copy(),
                    local=_alias_local(rng, params, src.local),
                )
            )

    images: list[SceneImage] = []
    records: list[ManifestRecord] = []
    assignments: dict[str, AssignmentMatrix] = {}
    sk_config = SinkhornConfig()
    for place, latent in enumerate(latents):
        center = np.array(
            [_PLACE_SPACING_M * (place % 8), _PLACE_SPACING_M * (place // 8)]
        )
        for view in range(params.views_per_place):
            image_id = f"p{place:03d}_v{view}"
            patches = latent.patches + params.noise * rng.normal(
                size=latent.patches.shape
            )
            cls = latent.cls + params.noise * rng.normal(size=latent.cls.shape)
            cls = cls / np.linalg.norm(cls)
            heads = np.maximum(
                latent.attention.reshape(1, n)
                + params.noise * rng.normal(size=(params.heads, n)),
                0.0,
            )
            local_raw = latent.local + params.noise * rng.normal(
                size=latent.local.shape
            )
            offset = rng.uniform(-_VIEW_JITTER_M, _VIEW_JITTER_M, size=2)

            features = FeatureMap(patches=patches, cls=cls)
            attention = AttentionStack(heads=heads)
            local = LocalFeatureMap.from_raw(local_raw)
            images.append(
                SceneImage(
                    id=image_id,
                    place=place,
                    view=view,
                    features=features,
                    attention=attention,
                    local=local,
                )
            )
            records.append(
                ManifestRecord(
                    id=image_id,
                    role="query" if view == 0 else "database",
                    utm=(center[0] + offset[0], center[1] + offset[1]),
                )
            )
            assignments[image_id] = sinkhorn(
                score_matrix(features, clusters), sk_config
            )

    manifest = DatasetManifest(records=tuple(records))
    return SceneSet(
        images=tuple(images),
        clusters=clusters,
        manifest=manifest,
        assignments=assignments,
        params=params,
    )


def save_cluster_params(clusters: ClusterParams, path) -> None:
    """Pack weights, biases and the dustbin logit into one (m+1, d+1) tensor.

    Row j < m is [w_j, b_j]; the final row is [dustbin_score, 0, ...].
    """
    m, d = clusters.weights.shape
    packed = np.zeros((m + 1, d + 1))
    packed[:m, :d] = clusters.weights
    packed[:m, d] = clusters.biases
    packed[m, 0] = clusters.dustbin_score
    folt.write_tensor(packed, path)


def load_cluster_params(path) -> ClusterParams:
    packed = folt.read_tensor(path).astype(np.float64)
    if packed.ndim != 2 or packed.shape[0] < 2 or packed.shape[1] < 2:
        raise ValueError(f"packed cluster tensor has bad shape {packed.shape}")
    m = packed.shape[0] - 1
    d = packed.shape[1] - 1
    return ClusterParams(
        weights=packed[:m, :d],
        biases=packed[:m, d],
        dustbin_score=float(packed[m, 0]),
    )


def write_scene_set(scene: SceneSet, out_dir) -> None:
    """File layout consumed by the CLI pipeline.

    features/<id>.patches.folt, features/<id>.cls.folt,
    features/<id>.attn.folt, local/<id>.folt, assign/<id>.folt,
    clusters.folt, manifest.jsonl
    """
    out_dir = Path(out_dir)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)
    (out_dir / "local").mkdir(parents=True, exist_ok=True)
    (out_dir / "assign").mkdir(parents=True, exist_ok=True)
    for image in scene.images:
        stem = out_dir / "features" / image.id
        folt.write_tensor(image.features.patches, f"{stem}.patches.folt")
        folt.write_tensor(image.features.cls, f"{stem}.cls.folt")
        folt.write_tensor(image.attention.heads, f"{stem}.attn.folt")
        folt.write_tensor(image.local.grid, out_dir / "local" / f"{image.id}.folt")
        folt.write_tensor(
            scene.assignments[image.id].plan, out_dir / "assign" / f"{image.id}.folt"
        )
    save_cluster_params(scene.clusters, out_dir / "clusters.folt")
    save_manifest(scene.manifest, out_dir / "manifest.jsonl")
