"""Command-line front door.

Subcommands wire the library into batch pipelines over FOLT tensors,
JSON-lines records and CSV reports:

    fol synth       write a seeded synthetic scene set
    fol aggregate   features -> descriptors, assignments, masks
    fol index       descriptors -> persisted search index
    fol query       stage-one retrieval, JSONL ranking
    fol rerank      mask-guided mutual-NN re-ranking of a ranking file
    fol eval        recall@N report from a ranking + manifest
    fol loss        evaluate one loss kernel on FOLT inputs
    fol pseudocorr  pseudo-correspondences between two images

Every subcommand is deterministic given identical inputs and flags;
``--threads`` never changes any output byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import folt
from .aggregation import (
    SinkhornConfig,
    aggregate,
    drop_dustbin,
    global_descriptor,
    score_matrix,
    sinkhorn,
)
from .core import (
    AssignmentMatrix,
    AttentionStack,
    ClusterParams,
    DiscriminativeMask,
    FeatureMap,
    FolError,
    GlobalDescriptor,
    LocalFeatureMap,
    LossConfig,
)
from .evaluation import (
    ground_truth,
    load_manifest,
    recall_at_n,
    write_report_csv,
    write_report_json,
)
from .losses import cel_loss, mnn_loss, ms_loss, pc_loss, sal_loss, total_loss
from .pseudocorr import PseudoCorrConfig, build_correspondences
from .regions import aggregation_mask, attention_mask, binarize_topk, fuse, upsample_mask
from .rerank import RerankCandidate, rerank
from .retrieval import build_index, load_index, query_topk, save_index
from .synth import (
    SynthParams,
    load_cluster_params,
    save_cluster_params,
    synth_scene_set,
    write_scene_set,
)


# ---------------------------------------------------------------------------
# Shared pipeline pieces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImageArtifacts:
    descriptor: GlobalDescriptor
    assignment: AssignmentMatrix
    mask_extractor: DiscriminativeMask
    mask_aggregator: DiscriminativeMask
    mask_fused: DiscriminativeMask


def process_image(
    features: FeatureMap,
    attention: AttentionStack,
    clusters: ClusterParams,
    config: SinkhornConfig | None = None,
) -> ImageArtifacts:
    """Single-image pass: assignment plan, masks, global descriptor."""
    h_p, w_p = features.grid_shape
    assignment = sinkhorn(score_matrix(features, clusters), config)
    mask_e = attention_mask(attention, h_p, w_p)
    mask_a = aggregation_mask(assignment, h_p, w_p)
    mask_fused = fuse(mask_e, mask_a)
    cluster_agg = aggregate(drop_dustbin(assignment), features)
    descriptor = global_descriptor(features.cls, cluster_agg)
    return ImageArtifacts(
        descriptor=descriptor,
        assignment=assignment,
        mask_extractor=mask_e,
        mask_aggregator=mask_a,
        mask_fused=mask_fused,
    )


def _load_mask(path, kind: str) -> DiscriminativeMask:
    values = folt.read_tensor(path).astype(np.float64)
    if kind != "binary":
        total = values.sum()
        if total <= 0:
            raise ValueError(f"{path}: mask sums to {total}, not renormalizable")
        values = values / total  # undo float32 storage rounding
    return DiscriminativeMask(values=values, kind=kind)


def _load_local(path) -> LocalFeatureMap:
    return LocalFeatureMap.from_raw(folt.read_tensor(path).astype(np.float64))


def _load_feature_map(features_dir: Path, image_id: str) -> FeatureMap:
    patches = folt.read_tensor(features_dir / f"{image_id}.patches.folt")
    cls = folt.read_tensor(features_dir / f"{image_id}.cls.folt")
    reduced_path = features_dir / f"{image_id}.reduced.folt"
    reduced = folt.read_tensor(reduced_path) if reduced_path.exists() else None
    return FeatureMap(patches=patches, cls=cls, reduced=reduced)


def _feature_ids(features_dir: Path) -> list[str]:
    suffix = ".patches.folt"
    ids = [p.name[: -len(suffix)] for p in features_dir.glob(f"*{suffix}")]
    if not ids:
        raise FileNotFoundError(f"no *{suffix} files in {features_dir}")
    return sorted(ids)


def _manifest_role_ids(manifest_path, role: str) -> set[str] | None:
    if manifest_path is None:
        return None
    manifest = load_manifest(manifest_path)
    return {r.id for r in manifest.by_role(role)}


def _thread_count(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    return os.cpu_count() or 1


def _write_jsonl(path, lines) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obj in lines:
            fh.write(json.dumps(obj) + "\n")


def _read_jsonl(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _grid(text: str) -> tuple[int, int]:
    h, w = text.lower().split("x")
    return int(h), int(w)


def _cmd_synth(args) -> int:
    params = SynthParams(
        places=args.places,
        views_per_place=args.views,
        patch_grid=args.grid,
        feature_dim=args.feature_dim,
        local_grid=args.local_grid,
        local_dim=args.local_dim,
        clusters=args.clusters,
        heads=args.heads,
        noise=args.noise,
        alias_pairs=args.alias_pairs,
    )
    scene = synth_scene_set(args.seed, params)
    write_scene_set(scene, args.out)
    print(f"wrote {len(scene.images)} images to {args.out}")
    return 0


def _cmd_aggregate(args) -> int:
    features_dir = Path(args.features)
    clusters_path = Path(args.clusters)
    if not clusters_path.exists():
        if args.seed is None:
            raise FileNotFoundError(f"cluster file not found: {clusters_path}")
        rng = np.random.default_rng(args.seed)
        weights = rng.normal(size=(args.m, args.dim))
        weights /= np.linalg.norm(weights, axis=1, keepdims=True)
        clusters = ClusterParams(
            weights=weights, biases=np.zeros(args.m), dustbin_score=1.0
        )
        save_cluster_params(clusters, clusters_path)
    else:
        clusters = load_cluster_params(clusters_path)

    out = Path(args.out)
    for sub in ("desc", "assign", "masks"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    config = SinkhornConfig()
    ids = _feature_ids(features_dir)

    def run_one(image_id: str) -> None:
        features = _load_feature_map(features_dir, image_id)
        heads = folt.read_tensor(features_dir / f"{image_id}.attn.folt")
        artifacts = process_image(features, AttentionStack(heads), clusters, config)
        folt.write_tensor(artifacts.descriptor.vector, out / "desc" / f"{image_id}.folt")
        folt.write_tensor(artifacts.assignment.plan, out / "assign" / f"{image_id}.folt")
        folt.write_tensor(artifacts.mask_extractor.values, out / "masks" / f"{image_id}.me.folt")
        folt.write_tensor(artifacts.mask_aggregator.values, out / "masks" / f"{image_id}.ma.folt")
        folt.write_tensor(artifacts.mask_fused.values, out / "masks" / f"{image_id}.m.folt")

    threads = _thread_count(args)
    if threads <= 1:
        for image_id in ids:
            run_one(image_id)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_one, ids))
    print(f"aggregated {len(ids)} images into {out}")
    return 0


def _load_descriptor(path) -> np.ndarray:
    vec = folt.read_tensor(path).astype(np.float64).reshape(-1)
    return vec / np.linalg.norm(vec)


def _cmd_index(args) -> int:
    desc_dir = Path(args.desc)
    keep = _manifest_role_ids(args.manifest, "database")
    entries = []
    for path in sorted(desc_dir.glob("*.folt")):
        image_id = path.stem
        if keep is not None and image_id not in keep:
            continue
        entries.append((image_id, _load_descriptor(path)))
    index = build_index(entries)
    save_index(index, args.out)
    print(f"indexed {len(index)} descriptors into {args.out}")
    return 0


def _cmd_query(args) -> int:
    index = load_index(args.index)
    desc_dir = Path(args.desc)
    keep = _manifest_role_ids(args.manifest, "query")
    query_ids = [
        p.stem
        for p in sorted(desc_dir.glob("*.folt"))
        if keep is None or p.stem in keep
    ]
    if not query_ids:
        raise FileNotFoundError(f"no query descriptors in {desc_dir}")
    vectors = [_load_descriptor(desc_dir / f"{qid}.folt") for qid in query_ids]

    threads = _thread_count(args)
    if threads <= 1:
        results = [query_topk(index, v, args.topk) for v in vectors]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda v: query_topk(index, v, args.topk), vectors))

    _write_jsonl(
        args.out,
        (
            {"query_id": qid, "results": [[i, s] for i, s in res]}
            for qid, res in zip(query_ids, results)
        ),
    )
    print(f"wrote rankings for {len(query_ids)} queries to {args.out}")
    return 0


def _cmd_rerank(args) -> int:
    rank_lines = _read_jsonl(args.rank)
    local_dir = Path(args.local)
    masks_dir = Path(args.masks)

    cache: dict[str, tuple[LocalFeatureMap, DiscriminativeMask]] = {}

    def load_image(image_id: str) -> tuple[LocalFeatureMap, DiscriminativeMask]:
        if image_id not in cache:
            local = _load_local(local_dir / f"{image_id}.folt")
            fused = _load_mask(masks_dir / f"{image_id}.m.folt", "fused")
            h_l, w_l = local.grid_shape
            mask_up = upsample_mask(binarize_topk(fused, args.k), h_l, w_l)
            cache[image_id] = (local, mask_up)
        return cache[image_id]

    # Image loading shares the cache, so parallelism stays across candidates
    # inside rerank(); queries run sequentially for a deterministic cache.
    threads = _thread_count(args)
    out_lines = []
    for line in rank_lines:
        query_local, query_mask = load_image(line["query_id"])
        candidates = []
        for entry in line["results"]:
            cand_id, global_sim = entry[0], float(entry[1])
            cand_local, cand_mask = load_image(cand_id)
            candidates.append(
                RerankCandidate(
                    id=cand_id,
                    global_sim=global_sim,
                    local_map=cand_local,
                    mask=cand_mask,
                )
            )
        reordered = rerank(
            query_local,
            query_mask,
            candidates,
            count_matches=args.count_matches,
            threads=threads,
        )
        out_lines.append(
            {
                "query_id": line["query_id"],
                "results": [[i, score, gsim] for i, score, gsim in reordered],
            }
        )
    _write_jsonl(args.out, out_lines)
    print(f"reranked {len(out_lines)} queries to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    rank_lines = _read_jsonl(args.rank)
    rankings = {
        line["query_id"]: [entry[0] for entry in line["results"]]
        for line in rank_lines
    }
    manifest = load_manifest(args.manifest)
    truth = ground_truth(manifest, radius_m=args.radius, frame_window=args.frame_window)
    n_values = [int(x) for x in args.n.split(",")]
    report = recall_at_n(rankings, truth, n_values)
    write_report_csv(report, args.out)
    write_report_json(report, Path(args.out).with_suffix(".json"))
    for n, r in zip(report.n_values, report.recalls):
        print(f"recall@{n} = {r:.6f} ({report.query_count} queries)")
    return 0


def _cmd_loss(args) -> int:
    cfg = LossConfig(
        alpha=args.alpha,
        beta=args.beta,
        margin=args.margin,
        smoothing_percentile=args.percentile,
    )
    kind = args.kind
    if kind == "sal":
        mask_a = _load_mask(args.mask_a, "aggregator")
        mask_e = _load_mask(args.mask_e, "extractor")
        value = sal_loss(mask_a, mask_e, cfg)
    elif kind == "cel":
        value = cel_loss(
            folt.read_tensor(args.fg),
            folt.read_tensor(args.fg_pos),
            folt.read_tensor(args.bg),
            cfg,
        )
    elif kind == "pc":
        f_q = folt.read_tensor(args.f_query)
        f_p = folt.read_tensor(args.f_pos)
        d_q = folt.read_tensor(args.d_query)
        d_p = folt.read_tensor(args.d_pos)
        pairs = list(zip(f_q, f_p, d_q, d_p))
        value = pc_loss(pairs)
    elif kind == "ms":
        mat = folt.read_tensor(args.desc).astype(np.float64)
        labels = Path(args.labels).read_text(encoding="utf-8").split()
        value = ms_loss(mat, labels)
    elif kind == "mnn":
        value = mnn_loss(_load_local(args.query), _load_local(args.pos))
    elif kind == "total":
        value = total_loss(args.ms, args.mnn, args.ce, args.sa, args.pc, cfg)
    else:  # pragma: no cover - argparse enforces choices
        raise ValueError(f"unknown loss kind {kind!r}")
    print(f"{value:.12g}")
    return 0


def _cmd_pseudocorr(args) -> int:
    patches_q = folt.read_tensor(args.query_features)
    patches_p = folt.read_tensor(args.pos_features)
    feats_q = FeatureMap(patches=patches_q, cls=np.zeros(patches_q.shape[2]))
    feats_p = FeatureMap(patches=patches_p, cls=np.zeros(patches_p.shape[2]))
    plan_q = folt.read_tensor(args.query_assign).astype(np.float64)
    plan_p = folt.read_tensor(args.pos_assign).astype(np.float64)
    mask_q = _load_mask(args.query_mask, "fused")
    cfg = PseudoCorrConfig(thr1=args.thr1, thr2=args.thr2, n_max=args.n_max)
    pairs = build_correspondences(
        mask_q,
        feats_q,
        feats_p,
        AssignmentMatrix(plan=plan_q, m=plan_q.shape[1] - 1),
        AssignmentMatrix(plan=plan_p, m=plan_p.shape[1] - 1),
        cfg,
    )
    _write_jsonl(
        args.out,
        (
            {"p": c.p, "p_prime": c.p_prime, "confidence": c.confidence}
            for c in pairs
        ),
    )
    print(f"wrote {len(pairs)} correspondences to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fol", description="two-stage place recognition pipeline"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene set")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--places", type=int, default=64)
    p.add_argument("--views", type=int, default=4)
    p.add_argument("--out", required=True)
    p.add_argument("--alias-pairs", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--grid", type=_grid, default=(6, 6))
    p.add_argument("--feature-dim", type=int, default=32)
    p.add_argument("--local-grid", type=_grid, default=(12, 12))
    p.add_argument("--local-dim", type=int, default=16)
    p.add_argument("--clusters", type=int, default=8)
    p.add_argument("--heads", type=int, default=4)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("aggregate", help="features -> descriptors/assignments/masks")
    p.add_argument("--features", required=True)
    p.add_argument("--clusters", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--m", type=int, default=64)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--seed", type=int, default=None,
                   help="generate clusters at --clusters path if missing")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_aggregate)

    p = sub.add_parser("index", help="build a descriptor index")
    p.add_argument("--desc", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None,
                   help="restrict to manifest database records")
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("query", help="stage-one retrieval")
    p.add_argument("--index", required=True)
    p.add_argument("--desc", required=True)
    p.add_argument("--topk", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None,
                   help="restrict to manifest query records")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("rerank", help="mask-guided re-ranking")
    p.add_argument("--rank", required=True)
    p.add_argument("--local", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--k", type=float, default=0.40)
    p.add_argument("--out", required=True)
    p.add_argument("--count-matches", action="store_true",
                   help="score by match count instead of similarity sum")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_rerank)

    p = sub.add_parser("eval", help="recall@N report")
    p.add_argument("--rank", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--n", default="1,5,10")
    p.add_argument("--out", required=True)
    p.add_argument("--radius", type=float, default=25.0)
    p.add_argument("--frame-window", type=int, default=10)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("loss", help="evaluate a loss kernel")
    p.add_argument("--kind", required=True,
                   choices=["sal", "cel", "pc", "ms", "mnn", "total"])
    p.add_argument("--mask-a")
    p.add_argument("--mask-e")
    p.add_argument("--fg")
    p.add_argument("--fg-pos")
    p.add_argument("--bg")
    p.add_argument("--f-query")
    p.add_argument("--f-pos")
    p.add_argument("--d-query")
    p.add_argument("--d-pos")
    p.add_argument("--desc")
    p.add_argument("--labels")
    p.add_argument("--query")
    p.add_argument("--pos")
    p.add_argument("--ms", type=float, default=0.0)
    p.add_argument("--mnn", type=float, default=0.0)
    p.add_argument("--ce", type=float, default=0.0)
    p.add_argument("--sa", type=float, default=0.0)
    p.add_argument("--pc", type=float, default=0.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--percentile", type=float, default=10.0)
    p.set_defaults(func=_cmd_loss)

    p = sub.add_parser("pseudocorr", help="pseudo-correspondence construction")
    p.add_argument("--query-features", required=True)
    p.add_argument("--query-assign", required=True)
    p.add_argument("--query-mask", required=True)
    p.add_argument("--pos-features", required=True)
    p.add_argument("--pos-assign", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--thr1", type=float, default=0.8)
    p.add_argument("--thr2", type=float, default=0.5)
    p.add_argument("--n-max", type=int, default=8)
    p.set_defaults(func=_cmd_pseudocorr)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return 1
    except (FolError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
