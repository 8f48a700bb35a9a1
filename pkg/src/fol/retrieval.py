"""Stage-one retrieval: exhaustive dot-product search over unit descriptors."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import folt
from .core import GlobalDescriptor


@dataclass(frozen=True)
class DescriptorIndex:
    ids: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        if len(self.ids) != self.matrix.shape[0]:
            raise ValueError(
                f"{len(self.ids)} ids for {self.matrix.shape[0]} descriptor rows"
            )
        norms = np.linalg.norm(self.matrix, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("index rows must be unit norm within 1e-6")

    def __len__(self) -> int:
        return len(self.ids)


def _vector(entry) -> np.ndarray:
    if isinstance(entry, GlobalDescriptor):
        return entry.vector
    return np.asarray(entry, dtype=np.float64).reshape(-1)


def build_index(entries: Iterable[tuple[str, object]]) -> DescriptorIndex:
    """Stack (id, descriptor) pairs in input order; ids must be unique."""
    ids: list[str] = []
    rows: list[np.ndarray] = []
    seen = set()
    for image_id, desc in entries:
        if image_id in seen:
            raise ValueError(f"duplicate id {image_id!r}")
        seen.add(image_id)
        vec = _vector(desc)
        if rows and vec.size != rows[0].size:
            raise ValueError(
                f"descriptor dim {vec.size} != index dim {rows[0].size} for {image_id!r}"
            )
        ids.append(image_id)
        rows.append(vec)
    if not rows:
        raise ValueError("cannot build an empty index")
    return DescriptorIndex(ids=tuple(ids), matrix=np.stack(rows))


def query_topk(index: DescriptorIndex, query, k: int) -> list[tuple[str, float]]:
    """Exact top-k by descending dot product; ties keep insertion order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    sims = index.matrix @ _vector(query)
    order = np.argsort(-sims, kind="stable")[: min(k, len(index))]
    return [(index.ids[i], float(sims[i])) for i in order]


def query_batch(
    index: DescriptorIndex,
    queries: Sequence,
    k: int,
    threads: int = 1,
) -> list[list[tuple[str, float]]]:
    """Per-query top-k; thread count never changes the results."""
    if threads <= 1:
        return [query_topk(index, q, k) for q in queries]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda q: query_topk(index, q, k), queries))


def save_index(index: DescriptorIndex, directory) -> None:
    """Persist as one FOLT matrix plus a JSON-lines id file."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    folt.write_tensor(index.matrix, directory / "index.folt")
    with open(directory / "ids.jsonl", "w", encoding="utf-8") as fh:
        for image_id in index.ids:
            fh.write(json.dumps({"id": image_id}) + "\n")


def load_index(directory) -> DescriptorIndex:
    directory = Path(directory)
    matrix = folt.read_tensor(directory / "index.folt").astype(np.float64)
    # Renormalize away the float32 storage rounding.
    matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
    ids = []
    with open(directory / "ids.jsonl", encoding="utf-8") as fh:
        for line in fh:
            ids.append(json.loads(line)["id"])
    return DescriptorIndex(ids=tuple(ids), matrix=matrix)
