"""Dataset manifests, ground truth, and recall@N.

Ground truth follows the usual place-recognition conventions: a database
image is a true positive within 25 m of the query (UTM manifests) or
within 10 frames (frame-indexed manifests). Queries without any positive
are excluded from the recall denominator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

DEFAULT_RADIUS_M = 25.0
DEFAULT_FRAME_WINDOW = 10

ROLES = ("query", "database")


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    role: str
    utm: Optional[tuple[float, float]] = None
    frame: Optional[int] = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if (self.utm is None) == (self.frame is None):
            raise ValueError("record needs exactly one of utm or frame")
        if self.utm is not None:
            object.__setattr__(self, "utm", (float(self.utm[0]), float(self.utm[1])))

    @property
    def position_kind(self) -> str:
        return "utm" if self.utm is not None else "frame"


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[ManifestRecord, ...]

    def __post_init__(self):
        if not self.records:
            raise ValueError("manifest must have at least one record")
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("manifest ids must be unique")
        kinds = {r.position_kind for r in self.records}
        if len(kinds) > 1:
            raise ValueError("manifest mixes utm and frame position kinds")
        object.__setattr__(self, "records", tuple(self.records))

    @property
    def position_kind(self) -> str:
        return self.records[0].position_kind

    def by_role(self, role: str) -> list[ManifestRecord]:
        return [r for r in self.records if r.role == role]


def load_manifest(path) -> DatasetManifest:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            records.append(
                ManifestRecord(
                    id=obj["id"],
                    role=obj["role"],
                    utm=tuple(obj["utm"]) if "utm" in obj else None,
                    frame=obj.get("frame"),
                )
            )
    return DatasetManifest(records=tuple(records))


def save_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in manifest.records:
            obj: dict = {"id": r.id, "role": r.role}
            if r.utm is not None:
                obj["utm"] = [r.utm[0], r.utm[1]]
            else:
                obj["frame"] = r.frame
            fh.write(json.dumps(obj) + "\n")


def ground_truth(
    manifest: DatasetManifest,
    radius_m: float = DEFAULT_RADIUS_M,
    frame_window: int = DEFAULT_FRAME_WINDOW,
) -> dict[str, set[str]]:
    """Map each query id to its set of true-positive database ids."""
    queries = manifest.by_role("query")
    database = manifest.by_role("database")
    if not queries or not database:
        raise ValueError("manifest needs at least one query and one database record")
    truth: dict[str, set[str]] = {}
    if manifest.position_kind == "utm":
        db_pos = np.array([r.utm for r in database])
        for q in queries:
            dist = np.linalg.norm(db_pos - np.array(q.utm), axis=1)
            truth[q.id] = {database[i].id for i in np.flatnonzero(dist <= radius_m)}
    else:
        for q in queries:
            truth[q.id] = {
                r.id for r in database if abs(r.frame - q.frame) <= frame_window
            }
    return truth


@dataclass(frozen=True)
class RecallReport:
    n_values: tuple[int, ...]
    recalls: tuple[float, ...]
    query_count: int

    def __post_init__(self):
        if len(self.n_values) != len(self.recalls):
            raise ValueError("n_values and recalls must align")
        if any(b < a - 1e-12 for a, b in zip(self.recalls, self.recalls[1:])):
            raise ValueError("recalls must be non-decreasing in N")


def recall_at_n(
    rankings: Mapping[str, Sequence[str]],
    truth: Mapping[str, set[str]],
    n_values: Sequence[int] = (1, 5, 10),
) -> RecallReport:
    """Fraction of queries with a true positive in their top N."""
    n_values = tuple(sorted(int(n) for n in n_values))
    if any(n < 1 for n in n_values):
        raise ValueError("n_values must be >= 1")
    missing = [q for q in rankings if q not in truth]
    if missing:
        raise ValueError(f"no ground truth for queries: {missing[:5]}")
    evaluated = {q: r for q, r in rankings.items() if truth[q]}
    if not evaluated:
        raise ValueError("no queries with a nonempty ground-truth set")
    hits = {n: 0 for n in n_values}
    for q, ranked in evaluated.items():
        positives = truth[q]
        first_hit = None
        for rank, db_id in enumerate(ranked, start=1):
            if db_id in positives:
                first_hit = rank
                break
        if first_hit is None:
            continue
        for n in n_values:
            if first_hit <= n:
                hits[n] += 1
    count = len(evaluated)
    return RecallReport(
        n_values=n_values,
        recalls=tuple(hits[n] / count for n in n_values),
        query_count=count,
    )


def write_report_csv(report: RecallReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("N,recall,queries\n")
        for n, r in zip(report.n_values, report.recalls):
            fh.write(f"{n},{r:.6f},{report.query_count}\n")


def write_report_json(report: RecallReport, path) -> None:
    payload = {
        "n_values": list(report.n_values),
        "recalls": list(report.recalls),
        "query_count": report.query_count,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
