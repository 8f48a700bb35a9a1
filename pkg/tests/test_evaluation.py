"""Ground truth, recall@N, report formats, and the synthetic generator."""

import numpy as np
import pytest

from fol.evaluation import (
    DatasetManifest,
    ManifestRecord,
    RecallReport,
    ground_truth,
    load_manifest,
    recall_at_n,
    save_manifest,
    write_report_csv,
)
from fol.synth import SynthParams, synth_scene_set, write_scene_set


def utm_manifest(query_pos, db_positions):
    records = [ManifestRecord(id="q0", role="query", utm=query_pos)]
    records += [
        ManifestRecord(id=f"db{i}", role="database", utm=pos)
        for i, pos in enumerate(db_positions)
    ]
    return DatasetManifest(records=tuple(records))


class TestGroundTruth:
    def test_radius_boundary(self):
        manifest = utm_manifest((0.0, 0.0), [(0.0, 24.0), (0.0, 26.0), (0.0, 25.0)])
        truth = ground_truth(manifest)
        assert truth["q0"] == {"db0", "db2"}  # 24 and 25 in, 26 out

    def test_frame_window(self):
        records = (
            ManifestRecord(id="q", role="query", frame=100),
            ManifestRecord(id="a", role="database", frame=110),
            ManifestRecord(id="b", role="database", frame=111),
            ManifestRecord(id="c", role="database", frame=90),
            ManifestRecord(id="d", role="database", frame=89),
        )
        truth = ground_truth(DatasetManifest(records=records))
        assert truth["q"] == {"a", "c"}

    def test_mixed_kinds_rejected(self):
        with pytest.raises(ValueError, match="mixes"):
            DatasetManifest(
                records=(
                    ManifestRecord(id="a", role="query", utm=(0, 0)),
                    ManifestRecord(id="b", role="database", frame=3),
                )
            )

    def test_needs_both_roles(self):
        manifest = DatasetManifest(
            records=(ManifestRecord(id="a", role="query", utm=(0, 0)),)
        )
        with pytest.raises(ValueError, match="at least one"):
            ground_truth(manifest)

    def test_distance_symmetry(self, rng):
        # Swapping the roles of two records preserves their relation.
        for _ in range(50):
            pa = tuple(rng.uniform(0, 60, 2))
            pb = tuple(rng.uniform(0, 60, 2))
            forward = ground_truth(
                DatasetManifest(records=(
                    ManifestRecord(id="x", role="query", utm=pa),
                    ManifestRecord(id="y", role="database", utm=pb),
                ))
            )
            backward = ground_truth(
                DatasetManifest(records=(
                    ManifestRecord(id="y", role="query", utm=pb),
                    ManifestRecord(id="x", role="database", utm=pa),
                ))
            )
            assert ("y" in forward["x"]) == ("x" in backward["y"])

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError, match="unique"):
            DatasetManifest(
                records=(
                    ManifestRecord(id="a", role="query", utm=(0, 0)),
                    ManifestRecord(id="a", role="database", utm=(1, 1)),
                )
            )


class TestRecall:
    def test_all_rank_one(self):
        rankings = {f"q{i}": [f"db{i}", "zz"] for i in range(4)}
        truth = {f"q{i}": {f"db{i}"} for i in range(4)}
        report = recall_at_n(rankings, truth)
        assert report.recalls == (1.0, 1.0, 1.0)

    def test_no_hits(self):
        rankings = {"q0": [f"db{i}" for i in range(10)]}
        truth = {"q0": {"other"}}
        report = recall_at_n(rankings, truth)
        assert report.recalls == (0.0, 0.0, 0.0)

    def test_hand_counted_example(self):
        # Hits at ranks 1, 3, 7, and never: recall@1/5/10 = 1/4, 2/4, 3/4.
        fillers = [f"x{i}" for i in range(10)]
        rankings = {
            "q1": ["hit1"] + fillers,
            "q2": fillers[:2] + ["hit2"] + fillers[2:],
            "q3": fillers[:6] + ["hit3"] + fillers[6:],
            "q4": fillers,
        }
        truth = {"q1": {"hit1"}, "q2": {"hit2"}, "q3": {"hit3"}, "q4": {"hit4"}}
        report = recall_at_n(rankings, truth, [1, 5, 10])
        assert report.recalls == (0.25, 0.50, 0.75)
        assert report.query_count == 4

    def test_monotone_in_n(self, rng):
        ids = [f"db{i}" for i in range(30)]
        for _ in range(20):
            rankings = {
                f"q{j}": list(rng.permutation(ids)) for j in range(5)
            }
            truth = {
                f"q{j}": set(rng.choice(ids, size=3, replace=False)) for j in range(5)
            }
            report = recall_at_n(rankings, truth, [1, 2, 5, 10, 30])
            assert all(a <= b + 1e-12 for a, b in zip(report.recalls, report.recalls[1:]))

    def test_empty_truth_queries_excluded(self):
        rankings = {"q0": ["db0"], "q1": ["db0"]}
        truth = {"q0": {"db0"}, "q1": set()}
        report = recall_at_n(rankings, truth, [1])
        assert report.query_count == 1
        assert report.recalls == (1.0,)

    def test_all_excluded_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            recall_at_n({"q0": ["db0"]}, {"q0": set()}, [1])

    def test_missing_truth_rejected(self):
        with pytest.raises(ValueError, match="ground truth"):
            recall_at_n({"q0": ["db0"]}, {}, [1])

    def test_report_validates_monotonicity(self):
        with pytest.raises(ValueError, match="non-decreasing"):
            RecallReport(n_values=(1, 5), recalls=(0.8, 0.2), query_count=3)


class TestReportFiles:
    def test_csv_format(self, tmp_path):
        report = RecallReport(n_values=(1, 5), recalls=(1.0, 1.0), query_count=7)
        path = tmp_path / "report.csv"
        write_report_csv(report, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "N,recall,queries"
        assert lines[1] == "1,1.000000,7"
        assert lines[2] == "5,1.000000,7"


class TestManifestIO:
    def test_jsonl_roundtrip(self, tmp_path):
        manifest = utm_manifest((1.5, 2.5), [(3.0, 4.0)])
        path = tmp_path / "manifest.jsonl"
        save_manifest(manifest, path)
        assert load_manifest(path) == manifest

    def test_frame_roundtrip(self, tmp_path):
        manifest = DatasetManifest(
            records=(
                ManifestRecord(id="q", role="query", frame=5),
                ManifestRecord(id="d", role="database", frame=9),
            )
        )
        path = tmp_path / "manifest.jsonl"
        save_manifest(manifest, path)
        assert load_manifest(path) == manifest


class TestSynth:
    def test_pure_function_of_seed(self):
        params = SynthParams(places=3, views_per_place=2, alias_pairs=1)
        a = synth_scene_set(5, params)
        b = synth_scene_set(5, params)
        for img_a, img_b in zip(a.images, b.images):
            assert img_a.id == img_b.id
            assert img_a.features.patches.tobytes() == img_b.features.patches.tobytes()
            assert img_a.local.grid.tobytes() == img_b.local.grid.tobytes()
            assert img_a.attention.heads.tobytes() == img_b.attention.heads.tobytes()
        assert a.manifest == b.manifest

    def test_different_seeds_differ(self):
        params = SynthParams(places=3, views_per_place=2)
        a = synth_scene_set(5, params)
        b = synth_scene_set(6, params)
        assert a.images[0].features.patches.tobytes() != b.images[0].features.patches.tobytes()

    def test_byte_identical_files(self, tmp_path):
        params = SynthParams(places=2, views_per_place=2)
        for name in ("one", "two"):
            write_scene_set(synth_scene_set(9, params), tmp_path / name)
        files_one = sorted((tmp_path / "one").rglob("*"))
        files_two = sorted((tmp_path / "two").rglob("*"))
        assert [f.name for f in files_one] == [f.name for f in files_two]
        for fa, fb in zip(files_one, files_two):
            if fa.is_file():
                assert fa.read_bytes() == fb.read_bytes(), fa.name

    def test_geometry_constraints(self):
        scene = synth_scene_set(3, SynthParams(places=4, views_per_place=3))
        by_place = {}
        for record in scene.manifest.records:
            place = int(record.id[1:4])
            by_place.setdefault(place, []).append(np.array(record.utm))
        for place, positions in by_place.items():
            for a in positions:
                for b in positions:
                    assert np.linalg.norm(a - b) <= 10.0
            for other, other_pos in by_place.items():
                if other == place:
                    continue
                for a in positions:
                    for b in other_pos:
                        assert np.linalg.norm(a - b) >= 100.0

    def test_zero_noise_gives_perfect_stage_one(self):
        from fol.cli import process_image
        from fol.retrieval import build_index, query_topk

        scene = synth_scene_set(
            11, SynthParams(places=4, views_per_place=2, noise=0.0, alias_pairs=0)
        )
        descriptors = {
            img.id: process_image(img.features, img.attention, scene.clusters).descriptor
            for img in scene.images
        }
        db = [r.id for r in scene.manifest.by_role("database")]
        index = build_index([(i, descriptors[i]) for i in db])
        truth = ground_truth(scene.manifest)
        rankings = {
            q.id: [i for i, _ in query_topk(index, descriptors[q.id], 10)]
            for q in scene.manifest.by_role("query")
        }
        report = recall_at_n(rankings, truth, [1])
        assert report.recalls == (1.0,)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            SynthParams(places=1)
        with pytest.raises(ValueError):
            SynthParams(views_per_place=1)
        with pytest.raises(ValueError):
            SynthParams(places=4, alias_pairs=3)
        with pytest.raises(ValueError):
            SynthParams(local_grid=(4, 4))
