import json
from pathlib import Path

import pytest

from spacetrigger import bundled_attack_path, bundled_spec_path, load_dataset, save_dataset
from spacetrigger.cli import main

from conftest import build_dataset

SUBJ = (40, 50, 60, 120)
REF = (20, 10, 90, 70)


@pytest.fixture(autouse=True)
def _run_from_tmp(tmp_path, monkeypatch):
    # Commands without --out write their manifest to the cwd; keep that out
    # of the repo.
    monkeypatch.chdir(tmp_path)


def run(args):
    return main([str(a) for a in args])


@pytest.fixture
def synth_paths(tmp_path):
    data = tmp_path / "synth.json"
    verdicts = tmp_path / "statuses.json"
    code = run([
        "synth-data", "--out", data, "--seed", "3", "--count", "60",
        "--verdicts-out", verdicts,
    ])
    assert code == 0
    return data, verdicts


class TestSynthData:
    def test_writes_dataset_verdicts_and_manifest(self, synth_paths):
        data, verdicts = synth_paths
        assert data.exists() and verdicts.exists()
        manifest = json.loads(Path(f"{data}.manifest.json").read_text())
        assert manifest["command"] == "synth-data"
        assert manifest["seed"] == 3
        assert str(data) in manifest["outputs"]

    def test_rerun_is_byte_identical(self, synth_paths, tmp_path):
        data, _ = synth_paths
        again = tmp_path / "again.json"
        assert run(["synth-data", "--out", again, "--seed", "3", "--count", "60"]) == 0
        assert again.read_bytes() == data.read_bytes()

    def test_seed_is_required(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["synth-data", "--out", tmp_path / "x.json", "--count", "10"])
        assert exc.value.code == 2


class TestMockDetectAndEvaluate:
    def test_zero_noise_backdoored_reports_clean_headline(self, synth_paths, tmp_path, capsys):
        data, _ = synth_paths
        preds = tmp_path / "preds.json"
        assert run([
            "mock-detect", data, "--out", preds, "--mode", "backdoored",
            "--spec", bundled_spec_path(), "--attack", bundled_attack_path("oma"),
            "--seed", "4",
        ]) == 0
        assert run([
            "evaluate", data, preds,
            "--spec", bundled_spec_path(), "--attack", bundled_attack_path("oma"),
        ]) == 0
        out = capsys.readouterr().out
        assert "100.00" in out and "0.00" in out

    def test_clean_predictions_reach_unit_map(self, synth_paths, tmp_path, capsys):
        data, _ = synth_paths
        preds = tmp_path / "clean.json"
        assert run(["mock-detect", data, "--out", preds, "--seed", "4"]) == 0
        assert run([
            "evaluate", data, preds,
            "--spec", bundled_spec_path(), "--attack", bundled_attack_path("oma"),
            "--format", "machine", "--out", tmp_path / "report.json",
        ]) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["map50"] == 1.0 and report["map50_95"] == 1.0
        assert report["asr"] == 0.0


class TestMockConfigFile:
    def test_config_file_drives_the_mock(self, synth_paths, tmp_path):
        data, _ = synth_paths
        cfg = tmp_path / "mock.json"
        cfg.write_text(json.dumps({
            "mode": "backdoored", "noise": {"attack_drop": 1.0}, "seed": 2,
        }))
        preds = tmp_path / "dropped.json"
        assert run([
            "mock-detect", data, "--out", preds, "--config", cfg,
            "--spec", bundled_spec_path(), "--attack", bundled_attack_path("oma"),
            "--seed", "2",
        ]) == 0
        # attack_drop 1.0 means every pair reverts to clean behavior, so the
        # predictions echo the ground-truth class multiset exactly.
        body = json.loads(preds.read_text())
        ds = load_dataset(data)
        got = sorted((p["image_id"], p["category_id"]) for p in body)
        want = sorted((a.image_id, a.category_id) for a in ds.annotations)
        assert got == want


class TestAnalyze:
    def test_table_lists_umbrella(self, tmp_path, capsys):
        ds = build_dataset([
            (1, 1, 1, SUBJ), (2, 1, 2, REF),
            (3, 2, 1, SUBJ), (4, 2, 5, (100, 200, 150, 260)),
        ])
        path = tmp_path / "ds.json"
        save_dataset(ds, path)
        assert run(["analyze", path, "person"]) == 0
        out = capsys.readouterr().out
        lines = [l for l in out.splitlines() if l and not l.startswith(("id", "-"))]
        assert lines[0].split()[1] == "umbrella"

    def test_csv_format_is_comma_delimited(self, tmp_path, capsys):
        ds = build_dataset([(1, 1, 1, SUBJ), (2, 1, 2, REF)])
        path = tmp_path / "ds.json"
        save_dataset(ds, path)
        assert run(["analyze", path, "person", "--format", "csv"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "id,category,n_total,n_overlap,mean_iou,score"
        assert lines[1].startswith("2,umbrella,1,1,")

    def test_misspelled_class_suggests(self, tmp_path, capsys):
        ds = build_dataset([(1, 1, 1, SUBJ)])
        path = tmp_path / "ds.json"
        save_dataset(ds, path)
        assert run(["analyze", path, "persn"]) == 1
        err = capsys.readouterr().err
        assert "person" in err


class TestPoison:
    def test_reports_rate_and_floor_warning(self, tmp_path, capsys):
        entries = [(1, 1, 1, SUBJ), (2, 1, 2, REF)]
        entries += [(10 + i, 2 + i, 5, (5, 5, 50, 50)) for i in range(199)]
        ds = build_dataset(entries, n_images=200)
        src, out = tmp_path / "src.json", tmp_path / "out.json"
        save_dataset(ds, src)
        code = run([
            "poison", src, "--spec", bundled_spec_path(),
            "--attack", bundled_attack_path("oma"), "--out", out,
        ])
        captured = capsys.readouterr()
        assert code == 0
        assert "poisoned 1 of 200 images (0.50%)" in captured.out
        assert "floor" in captured.err
        report = json.loads(Path(f"{out}.report.json").read_text())
        assert report["poisoned_images"] == 1 and not report["above_floor"]
        assert load_dataset(out).annotation(1).category_id == 3

    def test_conflicting_pairs_fail_with_nonzero_exit(self, tmp_path, capsys):
        ds = build_dataset([(1, 1, 1, SUBJ), (2, 1, 2, REF)])
        src, out = tmp_path / "src.json", tmp_path / "out.json"
        save_dataset(ds, src)
        pairs = tmp_path / "pairs.json"
        pairs.write_text(json.dumps([
            {"image_id": 1, "subject": 1, "reference": 2},
            {"image_id": 1, "subject": 2, "reference": 1},
        ]))
        code = run([
            "poison", src, "--spec", bundled_spec_path(),
            "--attack", bundled_attack_path("oma_oda"), "--out", out,
            "--pairs", pairs,
        ])
        assert code == 1
        assert "conflict" in capsys.readouterr().err

    def test_target_rate_requires_seed(self, tmp_path, capsys):
        ds = build_dataset([(1, 1, 1, SUBJ), (2, 1, 2, REF)])
        src, out = tmp_path / "src.json", tmp_path / "out.json"
        save_dataset(ds, src)
        code = run([
            "poison", src, "--spec", bundled_spec_path(),
            "--attack", bundled_attack_path("oma"), "--out", out,
            "--target-rate", "0.5",
        ])
        assert code == 1
        assert "--seed" in capsys.readouterr().err


class TestExportYolo:
    def test_full_image_box_line(self, tmp_path):
        ds = build_dataset([(1, 1, 1, (0, 0, 640, 480))])
        src = tmp_path / "ds.json"
        save_dataset(ds, src)
        out_dir = tmp_path / "yolo"
        assert run(["export-yolo", src, out_dir]) == 0
        line = (out_dir / "labels" / "img_0001.txt").read_text().strip()
        assert line == "0 0.5 0.5 1.0 1.0"
        assert (out_dir / "classes.txt").read_text().splitlines()[0] == "person"
        assert (out_dir / "manifest.json").exists()

    def test_empty_image_still_writes_file(self, tmp_path):
        ds = build_dataset([(1, 1, 1, SUBJ)], n_images=2)
        src = tmp_path / "ds.json"
        save_dataset(ds, src)
        out_dir = tmp_path / "yolo"
        assert run(["export-yolo", src, out_dir]) == 0
        assert (out_dir / "labels" / "img_0002.txt").read_text() == ""

    def test_roundtrip_reimport(self, tmp_path):
        entries = [
            (1, 1, 1, (12.5, 7.25, 300.75, 452.125)),
            (2, 1, 2, (0.5, 1.5, 639.5, 479.25)),
            (3, 2, 5, (100, 100, 200, 220)),
        ]
        ds = build_dataset(entries)
        src = tmp_path / "ds.json"
        save_dataset(ds, src)
        out_dir = tmp_path / "yolo"
        assert run(["export-yolo", src, out_dir]) == 0

        names = (out_dir / "classes.txt").read_text().splitlines()
        images = {rec["id"]: rec for rec in json.loads((out_dir / "images.json").read_text())}
        recovered = {}
        for rec in images.values():
            stem = Path(rec["file_name"]).stem
            for line in (out_dir / "labels" / f"{stem}.txt").read_text().splitlines():
                idx, cx, cy, w, h = line.split()
                W, H = rec["width"], rec["height"]
                cx, cy, w, h = float(cx) * W, float(cy) * H, float(w) * W, float(h) * H
                key = (rec["id"], names[int(idx)])
                recovered.setdefault(key, []).append(
                    (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
                )
        for ann in ds.annotations:
            key = (ann.image_id, ds.categories.name(ann.category_id))
            match = recovered[key].pop(0)
            assert match == pytest.approx(ann.bbox.as_tuple(), abs=1e-9)


class TestManifest:
    def test_written_for_every_command(self, tmp_path):
        ds = build_dataset([(1, 1, 1, SUBJ), (2, 1, 2, REF)])
        src = tmp_path / "ds.json"
        save_dataset(ds, src)
        assert run(["analyze", src, "person"]) == 0
        manifest = json.loads((tmp_path / "spacetrigger-analyze.manifest.json").read_text())
        assert manifest["command"] == "analyze"
        assert manifest["version"]
        assert manifest["duration_s"] >= 0
