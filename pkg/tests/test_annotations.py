import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from spacetrigger import (
    BoundingBox,
    Dataset,
    DatasetParseError,
    DatasetValidationError,
    PredictionSet,
    Prediction,
    iou,
    load_dataset,
    load_predictions,
    save_dataset,
    save_predictions,
)
from spacetrigger.annotations import _exact_span

from conftest import CATS, build_dataset


def boxes(max_coord=1000.0):
    coord = hst.floats(min_value=0, max_value=max_coord, allow_nan=False)
    side = hst.floats(min_value=0.001, max_value=max_coord, allow_nan=False)
    return hst.builds(
        lambda x, y, w, h: BoundingBox(x, y, x + w, y + h), coord, coord, side, side
    )


class TestIoU:
    def test_identical_boxes(self):
        b = BoundingBox(3, 4, 10, 12)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(BoundingBox(0, 0, 1, 1), BoundingBox(2, 2, 3, 3)) == 0.0

    def test_hand_computed_overlap(self):
        # intersection 1, union 4 + 4 - 1 = 7
        got = iou(BoundingBox(0, 0, 2, 2), BoundingBox(1, 1, 3, 3))
        assert got == pytest.approx(1 / 7, abs=1e-15)

    def test_edge_sharing_is_zero(self):
        assert iou(BoundingBox(0, 0, 1, 1), BoundingBox(1, 0, 2, 1)) == 0.0

    @given(boxes(), boxes())
    def test_symmetry(self, a, b):
        assert iou(a, b) == iou(b, a)

    @given(boxes())
    def test_self_iou_is_one(self, a):
        assert iou(a, a) == 1.0

    @settings(max_examples=200)
    @given(boxes(), boxes())
    def test_matches_shapely(self, a, b):
        shapely = pytest.importorskip("shapely.geometry")
        pa = shapely.box(*a.as_tuple())
        pb = shapely.box(*b.as_tuple())
        inter = pa.intersection(pb).area
        expected = inter / (pa.area + pb.area - inter)
        assert iou(a, b) == pytest.approx(expected, abs=1e-9)


class TestBoundingBox:
    def test_zero_width_rejected(self):
        with pytest.raises(ValueError):
            BoundingBox(1, 1, 1, 5)

    def test_inverted_rejected(self):
        with pytest.raises(ValueError):
            BoundingBox(5, 1, 1, 5)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            BoundingBox(-1, 0, 5, 5)

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            BoundingBox(float("nan"), 0, 5, 5)

    @given(
        hst.floats(min_value=0, max_value=1e6, allow_nan=False),
        hst.floats(min_value=1e-9, max_value=1e6, allow_nan=False),
    )
    def test_exact_span_roundtrip(self, lo, width):
        hi = lo + width
        if hi <= lo:
            return
        assert lo + _exact_span(lo, hi) == hi


def coco_file(tmp_path, images, annotations, categories=None, name="data.json", **extra):
    if categories is None:
        categories = [{"id": k, "name": v} for k, v in CATS.items()]
    body = {"images": images, "annotations": annotations, "categories": categories}
    body.update(extra)
    path = tmp_path / name
    path.write_text(json.dumps(body))
    return path


IMG = {"id": 1, "file_name": "a.jpg", "width": 640, "height": 480}


class TestLoadDataset:
    def test_loads_and_converts_to_corners(self, tmp_path):
        path = coco_file(
            tmp_path,
            [IMG],
            [{"id": 7, "image_id": 1, "category_id": 1, "bbox": [10.0, 20.0, 30.0, 40.0]}],
        )
        ds = load_dataset(path)
        assert len(ds.images) == 1
        ann = ds.annotation(7)
        assert ann.bbox.as_tuple() == (10.0, 20.0, 40.0, 60.0)

    def test_empty_annotations(self, tmp_path):
        ds = load_dataset(coco_file(tmp_path, [IMG], []))
        assert len(ds.images) == 1
        assert len(ds.annotations) == 0

    def test_zero_width_box_names_annotation(self, tmp_path):
        path = coco_file(
            tmp_path,
            [IMG],
            [{"id": 99, "image_id": 1, "category_id": 1, "bbox": [10, 20, 0, 40]}],
        )
        with pytest.raises(DatasetValidationError) as err:
            load_dataset(path)
        assert 99 in err.value.ids

    def test_out_of_bounds_clamped_with_warning(self, tmp_path, caplog):
        path = coco_file(
            tmp_path,
            [IMG],
            [{"id": 5, "image_id": 1, "category_id": 1, "bbox": [630.0, -2.0, 30.0, 40.0]}],
        )
        with caplog.at_level("WARNING"):
            ds = load_dataset(path)
        assert "clamped" in caplog.text
        assert ds.annotation(5).bbox.as_tuple() == (630.0, 0.0, 640.0, 38.0)

    def test_syntax_error_carries_offset(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"images": [}')
        with pytest.raises(DatasetParseError) as err:
            load_dataset(path)
        assert err.value.offset == 12

    def test_missing_top_level_key(self, tmp_path):
        path = tmp_path / "short.json"
        path.write_text('{"images": []}')
        with pytest.raises(DatasetParseError, match="annotations"):
            load_dataset(path)

    def test_duplicate_annotation_ids(self, tmp_path):
        anns = [
            {"id": 3, "image_id": 1, "category_id": 1, "bbox": [1, 1, 5, 5]},
            {"id": 3, "image_id": 1, "category_id": 2, "bbox": [2, 2, 5, 5]},
        ]
        with pytest.raises(DatasetValidationError):
            load_dataset(coco_file(tmp_path, [IMG], anns))

    def test_unknown_image_reference(self, tmp_path):
        anns = [{"id": 3, "image_id": 42, "category_id": 1, "bbox": [1, 1, 5, 5]}]
        with pytest.raises(DatasetValidationError) as err:
            load_dataset(coco_file(tmp_path, [IMG], anns))
        assert 3 in err.value.ids

    def test_extra_top_level_keys_roundtrip(self, tmp_path):
        path = coco_file(tmp_path, [IMG], [], info={"year": 2024})
        ds = load_dataset(path)
        assert ds.extra == {"info": {"year": 2024}}
        out = tmp_path / "out.json"
        save_dataset(ds, out)
        assert json.loads(out.read_text())["info"] == {"year": 2024}


class TestSaveDataset:
    def test_roundtrip_identity(self, tmp_path):
        entries = [
            (1, 1, 1, (0.1, 0.2, 10.3, 20.7)),
            (2, 1, 2, (5.25, 5.5, 600.125, 400.875)),
            (3, 2, 3, (1, 1, 639, 479)),
        ]
        ds = build_dataset(entries)
        out = tmp_path / "rt.json"
        save_dataset(ds, out)
        assert load_dataset(out) == ds

    def test_roundtrip_awkward_floats(self, tmp_path):
        entries = [(1, 1, 1, (0.1, 0.3, 0.1 + 1 / 3, 0.3 + 2 / 7))]
        ds = build_dataset(entries)
        out = tmp_path / "rt.json"
        save_dataset(ds, out)
        reloaded = load_dataset(out)
        assert reloaded.annotation(1).bbox == ds.annotation(1).bbox

    def test_empty_dataset(self, tmp_path):
        ds = Dataset([], [], build_dataset([(1, 1, 1, (0, 0, 1, 1))]).categories)
        out = tmp_path / "empty.json"
        save_dataset(ds, out)
        body = json.loads(out.read_text())
        assert body["images"] == [] and body["annotations"] == []
        assert load_dataset(out) == ds

    def test_removed_ids_absent_after_save(self, tmp_path):
        from spacetrigger import AttackSpec, Remove, TriggerPair, apply_attack

        entries = [
            (1, 1, 1, (10, 10, 20, 20)),
            (2, 1, 2, (5, 5, 30, 30)),
            (3, 1, 5, (100, 100, 200, 200)),
        ]
        ds = build_dataset(entries)
        poisoned, _ = apply_attack(
            ds, [TriggerPair(1, 1, 2)], AttackSpec("oda", Remove(), Remove())
        )
        out = tmp_path / "poisoned.json"
        save_dataset(poisoned, out)
        ids = {a["id"] for a in json.loads(out.read_text())["annotations"]}
        assert ids == {3}


class TestPredictions:
    def test_groups_by_image(self, tmp_path):
        ds = build_dataset([(i, i, 1, (10, 10, 20, 20)) for i in range(1, 11)])
        preds = [
            {"image_id": i, "category_id": 1, "bbox": [10, 10, 10, 10], "score": 0.9}
            for i in range(1, 11)
        ]
        path = tmp_path / "preds.json"
        path.write_text(json.dumps(preds))
        ps = load_predictions(path, ds)
        assert len(ps.by_image) == 10
        assert len(ps.orphans) == 0

    def test_empty_results(self, tmp_path):
        ds = build_dataset([(1, 1, 1, (10, 10, 20, 20))])
        path = tmp_path / "preds.json"
        path.write_text("[]")
        ps = load_predictions(path, ds)
        assert len(ps) == 0

    def test_orphan_flagged_not_dropped(self, tmp_path, caplog):
        ds = build_dataset([(1, 1, 1, (10, 10, 20, 20))])
        preds = [
            {"image_id": 1, "category_id": 1, "bbox": [10, 10, 10, 10], "score": 0.9},
            {"image_id": 999, "category_id": 1, "bbox": [10, 10, 10, 10], "score": 0.5},
        ]
        path = tmp_path / "preds.json"
        path.write_text(json.dumps(preds))
        with caplog.at_level("WARNING"):
            ps = load_predictions(path, ds)
        assert len(ps.orphans) == 1
        assert ps.orphans[0].image_id == 999
        assert "orphan" in caplog.text

    def test_score_out_of_range(self, tmp_path):
        ds = build_dataset([(1, 1, 1, (10, 10, 20, 20))])
        path = tmp_path / "preds.json"
        path.write_text(
            json.dumps([{"image_id": 1, "category_id": 1, "bbox": [1, 1, 2, 2], "score": 1.5}])
        )
        with pytest.raises(DatasetValidationError):
            load_predictions(path, ds)

    def test_prediction_roundtrip(self, tmp_path):
        ds = build_dataset([(1, 1, 1, (10, 10, 20, 20))])
        ps = PredictionSet(
            [Prediction(1, 1, BoundingBox(10.5, 10.25, 20.75, 21.5), 0.625)],
            dataset=ds,
            provenance="unit",
        )
        path = tmp_path / "preds.json"
        save_predictions(ps, path)
        back = load_predictions(path, ds)
        assert back.for_image(1) == ps.for_image(1)
