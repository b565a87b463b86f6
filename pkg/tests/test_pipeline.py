import json

import numpy as np
import pytest

from ora.backends import Backends, ClassificationResult, Detection3D, KnownClassList, oracle_backends
from ora.clustering import Cluster, Status
from ora.evaluation import iou_3d
from ora.pipeline import PipelineConfig, decide_anomaly, gate_known_3d, result_to_dict, run_scene
from ora.pointcloud import PointCloud
from ora.projection import Box3D, RoadMask
from ora.synthgen import generate, scenario_suite

SUITE = {s.tag: s for s in scenario_suite()}


def run_tag(tag, **kw):
    spec = SUITE[tag]
    cloud, _, cam, truth = generate(spec)
    result = run_scene(spec.name, cloud, cam, oracle_backends({spec.name: (truth, cam)}, **kw))
    return result, cloud, truth


def line_cluster(n_in, n=30):
    xyz = np.zeros((n, 3))
    xyz[:, 0] = np.where(np.arange(n) < n_in, 0.5, 5.0)
    return PointCloud(xyz), Cluster(0, np.arange(n))


def test_gate_known_3d_boundaries():
    det = [Detection3D(Box3D((0.5, 0, 0), (1, 1, 1)), "car")]
    assert gate_known_3d(*line_cluster(15), det)
    assert not gate_known_3d(*line_cluster(14), det)
    assert not gate_known_3d(*line_cluster(30), [])
    low = [Detection3D(Box3D((0.5, 0, 0), (1, 1, 1)), "car", 0.2)]
    assert not gate_known_3d(*line_cluster(30), low, min_score=0.5)


def test_gate_does_not_pool_boxes():
    # 10 points in each of two boxes: neither reaches half of 30 on its own.
    xyz = np.zeros((30, 3))
    xyz[:10, 0], xyz[10:20, 0], xyz[20:, 0] = 0.0, 10.0, 20.0
    dets = [Detection3D(Box3D((0, 0, 0), (1, 1, 1)), "a"), Detection3D(Box3D((10, 0, 0), (1, 1, 1)), "b")]
    assert not gate_known_3d(PointCloud(xyz), Cluster(0, np.arange(30)), dets)


def test_decide_anomaly_threshold():
    labels = ("car", "tree", "pole", "bush")
    assert decide_anomaly(ClassificationResult(labels, (0.25,) * 4)) == (False, "car")
    below = ClassificationResult(labels, (0.249, 0.249, 0.251 - 1e-9, 0.251 + 1e-9))
    assert decide_anomaly(below) == (False, "bush")
    assert decide_anomaly(ClassificationResult(labels, (0.24, 0.24, 0.24, 0.28)), 0.3) == (True, None)
    uniform16 = ClassificationResult(KnownClassList().labels, (1 / 16,) * 16)
    assert decide_anomaly(uniform16) == (True, None)


def test_config_validation():
    for bad in (dict(alpha=0), dict(height_band=(1.0, 0.5)), dict(known_fraction=0),
                dict(anomaly_threshold=1.5), dict(min_box_area=-1)):
        with pytest.raises(ValueError):
            PipelineConfig(**bad)


def test_known_only_scene_has_no_anomaly():
    result, _, _ = run_tag("a")
    assert result.anomalies == []
    assert result.stage_log["known3d"] >= 3
    assert all(c.status is not Status.PROPOSED for c in result.clusters)


def test_on_road_anomaly_found_and_localized():
    result, _, truth = run_tag("b")
    assert len(result.anomalies) == 1
    a = result.anomalies[0]
    assert a.box2d is not None
    assert iou_3d(a.box3d, truth.anomalies()[0].hull) >= 0.3
    # Every anomaly member lies on the planted object.
    assert np.all(truth.labels[a.cluster.members] == truth.anomalies()[0].id)


def test_lidar_only_anomaly_has_no_image_box():
    result, _, _ = run_tag("d")
    assert len(result.anomalies) == 1 and result.anomalies[0].box2d is None


def test_stage_log_is_monotone():
    result, cloud, _ = run_tag("e")
    s = result.stage_log
    assert s["points"] == len(cloud)
    assert s["points"] >= s["cropped"] >= s["road_candidates"] >= s["road_inliers"] >= s["road_cleaned"]
    assert s["cropped"] - s["road_inliers"] == s["non_road"] >= s["on_road"]
    assert s["proposals"] == s["known3d"] + s["after_3d_gate"]
    assert s["after_3d_gate"] == s["known2d"] + s["anomalies"]


def test_classifier_misses_turn_known_into_anomalies():
    result, _, _ = run_tag("a", detector_miss_rate=1.0, classifier_miss_rate=0.0)
    assert result.anomalies == [] and result.stage_log["known2d"] >= 1
    result, _, _ = run_tag("a", detector_miss_rate=1.0, classifier_miss_rate=1.0)
    assert len(result.anomalies) >= 1


class _Seg:
    def __init__(self, mask=None, exc=None):
        self.mask, self.exc = mask, exc

    def road_mask(self, scene_id):
        if self.exc:
            raise self.exc
        return self.mask


def test_degenerate_empty_mask():
    spec = SUITE["a"]
    cloud, mask, cam, truth = generate(spec)
    b = oracle_backends({spec.name: (truth, cam)})
    empty = Backends(_Seg(RoadMask(np.zeros_like(mask.bitmap))), b.detector, b.classifier)
    result = run_scene(spec.name, cloud, cam, empty)
    assert result.degenerate and result.clusters == [] and result.anomalies == []
    assert result_to_dict(result)["degenerate"]


def test_backend_failure_names_scene():
    spec = SUITE["a"]
    cloud, _, cam, truth = generate(spec)
    b = oracle_backends({spec.name: (truth, cam)})
    broken = Backends(_Seg(exc=OSError("disk")), b.detector, b.classifier)
    with pytest.raises(RuntimeError, match="a_known_only: road segmentation failed"):
        run_scene(spec.name, cloud, cam, broken)


def test_result_dict_is_json_and_deterministic():
    r1, _, _ = run_tag("h")
    r2, _, _ = run_tag("h")
    d1, d2 = result_to_dict(r1), result_to_dict(r2)
    assert json.dumps(d1, sort_keys=True) == json.dumps(d2, sort_keys=True)
    assert len(d1["anomalies"]) == 1 and d1["anomalies"][0]["box2d"] is not None
