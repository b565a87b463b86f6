import json

import pytest

from ora.backends import KnownClassList
from ora.config import ConfigError, RunConfig, load_config, parse_config
from ora.pipeline import PipelineConfig


def test_empty_config_is_defaults():
    assert parse_config("") == RunConfig()
    assert parse_config("{}") == RunConfig()


def test_full_config():
    text = """
ransac: {iterations: 50, sample_size: 5, inlier_distance_m: 0.3, seed: 9}
dbscan: {epsilon_m: 0.8, min_cluster_size: 20}
alpha_m: 6
outlier: {k: 10, ratio: 3.5}
height_band_m: [0.1, 3]
known_fraction: 0.6
anomaly_threshold: 0.3
min_detection_score: 0.2
min_box_area_px: 100
classes: {labels: [car, tree], prompt: "a {label}"}
oracle: {detector_miss_rate: 0.5, classifier_miss_rate: 0.25, seed: 4}
"""
    cfg = parse_config(text)
    p = cfg.pipeline
    assert (p.ransac.iterations, p.ransac.sample_size, p.ransac.inlier_distance, p.ransac.seed) == (50, 5, 0.3, 9)
    assert (p.dbscan.epsilon, p.dbscan.min_cluster_size) == (0.8, 20)
    assert (p.alpha, p.outlier_k, p.outlier_ratio, p.height_band) == (6.0, 10, 3.5, (0.1, 3.0))
    assert (p.known_fraction, p.anomaly_threshold, p.min_detection_score, p.min_box_area) == (0.6, 0.3, 0.2, 100.0)
    assert p.classes == KnownClassList(("car", "tree"), "a {label}")
    assert (cfg.oracle.detector_miss_rate, cfg.oracle.classifier_miss_rate, cfg.oracle.seed) == (0.5, 0.25, 4)


def test_partial_sections_keep_other_defaults():
    cfg = parse_config("dbscan: {epsilon_m: 2.0}")
    assert cfg.pipeline.dbscan.min_cluster_size == PipelineConfig().dbscan.min_cluster_size
    assert cfg.pipeline.ransac == PipelineConfig().ransac


@pytest.mark.parametrize("text, expect", [
    ("dbscan:\n  eps: 1.0\n", "c.yaml:2: dbscan.eps: unknown key"),
    ("alpha_m: -1\n", "c.yaml:1: alpha_m: alpha_m must be > 0"),
    ("ransac:\n  iterations: lots\n", "c.yaml:2: ransac.iterations: expected an integer"),
    ("ransac:\n  iterations: true\n", "c.yaml:2: ransac.iterations: expected an integer"),
    ("height_band_m: [1]\n", "c.yaml:1: height_band_m: expected [min_above, max_above]"),
    ("height_band_m: [2, 1]\n", "c.yaml:1: height_band_m:"),
    ("oracle: {detector_miss_rate: 2}\n", "c.yaml:1: oracle: detector_miss_rate must lie in [0, 1]"),
    ("classes: {labels: [car, car]}\n", "c.yaml:1: classes: known-class labels must be unique"),
    ("bogus: 1\n", "c.yaml:1: bogus: unknown key"),
    ("a: [\n", "c.yaml:"),
])
def test_errors_name_line_and_key(text, expect):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "c.yaml")
    assert str(exc.value).startswith(expect)


def test_classes_from_json_file(tmp_path):
    (tmp_path / "classes.json").write_text(json.dumps({"labels": ["cone", "barrel"]}))
    (tmp_path / "run.yaml").write_text("classes: classes.json\n")
    cfg = load_config(tmp_path / "run.yaml")
    assert cfg.pipeline.classes.labels == ("cone", "barrel")
    (tmp_path / "run.yaml").write_text("classes: nowhere.json\n")
    with pytest.raises(ConfigError, match="cannot load class list"):
        load_config(tmp_path / "run.yaml")


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config("/nonexistent/run.yaml")


def test_with_seed():
    cfg = parse_config("ransac: {iterations: 7}").with_seed(42)
    assert cfg.pipeline.ransac.seed == 42 and cfg.oracle.seed == 42
    assert cfg.pipeline.ransac.iterations == 7
