"""YAML run configuration.

Key paths mirror :class:`PipelineConfig`; every key is optional and an empty
file reproduces the defaults::

    ransac: {iterations: 500, sample_size: 10, inlier_distance_m: 0.5, seed: 0}
    dbscan: {epsilon_m: 1.0, min_cluster_size: 30}
    alpha_m: 10.0
    outlier: {k: 20, ratio: 8.0}
    height_band_m: [0.2, 4.0]
    known_fraction: 0.5
    anomaly_threshold: 0.25
    min_detection_score: 0.0
    min_box_area_px: 400
    classes: {labels: [...], prompt: "A photo of a {label} on a street"}   # or a JSON path
    oracle: {detector_miss_rate: 0.0, classifier_miss_rate: 0.0, seed: 0}
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .backends import KnownClassList
from .pipeline import PipelineConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OracleSettings:
    detector_miss_rate: float = 0.0
    classifier_miss_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("detector_miss_rate", "classifier_miss_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    oracle: OracleSettings = field(default_factory=OracleSettings)

    def with_seed(self, seed: int) -> "RunConfig":
        ransac = dataclasses.replace(self.pipeline.ransac, seed=seed)
        return RunConfig(dataclasses.replace(self.pipeline, ransac=ransac),
                         dataclasses.replace(self.oracle, seed=seed))


_KIND_NAMES = {int: "an integer", float: "a number", str: "a string"}


class _Loader:
    def __init__(self, source: str):
        self.source = source

    def fail(self, node, path: str, msg: str):
        line = node.start_mark.line + 1 if node is not None else 1
        raise ConfigError(f"{self.source}:{line}: {path or '<root>'}: {msg}")

    def mapping(self, node, path: str, allowed: dict) -> dict:
        """``{key: (value_node, key_path)}`` for a mapping node with known keys."""
        if not isinstance(node, yaml.MappingNode):
            self.fail(node, path, "expected a mapping")
        out = {}
        for knode, vnode in node.value:
            key = knode.value
            kpath = f"{path}.{key}" if path else key
            if key not in allowed:
                self.fail(knode, kpath, f"unknown key (expected one of {', '.join(sorted(allowed))})")
            if key in out:
                self.fail(knode, kpath, "duplicate key")
            out[key] = (vnode, kpath)
        return out

    def scalar(self, node, path: str, kind):
        what = _KIND_NAMES[kind]
        if not isinstance(node, yaml.ScalarNode):
            self.fail(node, path, f"expected {what}")
        value = yaml.constructor.SafeConstructor().construct_object(node, deep=True)
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, kind) or isinstance(value, bool):
            self.fail(node, path, f"expected {what}, got {node.value!r}")
        return value

    def build(self, node, path: str, make):
        try:
            return make()
        except (TypeError, ValueError) as exc:
            self.fail(node, path, str(exc))


_RANSAC = {"iterations": ("iterations", int), "sample_size": ("sample_size", int),
           "inlier_distance_m": ("inlier_distance", float), "seed": ("seed", int)}
_DBSCAN = {"epsilon_m": ("epsilon", float), "min_cluster_size": ("min_cluster_size", int)}
_OUTLIER = {"k": ("outlier_k", int), "ratio": ("outlier_ratio", float)}
_SCALARS = {"alpha_m": ("alpha", float), "known_fraction": ("known_fraction", float),
            "anomaly_threshold": ("anomaly_threshold", float),
            "min_detection_score": ("min_detection_score", float),
            "min_box_area_px": ("min_box_area", float)}
_ORACLE = {"detector_miss_rate": ("detector_miss_rate", float),
           "classifier_miss_rate": ("classifier_miss_rate", float), "seed": ("seed", int)}
_TOP = {**_SCALARS, "ransac": None, "dbscan": None, "outlier": None, "height_band_m": None,
        "classes": None, "oracle": None}


def parse_config(text: str, source: str = "<config>", base_dir: Path | None = None) -> RunConfig:
    ld = _Loader(source)
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 1
        raise ConfigError(f"{source}:{line}: invalid YAML ({getattr(exc, 'problem', exc)})") from None
    if root is None:
        return RunConfig()
    top = ld.mapping(root, "", _TOP)
    cfg = PipelineConfig()

    def sub(key, table):
        node, path = top[key]
        kw = {}
        for k, (vnode, kpath) in ld.mapping(node, path, table).items():
            attr, kind = table[k]
            kw[attr] = ld.scalar(vnode, kpath, kind)
        return node, path, kw

    if "ransac" in top:
        node, path, kw = sub("ransac", _RANSAC)
        cfg = dataclasses.replace(cfg, ransac=ld.build(node, path, lambda: dataclasses.replace(cfg.ransac, **kw)))
    if "dbscan" in top:
        node, path, kw = sub("dbscan", _DBSCAN)
        cfg = dataclasses.replace(cfg, dbscan=ld.build(node, path, lambda: dataclasses.replace(cfg.dbscan, **kw)))
    if "outlier" in top:
        node, path, kw = sub("outlier", _OUTLIER)
        cfg = ld.build(node, path, lambda: dataclasses.replace(cfg, **kw))
    for key, (attr, kind) in _SCALARS.items():
        if key in top:
            node, path = top[key]
            value = ld.scalar(node, path, kind)
            cfg = ld.build(node, path, lambda: dataclasses.replace(cfg, **{attr: value}))
    if "height_band_m" in top:
        node, path = top["height_band_m"]
        if not isinstance(node, yaml.SequenceNode) or len(node.value) != 2:
            ld.fail(node, path, "expected [min_above, max_above]")
        band = tuple(ld.scalar(n, f"{path}[{i}]", float) for i, n in enumerate(node.value))
        cfg = ld.build(node, path, lambda: dataclasses.replace(cfg, height_band=band))
    if "classes" in top:
        cfg = dataclasses.replace(cfg, classes=_classes(ld, *top["classes"], base_dir))

    oracle = OracleSettings()
    if "oracle" in top:
        node, path, kw = sub("oracle", _ORACLE)
        oracle = ld.build(node, path, lambda: OracleSettings(**kw))
    return RunConfig(cfg, oracle)


def _classes(ld: _Loader, node, path: str, base_dir: Path | None) -> KnownClassList:
    if isinstance(node, yaml.ScalarNode):
        file = Path(ld.scalar(node, path, str))
        if base_dir is not None and not file.is_absolute():
            file = base_dir / file
        try:
            return KnownClassList.load(file)
        except (OSError, ValueError, KeyError) as exc:
            ld.fail(node, path, f"cannot load class list {file}: {exc}")
    entries = ld.mapping(node, path, {"labels": None, "prompt": None})
    kw = {}
    if "labels" in entries:
        lnode, lpath = entries["labels"]
        if not isinstance(lnode, yaml.SequenceNode):
            ld.fail(lnode, lpath, "expected a list of labels")
        kw["labels"] = tuple(ld.scalar(n, f"{lpath}[{i}]", str) for i, n in enumerate(lnode.value))
    if "prompt" in entries:
        pnode, ppath = entries["prompt"]
        kw["prompt_template"] = ld.scalar(pnode, ppath, str)
    return ld.build(node, path, lambda: KnownClassList(**kw))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror or exc})") from None
    return parse_config(text, str(path), path.parent)
