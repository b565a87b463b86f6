"""Pluggable stand-ins for the road segmenter, 3D detector and 2D classifier.

File backends read per-scene JSON/PNG produced by external models.  Oracle
backends answer from synthetic ground truth and are what the test-suite and
the synthetic benchmarks run on.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol

import numpy as np

from . import scenes
from .clustering import Cluster
from .pointcloud import PointCloud
from .projection import Box2D, Box3D, CalibratedCamera, RoadMask, load_calibration, load_road_mask

DEFAULT_LABELS = (
    "car", "traffic light", "person", "truck", "bus", "fire hydrant", "bicycle", "handbag",
    "backpack", "parking meter", "stop sign", "umbrella", "motorcycle", "tree", "pole", "bush",
)
DEFAULT_PROMPT = "A photo of a {label} on a street"


@dataclass(frozen=True)
class KnownClassList:
    labels: tuple[str, ...] = DEFAULT_LABELS
    prompt_template: str = DEFAULT_PROMPT

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if not labels:
            raise ValueError("known-class list is empty")
        if len(set(labels)) != len(labels):
            raise ValueError("known-class labels must be unique")
        if self.prompt_template.count("{label}") != 1:
            raise ValueError("prompt template must contain exactly one '{label}' placeholder")

    def prompts(self) -> list[str]:
        return [self.prompt_template.replace("{label}", label) for label in self.labels]

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "prompt": self.prompt_template}

    @classmethod
    def from_dict(cls, d: dict) -> "KnownClassList":
        return cls(tuple(d.get("labels", DEFAULT_LABELS)), d.get("prompt", DEFAULT_PROMPT))

    @classmethod
    def load(cls, path) -> "KnownClassList":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Detection3D:
    box: Box3D
    class_label: str
    score: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score {self.score} outside [0, 1]")

    def to_dict(self) -> dict:
        return {"center": list(self.box.center), "dims": list(self.box.dims), "yaw": self.box.yaw,
                "label": self.class_label, "score": self.score}

    @classmethod
    def from_dict(cls, d: dict) -> "Detection3D":
        return cls(Box3D(tuple(d["center"]), tuple(d["dims"]), float(d.get("yaw", 0.0))),
                   str(d["label"]), float(d.get("score", 1.0)))


@dataclass(frozen=True)
class ClassificationResult:
    """Probability per label, in the order of the known-class list."""

    labels: tuple[str, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if len(self.labels) != p.size:
            raise ValueError("labels and probabilities differ in length")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
            raise ValueError("classification is not a probability distribution")

    @property
    def distribution(self) -> dict[str, float]:
        return dict(zip(self.labels, self.probs))

    @classmethod
    def from_mapping(cls, dist: Mapping[str, float], classes: KnownClassList) -> "ClassificationResult":
        missing = set(classes.labels) - set(dist)
        extra = set(dist) - set(classes.labels)
        if extra:
            raise ValueError(f"labels outside the known-class list: {sorted(extra)}")
        probs = [float(dist.get(label, 0.0)) for label in classes.labels]
        if missing and abs(sum(probs) - 1.0) > 1e-6:
            raise ValueError(f"distribution lacks labels {sorted(missing)}")
        return cls(classes.labels, tuple(probs))


class Segmenter(Protocol):
    def road_mask(self, scene_id: str) -> RoadMask: ...


class Detector3D(Protocol):
    def detect(self, scene_id: str, cloud: PointCloud) -> list[Detection3D]: ...


class Classifier2D(Protocol):
    def classify(self, scene_id: str, box: Box2D, classes: KnownClassList) -> ClassificationResult: ...


@dataclass(frozen=True)
class Backends:
    segmenter: Segmenter
    detector: Detector3D
    classifier: Classifier2D


def _scene_dir(dirs: Mapping[str, Path], scene_id: str) -> Path:
    try:
        return Path(dirs[scene_id])
    except KeyError:
        raise KeyError(f"unknown scene {scene_id!r}") from None


def _scene_seed(seed: int, scene_id: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(scene_id.encode())])


# -- file backends ----------------------------------------------------------------


class FileSegmenter:
    def __init__(self, scene_dirs: Mapping[str, Path]):
        self.scene_dirs = dict(scene_dirs)

    def road_mask(self, scene_id: str) -> RoadMask:
        d = _scene_dir(self.scene_dirs, scene_id)
        mask = load_road_mask(d / scenes.ROAD_MASK)
        cam_path = d / scenes.CALIBRATION
        if cam_path.exists():
            cam = load_calibration(cam_path)
            if (mask.width, mask.height) != (cam.width, cam.height):
                raise ValueError(
                    f"{d / scenes.ROAD_MASK}: mask is {mask.width}x{mask.height}, "
                    f"calibration says {cam.width}x{cam.height}"
                )
        return mask


class FileDetector3D:
    def __init__(self, scene_dirs: Mapping[str, Path]):
        self.scene_dirs = dict(scene_dirs)

    def detect(self, scene_id: str, cloud: PointCloud) -> list[Detection3D]:
        path = _scene_dir(self.scene_dirs, scene_id) / scenes.DETECTIONS
        if not path.exists():
            return []
        try:
            raw = json.loads(path.read_text())
            if not isinstance(raw, list):
                raise ValueError("expected a JSON array")
            return [Detection3D.from_dict(d) for d in raw]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: malformed detections ({exc})") from None


class FileClassifier2D:
    """Looks up precomputed distributions keyed by proposal (cluster) id."""

    def __init__(self, scene_dirs: Mapping[str, Path]):
        self.scene_dirs = dict(scene_dirs)
        self._cache: dict[str, dict] = {}

    def _table(self, scene_id: str) -> dict:
        if scene_id not in self._cache:
            path = _scene_dir(self.scene_dirs, scene_id) / scenes.CLASSIFICATIONS
            try:
                self._cache[scene_id] = json.loads(path.read_text())
            except FileNotFoundError:
                self._cache[scene_id] = {}
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: malformed classifications ({exc})") from None
        return self._cache[scene_id]

    def classify(self, scene_id: str, box: Box2D, classes: KnownClassList) -> ClassificationResult:
        cid = getattr(box.source_cluster, "id", box.source_cluster)
        entry = self._table(scene_id).get(str(cid))
        if entry is None:
            raise KeyError(f"unclassified proposal {cid} in scene {scene_id!r}")
        return ClassificationResult.from_mapping(entry, classes)


def write_classifications(path, results: Mapping[int, ClassificationResult]) -> None:
    table = {str(k): r.distribution for k, r in sorted(results.items())}
    Path(path).write_text(json.dumps(table, indent=2) + "\n")


def write_detections(path, detections: list[Detection3D]) -> None:
    Path(path).write_text(json.dumps([d.to_dict() for d in detections], indent=2) + "\n")


# -- oracle backends --------------------------------------------------------------


class OracleSegmenter:
    """Renders the road mask from ground-truth geometry."""

    def __init__(self, scenes_: Mapping[str, tuple]):
        # scene_id -> (GroundTruth, CalibratedCamera)
        self.scenes = dict(scenes_)

    def road_mask(self, scene_id: str) -> RoadMask:
        from .synthgen import render_road_mask

        truth, cam = self.scenes[scene_id]
        mask, _ = render_road_mask(cam, truth.road_polygon, truth.road_plane,
                                   [o.shape for o in truth.objects])
        return mask


class OracleDetector3D:
    """Ground-truth boxes of known objects, with seeded random misses.

    ``box_margin`` (meters) is added to every dimension so that points lying
    exactly on a face survive float32 storage.
    """

    def __init__(self, truths: Mapping[str, object], miss_rate: float = 0.0, seed: int = 0,
                 box_margin: float = 0.1):
        if not 0.0 <= miss_rate <= 1.0:
            raise ValueError("miss_rate must lie in [0, 1]")
        self.truths = dict(truths)
        self.miss_rate = miss_rate
        self.seed = seed
        self.box_margin = box_margin

    def detect(self, scene_id: str, cloud: PointCloud) -> list[Detection3D]:
        truth = self.truths[scene_id]
        rng = _scene_seed(self.seed, scene_id)
        out = []
        for obj in truth.known():
            missed = rng.random() < self.miss_rate
            if missed:
                continue
            b = obj.box
            box = Box3D(b.center, tuple(d + self.box_margin for d in b.dims), b.yaw)
            out.append(Detection3D(box, obj.class_label, 1.0))
        return out


class OracleClassifier2D:
    """Confident on the dominant planted known object, uniform otherwise.

    The dominant object is the most frequent object label among the points
    of the box's source proposal.  A seeded ``miss_rate`` makes the oracle
    answer uniformly even for known objects.
    """

    def __init__(self, truths: Mapping[str, object], confidence: float = 0.9,
                 miss_rate: float = 0.0, seed: int = 0):
        if not 0.0 <= miss_rate <= 1.0:
            raise ValueError("miss_rate must lie in [0, 1]")
        self.truths = dict(truths)
        self.confidence = confidence
        self.miss_rate = miss_rate
        self.seed = seed

    def dominant_object(self, scene_id: str, cluster: Cluster):
        from .synthgen import FIRST_OBJECT

        truth = self.truths[scene_id]
        labels = truth.labels[cluster.members]
        labels = labels[labels >= FIRST_OBJECT]
        if not labels.size:
            return None
        vals, counts = np.unique(labels, return_counts=True)
        return truth.object(int(vals[np.argmax(counts)]))

    def classify(self, scene_id: str, box: Box2D, classes: KnownClassList) -> ClassificationResult:
        n = len(classes.labels)
        uniform = ClassificationResult(classes.labels, tuple([1.0 / n] * n))
        cluster = box.source_cluster
        if cluster is None:
            raise ValueError("oracle classifier needs the box's source proposal")
        obj = self.dominant_object(scene_id, cluster)
        if obj is None or obj.kind != "known" or obj.class_label not in classes.labels:
            return uniform
        rng = _scene_seed(self.seed, f"{scene_id}/{cluster.id}")
        if rng.random() < self.miss_rate:
            return uniform
        if n == 1:
            return ClassificationResult(classes.labels, (1.0,))
        rest = (1.0 - self.confidence) / (n - 1)
        probs = tuple(self.confidence if label == obj.class_label else rest for label in classes.labels)
        return ClassificationResult(classes.labels, probs)


def oracle_backends(scene_truths: Mapping[str, tuple], detector_miss_rate: float = 0.0,
                    classifier_miss_rate: float = 0.0, seed: int = 0) -> Backends:
    """All three oracles from ``{scene_id: (GroundTruth, CalibratedCamera)}``."""
    truths = {k: v[0] for k, v in scene_truths.items()}
    return Backends(
        OracleSegmenter(scene_truths),
        OracleDetector3D(truths, detector_miss_rate, seed),
        OracleClassifier2D(truths, miss_rate=classifier_miss_rate, seed=seed),
    )


def file_backends(scene_dirs: Mapping[str, Path]) -> Backends:
    return Backends(FileSegmenter(scene_dirs), FileDetector3D(scene_dirs), FileClassifier2D(scene_dirs))
