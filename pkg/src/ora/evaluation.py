"""Scoring pipeline anomalies against synthetic ground truth.

Predicted anomaly boxes are matched one-to-one to eligible ground-truth
anomalies by descending axis-aligned 3D IoU.  A truth is eligible when it
stands on the road and the lidar returned at least ``min_gt_points`` from it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .projection import Box3D


@dataclass(frozen=True)
class MatchConfig:
    iou_3d_threshold: float = 0.3
    min_gt_points: int = 30

    def __post_init__(self):
        if not 0 < self.iou_3d_threshold <= 1:
            raise ValueError("iou_3d_threshold must lie in (0, 1]")
        if self.min_gt_points < 0:
            raise ValueError("min_gt_points must be >= 0")


def iou_3d(a: Box3D, b: Box3D) -> float:
    """IoU of the axis-aligned hulls of two boxes."""
    alo, ahi = a.axis_aligned_bounds()
    blo, bhi = b.axis_aligned_bounds()
    overlap = np.clip(np.minimum(ahi, bhi) - np.maximum(alo, blo), 0.0, None)
    inter = float(np.prod(overlap))
    union = float(np.prod(ahi - alo)) + float(np.prod(bhi - blo)) - inter
    if union <= 0:
        # Two degenerate (zero-volume) boxes: equal hulls count as a perfect match.
        return 1.0 if np.array_equal(alo, blo) and np.array_equal(ahi, bhi) else 0.0
    return min(1.0, max(0.0, inter / union))


def match_boxes(preds: list[Box3D], truths: list[Box3D], threshold: float) -> list[tuple[int, int, float]]:
    """Greedy one-to-one matching; ties go to the lower prediction, then truth, index."""
    pairs = []
    for i, p in enumerate(preds):
        for j, t in enumerate(truths):
            iou = iou_3d(p, t)
            if iou >= threshold:
                pairs.append((-iou, i, j))
    pairs.sort()
    used_p, used_t, out = set(), set(), []
    for neg, i, j in pairs:
        if i in used_p or j in used_t:
            continue
        used_p.add(i)
        used_t.add(j)
        out.append((i, j, -neg))
    return sorted(out)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def add(self, other: "Counts") -> None:
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn

    @property
    def precision(self) -> float | None:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float | None:
        return _ratio(self.tp, self.tp + self.fn)

    def to_dict(self) -> dict:
        def fmt(v):
            return "undefined" if v is None else v

        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": fmt(self.precision), "recall": fmt(self.recall)}


@dataclass
class SceneEval:
    scene_id: str
    tag: str
    counts: Counts
    matches: list[tuple[int, int, float]]
    stage_log: dict[str, int]

    def to_dict(self) -> dict:
        d = {"scene_id": self.scene_id, "tag": self.tag, **self.counts.to_dict()}
        d["matches"] = [{"prediction": i, "truth": j, "iou": iou} for i, j, iou in self.matches]
        return d


@dataclass
class EvalReport:
    scenes: list[SceneEval] = field(default_factory=list)
    total: Counts = field(default_factory=Counts)
    by_tag: dict[str, Counts] = field(default_factory=dict)
    stage_totals: dict[str, int] = field(default_factory=dict)

    @property
    def precision(self) -> float | None:
        return self.total.precision

    @property
    def recall(self) -> float | None:
        return self.total.recall

    def to_dict(self) -> dict:
        return {
            "aggregate": self.total.to_dict(),
            "by_tag": {k: v.to_dict() for k, v in sorted(self.by_tag.items())},
            "scenes": [s.to_dict() for s in self.scenes],
            "stage_log": dict(self.stage_totals),
        }

    def table(self) -> str:
        def fmt(v):
            return "undefined" if v is None else f"{v:.3f}"

        rows = [("scene", "tag", "TP", "FP", "FN", "precision", "recall")]
        for s in self.scenes:
            c = s.counts
            rows.append((s.scene_id, s.tag or "-", str(c.tp), str(c.fp), str(c.fn),
                         fmt(c.precision), fmt(c.recall)))
        for tag, c in sorted(self.by_tag.items()):
            rows.append((f"[tag {tag}]", tag, str(c.tp), str(c.fp), str(c.fn),
                         fmt(c.precision), fmt(c.recall)))
        c = self.total
        rows.append(("TOTAL", "", str(c.tp), str(c.fp), str(c.fn), fmt(c.precision), fmt(c.recall)))
        widths = [max(len(r[k]) for r in rows) for k in range(len(rows[0]))]
        lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines)


def _predicted_boxes(result) -> tuple[str, list[Box3D], dict]:
    # Either a SceneResult or its serialized result.json form.
    if isinstance(result, dict):
        boxes = [Box3D.from_dict(a["box3d"]) for a in result.get("anomalies", [])]
        return result["scene_id"], boxes, dict(result.get("stage_log", {}))
    return result.scene_id, [a.box3d for a in result.anomalies], dict(result.stage_log)


def eligible_anomalies(truth, config: MatchConfig) -> list:
    return [o for o in truth.anomalies() if o.on_road and o.lidar_points >= config.min_gt_points]


def evaluate(results: Iterable, truths: Iterable, config: MatchConfig = MatchConfig()) -> EvalReport:
    results = list(results)
    truths = list(truths)
    by_id = {}
    for r in results:
        sid, boxes, stage = _predicted_boxes(r)
        if sid in by_id:
            raise ValueError(f"duplicate result for scene {sid!r}")
        by_id[sid] = (boxes, stage)
    truth_ids = [t.scene_id for t in truths]
    if len(set(truth_ids)) != len(truth_ids):
        raise ValueError("duplicate ground truth scene ids")
    if set(by_id) != set(truth_ids):
        missing = sorted(set(truth_ids) - set(by_id))
        extra = sorted(set(by_id) - set(truth_ids))
        raise ValueError(f"results and ground truth disagree on scenes: "
                         f"no result for {missing}, no truth for {extra}")

    report = EvalReport()
    for truth in sorted(truths, key=lambda t: t.scene_id):
        preds, stage = by_id[truth.scene_id]
        gts = [o.hull for o in eligible_anomalies(truth, config)]
        matches = match_boxes(preds, gts, config.iou_3d_threshold)
        counts = Counts(len(matches), len(preds) - len(matches), len(gts) - len(matches))
        tag = truth.tag or ""
        report.scenes.append(SceneEval(truth.scene_id, tag, counts, matches, stage))
        report.total.add(counts)
        report.by_tag.setdefault(tag, Counts()).add(counts)
        for k, v in stage.items():
            report.stage_totals[k] = report.stage_totals.get(k, 0) + int(v)
    return report
