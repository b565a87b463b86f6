"""``ora`` command line: generate, run, evaluate, render."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import scenes
from .backends import (Backends, FileClassifier2D, FileDetector3D, FileSegmenter,
                       OracleClassifier2D, OracleDetector3D, OracleSegmenter, write_detections)
from .config import ConfigError, RunConfig, load_config
from .evaluation import MatchConfig, evaluate
from .pipeline import result_to_dict, run_scene
from .projection import load_calibration
from .surface import save_surface_text

log = logging.getLogger("ora")

RESULT = "result.json"
SURFACE = "surface.txt"
SUMMARY = "summary.json"
REPORT = "eval_report.json"


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _setup_logging() -> None:
    level = os.environ.get("ORA_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


# -- generate ---------------------------------------------------------------------


def _load_spec(path: Path):
    import yaml

    from .synthgen import SceneSpec

    try:
        raw = yaml.safe_load(path.read_text())
        return SceneSpec.from_dict(raw)
    except (OSError, yaml.YAMLError, KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ValueError(f"{path}: invalid scene spec ({exc})") from None


def write_synthetic_scene(out: Path, spec) -> Path:
    from .synthgen import generate, render_camera_image
    from PIL import Image

    cloud, mask, cam, truth = generate(spec)
    d = scenes.write_scene(out / spec.name, cloud, mask, cam, truth)
    Image.fromarray(render_camera_image(cam, truth)).save(d / scenes.IMAGE)
    # What a perfect detector reports, for the file detector backend.
    write_detections(d / scenes.DETECTIONS, OracleDetector3D({spec.name: truth}).detect(spec.name, cloud))
    (d / "spec.json").write_text(_dump(spec.to_dict()))
    return d


def cmd_generate(args) -> int:
    import dataclasses

    from .synthgen import scenario_suite

    out = Path(args.out)
    try:
        if args.suite:
            specs = scenario_suite(args.seed if args.seed is not None else 0)
        else:
            spec = _load_spec(Path(args.spec))
            if args.seed is not None:
                spec = dataclasses.replace(spec, rng_seed=args.seed)
            specs = [spec]
        for spec in specs:
            spec.validate()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for spec in specs:
        d = write_synthetic_scene(out, spec)
        print(d)
    return 0


# -- run --------------------------------------------------------------------------


def _make_backends(scene_dir: Path, choice: dict, config: RunConfig) -> Backends:
    sid = scenes.scene_id_of(scene_dir)
    dirs = {sid: scene_dir}
    oracle = config.oracle
    truth = None
    if "oracle" in choice.values():
        truth = scenes.load_ground_truth(scene_dir)
    seg = FileSegmenter(dirs) if choice["seg"] == "file" else \
        OracleSegmenter({sid: (truth, load_calibration(scene_dir / scenes.CALIBRATION))})
    det = FileDetector3D(dirs) if choice["det"] == "file" else \
        OracleDetector3D({sid: truth}, oracle.detector_miss_rate, oracle.seed)
    cls = FileClassifier2D(dirs) if choice["cls"] == "file" else \
        OracleClassifier2D({sid: truth}, miss_rate=oracle.classifier_miss_rate, seed=oracle.seed)
    return Backends(seg, det, cls)


def run_one(scene_dir: str, out_dir: str, choice: dict, config: RunConfig) -> tuple[str, dict | None, str | None]:
    """Process one scene directory; returns ``(scene_id, stage_log, error)``."""
    scene_dir = Path(scene_dir)
    sid = scenes.scene_id_of(scene_dir)
    try:
        cloud, cam = scenes.load_scene_inputs(scene_dir)
        backends = _make_backends(scene_dir, choice, config)
        result = run_scene(sid, cloud, cam, backends, config.pipeline)
    except Exception as exc:  # one bad scene must not stop the batch
        log.info("scene %s failed: %s", sid, exc)
        return sid, None, f"{type(exc).__name__}: {exc}"
    d = Path(out_dir) / sid
    d.mkdir(parents=True, exist_ok=True)
    (d / RESULT).write_text(_dump(result_to_dict(result)))
    if result.surface is not None:
        save_surface_text(d / SURFACE, result.surface)
    return sid, dict(result.stage_log), None


def cmd_run(args) -> int:
    try:
        config = load_config(args.config) if args.config else RunConfig()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        config = config.with_seed(args.seed)
    scene_dirs = [Path(p) for p in args.scenes]
    missing = [str(p) for p in scene_dirs if not p.is_dir()]
    if missing:
        print(f"error: scene directories not found: {', '.join(missing)}", file=sys.stderr)
        return 2
    ids = [scenes.scene_id_of(p) for p in scene_dirs]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        print(f"error: duplicate scene ids: {', '.join(dup)}", file=sys.stderr)
        return 2

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    choice = {"seg": args.backend_seg, "det": args.backend_det, "cls": args.backend_cls}
    jobs = max(1, args.jobs or os.cpu_count() or 1)
    work = [(str(p), str(out), choice, config) for p in scene_dirs]
    if jobs == 1 or len(work) == 1:
        outcomes = [run_one(*w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(work))) as pool:
            outcomes = list(pool.map(run_one, *zip(*work)))

    summary = {"scenes": {}, "failed": {}, "stage_log": {}}
    for sid, stage, error in sorted(outcomes, key=lambda o: o[0]):
        if error is not None:
            summary["failed"][sid] = error
            continue
        summary["scenes"][sid] = stage
        for k, v in stage.items():
            summary["stage_log"][k] = summary["stage_log"].get(k, 0) + v
    (out / SUMMARY).write_text(_dump(summary))
    ok = len(summary["scenes"])
    print(f"{ok}/{len(outcomes)} scenes processed, "
          f"{summary['stage_log'].get('anomalies', 0)} anomalies -> {out}")
    for sid, error in summary["failed"].items():
        print(f"error: scene {sid}: {error}", file=sys.stderr)
    return 1 if summary["failed"] else 0


# -- evaluate ---------------------------------------------------------------------


def _result_dirs(root: Path) -> list[Path]:
    return sorted(p for p in root.iterdir() if (p / RESULT).is_file()) if root.is_dir() else []


def cmd_evaluate(args) -> int:
    results_root, truth_root = Path(args.results), Path(args.truth)
    for p in (results_root, truth_root):
        if not p.is_dir():
            print(f"error: not a directory: {p}", file=sys.stderr)
            return 2
    try:
        match = MatchConfig(args.iou_threshold, args.min_gt_points)
        results, truths = [], []
        for d in _result_dirs(results_root):
            result = json.loads((d / RESULT).read_text())
            sid = result["scene_id"]
            if not (truth_root / sid / scenes.GROUND_TRUTH).is_file():
                raise ValueError(f"result for scene {sid!r} has no ground truth under {truth_root}")
            results.append(result)
            truths.append(scenes.load_ground_truth(truth_root / sid))
        have = {r["scene_id"] for r in results}
        skipped = sorted(p.name for p in truth_root.iterdir()
                         if (p / scenes.GROUND_TRUTH).is_file() and p.name not in have)
        report = evaluate(results, truths, match)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for sid in skipped:
        print(f"warning: no result for scene {sid}; not evaluated", file=sys.stderr)
    print(report.table())
    out = Path(args.report) if args.report else results_root / REPORT
    data = report.to_dict()
    data["not_evaluated"] = skipped
    out.write_text(_dump(data))
    return 0


# -- render -----------------------------------------------------------------------

_STATUS_COLORS = {
    "anomaly": (255, 0, 0),
    "known2d": (0, 200, 0),
    "known3d": (0, 120, 255),
    "proposed": (255, 200, 0),
}


def _draw_rect(draw, box: dict, color, width: int = 2) -> None:
    draw.rectangle([box["x_min"], box["y_min"], box["x_max"] - 1, box["y_max"] - 1],
                   outline=color, width=width)


def render_result(scene_dir: Path, result: dict, out: Path, surface=None) -> tuple[Path, Path]:
    from PIL import Image, ImageDraw

    from .pointcloud import save_ascii_ply
    from .projection import load_road_mask

    cloud, cam = scenes.load_scene_inputs(scene_dir)
    image_path = scene_dir / scenes.IMAGE
    if image_path.is_file():
        img = Image.open(image_path).convert("RGB")
    else:
        mask = load_road_mask(scene_dir / scenes.ROAD_MASK)
        img = Image.fromarray(np.where(mask.bitmap, 140, 60).astype(np.uint8)).convert("RGB")
    draw = ImageDraw.Draw(img)

    if surface is not None and result.get("plane"):
        n = np.asarray(result["plane"]["normal"])
        d = result["plane"]["offset"]
        xy = surface.vertices
        # Lift the 2D boundary onto the fitted plane: n.x + d = 0.
        z = -(d + xy @ n[:2]) / n[2]
        pts = np.column_stack([xy, z])
        uvd, valid = cam.project_many(pts)
        for i, j in surface.boundary_edges():
            if valid[i] and valid[j]:
                draw.line([tuple(uvd[i, :2]), tuple(uvd[j, :2])], fill=(0, 0, 255), width=1)

    for c in result["clusters"]:
        if c["status"] == "known2d" and "box2d" in c:
            _draw_rect(draw, c["box2d"], _STATUS_COLORS["known2d"])
    for a in result["anomalies"]:
        if a["box2d"] is not None:
            _draw_rect(draw, a["box2d"], _STATUS_COLORS["anomaly"])

    out.mkdir(parents=True, exist_ok=True)
    img_out = out / "annotated.png"
    img.save(img_out)

    colors = np.full((len(cloud), 3), 90, dtype=np.uint8)
    colors[np.asarray(result.get("road_inliers", []), dtype=np.int64)] = (170, 170, 170)
    for c in result["clusters"]:
        colors[np.asarray(c["members"], dtype=np.int64)] = _STATUS_COLORS[c["status"]]
    ply_out = out / "cloud.ply"
    save_ascii_ply(ply_out, cloud.xyz, colors)
    return img_out, ply_out


def cmd_render(args) -> int:
    from .surface import load_surface_text

    result_path = Path(args.result)
    scene_dir = Path(args.scene)
    try:
        result = json.loads(result_path.read_text())
        surface_path = result_path.parent / SURFACE
        surface = load_surface_text(surface_path) if surface_path.is_file() else None
        img, ply = render_result(scene_dir, result, Path(args.out), surface)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(img)
    print(ply)
    return 0


# -- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ora", description="Open-set road anomaly detection on lidar + camera.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="materialize synthetic scene directories")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--suite", action="store_true", help="the eight tagged scenarios a-h")
    src.add_argument("--spec", help="scene spec file (JSON or YAML)")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run the pipeline over scene directories")
    r.add_argument("--config", help="YAML config; defaults apply when omitted")
    r.add_argument("--scenes", nargs="+", required=True)
    r.add_argument("--out", required=True)
    for name in ("seg", "det", "cls"):
        r.add_argument(f"--backend-{name}", choices=("file", "oracle"), default="file")
    r.add_argument("--jobs", type=int, default=0, help="worker processes (default: CPU count)")
    r.add_argument("--seed", type=int, help="override RANSAC and oracle seeds")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("evaluate", help="score results against synthetic ground truth")
    e.add_argument("--results", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--iou-threshold", type=float, default=MatchConfig.iou_3d_threshold)
    e.add_argument("--min-gt-points", type=int, default=MatchConfig.min_gt_points)
    e.add_argument("--report", help=f"report JSON path (default: <results>/{REPORT})")
    e.set_defaults(func=cmd_evaluate)

    v = sub.add_parser("render", help="draw a result over the camera frame and export a colored PLY")
    v.add_argument("--scene", required=True)
    v.add_argument("--result", required=True)
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
