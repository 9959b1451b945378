"""Command-line surface: compute, evaluate, describe, synth, report.

Batch conventions: frames pair across directories by identical filename stem;
depth files are 16-bit PNGs (.png) or raw float32 blobs (.f32).  Every
subcommand is deterministic for fixed inputs, and `compute` emits a run
manifest whose embedded config reproduces the run bit-for-bit.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import io
import json
import os
import re
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .camera import CameraRig, DepthMode, parse_camera_config, format_camera_config
from .depthmap import DepthMap, decode_f32, decode_png16, encode_f32, encode_png16
from .errors import ConfigError, EvaluationError, SceneDepthError
from .kitti import rig_from_kitti_calib
from .language import combine_text, object_depths
from .metrics import (
    DEFAULT_MAX_DEPTH_M,
    DEFAULT_MIN_DEPTH_M,
    MetricsAccumulator,
    garg_crop,
)
from .scene import STAGE_NAMES, PipelineOptions, run_pipeline
from .segmentation import (
    Category,
    ClassTable,
    DEFAULT_CLASS_TABLE,
    Mask,
    load_instances,
    load_labels,
    mask_for,
    parse_class_table,
    encode_labels,
    encode_instances,
)
from .synthetic import FIXTURE_NAMES, fixture
from .telea import DEFAULT_RADIUS_PX

_DATE_RE = re.compile(r"^(\d{4})[-_](\d{2})[-_](\d{2})")

REPORT_COLUMNS = (
    "name", "abs_rel", "sq_rel", "rmse", "rmse_log",
    "delta1", "delta2", "delta3", "pct_within_5", "pct_within_10", "n_pixels",
)


@dataclass
class RunConfig:
    """Resolved options for a compute run; unknown keys are rejected on load."""

    camera: str | None = None
    table: str | None = None
    seg_dir: str | None = None
    out_dir: str | None = None
    stages: tuple[str, ...] = STAGE_NAMES
    radius: int = DEFAULT_RADIUS_PX
    formats: str = "both"  # png16 | f32 | both
    jobs: int = 0  # 0 = hardware threads
    strict: bool = False
    depth_mode: str | None = None
    min_depth: float = DEFAULT_MIN_DEPTH_M
    max_depth: float = DEFAULT_MAX_DEPTH_M
    crop: bool = False
    min_pixels: int = 50
    dataset: str | None = None

    @classmethod
    def load(cls, path: Path) -> "RunConfig":
        try:
            payload = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON: {e}") from e
        if isinstance(payload, dict) and "config" in payload and "frames" in payload:
            payload = payload["config"]  # a run manifest embeds its config
        if not isinstance(payload, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"{path}: unknown config keys: {sorted(unknown)}")
        if "stages" in payload:
            payload["stages"] = tuple(payload["stages"])
        return cls(**payload)

    def validate(self) -> None:
        for key in ("camera", "table", "seg_dir"):
            value = getattr(self, key)
            if value is not None and not Path(value).exists():
                raise ConfigError(f"config key {key!r}: path does not exist: {value}")
        bad = set(self.stages) - set(STAGE_NAMES)
        if bad:
            raise ConfigError(f"unknown stages: {sorted(bad)} (valid: {STAGE_NAMES})")
        if self.formats not in ("png16", "f32", "both"):
            raise ConfigError(f"formats must be png16|f32|both, got {self.formats!r}")
        if self.radius < 1:
            raise ConfigError(f"radius must be >= 1, got {self.radius}")
        if self.depth_mode is not None:
            try:
                DepthMode(self.depth_mode)
            except ValueError:
                raise ConfigError(f"depth_mode must be euclidean|z_depth, got {self.depth_mode!r}") from None


def _load_table(path: str | None) -> ClassTable:
    if path is None:
        return DEFAULT_CLASS_TABLE
    return parse_class_table(Path(path).read_text())


def _load_depth(path: Path) -> DepthMap:
    if path.suffix == ".f32":
        return decode_f32(path.read_bytes())
    return decode_png16(path.read_bytes())


def _write_depth(path_base: Path, depth: DepthMap, formats: str) -> list[str]:
    written = []
    if formats in ("png16", "both"):
        p = path_base.with_suffix(".png")
        p.write_bytes(encode_png16(depth))
        written.append(str(p))
    if formats in ("f32", "both"):
        p = path_base.with_suffix(".f32")
        p.write_bytes(encode_f32(depth))
        written.append(str(p))
    return written


def _frame_stems(directory: Path, exts: tuple[str, ...] = (".png", ".f32")) -> dict[str, Path]:
    out: dict[str, Path] = {}
    for p in sorted(directory.iterdir()):
        if p.suffix in exts and p.stem not in out:
            out[p.stem] = p
    return out


# ---------------------------------------------------------------------------
# compute
# ---------------------------------------------------------------------------

def _compute_frame(args: tuple) -> dict:
    """Worker: process one frame.  Takes primitives so it pickles cleanly."""
    (stem, seg_path, out_dir, camera_text, table_text, dataset,
     depth_mode, stages, radius, formats) = args
    try:
        table = parse_class_table(table_text) if table_text else DEFAULT_CLASS_TABLE
        seg = load_labels(Path(seg_path).read_bytes(), table)
        if dataset == "kitti":
            rig = rig_from_kitti_calib(camera_text)
        else:
            rig = parse_camera_config(camera_text, width_px=seg.width, height_px=seg.height)
        if depth_mode is not None:
            rig = replace(rig, depth_mode=DepthMode(depth_mode))
        if (rig.height_px, rig.width_px) != (seg.height, seg.width):
            rig = replace(rig, width_px=seg.width, height_px=seg.height)
        bundle = run_pipeline(rig, seg, table, PipelineOptions(inpaint_radius=radius))
        outputs: list[str] = []
        counts: dict[str, int] = {}
        for name, stage in bundle.stages().items():
            counts[name] = stage.valid_count
            if name in stages:
                outputs.extend(_write_depth(Path(out_dir) / f"{stem}_{name}", stage, formats))
        return {
            "name": stem,
            "status": "ok",
            "valid_counts": counts,
            "sky_count": int(bundle.scene.sky.sum()),
            "outputs": outputs,
        }
    except Exception as e:  # noqa: BLE001 - reported per-frame
        return {"name": stem, "status": "error", "error": f"{type(e).__name__}: {e}"}


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    """Start from --config (if any), then let explicit CLI flags override."""
    cfg = RunConfig.load(Path(args.config)) if getattr(args, "config", None) else RunConfig()
    overrides = {
        "camera": getattr(args, "camera", None),
        "table": getattr(args, "table", None),
        "seg_dir": getattr(args, "seg_dir", None),
        "out_dir": getattr(args, "out", None),
        "depth_mode": getattr(args, "depth_mode", None),
        "dataset": getattr(args, "dataset", None),
        "radius": getattr(args, "radius", None),
        "formats": getattr(args, "format", None),
        "jobs": getattr(args, "jobs", None),
        "min_depth": getattr(args, "min_depth", None),
        "max_depth": getattr(args, "max_depth", None),
        "min_pixels": getattr(args, "min_pixels", None),
    }
    for key, val in overrides.items():
        if val is not None:
            cfg = replace(cfg, **{key: val})
    if getattr(args, "stages", None):
        cfg = replace(cfg, stages=tuple(args.stages.split(",")))
    if getattr(args, "strict", False):
        cfg = replace(cfg, strict=True)
    if getattr(args, "crop", False):
        cfg = replace(cfg, crop=True)
    return cfg


def cmd_compute(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if cfg.camera is None or cfg.seg_dir is None or cfg.out_dir is None:
        print("compute: --camera, --seg-dir and --out are required (or via --config)", file=sys.stderr)
        return 2
    try:
        cfg.validate()
    except ConfigError as e:
        print(f"compute: {e}", file=sys.stderr)
        return 2

    camera_text = Path(cfg.camera).read_text()
    table_text = Path(cfg.table).read_text() if cfg.table else None
    seg_dir = Path(cfg.seg_dir)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stems = _frame_stems(seg_dir, (".png",))
    if not stems:
        print(f"compute: no .png label maps in {seg_dir}", file=sys.stderr)
        return 1

    tasks = [
        (stem, str(path), str(out_dir), camera_text, table_text, cfg.dataset,
         cfg.depth_mode, cfg.stages, cfg.radius, cfg.formats)
        for stem, path in stems.items()
    ]
    jobs = cfg.jobs if cfg.jobs > 0 else (os.cpu_count() or 1)
    if cfg.strict or jobs <= 1 or len(tasks) == 1:
        # --strict aborts at the first bad frame, so frames run sequentially.
        results = []
        for t in tasks:
            result = _compute_frame(t)
            results.append(result)
            if cfg.strict and result["status"] != "ok":
                break
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_compute_frame, tasks))

    failures = [r for r in results if r["status"] != "ok"]
    for r in failures:
        print(f"compute: frame {r['name']}: {r['error']}", file=sys.stderr)
    manifest = {
        "tool": "scenedepth compute",
        "version": __version__,
        "config": {**asdict(cfg), "stages": list(cfg.stages)},
        "frames": results,
    }
    (out_dir / "run_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    ok = len(failures) == 0 and len(results) == len(tasks)
    print(f"compute: {len(results) - len(failures)}/{len(tasks)} frames ok -> {out_dir}")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

_REGION_CATEGORIES = {
    "road": {Category.ROAD},
    "ground": {Category.FLAT_GROUND, Category.ROAD},
}


def _metrics_payload(acc: MetricsAccumulator) -> dict:
    return {
        "metrics": asdict(acc.report()),
        "distribution": asdict(acc.distribution()),
    }


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    pred_dir = Path(args.pred_dir)
    gt_dir = Path(args.gt_dir)
    if not pred_dir.is_dir() or not gt_dir.is_dir():
        print("evaluate: --pred-dir and --gt-dir must be directories", file=sys.stderr)
        return 2
    preds = _frame_stems(pred_dir)
    gts = _frame_stems(gt_dir)
    stems = sorted(set(preds) & set(gts))
    if not stems:
        print("evaluate: no filename-matched pred/gt pairs", file=sys.stderr)
        return 1

    table = _load_table(cfg.table)
    seg_dir = Path(args.seg_dir) if args.seg_dir else None
    regions = list(_REGION_CATEGORIES) if seg_dir else []
    min_d, max_d = cfg.min_depth, cfg.max_depth
    use_crop = cfg.crop

    overall = MetricsAccumulator()
    region_acc = {r: MetricsAccumulator() for r in regions}
    group_acc: dict[str, MetricsAccumulator] = {}
    group_region_acc: dict[str, dict[str, MetricsAccumulator]] = {}
    frames: dict[str, dict] = {}
    for stem in stems:
        pred = _load_depth(preds[stem])
        gt = _load_depth(gts[stem])
        crop = garg_crop(gt.width, gt.height) if args.crop else None
        frame_acc = MetricsAccumulator()
        frame_acc.add(pred, gt, None, args.min_depth, args.max_depth, crop)
        try:
            frames[stem] = _metrics_payload(frame_acc)
        except EvaluationError:
            frames[stem] = {"error": "no evaluable pixels"}
        overall.add(pred, gt, None, args.min_depth, args.max_depth, crop)
        masks: dict[str, Mask] = {}
        if seg_dir is not None:
            seg_path = seg_dir / f"{stem}.png"
            if seg_path.exists():
                seg = load_labels(seg_path.read_bytes(), table)
                for r in regions:
                    masks[r] = mask_for(seg, _REGION_CATEGORIES[r])
                    region_acc[r].add(pred, gt, masks[r], args.min_depth, args.max_depth, crop)
        if args.by_date:
            m = _DATE_RE.match(stem)
            key = f"{m.group(1)}-{m.group(2)}-{m.group(3)}" if m else "undated"
            group_acc.setdefault(key, MetricsAccumulator()).add(
                pred, gt, None, args.min_depth, args.max_depth, crop
            )
            if masks:
                per = group_region_acc.setdefault(key, {r: MetricsAccumulator() for r in regions})
                for r in regions:
                    per[r].add(pred, gt, masks[r], args.min_depth, args.max_depth, crop)

    try:
        payload: dict = {
            "tool": "scenedepth evaluate",
            "version": __version__,
            "n_frames": len(stems),
            "aggregate": _metrics_payload(overall),
            "frames": frames,
        }
    except EvaluationError as e:
        print(f"evaluate: {e}", file=sys.stderr)
        return 1
    for r in regions:
        if region_acc[r].n:
            payload.setdefault("regions", {})[r] = _metrics_payload(region_acc[r])
    if args.by_date:
        payload["groups"] = {}
        for key in sorted(group_acc):
            entry = _metrics_payload(group_acc[key])
            per = group_region_acc.get(key)
            if per:
                entry["regions"] = {
                    r: _metrics_payload(per[r]) for r in regions if per[r].n
                }
            payload["groups"][key] = entry

    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"evaluate: {len(stems)} frames -> {args.out}")
    else:
        print(text, end="")
    return 0


# ---------------------------------------------------------------------------
# describe
# ---------------------------------------------------------------------------

def cmd_describe(args: argparse.Namespace) -> int:
    if args.instances is None:
        print(
            "describe: an instance map is required; class-only mode is not "
            "supported for depth descriptions",
            file=sys.stderr,
        )
        return 2
    scene = _load_depth(Path(args.scene))
    instances = load_instances(Path(args.instances).read_bytes())
    table = _load_table(args.table)
    seg = load_labels(Path(args.seg).read_bytes(), table)
    captions: list[str] = []
    if args.captions:
        captions = [ln for ln in Path(args.captions).read_text().splitlines() if ln.strip()]
    objs = object_depths(scene, instances, seg, table, min_pixels=args.min_pixels)
    combined = combine_text(captions, objs)
    if args.out_text:
        Path(args.out_text).write_text(combined.to_text() + ("\n" if combined.to_text() else ""))
    if args.out_json:
        Path(args.out_json).write_text(combined.to_json())
    if not args.out_text and not args.out_json:
        print(combined.to_text())
    return 0


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene = fixture(args.fixture)
    base = out_dir / args.fixture
    Path(f"{base}_seg.png").write_bytes(encode_labels(scene.seg))
    Path(f"{base}_instances.png").write_bytes(encode_instances(scene.instances))
    Path(f"{base}_gt.png").write_bytes(encode_png16(scene.gt))
    Path(f"{base}_gt.f32").write_bytes(encode_f32(scene.gt))
    Path(f"{base}_camera.cfg").write_text(format_camera_config(scene.rig))
    manifest = Path(__file__).parent / "fixtures" / f"{args.fixture}.json"
    if manifest.exists():
        Path(f"{base}_expected.json").write_text(manifest.read_text())
    print(f"synth: wrote fixture '{args.fixture}' to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _report_rows(payloads: list[tuple[str, dict]]) -> list[dict]:
    rows = []
    for name, payload in payloads:
        groups = payload.get("groups")
        if groups:
            for key in sorted(groups):
                entry = groups[key]
                rows.append(_row_from_entry(key, entry))
        else:
            rows.append(_row_from_entry(name, payload.get("aggregate", payload)))
    return rows


def _row_from_entry(name: str, entry: dict) -> dict:
    met = entry.get("metrics", {})
    dist = entry.get("distribution", {})
    return {
        "name": name,
        "abs_rel": met.get("abs_rel"),
        "sq_rel": met.get("sq_rel"),
        "rmse": met.get("rmse"),
        "rmse_log": met.get("rmse_log"),
        "delta1": met.get("delta1"),
        "delta2": met.get("delta2"),
        "delta3": met.get("delta3"),
        "pct_within_5": dist.get("pct_within_5"),
        "pct_within_10": dist.get("pct_within_10"),
        "n_pixels": met.get("n_pixels"),
    }


def render_report_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def render_report_text(rows: list[dict]) -> str:
    def fmt(x):
        if x is None:
            return "-"
        if isinstance(x, float):
            return f"{x:.4f}"
        return str(x)

    table = [[fmt(r[c]) for c in REPORT_COLUMNS] for r in rows]
    widths = [
        max(len(REPORT_COLUMNS[i]), *(len(t[i]) for t in table)) if table else len(REPORT_COLUMNS[i])
        for i in range(len(REPORT_COLUMNS))
    ]
    lines = ["  ".join(c.ljust(w) for c, w in zip(REPORT_COLUMNS, widths))]
    for t in table:
        lines.append("  ".join(c.ljust(w) for c, w in zip(t, widths)))
    return "\n".join(lines) + "\n"


def cmd_report(args: argparse.Namespace) -> int:
    payloads = []
    for path in args.inputs:
        p = Path(path)
        try:
            payloads.append((p.stem, json.loads(p.read_text())))
        except json.JSONDecodeError as e:
            print(f"report: {p}: malformed JSON: {e}", file=sys.stderr)
            return 1
    rows = _report_rows(payloads)
    print(render_report_text(rows), end="")
    if args.out_csv:
        Path(args.out_csv).write_text(render_report_csv(rows))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenedepth",
        description="Ground-plane depth priors: compute stages, evaluate, describe, synthesize fixtures.",
    )
    parser.add_argument("--version", action="version", version=f"scenedepth {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", help="run the 5-stage depth pipeline over a directory of label maps")
    p.add_argument("--config", help="RunConfig JSON (a compute run manifest also works)")
    p.add_argument("--camera", help="camera config document (or KITTI calib with --dataset kitti)")
    p.add_argument("--table", help="class-table document (default: Cityscapes-style taxonomy)")
    p.add_argument("--seg-dir", help="directory of label-map PNGs")
    p.add_argument("--out", help="output directory")
    p.add_argument("--stages", help="comma-separated subset of: " + ",".join(STAGE_NAMES))
    p.add_argument("--radius", type=int, help="inpainting radius in pixels (default 5)")
    p.add_argument("--format", choices=("png16", "f32", "both"), help="output depth format")
    p.add_argument("--depth-mode", choices=tuple(m.value for m in DepthMode), dest="depth_mode")
    p.add_argument("--dataset", choices=("kitti",), help="treat --camera as a KITTI calib_cam_to_cam.txt")
    p.add_argument("--jobs", type=int, help="worker processes (default: hardware threads)")
    p.add_argument("--strict", action="store_true", help="stop reporting after the first bad frame")
    p.set_defaults(fn=cmd_compute)

    p = sub.add_parser("evaluate", help="depth metrics and error distributions, pred vs ground truth")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--seg-dir", help="optional label maps for per-region (road/ground) breakdowns")
    p.add_argument("--table", help="class-table document")
    p.add_argument("--min-depth", type=float, default=DEFAULT_MIN_DEPTH_M)
    p.add_argument("--max-depth", type=float, default=DEFAULT_MAX_DEPTH_M)
    p.add_argument("--crop", action="store_true", help="apply the conventional evaluation crop")
    p.add_argument("--by-date", action="store_true", help="group frames by YYYY-MM-DD/YYYY_MM_DD prefix")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("describe", help="per-object depth descriptions from scene depth + instances")
    p.add_argument("--scene", required=True, help="scene depth (.png or .f32)")
    p.add_argument("--instances", help="instance-map PNG")
    p.add_argument("--seg", required=True, help="label-map PNG")
    p.add_argument("--table", help="class-table document")
    p.add_argument("--captions", help="caption sentences, one per line")
    p.add_argument("--min-pixels", type=int, default=50)
    p.add_argument("--out-text", help="write the combined text here")
    p.add_argument("--out-json", help="write the structured JSON here")
    p.set_defaults(fn=cmd_describe)

    p = sub.add_parser("synth", help="write a synthetic fixture (seg, instances, exact depth, camera)")
    p.add_argument("--fixture", required=True, choices=FIXTURE_NAMES)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("report", help="summary table (text + CSV) from evaluate JSONs")
    p.add_argument("inputs", nargs="+", help="evaluate JSON files")
    p.add_argument("--out-csv", help="write CSV here")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SceneDepthError as e:
        print(f"{args.command}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
