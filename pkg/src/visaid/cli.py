"""Command-line surface: parse, graph, dataset, lift, eval, render, serve.

Exit codes are a stable contract: 0 success, 1 I/O failure, 2 validation or
parse failure, 3 judge transport failure. Judge credentials come only from
the environment (EVAL_JUDGE_ENDPOINT / EVAL_JUDGE_MODEL / EVAL_JUDGE_KEY);
everything else is flags or a TOML config file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np
from PIL import Image

from . import datastore, evalkit, labelgen, lift3d, markup, scenegraph
from .coordsys import ImageShape, NormPoint, PixelPoint, to_norm
from .datastore import SchemaError

DEFAULT_SEED = 0

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_JUDGE = 3


def _read_text(path: str | None) -> str:
    if path in (None, "-"):
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def _write_text(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_parse(args) -> int:
    text = _read_text(args.input)
    doc = markup.parse_document(text)
    _write_text(json.dumps(markup.doc_to_json(doc), indent=2, ensure_ascii=False), args.output)
    return EXIT_OK


def _detection_objects(detections, depth_grid):
    objects = []
    for det in detections.objects:
        x1, y1, x2, y2 = det.box
        lo = to_norm(PixelPoint(x1, y1), detections.shape)
        hi = to_norm(PixelPoint(x2, y2), detections.shape)
        mask = None
        if det.mask_path is not None and depth_grid is not None:
            mask = datastore.load_mask(det.mask_path)
        objects.append(
            scenegraph.SceneObject(
                name=det.name,
                box=markup.NormBox(lo.x, lo.y, hi.x, hi.y),
                mask=mask,
            )
        )
    return objects


def cmd_graph(args) -> int:
    detections = datastore.load_detections(args.detections)
    depth_grid = None
    if args.depth is not None:
        depth_grid = datastore.load_depth(args.depth).samples
    objects = _detection_objects(detections, depth_grid)
    graph = scenegraph.build_graph(
        objects,
        depth_map=depth_grid,
        margin=args.margin,
        gap_threshold=args.depth_gap,
        symmetric=args.symmetric,
    )
    _write_text(scenegraph.serialize_graph(graph), args.output)
    if args.json_out is not None:
        payload = {
            "objects": [
                {"name": o.name, "box": list(o.box.as_tuple()), "depth": o.depth_stat}
                for o in graph.objects
            ],
            "relations": [
                {"subject": r.subject, "object": r.object, "predicate": r.predicate.value}
                for r in graph.relations
            ],
        }
        Path(args.json_out).write_text(json.dumps(payload, indent=2))
    return EXIT_OK


def _record_seed(base_seed: int, episode: str) -> int:
    return zlib.crc32(f"{base_seed}:{episode}".encode())


def _build_record_samples(directory: Path, args, thresholds) -> dict:
    episode = directory.name
    out: dict = {"episode": episode}
    try:
        record = datastore.load_demo_record(directory)
    except (SchemaError, OSError, ValueError) as exc:
        out["error"] = str(exc)
        return out
    verdict = labelgen.filter_record(record, thresholds)
    out["verdict"] = verdict
    if not verdict.keep:
        return out
    image_path = record.metadata.get("image", f"{episode}/initial_frame.png")
    seed = _record_seed(args.seed, episode)
    level4 = labelgen.make_level4(
        record, sample_id=f"{episode}-l4", image_path=image_path, seed=seed
    )
    level5 = labelgen.make_level5(record, sample_id=f"{episode}-l5", image_path=image_path)
    out["samples"] = [level4, level5]
    if args.inverse:
        out["samples"] += [labelgen.invert_sample(level4), labelgen.invert_sample(level5)]
    return out


def cmd_dataset(args) -> int:
    root = Path(args.input)
    directories = datastore.iter_demo_dirs(root)
    if not directories:
        print(f"warning: no demo records under {root}", file=sys.stderr)
    thresholds = labelgen.FilterThresholds(
        min_area_frac=args.min_area,
        max_area_frac=args.max_area,
        min_path_frac=args.min_path,
    )
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        results = list(
            pool.map(lambda d: _build_record_samples(d, args, thresholds), directories)
        )

    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    level4, level5, inverse = [], [], []
    rejected: dict[str, int] = {}
    record_errors = []
    kept = 0
    for result in results:
        if "error" in result:
            record_errors.append({"episode": result["episode"], "error": result["error"]})
            continue
        verdict = result["verdict"]
        if not verdict.keep:
            rejected[verdict.reason.value] = rejected.get(verdict.reason.value, 0) + 1
            continue
        kept += 1
        samples = result["samples"]
        level4.append(samples[0])
        level5.append(samples[1])
        inverse.extend(samples[2:])

    datastore.write_jsonl(level4, out_dir / "level4.jsonl")
    datastore.write_jsonl(level5, out_dir / "level5.jsonl")
    if args.inverse:
        datastore.write_jsonl(inverse, out_dir / "inverse.jsonl")
    report = {
        "total": len(directories),
        "kept": kept,
        "rejected": dict(sorted(rejected.items())),
        "record_errors": record_errors,
        "seed": args.seed,
    }
    (out_dir / "filter_report.json").write_text(json.dumps(report, indent=2))
    print(
        f"kept {kept}/{len(directories)} records"
        + (f", rejected {sum(rejected.values())}" if rejected else "")
        + (f", {len(record_errors)} record error(s)" if record_errors else "")
    )
    if directories and kept == 0:
        return EXIT_VALIDATION
    return EXIT_OK


def _load_trace(path: str) -> labelgen.Trace2D:
    text = _read_text(path)
    if path is not None and path.endswith(".json"):
        coords = json.loads(text)
        return labelgen.Trace2D(tuple(NormPoint(int(x), int(y)) for x, y in coords))
    doc = markup.parse_document(text)
    points, _ = markup.extract_trace(doc)
    return labelgen.Trace2D(points.points)


def _parse_quat(text: str) -> tuple[float, float, float, float]:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4:
        raise ValueError(f"quaternion needs 4 comma-separated values, got {text!r}")
    return tuple(parts)


def cmd_lift(args) -> int:
    trace = _load_trace(args.trace)
    depth = datastore.load_depth(args.depth)
    cam = datastore.load_intrinsics(args.intrinsics)
    shape = ImageShape(width=depth.width, height=depth.height)
    config = lift3d.LiftConfig(neighborhood=args.neighborhood)
    depths = lift3d.lookup_depths(trace, shape, depth, neighborhood=config.neighborhood)

    result = lift3d.optimize_depths(trace, depths, cam, shape, config)
    optimized = not args.no_optimize and not result.skipped
    final_depths = result.depths if optimized else depths
    if result.skipped and len(trace.points) < 3:
        print("optimization skipped: fewer than 3 points, nothing to optimize")
    final_objective = result.final_objective if optimized else result.initial_objective
    print(
        f"path objective: initial {result.initial_objective:.6f} m, "
        f"final {final_objective:.6f} m"
    )

    trace3d = lift3d.lift_naive(trace, final_depths, cam, shape)
    poses = lift3d.se3_waypoints(trace3d, _parse_quat(args.start_quat), _parse_quat(args.end_quat))
    payload = {
        "optimized": optimized,
        "initial_objective": result.initial_objective,
        "final_objective": final_objective,
        "waypoints": [
            {
                "position": [w.position.x, w.position.y, w.position.z],
                "orientation": list(w.orientation),
            }
            for w in poses.waypoints
        ],
    }
    _write_text(json.dumps(payload, indent=2), args.output)
    return EXIT_OK


def _judge_config(args) -> evalkit.JudgeConfig | None:
    if not args.judge:
        return None
    endpoint = args.judge_endpoint or os.environ.get("EVAL_JUDGE_ENDPOINT")
    model = args.judge_model or os.environ.get("EVAL_JUDGE_MODEL", "")
    if not endpoint:
        raise SchemaError("judge requested but no endpoint given (flag or EVAL_JUDGE_ENDPOINT)")
    return evalkit.JudgeConfig(
        endpoint=endpoint,
        model=model,
        api_key=os.environ.get("EVAL_JUDGE_KEY"),
        timeout=args.judge_timeout,
        retries=args.judge_retries,
        max_inflight=args.workers,
    )


def cmd_eval(args) -> int:
    errors: list[datastore.LineError] = []
    records = list(
        datastore.read_jsonl(
            args.records,
            datastore.eval_record_from_json,
            strict=not args.lenient,
            errors=errors,
        )
    )
    for err in errors:
        print(f"skipped line {err.line}: {err.message}", file=sys.stderr)
    options = evalkit.EvalOptions(
        box_expansion=args.box_expansion,
        judge=_judge_config(args),
        image_root=args.image_root,
    )
    report = evalkit.evaluate(records, options)
    if args.output is not None:
        Path(args.output).write_text(json.dumps(report.to_json(), indent=2))
    print(report.summary_table())
    if (
        options.judge is not None
        and report.counts["trace"] > 0
        and report.counts["judge_errors"] == report.counts["trace"]
    ):
        print("judge failed on every record", file=sys.stderr)
        return EXIT_JUDGE
    return EXIT_OK


def cmd_render(args) -> int:
    trace = _load_trace(args.trace)
    with Image.open(args.image) as img:
        overlay = evalkit.render_overlay(img, trace)
    overlay.save(args.output)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="visaid",
        description="Grounded markup, scene graphs, trace lifting, and benchmark metrics.",
    )
    parser.add_argument("--config", help="TOML config file with per-subcommand tables")
    sub = parser.add_subparsers(dest="command", required=True)
    commands: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("parse", help="parse markup text into a JSON document")
    p.add_argument("input", nargs="?", default="-", help="input file (default stdin)")
    p.add_argument("-o", "--output", help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_parse)
    commands["parse"] = p

    p = sub.add_parser("graph", help="build a spatial relationship graph from detections")
    p.add_argument("--detections", required=True, help="detection JSON file")
    p.add_argument("--depth", help="depth map (16-bit PNG or CSV grid)")
    p.add_argument("--margin", type=float, default=scenegraph.DEFAULT_MARGIN)
    p.add_argument("--depth-gap", type=float, default=scenegraph.DEFAULT_DEPTH_GAP)
    p.add_argument("--symmetric", action="store_true", help="also emit inverse edges")
    p.add_argument("-o", "--output", help="markup output path (default stdout)")
    p.add_argument("--json-out", help="also write the graph as JSON")
    p.set_defaults(func=cmd_graph)
    commands["graph"] = p

    p = sub.add_parser("dataset", help="build affordance/trace samples from demo records")
    p.add_argument("--input", required=True, help="demo-record corpus directory")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--inverse", action="store_true", help="also emit inverse samples")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--min-area", type=float, default=labelgen.FilterThresholds.min_area_frac)
    p.add_argument("--max-area", type=float, default=labelgen.FilterThresholds.max_area_frac)
    p.add_argument("--min-path", type=float, default=labelgen.FilterThresholds.min_path_frac)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_dataset)
    commands["dataset"] = p

    p = sub.add_parser("lift", help="lift a 2D trace to 3D waypoints")
    p.add_argument("--trace", required=True, help="trace file (markup, or .json point list)")
    p.add_argument("--depth", required=True, help="depth map (16-bit PNG or CSV grid)")
    p.add_argument("--intrinsics", required=True, help="camera intrinsics JSON")
    p.add_argument("--no-optimize", action="store_true", help="skip depth optimization")
    p.add_argument("--neighborhood", type=int, default=5, help="depth fallback window radius")
    p.add_argument("--start-quat", default="1,0,0,0", help="start orientation, w,x,y,z")
    p.add_argument("--end-quat", default="1,0,0,0", help="end orientation, w,x,y,z")
    p.add_argument("-o", "--output", help="waypoint JSON path (default stdout)")
    p.set_defaults(func=cmd_lift)
    commands["lift"] = p

    p = sub.add_parser("eval", help="score prediction records against ground truth")
    p.add_argument("--records", required=True, help="eval-record JSONL file")
    p.add_argument("--lenient", action="store_true", help="skip malformed lines instead of aborting")
    p.add_argument("--box-expansion", choices=("grid9", "midpoint"), default="grid9")
    p.add_argument("--image-root", help="directory for relative image/mask paths")
    p.add_argument("--judge", action="store_true", help="enable judge scoring")
    p.add_argument("--judge-endpoint", help="judge endpoint (or EVAL_JUDGE_ENDPOINT)")
    p.add_argument("--judge-model", help="judge model name (or EVAL_JUDGE_MODEL)")
    p.add_argument("--judge-timeout", type=float, default=30.0)
    p.add_argument("--judge-retries", type=int, default=2)
    p.add_argument("--workers", type=int, default=4, help="max in-flight judge requests")
    p.add_argument("-o", "--output", help="report JSON path")
    p.set_defaults(func=cmd_eval)
    commands["eval"] = p

    p = sub.add_parser("render", help="render a trace overlay PNG")
    p.add_argument("--image", required=True)
    p.add_argument("--trace", required=True, help="trace file (markup, or .json point list)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_render)
    commands["render"] = p

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    commands["serve"] = p

    return parser, commands


def _apply_config(argv: list[str], commands: dict[str, argparse.ArgumentParser]) -> None:
    if "--config" not in argv:
        return
    index = argv.index("--config") + 1
    if index >= len(argv):
        return  # argparse will report the missing value
    config_path = argv[index]
    with open(config_path, "rb") as handle:
        config = tomllib.load(handle)
    for name, table in config.items():
        if name in commands and isinstance(table, dict):
            commands[name].set_defaults(**{k.replace("-", "_"): v for k, v in table.items()})


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = build_parser()
    try:
        _apply_config(argv, commands)
        args = parser.parse_args(argv)
        return args.func(args)
    except (markup.MarkupParseError, SchemaError, markup.ExtractionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except lift3d.MissingDepthError as exc:
        print(f"error: {exc} (point index {exc.index})", file=sys.stderr)
        return EXIT_VALIDATION
    except evalkit.JudgeTransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_JUDGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
