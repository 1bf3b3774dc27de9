"""File schemas, validation, and ingestion.

All corpora are JSONL: one compact JSON object per line. Binary payloads
(images, masks, depth) are referenced by path, never embedded. See the
README for the documented schemas.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np
from PIL import Image

from .camera3d import CameraModel, DepthMap
from .coordsys import ImageShape, NormBox, NormPoint
from .markup import (
    ExtractionError,
    MarkupParseError,
    PointSet,
    Violation,
    extract_affordance,
    extract_trace,
    parse_document,
    validate_binding,
)

SAMPLE_LEVELS = ("1", "2", "3", "4", "5", "inverse")


class SchemaError(ValueError):
    """A record does not match its documented schema."""


@dataclass(frozen=True)
class LineError:
    line: int
    message: str


@dataclass(frozen=True)
class SampleEnvelope:
    """One instruction-tuning sample: alternating human/gpt conversation turns."""

    id: str
    level: str
    image_path: str
    conversations: tuple[tuple[str, str], ...]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.level not in SAMPLE_LEVELS:
            raise ValueError(f"unknown sample level {self.level!r}")
        if not self.conversations:
            raise ValueError("sample has no conversation turns")
        for i, (role, _) in enumerate(self.conversations):
            expected = "human" if i % 2 == 0 else "gpt"
            if role != expected:
                raise ValueError(f"conversation turn {i} must be {expected!r}, got {role!r}")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "level": self.level,
            "image": self.image_path,
            "conversations": [{"from": role, "value": text} for role, text in self.conversations],
            "provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SampleEnvelope":
        try:
            conversations = tuple(
                (turn["from"], turn["value"]) for turn in obj["conversations"]
            )
            return cls(
                id=str(obj["id"]),
                level=str(obj["level"]),
                image_path=str(obj.get("image", "")),
                conversations=conversations,
                provenance=dict(obj.get("provenance", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad sample envelope: {exc}") from exc


@dataclass(frozen=True)
class DetectionObject:
    name: str
    box: tuple[float, float, float, float]  # pixel x1, y1, x2, y2
    mask_path: str | None = None


@dataclass(frozen=True)
class DetectionFile:
    image_path: str
    shape: ImageShape
    objects: tuple[DetectionObject, ...]

    def __post_init__(self):
        for obj in self.objects:
            x1, y1, x2, y2 = obj.box
            if not (0 <= x1 <= x2 <= self.shape.width and 0 <= y1 <= y2 <= self.shape.height):
                raise ValueError(f"detection box {obj.box} outside image bounds")


def load_detections(path: str | Path) -> DetectionFile:
    obj = json.loads(Path(path).read_text())
    try:
        return DetectionFile(
            image_path=str(obj.get("image", "")),
            shape=ImageShape(width=int(obj["width"]), height=int(obj["height"])),
            objects=tuple(
                DetectionObject(
                    name=str(o["name"]),
                    box=tuple(float(v) for v in o["box"]),
                    mask_path=o.get("mask"),
                )
                for o in obj["objects"]
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad detection file {path}: {exc}") from exc


def read_jsonl(
    path: str | Path,
    parse: Callable[[dict], object],
    *,
    strict: bool = True,
    errors: list[LineError] | None = None,
) -> Iterator[object]:
    """Yield parsed records in file order.

    Strict mode raises SchemaError naming the offending line; lenient mode
    skips bad lines and appends them to ``errors``.
    """
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = parse(json.loads(line))
            except (json.JSONDecodeError, SchemaError, ValueError) as exc:
                if strict:
                    raise SchemaError(f"{path}:{lineno}: {exc}") from exc
                if errors is not None:
                    errors.append(LineError(line=lineno, message=str(exc)))
                continue
            yield record


def write_jsonl(records: Iterable[object], path: str | Path) -> int:
    """Write one compact JSON object per record; returns the count written."""
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            obj = record.to_json() if hasattr(record, "to_json") else record
            handle.write(json.dumps(obj, separators=(",", ":"), ensure_ascii=False))
            handle.write("\n")
            count += 1
    return count


def validate_sample(sample: SampleEnvelope) -> list[Violation]:
    """Markup binding validation plus level-specific answer rules."""
    violations: list[Violation] = []
    for i, (role, text) in enumerate(sample.conversations):
        if role != "gpt":
            continue
        try:
            doc = parse_document(text)
        except MarkupParseError as exc:
            violations.append(Violation("parse-error", f"turn {i}: {exc}"))
            continue
        violations.extend(validate_binding(doc))
        if sample.level == "4":
            try:
                box, points = extract_affordance(doc)
            except ExtractionError as exc:
                violations.append(Violation("missing-affordance", f"turn {i}: {exc}"))
                continue
            if box is None:
                violations.append(Violation("missing-affordance-box", f"turn {i}: no box"))
            if points is None:
                violations.append(Violation("missing-affordance-points", f"turn {i}: no points"))
            if box is not None and points is not None:
                outside = sum(1 for p in points.points if not box.contains(p))
                if outside:
                    violations.append(
                        Violation(
                            "point-outside-box",
                            f"turn {i}: {outside} point(s) outside the affordance box",
                        )
                    )
        elif sample.level == "5":
            try:
                trace, warn = extract_trace(doc)
            except ExtractionError as exc:
                violations.append(Violation("missing-trace", f"turn {i}: {exc}"))
                continue
            if warn:
                violations.append(
                    Violation("trace-length", f"turn {i}: trace has {len(trace)} points, expected 8")
                )
    return violations


def load_mask(path: str | Path) -> np.ndarray:
    """8-bit mask PNG; nonzero pixels are foreground."""
    with Image.open(path) as img:
        return np.asarray(img.convert("L")) != 0


def save_mask(mask: np.ndarray, path: str | Path) -> None:
    Image.fromarray((np.asarray(mask) != 0).astype(np.uint8) * 255, mode="L").save(path)


def load_depth(path: str | Path) -> DepthMap:
    """Depth grid from a 16-bit single-channel PNG or a CSV grid."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        grid = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    else:
        with Image.open(path) as img:
            if img.mode not in ("I", "I;16", "I;16B", "L"):
                raise SchemaError(f"depth PNG {path} must be single-channel, got mode {img.mode}")
            grid = np.asarray(img.convert("I"), dtype=float)
    height, width = grid.shape
    return DepthMap(width=width, height=height, samples=grid)


def save_depth_png(depth: DepthMap, path: str | Path) -> None:
    Image.fromarray(depth.samples.astype(np.uint16)).save(path)


def load_intrinsics(path: str | Path) -> CameraModel:
    obj = json.loads(Path(path).read_text())
    try:
        return CameraModel(
            fx=float(obj["fx"]),
            fy=float(obj["fy"]),
            cx=float(obj["cx"]),
            cy=float(obj["cy"]),
            depth_scale=float(obj["depth_scale"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad intrinsics file {path}: {exc}") from exc


def load_tracks(path: str | Path) -> list[np.ndarray]:
    """Point tracks from CSV columns (frame, track_id, u, v).

    Rows are grouped by track id and ordered by frame; tracks come back
    ordered by ascending id. A header row is skipped if present.
    """
    by_id: dict[int, list[tuple[int, float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        for row in csv.reader(handle):
            if not row:
                continue
            try:
                frame, track_id = int(row[0]), int(row[1])
                u, v = float(row[2]), float(row[3])
            except (IndexError, ValueError):
                if not by_id:  # tolerate a leading header row only
                    continue
                raise SchemaError(f"bad track row in {path}: {row}")
            by_id.setdefault(track_id, []).append((frame, u, v))
    tracks = []
    for track_id in sorted(by_id):
        rows = sorted(by_id[track_id])
        tracks.append(np.array([[u, v] for _, u, v in rows], dtype=float))
    return tracks


def load_demo_record(directory: str | Path):
    """One demonstration from its directory layout.

    Expected files: record.json ({instruction, width, height, ...metadata}),
    initial_mask.png, final_mask.png, tracks.csv.
    """
    from .labelgen import DemoRecord

    directory = Path(directory)
    meta = json.loads((directory / "record.json").read_text())
    try:
        shape = ImageShape(width=int(meta["width"]), height=int(meta["height"]))
        instruction = str(meta["instruction"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad record.json in {directory}: {exc}") from exc
    tracks_path = directory / "tracks.csv"
    extra = {k: v for k, v in meta.items() if k not in ("instruction", "width", "height")}
    extra.setdefault("episode", directory.name)
    return DemoRecord(
        instruction=instruction,
        image_shape=shape,
        initial_mask=load_mask(directory / "initial_mask.png"),
        final_mask=load_mask(directory / "final_mask.png"),
        raw_tracks=load_tracks(tracks_path) if tracks_path.exists() else [],
        metadata=extra,
    )


def iter_demo_dirs(root: str | Path) -> list[Path]:
    """Episode directories under root, sorted by name for reproducibility."""
    return sorted(p for p in Path(root).iterdir() if (p / "record.json").exists())


def _norm_point_list(values, *, what: str) -> PointSet:
    try:
        return PointSet(tuple(NormPoint(int(x), int(y)) for x, y in values))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad {what}: {exc}") from exc


def _norm_box(values, *, what: str) -> NormBox:
    try:
        x1, y1, x2, y2 = values
        return NormBox(int(x1), int(y1), int(x2), int(y2))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad {what}: {exc}") from exc


@dataclass(frozen=True)
class EvalRecordPoint:
    """Point-benchmark record: prediction is a point set or a box to expand."""

    id: str
    instruction: str
    gt_box: NormBox | None
    gt_mask_path: str | None
    shape: ImageShape | None
    pred_points: PointSet | None
    pred_box: NormBox | None

    def __post_init__(self):
        if (self.pred_points is None) == (self.pred_box is None):
            raise SchemaError("exactly one of pred_points/pred_box required")
        if (self.gt_box is None) == (self.gt_mask_path is None):
            raise SchemaError("exactly one of gt_box/gt_mask required")
        if self.gt_mask_path is not None and self.shape is None:
            raise SchemaError("gt_mask requires width/height")


@dataclass(frozen=True)
class EvalRecordTrace:
    """Trace-benchmark record: 8-point ground truth, any-length prediction."""

    id: str
    instruction: str
    gt_trace: PointSet
    pred_trace: PointSet
    image_path: str | None = None

    def __post_init__(self):
        if len(self.gt_trace) < 2 or len(self.pred_trace) < 2:
            raise SchemaError("traces need at least 2 points")


def eval_record_from_json(obj: dict) -> EvalRecordPoint | EvalRecordTrace:
    try:
        record_id = str(obj["id"])
        instruction = str(obj.get("instruction", ""))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"record missing id: {exc}") from exc
    if "gt_trace" in obj:
        return EvalRecordTrace(
            id=record_id,
            instruction=instruction,
            gt_trace=_norm_point_list(obj["gt_trace"], what="gt_trace"),
            pred_trace=_norm_point_list(obj["pred_trace"], what="pred_trace"),
            image_path=obj.get("image"),
        )
    shape = None
    if "width" in obj and "height" in obj:
        shape = ImageShape(width=int(obj["width"]), height=int(obj["height"]))
    return EvalRecordPoint(
        id=record_id,
        instruction=instruction,
        gt_box=_norm_box(obj["gt_box"], what="gt_box") if "gt_box" in obj else None,
        gt_mask_path=obj.get("gt_mask"),
        shape=shape,
        pred_points=(
            _norm_point_list(obj["pred_points"], what="pred_points")
            if "pred_points" in obj
            else None
        ),
        pred_box=_norm_box(obj["pred_box"], what="pred_box") if "pred_box" in obj else None,
    )
