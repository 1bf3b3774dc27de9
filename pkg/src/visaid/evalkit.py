"""Benchmark metric suite: point accuracy, trace MAE/RMSE, judge scoring.

All metrics operate in the 1000x1000 normalized coordinate space. Traces of
different lengths are aligned by resampling the prediction (never the
ground truth) with piecewise-linear arc-length interpolation.
"""

from __future__ import annotations

import base64
import io
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import httpx
import numpy as np
from PIL import Image, ImageDraw

from . import prompts
from .coordsys import ImageShape, NormBox, NormPoint, from_norm
from .datastore import EvalRecordPoint, EvalRecordTrace, load_mask
from .markup import PointSet


def as_xy(trace) -> np.ndarray:
    """Any trace-like object (PointSet, Trace2D, sequence) as a float (n, 2) array."""
    if isinstance(trace, PointSet):
        return np.array([[p.x, p.y] for p in trace.points], dtype=float)
    if hasattr(trace, "points"):
        return np.array([[p.x, p.y] for p in trace.points], dtype=float)
    return np.asarray(trace, dtype=float).reshape(-1, 2)


def align_lengths(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    """Resample pred to gt's length when they differ; gt is never altered.

    Resampling places points at equal arc-length fractions along the
    prediction polyline (endpoints included). Already-aligned traces pass
    through unchanged, so the operation is idempotent.
    """
    p, g = as_xy(pred), as_xy(gt)
    if len(p) < 2 or len(g) < 2:
        raise ValueError("traces need at least 2 points")
    if len(p) == len(g):
        return p, g
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    total = arc[-1]
    if total == 0.0:
        return np.tile(p[0], (len(g), 1)), g
    targets = np.linspace(0.0, total, len(g))
    return np.stack([np.interp(targets, arc, p[:, i]) for i in range(2)], axis=1), g


def _point_errors(pred, gt) -> np.ndarray:
    p, g = as_xy(pred), as_xy(gt)
    if p.shape != g.shape:
        raise ValueError(f"traces must be aligned, got {p.shape} vs {g.shape}")
    return np.linalg.norm(p - g, axis=1)


def trace_mae(pred, gt) -> float:
    """Mean per-point Euclidean distance, normalized units."""
    return float(_point_errors(pred, gt).mean())


def trace_rmse(pred, gt) -> float:
    """Root mean squared per-point Euclidean distance, normalized units."""
    return float(np.sqrt((_point_errors(pred, gt) ** 2).mean()))


def point_accuracy(points, region, shape: ImageShape | None = None) -> float:
    """Fraction of points inside the target region.

    Box containment is inclusive at edges. A mask region (2D array) needs
    ``shape`` to de-normalize points onto the pixel grid.
    """
    pts = as_xy(points)
    if len(pts) == 0:
        raise ValueError("point_accuracy needs at least one point")
    if isinstance(region, NormBox):
        inside = (
            (region.x1 <= pts[:, 0])
            & (pts[:, 0] <= region.x2)
            & (region.y1 <= pts[:, 1])
            & (pts[:, 1] <= region.y2)
        )
        return float(inside.mean())
    mask = np.asarray(region)
    if shape is None:
        raise ValueError("mask regions require an image shape")
    hits = 0
    for x, y in pts:
        pixel = from_norm(NormPoint(int(x), int(y)), shape)
        col = min(int(pixel.u), shape.width - 1)
        row = min(int(pixel.v), shape.height - 1)
        hits += bool(mask[row, col])
    return hits / len(pts)


def sample_box_points(box: NormBox, n: int = 9) -> PointSet:
    """Evenly spaced interior grid over the box (3x3 for the default 9).

    Grid fractions are (i+1)/(k+1) per axis, so points stay strictly inside
    the box extent; fractional positions floor to integers.
    """
    k = math.isqrt(n)
    if k * k != n:
        raise ValueError(f"grid sampling needs a square count, got {n}")
    xs = [box.x1 + int((i + 1) / (k + 1) * (box.x2 - box.x1)) for i in range(k)]
    ys = [box.y1 + int((j + 1) / (k + 1) * (box.y2 - box.y1)) for j in range(k)]
    return PointSet(tuple(NormPoint(x, y) for y in ys for x in xs))


def box_midpoint(box: NormBox) -> PointSet:
    """Single-point expansion: the box midpoint (floored)."""
    return PointSet(
        (NormPoint(box.x1 + (box.x2 - box.x1) // 2, box.y1 + (box.y2 - box.y1) // 2),)
    )


TRACE_COLOR = (0, 200, 0)
START_COLOR = (255, 0, 0)
END_COLOR = (0, 0, 255)
MARKER_FRACTION = 0.015


def render_overlay(image: Image.Image, trace) -> Image.Image:
    """Draw the trace on a copy of the image.

    Polyline through the de-normalized points, a red circle on the first
    point and a blue diamond on the last; marker radius is 1.5% of the
    image side. Rendering is deterministic.
    """
    out = image.convert("RGB").copy()
    shape = ImageShape(width=out.width, height=out.height)
    side = max(out.width, out.height)
    radius = max(1, round(MARKER_FRACTION * side))
    pts = as_xy(trace)
    pixels = [from_norm(NormPoint(int(x), int(y)), shape) for x, y in pts]
    xy = [(p.u, p.v) for p in pixels]
    draw = ImageDraw.Draw(out)
    if len(xy) >= 2:
        draw.line(xy, fill=TRACE_COLOR, width=max(1, round(0.004 * side)))
    sx, sy = xy[0]
    draw.ellipse([sx - radius, sy - radius, sx + radius, sy + radius], fill=START_COLOR)
    ex, ey = xy[-1]
    draw.polygon(
        [(ex, ey - radius), (ex + radius, ey), (ex, ey + radius), (ex - radius, ey)],
        fill=END_COLOR,
    )
    return out


def image_png_bytes(image: Image.Image) -> bytes:
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()


class JudgeParseError(ValueError):
    """Judge response violated the Score/Explanation contract."""

    def __init__(self, raw: str):
        super().__init__(f"unparseable judge response: {raw!r}")
        self.raw = raw


class JudgeTransportError(RuntimeError):
    """The judge endpoint could not be reached (after retries)."""


@dataclass
class JudgeConfig:
    endpoint: str
    model: str
    api_key: str | None = None
    timeout: float = 30.0
    retries: int = 2
    prompt_template: str = prompts.JUDGE_PROMPT_TEMPLATE
    max_inflight: int = 4
    transport: httpx.BaseTransport | None = None  # injected in tests

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("judge timeout must be positive")


_SCORE_RE = re.compile(r"\s*Score:\s*(\d+)\s*")
_EXPLANATION_RE = re.compile(r"\s*Explanation:\s*(.*)", re.DOTALL)


def parse_judge_reply(content: str) -> tuple[int, str]:
    """Extract (score, explanation) from a judge reply.

    The first line matching ``Score: <integer>`` carries the score (must be
    1-10); the text after ``Explanation:`` is the explanation, empty when
    absent.
    """
    score = None
    rest_index = None
    lines = content.splitlines()
    for i, line in enumerate(lines):
        m = _SCORE_RE.fullmatch(line)
        if m:
            score = int(m.group(1))
            rest_index = i + 1
            break
    if score is None or not 1 <= score <= 10:
        raise JudgeParseError(content)
    explanation = ""
    m = _EXPLANATION_RE.match("\n".join(lines[rest_index:]))
    if m:
        explanation = m.group(1).strip()
    return score, explanation


def judge_score(instruction: str, overlay: Image.Image, config: JudgeConfig) -> tuple[int, str]:
    """Score a rendered trajectory with the judge endpoint.

    Sends the judge prompt (instruction substituted) plus the overlay image
    to a chat-completion-style API and parses the ``Score: <1-10>`` reply.
    Transport failures are retried up to ``config.retries`` times.
    """
    prompt = config.prompt_template.format(task_instruction=instruction)
    data_url = "data:image/png;base64," + base64.b64encode(image_png_bytes(overlay)).decode()
    body = {
        "model": config.model,
        "messages": [
            {
                "role": "user",
                "content": [
                    {"type": "text", "text": prompt},
                    {"type": "image_url", "image_url": {"url": data_url}},
                ],
            }
        ],
    }
    headers = {}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"

    last_error: Exception | None = None
    for _ in range(config.retries + 1):
        try:
            with httpx.Client(transport=config.transport, timeout=config.timeout) as client:
                response = client.post(config.endpoint, json=body, headers=headers)
            if response.status_code >= 500:
                last_error = JudgeTransportError(f"judge returned {response.status_code}")
                continue
            if response.status_code >= 400:
                raise JudgeTransportError(
                    f"judge rejected the request: {response.status_code} {response.text[:200]}"
                )
            payload = response.json()
            try:
                content = payload["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError):
                raise JudgeParseError(response.text[:500])
            return parse_judge_reply(content)
        except httpx.HTTPError as exc:
            last_error = exc
    raise JudgeTransportError(f"judge unreachable after {config.retries + 1} attempts: {last_error}")


@dataclass
class EvalOptions:
    box_expansion: str = "grid9"  # or "midpoint"
    judge: JudgeConfig | None = None
    image_root: str | Path | None = None

    def expand(self, box: NormBox) -> PointSet:
        if self.box_expansion == "grid9":
            return sample_box_points(box)
        if self.box_expansion == "midpoint":
            return box_midpoint(box)
        raise ValueError(f"unknown box expansion {self.box_expansion!r}")


@dataclass
class EvalReport:
    rows: list[dict] = field(default_factory=list)
    counts: dict = field(default_factory=dict)
    aggregates: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"aggregates": self.aggregates, "counts": self.counts, "records": self.rows}

    def summary_table(self) -> str:
        cols = ["Task", "N", "Errors", "Accuracy", "MAE", "RMSE", "Judge"]
        agg = self.aggregates

        def fmt(value, pattern):
            return "-" if value is None else pattern.format(value)

        rows = []
        if self.counts.get("point", 0) or agg.get("accuracy") is not None:
            rows.append(
                [
                    "point",
                    str(self.counts.get("point", 0)),
                    str(self.counts.get("point_errors", 0)),
                    fmt(agg.get("accuracy"), "{:.2%}"),
                    "-",
                    "-",
                    "-",
                ]
            )
        if self.counts.get("trace", 0) or agg.get("mae") is not None:
            rows.append(
                [
                    "trace",
                    str(self.counts.get("trace", 0)),
                    str(self.counts.get("trace_errors", 0)),
                    "-",
                    fmt(agg.get("mae"), "{:.2f}"),
                    fmt(agg.get("rmse"), "{:.2f}"),
                    fmt(agg.get("judge"), "{:.2f}"),
                ]
            )
        widths = [max(len(c), *(len(r[i]) for r in rows)) if rows else len(c) for i, c in enumerate(cols)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
        for r in rows:
            lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
        return "\n".join(lines)


def _resolve(path: str, root) -> Path:
    p = Path(path)
    if root is not None and not p.is_absolute():
        return Path(root) / p
    return p


def _eval_point_record(record: EvalRecordPoint, options: EvalOptions) -> dict:
    points = record.pred_points if record.pred_points is not None else options.expand(record.pred_box)
    if record.gt_box is not None:
        accuracy = point_accuracy(points, record.gt_box)
    else:
        mask = load_mask(_resolve(record.gt_mask_path, options.image_root))
        accuracy = point_accuracy(points, mask, record.shape)
    return {"id": record.id, "kind": "point", "accuracy": accuracy}


def _judge_one(record: EvalRecordTrace, options: EvalOptions) -> dict:
    if record.image_path is None:
        return {"judge_error": "record has no image for judge scoring"}
    try:
        with Image.open(_resolve(record.image_path, options.image_root)) as img:
            overlay = render_overlay(img, record.pred_trace)
        score, explanation = judge_score(record.instruction, overlay, options.judge)
        return {"judge": score, "judge_explanation": explanation}
    except (JudgeParseError, JudgeTransportError, OSError) as exc:
        return {"judge_error": str(exc)}


def evaluate(records: list, options: EvalOptions | None = None) -> EvalReport:
    """Score every record; aggregates are arithmetic means over scored rows.

    Errored records are kept in the report with an ``error`` field and
    counted, never dropped. Judge failures are per-record and leave the
    geometric metric columns intact.
    """
    options = options or EvalOptions()
    rows: list[dict] = []
    for record in records:
        try:
            if isinstance(record, EvalRecordPoint):
                rows.append(_eval_point_record(record, options))
            elif isinstance(record, EvalRecordTrace):
                pred, gt = align_lengths(record.pred_trace, record.gt_trace)
                mae = trace_mae(pred, gt)
                rmse = trace_rmse(pred, gt)
                assert mae <= rmse + 1e-12, f"MAE {mae} > RMSE {rmse} on record {record.id}"
                rows.append({"id": record.id, "kind": "trace", "mae": mae, "rmse": rmse})
            else:
                raise TypeError(f"not an eval record: {type(record).__name__}")
        except (ValueError, OSError, TypeError) as exc:
            source = "point" if isinstance(record, EvalRecordPoint) else "trace"
            rows.append(
                {"id": getattr(record, "id", "?"), "kind": "error", "source": source, "error": str(exc)}
            )

    if options.judge is not None:
        trace_records = {
            r.id: r for r in records if isinstance(r, EvalRecordTrace)
        }
        judged_rows = [row for row in rows if row["kind"] == "trace"]
        with ThreadPoolExecutor(max_workers=options.judge.max_inflight) as pool:
            results = list(
                pool.map(lambda row: _judge_one(trace_records[row["id"]], options), judged_rows)
            )
        for row, result in zip(judged_rows, results):
            row.update(result)

    point_rows = [r for r in rows if r["kind"] == "point"]
    trace_rows = [r for r in rows if r["kind"] == "trace"]
    error_rows = [r for r in rows if r["kind"] == "error"]
    judge_scores = [r["judge"] for r in trace_rows if "judge" in r]
    counts = {
        "total": len(rows),
        "point": len(point_rows),
        "trace": len(trace_rows),
        "errors": len(error_rows),
        "point_errors": sum(1 for r in error_rows if r.get("source") == "point"),
        "trace_errors": sum(1 for r in error_rows if r.get("source") == "trace"),
        "judge_errors": sum(1 for r in trace_rows if "judge_error" in r),
    }
    aggregates = {
        "accuracy": float(np.mean([r["accuracy"] for r in point_rows])) if point_rows else None,
        "mae": float(np.mean([r["mae"] for r in trace_rows])) if trace_rows else None,
        "rmse": float(np.mean([r["rmse"] for r in trace_rows])) if trace_rows else None,
        "judge": float(np.mean(judge_scores)) if judge_scores else None,
    }
    return EvalReport(rows=rows, counts=counts, aggregates=aggregates)
