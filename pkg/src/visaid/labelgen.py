"""Demonstration records to affordance and visual-trace training labels.

The affordance label of a demonstration is the manipulated object's final
footprint: its tight bounding box in the terminal frame plus 8 uniformly
sampled interior points (the mask is eroded first so samples avoid edges).
The visual-trace label is the longest point track, smoothed with a natural
cubic spline and resampled to 8 arc-length-equidistant waypoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import binary_erosion

from . import prompts
from .coordsys import ImageShape, NormBox, NormPoint, PixelPoint, to_norm
from .datastore import SampleEnvelope
from .markup import (
    ExtractionError,
    PointSet,
    extract_affordance,
    extract_trace,
    parse_document,
    render_box_tag,
    render_point_tag,
)

TRACE_POINTS = 8
AFFORDANCE_POINTS = 8
EROSION_AREA_FACTOR = 0.05
DENSE_SPLINE_SAMPLES = 1000


class EmptyMaskError(ValueError):
    """A mask with no foreground pixels where one is required."""


class DegenerateTraceError(ValueError):
    """All track points coincide; no spline can be fitted."""


@dataclass(frozen=True)
class Trace2D:
    """Ordered normalized waypoints; canonically 8 of them."""

    points: tuple[NormPoint, ...]

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError("a trace needs at least 2 points")

    def __len__(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.points], dtype=float)


@dataclass(frozen=True)
class AffordanceLabel:
    box: NormBox
    points: PointSet

    def __post_init__(self):
        outside = [p for p in self.points.points if not self.box.contains(p)]
        if outside:
            raise ValueError(f"{len(outside)} affordance point(s) fall outside the box")


class FilterReason(str, Enum):
    OK = "ok"
    MASK_TOO_SMALL = "mask-too-small"
    MASK_TOO_LARGE = "mask-too-large"
    TRACE_TOO_SHORT = "trace-too-short"
    TRACK_MISSING = "track-missing"
    DEGENERATE_SPLINE = "degenerate-spline"


@dataclass(frozen=True)
class FilterVerdict:
    keep: bool
    reason: FilterReason

    def __post_init__(self):
        if self.keep != (self.reason == FilterReason.OK):
            raise ValueError("verdict reason must be 'ok' exactly when the record is kept")


@dataclass(frozen=True)
class FilterThresholds:
    """Rule-based record filters; area fractions of the image, path as a
    fraction of the image diagonal."""

    min_area_frac: float = 0.0005
    max_area_frac: float = 0.25
    min_path_frac: float = 0.05


@dataclass
class DemoRecord:
    instruction: str
    image_shape: ImageShape
    initial_mask: np.ndarray
    final_mask: np.ndarray
    raw_tracks: list[np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = (self.image_shape.height, self.image_shape.width)
        for label, mask in (("initial", self.initial_mask), ("final", self.final_mask)):
            if mask.shape != expected:
                raise ValueError(f"{label} mask shape {mask.shape} != image {expected}")
        for i, track in enumerate(self.raw_tracks):
            if track.ndim != 2 or track.shape[1] != 2 or track.shape[0] < 2:
                raise ValueError(f"track {i} must be an (n>=2, 2) point sequence")


def affordance_box(final_mask: np.ndarray, shape: ImageShape) -> NormBox:
    """Tight normalized bounding box of the mask.

    The min corner is the smallest foreground pixel index; the max corner is
    normalized one pixel past the largest index, so the box spans the full
    footprint of the boundary pixels.
    """
    rows, cols = np.nonzero(final_mask)
    if rows.size == 0:
        raise EmptyMaskError("cannot take the bounding box of an empty mask")
    lo = to_norm(PixelPoint(float(cols.min()), float(rows.min())), shape)
    hi = to_norm(PixelPoint(float(cols.max() + 1), float(rows.max() + 1)), shape)
    return NormBox(lo.x, lo.y, hi.x, hi.y)


def _disk(radius: int) -> np.ndarray:
    yy, xx = np.ogrid[-radius : radius + 1, -radius : radius + 1]
    return (xx * xx + yy * yy) <= radius * radius


def sample_affordance_points(
    final_mask: np.ndarray,
    shape: ImageShape,
    k: int = AFFORDANCE_POINTS,
    seed: int = 0,
) -> tuple[PointSet, bool]:
    """Uniformly sample k interior pixels of the (eroded) mask, normalized.

    The erosion disk radius is max(1, round(0.05 * sqrt(area))); if erosion
    empties the mask the original mask is used. Returns the points plus a
    flag that is True when the mask held fewer than k pixels and sampling
    fell back to replacement.
    """
    fg = final_mask != 0
    area = int(fg.sum())
    if area == 0:
        raise EmptyMaskError("cannot sample points from an empty mask")
    radius = max(1, round(EROSION_AREA_FACTOR * math.sqrt(area)))
    eroded = binary_erosion(fg, structure=_disk(radius))
    if not eroded.any():
        eroded = fg
    pixels = np.argwhere(eroded)  # (n, 2) as (row, col)
    rng = np.random.default_rng(seed)
    replace = len(pixels) < k
    chosen = pixels[rng.choice(len(pixels), size=k, replace=replace)]
    points = tuple(
        to_norm(PixelPoint(float(col), float(row)), shape) for row, col in chosen
    )
    return PointSet(points), replace


def path_length(track: np.ndarray) -> float:
    if len(track) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(track, axis=0), axis=1).sum())


def select_longest(tracks: list[np.ndarray]) -> np.ndarray:
    """The track with the greatest total path length; ties go to the lowest index."""
    if not tracks:
        raise ValueError("no tracks to select from")
    lengths = [path_length(t) for t in tracks]
    return tracks[int(np.argmax(lengths))]


def _dedupe_consecutive(track: np.ndarray) -> np.ndarray:
    if len(track) < 2:
        return track
    keep = np.concatenate([[True], np.linalg.norm(np.diff(track, axis=0), axis=1) > 1e-12])
    return track[keep]


def resample_equidistant(track: np.ndarray, shape: ImageShape, n: int = TRACE_POINTS) -> Trace2D:
    """Smooth a pixel track and resample it to n arc-length-equidistant points.

    Fits a natural cubic spline over the cumulative-chord-length parameter,
    samples it densely, and picks n points (endpoints included) at equal
    arc-length intervals. Output is normalized; spline overshoot beyond the
    image border is clamped before quantization.
    """
    pts = _dedupe_consecutive(np.asarray(track, dtype=float))
    if len(pts) < 2:
        raise DegenerateTraceError("track collapses to a single point")
    chord = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    spline = CubicSpline(chord, pts, axis=0, bc_type="natural")

    ts = np.linspace(0.0, chord[-1], DENSE_SPLINE_SAMPLES + 1)
    dense = spline(ts)
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(dense, axis=0), axis=1))])
    targets = np.linspace(0.0, arc[-1], n)
    samples = spline(np.interp(targets, arc, ts))

    us = np.clip(samples[:, 0], 0.0, shape.width)
    vs = np.clip(samples[:, 1], 0.0, shape.height)
    return Trace2D(tuple(to_norm(PixelPoint(float(u), float(v)), shape) for u, v in zip(us, vs)))


def filter_record(record: DemoRecord, thresholds: FilterThresholds | None = None) -> FilterVerdict:
    """Apply the rule-based filters; the first failing rule names the reason."""
    t = thresholds or FilterThresholds()
    shape = record.image_shape
    area_frac = float((record.final_mask != 0).sum()) / (shape.width * shape.height)
    if area_frac < t.min_area_frac:
        return FilterVerdict(keep=False, reason=FilterReason.MASK_TOO_SMALL)
    if area_frac > t.max_area_frac:
        return FilterVerdict(keep=False, reason=FilterReason.MASK_TOO_LARGE)
    if not record.raw_tracks:
        return FilterVerdict(keep=False, reason=FilterReason.TRACK_MISSING)
    track = select_longest(record.raw_tracks)
    if path_length(track) < t.min_path_frac * shape.diagonal:
        return FilterVerdict(keep=False, reason=FilterReason.TRACE_TOO_SHORT)
    if len(_dedupe_consecutive(track)) < 2:
        return FilterVerdict(keep=False, reason=FilterReason.DEGENERATE_SPLINE)
    return FilterVerdict(keep=True, reason=FilterReason.OK)


def _provenance(record: DemoRecord, seed: int | None) -> dict:
    prov = dict(record.metadata)
    prov["instruction"] = record.instruction
    prov["filter"] = FilterReason.OK.value
    if seed is not None:
        prov["seed"] = seed
    return prov


def make_level4(
    record: DemoRecord,
    *,
    sample_id: str,
    image_path: str,
    seed: int = 0,
) -> SampleEnvelope:
    """Affordance-generation sample: prompt plus grounded box/points answer."""
    box = affordance_box(record.final_mask, record.image_shape)
    points, replaced = sample_affordance_points(
        record.final_mask, record.image_shape, AFFORDANCE_POINTS, seed
    )
    label = AffordanceLabel(box=box, points=points)
    answer = (
        f"The target region for the manipulated object is {render_box_tag([label.box])}. "
        f"The target points are {render_point_tag(label.points)}."
    )
    prov = _provenance(record, seed)
    if replaced:
        prov["points_with_replacement"] = True
    return SampleEnvelope(
        id=sample_id,
        level="4",
        image_path=image_path,
        conversations=(
            ("human", prompts.AFFORDANCE_PROMPT_TEMPLATE.format(instruction=record.instruction)),
            ("gpt", answer),
        ),
        provenance=prov,
    )


def make_level5(
    record: DemoRecord,
    *,
    sample_id: str,
    image_path: str,
) -> SampleEnvelope:
    """Visual-trace sample: prompt plus an 8-point grounded trace answer."""
    track = select_longest(record.raw_tracks)
    trace = resample_equidistant(track, record.image_shape, TRACE_POINTS)
    answer = (
        "The visual trace for the manipulated object is "
        f"{render_point_tag(PointSet(trace.points))}."
    )
    return SampleEnvelope(
        id=sample_id,
        level="5",
        image_path=image_path,
        conversations=(
            ("human", prompts.TRACE_PROMPT_TEMPLATE.format(instruction=record.instruction)),
            ("gpt", answer),
        ),
        provenance=_provenance(record, None),
    )


def _aid_markup(doc_text: str, level: str) -> str:
    """Canonical markup of the visual aid carried by a sample answer/prompt."""
    doc = parse_document(doc_text)
    if level == "5":
        trace, _ = extract_trace(doc)
        return render_point_tag(trace)
    box, points = extract_affordance(doc)
    parts = []
    if box is not None:
        parts.append(render_box_tag([box]))
    if points is not None:
        parts.append(render_point_tag(points))
    return "".join(parts)


def invert_sample(sample: SampleEnvelope) -> SampleEnvelope:
    """Swap a sample's visual aid and instruction.

    A forward sample becomes an instruction-prediction sample whose prompt
    embeds the aid; applying it again to an inverse sample rebuilds the
    forward prompt/answer pairing.
    """
    conversations = dict(sample.conversations[:2])
    if sample.level != "inverse":
        instruction = sample.provenance.get("instruction", "")
        aid = _aid_markup(conversations["gpt"], sample.level)
        prov = dict(sample.provenance)
        prov["forward_level"] = sample.level
        return SampleEnvelope(
            id=f"{sample.id}-inv",
            level="inverse",
            image_path=sample.image_path,
            conversations=(
                ("human", prompts.INVERSE_PROMPT_TEMPLATE.format(aid=aid)),
                ("gpt", instruction),
            ),
            provenance=prov,
        )

    forward_level = str(sample.provenance.get("forward_level", "5"))
    instruction = conversations["gpt"]
    aid = _aid_markup(conversations["human"], forward_level)
    prov = {k: v for k, v in sample.provenance.items() if k != "forward_level"}
    prov["instruction"] = instruction
    if forward_level == "4":
        doc = parse_document(conversations["human"])
        box, points = extract_affordance(doc)
        if box is None or points is None:
            raise ExtractionError("inverse affordance sample must embed a box and points")
        answer = (
            f"The target region for the manipulated object is {render_box_tag([box])}. "
            f"The target points are {render_point_tag(points)}."
        )
        prompt = prompts.AFFORDANCE_PROMPT_TEMPLATE.format(instruction=instruction)
    else:
        answer = f"The visual trace for the manipulated object is {aid}."
        prompt = prompts.TRACE_PROMPT_TEMPLATE.format(instruction=instruction)
    base_id = sample.id[:-4] if sample.id.endswith("-inv") else f"{sample.id}-fwd"
    return SampleEnvelope(
        id=base_id,
        level=forward_level,
        image_path=sample.image_path,
        conversations=(("human", prompt), ("gpt", answer)),
        provenance=prov,
    )
