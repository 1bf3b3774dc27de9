"""Spatial relationship graphs from object boxes, masks, and depth.

2D relations compare box centers in normalized coordinates with a small
margin to suppress ties. Depth ordering uses a relative-gap rule: two
objects are ordered only when |da - db| / max(da, db) reaches the gap
threshold (default 20%); anything closer is indeterminate.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .coordsys import NormBox
from .markup import render_box_tag

DEFAULT_MARGIN = 10.0
DEFAULT_DEPTH_GAP = 0.20


class Predicate(str, Enum):
    LEFT_OF = "left-of"
    RIGHT_OF = "right-of"
    ABOVE = "above"
    BELOW = "below"
    IN_FRONT_OF = "in-front-of"
    BEHIND = "behind"


_INVERSE = {
    Predicate.LEFT_OF: Predicate.RIGHT_OF,
    Predicate.RIGHT_OF: Predicate.LEFT_OF,
    Predicate.ABOVE: Predicate.BELOW,
    Predicate.BELOW: Predicate.ABOVE,
    Predicate.IN_FRONT_OF: Predicate.BEHIND,
    Predicate.BEHIND: Predicate.IN_FRONT_OF,
}

PREDICATE_PHRASES = {
    Predicate.LEFT_OF: "to the left of",
    Predicate.RIGHT_OF: "to the right of",
    Predicate.ABOVE: "above",
    Predicate.BELOW: "below",
    Predicate.IN_FRONT_OF: "in front of",
    Predicate.BEHIND: "behind",
}

PHRASE_PREDICATES = {phrase: pred for pred, phrase in PREDICATE_PHRASES.items()}


class DepthOrdering(Enum):
    A_IN_FRONT = "a-in-front"
    B_IN_FRONT = "b-in-front"
    INDETERMINATE = "indeterminate"


class EmptyRegionError(ValueError):
    """A mask covers no pixel with valid depth."""


@dataclass(frozen=True)
class SceneObject:
    name: str
    box: NormBox
    mask: np.ndarray | None = None
    depth_stat: float | None = None

    def __post_init__(self):
        if self.mask is not None and not np.any(self.mask):
            raise ValueError(f"object {self.name!r} has an empty mask")
        if self.depth_stat is not None and self.depth_stat <= 0:
            raise ValueError(f"object {self.name!r} has non-positive depth {self.depth_stat}")


@dataclass(frozen=True)
class Relation:
    subject: int
    object: int
    predicate: Predicate

    def __post_init__(self):
        if self.subject == self.object:
            raise ValueError("relation subject and object must differ")


@dataclass(frozen=True)
class SceneGraph:
    objects: tuple[SceneObject, ...]
    relations: tuple[Relation, ...]

    def __post_init__(self):
        n = len(self.objects)
        seen = set()
        for r in self.relations:
            if not (0 <= r.subject < n and 0 <= r.object < n):
                raise ValueError(f"relation indices out of range: {r}")
            key = (r.subject, r.object, r.predicate)
            if key in seen:
                raise ValueError(f"duplicate relation triple: {key}")
            seen.add(key)


def inverse_predicate(pred: Predicate) -> Predicate:
    return _INVERSE[pred]


def relate_2d(a: NormBox, b: NormBox, margin: float = DEFAULT_MARGIN) -> set[Predicate]:
    """2D relations of a with respect to b, by box-center comparison.

    a is left-of b iff center_x(a) + margin < center_x(b); the other three
    follow symmetrically (image y grows downward, so smaller y is above).
    """
    (ax, ay), (bx, by) = a.center, b.center
    preds = set()
    if ax + margin < bx:
        preds.add(Predicate.LEFT_OF)
    elif bx + margin < ax:
        preds.add(Predicate.RIGHT_OF)
    if ay + margin < by:
        preds.add(Predicate.ABOVE)
    elif by + margin < ay:
        preds.add(Predicate.BELOW)
    return preds


def depth_order(
    a: SceneObject, b: SceneObject, gap_threshold: float = DEFAULT_DEPTH_GAP
) -> DepthOrdering:
    """Order two objects by depth when their relative gap is large enough."""
    if a.depth_stat is None or b.depth_stat is None:
        raise ValueError("depth_order requires depth_stat on both objects")
    da, db = a.depth_stat, b.depth_stat
    gap = abs(da - db) / max(da, db)
    if gap >= gap_threshold:
        return DepthOrdering.A_IN_FRONT if da < db else DepthOrdering.B_IN_FRONT
    return DepthOrdering.INDETERMINATE


def median_mask_depth(mask: np.ndarray, depth_map: np.ndarray) -> float:
    """Median raw depth over masked pixels with valid (nonzero) depth.

    An even sample count yields the mean of the middle pair.
    """
    if mask.shape != depth_map.shape:
        raise ValueError(f"mask shape {mask.shape} != depth shape {depth_map.shape}")
    samples = depth_map[(mask != 0) & (depth_map > 0)]
    if samples.size == 0:
        raise EmptyRegionError("mask covers no pixel with valid depth")
    return float(np.median(samples))


def build_graph(
    objects: list[SceneObject],
    depth_map: np.ndarray | None = None,
    *,
    margin: float = DEFAULT_MARGIN,
    gap_threshold: float = DEFAULT_DEPTH_GAP,
    symmetric: bool = False,
) -> SceneGraph:
    """All pairwise relations, in canonical direction (subject index < object).

    Depth edges are added where both objects carry (or can derive, from mask
    plus ``depth_map``) a median depth and the relative-gap rule fires. With
    ``symmetric=True`` every edge is also emitted in the inverse direction.
    """
    if not objects:
        raise ValueError("build_graph requires at least one object")
    resolved = list(objects)
    if depth_map is not None:
        for i, obj in enumerate(resolved):
            if obj.depth_stat is None and obj.mask is not None:
                try:
                    stat = median_mask_depth(obj.mask, depth_map)
                except EmptyRegionError:
                    continue
                resolved[i] = SceneObject(
                    name=obj.name, box=obj.box, mask=obj.mask, depth_stat=stat
                )

    relations: list[Relation] = []
    for i in range(len(resolved)):
        for j in range(i + 1, len(resolved)):
            a, b = resolved[i], resolved[j]
            preds = relate_2d(a.box, b.box, margin=margin)
            if a.depth_stat is not None and b.depth_stat is not None:
                ordering = depth_order(a, b, gap_threshold=gap_threshold)
                if ordering == DepthOrdering.A_IN_FRONT:
                    preds.add(Predicate.IN_FRONT_OF)
                elif ordering == DepthOrdering.B_IN_FRONT:
                    preds.add(Predicate.BEHIND)
            for pred in sorted(preds, key=lambda p: p.value):
                relations.append(Relation(subject=i, object=j, predicate=pred))
                if symmetric:
                    relations.append(
                        Relation(subject=j, object=i, predicate=inverse_predicate(pred))
                    )
    return SceneGraph(objects=tuple(resolved), relations=tuple(relations))


def _object_mention(obj: SceneObject) -> str:
    return f"<ref>{obj.name}</ref>{render_box_tag([obj.box])}"


def _relation_sentence(graph: SceneGraph, rel: Relation) -> str:
    subj = graph.objects[rel.subject]
    obj = graph.objects[rel.object]
    phrase = PREDICATE_PHRASES[rel.predicate]
    return (
        f"{_object_mention(subj)} is positioned "
        f"<pred>{phrase}</pred>{render_box_tag([subj.box])}{render_box_tag([obj.box])} "
        f"{_object_mention(obj)}."
    )


def serialize_graph(graph: SceneGraph) -> str:
    """Grounded sentences for every relation; bare object list when none."""
    if not graph.relations:
        return " ".join(f"{_object_mention(obj)}." for obj in graph.objects)
    return " ".join(_relation_sentence(graph, rel) for rel in graph.relations)


def template_qa(graph: SceneGraph) -> list[tuple[str, str]]:
    """Template questions over the graph, answered with grounded markup."""
    qa = []
    for rel in graph.relations:
        subj = graph.objects[rel.subject]
        obj = graph.objects[rel.object]
        question = (
            f"How are {subj.name} and {obj.name} positioned in relation "
            "to each other in the image?"
        )
        qa.append((question, _relation_sentence(graph, rel)))
    with_depth = [(i, o) for i, o in enumerate(graph.objects) if o.depth_stat is not None]
    if len(with_depth) >= 2:
        nearest = min(with_depth, key=lambda pair: (pair[1].depth_stat, pair[0]))[1]
        qa.append(
            (
                "From your perspective, which object in the image is at the shortest distance?",
                f"The {_object_mention(nearest)} is at the shortest distance.",
            )
        )
    return qa
