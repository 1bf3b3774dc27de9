"""Parser and serializer for the grounded spatial-markup language.

Documents mix prose with grounded tags:

    <ref>name</ref><box>[[x1, y1, x2, y2]]</box>     object reference bound to box(es)
    <pred>text</pred><box>...</box><box>...</box>    relation bound to subject/object boxes
    <point>[[x, y], [x, y], ...]</point>             point set (affordance points, traces)
    <box>[[x1, y1, x2, y2]]</box>                    standalone box

and may be wrapped in three optional, case-sensitive sections:
<Description>, <Reasoning>, <Answer>. Text without section tags parses as a
single answer section. All coordinates are integers on the 0-999 grid;
out-of-range values are a hard parse error so corrupt generator output is
surfaced rather than silently repaired.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .coordsys import NORM_MAX, NormBox, NormPoint

TRACE_LEN = 8

_SECTION_NAMES = ("Description", "Reasoning", "Answer")
_OPEN_TAG_RE = re.compile(r"<(ref|box|point|pred)>")
_INT_RE = re.compile(r"[+-]?\d+")


class MarkupParseError(ValueError):
    """Malformed markup; ``offset`` is the byte offset of the defect."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.message = message
        self.offset = offset


class ExtractionError(ValueError):
    """The document lacks the requested grounded content."""


@dataclass(frozen=True)
class GroundedRef:
    """An object mention; ``boxes`` is empty when the ref is unbound."""

    name: str
    boxes: tuple[NormBox, ...] = ()


@dataclass(frozen=True)
class GroundedPred:
    """A relation mention; well formed with exactly two boxes (subject, object)."""

    predicate: str
    boxes: tuple[NormBox, ...] = ()

    @property
    def subject_box(self) -> NormBox:
        return self.boxes[0]

    @property
    def object_box(self) -> NormBox:
        return self.boxes[1]


@dataclass(frozen=True)
class PointSet:
    points: tuple[NormPoint, ...]

    def __post_init__(self):
        if not self.points:
            raise ValueError("point set must hold at least one point")

    def __len__(self) -> int:
        return len(self.points)


Entity = GroundedRef | GroundedPred | PointSet | NormBox


@dataclass(frozen=True)
class Section:
    """Prose strings interleaved with entities, in textual order."""

    segments: tuple[str | Entity, ...] = ()

    @property
    def entities(self) -> tuple[Entity, ...]:
        return tuple(s for s in self.segments if not isinstance(s, str))

    @property
    def text(self) -> str:
        return "".join(s if isinstance(s, str) else render_entity(s) for s in self.segments)


@dataclass(frozen=True)
class MarkupDoc:
    description: Section | None = None
    reasoning: Section | None = None
    answer: Section | None = None
    raw: str = field(default="", compare=False)

    @property
    def sections(self) -> dict[str, Section]:
        out = {}
        for name in ("description", "reasoning", "answer"):
            sec = getattr(self, name)
            if sec is not None:
                out[name] = sec
        return out

    @property
    def entities(self) -> dict[str, tuple[Entity, ...]]:
        return {name: sec.entities for name, sec in self.sections.items()}


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str


def _err(text: str, pos: int, message: str) -> MarkupParseError:
    return MarkupParseError(message, len(text[:pos].encode("utf-8")))


def _parse_coord_groups(text: str, start: int, end: int) -> list[list[int]]:
    """Parse ``[[a, b, ...], [c, d, ...], ...]`` between start and end.

    Whitespace is free everywhere except inside numbers. Every integer is
    range-checked against the 0-999 grid.
    """
    i = start

    def skip_ws(i: int) -> int:
        while i < end and text[i].isspace():
            i += 1
        return i

    i = skip_ws(i)
    if i >= end or text[i] != "[":
        raise _err(text, i, "expected '[' opening a coordinate list")
    i += 1
    groups: list[list[int]] = []
    while True:
        i = skip_ws(i)
        if i >= end or text[i] != "[":
            raise _err(text, i, "expected '[' opening a coordinate group")
        close = text.find("]", i + 1, end)
        if close < 0:
            raise _err(text, i, "unterminated coordinate group")
        nums: list[int] = []
        for item in text[i + 1 : close].split(","):
            stripped = item.strip()
            if not _INT_RE.fullmatch(stripped):
                raise _err(text, i, f"malformed coordinate {stripped!r}")
            value = int(stripped)
            if not 0 <= value <= NORM_MAX:
                raise _err(text, i, f"coordinate {value} outside [0, {NORM_MAX}]")
            nums.append(value)
        groups.append(nums)
        i = skip_ws(close + 1)
        if i < end and text[i] == ",":
            i += 1
            continue
        if i < end and text[i] == "]":
            i += 1
            break
        raise _err(text, i, "expected ',' or ']' after coordinate group")
    i = skip_ws(i)
    if i != end:
        raise _err(text, i, "trailing text inside coordinate list")
    return groups


def _parse_box_tag(text: str, open_pos: int, end: int) -> tuple[list[NormBox], int]:
    """Parse one ``<box>...</box>`` tag starting at open_pos; return (boxes, cursor)."""
    content_start = open_pos + len("<box>")
    close = text.find("</box>", content_start, end)
    if close < 0:
        raise _err(text, open_pos, "unclosed <box> tag")
    boxes = []
    for group in _parse_coord_groups(text, content_start, close):
        if len(group) != 4:
            raise _err(text, content_start, f"box group needs 4 coordinates, got {len(group)}")
        try:
            boxes.append(NormBox(*group))
        except ValueError as exc:
            raise _err(text, content_start, str(exc)) from exc
    return boxes, close + len("</box>")


def _skip_ws(text: str, i: int, end: int) -> int:
    while i < end and text[i].isspace():
        i += 1
    return i


def _following_box_tag(text: str, cursor: int, end: int) -> int | None:
    """Position of a `<box>` separated from cursor only by whitespace, else None."""
    i = _skip_ws(text, cursor, end)
    if text.startswith("<box>", i, end):
        return i
    return None


def _parse_section(text: str, start: int, end: int) -> Section:
    segments: list[str | Entity] = []
    cursor = start
    while cursor < end:
        m = _OPEN_TAG_RE.search(text, cursor, end)
        if m is None:
            segments.append(text[cursor:end])
            break
        if m.start() > cursor:
            segments.append(text[cursor : m.start()])
        kind = m.group(1)
        if kind == "box":
            boxes, cursor = _parse_box_tag(text, m.start(), end)
            segments.extend(boxes)
        elif kind == "point":
            content_start = m.end()
            close = text.find("</point>", content_start, end)
            if close < 0:
                raise _err(text, m.start(), "unclosed <point> tag")
            points = []
            for group in _parse_coord_groups(text, content_start, close):
                if len(group) != 2:
                    raise _err(text, content_start, f"point needs 2 coordinates, got {len(group)}")
                points.append(NormPoint(*group))
            segments.append(PointSet(tuple(points)))
            cursor = close + len("</point>")
        elif kind == "ref":
            close = text.find("</ref>", m.end(), end)
            if close < 0:
                raise _err(text, m.start(), "unclosed <ref> tag")
            name = text[m.end() : close].strip()
            if not name:
                raise _err(text, m.end(), "empty <ref> name")
            cursor = close + len("</ref>")
            boxes: tuple[NormBox, ...] = ()
            box_pos = _following_box_tag(text, cursor, end)
            if box_pos is not None:
                group_boxes, cursor = _parse_box_tag(text, box_pos, end)
                boxes = tuple(group_boxes)
            segments.append(GroundedRef(name=name, boxes=boxes))
        else:  # pred
            close = text.find("</pred>", m.end(), end)
            if close < 0:
                raise _err(text, m.start(), "unclosed <pred> tag")
            predicate = text[m.end() : close].strip()
            if not predicate:
                raise _err(text, m.end(), "empty <pred> text")
            cursor = close + len("</pred>")
            boxes = ()
            box_pos = _following_box_tag(text, cursor, end)
            if box_pos is not None:
                first, cursor = _parse_box_tag(text, box_pos, end)
                boxes = tuple(first)
                # Two-tag style: a single-group tag may be followed by the object box.
                if len(first) == 1:
                    second_pos = _following_box_tag(text, cursor, end)
                    if second_pos is not None:
                        second, cursor = _parse_box_tag(text, second_pos, end)
                        boxes = boxes + tuple(second)
            segments.append(GroundedPred(predicate=predicate, boxes=boxes))
    return Section(tuple(segments))


def parse_document(text: str) -> MarkupDoc:
    """Parse markup text into a structured document.

    Raises MarkupParseError (with a byte offset) on unclosed tags, malformed
    coordinate lists, and out-of-range coordinates.
    """
    spans: dict[str, tuple[int, int, int, int]] = {}
    for name in _SECTION_NAMES:
        open_tag, close_tag = f"<{name}>", f"</{name}>"
        start = text.find(open_tag)
        if start < 0:
            continue
        close = text.find(close_tag, start + len(open_tag))
        if close < 0:
            raise _err(text, start, f"unclosed <{name}> section")
        spans[name] = (start, start + len(open_tag), close, close + len(close_tag))

    ordered = sorted(spans.items(), key=lambda kv: kv[1][0])
    for (prev_name, prev), (cur_name, cur) in zip(ordered, ordered[1:]):
        if cur[0] < prev[3]:
            raise _err(text, cur[0], f"<{cur_name}> section overlaps <{prev_name}> section")

    if spans:
        sections = {
            name: _parse_section(text, span[1], span[2]) for name, span in spans.items()
        }
        return MarkupDoc(
            description=sections.get("Description"),
            reasoning=sections.get("Reasoning"),
            answer=sections.get("Answer"),
            raw=text,
        )
    if text == "":
        return MarkupDoc(raw=text)
    return MarkupDoc(answer=_parse_section(text, 0, len(text)), raw=text)


def _render_groups(groups: list[list[int]]) -> str:
    return "[" + ", ".join("[" + ", ".join(str(v) for v in g) + "]" for g in groups) + "]"


def render_box_tag(boxes: tuple[NormBox, ...] | list[NormBox]) -> str:
    return f"<box>{_render_groups([list(b.as_tuple()) for b in boxes])}</box>"


def render_point_tag(points: PointSet) -> str:
    return f"<point>{_render_groups([[p.x, p.y] for p in points.points])}</point>"


def render_entity(entity: Entity) -> str:
    """Canonical text form: single spaces after commas, no stray whitespace."""
    if isinstance(entity, NormBox):
        return render_box_tag([entity])
    if isinstance(entity, PointSet):
        return render_point_tag(entity)
    if isinstance(entity, GroundedRef):
        out = f"<ref>{entity.name}</ref>"
        if entity.boxes:
            out += render_box_tag(entity.boxes)
        return out
    if isinstance(entity, GroundedPred):
        out = f"<pred>{entity.predicate}</pred>"
        if len(entity.boxes) == 2:
            out += render_box_tag([entity.boxes[0]]) + render_box_tag([entity.boxes[1]])
        elif entity.boxes:
            out += render_box_tag(entity.boxes)
        return out
    raise TypeError(f"not an entity: {entity!r}")


def serialize(doc: MarkupDoc) -> str:
    """Canonical text whose re-parse equals ``doc`` structurally.

    A document holding only an answer section is emitted without section
    tags (matching the bare-text style); anything else gets explicit tags.
    """
    if doc.description is None and doc.reasoning is None:
        return doc.answer.text if doc.answer is not None else ""
    parts = []
    for tag, sec in (
        ("Description", doc.description),
        ("Reasoning", doc.reasoning),
        ("Answer", doc.answer),
    ):
        if sec is not None:
            parts.append(f"<{tag}>{sec.text}</{tag}>")
    return "\n".join(parts)


def _answer_or_raise(doc: MarkupDoc, what: str) -> Section:
    if doc.answer is None:
        raise ExtractionError(f"document has no answer section to extract {what} from")
    return doc.answer


def _iter_boxes(entity: Entity):
    if isinstance(entity, NormBox):
        yield entity
    elif isinstance(entity, (GroundedRef, GroundedPred)):
        yield from entity.boxes


def extract_trace(doc: MarkupDoc) -> tuple[PointSet, bool]:
    """Last point set in the answer section, plus a warning flag.

    The flag is True when the trace is not the canonical 8 points long.
    """
    answer = _answer_or_raise(doc, "a trace")
    trace = None
    for entity in answer.entities:
        if isinstance(entity, PointSet):
            trace = entity
    if trace is None:
        raise ExtractionError("answer section contains no <point> list")
    return trace, len(trace) != TRACE_LEN


def extract_affordance(doc: MarkupDoc) -> tuple[NormBox | None, PointSet | None]:
    """Last box and last point list in the answer section, in any order."""
    answer = _answer_or_raise(doc, "an affordance")
    box = None
    points = None
    for entity in answer.entities:
        for b in _iter_boxes(entity):
            box = b
        if isinstance(entity, PointSet):
            points = entity
    if box is None and points is None:
        raise ExtractionError("answer section contains neither <box> nor <point>")
    return box, points


def validate_binding(doc: MarkupDoc) -> list[Violation]:
    """Diagnostics for refs without boxes and preds without exactly two boxes."""
    violations = []
    for section_name, section in doc.sections.items():
        for entity in section.entities:
            if isinstance(entity, GroundedRef) and not entity.boxes:
                violations.append(
                    Violation(
                        "unbound-ref",
                        f"<ref>{entity.name}</ref> in {section_name} not followed by a <box>",
                    )
                )
            elif isinstance(entity, GroundedPred) and len(entity.boxes) != 2:
                violations.append(
                    Violation(
                        "pred-box-count",
                        f"<pred>{entity.predicate}</pred> in {section_name} has "
                        f"{len(entity.boxes)} box group(s), expected 2",
                    )
                )
    return violations


def _entity_to_json(entity: Entity) -> dict:
    if isinstance(entity, NormBox):
        return {"type": "box", "box": list(entity.as_tuple())}
    if isinstance(entity, PointSet):
        return {"type": "points", "points": [[p.x, p.y] for p in entity.points]}
    if isinstance(entity, GroundedRef):
        return {"type": "ref", "name": entity.name, "boxes": [list(b.as_tuple()) for b in entity.boxes]}
    return {
        "type": "pred",
        "predicate": entity.predicate,
        "boxes": [list(b.as_tuple()) for b in entity.boxes],
    }


def doc_to_json(doc: MarkupDoc) -> dict:
    """JSON-ready mapping of the document (see the schema notes in README)."""
    out: dict = {}
    for name in ("description", "reasoning", "answer"):
        sec = getattr(doc, name)
        out[name] = (
            None
            if sec is None
            else {"text": sec.text, "entities": [_entity_to_json(e) for e in sec.entities]}
        )
    return out
