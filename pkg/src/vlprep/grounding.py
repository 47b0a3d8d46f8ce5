"""Serialization, parsing, and normalization of grounding annotations.

Region coordinates live on an integer grid: every coordinate is in
``[0, 999]``, obtained from pixel space by ``floor(coord / extent * 1000)``
with the top clamp handling the right/bottom image edge. The wire format is
bit-exact:

    <ref>two bees</ref><box>(661,612),(833,812)</box>
    <quad>(568,121), (625,131), (624,182), (567,172)</quad>

Boxes carry no internal spaces; quads carry a single space after the commas
that separate points. The parser tolerates optional whitespace after any
comma; the emitter always produces the canonical form, so corpora built with
it are reproducible byte-for-byte.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from .errors import (
    CoordinateOutOfRange,
    InvalidImageExtent,
    MalformedRegion,
    OrphanRegion,
    UnbalancedTags,
    UnboundRef,
)

GRID_SIZE = 1000  # coordinates are integers in [0, GRID_SIZE - 1]

TAG_IMG_OPEN = "<img>"
TAG_IMG_CLOSE = "</img>"
TAG_BOX_OPEN = "<box>"
TAG_BOX_CLOSE = "</box>"
TAG_REF_OPEN = "<ref>"
TAG_REF_CLOSE = "</ref>"
TAG_QUAD_OPEN = "<quad>"
TAG_QUAD_CLOSE = "</quad>"

# Tags that delimit grounding markup. <img>/</img> delimit image features at
# the dialogue level and never appear inside grounded text.
GROUNDING_TAGS = (
    TAG_REF_OPEN,
    TAG_REF_CLOSE,
    TAG_BOX_OPEN,
    TAG_BOX_CLOSE,
    TAG_QUAD_OPEN,
    TAG_QUAD_CLOSE,
)

_TAG_RE = re.compile("|".join(re.escape(t) for t in GROUNDING_TAGS))
_POINT_RE = re.compile(r"\((-?\d+),\s*(-?\d+)\)")
_POINT_SEP_RE = re.compile(r",\s*")


@dataclass(frozen=True)
class PixelBox:
    """Axis-aligned box in pixel space, with its image extent for context.

    Coordinates are non-negative reals with ``0 <= x1 <= x2 <= width`` and
    ``0 <= y1 <= y2 <= height`` (the bottom-right corner may sit on the
    image edge).
    """

    x1: float
    y1: float
    x2: float
    y2: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise InvalidImageExtent(
                f"image extent must be positive, got {self.width}x{self.height}"
            )
        if not (0 <= self.x1 <= self.x2 <= self.width):
            raise CoordinateOutOfRange(
                f"x coordinates ({self.x1}, {self.x2}) outside [0, {self.width}] or unordered"
            )
        if not (0 <= self.y1 <= self.y2 <= self.height):
            raise CoordinateOutOfRange(
                f"y coordinates ({self.y1}, {self.y2}) outside [0, {self.height}] or unordered"
            )


@dataclass(frozen=True)
class GridBox:
    """Axis-aligned box on the normalized integer grid."""

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self) -> None:
        for c in (self.x1, self.y1, self.x2, self.y2):
            _check_grid_coord(c)
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise CoordinateOutOfRange(
                f"grid box corners unordered: ({self.x1},{self.y1}),({self.x2},{self.y2})"
            )


@dataclass(frozen=True)
class QuadGrid:
    """Quadrilateral on the normalized grid, clockwise from top-left."""

    p1: tuple[int, int]
    p2: tuple[int, int]
    p3: tuple[int, int]
    p4: tuple[int, int]

    def __post_init__(self) -> None:
        for x, y in self.points:
            _check_grid_coord(x)
            _check_grid_coord(y)

    @property
    def points(self) -> tuple[tuple[int, int], ...]:
        return (self.p1, self.p2, self.p3, self.p4)


Region = Union[GridBox, QuadGrid]


@dataclass(frozen=True)
class Text:
    """Plain text segment; must not contain any grounding tag literal."""

    content: str

    def __post_init__(self) -> None:
        for tag in GROUNDING_TAGS:
            if tag in self.content:
                raise ValueError(f"plain text may not contain the tag literal {tag!r}")


@dataclass(frozen=True)
class Ref:
    """A referenced span with its attached regions (all boxes or all quads)."""

    content: str
    regions: tuple[Region, ...]

    def __post_init__(self) -> None:
        if not self.regions:
            raise ValueError("a ref must carry at least one region")
        kinds = {type(r) for r in self.regions}
        if len(kinds) > 1:
            raise ValueError("a ref may not mix boxes and quads")
        for tag in GROUNDING_TAGS:
            if tag in self.content:
                raise ValueError(f"ref content may not contain the tag literal {tag!r}")


MarkupNode = Union[Text, Ref]


def _check_grid_coord(c: int) -> None:
    if not isinstance(c, int):
        raise CoordinateOutOfRange(f"grid coordinate must be an integer, got {c!r}")
    if not (0 <= c < GRID_SIZE):
        raise CoordinateOutOfRange(f"grid coordinate {c} outside [0, {GRID_SIZE - 1}]")


def normalize_box(b: PixelBox) -> GridBox:
    """Map a pixel-space box onto the integer grid.

    Each coordinate becomes ``floor(coord / extent * 1000)``, clamped to 999
    so a coordinate sitting exactly on the right/bottom edge stays on the
    grid. Done in exact rational arithmetic, so the result never depends on
    float rounding.
    """

    def norm(coord: float, extent: int) -> int:
        v = math.floor(Fraction(coord) * GRID_SIZE / extent)
        return min(v, GRID_SIZE - 1)

    return GridBox(
        x1=norm(b.x1, b.width),
        y1=norm(b.y1, b.height),
        x2=norm(b.x2, b.width),
        y2=norm(b.y2, b.height),
    )


def denormalize_box(g: GridBox, width: int, height: int) -> PixelBox:
    """Map a grid box back to pixel space using the cell-center convention.

    ``coord_pixel = (g + 0.5) / 1000 * extent``, so ``normalize_box`` is an
    exact left inverse for every valid grid box.
    """
    if width <= 0 or height <= 0:
        raise InvalidImageExtent(f"image extent must be positive, got {width}x{height}")
    return PixelBox(
        x1=(g.x1 + 0.5) / GRID_SIZE * width,
        y1=(g.y1 + 0.5) / GRID_SIZE * height,
        x2=(g.x2 + 0.5) / GRID_SIZE * width,
        y2=(g.y2 + 0.5) / GRID_SIZE * height,
        width=width,
        height=height,
    )


def format_region(r: Region) -> str:
    """Serialize one region to its canonical tag form."""
    if isinstance(r, GridBox):
        return f"<box>({r.x1},{r.y1}),({r.x2},{r.y2})</box>"
    pts = ", ".join(f"({x},{y})" for x, y in r.points)
    return f"<quad>{pts}</quad>"


def emit_markup(nodes: list[MarkupNode]) -> str:
    """Serialize an AST to its canonical wire form.

    A ref emits ``<ref>content</ref>`` immediately followed by its regions in
    order; plain text passes through unchanged.
    """
    out: list[str] = []
    for node in nodes:
        if isinstance(node, Text):
            out.append(node.content)
        else:
            out.append(f"<ref>{node.content}</ref>")
            out.extend(format_region(r) for r in node.regions)
    return "".join(out)


def _parse_region_body(body: str, open_tag: str) -> Region:
    n_expected = 2 if open_tag == TAG_BOX_OPEN else 4
    points: list[tuple[int, int]] = []
    pos = 0
    while True:
        m = _POINT_RE.match(body, pos)
        if m is None:
            raise MalformedRegion(f"cannot parse point list in {open_tag}...: {body!r}")
        points.append((int(m.group(1)), int(m.group(2))))
        pos = m.end()
        if pos == len(body):
            break
        sep = _POINT_SEP_RE.match(body, pos)
        if sep is None or sep.end() == len(body):
            raise MalformedRegion(f"bad point separator in {open_tag}...: {body!r}")
        pos = sep.end()
    if len(points) != n_expected:
        raise MalformedRegion(
            f"{open_tag} needs {n_expected} points, got {len(points)}: {body!r}"
        )
    if open_tag == TAG_BOX_OPEN:
        (x1, y1), (x2, y2) = points
        return GridBox(x1, y1, x2, y2)
    return QuadGrid(*points)


def _scan_tokens(s: str) -> list[tuple[str, object]]:
    """Lex into ('text', str) / ('ref', str) / ('region', Region) tokens."""
    tokens: list[tuple[str, object]] = []
    i = 0
    while i < len(s):
        m = _TAG_RE.search(s, i)
        if m is None:
            tokens.append(("text", s[i:]))
            break
        if m.start() > i:
            tokens.append(("text", s[i : m.start()]))
        tag = m.group()
        if tag in (TAG_REF_CLOSE, TAG_BOX_CLOSE, TAG_QUAD_CLOSE):
            raise UnbalancedTags(f"unexpected closing tag {tag} at offset {m.start()}")
        close_tag = {
            TAG_REF_OPEN: TAG_REF_CLOSE,
            TAG_BOX_OPEN: TAG_BOX_CLOSE,
            TAG_QUAD_OPEN: TAG_QUAD_CLOSE,
        }[tag]
        nxt = _TAG_RE.search(s, m.end())
        if nxt is None:
            raise UnbalancedTags(f"{tag} at offset {m.start()} is never closed")
        if nxt.group() != close_tag:
            raise UnbalancedTags(
                f"{tag} at offset {m.start()} closed by {nxt.group()} instead of {close_tag}"
            )
        body = s[m.end() : nxt.start()]
        if tag == TAG_REF_OPEN:
            tokens.append(("ref", body))
        else:
            tokens.append(("region", _parse_region_body(body, tag)))
        i = nxt.end()
    return tokens


def parse_markup(s: str, lenient: bool = False) -> list[MarkupNode]:
    """Parse a serialized grounding string back into its AST.

    Inverse of :func:`emit_markup` on its image. Region tags immediately
    following a closed ref attach to that ref; a region that cannot attach
    (no preceding ref, intervening text, or a kind mismatch) is an orphan:
    with ``lenient`` it becomes a bare ref with empty content, otherwise it
    raises :class:`OrphanRegion`.
    """
    nodes: list[MarkupNode] = []
    open_content: str | None = None  # ref content awaiting regions
    open_regions: list[Region] = []

    def close_open() -> None:
        nonlocal open_content
        if open_content is None:
            return
        if not open_regions:
            raise UnboundRef(f"<ref>{open_content}</ref> has no region tag")
        nodes.append(Ref(open_content, tuple(open_regions)))
        open_content = None
        open_regions.clear()

    for kind, value in _scan_tokens(s):
        if kind == "text":
            close_open()
            nodes.append(Text(value))  # type: ignore[arg-type]
        elif kind == "ref":
            close_open()
            open_content = value  # type: ignore[assignment]
            open_regions.clear()
        else:
            region = value
            attachable = open_content is not None and (
                not open_regions or isinstance(region, type(open_regions[-1]))
            )
            if attachable:
                open_regions.append(region)  # type: ignore[arg-type]
            elif lenient:
                close_open()
                open_content = ""
                open_regions.append(region)  # type: ignore[arg-type]
            else:
                raise OrphanRegion(
                    "region tag has no preceding </ref> it can attach to"
                )
    close_open()
    return nodes
