"""Deterministic record-level cleaning for web-crawled and document corpora.

Image-text pairs pass through eight ordered rules (aspect ratio, image size,
CLIP score, script, emoji, length, HTML residue, banned patterns); the first
violated rule is the one reported. HTML stripping and whitespace trimming are
transformations applied before the length/pattern checks, so those rules see
the cleaned text. Document text (pdf/html extractions) gets its own smaller
rule list keyed on character count and Unicode blocks.

Every function here is a pure function of (record, config): records can be
sharded across workers in any order and the verdicts are reproducible.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .errors import EmptyGroup, IncompleteRecord
from .grounding import MarkupNode, Ref, Region, Text

KEEP = "keep"
DROP = "drop"

RULE_ASPECT = "R1_aspect"
RULE_SMALL = "R2_small"
RULE_CLIP = "R3_clip"
RULE_SCRIPT = "R4_script"
RULE_EMOJI = "R5_emoji"
RULE_LENGTH = "R6_length"
RULE_HTML = "R7_html"
RULE_PATTERN = "R8_pattern"
RULE_CHARCOUNT = "P_charcount"
RULE_LATIN_EXT = "P_latin_ext"
RULE_PUA = "P_pua"
RULE_SPECIAL_TAG = "T_special_tag"

LANGUAGES = ("en", "zh", "other")

# Named script blocks selectable in FilterConfig.allowed_scripts.
SCRIPT_BLOCKS: dict[str, tuple[tuple[int, int], ...]] = {
    "latin_basic": ((0x0000, 0x007F),),
    "latin_supplement": ((0x0080, 0x00FF),),
    "cjk": ((0x3000, 0x303F), (0x4E00, 0x9FFF), (0xFF00, 0xFFEF)),
}

# Emoji code points are attributed to the emoji rule, never the script rule.
DEFAULT_EMOJI_RANGES: tuple[tuple[int, int], ...] = (
    (0x2600, 0x26FF),  # miscellaneous symbols
    (0x2700, 0x27BF),  # dingbats
    (0xFE00, 0xFE0F),  # variation selectors
    (0x1F300, 0x1F5FF),  # symbols and pictographs
    (0x1F600, 0x1F64F),  # emoticons
    (0x1F680, 0x1F6FF),  # transport and map
    (0x1F900, 0x1F9FF),  # supplemental symbols
    (0x1FA70, 0x1FAFF),  # symbols and pictographs extended-A
)

LATIN_EXT_A = (0x0100, 0x017F)
LATIN_EXT_B = (0x0180, 0x024F)
PUA = (0xE000, 0xF8FF)

_HTML_TAG_RE = re.compile(r"<[^<>]*>")
# &amp; decoded last so "&amp;lt;" comes out as "&lt;", not "<".
_HTML_ENTITIES = (
    ("&lt;", "<"),
    ("&gt;", ">"),
    ("&quot;", '"'),
    ("&apos;", "'"),
    ("&amp;", "&"),
)


@dataclass
class CorpusRecord:
    """One image-text (or document-text) pair from a corpus stream."""

    id: str
    text: str
    dataset: str = ""
    image_width: Optional[int] = None
    image_height: Optional[int] = None
    language: str = "other"
    clip_score: Optional[float] = None
    image_key: str = ""
    group_key: Optional[str] = None

    def __post_init__(self) -> None:
        if self.language not in LANGUAGES:
            raise ValueError(f"language must be one of {LANGUAGES}, got {self.language!r}")
        for name, v in (("image_width", self.image_width), ("image_height", self.image_height)):
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive when present, got {v}")

    def to_json(self) -> dict:
        d = {"id": self.id, "text": self.text}
        for k in ("dataset", "image_width", "image_height", "language", "clip_score",
                  "image_key", "group_key"):
            v = getattr(self, k)
            if v not in (None, ""):
                d[k] = v
        return d

    @classmethod
    def from_json(cls, d: dict) -> "CorpusRecord":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown record fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class FilterVerdict:
    """Keep/drop decision with the first violated rule, if any."""

    decision: str
    rule_id: Optional[str] = None
    detail: str = ""

    def __post_init__(self) -> None:
        if self.decision == DROP and self.rule_id is None:
            raise ValueError("a drop verdict must name the violated rule")
        if self.decision == KEEP and self.rule_id is not None:
            raise ValueError("a keep verdict must not name a rule")

    @property
    def kept(self) -> bool:
        return self.decision == KEEP

    def to_json(self, record_id: str) -> dict:
        return {"id": record_id, "decision": self.decision,
                "rule_id": self.rule_id, "detail": self.detail}


def _keep() -> FilterVerdict:
    return FilterVerdict(KEEP)


def _drop(rule_id: str, detail: str) -> FilterVerdict:
    return FilterVerdict(DROP, rule_id, detail)


@dataclass
class FilterConfig:
    """Thresholds for the cleaning rules; None disables a rule."""

    max_aspect_ratio: Optional[float] = 3.0
    min_side_px: Optional[int] = 224
    clip_thresholds: dict[str, float] = field(default_factory=dict)
    allowed_scripts: frozenset[str] = frozenset({"latin_basic", "cjk"})
    emoji_ranges: tuple[tuple[int, int], ...] = DEFAULT_EMOJI_RANGES
    min_chars: int = 5
    max_chars: int = 1024
    banned_patterns: tuple[str, ...] = ()
    special_tags: tuple[str, ...] = ("<PERSON>",)

    def __post_init__(self) -> None:
        if self.min_chars >= self.max_chars:
            raise ValueError("min_chars must be smaller than max_chars")
        if self.max_aspect_ratio is not None and self.max_aspect_ratio <= 1:
            raise ValueError("max_aspect_ratio must exceed 1")
        unknown = set(self.allowed_scripts) - set(SCRIPT_BLOCKS)
        if unknown:
            raise ValueError(f"unknown script blocks: {sorted(unknown)}")

    @property
    def allowed_ranges(self) -> tuple[tuple[int, int], ...]:
        out: list[tuple[int, int]] = []
        for name in sorted(self.allowed_scripts):
            out.extend(SCRIPT_BLOCKS[name])
        return tuple(out)


def _in_ranges(cp: int, ranges: tuple[tuple[int, int], ...]) -> bool:
    return any(lo <= cp <= hi for lo, hi in ranges)


def clean_html_text(text: str) -> str:
    """Strip angle-bracket tags, decode the five standard entities, trim."""
    out = _HTML_TAG_RE.sub("", text)
    for entity, ch in _HTML_ENTITIES:
        out = out.replace(entity, ch)
    return out.strip()


def _pattern_to_regex(pattern: str) -> re.Pattern:
    parts = re.split(r"([*?])", pattern)
    return re.compile(
        "".join(".*" if p == "*" else "." if p == "?" else re.escape(p) for p in parts),
        re.DOTALL,
    )


def _require_dims(r: CorpusRecord, rule: str) -> tuple[int, int]:
    if r.image_width is None or r.image_height is None:
        raise IncompleteRecord(f"record {r.id!r} lacks image dimensions needed by {rule}")
    return r.image_width, r.image_height


def filter_pair(r: CorpusRecord, cfg: FilterConfig) -> FilterVerdict:
    """Apply the eight pair-cleaning rules in order; report the first failure.

    HTML stripping and trimming run as transformations before the length and
    pattern rules. A record whose text is pure markup (nothing survives the
    cleanup) is attributed to the HTML rule rather than the length rule.
    """
    if cfg.max_aspect_ratio is not None:
        w, h = _require_dims(r, RULE_ASPECT)
        ratio = max(w, h) / min(w, h)
        if ratio > cfg.max_aspect_ratio:
            return _drop(RULE_ASPECT, f"aspect ratio {ratio:.2f} > {cfg.max_aspect_ratio}")

    if cfg.min_side_px is not None:
        w, h = _require_dims(r, RULE_SMALL)
        if min(w, h) < cfg.min_side_px:
            return _drop(RULE_SMALL, f"min side {min(w, h)}px < {cfg.min_side_px}px")

    threshold = cfg.clip_thresholds.get(r.dataset)
    if threshold is not None and r.clip_score is not None and r.clip_score < threshold:
        return _drop(RULE_CLIP, f"clip score {r.clip_score} < {threshold} ({r.dataset})")

    allowed = cfg.allowed_ranges
    for ch in r.text:
        cp = ord(ch)
        if not _in_ranges(cp, allowed) and not _in_ranges(cp, cfg.emoji_ranges):
            return _drop(RULE_SCRIPT, f"character U+{cp:04X} outside allowed scripts")

    for ch in r.text:
        if _in_ranges(ord(ch), cfg.emoji_ranges):
            return _drop(RULE_EMOJI, f"emoji character U+{ord(ch):04X}")

    cleaned = clean_html_text(r.text)
    if not cleaned and r.text.strip():
        return _drop(RULE_HTML, "nothing left after HTML cleanup")

    n = len(cleaned)
    if n < cfg.min_chars or n > cfg.max_chars:
        return _drop(RULE_LENGTH, f"{n} chars outside [{cfg.min_chars}, {cfg.max_chars}]")

    for pattern in cfg.banned_patterns:
        if _pattern_to_regex(pattern).search(cleaned):
            return _drop(RULE_PATTERN, f"matches banned pattern {pattern!r}")

    return _keep()


def check_special_tags(r: CorpusRecord, cfg: FilterConfig) -> FilterVerdict:
    """Drop academic-caption records whose text contains a configured tag."""
    for tag in cfg.special_tags:
        if tag in r.text:
            return _drop(RULE_SPECIAL_TAG, f"contains special tag {tag!r}")
    return _keep()


def select_longest_caption(group: list[CorpusRecord]) -> CorpusRecord:
    """Pick the longest caption among records sharing one image.

    Ties break toward the smallest record id so the choice is deterministic.
    """
    if not group:
        raise EmptyGroup("cannot select a caption from an empty group")
    return min(group, key=lambda r: (-len(r.text), r.id))


def filter_document_text(r: CorpusRecord, kind: str, cfg: FilterConfig) -> FilterVerdict:
    """Cleaning rules for pdf/html document extractions.

    Both kinds drop on character count and Private Use Area code points; the
    Latin Extended-A/B rule applies to pdf extractions only.
    """
    if kind not in ("pdf", "html"):
        raise ValueError(f"kind must be 'pdf' or 'html', got {kind!r}")

    n = len(r.text)
    if n < cfg.min_chars or n > cfg.max_chars:
        return _drop(RULE_CHARCOUNT, f"{n} chars outside [{cfg.min_chars}, {cfg.max_chars}]")

    if kind == "pdf":
        for ch in r.text:
            if _in_ranges(ord(ch), (LATIN_EXT_A, LATIN_EXT_B)):
                return _drop(RULE_LATIN_EXT, f"Latin Extended character U+{ord(ch):04X}")

    for ch in r.text:
        if _in_ranges(ord(ch), (PUA,)):
            return _drop(RULE_PUA, f"Private Use Area character U+{ord(ch):04X}")

    return _keep()


@dataclass(frozen=True)
class RefSpan:
    """A candidate grounded span: character offsets plus its regions."""

    start: int
    end: int
    regions: tuple[Region, ...]

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise ValueError(f"span must satisfy 0 <= start < end, got [{self.start}, {self.end})")
        if not self.regions:
            raise ValueError("a candidate span must carry at least one region")

    def overlaps(self, other: "RefSpan") -> bool:
        return self.start < other.end and other.start < self.end


def denest_grit(caption: str, spans: list[RefSpan]) -> list[MarkupNode]:
    """Resolve nested/overlapping grounded spans into a flat markup AST.

    Greedy selection: candidates ordered by (region count descending, span
    length descending, start offset ascending); a candidate survives only if
    it overlaps no already-kept span. Dropped candidates are demoted to plain
    caption text, their regions discarded.
    """
    for s in spans:
        if s.end > len(caption):
            raise ValueError(f"span [{s.start}, {s.end}) exceeds caption length {len(caption)}")

    order = sorted(spans, key=lambda s: (-len(s.regions), -(s.end - s.start), s.start))
    kept: list[RefSpan] = []
    for cand in order:
        if not any(cand.overlaps(k) for k in kept):
            kept.append(cand)
    kept.sort(key=lambda s: s.start)

    nodes: list[MarkupNode] = []
    pos = 0
    for s in kept:
        if s.start > pos:
            nodes.append(Text(caption[pos : s.start]))
        nodes.append(Ref(caption[s.start : s.end], s.regions))
        pos = s.end
    if pos < len(caption):
        nodes.append(Text(caption[pos:]))
    return nodes
