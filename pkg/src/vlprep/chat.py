"""Assembly of training text with per-character supervision spans.

Two layers live here. ``build_task_sample`` renders one of the fixed
single-turn task formats (captioning, VQA, grounding, OCR) into an
:class:`AnnotatedText` whose spans say which characters contribute to the
loss. ``build_chatml`` renders a multi-turn dialogue in the chat transcript
format::

    <|im_start|>user
    Picture 1: <img>path.jpg</img>What is this?<|im_end|>
    <|im_start|>assistant
    A cat.<|im_end|>

Only assistant content and the assistant turn's ``<|im_end|>`` terminator are
supervised; role headers, user turns, image placeholders, and the injected
``Picture k:`` prefixes are context. Supervision is tracked on characters so
it survives any tokenizer; projection onto token ids happens in
:mod:`vlprep.tokenizer`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .errors import EmptyDialogue, MissingField, RoleOrderViolation
from .grounding import (
    GROUNDING_TAGS,
    MarkupNode,
    Ref,
    Region,
    emit_markup,
    format_region,
    parse_markup,
)

IM_START = "<|im_start|>"
IM_END = "<|im_end|>"
EOS = "<eos>"

ROLE_USER = "user"
ROLE_ASSISTANT = "assistant"
ROLES = (ROLE_USER, ROLE_ASSISTANT)

TASKS = (
    "caption",
    "caption_grounded",
    "vqa",
    "ocr_vqa",
    "ref_grounding",
    "grounded_caption",
    "ocr",
)


def _image_text(ref: str) -> str:
    return f"<img>{ref}</img>"


@dataclass(frozen=True)
class Segment:
    """A contiguous piece of turn content with a single supervision flag.

    ``image_ref`` marks the segment as an image placeholder; its text is then
    exactly ``<img>ref</img>`` and it is never supervised.
    """

    text: str
    supervised: bool
    image_ref: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("segment text must be non-empty")
        if self.image_ref is not None:
            if self.supervised:
                raise ValueError("image segments are never supervised")
            if self.text != _image_text(self.image_ref):
                raise ValueError(
                    f"image segment text must be {_image_text(self.image_ref)!r}"
                )


def image_segment(ref: str) -> Segment:
    return Segment(_image_text(ref), supervised=False, image_ref=ref)


@dataclass(frozen=True)
class ChatTurn:
    """One dialogue turn. Text segments inherit supervision from the role."""

    role: str
    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if not self.segments:
            raise ValueError("turn must have at least one segment")
        want = self.role == ROLE_ASSISTANT
        for seg in self.segments:
            if seg.image_ref is None and seg.supervised != want:
                raise ValueError(
                    f"text segment supervision must be {want} in a {self.role} turn"
                )


def make_turn(role: str, content: str = "", images: Sequence[str] = ()) -> ChatTurn:
    """Convenience constructor: image placeholders first, then the content."""
    segs = [image_segment(ref) for ref in images]
    if content:
        segs.append(Segment(content, supervised=role == ROLE_ASSISTANT))
    return ChatTurn(role, tuple(segs))


@dataclass(frozen=True)
class AnnotatedText:
    """Flat text plus a partition into supervised / unsupervised spans.

    ``spans`` is a tuple of ``(start, end, supervised)`` half-open character
    intervals that tile ``[0, len(text))`` in order with no gaps and no empty
    pieces. ``images`` records ``(offset, ref)`` for every ``<img>`` segment,
    offset pointing at its ``<`` character.
    """

    text: str
    spans: tuple[tuple[int, int, bool], ...]
    images: tuple[tuple[int, str], ...] = ()

    def __post_init__(self) -> None:
        pos = 0
        for start, end, _ in self.spans:
            if start != pos or end <= start:
                raise ValueError(f"spans must tile the text, bad span ({start},{end})")
            pos = end
        if pos != len(self.text):
            raise ValueError(f"spans cover [0,{pos}) but text has {len(self.text)} chars")
        for offset, ref in self.images:
            placeholder = _image_text(ref)
            if self.text[offset : offset + len(placeholder)] != placeholder:
                raise ValueError(f"no image placeholder for {ref!r} at offset {offset}")

    @property
    def supervised_substrings(self) -> list[str]:
        return [self.text[s:e] for s, e, flag in self.spans if flag]

    @property
    def supervised_char_count(self) -> int:
        return sum(e - s for s, e, flag in self.spans if flag)


_RawSegment = tuple[str, bool, Optional[str]]


def _assemble(raw: Sequence[_RawSegment]) -> AnnotatedText:
    parts: list[str] = []
    spans: list[tuple[int, int, bool]] = []
    images: list[tuple[int, str]] = []
    pos = 0
    for text, supervised, image_ref in raw:
        if not text:
            continue
        parts.append(text)
        spans.append((pos, pos + len(text), supervised))
        if image_ref is not None:
            images.append((pos, image_ref))
        pos += len(text)
    return AnnotatedText("".join(parts), tuple(spans), tuple(images))


def _require(fields: dict, task: str, key: str):
    if key not in fields or fields[key] is None:
        raise MissingField(f"task {task!r} requires field {key!r}")
    return fields[key]


def _coerce_nodes(value: Union[str, Sequence[MarkupNode]]) -> list[MarkupNode]:
    if isinstance(value, str):
        return parse_markup(value)
    return list(value)


def _coerce_regions(value: Union[str, Sequence[Region]]) -> tuple[Region, ...]:
    if isinstance(value, str):
        nodes = parse_markup(value, lenient=True)
        if len(nodes) != 1 or not isinstance(nodes[0], Ref) or nodes[0].content:
            raise ValueError(f"expected a bare region list, got {value!r}")
        return nodes[0].regions
    return tuple(value)


def _tag_free(task: str, key: str, value: str) -> str:
    for tag in GROUNDING_TAGS:
        if tag in value:
            raise ValueError(f"field {key!r} of task {task!r} must not contain {tag!r}")
    return value


def build_task_sample(task: str, fields: dict) -> AnnotatedText:
    """Render one single-turn training sample in its fixed wire format.

    Every format starts with an unsupervised ``<img>`` placeholder and ends
    with a supervised ``<eos>``. The prompt part is context; the target part
    (caption text, answer, emitted markup, region list, description) is
    supervised. Missing fields raise :class:`MissingField`.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}, expected one of {TASKS}")
    img = _require(fields, task, "image")
    raw: list[_RawSegment] = [(_image_text(img), False, img)]

    if task == "caption":
        caption = _tag_free(task, "caption", _require(fields, task, "caption"))
        raw.append(("Generate the caption in English: ", False, None))
        raw.append((caption, True, None))
    elif task == "caption_grounded":
        nodes = _coerce_nodes(_require(fields, task, "caption"))
        raw.append(("Generate the caption in English with grounding: ", False, None))
        raw.append((emit_markup(nodes), True, None))
    elif task in ("vqa", "ocr_vqa"):
        question = _tag_free(task, "question", _require(fields, task, "question"))
        answer = _tag_free(task, "answer", _require(fields, task, "answer"))
        raw.append((f" {question} Answer: ", False, None))
        raw.append((answer, True, None))
    elif task == "ref_grounding":
        phrase = _require(fields, task, "phrase")
        regions = _coerce_regions(_require(fields, task, "regions"))
        ref = Ref(phrase, regions)  # validates phrase and region homogeneity
        raw.append((f"<ref>{ref.content}</ref>", False, None))
        raw.append(("".join(format_region(r) for r in ref.regions), True, None))
    elif task == "grounded_caption":
        phrase = _require(fields, task, "phrase")
        regions = _coerce_regions(_require(fields, task, "regions"))
        description = _tag_free(task, "description", _require(fields, task, "description"))
        prefix = emit_markup([Ref(phrase, regions)])
        raw.append((prefix + " is ", False, None))
        raw.append((description, True, None))
    else:  # ocr
        nodes = _coerce_nodes(_require(fields, task, "text"))
        raw.append(("OCR with grounding: ", False, None))
        raw.append((emit_markup(nodes), True, None))

    raw.append((EOS, True, None))
    return _assemble(raw)


def build_chatml(turns: Sequence[ChatTurn]) -> AnnotatedText:
    """Render a dialogue as a ChatML transcript with supervision spans.

    Turns must alternate user / assistant starting with user. Each image
    placeholder gets a ``Picture k:`` prefix; k counts distinct image refs by
    first appearance across the whole dialogue, so a re-shown image keeps its
    original number. Supervised spans are exactly each assistant turn's text
    content and its ``<|im_end|>``.
    """
    if not turns:
        raise EmptyDialogue("dialogue must contain at least one turn")
    for i, turn in enumerate(turns):
        want = ROLE_USER if i % 2 == 0 else ROLE_ASSISTANT
        if turn.role != want:
            raise RoleOrderViolation(
                f"turn {i} must have role {want!r}, got {turn.role!r}"
            )

    picture_no: dict[str, int] = {}
    raw: list[_RawSegment] = []
    for turn in turns:
        raw.append((f"{IM_START}{turn.role}\n", False, None))
        for seg in turn.segments:
            if seg.image_ref is not None:
                k = picture_no.setdefault(seg.image_ref, len(picture_no) + 1)
                raw.append((f"Picture {k}: ", False, None))
                raw.append((seg.text, False, seg.image_ref))
            else:
                raw.append((seg.text, seg.supervised, None))
        raw.append((IM_END, turn.role == ROLE_ASSISTANT, None))
        raw.append(("\n", False, None))
    return _assemble(raw)
