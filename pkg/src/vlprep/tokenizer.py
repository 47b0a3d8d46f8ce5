"""Byte-level mock tokenizer and projection of character spans onto tokens.

The pipeline never needs a production tokenizer: what it needs is *some*
tokenizer whose special literals are atomic, so that packing lengths and loss
masks can be computed and tested deterministically. :class:`MockTokenizer`
maps every UTF-8 byte to its own id (0..255) and each reserved literal to a
single id above that. Any object with the same ``encode`` / ``decode`` pair
can be dropped in instead.

``project_mask`` turns the character-level supervision spans of an
:class:`~vlprep.chat.AnnotatedText` into a per-token boolean mask by encoding
span by span. Because spans were built on segment boundaries this is lossless
for any sane tokenizer; the function verifies the round trip and raises
:class:`~vlprep.errors.SpanAlignmentError` if concatenated span encodings do
not decode back to the original text.
"""

from __future__ import annotations

import re
from typing import Protocol

from .chat import AnnotatedText
from .errors import SpanAlignmentError

# Literals that must encode to a single token id each. Order fixes their ids.
RESERVED_LITERALS = (
    "<img>",
    "</img>",
    "<box>",
    "</box>",
    "<ref>",
    "</ref>",
    "<quad>",
    "</quad>",
    "<|im_start|>",
    "<|im_end|>",
    "<eos>",
)

N_BYTE_TOKENS = 256


class Tokenizer(Protocol):
    def encode(self, text: str) -> list[int]: ...

    def decode(self, ids: list[int]) -> str: ...


class MockTokenizer:
    """UTF-8 bytes as ids 0..255, reserved literals as single ids 256 and up.

    Reserved literals are matched greedily left to right; none of them is a
    substring of another, so the segmentation is unambiguous.
    """

    def __init__(self) -> None:
        self._id_of = {
            lit: N_BYTE_TOKENS + i for i, lit in enumerate(RESERVED_LITERALS)
        }
        self._lit_of = {v: k for k, v in self._id_of.items()}
        ordered = sorted(RESERVED_LITERALS, key=len, reverse=True)
        self._reserved_re = re.compile("|".join(re.escape(t) for t in ordered))

    @property
    def vocab_size(self) -> int:
        return N_BYTE_TOKENS + len(RESERVED_LITERALS)

    def token_id(self, literal: str) -> int:
        if literal not in self._id_of:
            raise KeyError(f"not a reserved literal: {literal!r}")
        return self._id_of[literal]

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        pos = 0
        for m in self._reserved_re.finditer(text):
            ids.extend(text[pos : m.start()].encode("utf-8"))
            ids.append(self._id_of[m.group()])
            pos = m.end()
        ids.extend(text[pos:].encode("utf-8"))
        return ids

    def decode(self, ids: list[int]) -> str:
        parts: list[str] = []
        buf = bytearray()
        for i in ids:
            if 0 <= i < N_BYTE_TOKENS:
                buf.append(i)
                continue
            if i not in self._lit_of:
                raise ValueError(f"token id {i} out of range")
            if buf:
                parts.append(buf.decode("utf-8"))
                buf.clear()
            parts.append(self._lit_of[i])
        if buf:
            parts.append(buf.decode("utf-8"))
        return "".join(parts)


def project_mask(
    annotated: AnnotatedText, tokenizer: Tokenizer
) -> tuple[list[int], list[bool]]:
    """Encode an annotated text span by span into (token ids, loss mask).

    Masked-in tokens are exactly those produced by supervised spans. Raises
    SpanAlignmentError when the per-span encoding does not round-trip, which
    happens with tokenizers that merge across the span boundaries used here.
    """
    ids: list[int] = []
    mask: list[bool] = []
    for start, end, supervised in annotated.spans:
        span_ids = tokenizer.encode(annotated.text[start:end])
        ids.extend(span_ids)
        mask.extend([supervised] * len(span_ids))
    if tokenizer.decode(ids) != annotated.text:
        raise SpanAlignmentError(
            "span-wise encoding does not reproduce the original text"
        )
    return ids, mask
