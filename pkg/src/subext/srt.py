"""SubRip (.srt) parsing, emission and frame/time conversion."""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Union

Rational = Union[int, float, str, Fraction]

MAX_MILLIS = ((99 * 60 + 59) * 60 + 59) * 1000 + 999
MAX_LINES = 4

_TIME_RE = re.compile(r"^(\d{1,2}):(\d{2}):(\d{2}),(\d{3})$")
_ARROW = "-->"


class SrtError(ValueError):
    """Base class for SRT input problems."""


class MalformedTimestamp(SrtError):
    pass


class MissingArrow(SrtError):
    pass


class EmptyCue(SrtError):
    pass


class MalformedIndex(SrtError):
    pass


class InvariantViolation(ValueError):
    pass


class NonMonotonicIndex(UserWarning):
    pass


def as_fraction(value: Rational) -> Fraction:
    """Exact rational from an int, Fraction, "30000/1001" string, or decimal float.

    Floats go through their shortest repr so that 23.976 means 23976/1000.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def round_half_up(value: Fraction) -> int:
    return int((value + Fraction(1, 2)) // 1)


@dataclass(frozen=True, order=True)
class Timestamp:
    millis: int

    def __post_init__(self):
        if not isinstance(self.millis, int) or isinstance(self.millis, bool):
            raise InvariantViolation(f"timestamp millis must be int, got {self.millis!r}")
        if not 0 <= self.millis <= MAX_MILLIS:
            raise InvariantViolation(f"timestamp out of range: {self.millis} ms")

    @classmethod
    def parse(cls, text: str) -> "Timestamp":
        m = _TIME_RE.match(text.strip())
        if m is None:
            raise MalformedTimestamp(f"bad timestamp {text!r}")
        hours, minutes, seconds, millis = (int(g) for g in m.groups())
        if minutes > 59 or seconds > 59:
            raise MalformedTimestamp(f"bad timestamp {text!r}")
        return cls(((hours * 60 + minutes) * 60 + seconds) * 1000 + millis)

    def format(self) -> str:
        seconds, millis = divmod(self.millis, 1000)
        minutes, seconds = divmod(seconds, 60)
        hours, minutes = divmod(minutes, 60)
        return f"{hours:02d}:{minutes:02d}:{seconds:02d},{millis:03d}"

    def __str__(self) -> str:
        return self.format()


@dataclass(frozen=True)
class SubtitleCue:
    index: int
    start: Timestamp
    end: Timestamp
    lines: tuple[str, ...]

    def __post_init__(self):
        if isinstance(self.start, int):
            object.__setattr__(self, "start", Timestamp(self.start))
        if isinstance(self.end, int):
            object.__setattr__(self, "end", Timestamp(self.end))
        if not isinstance(self.lines, tuple):
            object.__setattr__(self, "lines", tuple(self.lines))

    @property
    def text(self) -> str:
        return "\n".join(self.lines)

    @property
    def duration_ms(self) -> int:
        return self.end.millis - self.start.millis

    def validate(self) -> None:
        if self.index < 1:
            raise InvariantViolation(f"cue index must be positive, got {self.index}")
        if self.start.millis >= self.end.millis:
            raise InvariantViolation(
                f"cue {self.index}: start {self.start} is not before end {self.end}")
        if not 1 <= len(self.lines) <= MAX_LINES:
            raise InvariantViolation(
                f"cue {self.index}: expected 1..{MAX_LINES} lines, got {len(self.lines)}")
        for line in self.lines:
            if "\n" in line or "\r" in line:
                raise InvariantViolation(f"cue {self.index}: line contains a newline")
            if not line.strip():
                raise InvariantViolation(f"cue {self.index}: blank text line")


@dataclass(frozen=True)
class SrtDocument:
    cues: tuple[SubtitleCue, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not isinstance(self.cues, tuple):
            object.__setattr__(self, "cues", tuple(self.cues))

    def __len__(self) -> int:
        return len(self.cues)

    def __iter__(self):
        return iter(self.cues)

    def validate(self) -> None:
        for cue in self.cues:
            cue.validate()

    def renumbered(self) -> "SrtDocument":
        return SrtDocument(tuple(
            SubtitleCue(i, c.start, c.end, c.lines) for i, c in enumerate(self.cues, 1)))

    def sorted_by_start(self) -> "SrtDocument":
        # stable: ties keep prediction order
        ordered = sorted(self.cues, key=lambda c: (c.start.millis, c.end.millis))
        return SrtDocument(tuple(ordered)).renumbered()


def _split_blocks(lines: list[str]) -> Iterable[tuple[int, list[str]]]:
    block: list[str] = []
    start = 0
    for lineno, line in enumerate(lines, 1):
        if line.strip():
            if not block:
                start = lineno
            block.append(line)
        elif block:
            yield start, block
            block = []
    if block:
        yield start, block


def _parse_timing(line: str, lineno: int) -> tuple[Timestamp, Timestamp]:
    if _ARROW not in line:
        raise MissingArrow(f"line {lineno}: no '{_ARROW}' in timing line {line!r}")
    left, _, right = line.partition(_ARROW)
    try:
        return Timestamp.parse(left), Timestamp.parse(right)
    except MalformedTimestamp as exc:
        raise MalformedTimestamp(f"line {lineno}: {exc}") from None


def parse_srt(text: str) -> SrtDocument:
    """Parse SRT text into a document, keeping cues in file order.

    A UTF-8 BOM, CRLF line endings and trailing whitespace on index/timing lines
    are tolerated. Text lines are kept verbatim. Index gaps or reversals only
    raise a ``NonMonotonicIndex`` warning.
    """
    if text.startswith("\ufeff"):
        text = text[1:]
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    cues = []
    previous = 0
    for lineno, block in _split_blocks(lines):
        head = block[0].strip()
        if not (head.isascii() and head.isdigit()):
            raise MalformedIndex(f"line {lineno}: expected cue index, got {block[0]!r}")
        index = int(head)
        if len(block) < 2:
            raise MissingArrow(f"line {lineno}: cue {index} has no timing line")
        start, end = _parse_timing(block[1], lineno + 1)
        if len(block) < 3:
            raise EmptyCue(f"line {lineno}: cue {index} has no text")
        if index != previous + 1:
            warnings.warn(f"cue index {index} follows {previous}", NonMonotonicIndex,
                          stacklevel=2)
        previous = index
        cue = SubtitleCue(index, start, end, tuple(block[2:]))
        cue.validate()
        cues.append(cue)
    return SrtDocument(tuple(cues))


def emit_srt(doc: SrtDocument) -> str:
    doc.validate()
    parts = []
    for cue in doc.cues:
        parts.append(f"{cue.index}\n{cue.start} --> {cue.end}\n")
        parts.append("".join(line + "\n" for line in cue.lines))
        parts.append("\n")
    return "".join(parts)


def normalize_srt_text(text: str) -> str:
    """Text-level cleanup of an SRT file without parsing it.

    Strips the BOM, converts line endings to LF, removes trailing whitespace from
    index/timing lines, collapses runs of blank lines and ends every block with
    exactly one blank line.
    """
    if text.startswith("\ufeff"):
        text = text[1:]
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    out = []
    for _, block in _split_blocks(lines):
        out.append(block[0].strip())
        out.extend(line.rstrip() if i == 0 else line
                   for i, line in enumerate(block[1:]))
        out.append("")
    return "".join(line + "\n" for line in out)


def frame_to_timestamp(frame_index: int, fps: Rational) -> Timestamp:
    fps = as_fraction(fps)
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    if frame_index < 0:
        raise ValueError(f"frame index must be non-negative, got {frame_index}")
    return Timestamp(round_half_up(Fraction(1000 * frame_index) / fps))


def timestamp_to_frame(ts: Timestamp, fps: Rational) -> int:
    return round_half_up(Fraction(ts.millis) * as_fraction(fps) / 1000)


def read_srt(path) -> SrtDocument:
    with open(path, encoding="utf-8") as fh:
        return parse_srt(fh.read())
