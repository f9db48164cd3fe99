"""Frame-accurate subtitle timing from full-frame-rate OCR.

Model predictions carry start/end indices at the sampled rate. Each boundary
is rescaled to the raw frame rate, then moved to the nearest frame inside
``+-range`` whose OCR text is close enough to the predicted text.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .metrics import normalized_edit_distance
from .srt import (InvariantViolation, Rational, SrtDocument, SubtitleCue, as_fraction,
                  frame_to_timestamp, round_half_up)

log = logging.getLogger(__name__)

START = "start"
END = "end"

_TEMPLATE_RE = re.compile(r"^<(\d+)><(\d+)>(.*)$")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class PredictedSubtitle:
    start_frame: int
    end_frame: int
    text: str

    def __post_init__(self):
        if self.start_frame < 0 or self.end_frame < self.start_frame:
            raise InvariantViolation(
                f"bad prediction span {self.start_frame}..{self.end_frame}")
        if not self.text or any(not line.strip() for line in self.text.split("\n")):
            raise InvariantViolation(f"prediction text has empty lines: {self.text!r}")


@dataclass(frozen=True)
class OcrFrameResult:
    frame_index: int
    texts: tuple[str, ...]
    boxes: tuple[Optional[tuple[float, ...]], ...] = ()


@dataclass(frozen=True)
class RefineConfig:
    raw_fps: Rational
    sim: float = 0.8
    range_frames: Optional[int] = None
    sampling_rate: Rational = 2

    def __post_init__(self):
        object.__setattr__(self, "raw_fps", as_fraction(self.raw_fps))
        object.__setattr__(self, "sampling_rate", as_fraction(self.sampling_rate))
        if self.range_frames is None:
            # one second of frames
            object.__setattr__(self, "range_frames", round_half_up(self.raw_fps))
        if not 0 < self.sim <= 1:
            raise InvariantViolation(f"sim must be in (0, 1], got {self.sim}")
        if self.raw_fps <= 0 or self.sampling_rate <= 0:
            raise InvariantViolation("frame rates must be positive")
        if self.sampling_rate > self.raw_fps:
            raise InvariantViolation(
                f"sampling rate {self.sampling_rate} exceeds raw fps {self.raw_fps}")
        if self.range_frames < 1:
            raise InvariantViolation(f"range must be >= 1 frame, got {self.range_frames}")

    @property
    def max_dissimilarity(self) -> float:
        return 1.0 - self.sim


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # "NoMatch" | "InvertedSpan"
    subtitle: int
    detail: str


def coarse_frame(sampled_index: int, cfg: RefineConfig) -> int:
    return round_half_up(cfg.raw_fps * sampled_index / Fraction(cfg.sampling_rate))


def frame_dissimilarity(text: str, texts: Sequence[str]) -> float:
    """Smallest ED/MaxL between ``text`` and the OCR strings of one frame.

    A multi-line prediction is also compared with all OCR strings of the frame
    joined by newlines, since OCR reports each line separately.
    """
    candidates = list(texts)
    if "\n" in text and len(texts) > 1:
        candidates.append("\n".join(texts))
    return min(normalized_edit_distance(text, o) for o in candidates)


def refine_boundary(text: str, center: int, direction: str, ocr: Mapping[int, Sequence[str]],
                    cfg: RefineConfig, diagnostics: Optional[list] = None,
                    subtitle: int = -1) -> int:
    """First frame in the search window whose OCR text matches ``text``.

    Starts scan upwards from center - range; ends scan downwards from
    center + range, so the end lands on the last frame still showing the text.
    Frames missing from ``ocr`` or without any text are skipped. Falls back to
    ``center`` when nothing qualifies.
    """
    radius = cfg.range_frames
    if direction == START:
        frames = range(center - radius, center + radius + 1)
    elif direction == END:
        frames = range(center + radius, center - radius - 1, -1)
    else:
        raise ValueError(f"direction must be {START!r} or {END!r}")
    bound = cfg.max_dissimilarity
    for i in frames:
        if i < 0:
            continue
        texts = ocr.get(i)
        if not texts:
            continue
        if frame_dissimilarity(text, texts) < bound:
            return i
    if diagnostics is not None:
        diagnostics.append(Diagnostic("NoMatch", subtitle,
                                      f"{direction} kept at coarse frame {center}"))
    log.debug("no OCR match for %s of subtitle %d near frame %d", direction, subtitle, center)
    return center


def refine_spans(preds: Sequence[PredictedSubtitle], ocr: Mapping[int, Sequence[str]],
                 cfg: RefineConfig, diagnostics: Optional[list] = None,
                 first_index: int = 0) -> list[tuple[int, int]]:
    """Refined (start, end) full-rate frames for each prediction, in input order."""
    spans = []
    for k, p in enumerate(preds, first_index):
        first = refine_boundary(p.text, coarse_frame(p.start_frame, cfg), START, ocr, cfg,
                                diagnostics, k)
        last = refine_boundary(p.text, coarse_frame(p.end_frame, cfg), END, ocr, cfg,
                               diagnostics, k)
        if last <= first:
            if diagnostics is not None:
                diagnostics.append(Diagnostic(
                    "InvertedSpan", k, f"end {last} <= start {first}; clamped to {first + 1}"))
            last = first + 1
        spans.append((first, last))
    return spans


def _refine_chunk(args):
    preds, ocr, cfg, first = args
    diagnostics: list = []
    return refine_spans(preds, ocr, cfg, diagnostics, first), diagnostics


def _window_subset(preds, ocr, cfg) -> dict[int, Sequence[str]]:
    frames = set()
    radius = cfg.range_frames
    for p in preds:
        for center in (coarse_frame(p.start_frame, cfg), coarse_frame(p.end_frame, cfg)):
            frames.update(range(center - radius, center + radius + 1))
    return {i: ocr[i] for i in frames if i in ocr}


def refine_all(preds: Sequence[PredictedSubtitle], ocr: Mapping[int, Sequence[str]],
               cfg: RefineConfig, diagnostics: Optional[list] = None,
               workers: int = 1) -> SrtDocument:
    """Turn frame-indexed predictions into an SRT document with refined timing.

    Cue text is the prediction text, split on newlines into cue lines. With
    ``workers > 1`` predictions are refined in chunks across processes; the
    output and diagnostics keep input order either way.
    """
    preds = list(preds)
    if workers > 1 and len(preds) > 1:
        size = -(-len(preds) // workers)
        chunks = [(preds[i:i + size], _window_subset(preds[i:i + size], ocr, cfg), cfg, i)
                  for i in range(0, len(preds), size)]
        spans = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk_spans, chunk_diag in pool.map(_refine_chunk, chunks):
                spans.extend(chunk_spans)
                if diagnostics is not None:
                    diagnostics.extend(chunk_diag)
    else:
        spans = refine_spans(preds, ocr, cfg, diagnostics)
    cues = [SubtitleCue(k, frame_to_timestamp(first, cfg.raw_fps),
                        frame_to_timestamp(last, cfg.raw_fps), tuple(p.text.split("\n")))
            for k, (p, (first, last)) in enumerate(zip(preds, spans), 1)]
    return SrtDocument(tuple(cues))


# --- manifest files ---------------------------------------------------------

def _iter_json_lines(path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    yield lineno, json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ManifestError(f"{path}:{lineno}: {exc}") from None


def parse_ocr_record(record: dict) -> OcrFrameResult:
    try:
        frame = int(record["frame_index"])
        raw = record["texts"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"bad OCR record {record!r}") from exc
    texts, boxes = [], []
    for item in raw:
        if isinstance(item, str):
            texts.append(item)
            boxes.append(None)
        elif isinstance(item, dict) and isinstance(item.get("text"), str):
            texts.append(item["text"])
            box = item.get("box")
            boxes.append(None if box is None else tuple(float(v) for v in box))
        else:
            raise ManifestError(f"bad OCR text entry {item!r}")
    if frame < 0:
        raise ManifestError(f"negative frame index {frame}")
    return OcrFrameResult(frame, tuple(texts), tuple(boxes))


def load_ocr_manifest(path) -> list[OcrFrameResult]:
    frames = []
    seen = set()
    for lineno, record in _iter_json_lines(path):
        result = parse_ocr_record(record)
        if result.frame_index in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate frame {result.frame_index}")
        seen.add(result.frame_index)
        frames.append(result)
    return frames


def ocr_index(frames: Iterable[OcrFrameResult]) -> dict[int, tuple[str, ...]]:
    return {f.frame_index: f.texts for f in frames}


def ocr_record(frame: OcrFrameResult) -> dict:
    texts = []
    for k, text in enumerate(frame.texts):
        box = frame.boxes[k] if k < len(frame.boxes) else None
        texts.append(text if box is None else {"text": text, "box": list(box)})
    return {"frame_index": frame.frame_index, "texts": texts}


def parse_prediction_line(line: str) -> PredictedSubtitle:
    """One prediction: a JSON object or the ``<b><e>text`` template."""
    line = line.rstrip("\n")
    m = _TEMPLATE_RE.match(line)
    if m:
        return PredictedSubtitle(int(m.group(1)), int(m.group(2)), m.group(3))
    try:
        record = json.loads(line)
        return PredictedSubtitle(int(record["start_frame"]), int(record["end_frame"]),
                                 record["text"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"bad prediction line {line!r}") from exc


def load_predictions(path) -> list[PredictedSubtitle]:
    preds = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                preds.append(parse_prediction_line(line))
            except (ManifestError, InvariantViolation) as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
    return preds


def prediction_record(p: PredictedSubtitle) -> dict:
    return {"start_frame": p.start_frame, "end_frame": p.end_frame, "text": p.text}
