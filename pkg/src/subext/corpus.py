"""Video metadata filters, movie clipping and corpus statistics."""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

LANGUAGES = ("Chinese", "English", "Bilingual", "NoneText")
SOURCES = ("short_video", "movie")

MIN_SHORT_DURATION = 10.0
MAX_SHORT_DURATION = 120.0
MIN_TRACKLETS = 5
CLIP_MIN = 15.0
CLIP_MAX = 60.0
BUCKET_SECONDS = 10
HISTOGRAM_LIMIT = 120


class MetaError(ValueError):
    pass


class TooShort(ValueError):
    pass


@dataclass(frozen=True)
class VideoMeta:
    id: str
    duration: float
    tracklet_count: int
    language: str
    source: str
    fps: Optional[float] = None

    def __post_init__(self):
        if not self.duration > 0:
            raise MetaError(f"{self.id}: duration must be positive, got {self.duration}")
        if self.tracklet_count < 0:
            raise MetaError(f"{self.id}: negative tracklet count")
        if self.language not in LANGUAGES:
            raise MetaError(f"{self.id}: unknown language {self.language!r}")
        if self.source not in SOURCES:
            raise MetaError(f"{self.id}: unknown source {self.source!r}")


@dataclass(frozen=True)
class FilterResult:
    accepted: bool
    reason: Optional[str] = None  # "duration" | "tracklets" when rejected


ACCEPT = FilterResult(True)


def filter_short_video(meta: VideoMeta) -> FilterResult:
    # 10 s and 120 s themselves are kept; 5 tracklets is enough
    if meta.duration < MIN_SHORT_DURATION or meta.duration > MAX_SHORT_DURATION:
        return FilterResult(False, "duration")
    if meta.tracklet_count < MIN_TRACKLETS:
        return FilterResult(False, "tracklets")
    return ACCEPT


def clip_movie(total_duration: float, rng_seed: int) -> list[tuple[float, float]]:
    """Cut [0, total] into consecutive clips of uniform random length in [15, 60] s.

    A tail shorter than 15 s is merged into the clip before it, so clips are
    between 15 and 75 s and tile the interval exactly.
    """
    if total_duration < CLIP_MIN:
        raise TooShort(f"{total_duration} s is shorter than the {CLIP_MIN} s minimum clip")
    rng = random.Random(rng_seed)
    segments: list[tuple[float, float]] = []
    t = 0.0
    while True:
        remaining = total_duration - t
        if remaining < CLIP_MIN:
            start, _ = segments.pop()
            segments.append((start, total_duration))
            break
        length = rng.uniform(CLIP_MIN, CLIP_MAX)
        if length >= remaining:
            segments.append((t, total_duration))
            break
        segments.append((t, t + length))
        t = t + length
    return segments


@dataclass
class CorpusStats:
    counts: dict[tuple[str, str], int]
    histogram: dict[str, list[int]]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def by_language(self, source: str) -> dict[str, int]:
        return {lang: self.counts[(lang, source)] for lang in LANGUAGES}


def bucket_labels() -> list[str]:
    labels = [f"{lo}-{lo + BUCKET_SECONDS}"
              for lo in range(0, HISTOGRAM_LIMIT, BUCKET_SECONDS)]
    return labels + [f"{HISTOGRAM_LIMIT}+"]


def _bucket(duration: float) -> int:
    return min(int(duration // BUCKET_SECONDS), HISTOGRAM_LIMIT // BUCKET_SECONDS)


def corpus_stats(metas: Iterable[VideoMeta]) -> CorpusStats:
    """Counts per (language, source) and a 10 s duration histogram per source.

    Durations of 120 s and above land in the last bucket.
    """
    counts = Counter()
    hist = {src: [0] * (HISTOGRAM_LIMIT // BUCKET_SECONDS + 1) for src in SOURCES}
    for m in metas:
        counts[(m.language, m.source)] += 1
        hist[m.source][_bucket(m.duration)] += 1
    return CorpusStats({(lang, src): counts[(lang, src)] for src in SOURCES for lang in LANGUAGES},
                       hist)


def format_stats_table(stats: CorpusStats) -> str:
    rows = ["source\t" + "\t".join(LANGUAGES) + "\ttotal"]
    for src in SOURCES:
        by_lang = stats.by_language(src)
        rows.append(f"{src}\t" + "\t".join(str(by_lang[lang]) for lang in LANGUAGES)
                    + f"\t{sum(by_lang.values())}")
    rows.append("")
    rows.append("duration_s\t" + "\t".join(SOURCES))
    for k, label in enumerate(bucket_labels()):
        rows.append(f"{label}\t" + "\t".join(str(stats.histogram[src][k]) for src in SOURCES))
    return "\n".join(rows) + "\n"


def format_stats_kv(stats: CorpusStats) -> str:
    lines = [f"total={stats.total}"]
    for src in SOURCES:
        for lang in LANGUAGES:
            lines.append(f"count.{src}.{lang}={stats.counts[(lang, src)]}")
    for src in SOURCES:
        for label, n in zip(bucket_labels(), stats.histogram[src]):
            lines.append(f"hist.{src}.{label}={n}")
    return "\n".join(lines) + "\n"


def parse_meta(record: dict) -> VideoMeta:
    try:
        return VideoMeta(id=str(record["id"]), duration=float(record["duration"]),
                         tracklet_count=int(record.get("tracklet_count", 0)),
                         language=record["language"], source=record["source"],
                         fps=None if record.get("fps") is None else float(record["fps"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise MetaError(f"bad metadata record {record!r}: {exc}") from None


def load_metas(path) -> list[VideoMeta]:
    metas = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                metas.append(parse_meta(json.loads(line)))
            except (json.JSONDecodeError, MetaError) as exc:
                raise MetaError(f"{path}:{lineno}: {exc}") from None
    return metas


def prepare(metas: Sequence[VideoMeta], seed: int = 0) -> tuple[list[dict], list[dict]]:
    """Apply the short-video filters and clip movies.

    Returns (accepted records, rejected records). Each movie gets its own seed
    derived from ``seed`` and its position; the seed used is written into every
    clip record.
    """
    accepted, rejected = [], []
    for k, meta in enumerate(metas):
        if meta.source == "short_video":
            result = filter_short_video(meta)
            if result.accepted:
                accepted.append(asdict(meta))
            else:
                rejected.append({"id": meta.id, "reason": result.reason})
            continue
        clip_seed = seed * 1_000_003 + k
        try:
            clips = clip_movie(meta.duration, clip_seed)
        except TooShort:
            rejected.append({"id": meta.id, "reason": "duration"})
            continue
        for n, (start, end) in enumerate(clips):
            accepted.append({**asdict(meta), "id": f"{meta.id}#{n}", "parent": meta.id,
                             "clip_start": start, "clip_end": end, "duration": end - start,
                             "clip_seed": clip_seed})
    return accepted, rejected
