"""End-to-end runs: predictions -> refined SRT, and SRT evaluation."""

from __future__ import annotations

import json
import logging
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import align
from .align import OcrFrameResult, PredictedSubtitle, RefineConfig
from .fileio import atomic_write_text, json_lines
from .metrics import (DEFAULT_TOLERANCE_MS, EvalReport, build_report, format_report_kv,
                      format_report_table, score_sample)
from .s3 import S3Config
from .srt import (SrtDocument, SubtitleCue, Rational, as_fraction, emit_srt, frame_to_timestamp,
                  read_srt, round_half_up, timestamp_to_frame)

log = logging.getLogger(__name__)


class InvalidRate(ValueError):
    pass


class ManifestNotFound(FileNotFoundError):
    pass


class MissingBackend(LookupError):
    pass


class ConfigError(ValueError):
    pass


def total_frames(duration: Rational, raw_fps: Rational) -> int:
    return int(as_fraction(duration) * as_fraction(raw_fps))


def sample_frames(duration: Rational, raw_fps: Rational, sampling_rate: Rational) -> list[int]:
    """Full-rate indices of the frames kept when sampling at ``sampling_rate``."""
    fps, rate = as_fraction(raw_fps), as_fraction(sampling_rate)
    if as_fraction(duration) <= 0 or fps <= 0 or rate <= 0:
        raise InvalidRate("duration and rates must be positive")
    if rate > fps:
        raise InvalidRate(f"sampling rate {rate} exceeds raw fps {fps}")
    n = total_frames(duration, fps)
    out: list[int] = []
    k = 0
    while True:
        idx = round_half_up(k * fps / rate)
        if idx >= n:
            return out
        if not out or idx > out[-1]:
            out.append(idx)
        k += 1


# --- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    sampling_rate: Fraction = Fraction(2)
    sim: float = 0.8
    range_frames: Optional[int] = None
    sort_output: bool = False
    workers: int = 1
    tolerance_ms: int = DEFAULT_TOLERANCE_MS
    normalize: bool = False
    s3: S3Config = field(default_factory=S3Config)

    def refine_config(self, raw_fps: Rational) -> RefineConfig:
        return RefineConfig(raw_fps=raw_fps, sim=self.sim, range_frames=self.range_frames,
                            sampling_rate=self.sampling_rate)


_CONFIG_KEYS = {
    "pipeline.sampling_rate": ("sampling_rate", as_fraction),
    "pipeline.sort_output": ("sort_output", "bool"),
    "pipeline.workers": ("workers", int),
    "refine.sim": ("sim", float),
    "refine.range": ("range_frames", int),
    "metrics.tolerance_ms": ("tolerance_ms", int),
    "metrics.normalize": ("normalize", "bool"),
}


def _to_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_config(text: str, base: Optional[PipelineConfig] = None) -> PipelineConfig:
    """Parse ``section.key = value`` lines; ``#`` starts a comment."""
    cfg = base or PipelineConfig()
    top: dict = {}
    s3: dict = {}
    s3_types = {f.name: f.type for f in fields(S3Config)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        if key.startswith("s3.") and key[3:] in s3_types:
            name = key[3:]
            s3[name] = _to_bool(value) if s3_types[name] in (bool, "bool") else int(value)
        elif key in _CONFIG_KEYS:
            name, conv = _CONFIG_KEYS[key]
            try:
                top[name] = _to_bool(value) if conv == "bool" else conv(value)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: {exc}") from None
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    if s3:
        top["s3"] = replace(cfg.s3, **s3)
    return replace(cfg, **top)


def load_config(path) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except FileNotFoundError:
        raise ManifestNotFound(f"config file not found: {path}") from None


def format_config(cfg: PipelineConfig) -> str:
    lines = [
        f"pipeline.sampling_rate = {cfg.sampling_rate}",
        f"pipeline.sort_output = {str(cfg.sort_output).lower()}",
        f"pipeline.workers = {cfg.workers}",
        f"refine.sim = {cfg.sim}",
    ]
    if cfg.range_frames is not None:
        lines.append(f"refine.range = {cfg.range_frames}")
    lines += [f"metrics.tolerance_ms = {cfg.tolerance_ms}",
              f"metrics.normalize = {str(cfg.normalize).lower()}"]
    lines += [f"s3.{f.name} = {str(getattr(cfg.s3, f.name)).lower()}" for f in fields(S3Config)]
    return "\n".join(lines) + "\n"


# --- manifests and prediction backends --------------------------------------

@dataclass(frozen=True)
class VideoManifest:
    id: str
    duration: float
    raw_fps: Fraction
    ocr_path: Path
    predictions_path: Optional[Path] = None
    backend: Optional[str] = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if total_frames(self.duration, self.raw_fps) < 1:
            raise ValueError(f"{self.id}: duration x fps is below one frame")

    @property
    def total_frames(self) -> int:
        return total_frames(self.duration, self.raw_fps)


def parse_manifest(record: dict, base_dir: Path = Path(".")) -> VideoManifest:
    def resolve(p):
        return None if p is None else (base_dir / p)

    known = {"id", "duration", "raw_fps", "ocr_path", "predictions_path", "backend"}
    try:
        return VideoManifest(id=str(record["id"]), duration=float(record["duration"]),
                             raw_fps=as_fraction(record["raw_fps"]),
                             ocr_path=resolve(record["ocr_path"]),
                             predictions_path=resolve(record.get("predictions_path")),
                             backend=record.get("backend"),
                             options={k: resolve(v) if k.endswith("_path") else v
                                      for k, v in record.items() if k not in known})
    except (KeyError, TypeError, ValueError) as exc:
        raise align.ManifestError(f"bad video manifest {record!r}: {exc}") from None


def load_manifests(path) -> list[VideoManifest]:
    """A JSON object, a list of objects, or {"videos": [...]}; paths are relative to the file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ManifestNotFound(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise align.ManifestError(f"{path}: {exc}") from None
    if isinstance(data, dict) and "videos" in data:
        data = data["videos"]
    records = data if isinstance(data, list) else [data]
    return [parse_manifest(r, path.parent) for r in records]


Backend = Callable[[VideoManifest, PipelineConfig], list[PredictedSubtitle]]


def file_backend(manifest: VideoManifest, cfg: PipelineConfig) -> list[PredictedSubtitle]:
    if manifest.predictions_path is None:
        raise MissingBackend(f"{manifest.id}: no predictions_path")
    try:
        return align.load_predictions(manifest.predictions_path)
    except FileNotFoundError:
        raise ManifestNotFound(f"predictions not found: {manifest.predictions_path}") from None


def predictions_from_truth(truth: SrtDocument, raw_fps: Rational, sampling_rate: Rational,
                           noise: int = 0, seed: int = 0) -> list[PredictedSubtitle]:
    """What a perfect model would predict at the sampled rate, plus optional index jitter."""
    fps, rate = as_fraction(raw_fps), as_fraction(sampling_rate)
    rng = random.Random(seed)
    preds = []
    for cue in truth.cues:
        first = round_half_up(timestamp_to_frame(cue.start, fps) * rate / fps)
        last = round_half_up(timestamp_to_frame(cue.end, fps) * rate / fps)
        if noise:
            first = max(0, first + rng.randint(-noise, noise))
            last = max(0, last + rng.randint(-noise, noise))
        preds.append(PredictedSubtitle(first, max(first, last), cue.text))
    return preds


def synthetic_backend(manifest: VideoManifest, cfg: PipelineConfig) -> list[PredictedSubtitle]:
    truth_path = manifest.options.get("truth_path")
    if truth_path is None:
        raise MissingBackend(f"{manifest.id}: synthetic backend needs truth_path")
    truth = read_srt(truth_path)
    return predictions_from_truth(truth, manifest.raw_fps, cfg.sampling_rate,
                                  int(manifest.options.get("noise_frames", 0)),
                                  int(manifest.options.get("seed", 0)))


BACKENDS: dict[str, Backend] = {"file": file_backend, "synthetic": synthetic_backend}


def register_backend(name: str, backend: Backend) -> None:
    BACKENDS[name] = backend


def run_extract(manifest: VideoManifest, cfg: PipelineConfig,
                diagnostics: Optional[list] = None) -> SrtDocument:
    name = manifest.backend or ("file" if manifest.predictions_path is not None else None)
    if name is None or name not in BACKENDS:
        raise MissingBackend(f"{manifest.id}: no usable prediction backend ({name!r})")
    if not manifest.ocr_path.exists():
        raise ManifestNotFound(f"OCR manifest not found: {manifest.ocr_path}")
    preds = BACKENDS[name](manifest, cfg)
    ocr = align.ocr_index(align.load_ocr_manifest(manifest.ocr_path))
    refine = cfg.refine_config(manifest.raw_fps)
    if diagnostics is not None:
        last = manifest.total_frames - 1
        for k, p in enumerate(preds):
            for frame in (align.coarse_frame(p.start_frame, refine),
                          align.coarse_frame(p.end_frame, refine)):
                if frame > last:
                    diagnostics.append(align.Diagnostic(
                        "OutOfRange", k, f"coarse frame {frame} beyond last frame {last}"))
    doc = align.refine_all(preds, ocr, refine, diagnostics, workers=cfg.workers)
    return doc.sorted_by_start() if cfg.sort_output else doc


# --- synthetic videos -------------------------------------------------------

_ALPHABET = "abcdefghijklmnopqrstuvwxyz"


def _random_text(rng: random.Random, used: set) -> str:
    while True:
        words = ["".join(rng.choice(_ALPHABET) for _ in range(rng.randint(2, 7)))
                 for _ in range(rng.randint(2, 4))]
        text = " ".join(words)
        if text not in used:
            used.add(text)
            return text


def _corrupt(text: str, rate: float, rng: random.Random) -> str:
    out = []
    for ch in text:
        if ch != " " and rng.random() < rate:
            ch = rng.choice(_ALPHABET.replace(ch, ""))
        out.append(ch)
    return "".join(out)


@dataclass
class SyntheticVideo:
    truth: SrtDocument
    frame_spans: list[tuple[int, int]]
    ocr: list[OcrFrameResult]
    raw_fps: Fraction
    duration: float


def synthetic_video(seed: int, raw_fps: Rational = 30, n_cues: int = 6,
                    char_noise: float = 0.0, watermark: Optional[str] = "LOGO") -> SyntheticVideo:
    """A random subtitle track with per-frame OCR that shows each text exactly on its frames.

    Cues last 1-4 s with 0.3-2 s gaps. ``char_noise`` corrupts each OCR
    character independently with that probability.
    """
    fps = as_fraction(raw_fps)
    rng = random.Random(seed)
    used: set = set()
    spans, cues = [], []
    frame = round_half_up(fps * Fraction(rng.randint(300, 2000), 1000))
    for k in range(n_cues):
        length = round_half_up(fps * Fraction(rng.randint(1000, 4000), 1000))
        start, end = frame, frame + length - 1
        text = _random_text(rng, used)
        spans.append((start, end))
        cues.append(SubtitleCue(k + 1, frame_to_timestamp(start, fps),
                                frame_to_timestamp(end, fps), (text,)))
        frame = end + 1 + round_half_up(fps * Fraction(rng.randint(300, 2000), 1000))
    n_frames = frame + round_half_up(fps)
    shown = {}
    for (start, end), cue in zip(spans, cues):
        for f in range(start, end + 1):
            shown[f] = cue.lines[0]
    ocr = []
    for f in range(n_frames):
        texts = []
        if f in shown:
            texts.append(_corrupt(shown[f], char_noise, rng) if char_noise else shown[f])
        if watermark:
            texts.append(watermark)
        if texts:
            ocr.append(OcrFrameResult(f, tuple(texts)))
    return SyntheticVideo(SrtDocument(tuple(cues)), spans, ocr, fps, float(n_frames / fps))


def write_synthetic_video(video: SyntheticVideo, directory, video_id: str,
                          noise_frames: int = 0, seed: int = 0,
                          sampling_rate: Rational = 2) -> Path:
    """Write truth SRT, OCR manifest, predictions and a manifest.json; return the manifest path."""
    directory = Path(directory)
    atomic_write_text(directory / f"{video_id}.truth.srt", emit_srt(video.truth))
    atomic_write_text(directory / f"{video_id}.ocr.jsonl",
                      json_lines(align.ocr_record(f) for f in video.ocr))
    preds = predictions_from_truth(video.truth, video.raw_fps, sampling_rate, noise_frames, seed)
    atomic_write_text(directory / f"{video_id}.pred.jsonl",
                      json_lines(align.prediction_record(p) for p in preds))
    manifest = {"id": video_id, "duration": video.duration, "raw_fps": str(video.raw_fps),
                "ocr_path": f"{video_id}.ocr.jsonl", "predictions_path": f"{video_id}.pred.jsonl",
                "truth_path": f"{video_id}.truth.srt"}
    path = directory / f"{video_id}.manifest.json"
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# --- evaluation -------------------------------------------------------------

def _score(args):
    sample_id, hyp, ref, tolerance_ms, normalize = args
    return score_sample(sample_id, hyp, ref, tolerance_ms, normalize)


def evaluate_documents(samples: Sequence[tuple[str, SrtDocument, SrtDocument]],
                       tolerance_ms: int = DEFAULT_TOLERANCE_MS, normalize: bool = False,
                       workers: int = 1) -> EvalReport:
    """Score (id, hypothesis, reference) samples; the result does not depend on ``workers``."""
    jobs = [(sid, h, r, tolerance_ms, normalize) for sid, h, r in samples]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(_score, jobs))
    else:
        scores = [_score(j) for j in jobs]
    return build_report(scores)


def _collect_pairs(hyp_path: Path, ref_path: Path) -> list[tuple[str, SrtDocument, SrtDocument]]:
    if ref_path.is_dir():
        samples = []
        for ref_file in sorted(ref_path.glob("*.srt")):
            hyp_file = hyp_path / ref_file.name
            hyp = read_srt(hyp_file) if hyp_file.exists() else SrtDocument()
            samples.append((ref_file.stem, hyp, read_srt(ref_file)))
        return samples
    return [(ref_path.stem, read_srt(hyp_path), read_srt(ref_path))]


def run_eval(hyp_path, ref_path, out_dir=None, tolerance_ms: int = DEFAULT_TOLERANCE_MS,
             normalize: bool = False, workers: int = 1) -> EvalReport:
    """Evaluate one SRT pair, or two directories of same-named .srt files.

    A reference without a matching hypothesis file is scored against an empty
    document. With ``out_dir``, writes report.txt (table) and metrics.kv.
    """
    hyp_path, ref_path = Path(hyp_path), Path(ref_path)
    for p in (hyp_path, ref_path):
        if not p.exists():
            raise ManifestNotFound(f"not found: {p}")
    report = evaluate_documents(_collect_pairs(hyp_path, ref_path), tolerance_ms, normalize,
                                workers)
    if out_dir is not None:
        out_dir = Path(out_dir)
        atomic_write_text(out_dir / "report.txt", format_report_table(report))
        atomic_write_text(out_dir / "metrics.kv", format_report_kv(report))
    return report
