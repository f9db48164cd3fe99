"""Command line entry point.

Exit codes: 0 success, 1 input error, 2 invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import align, corpus, pipeline, s3
from .fileio import atomic_write_text, json_lines
from .metrics import EmptyCorpus, EmptyReference, format_report_kv, format_report_table
from .srt import InvariantViolation, SrtError, as_fraction, emit_srt

log = logging.getLogger("subext")

INPUT_ERRORS = (SrtError, align.ManifestError, pipeline.ManifestNotFound,
                pipeline.MissingBackend, pipeline.ConfigError, pipeline.InvalidRate,
                corpus.MetaError, EmptyCorpus, EmptyReference, FileNotFoundError)
INVARIANT_ERRORS = (InvariantViolation, s3.ShapeMismatch, s3.GradMismatch)


def _config(args) -> pipeline.PipelineConfig:
    cfg = pipeline.load_config(args.config) if getattr(args, "config", None) else \
        pipeline.PipelineConfig()
    overrides = {}
    for flag, name in (("sim", "sim"), ("range", "range_frames"), ("workers", "workers"),
                       ("tolerance_ms", "tolerance_ms")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "sampling_rate", None) is not None:
        overrides["sampling_rate"] = as_fraction(args.sampling_rate)
    if getattr(args, "sort", False):
        overrides["sort_output"] = True
    if getattr(args, "normalize", False):
        overrides["normalize"] = True
    return replace(cfg, **overrides)


def _report_diagnostics(diagnostics, path=None):
    for d in diagnostics:
        log.info("%s subtitle=%d %s", d.kind, d.subtitle, d.detail)
    if path:
        atomic_write_text(path, json_lines(
            {"kind": d.kind, "subtitle": d.subtitle, "detail": d.detail} for d in diagnostics))


def cmd_extract(args) -> int:
    cfg = _config(args)
    manifests = pipeline.load_manifests(args.manifest)
    out = Path(args.out)
    for m in manifests:
        diagnostics: list = []
        doc = pipeline.run_extract(m, cfg, diagnostics)
        target = out if len(manifests) == 1 and out.suffix == ".srt" else out / f"{m.id}.srt"
        atomic_write_text(target, emit_srt(doc))
        _report_diagnostics(diagnostics, args.diagnostics and
                            target.with_suffix(".diagnostics.jsonl"))
        print(f"{m.id}: {len(doc)} cues -> {target}")
    return 0


def cmd_refine(args) -> int:
    cfg = _config(args)
    preds = align.load_predictions(args.pred)
    ocr = align.ocr_index(align.load_ocr_manifest(args.ocr))
    diagnostics: list = []
    doc = align.refine_all(preds, ocr, cfg.refine_config(as_fraction(args.fps)), diagnostics,
                           workers=cfg.workers)
    if cfg.sort_output:
        doc = doc.sorted_by_start()
    atomic_write_text(args.out, emit_srt(doc))
    _report_diagnostics(diagnostics)
    print(f"{len(doc)} cues, {len(diagnostics)} diagnostics -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    report = pipeline.run_eval(args.hyp, args.ref, args.out, cfg.tolerance_ms, cfg.normalize,
                               cfg.workers)
    if args.out is None:
        sys.stdout.write(format_report_table(report))
    sys.stdout.write(format_report_kv(report))
    return 0


def cmd_corpus_prep(args) -> int:
    metas = corpus.load_metas(args.meta)
    accepted, rejected = corpus.prepare(metas, args.seed)
    out = Path(args.out)
    atomic_write_text(out / "accepted.jsonl", json_lines(accepted))
    atomic_write_text(out / "rejected.jsonl", json_lines(rejected))
    kept = [corpus.parse_meta(r) for r in accepted]
    stats = corpus.corpus_stats(kept)
    atomic_write_text(out / "stats.txt", corpus.format_stats_table(stats))
    atomic_write_text(out / "stats.kv", f"seed={args.seed}\n" + corpus.format_stats_kv(stats))
    print(f"{len(accepted)} accepted, {len(rejected)} rejected -> {out}")
    return 0


def cmd_synth(args) -> int:
    for k in range(args.count):
        video = pipeline.synthetic_video(args.seed + k, as_fraction(args.fps), args.cues,
                                         args.char_noise)
        path = pipeline.write_synthetic_video(video, args.out, f"video{k:03d}",
                                              args.noise_frames, args.seed + k)
        print(path)
    return 0


def cmd_s3_check(args) -> int:
    cfg = s3.S3Config(p=args.p, K=args.queries, window=args.window, C=args.channels,
                      D=args.width)
    import numpy as np
    rng = np.random.default_rng(args.seed)
    side = cfg.p * args.cell
    frames = [rng.normal(size=(side, side, cfg.C)) for _ in range(args.frames)]
    params = s3.S3Params.init(cfg, args.seed)
    out = s3.s3_forward(frames, params, cfg)
    print(f"frames={args.frames} tokens={out.shape[0]} per_frame={cfg.tokens_per_frame} "
          f"width={out.shape[1]}")
    small_frames, small_params, small_cfg = s3.random_instance(args.seed)
    print(f"grad_check max_rel_error={s3.grad_check(small_frames, small_params, small_cfg):.3e}")
    if args.save:
        s3.save_params(params, args.save)
        atomic_write_text(Path(args.save).with_suffix(".txt"), s3.dump_params_text(params))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subext", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="predictions + OCR manifest -> refined SRT")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True, help=".srt file (single video) or directory")
    p.add_argument("--sort", action="store_true", help="sort cues by start time")
    p.add_argument("--workers", type=int)
    p.add_argument("--sim", type=float)
    p.add_argument("--range", type=int)
    p.add_argument("--sampling-rate")
    p.add_argument("--diagnostics", action="store_true", help="write *.diagnostics.jsonl")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("refine", help="refine one prediction file against OCR")
    p.add_argument("--pred", required=True)
    p.add_argument("--ocr", required=True)
    p.add_argument("--fps", required=True, help="raw fps, e.g. 30 or 30000/1001")
    p.add_argument("--sim", type=float)
    p.add_argument("--range", type=int)
    p.add_argument("--sampling-rate")
    p.add_argument("--config")
    p.add_argument("--sort", action="store_true")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("eval", help="NED and SubER of hypothesis SRT(s) against reference(s)")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--out", help="directory for report.txt and metrics.kv")
    p.add_argument("--config")
    p.add_argument("--normalize", action="store_true",
                   help="lowercase and strip trailing punctuation before scoring")
    p.add_argument("--tolerance-ms", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("corpus-prep", help="filter and clip a metadata manifest")
    p.add_argument("--meta", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_corpus_prep)

    p = sub.add_parser("synth", help="write synthetic videos (truth SRT, OCR, predictions)")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--fps", default="30")
    p.add_argument("--cues", type=int, default=6)
    p.add_argument("--char-noise", type=float, default=0.0)
    p.add_argument("--noise-frames", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("s3-check", help="adapter token budget and gradient check")
    p.add_argument("--frames", type=int, default=5)
    p.add_argument("--p", type=int, default=4)
    p.add_argument("--queries", type=int, default=10)
    p.add_argument("--window", type=int, default=1)
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--width", type=int, default=8)
    p.add_argument("--cell", type=int, default=2, help="feature map side = p * cell")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--save", help="write parameters (binary + .txt dump)")
    p.set_defaults(func=cmd_s3_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except INVARIANT_ERRORS as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2
    except INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
