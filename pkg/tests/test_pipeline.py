import json
import shutil
from fractions import Fraction

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from subext.align import ManifestError, PredictedSubtitle, prediction_record
from subext.fileio import json_lines
from subext.metrics import SuberCounts
from subext.pipeline import (BACKENDS, ConfigError, InvalidRate, ManifestNotFound, MissingBackend,
                             PipelineConfig, format_config, load_manifests, parse_config,
                             register_backend, run_eval, run_extract, sample_frames,
                             synthetic_video, total_frames, write_synthetic_video)
from subext.s3 import S3Config
from subext.srt import emit_srt, parse_srt, read_srt, timestamp_to_frame


@pytest.mark.parametrize("duration,fps,rate,frames", [
    (1, 30, 2, [0, 15]), (2.5, 24, 2, [0, 12, 24, 36, 48]), (0.2, 30, 30, [0, 1, 2, 3, 4, 5]),
    (1, Fraction(30000, 1001), 2, [0, 15]),
])
def test_sample_frames(duration, fps, rate, frames):
    assert sample_frames(duration, fps, rate) == frames


@given(st.integers(1, 600), st.sampled_from([24, 25, 30, 60, Fraction(24000, 1001)]),
       st.sampled_from([1, 2, Fraction(1, 2), 5, 24]))
def test_sample_frames_properties(tenths, fps, rate):
    assume(rate <= fps)
    duration = Fraction(tenths, 10)
    frames = sample_frames(duration, fps, rate)
    assert all(a < b for a, b in zip(frames, frames[1:]))
    assert frames and frames[0] == 0 and frames[-1] < total_frames(duration, fps)


def test_invalid_rates():
    for args in ((1, 30, 0), (0, 30, 2), (1, 30, 31)):
        with pytest.raises(InvalidRate):
            sample_frames(*args)


def test_config_round_trip():
    text = """
    # comment
    pipeline.sampling_rate = 1/2
    pipeline.sort_output = yes
    refine.sim = 0.75
    refine.range = 12
    metrics.tolerance_ms = 500
    s3.p = 2
    s3.frame_index_slot = true
    """
    cfg = parse_config(text)
    assert cfg == PipelineConfig(sampling_rate=Fraction(1, 2), sort_output=True, sim=0.75,
                                 range_frames=12, tolerance_ms=500,
                                 s3=S3Config(p=2, frame_index_slot=True))
    assert parse_config(format_config(cfg)) == cfg
    assert cfg.refine_config(30).range_frames == 12
    for bad in ("nokey", "refine.sim = x", "who.knows = 1", "pipeline.sort_output = maybe"):
        with pytest.raises(ConfigError):
            parse_config(bad)


def _video(tmp_path, seed=0, fps=30, **kw):
    video = synthetic_video(seed, fps, **kw)
    return video, write_synthetic_video(video, tmp_path, f"v{seed}")


@pytest.mark.parametrize("fps", [24, 30, 60, Fraction(30000, 1001)])
def test_extract_recovers_synthetic_truth(tmp_path, fps):
    video, path = _video(tmp_path, 3, fps)
    (manifest,) = load_manifests(path)
    diagnostics = []
    doc = run_extract(manifest, PipelineConfig(), diagnostics)
    assert diagnostics == []
    for got, want in zip(doc, video.truth):
        assert abs(timestamp_to_frame(got.start, fps) - timestamp_to_frame(want.start, fps)) <= 1
        assert abs(timestamp_to_frame(got.end, fps) - timestamp_to_frame(want.end, fps)) <= 1
        assert got.lines == want.lines
    assert len(doc) == len(video.truth)


def test_synthetic_backend_and_workers(tmp_path):
    video, path = _video(tmp_path, 4, 25, n_cues=8)
    record = json.loads(path.read_text())
    del record["predictions_path"]
    record.update(backend="synthetic", noise_frames=1, seed=9)
    path.write_text(json.dumps(record))
    (manifest,) = load_manifests(path)
    one = run_extract(manifest, PipelineConfig())
    many = run_extract(manifest, PipelineConfig(workers=4))
    assert emit_srt(one) == emit_srt(many)
    assert [c.lines for c in one] == [c.lines for c in video.truth]


def test_empty_predictions_give_empty_srt(tmp_path):
    _, path = _video(tmp_path)
    (manifest,) = load_manifests(path)
    manifest.predictions_path.write_text("")
    assert emit_srt(run_extract(manifest, PipelineConfig())) == ""


def test_out_of_range_predictions(tmp_path):
    video, path = _video(tmp_path)
    (manifest,) = load_manifests(path)
    last = manifest.total_frames
    manifest.predictions_path.write_text(json_lines(
        [prediction_record(PredictedSubtitle(last, last + 4, "gone"))]))
    diagnostics = []
    doc = run_extract(manifest, PipelineConfig(), diagnostics)
    kinds = [d.kind for d in diagnostics]
    assert kinds.count("OutOfRange") == 2 and kinds.count("NoMatch") == 2
    assert timestamp_to_frame(doc.cues[0].start, 30) == last * 15


def test_sort_output(tmp_path):
    _, path = _video(tmp_path)
    (manifest,) = load_manifests(path)
    lines = manifest.predictions_path.read_text().splitlines()
    manifest.predictions_path.write_text("\n".join(reversed(lines)) + "\n")
    unsorted = run_extract(manifest, PipelineConfig())
    ordered = run_extract(manifest, PipelineConfig(sort_output=True))
    assert [c.start for c in ordered] == sorted(c.start for c in unsorted)
    assert [c.index for c in ordered] == list(range(1, len(ordered) + 1))


def test_manifest_errors(tmp_path):
    with pytest.raises(ManifestNotFound):
        load_manifests(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{"id": "x"}')
    with pytest.raises(ManifestError):
        load_manifests(bad)
    bad.write_text('{"id": "x", "duration": 1, "raw_fps": 30, "ocr_path": "o.jsonl", "backend": "nope"}')
    with pytest.raises(MissingBackend):
        run_extract(load_manifests(bad)[0], PipelineConfig())


def test_register_backend(tmp_path):
    video, path = _video(tmp_path)
    record = json.loads(path.read_text())
    record["backend"] = "nothing"
    path.write_text(json.dumps({"videos": [record]}))
    register_backend("nothing", lambda manifest, cfg: [])
    try:
        assert len(run_extract(load_manifests(path)[0], PipelineConfig())) == 0
    finally:
        del BACKENDS["nothing"]


TWO_CUES = "1\n00:00:00,000 --> 00:00:02,000\nthe cat sat\n\n2\n00:00:02,500 --> 00:00:04,000\non the mat\n\n"


def test_eval_identity_and_empty(tmp_path):
    ref = tmp_path / "ref.srt"
    ref.write_text(TWO_CUES)
    report = run_eval(ref, ref, tmp_path / "out")
    assert (report.ned, report.suber_percent) == (1.0, 0.0)
    assert (tmp_path / "out" / "metrics.kv").read_text().startswith("samples=1\nned=1.000000\nsuber_percent=0.000000\n")
    empty = tmp_path / "empty.srt"
    empty.write_text("")
    report = run_eval(empty, ref)
    assert report.suber_percent == 100.0 and report.ned == 0.0


def test_eval_toy_pair(tmp_path):
    ref, hyp = tmp_path / "ref.srt", tmp_path / "hyp.srt"
    ref.write_text(TWO_CUES)
    hyp.write_text(TWO_CUES.replace("cat", "dog"))
    report = run_eval(hyp, ref)
    assert report.totals == SuberCounts(1, 0, 0, 6, 2)
    assert report.suber_percent == 12.5
    assert report.ned == pytest.approx(1 - 3 / 22)


def test_eval_directories(tmp_path):
    (tmp_path / "ref").mkdir()
    (tmp_path / "hyp").mkdir()
    (tmp_path / "ref" / "a.srt").write_text(TWO_CUES)
    (tmp_path / "ref" / "b.srt").write_text(TWO_CUES)
    shutil.copy(tmp_path / "ref" / "a.srt", tmp_path / "hyp" / "a.srt")
    one = run_eval(tmp_path / "hyp", tmp_path / "ref", tmp_path / "o1")
    many = run_eval(tmp_path / "hyp", tmp_path / "ref", tmp_path / "o2", workers=2)
    assert [s.sample_id for s in one.per_sample] == ["a", "b"]
    assert one.suber_percent == 50.0 and one.ned == 0.5
    assert many == one
    for name in ("report.txt", "metrics.kv"):
        assert (tmp_path / "o1" / name).read_bytes() == (tmp_path / "o2" / name).read_bytes()
    with pytest.raises(ManifestNotFound):
        run_eval(tmp_path / "nope.srt", tmp_path / "ref")


def test_synthetic_truth_is_valid_srt(tmp_path):
    video, path = _video(tmp_path, 8, 24, n_cues=10)
    text = (tmp_path / "v8.truth.srt").read_text()
    assert parse_srt(text) == video.truth == read_srt(tmp_path / "v8.truth.srt")
