import json
import subprocess
import sys

import pytest

from subext.cli import main


@pytest.fixture
def synth(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "data"), "--count", "2", "--fps", "24"]) == 0
    return tmp_path / "data"


def test_extract_then_eval(synth, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["extract", "--manifest", str(synth / "video000.manifest.json"),
                 "--out", str(out), "--diagnostics"]) == 0
    assert (out / "video000.srt").read_text() == (synth / "video000.truth.srt").read_text()
    assert (out / "video000.diagnostics.jsonl").read_text() == ""
    assert main(["eval", "--hyp", str(out / "video000.srt"),
                 "--ref", str(synth / "video000.truth.srt"), "--out", str(tmp_path / "rep")]) == 0
    kv = (tmp_path / "rep" / "metrics.kv").read_text()
    assert "ned=1.000000\nsuber_percent=0.000000\n" in kv
    assert kv in capsys.readouterr().out


def test_extract_single_file_output_and_flags(synth, tmp_path):
    target = tmp_path / "one.srt"
    assert main(["extract", "--manifest", str(synth / "video001.manifest.json"), "--out", str(target),
                 "--sort", "--workers", "2", "--sim", "0.9", "--range", "12"]) == 0
    assert target.read_text() == (synth / "video001.truth.srt").read_text()


def test_refine_command(synth, tmp_path, capsys):
    out = tmp_path / "r.srt"
    assert main(["refine", "--pred", str(synth / "video000.pred.jsonl"),
                 "--ocr", str(synth / "video000.ocr.jsonl"), "--fps", "24", "--out", str(out)]) == 0
    assert out.read_text() == (synth / "video000.truth.srt").read_text()
    assert "0 diagnostics" in capsys.readouterr().out


def test_config_file_and_override(synth, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("refine.sim = 0.99\nrefine.range = 1\n")
    out = tmp_path / "o.srt"
    assert main(["extract", "--manifest", str(synth / "video000.manifest.json"),
                 "--config", str(cfg), "--range", "24", "--out", str(out)]) == 0
    assert out.read_text() == (synth / "video000.truth.srt").read_text()


def test_corpus_prep(tmp_path):
    meta = tmp_path / "meta.jsonl"
    meta.write_text("\n".join(json.dumps(r) for r in [
        {"id": "s1", "duration": 30, "tracklet_count": 7, "language": "Chinese", "source": "short_video"},
        {"id": "s2", "duration": 9.9, "tracklet_count": 7, "language": "English", "source": "short_video"},
        {"id": "m1", "duration": 400, "language": "Bilingual", "source": "movie"},
    ]) + "\n")
    out = tmp_path / "prep"
    assert main(["corpus-prep", "--meta", str(meta), "--out", str(out), "--seed", "5"]) == 0
    rejected = [json.loads(x) for x in (out / "rejected.jsonl").read_text().splitlines()]
    assert rejected == [{"id": "s2", "reason": "duration"}]
    kv = (out / "stats.kv").read_text().splitlines()
    assert kv[0] == "seed=5" and "count.short_video.Chinese=1" in kv
    assert (out / "stats.txt").read_text().startswith("source\tChinese")
    first = (out / "accepted.jsonl").read_bytes()
    main(["corpus-prep", "--meta", str(meta), "--out", str(out), "--seed", "5"])
    assert (out / "accepted.jsonl").read_bytes() == first


def test_s3_check(tmp_path, capsys):
    assert main(["s3-check", "--frames", "3", "--save", str(tmp_path / "p.bin")]) == 0
    out = capsys.readouterr().out
    assert "tokens=78 per_frame=26" in out
    assert (tmp_path / "p.txt").exists()


def test_exit_codes(tmp_path, capsys):
    assert main(["eval", "--hyp", str(tmp_path / "x.srt"), "--ref", str(tmp_path / "y.srt")]) == 1
    bad = tmp_path / "bad.srt"
    bad.write_text("1\n00:00:01 --> 00:00:02\nx\n")
    assert main(["eval", "--hyp", str(bad), "--ref", str(bad)]) == 1
    inverted = tmp_path / "inv.srt"
    inverted.write_text("1\n00:00:02,000 --> 00:00:01,000\nx\n")
    assert main(["eval", "--hyp", str(inverted), "--ref", str(inverted)]) == 2
    meta = tmp_path / "m.jsonl"
    meta.write_text('{"id": 1}\n')
    assert main(["corpus-prep", "--meta", str(meta), "--out", str(tmp_path / "o")]) == 1
    assert "input error" in capsys.readouterr().err


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "subext", "--help"], capture_output=True, text=True)
    assert done.returncode == 0
    for command in ("extract", "refine", "eval", "corpus-prep"):
        assert command in done.stdout
