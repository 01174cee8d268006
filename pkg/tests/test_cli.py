import json

import pytest

from codecstream.cli import main
from codecstream.trace import read_trace, write_trace


@pytest.fixture
def trace_file(tmp_path, small_trace):
    path = tmp_path / "clip.jsonl"
    write_trace(small_trace, path)
    return path


def _tok_args(trace, out, *extra):
    return ["tokenize", str(trace), "-o", str(out), "--target-groups", "4", "--canvas-blocks", "16",
            "--p-canvases-total", "8", *extra]


def test_tokenize_deterministic(tmp_path, trace_file):
    assert main(_tok_args(trace_file, tmp_path / "a", "--dense-mask")) == 0
    assert main(_tok_args(trace_file, tmp_path / "b", "--dense-mask")) == 0
    for name in ("clip.tokens.jsonl", "clip.canvases.jsonl", "clip.mask.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = json.loads((tmp_path / "a" / "clip.tokens.jsonl").read_text().splitlines()[0])
    assert header["config"]["target_groups"] == 4 and header["config"]["trace"] == "clip.jsonl"
    assert header["config"]["seed"] == 0


def test_tokenize_jobs_same_output(tmp_path, trace_file, small_trace):
    other = tmp_path / "other.jsonl"
    write_trace(small_trace, other)
    common = ["--target-groups", "4", "--canvas-blocks", "16", "--seed", "5"]
    assert main(["tokenize", str(trace_file), str(other), "-o", str(tmp_path / "s"), *common]) == 0
    assert main(["tokenize", str(trace_file), str(other), "-o", str(tmp_path / "p"), "--jobs", "2", *common]) == 0
    for name in ("clip.tokens.jsonl", "other.tokens.jsonl"):
        assert (tmp_path / "s" / name).read_bytes() == (tmp_path / "p" / name).read_bytes()


def test_config_reload_from_header(tmp_path, trace_file):
    assert main(_tok_args(trace_file, tmp_path / "a", "--lam", "2.5")) == 0
    header = tmp_path / "a" / "clip.tokens.jsonl"
    assert main(["tokenize", str(trace_file), "-o", str(tmp_path / "b"), "--config", str(header)]) == 0
    assert header.read_bytes() == (tmp_path / "b" / "clip.tokens.jsonl").read_bytes()


def test_yaml_config_and_override(tmp_path, trace_file):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("target_groups: 4\ncanvas_blocks: 16\np_canvases_total: 8\nlam: 9.0\n")
    assert main(["tokenize", str(trace_file), "-o", str(tmp_path), "--config", str(cfg), "--lam", "0.5"]) == 0
    header = json.loads((tmp_path / "clip.tokens.jsonl").read_text().splitlines()[0])
    assert header["config"]["lam"] == 0.5 and header["config"]["canvas_blocks"] == 16


def test_bad_config(tmp_path, trace_file):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"nonsense": 1}')
    assert main(["tokenize", str(trace_file), "-o", str(tmp_path), "--config", str(cfg)]) == 3
    assert main(_tok_args(trace_file, tmp_path, "--lam", "-1")) == 3
    assert main(_tok_args(trace_file, tmp_path, "--lam", "abc")) == 3
    assert main(["tokenize", str(trace_file), "-o", str(tmp_path), "--target-groups", "8",
                 "--bin-duration-s", "0.1", "--min-span-s", "0.1", "--p-canvases-total", "1"]) == 3


def test_malformed_trace(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"version": 1, "fps": 30}\n')
    assert main(["tokenize", str(bad), "-o", str(tmp_path)]) == 2
    assert main(["tokenize", str(tmp_path / "missing.jsonl"), "-o", str(tmp_path)]) == 2


def test_plot(tmp_path, trace_file):
    assert main(["plot", str(trace_file), "-o", str(tmp_path), "--target-groups", "4"]) == 0
    data = json.loads((tmp_path / "clip.plot.json").read_text())
    assert data["n_groups"] == len(data["boundaries"]) == len(data["groups"])
    assert (tmp_path / "clip.plot.png").stat().st_size > 0


def test_budget(capsys):
    assert main(["budget", "--frames", "1", "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["tokens_per_frame"] == 196
    assert main(["budget", "--frames", "64"]) == 0
    assert "12544 tokens" in capsys.readouterr().out
    assert main(["budget", "--frames", "1", "--height", "0"]) == 3


def test_eval(tmp_path, capsys):
    gt = tmp_path / "gt.jsonl"
    gt.write_text('{"video_id": "a", "starts": [1.0, 2.0]}\n{"video_id": "b", "starts": [0.5]}\n')
    report = tmp_path / "rep.jsonl"
    assert main(["eval", str(gt), str(gt), "--report", str(report)]) == 0
    rows = [json.loads(x) for x in report.read_text().splitlines()]
    assert rows[-1]["mAP"] == 1.0
    pred = tmp_path / "pred.jsonl"
    pred.write_text('{"video_id": "a", "text": "1.05s, 2.0s"}\n')
    assert main(["eval", str(gt), str(pred), "--report", str(report), "--delta", "0.1"]) == 0
    rows = [json.loads(x) for x in report.read_text().splitlines()]
    assert rows[-1]["mAP"] == 0.5 and rows[-1]["deltas"] == [0.1]
    assert rows[1]["missing"] is True
    assert main(["eval", str(gt)]) == 0
    assert "0.0000" in capsys.readouterr().out
    gt.write_text("not json\n")
    assert main(["eval", str(gt)]) == 2


def test_inspect(tmp_path, trace_file):
    assert main(["inspect", str(trace_file), "--frame", "3", "-o", str(tmp_path)]) == 0
    assert (tmp_path / "clip.f3.saliency.png").exists() and (tmp_path / "clip.f3.blocks.png").exists()
    assert main(["inspect", str(trace_file), "--frame", "0", "-o", str(tmp_path)]) == 3
    assert main(["inspect", str(trace_file), "--frame", "999", "-o", str(tmp_path)]) == 3


def test_synth(tmp_path):
    out = tmp_path / "syn.jsonl"
    assert main(["synth", str(out), "--segments", "1:2:500,1:0:100", "--fps", "10"]) == 0
    tr = read_trace(out)
    assert len(tr) == 20 and tr.frames[10].packet.frame_type == "I"
    assert main(["synth", str(out), "--segments", "1:2"]) == 3


def test_usage_error_exit_code():
    assert main(["tokenize"]) == 3
    assert main(["nonexistent-command"]) == 3
    assert main(["--version"]) == 0
