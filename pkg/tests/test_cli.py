import json
import re
import socket

import numpy as np
import pytest

from tsagent.backends import API_KEY_ENV
from tsagent.cli import main, read_config
from tsagent.errors import ConfigError
from tsagent.series import TimeSeries, save_series
from tsagent.synth import Injection, SynthSpec, generate_synthetic


@pytest.fixture
def no_network(monkeypatch):
    def refuse(*a, **k):
        raise AssertionError("network access attempted")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)
    monkeypatch.setattr(socket, "getaddrinfo", refuse)


@pytest.fixture
def spike_csv(tmp_path):
    s = generate_synthetic(SynthSpec(200, noise_sigma=1, anomalies=(Injection("point_global", 150, 1, 10),), seed=3, name="spk"))
    path = tmp_path / "spk.csv"
    save_series(s, path)
    return path


def test_detect_heuristic_offline(no_network, spike_csv, tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["detect", "--input", str(spike_csv), "--out", str(out), "--plot", "--workers", "2"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["metrics"]["f1"] > 0
    assert sorted(p.name for p in (out / "traces").iterdir()) == ["spk_0.trace.jsonl", "spk_100.trace.jsonl"]
    for name in ("labels.csv", "verdicts.json", "metrics.json", "metrics.csv", "plot.svg"):
        assert (out / name).is_file()


def test_detect_unlabeled_has_no_metrics(tmp_path, capsys):
    path = tmp_path / "u.csv"
    x = np.zeros(100)
    x[40] = 9
    save_series(TimeSeries("u", x), path)
    assert main(["detect", "--input", str(path), "--out", str(tmp_path / "o")]) == 0
    assert "metrics" not in json.loads(capsys.readouterr().out)
    assert not (tmp_path / "o" / "metrics.json").exists()


def test_detect_outputs_are_idempotent(spike_csv, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["detect", "--input", str(spike_csv), "--out", str(a)])
    main(["detect", "--input", str(spike_csv), "--out", str(b)])
    for name in ("labels.csv", "verdicts.json", "metrics.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()

    def strip_times(p):
        return re.sub(r'"(t_start|t_end|duration)": [0-9.e-]+', "", p.read_text())

    assert strip_times(a / "traces/spk_100.trace.jsonl") == strip_times(b / "traces/spk_100.trace.jsonl")


def test_remote_without_key_fails_before_work(monkeypatch, spike_csv, tmp_path):
    monkeypatch.delenv(API_KEY_ENV, raising=False)
    out = tmp_path / "o"
    rc = main(["detect", "--input", str(spike_csv), "--out", str(out), "--backend", "remote",
               "--endpoint", "http://x", "--model", "m"])
    assert rc == 3 and not out.exists()


def test_replay_backend_fixture_miss_is_backend_failure(spike_csv, tmp_path):
    fx = tmp_path / "empty.jsonl"
    fx.write_text("")
    rc = main(["detect", "--input", str(spike_csv), "--out", str(tmp_path / "o"), "--backend", "replay", "--replay", str(fx)])
    assert rc == 3


def test_usage_errors(tmp_path, spike_csv):
    assert main(["detect"]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["baseline", "--input", str(spike_csv), "--method", "lstm"]) == 1
    assert main(["detect", "--input", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 1


def test_config_file_and_flag_override(tmp_path, spike_csv, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# run settings\ninput = {spike_csv}\nout = {tmp_path / 'from_cfg'}\nplot = true\nmax-refinements = 1\n")
    assert main(["detect", "--config", str(cfg)]) == 0
    assert (tmp_path / "from_cfg" / "plot.svg").exists()
    assert main(["detect", "--config", str(cfg), "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "labels.csv").exists()
    trace = json.loads((tmp_path / "flag" / "traces" / "spk_0.trace.jsonl").read_text().splitlines()[0])
    assert trace["config"]["max_refinements"] == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert main(["detect", "--config", str(bad)]) == 1
    bad.write_text("plot = maybe\ninput = x\n")
    assert main(["detect", "--config", str(bad)]) == 1


def test_read_config_syntax(tmp_path):
    p = tmp_path / "c"
    p.write_text("no equals sign\n")
    with pytest.raises(ConfigError):
        read_config(p)


def test_baseline_commands(spike_csv, tmp_path, capsys):
    for method in ("fft", "sr"):
        assert main(["baseline", "--input", str(spike_csv), "--method", method, "--out", str(tmp_path)]) == 0
        res = json.loads(capsys.readouterr().out)
        assert res["metrics"]["counts"]["tp"] == 1
        assert (tmp_path / f"{method}_scores.csv").exists()
    flat = tmp_path / "flat.csv"
    save_series(TimeSeries("flat", np.full(50, 2.0)), flat)
    assert main(["baseline", "--input", str(flat), "--out", str(tmp_path)]) == 0
    assert json.loads(capsys.readouterr().out)["flagged"] == 0


def test_synth_command(tmp_path):
    spec = {"length": 100, "noise_sigma": 1.0, "seed": 4, "name": "gen",
            "anomalies": [{"kind": "pattern_trend", "position": 20, "span": 30, "magnitude": 5}]}
    (tmp_path / "s.json").write_text(json.dumps(spec))
    assert main(["synth", "--spec", str(tmp_path / "s.json"), "--out", str(tmp_path / "a")]) == 0
    assert main(["synth", "--spec", str(tmp_path / "s.json"), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a/gen.csv").read_bytes() == (tmp_path / "b/gen.csv").read_bytes()
    assert (tmp_path / "a/gen.csv").read_text().splitlines()[0] == "index,value,label"
    spec["anomalies"][0]["position"] = 90
    (tmp_path / "s.json").write_text(json.dumps(spec))
    assert main(["synth", "--spec", str(tmp_path / "s.json"), "--out", str(tmp_path / "c")]) == 1


def test_replay_command(spike_csv, tmp_path, capsys):
    main(["detect", "--input", str(spike_csv), "--out", str(tmp_path / "o")])
    capsys.readouterr()
    trace = tmp_path / "o/traces/spk_100.trace.jsonl"
    assert main(["replay", "--trace", str(trace)]) == 0
    verdicts = json.loads(capsys.readouterr().out)
    assert verdicts == json.loads(trace.read_text().splitlines()[-1])["verdicts"]
    lines = trace.read_text().splitlines()
    lines[2] = lines[2].replace('"digest": "', '"digest": "f')
    trace.write_text("\n".join(lines) + "\n")
    assert main(["replay", "--trace", str(trace)]) != 0
    assert main(["replay", "--trace", str(tmp_path / "nope.jsonl")]) == 1


def test_score_reward_command(spike_csv, tmp_path, capsys):
    main(["detect", "--input", str(spike_csv), "--out", str(tmp_path / "o")])
    capsys.readouterr()
    trace = tmp_path / "o/traces/spk_100.trace.jsonl"
    assert main(["score-reward", "--trace", str(trace), "--truth", str(spike_csv)]) == 0
    full = json.loads(capsys.readouterr().out)
    assert full["total"] == pytest.approx(1.5)
    assert json.loads((tmp_path / "o/traces/spk_100.trace.jsonl.reward.json").read_text())["total"] == full["total"]
    short = tmp_path / "short.csv"
    save_series(TimeSeries("s", np.zeros(50), np.zeros(50, dtype=int)), short)
    assert main(["score-reward", "--trace", str(trace), "--truth", str(short)]) == 1


def test_score_reward_no_fp_raises_total(tmp_path, spike_csv, capsys):
    main(["detect", "--input", str(spike_csv), "--out", str(tmp_path / "o")])
    trace = tmp_path / "o/traces/spk_100.trace.jsonl"
    rows = trace.read_text().splitlines()
    final = json.loads(rows[-1])
    final["verdicts"].append({"interval": [100, 130], "type": "pattern_trend", "explanation": "e", "confidence": 1})
    rows[-1] = json.dumps(final)
    trace.write_text("\n".join(rows) + "\n")
    capsys.readouterr()
    main(["score-reward", "--trace", str(trace), "--truth", str(spike_csv)])
    on = json.loads(capsys.readouterr().out)["total"]
    main(["score-reward", "--trace", str(trace), "--truth", str(spike_csv), "--no-fp"])
    off = json.loads(capsys.readouterr().out)["total"]
    assert off > on


def test_plot_command(spike_csv, tmp_path):
    verdicts = tmp_path / "v.json"
    verdicts.write_text(json.dumps([{"interval": [148, 152], "type": "point_global", "explanation": "e", "confidence": 2}]))
    assert main(["plot", "--input", str(spike_csv), "--verdicts", str(verdicts), "--width", "640", "--height", "200",
                 "--out", str(tmp_path), "--name", "p.svg"]) == 0
    svg = (tmp_path / "p.svg").read_text()
    assert '<svg xmlns="http://www.w3.org/2000/svg" width="640" height="200"' in svg
    assert svg.count('class="truth"') == 1 and svg.count('class="verdict"') == 1 and "<polyline" in svg
    assert main(["plot", "--input", str(spike_csv), "--out", str(tmp_path), "--name", "q.svg"]) == 0
    assert 'class="verdict"' not in (tmp_path / "q.svg").read_text()
