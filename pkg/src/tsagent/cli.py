"""Command line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 some episode failed
(partial outputs are still written), 3 backend unavailable or failing.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import baselines
from .backends import BackendConfig, make_backend
from .errors import BackendError, ConfigError, EpisodeError, TraceCorrupt, TSAgentError
from .metrics import best_f1, point_metrics, to_csv, with_best
from .plot import render_svg
from .protocol import AnomalyVerdict
from .reward import RewardConfig, score_episode, write_report
from .series import load_series, preprocess, save_series
from .synth import SynthSpec, generate_synthetic
from .workflow import EpisodeTrace, WorkflowConfig, replay_episode, run_dataset

log = logging.getLogger("tsagent")

OK, USAGE, PARTIAL, BACKEND = 0, 1, 2, 3
TRUE = {"1", "true", "yes", "on"}
FALSE = {"0", "false", "no", "off"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def read_config(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; keys may use dashes or underscores."""
    out = {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} not found")
    for n, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{p}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _apply_config(sub: argparse.ArgumentParser, cfg: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in cfg.items():
        act = actions.get(key)
        if act is None or key in ("help", "config"):
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(act, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            low = raw.lower()
            if low not in TRUE | FALSE:
                raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
            defaults[key] = low in TRUE
        else:
            defaults[key] = raw  # argparse converts string defaults with the action's type
    sub.set_defaults(**defaults)


def _has_label_column(path) -> bool:
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().strip().lower().split(",")
    return len(head) == 3 and head[2].strip() == "label"


def _load(path):
    return load_series(path, has_labels=_has_label_column(path))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_labels(path: Path, labels) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "label"])
        w.writerows((i, int(v)) for i, v in enumerate(labels))


# -- commands ----------------------------------------------------------------


def _backend_config(args) -> BackendConfig:
    return BackendConfig(
        kind=args.backend,
        endpoint=args.endpoint,
        model=args.model,
        temperature=args.temperature,
        timeout=args.timeout,
        replay_path=args.replay,
    )


def cmd_detect(args) -> int:
    series = _load(args.input)
    bcfg = _backend_config(args)
    roles = ("locator", "actor", "detector", "evaluator") + (("localizer",) if args.localization == "backend" else ())
    shared = make_backend(bcfg)  # fails fast on a missing key or fixture, before any work
    try:
        config = WorkflowConfig(
            max_refinements=args.max_refinements,
            tool_budget=args.tool_budget,
            backends={r: shared for r in roles},
            localization=args.localization,
            max_candidates=args.max_candidates,
            window_length=args.window_length,
            window_step=args.window_step,
            detrend=not args.no_detrend,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    run = run_dataset(series, config, workers=args.workers)

    out = _out_dir(args)
    traces = out / "traces"
    traces.mkdir(exist_ok=True)
    for tr in run.traces:
        tr.write(traces)
    _write_labels(out / "labels.csv", run.labels)
    (out / "verdicts.json").write_text(json.dumps([v.to_dict() for v in run.verdicts], indent=2) + "\n", encoding="utf-8")
    summary = {"series": series.name, "windows": len(run.traces), "verdicts": len(run.verdicts),
               "failures": [{"window_start": s, "error": f"{type(e).__name__}: {e}"} for s, e in run.failures]}
    if series.labels is not None:
        rep = with_best(point_metrics(run.labels, series.labels), best_f1("confidence", run.verdicts, series.labels))
        (out / "metrics.json").write_text(rep.to_json() + "\n", encoding="utf-8")
        (out / "metrics.csv").write_text(to_csv({series.name: rep}), encoding="utf-8")
        summary["metrics"] = rep.to_dict()
    if args.plot:
        (out / "plot.svg").write_text(render_svg(series.values, series.labels, run.verdicts, title=series.name), encoding="utf-8")
    print(json.dumps(summary, indent=2))
    if run.failures:
        if any(isinstance(e.__cause__, BackendError) for _, e in run.failures):
            return BACKEND
        return PARTIAL
    return OK


def cmd_baseline(args) -> int:
    series = _load(args.input)
    prepared = preprocess(series, detrend_first=not args.no_detrend)
    if args.method == "fft":
        scores = baselines.fft_ad_score(prepared, keep_fraction=args.keep_fraction)
    else:
        scores = baselines.spectral_residual_score(prepared, avg_window=args.avg_window)
    labels = baselines.threshold_mu_3sigma(scores.scores, k=args.k)
    out = _out_dir(args)
    with (out / f"{args.method}_scores.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "score", "label"])
        w.writerows((i, repr(float(s)), int(lab)) for i, (s, lab) in enumerate(zip(scores.scores, labels)))
    summary = {"series": series.name, "method": args.method, "flagged": int(np.count_nonzero(labels))}
    if series.labels is not None:
        rep = with_best(point_metrics(labels, series.labels), best_f1("score", scores, series.labels))
        (out / f"{args.method}_metrics.json").write_text(rep.to_json() + "\n", encoding="utf-8")
        summary["metrics"] = rep.to_dict()
    print(json.dumps(summary, indent=2))
    return OK


def cmd_synth(args) -> int:
    try:
        spec = SynthSpec.from_json(args.spec)
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise ConfigError(f"bad synth spec: {exc}") from None
    series = generate_synthetic(spec)
    out = _out_dir(args)
    path = out / f"{spec.name}.csv"
    save_series(series, path)
    print(path)
    return OK


def cmd_replay(args) -> int:
    path = Path(args.trace)
    if not path.is_file():
        raise ConfigError(f"trace {path} not found")
    trace = EpisodeTrace.read(path)
    verdicts = replay_episode(trace)
    got = [v.to_dict() for v in verdicts]
    print(json.dumps(got, indent=2))
    if got != (trace.final_verdicts or []):
        print("replayed verdicts differ from the recorded ones", file=sys.stderr)
        return PARTIAL
    return OK


def cmd_score_reward(args) -> int:
    trace = EpisodeTrace.read(args.trace)
    truth = load_series(args.truth, has_labels=True).labels
    cfg = RewardConfig(args.w_ts, args.w_rm, args.w_fp, not args.no_ts, not args.no_rm, not args.no_fp)
    br = score_episode(trace, truth, cfg)
    path = write_report(br, args.trace)
    print(json.dumps(br.to_dict(), indent=2))
    log.info("wrote %s", path)
    return OK


def cmd_plot(args) -> int:
    series = _load(args.input)
    verdicts = []
    if args.verdicts:
        verdicts = [AnomalyVerdict.from_dict(d) for d in json.loads(Path(args.verdicts).read_text(encoding="utf-8"))]
    svg = render_svg(series.values, series.labels, verdicts, width=args.width, height=args.height, title=series.name)
    out = _out_dir(args)
    path = out / (args.name or f"{series.name}.svg")
    path.write_text(svg, encoding="utf-8")
    print(path)
    return OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tsagent", description="Tool-augmented time-series anomaly detection.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="key = value file; command-line flags override it")
        sp.add_argument("--out", default="out", help="output directory")

    d = sub.add_parser("detect", help="run the agent workflow over a series")
    common(d)
    d.add_argument("--input")
    d.add_argument("--backend", choices=("heuristic", "remote", "replay"), default="heuristic")
    d.add_argument("--endpoint")
    d.add_argument("--model")
    d.add_argument("--temperature", type=float, default=0.7)
    d.add_argument("--timeout", type=float, default=60.0)
    d.add_argument("--replay", help="JSONL fixture of {digest, reply}")
    d.add_argument("--localization", choices=("proxy", "backend"), default="proxy")
    d.add_argument("--max-refinements", type=int, default=2)
    d.add_argument("--tool-budget", type=int, default=12)
    d.add_argument("--max-candidates", type=int, default=3)
    d.add_argument("--window-length", type=int, default=100)
    d.add_argument("--window-step", type=int, default=100)
    d.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    d.add_argument("--no-detrend", action="store_true")
    d.add_argument("--plot", action="store_true")
    d.set_defaults(func=cmd_detect)

    b = sub.add_parser("baseline", help="score a series with FFT-AD or spectral residual")
    common(b)
    b.add_argument("--input")
    b.add_argument("--method", choices=sorted(baselines.METHODS), default="fft")
    b.add_argument("--keep-fraction", type=float, default=0.1)
    b.add_argument("--avg-window", type=int, default=3)
    b.add_argument("--k", type=float, default=3.0)
    b.add_argument("--no-detrend", action="store_true")
    b.set_defaults(func=cmd_baseline)

    s = sub.add_parser("synth", help="generate a labeled synthetic series from a JSON spec")
    common(s)
    s.add_argument("--spec")
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("replay", help="re-run a trace from its recorded replies")
    common(r)
    r.add_argument("--trace")
    r.set_defaults(func=cmd_replay)

    w = sub.add_parser("score-reward", help="score a trace against labels")
    common(w)
    w.add_argument("--trace")
    w.add_argument("--truth", help="CSV with a label column")
    w.add_argument("--w-ts", type=float, default=1.0)
    w.add_argument("--w-rm", type=float, default=0.5)
    w.add_argument("--w-fp", type=float, default=1.0)
    w.add_argument("--no-ts", action="store_true")
    w.add_argument("--no-rm", action="store_true")
    w.add_argument("--no-fp", action="store_true")
    w.set_defaults(func=cmd_score_reward)

    pl = sub.add_parser("plot", help="write an SVG of a series with labels and verdicts")
    common(pl)
    pl.add_argument("--input")
    pl.add_argument("--verdicts", help="JSON list of verdicts, as written by detect")
    pl.add_argument("--width", type=int, default=800)
    pl.add_argument("--height", type=int, default=240)
    pl.add_argument("--name", help="file name inside --out (default <series>.svg)")
    pl.set_defaults(func=cmd_plot)
    return p


REQUIRED = {
    "detect": ("input",),
    "baseline": ("input",),
    "synth": ("spec",),
    "replay": ("trace",),
    "score-reward": ("trace", "truth"),
    "plot": ("input",),
}


def _flag_value(argv: list[str], flag: str) -> Optional[str]:
    for i, a in enumerate(argv):
        if a == flag and i + 1 < len(argv):
            return argv[i + 1]
        if a.startswith(flag + "="):
            return a.split("=", 1)[1]
    return None


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    choices = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in choices), None)
    cfg_path = _flag_value(argv, "--config")
    if command and cfg_path:
        _apply_config(choices[command], read_config(cfg_path))
    args = parser.parse_args(argv)
    missing = [n for n in REQUIRED[args.command] if getattr(args, n) is None]
    if missing:
        raise ConfigError(f"{args.command}: missing " + ", ".join("--" + n.replace("_", "-") for n in missing))
    return args


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except BackendError as exc:
        print(f"backend error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return BACKEND
    except TraceCorrupt as exc:
        print(f"corrupt trace: {exc}", file=sys.stderr)
        return PARTIAL
    except EpisodeError as exc:
        print(f"episode failed: {exc}", file=sys.stderr)
        return PARTIAL
    except (ConfigError, TSAgentError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
