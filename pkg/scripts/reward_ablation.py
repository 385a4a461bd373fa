"""Reward under each component toggled off, averaged over heuristic episodes on synthetic windows.

    python3 scripts/reward_ablation.py --episodes 50
"""

import argparse
import json

import numpy as np

from tsagent.reward import RewardConfig, score_episode
from tsagent.series import Window
from tsagent.synth import AnomalyKind, Injection, SynthSpec, generate_synthetic
from tsagent.workflow import run_episode

SETTINGS = {
    "full": RewardConfig(),
    "no_two_sided": RewardConfig(use_ts=False),
    "no_rule_matching": RewardConfig(use_rm=False),
    "no_fp_penalty": RewardConfig(use_fp=False),
}


def episodes(n, seed):
    rng = np.random.default_rng(seed)
    kinds = list(AnomalyKind)
    for i in range(n):
        kind = kinds[i % len(kinds)]
        span = 1 if kind is AnomalyKind.POINT_GLOBAL else int(rng.integers(5, 15))
        pos = int(rng.integers(5, 100 - span - 5))
        s = generate_synthetic(SynthSpec(100, "constant", 0.5, (Injection(kind, pos, span, 8.0),), seed=seed + i))
        x = s.values
        x = (x - x.min()) / np.ptp(x)
        _, trace = run_episode(Window.of(x, start=0, parent=f"ep{i}"))
        yield kind.value, trace, s.labels


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    totals = {k: [] for k in SETTINGS}
    by_kind: dict[str, list[float]] = {}
    for kind, trace, truth in episodes(args.episodes, args.seed):
        for name, cfg in SETTINGS.items():
            b = score_episode(trace, truth, cfg)
            totals[name].append(b.total)
            if name == "full":
                by_kind.setdefault(kind, []).append(b.total)
    print(json.dumps({
        "mean_total": {k: round(float(np.mean(v)), 4) for k, v in totals.items()},
        "full_by_kind": {k: round(float(np.mean(v)), 4) for k, v in by_kind.items()},
    }, indent=2))


if __name__ == "__main__":
    main()
