"""Labeled synthetic series with injected anomalies of the five TODS kinds."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import SpanOutOfBounds
from .series import TimeSeries


class AnomalyKind(str, Enum):
    POINT_GLOBAL = "point_global"
    PATTERN_CONTEXTUAL = "pattern_contextual"
    PATTERN_SHAPELET = "pattern_shapelet"
    PATTERN_SEASONAL = "pattern_seasonal"
    PATTERN_TREND = "pattern_trend"


BASES = ("constant", "linear", "sinusoid")


@dataclass(frozen=True)
class Injection:
    kind: AnomalyKind
    position: int
    span: int = 1
    magnitude: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "kind", AnomalyKind(self.kind))


@dataclass(frozen=True)
class SynthSpec:
    length: int
    base: str = "constant"
    noise_sigma: float = 0.0
    anomalies: tuple[Injection, ...] = ()
    seed: int = 0
    # base shape parameters
    amplitude: float = 1.0
    period: int = 20
    slope: float = 0.01
    name: str = "synthetic"

    def __post_init__(self):
        if self.base not in BASES:
            raise ValueError(f"base must be one of {BASES}, got {self.base!r}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.length < 1:
            raise ValueError("length must be >= 1")
        anomalies = tuple(a if isinstance(a, Injection) else Injection(**a) for a in self.anomalies)
        object.__setattr__(self, "anomalies", anomalies)
        for a in anomalies:
            if a.span < 1 or a.position < 0 or a.position + a.span > self.length:
                raise SpanOutOfBounds(
                    f"{a.kind.value} at {a.position} span {a.span} outside [0, {self.length})"
                )

    @classmethod
    def from_json(cls, path) -> "SynthSpec":
        return cls(**json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["anomalies"] = [dict(asdict(a), kind=a.kind.value) for a in self.anomalies]
        return d


def base_signal(spec: SynthSpec, t: np.ndarray) -> np.ndarray:
    if spec.base == "constant":
        return np.zeros_like(t, dtype=float)
    if spec.base == "linear":
        return spec.slope * t
    return spec.amplitude * np.sin(2 * np.pi * t / spec.period)


def _scale(spec: SynthSpec) -> float:
    # magnitudes are in units of noise_sigma; noiseless series use raw units
    return spec.noise_sigma if spec.noise_sigma > 0 else 1.0


def _inject(spec: SynthSpec, values: np.ndarray, a: Injection) -> None:
    lo, hi = a.position, a.position + a.span
    size = a.magnitude * _scale(spec)
    t = np.arange(lo, hi, dtype=float)
    u = np.arange(a.span, dtype=float)
    if a.kind is AnomalyKind.POINT_GLOBAL:
        values[lo:hi] += size
    elif a.kind is AnomalyKind.PATTERN_CONTEXTUAL:
        # plateau: plausible level globally, abnormal against its neighbours
        values[lo:hi] += size
    elif a.kind is AnomalyKind.PATTERN_SHAPELET:
        # replace the base with a triangle motif
        tri = 1.0 - np.abs(2.0 * (u + 0.5) / a.span - 1.0)
        base = base_signal(spec, t)
        values[lo:hi] += base.mean() - base + size * tri
    elif a.kind is AnomalyKind.PATTERN_SEASONAL:
        if spec.base == "sinusoid":
            fast = spec.amplitude * np.sin(2 * np.pi * t * max(a.magnitude, 1.5) / spec.period)
            values[lo:hi] += fast - base_signal(spec, t)
        else:
            values[lo:hi] += size * np.sin(2 * np.pi * (u + 0.25) / 4)
    elif a.kind is AnomalyKind.PATTERN_TREND:
        values[lo:hi] += size * (u + 1) / a.span


def generate_synthetic(spec: SynthSpec) -> TimeSeries:
    """Render ``spec`` into a labeled series; labels mark exactly the injected spans."""
    rng = np.random.default_rng(spec.seed)
    t = np.arange(spec.length, dtype=float)
    values = base_signal(spec, t)
    if spec.noise_sigma > 0:
        values = values + rng.normal(0.0, spec.noise_sigma, spec.length)
    labels = np.zeros(spec.length, dtype=np.int8)
    for a in spec.anomalies:
        _inject(spec, values, a)
        labels[a.position : a.position + a.span] = 1
    return TimeSeries(spec.name, values, labels)


def point_global_suite(n_seeds: int = 20, length: int = 100, magnitude: float = 10.0, base_seed: int = 0):
    """Constant-plus-unit-noise series with one spike each, positions drawn per seed."""
    out = []
    for s in range(n_seeds):
        rng = np.random.default_rng(10_000 + base_seed + s)
        pos = int(rng.integers(5, length - 5))
        spec = SynthSpec(
            length=length,
            base="constant",
            noise_sigma=1.0,
            anomalies=(Injection(AnomalyKind.POINT_GLOBAL, pos, 1, magnitude),),
            seed=base_seed + s,
            name=f"spike_{s:03d}",
        )
        out.append((spec, generate_synthetic(spec)))
    return out
