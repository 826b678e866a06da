"""Ground truth and scan generation for the constant-velocity clutter scenario.

Randomness comes from numpy's Philox counter-based generator. Every
(run, step) pair gets its own stream: the key is ``base_seed ^ run`` and
the step index sits in the third counter word, so the draws of one step
never shift those of another. Within a step the draw order is fixed:

1. detection coin (1 uniform)
2. detection noise (2 uniforms, always drawn, mapped through the normal
   inverse CDF)
3. clutter count (1 uniform, mapped through the Poisson inverse CDF)
4. clutter positions (2 uniforms per point)
5. one 63-bit integer that keys the shuffle of the returned points
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import special, stats

MASK64 = (1 << 64) - 1
STEP_COUNTER_WORD = 2


def cv_matrices(dt: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Constant-velocity transition F, acceleration input G and position output H."""
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    G = np.array([[dt**2 / 2, 0.0], [0.0, dt**2 / 2], [dt, 0.0], [0.0, dt]])
    H = np.hstack([np.eye(2), np.zeros((2, 2))])
    return F, G, H


@dataclass(frozen=True)
class Segment:
    first: int
    last: int
    accel: tuple[float, float]


def _as_segment(s) -> Segment:
    if isinstance(s, Segment):
        return s
    if isinstance(s, dict):
        return Segment(int(s["first"]), int(s["last"]), tuple(float(a) for a in s["accel"]))
    return Segment(int(s[0]), int(s[1]), tuple(float(a) for a in s[2]))


@dataclass(frozen=True)
class ScenarioConfig:
    K: int = 100
    x0: tuple[float, ...] = (0.0, 0.0, 10.0, -10.0)
    segments: tuple[Segment, ...] = (
        Segment(1, 50, (0.2, 0.6)),
        Segment(51, 75, (0.0, -2.0)),
        Segment(76, 100, (-3.0, 1.0)),
    )
    dt: float = 1.0
    meas_var: float = 60.0
    p_detect: float = 0.9
    clutter_rate: float = 150.0
    # x_min, x_max, y_min, y_max (m)
    fov: tuple[float, float, float, float] = (-10.0, 1330.0, -330.0, 370.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        object.__setattr__(self, "fov", tuple(float(v) for v in self.fov))
        object.__setattr__(self, "segments", tuple(_as_segment(s) for s in self.segments))
        self.validate()

    def validate(self) -> None:
        if self.K < 1:
            raise ValueError(f"K must be positive, got {self.K}")
        if len(self.x0) != 4:
            raise ValueError("x0 must have 4 entries (px, py, vx, vy)")
        x_min, x_max, y_min, y_max = self.fov
        if not (x_max > x_min and y_max > y_min):
            raise ValueError(f"field of view {self.fov} has no area")
        if self.clutter_rate < 0:
            raise ValueError("clutter rate must be nonnegative")
        if not 0.0 <= self.p_detect <= 1.0:
            raise ValueError("detection probability must lie in [0, 1]")
        if self.meas_var <= 0:
            raise ValueError("measurement variance must be positive")
        expected = 1
        for s in sorted(self.segments, key=lambda s: s.first):
            if s.first != expected or s.last < s.first:
                raise ValueError(f"segments must partition [1, {self.K}] without gaps or overlap")
            if len(s.accel) != 2:
                raise ValueError("segment acceleration must be 2D")
            expected = s.last + 1
        if expected != self.K + 1:
            raise ValueError(f"segments must partition [1, {self.K}] without gaps or overlap")

    @property
    def fov_area(self) -> float:
        x_min, x_max, y_min, y_max = self.fov
        return (x_max - x_min) * (y_max - y_min)

    @property
    def clutter_density(self) -> float:
        return self.clutter_rate / self.fov_area

    def replace(self, **changes) -> "ScenarioConfig":
        data = asdict(self)
        data.update(changes)
        return ScenarioConfig(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["segments"] = [[s.first, s.last, list(s.accel)] for s in self.segments]
        d["x0"] = list(self.x0)
        d["fov"] = list(self.fov)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**data)


def load_scenario(path) -> ScenarioConfig:
    with open(path) as fh:
        return ScenarioConfig.from_dict(json.load(fh))


def default_scenario_path() -> Path:
    return Path(str(resources.files("mixtrack") / "data" / "default_scenario.json"))


def save_scenario(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


def generate_truth(cfg: ScenarioConfig) -> np.ndarray:
    """Deterministic piecewise-constant-acceleration trajectory, shape (K+1, 4)."""
    F, G, _ = cv_matrices(cfg.dt)
    accel = np.zeros((cfg.K + 1, 2))
    for s in cfg.segments:
        accel[s.first : s.last + 1] = s.accel
    states = np.empty((cfg.K + 1, 4))
    states[0] = cfg.x0
    for k in range(1, cfg.K + 1):
        states[k] = F @ states[k - 1] + G @ accel[k]
    return states


@dataclass(frozen=True, eq=False)
class Scan:
    measurements: np.ndarray  # (m, 2)
    truth: Optional[np.ndarray] = None  # offline metrics only
    detected: bool = False  # offline metrics only

    def __len__(self):
        return self.measurements.shape[0]


def scan_stream(base_seed: int, run: int, step: int) -> np.random.Generator:
    key = (int(base_seed) ^ int(run)) & MASK64
    counter = np.zeros(4, dtype=np.uint64)
    counter[STEP_COUNTER_WORD] = step
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def _open_uniform(rng: np.random.Generator, size) -> np.ndarray:
    # 53-bit grid shifted by half a step: strictly inside (0, 1)
    return (rng.integers(0, 1 << 53, size=size, dtype=np.int64) + 0.5) / float(1 << 53)


def generate_scan(truth_k: np.ndarray, cfg: ScenarioConfig, rng: np.random.Generator) -> Scan:
    coin = _open_uniform(rng, 1)[0]
    noise = special.ndtri(_open_uniform(rng, 2)) * np.sqrt(cfg.meas_var)
    u_count = _open_uniform(rng, 1)[0]
    n_fa = int(stats.poisson.ppf(u_count, cfg.clutter_rate)) if cfg.clutter_rate > 0 else 0
    x_min, x_max, y_min, y_max = cfg.fov
    u = rng.random((n_fa, 2))
    clutter = np.column_stack([x_min + (x_max - x_min) * u[:, 0], y_min + (y_max - y_min) * u[:, 1]])
    detected = coin < cfg.p_detect
    points = clutter
    if detected:
        points = np.vstack([np.asarray(truth_k[:2]) + noise, clutter])
    shuffle_key = int(rng.integers(0, 1 << 63))
    order = np.random.Generator(np.random.Philox(key=shuffle_key)).permutation(points.shape[0])
    return Scan(points[order], np.array(truth_k, dtype=float), bool(detected))


def generate_scans(truth: np.ndarray, cfg: ScenarioConfig, run: int = 0, base_seed: Optional[int] = None) -> list[Scan]:
    """Scans for steps 1..K of one Monte Carlo run."""
    seed = cfg.seed if base_seed is None else base_seed
    return [generate_scan(truth[k], cfg, scan_stream(seed, run, k)) for k in range(1, cfg.K + 1)]
