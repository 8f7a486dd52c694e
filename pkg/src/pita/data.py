"""Trajectory ingestion, preprocessing and a synthetic KBM dataset.

The CSV schema follows the rounD ``tracks`` files: one row per sample with
columns ``trackId``, ``frame``, ``xCenter``, ``yCenter`` (meters).  Extra
columns are ignored.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from pita.dynamics import rk4_rollout
from pita.errors import ConfigError, ContractError, SchemaError

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("trackId", "frame", "xCenter", "yCenter")
SAMPLE_RATE_HZ = 25.0
MIN_HEADING_DISPLACEMENT = 0.05  # m


@dataclass
class RawTrack:
    track_id: int
    frames: np.ndarray
    positions: np.ndarray  # (N, 2)
    sample_rate: float = SAMPLE_RATE_HZ

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate


@dataclass
class Trajectory:
    positions: np.ndarray  # (T, 2)
    dt: float
    source: str = ""
    # Exact generating states/controls, expressed in the same frame as ``positions``.
    states: np.ndarray | None = field(default=None, repr=False)
    controls: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class Rejected:
    reason: str
    source: str = ""


def ingest_csv(path, sample_rate: float = SAMPLE_RATE_HZ) -> list[RawTrack]:
    """Read tracks from a rounD-style CSV, one :class:`RawTrack` per trackId.

    Tracks whose frame indices are not contiguous are dropped (a warning
    reports how many).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise SchemaError(f"{path}: file has no header row") from None
    for col in REQUIRED_COLUMNS:
        if col not in df.columns:
            raise SchemaError(f"{path}: missing required column {col!r}")
    tracks = []
    dropped = 0
    for track_id, group in df.groupby("trackId", sort=True):
        group = group.sort_values("frame", kind="stable")
        frames = group["frame"].to_numpy(dtype=np.int64)
        if len(frames) > 1 and not np.all(np.diff(frames) == 1):
            dropped += 1
            continue
        xy = group[["xCenter", "yCenter"]].to_numpy(dtype=np.float64)
        tracks.append(RawTrack(int(track_id), frames, xy, sample_rate))
    if dropped:
        log.warning("%s: dropped %d track(s) with frame gaps", path, dropped)
    return tracks


def heading_angle(positions: np.ndarray) -> float | None:
    """Direction of the first displacement from the start exceeding 5 cm."""
    disp = positions - positions[0]
    dist = np.hypot(disp[:, 0], disp[:, 1])
    moved = np.nonzero(dist > MIN_HEADING_DISPLACEMENT)[0]
    if len(moved) == 0:
        return None
    dx, dy = disp[moved[0]]
    return float(np.arctan2(dy, dx))


def _rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def normalize_pose(positions: np.ndarray) -> tuple[np.ndarray, np.ndarray, float] | None:
    """Translate to the origin and rotate the initial heading onto +x.

    Returns ``(positions, origin, angle)`` or None for a track that never
    moves far enough to define a heading.
    """
    angle = heading_angle(positions)
    if angle is None:
        return None
    origin = positions[0].copy()
    rotated = (positions - origin) @ _rotation(-angle).T
    rotated[0] = 0.0
    return rotated, origin, angle


def preprocess(track: RawTrack, T: int = 350) -> Trajectory | Rejected:
    """Cut to the first T samples and normalize the pose."""
    source = f"track-{track.track_id}"
    if len(track.positions) < T:
        return Rejected(f"too short: {len(track.positions)} < {T} samples", source)
    result = normalize_pose(np.asarray(track.positions[:T], dtype=np.float64))
    if result is None:
        return Rejected("standstill: never moves more than 0.05 m", source)
    return Trajectory(result[0], track.dt, source)


def preprocess_all(tracks, T: int) -> tuple[list[Trajectory], list[Rejected]]:
    kept, rejected = [], []
    for track in tracks:
        out = preprocess(track, T)
        (kept if isinstance(out, Trajectory) else rejected).append(out)
    return kept, rejected


@dataclass(frozen=True)
class SyntheticSpec:
    """Random roundabout-like drives: a smooth curvature and acceleration
    profile (piecewise linear between ``waypoints`` knots) integrated with
    the KBM, plus optional Gaussian position noise."""

    count: int = 500
    steps: int = 50
    dt: float = 0.04
    speed_range: tuple[float, float] = (3.0, 8.0)
    curvature_range: tuple[float, float] = (-0.07, 0.07)
    accel_range: tuple[float, float] = (-1.5, 1.5)
    waypoints: int = 4
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "speed_range", tuple(float(v) for v in self.speed_range))
        object.__setattr__(self, "curvature_range", tuple(float(v) for v in self.curvature_range))
        object.__setattr__(self, "accel_range", tuple(float(v) for v in self.accel_range))
        for name in ("speed_range", "curvature_range", "accel_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ConfigError(f"{name} is empty: {lo} > {hi}")
        if self.count < 0 or self.steps < 3 or not self.dt > 0 or self.waypoints < 2:
            raise ConfigError(f"invalid synthetic spec {self}")
        if not self.noise_std >= 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("speed_range", "curvature_range", "accel_range"):
            d[k] = list(d[k])
        return d


def _profile(rng, lo, hi, knots, duration):
    """Piecewise-linear random profile on ``[0, duration]``, as a callable."""
    values = rng.uniform(lo, hi, size=knots)
    times = np.linspace(0.0, duration, knots)
    return lambda t: np.interp(t, times, values)


def generate_synthetic(spec: SyntheticSpec) -> list[Trajectory]:
    """Deterministic (per seed) synthetic KBM trajectories.

    Each trajectory starts at the origin heading +x; when noise is added the
    pose is renormalized, and the stored exact states are moved into the
    same frame.
    """
    rng = np.random.default_rng(spec.seed)
    v_lo, v_hi = spec.speed_range
    out = []
    duration = spec.steps * spec.dt
    # step k spans [k dt, (k+1) dt], ends in states[k] and holds the profile's
    # mid-step value; the stored control of states[k] is the mean of the two
    # held values its central-difference window spans
    mid = (np.arange(spec.steps) + 0.5) * spec.dt
    for i in range(spec.count):
        v0 = rng.uniform(v_lo, v_hi)
        kappa = _profile(rng, *spec.curvature_range, spec.waypoints, duration)
        accel = _profile(rng, *spec.accel_range, spec.waypoints, duration)
        # shrink the acceleration profile if the speed would leave speed_range
        held = np.stack([kappa(mid), accel(mid)], axis=1)
        v = v0 + np.cumsum(held[:, 1]) * spec.dt
        shrink = min(1.0, *_limits(v0, v, v_lo, v_hi)) if v.min() < v_lo or v.max() > v_hi else 1.0
        held[:, 1] *= shrink
        controls = 0.5 * (held + np.vstack([held[1:], held[-1:]]))
        states = rk4_rollout(np.array([0.0, 0.0, 0.0, v0]), held, spec.dt)
        positions = states[:, :2].copy()
        if spec.noise_std > 0:
            positions = positions + rng.normal(0.0, spec.noise_std, size=positions.shape)
        normalized = normalize_pose(positions)
        if normalized is None:
            continue
        positions, origin, angle = normalized
        states = states.copy()
        states[:, :2] = (states[:, :2] - origin) @ _rotation(-angle).T
        states[:, 2] -= angle
        out.append(Trajectory(positions, spec.dt, f"synthetic-{spec.seed}-{i}", states, controls))
    return out


def _limits(v0, v, lo, hi):
    dv = v - v0
    out = []
    if v.min() < lo and dv.min() < 0:
        out.append(max(0.0, (v0 - lo) / -dv.min()))
    if v.max() > hi and dv.max() > 0:
        out.append(max(0.0, (hi - v0) / dv.max()))
    return out


def split(trajectories, val_fraction: float = 0.1, seed: int = 0):
    """Deterministic partition into (train, val) by whole trajectories."""
    if not 0 < val_fraction < 1:
        raise ContractError(f"validation fraction must lie in (0, 1), got {val_fraction}")
    n = len(trajectories)
    n_val = int(round(n * val_fraction))
    if n >= 2:
        n_val = min(max(n_val, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    val_idx = set(perm[:n_val].tolist())
    train = [t for i, t in enumerate(trajectories) if i not in val_idx]
    val = [t for i, t in enumerate(trajectories) if i in val_idx]
    return train, val


def write_csv(path, trajectories) -> None:
    """Export trajectories in the ingestion schema (trackId = list index)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REQUIRED_COLUMNS)
        for track_id, traj in enumerate(trajectories):
            for frame, (x, y) in enumerate(np.asarray(traj.positions)):
                writer.writerow((track_id, frame, repr(float(x)), repr(float(y))))
