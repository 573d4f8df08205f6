"""Ground-truth trajectories and scenario files.

Dynamic paths are piecewise quintic Hermite curves through waypoints: C2 in
position, with the yaw (and, for stairs, the pitch) interpolated the same way
so body acceleration and angular velocity are defined everywhere.
Acceleration is gravity free.
"""
from __future__ import annotations

import configparser
import enum
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .exceptions import InvalidArgumentError
from .kinematics import TransmitterGeometry
from .sensors import BeaconMap
from .so3 import log_map

SPEED_LIMIT = 2.0
SCENARIO_FILE_VERSION = 1
IMU_SAMPLING = ("interval", "point")


class PathKind(str, enum.Enum):
    STATIC = "static"
    UPATH = "upath"
    ZIGZAG = "zigzag"
    BRIDGE = "bridge"
    STAIR = "stair"


@dataclass(frozen=True)
class FilterSettings:
    """Filter tuning carried by a scenario file (section ``[filter]``)."""

    p0_theta: float = 1e-4
    p0_pos: float = 1e-2
    p0_vel: float = 1e-2
    ukf_alpha: float = 1e-3
    ukf_iota: float = 1.0
    ukf_beta: float = 2.0
    process_noise: str = "literal"
    theta_cov_source: str = "previous"


@dataclass(frozen=True)
class ScenarioSpec:
    kind: PathKind
    duration: float
    imu_rate: float = 10.0
    ms_rate: float = 1.0
    sigma_r: float = 0.1
    seed: int = 0
    geometry: TransmitterGeometry = field(default_factory=TransmitterGeometry)
    beacons: BeaconMap | None = None
    waypoints: np.ndarray | None = None
    pitch_follows_slope: bool = False
    gyro_density: float = 0.01
    accel_density: float = 300.0
    lever_arm: tuple = (0.0, 0.0, 0.0)
    beacon_margin: float = 1.0
    filter: FilterSettings = field(default_factory=FilterSettings)
    name: str = ""
    imu_sampling: str = "interval"

    def __post_init__(self):
        if not self.duration > 0:
            raise InvalidArgumentError("duration must be positive")
        if not (self.imu_rate > 0 and self.ms_rate > 0):
            raise InvalidArgumentError("rates must be positive")
        if self.imu_rate < self.ms_rate:
            raise InvalidArgumentError("imu_rate must be at least ms_rate")
        if self.sigma_r < 0:
            raise InvalidArgumentError("sigma_r must be non-negative")
        if self.imu_sampling not in IMU_SAMPLING:
            raise InvalidArgumentError(f"imu_sampling must be one of {IMU_SAMPLING}")

    @property
    def T(self):
        return 1.0 / self.imu_rate

    @property
    def n_steps(self):
        return int(round(self.duration * self.imu_rate))

    @property
    def ms_ratio(self):
        ratio = self.imu_rate / self.ms_rate
        if abs(ratio - round(ratio)) > 1e-9:
            raise InvalidArgumentError(
                f"imu_rate {self.imu_rate} is not a multiple of ms_rate {self.ms_rate}"
            )
        return int(round(ratio))


@dataclass(frozen=True)
class TruthSample:
    t: float
    p: np.ndarray
    v: np.ndarray
    a_world: np.ndarray
    r: np.ndarray
    omega: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    """Sampled ground truth stored as arrays; indexing yields :class:`TruthSample`."""

    t: np.ndarray
    p: np.ndarray
    v: np.ndarray
    a_world: np.ndarray
    r: np.ndarray
    omega: np.ndarray

    def __len__(self):
        return len(self.t)

    def __getitem__(self, k):
        return TruthSample(self.t[k], self.p[k], self.v[k], self.a_world[k], self.r[k], self.omega[k])

    def __iter__(self):
        return (self[k] for k in range(len(self)))


class PiecewiseQuintic:
    """C2 piecewise quintic through knots with given first and second derivatives."""

    def __init__(self, knots, values, d1, d2):
        self.knots = np.asarray(knots, dtype=float)
        values = np.asarray(values, dtype=float)
        self._scalar = values.ndim == 1
        values = values.reshape(len(self.knots), -1)
        d1 = np.asarray(d1, dtype=float).reshape(values.shape)
        d2 = np.asarray(d2, dtype=float).reshape(values.shape)
        h = np.diff(self.knots)[:, None]
        p0, p1 = values[:-1], values[1:]
        v0, v1 = d1[:-1], d1[1:]
        a0, a1 = d2[:-1], d2[1:]
        c3 = (20 * (p1 - p0) - (8 * v1 + 12 * v0) * h - (3 * a0 - a1) * h**2) / (2 * h**3)
        c4 = (30 * (p0 - p1) + (14 * v1 + 16 * v0) * h + (3 * a0 - 2 * a1) * h**2) / (2 * h**4)
        c5 = (12 * (p1 - p0) - 6 * (v1 + v0) * h - (a0 - a1) * h**2) / (2 * h**5)
        self._coef = np.stack([p0, v0, a0 / 2, c3, c4, c5], axis=0)

    def __call__(self, t, order=0):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.clip(np.searchsorted(self.knots, t, side="right") - 1, 0, len(self.knots) - 2)
        tau = (t - self.knots[idx])[:, None]
        c = self._coef[:, idx, :]
        if order == 0:
            out = c[0] + tau * (c[1] + tau * (c[2] + tau * (c[3] + tau * (c[4] + tau * c[5]))))
        elif order == 1:
            out = c[1] + tau * (2 * c[2] + tau * (3 * c[3] + tau * (4 * c[4] + tau * 5 * c[5])))
        elif order == 2:
            out = 2 * c[2] + tau * (6 * c[3] + tau * (12 * c[4] + tau * 20 * c[5]))
        else:
            raise ValueError("order must be 0, 1 or 2")
        return out[:, 0] if self._scalar else out


def _catmull_rom(knots, values):
    d = np.zeros_like(values)
    d[1:-1] = (values[2:] - values[:-2]) / (knots[2:] - knots[:-2])[:, None]
    return d


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _attitude_knots(waypoints, vel, pitch_follows_slope):
    seg = np.diff(waypoints, axis=0)
    dirs = vel.copy()
    dirs[0], dirs[-1] = seg[0], seg[-1]
    yaw = np.unwrap(np.arctan2(dirs[:, 1], dirs[:, 0]))
    if pitch_follows_slope:
        pitch = -np.arctan2(dirs[:, 2], np.hypot(dirs[:, 0], dirs[:, 1]))
    else:
        pitch = np.zeros(len(waypoints))
    return yaw, pitch


def generate_truth(spec):
    """Sample the ground truth of ``spec`` at the IMU rate (``n_steps + 1`` samples)."""
    n = spec.n_steps
    t = np.arange(n + 1) / spec.imu_rate
    if spec.kind == PathKind.STATIC:
        p0 = np.zeros(3) if spec.waypoints is None else np.asarray(spec.waypoints, float)[0]
        zeros = np.zeros((n + 1, 3))
        return Trajectory(t, np.tile(p0, (n + 1, 1)), zeros, zeros.copy(),
                          np.tile(np.eye(3), (n + 1, 1, 1)), zeros.copy())

    wp = np.asarray(spec.waypoints, dtype=float)
    if wp.ndim != 2 or wp.shape[1] != 3 or len(wp) < 2:
        raise InvalidArgumentError("a dynamic path needs at least two 3-D waypoints")
    seglen = np.linalg.norm(np.diff(wp, axis=0), axis=1)
    if np.any(seglen <= 0):
        raise InvalidArgumentError("consecutive waypoints must differ")
    knots = spec.duration * np.concatenate([[0.0], np.cumsum(seglen)]) / seglen.sum()
    vel = _catmull_rom(knots, wp)
    pos_curve = PiecewiseQuintic(knots, wp, vel, np.zeros_like(wp))

    yaw_k, pitch_k = _attitude_knots(wp, vel, spec.pitch_follows_slope)
    yaw_rate = _catmull_rom(knots, yaw_k[:, None])[:, 0]
    pitch_rate = _catmull_rom(knots, pitch_k[:, None])[:, 0]
    yaw_curve = PiecewiseQuintic(knots, yaw_k, yaw_rate, np.zeros_like(yaw_k))
    pitch_curve = PiecewiseQuintic(knots, pitch_k, pitch_rate, np.zeros_like(pitch_k))

    fine = np.linspace(0.0, spec.duration, max(2001, 20 * n))
    vmax = np.linalg.norm(pos_curve(fine, 1), axis=1).max()
    if vmax >= SPEED_LIMIT:
        raise InvalidArgumentError(
            f"path reaches {vmax:.2f} m/s, above the {SPEED_LIMIT} m/s cap for duration {spec.duration} s"
        )

    p = pos_curve(t)
    v = pos_curve(t, 1)
    a = pos_curve(t, 2)
    yaw, yaw_d = yaw_curve(t), yaw_curve(t, 1)
    pitch, pitch_d = pitch_curve(t), pitch_curve(t, 1)
    r = np.array([rot_z(y) @ rot_y(q) for y, q in zip(yaw, pitch)])
    # body rate of R = Rz(yaw) Ry(pitch)
    omega = np.stack([-yaw_d * np.sin(pitch), pitch_d, yaw_d * np.cos(pitch)], axis=1)
    return Trajectory(t, p, v, a, r, omega)


def body_accel(sample):
    """Gravity-free acceleration expressed in the body frame, ``R^T a_world``."""
    return np.asarray(sample.r).T @ np.asarray(sample.a_world)


def transmitter_positions(r, p, geom):
    """Global positions of the three transmitters, shape (3, 3)."""
    return p + geom.points @ np.asarray(r).T


@dataclass(frozen=True)
class Streams:
    """Noise-free sensor streams derived from a trajectory.

    ``imu[k]`` is the true input held over step ``k -> k + 1``; ``ms_steps``
    are the step indices carrying a measurement, and ``ms_tx[i]`` the true
    transmitter positions at ``ms_steps[i]``.
    """

    imu: np.ndarray
    ms_steps: np.ndarray
    ms_tx: np.ndarray
    ratio: int


def interval_imu(truth, T):
    """IMU rows holding interval means over ``[t_k, t_k+1]``.

    The rate is the constant body rate carrying ``r[k]`` to ``r[k + 1]``; the
    acceleration is the body-frame mean that carries ``v[k]`` to ``v[k + 1]``
    through the zero-order-hold velocity update.  The final row repeats the
    point sample.
    """
    n = len(truth) - 1
    imu = np.empty((n + 1, 6))
    for k in range(n):
        imu[k, :3] = log_map(truth.r[k].T @ truth.r[k + 1]) / T
        imu[k, 3:] = truth.r[k].T @ (truth.v[k + 1] - truth.v[k]) / T
    imu[n, :3] = truth.omega[n]
    imu[n, 3:] = truth.r[n].T @ truth.a_world[n]
    return imu


def point_imu(truth):
    """IMU rows holding the instantaneous body rate and body acceleration at ``t_k``."""
    return np.concatenate([truth.omega, np.einsum("kji,kj->ki", truth.r, truth.a_world)], axis=1)


def emit_streams(spec, truth):
    ratio = spec.ms_ratio
    n = len(truth) - 1
    imu = interval_imu(truth, spec.T) if spec.imu_sampling == "interval" else point_imu(truth)
    steps = np.arange(ratio, n + 1, ratio)
    tx = np.array([transmitter_positions(truth.r[k], truth.p[k], spec.geometry) for k in steps])
    return Streams(imu, steps, tx.reshape(len(steps), 3, 3), ratio)


def default_beacons(spec, truth):
    lo = truth.p.min(axis=0)
    hi = truth.p.max(axis=0)
    return BeaconMap.box_corners(lo, hi, spec.beacon_margin)


# -- scenario files -----------------------------------------------------------

_SCHEMA = {
    "path": {"kind", "duration", "waypoints", "pitch_follows_slope", "seed", "version", "name"},
    "rates": {"imu_rate", "ms_rate", "imu_sampling"},
    "noise": {"sigma_r", "gyro_density", "accel_density"},
    "geometry": {"base", "altitude", "lever_arm"},
    "beacons": {"layout", "margin", "positions"},
    "filter": {f for f in FilterSettings.__dataclass_fields__},
}
_REQUIRED = {"path": {"kind", "duration"}}


def _parse_points(text):
    rows = [r.strip() for r in text.replace("\n", ";").split(";") if r.strip()]
    try:
        pts = np.array([[float(c) for c in row.split(",")] for row in rows])
    except ValueError as exc:
        raise InvalidArgumentError(f"bad point list: {text!r}") from exc
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InvalidArgumentError(f"points must be x,y,z triples: {text!r}")
    return pts


def _to_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise InvalidArgumentError(f"not a boolean: {text!r}")


def parse_scenario(text, source="<string>"):
    """Parse scenario-file text into a :class:`ScenarioSpec`.

    Unknown sections or keys raise :class:`InvalidArgumentError`.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";;"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise InvalidArgumentError(f"{source}: {exc}") from exc
    for section in cp.sections():
        if section not in _SCHEMA:
            raise InvalidArgumentError(f"{source}: unknown section [{section}]")
        unknown = set(cp[section]) - _SCHEMA[section]
        if unknown:
            raise InvalidArgumentError(f"{source}: unknown key(s) in [{section}]: {sorted(unknown)}")
    for section, keys in _REQUIRED.items():
        if section not in cp or not keys <= set(cp[section]):
            raise InvalidArgumentError(f"{source}: [{section}] needs {sorted(keys)}")

    path = cp["path"]
    version = int(path.get("version", SCENARIO_FILE_VERSION))
    if version != SCENARIO_FILE_VERSION:
        raise InvalidArgumentError(f"{source}: unsupported scenario version {version}")
    try:
        kind = PathKind(path["kind"].strip().lower())
    except ValueError as exc:
        raise InvalidArgumentError(f"{source}: unknown path kind {path['kind']!r}") from exc
    kw = dict(kind=kind, duration=float(path["duration"]), name=path.get("name", kind.value))
    if "waypoints" in path:
        kw["waypoints"] = _parse_points(path["waypoints"])
    if "pitch_follows_slope" in path:
        kw["pitch_follows_slope"] = _to_bool(path["pitch_follows_slope"])
    if "seed" in path:
        kw["seed"] = int(path["seed"])
    if kind != PathKind.STATIC and "waypoints" not in kw:
        raise InvalidArgumentError(f"{source}: dynamic paths need waypoints")

    if "rates" in cp:
        for key in ("imu_rate", "ms_rate"):
            if key in cp["rates"]:
                kw[key] = float(cp["rates"][key])
        if "imu_sampling" in cp["rates"]:
            kw["imu_sampling"] = cp["rates"]["imu_sampling"].strip().lower()
    if "noise" in cp:
        for key in ("sigma_r", "gyro_density", "accel_density"):
            if key in cp["noise"]:
                kw[key] = float(cp["noise"][key])
    if "geometry" in cp:
        g = cp["geometry"]
        kw["geometry"] = TransmitterGeometry(float(g.get("base", 0.1)), float(g.get("altitude", 0.3)))
        if "lever_arm" in g:
            kw["lever_arm"] = tuple(_parse_points(g["lever_arm"])[0])
    if "beacons" in cp:
        bsec = cp["beacons"]
        layout = bsec.get("layout", "box").strip().lower()
        if layout == "explicit":
            if "positions" not in bsec:
                raise InvalidArgumentError(f"{source}: explicit beacon layout needs positions")
            kw["beacons"] = BeaconMap(_parse_points(bsec["positions"]))
        elif layout != "box":
            raise InvalidArgumentError(f"{source}: unknown beacon layout {layout!r}")
        if "margin" in bsec:
            kw["beacon_margin"] = float(bsec["margin"])
    if "filter" in cp:
        fs = {}
        for key, raw in cp["filter"].items():
            default = getattr(FilterSettings, key)
            fs[key] = raw.strip() if isinstance(default, str) else float(raw)
        kw["filter"] = FilterSettings(**fs)
    return ScenarioSpec(**kw)


def load_scenario(path):
    """Read a scenario file, or a bundled scenario by name (``"upath"``, ``"stair"``, ...)."""
    p = Path(path)
    if p.exists():
        return parse_scenario(p.read_text(), source=str(p))
    name = str(path)
    res = resources.files("manifold_track") / "data" / f"{name}.ini"
    if res.is_file():
        return parse_scenario(res.read_text(), source=f"bundled:{name}")
    raise FileNotFoundError(f"no scenario file or bundled scenario named {path!r}")


def bundled_scenarios():
    root = resources.files("manifold_track") / "data"
    return sorted(f.name[:-4] for f in root.iterdir() if f.name.endswith(".ini"))


def with_overrides(spec, **changes):
    return replace(spec, **changes)
