"""Procedural quadruped ground truth and sensor synthesis.

Body trajectories are generated procedurally (anchored vertical bounce,
lateral sway, smooth attitude wobble, constant forward speed) rather than
physics-simulated; the filter consumes only kinematic/IMU consistency,
which this construction guarantees exactly.  Feet follow the gait schedule:
planted at planned footholds during stance (stationary in the inertial
frame unless a slip event is active), smooth quintic swing splines with
zero boundary velocity otherwise.

IMU samples are increment-consistent: frame k carries the average rate and
specific force over the interval ending at t_k (real IMUs integrate over
the preceding sample period), so a noiseless discrete strapdown step driven
by frame k maps the truth state at t_{k-1} exactly onto t_k.  Kinematics,
forces and the truth rows are sampled at t_k itself.

The log format is line-oriented text with header
``# aiekf-log v1 N=<legs> dt=<dt>`` and one CSV row per tick; floats are
written with 17 significant digits so a write/read roundtrip is lossless.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .contact import GaitSchedule

__all__ = [
    "SlipEvent",
    "ScenarioConfig",
    "ScenarioError",
    "LogFormatError",
    "TruthStream",
    "SensorStream",
    "generate",
    "write_log",
    "read_log",
    "seeded_slip_events",
    "terrain_height",
    "terrain_grad",
]

N_LEGS = 4
MASS = 25.0  # kg
BODY_HEIGHT = 0.30
SWING_APEX = 0.05
HIP_XY = np.array([  # FL, FR, RL, RR
    [0.17, 0.09],
    [0.17, -0.09],
    [-0.17, 0.09],
    [-0.17, -0.09],
])
GRAVITY = np.array([0.0, 0.0, -9.81])

_MOTION = {
    # speed m/s, bounce m, roll/pitch/yaw rad, lateral sway m
    "trot": dict(speed=0.40, bounce=0.003, roll=0.015, pitch=0.010, yaw=0.008, lat=0.010),
    "flying_trot": dict(speed=0.70, bounce=0.003, roll=0.030, pitch=0.020, yaw=0.012, lat=0.015),
    "pronk": dict(speed=0.50, bounce=0.008, roll=0.010, pitch=0.035, yaw=0.008, lat=0.010),
    "stand": dict(speed=0.0, bounce=0.0, roll=0.0, pitch=0.0, yaw=0.0, lat=0.0),
}


class ScenarioError(ValueError):
    """Invalid scenario configuration."""


class LogFormatError(ValueError):
    """Malformed or unsupported log file."""


@dataclass(frozen=True)
class SlipEvent:
    """Scripted foot slip while in stance.

    ``profile`` selects the velocity shape: "step" holds ``velocity``
    constant over the event; "ramp" runs a smooth sin^2 pulse peaking at
    ``velocity`` (total drift is then half of a step event's).
    """

    leg: int
    t_start: float
    duration: float
    velocity: np.ndarray
    profile: str = "step"

    def __post_init__(self):
        object.__setattr__(self, "velocity",
                           np.asarray(self.velocity, dtype=float).reshape(3))
        if self.profile not in ("step", "ramp"):
            raise ValueError(f"unknown slip profile {self.profile!r}")

    def drift_integral(self, tau):
        """Integrated drift fraction of ``velocity`` at local time tau."""
        tau = np.clip(tau, 0.0, self.duration)
        if self.profile == "step":
            return tau
        return 0.5 * tau - (self.duration / (4.0 * np.pi)) * np.sin(
            2.0 * np.pi * tau / self.duration)

    def velocity_at(self, tau):
        """Velocity profile factor at local time tau (0 outside the event)."""
        inside = (tau >= 0.0) & (tau < self.duration)
        if self.profile == "step":
            return inside.astype(float)
        return inside * np.sin(np.pi * np.clip(tau, 0.0, self.duration)
                               / self.duration) ** 2


@dataclass
class ScenarioConfig:
    """Scenario definition: gait, terrain, duration, noise and slips."""

    gait: str = "trot"
    terrain: str = "flat"
    rough_amplitude: float = 0.03
    duration: float = 10.0
    dt: float = 0.001
    seed: int = 0
    slip_events: list = field(default_factory=list)
    # sensor noise: IMU entries are continuous densities (unit/sqrt(Hz)),
    # kinematics/force entries per-sample standard deviations
    gyro_noise: float = 0.002
    accel_noise: float = 0.05
    gyro_bias_walk: float = 1e-4
    accel_bias_walk: float = 1e-4
    kin_pos_noise: float = 0.002
    kin_vel_noise: float = 0.02
    force_noise: float = 3.0
    # touchdown settling micro-slips (probability per touchdown)
    settle_prob: float = 0.0
    settle_speed: float = 0.05
    settle_duration: float = 0.03
    # contact-evidence corruption windows per second (~20 ms each)
    misdetect_rate: float = 0.0

    def validate(self):
        if self.gait not in _MOTION:
            raise ScenarioError(f"unknown gait {self.gait!r}")
        if self.terrain not in ("flat", "rough"):
            raise ScenarioError(f"unknown terrain {self.terrain!r}")
        if self.dt <= 0.0:
            raise ScenarioError("dt must be positive")
        if self.duration < 1.0:
            raise ScenarioError("duration must be at least 1 s")
        if self.rough_amplitude < 0.0:
            raise ScenarioError("rough amplitude must be non-negative")
        for ev in self.slip_events:
            if not 0 <= ev.leg < N_LEGS:
                raise ScenarioError(f"slip event leg {ev.leg} out of range")
            if ev.duration <= 0.0:
                raise ScenarioError("slip event duration must be positive")
            if not 0.0 <= ev.t_start < self.duration:
                raise ScenarioError("slip event outside scenario duration")
        for name in ("gyro_noise", "accel_noise", "gyro_bias_walk",
                     "accel_bias_walk", "kin_pos_noise", "kin_vel_noise",
                     "force_noise", "settle_prob", "misdetect_rate"):
            if getattr(self, name) < 0.0:
                raise ScenarioError(f"{name} must be non-negative")


@dataclass
class TruthStream:
    """Ground-truth state per tick; foot_vel/force are not serialized."""

    t: np.ndarray
    R: np.ndarray        # (n, 3, 3)
    v: np.ndarray        # (n, 3)
    p: np.ndarray        # (n, 3)
    foot_pos: np.ndarray  # (n, N, 3)
    contact: np.ndarray   # (n, N) bool
    foot_vel: np.ndarray | None = None
    force: np.ndarray | None = None

    def __len__(self):
        return self.t.shape[0]


@dataclass
class SensorStream:
    """Per-tick IMU, leg kinematics and force-evidence channels."""

    t: np.ndarray
    dt: float
    gyro: np.ndarray     # (n, 3)
    accel: np.ndarray    # (n, 3)
    rel_pos: np.ndarray  # (n, N, 3)
    rel_vel: np.ndarray  # (n, N, 3)
    force: np.ndarray    # (n, N)

    def __len__(self):
        return self.t.shape[0]

    @property
    def n_legs(self) -> int:
        return self.rel_pos.shape[1]


# ----------------------------------------------------------------------
# terrain

_TERR = ((0.50, 0.53, 0.41, 0.0), (0.30, 0.23, None, 1.3), (0.20, None, 0.31, 0.7))


def terrain_height(x, y, amplitude: float):
    """Smooth analytic height field; zero when amplitude is zero."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if amplitude == 0.0:
        return np.zeros(np.broadcast(x, y).shape)
    h = (0.50 * np.sin(2 * np.pi * x / 0.53) * np.cos(2 * np.pi * y / 0.41)
         + 0.30 * np.sin(2 * np.pi * x / 0.23 + 1.3)
         + 0.20 * np.cos(2 * np.pi * y / 0.31 + 0.7))
    return amplitude * h


def terrain_grad(x, y, amplitude: float):
    """Analytic (dh/dx, dh/dy) of the height field."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if amplitude == 0.0:
        z = np.zeros(np.broadcast(x, y).shape)
        return z, z.copy()
    kx1 = 2 * np.pi / 0.53
    ky1 = 2 * np.pi / 0.41
    kx2 = 2 * np.pi / 0.23
    ky3 = 2 * np.pi / 0.31
    hx = amplitude * (0.50 * kx1 * np.cos(kx1 * x) * np.cos(ky1 * y)
                      + 0.30 * kx2 * np.cos(kx2 * x + 1.3))
    hy = amplitude * (-0.50 * ky1 * np.sin(kx1 * x) * np.sin(ky1 * y)
                      - 0.20 * ky3 * np.sin(ky3 * y + 0.7))
    return hx, hy


# ----------------------------------------------------------------------
# batched rotation helpers (angles here are always far below pi)

def _skew_batch(w):
    n = w.shape[0]
    W = np.zeros((n, 3, 3))
    W[:, 0, 1] = -w[:, 2]
    W[:, 0, 2] = w[:, 1]
    W[:, 1, 0] = w[:, 2]
    W[:, 1, 2] = -w[:, 0]
    W[:, 2, 0] = -w[:, 1]
    W[:, 2, 1] = w[:, 0]
    return W


def _exp_so3_batch(w):
    t2 = np.einsum("ni,ni->n", w, w)
    t = np.sqrt(t2)
    small = t < 1e-6
    ts = np.where(small, 1.0, t)
    a = np.where(small, 1.0 - t2 / 6.0, np.sin(ts) / ts)
    b = np.where(small, 0.5 - t2 / 24.0, (1.0 - np.cos(ts)) / np.where(small, 1.0, t2))
    W = _skew_batch(w)
    W2 = np.einsum("nij,njk->nik", W, W)
    return np.eye(3) + a[:, None, None] * W + b[:, None, None] * W2


def _log_so3_batch(R):
    tr = R[:, 0, 0] + R[:, 1, 1] + R[:, 2, 2]
    cos_t = np.clip((tr - 1.0) / 2.0, -1.0, 1.0)
    t = np.arccos(cos_t)
    sin_t = np.sin(t)
    factor = np.where(t < 1e-9, 0.5, 0.5 * t / np.where(sin_t == 0.0, 1.0, sin_t))
    vee = np.stack([
        R[:, 2, 1] - R[:, 1, 2],
        R[:, 0, 2] - R[:, 2, 0],
        R[:, 1, 0] - R[:, 0, 1],
    ], axis=1)
    return factor[:, None] * vee


# ----------------------------------------------------------------------
# body motion profile

class _Motion:
    """Analytic body trajectory; callable at arbitrary times."""

    def __init__(self, cfg: ScenarioConfig, sched: GaitSchedule):
        mp = _MOTION[cfg.gait]
        self.speed = mp["speed"]
        self.bounce = mp["bounce"]
        self.roll = mp["roll"]
        self.pitch = mp["pitch"]
        self.yaw = mp["yaw"]
        self.lat = mp["lat"]
        self.P = sched.period
        steps = 1.0 if cfg.gait == "pronk" else 2.0
        self.f_b = steps / self.P
        self.t0 = sched.duty * self.P / 2.0  # bounce trough at first stance mid
        self.f_roll = 1.0 / self.P
        self.f_pitch = self.f_b
        self.f_yaw = 0.5 / self.P
        self.amp = cfg.rough_amplitude if cfg.terrain == "rough" else 0.0

    def xy(self, t):
        t = np.asarray(t, dtype=float)
        return self.speed * t, self.lat * np.sin(np.pi * t / self.P)

    def xy_dot(self, t):
        t = np.asarray(t, dtype=float)
        return (np.full(t.shape, self.speed),
                self.lat * (np.pi / self.P) * np.cos(np.pi * t / self.P))

    def pos(self, t):
        x, y = self.xy(t)
        z = (BODY_HEIGHT
             - self.bounce * np.cos(2 * np.pi * self.f_b * (t - self.t0))
             + terrain_height(x, y, self.amp))
        return np.stack([x, y, z], axis=-1)

    def vel(self, t):
        x, y = self.xy(t)
        vx, vy = self.xy_dot(t)
        hx, hy = terrain_grad(x, y, self.amp)
        vz = (self.bounce * 2 * np.pi * self.f_b
              * np.sin(2 * np.pi * self.f_b * (t - self.t0))
              + hx * vx + hy * vy)
        return np.stack([vx, vy, vz], axis=-1)

    def angles(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([
            self.roll * np.sin(2 * np.pi * self.f_roll * t + 0.9),
            self.pitch * np.sin(2 * np.pi * self.f_pitch * t + 1.7),
            self.yaw * np.sin(2 * np.pi * self.f_yaw * t + 0.3),
        ], axis=-1)

    def yaw_angle(self, t):
        return self.yaw * np.sin(2 * np.pi * self.f_yaw * np.asarray(t, float) + 0.3)


# ----------------------------------------------------------------------
# feet

def _plan_footholds(motion: _Motion, sched: GaitSchedule, leg: int, ks):
    """Planned foothold per stride: hip ground point at stance midtime."""
    P = sched.period
    off_t = sched.offsets[leg] * P
    t_mid = (np.asarray(ks, dtype=float) + sched.duty / 2.0) * P + off_t
    x, y = motion.xy(t_mid)
    yaw = motion.yaw_angle(t_mid)
    hx, hy = HIP_XY[leg]
    fx = x + np.cos(yaw) * hx - np.sin(yaw) * hy
    fy = y + np.sin(yaw) * hx + np.cos(yaw) * hy
    fz = terrain_height(fx, fy, motion.amp)
    return np.stack([fx, fy, fz], axis=-1)


def _leg_track(cfg, motion, sched, leg, t, events):
    """Foot position/velocity/stance arrays for one leg over the tick grid."""
    n = t.shape[0]
    P = sched.period
    duty = sched.duty
    off_t = sched.offsets[leg] * P

    k = np.floor((t - off_t) / P).astype(int)
    stance = (t - (k * P + off_t)) < duty * P
    ks = np.arange(k.min(), k.max() + 2)
    F = _plan_footholds(motion, sched, leg, ks)
    k0 = ks[0]

    drift = np.zeros((n, 3))
    slip_vel = np.zeros((n, 3))
    drift_end = np.zeros((len(ks), 3))
    for ev in events:
        if ev.leg != leg:
            continue
        e0, e1 = ev.t_start, ev.t_start + ev.duration
        for j, kk in enumerate(ks):
            s0 = kk * P + off_t
            s1 = s0 + duty * P
            a, b = max(e0, s0), min(e1, s1)
            if b <= a:
                continue
            base = ev.drift_integral(a - e0)
            drift_end[j] += ev.velocity * (ev.drift_integral(b - e0) - base)
            m = stance & (k == kk) & (t > a)
            if m.any():
                local = np.minimum(t[m], b) - e0
                drift[m] += ev.velocity * (ev.drift_integral(local) - base)[:, None]
                slip_vel[m] += ev.velocity * ev.velocity_at(t[m] - e0)[:, None]

    pos = np.empty((n, 3))
    vel = np.zeros((n, 3))
    idx = k - k0
    pos[stance] = F[idx[stance]] + drift[stance]
    vel[stance] = slip_vel[stance]

    sw = ~stance
    if sw.any():
        T_sw = (1.0 - duty) * P
        u = (t[sw] - (k[sw] * P + off_t) - duty * P) / T_sw
        start = F[idx[sw]] + drift_end[idx[sw]]
        end = F[idx[sw] + 1]
        s = u ** 3 * (10.0 - 15.0 * u + 6.0 * u * u)
        ds = 30.0 * u * u * (1.0 - u) ** 2
        span = end - start
        pos[sw] = start + span * s[:, None]
        vel[sw] = span * (ds / T_sw)[:, None]
        bump = SWING_APEX * np.sin(np.pi * u) ** 2
        pos[sw, 2] += bump
        vel[sw, 2] += SWING_APEX * np.pi * np.sin(2 * np.pi * u) / T_sw
    return pos, vel, stance


def _settle_events(cfg: ScenarioConfig, sched: GaitSchedule, rng) -> list:
    """Seeded touchdown micro-slips, drawn in a fixed leg/stride order."""
    if cfg.settle_prob <= 0.0:
        return []
    events = []
    P = sched.period
    for leg in range(N_LEGS):
        off_t = sched.offsets[leg] * P
        k = 0
        while True:
            t_td = k * P + off_t
            k += 1
            if t_td < 0.2:
                continue
            if t_td > cfg.duration - 0.2:
                break
            if rng.random() >= cfg.settle_prob:
                continue
            ang = rng.uniform(0.0, 2 * np.pi)
            speed = cfg.settle_speed * rng.uniform(0.6, 1.4)
            u = np.array([0.5 * math.cos(ang), 0.5 * math.sin(ang), -1.1]) * speed
            events.append(SlipEvent(leg, t_td + 0.004, cfg.settle_duration, u,
                                    profile="ramp"))
    return events


def seeded_slip_events(sched: GaitSchedule, duration: float, rate: float,
                       speed: float, rng, t_min: float = 1.5,
                       slip_duration: float = 0.06) -> list:
    """Scripted mid-stance slips at roughly ``rate`` events per second.

    Events are placed inside scheduled stance windows on random legs, with a
    downhill-flavored z component, and never overlap each other on a leg.
    """
    rng = np.random.default_rng(rng)
    n_events = int(round(rate * (duration - t_min)))
    P = sched.period
    events = []
    used = set()
    attempts = 0
    while len(events) < n_events and attempts < 50 * max(n_events, 1):
        attempts += 1
        leg = int(rng.integers(0, sched.n_legs))
        off_t = sched.offsets[leg] * P
        k_lo = int(np.ceil((t_min - off_t) / P))
        k_hi = int(np.floor((duration - 0.2 - off_t) / P))
        if k_hi < k_lo:
            continue
        k = int(rng.integers(k_lo, k_hi + 1))
        if (leg, k) in used:
            continue
        used.add((leg, k))
        stance_len = sched.duty * P
        t0 = k * P + off_t + 0.15 * stance_len
        dur = min(slip_duration, 0.6 * stance_len)
        ang = rng.uniform(0.0, 2 * np.pi)
        mag = speed * rng.uniform(0.7, 1.3)
        u = np.array([math.cos(ang), math.sin(ang), -1.0]) * mag
        events.append(SlipEvent(leg, t0, dur, u, profile="ramp"))
    events.sort(key=lambda e: e.t_start)
    return events


# ----------------------------------------------------------------------
# generation

def generate(cfg: ScenarioConfig):
    """Synthesize one scenario; returns (TruthStream, SensorStream).

    Deterministic for a given config and seed.
    """
    cfg.validate()
    sched = GaitSchedule.preset(cfg.gait)
    motion = _Motion(cfg, sched)
    rng = np.random.default_rng(cfg.seed)
    dt = cfg.dt
    n = int(round(cfg.duration / dt))
    # one pre-tick at -dt so frame 0 gets an IMU increment too
    t_ext = (np.arange(n + 1) - 1.0) * dt
    t = t_ext[1:]

    events = list(cfg.slip_events) + _settle_events(cfg, sched, rng)

    p_ext = motion.pos(t_ext)
    v_ext = motion.vel(t_ext)
    R_ext = _exp_so3_batch(motion.angles(t_ext))

    foot_pos = np.empty((n, N_LEGS, 3))
    foot_vel = np.empty((n, N_LEGS, 3))
    contact = np.empty((n, N_LEGS), dtype=bool)
    for leg in range(N_LEGS):
        foot_pos[:, leg], foot_vel[:, leg], contact[:, leg] = _leg_track(
            cfg, motion, sched, leg, t, events)

    # ground-reaction normal force, shared over stance legs
    az = (v_ext[1:, 2] - v_ext[:-1, 2]) / dt
    total = np.maximum(MASS * (9.81 + az), 0.0)
    n_st = np.maximum(contact.sum(axis=1), 1)
    force_true = contact * (total / n_st)[:, None]

    # IMU increments over [t_{k-1}, t_k], attached to frame k
    R_t = R_ext[1:]
    dR = np.einsum("nji,njk->nik", R_ext[:-1], R_ext[1:])
    gyro_true = _log_so3_batch(dR) / dt
    accel_true = np.einsum("nji,nj->ni", R_ext[:-1],
                           (v_ext[1:] - v_ext[:-1]) / dt - GRAVITY)

    # encoder-derived kinematics at t_k (the innovation identity pairs them
    # with the same interval-average angular rate the filter consumes)
    rel_pos_true = np.einsum("nji,nlj->nli", R_t, foot_pos - p_ext[1:, None, :])
    rel_vel_true = (-np.cross(np.broadcast_to(gyro_true[:, None, :], rel_pos_true.shape),
                              rel_pos_true)
                    + np.einsum("nji,nlj->nli", R_t, foot_vel - v_ext[1:, None, :]))

    # noise draws, fixed order for determinism
    sq = math.sqrt(dt)
    bias_g = np.cumsum(rng.standard_normal((n, 3)) * (cfg.gyro_bias_walk * sq), axis=0)
    bias_a = np.cumsum(rng.standard_normal((n, 3)) * (cfg.accel_bias_walk * sq), axis=0)
    gyro = gyro_true + bias_g + rng.standard_normal((n, 3)) * (cfg.gyro_noise / sq)
    accel = accel_true + bias_a + rng.standard_normal((n, 3)) * (cfg.accel_noise / sq)
    rel_pos = rel_pos_true + rng.standard_normal(rel_pos_true.shape) * cfg.kin_pos_noise
    rel_vel = rel_vel_true + rng.standard_normal(rel_vel_true.shape) * cfg.kin_vel_noise
    force = force_true + rng.standard_normal(force_true.shape) * cfg.force_noise

    if cfg.misdetect_rate > 0.0:
        n_md = int(round(cfg.misdetect_rate * cfg.duration))
        t_md = rng.uniform(0.5, max(cfg.duration - 0.1, 0.6), n_md)
        legs_md = rng.integers(0, N_LEGS, n_md)
        nominal = MASS * 9.81 / 2.0
        for tm, leg in zip(t_md, legs_md):
            m = (t >= tm) & (t < tm + 0.02)
            force[m, leg] = np.where(contact[m, leg], 0.0, nominal)

    truth = TruthStream(t=t.copy(), R=R_t.copy(), v=v_ext[1:].copy(),
                        p=p_ext[1:].copy(), foot_pos=foot_pos, contact=contact,
                        foot_vel=foot_vel, force=force_true)
    sensors = SensorStream(t=t.copy(), dt=dt, gyro=gyro, accel=accel,
                           rel_pos=rel_pos, rel_vel=rel_vel, force=force)
    return truth, sensors


# ----------------------------------------------------------------------
# log I/O

_HEADER_RE = re.compile(r"^# aiekf-log v(\d+) N=(\d+) dt=([0-9.eE+-]+)\s*$")


def _header(n_legs: int, dt: float) -> str:
    return f"# aiekf-log v1 N={n_legs} dt={dt:.17g}"


def _write_rows(path: Path, header: str, mat: np.ndarray):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, mat, fmt="%.17g", delimiter=",")


def _read_rows(path: Path, n_cols: int):
    path = Path(path)
    if not path.exists():
        raise LogFormatError(f"{path}: no such log file")
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
    m = _HEADER_RE.match(first)
    if not m:
        raise LogFormatError(f"{path}:1: missing or malformed log header")
    if int(m.group(1)) != 1:
        raise LogFormatError(f"{path}:1: unsupported log version v{m.group(1)}")
    n_legs = int(m.group(2))
    dt = float(m.group(3))
    try:
        mat = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError:
        mat = None
    if mat is None or (mat.size and mat.shape[1] != n_cols(n_legs)):
        # locate the offending line for the diagnostic
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                if lineno == 1 or not line.strip():
                    continue
                fields = line.strip().split(",")
                ok = len(fields) == n_cols(n_legs)
                if ok:
                    try:
                        [float(f) for f in fields]
                    except ValueError:
                        ok = False
                if not ok:
                    raise LogFormatError(
                        f"{path}:{lineno}: expected {n_cols(n_legs)} "
                        f"comma-separated floats, got {len(fields)} fields")
        raise LogFormatError(f"{path}: inconsistent row layout")
    return n_legs, dt, mat


def _sensor_cols(n_legs: int) -> int:
    return 1 + 6 + n_legs * 7


def _truth_cols(n_legs: int) -> int:
    return 1 + 9 + 6 + n_legs * 3 + n_legs


def write_log(truth: TruthStream, sensors: SensorStream, stem) -> tuple[Path, Path]:
    """Write ``<stem>_sensor.csv`` and ``<stem>_truth.csv``; returns the paths."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    n = len(sensors)
    n_legs = sensors.n_legs
    per_leg = np.concatenate(
        [sensors.rel_pos.reshape(n, -1, 3), sensors.rel_vel.reshape(n, -1, 3),
         sensors.force[:, :, None]], axis=2)
    smat = np.hstack([sensors.t[:, None], sensors.gyro, sensors.accel,
                      per_leg.reshape(n, -1)])
    tmat = np.hstack([truth.t[:, None], truth.R.reshape(n, 9), truth.v, truth.p,
                      truth.foot_pos.reshape(n, -1),
                      truth.contact.astype(float)])
    spath = stem.parent / (stem.name + "_sensor.csv")
    tpath = stem.parent / (stem.name + "_truth.csv")
    _write_rows(spath, _header(n_legs, sensors.dt), smat)
    _write_rows(tpath, _header(n_legs, sensors.dt), tmat)
    return spath, tpath


def read_log(stem) -> tuple[TruthStream, SensorStream]:
    """Read a log pair written by write_log."""
    stem = Path(stem)
    spath = stem.parent / (stem.name + "_sensor.csv")
    tpath = stem.parent / (stem.name + "_truth.csv")
    n_legs, dt, smat = _read_rows(spath, _sensor_cols)
    n_legs_t, dt_t, tmat = _read_rows(tpath, _truth_cols)
    if n_legs_t != n_legs or dt_t != dt:
        raise LogFormatError(f"{tpath}: header does not match {spath}")
    n = smat.shape[0]
    if tmat.shape[0] != n:
        raise LogFormatError(f"{tpath}: {tmat.shape[0]} rows, expected {n}")
    per_leg = smat[:, 7:].reshape(n, n_legs, 7)
    sensors = SensorStream(
        t=smat[:, 0].copy(), dt=dt,
        gyro=smat[:, 1:4].copy(), accel=smat[:, 4:7].copy(),
        rel_pos=per_leg[:, :, 0:3].copy(), rel_vel=per_leg[:, :, 3:6].copy(),
        force=per_leg[:, :, 6].copy())
    k = 1 + 9 + 6
    truth = TruthStream(
        t=tmat[:, 0].copy(), R=tmat[:, 1:10].reshape(n, 3, 3).copy(),
        v=tmat[:, 10:13].copy(), p=tmat[:, 13:16].copy(),
        foot_pos=tmat[:, k:k + 3 * n_legs].reshape(n, n_legs, 3).copy(),
        contact=tmat[:, k + 3 * n_legs:].astype(bool))
    return truth, sensors
