"""Ground-truth camera trajectories and IMU / frame synthesis.

Six scripted trajectories (translational or circular, three difficulty
levels each) are closed-form sums of sinusoids, so position, velocity,
acceleration, orientation and body rate are all exact.  Their calibration
constants target the average speeds, angular rates and acceleration ranges
of the reference benchmark; ``tests/test_motion.py`` checks them.

The object sits at the world origin, world +z is up, and the camera frame is
x-right, y-down, z-forward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geom import GRAVITY, Pose, log_so3, rot_y, rot_z

# camera axes expressed in world when looking along world +x
_R_BASE = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
_EZ = np.array([0.0, 0.0, 1.0])
_EY = np.array([0.0, 1.0, 0.0])

INITIAL_DISTANCE = 1.2

KINDS = ("translational", "circular")
_SHORT = {"translational": "trans", "circular": "circ"}
DIFFICULTIES = ("easy", "medium", "hard")


@dataclass(frozen=True)
class MotionScript:
    kind: str
    difficulty: str
    duration: float = 30.0
    perturbation_seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown motion kind {self.kind!r}")
        if self.difficulty not in DIFFICULTIES:
            raise ValueError(f"unknown difficulty {self.difficulty!r}")
        if not self.duration > 0:
            raise ValueError("duration must be positive")

    @property
    def name(self) -> str:
        return f"{_SHORT[self.kind]}-{self.difficulty}"

    @classmethod
    def parse(cls, name: str, **kwargs) -> "MotionScript":
        """Build from short names such as ``trans-easy`` or ``circ-hard``."""
        kind, _, difficulty = name.partition("-")
        kind = {"trans": "translational", "circ": "circular"}.get(kind, kind)
        return cls(kind, difficulty, **kwargs)


@dataclass(frozen=True, eq=False)
class TrajectorySample:
    t: float
    cam_from_world: Pose
    velocity_world: np.ndarray
    accel_world: np.ndarray
    omega_body: np.ndarray

    @property
    def world_from_cam(self) -> Pose:
        R = self.cam_from_world.rotation.T
        return Pose(R, -(R @ self.cam_from_world.translation))

    @property
    def position(self) -> np.ndarray:
        return -(self.cam_from_world.rotation.T @ self.cam_from_world.translation)


@dataclass(frozen=True)
class ImuNoiseModel:
    gyro_density: float = 6.63e-5
    accel_density: float = 7.35e-4
    gyro_bias: tuple = (0.005, -0.004, 0.003)
    accel_bias: tuple = (0.04, -0.03, 0.05)
    sample_rate: float = 200.0
    gyro_bias_walk: float = 0.0
    accel_bias_walk: float = 0.0

    def __post_init__(self):
        if self.gyro_density < 0 or self.accel_density < 0:
            raise ValueError("noise densities must be non-negative")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")

    @classmethod
    def noiseless(cls, sample_rate=200.0, **kwargs) -> "ImuNoiseModel":
        base = dict(gyro_density=0.0, accel_density=0.0, gyro_bias=(0.0, 0.0, 0.0),
                    accel_bias=(0.0, 0.0, 0.0), sample_rate=sample_rate)
        base.update(kwargs)
        return cls(**base)

    @property
    def gyro_sigma(self) -> float:
        return self.gyro_density * math.sqrt(self.sample_rate)

    @property
    def accel_sigma(self) -> float:
        return self.accel_density * math.sqrt(self.sample_rate)


@dataclass(frozen=True, eq=False)
class ImuSample:
    t: float
    omega: np.ndarray
    accel: np.ndarray


@dataclass(frozen=True, eq=False)
class FrameEvent:
    t: float
    frame_id: int
    true_cam_from_world: Pose


class Wave:
    """Sum of sinusoids ``sum a_i sin(w_i t + p_i)`` with exact derivatives."""

    def __init__(self, amps=(), freqs=(), phases=()):
        self.amps = np.asarray(amps, dtype=float)
        self.freqs = np.asarray(freqs, dtype=float)
        self.phases = np.asarray(phases, dtype=float)

    def __call__(self, t):
        arg = self.freqs * t + self.phases
        s, c = np.sin(arg), np.cos(arg)
        a = self.amps
        w = self.freqs
        return float(a @ s), float((a * w) @ c), float(-(a * w * w) @ s)

    @classmethod
    def random(cls, rng, accel_bound, n=4, freq_range=(1.5, 4.0)):
        """Random smooth wave whose second derivative never exceeds ``accel_bound``."""
        freqs = rng.uniform(*freq_range, size=n)
        phases = rng.uniform(0.0, 2.0 * math.pi, size=n)
        amps = accel_bound / n / freqs**2
        return cls(amps, freqs, phases)


class Trajectory:
    """Base class: subclasses define :meth:`_sample` for any real ``t``."""

    duration: float = math.inf

    def sample(self, t: float) -> TrajectorySample:
        if not (0.0 <= t <= self.duration):
            raise ValueError(f"t={t} outside [0, {self.duration}]")
        return self._sample(t)

    def _sample(self, t: float) -> TrajectorySample:
        raise NotImplementedError


def _look_rotation(psi, beta, gamma):
    """World-from-camera rotation for yaw ``psi``, downward pitch ``beta``, roll ``gamma``."""
    Rz_psi = rot_z(psi)
    Rzy = Rz_psi @ rot_y(beta)
    R_wc = Rzy @ _R_BASE @ rot_z(gamma)
    return R_wc, Rz_psi, Rzy


def _look_sample(t, p, v, a, psi, beta, gamma):
    """Assemble a sample from position derivatives and (value, rate) angle pairs."""
    R_wc, Rz_psi, Rzy = _look_rotation(psi[0], beta[0], gamma[0])
    omega_world = psi[1] * _EZ + beta[1] * (Rz_psi @ _EY) + gamma[1] * (R_wc @ _EZ)
    R_cw = R_wc.T
    return TrajectorySample(
        t=t,
        cam_from_world=Pose(R_cw, -(R_cw @ p)),
        velocity_world=v,
        accel_world=a,
        omega_body=R_cw @ omega_world,
    )


@dataclass(frozen=True)
class _TransParams:
    freq: float
    accel_major: float
    accel_minor: float
    yaw_rate: float
    yaw_wave: tuple  # (amp, freq)
    pitch_wave: tuple  # (amp, freq, phase)
    pert_accel: float
    pert_torque: float


@dataclass(frozen=True)
class _CircParams:
    orbit_rate: float
    osc_accel: float
    osc_freq: float
    roll_rate: float
    pert_accel: float
    pert_torque: float
    pitch_follow: float = 1.0


# calibration constants; see tests/test_motion.py::test_table_conformance
_TRANS = {
    "easy": _TransParams(1.65, 0.15, 0.04, 0.001, (0.0, 1.0), (0.0, 1.0, 0.0), 0.008, 0.0),
    "medium": _TransParams(2.15, 0.33, 0.205, 0.0, (0.0205, 1.0), (0.0, 1.0, 0.0), 0.012, 0.02),
    "hard": _TransParams(2.42, 0.50, 0.385, 0.0, (0.00745, 5.5), (0.00745, 5.5, 0.0), 0.016, 0.03),
}
_CIRC = {
    "easy": _CircParams(0.0505, 0.0115, 0.275, 0.0, 0.0005, 0.002, pitch_follow=0.0),
    "medium": _CircParams(0.1225, 0.047, 1.0, 0.30, 0.003, 0.01),
    "hard": _CircParams(0.19, 0.10, 1.5, 0.34, 0.006, 0.02),
}

_TRUCK_DOLLY = np.array([0.35, 0.94, 0.0]) / math.hypot(0.35, 0.94)


class TranslationalTrajectory(Trajectory):
    """Dolly/truck/pedestal ellipse in front of the object plus seeded shake."""

    def __init__(self, script: MotionScript):
        self.duration = script.duration
        P = _TRANS[script.difficulty]
        self.p = P
        w2 = P.freq**2
        self.major = P.accel_major / w2
        self.minor = P.accel_minor / w2
        self.p0 = np.array([-INITIAL_DISTANCE, 0.0, 0.0])
        rng = np.random.default_rng([script.perturbation_seed, 11])
        self.pert = [Wave.random(rng, P.pert_accel / math.sqrt(3)) for _ in range(3)]
        self.tpert = [Wave.random(rng, P.pert_torque / math.sqrt(3), freq_range=(2.0, 5.0))
                      for _ in range(3)]
        ya, yw = P.yaw_wave
        pa, pw, pp = P.pitch_wave
        self.yaw_wave = Wave([ya], [yw], [0.5 * math.pi])
        self.pitch_wave = Wave([pa], [pw], [pp])

    def _sample(self, t):
        P = self.p
        w = P.freq
        c, s = math.cos(w * t), math.sin(w * t)
        u, vdir = _TRUCK_DOLLY, _EZ
        pos = self.p0 + self.major * (c - 1.0) * u + self.minor * s * vdir
        vel = w * (-self.major * s * u + self.minor * c * vdir)
        acc = -w * w * (self.major * c * u + self.minor * s * vdir)
        for i, wave in enumerate(self.pert):
            x, dx, ddx = wave(t)
            pos[i] += x
            vel[i] += dx
            acc[i] += ddx
        y0, y1, _ = self.yaw_wave(t)
        b0, b1, _ = self.pitch_wave(t)
        tp = [wv(t) for wv in self.tpert]
        psi = (P.yaw_rate * t + y0 + tp[0][0], P.yaw_rate + y1 + tp[0][1])
        beta = (b0 + tp[1][0], b1 + tp[1][1])
        gamma = (tp[2][0], tp[2][1])
        return _look_sample(t, pos, vel, acc, psi, beta, gamma)


class CircularTrajectory(Trajectory):
    """Orbit around the object with a vertical/tangential wobble and optical-axis roll."""

    def __init__(self, script: MotionScript):
        self.duration = script.duration
        P = _CIRC[script.difficulty]
        self.p = P
        w = P.osc_freq
        self.height = P.osc_accel / w**2
        self.phase_amp = self.height / INITIAL_DISTANCE
        rng = np.random.default_rng([script.perturbation_seed, 13])
        self.pert = [Wave.random(rng, P.pert_accel / math.sqrt(3)) for _ in range(3)]
        self.tpert = [Wave.random(rng, P.pert_torque / math.sqrt(3), freq_range=(2.0, 5.0))
                      for _ in range(2)]

    def _sample(self, t):
        P = self.p
        d = INITIAL_DISTANCE
        w = P.osc_freq
        c, s = math.cos(w * t), math.sin(w * t)
        phi = math.pi + P.orbit_rate * t + self.phase_amp * (1.0 - c)
        dphi = P.orbit_rate + self.phase_amp * w * s
        ddphi = self.phase_amp * w * w * c
        h, dh, ddh = self.height * s, self.height * w * c, -self.height * w * w * s
        cp, sp = math.cos(phi), math.sin(phi)
        pos = np.array([d * cp, d * sp, h])
        vel = np.array([-d * sp * dphi, d * cp * dphi, dh])
        acc = np.array([
            -d * cp * dphi**2 - d * sp * ddphi,
            -d * sp * dphi**2 + d * cp * ddphi,
            ddh,
        ])
        for i, wave in enumerate(self.pert):
            x, dx, ddx = wave(t)
            pos[i] += x
            vel[i] += dx
            acc[i] += ddx
        # keep looking at the object (unperturbed orbit point)
        r2 = d * d + h * h
        tp0, tp1 = self.tpert[0](t), self.tpert[1](t)
        psi = (phi - math.pi + tp0[0], dphi + tp0[1])
        k = P.pitch_follow
        beta = (k * math.atan2(h, d) + tp1[0], k * d * dh / r2 + tp1[1])
        gamma = (P.roll_rate * t, P.roll_rate)
        return _look_sample(t, pos, vel, acc, psi, beta, gamma)


class StaticTrajectory(Trajectory):
    """Camera resting at the initial viewpoint."""

    def __init__(self, duration=30.0, cam_from_world: Pose | None = None):
        self.duration = duration
        if cam_from_world is None:
            R_cw = _R_BASE.T
            cam_from_world = Pose(R_cw, -(R_cw @ np.array([-INITIAL_DISTANCE, 0.0, 0.0])))
        self.pose = cam_from_world

    def _sample(self, t):
        z = np.zeros(3)
        return TrajectorySample(t, self.pose, z.copy(), z.copy(), z.copy())


class ConstantVelocityTrajectory(Trajectory):
    """Straight-line motion at constant world velocity with fixed orientation."""

    def __init__(self, velocity, duration=30.0, start=(-INITIAL_DISTANCE, 0.0, 0.0)):
        self.duration = duration
        self.velocity = np.asarray(velocity, dtype=float)
        self.start = np.asarray(start, dtype=float)
        self.R_cw = _R_BASE.T.copy()

    def _sample(self, t):
        p = self.start + self.velocity * t
        z = np.zeros(3)
        return TrajectorySample(t, Pose(self.R_cw, -(self.R_cw @ p)), self.velocity.copy(), z, z.copy())


@lru_cache(maxsize=64)
def make_trajectory(script: MotionScript) -> Trajectory:
    if script.kind == "translational":
        return TranslationalTrajectory(script)
    return CircularTrajectory(script)


def _as_trajectory(script) -> Trajectory:
    return script if isinstance(script, Trajectory) else make_trajectory(script)


def sample_trajectory(script, t: float) -> TrajectorySample:
    return _as_trajectory(script).sample(t)


def discrete_velocity(script, t: float, sample_rate: float) -> np.ndarray:
    """Backward-difference velocity over one IMU period ending at ``t``.

    This is the velocity that makes the synthesized IMU stream integrate back
    onto the true positions exactly, i.e. the integrator's "true" initial
    velocity.
    """
    traj = _as_trajectory(script)
    dt = 1.0 / sample_rate
    return (traj._sample(t).position - traj._sample(t - dt).position) / dt


def imu_times(duration: float, sample_rate: float) -> np.ndarray:
    n = int(math.floor(duration * sample_rate + 1e-9))
    return np.arange(1, n + 1) / sample_rate


def synthesize_imu(script, noise: ImuNoiseModel, rng_seed: int, g=GRAVITY) -> list[ImuSample]:
    """IMU stream at ``noise.sample_rate`` over ``(0, duration]``.

    Each sample carries the mean body rate and specific force over the
    interval ending at its timestamp, so that the propagation step
    reproduces the true pose exactly when noise and bias are zero. Bias and
    white noise with per-sample sigma ``density * sqrt(rate)`` are added on top.
    """
    traj = _as_trajectory(script)
    dt = 1.0 / noise.sample_rate
    times = imu_times(traj.duration, noise.sample_rate)
    n = len(times)
    rng = np.random.default_rng([rng_seed, 7])
    gyro_noise = rng.standard_normal((n, 3)) * noise.gyro_sigma
    accel_noise = rng.standard_normal((n, 3)) * noise.accel_sigma
    gyro_bias = np.tile(np.asarray(noise.gyro_bias, dtype=float), (n, 1))
    accel_bias = np.tile(np.asarray(noise.accel_bias, dtype=float), (n, 1))
    if noise.gyro_bias_walk > 0:
        gyro_bias += np.cumsum(rng.standard_normal((n, 3)), axis=0) * noise.gyro_bias_walk * math.sqrt(dt)
    if noise.accel_bias_walk > 0:
        accel_bias += np.cumsum(rng.standard_normal((n, 3)), axis=0) * noise.accel_bias_walk * math.sqrt(dt)

    prev2 = traj._sample(-dt)
    prev = traj._sample(0.0)
    R_prev = prev.cam_from_world.rotation.T
    v_prev = (prev.position - prev2.position) / dt
    out = []
    for k, t in enumerate(times):
        cur = traj._sample(float(t))
        R_cur = cur.cam_from_world.rotation.T
        omega = log_so3(R_prev.T @ R_cur) / dt
        v_cur = (cur.position - prev.position) / dt
        accel = R_cur.T @ ((v_cur - v_prev) / dt + g)
        out.append(ImuSample(float(t), omega + gyro_bias[k] + gyro_noise[k],
                             accel + accel_bias[k] + accel_noise[k]))
        prev, R_prev, v_prev = cur, R_cur, v_cur
    return out


def schedule_frames(script, frame_rate: float) -> list[FrameEvent]:
    if not frame_rate > 0:
        raise ValueError("frame_rate must be positive")
    traj = _as_trajectory(script)
    n = int(math.ceil(traj.duration * frame_rate - 1e-9))
    out = []
    for j in range(n):
        t = j / frame_rate
        out.append(FrameEvent(t, j, traj.sample(t).cam_from_world))
    return out
