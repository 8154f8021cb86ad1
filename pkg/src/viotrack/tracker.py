"""Frontend client: IMU pose propagation, pose inspection and refinement with bias correction."""

from __future__ import annotations

import enum
import itertools
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import geom
from .backend import PoseRequest, PoseResponse, ResponseStatus, make_payload
from .geom import GRAVITY, CameraIntrinsics, NotProjectable, Pose
from .motion import FrameEvent, ImuSample

logger = logging.getLogger(__name__)


class TrackerStatus(enum.Enum):
    FINE_POSE = "finePose"
    WRONG_POSE = "wrongPose"
    TRACKING_LOST = "trackingLost"


class TimestampError(ValueError):
    pass


@dataclass(frozen=True)
class PiaConfig:
    px_e: float = 10.0
    px_m: float = 10.0
    base_rate: float = 30.0
    area_divisor: float = 100.0

    def __post_init__(self):
        if min(self.px_e, self.px_m, self.base_rate, self.area_divisor) <= 0:
            raise ValueError("PIA parameters must be positive")

    def thr_2d(self, frame_rate: float) -> float:
        return self.px_e + self.px_m * self.base_rate / frame_rate

    def thr_area(self, K: CameraIntrinsics) -> float:
        return K.area / self.area_divisor


@dataclass(frozen=True, eq=False)
class StateVector:
    cam_from_world: Pose
    velocity_world: np.ndarray
    gyro_bias: np.ndarray
    accel_bias_world: np.ndarray
    t: float

    @property
    def rotation_wc(self) -> np.ndarray:
        return self.cam_from_world.rotation.T

    @property
    def position(self) -> np.ndarray:
        return -(self.cam_from_world.rotation.T @ self.cam_from_world.translation)


def _advance(state: StateVector, omega, accel, t: float, g) -> StateVector:
    dt = t - state.t
    R_wc = geom.integrate_rotation(state.rotation_wc, omega - state.gyro_bias, dt)
    v = geom.integrate_velocity(state.velocity_world, R_wc, accel, g, dt) - dt * state.accel_bias_world
    p = geom.integrate_translation(state.position, v, dt)
    R_cw = R_wc.T
    return StateVector(Pose(R_cw, -(R_cw @ p)), v, state.gyro_bias, state.accel_bias_world, t)


def ppm_step(state: StateVector, s: ImuSample, g=GRAVITY, max_gap: float | None = None) -> StateVector:
    """Propagate the state to the timestamp of IMU sample ``s``.

    The gyro bias is removed from the body rate before the rotation update;
    the world-frame accelerometer bias is removed after rotating the specific
    force into the world frame.
    """
    gap = s.t - state.t
    if not gap > 0:
        raise TimestampError(f"non-monotonic IMU timestamp {s.t} after {state.t}")
    if max_gap is not None and gap > max_gap:
        raise TimestampError(f"IMU gap {gap:.6f}s exceeds {max_gap:.6f}s")
    return _advance(state, s.omega, s.accel, s.t, g)


def pia_inspect(pose_now: Pose, pose_last: Pose | None, bbox3d, K: CameraIntrinsics,
                frame_rate: float, cfg: PiaConfig = PiaConfig()) -> TrackerStatus:
    """Classify a propagated object pose.

    Area check first: a box projecting behind the camera, or whose hull
    covers less than ``frame area / area_divisor`` of the image, means
    tracking is lost. Otherwise the
    mean vertex offset against the previous frame's pose is compared with
    ``px_e + px_m * base_rate / frame_rate``.
    """
    try:
        now = geom.project_points(K, pose_now, bbox3d)
    except NotProjectable:
        return TrackerStatus.TRACKING_LOST
    if geom.visible_hull_area(now, K.width, K.height) < cfg.thr_area(K):
        return TrackerStatus.TRACKING_LOST
    if pose_last is None:
        return TrackerStatus.FINE_POSE
    try:
        last = geom.project_points(K, pose_last, bbox3d)
    except NotProjectable:
        return TrackerStatus.WRONG_POSE
    offset = float(np.mean(np.linalg.norm(now - last, axis=1)))
    if offset >= cfg.thr_2d(frame_rate):
        return TrackerStatus.WRONG_POSE
    return TrackerStatus.FINE_POSE


def bscm_gyro_bias(R_imu, R_real, dt: float) -> np.ndarray:
    """Angular-rate bias from the rotation discrepancy ``R_imu @ R_real^-1`` over ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return geom.euler_xyz(R_imu @ np.asarray(R_real).T) / dt


@dataclass(frozen=True, eq=False)
class RefinementRecord:
    """Two consecutive backend camera poses, stored world-from-camera.

    The translations are therefore camera positions in the world frame.
    """
    t_prev: float
    t_curr: float
    backend_pose_prev: Pose
    backend_pose_curr: Pose

    def __post_init__(self):
        if not self.t_curr > self.t_prev:
            raise ValueError("t_curr must be after t_prev")


def bscm_accel_bias(rec: RefinementRecord, V_imu_mid):
    """Velocity and acceleration bias from two backend positions.

    Returns ``(V_bias, a_bias)`` where ``V_bias = V_imu_mid - V_avg`` and
    ``a_bias = V_bias / (t_curr - t_prev)``.
    """
    span = rec.t_curr - rec.t_prev
    if span < 1e-6:
        raise ValueError("degenerate refinement interval")
    V_avg = (rec.backend_pose_curr.translation - rec.backend_pose_prev.translation) / span
    V_bias = np.asarray(V_imu_mid, dtype=float) - V_avg
    return V_bias, V_bias / span


def init_static(samples, g=GRAVITY, R_world_from_body=None):
    """Bias estimate from a static stretch of IMU data.

    Returns ``(gyro_bias, accel_bias_world)``; the accelerometer bias is the
    mean specific force rotated to the world minus the gravity reaction.
    """
    if len(samples) < 50:
        raise ValueError("static initialization needs at least 50 samples")
    omega = np.mean([s.omega for s in samples], axis=0)
    accel = np.mean([s.accel for s in samples], axis=0)
    R = np.eye(3) if R_world_from_body is None else np.asarray(R_world_from_body)
    return omega, R @ accel - np.asarray(g)


@dataclass
class _Entry:
    t: float
    sample: ImuSample | None
    state: StateVector | None


class ImuBuffer:
    """Time-ordered IMU samples with the state reached after each one."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._entries: deque[_Entry] = deque(maxlen=capacity)

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def append(self, sample: ImuSample | None, state: StateVector | None, t: float | None = None):
        t = sample.t if t is None else t
        if self._entries and t < self._entries[-1].t:
            raise TimestampError("buffer entries must be time ordered")
        self._entries.append(_Entry(t, sample, state))

    def samples_after(self, t: float) -> list[ImuSample]:
        return [e.sample for e in self._entries if e.t > t and e.sample is not None]

    def start_time(self) -> float | None:
        return self._entries[0].t if self._entries else None

    def reset(self, entries):
        self._entries = deque(entries, maxlen=self.capacity)

    def velocity_at(self, t: float) -> np.ndarray:
        """Propagated velocity linearly interpolated at ``t``."""
        prev = None
        for e in self._entries:
            if e.state is None:
                continue
            if e.t >= t:
                if prev is None or e.t == t:
                    return e.state.velocity_world
                w = (t - prev.t) / (e.t - prev.t)
                return (1.0 - w) * prev.state.velocity_world + w * e.state.velocity_world
            prev = e
        if prev is None:
            raise LookupError("no propagated state in buffer")
        return prev.state.velocity_world


@dataclass(frozen=True, eq=False)
class PendingRequest:
    request_id: int
    t0: float
    state_at_t0: StateVector | None


@dataclass
class TrackerConfig:
    K: CameraIntrinsics = geom.DEFAULT_INTRINSICS
    bbox3d: np.ndarray = field(default_factory=lambda: geom.box_corners((0.10, 0.08, 0.12)))
    world_from_obj: Pose = field(default_factory=Pose.identity)
    frame_rate: float = 60.0
    imu_rate: float = 200.0
    pia: PiaConfig = field(default_factory=PiaConfig)
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())
    # smoothing factors for the bias/velocity corrections; 1.0 replaces outright
    gyro_alpha: float = 1.0
    accel_alpha: float = 1.0
    velocity_gain: float = 1.0
    disable_bscm: bool = False
    disable_pia: bool = False
    request_size: int = 102400
    buffer_seconds: float = 2.0
    request_timeout: float = 1.0
    initial_gyro_bias: tuple = (0.0, 0.0, 0.0)
    initial_accel_bias: tuple = (0.0, 0.0, 0.0)


class Mode(enum.Enum):
    UNINITIALIZED = "uninitialized"
    TRACKING = "tracking"
    LOST = "lost"


class Tracker:
    """Single-writer frontend state machine.

    Feed IMU samples with :meth:`on_imu`, camera frames with :meth:`on_frame`
    and backend replies with :meth:`on_response`, in timestamp order.
    """

    def __init__(self, cfg: TrackerConfig, initial_state: StateVector | None = None):
        self.cfg = cfg
        self.buffer = ImuBuffer(max(int(cfg.buffer_seconds * cfg.imu_rate), int(0.5 * cfg.imu_rate) + 1))
        self.state: StateVector | None = None
        self.mode = Mode.UNINITIALIZED
        self.pending: PendingRequest | None = None
        self._ids = itertools.count(1)
        self._last_sample: ImuSample | None = None
        self._last_backend: tuple[float, Pose] | None = None
        self._last_applied_t0 = -np.inf
        self._lost_responses = 0
        self._pose_last: Pose | None = None
        self.refinements: list[tuple[float, float]] = []
        self.max_gap = 2.0 / cfg.imu_rate + 1e-9
        if initial_state is not None:
            self.state = initial_state
            self.mode = Mode.TRACKING
            self.buffer.append(None, initial_state, t=initial_state.t)

    @property
    def valid(self) -> bool:
        return self.mode is Mode.TRACKING

    # --- PPM -----------------------------------------------------------
    def on_imu(self, sample: ImuSample):
        if self._last_sample is not None and sample.t <= self._last_sample.t:
            raise TimestampError(f"non-monotonic IMU timestamp {sample.t}")
        self._last_sample = sample
        if self.state is None:
            self.buffer.append(sample, None)
            return
        self.state = ppm_step(self.state, sample, self.cfg.gravity, self.max_gap)
        self.buffer.append(sample, self.state)

    def state_at(self, t: float) -> StateVector | None:
        """State extrapolated to ``t`` with the latest IMU sample, without committing it."""
        if self.state is None:
            return None
        if t <= self.state.t or self._last_sample is None:
            return self.state
        s = self._last_sample
        return _advance(self.state, s.omega, s.accel, t, self.cfg.gravity)

    def object_pose_at(self, t: float) -> Pose | None:
        st = self.state_at(t)
        return None if st is None else geom.compose(st.cam_from_world, self.cfg.world_from_obj)

    # --- PIM -----------------------------------------------------------
    def on_frame(self, frame: FrameEvent):
        """Inspect the pose at ``frame.t``; returns ``(status, request or None)``."""
        cfg = self.cfg
        if self.pending is not None and frame.t - self.pending.t0 > cfg.request_timeout:
            logger.debug("request %s timed out", self.pending.request_id)
            self.pending = None
        if self.state is None:
            return TrackerStatus.TRACKING_LOST, self._maybe_request(frame)

        pose_now = self.object_pose_at(frame.t)
        if cfg.disable_pia:
            status = TrackerStatus.FINE_POSE
        else:
            status = pia_inspect(pose_now, self._pose_last, cfg.bbox3d, cfg.K, cfg.frame_rate, cfg.pia)
        self._pose_last = pose_now

        if self.mode is Mode.LOST:
            return TrackerStatus.TRACKING_LOST, self._maybe_request(frame)
        if status is TrackerStatus.FINE_POSE:
            return status, self._maybe_request(frame)
        # any failure resets the refinement loop and asks the backend right away
        self.pending = None
        if status is TrackerStatus.TRACKING_LOST:
            logger.debug("tracking lost at t=%.4f", frame.t)
            self.mode = Mode.LOST
            self._last_backend = None
            self._lost_responses = 0
        return status, self._maybe_request(frame)

    def _maybe_request(self, frame: FrameEvent) -> PoseRequest | None:
        if self.pending is not None:
            return None
        rid = next(self._ids)
        self.pending = PendingRequest(rid, frame.t, self.state_at(frame.t))
        return PoseRequest(rid, frame.t, make_payload(frame.true_cam_from_world, self.cfg.request_size),
                           frame.true_cam_from_world)

    # --- PRM -----------------------------------------------------------
    def on_response(self, response: PoseResponse, now: float) -> bool:
        """Apply a backend reply received at ``now``; returns False when discarded."""
        pending = self.pending
        if pending is None or response.request_id != pending.request_id:
            logger.debug("discarding stale response %s", response.request_id)
            return False
        self.pending = None
        if response.status is not ResponseStatus.OK or pending.t0 <= self._last_applied_t0:
            return False
        t0 = pending.t0
        start = self.buffer.start_time()
        if start is not None and self.state is not None and start > t0 + self.max_gap:
            logger.warning("IMU buffer no longer covers t0=%.4f", t0)
            return False

        cfg = self.cfg
        W_curr = geom.inverse(response.pose)
        front = pending.state_at_t0
        if self.state is None or front is None:
            velocity = np.zeros(3)
            gyro_bias = np.asarray(cfg.initial_gyro_bias, dtype=float)
            accel_bias = np.asarray(cfg.initial_accel_bias, dtype=float)
        else:
            velocity = front.velocity_world
            gyro_bias = front.gyro_bias
            accel_bias = front.accel_bias_world
            if self._last_backend is not None and not cfg.disable_bscm and t0 - self._last_backend[0] >= 1e-6:
                t_prev, W_prev = self._last_backend
                span = t0 - t_prev
                R_prev_T = W_prev.rotation.T
                residual_g = bscm_gyro_bias(R_prev_T @ front.rotation_wc, R_prev_T @ W_curr.rotation, span)
                mid = 0.5 * (t_prev + t0)
                rec = RefinementRecord(t_prev, t0, W_prev, W_curr)
                # each propagated velocity is the mean over the sample interval ending at
                # its timestamp, so it describes the instant half a sample earlier
                V_mid = self.buffer.velocity_at(mid + 0.5 / cfg.imu_rate)
                V_bias, residual_a = bscm_accel_bias(rec, V_mid)
                gyro_bias = gyro_bias + cfg.gyro_alpha * residual_g
                new_accel_bias = accel_bias + cfg.accel_alpha * residual_a
                correction = V_bias + (new_accel_bias - accel_bias) * (t0 - mid)
                velocity = velocity - cfg.velocity_gain * correction
                accel_bias = new_accel_bias

        self._rebase(StateVector(response.pose, velocity, gyro_bias, accel_bias, t0))
        self._last_backend = (t0, W_curr)
        self._last_applied_t0 = t0
        self.refinements.append((t0, now))

        if self.mode is Mode.UNINITIALIZED:
            self.mode = Mode.TRACKING
        elif self.mode is Mode.LOST:
            self._lost_responses += 1
            if self._lost_responses >= (1 if cfg.disable_bscm else 2):
                self.mode = Mode.TRACKING
        return True

    def _rebase(self, state: StateVector):
        samples = self.buffer.samples_after(state.t)
        entries = [_Entry(state.t, None, state)]
        for s in samples:
            state = ppm_step(state, s, self.cfg.gravity, self.max_gap)
            entries.append(_Entry(s.t, s, state))
        self.buffer.reset(entries)
        self.state = state


def tracker_on_frame(tracker: Tracker, frame: FrameEvent):
    return tracker.on_frame(frame)


def prm_on_response(tracker: Tracker, response: PoseResponse, now: float) -> StateVector | None:
    tracker.on_response(response, now)
    return tracker.state
