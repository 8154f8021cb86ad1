"""Shared drivers for the tracker and acceptance tests."""

import numpy as np

from viotrack import geom
from viotrack.backend import BackendConfig, estimate
from viotrack.motion import (ImuNoiseModel, Trajectory, _look_sample, discrete_velocity,
                             schedule_frames, synthesize_imu)
from viotrack.tracker import StateVector, Tracker, TrackerConfig, TrackerStatus

K = geom.DEFAULT_INTRINSICS
BOX = geom.box_corners((0.10, 0.08, 0.12))


def truth_state(traj, t=0.0, rate=200.0, gyro_bias=(0, 0, 0), accel_bias=(0, 0, 0)):
    return StateVector(traj.sample(t).cam_from_world, discrete_velocity(traj, t, rate),
                       np.asarray(gyro_bias, float), np.asarray(accel_bias, float), t)


class Feed:
    def __init__(self, samples):
        self.samples, self.i = samples, 0


def feed(trk, src, t):
    """Deliver every IMU sample stamped at or before ``t``."""
    while src.i < len(src.samples) and src.samples[src.i].t <= t:
        trk.on_imu(src.samples[src.i])
        src.i += 1


def closed_loop(traj, noise, cycles, rate=60.0, delay=0.05, **cfg):
    """Drive a tracker with an exact backend answering after a fixed delay.

    Stops once ``cycles`` replies beyond the initializing one were applied;
    returns the tracker and its state after each applied reply.
    """
    trk = Tracker(TrackerConfig(frame_rate=rate, **cfg))
    imu = synthesize_imu(traj, noise, 0)
    frames = schedule_frames(traj, rate)
    events = [(s.t, 0, s) for s in imu] + [(f.t, 1, f) for f in frames]
    events.sort(key=lambda e: (e[0], e[1]))
    inflight = []
    history = []
    for t, kind, obj in events:
        while inflight and inflight[0][0] <= t:
            due, req = inflight.pop(0)
            if trk.on_response(estimate(req, BackendConfig()), due):
                history.append(trk.state)
        if kind == 0:
            trk.on_imu(obj)
        else:
            _, req = trk.on_frame(obj)
            if req is not None:
                inflight.append((t + delay, req))
        if len(history) > cycles:
            break
    return trk, history


class YawAway(Trajectory):
    """Camera at rest looking at the object, then turning left at 1 rad/s from t = 0.5 s."""

    def __init__(self, duration=3.0):
        self.duration = duration

    def _sample(self, t):
        p = np.array([-1.2, 0.0, 0.0])
        z = np.zeros(3)
        psi = (0.0, 0.0) if t <= 0.5 else (t - 0.5, 1.0)
        return _look_sample(t, p, z.copy(), z.copy(), psi, (0.0, 0.0), (0.0, 0.0))


def fov_exit(rate=60.0, seed=0):
    """Frame ids of the true field-of-view exit and of the tracker's first trackingLost."""
    traj = YawAway()
    trk = Tracker(TrackerConfig(frame_rate=rate), truth_state(traj))
    imu = synthesize_imu(traj, ImuNoiseModel(), seed)
    frames = schedule_frames(traj, rate)
    # exit: first frame whose true box no longer shows in the image at all
    exit_id = next(f.frame_id for f in frames
                   if geom.visible_hull_area(geom.project_points(K, f.true_cam_from_world, BOX),
                                             K.width, K.height) == 0.0)
    src = Feed(imu)
    for f in frames:
        feed(trk, src, f.t)
        status, _ = trk.on_frame(f)
        if status is TrackerStatus.TRACKING_LOST:
            return exit_id, f.frame_id
    return exit_id, None
