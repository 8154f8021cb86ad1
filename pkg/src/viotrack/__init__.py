"""Flexible-frame-rate visual-inertial object pose tracking with a remote pose oracle."""

from .backend import Backend, BackendConfig, PoseRequest, PoseResponse, ResponseStatus, estimate
from .geom import CameraIntrinsics, Pose
from .harness import (ExperimentConfig, MetricsReport, emit_report, pose_error, projection_error,
                      record_sequence, replay_sequence, run_experiment, run_grid)
from .motion import ImuNoiseModel, MotionScript, synthesize_imu, schedule_frames
from .netlink import LatencyModel, compute_delay, simulated_channel, socket_transport
from .tracker import StateVector, Tracker, TrackerConfig, TrackerStatus, pia_inspect, ppm_step

__all__ = [
    "Backend", "BackendConfig", "PoseRequest", "PoseResponse", "ResponseStatus", "estimate",
    "CameraIntrinsics", "Pose",
    "ExperimentConfig", "MetricsReport", "emit_report", "pose_error", "projection_error",
    "record_sequence", "replay_sequence", "run_experiment", "run_grid",
    "ImuNoiseModel", "MotionScript", "synthesize_imu", "schedule_frames",
    "LatencyModel", "compute_delay", "simulated_channel", "socket_transport",
    "StateVector", "Tracker", "TrackerConfig", "TrackerStatus", "pia_inspect", "ppm_step",
]
