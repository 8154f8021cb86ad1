"""Pose-estimation server stand-in: returns ground truth, optionally contaminated with noise.

A request's payload is an opaque blob of the configured transmission size.
Its first 96 bytes carry the true camera pose (12 little-endian doubles,
row-major rotation then translation), the simulation's replacement for an
image; the rest is zero padding.
"""

from __future__ import annotations

import enum
import logging
import math
import struct
from dataclasses import dataclass

import numpy as np

from .geom import Pose, compose, exp_so3, inverse

logger = logging.getLogger(__name__)

_POSE_STRUCT = struct.Struct("<12d")
POSE_BYTES = _POSE_STRUCT.size


class ResponseStatus(enum.IntEnum):
    OK = 0
    FAILED = 1


@dataclass(frozen=True)
class BackendConfig:
    mode: str = "gt"
    trans_noise_sigma: float = 0.003
    rot_noise_sigma: float = 0.006
    rng_seed: int = 0
    compute_delay: float = 0.0
    world_from_obj: Pose | None = None

    def __post_init__(self):
        if self.mode not in ("gt", "noisy"):
            raise ValueError(f"unknown backend mode {self.mode!r}")
        if self.trans_noise_sigma < 0 or self.rot_noise_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")


@dataclass(frozen=True, eq=False)
class PoseRequest:
    request_id: int
    t0: float
    payload: bytes
    true_pose_hint: Pose | None = None


@dataclass(frozen=True, eq=False)
class PoseResponse:
    request_id: int
    t0: float
    pose: Pose
    status: ResponseStatus = ResponseStatus.OK


def pack_pose(p: Pose) -> bytes:
    return _POSE_STRUCT.pack(*p.rotation.ravel(), *p.translation)


def unpack_pose(buf: bytes) -> Pose:
    vals = np.array(_POSE_STRUCT.unpack(buf[:POSE_BYTES]))
    return Pose(vals[:9].reshape(3, 3), vals[9:])


def make_payload(hint: Pose, size: int = 102400) -> bytes:
    if size < POSE_BYTES:
        raise ValueError(f"payload must hold at least {POSE_BYTES} bytes")
    return pack_pose(hint) + bytes(size - POSE_BYTES)


def parse_payload(payload: bytes) -> Pose:
    """Recover the pose hint; raises ValueError on a malformed blob."""
    if len(payload) < POSE_BYTES:
        raise ValueError("payload too short")
    p = unpack_pose(payload)
    if not (np.all(np.isfinite(p.rotation)) and np.all(np.isfinite(p.translation))):
        raise ValueError("non-finite pose in payload")
    if np.max(np.abs(p.rotation.T @ p.rotation - np.eye(3))) > 1e-6:
        raise ValueError("payload rotation is not orthonormal")
    return p


def _noise_rng(cfg: BackendConfig, request_id: int) -> np.random.Generator:
    return np.random.default_rng([cfg.rng_seed, request_id & 0xFFFFFFFFFFFFFFFF])


def perturb(cam_from_world: Pose, cfg: BackendConfig, rng: np.random.Generator) -> Pose:
    """Gaussian translation noise plus a random-axis rotation about the object centre."""
    world_from_obj = cfg.world_from_obj or Pose.identity()
    cam_from_obj = compose(cam_from_world, world_from_obj)
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = abs(rng.standard_normal()) * cfg.rot_noise_sigma
    dt = rng.standard_normal(3) * cfg.trans_noise_sigma
    noisy = Pose(cam_from_obj.rotation @ exp_so3(angle * axis), cam_from_obj.translation + dt)
    return compose(noisy, inverse(world_from_obj))


def estimate(req: PoseRequest, cfg: BackendConfig) -> PoseResponse:
    try:
        truth = parse_payload(req.payload)
    except ValueError as exc:
        logger.info("request %s rejected: %s", req.request_id, exc)
        return PoseResponse(req.request_id, req.t0, Pose.identity(), ResponseStatus.FAILED)
    if cfg.mode == "gt":
        return PoseResponse(req.request_id, req.t0, truth)
    return PoseResponse(req.request_id, req.t0, perturb(truth, cfg, _noise_rng(cfg, req.request_id)))


class Backend:
    """Stateful request handler enforcing one answer per request id."""

    def __init__(self, cfg: BackendConfig):
        self.cfg = cfg
        self._seen: set[int] = set()

    def handle(self, req: PoseRequest) -> PoseResponse:
        if req.request_id in self._seen:
            return PoseResponse(req.request_id, req.t0, Pose.identity(), ResponseStatus.FAILED)
        self._seen.add(req.request_id)
        return estimate(req, self.cfg)


def serve(transport, cfg: BackendConfig, sleep=None) -> int:
    """Answer requests from ``transport`` until the peer disconnects.

    ``transport`` needs ``recv_request()`` returning a request or ``None`` at
    end of stream, and ``send_response(resp)``. Returns the number of replies.
    """
    backend = Backend(cfg)
    count = 0
    while True:
        req = transport.recv_request()
        if req is None:
            return count
        resp = backend.handle(req)
        if cfg.compute_delay > 0 and sleep is not None:
            sleep(cfg.compute_delay)
        transport.send_response(resp)
        count += 1


def standalone_projection_error(cfg: BackendConfig, truth: Pose, bbox3d, K, n: int, seed: int = 0) -> float:
    """Mean bbox reprojection error of ``n`` noisy estimates of ``truth``."""
    from .geom import project_points

    world_from_obj = cfg.world_from_obj or Pose.identity()
    ref = project_points(K, compose(truth, world_from_obj), bbox3d)
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(n):
        est = perturb(truth, cfg, rng)
        uv = project_points(K, compose(est, world_from_obj), bbox3d)
        total += float(np.mean(np.linalg.norm(uv - ref, axis=1)))
    return total / n if n else math.nan
