"""Experiment runner: drives motion, tracker, link and backend on a virtual clock.

Events live in a binary heap keyed by ``(time, priority, sequence)``; at equal
times IMU samples come first, then camera frames, then replies reaching the
tracker, then request processing at the backend.  Metrics are sampled at every
camera frame from the tracker's pose extrapolated to the frame time.
"""

from __future__ import annotations

import csv
import dataclasses
import heapq
import io
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geom
from .backend import Backend, BackendConfig, PoseResponse, ResponseStatus
from .geom import CameraIntrinsics, NotProjectable, Pose
from .motion import (DIFFICULTIES, FrameEvent, ImuNoiseModel, ImuSample, MotionScript,
                     discrete_velocity, sample_trajectory, schedule_frames, synthesize_imu)
from .netlink import LatencyModel, SimulatedLink, SocketTransport
from .tracker import StateVector, Tracker, TrackerConfig, TrackerStatus

logger = logging.getLogger(__name__)

PRIO_IMU, PRIO_FRAME, PRIO_NETWORK, PRIO_BACKEND = range(4)

FRAME_RATES = (30.0, 60.0, 90.0, 120.0)
BACKENDS = ("gt", "noisy")
SCRIPTS = tuple(f"{k}-{d}" for k in ("trans", "circ") for d in DIFFICULTIES)

# reference-phone slowdown used for the derived timing column
PIXEL2_FACTOR = 2.46

# Correction gains per backend.  An exact backend can be trusted outright;
# a noisy one needs the corrections smoothed over many refinement cycles.
DEFAULT_GAINS = {
    "gt": {"gyro_alpha": 1.0, "accel_alpha": 1.0, "velocity_gain": 1.0},
    "noisy": {"gyro_alpha": 0.05, "accel_alpha": 0.02, "velocity_gain": 0.1},
}

SEQUENCE_MAGIC = "# viotrack-sequence v1"


class ConfigError(ValueError):
    pass


class SequenceFormatError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def _pose_to_list(p: Pose) -> list:
    return [float(x) for x in (*p.rotation.ravel(), *p.translation)]


def _pose_from_list(vals) -> Pose:
    a = np.asarray(vals, dtype=float)
    return Pose(a[:9].reshape(3, 3), a[9:12])


@dataclass(frozen=True)
class ExperimentConfig:
    script: str = "trans-easy"
    frame_rate: float = 60.0
    imu_rate: float = 200.0
    backend: str = "gt"
    trans_noise_sigma: float = 0.003
    rot_noise_sigma: float = 0.006
    latency: LatencyModel = field(default_factory=LatencyModel)
    duration: float = 30.0
    seed: int = 0
    disable_bscm: bool = False
    disable_pia: bool = False
    disable_backend: bool = False
    bbox_half_extents: tuple = (0.10, 0.08, 0.12)
    world_from_obj: Pose = field(default_factory=Pose.identity)
    K: CameraIntrinsics = geom.DEFAULT_INTRINSICS
    imu_noise: ImuNoiseModel | None = None
    gyro_alpha: float | None = None
    accel_alpha: float | None = None
    velocity_gain: float | None = None
    transport: str = "sim"
    addr: str | None = None

    def __post_init__(self):
        try:
            MotionScript.parse(self.script)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not (self.frame_rate > 0 and self.imu_rate > 0):
            raise ConfigError("rates must be positive")
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.transport not in ("sim", "tcp"):
            raise ConfigError(f"unknown transport {self.transport!r}")
        if self.transport == "tcp" and not self.addr:
            raise ConfigError("tcp transport needs an address")

    @property
    def motion_script(self) -> MotionScript:
        return MotionScript.parse(self.script, duration=self.duration, perturbation_seed=self.seed)

    @property
    def noise(self) -> ImuNoiseModel:
        base = self.imu_noise or ImuNoiseModel()
        return dataclasses.replace(base, sample_rate=self.imu_rate)

    @property
    def backend_config(self) -> BackendConfig:
        return BackendConfig(self.backend, self.trans_noise_sigma, self.rot_noise_sigma,
                             rng_seed=self.seed, world_from_obj=self.world_from_obj)

    def gains(self) -> dict:
        out = dict(DEFAULT_GAINS[self.backend])
        for k in out:
            if getattr(self, k) is not None:
                out[k] = getattr(self, k)
        return out

    def tracker_config(self) -> TrackerConfig:
        return TrackerConfig(
            K=self.K,
            bbox3d=geom.box_corners(self.bbox_half_extents),
            world_from_obj=self.world_from_obj,
            frame_rate=self.frame_rate,
            imu_rate=self.imu_rate,
            disable_bscm=self.disable_bscm,
            disable_pia=self.disable_pia,
            request_size=self.latency.request_size,
            **self.gains(),
        )

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["latency"] = dataclasses.asdict(self.latency)
        d["latency"]["extra_delay"] = list(self.latency.extra_delay)
        d["world_from_obj"] = _pose_to_list(self.world_from_obj)
        d["K"] = dataclasses.asdict(self.K)
        d["imu_noise"] = None if self.imu_noise is None else dataclasses.asdict(self.imu_noise)
        d["bbox_half_extents"] = list(self.bbox_half_extents)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "latency" in d:
            lat = dict(d["latency"])
            lat["extra_delay"] = tuple(lat.get("extra_delay", (0.0, 30.0)))
            d["latency"] = LatencyModel(**lat)
        if "world_from_obj" in d:
            d["world_from_obj"] = _pose_from_list(d["world_from_obj"])
        if "K" in d:
            d["K"] = CameraIntrinsics(**d["K"])
        if d.get("imu_noise") is not None:
            noise = {k: tuple(v) if isinstance(v, list) else v for k, v in d["imu_noise"].items()}
            d["imu_noise"] = ImuNoiseModel(**noise)
        if "bbox_half_extents" in d:
            d["bbox_half_extents"] = tuple(d["bbox_half_extents"])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)


def pose_error(est: Pose, truth: Pose) -> tuple[float, float]:
    """Position error in mm and orientation error in degrees."""
    pos = float(np.linalg.norm(est.translation - truth.translation)) * 1000.0
    ang = geom.rotation_angle(est.rotation @ truth.rotation.T)
    return pos, math.degrees(ang)


def projection_error(est: Pose, truth: Pose, bbox3d, K: CameraIntrinsics) -> float:
    """Mean pixel distance between the box vertices projected under ``est`` and ``truth``.

    Both poses are object-to-camera. Raises NotProjectable if any vertex is
    behind either camera.
    """
    a = geom.project_points(K, est, bbox3d)
    b = geom.project_points(K, truth, bbox3d)
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def _nanmean(x) -> float:
    x = np.asarray(x, dtype=float)
    ok = ~np.isnan(x)
    return float(np.mean(x[ok])) if ok.any() else math.nan


def _nanmax(x) -> float:
    x = np.asarray(x, dtype=float)
    ok = ~np.isnan(x)
    return float(np.max(x[ok])) if ok.any() else math.nan


@dataclass(eq=False)
class MetricsReport:
    """Per-frame errors plus summary statistics of one run.

    Series entries are NaN for frames without an estimate (before the first
    backend reply) or whose box did not project. Equality is bitwise over
    everything except the wall-clock timing stats.
    """
    script: str
    frame_rate: float
    backend: str
    t: np.ndarray
    pos_mm: np.ndarray
    orient_deg: np.ndarray
    proj_px: np.ndarray
    statuses: list = field(default_factory=list)
    refinements: list = field(default_factory=list)
    tracking_lost: int = 0
    unprojectable: int = 0
    responses: int = 0  # replies delivered to the tracker, applied or not
    timing: dict = field(default_factory=dict)
    # (time, error before, error after) in px for each applied correction,
    # when ground truth is available between frames
    corrections: list = field(default_factory=list)

    @property
    def n_frames(self) -> int:
        return len(self.t)

    @property
    def mean_pos_mm(self) -> float:
        return _nanmean(self.pos_mm)

    @property
    def max_pos_mm(self) -> float:
        return _nanmax(self.pos_mm)

    @property
    def mean_orient_deg(self) -> float:
        return _nanmean(self.orient_deg)

    @property
    def max_orient_deg(self) -> float:
        return _nanmax(self.orient_deg)

    @property
    def mean_proj_px(self) -> float:
        return _nanmean(self.proj_px)

    @property
    def max_proj_px(self) -> float:
        return _nanmax(self.proj_px)

    @property
    def n_refinements(self) -> int:
        return len(self.refinements)

    def window_mean(self, metric: str, t_from: float, t_to: float = math.inf) -> float:
        x = getattr(self, metric)
        sel = (self.t >= t_from) & (self.t <= t_to)
        return _nanmean(x[sel])

    def _key(self):
        return (
            self.script, float(self.frame_rate).hex(), self.backend,
            self.t.tobytes(), self.pos_mm.tobytes(), self.orient_deg.tobytes(), self.proj_px.tobytes(),
            tuple(self.statuses), tuple((float(a).hex(), float(b).hex()) for a, b in self.refinements),
            self.tracking_lost, self.unprojectable, self.responses,
        )

    def __eq__(self, other):
        if not isinstance(other, MetricsReport):
            return NotImplemented
        return self._key() == other._key()

    def summary(self) -> dict:
        return {
            "script": self.script,
            "frame_rate": self.frame_rate,
            "backend": self.backend,
            "frames": self.n_frames,
            "mean_pos_mm": self.mean_pos_mm,
            "max_pos_mm": self.max_pos_mm,
            "mean_orient_deg": self.mean_orient_deg,
            "max_orient_deg": self.max_orient_deg,
            "mean_proj_px": self.mean_proj_px,
            "max_proj_px": self.max_proj_px,
            "refinements": self.n_refinements,
            "tracking_lost": self.tracking_lost,
            "unprojectable": self.unprojectable,
            "responses": self.responses,
        }


class _Timer:
    def __init__(self):
        self.samples = {"ppm": [], "pim": [], "prm": []}

    def stats(self) -> dict:
        out = {}
        for stage, xs in self.samples.items():
            arr = np.asarray(xs, dtype=float) / 1e3
            mean = float(arr.mean()) if arr.size else math.nan
            out[stage] = {
                "calls": int(arr.size),
                "mean_us": mean,
                "max_us": float(arr.max()) if arr.size else math.nan,
                "pixel2_equiv_us": mean * PIXEL2_FACTOR,
            }
        return out


class _SimBackend:
    def __init__(self, cfg: BackendConfig):
        self.backend = Backend(cfg)

    def process(self, req):
        return self.backend.handle(req)

    def close(self):
        pass


class _TcpBackend:
    """Synchronous round trip to a remote server; timing still follows the virtual link."""

    def __init__(self, addr: str):
        self.conn = SocketTransport.connect(addr)

    def process(self, req):
        self.conn.send(req)
        resp = self.conn.recv()
        if resp is None:
            raise ConnectionError("backend closed the connection")
        return resp

    def close(self):
        self.conn.close()


def _initial_state(cfg: ExperimentConfig, frames) -> StateVector:
    tcfg = cfg.tracker_config()
    script = cfg.motion_script
    return StateVector(frames[0].true_cam_from_world, discrete_velocity(script, 0.0, cfg.imu_rate),
                       np.asarray(tcfg.initial_gyro_bias, dtype=float),
                       np.asarray(tcfg.initial_accel_bias, dtype=float), 0.0)


def _simulate(cfg: ExperimentConfig, imu: list[ImuSample], frames: list[FrameEvent],
              recorded: list[tuple[float, PoseResponse]] | None = None, log: list | None = None,
              truth_at=None) -> MetricsReport:
    """Core event loop shared by live runs and replays.

    With ``recorded`` replies the backend and link are bypassed and each reply
    is handed to the tracker at its recorded time. ``log`` collects the
    replies actually delivered, for recording. ``truth_at(t)`` (camera pose)
    enables the per-correction error log.
    """
    tcfg = cfg.tracker_config()
    timer = _Timer()
    initial = _initial_state(cfg, frames) if cfg.disable_backend and frames else None
    tracker = Tracker(tcfg, initial)

    heap: list = []
    seq = itertools.count()

    def push(t, prio, kind, obj):
        heapq.heappush(heap, (t, prio, next(seq), kind, obj))

    for s in imu:
        push(s.t, PRIO_IMU, "imu", s)
    for f in frames:
        push(f.t, PRIO_FRAME, "frame", f)
    if recorded is not None:
        for t, resp in recorded:
            push(t, PRIO_NETWORK, "reply", resp)

    link = None
    server = None
    if recorded is None and not cfg.disable_backend:
        link = SimulatedLink(cfg.latency, stream=cfg.seed)
        server = _TcpBackend(cfg.addr) if cfg.transport == "tcp" else _SimBackend(cfg.backend_config)

    bbox = tcfg.bbox3d
    K = tcfg.K
    w_from_o = tcfg.world_from_obj
    n = len(frames)
    ts = np.empty(n)
    pos = np.full(n, math.nan)
    ang = np.full(n, math.nan)
    proj = np.full(n, math.nan)
    statuses = []
    lost = 0
    unprojectable = 0
    clock = time.perf_counter_ns
    fi = 0
    corrections = []
    responses = 0

    def error_at(t):
        st = tracker.state_at(t)
        if st is None or t > cfg.duration:
            return math.nan
        truth = truth_at(t)
        try:
            return projection_error(geom.compose(st.cam_from_world, w_from_o),
                                    geom.compose(truth, w_from_o), bbox, K)
        except NotProjectable:
            return math.nan

    try:
        while heap:
            t, _, _, kind, obj = heapq.heappop(heap)
            if kind == "imu":
                t_a = clock()
                tracker.on_imu(obj)
                timer.samples["ppm"].append(clock() - t_a)
            elif kind == "frame":
                t_a = clock()
                status, req = tracker.on_frame(obj)
                timer.samples["pim"].append(clock() - t_a)
                statuses.append(status.value)
                if status is TrackerStatus.TRACKING_LOST:
                    lost += 1
                est = tracker.state_at(obj.t)
                ts[fi] = obj.t
                if est is not None:
                    pos[fi], ang[fi] = pose_error(est.cam_from_world, obj.true_cam_from_world)
                    try:
                        proj[fi] = projection_error(geom.compose(est.cam_from_world, w_from_o),
                                                    geom.compose(obj.true_cam_from_world, w_from_o), bbox, K)
                    except NotProjectable:
                        unprojectable += 1
                fi += 1
                if req is not None and link is not None:
                    delivery = link.client.send(req, t)
                    if delivery is not None:
                        push(delivery, PRIO_BACKEND, "request", None)
            elif kind == "request":
                for req in link.server.recv(t):
                    resp = server.process(req)
                    delivery = link.server.send(resp, t)
                    if delivery is not None:
                        push(delivery, PRIO_NETWORK, "reply", None)
            elif kind == "reply":
                replies = [obj] if obj is not None else link.client.recv(t)
                for resp in replies:
                    responses += 1
                    if log is not None:
                        log.append((t, resp))
                    before = error_at(t) if truth_at is not None else math.nan
                    t_a = clock()
                    applied = tracker.on_response(resp, t)
                    timer.samples["prm"].append(clock() - t_a)
                    if applied and truth_at is not None:
                        corrections.append((t, before, error_at(t)))
    finally:
        if server is not None:
            server.close()

    return MetricsReport(
        script=cfg.script, frame_rate=cfg.frame_rate, backend=cfg.backend,
        t=ts, pos_mm=pos, orient_deg=ang, proj_px=proj, statuses=statuses,
        refinements=list(tracker.refinements), tracking_lost=lost, unprojectable=unprojectable,
        responses=responses, timing=timer.stats(), corrections=corrections,
    )


def _inputs(cfg: ExperimentConfig):
    script = cfg.motion_script
    return synthesize_imu(script, cfg.noise, cfg.seed), schedule_frames(script, cfg.frame_rate)


def run_experiment(cfg: ExperimentConfig) -> MetricsReport:
    imu, frames = _inputs(cfg)
    script = cfg.motion_script
    return _simulate(cfg, imu, frames, truth_at=lambda t: sample_trajectory(script, t).cam_from_world)


# --- sequence files ------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def record_sequence(cfg: ExperimentConfig, path) -> MetricsReport:
    """Run ``cfg`` and write its inputs and delivered replies to ``path``."""
    imu, frames = _inputs(cfg)
    log: list = []
    report = _simulate(cfg, imu, frames, log=log)
    rows = []
    for s in imu:
        rows.append((s.t, PRIO_IMU, "I " + " ".join(map(_fmt, (s.t, *s.omega, *s.accel)))))
    for f in frames:
        rows.append((f.t, PRIO_FRAME, f"F {_fmt(f.t)} {f.frame_id} "
                     + " ".join(map(_fmt, _pose_to_list(f.true_cam_from_world)))))
    for t, r in log:
        rows.append((t, PRIO_NETWORK, f"B {_fmt(t)} {r.request_id} {int(r.status)} "
                     + " ".join(map(_fmt, _pose_to_list(r.pose)))))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w") as fh:
        fh.write(SEQUENCE_MAGIC + "\n")
        fh.write(f"# t_start {_fmt(0.0)}\n")
        fh.write("# config " + json.dumps(cfg.to_dict(), sort_keys=True) + "\n")
        for _, _, line in rows:
            fh.write(line + "\n")
    return report


@dataclass
class Sequence:
    config: ExperimentConfig
    t_start: float
    imu: list
    frames: list
    replies: list


def _floats(parts, lineno, n):
    if len(parts) != n:
        raise SequenceFormatError(lineno, f"expected {n} fields, got {len(parts)}")
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise SequenceFormatError(lineno, str(exc)) from None
    if not all(math.isfinite(v) for v in vals):
        raise SequenceFormatError(lineno, "non-finite value")
    return vals


def _int(tok, lineno):
    try:
        return int(tok)
    except ValueError:
        raise SequenceFormatError(lineno, f"bad integer {tok!r}") from None


def parse_sequence(text: str) -> Sequence:
    lines = text.splitlines()
    if not lines or lines[0].strip() != SEQUENCE_MAGIC:
        raise SequenceFormatError(1, f"missing or unsupported header, expected {SEQUENCE_MAGIC!r}")
    t_start = 0.0
    cfg_dict: dict = {}
    imu, frames, replies = [], [], []
    last = {"I": -math.inf, "F": -math.inf, "B": -math.inf}
    last_any = -math.inf
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            key, _, rest = body.partition(" ")
            try:
                if key == "t_start":
                    t_start = float(rest)
                elif key == "config":
                    cfg_dict = json.loads(rest)
            except ValueError as exc:
                raise SequenceFormatError(lineno, f"bad {key} header: {exc}") from None
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "I":
            vals = _floats(parts[1:], lineno, 7)
            t = vals[0]
        elif tag == "F":
            if len(parts) != 15:
                raise SequenceFormatError(lineno, f"expected 15 fields, got {len(parts)}")
            t = _floats(parts[1:2], lineno, 1)[0]
            fid = _int(parts[2], lineno)
            pose_vals = _floats(parts[3:], lineno, 12)
        elif tag == "B":
            if len(parts) != 16:
                raise SequenceFormatError(lineno, f"expected 16 fields, got {len(parts)}")
            t = _floats(parts[1:2], lineno, 1)[0]
            rid = _int(parts[2], lineno)
            status_code = _int(parts[3], lineno)
            pose_vals = _floats(parts[4:], lineno, 12)
        else:
            raise SequenceFormatError(lineno, f"unknown row type {tag!r}")
        if t < t_start:
            raise SequenceFormatError(lineno, f"timestamp {t} precedes t_start {t_start}")
        if t <= last[tag]:
            raise SequenceFormatError(lineno, f"{tag} timestamps must strictly increase")
        if t < last_any:
            raise SequenceFormatError(lineno, "rows must be in time order")
        last[tag] = last_any = t
        if tag == "I":
            imu.append(ImuSample(t - t_start, np.array(vals[1:4]), np.array(vals[4:7])))
        elif tag == "F":
            frames.append(FrameEvent(t - t_start, fid, _pose_from_list(pose_vals)))
        else:
            try:
                status = ResponseStatus(status_code)
            except ValueError:
                raise SequenceFormatError(lineno, f"bad status {status_code}") from None
            replies.append((t - t_start, PoseResponse(rid, math.nan, _pose_from_list(pose_vals), status)))
    try:
        cfg = ExperimentConfig.from_dict(cfg_dict)
    except (ValueError, TypeError) as exc:
        raise SequenceFormatError(3, f"bad config header: {exc}") from None
    return Sequence(cfg, t_start, imu, frames, replies)


def load_sequence(path) -> Sequence:
    return parse_sequence(Path(path).read_text())


def replay_sequence(path) -> MetricsReport:
    """Re-run the tracker on a recorded sequence.

    Recorded replies are delivered at their recorded times. A file without
    any ``B`` rows gets replies from an exact backend through the configured
    delay model, with each frame's pose as the estimate.
    """
    seq = load_sequence(path)
    if not seq.frames:
        raise SequenceFormatError(1, "sequence has no frames")
    cfg = seq.config
    if seq.replies:
        return _simulate(cfg, seq.imu, seq.frames, recorded=seq.replies)
    return _simulate(dataclasses.replace(cfg, backend="gt", transport="sim"), seq.imu, seq.frames)


# --- reports -------------------------------------------------------------

SUMMARY_HEADER = ("script", "frame_rate", "backend", "pos_mm", "orient_deg", "proj_px")
SERIES_HEADER = ("t", "pos_mm", "orient_deg", "proj_px")


def _f6(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def summary_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for r in reports:
        if r.n_frames == 0:
            continue
        w.writerow([r.script, _f6(r.frame_rate), r.backend,
                    _f6(r.mean_pos_mm), _f6(r.mean_orient_deg), _f6(r.mean_proj_px)])
    return buf.getvalue()


def series_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SERIES_HEADER)
    for row in zip(report.t, report.pos_mm, report.orient_deg, report.proj_px):
        w.writerow([_f6(x) for x in row])
    return buf.getvalue()


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    return x


def report_json(reports) -> str:
    items = []
    for r in reports:
        d = r.summary()
        d["series"] = {k: getattr(r, k).tolist() for k in SERIES_HEADER}
        d["refinement_times"] = [list(p) for p in r.refinements]
        d["timing"] = r.timing
        items.append(d)
    return json.dumps(_json_safe(items), indent=2, sort_keys=True) + "\n"


def emit_report(report, format: str, path, series_path=None):
    """Write one report (or a list of them) as CSV or JSON.

    ``series_path`` additionally gets the per-frame error series of a single
    report as CSV.
    """
    reports = [report] if isinstance(report, MetricsReport) else list(report)
    if format == "csv":
        text = summary_csv(reports)
    elif format == "json":
        text = report_json(reports)
    else:
        raise ValueError(f"unknown report format {format!r}")
    Path(path).write_text(text)
    if series_path is not None:
        if len(reports) != 1:
            raise ValueError("a series file needs exactly one report")
        Path(series_path).write_text(series_csv(reports[0]))


# --- grid ----------------------------------------------------------------

def grid_configs(seed: int = 0, duration: float = 30.0, backends=BACKENDS, frame_rates=FRAME_RATES,
                 scripts=SCRIPTS, **overrides) -> list[ExperimentConfig]:
    return [
        ExperimentConfig(script=s, frame_rate=float(fr), backend=b, seed=seed, duration=duration, **overrides)
        for b in backends for fr in frame_rates for s in scripts
    ]


def run_grid(configs=None, workers: int | None = None) -> list[MetricsReport]:
    """Run every config; results come back in config order whatever ``workers`` is."""
    configs = grid_configs() if configs is None else list(configs)
    if workers == 1 or len(configs) <= 1:
        return [run_experiment(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_experiment, configs))
