"""Closed-loop experiments: line tracking with an initial offset and a
multi-push transport task, with CSV logging and summary metrics."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .mpc import ControllerConfig, MpcController, MpcWeights
from .plant import BROKEN, SLIP, PlantModel, PlantParams, WorldState, initial_world, step_world_detailed
from .pushing import FrictionParams, ObjectGeometry
from .reference import ManeuverParams, ReferencePath, Segment, path_from_spec, repositioning_maneuver
from .robot import RobotState, error_from_state, wrap_angle

LOG_VERSION = 1
CSV_HEADER = (
    "t,x_r,y_r,th_r,v_r,w_r,x_o,y_o,th_o,e_x,e_y,e_th,e_v,e_w,a_r,eps_r,"
    "f1R,f1L,f2R,f2L,mode,lat_off,qp_status,qp_iters,solve_ms"
)
LINE_TRACK, MANIPULATE = "line_track", "manipulate"


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = LINE_TRACK
    phi: float = 0.2
    ts: float = 0.1
    horizon: int = 10
    weights: MpcWeights = field(default_factory=MpcWeights)
    u_max: tuple = (0.3, 0.5)
    force_max: float = 50.0
    sigma: float = 1e-4
    friction: FrictionParams = FrictionParams(mu_contact=0.4)
    half_side: float = 0.1
    plant: PlantParams = PlantParams()
    constraint_enabled: bool = True
    seed: int = 0
    noise_std: float = 0.0
    out_dir: Optional[str] = None
    log_timing: bool = True  # off: solve_ms logged as nan so logs are bit-identical
    # line tracking
    line_length: float = 9.0
    v_ref: float = 0.2
    a_ref: float = 0.1
    max_time: float = 60.0
    line_tolerance: float = 0.02
    # transport task
    goal: tuple = (1.65, 0.15, np.pi)
    push_sides: tuple = (0, 2, 3)
    push_paths: tuple = ()  # empty: default_push_plan with arc_radius
    arc_radius: float = 0.75
    push_v_ref: float = 0.1
    push_a_ref: float = 0.05
    maneuver: ManeuverParams = ManeuverParams()
    goal_position_tolerance: float = 0.10
    goal_orientation_tolerance_deg: float = 5.0

    def __post_init__(self):
        if self.scenario not in (LINE_TRACK, MANIPULATE):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.ts <= 0 or self.horizon < 1:
            raise ValueError("ts must be positive and horizon at least 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        if len(self.push_paths) != len(self.push_sides) and self.push_paths:
            raise ValueError("one path per push side is required")

    @property
    def geometry(self) -> ObjectGeometry:
        return ObjectGeometry(self.half_side)

    def controller_config(self, constraint: Optional[bool] = None) -> ControllerConfig:
        return ControllerConfig(
            horizon=self.horizon, ts=self.ts, u_min=tuple(-np.asarray(self.u_max)), u_max=tuple(self.u_max),
            force_max=self.force_max, weights=self.weights, sigma=self.sigma,
            constraint_enabled=self.constraint_enabled if constraint is None else constraint,
        )


@dataclass
class RunMetrics:
    final_avg_object_position_error: float = float("nan")
    final_position_error: float = float("nan")
    final_orientation_error: float = float("nan")  # deg
    max_lateral_offset: float = 0.0
    contact_break_count: int = 0
    slip_event_count: int = 0
    solve_ms_mean: float = float("nan")
    solve_ms_max: float = float("nan")
    fallback_count: int = 0
    min_force: float = float("inf")
    max_stick_residual: float = 0.0
    min_power: float = float("inf")
    steps: int = 0
    sim_time: float = 0.0
    success: bool = True
    message: str = ""

    def as_dict(self) -> dict:
        return dict(self.__dict__)


class _Recorder:
    """Accumulates log rows and physics statistics."""

    def __init__(self, log_timing: bool = True):
        self.log_timing = log_timing
        self.rows: list[list] = []
        self.solve_ms: list[float] = []
        self.obj_err: list[float] = []
        self.metrics = RunMetrics()
        self._last_mode = None
        self._was_contact: Optional[bool] = None

    def physics(self, statuses, was_contact: bool, model: PlantModel, count: bool = True):
        m = self.metrics
        hg = model.limit_surface.h_matrix @ model.grasp.entries
        for st in statuses:
            f = st.forces.as_array()
            m.min_force = min(m.min_force, float(f.min()))
            m.min_power = min(m.min_power, st.power)
            if st.mode == "stick":
                res = max(np.linalg.norm(st.twist - hg @ f), np.linalg.norm(st.twist - st.rigid_twist))
                m.max_stick_residual = max(m.max_stick_residual, float(res))
            if count and st.mode == SLIP and self._last_mode != SLIP and np.any(f > 0):
                m.slip_event_count += 1
            contact = st.mode != BROKEN
            if count and was_contact and not contact:
                m.contact_break_count += 1
            was_contact = contact
            self._last_mode = st.mode
        return was_contact

    def row(self, t, world: WorldState, e, u, diag):
        r = world.robot
        c = world.contact
        f = c.forces.as_array()
        lat = world.p_or[1] if world.in_contact else float("nan")
        if world.in_contact:
            self.metrics.max_lateral_offset = max(self.metrics.max_lateral_offset, abs(float(lat)))
        self.rows.append(
            [t, r.x_r, r.y_r, r.theta_r, r.v_r, r.omega_r, *world.object_pose, *np.asarray(e), *np.asarray(u),
             *f, c.mode if world.in_contact else BROKEN, lat,
             diag.qp_status if diag else "none", diag.qp_iters if diag else 0,
             (diag.solve_ms if self.log_timing else float("nan")) if diag else 0.0]
        )
        if diag:
            self.solve_ms.append(diag.solve_ms)
            self.metrics.fallback_count += int(diag.fallback)

    def finish(self):
        m = self.metrics
        if self.solve_ms:
            m.solve_ms_mean = float(np.mean(self.solve_ms))
            m.solve_ms_max = float(np.max(self.solve_ms))
        if self.obj_err:
            n = max(1, int(round(0.2 * len(self.obj_err))))
            m.final_avg_object_position_error = float(np.mean(self.obj_err[-n:]))
        if m.min_force == float("inf"):
            m.min_force = 0.0
        if m.min_power == float("inf"):
            m.min_power = 0.0
        m.steps = len(self.rows)
        return m


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_log(path: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        w = csv.writer(fh, lineterminator="\n")
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def read_log(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_metrics(path: str, metrics: RunMetrics, cfg: ExperimentConfig) -> None:
    with open(path, "w") as fh:
        fh.write(f"log_version = {LOG_VERSION}\n")
        fh.write(f"scenario = {cfg.scenario}\n")
        fh.write(f"constraint = {'on' if cfg.constraint_enabled else 'off'}\n")
        fh.write(f"seed = {cfg.seed}\n")
        for k, v in metrics.as_dict().items():
            fh.write(f"{k} = {v}\n")


def _save(cfg: ExperimentConfig, rec: _Recorder, metrics: RunMetrics, stem: str) -> None:
    if not cfg.out_dir:
        return
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_log(os.path.join(cfg.out_dir, f"{stem}.csv"), rec.rows)
    write_metrics(os.path.join(cfg.out_dir, f"{stem}_metrics.txt"), metrics, cfg)


class _Loop:
    """Shared closed-loop machinery for both scenarios."""

    def __init__(self, cfg: ExperimentConfig, world: WorldState, rec: _Recorder):
        self.cfg = cfg
        self.model = PlantModel.build(cfg.friction, cfg.geometry, cfg.plant)
        self.world = world
        self.rec = rec
        self.rng = np.random.default_rng(cfg.seed)
        self.k = 0
        self.cmd = np.array([world.robot.v_r, world.robot.omega_r])
        self.was_contact = world.in_contact
        self.counting = True  # break and slip events only count while pushing

    @property
    def t(self) -> float:
        return self.k * self.cfg.ts

    def measure(self) -> np.ndarray:
        xi = self.world.robot.as_array()
        if self.cfg.noise_std > 0:
            xi = xi + self.cfg.noise_std * self.rng.standard_normal(5) * np.array([1, 1, 1, 0, 0])
        return xi

    def step(self, ctrl: MpcController, refs, pushing: bool):
        cfg = self.cfg
        e = error_from_state(self.measure(), refs[0]).as_array()
        p_or = self.world.p_or if (pushing and self.world.in_contact) else None
        u, _, diag = ctrl.control_step(e, refs, p_or)
        u = u.as_array()
        old = self.cmd
        self.cmd = ctrl.next_command(self.cmd, u)
        # ramp the wheel speeds to the new command over the period
        n = 10
        statuses = []
        start = self.world
        for i in range(n):
            c = old + (i + 0.5) / n * (self.cmd - old)
            self.world, st = step_world_detailed(self.world, c, cfg.ts / n, self.model)
            statuses.extend(st)
        self.world = replace(self.world, robot=RobotState(*self.world.robot.as_array()[:3], *self.cmd))
        self.was_contact = self.rec.physics(statuses, self.was_contact, self.model, self.counting)
        self.rec.row(self.t, start, e, u, diag)
        self.k += 1
        return diag


def object_reference(ref, contact_distance: float) -> np.ndarray:
    """Where the box centre should be when the robot sits on ``ref``."""
    return np.array([ref.x_rd, ref.y_rd]) + contact_distance * np.array([np.cos(ref.theta_rd), np.sin(ref.theta_rd)])


def line_path(cfg: ExperimentConfig) -> ReferencePath:
    return ReferencePath((0.0, 0.0, 0.0), (Segment("line", length=cfg.line_length, v_max=cfg.v_ref, a_max=cfg.a_ref),))


def run_line_tracking(cfg: ExperimentConfig, write: bool = True) -> RunMetrics:
    """Track a straight line starting ``phi`` to its left, box flush on the bumper."""
    if cfg.scenario != LINE_TRACK:
        raise ValueError("scenario must be line_track")
    model = PlantModel.build(cfg.friction, cfg.geometry, cfg.plant)
    path = line_path(cfg)
    world = initial_world(RobotState(0.0, cfg.phi, 0.0), model)
    rec = _Recorder(cfg.log_timing)
    loop = _Loop(cfg, world, rec)
    ctrl = MpcController(cfg.controller_config(), cfg.friction, cfg.geometry)
    n_steps = int(round(min(path.duration, cfg.max_time) / cfg.ts))
    for k in range(n_steps):
        refs = path.window(k * cfg.ts, cfg.ts, cfg.horizon + 1)
        target = object_reference(refs[0], model.contact_distance)
        rec.obj_err.append(float(np.linalg.norm(np.array(loop.world.object_pose[:2]) - target)))
        loop.step(ctrl, refs, pushing=True)
    final = path.window(loop.t, cfg.ts, 1)[0]
    target = object_reference(final, model.contact_distance)
    rec.obj_err.append(float(np.linalg.norm(np.array(loop.world.object_pose[:2]) - target)))
    m = rec.finish()
    m.sim_time = loop.t
    m.final_position_error = rec.obj_err[-1]
    m.final_orientation_error = float(np.rad2deg(abs(wrap_angle(loop.world.object_pose[2] - final.theta_rd))))
    m.success = m.final_avg_object_position_error <= cfg.line_tolerance
    m.message = "ok" if m.success else "object error above tolerance"
    if write:
        _save(cfg, rec, m, "line_track")
    return m


def default_push_plan(contact_distance: float, radius: float = 0.75) -> tuple:
    """Three pushes taking the box from the origin to (1.65, 0.15, pi).

    Push 1 (side 0) drives east and turns right onto south; push 2 (side 2)
    drives north and turns right onto east, flipping the box; push 3 (side 3)
    drives north. The straight lengths follow from the goal.
    """
    d = contact_distance
    l1 = 1.65 - 2.0 * radius
    l23 = 0.15 + 2.0 * d
    if l1 < 0 or l23 <= 0:
        raise ValueError("arc radius too large for the goal")
    l2 = 0.5 * l23
    return (
        (("line", l1), ("arc", radius, -np.pi / 2)),
        (("line", l2), ("arc", radius, -np.pi / 2)),
        (("line", l23 - l2),),
    )


def _pose_ahead(pose, dist: float) -> np.ndarray:
    x, y, th = pose
    return np.array([x + dist * np.cos(th), y + dist * np.sin(th), th])


class _Aborted(Exception):
    pass


def run_manipulation(cfg: ExperimentConfig, write: bool = True) -> RunMetrics:
    """Transport the box to ``cfg.goal`` with one push per configured side.

    Pushes follow world-fixed paths planned from the nominal box pose, so the
    controller removes error accumulated during earlier pushes. Between
    pushes the robot backs off, circles the box and re-approaches it on the
    next side without pushing constraints.
    """
    if cfg.scenario != MANIPULATE:
        raise ValueError("scenario must be manipulate")
    model = PlantModel.build(cfg.friction, cfg.geometry, cfg.plant)
    d = model.contact_distance
    plans = cfg.push_paths or default_push_plan(d, cfg.arc_radius)
    sides = cfg.push_sides
    goal = np.asarray(cfg.goal, dtype=float)
    start_obj = np.zeros(3)
    th_r0 = sides[0] * np.pi / 2 if sides else 0.0
    robot0 = _pose_ahead((0.0, 0.0, th_r0), -d)
    world = initial_world(RobotState(*robot0), model, side=sides[0] if sides else 0)
    rec = _Recorder(cfg.log_timing)
    loop = _Loop(cfg, world, rec)
    ctrl = MpcController(cfg.controller_config(), cfg.friction, cfg.geometry)
    tracker = MpcController(cfg.controller_config(constraint=False), cfg.friction, cfg.geometry)
    trivial = (np.linalg.norm(goal[:2] - start_obj[:2]) < 1e-9 and abs(wrap_angle(goal[2] - start_obj[2])) < 1e-9)
    nominal = start_obj.copy()
    m = rec.metrics
    try:
        for i, (side, plan) in enumerate(zip(sides, plans)):
            if trivial:
                break
            if i > 0:
                _reposition(loop, tracker, side, model, cfg)
            heading = nominal[2] + side * np.pi / 2
            path = path_from_spec(_pose_ahead((nominal[0], nominal[1], heading), -d), plan, cfg.push_v_ref, cfg.push_a_ref)
            ctrl.reset()
            _track(loop, ctrl, path, pushing=True, settle=2.0)
            end = path.end_pose
            obj_end = _pose_ahead(end, d)
            nominal = np.array([obj_end[0], obj_end[1], wrap_angle(end[2] - side * np.pi / 2)])
    except _Aborted as exc:
        m.success = False
        m.message = str(exc)
    final = loop.world.object_pose
    m.final_position_error = float(np.linalg.norm(np.asarray(final[:2]) - goal[:2]))
    m.final_orientation_error = float(np.rad2deg(abs(wrap_angle(final[2] - goal[2]))))
    m.final_avg_object_position_error = m.final_position_error
    rec.finish()
    m.sim_time = loop.t
    if m.success:
        m.success = (m.final_position_error <= cfg.goal_position_tolerance
                     and m.final_orientation_error <= cfg.goal_orientation_tolerance_deg)
        m.message = "ok" if m.success else "goal tolerance missed"
    if write:
        _save(cfg, rec, m, "manipulate")
    return m


def _track(loop: _Loop, ctrl: MpcController, path: ReferencePath, pushing: bool, settle: float = 0.0,
           stop_on_contact_after: Optional[float] = None) -> bool:
    """Follow ``path``; returns True if stopped by a new contact."""
    cfg = loop.cfg
    n = int(np.ceil((path.duration + settle) / cfg.ts - 1e-9))
    loop.counting = pushing
    for k in range(n):
        tau = k * cfg.ts
        refs = path.window(tau, cfg.ts, cfg.horizon + 1)
        loop.step(ctrl, refs, pushing)
        if stop_on_contact_after is not None and tau >= stop_on_contact_after and loop.world.in_contact:
            loop.cmd = np.zeros(2)
            loop.world = replace(loop.world, robot=RobotState(*loop.world.robot.as_array()[:3], 0.0, 0.0))
            return True
    return False


def _reposition(loop: _Loop, tracker: MpcController, side: int, model: PlantModel, cfg: ExperimentConfig):
    w = loop.world
    r = w.robot
    path = repositioning_maneuver(
        (r.x_r, r.y_r, r.theta_r), w.object_pose, side, model.contact_distance, model.half_side,
        model.params.bumper_half_width, cfg.maneuver,
    )
    approach = path.segments[-1].profile.duration
    tracker.reset()
    hit = _track(loop, tracker, path, pushing=False, settle=3.0,
                 stop_on_contact_after=path.duration - approach)
    if not hit:
        raise _Aborted(f"re-contact failed before push on side {side}")
    if loop.world.side != side:
        raise _Aborted(f"contact made on side {loop.world.side}, expected {side}")
