"""Quasistatic ground-truth world: a unicycle with a flat bumper and one square box.

While in line contact the pushed face stays flush with the bumper. Each
sub-step asks which nonnegative cone-edge forces best reproduce the twist the
object would have if it were rigidly attached to the robot. An exact match
means the object sticks. Otherwise the best-fit forces move the object and
the mismatch becomes sliding along the bumper or separation from it.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.optimize import nnls

from .pushing import (
    ContactForces,
    FrictionParams,
    GraspMatrix,
    LimitSurface,
    ObjectGeometry,
    friction_half_angle,
    grasp_matrix,
    limit_surface_matrix,
)
from .robot import RobotState, rot2d, unicycle_arc, wrap_angle

STICK, SLIP, BROKEN = "stick", "slip", "broken"


@dataclass(frozen=True)
class PlantParams:
    bumper_offset: float = 0.2  # axle to bumper face, m
    bumper_half_width: float = 0.25
    substeps: int = 10
    stick_tol: float = 1e-8
    gap_tol: float = 1e-4
    # fit weights for the normal and rotational rows; lateral has weight 1
    normal_weight: float = 1e3
    rotation_weight: float = 1e3
    snap_angle: float = np.deg2rad(10.0)

    def __post_init__(self):
        if self.bumper_offset <= 0 or self.bumper_half_width <= 0:
            raise ValueError("bumper dimensions must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be at least 1")


@dataclass(frozen=True)
class ContactStatus:
    mode: str = BROKEN
    forces: ContactForces = ContactForces()
    lateral_offset: float = float("nan")
    twist: np.ndarray = field(default_factory=lambda: np.zeros(3), repr=False)
    rigid_twist: np.ndarray = field(default_factory=lambda: np.zeros(3), repr=False)
    power: float = 0.0

    @property
    def in_contact(self) -> bool:
        return self.mode != BROKEN


@dataclass(frozen=True)
class WorldState:
    robot: RobotState
    object_pose: tuple[float, float, float]
    in_contact: bool = False
    side: int = 0
    time: float = 0.0
    contact: ContactStatus = ContactStatus()

    @property
    def p_or(self) -> np.ndarray:
        """Object position in the robot frame."""
        r = self.robot
        d = np.array(self.object_pose[:2]) - np.array([r.x_r, r.y_r])
        return rot2d(r.theta_r).T @ d


@dataclass(frozen=True)
class PlantModel:
    grasp: GraspMatrix  # at zero heading, i.e. in robot axes
    limit_surface: LimitSurface
    half_side: float
    params: PlantParams = PlantParams()

    @classmethod
    def build(cls, friction: FrictionParams = FrictionParams(), geometry: ObjectGeometry = ObjectGeometry(),
              params: PlantParams = PlantParams()) -> "PlantModel":
        g = grasp_matrix(0.0, friction_half_angle(friction.mu_contact), geometry.half_side)
        return cls(g, limit_surface_matrix(friction, geometry), geometry.half_side, params)

    @cached_property
    def hg(self) -> np.ndarray:
        """Map from cone-edge forces to object twist, in robot axes."""
        return self.limit_surface.h_matrix @ self.grasp.entries

    @cached_property
    def fit_weights(self) -> np.ndarray:
        h = self.limit_surface.h_matrix
        c = np.sqrt(h[0, 0] / h[2, 2])  # torque arm turning rad/s into m/s
        return np.array([self.params.normal_weight, 1.0, self.params.rotation_weight * c])

    @property
    def contact_distance(self) -> float:
        """Robot axle to object centre along the heading, when flush."""
        return self.params.bumper_offset + self.half_side


def rigid_twist(cmd, p_or) -> np.ndarray:
    v, w = cmd
    return np.array([v - w * p_or[1], w * p_or[0], w])


def resolve_contact(world: WorldState, cmd, model: PlantModel) -> ContactStatus:
    """Contact forces and object twist for the commanded robot velocity."""
    if not world.in_contact:
        return ContactStatus()
    prm = model.params
    p_or = world.p_or
    v_rig = rigid_twist(cmd, p_or)
    hg, w = model.hg, model.fit_weights
    if np.max(np.abs(v_rig)) < 1e-12:
        # resting contact
        return ContactStatus(STICK, ContactForces(), float(p_or[1]), np.zeros(3), v_rig, 0.0)
    f, _ = nnls(w[:, None] * hg, w * v_rig)
    twist = hg @ f
    if not np.any(f > 0):
        return ContactStatus(BROKEN, ContactForces(), float(p_or[1]), np.zeros(3), v_rig, 0.0)
    wrench = model.grasp.entries @ f
    mode = STICK if np.linalg.norm(twist - v_rig) <= prm.stick_tol else SLIP
    return ContactStatus(mode, ContactForces.from_array(f), float(p_or[1]), twist, v_rig, float(wrench @ twist))


def _flush_heading(theta_r: float, side: int) -> float:
    return wrap_angle(theta_r - side * np.pi / 2)


def _place(robot: RobotState, p_or, side: int) -> tuple[float, float, float]:
    pos = np.array([robot.x_r, robot.y_r]) + rot2d(robot.theta_r) @ np.asarray(p_or)
    return (float(pos[0]), float(pos[1]), _flush_heading(robot.theta_r, side))


def _try_contact(world: WorldState, model: PlantModel) -> WorldState:
    """Detect bumper penetration of a free object; snap it flush if aligned."""
    prm = model.params
    s = model.half_side
    p = world.p_or
    rel = wrap_angle(world.object_pose[2] - world.robot.theta_r)
    side = int(np.round(-rel / (np.pi / 2))) % 4
    delta = wrap_angle(rel + side * np.pi / 2)
    reach = s * (abs(np.cos(delta)) + abs(np.sin(delta)))
    depth = prm.bumper_offset - (p[0] - reach)
    if depth <= 0 or p[0] < prm.bumper_offset or abs(p[1]) - s >= prm.bumper_half_width:
        return world
    if abs(delta) <= prm.snap_angle and abs(p[1]) + s <= prm.bumper_half_width:
        p_new = np.array([prm.bumper_offset + s, p[1]])
        pose = _place(world.robot, p_new, side)
        return replace(world, object_pose=pose, in_contact=True, side=side)
    # corner contact: shove the object out along the heading, stay free
    p_new = np.array([p[0] + depth, p[1]])
    pos = np.array([world.robot.x_r, world.robot.y_r]) + rot2d(world.robot.theta_r) @ p_new
    return replace(world, object_pose=(float(pos[0]), float(pos[1]), world.object_pose[2]))


def _substep(world: WorldState, cmd, h: float, model: PlantModel) -> WorldState:
    prm = model.params
    s = model.half_side
    v, w = float(cmd[0]), float(cmd[1])
    r = world.robot
    pose = unicycle_arc((r.x_r, r.y_r, r.theta_r), v, w, h)
    robot = RobotState(pose[0], pose[1], pose[2], v, w)
    status = resolve_contact(world, (v, w), model)
    if v == 0.0 and w == 0.0 and world.in_contact:
        # resting: leave the poses bit-for-bit alone
        return replace(world, time=world.time + h, contact=status)
    if status.mode == STICK:
        obj = _place(robot, world.p_or, world.side)
        return replace(world, robot=robot, object_pose=obj, time=world.time + h, contact=status)
    if status.mode == SLIP:
        p_or = world.p_or + (status.twist[:2] - status.rigid_twist[:2]) * h
        p_or[0] = max(p_or[0], prm.bumper_offset + s)
        if p_or[0] - (prm.bumper_offset + s) > prm.gap_tol or abs(p_or[1]) + s > prm.bumper_half_width:
            # separated or slid off the bumper; the box keeps this step's motion
            t = rot2d(r.theta_r) @ status.twist[:2] * h
            o = world.object_pose
            obj = (o[0] + t[0], o[1] + t[1], wrap_angle(o[2] + status.twist[2] * h))
            return replace(world, robot=robot, object_pose=obj, in_contact=False, time=world.time + h,
                           contact=status)
        obj = _place(robot, p_or, world.side)
        return replace(world, robot=robot, object_pose=obj, time=world.time + h, contact=status)
    # no force: the box stays put, contact survives only within the gap tolerance
    nxt = replace(world, robot=robot, time=world.time + h, contact=status)
    p = nxt.p_or
    gap = p[0] - (prm.bumper_offset + s)
    if world.in_contact and gap <= prm.gap_tol:
        if gap < 0:
            nxt = replace(nxt, object_pose=_place(robot, (prm.bumper_offset + s, p[1]), world.side))
        return replace(nxt, contact=replace(status, mode=SLIP if status.mode == BROKEN else status.mode))
    nxt = replace(nxt, in_contact=False, contact=ContactStatus(lateral_offset=float(p[1])))
    return _try_contact(nxt, model)


def step_world(world: WorldState, cmd, dt: float, model: Optional[PlantModel] = None) -> WorldState:
    """Advance the world by ``dt`` under a constant velocity command.

    The returned state's ``contact`` holds the status of the last sub-step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    model = model or PlantModel.build()
    h = dt / model.params.substeps
    for _ in range(model.params.substeps):
        world = _substep(world, cmd, h, model)
    return world


def step_world_detailed(world: WorldState, cmd, dt: float, model: PlantModel):
    """Like :func:`step_world` but also returns every sub-step status."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    h = dt / model.params.substeps
    statuses = []
    for _ in range(model.params.substeps):
        world = _substep(world, cmd, h, model)
        statuses.append(world.contact)
    return world, statuses


def initial_world(robot: RobotState, model: PlantModel, lateral: float = 0.0, side: int = 0) -> WorldState:
    """World with the box flush against the bumper."""
    pose = _place(robot, (model.contact_distance, lateral), side)
    return WorldState(robot, pose, True, side, 0.0, ContactStatus(STICK, lateral_offset=float(lateral)))
