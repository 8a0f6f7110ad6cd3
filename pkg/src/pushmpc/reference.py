"""Reference trajectories built from lines, arcs and in-place turns.

Every segment runs its own trapezoidal speed profile with smoothed
corners, so consecutive segments join at rest unless a profile has unbounded
acceleration (constant speed).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .robot import ReferenceSample, wrap_angle

LINE, ARC, TURN = "line", "arc", "turn"


@dataclass(frozen=True)
class TrapezoidalProfile:
    """Rest-to-rest motion over ``distance`` (or cruise at ``v_max`` if ``a_max`` is inf).

    The ramps use a sine-squared acceleration pulse peaking at ``a_max``, so
    speed is continuously differentiable.
    """

    distance: float
    v_max: float
    a_max: float = float("inf")

    def __post_init__(self):
        if self.distance < 0 or not np.isfinite(self.distance):
            raise ValueError("profile distance must be finite and nonnegative")
        if self.v_max <= 0 or self.a_max <= 0:
            raise ValueError("v_max and a_max must be positive")

    @property
    def _a_mean(self) -> float:
        return 0.5 * self.a_max

    @property
    def peak(self) -> float:
        if np.isinf(self.a_max):
            return self.v_max
        return min(self.v_max, np.sqrt(self.distance * self._a_mean))

    @property
    def ramp_time(self) -> float:
        return 0.0 if np.isinf(self.a_max) else self.peak / self._a_mean

    @property
    def duration(self) -> float:
        if self.distance == 0:
            return 0.0
        tr = self.ramp_time
        return 2.0 * tr + (self.distance - self.peak * tr) / self.peak

    def _ramp(self, t: float) -> tuple[float, float, float]:
        vp, tr = self.peak, self.ramp_time
        x = 2 * np.pi * t / tr
        s = vp * tr * ((t / tr) ** 2 / 2 + (np.cos(x) - 1) / (4 * np.pi**2))
        return s, vp * (t / tr - np.sin(x) / (2 * np.pi)), vp / tr * (1 - np.cos(x))

    def __call__(self, t: float) -> tuple[float, float, float]:
        """Distance, speed and acceleration at time ``t``."""
        T = self.duration
        if T == 0 or t >= T:
            return self.distance, (self.peak if np.isinf(self.a_max) and T > 0 and t == T else 0.0), 0.0
        t = max(t, 0.0)
        vp, tr = self.peak, self.ramp_time
        if np.isinf(self.a_max):
            return vp * t, vp, 0.0
        if t < tr:
            return self._ramp(t)
        if t < T - tr:
            return 0.5 * vp * tr + vp * (t - tr), vp, 0.0
        s, v, a = self._ramp(T - t)
        return self.distance - s, v, -a


@dataclass(frozen=True)
class Segment:
    """One path piece.

    ``line``: ``length`` is signed (negative drives backwards).
    ``arc``: ``radius`` > 0 and signed ``sweep`` (positive turns left).
    ``turn``: in-place rotation by signed ``sweep``.
    ``v_max``/``a_max`` are linear for lines and arcs, angular for turns.
    """

    kind: str
    length: float = 0.0
    radius: float = 0.0
    sweep: float = 0.0
    v_max: float = 0.1
    a_max: float = 0.05

    def __post_init__(self):
        if self.kind not in (LINE, ARC, TURN):
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if self.kind == ARC and self.radius <= 0:
            raise ValueError("arc radius must be positive")

    @property
    def profile(self) -> TrapezoidalProfile:
        if self.kind == LINE:
            dist = abs(self.length)
        elif self.kind == ARC:
            dist = self.radius * abs(self.sweep)
        else:
            dist = abs(self.sweep)
        return TrapezoidalProfile(dist, self.v_max, self.a_max)

    @property
    def curvature(self) -> float:
        return float(np.sign(self.sweep) / self.radius) if self.kind == ARC else 0.0

    def end_pose(self, start) -> np.ndarray:
        return self._pose(start, self.profile.distance)

    def _pose(self, start, s: float) -> np.ndarray:
        x0, y0, th0 = start
        if self.kind == LINE:
            d = np.sign(self.length) * s
            return np.array([x0 + d * np.cos(th0), y0 + d * np.sin(th0), th0])
        if self.kind == TURN:
            return np.array([x0, y0, th0 + np.sign(self.sweep) * s])
        k = self.curvature
        th = th0 + k * s
        return np.array([x0 + (np.sin(th) - np.sin(th0)) / k, y0 - (np.cos(th) - np.cos(th0)) / k, th])

    def sample(self, start, t: float) -> ReferenceSample:
        s, sd, sdd = self.profile(t)
        x, y, th = self._pose(start, s)
        if self.kind == LINE:
            sg = np.sign(self.length)
            v, w, a, e = sg * sd, 0.0, sg * sdd, 0.0
        elif self.kind == TURN:
            sg = np.sign(self.sweep)
            v, w, a, e = 0.0, sg * sd, 0.0, sg * sdd
        else:
            k = self.curvature
            v, w, a, e = sd, k * sd, sdd, k * sdd
        return ReferenceSample(x, y, wrap_angle(th), v, w, a, e)


@dataclass(frozen=True)
class ReferencePath:
    start: tuple[float, float, float]
    segments: tuple[Segment, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def starts(self) -> list[np.ndarray]:
        out = [np.asarray(self.start, dtype=float)]
        for seg in self.segments[:-1]:
            out.append(seg.end_pose(out[-1]))
        return out

    @property
    def end_pose(self) -> np.ndarray:
        pose = np.asarray(self.start, dtype=float)
        for seg in self.segments:
            pose = seg.end_pose(pose)
        return pose

    @property
    def duration(self) -> float:
        return float(sum(seg.profile.duration for seg in self.segments))

    def window(self, t0: float, ts: float, n: int) -> list[ReferenceSample]:
        """``n`` samples from ``t0`` at spacing ``ts``, held at rest past the end."""
        T = self.duration
        return [sample_path(self, min(t0 + i * ts, T)) for i in range(n)]


def sample_path(path: ReferencePath, t: float) -> ReferenceSample:
    """Reference pose, velocities and accelerations at time ``t``."""
    T = path.duration
    if t < 0 or t > T + 1e-12:
        raise ValueError(f"t={t} outside [0, {T}]")
    if not path.segments:
        x, y, th = path.start
        return ReferenceSample(x, y, wrap_angle(th))
    elapsed = 0.0
    starts = path.starts
    for i, seg in enumerate(path.segments):
        d = seg.profile.duration
        if t < elapsed + d or i == len(path.segments) - 1:
            return seg.sample(starts[i], t - elapsed)
        elapsed += d
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class ManeuverParams:
    retreat: float = 0.3
    clearance: float = 0.2
    approach_speed: float = 0.02
    overshoot: float = 0.008
    v_max: float = 0.1
    a_max: float = 0.1
    w_max: float = 0.4
    alpha_max: float = 0.4


def repositioning_maneuver(
    robot_pose,
    object_pose,
    next_side: int,
    contact_distance: float,
    half_side: float,
    bumper_half_width: float = 0.25,
    params: ManeuverParams = ManeuverParams(),
) -> ReferencePath:
    """Back off, circle the object and re-approach it on ``next_side``.

    Side ``j`` is pushed with the robot heading ``theta_o + j*pi/2``. The
    circle is centred on the object and keeps the bumper at least
    ``clearance`` outside the object's circumcircle. Turns in place connect
    the straight pieces to the arc. The approach ends ``overshoot`` past
    the flush pose so contact is made at walking pace.
    """
    if next_side not in (0, 1, 2, 3):
        raise ValueError("side index must be 0..3")
    xr, yr, thr = map(float, robot_pose)
    xo, yo, tho = map(float, object_pose)
    heading = np.array([np.cos(thr), np.sin(thr)])
    rel = np.array([xo - xr, yo - yr])
    circum = np.sqrt(2.0) * half_side
    rho_min = circum + params.clearance + bumper_half_width
    # back off along the heading until the axle sits on a circle of radius rho
    along, perp = rel @ heading, heading[0] * rel[1] - heading[1] * rel[0]
    retreat = params.retreat
    if np.hypot(along + retreat, perp) < rho_min:
        retreat = np.sqrt(rho_min**2 - perp**2) - along
    rho = float(np.hypot(along + retreat, perp))
    p1 = np.array([xr, yr]) - retreat * heading
    a0 = np.arctan2(p1[1] - yo, p1[0] - xo)
    target = tho + next_side * np.pi / 2
    a1 = target + np.pi
    sweep = wrap_angle(a1 - a0)
    if abs(abs(sweep) - np.pi) < 1e-9:
        sweep = np.pi  # opposite side: go round counter-clockwise
    direction = 1.0 if sweep >= 0 else -1.0
    lin = dict(v_max=params.v_max, a_max=params.a_max)
    ang = dict(v_max=params.w_max, a_max=params.alpha_max)
    segs = [Segment(LINE, length=-retreat, **lin)]
    tangent = a0 + direction * np.pi / 2
    segs.append(Segment(TURN, sweep=wrap_angle(tangent - thr), **ang))
    if abs(sweep) > 1e-9:
        segs.append(Segment(ARC, radius=rho, sweep=sweep, **lin))
    segs.append(Segment(TURN, sweep=wrap_angle(target - (a1 + direction * np.pi / 2)), **ang))
    segs.append(Segment(LINE, length=rho - contact_distance + params.overshoot,
                        v_max=params.approach_speed, a_max=params.a_max))
    segs = [s for s in segs if s.profile.distance > 1e-12]
    return ReferencePath((xr, yr, thr), tuple(segs))


def path_from_spec(start, items: Sequence[tuple], v_max: float, a_max: float) -> ReferencePath:
    """Build a path from ``(kind, *values)`` tuples.

    ``("line", L)``, ``("arc", R, sweep_rad)``, ``("turn", sweep_rad)``.
    """
    segs = []
    for item in items:
        kind, vals = item[0], item[1:]
        if kind == LINE:
            segs.append(Segment(LINE, length=vals[0], v_max=v_max, a_max=a_max))
        elif kind == ARC:
            segs.append(Segment(ARC, radius=vals[0], sweep=vals[1], v_max=v_max, a_max=a_max))
        elif kind == TURN:
            segs.append(Segment(TURN, sweep=vals[0], v_max=4 * v_max, a_max=4 * a_max))
        else:
            raise ValueError(f"unknown segment kind {kind!r}")
    return ReferencePath(tuple(start), tuple(segs))
