"""Receding-horizon LTV controller with non-slip pushing constraints.

Each step predicts the nominal error trajectory, linearizes and discretizes
it, condenses the error predictions into an affine function of the stacked
decision ``z = [u_0, fc_0, ..., u_{p-1}, fc_{p-1}]`` and solves one QP.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .ltv import LtvStepModel, linearize_along
from .pushing import (
    FrictionParams,
    GraspMatrix,
    LimitSurface,
    ObjectGeometry,
    friction_half_angle,
    grasp_matrix,
    limit_surface_matrix,
)
from .qp import OPTIMAL, QpProblem, solve_qp
from .robot import ControlInput, ReferenceSample, predict_nominal

NX, NU, NF = 5, 2, 4
NB = NU + NF  # per-step decision block


@dataclass(frozen=True)
class MpcWeights:
    q_diag: tuple = (15.0, 20.0, 5.0, 1.0, 1.0)
    p_terminal: np.ndarray = field(default_factory=lambda: 50.0 * np.diag([15.0, 20.0, 5.0, 1.0, 1.0]))
    r_u_diag: tuple = (0.1, 0.1, 0.001, 0.001, 0.001, 0.001)
    r_du_diag: tuple = (0.1, 0.1, 0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.q_diag) != NX or len(self.r_u_diag) != NB or len(self.r_du_diag) != NB:
            raise ValueError("weights must have 5 state and 6 decision entries")
        p = np.asarray(self.p_terminal, dtype=float)
        if p.shape != (NX, NX):
            raise ValueError("terminal weight must be 5x5")
        if min(self.q_diag) < 0 or min(self.r_u_diag) < 0 or min(self.r_du_diag) < 0:
            raise ValueError("weights must be nonnegative")
        if np.min(np.linalg.eigvalsh(0.5 * (p + p.T))) < -1e-12:
            raise ValueError("terminal weight must be positive semidefinite")


McpWeights = MpcWeights


@dataclass(frozen=True)
class ControllerConfig:
    horizon: int = 10
    ts: float = 0.1
    u_min: tuple = (-0.3, -0.5)
    u_max: tuple = (0.3, 0.5)
    du_min: Optional[tuple] = None
    du_max: Optional[tuple] = None
    force_max: float = 50.0
    weights: MpcWeights = field(default_factory=MpcWeights)
    sigma: float = 1e-4
    constraint_enabled: bool = True
    qp_tol: float = 1e-6
    qp_max_iters: int = 4000
    fallback_decay: float = 0.5

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.ts <= 0:
            raise ValueError("sampling time must be positive")
        if np.any(np.asarray(self.u_min) >= np.asarray(self.u_max)):
            raise ValueError("u_min must be below u_max")
        # rate bounds default to a full bound swing per second
        if self.du_max is None:
            object.__setattr__(self, "du_max", tuple(10.0 * self.ts * np.asarray(self.u_max)))
        if self.du_min is None:
            object.__setattr__(self, "du_min", tuple(-10.0 * self.ts * np.asarray(self.u_max)))
        if self.force_max <= 0 or self.sigma < 0:
            raise ValueError("force_max must be positive and sigma nonnegative")


@dataclass
class HorizonDecision:
    z: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        if self.z.ndim != 1 or self.z.size % NB:
            raise ValueError("decision length must be a multiple of 6")

    @property
    def horizon(self) -> int:
        return self.z.size // NB

    @property
    def blocks(self) -> np.ndarray:
        return self.z.reshape(-1, NB)

    @property
    def inputs(self) -> np.ndarray:
        return self.blocks[:, :NU]

    @property
    def forces(self) -> np.ndarray:
        return self.blocks[:, NU:]

    def shifted(self) -> "HorizonDecision":
        b = self.blocks
        return HorizonDecision(np.vstack([b[1:], b[-1:]]).ravel())


@dataclass
class Prediction:
    """Stacked errors ``[e_1, ..., e_p] = gamma @ z + free``."""

    gamma: np.ndarray
    free: np.ndarray

    def errors(self, z) -> np.ndarray:
        return (self.gamma @ np.asarray(z) + self.free).reshape(-1, NX)


@dataclass
class CondensedCost:
    p_matrix: np.ndarray
    q_vec: np.ndarray
    constant: float
    prediction: Prediction

    def value(self, z) -> float:
        z = np.asarray(z)
        return float(0.5 * z @ self.p_matrix @ z + self.q_vec @ z + self.constant)


@dataclass
class StepDiagnostics:
    qp_status: str
    qp_iters: int
    solve_ms: float
    fallback: bool
    pushing_constraints: bool
    cost_check_error: float = float("nan")


def _disturbances(refs: Sequence) -> np.ndarray:
    return np.array([r.disturbance if isinstance(r, ReferenceSample) else np.asarray(r) for r in refs])


def condense(models: Sequence[LtvStepModel], e_now, refs: Sequence) -> Prediction:
    """Express ``e[k+1..k+p]`` affinely in the stacked decision."""
    p = len(models)
    if len(refs) < p:
        raise ValueError("need one reference sample per model")
    dist = _disturbances(refs[:p])
    gamma = np.zeros((NX * p, NB * p))
    free = np.zeros(NX * p)
    row_prev = np.zeros((NX, NB * p))
    x_prev = np.asarray(e_now, dtype=float)
    for i, m in enumerate(models):
        row = m.a_d @ row_prev
        row[:, NB * i : NB * i + NU] += m.b_u
        x = m.a_d @ x_prev + m.b_v @ dist[i] + m.offset
        gamma[NX * i : NX * (i + 1)] = row
        free[NX * i : NX * (i + 1)] = x
        row_prev, x_prev = row, x
    return Prediction(gamma, free)


def build_condensed_cost(
    models: Sequence[LtvStepModel],
    e_now,
    refs: Sequence,
    weights: MpcWeights,
    prev_u,
) -> CondensedCost:
    """Quadratic form ``J(z) = 1/2 z'Pz + q'z + constant`` of the horizon cost.

    ``prev_u`` is the 6-block applied at the previous step; it precedes the
    first block in the rate term.
    """
    p = len(models)
    if p == 0:
        raise ValueError("need at least one model")
    e_now = np.asarray(e_now, dtype=float)
    pred = condense(models, e_now, refs)
    q_bar = np.kron(np.eye(p), np.diag(weights.q_diag))
    q_bar[-NX:, -NX:] = np.asarray(weights.p_terminal, dtype=float)
    r_bar = np.kron(np.eye(p), np.diag(weights.r_u_diag))
    rd_bar = np.kron(np.eye(p), np.diag(weights.r_du_diag))
    diff = np.eye(NB * p) - np.eye(NB * p, k=-NB)
    d0 = np.zeros(NB * p)
    d0[:NB] = np.asarray(prev_u, dtype=float).reshape(NB)

    g, x0 = pred.gamma, pred.free
    gq = g.T @ q_bar
    hess = 2.0 * (gq @ g + r_bar + diff.T @ rd_bar @ diff)
    lin = 2.0 * (gq @ x0 - diff.T @ rd_bar @ d0)
    const = float(x0 @ q_bar @ x0 + d0 @ rd_bar @ d0 + e_now @ np.diag(weights.q_diag) @ e_now)
    return CondensedCost(0.5 * (hess + hess.T), lin, const, pred)


def horizon_cost(models, e_now, refs, weights: MpcWeights, prev_u, z) -> float:
    """Cost of ``z`` by forward simulation of the LTV models."""
    z = np.asarray(z, dtype=float).reshape(-1, NB)
    dist = _disturbances(refs)
    e = np.asarray(e_now, dtype=float)
    q = np.diag(weights.q_diag)
    r = np.diag(weights.r_u_diag)
    rd = np.diag(weights.r_du_diag)
    prev = np.asarray(prev_u, dtype=float)
    total = 0.0
    for i, m in enumerate(models):
        du = z[i] - prev
        total += e @ q @ e + z[i] @ r @ z[i] + du @ rd @ du
        e = m.step(e, z[i, :NU], dist[i])
        prev = z[i]
    return float(total + e @ np.asarray(weights.p_terminal) @ e)


def rigid_twist_robot_frame(v_r: float, omega_r: float, p_or) -> np.ndarray:
    """Object twist, in robot axes, if object and robot moved as one body."""
    px, py = p_or
    return np.array([v_r - omega_r * py, omega_r * px, omega_r])


def build_pushing_constraints(
    prediction: Prediction,
    refs: Sequence,
    p_or,
    grasp: GraspMatrix,
    ls: LimitSurface,
    sigma: float = 1e-4,
) -> tuple[np.ndarray, np.ndarray]:
    """Non-slip coupling rows ``M z <= b`` (six per horizon step).

    The coupling ``rigid twist = H G fc`` is written in robot axes, where
    ``grasp`` is the grasp matrix at zero heading. The velocity applied over
    step ``i`` is the one reached at ``k + i + 1``, rebuilt from the error
    prediction plus the reference velocity. Each equality becomes
    ``-sigma <= g_i(z) <= sigma``.
    """
    p = prediction.gamma.shape[1] // NB
    if len(refs) < p + 1:
        raise ValueError("need p + 1 reference samples")
    px, py = np.asarray(p_or, dtype=float)
    hg = ls.h_matrix @ grasp.entries
    # twist = t_mat @ (v, omega)
    t_mat = np.array([[1.0, -py], [0.0, px], [0.0, 1.0]])
    m_rows = np.zeros((6 * p, NB * p))
    b = np.zeros(6 * p)
    for i in range(p):
        ref = refs[i + 1]
        rows = prediction.gamma[NX * i + 3 : NX * i + 5]
        vel0 = prediction.free[NX * i + 3 : NX * i + 5] + np.array([ref.v_rd, ref.omega_rd])
        jac = t_mat @ rows
        jac[:, NB * i + NU : NB * (i + 1)] -= hg
        g0 = t_mat @ vel0
        m_rows[6 * i : 6 * i + 3] = jac
        m_rows[6 * i + 3 : 6 * i + 6] = -jac
        b[6 * i : 6 * i + 3] = sigma - g0
        b[6 * i + 3 : 6 * i + 6] = sigma + g0
    return m_rows, b


class MpcController:
    """Stateful controller; ``control_step`` must be called sequentially."""

    def __init__(
        self,
        config: ControllerConfig,
        friction: FrictionParams = FrictionParams(),
        geometry: ObjectGeometry = ObjectGeometry(),
        self_check: bool = False,
    ):
        self.config = config
        self.limit_surface = limit_surface_matrix(friction, geometry)
        self.grasp = grasp_matrix(0.0, friction_half_angle(friction.mu_contact), geometry.half_side)
        self.self_check = self_check
        self.reset()

    def reset(self):
        self.prev_solution: Optional[HorizonDecision] = None
        self.prev_block = np.zeros(NB)

    def _bounds(self):
        c = self.config
        lo = np.concatenate([c.u_min, np.zeros(NF)])
        hi = np.concatenate([c.u_max, np.full(NF, c.force_max)])
        return np.tile(lo, c.horizon), np.tile(hi, c.horizon)

    def _rate_rows(self):
        c = self.config
        p = c.horizon
        sel = np.zeros((NU * p, NB * p))
        for i in range(p):
            sel[NU * i : NU * (i + 1), NB * i : NB * i + NU] = np.eye(NU)
            if i:
                sel[NU * i : NU * (i + 1), NB * (i - 1) : NB * (i - 1) + NU] = -np.eye(NU)
        shift = np.zeros(NU * p)
        shift[:NU] = self.prev_block[:NU]
        hi = np.tile(c.du_max, p) + shift
        lo = np.tile(c.du_min, p) + shift
        return np.vstack([sel, -sel]), np.concatenate([hi, -lo])

    def nominal_inputs(self, refs: Sequence) -> np.ndarray:
        p = self.config.horizon
        if self.prev_solution is None:
            return np.array([refs[i].feedforward for i in range(p)])
        return self.prev_solution.shifted().inputs

    def build_qp(self, e_now, refs: Sequence, p_or=None):
        """Assemble the QP of one step; returns ``(problem, cost, models)``."""
        c = self.config
        p = c.horizon
        if len(refs) < p + 1:
            raise ValueError(f"need {p + 1} reference samples, got {len(refs)}")
        e_now = np.asarray(e_now, dtype=float)
        u_nom = self.nominal_inputs(refs)
        nominal = predict_nominal(e_now, refs, u_nom, c.ts, p)
        models = linearize_along(nominal, refs, u_nom, c.ts)
        cost = build_condensed_cost(models, e_now, refs, c.weights, self.prev_block)
        g_rows, h = self._rate_rows()
        if c.constraint_enabled and p_or is not None:
            m_rows, b = build_pushing_constraints(
                cost.prediction, refs, p_or, self.grasp, self.limit_surface, c.sigma
            )
            g_rows, h = np.vstack([g_rows, m_rows]), np.concatenate([h, b])
        lo, hi = self._bounds()
        return QpProblem(cost.p_matrix, cost.q_vec, g_rows, h, lo, hi), cost, models

    def control_step(self, e_now, refs: Sequence, p_or=None):
        """One pass of the feedback procedure.

        ``p_or`` is the measured object position in the robot frame, or
        ``None`` when there is no contact (pure tracking). Returns the input
        to integrate into the velocity command, the horizon decision and
        diagnostics.
        """
        c = self.config
        t0 = time.perf_counter()
        prob, cost, models = self.build_qp(e_now, refs, p_or)
        warm = None if self.prev_solution is None else self.prev_solution.shifted().z
        sol = solve_qp(prob, warm_start=warm, tol=c.qp_tol, max_iters=c.qp_max_iters)
        check = float("nan")
        if self.self_check:
            z = np.random.default_rng(0).normal(size=prob.n)
            ref_cost = horizon_cost(models, e_now, refs, c.weights, self.prev_block, z)
            check = abs(cost.value(z) - ref_cost) / max(1.0, abs(ref_cost))
        if sol.status == OPTIMAL:
            decision = HorizonDecision(sol.z_star)
            fallback = False
        else:
            # hold the previous input, halved, and keep the stale plan
            block = self.prev_block.copy()
            block[:NU] *= c.fallback_decay
            block[NU:] = 0.0
            base = self.prev_solution.shifted().z if self.prev_solution is not None else np.zeros(prob.n)
            decision = HorizonDecision(base)
            decision.z[:NB] = block
            fallback = True
        self.prev_solution = decision
        self.prev_block = decision.blocks[0].copy()
        elapsed = 1e3 * (time.perf_counter() - t0)
        diag = StepDiagnostics(
            sol.status, sol.iterations, elapsed, fallback,
            bool(c.constraint_enabled and p_or is not None), check,
        )
        return ControlInput(*decision.inputs[0]), decision, diag

    def next_command(self, command, u) -> np.ndarray:
        """Velocity command after integrating the acceleration input."""
        return np.asarray(command, dtype=float) + self.config.ts * np.asarray(u, dtype=float)
