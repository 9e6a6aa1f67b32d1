"""Planar benchmark systems and their nominal task controllers.

Each system is a SystemModel bundling the mass matrix, contact geometry
(gap functions with first and second derivatives), applied-force model,
input limits, a force cap gamma_max, and a plan factory that produces the
nominal task (reference trajectories plus PD gains) used by the rollout
harness.  Configurations are low dimensional (1 to 3 DOF) so every
derivative is written out analytically.

Systems:
  box1d        point mass above a floor, direct vertical force input
  planar_push  pusher block driving a slider along the ground
  box_pivot    finger pressing a square box so it pivots on one edge
  hopper       planar thruster body on a stick leg over stepped terrain
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit


@dataclass
class ReferencePlan:
    """Reference trajectories: q_ref, v_ref are (H+1, n), u_ff is (H+1, m)."""

    q_ref: np.ndarray
    v_ref: np.ndarray
    u_ff: np.ndarray


@dataclass
class PlanSetup:
    """Initial state, references, and PD gains returned by a plan factory."""

    q0: np.ndarray
    v0: np.ndarray
    plan: ReferencePlan
    kp: np.ndarray
    kd: np.ndarray


@dataclass
class NominalController:
    """Feedforward plus PD tracking with saturation at the input limits."""

    kp: np.ndarray
    kd: np.ndarray
    plan: ReferencePlan
    u_min: np.ndarray
    u_max: np.ndarray

    def __call__(self, k: int, q: np.ndarray, v: np.ndarray) -> np.ndarray:
        i = min(k, len(self.plan.u_ff) - 1)
        j = min(k, len(self.plan.q_ref) - 1)
        u = (self.plan.u_ff[i]
             + self.kp @ (self.plan.q_ref[j] - q)
             + self.kd @ (self.plan.v_ref[j] - v))
        return np.clip(u, self.u_min, self.u_max)


@dataclass(frozen=True)
class Scenario:
    """Multiplicative and additive perturbation of a system's nominal task."""

    label: str
    gain_scale: float = 1.0
    ref_scale: float = 1.0
    q0_offset: tuple = ()
    v0_offset: tuple = ()


@dataclass
class SystemModel:
    name: str
    ndof: int
    ncontacts: int
    ninputs: int
    mass: np.ndarray
    mu: np.ndarray
    friction_idx: tuple
    gamma_max: float
    u_min: np.ndarray
    u_max: np.ndarray
    dt: float = 0.01
    gravity: float = 9.81
    default_kappa: float = 1e-4
    params: dict = field(default_factory=dict)
    sdf: Callable = None
    sdf_grad: Callable = None
    sdf_hess: Callable = None
    tangent_grad: Callable = None
    tangent_hess: Callable = None
    force: Callable = None
    force_q: Callable = None
    force_v: Callable = None
    force_u: Callable = None
    effective_mass: Callable | None = None
    plan_factory: Callable = None
    success_fn: Callable | None = None
    state_sampler: Callable = None


def effective_masses(model: SystemModel, q: np.ndarray) -> np.ndarray:
    """Per-contact effective mass along the contact normal.

    Defaults to 1 / (Jn M^-1 Jn^T) row by row; a contact whose normal row
    is zero gets inf.  Models may override with their own callable.
    """
    if model.effective_mass is not None:
        return np.asarray(model.effective_mass(q), dtype=float)
    Jn = np.asarray(model.sdf_grad(q), dtype=float)
    MinvJt = np.linalg.solve(model.mass, Jn.T)
    w = np.einsum("ij,ji->i", Jn, MinvJt)
    out = np.full(len(w), np.inf)
    nz = w > 0.0
    out[nz] = 1.0 / w[nz]
    return out


def _smoothstep(t, t0, duration):
    x = np.clip((np.asarray(t, dtype=float) - t0) / duration, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def default_scenarios(model: SystemModel, count: int = 5, seed: int = 0) -> list[Scenario]:
    """Baseline task plus seeded perturbations of gains, references, and q0."""
    rng = np.random.default_rng(seed)
    jitter = np.asarray(model.params.get("q0_jitter", np.zeros(model.ndof)), dtype=float)
    out = [Scenario(label="baseline")]
    for i in range(1, count):
        dq = tuple(jitter * rng.uniform(-1.0, 1.0, model.ndof))
        out.append(Scenario(
            label=f"perturb{i}",
            gain_scale=float(rng.uniform(0.85, 1.3)),
            ref_scale=float(rng.uniform(0.9, 1.1)),
            q0_offset=dq,
        ))
    return out


def build_scenario_setup(model: SystemModel, scenario: Scenario, horizon: int,
                         plan_kind: str = "default"):
    """Resolve a scenario to (q0, v0, controller) for a given horizon."""
    setup = model.plan_factory(model, horizon, ref_scale=scenario.ref_scale,
                               kind=plan_kind)
    q0 = setup.q0.copy()
    v0 = setup.v0.copy()
    if len(scenario.q0_offset):
        q0 = q0 + np.asarray(scenario.q0_offset, dtype=float)
        # the interior solver needs open gaps at the start; shrink the
        # perturbation toward the plan start until they are
        for _ in range(40):
            if np.all(np.asarray(model.sdf(q0)) > 0.0):
                break
            q0 = 0.5 * (q0 + setup.q0)
        else:
            q0 = setup.q0.copy()
    if len(scenario.v0_offset):
        v0 = v0 + np.asarray(scenario.v0_offset, dtype=float)
    ctrl = NominalController(
        kp=scenario.gain_scale * setup.kp,
        kd=scenario.gain_scale * setup.kd,
        plan=setup.plan,
        u_min=model.u_min,
        u_max=model.u_max,
    )
    return q0, v0, ctrl


def task_success(model: SystemModel, q_hist: np.ndarray,
                 plan: ReferencePlan | None = None) -> bool | None:
    """True/False task outcome, or None when the system defines no task."""
    if model.success_fn is None:
        return None
    return model.success_fn(model, np.asarray(q_hist, dtype=float), plan)


def random_operating_state(model: SystemModel, rng: np.random.Generator,
                           max_tries: int = 200):
    """Random (q_prev, q_curr, u) with open gaps at both configurations."""
    for _ in range(max_tries):
        q, v, u = model.state_sampler(model, rng)
        q_prev = q - model.dt * v
        if np.all(model.sdf(q) > 0.0) and np.all(model.sdf(q_prev) > 0.0):
            return q_prev, q, u
    raise RuntimeError(f"could not sample an open-gap state for {model.name}")


# ---------------------------------------------------------------------------
# box1d: point mass of mass m at height q above a rigid floor, input is a
# vertical force.  gap phi = q.


def _build_box1d(p: dict) -> SystemModel:
    m, g = p["mass"], p["gravity"]

    def sdf(q):
        return np.array([q[0]])

    def sdf_grad(q):
        return np.array([[1.0]])

    def sdf_hess(q):
        return np.zeros((1, 1, 1))

    def tangent_grad(q):
        return np.zeros((0, 1))

    def tangent_hess(q):
        return np.zeros((0, 1, 1))

    def force(q, v, u):
        return np.array([u[0] - m * g])

    def force_q(q, v, u):
        return np.zeros((1, 1))

    def force_v(q, v, u):
        return np.zeros((1, 1))

    def force_u(q):
        return np.array([[1.0]])

    def plan_factory(model, horizon, ref_scale=1.0, kind="default"):
        t = np.arange(horizon + 1) * model.dt
        v_ref = np.zeros((horizon + 1, 1))
        kp = np.zeros((1, 1))
        kd = np.zeros((1, 1))
        if kind == "default":
            # free drop onto the floor, no feedforward
            q0 = np.array([p["drop_height"] * ref_scale])
            q_ref = np.tile(q0, (horizon + 1, 1))
            u_ff = np.zeros((horizon + 1, 1))
        elif kind == "press":
            # start resting near the floor, ramp a downward press and hold
            q0 = np.array([p["press_gap"]])
            q_ref = np.zeros((horizon + 1, 1))
            ramp = _smoothstep(t, p["press_start"], p["press_ramp"])
            u_ff = (-p["press_force"] * ref_scale * ramp)[:, None]
        else:
            raise ValueError(f"unknown plan kind {kind!r} for box1d")
        return PlanSetup(q0, np.zeros(1), ReferencePlan(q_ref, v_ref, u_ff), kp, kd)

    def state_sampler(model, rng):
        q = np.array([10.0 ** rng.uniform(np.log10(2e-4), np.log10(0.05))])
        v = np.array([rng.uniform(-0.5, 0.5)])
        u = rng.uniform(model.u_min, model.u_max)
        return q, v, u

    # no task criterion: the pressing/drop tasks have no success notion
    return SystemModel(
        name="box1d", ndof=1, ncontacts=1, ninputs=1,
        mass=np.array([[m]]), mu=np.zeros(1), friction_idx=(),
        gamma_max=p["gamma_max"],
        u_min=np.array([p["u_lo"]]), u_max=np.array([p["u_hi"]]),
        dt=p["dt"], gravity=g, default_kappa=p["default_kappa"], params=p,
        sdf=sdf, sdf_grad=sdf_grad, sdf_hess=sdf_hess,
        tangent_grad=tangent_grad, tangent_hess=tangent_hess,
        force=force, force_q=force_q, force_v=force_v, force_u=force_u,
        plan_factory=plan_factory, success_fn=None,
        state_sampler=state_sampler,
    )


_BOX1D_DEFAULTS = dict(
    mass=0.01, gravity=9.81, dt=0.01, gamma_max=0.25, default_kappa=1e-4,
    u_lo=-2.0, u_hi=2.0,
    drop_height=0.05, horizon=200,
    press_force=0.25, press_gap=0.003, press_start=0.4, press_ramp=1.0,
    q0_jitter=(0.008,),
)


# ---------------------------------------------------------------------------
# planar_push: q = (x_p, x_s, z_s).  A pusher block (position x_p, force
# input u) drives a slider (x_s, z_s) along the ground.  Contact 0 is the
# pusher face against the slider (gap x_s - x_p - w0, frictionless), contact
# 1 is the slider on the ground (gap z_s, Coulomb friction on the slider's
# horizontal motion).


def _build_planar_push(p: dict) -> SystemModel:
    g = p["gravity"]
    w0 = p["face_offset"]
    m_s = p["slider_mass"]

    def sdf(q):
        return np.array([q[1] - q[0] - w0, q[2]])

    def sdf_grad(q):
        return np.array([[-1.0, 1.0, 0.0],
                         [0.0, 0.0, 1.0]])

    def sdf_hess(q):
        return np.zeros((2, 3, 3))

    def tangent_grad(q):
        return np.array([[0.0, 1.0, 0.0]])

    def tangent_hess(q):
        return np.zeros((1, 3, 3))

    def force(q, v, u):
        return np.array([u[0], 0.0, -m_s * g])

    def force_q(q, v, u):
        return np.zeros((3, 3))

    def force_v(q, v, u):
        return np.zeros((3, 3))

    def force_u(q):
        return np.array([[1.0], [0.0], [0.0]])

    def plan_factory(model, horizon, ref_scale=1.0, kind="default"):
        if kind != "default":
            raise ValueError(f"unknown plan kind {kind!r} for planar_push")
        t = np.arange(horizon + 1) * model.dt
        x_s0 = w0 + p["start_gap"]
        q0 = np.array([0.0, x_s0, p["start_height"]])
        xs_ref = x_s0 + p["travel"] * ref_scale * _smoothstep(t, p["settle"], p["travel_time"])
        xp_ref = xs_ref - w0 + p["press_depth"]
        q_ref = np.column_stack([xp_ref, xs_ref, np.zeros_like(t)])
        v_ref = np.vstack([np.zeros(3), np.diff(q_ref, axis=0) / model.dt])
        u_ff = np.zeros((horizon + 1, 1))
        kp = np.array([[p["kp"], 0.0, 0.0]])
        kd = np.array([[p["kd"], 0.0, 0.0]])
        v0 = np.array([p["approach_speed"], 0.0, 0.0])
        return PlanSetup(q0, v0, ReferencePlan(q_ref, v_ref, u_ff), kp, kd)

    def state_sampler(model, rng):
        x_p = rng.uniform(-0.02, 0.02)
        x_s = x_p + w0 + 10.0 ** rng.uniform(np.log10(2e-4), np.log10(0.03))
        z_s = 10.0 ** rng.uniform(np.log10(2e-4), np.log10(0.02))
        q = np.array([x_p, x_s, z_s])
        v = rng.uniform(-1.0, 1.0, 3) * np.array([0.3, 0.3, 0.2])
        u = rng.uniform(model.u_min, model.u_max)
        return q, v, u

    return SystemModel(
        name="planar_push", ndof=3, ncontacts=2, ninputs=1,
        mass=np.diag([p["pusher_mass"], m_s, m_s]),
        mu=np.array([0.0, p["mu_ground"]]), friction_idx=(1,),
        gamma_max=p["gamma_max"],
        u_min=np.array([p["u_lo"]]), u_max=np.array([p["u_hi"]]),
        dt=p["dt"], gravity=g, default_kappa=p["default_kappa"], params=p,
        sdf=sdf, sdf_grad=sdf_grad, sdf_hess=sdf_hess,
        tangent_grad=tangent_grad, tangent_hess=tangent_hess,
        force=force, force_q=force_q, force_v=force_v, force_u=force_u,
        plan_factory=plan_factory, success_fn=None,
        state_sampler=state_sampler,
    )


_PUSH_DEFAULTS = dict(
    pusher_mass=0.02, slider_mass=0.01, face_offset=0.05, mu_ground=0.5,
    gravity=9.81, dt=0.01, gamma_max=0.245, default_kappa=1e-4,
    u_lo=-3.0, u_hi=3.0,
    start_gap=0.006, start_height=0.002, press_depth=0.003, approach_speed=0.35,
    settle=0.3, travel=0.25, travel_time=1.8, kp=200.0, kd=1.5, horizon=250,
    q0_jitter=(0.001, 0.0, 0.0),
)


# ---------------------------------------------------------------------------
# box_pivot: q = (theta, x_f).  A square box (half side b) pivots on its
# bottom edge at the origin; positive theta lifts the far edge to height
# 2 b sin(theta).  A finger at fixed height z_f with horizontal position x_f
# (force input u) presses the box face, whose plane satisfies
# -x cos(theta) + z sin(theta) = 2b.  Both contacts are frictionless.


def _build_box_pivot(p: dict) -> SystemModel:
    g = p["gravity"]
    b = p["half_width"]
    m_b = p["box_mass"]
    z_f = p["finger_height"]
    inertia = (8.0 / 3.0) * m_b * b * b  # square about an edge

    def sdf(q):
        th, xf = q
        return np.array([-xf * np.cos(th) + z_f * np.sin(th) - 2.0 * b,
                         2.0 * b * np.sin(th)])

    def sdf_grad(q):
        th, xf = q
        return np.array([[xf * np.sin(th) + z_f * np.cos(th), -np.cos(th)],
                         [2.0 * b * np.cos(th), 0.0]])

    def sdf_hess(q):
        th, xf = q
        H = np.zeros((2, 2, 2))
        H[0, 0, 0] = xf * np.cos(th) - z_f * np.sin(th)
        H[0, 0, 1] = np.sin(th)
        H[0, 1, 0] = np.sin(th)
        H[1, 0, 0] = -2.0 * b * np.sin(th)
        return H

    def tangent_grad(q):
        return np.zeros((0, 2))

    def tangent_hess(q):
        return np.zeros((0, 2, 2))

    def force(q, v, u):
        th = q[0]
        tau_g = -m_b * g * b * (np.cos(th) - np.sin(th))
        return np.array([tau_g, u[0]])

    def force_q(q, v, u):
        th = q[0]
        Fq = np.zeros((2, 2))
        Fq[0, 0] = m_b * g * b * (np.sin(th) + np.cos(th))
        return Fq

    def force_v(q, v, u):
        return np.zeros((2, 2))

    def force_u(q):
        return np.array([[0.0], [1.0]])

    def _face_x(th):
        # finger position where the face gap closes
        return (z_f * np.sin(th) - 2.0 * b) / np.cos(th)

    def _hold_force(th):
        # quasi-static face force that balances gravity about the pivot
        lever = z_f * np.cos(th) + _face_x(th) * np.sin(th)
        return np.maximum(m_b * g * b * (np.cos(th) - np.sin(th)) / lever, 0.0)

    def plan_factory(model, horizon, ref_scale=1.0, kind="default"):
        if kind != "default":
            raise ValueError(f"unknown plan kind {kind!r} for box_pivot")
        t = np.arange(horizon + 1) * model.dt
        th_ref = p["theta_target"] * ref_scale * _smoothstep(t, p["settle"], p["travel_time"])
        xf_ref = _face_x(th_ref) + p["press_depth"]
        q_ref = np.column_stack([th_ref, xf_ref])
        v_ref = np.vstack([np.zeros(2), np.diff(q_ref, axis=0) / model.dt])
        u_ff = (_hold_force(th_ref) * np.cos(th_ref))[:, None]
        kp = np.array([[0.0, p["kp"]]])
        kd = np.array([[0.0, p["kd"]]])
        q0 = np.array([p["theta0"], _face_x(p["theta0"]) - p["start_gap"]])
        return PlanSetup(q0, np.zeros(2), ReferencePlan(q_ref, v_ref, u_ff), kp, kd)

    def success_fn(model, q_hist, plan=None):
        if plan is None:
            return None
        return bool(abs(q_hist[-1, 0] - plan.q_ref[-1, 0]) <= 0.05)

    def state_sampler(model, rng):
        th = rng.uniform(0.002, 0.55)
        xf = _face_x(th) - 10.0 ** rng.uniform(np.log10(2e-4), np.log10(0.02))
        q = np.array([th, xf])
        v = rng.uniform(-1.0, 1.0, 2) * np.array([0.5, 0.3])
        u = rng.uniform(model.u_min, model.u_max)
        return q, v, u

    return SystemModel(
        name="box_pivot", ndof=2, ncontacts=2, ninputs=1,
        mass=np.diag([inertia, p["finger_mass"]]),
        mu=np.zeros(2), friction_idx=(),
        gamma_max=p["gamma_max"],
        u_min=np.array([p["u_lo"]]), u_max=np.array([p["u_hi"]]),
        dt=p["dt"], gravity=g, default_kappa=p["default_kappa"], params=p,
        sdf=sdf, sdf_grad=sdf_grad, sdf_hess=sdf_hess,
        tangent_grad=tangent_grad, tangent_hess=tangent_hess,
        force=force, force_q=force_q, force_v=force_v, force_u=force_u,
        plan_factory=plan_factory, success_fn=success_fn,
        state_sampler=state_sampler,
    )


_PIVOT_DEFAULTS = dict(
    box_mass=0.1, half_width=0.05, finger_mass=0.05, finger_height=0.08,
    gravity=9.81, dt=0.01, gamma_max=0.9, default_kappa=1e-4,
    u_lo=-3.0, u_hi=3.0,
    start_gap=0.007, theta0=0.005, press_depth=0.001,
    settle=0.3, theta_target=0.5, travel_time=0.9, kp=180.0, kd=1.0, horizon=200,
    q0_jitter=(0.0, 0.001),
)


# ---------------------------------------------------------------------------
# hopper: q = (x, z, theta).  A rigid body with thrust u0 directed along a
# stick leg of length L (foot at (x + L sin th, z - L cos th)) plus a body
# torque u1.  The terrain height drops smoothly by `drop` near x = drop_x.
# The single contact is the foot on the terrain, with Coulomb friction.


def _build_hopper(p: dict) -> SystemModel:
    g = p["gravity"]
    m = p["body_mass"]
    L = p["leg_length"]

    def terrain(x):
        return -p["drop"] * expit((x - p["drop_x"]) / p["drop_width"])

    def terrain_d1(x):
        s = expit((x - p["drop_x"]) / p["drop_width"])
        return -p["drop"] * s * (1.0 - s) / p["drop_width"]

    def terrain_d2(x):
        s = expit((x - p["drop_x"]) / p["drop_width"])
        return -p["drop"] * s * (1.0 - s) * (1.0 - 2.0 * s) / p["drop_width"] ** 2

    def _foot_x(q):
        return q[0] + L * np.sin(q[2])

    def sdf(q):
        fz = q[1] - L * np.cos(q[2])
        return np.array([fz - terrain(_foot_x(q))])

    def sdf_grad(q):
        th = q[2]
        g1 = terrain_d1(_foot_x(q))
        return np.array([[-g1, 1.0, L * np.sin(th) - g1 * L * np.cos(th)]])

    def sdf_hess(q):
        th = q[2]
        fx = _foot_x(q)
        g1 = terrain_d1(fx)
        g2 = terrain_d2(fx)
        dfx = np.array([1.0, 0.0, L * np.cos(th)])
        H = np.zeros((1, 3, 3))
        H[0] -= g2 * np.outer(dfx, dfx)
        H[0, 2, 2] += L * np.cos(th) + g1 * L * np.sin(th)
        return H

    def tangent_grad(q):
        return np.array([[1.0, 0.0, L * np.cos(q[2])]])

    def tangent_hess(q):
        H = np.zeros((1, 3, 3))
        H[0, 2, 2] = -L * np.sin(q[2])
        return H

    def force(q, v, u):
        th = q[2]
        return np.array([-u[0] * np.sin(th), u[0] * np.cos(th) - m * g, u[1]])

    def force_q(q, v, u):
        th = q[2]
        Fq = np.zeros((3, 3))
        Fq[0, 2] = -u[0] * np.cos(th)
        Fq[1, 2] = -u[0] * np.sin(th)
        return Fq

    def force_v(q, v, u):
        return np.zeros((3, 3))

    def force_u(q):
        th = q[2]
        return np.array([[-np.sin(th), 0.0],
                         [np.cos(th), 0.0],
                         [0.0, 1.0]])

    def plan_factory(model, horizon, ref_scale=1.0, kind="default"):
        # open-loop thrust pulses launch each hop; no altitude feedback, so
        # descents are ballistic and touchdown speed is set by the terrain
        if kind != "default":
            raise ValueError(f"unknown plan kind {kind!r} for hopper")
        t = np.arange(horizon + 1) * model.dt
        lean = p["lean"]
        z_stand = L * np.cos(lean)
        x_ref = p["plan_speed"] * np.clip(t - p["hop_start"], 0.0, p["pulse_stop"] - p["hop_start"])
        z_ref = z_stand + terrain(x_ref)
        q_ref = np.column_stack([x_ref, z_ref, np.full_like(t, -lean)])
        v_ref = np.vstack([np.zeros(3), np.diff(q_ref, axis=0) / model.dt])
        bump = np.maximum(0.0, np.sin(2.0 * np.pi * (t - p["hop_start"]) / p["hop_period"])) ** 8
        bump[t < p["hop_start"]] = 0.0
        bump[t >= p["pulse_stop"]] = 0.0
        u_ff = np.column_stack([p["pulse_amp"] * ref_scale * bump,
                                np.zeros_like(t)])
        kp = np.array([[0.0, 0.0, 0.0],
                       [0.0, 0.0, p["kp_th"]]])
        kd = np.array([[0.0, 0.0, 0.0],
                       [0.0, 0.0, p["kd_th"]]])
        q0 = np.array([0.0, z_stand + p["start_clearance"], -lean])
        return PlanSetup(q0, np.zeros(3), ReferencePlan(q_ref, v_ref, u_ff), kp, kd)

    def success_fn(model, q_hist, plan=None):
        return bool(q_hist[-1, 0] >= p["x_goal"]
                    and np.max(np.abs(q_hist[:, 2])) <= 0.6)

    def state_sampler(model, rng):
        x = rng.uniform(-0.05, 0.5)
        th = rng.uniform(-0.25, 0.25)
        gap = 10.0 ** rng.uniform(np.log10(2e-4), np.log10(0.05))
        z = L * np.cos(th) + terrain(x + L * np.sin(th)) + gap
        q = np.array([x, z, th])
        v = rng.uniform(-1.0, 1.0, 3) * np.array([0.4, 0.5, 0.8])
        u = rng.uniform(model.u_min, model.u_max)
        return q, v, u

    return SystemModel(
        name="hopper", ndof=3, ncontacts=1, ninputs=2,
        mass=np.diag([m, m, p["inertia"]]),
        mu=np.array([p["mu_ground"]]), friction_idx=(0,),
        gamma_max=p["gamma_max"],
        u_min=np.array([p["u0_lo"], p["u1_lo"]]),
        u_max=np.array([p["u0_hi"], p["u1_hi"]]),
        dt=p["dt"], gravity=g, default_kappa=p["default_kappa"], params=p,
        sdf=sdf, sdf_grad=sdf_grad, sdf_hess=sdf_hess,
        tangent_grad=tangent_grad, tangent_hess=tangent_hess,
        force=force, force_q=force_q, force_v=force_v, force_u=force_u,
        plan_factory=plan_factory, success_fn=success_fn,
        state_sampler=state_sampler,
    )


_HOPPER_DEFAULTS = dict(
    body_mass=0.04, inertia=2e-3, leg_length=0.15, mu_ground=0.6,
    gravity=9.81, dt=0.01, gamma_max=1.3, default_kappa=1e-4,
    u0_lo=0.0, u0_hi=8.0, u1_lo=-0.3, u1_hi=0.3,
    drop=0.07, drop_x=0.3, drop_width=0.03,
    lean=0.08, start_clearance=0.002,
    hop_start=0.3, hop_period=0.5, pulse_amp=1.2, plan_speed=0.3,
    pulse_stop=3.0, kp_th=0.45, kd_th=0.04,
    x_goal=0.45, horizon=400,
    q0_jitter=(0.0, 0.0015, 0.0),
)


_BUILDERS = {
    "box1d": (_build_box1d, _BOX1D_DEFAULTS),
    "planar_push": (_build_planar_push, _PUSH_DEFAULTS),
    "box_pivot": (_build_box_pivot, _PIVOT_DEFAULTS),
    "hopper": (_build_hopper, _HOPPER_DEFAULTS),
}


def system_names() -> list[str]:
    return sorted(_BUILDERS)


def make_system(name: str, **overrides) -> SystemModel:
    if name not in _BUILDERS:
        raise ValueError(f"unknown system {name!r}, expected one of {system_names()}")
    build, defaults = _BUILDERS[name]
    unknown = set(overrides) - set(defaults)
    if unknown:
        raise ValueError(f"unknown parameters for {name}: {sorted(unknown)}")
    params = dict(defaults)
    params.update(overrides)
    return build(params)
