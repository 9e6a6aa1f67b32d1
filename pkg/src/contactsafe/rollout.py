"""Closed-loop rollout harness, force-safety metrics, and parameter scans.

A rollout advances one of the benchmark systems under its nominal task
controller, optionally passing every input through the force safety filter.
Each record row k documents the k -> k+1 transition: the state entering the
step, the nominal and executed inputs, the realized forces and gaps, the
barrier value h_k the filter saw, and the filter's predicted next headroom
with its realized error.

Solver failures are survivable: a failed nominal pre-solve falls back to
the most recent force model, and a failed executed solve retries the last
executed input before holding the state for one step.  Any non-converged
executed step marks the rollout as failed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .ncp import CentralPath, ContactStep, SolverSettings, SolveStatus, solve_step
from .safety import (BarrierSpec, FilterStepInput, QPStatus, barrier,
                     filter_step)
from .sensitivity import SingularJacobian, implicit_jacobian
from .systems import Scenario, SystemModel, build_scenario_setup, task_success

_FLOAT_FMT = "%.17g"


class ControllerKind(Enum):
    NOMINAL = "nominal"
    CBF = "cbf"
    RCBF = "rcbf"


@dataclass
class RolloutRecord:
    model_name: str
    controller: str
    kappa: float
    dt: float
    horizon: int
    scenario_label: str
    plan_kind: str
    q: np.ndarray
    v: np.ndarray
    u_nom: np.ndarray
    u_star: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    phi: np.ndarray
    h: np.ndarray
    h_hat_next: np.ndarray
    delta_h: np.ndarray
    active: np.ndarray
    qp_status: list
    solver_status: list
    q_hist: np.ndarray
    failed: bool
    success: bool | None


@dataclass
class Metrics:
    viol_rate: float
    max_overshoot: float
    peak_force: float
    mean_deviation: float
    success: str


@dataclass
class SweepPoint:
    kappa: float
    min_margin: float
    violated: bool
    failed: bool
    metrics: Metrics


def _rest_force(model: SystemModel, q: np.ndarray, cp: CentralPath) -> np.ndarray:
    # relaxed force a resting contact would carry at the current gaps
    phi = np.maximum(np.asarray(model.sdf(q), dtype=float), 1e-9)
    return cp.kappa / phi


def run_rollout(model: SystemModel, kind: ControllerKind | str, spec: BarrierSpec,
                cp: CentralPath, horizon: int, scenario: Scenario | None = None,
                settings: SolverSettings | None = None,
                plan_kind: str = "default") -> RolloutRecord:
    if isinstance(kind, str):
        kind = ControllerKind(kind)
    scenario = scenario or Scenario(label="baseline")
    settings = settings or SolverSettings()
    q0, v0, ctrl = build_scenario_setup(model, scenario, horizon, plan_kind)
    n, c, m = model.ndof, model.ncontacts, model.ninputs
    fc = len(model.friction_idx)
    H = horizon

    q_a = np.zeros((H, n))
    v_a = np.zeros((H, n))
    u_nom_a = np.zeros((H, m))
    u_star_a = np.zeros((H, m))
    gamma_a = np.full((H, c), np.nan)
    beta_a = np.full((H, fc), np.nan)
    phi_a = np.full((H, c), np.nan)
    h_a = np.full(H, np.nan)
    hhat_a = np.full(H, np.nan)
    dh_a = np.full(H, np.nan)
    act_a = np.zeros((H, c), dtype=bool)
    qp_s: list = []
    sol_s: list = []
    q_hist = np.zeros((H + 1, n))
    q_hist[0] = q0

    filtered = kind is not ControllerKind.NOMINAL
    q_prev = q0 - model.dt * v0
    q_curr = q0.copy()
    warm_nom = None
    warm_exec = None
    stale_gamma = None
    stale_J = None
    h_k = None
    failed = False

    for k in range(H):
        v_curr = (q_curr - q_prev) / model.dt
        q_a[k] = q_curr
        v_a[k] = v_curr
        u_nom = ctrl(k, q_curr, v_curr)
        u_nom_a[k] = u_nom
        step_nom = ContactStep(q_prev, q_curr, u_nom, model.dt)

        # the barrier state at k = 0 comes from the input-independent rest
        # force estimate; afterwards h_k tracks realized step forces
        if h_k is None:
            h_k = barrier(_rest_force(model, q_curr, cp), spec.gamma_max)

        nom_out = None
        if filtered:
            nom_out = solve_step(step_nom, cp, model, settings, warm_start=warm_nom)
            if nom_out.status is SolveStatus.CONVERGED:
                warm_nom = nom_out.solution

            gamma_nom = None
            J = None
            if nom_out.status is SolveStatus.CONVERGED:
                try:
                    J = implicit_jacobian(nom_out.solution, step_nom, cp, model).J_gamma
                    gamma_nom = nom_out.solution.gamma
                except SingularJacobian:
                    pass
            if gamma_nom is None:
                gamma_nom, J = stale_gamma, stale_J
            h_a[k] = h_k
            if gamma_nom is None:
                # no force model available yet, pass the nominal through
                u_exec = np.clip(u_nom, model.u_min, model.u_max)
                qp_s.append(QPStatus.CLAMPED.value)
            else:
                stale_gamma, stale_J = gamma_nom, J
                f_out = filter_step(
                    FilterStepInput(u_nom, h_k, gamma_nom, J,
                                    model.u_min, model.u_max), spec)
                u_exec = f_out.u_star
                hhat_a[k] = f_out.predicted_h_next
                act_a[k] = f_out.active
                qp_s.append(f_out.qp_status.value)
        else:
            u_exec = u_nom
            qp_s.append("nominal")
            h_a[k] = h_k
        u_star_a[k] = u_exec

        if (nom_out is not None and nom_out.status is SolveStatus.CONVERGED
                and np.array_equal(u_exec, u_nom)):
            exec_out = nom_out
            status = "converged"
        else:
            step_exec = ContactStep(q_prev, q_curr, u_exec, model.dt)
            exec_out = solve_step(step_exec, cp, model, settings, warm_start=warm_exec)
            status = "converged"
            if exec_out.status is not SolveStatus.CONVERGED:
                failed = True
                u_retry = (u_star_a[k - 1] if k > 0
                           else np.clip(u_nom, model.u_min, model.u_max))
                step_retry = ContactStep(q_prev, q_curr, u_retry, model.dt)
                exec_out = solve_step(step_retry, cp, model, settings,
                                      warm_start=warm_exec)
                if exec_out.status is SolveStatus.CONVERGED:
                    status = "retry"
                    u_star_a[k] = u_retry
                else:
                    status = "hold"
        sol_s.append(status)

        if status == "hold":
            q_next = q_curr.copy()
        else:
            sol = exec_out.solution
            warm_exec = sol
            q_next = sol.q_next
            gamma_a[k] = sol.gamma
            beta_a[k] = sol.beta
            phi_a[k] = model.sdf(sol.q_next)
            h_next = barrier(sol.gamma, spec.gamma_max)
            if not np.isnan(hhat_a[k]):
                dh_a[k] = h_next - hhat_a[k]
            h_k = h_next

        q_hist[k + 1] = q_next
        q_prev, q_curr = q_curr, q_next

    success = task_success(model, q_hist, ctrl.plan)
    return RolloutRecord(
        model_name=model.name, controller=kind.value, kappa=cp.kappa,
        dt=model.dt, horizon=H, scenario_label=scenario.label,
        plan_kind=plan_kind,
        q=q_a, v=v_a, u_nom=u_nom_a, u_star=u_star_a,
        gamma=gamma_a, beta=beta_a, phi=phi_a,
        h=h_a, h_hat_next=hhat_a, delta_h=dh_a, active=act_a,
        qp_status=qp_s, solver_status=sol_s, q_hist=q_hist,
        failed=failed, success=success,
    )


def compute_metrics(record: RolloutRecord, gamma_max: float) -> Metrics:
    valid = ~np.isnan(record.gamma).any(axis=1)
    if np.any(valid):
        step_peak = np.max(record.gamma[valid], axis=1)
        peak = float(np.max(step_peak))
        viol_rate = float(np.mean(step_peak > gamma_max))
    else:
        peak = np.nan
        viol_rate = np.nan
    dev = float(np.mean(np.linalg.norm(record.u_star - record.u_nom, axis=1)))
    if record.success is None:
        success = "NotApplicable"
    else:
        success = "Y" if record.success else "N"
    overshoot = np.nan if np.isnan(peak) else float(max(0.0, peak - gamma_max))
    return Metrics(viol_rate=viol_rate, max_overshoot=overshoot,
                   peak_force=peak, mean_deviation=dev, success=success)


def kappa_sweep(model: SystemModel, kappas, kind, horizon: int,
                scenario: Scenario | None = None, alpha: float = 0.95,
                delta: float = 0.0, settings: SolverSettings | None = None,
                plan_kind: str = "default") -> list[SweepPoint]:
    """Identical closed-loop run at each kappa; reports worst-case headroom."""
    points = []
    for kap in np.asarray(kappas, dtype=float):
        spec = BarrierSpec(model.gamma_max, alpha=alpha, delta=delta)
        rec = run_rollout(model, kind, spec, CentralPath(kap), horizon,
                          scenario=scenario, settings=settings,
                          plan_kind=plan_kind)
        met = compute_metrics(rec, model.gamma_max)
        points.append(SweepPoint(
            kappa=float(kap),
            min_margin=float(model.gamma_max - met.peak_force),
            violated=bool(met.peak_force > model.gamma_max),
            failed=rec.failed,
            metrics=met,
        ))
    return points


def force_gradient_scan(model: SystemModel, cp: CentralPath,
                        q_prev: np.ndarray, q_curr: np.ndarray,
                        u_values: np.ndarray,
                        settings: SolverSettings | None = None) -> np.ndarray:
    """Force-input sensitivity along a 1D input sweep at a frozen state.

    Returns d(gamma_0)/d(u_0) per input value (NaN where the solve failed).
    """
    J = np.full(len(u_values), np.nan)
    warm = None
    for i, uv in enumerate(np.asarray(u_values, dtype=float)):
        step = ContactStep(q_prev, q_curr, np.atleast_1d(uv), model.dt)
        out = solve_step(step, cp, model, settings, warm_start=warm)
        if out.status is not SolveStatus.CONVERGED:
            continue
        warm = out.solution
        try:
            J[i] = implicit_jacobian(out.solution, step, cp, model).J_gamma[0, 0]
        except SingularJacobian:
            pass
    return J


def transition_width(u_values: np.ndarray, J: np.ndarray) -> float:
    """Measure of the input set where |J| sits between 10% and 90% of its peak."""
    mag = np.abs(np.asarray(J, dtype=float))
    peak = np.nanmax(mag)
    band = (mag >= 0.1 * peak) & (mag <= 0.9 * peak)
    du = float(u_values[1] - u_values[0])
    return float(np.count_nonzero(band) * du)


def gap_sensitivity_scan(model: SystemModel, kappas, horizon: int,
                         probe_step: int | None = None, alpha: float = 0.95,
                         plan_kind: str = "press",
                         settings: SolverSettings | None = None):
    """Filtered closed-loop run per kappa, probing the dominant contact.

    Returns (kappas, gaps, gammas) at the probe step, for checking how the
    realized gap and force trade off as the relaxation strength varies.
    """
    if probe_step is None:
        probe_step = horizon - 1
    kappas = np.asarray(kappas, dtype=float)
    gaps = np.full(len(kappas), np.nan)
    gammas = np.full(len(kappas), np.nan)
    for i, kap in enumerate(kappas):
        spec = BarrierSpec(model.gamma_max, alpha=alpha)
        rec = run_rollout(model, ControllerKind.CBF, spec, CentralPath(kap),
                          horizon, settings=settings, plan_kind=plan_kind)
        row = rec.gamma[probe_step]
        if np.all(np.isnan(row)):
            continue
        j = int(np.nanargmax(row))
        gaps[i] = rec.phi[probe_step, j]
        gammas[i] = rec.gamma[probe_step, j]
    return kappas, gaps, gammas


def central_path_identity(kappas, gaps, gammas):
    """Interior-point check of the relaxed force-gap coupling.

    When gamma * phi = kappa holds along a scan, the log-log slopes satisfy
    A_gamma + A_phi = 1, so the headroom slope dh/dlog(kappa) = -dgamma/dlog
    (kappa) must match gamma * (A_phi - 1).  Returns (lhs, rhs) central
    difference estimates on the interior grid points.
    """
    kappas = np.asarray(kappas, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    lk = np.log(kappas)
    lhs = -(gammas[2:] - gammas[:-2]) / (lk[2:] - lk[:-2])
    A_phi = (np.log(gaps[2:]) - np.log(gaps[:-2])) / (lk[2:] - lk[:-2])
    rhs = gammas[1:-1] * (A_phi - 1.0)
    return lhs, rhs


def write_rollout_csv(record: RolloutRecord, path) -> None:
    """Per-step table with a fixed column schema and repr-stable floats."""
    n = record.q.shape[1]
    m = record.u_nom.shape[1]
    c = record.gamma.shape[1]
    header = (["step", "time"]
              + [f"q{i}" for i in range(n)]
              + [f"v{i}" for i in range(n)]
              + [f"u_nom{j}" for j in range(m)]
              + [f"u_star{j}" for j in range(m)]
              + [f"gamma{i}" for i in range(c)]
              + ["h", "h_hat_next", "delta_h", "qp_status", "solver_status"])

    def fmt(x):
        return _FLOAT_FMT % x

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(record.horizon):
            row = ([str(k), fmt(k * record.dt)]
                   + [fmt(x) for x in record.q[k]]
                   + [fmt(x) for x in record.v[k]]
                   + [fmt(x) for x in record.u_nom[k]]
                   + [fmt(x) for x in record.u_star[k]]
                   + [fmt(x) for x in record.gamma[k]]
                   + [fmt(record.h[k]), fmt(record.h_hat_next[k]),
                      fmt(record.delta_h[k]),
                      record.qp_status[k], record.solver_status[k]])
            writer.writerow(row)


def metrics_dict(met: Metrics) -> dict:
    return {
        "viol_rate": met.viol_rate,
        "max_overshoot": met.max_overshoot,
        "peak_force": met.peak_force,
        "mean_deviation": met.mean_deviation,
        "success": met.success,
    }
