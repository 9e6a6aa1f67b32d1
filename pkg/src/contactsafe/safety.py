"""Contact-force safety filter: a discrete-time barrier condition on the
predicted normal forces, enforced by a small QP around the nominal input.

The barrier value is the force headroom h = gamma_max - max_i gamma_i.
Given a nominal next-step force gamma_nom (from a nominal solve) and the
force-input sensitivity J = d(gamma)/d(u), the filtered input is the
closest point to u_nom satisfying, for every contact,

  gamma_max - [gamma_nom_i + J_i (u - u_nom)] >= (1 - alpha) h_k + delta

together with the input box.  delta adds headroom for the prediction error
of the linearized force model (and optionally for the gap between the
relaxed and strict contact models), trading conservatism for robustness.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from itertools import combinations

import numpy as np
from scipy.optimize import linprog

from .ncp import CentralPath, ContactStep, SolverSettings, SolveStatus, solve_step
from .systems import effective_masses

_NULL_ROW = 1e-12
_FEAS_TOL = 1e-9
_DUAL_TOL = -1e-10
_ACTIVE_TOL = 1e-7


class QPStatus(Enum):
    OPTIMAL = "optimal"
    CLAMPED = "clamped"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class BarrierSpec:
    """Force cap, barrier decay rate, and robustness margins."""

    gamma_max: float
    alpha: float = 0.95
    delta: float = 0.0
    delta_smooth: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.delta < 0.0:
            raise ValueError("delta must be nonnegative")


@dataclass
class FilterStepInput:
    u_nom: np.ndarray
    h_k: float
    gamma_nom_next: np.ndarray
    J_gamma: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray


@dataclass
class FilterStepOutput:
    u_star: np.ndarray
    active: np.ndarray
    qp_status: QPStatus
    predicted_h_next: float


def barrier(gamma: np.ndarray, gamma_max: float) -> float:
    """Headroom of the worst contact under the force cap."""
    return float(gamma_max - np.max(gamma))


def predict_force(gamma_nom: np.ndarray, J: np.ndarray, u: np.ndarray,
                  u_nom: np.ndarray) -> np.ndarray:
    """Linearized next-step force at input u around the nominal solve."""
    return np.asarray(gamma_nom, dtype=float) + np.atleast_2d(J) @ (u - u_nom)


def solve_qp(u_nom: np.ndarray, A: np.ndarray, b: np.ndarray,
             lb: np.ndarray, ub: np.ndarray) -> np.ndarray | None:
    """Minimize 0.5 ||u - u_nom||^2 subject to A u <= b and lb <= u <= ub.

    The problem is strictly convex with at most a handful of rows, so the
    optimal active set is found by enumeration: for every candidate subset
    the equality-constrained KKT system gives u = u_nom - A_S^T lam with
    A_S A_S^T lam = A_S u_nom - b_S, and the subset is accepted when the
    multipliers are nonnegative and every constraint holds.  Returns None
    when no candidate is feasible (empty feasible set).
    """
    u_nom = np.asarray(u_nom, dtype=float)
    m = len(u_nom)
    A = np.asarray(A, dtype=float).reshape(-1, m)
    b = np.asarray(b, dtype=float)
    eye = np.eye(m)
    A_all = np.vstack([A, eye, -eye])
    b_all = np.concatenate([b, np.asarray(ub, dtype=float),
                            -np.asarray(lb, dtype=float)])
    nrows = len(b_all)
    best = None
    best_dist = np.inf
    for size in range(m + 1):
        for subset in combinations(range(nrows), size):
            As = A_all[list(subset)]
            bs = b_all[list(subset)]
            try:
                lam = np.linalg.solve(As @ As.T, As @ u_nom - bs)
            except np.linalg.LinAlgError:
                continue
            if np.any(lam < _DUAL_TOL):
                continue
            u = u_nom - As.T @ lam
            if np.all(A_all @ u <= b_all + _FEAS_TOL):
                dist = float(np.linalg.norm(u - u_nom))
                if dist < best_dist:
                    best, best_dist = u, dist
    return best


def _min_relaxation(u_nom, A, b, lb, ub) -> float | None:
    """Smallest uniform slack t >= 0 making {A u <= b + t, box} feasible."""
    m = len(u_nom)
    cost = np.zeros(m + 1)
    cost[-1] = 1.0
    A_ub = np.hstack([A, -np.ones((len(b), 1))])
    bounds = [(float(lo), float(hi)) for lo, hi in zip(lb, ub)] + [(0.0, None)]
    res = linprog(cost, A_ub=A_ub, b_ub=b, bounds=bounds, method="highs")
    if not res.success:
        return None
    return float(res.x[-1])


def filter_step(inp: FilterStepInput, spec: BarrierSpec) -> FilterStepOutput:
    """One pass of the safety filter around a nominal input.

    Contacts whose sensitivity row is numerically zero cannot be influenced
    this step: their rows are dropped (CLAMPED when nothing remains), and a
    dropped row whose bound is already violated marks the step INFEASIBLE.
    An infeasible QP falls back to the minimal uniform relaxation of the
    force rows (input box kept hard) and reports INFEASIBLE.
    """
    delta_eff = spec.delta + (spec.delta_smooth or 0.0)
    J = np.atleast_2d(np.asarray(inp.J_gamma, dtype=float))
    gamma_nom = np.asarray(inp.gamma_nom_next, dtype=float)
    c = len(gamma_nom)
    decay = (1.0 - spec.alpha) * inp.h_k

    rows_a, rows_b, row_idx = [], [], []
    null_violated = False
    for i in range(c):
        a = J[i]
        bi = ((spec.gamma_max - gamma_nom[i]) + float(a @ inp.u_nom)
              - decay - delta_eff)
        if np.linalg.norm(a) < _NULL_ROW:
            if bi < -_FEAS_TOL:
                null_violated = True
            continue
        rows_a.append(a)
        rows_b.append(bi)
        row_idx.append(i)

    if not rows_a:
        u = np.clip(inp.u_nom, inp.u_min, inp.u_max)
        status = QPStatus.INFEASIBLE if null_violated else QPStatus.CLAMPED
        ghat = predict_force(gamma_nom, J, u, inp.u_nom)
        return FilterStepOutput(u, np.zeros(c, dtype=bool), status,
                                barrier(ghat, spec.gamma_max))

    A = np.vstack(rows_a)
    b = np.asarray(rows_b)
    u = solve_qp(inp.u_nom, A, b, inp.u_min, inp.u_max)
    status = QPStatus.OPTIMAL
    if u is None:
        status = QPStatus.INFEASIBLE
        t = _min_relaxation(inp.u_nom, A, b, inp.u_min, inp.u_max)
        if t is not None:
            u = solve_qp(inp.u_nom, A, b + t + _FEAS_TOL, inp.u_min, inp.u_max)
        if u is None:
            u = np.clip(inp.u_nom, inp.u_min, inp.u_max)
    if null_violated:
        status = QPStatus.INFEASIBLE

    active = np.zeros(c, dtype=bool)
    for a, bi, i in zip(rows_a, rows_b, row_idx):
        active[i] = (bi - float(a @ u)) <= _ACTIVE_TOL
    ghat = predict_force(gamma_nom, J, u, inp.u_nom)
    return FilterStepOutput(u, active, status, barrier(ghat, spec.gamma_max))


def estimate_smoothing_margin(model, step: ContactStep, cp: CentralPath,
                              settings: SolverSettings | None = None,
                              kappa0: float = 1e-9) -> float:
    """Force-scale bound on the relaxation-induced model error at one state.

    Solves the step at the working kappa and at a near-strict kappa0, and
    converts the normal-velocity discrepancy into a force via the contact's
    effective mass over one step.  Zero when the two solutions agree.
    """
    out_k = solve_step(step, cp, model, settings)
    if out_k.status is not SolveStatus.CONVERGED:
        raise RuntimeError(f"margin solve failed at kappa: {out_k.status.value}")
    out_0 = solve_step(step, CentralPath(kappa0), model, settings,
                       warm_start=out_k.solution)
    if out_0.status is not SolveStatus.CONVERGED:
        raise RuntimeError(f"margin solve failed at kappa0: {out_0.status.value}")
    Jn = np.asarray(model.sdf_grad(step.q_curr), dtype=float)
    v_k = Jn @ (out_k.solution.q_next - step.q_curr) / step.dt
    v_0 = Jn @ (out_0.solution.q_next - step.q_curr) / step.dt
    dv = np.abs(v_0 - v_k)
    m_eff = effective_masses(model, step.q_curr)
    delta = np.zeros(len(dv))
    nz = dv > 0.0
    delta[nz] = m_eff[nz] / step.dt * dv[nz]
    return float(np.max(delta)) if len(delta) else 0.0
