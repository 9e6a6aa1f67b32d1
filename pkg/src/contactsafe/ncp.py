"""Smoothed implicit contact step: residual assembly and interior Newton solve.

A single step advances the two-configuration state (q_prev, q_curr) under
input u by solving the smooth root-finding problem r(w) = 0 in the unknowns
w = (q_next, gamma, beta, lam_plus, lam_minus):

  dynamics   M (q_next - 2 q_curr + q_prev) / dt
               - dt * f(q_curr, v_curr, u)
               - dt * Jn(q_curr)^T gamma - Jt(q_curr)^T beta   = 0
  contact    gamma_i * phi_i(q_next) - kappa                   = 0
  friction   vt_i + lam_plus_i - lam_minus_i                   = 0
             lam_plus_i  * (mu_i gamma_i dt - beta_i) - kappa  = 0
             lam_minus_i * (mu_i gamma_i dt + beta_i) - kappa  = 0

gamma is a per-contact normal force (N) and beta a per-frictional-contact
tangential impulse (N*s) bounded by the cone |beta| <= mu * gamma * dt.
Friction comes from maximum dissipation over the cone; the two-sided slack
form above keeps the residual smooth (no |beta|), and on the sliding side
the active dual recovers the tangential speed |vt|.  Every complementarity
product is relaxed by the same central-path parameter kappa, so solutions
hover strictly inside the feasible region: phi > 0, gamma > 0, slacks > 0.

Force directions Jn, Jt are evaluated at q_curr (explicit, one evaluation
per step); the gap phi is evaluated at q_next (implicit).  vt is the step
displacement projected on the tangent at q_curr, divided by dt.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class SolveStatus(Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    LINE_SEARCH_FAIL = "line_search_fail"
    SINGULAR = "singular"


@dataclass(frozen=True)
class CentralPath:
    """Relaxation strength kappa (N*m) shared by all complementarity rows."""

    kappa: float

    def __post_init__(self):
        if not (self.kappa > 0.0 and np.isfinite(self.kappa)):
            raise ValueError(f"kappa must be positive and finite, got {self.kappa}")


@dataclass(frozen=True)
class SolverSettings:
    max_newton_iters: int = 50
    residual_tol: float = 1e-10
    line_search_shrink: float = 0.5
    min_step: float = 1e-10
    fraction_to_boundary: float = 0.95


@dataclass(frozen=True)
class ContactStep:
    """Problem data for one step: endpoint configurations and the input."""

    q_prev: np.ndarray
    q_curr: np.ndarray
    u: np.ndarray
    dt: float

    def __post_init__(self):
        object.__setattr__(self, "q_prev", np.asarray(self.q_prev, dtype=float))
        object.__setattr__(self, "q_curr", np.asarray(self.q_curr, dtype=float))
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.q_prev.shape != self.q_curr.shape:
            raise ValueError("q_prev and q_curr must have the same shape")


@dataclass
class ContactSolution:
    """Converged step unknowns.

    slacks stacks the two cone slacks (mu*gamma*dt - beta, mu*gamma*dt + beta)
    and duals the matching multipliers, each of length 2*fc where fc is the
    number of frictional contacts.
    """

    q_next: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    slacks: np.ndarray = field(default_factory=lambda: np.zeros(0))
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class SolveOutcome:
    solution: ContactSolution | None
    status: SolveStatus
    residual_norm: float
    iters: int


class _StepContext:
    """Quantities fixed for the duration of one Newton solve."""

    def __init__(self, step: ContactStep, cp: CentralPath, model):
        self.model = model
        self.dt = step.dt
        self.kappa = cp.kappa
        self.q_prev = step.q_prev
        self.q_curr = step.q_curr
        self.u = step.u
        self.v_curr = (step.q_curr - step.q_prev) / step.dt
        self.M = model.mass
        self.n = model.ndof
        self.c = model.ncontacts
        self.f_idx = np.asarray(model.friction_idx, dtype=int)
        self.fc = len(self.f_idx)
        self.mu_f = np.asarray(model.mu, dtype=float)[self.f_idx]
        # force directions, explicit in the current configuration
        self.Jn0 = np.asarray(model.sdf_grad(self.q_curr), dtype=float)
        if self.fc:
            self.Jt0 = np.asarray(model.tangent_grad(self.q_curr), dtype=float)
        else:
            self.Jt0 = np.zeros((0, self.n))
        self.f_ext = np.asarray(model.force(self.q_curr, self.v_curr, self.u), dtype=float)
        self.nvar = self.n + self.c + 3 * self.fc

    def split(self, w):
        n, c, fc = self.n, self.c, self.fc
        q_next = w[:n]
        gamma = w[n : n + c]
        beta = w[n + c : n + c + fc]
        lam_p = w[n + c + fc : n + c + 2 * fc]
        lam_m = w[n + c + 2 * fc :]
        return q_next, gamma, beta, lam_p, lam_m

    def cone_slacks(self, gamma, beta):
        bound = self.mu_f * gamma[self.f_idx] * self.dt
        return bound - beta, bound + beta


def _residual_vec(ctx: _StepContext, w: np.ndarray) -> np.ndarray:
    q_next, gamma, beta, lam_p, lam_m = ctx.split(w)
    dt = ctx.dt
    r_dyn = (
        ctx.M @ (q_next - 2.0 * ctx.q_curr + ctx.q_prev) / dt
        - dt * ctx.f_ext
        - dt * (ctx.Jn0.T @ gamma)
        - ctx.Jt0.T @ beta
    )
    phi = np.asarray(ctx.model.sdf(q_next), dtype=float)
    r_contact = gamma * phi - ctx.kappa
    if ctx.fc:
        vt = ctx.Jt0 @ (q_next - ctx.q_curr) / dt
        s_p, s_m = ctx.cone_slacks(gamma, beta)
        r_stat = vt + lam_p - lam_m
        r_cone_p = lam_p * s_p - ctx.kappa
        r_cone_m = lam_m * s_m - ctx.kappa
        return np.concatenate([r_dyn, r_contact, r_stat, r_cone_p, r_cone_m])
    return np.concatenate([r_dyn, r_contact])


def _jacobian_mat(ctx: _StepContext, w: np.ndarray) -> np.ndarray:
    """Jacobian of the residual with respect to the unknowns w."""
    n, c, fc = ctx.n, ctx.c, ctx.fc
    dt = ctx.dt
    q_next, gamma, beta, lam_p, lam_m = ctx.split(w)
    A = np.zeros((ctx.nvar, ctx.nvar))
    i_q = slice(0, n)
    i_g = slice(n, n + c)
    i_b = slice(n + c, n + c + fc)
    i_lp = slice(n + c + fc, n + c + 2 * fc)
    i_lm = slice(n + c + 2 * fc, ctx.nvar)

    A[i_q, i_q] = ctx.M / dt
    A[i_q, i_g] = -dt * ctx.Jn0.T
    Jn_next = np.asarray(ctx.model.sdf_grad(q_next), dtype=float)
    A[i_g, i_q] = gamma[:, None] * Jn_next
    phi = np.asarray(ctx.model.sdf(q_next), dtype=float)
    A[i_g, i_g] = np.diag(phi)

    if fc:
        A[i_q, i_b] = -ctx.Jt0.T
        rows_stat = slice(n + c, n + c + fc)
        A[rows_stat, i_q] = ctx.Jt0 / dt
        A[rows_stat, i_lp] = np.eye(fc)
        A[rows_stat, i_lm] = -np.eye(fc)
        s_p, s_m = ctx.cone_slacks(gamma, beta)
        mu_dt = ctx.mu_f * dt
        rows_p = slice(n + c + fc, n + c + 2 * fc)
        rows_m = slice(n + c + 2 * fc, ctx.nvar)
        for j, ci in enumerate(ctx.f_idx):
            A[n + c + fc + j, n + ci] = lam_p[j] * mu_dt[j]
            A[n + c + 2 * fc + j, n + ci] = lam_m[j] * mu_dt[j]
        A[rows_p, i_b] = np.diag(-lam_p)
        A[rows_m, i_b] = np.diag(lam_m)
        A[rows_p, i_lp] = np.diag(s_p)
        A[rows_m, i_lm] = np.diag(s_m)
    return A


def _pack(ctx: _StepContext, sol: ContactSolution) -> np.ndarray:
    q_next = np.asarray(sol.q_next, dtype=float)
    gamma = np.asarray(sol.gamma, dtype=float)
    beta = np.asarray(sol.beta, dtype=float)
    if ctx.fc:
        duals = np.asarray(sol.duals, dtype=float)
        if duals.size != 2 * ctx.fc:
            # fall back to central-path-consistent duals for hand-built w
            s_p, s_m = ctx.cone_slacks(gamma, beta)
            duals = np.concatenate([ctx.kappa / np.maximum(s_p, 1e-300),
                                    ctx.kappa / np.maximum(s_m, 1e-300)])
        lam_p, lam_m = duals[: ctx.fc], duals[ctx.fc :]
    else:
        lam_p = lam_m = np.zeros(0)
    return np.concatenate([q_next, gamma, beta, lam_p, lam_m])


def _unpack(ctx: _StepContext, w: np.ndarray) -> ContactSolution:
    q_next, gamma, beta, lam_p, lam_m = ctx.split(w)
    if ctx.fc:
        s_p, s_m = ctx.cone_slacks(gamma, beta)
        slacks = np.concatenate([s_p, s_m])
        duals = np.concatenate([lam_p, lam_m])
    else:
        slacks = np.zeros(0)
        duals = np.zeros(0)
    return ContactSolution(q_next=q_next.copy(), gamma=gamma.copy(),
                           beta=beta.copy(), slacks=slacks, duals=duals)


def assemble_residual(w: ContactSolution, step: ContactStep, cp: CentralPath, model) -> np.ndarray:
    """Stacked residual (dynamics, contact, friction rows) at the candidate w."""
    ctx = _StepContext(step, cp, model)
    return _residual_vec(ctx, _pack(ctx, w))


def check_complementarity(w: ContactSolution, step: ContactStep, cp: CentralPath, model) -> np.ndarray:
    """Per-contact violation |gamma_i * phi_i(q_next) - kappa|."""
    phi = np.asarray(model.sdf(np.asarray(w.q_next, dtype=float)), dtype=float)
    return np.abs(np.asarray(w.gamma, dtype=float) * phi - cp.kappa)


def _initial_guess(ctx: _StepContext, warm_start: ContactSolution | None) -> np.ndarray:
    # extrapolate the configuration, backing off until the gap is open
    q0 = ctx.q_curr + ctx.dt * ctx.v_curr
    for _ in range(60):
        if np.all(np.asarray(ctx.model.sdf(q0)) > 0.0):
            break
        q0 = 0.5 * (q0 + ctx.q_curr)
    else:
        q0 = ctx.q_curr.copy()
    if not np.all(np.asarray(ctx.model.sdf(q0)) > 0.0):
        raise ValueError("step must start from a configuration with positive gaps")

    if warm_start is not None and np.shape(warm_start.gamma) == (ctx.c,):
        gamma0 = np.maximum(np.asarray(warm_start.gamma, dtype=float), ctx.kappa)
        beta_prev = np.asarray(warm_start.beta, dtype=float)
        if beta_prev.shape != (ctx.fc,):
            beta_prev = np.zeros(ctx.fc)
    else:
        gamma0 = np.full(ctx.c, np.sqrt(ctx.kappa))
        beta_prev = np.zeros(ctx.fc)
    if ctx.fc:
        bound0 = ctx.mu_f * gamma0[ctx.f_idx] * ctx.dt
        beta0 = np.clip(beta_prev, -0.9 * bound0, 0.9 * bound0)
        s_p0, s_m0 = ctx.cone_slacks(gamma0, beta0)
        lam_p0 = ctx.kappa / s_p0
        lam_m0 = ctx.kappa / s_m0
    else:
        beta0 = lam_p0 = lam_m0 = np.zeros(0)
    return np.concatenate([q0, gamma0, beta0, lam_p0, lam_m0])


def _max_step(ctx: _StepContext, w: np.ndarray, dw: np.ndarray, tau: float) -> float:
    """Fraction-to-boundary cap for the explicitly positive unknowns."""
    n, c, fc = ctx.n, ctx.c, ctx.fc
    pos = np.concatenate([w[n : n + c], w[n + c + fc :]])
    dpos = np.concatenate([dw[n : n + c], dw[n + c + fc :]])
    alpha = 1.0
    shrinking = dpos < 0.0
    if np.any(shrinking):
        alpha = min(alpha, float(np.min(-tau * pos[shrinking] / dpos[shrinking])))
    return alpha


def _interior(ctx: _StepContext, w: np.ndarray) -> bool:
    q_next, gamma, beta, lam_p, lam_m = ctx.split(w)
    if np.any(gamma <= 0.0) or np.any(lam_p <= 0.0) or np.any(lam_m <= 0.0):
        return False
    if np.any(np.asarray(ctx.model.sdf(q_next)) <= 0.0):
        return False
    if ctx.fc:
        s_p, s_m = ctx.cone_slacks(gamma, beta)
        if np.any(s_p <= 0.0) or np.any(s_m <= 0.0):
            return False
    return True


def solve_step(step: ContactStep, cp: CentralPath, model,
               settings: SolverSettings | None = None,
               warm_start: ContactSolution | None = None) -> SolveOutcome:
    """Damped Newton with backtracking on the residual norm.

    Iterates stay strictly interior (positive forces, gaps, cone slacks and
    duals); a fraction-to-boundary rule caps steps for the multiplier block
    and the line search rejects any trial point that leaves the interior.
    Statuses other than CONVERGED leave solution = None.
    """
    settings = settings or SolverSettings()
    ctx = _StepContext(step, cp, model)
    tol = settings.residual_tol * max(1.0, ctx.kappa)

    w = _initial_guess(ctx, warm_start)
    r = _residual_vec(ctx, w)
    rnorm = float(np.max(np.abs(r)))
    iters = 0
    for _ in range(settings.max_newton_iters):
        if rnorm <= tol:
            return SolveOutcome(_unpack(ctx, w), SolveStatus.CONVERGED, rnorm, iters)
        A = _jacobian_mat(ctx, w)
        try:
            dw = np.linalg.solve(A, -r)
        except np.linalg.LinAlgError:
            return SolveOutcome(None, SolveStatus.SINGULAR, rnorm, iters)
        if not np.all(np.isfinite(dw)):
            return SolveOutcome(None, SolveStatus.SINGULAR, rnorm, iters)

        merit0 = float(np.linalg.norm(r))
        alpha = _max_step(ctx, w, dw, settings.fraction_to_boundary)
        accepted = False
        while alpha >= settings.min_step:
            w_try = w + alpha * dw
            if _interior(ctx, w_try):
                r_try = _residual_vec(ctx, w_try)
                if float(np.linalg.norm(r_try)) <= (1.0 - 1e-4 * alpha) * merit0:
                    accepted = True
                    break
            alpha *= settings.line_search_shrink
        if not accepted:
            return SolveOutcome(None, SolveStatus.LINE_SEARCH_FAIL, rnorm, iters)
        w = w_try
        r = r_try
        rnorm = float(np.max(np.abs(r)))
        iters += 1

    if rnorm <= tol:
        return SolveOutcome(_unpack(ctx, w), SolveStatus.CONVERGED, rnorm, iters)
    return SolveOutcome(None, SolveStatus.MAX_ITERS, rnorm, iters)
