"""Sensitivities of a converged contact step by implicit differentiation.

At a solution r(w; theta, kappa) = 0 with theta = (q_prev, q_curr, u), the
implicit function theorem gives dw/dtheta = -(dr/dw)^-1 dr/dtheta as long as
dr/dw is invertible, which the interior solver guarantees away from the
exact complementarity limit.  The relaxation makes the solution map smooth,
so these derivatives exist everywhere, including at grazing contact.

The block most consumers want is J_gamma = d(gamma)/d(u), the sensitivity
of the normal contact forces to the applied input at fixed past state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .ncp import (CentralPath, ContactSolution, ContactStep, SolveStatus,
                  SolverSettings, _jacobian_mat, _pack, _StepContext,
                  solve_step)

_COND_LIMIT = 1e12


class SingularJacobian(RuntimeError):
    """Raised when dr/dw is singular or numerically unusable."""


@dataclass
class SensitivityResult:
    """Derivatives of the full unknown vector w = (q_next, gamma, beta, duals).

    dw_dtheta has one column per entry of (q_prev, q_curr, u); dw_dkappa is
    the derivative along the relaxation parameter; J_gamma is the (ncontacts,
    ninputs) force-input sensitivity block.
    """

    dw_dtheta: np.ndarray
    dw_dkappa: np.ndarray
    J_gamma: np.ndarray


def _dr_dtheta(ctx: _StepContext, w: np.ndarray) -> np.ndarray:
    n, c, fc = ctx.n, ctx.c, ctx.fc
    m_in = len(ctx.u)
    dt = ctx.dt
    q_next = w[:n]
    gamma = w[n : n + c]
    beta = w[n + c : n + c + fc]
    B = np.zeros((ctx.nvar, 2 * n + m_in))
    col_prev = slice(0, n)
    col_curr = slice(n, 2 * n)
    col_u = slice(2 * n, 2 * n + m_in)

    f_q = np.asarray(ctx.model.force_q(ctx.q_curr, ctx.v_curr, ctx.u), dtype=float)
    f_v = np.asarray(ctx.model.force_v(ctx.q_curr, ctx.v_curr, ctx.u), dtype=float)
    f_u = np.asarray(ctx.model.force_u(ctx.q_curr), dtype=float)
    Hn = np.asarray(ctx.model.sdf_hess(ctx.q_curr), dtype=float)

    rows_dyn = slice(0, n)
    B[rows_dyn, col_prev] = ctx.M / dt + f_v
    d_curr = -2.0 * ctx.M / dt - dt * f_q - f_v
    d_curr -= dt * np.einsum("i,ijk->jk", gamma, Hn)
    if fc:
        Ht = np.asarray(ctx.model.tangent_hess(ctx.q_curr), dtype=float)
        d_curr -= np.einsum("i,ijk->jk", beta, Ht)
        rows_stat = slice(n + c, n + c + fc)
        # tangent rows re-evaluate the direction at q_curr
        B[rows_stat, col_curr] = (np.einsum("ijk,k->ij", Ht, q_next - ctx.q_curr)
                                  - ctx.Jt0) / dt
    B[rows_dyn, col_curr] = d_curr
    B[rows_dyn, col_u] = -dt * f_u
    return B


def _dr_dkappa(ctx: _StepContext) -> np.ndarray:
    d = np.zeros(ctx.nvar)
    n, c, fc = ctx.n, ctx.c, ctx.fc
    d[n : n + c] = -1.0
    d[n + c + fc :] = -1.0
    return d


def implicit_jacobian(sol: ContactSolution, step: ContactStep, cp: CentralPath,
                      model) -> SensitivityResult:
    """Differentiate a converged solution with respect to (theta, kappa)."""
    ctx = _StepContext(step, cp, model)
    w = _pack(ctx, sol)
    A = _jacobian_mat(ctx, w)
    if not np.all(np.isfinite(A)) or np.linalg.cond(A) >= _COND_LIMIT:
        raise SingularJacobian("contact step Jacobian is near singular")
    try:
        lu = lu_factor(A)
    except Exception as exc:
        raise SingularJacobian(str(exc)) from exc
    dw_dtheta = lu_solve(lu, -_dr_dtheta(ctx, w))
    dw_dkappa = lu_solve(lu, -_dr_dkappa(ctx))
    n, c = ctx.n, ctx.c
    J_gamma = dw_dtheta[n : n + c, 2 * n :]
    return SensitivityResult(dw_dtheta=dw_dtheta, dw_dkappa=dw_dkappa,
                             J_gamma=np.atleast_2d(J_gamma))


def finite_diff_force_jacobian(step: ContactStep, cp: CentralPath, model,
                               settings: SolverSettings | None = None,
                               h: float | None = None,
                               base: ContactSolution | None = None) -> np.ndarray:
    """Central-difference d(gamma)/d(u), re-solving the step at shifted inputs.

    Used as an independent check on implicit_jacobian; each perturbed solve
    warm starts from the base solution.  Differences of order |J| * 1e-6 sit
    close to the solver's convergence floor, so the default settings here
    are tighter than the usual solve.  h fixes the step size; by default it
    scales as 1e-6 * max(1, |u_j|) per input.
    """
    if h is not None and not h > 0.0:
        raise ValueError("finite difference step h must be positive")
    if settings is None:
        settings = SolverSettings(residual_tol=1e-13)
    if base is None:
        out = solve_step(step, cp, model, settings)
        if out.status is not SolveStatus.CONVERGED:
            raise RuntimeError(f"base solve failed: {out.status.value}")
        base = out.solution
    m_in = len(step.u)
    J = np.zeros((model.ncontacts, m_in))
    for j in range(m_in):
        hj = h if h is not None else 1e-6 * max(1.0, abs(step.u[j]))
        gammas = []
        for sgn in (1.0, -1.0):
            u = step.u.copy()
            u[j] += sgn * hj
            shifted = ContactStep(step.q_prev, step.q_curr, u, step.dt)
            out = solve_step(shifted, cp, model, settings, warm_start=base)
            if out.status is not SolveStatus.CONVERGED:
                raise RuntimeError(f"perturbed solve failed: {out.status.value}")
            gammas.append(out.solution.gamma)
        J[:, j] = (gammas[0] - gammas[1]) / (2.0 * hj)
    return J
