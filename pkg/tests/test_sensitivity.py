"""Implicit-differentiation checks against closed forms and finite differences."""

import dataclasses

import numpy as np
import pytest

from contactsafe.ncp import (CentralPath, ContactStep, SolverSettings,
                             SolveStatus, solve_step)
from contactsafe.sensitivity import (SingularJacobian,
                                     finite_diff_force_jacobian,
                                     implicit_jacobian)
from contactsafe.systems import make_system, random_operating_state, system_names

TIGHT = SolverSettings(residual_tol=1e-13)


def solved(model, q_prev, q_curr, u, kappa):
    step = ContactStep(q_prev, q_curr, u, model.dt)
    out = solve_step(step, CentralPath(kappa), model, TIGHT)
    assert out.status is SolveStatus.CONVERGED
    return step, out.solution


def test_box1d_jacobian_matches_closed_form():
    # resting box: gamma(u) = a q(u) + (m g - u - a z) with
    # a q^2 + (m g - u - a z) q = kappa gives dgamma/du = -gamma / sqrt(b^2 + 4 a kappa)
    model = make_system("box1d")
    kappa = 1e-4
    z, u0 = 0.0015, 0.05
    step, sol = solved(model, np.array([z]), np.array([z]), np.array([u0]), kappa)
    res = implicit_jacobian(sol, step, CentralPath(kappa), model)
    m = float(model.mass[0, 0])
    a = m / model.dt ** 2
    b = m * model.gravity - u0 - a * z
    J_cf = -sol.gamma[0] / np.sqrt(b * b + 4.0 * a * kappa)
    assert res.J_gamma.shape == (1, 1)
    assert abs(res.J_gamma[0, 0] - J_cf) <= 1e-10 * abs(J_cf)
    assert abs(res.J_gamma[0, 0] - (-0.27301375129107069)) <= 1e-9


@pytest.mark.parametrize("name", system_names())
def test_implicit_matches_finite_differences(name):
    model = make_system(name)
    rng = np.random.default_rng(21)
    done = 0
    for _ in range(12):
        q_prev, q_curr, u = random_operating_state(model, rng)
        for kappa in (1e-5, 1e-4):
            try:
                step, sol = solved(model, q_prev, q_curr, u, kappa)
                J = implicit_jacobian(sol, step, CentralPath(kappa), model).J_gamma
                J_fd = finite_diff_force_jacobian(step, CentralPath(kappa), model,
                                                  TIGHT, base=sol)
            except (AssertionError, RuntimeError, SingularJacobian):
                continue
            rel = np.linalg.norm(J - J_fd) / max(1.0, np.linalg.norm(J))
            assert rel <= 1e-5
            done += 1
    assert done >= 15


def test_dw_dkappa_matches_finite_differences():
    model = make_system("box1d")
    kappa = 1e-4
    z = 0.002
    step, sol = solved(model, np.array([z]), np.array([z]), np.zeros(1), kappa)
    res = implicit_jacobian(sol, step, CentralPath(kappa), model)
    dk = 0.01 * kappa
    _, hi = solved(model, np.array([z]), np.array([z]), np.zeros(1), kappa + dk)
    _, lo = solved(model, np.array([z]), np.array([z]), np.zeros(1), kappa - dk)
    fd_q = (hi.q_next[0] - lo.q_next[0]) / (2.0 * dk)
    fd_g = (hi.gamma[0] - lo.gamma[0]) / (2.0 * dk)
    assert abs(res.dw_dkappa[0] - fd_q) <= 1e-3 * abs(fd_q)
    assert abs(res.dw_dkappa[1] - fd_g) <= 1e-3 * abs(fd_g)
    # opening the path parameter opens the gap and raises the resting force
    assert res.dw_dkappa[0] > 0.0 and res.dw_dkappa[1] > 0.0


def test_airborne_jacobian_is_tiny():
    model = make_system("box1d")
    step, sol = solved(model, np.array([1.0]), np.array([1.0]), np.zeros(1), 1e-6)
    J = implicit_jacobian(sol, step, CentralPath(1e-6), model).J_gamma
    assert np.max(np.abs(J)) <= 1e-4


def test_finite_difference_error_shrinks_quadratically():
    model = make_system("box1d")
    kappa = 1e-4
    step, sol = solved(model, np.array([0.0015]), np.array([0.0015]),
                       np.array([0.05]), kappa)
    J = implicit_jacobian(sol, step, CentralPath(kappa), model).J_gamma
    errs = []
    for h in (4e-3, 2e-3, 1e-3, 5e-4):
        J_fd = finite_diff_force_jacobian(step, CentralPath(kappa), model,
                                          h=h, base=sol)
        errs.append(float(np.max(np.abs(J_fd - J))))
    for big, small in zip(errs, errs[1:]):
        assert small <= 0.35 * big + 1e-12


def test_finite_difference_h_validation():
    model = make_system("box1d")
    step = ContactStep(np.array([0.002]), np.array([0.002]), np.zeros(1), model.dt)
    with pytest.raises(ValueError):
        finite_diff_force_jacobian(step, CentralPath(1e-4), model, h=0.0)
    with pytest.raises(ValueError):
        finite_diff_force_jacobian(step, CentralPath(1e-4), model, h=-1e-6)


def test_zero_input_dimension_gives_empty_jacobian():
    base = make_system("box1d")
    weight = float(base.mass[0, 0]) * base.gravity
    model = dataclasses.replace(
        base, ninputs=0,
        force=lambda q, v, u: np.array([-weight]),
        force_q=lambda q, v, u: np.zeros((1, 1)),
        force_v=lambda q, v, u: np.zeros((1, 1)),
        force_u=lambda q: np.zeros((1, 0)),
    )
    step = ContactStep(np.array([0.002]), np.array([0.002]), np.zeros(0), model.dt)
    out = solve_step(step, CentralPath(1e-4), model, TIGHT)
    assert out.status is SolveStatus.CONVERGED
    J_fd = finite_diff_force_jacobian(step, CentralPath(1e-4), model,
                                      base=out.solution)
    assert J_fd.shape == (1, 0)
    J = implicit_jacobian(out.solution, step, CentralPath(1e-4), model).J_gamma
    assert J.shape[1] == 0


def test_taylor_prediction_error_quadratic_in_input_window():
    # sustained contact: first-order force prediction degrades quadratically
    # over a +-10% input window around the press input
    model = make_system("box1d")
    kappa = 1e-4
    u0 = -0.2
    z = 0.0008
    step, sol = solved(model, np.array([z]), np.array([z]), np.array([u0]), kappa)
    J = implicit_jacobian(sol, step, CentralPath(kappa), model).J_gamma[0, 0]
    du_max = 0.1 * abs(u0)
    dus = np.linspace(-du_max, du_max, 9)
    errs = np.zeros(len(dus))
    for i, du in enumerate(dus):
        _, s2 = solved(model, np.array([z]), np.array([z]),
                       np.array([u0 + du]), kappa)
        errs[i] = abs(s2.gamma[0] - (sol.gamma[0] + J * du))
    # quadratic envelope: err <= C du^2 with a single C fit at the edge
    C = max(errs[0], errs[-1]) / du_max ** 2
    assert np.all(errs <= 1.05 * C * dus ** 2 + 1e-12)
    # and the edge error is genuinely second order, not first
    assert errs[-1] <= 0.2 * abs(J) * du_max
