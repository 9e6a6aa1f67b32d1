"""Force-safe control for smoothed implicit contact dynamics.

The package steps rigid-body systems through a relaxed complementarity
contact model, differentiates the converged steps implicitly, filters
nominal inputs through a contact-force barrier QP, and screens the
relaxation strength against closed-loop prediction-error statistics.
"""

from .ncp import (CentralPath, ContactSolution, ContactStep, SolveOutcome,
                  SolveStatus, SolverSettings, assemble_residual,
                  check_complementarity, solve_step)
from .safety import (BarrierSpec, FilterStepInput, FilterStepOutput, QPStatus,
                     barrier, estimate_smoothing_margin, filter_step,
                     predict_force, solve_qp)
from .screening import (KappaStats, RemainderSample, ScreeningConfig,
                        ScreeningReport, choose_delta, collect_samples,
                        nearest_rank_quantile, run_screening, select_kappa)
from .sensitivity import (SensitivityResult, SingularJacobian,
                          finite_diff_force_jacobian, implicit_jacobian)
from .rollout import (ControllerKind, Metrics, RolloutRecord, SweepPoint,
                      central_path_identity, compute_metrics,
                      force_gradient_scan, gap_sensitivity_scan, kappa_sweep,
                      run_rollout, transition_width, write_rollout_csv)
from .systems import (NominalController, ReferencePlan, Scenario, SystemModel,
                      build_scenario_setup, default_scenarios,
                      effective_masses, make_system, random_operating_state,
                      system_names, task_success)

__version__ = "0.1.0"
