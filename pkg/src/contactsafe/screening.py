"""Relaxation-strength screening from boundary-focused rollout statistics.

Candidate kappa values are scored from standard filtered rollouts (no
robustness margin) over a family of perturbed scenarios.  Each filtered
step contributes a sample of the predicted next headroom h_hat and its
realized error delta_h = h - h_hat; samples whose predicted force comes
close to the cap form the boundary band, the only regime where prediction
error is dangerous.

Per candidate:
  rho   = Q_{1-beta_q} of the shortfall (-delta_h)+ over the band
  score = Q_p of h_hat over the band, minus rho
  fail  = fraction of rollouts with a non-converged executed step

A candidate is compatible when it never failed and its score is
nonnegative (predicted headroom in the risky band survives the error
bound).  Selection takes the compatible candidate with the best score,
falling back to the lowest failure rate when none is compatible; ties
break toward the smallest kappa so repeated runs are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ncp import CentralPath, SolverSettings
from .rollout import ControllerKind, run_rollout
from .safety import BarrierSpec
from .systems import SystemModel, default_scenarios


@dataclass(frozen=True)
class ScreeningConfig:
    candidates: tuple = ()
    scenario_count: int = 5
    horizon: int = 300
    alpha: float = 0.95
    p: float = 0.10
    beta_q: float = 0.10
    seed: int = 0
    boundary_frac: float = 0.8
    plan_kind: str = "default"


@dataclass(frozen=True)
class RemainderSample:
    """One filtered step: predicted headroom, realized headroom, and error."""

    kappa: float
    scenario: str
    step: int
    h_hat_next: float
    h_next: float
    delta_h: float
    boundary: bool
    failed: bool = False


@dataclass(frozen=True)
class KappaStats:
    kappa: float
    rho: float
    score: float
    fail_rate: float
    sample_count: int


@dataclass
class ScreeningReport:
    stats: list
    selected: KappaStats
    selection_path: str
    compatible_set: list = field(default_factory=list)
    selected_samples: list = field(default_factory=list)


def nearest_rank_quantile(values, q: float) -> float:
    """Order statistic at rank ceil(q n), clamped to the sample range."""
    v = np.sort(np.asarray(values, dtype=float))
    if len(v) == 0:
        raise ValueError("quantile of an empty sample")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    idx = max(int(np.ceil(q * len(v))), 1) - 1
    return float(v[min(idx, len(v) - 1)])


def collect_samples(model: SystemModel, kappa: float, config: ScreeningConfig,
                    settings: SolverSettings | None = None):
    """Filtered-step samples and the rollout failure rate at one kappa."""
    scenarios = default_scenarios(model, config.scenario_count, config.seed)
    spec = BarrierSpec(model.gamma_max, alpha=config.alpha, delta=0.0)
    band_cut = (1.0 - config.boundary_frac) * model.gamma_max
    samples = []
    fails = 0
    for sc in scenarios:
        rec = run_rollout(model, ControllerKind.CBF, spec, CentralPath(kappa),
                          config.horizon, scenario=sc, settings=settings,
                          plan_kind=config.plan_kind)
        if rec.failed:
            fails += 1
        for k in range(rec.horizon):
            h_hat = rec.h_hat_next[k]
            dh = rec.delta_h[k]
            if np.isnan(h_hat) or np.isnan(dh):
                continue
            samples.append(RemainderSample(
                kappa=kappa, scenario=sc.label, step=k,
                h_hat_next=float(h_hat), h_next=float(h_hat + dh),
                delta_h=float(dh), boundary=bool(h_hat <= band_cut),
                failed=bool(rec.failed)))
    return samples, fails / len(scenarios)


def _band(samples):
    band = [s for s in samples if s.boundary]
    return band if band else list(samples)


def kappa_statistics(kappa: float, samples, fail_rate: float,
                     config: ScreeningConfig) -> KappaStats:
    band = _band(samples)
    if not band:
        return KappaStats(kappa=kappa, rho=float("nan"), score=float("-inf"),
                          fail_rate=fail_rate, sample_count=0)
    shortfall = [max(0.0, -s.delta_h) for s in band]
    rho = nearest_rank_quantile(shortfall, 1.0 - config.beta_q)
    h_low = nearest_rank_quantile([s.h_hat_next for s in band], config.p)
    return KappaStats(kappa=kappa, rho=rho, score=h_low - rho,
                      fail_rate=fail_rate, sample_count=len(band))


def select_kappa(stats) -> tuple[KappaStats, str]:
    """Pick the working relaxation strength from per-candidate statistics."""
    if not stats:
        raise ValueError("no candidate statistics")
    compatible = [s for s in stats if s.fail_rate == 0.0 and s.score >= 0.0]
    if compatible:
        best = max(s.score for s in compatible)
        tied = [s for s in compatible if s.score == best]
        return min(tied, key=lambda s: s.kappa), "Compatible"
    min_fail = min(s.fail_rate for s in stats)
    pool = [s for s in stats if s.fail_rate == min_fail]
    best = max(s.score for s in pool)
    tied = [s for s in pool if s.score == best]
    return min(tied, key=lambda s: s.kappa), "FallbackMinFail"


def choose_delta(samples, mode="max") -> float:
    """Robustness margin from the band's shortfall distribution.

    mode is "zero", "max", a "qNN" percentile string, or a float in [0, 1].
    """
    if mode == "zero":
        return 0.0
    shortfall = [max(0.0, -s.delta_h) for s in _band(samples)]
    if not shortfall:
        return 0.0
    if mode == "max":
        return float(max(shortfall))
    if isinstance(mode, str):
        if not mode.startswith("q"):
            raise ValueError(f"unknown delta mode {mode!r}")
        q = float(mode[1:]) / 100.0
    else:
        q = float(mode)
    return nearest_rank_quantile(shortfall, q)


def run_screening(model: SystemModel, config: ScreeningConfig | None = None,
                  settings: SolverSettings | None = None) -> ScreeningReport:
    config = config or ScreeningConfig()
    candidates = (np.asarray(config.candidates, dtype=float)
                  if len(config.candidates)
                  else np.logspace(-6, -3, 20))
    stats = []
    samples_by_kappa = {}
    for kap in candidates:
        samples, fail_rate = collect_samples(model, float(kap), config, settings)
        samples_by_kappa[float(kap)] = samples
        stats.append(kappa_statistics(float(kap), samples, fail_rate, config))
    selected, path = select_kappa(stats)
    compatible = [s.kappa for s in stats
                  if s.fail_rate == 0.0 and s.score >= 0.0]
    return ScreeningReport(stats=stats, selected=selected, selection_path=path,
                           compatible_set=compatible,
                           selected_samples=samples_by_kappa[selected.kappa])
