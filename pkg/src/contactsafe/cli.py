"""Command line interface: rollouts, relaxation sweeps, screening, comparisons.

Every command resolves its configuration from built-in defaults, then an
optional JSON config file, then explicit flags (later wins), and refuses
unknown config keys.  The fully resolved configuration is hashed (sha256 of
its canonical JSON, first 10 hex digits) to name the output directory, so a
given configuration always lands in the same place and outputs carry no
timestamps.

Exit codes: 0 success, 1 configuration error (nothing written), 2 solver
trouble during the run (outputs still written).
"""

from __future__ import annotations

import csv
import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np

from .ncp import CentralPath
from .rollout import (compute_metrics, kappa_sweep, metrics_dict, run_rollout,
                      write_rollout_csv)
from .safety import BarrierSpec
from .screening import ScreeningConfig, choose_delta, collect_samples, run_screening
from .systems import make_system, system_names

_FLOAT_FMT = "%.17g"
_CONTROLLERS = ("nominal", "cbf", "rcbf")
_DELTA_MODES = ("zero", "q85", "q90", "max")


class ConfigError(Exception):
    pass


def _load_config_file(path, allowed):
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return data


def _resolve(defaults: dict, config_path, flags: dict) -> dict:
    cfg = dict(defaults)
    cfg.update(_load_config_file(config_path, defaults))
    cfg.update({k: v for k, v in flags.items() if v is not None})
    return cfg


def _parse_grid(spec: str) -> np.ndarray:
    parts = str(spec).split(":")
    if len(parts) != 3:
        raise ConfigError(f"bad grid {spec!r}, expected start:stop:count")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"bad grid {spec!r}, expected start:stop:count")
    if start <= 0.0 or stop <= 0.0 or count < 2:
        raise ConfigError("grid needs positive endpoints and count >= 2")
    return np.logspace(np.log10(start), np.log10(stop), count)


def _make_model(cfg: dict):
    name = cfg["system"]
    if name not in system_names():
        raise ConfigError(f"unknown system {name!r}, expected one of {system_names()}")
    return make_system(name)


def _common_resolution(cfg: dict, model) -> None:
    if cfg.get("kappa") is None:
        cfg["kappa"] = model.default_kappa
    if cfg.get("horizon") is None:
        cfg["horizon"] = int(model.params["horizon"])
    if not cfg["kappa"] > 0.0:
        raise ConfigError("kappa must be positive")
    if cfg["horizon"] < 1:
        raise ConfigError("horizon must be at least 1")
    if not 0.0 < cfg["alpha"] <= 1.0:
        raise ConfigError("alpha must lie in (0, 1]")


def _outdir(cfg: dict, command: str) -> Path:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    tag = hashlib.sha256(canon.encode()).hexdigest()[:10]
    d = Path(cfg["out"]) / f"{command}-{tag}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return _FLOAT_FMT % float(x)
    return str(x)


def _screening_config(cfg: dict, candidates=()) -> ScreeningConfig:
    return ScreeningConfig(
        candidates=tuple(float(k) for k in candidates),
        scenario_count=int(cfg.get("scenarios", 5)),
        horizon=int(cfg["horizon"]),
        alpha=float(cfg["alpha"]),
        p=float(cfg.get("p", 0.10)),
        beta_q=float(cfg.get("beta_q", 0.10)),
        seed=int(cfg["seed"]),
        boundary_frac=float(cfg.get("boundary_frac", 0.8)),
        plan_kind=cfg["plan"],
    )


@click.group()
def main():
    """Force-safe control for smoothed contact dynamics."""


@main.command("rollout")
@click.option("--system", default=None, help="benchmark system name")
@click.option("--controller", default=None, help="nominal, cbf, or rcbf")
@click.option("--kappa", type=float, default=None, help="relaxation strength")
@click.option("--alpha", type=float, default=None, help="barrier decay rate")
@click.option("--delta", type=float, default=None, help="explicit robustness margin")
@click.option("--delta-mode", "delta_mode", default=None,
              help="zero, q85, q90, or max (rcbf margin from sampling)")
@click.option("--horizon", type=int, default=None, help="number of steps")
@click.option("--plan", default=None, help="plan kind for the system")
@click.option("--seed", type=int, default=None, help="scenario sampling seed")
@click.option("--config", "config_path", default=None, help="JSON config file")
@click.option("--out", default=None, help="output root directory")
def cmd_rollout(system, controller, kappa, alpha, delta, delta_mode, horizon,
                plan, seed, config_path, out):
    """Run one closed-loop rollout and write its per-step table."""
    defaults = {"system": "box1d", "controller": "cbf", "kappa": None,
                "alpha": 0.95, "delta": None, "delta_mode": "zero",
                "horizon": None, "plan": "default", "seed": 0, "out": "runs"}
    flags = {"system": system, "controller": controller, "kappa": kappa,
             "alpha": alpha, "delta": delta, "delta_mode": delta_mode,
             "horizon": horizon, "plan": plan, "seed": seed, "out": out}
    try:
        cfg = _resolve(defaults, config_path, flags)
        model = _make_model(cfg)
        if cfg["controller"] not in _CONTROLLERS:
            raise ConfigError(f"unknown controller {cfg['controller']!r}")
        if cfg["delta_mode"] not in _DELTA_MODES:
            raise ConfigError(f"unknown delta mode {cfg['delta_mode']!r}")
        _common_resolution(cfg, model)
        if cfg["controller"] == "rcbf":
            if cfg["delta"] is None and cfg["delta_mode"] != "zero":
                samples, _ = collect_samples(model, cfg["kappa"],
                                             _screening_config(cfg))
                cfg["delta"] = choose_delta(samples, cfg["delta_mode"])
            cfg["delta"] = float(cfg["delta"] or 0.0)
            if cfg["delta"] < 0.0:
                raise ConfigError("delta must be nonnegative")
        else:
            cfg["delta"] = 0.0
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(1)

    outdir = _outdir(cfg, "rollout")
    spec = BarrierSpec(model.gamma_max, alpha=cfg["alpha"], delta=cfg["delta"])
    rec = run_rollout(model, cfg["controller"], spec, CentralPath(cfg["kappa"]),
                      cfg["horizon"], plan_kind=cfg["plan"])
    met = compute_metrics(rec, model.gamma_max)
    write_rollout_csv(rec, outdir / "rollout.csv")
    _write_json(outdir / "summary.json", {
        "command": "rollout",
        "config": cfg,
        "gamma_max": model.gamma_max,
        "metrics": metrics_dict(met),
        "failed": rec.failed,
    })
    click.echo(str(outdir))
    if rec.failed:
        sys.exit(2)


@main.command("sweep")
@click.option("--system", default=None)
@click.option("--controller", default=None)
@click.option("--grid", default=None, help="kappa grid as start:stop:count")
@click.option("--alpha", type=float, default=None)
@click.option("--horizon", type=int, default=None)
@click.option("--plan", default=None)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", default=None)
@click.option("--out", default=None)
def cmd_sweep(system, controller, grid, alpha, horizon, plan, seed,
              config_path, out):
    """Repeat one rollout across a kappa grid and tabulate the margins."""
    defaults = {"system": "box1d", "controller": "cbf", "grid": "1e-6:1e-3:20",
                "alpha": 0.95, "horizon": None, "plan": "default", "seed": 0,
                "out": "runs"}
    flags = {"system": system, "controller": controller, "grid": grid,
             "alpha": alpha, "horizon": horizon, "plan": plan, "seed": seed,
             "out": out}
    try:
        cfg = _resolve(defaults, config_path, flags)
        cfg["kappa"] = 1.0  # placeholder so common checks pass; grid rules
        model = _make_model(cfg)
        if cfg["controller"] not in _CONTROLLERS:
            raise ConfigError(f"unknown controller {cfg['controller']!r}")
        _common_resolution(cfg, model)
        del cfg["kappa"]
        kappas = _parse_grid(cfg["grid"])
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(1)

    outdir = _outdir(cfg, "sweep")
    points = kappa_sweep(model, kappas, cfg["controller"], cfg["horizon"],
                         alpha=cfg["alpha"], plan_kind=cfg["plan"])
    header = ["kappa", "min_margin", "violated", "failed", "viol_rate",
              "max_overshoot", "peak_force", "mean_deviation", "success"]
    rows = [[_fmt(p.kappa), _fmt(p.min_margin), int(p.violated), int(p.failed),
             _fmt(p.metrics.viol_rate), _fmt(p.metrics.max_overshoot),
             _fmt(p.metrics.peak_force), _fmt(p.metrics.mean_deviation),
             p.metrics.success] for p in points]
    _write_csv(outdir / "sweep.csv", header, rows)
    _write_json(outdir / "summary.json", {
        "command": "sweep",
        "config": cfg,
        "gamma_max": model.gamma_max,
        "points": [{"kappa": p.kappa, "min_margin": p.min_margin,
                    "violated": p.violated, "failed": p.failed,
                    "metrics": metrics_dict(p.metrics)} for p in points],
    })
    click.echo(str(outdir))
    if any(p.failed for p in points):
        sys.exit(2)


@main.command("screen")
@click.option("--system", default=None)
@click.option("--grid", default=None, help="candidate kappas as start:stop:count")
@click.option("--scenarios", type=int, default=None, help="scenario count")
@click.option("--horizon", type=int, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--p", "p_quantile", type=float, default=None,
              help="headroom quantile level")
@click.option("--beta-q", "beta_q", type=float, default=None,
              help="shortfall tail level")
@click.option("--plan", default=None)
@click.option("--seed", type=int, default=None)
@click.option("--report", is_flag=True, help="echo the per-kappa table")
@click.option("--config", "config_path", default=None)
@click.option("--out", default=None)
def cmd_screen(system, grid, scenarios, horizon, alpha, p_quantile, beta_q,
               plan, seed, report, config_path, out):
    """Score candidate relaxation strengths and pick a working value."""
    defaults = {"system": "box1d", "grid": "1e-6:1e-3:20", "scenarios": 5,
                "horizon": None, "alpha": 0.95, "p": 0.10, "beta_q": 0.10,
                "boundary_frac": 0.8, "plan": "default", "seed": 0,
                "out": "runs"}
    flags = {"system": system, "grid": grid, "scenarios": scenarios,
             "horizon": horizon, "alpha": alpha, "p": p_quantile,
             "beta_q": beta_q, "plan": plan, "seed": seed, "out": out}
    try:
        cfg = _resolve(defaults, config_path, flags)
        cfg["kappa"] = 1.0
        model = _make_model(cfg)
        _common_resolution(cfg, model)
        del cfg["kappa"]
        if not 0.0 < cfg["p"] < 1.0 or not 0.0 < cfg["beta_q"] < 1.0:
            raise ConfigError("p and beta_q must lie in (0, 1)")
        kappas = _parse_grid(cfg["grid"])
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(1)

    outdir = _outdir(cfg, "screen")
    result = run_screening(model, _screening_config(cfg, kappas))
    delta_table = {mode: choose_delta(result.selected_samples, mode)
                   for mode in _DELTA_MODES}
    header = ["kappa", "rho", "score", "fail_rate", "sample_count", "selected"]
    rows = [[_fmt(s.kappa), _fmt(s.rho), _fmt(s.score), _fmt(s.fail_rate),
             s.sample_count, int(s.kappa == result.selected.kappa)]
            for s in result.stats]
    _write_csv(outdir / "screen.csv", header, rows)
    _write_json(outdir / "summary.json", {
        "command": "screen",
        "config": cfg,
        "selected_kappa": result.selected.kappa,
        "selection_path": result.selection_path,
        "compatible_set": result.compatible_set,
        "selected_stats": {"rho": result.selected.rho,
                           "score": result.selected.score,
                           "fail_rate": result.selected.fail_rate,
                           "sample_count": result.selected.sample_count},
        "delta_table": delta_table,
    })
    if report:
        click.echo(",".join(header))
        for row in rows:
            click.echo(",".join(str(x) for x in row))
    click.echo(f"selected kappa = {_fmt(result.selected.kappa)}"
               f" ({result.selection_path})")
    click.echo("delta recommendations: " + ", ".join(
        f"{m}={_fmt(delta_table[m])}" for m in _DELTA_MODES))
    click.echo(str(outdir))
    if any(s.fail_rate > 0.0 for s in result.stats):
        sys.exit(2)


@main.command("compare")
@click.option("--system", default=None)
@click.option("--kappa", type=float, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--horizon", type=int, default=None)
@click.option("--mode", default=None, help="controllers or deltas")
@click.option("--plan", default=None)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", default=None)
@click.option("--out", default=None)
def cmd_compare(system, kappa, alpha, horizon, mode, plan, seed, config_path,
                out):
    """Compare controllers, or margin choices, on the same task."""
    defaults = {"system": "box1d", "kappa": None, "alpha": 0.95,
                "horizon": None, "mode": "controllers", "plan": "default",
                "seed": 0, "out": "runs"}
    flags = {"system": system, "kappa": kappa, "alpha": alpha,
             "horizon": horizon, "mode": mode, "plan": plan, "seed": seed,
             "out": out}
    try:
        cfg = _resolve(defaults, config_path, flags)
        if cfg["mode"] not in ("controllers", "deltas"):
            raise ConfigError(f"unknown compare mode {cfg['mode']!r}")
        if cfg["system"] == "all":
            names = system_names()
        elif cfg["system"] in system_names():
            names = (cfg["system"],)
        else:
            raise ConfigError(f"unknown system {cfg['system']!r}, expected"
                              f" one of {system_names()} or 'all'")
        if not 0.0 < cfg["alpha"] <= 1.0:
            raise ConfigError("alpha must lie in (0, 1]")
        if cfg["kappa"] is not None and not cfg["kappa"] > 0.0:
            raise ConfigError("kappa must be positive")
        if cfg["horizon"] is not None and cfg["horizon"] < 1:
            raise ConfigError("horizon must be at least 1")
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(1)

    outdir = _outdir(cfg, "compare")
    rows = []
    results = []
    any_failed = False
    for name in names:
        model = make_system(name)
        kappa = cfg["kappa"] if cfg["kappa"] is not None else model.default_kappa
        horizon = (cfg["horizon"] if cfg["horizon"] is not None
                   else int(model.params["horizon"]))
        scen_cfg = dict(cfg, kappa=kappa, horizon=horizon)
        samples, _ = collect_samples(model, kappa, _screening_config(scen_cfg))
        if cfg["mode"] == "controllers":
            entries = [("nominal", "nominal", 0.0),
                       ("cbf", "cbf", 0.0),
                       ("rcbf", "rcbf", choose_delta(samples, "max"))]
        else:
            entries = [(f"delta-{m}", "rcbf", choose_delta(samples, m))
                       for m in _DELTA_MODES]
        for label, ctrl, delta in entries:
            spec = BarrierSpec(model.gamma_max, alpha=cfg["alpha"], delta=delta)
            rec = run_rollout(model, ctrl, spec, CentralPath(kappa),
                              horizon, plan_kind=cfg["plan"])
            met = compute_metrics(rec, model.gamma_max)
            any_failed = any_failed or rec.failed
            rows.append([name, label, ctrl, _fmt(delta), _fmt(met.viol_rate),
                         _fmt(met.max_overshoot), _fmt(met.peak_force),
                         _fmt(met.mean_deviation), met.success])
            results.append({"system": name, "label": label, "controller": ctrl,
                            "delta": delta, "kappa": kappa,
                            "gamma_max": model.gamma_max, "failed": rec.failed,
                            "metrics": metrics_dict(met)})
    header = ["system", "label", "controller", "delta", "viol_rate",
              "max_overshoot", "peak_force", "mean_deviation", "success"]
    _write_csv(outdir / "compare.csv", header, rows)
    _write_json(outdir / "summary.json", {
        "command": "compare",
        "config": cfg,
        "results": results,
    })
    click.echo(str(outdir))
    if any_failed:
        sys.exit(2)


if __name__ == "__main__":
    main()
