"""Experiments: predictor training, open- and closed-loop runs, ablation table."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import datagen, plant as plant_mod
from .config import ScenarioConfig, to_sections
from .controller import (B, S, W, ControlSolution, History, HorizonData, SpcController,
                         relaxation_norms)
from .demand import demand_profile
from .predictor import Predictor, fit, load_predictor
from .weather import weather_trace
from ._csv import fmt9, write_csv_atomic, write_text_atomic

OPEN_LOOP_START_H = 11.88
TOL = 1e-6
DEADBAND = 1e-3


def normalized_error(pred, actual, normalizer) -> float:
    """``100 * mean|pred - actual| / |mean(normalizer)|`` in percent."""
    pred, actual, normalizer = (np.asarray(a, dtype=float) for a in (pred, actual, normalizer))
    if not (pred.shape == actual.shape == normalizer.shape):
        raise ValueError("series must have equal lengths")
    denom = abs(float(np.mean(normalizer)))
    if denom == 0:
        raise ValueError("normalizer has zero mean")
    return 100.0 * float(np.mean(np.abs(pred - actual))) / denom


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def generate_dataset(scn: ScenarioConfig) -> datagen.DataSet:
    rng = _rng(scn.seed, 1)
    days = datagen.reference_library(scn.data.n_days, scn.weather, scn.demand, rng,
                                     scn.plant.sample_dt)
    return datagen.collect_trajectories(
        days, scn.data.T, scn.controller.t_ini, scn.controller.n, scn.data.noise_ratio,
        rng, scn.plant, scn.data.fo, seed=scn.seed)


def train_predictor(scn: ScenarioConfig) -> Predictor:
    """Load the configured predictor, or fit one from the configured/generated data."""
    if scn.io.predictor:
        return load_predictor(scn.io.predictor)
    if scn.io.dataset:
        ds = datagen.load_dataset(scn.io.dataset)
    else:
        ds = generate_dataset(scn)
    return fit(datagen.split_blocks(ds), ridge=scn.data.ridge)


@dataclass(frozen=True)
class Trace:
    """Reference and weather from ``t_ini`` samples before the start onward."""

    time_h: np.ndarray
    p_ref: np.ndarray
    avail_wind: np.ndarray
    wind_bound: np.ndarray
    avail_solar: np.ndarray
    offset: int  # index of the first controlled sample


def scenario_trace(scn: ScenarioConfig, start_hour: float, steps: int) -> Trace:
    cfg = scn.controller
    dt_h = scn.plant.sample_dt / 3600.0
    k = np.arange(-cfg.t_ini, steps + cfg.n)
    t = start_hour + k * dt_h
    w = weather_trace(t, scn.weather, cfg.q_w, scn.uncertainty, _rng(scn.seed, 2))
    return Trace(t, np.asarray(demand_profile(t, scn.demand), dtype=float), w.avail_wind,
                 w.wind_bound, w.avail_solar, cfg.t_ini)


def warm_up(scn: ScenarioConfig, tr: Trace) -> tuple[History, plant_mod.PlantState]:
    """Fill the controller history by running the FO law (no dither) on the plant."""
    pc = scn.plant
    u = datagen.greedy_allocation(tr.p_ref[0], tr.wind_bound[0], tr.avail_solar[0],
                                  pc.p_b_min, pc.p_b_max)
    y0 = np.minimum(u, [tr.avail_wind[0], tr.avail_solar[0], pc.p_b_max])
    state = plant_mod.initial_state(pc, y0)
    y = state.outputs
    gains = replace(scn.data.fo, dither_std=0.0)
    us, ys = [], []
    for k in range(tr.offset):
        lo = (0.0, 0.0, pc.p_b_min)
        hi = (tr.wind_bound[k], tr.avail_solar[k], pc.p_b_max)
        u = datagen.fo_step(u, y, tr.p_ref[k], lo, hi, gains)
        y, state = plant_mod.plant_step(state, u, tr.avail_wind[k], tr.avail_solar[k], pc)
        us.append(u)
        ys.append(y)
    return History(np.array(us), np.array(ys)), state


def _horizon(scn: ScenarioConfig, tr: Trace, k: int) -> HorizonData:
    a, b = tr.offset + k, tr.offset + k + scn.controller.n
    return HorizonData(tr.p_ref[a:b], tr.wind_bound[a:b], tr.avail_solar[a:b],
                       scn.plant.p_b_min, scn.plant.p_b_max)


def forecast_deficit(sol: ControlSolution) -> np.ndarray:
    """Horizon samples where load exceeds the wind+solar bounds."""
    return sol.p_ref > sol.wind_bound + sol.solar_bound + DEADBAND


def anticipation_violations(sol: ControlSolution) -> int:
    """Deficit samples whose battery setpoint is not positive."""
    return int(np.sum(forecast_deficit(sol) & (sol.u_N[:, B] <= 0)))


@dataclass
class RunResult:
    mode: str
    time_s: np.ndarray
    p_ref: np.ndarray
    setpoints: np.ndarray       # (K, 3)
    outputs: np.ndarray         # (K, 3)
    predicted: np.ndarray       # (K, 3) model prediction for each logged sample
    avail_wind: np.ndarray
    wind_bound: np.ndarray
    avail_solar: np.ndarray
    sigma_u_fro: np.ndarray
    sigma_y_fro: np.ndarray
    iterations: np.ndarray
    status: list
    solve_ms: np.ndarray
    solutions: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def total_output(self) -> np.ndarray:
        return self.outputs.sum(axis=1)


def _constraint_counts(solutions) -> dict:
    wind = sum(int(np.sum(np.concatenate([s.u_N[:, W], s.y_N[:, W]])
                          > np.concatenate([s.wind_bound, s.wind_bound]) + TOL))
               for s in solutions)
    batt = sum(int(np.sum(np.abs(s.u_N[:, B] - (s.p_ref - s.y_N[:, W] - s.y_N[:, S])) > TOL))
               for s in solutions)
    antic = sum(anticipation_violations(s) for s in solutions)
    return {
        "wind_bound_violations": wind,
        "battery_equality_violations": batt,
        "constraint_violation_count": wind + batt,
        "anticipation_violations": antic,
        "max_wind_violation_mw": max(s.max_wind_violation for s in solutions),
        "max_battery_residual_mw": max(s.max_battery_residual for s in solutions),
        "solver_failures": sum(s.solver_status != "solved" for s in solutions),
    }


def run_closed_loop(scn: ScenarioConfig, pred: Predictor | None = None,
                    progress=None) -> RunResult:
    """Receding-horizon control: solve, apply the first setpoint, measure, repeat."""
    pred = train_predictor(scn) if pred is None else pred
    start = 0.0 if scn.start_hour is None else scn.start_hour
    steps = int(round(24 * 3600 / scn.plant.sample_dt)) if scn.steps is None else scn.steps
    tr = scenario_trace(scn, start, steps)
    hist, state = warm_up(scn, tr)
    ctrl = SpcController(scn.controller, pred)
    K = steps
    setpoints, outputs, predicted = (np.empty((K, 3)) for _ in range(3))
    su, sy, solve_ms = np.empty(K), np.empty(K), np.empty(K)
    iters = np.empty(K, dtype=int)
    status, sols = [], []
    for k in range(K):
        hz = _horizon(scn, tr, k)
        sol = ctrl.step(hist, hz)
        u = sol.u_N[0]
        j = tr.offset + k
        y, state = plant_mod.plant_step(state, u, tr.avail_wind[j], tr.avail_solar[j], scn.plant)
        hist = hist.push(u, y)
        setpoints[k], outputs[k], predicted[k] = u, y, sol.y_N[0]
        su[k], sy[k] = relaxation_norms(sol)
        solve_ms[k], iters[k] = sol.solve_ms, sol.iterations
        status.append(sol.solver_status)
        sols.append(sol)
        if progress is not None:
            progress(k + 1, K)
    sl = slice(tr.offset, tr.offset + K)
    res = RunResult("closed", (start * 3600.0 + scn.plant.sample_dt * np.arange(K)),
                    tr.p_ref[sl], setpoints, outputs, predicted, tr.avail_wind[sl],
                    tr.wind_bound[sl], tr.avail_solar[sl], su, sy, iters, status, solve_ms,
                    sols)
    p_l = res.total_output
    deficit = res.p_ref > res.wind_bound + res.avail_solar + DEADBAND
    res.summary = {
        "mode": "closed",
        "start_hour": start,
        "steps": K,
        "tracking_error_pct": 100.0 * float(np.sqrt(np.mean((p_l - res.p_ref) ** 2)))
        / float(np.mean(res.p_ref)),
        "tracking_mae_pct": normalized_error(p_l, res.p_ref, res.p_ref),
        "mean_sigma_u_fro_mw": float(np.mean(su)),
        "mean_sigma_y_fro_mw": float(np.mean(sy)),
        "mean_iterations": float(np.mean(iters)),
        "deficit_samples": int(np.sum(deficit)),
        "discharge_violations": int(np.sum(deficit & (outputs[:, B] <= 0))),
        **_constraint_counts(sols),
    }
    return res


def run_open_loop(scn: ScenarioConfig, pred: Predictor | None = None) -> RunResult:
    """Solve once and apply the whole setpoint sequence without feedback."""
    pred = train_predictor(scn) if pred is None else pred
    start = OPEN_LOOP_START_H if scn.start_hour is None else scn.start_hour
    N = scn.controller.n
    tr = scenario_trace(scn, start, N)
    hist, state = warm_up(scn, tr)
    hz = _horizon(scn, tr, 0)
    sol = SpcController(scn.controller, pred).step(hist, hz)
    outputs = np.empty((N, 3))
    for k in range(N):
        j = tr.offset + k
        outputs[k], state = plant_mod.plant_step(state, sol.u_N[k], tr.avail_wind[j],
                                                 tr.avail_solar[j], scn.plant)
    sl = slice(tr.offset, tr.offset + N)
    s_u, s_y = relaxation_norms(sol)
    res = RunResult("open", start * 3600.0 + scn.plant.sample_dt * np.arange(N),
                    tr.p_ref[sl], sol.u_N.copy(), outputs, sol.y_N.copy(), tr.avail_wind[sl],
                    tr.wind_bound[sl], tr.avail_solar[sl], np.full(N, s_u), np.full(N, s_y),
                    np.full(N, sol.iterations), [sol.solver_status] * N,
                    np.full(N, sol.solve_ms), [sol])
    y_hat = sol.y_N
    errs = {}
    for name, c in (("wind", W), ("solar", S), ("battery", B)):
        try:
            errs[f"{name}_error_pct"] = normalized_error(y_hat[:, c], outputs[:, c],
                                                         np.abs(y_hat[:, c]))
        except ValueError:
            errs[f"{name}_error_pct"] = None
    errs["total_error_pct"] = normalized_error(y_hat.sum(1), outputs.sum(1), res.p_ref)
    res.summary = {"mode": "open", "start_hour": start, "steps": N,
                   "sigma_u_fro_mw": s_u, "sigma_y_fro_mw": s_y, **errs,
                   **_constraint_counts([sol])}
    return res


ABLATION_ROWS = (
    ("No uncertainty", dict(uncertainty=False)),
    ("Uncertainty, lambda_u=lambda_y=10", dict(lam=10.0)),
    ("Uncertainty, lambda_u=lambda_y=1e5", dict(lam=1e5)),
    ("Uncertainty, q_w=-0.4", dict(q_w=-0.4)),
    ("Uncertainty, q_w=-1.6", dict(q_w=-1.6)),
)


@dataclass(frozen=True)
class AblationRow:
    test: str
    sigma_u_fro: float  # MW
    sigma_y_fro: float  # MW
    delta_pw: float     # MW, mean |P_w^y - baseline| over the horizon
    solution: ControlSolution


def ablation_table(base: ScenarioConfig, pred: Predictor | None = None) -> list[AblationRow]:
    """Slack norms and wind-output change for the five relaxation tests.

    The baseline row (no uncertainty, lambda_u = lambda_y = 10, base q_w)
    defines the reference wind-output trajectory for ``delta_pw``.
    """
    pred = train_predictor(base) if pred is None else pred
    start = OPEN_LOOP_START_H if base.start_hour is None else base.start_hour
    base = replace(base, start_hour=start,
                   controller=replace(base.controller, lam_u=10.0, lam_y=10.0))
    # the measured history depends on the realised weather only; lambda and
    # q_w act at solve time, so rows sharing the weather share the history
    hists = {}
    for unc in (False, True):
        w = replace(base, uncertainty=unc)
        hists[unc], _ = warm_up(w, scenario_trace(w, start, base.controller.n))
    solved = []
    for name, change in ABLATION_ROWS:
        ctrl_cfg = base.controller
        if "lam" in change:
            ctrl_cfg = replace(ctrl_cfg, lam_u=change["lam"], lam_y=change["lam"])
        if "q_w" in change:
            ctrl_cfg = replace(ctrl_cfg, q_w=change["q_w"])
        scn = replace(base, controller=ctrl_cfg,
                      uncertainty=change.get("uncertainty", True))
        tr = scenario_trace(scn, start, ctrl_cfg.n)
        sol = SpcController(ctrl_cfg, pred).step(hists[scn.uncertainty], _horizon(scn, tr, 0))
        solved.append((name, sol))
    base_w = solved[0][1].y_N[:, W]
    return [AblationRow(name, *relaxation_norms(sol),
                        float(np.mean(np.abs(sol.y_N[:, W] - base_w))), sol)
            for name, sol in solved]


# -- output files ---------------------------------------------------------

RUN_COLUMNS = ("step", "t_s", "p_ref", "u_w", "u_s", "u_b", "y_w", "y_s", "y_b", "p_l",
               "yhat_w", "yhat_s", "yhat_b", "avail_wind", "wind_bound", "avail_solar",
               "sigma_u_fro", "sigma_y_fro", "iterations", "status")
FORECAST_COLUMNS = ("step", "k", "t_s", "u_w", "u_s", "u_b", "yhat_w", "yhat_s", "yhat_b",
                    "yhat_total", "p_ref", "wind_bound", "sigma_u_fro", "sigma_y_fro")
FAN_COLUMNS = ("step", "k", "component", "value")
ABLATION_COLUMNS = ("test", "sigma_u_fro_kw", "sigma_y_fro_kw", "delta_pw_kw")


def _run_rows(res: RunResult):
    for k in range(len(res.time_s)):
        yield (k, res.time_s[k], res.p_ref[k], *res.setpoints[k], *res.outputs[k],
               res.outputs[k].sum(), *res.predicted[k], res.avail_wind[k], res.wind_bound[k],
               res.avail_solar[k], res.sigma_u_fro[k], res.sigma_y_fro[k],
               int(res.iterations[k]), res.status[k])


def _forecast_rows(res: RunResult, dt: float):
    for step, sol in enumerate(res.solutions):
        su, sy = relaxation_norms(sol)
        for k in range(sol.u_N.shape[0]):
            yield (step, k, res.time_s[step] + dt * k, *sol.u_N[k], *sol.y_N[k],
                   sol.y_N[k].sum(), sol.p_ref[k], sol.wind_bound[k], su, sy)


def _fan_rows(res: RunResult):
    names = ("u_w", "u_s", "u_b", "yhat_w", "yhat_s", "yhat_b", "yhat_total")
    for step, sol in enumerate(res.solutions):
        for k in range(sol.u_N.shape[0]):
            vals = (*sol.u_N[k], *sol.y_N[k], sol.y_N[k].sum())
            for name, v in zip(names, vals):
                yield (step, k, name, v)


def _summary_json(summary: dict, scn: ScenarioConfig) -> str:
    doc = {"seed": scn.seed, "metrics": summary, "config": to_sections(scn)}
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _round_floats(obj):
    if isinstance(obj, float):
        return float(fmt9(obj))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_round_floats(v) for v in obj]
    return obj


def write_run(res: RunResult, scn: ScenarioConfig, out_dir) -> dict[str, Path]:
    """Write the deterministic run files plus ``timing.csv`` (wall-clock only)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"run": out / "run.csv", "summary": out / "summary.json",
             "timing": out / "timing.csv"}
    write_csv_atomic(files["run"], RUN_COLUMNS, _run_rows(res))
    if res.mode == "closed":
        files["forecast_log"] = out / "forecast_log.csv"
        files["forecast_fan"] = out / "forecast_fan.csv"
        write_csv_atomic(files["forecast_log"], FORECAST_COLUMNS,
                         _forecast_rows(res, scn.plant.sample_dt))
        write_csv_atomic(files["forecast_fan"], FAN_COLUMNS, _fan_rows(res))
    write_text_atomic(files["summary"], _summary_json(_round_floats(res.summary), scn))
    write_csv_atomic(files["timing"], ("step", "solve_ms"),
                     ((k, ms) for k, ms in enumerate(res.solve_ms)))
    return files


def write_ablation(rows: list[AblationRow], scn: ScenarioConfig, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"ablation": out / "ablation.csv", "summary": out / "summary.json"}
    write_csv_atomic(files["ablation"], ABLATION_COLUMNS,
                     ((r.test, 1e3 * r.sigma_u_fro, 1e3 * r.sigma_y_fro, 1e3 * r.delta_pw)
                      for r in rows))
    summary = {"mode": "ablation", "rows": [
        {"test": r.test, "sigma_u_fro_kw": 1e3 * r.sigma_u_fro,
         "sigma_y_fro_kw": 1e3 * r.sigma_y_fro, "delta_pw_kw": 1e3 * r.delta_pw,
         "solver_status": r.solution.solver_status} for r in rows]}
    write_text_atomic(files["summary"], _summary_json(_round_floats(summary), scn))
    return files
