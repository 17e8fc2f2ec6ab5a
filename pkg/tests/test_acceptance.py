"""End-to-end acceptance checks; each test prints one PASS/FAIL line."""

import shutil
import time
from dataclasses import replace

import numpy as np
import pytest
from click.testing import CliRunner

from hppspc.cli import main
from hppspc.datagen import split_blocks
from hppspc.harness import (ablation_table, forecast_deficit, run_closed_loop, run_open_loop,
                            train_predictor)
from hppspc.predictor import fit, predict
from hppspc.qp import brute_force_solve, kkt_residuals, solve

from conftest import lti_dataset
from qp_cases import random_qp

TOL_MW = 1e-6


@pytest.fixture(scope="module")
def noisy_day(scenario):
    """Full closed-loop day: noisy-data predictor, sigma_v = 0.1, q_w = -0.4."""
    t0 = time.perf_counter()
    pred = train_predictor(scenario)
    res = run_closed_loop(scenario, pred)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def clean_day(clean_scenario, clean_predictor):
    return run_closed_loop(clean_scenario, clean_predictor)


def test_1_predictor_exactness(acceptance):
    t0 = time.perf_counter()
    pred = fit(split_blocks(lti_dataset(1000, 20, 20, seed=0)))
    held = lti_dataset(200, 20, 20, seed=99)
    worst = 0.0
    for j in range(held.T):
        u, y = held.u[j], held.y[j]
        y_hat = predict(pred, y[:20].ravel(), u[:20].ravel(), u[20:].ravel())
        worst = max(worst, np.linalg.norm(y_hat - y[20:].ravel()) / np.linalg.norm(y[20:]))
    dt = time.perf_counter() - t0
    acceptance(1, worst < 1e-6 and dt < 10,
               f"held-out relative error {worst:.2e} (< 1e-6), runtime {dt:.2f} s (< 10 s)")


def test_2_qp_oracle_equivalence(acceptance):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_obj = worst_kkt = 0.0
    for _ in range(200):
        p = random_qp(rng)
        _, obj = brute_force_solve(p)
        s = solve(p)
        worst_obj = max(worst_obj, abs(s.objective - obj) / (1 + abs(obj)))
        worst_kkt = max(worst_kkt, *kkt_residuals(p, s))
    dt = time.perf_counter() - t0
    acceptance(2, worst_obj <= 1e-6 and worst_kkt < 1e-6 and dt < 30,
               f"200 QPs: worst objective gap {worst_obj:.1e}, worst KKT {worst_kkt:.1e}, "
               f"runtime {dt:.1f} s")


def test_3_constraint_satisfaction(acceptance, noisy_day):
    s = noisy_day[0].summary
    ok = (s["constraint_violation_count"] == 0 and s["max_wind_violation_mw"] <= TOL_MW
          and s["max_battery_residual_mw"] <= TOL_MW)
    acceptance(3, ok, f"{s['steps']} steps: {s['wind_bound_violations']} wind-bound and "
                      f"{s['battery_equality_violations']} battery-equality violations; max wind "
                      f"excess {s['max_wind_violation_mw']:.1e} MW, max battery residual "
                      f"{s['max_battery_residual_mw']:.1e} MW")


def test_4_closed_loop_tracking(acceptance, clean_day, noisy_day):
    clean = clean_day.summary["tracking_error_pct"]
    noisy = noisy_day[0].summary["tracking_error_pct"]
    acceptance(4, clean <= 2.0 and noisy <= 10.0,
               f"normalised RMS tracking error: noiseless {clean:.4f}% (<= 2%), "
               f"noisy+uncertain {noisy:.3f}% (<= 10%)")


def test_5_open_loop_forecast_errors(acceptance, scenario, predictor):
    s = run_open_loop(scenario, predictor).summary
    w, so, b = s["wind_error_pct"], s["solar_error_pct"], s["battery_error_pct"]
    acceptance(5, w <= 13 and so <= 17 and b <= 20,
               f"wind {w:.2f}% (<= 13), solar {so:.2f}% (<= 17), battery {b:.2f}% (<= 20), "
               f"total {s['total_error_pct']:.2f}%")


def test_6_ablation_orderings(acceptance, scenario):
    t0 = time.perf_counter()
    rows = ablation_table(scenario, train_predictor(scenario))
    dt = time.perf_counter() - t0
    base, lam10, lam1e5, q04, q16 = rows
    norms = lambda r: np.array([r.sigma_u_fro, r.sigma_y_fro])  # noqa: E731
    checks = {
        "baseline smallest of lambda=10 rows": all(
            np.all(norms(base) < norms(r)) for r in (lam10, q04, q16)),
        "lambda=1e5 >= 10x smaller": bool(np.all(10 * norms(lam1e5) <= norms(lam10))),
        "q_w=-1.6 larger slacks": bool(np.all(norms(q16) > norms(q04))),
        "q_w=-1.6 larger |dPw|": q16.delta_pw > q04.delta_pw,
        "runtime < 60 s": dt < 60,
    }
    kw = " ".join(f"[{1e3 * r.sigma_u_fro:.1f}/{1e3 * r.sigma_y_fro:.1f}/{1e3 * r.delta_pw:.1f}]"
                  for r in rows)
    failed = [k for k, v in checks.items() if not v]
    acceptance(6, not failed, f"sigma_u/sigma_y/dPw kW {kw}; {dt:.1f} s"
               + (f"; failed: {', '.join(failed)}" if failed else ""))


def test_7_battery_anticipation(acceptance, noisy_day):
    s = noisy_day[0].summary
    n_deficit = sum(int(forecast_deficit(sol).sum()) for sol in noisy_day[0].solutions)
    acceptance(7, s["anticipation_violations"] == 0 and n_deficit > 0,
               f"{n_deficit} forecast deficit samples, {s['anticipation_violations']} without a "
               f"positive battery setpoint; {s['deficit_samples']} applied deficit samples, "
               f"{s['discharge_violations']} without discharge")


def test_8_performance(acceptance, noisy_day):
    res, wall = noisy_day
    mean_s = float(np.mean(res.solve_ms)) / 1e3
    acceptance(8, mean_s < 1.0 and wall < 600,
               f"mean solve {1e3 * mean_s:.1f} ms (< 1000 ms) on 240 variables; full day "
               f"{len(res.solve_ms)} steps in {wall:.0f} s (< 600 s)")


def test_9_determinism(acceptance, tmp_path):
    r = CliRunner()
    commands = [
        ["datagen", "--out", "{d}/data/ds.csv"],
        ["fit", "--dataset", "{d}/data/ds.csv", "--out", "{d}/data/p.csv"],
        ["run", "--mode", "open", "--predictor", "{d}/data/p.csv", "--out", "{d}/open"],
        ["run", "--mode", "closed", "--steps", "60", "--start-hour", "11",
         "--predictor", "{d}/data/p.csv", "--out", "{d}/closed"],
        ["run", "--mode", "ablation", "--predictor", "{d}/data/p.csv", "--out", "{d}/abl"],
        ["profile", "--out", "{d}/weather.csv"],
    ]
    trees = []
    d = tmp_path / "out"  # same paths both times: summaries echo the config
    for _ in range(2):
        for cmd in commands:
            res = r.invoke(main, [c.format(d=d) for c in cmd])
            assert res.exit_code == 0, res.output
        trees.append({p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*"))
                      if p.is_file() and not p.name.startswith("timing.")})
        shutil.rmtree(d)
    same = trees[0].keys() == trees[1].keys() and all(
        trees[0][k] == trees[1][k] for k in trees[0])
    acceptance(9, same, f"{len(trees[0])} files byte-identical across reruns "
                        "(timing.csv/timing.json hold wall-clock data and are excluded)")
