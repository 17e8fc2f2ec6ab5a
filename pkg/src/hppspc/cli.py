"""Command-line entry points: ``datagen``, ``fit``, ``run`` and ``profile``.

Exit codes: 0 success, 1 configuration or I/O error, 2 numerical failure
(rank-deficient data, degenerate fit, certified-infeasible control QP).
Every option can also be set through ``HPPSPC_<COMMAND>_<OPTION>``
environment variables, e.g. ``HPPSPC_RUN_SEED=3``.
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import datagen, harness
from .config import ConfigError, ScenarioConfig, load_config
from .controller import InfeasibleControlError
from .predictor import fit as fit_predictor, load_predictor, residual_report, save_predictor
from .weather import PROFILE_COLUMNS, profile_rows, weather_trace
from ._csv import write_csv_atomic, write_text_atomic

EXIT_OK, EXIT_IO, EXIT_NUMERIC = 0, 1, 2


class NumericalFailure(click.ClickException):
    exit_code = EXIT_NUMERIC


class IoFailure(click.ClickException):
    exit_code = EXIT_IO


def _parent(path) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create directory for {path}: {exc.strerror}") from exc


def _load(config: str | None, seed: int | None, **overrides) -> ScenarioConfig:
    try:
        scn = load_config(config) if config else ScenarioConfig()
        changes = {k: v for k, v in overrides.items() if v is not None}
        if seed is not None:
            changes["seed"] = seed
        return replace(scn, **changes) if changes else scn
    except FileNotFoundError as exc:
        raise IoFailure(f"config not found: {exc.filename}") from exc
    except (ConfigError, ValueError) as exc:
        raise IoFailure(str(exc)) from exc


def _guard(fn, *args):
    """Map library exceptions onto the documented exit codes."""
    try:
        return fn(*args)
    except (InfeasibleControlError, np.linalg.LinAlgError) as exc:
        raise NumericalFailure(str(exc)) from exc
    except OSError as exc:
        raise IoFailure(f"{exc.filename or ''}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise IoFailure(str(exc)) from exc


config_opt = click.option("--config", type=click.Path(dir_okay=False),
                          help="JSON experiment file; defaults apply when omitted.")
seed_opt = click.option("--seed", type=int, help="Override scenario.seed.")


@click.group(context_settings={"auto_envvar_prefix": "HPPSPC",
                               "help_option_names": ["-h", "--help"]})
def main():
    """Subspace predictive control of a wind/solar/battery plant."""


@main.command("datagen")
@config_opt
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Dataset CSV; a .json sidecar is written next to it.")
@seed_opt
def datagen_cmd(config, out, seed):
    """Collect FO-driven trajectories and write the dataset."""
    scn = _load(config, seed)
    ds = _guard(harness.generate_dataset, scn)
    rank, full = datagen.excitation_rank(datagen.split_blocks(ds))
    needed = ds.L * ds.m
    click.echo(f"trajectories T={ds.T} length L={ds.L}")
    click.echo(f"input block rank {rank}/{needed} ({'full' if full else 'DEFICIENT'})")
    if not full:
        raise NumericalFailure("data is not persistently exciting; nothing written")
    _parent(out)
    _guard(datagen.save_dataset, ds, out)
    click.echo(f"wrote {out}")


@main.command()
@click.option("--dataset", required=True, type=click.Path(dir_okay=False),
              help="Dataset CSV produced by 'datagen'.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Predictor CSV; a .json sidecar is written next to it.")
@click.option("--ridge", type=float, default=0.0, show_default=True,
              help="Tikhonov weight; 0 gives the minimum-norm least-squares fit.")
def fit(dataset, out, ridge):
    """Fit the multi-step predictor from a dataset."""
    ds = _guard(datagen.load_dataset, dataset)
    blocks = datagen.split_blocks(ds)
    pred = _guard(fit_predictor, blocks, ridge)
    _, per_channel = residual_report(pred, blocks)
    _parent(out)
    _guard(save_predictor, pred, out)
    click.echo(f"fit residual (Frobenius) {pred.fit_residual_fro!r}")
    click.echo("per-channel RMS " + " ".join(f"{v:.6g}" for v in per_channel))
    click.echo(f"wrote {out}")


@main.command()
@config_opt
@click.option("--mode", type=click.Choice(["open", "closed", "ablation"]), default="closed",
              show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False),
              help="Output directory.")
@seed_opt
@click.option("--start-hour", type=float, help="Override scenario.start_hour.")
@click.option("--steps", type=int, help="Override scenario.steps (closed mode).")
@click.option("--predictor", type=click.Path(dir_okay=False),
              help="Use this predictor CSV instead of training one.")
def run(config, mode, out, seed, start_hour, steps, predictor):
    """Run an open-loop, closed-loop or ablation experiment."""
    scn = _load(config, seed, start_hour=start_hour, steps=steps)
    if predictor:
        scn = replace(scn, io=replace(scn.io, predictor=predictor))
    t0 = time.perf_counter()
    pred = _guard(harness.train_predictor, scn)
    if mode == "ablation":
        rows = _guard(harness.ablation_table, scn, pred)
        _guard(harness.write_ablation, rows, scn, out)
        for r in rows:
            click.echo(f"{r.test:<36} sigma_u {1e3 * r.sigma_u_fro:10.3f} kW  "
                       f"sigma_y {1e3 * r.sigma_y_fro:10.3f} kW  "
                       f"dPw {1e3 * r.delta_pw:10.3f} kW")
    else:
        runner = harness.run_closed_loop if mode == "closed" else harness.run_open_loop
        res = _guard(runner, scn, pred)
        _guard(harness.write_run, res, scn, out)
        for key in ("tracking_error_pct", "wind_error_pct", "solar_error_pct",
                    "battery_error_pct", "constraint_violation_count", "solver_failures"):
            if key in res.summary:
                click.echo(f"{key} {res.summary[key]}")
        click.echo(f"mean_solve_ms {float(np.mean(res.solve_ms)):.3f}")
    timing = {"total_runtime_s": time.perf_counter() - t0}
    timing_path = Path(out) / "timing.json"
    if mode != "ablation":
        timing.update(mean_solve_ms=float(np.mean(res.solve_ms)),
                      max_solve_ms=float(np.max(res.solve_ms)))
    _guard(write_text_atomic, timing_path, json.dumps(timing, indent=2, sort_keys=True) + "\n")
    click.echo(f"wrote {out}")


@main.command()
@config_opt
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Weather profile CSV.")
@seed_opt
@click.option("--start-hour", type=float, default=0.0, show_default=True)
@click.option("--steps", type=int, default=4320, show_default=True)
def profile(config, out, seed, start_hour, steps):
    """Export the wind/solar availability profile and the quantile bound."""
    scn = _load(config, seed)
    dt_h = scn.plant.sample_dt / 3600.0
    t = start_hour + dt_h * np.arange(steps)
    tr = weather_trace(t, scn.weather, scn.controller.q_w, scn.uncertainty,
                       np.random.default_rng([scn.seed, 2]))
    _parent(out)
    _guard(write_csv_atomic, out, PROFILE_COLUMNS, profile_rows(tr))
    click.echo(f"wrote {out}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
