"""Behaviour data for the predictor: feedback-optimisation runs, noise, blocks.

Stacked vectors are sample-major, channel-minor: for a window of ``L`` samples
with ``m`` channels, entry ``k*m + c`` holds channel ``c`` at sample ``k``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import plant as plant_mod
from .demand import DemandParams, demand_profile
from .weather import (WeatherParams, irradiance_profile, solar_power_curve,
                      wind_power_curve, wind_speed_profile)
from ._csv import read_csv_columns, write_csv_atomic, write_text_atomic

SAMPLES_PER_DAY = 4320


@dataclass(frozen=True)
class FoGains:
    alpha: float = 0.5
    dither_std: float = 0.15
    weights: tuple[float, float, float] = (0.5, 0.5, 0.0)

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.dither_std < 0:
            raise ValueError("dither_std must be non-negative")
        if len(self.weights) != 3 or any(w < 0 for w in self.weights):
            raise ValueError("weights must be three non-negative numbers")


@dataclass(frozen=True)
class Trajectory:
    u_seq: np.ndarray  # (L, m)
    y_seq: np.ndarray  # (L, p)

    def __post_init__(self):
        if self.u_seq.shape[0] != self.y_seq.shape[0]:
            raise ValueError("u and y sequences differ in length")
        if not (np.all(np.isfinite(self.u_seq)) and np.all(np.isfinite(self.y_seq))):
            raise ValueError("trajectory contains non-finite values")


@dataclass(frozen=True)
class DataSet:
    """``T`` trajectories stored as arrays ``u`` (T, L, m) and ``y`` (T, L, p)."""

    u: np.ndarray
    y: np.ndarray
    t_ini: int
    n: int
    seed: int | None = None

    def __post_init__(self):
        if self.u.ndim != 3 or self.y.ndim != 3:
            raise ValueError("u and y must be (T, L, channels) arrays")
        if self.u.shape[:2] != self.y.shape[:2]:
            raise ValueError(f"u {self.u.shape} and y {self.y.shape} disagree on (T, L)")
        if self.u.shape[1] != self.t_ini + self.n:
            raise ValueError(f"L = {self.u.shape[1]} but t_ini + n = {self.t_ini + self.n}")

    @property
    def T(self) -> int:
        return self.u.shape[0]

    @property
    def L(self) -> int:
        return self.u.shape[1]

    @property
    def m(self) -> int:
        return self.u.shape[2]

    @property
    def p(self) -> int:
        return self.y.shape[2]

    @property
    def trajectories(self) -> list[Trajectory]:
        return [Trajectory(self.u[j], self.y[j]) for j in range(self.T)]


@dataclass(frozen=True)
class Blocks:
    U_Tini: np.ndarray
    U_N: np.ndarray
    Y_Tini: np.ndarray
    Y_N: np.ndarray
    t_ini: int
    n: int
    m: int
    p: int

    @property
    def M(self) -> np.ndarray:
        return np.vstack([self.Y_Tini, self.U_Tini, self.U_N])

    @property
    def T(self) -> int:
        return self.U_N.shape[1]


@dataclass(frozen=True)
class DayProfile:
    """One day of reference and certain availability at the supervisory rate."""

    p_ref: np.ndarray
    avail_wind: np.ndarray
    avail_solar: np.ndarray


def fo_step(u_prev, y_meas, p_ref: float, lo, hi, gains: FoGains,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Projected-gradient feedback-optimisation update of the setpoints.

    Wind and solar move along the tracking error of the last measurement
    (plus optional dither) and are projected onto ``[lo, hi]``. The battery
    takes the residual ``p_ref - u_w - u_s``, clipped to its limits.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo > hi):
        raise ValueError("inconsistent setpoint bounds")
    err = p_ref - float(np.sum(y_meas))
    u = np.asarray(u_prev, dtype=float) + gains.alpha * err * np.asarray(gains.weights)
    if gains.dither_std > 0:
        if rng is None:
            raise ValueError("dither requires an rng")
        u = u + rng.normal(0.0, gains.dither_std, size=3)
    u = np.clip(u, lo, hi)
    u[2] = np.clip(p_ref - u[0] - u[1], lo[2], hi[2])
    return u


def greedy_allocation(p_ref: float, avail_wind: float, avail_solar: float,
                      p_b_min: float, p_b_max: float) -> np.ndarray:
    """Renewables first, battery covers the rest."""
    u_w = min(avail_wind, max(p_ref, 0.0))
    u_s = min(avail_solar, max(p_ref - u_w, 0.0))
    return np.array([u_w, u_s, np.clip(p_ref - u_w - u_s, p_b_min, p_b_max)])


def run_fo_day(day: DayProfile, plant_cfg: plant_mod.PlantConfig, gains: FoGains,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Simulate the feedback-optimisation loop over one day; returns (u, y) arrays."""
    K = len(day.p_ref)
    u_rec = np.empty((K, 3))
    y_rec = np.empty((K, 3))
    u = greedy_allocation(day.p_ref[0], day.avail_wind[0], day.avail_solar[0],
                          plant_cfg.p_b_min, plant_cfg.p_b_max)
    state = plant_mod.initial_state(plant_cfg, u)
    y = state.outputs
    for k in range(K):
        lo = (0.0, 0.0, plant_cfg.p_b_min)
        hi = (day.avail_wind[k], day.avail_solar[k], plant_cfg.p_b_max)
        u = fo_step(u, y, day.p_ref[k], lo, hi, gains, rng)
        y, state = plant_mod.plant_step(state, u, day.avail_wind[k], day.avail_solar[k], plant_cfg)
        u_rec[k] = u
        y_rec[k] = y
    return u_rec, y_rec


def add_measurement_noise(traj: Trajectory, ratio: float,
                          rng: np.random.Generator) -> Trajectory:
    """Per-channel i.i.d. Gaussian noise with std ``ratio * rms(channel)``."""
    if ratio < 0:
        raise ValueError("noise ratio must be non-negative")
    if ratio == 0:
        return traj

    def noisy(x):
        rms = np.sqrt(np.mean(x**2, axis=0))
        return x + rng.standard_normal(x.shape) * (ratio * rms)

    return Trajectory(noisy(traj.u_seq), noisy(traj.y_seq))


def collect_trajectories(
    days: list[DayProfile],
    T: int,
    t_ini: int,
    n: int,
    noise_ratio: float,
    rng: np.random.Generator,
    plant_cfg: plant_mod.PlantConfig = plant_mod.PlantConfig(),
    fo_gains: FoGains = FoGains(),
    seed: int | None = None,
) -> DataSet:
    """Run the FO loop on every day and cut ``T`` windows of length ``t_ini + n``.

    All stride-1 windows of all days are enumerated in (day, start) order and
    ``T`` of them are picked at evenly spaced positions, so the data covers
    every part of every day. Inner loops track perfectly during collection.
    """
    L = t_ini + n
    if T < 1 or t_ini < 1 or n < 1:
        raise ValueError("T, t_ini and n must be positive")
    available = sum(max(0, len(d.p_ref) - L + 1) for d in days)
    if available < T:
        raise ValueError(f"insufficient samples: {T} windows of length {L} required, "
                         f"only {available} available")
    cfg = replace(plant_cfg, ideal_tracking=True)
    day_rngs = rng.spawn(len(days) + 1)
    noise_rng = day_rngs.pop()
    runs = [run_fo_day(d, cfg, fo_gains, r) for d, r in zip(days, day_rngs)]
    index = [(i, s) for i, (u, _) in enumerate(runs) for s in range(len(u) - L + 1)]
    picks = np.round(np.linspace(0, len(index) - 1, T)).astype(int)
    U = np.empty((T, L, 3))
    Y = np.empty((T, L, 3))
    for j, ix in enumerate(picks):
        day, start = index[ix]
        traj = Trajectory(runs[day][0][start:start + L], runs[day][1][start:start + L])
        traj = add_measurement_noise(traj, noise_ratio, noise_rng)
        U[j], Y[j] = traj.u_seq, traj.y_seq
    return DataSet(U, Y, t_ini, n, seed)


def reference_library(n_days: int, weather: WeatherParams, demand: DemandParams,
                      rng: np.random.Generator, sample_dt: float = 20.0) -> list[DayProfile]:
    """Varied day-long references: demand level/phase and weather drawn per day."""
    t = np.arange(int(round(24 * 3600 / sample_dt))) * sample_dt / 3600.0
    days = []
    for _ in range(n_days):
        w = replace(
            weather,
            wind_mean=float(np.clip(weather.wind_mean + rng.uniform(-3.0, 3.0), 4.0, 14.0)),
            wind_phase=float(rng.uniform(0.0, 2 * np.pi)),
            irradiance_peak=float(weather.irradiance_peak * rng.uniform(0.5, 1.25)),
        )
        d = replace(
            demand,
            peak_mw=float(demand.peak_mw * rng.uniform(0.8, 1.1)),
            first_peak_hour=float(demand.first_peak_hour + rng.uniform(-3.0, 3.0)),
        )
        days.append(DayProfile(
            p_ref=np.asarray(demand_profile(t, d), dtype=float),
            avail_wind=np.asarray(wind_power_curve(wind_speed_profile(t, w), w), dtype=float),
            avail_solar=np.asarray(solar_power_curve(irradiance_profile(t, w), w), dtype=float),
        ))
    return days


def split_blocks(ds: DataSet) -> Blocks:
    """Past/future block matrices; column ``j`` comes from trajectory ``j``."""
    U = ds.u.reshape(ds.T, ds.L * ds.m).T
    Y = ds.y.reshape(ds.T, ds.L * ds.p).T
    ku, ky = ds.t_ini * ds.m, ds.t_ini * ds.p
    return Blocks(U_Tini=U[:ku], U_N=U[ku:], Y_Tini=Y[:ky], Y_N=Y[ky:],
                  t_ini=ds.t_ini, n=ds.n, m=ds.m, p=ds.p)


def assemble(b: Blocks) -> DataSet:
    """Inverse of :func:`split_blocks`."""
    U = np.vstack([b.U_Tini, b.U_N]).T.reshape(b.T, b.t_ini + b.n, b.m)
    Y = np.vstack([b.Y_Tini, b.Y_N]).T.reshape(b.T, b.t_ini + b.n, b.p)
    return DataSet(U, Y, b.t_ini, b.n)


def excitation_rank(b: Blocks) -> tuple[int, bool]:
    """Numerical rank of the stacked input blocks and whether it is full."""
    U = np.vstack([b.U_Tini, b.U_N])
    if not np.any(U):
        return 0, False
    rank = int(np.linalg.matrix_rank(U))
    return rank, rank == (b.t_ini + b.n) * b.m


DATASET_COLUMNS = ("traj_id", "k", "u_w", "u_s", "u_b", "y_w", "y_s", "y_b")


def save_dataset(ds: DataSet, path) -> Path:
    """Write the long-format CSV and its ``.json`` sidecar; returns the sidecar path."""
    path = Path(path)
    if ds.m != 3 or ds.p != 3:
        raise ValueError("CSV layout is defined for m = p = 3")

    def rows():
        for j in range(ds.T):
            for k in range(ds.L):
                yield (j, k, *ds.u[j, k], *ds.y[j, k])

    write_csv_atomic(path, DATASET_COLUMNS, rows(), fmt=repr)
    meta = {"T": ds.T, "L": ds.L, "T_ini": ds.t_ini, "N": ds.n,
            "m": ds.m, "p": ds.p, "seed": ds.seed}
    side = path.with_suffix(".json")
    write_text_atomic(side, json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return side


def load_dataset(path) -> DataSet:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    cols = read_csv_columns(path, DATASET_COLUMNS)
    T, L = meta["T"], meta["L"]
    if len(cols["k"]) != T * L:
        raise ValueError(f"dataset has {len(cols['k'])} rows, sidecar says T*L = {T * L}")
    u = np.column_stack([cols[c] for c in ("u_w", "u_s", "u_b")]).reshape(T, L, 3)
    y = np.column_stack([cols[c] for c in ("y_w", "y_s", "y_b")]).reshape(T, L, 3)
    return DataSet(u, y, meta["T_ini"], meta["N"], meta.get("seed"))
