"""Daily load reference profiles: a synthetic two-harmonic shape or CSV ingest."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class DemandParams:
    base: float = 4.0
    first_amplitude: float = 0.7
    first_peak_hour: float = 14.0
    second_amplitude: float = 0.4
    second_peak_hour: float = 12.0
    peak_mw: float = 5.0
    csv_path: str | None = None

    def __post_init__(self):
        if self.peak_mw <= 0:
            raise ValueError("peak_mw must be positive")


def _shape(t, p: DemandParams):
    t = np.asarray(t, dtype=float)
    return (p.base
            + p.first_amplitude * np.cos(2 * np.pi * (t - p.first_peak_hour) / 24.0)
            + p.second_amplitude * np.cos(4 * np.pi * (t - p.second_peak_hour) / 24.0))


def synthetic_demand(t, p: DemandParams = DemandParams()):
    """Two-harmonic daily load linearly scaled so its daily maximum is ``peak_mw``."""
    grid = np.linspace(0.0, 24.0, 2881)
    peak = _shape(grid, p).max()
    if peak <= 0:
        raise ValueError("demand shape has no positive peak")
    return _shape(t, p) * (p.peak_mw / peak)


def load_demand_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read ``time_h, p_ref_mw`` columns from a CSV file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"demand CSV not found: {path}")
    times, values = [], []
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            times.append(float(row["time_h"]))
            values.append(float(row["p_ref_mw"]))
    if len(times) < 2:
        raise ValueError(f"demand CSV {path} needs at least two rows")
    order = np.argsort(times)
    return np.asarray(times)[order], np.asarray(values)[order]


def demand_profile(t, p: DemandParams = DemandParams()):
    """Load reference at times ``t`` (hours), periodic over 24 h."""
    if p.csv_path is None:
        return synthetic_demand(t, p)
    times, values = load_demand_csv(p.csv_path)
    return np.interp(np.mod(np.asarray(t, dtype=float), 24.0), times, values, period=24.0)
