"""Least-squares multi-step predictor ``y_N = S [y_ini; u_ini; u_N]``."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datagen import Blocks, excitation_rank
from ._csv import write_csv_atomic, write_text_atomic

RCOND = 1e-10
ABS_FLOOR = 1e-12


class ExcitationWarning(UserWarning):
    """Input data is not persistently exciting; the fit may not generalise."""


@dataclass(frozen=True)
class Predictor:
    S_star: np.ndarray
    t_ini: int
    n: int
    m: int
    p: int
    fit_residual_fro: float = 0.0
    excited: bool = True

    def __post_init__(self):
        rows = self.n * self.p
        cols = self.t_ini * (self.p + self.m) + self.n * self.m
        if self.S_star.shape != (rows, cols):
            raise ValueError(f"S_star has shape {self.S_star.shape}, dims imply {(rows, cols)}")
        if not np.all(np.isfinite(self.S_star)):
            raise ValueError("S_star contains non-finite entries")

    @property
    def S_y(self) -> np.ndarray:
        return self.S_star[:, :self.t_ini * self.p]

    @property
    def S_u(self) -> np.ndarray:
        a = self.t_ini * self.p
        return self.S_star[:, a:a + self.t_ini * self.m]

    @property
    def S_f(self) -> np.ndarray:
        return self.S_star[:, self.t_ini * (self.p + self.m):]


def fit(b: Blocks, ridge: float = 0.0, rcond: float = RCOND) -> Predictor:
    """Minimum-norm least-squares ``S* = Y_N M^+`` via SVD with relative cutoff.

    ``ridge > 0`` replaces the pseudo-inverse by Tikhonov-regularised
    inversion of the singular values.
    """
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    _, excited = excitation_rank(b)
    if not excited:
        warnings.warn("input blocks are not persistently exciting", ExcitationWarning,
                      stacklevel=2)
    M = b.M
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] <= ABS_FLOOR:
        raise np.linalg.LinAlgError("regressor matrix M is degenerate (all singular "
                                    "values below the absolute floor)")
    keep = s > rcond * s[0]
    if ridge > 0:
        inv = np.where(keep, s / (s**2 + ridge), 0.0)
    else:
        inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    S = ((b.Y_N @ Vt.T) * inv) @ U.T
    resid = float(np.linalg.norm(S @ M - b.Y_N))
    return Predictor(S, b.t_ini, b.n, b.m, b.p, resid, excited)


def predict(pred: Predictor, y_ini, u_ini, u_future) -> np.ndarray:
    """Stacked ``N*p`` output prediction for stacked past/future vectors."""
    parts = {"y_ini": (y_ini, pred.t_ini * pred.p),
             "u_ini": (u_ini, pred.t_ini * pred.m),
             "u_future": (u_future, pred.n * pred.m)}
    vecs = []
    for name, (v, size) in parts.items():
        v = np.asarray(v, dtype=float).ravel()
        if v.size != size:
            raise ValueError(f"{name} has length {v.size}, expected {size}")
        vecs.append(v)
    return pred.S_star @ np.concatenate(vecs)


def residual_report(pred: Predictor, b: Blocks) -> tuple[float, np.ndarray]:
    """Training-set Frobenius residual and per-output-channel RMS residual."""
    if (b.t_ini, b.n, b.m, b.p) != (pred.t_ini, pred.n, pred.m, pred.p):
        raise ValueError("block dimensions do not match the predictor")
    R = pred.S_star @ b.M - b.Y_N
    per_channel = R.reshape(pred.n, pred.p, -1).transpose(1, 0, 2).reshape(pred.p, -1)
    return float(np.linalg.norm(R)), np.sqrt(np.mean(per_channel**2, axis=1))


def save_predictor(pred: Predictor, path) -> Path:
    """CSV matrix (shortest round-trip float repr) plus ``.json`` dims sidecar."""
    path = Path(path)
    write_csv_atomic(path, [f"c{j}" for j in range(pred.S_star.shape[1])],
                     pred.S_star.tolist(), fmt=repr)
    meta = {"T_ini": pred.t_ini, "N": pred.n, "m": pred.m, "p": pred.p,
            "fit_residual_fro": pred.fit_residual_fro, "excited": pred.excited}
    side = path.with_suffix(".json")
    write_text_atomic(side, json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return side


def load_predictor(path) -> Predictor:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    S = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Predictor(S, meta["T_ini"], meta["N"], meta["m"], meta["p"],
                     meta["fit_residual_fro"], meta["excited"])
