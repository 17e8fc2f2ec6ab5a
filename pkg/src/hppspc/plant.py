"""Discrete-time hybrid power plant: wind, solar and battery behind inner PID loops.

Each component is a first-order lag driven by its own PID controller. Wind and
solar outputs are clamped to the power currently available; the battery is
clamped to symmetric charge/discharge limits. Battery output > 0 means
discharging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

WIND, SOLAR, BATTERY = 0, 1, 2
COMPONENTS = ("wind", "solar", "battery")


def _check_finite(**values: float) -> None:
    for name, v in values.items():
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float
    kd: float
    command_lo: float
    command_hi: float

    def __post_init__(self):
        if self.kp < 0 or self.ki < 0 or self.kd < 0:
            raise ValueError("PID gains must be non-negative")
        if not self.command_lo < self.command_hi:
            raise ValueError("command_lo must be < command_hi")


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_error: float = 0.0


def pid_step(
    pid: PidState,
    gains: PidGains,
    setpoint: float,
    measurement: float,
    dt: float,
) -> tuple[float, PidState]:
    """One discrete PID update with conditional-integration anti-windup.

    The integral is frozen whenever the unclamped command is saturated in
    the same direction as the error.
    """
    _check_finite(setpoint=setpoint, measurement=measurement, dt=dt,
                  integral=pid.integral, prev_error=pid.prev_error)
    if dt <= 0:
        raise ValueError("dt must be positive")
    error = setpoint - measurement
    deriv = gains.kd * (error - pid.prev_error) / dt
    integral = pid.integral + error * dt
    raw = gains.kp * error + gains.ki * integral + deriv
    if (raw > gains.command_hi and error > 0) or (raw < gains.command_lo and error < 0):
        integral = pid.integral
        raw = gains.kp * error + gains.ki * integral + deriv
    command = min(max(raw, gains.command_lo), gains.command_hi)
    return command, PidState(integral=integral, prev_error=error)


def first_order_step(output: float, command: float, tau: float, dt: float) -> float:
    """Exact zero-order-hold step of ``tau * dy/dt = command - y``."""
    _check_finite(output=output, command=command, tau=tau, dt=dt)
    if tau <= 0 or dt <= 0:
        raise ValueError("tau and dt must be positive")
    a = math.exp(-dt / tau)
    return a * output + (1.0 - a) * command


@dataclass(frozen=True)
class ComponentState:
    output: float
    tau: float
    gains: PidGains
    pid: PidState = field(default_factory=PidState)

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")


def component_step(
    c: ComponentState,
    setpoint: float,
    lo: float,
    hi: float,
    dt: float,
    ideal: bool = False,
) -> tuple[float, ComponentState]:
    """Advance one component by ``dt``; the output is clamped to ``[lo, hi]``.

    With ``ideal=True`` the PID and lag are bypassed and the output is the
    clamped setpoint (perfect inner-loop tracking).
    """
    if lo > hi:
        raise ValueError(f"lower bound {lo} exceeds upper bound {hi}")
    _check_finite(setpoint=setpoint)
    if ideal:
        out = min(max(setpoint, lo), hi)
        return out, replace(c, output=out, pid=PidState())
    # setpoint feed-forward plus PID correction drives the first-order lag
    correction, pid = pid_step(c.pid, c.gains, setpoint, c.output, dt)
    raw = first_order_step(c.output, setpoint + correction, c.tau, dt)
    out = min(max(raw, lo), hi)
    # output clamp acts as a second actuator limit: stop integrating into it
    if (raw > hi and setpoint > hi) or (raw < lo and setpoint < lo):
        pid = PidState(integral=c.pid.integral, prev_error=pid.prev_error)
    return out, replace(c, output=out, pid=pid)


# Defaults validated by tests/test_plant.py::test_default_gains_settle: a unit
# setpoint step settles to 99% within 20 s with < 2% overshoot.
DEFAULT_TAU = {"wind": 20.0, "solar": 20.0, "battery": 5.0}
DEFAULT_GAINS = {
    "wind": PidGains(kp=8.0, ki=0.02, kd=0.0, command_lo=-40.0, command_hi=40.0),
    "solar": PidGains(kp=8.0, ki=0.02, kd=0.0, command_lo=-40.0, command_hi=40.0),
    "battery": PidGains(kp=3.0, ki=0.02, kd=0.0, command_lo=-40.0, command_hi=40.0),
}


@dataclass(frozen=True)
class PlantConfig:
    sample_dt: float = 20.0
    inner_dt: float = 1.0
    ideal_tracking: bool = False
    p_b_min: float = -4.0
    p_b_max: float = 4.0
    battery_capacity_mwh: float = 4.0
    tau_wind: float = DEFAULT_TAU["wind"]
    tau_solar: float = DEFAULT_TAU["solar"]
    tau_battery: float = DEFAULT_TAU["battery"]
    gains_wind: PidGains = DEFAULT_GAINS["wind"]
    gains_solar: PidGains = DEFAULT_GAINS["solar"]
    gains_battery: PidGains = DEFAULT_GAINS["battery"]

    def __post_init__(self):
        if self.sample_dt <= 0 or self.inner_dt <= 0:
            raise ValueError("sample_dt and inner_dt must be positive")
        if self.p_b_min > self.p_b_max:
            raise ValueError("p_b_min exceeds p_b_max")

    @property
    def substeps(self) -> int:
        return max(1, int(round(self.sample_dt / self.inner_dt)))


@dataclass(frozen=True)
class PlantState:
    wind: ComponentState
    solar: ComponentState
    battery: ComponentState
    dt: float
    soc_energy: float

    @property
    def outputs(self) -> np.ndarray:
        return np.array([self.wind.output, self.solar.output, self.battery.output])


def initial_state(cfg: PlantConfig, outputs=(0.0, 0.0, 0.0)) -> PlantState:
    """Plant at rest at ``outputs`` with SoC at half the nominal capacity."""
    w, s, b = (float(v) for v in outputs)
    return PlantState(
        wind=ComponentState(w, cfg.tau_wind, cfg.gains_wind),
        solar=ComponentState(s, cfg.tau_solar, cfg.gains_solar),
        battery=ComponentState(b, cfg.tau_battery, cfg.gains_battery),
        dt=cfg.sample_dt,
        soc_energy=0.5 * cfg.battery_capacity_mwh,
    )


def plant_step(
    p: PlantState,
    setpoints,
    avail_wind: float,
    avail_solar: float,
    cfg: PlantConfig = PlantConfig(),
) -> tuple[np.ndarray, PlantState]:
    """Advance the plant over one supervisory interval.

    Returns the sampled outputs ``[P_w, P_s, P_b]`` in MW and the new state.
    """
    if avail_wind < 0 or avail_solar < 0:
        raise ValueError("available power must be non-negative")
    sp_w, sp_s, sp_b = (float(v) for v in setpoints)
    wind, solar, battery = p.wind, p.solar, p.battery
    soc = p.soc_energy
    if cfg.ideal_tracking:
        n_sub, h = 1, cfg.sample_dt
    else:
        n_sub, h = cfg.substeps, cfg.sample_dt / cfg.substeps
    ideal = cfg.ideal_tracking
    for _ in range(n_sub):
        _, wind = component_step(wind, sp_w, 0.0, avail_wind, h, ideal)
        _, solar = component_step(solar, sp_s, 0.0, avail_solar, h, ideal)
        _, battery = component_step(battery, sp_b, cfg.p_b_min, cfg.p_b_max, h, ideal)
        soc -= battery.output * h / 3600.0
    new = PlantState(wind, solar, battery, p.dt, soc)
    return new.outputs, new
