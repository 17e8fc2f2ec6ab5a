"""Synthetic weather: wind speed and irradiance profiles, power curves and the
quantile bound used for the probabilistic wind constraint."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WeatherParams:
    wind_mean: float = 10.0          # m/s
    wind_amplitude: float = 2.5      # m/s
    wind_period: float = 24.0        # h
    wind_phase: float = math.pi / 3  # rad; slowest wind early afternoon
    irradiance_peak: float = 800.0   # W/m^2
    sunrise: float = 6.0             # h
    sunset: float = 18.0             # h
    rated_wind: float = 4.0          # MW
    rated_solar: float = 4.0         # MW
    cut_in: float = 3.0              # m/s
    rated_speed: float = 12.0        # m/s
    cut_out: float = 25.0            # m/s
    sigma_v: float = 0.1             # m/s

    def __post_init__(self):
        if not 0 <= self.cut_in < self.rated_speed < self.cut_out:
            raise ValueError("need 0 <= cut_in < rated_speed < cut_out")
        if self.rated_wind <= 0 or self.rated_solar <= 0:
            raise ValueError("rated powers must be positive")
        if self.sigma_v < 0:
            raise ValueError("sigma_v must be non-negative")
        if self.wind_period <= 0:
            raise ValueError("wind_period must be positive")
        if not self.sunrise < self.sunset:
            raise ValueError("sunrise must precede sunset")


@dataclass(frozen=True)
class QuantileBound:
    mu: float
    sigma: float
    q: float
    bound: float


def wind_speed_profile(t, params: WeatherParams):
    """Sinusoidal wind speed at time ``t`` (hours), floored at zero."""
    t = np.asarray(t, dtype=float)
    v = params.wind_mean + params.wind_amplitude * np.sin(
        2 * np.pi * t / params.wind_period + params.wind_phase)
    v = np.maximum(v, 0.0)
    return float(v) if v.ndim == 0 else v


def irradiance_profile(t, params: WeatherParams):
    """Half-sine irradiance between sunrise and sunset, zero at night.

    Time is taken modulo 24 h so multi-day runs repeat the daily shape.
    """
    t = np.mod(np.asarray(t, dtype=float), 24.0)
    span = params.sunset - params.sunrise
    phase = (t - params.sunrise) / span
    g = np.where((phase > 0) & (phase < 1),
                 params.irradiance_peak * np.sin(np.pi * np.clip(phase, 0, 1)), 0.0)
    return float(g) if g.ndim == 0 else g


def wind_power_curve(v, params: WeatherParams):
    """Cubic power curve between cut-in and rated speed, flat to cut-out."""
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("wind speed must be non-negative")
    ci, vr, co = params.cut_in, params.rated_speed, params.cut_out
    cubic = params.rated_wind * (v**3 - ci**3) / (vr**3 - ci**3)
    p = np.where(v < ci, 0.0,
                 np.where(v < vr, cubic, np.where(v <= co, params.rated_wind, 0.0)))
    return float(p) if p.ndim == 0 else p


def wind_power_slope(v, params: WeatherParams):
    """Analytic derivative of :func:`wind_power_curve` (zero on flat segments)."""
    v = np.asarray(v, dtype=float)
    ci, vr = params.cut_in, params.rated_speed
    d = np.where((v >= ci) & (v < vr),
                 params.rated_wind * 3 * v**2 / (vr**3 - ci**3), 0.0)
    return float(d) if d.ndim == 0 else d


def solar_power_curve(g, params: WeatherParams):
    g = np.asarray(g, dtype=float)
    if np.any(g < 0):
        raise ValueError("irradiance must be non-negative")
    p = params.rated_solar * np.minimum(1.0, g / 1000.0)
    return float(p) if p.ndim == 0 else p


def perturb_wind_speed(v, sigma_v: float, rng: np.random.Generator):
    """Add N(0, sigma_v^2) noise to the wind speed, floored at zero.

    With ``sigma_v == 0`` the speed is returned unchanged and the stream is
    not advanced.
    """
    if sigma_v < 0:
        raise ValueError("sigma_v must be non-negative")
    v = np.asarray(v, dtype=float)
    if sigma_v == 0:
        out = v.copy()
    else:
        out = np.maximum(v + rng.normal(0.0, sigma_v, size=v.shape), 0.0)
    return float(out) if out.ndim == 0 else out


def wind_power_stats(v, sigma_v: float, params: WeatherParams):
    """Delta-method mean and standard deviation of available wind power."""
    if sigma_v < 0:
        raise ValueError("sigma_v must be non-negative")
    mu = wind_power_curve(v, params)
    sigma = np.abs(wind_power_slope(v, params)) * sigma_v
    return mu, (float(sigma) if np.ndim(sigma) == 0 else sigma)


def quantile_bound(mu: float, sigma: float, q: float, rated: float) -> QuantileBound:
    """``clamp(mu + q*sigma, 0, rated)``, the chance-constraint upper bound."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    bound = min(max(mu + q * sigma, 0.0), rated)
    return QuantileBound(mu=float(mu), sigma=float(sigma), q=float(q), bound=float(bound))


def quantile_bounds(mu, sigma, q: float, rated: float) -> np.ndarray:
    """Vectorised :func:`quantile_bound`, returning only the bounds."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    return np.clip(np.asarray(mu, dtype=float) + q * sigma, 0.0, rated)


@dataclass(frozen=True)
class WeatherTrace:
    """Per-sample weather over a run. ``avail_wind`` is the realised
    (possibly perturbed) availability the plant sees; ``wind_bound`` is the
    controller's quantile bound computed from the nominal forecast."""

    time_h: np.ndarray
    wind_speed: np.ndarray
    avail_wind_nominal: np.ndarray
    avail_wind: np.ndarray
    wind_bound: np.ndarray
    avail_solar: np.ndarray


def weather_trace(
    time_h,
    params: WeatherParams,
    q_w: float,
    uncertain: bool,
    rng: np.random.Generator | None = None,
) -> WeatherTrace:
    time_h = np.asarray(time_h, dtype=float)
    v = wind_speed_profile(time_h, params)
    v = np.atleast_1d(v)
    sigma_v = params.sigma_v if uncertain else 0.0
    mu, sigma = wind_power_stats(v, sigma_v, params)
    if uncertain and sigma_v > 0:
        if rng is None:
            raise ValueError("an rng is required for uncertain weather")
        v_real = perturb_wind_speed(v, sigma_v, rng)
        avail = wind_power_curve(v_real, params)
    else:
        avail = np.array(mu, dtype=float)
    return WeatherTrace(
        time_h=time_h,
        wind_speed=v,
        avail_wind_nominal=np.asarray(mu, dtype=float),
        avail_wind=np.atleast_1d(avail),
        wind_bound=quantile_bounds(mu, sigma, q_w, params.rated_wind),
        avail_solar=np.atleast_1d(solar_power_curve(irradiance_profile(time_h, params), params)),
    )


PROFILE_COLUMNS = ("time_h", "wind_speed", "avail_wind_mw", "avail_wind_uncertain_mw",
                   "quantile_bound_mw", "avail_solar_mw")


def profile_rows(trace: WeatherTrace):
    """Rows for the weather-profile CSV export (columns :data:`PROFILE_COLUMNS`)."""
    return zip(trace.time_h, trace.wind_speed, trace.avail_wind_nominal,
               trace.avail_wind, trace.wind_bound, trace.avail_solar)
