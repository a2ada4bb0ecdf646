"""Analytic performance metrics of a DC-bus voltage loop design."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import lti
from .design import DesignPoint, build_gdp, build_gvl, open_loop
from .lti import TransferFunction, freq_response
from .plant import VscParams

ITAE_HORIZON = 5.0
STEP_DT = 1e-3
SETTLE_BAND = 0.02


@dataclass(frozen=True)
class OperatingPoint:
    """Fundamental line-current operating point."""

    p_o: float
    i1_peak: float
    phi: float = 0.0

    @property
    def i_p(self) -> float:
        return self.i1_peak * math.cos(self.phi)

    @property
    def i_q(self) -> float:
        return self.i1_peak * math.sin(self.phi)

    @classmethod
    def from_power(cls, plant: VscParams, p_o: float, phi: float = 0.0) -> "OperatingPoint":
        """Lossless power balance: ``p_o = V1 * i_p / 2``."""
        i_p = 2.0 * p_o / plant.v_peak
        return cls(p_o, abs(i_p / math.cos(phi)), phi)


@dataclass(frozen=True)
class PerformanceReport:
    i3_percent: float
    thd_percent: float
    delta_v_max: float
    itae: float
    ripple_amp: float
    q_injected: float
    settling_time: float


class Fluctuation(NamedTuple):
    delta_v_max: float
    settling_time: float


def third_harmonic_percent(gvl: TransferFunction, omega_s: float) -> float:
    """Predicted third-harmonic line current, percent of fundamental."""
    return 50.0 * freq_response(gvl, 2.0 * omega_s).magnitude


# THD of the line current is dominated by the third harmonic
thd_percent = third_harmonic_percent


def voltage_error_trace(gdp: TransferFunction, p_step: float, horizon: float = ITAE_HORIZON, dt: float = STEP_DT):
    """Bus-voltage error after a bus-power step of ``p_step`` watts."""
    if not gdp.is_stable():
        raise lti.UnstableResponseError("G_dp is not stable")
    return lti.step_response(lti.to_state_space(gdp), p_step, dt, horizon)


def settling_time(t: np.ndarray, e: np.ndarray, band: float = SETTLE_BAND) -> float:
    """Time after which ``|e|`` stays within ``band`` times its own peak."""
    a = np.abs(e)
    peak = a.max() if a.size else 0.0
    if peak == 0.0:
        return 0.0
    outside = np.flatnonzero(a > band * peak)
    if outside[-1] + 1 >= t.size:
        return math.inf
    return float(t[outside[-1] + 1])


def max_voltage_fluctuation(gdp: TransferFunction, p_step: float, horizon: float = ITAE_HORIZON) -> Fluctuation:
    if p_step == 0:
        return Fluctuation(0.0, 0.0)
    r = voltage_error_trace(gdp, p_step, horizon)
    return Fluctuation(float(np.max(np.abs(r.y))), settling_time(r.t, r.y))


def itae(gdp: TransferFunction, p_step: float, horizon: float = ITAE_HORIZON) -> float:
    """Integral of ``t |e_v(t)|`` over ``[0, horizon]`` (V s^2)."""
    if p_step == 0:
        return 0.0
    r = voltage_error_trace(gdp, p_step, horizon)
    return float(np.trapezoid(r.t * np.abs(r.y), r.t))


def steady_ripple_amplitude(plant: VscParams, op: OperatingPoint) -> float:
    """Peak double-line-frequency bus ripple, line-reactor power neglected."""
    return plant.v_peak * op.i1_peak / (4.0 * plant.omega_s * plant.c_o * plant.v_o_ref)


def reactive_injection(gvl: TransferFunction, omega_s: float, v1: float, i1: float) -> float:
    """Extra reactive power ``|G_vl| V1 I1 sin(phase G_vl)`` at ``2 omega_s``.

    ``v1`` and ``i1`` are used as supplied; pass RMS or peak values
    consistently with how the result will be read.
    """
    fp = freq_response(gvl, 2.0 * omega_s)
    return fp.magnitude * v1 * i1 * math.sin(math.radians(fp.phase_deg))


@dataclass(frozen=True)
class RobustnessPoint:
    v_scale: float
    phase_margin_deg: float
    crossover_rad_s: float
    ok: bool = True


def robustness_sweep(
    dp: DesignPoint,
    plant: VscParams,
    v_scale_range: tuple[float, float] = (0.7, 1.3),
    n_points: int = 61,
) -> list[RobustnessPoint]:
    """Phase margin vs line-voltage scale with the gains held at their nominal design."""
    lo, hi = v_scale_range
    if not 0 < lo <= hi:
        raise ValueError("scales must be positive and ordered")
    scales = np.linspace(lo, hi, n_points) if hi > lo else np.array([lo])
    if lo < 1.0 < hi:
        scales = np.unique(np.append(scales, 1.0))
    out = []
    for sc in scales:
        L = open_loop(dp.gains, plant, float(sc))
        try:
            wc = lti.gain_crossover(L)
            pm = lti.phase_margin(L)
        except lti.NoCrossoverError:
            out.append(RobustnessPoint(float(sc), math.nan, math.nan, ok=False))
            continue
        out.append(RobustnessPoint(float(sc), pm, wc))
    return out


def evaluate(
    dp: DesignPoint,
    plant: VscParams,
    p_step: float | None = None,
    op: OperatingPoint | None = None,
) -> PerformanceReport:
    """All analytic metrics for one design.

    ``p_step`` defaults to the plant's rated power. Reactive injection is
    reported with RMS line voltage and RMS fundamental current.
    """
    p_step = plant.p_o_max if p_step is None else p_step
    op = OperatingPoint.from_power(plant, p_step) if op is None else op
    gvl = build_gvl(dp)
    gdp = build_gdp(dp, plant)
    i3 = third_harmonic_percent(gvl, plant.omega_s)
    fl = max_voltage_fluctuation(gdp, p_step)
    return PerformanceReport(
        i3_percent=i3,
        thd_percent=i3,
        delta_v_max=fl.delta_v_max,
        itae=itae(gdp, p_step),
        ripple_amp=steady_ripple_amplitude(plant, op),
        q_injected=abs(reactive_injection(gvl, plant.omega_s, plant.v_s_rms, op.i1_peak / math.sqrt(2))),
        settling_time=fl.settling_time,
    )


METRIC_COLUMNS = ("design_id", "i3_pct", "thd_pct", "dvmax_v", "itae_vs2", "settle_s", "q_var")


def write_metrics_csv(rows: Sequence[tuple[str, PerformanceReport]], path, digits: int = 9) -> None:
    fmt = f"{{:.{digits}g}}".format
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for name, r in rows:
            w.writerow([name] + [fmt(v) for v in (r.i3_percent, r.thd_percent, r.delta_v_max, r.itae, r.settling_time, r.q_injected)])


def write_sweep_csv(points: Sequence[RobustnessPoint], path, digits: int = 9) -> None:
    fmt = f"{{:.{digits}g}}".format
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["v_scale", "pm_deg", "wc_rad_s"])
        for p in points:
            w.writerow([fmt(p.v_scale), fmt(p.phase_margin_deg), fmt(p.crossover_rad_s)])
