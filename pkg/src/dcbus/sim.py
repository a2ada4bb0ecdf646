"""Fixed-step simulation of the single-phase PWM rectifier bus.

Two plant models share the same discrete voltage controller:

* :func:`simulate` integrates the nonlinear averaged power balance
  ``C v dv/dt = v_s i_s - L i_s di_s/dt - R i_s^2 - v i_o``.
* :func:`simulate_linear` integrates the simplified average model in which
  the bus integrator gain is frozen at ``1/(V_ref C)`` and the grid
  pulsating power enters as an additive disturbance.

The grid angle is ideal and the inner current loop is either unity gain or
a first-order lag on the sinusoidal current reference.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Literal, Optional

import numpy as np

from .design import ControllerGains
from .plant import VscParams

LoadKind = Literal["none", "resistor", "constant_power"]
TRACE_COLUMNS = ("t", "v_o", "i_p_ref", "v_s", "i_s", "i_o", "p_o")


class SimulationDivergedError(RuntimeError):
    def __init__(self, message: str, t_last: float):
        super().__init__(f"{message} (last valid t={t_last:.6g} s)")
        self.t_last = t_last


@dataclass(frozen=True)
class LoadEvent:
    time: float
    kind: LoadKind = "none"
    value: float = 0.0

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("event time must be non-negative")
        if self.kind not in ("none", "resistor", "constant_power"):
            raise ValueError(f"unknown load kind {self.kind!r}")
        if self.kind == "resistor" and not self.value > 0:
            raise ValueError("resistor value must be positive")

    def current(self, v: float) -> float:
        if self.kind == "resistor":
            return v / self.value
        if self.kind == "constant_power":
            return self.value / v
        return 0.0


@dataclass(frozen=True)
class SimConfig:
    plant: VscParams
    gains: ControllerGains
    t_end: float = 1.0
    events: tuple[LoadEvent, ...] = ()
    voltage_loop_rate: float = 4000.0
    sim_dt: float = 5e-6
    v_o_init: Optional[float] = None
    i_q_ref: float = 0.0
    current_loop: Literal["ideal", "first_order"] = "ideal"
    current_loop_bandwidth: float = 2 * math.pi * 1000.0
    i_p_max: float = 15.0
    dt_out: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if not (self.sim_dt > 0 and self.voltage_loop_rate > 0 and self.dt_out > 0):
            raise ValueError("sim_dt, voltage_loop_rate and dt_out must be positive")
        self._ratio(1.0 / self.voltage_loop_rate, self.sim_dt, "controller period")
        self._ratio(self.dt_out, self.sim_dt, "dt_out")
        times = [e.time for e in self.events]
        if times != sorted(times):
            raise ValueError("load events must be time-ordered")
        if self.current_loop not in ("ideal", "first_order"):
            raise ValueError(f"unknown current loop model {self.current_loop!r}")
        if self.v_o_init is not None and not self.v_o_init > 0:
            raise ValueError("v_o_init must be positive")

    @staticmethod
    def _ratio(a: float, b: float, what: str) -> int:
        n = round(a / b)
        if n < 1 or abs(n * b - a) > 1e-9 * a:
            raise ValueError(f"{what} must be an integer multiple of sim_dt")
        return int(n)

    @property
    def steps_per_tick(self) -> int:
        return self._ratio(1.0 / self.voltage_loop_rate, self.sim_dt, "controller period")

    @property
    def steps_per_sample(self) -> int:
        return self._ratio(self.dt_out, self.sim_dt, "dt_out")

    @property
    def v_start(self) -> float:
        return self.plant.v_peak if self.v_o_init is None else self.v_o_init

    def replace(self, **changes) -> "SimConfig":
        return replace(self, **changes)


@dataclass
class SimTrace:
    dt_out: float
    t: np.ndarray
    v_o: np.ndarray
    i_p_ref: np.ndarray
    v_s: np.ndarray
    i_s: np.ndarray
    i_o: np.ndarray
    p_o: np.ndarray

    def __len__(self) -> int:
        return self.t.size

    def column(self, name: str) -> np.ndarray:
        if name not in TRACE_COLUMNS:
            raise KeyError(name)
        return getattr(self, name)

    def window(self, start: float, end: float) -> slice:
        """Sample slice covering ``[start, end)``."""
        i0 = int(round(start / self.dt_out)) if self.t.size else 0
        i1 = int(round(end / self.dt_out)) if self.t.size else 0
        if not 0 <= i0 < i1 <= self.t.size:
            raise ValueError(f"window [{start}, {end}) outside trace [0, {self.t[-1] if self.t.size else 0}]")
        return slice(i0, i1)

    def to_csv(self, path, digits: int = 9) -> None:
        fmt = f"{{:.{digits}g}}".format
        cols = [getattr(self, c) for c in TRACE_COLUMNS]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for row in zip(*cols):
                w.writerow([fmt(v) for v in row])

    @classmethod
    def from_csv(cls, path) -> "SimTrace":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        cols = {c: data[:, i] for i, c in enumerate(TRACE_COLUMNS)}
        dt = float(cols["t"][1] - cols["t"][0]) if data.shape[0] > 1 else 0.0
        return cls(dt_out=dt, **cols)


class DiscreteController:
    """PI regulator with optional first-order low-pass filter, backward Euler.

    The output is clamped to ``+-i_max``; while clamped the integrator is
    frozen (conditional integration).
    """

    def __init__(self, gains: ControllerGains, rate: float, i_max: float = 15.0):
        self.k_p = gains.k_p
        self.t_i = gains.t_i
        self.t_f = gains.t_f
        self.ts = 1.0 / rate
        self.i_max = i_max
        self._ki_ts = self.k_p / self.t_i * self.ts
        self._alpha = 1.0 if self.t_f is None else self.ts / (self.t_f + self.ts)
        self.reset()

    def reset(self, integ: float = 0.0, y: float = 0.0) -> None:
        self.integ = integ
        self.y = y

    def step(self, error: float) -> float:
        integ = self.integ + self._ki_ts * error
        u = self.k_p * error + integ
        y = self.y + self._alpha * (u - self.y)
        if y > self.i_max:
            y = self.i_max
        elif y < -self.i_max:
            y = -self.i_max
        else:
            self.integ = integ
        self.y = y
        return y

    def frequency_response(self, omega: float) -> complex:
        """Discrete transfer function of the unclamped controller at ``z = exp(j omega Ts)``."""
        z = np.exp(1j * omega * self.ts)
        pi = self.k_p + self._ki_ts * z / (z - 1.0)
        lf = self._alpha * z / (z - (1.0 - self._alpha))
        return complex(pi * lf)


def _event_steps(cfg: SimConfig, n_steps: int) -> list[tuple[int, LoadEvent]]:
    out = []
    for e in cfg.events:
        k = int(math.ceil(e.time / cfg.sim_dt - 1e-9))
        if k <= n_steps:
            out.append((k, e))
    return out


def simulate(cfg: SimConfig) -> SimTrace:
    """Nonlinear averaged-model run. Deterministic for a given config."""
    return _run(cfg, linear=False, ripple=True)


def simulate_linear(cfg: SimConfig, ripple: bool = True) -> SimTrace:
    """Simplified linear-average run; ``ripple=False`` drops the pulsating grid power."""
    return _run(cfg, linear=True, ripple=ripple)


def _run(cfg: SimConfig, linear: bool, ripple: bool) -> SimTrace:
    p = cfg.plant
    dt = cfg.sim_dt
    n_steps = int(round(cfg.t_end / dt))
    if n_steps == 0:
        return SimTrace(cfg.dt_out, *(np.empty(0) for _ in TRACE_COLUMNS))
    n_tick = cfg.steps_per_tick
    n_rec = cfg.steps_per_sample
    n_out = n_steps // n_rec + 1

    V1, w, L, R, C = p.v_peak, p.omega_s, p.l_s, p.r_s, p.c_o
    vref = p.v_o_ref
    kC = 1.0 / (vref * C)
    iq = cfg.i_q_ref
    first_order = cfg.current_loop == "first_order"
    wc = cfg.current_loop_bandwidth
    cos, sin = math.cos, math.sin

    ctrl = DiscreteController(cfg.gains, cfg.voltage_loop_rate, cfg.i_p_max)

    events = _event_steps(cfg, n_steps)
    ev_i = 0
    load = LoadEvent(0.0)

    out = np.empty((n_out, 7))
    v = cfg.v_start
    i_s = 0.0  # actual line current (first-order model)
    ipf, iqf = 0.0, 0.0  # filtered i_p / i_q (linear model, first-order loop)
    ip = 0.0
    j = 0

    def deriv_nl(t, v, i_s):
        c, s_ = cos(w * t), sin(w * t)
        vs = V1 * c
        iref = ip * c - iq * s_
        if first_order:
            di = wc * (iref - i_s)
            cur = i_s
        else:
            di = -w * (ip * s_ + iq * c)
            cur = iref
        p_in = vs * cur - L * cur * di - R * cur * cur
        return (p_in / v - load.current(v)) / C, di

    def deriv_lin(t, v, ipf, iqf):
        if first_order:
            dip = wc * (ip - ipf)
            diq = wc * (iq - iqf)
            a, b = ipf, iqf
        else:
            dip = diq = 0.0
            a, b = ip, iq
        pw = 0.5 * V1 * a
        if ripple:
            pw += 0.5 * V1 * (a * cos(2 * w * t) - b * sin(2 * w * t))
        return kC * (pw - v * load.current(v)), dip, diq

    for k in range(n_steps + 1):
        t = k * dt
        while ev_i < len(events) and events[ev_i][0] <= k:
            load = events[ev_i][1]
            ev_i += 1
        if k % n_tick == 0:
            ip_old = ip
            ip = ctrl.step(vref - v)
            if not linear and not first_order and ip != ip_old:
                # instantaneous jump of the commanded current moves 0.5 L i^2
                # out of (or into) the bus capacitor
                c, s_ = cos(w * t), sin(w * t)
                i0 = ip_old * c - iq * s_
                i1 = ip * c - iq * s_
                v2 = v * v - L * (i1 * i1 - i0 * i0) / C
                if not v2 > 0:
                    raise SimulationDivergedError("bus voltage collapsed", t)
                v = math.sqrt(v2)
        if k % n_rec == 0:
            c = cos(w * t)
            vs = V1 * c
            if linear:
                a, b = (ipf, iqf) if first_order else (ip, iq)
                cur = a * c - b * sin(w * t)
            else:
                cur = i_s if first_order else ip * c - iq * sin(w * t)
            io = load.current(v)
            out[j] = (t, v, ip, vs, cur, io, v * io)
            j += 1
        if k == n_steps:
            break
        h = dt
        if linear:
            k1 = deriv_lin(t, v, ipf, iqf)
            k2 = deriv_lin(t + h / 2, v + h / 2 * k1[0], ipf + h / 2 * k1[1], iqf + h / 2 * k1[2])
            k3 = deriv_lin(t + h / 2, v + h / 2 * k2[0], ipf + h / 2 * k2[1], iqf + h / 2 * k2[2])
            k4 = deriv_lin(t + h, v + h * k3[0], ipf + h * k3[1], iqf + h * k3[2])
            v += h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            ipf += h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            iqf += h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        else:
            k1 = deriv_nl(t, v, i_s)
            k2 = deriv_nl(t + h / 2, v + h / 2 * k1[0], i_s + h / 2 * k1[1])
            k3 = deriv_nl(t + h / 2, v + h / 2 * k2[0], i_s + h / 2 * k2[1])
            k4 = deriv_nl(t + h, v + h * k3[0], i_s + h * k3[1])
            v += h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            if first_order:
                i_s += h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if not (v > 0 and math.isfinite(v)):
            raise SimulationDivergedError("bus voltage left the positive finite range", t)

    out = out[:j]
    return SimTrace(cfg.dt_out, *(out[:, i].copy() for i in range(7)))


def average_ip_ref(trace: SimTrace, start: float, end: float) -> float:
    """Mean active-current command over ``[start, end)``."""
    return float(np.mean(trace.i_p_ref[trace.window(start, end)]))


def power_balance_residual(trace: SimTrace, plant: VscParams, start: float, end: float) -> float:
    """``mean(v_s i_s) - mean(R i_s^2) - mean(v_o i_o)`` over a window (W)."""
    sl = trace.window(start, end)
    return float(
        np.mean(trace.v_s[sl] * trace.i_s[sl])
        - plant.r_s * np.mean(trace.i_s[sl] ** 2)
        - np.mean(trace.v_o[sl] * trace.i_o[sl])
    )


def disconnect_transient(trace: SimTrace, t_event: float, v_ref: float, band: float = 0.02):
    """Peak bus deviation after ``t_event`` and the time to re-enter ``band`` x peak.

    Returns ``(delta_v_max, settling_time)`` with the settling time measured
    from the event.
    """
    sl = trace.window(t_event, trace.t[-1] + trace.dt_out)
    t = trace.t[sl] - t_event
    e = np.abs(trace.v_o[sl] - v_ref)
    peak = float(e.max())
    outside = np.flatnonzero(e > band * peak)
    settle = math.inf if outside[-1] + 1 >= t.size else float(t[outside[-1] + 1])
    return peak, settle
