"""Scenario files: flat ``key = value`` sections read with configparser.

Sections
--------
``[plant]``       VscParams fields, SI units (omega_s in rad/s).
``[design]``      scheme, phase_margin or beta/xi, bandwidth_hz or target_i3.
``[gains]``       k_p, t_i[, t_f]; overrides ``[design]`` when present.
``[simulation]``  SimConfig fields; ``current_loop_bandwidth_hz`` in Hz.
``[events]``      ``name = <time_s> <none|resistor|constant_power> [value]``.
``[analysis]``    harmonic_window_start, harmonic_window_cycles, disconnect_time.
"""
from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .design import ControllerGains, DCBusVoltageTuner, DesignPoint
from .plant import VscParams
from .sim import LoadEvent, SimConfig

EXAMPLES = ("design1", "design2", "design3", "design4")

_PLANT_KEYS = {f.name for f in dataclasses.fields(VscParams)}
_SIM_FLOATS = ("t_end", "voltage_loop_rate", "sim_dt", "v_o_init", "i_q_ref", "i_p_max", "dt_out")


@dataclass(frozen=True)
class Scenario:
    name: str
    config: SimConfig
    design: Optional[DesignPoint]
    harmonic_window_start: Optional[float] = None
    harmonic_window_cycles: int = 10
    disconnect_time: Optional[float] = None


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    return cp


def read_plant(cp: configparser.ConfigParser) -> VscParams:
    if not cp.has_section("plant"):
        return VscParams()
    kw = {}
    for k, v in cp.items("plant"):
        if k not in _PLANT_KEYS:
            raise ValueError(f"unknown plant key {k!r}")
        kw[k] = float(v)
    return VscParams(**kw)


def load_plant(path) -> VscParams:
    cp = _parser()
    with open(path) as fh:
        cp.read_file(fh)
    return read_plant(cp)


def _opt_float(sec, key):
    v = sec.get(key)
    return None if v is None or v.strip() == "" else float(v)


def tuner_from_section(sec) -> DCBusVoltageTuner:
    return DCBusVoltageTuner(
        scheme=sec.get("scheme", "improved").strip(),
        phase_margin=float(sec.get("phase_margin", 45.0)),
        beta=_opt_float(sec, "beta"),
        xi=_opt_float(sec, "xi"),
        target_i3=float(sec.get("target_i3", 2.0)),
        bandwidth_hz=_opt_float(sec, "bandwidth_hz"),
    )


def _parse_event(text: str) -> LoadEvent:
    parts = text.split()
    if not 2 <= len(parts) <= 3:
        raise ValueError(f"bad event {text!r}; expected '<time> <kind> [value]'")
    value = float(parts[2]) if len(parts) == 3 else 0.0
    return LoadEvent(float(parts[0]), parts[1], value)


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    cp = _parser()
    cp.read_string(text)
    plant = read_plant(cp)

    design = None
    if cp.has_section("gains"):
        g = cp["gains"]
        gains = ControllerGains(float(g["k_p"]), float(g["t_i"]), _opt_float(g, "t_f"))
    elif cp.has_section("design"):
        design = tuner_from_section(cp["design"]).fit(plant).design_
        gains = design.gains
    else:
        raise ValueError("scenario needs a [gains] or [design] section")

    kw = {}
    if cp.has_section("simulation"):
        s = cp["simulation"]
        for k in s:
            if k in _SIM_FLOATS:
                kw[k] = float(s[k])
            elif k == "current_loop":
                kw[k] = s[k].strip()
            elif k == "current_loop_bandwidth_hz":
                kw["current_loop_bandwidth"] = 2 * math.pi * float(s[k])
            else:
                raise ValueError(f"unknown simulation key {k!r}")
    events = tuple(_parse_event(v) for _, v in cp.items("events")) if cp.has_section("events") else ()
    cfg = SimConfig(plant=plant, gains=gains, events=events, **kw)

    a = cp["analysis"] if cp.has_section("analysis") else {}
    return Scenario(
        name=name,
        config=cfg,
        design=design,
        harmonic_window_start=_opt_float(a, "harmonic_window_start") if a else None,
        harmonic_window_cycles=int(a.get("harmonic_window_cycles", 10)) if a else 10,
        disconnect_time=_opt_float(a, "disconnect_time") if a else None,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), path.stem)


def example_path(name: str):
    """Path to one of the shipped design-example scenarios."""
    if name not in EXAMPLES:
        raise KeyError(f"unknown example {name!r}; choose from {EXAMPLES}")
    return resources.files("dcbus") / "scenarios" / f"{name}.ini"


def load_example(name: str) -> Scenario:
    return parse_scenario(example_path(name).read_text(), name)
