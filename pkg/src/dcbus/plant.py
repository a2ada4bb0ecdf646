"""Converter plant constants."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from sklearn.utils import check_scalar


@dataclass(frozen=True)
class VscParams:
    """Single-phase VSC parameters in SI units.

    Defaults are the 1.5 kVA PWM rectifier used throughout the package
    (230 V / 50 Hz grid, 400 V bus, 1.1 mF).
    """

    v_s_rms: float = 230.0
    omega_s: float = 100.0 * math.pi
    v_o_ref: float = 400.0
    c_o: float = 1.1e-3
    l_s: float = 8.2e-3
    r_s: float = 0.68
    p_o_max: float = 1000.0
    q_max: float = 1000.0
    f_sw: float = 10e3

    def __post_init__(self):
        for name in ("v_s_rms", "omega_s", "v_o_ref", "c_o", "l_s"):
            check_scalar(getattr(self, name), name, (int, float), min_val=0.0, include_boundaries="neither")
        for name in ("r_s", "p_o_max", "q_max", "f_sw"):
            check_scalar(getattr(self, name), name, (int, float), min_val=0.0)
        if self.v_o_ref <= self.v_peak:
            raise ValueError(
                f"v_o_ref={self.v_o_ref} V must exceed the line peak {self.v_peak:.2f} V"
            )

    @property
    def v_peak(self) -> float:
        """Peak fundamental line voltage."""
        return math.sqrt(2.0) * self.v_s_rms

    @property
    def f_grid(self) -> float:
        return self.omega_s / (2.0 * math.pi)

    @property
    def process_gain(self) -> float:
        """Gain ``V1/(2 Vo C)`` from i_p reference to bus-voltage slope."""
        return self.v_peak / (2.0 * self.v_o_ref * self.c_o)

    def with_(self, **changes) -> "VscParams":
        return replace(self, **changes)


RATED_PLANT = VscParams()
