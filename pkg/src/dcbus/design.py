"""DC-bus voltage regulator tuning.

Two schemes are supported:

* ``conventional``: PI regulator, matched to a second-order closed loop
  with natural frequency ``omega_n`` and damping ``xi``.
* ``improved``: PI regulator in series with a first-order low-pass filter,
  tuned by the extended symmetrical optimum. The ratio ``beta = T_i/T_f``
  fixes the phase margin and ``omega_n`` is the open-loop gain crossover.

The estimator :class:`DCBusVoltageTuner` wraps the four-step procedure
(phase margin -> shape parameter -> bandwidth from a ripple-attenuation
target -> gains) behind the scikit-learn parameter API.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator
from sklearn.utils import check_scalar
from sklearn.utils.validation import check_is_fitted

from .lti import TransferFunction, freq_response
from .plant import VscParams

Scheme = Literal["conventional", "improved"]
SCHEMES = ("conventional", "improved")


@dataclass(frozen=True)
class ControllerGains:
    k_p: float
    t_i: float
    t_f: Optional[float] = None

    def __post_init__(self):
        if not (self.k_p > 0 and self.t_i > 0):
            raise ValueError("k_p and t_i must be positive")
        if self.t_f is not None and not self.t_f > 0:
            raise ValueError("t_f must be positive when given")

    @property
    def has_filter(self) -> bool:
        return self.t_f is not None


@dataclass(frozen=True)
class DesignPoint:
    scheme: Scheme
    omega_n: float
    theta_max: float
    gains: ControllerGains
    beta: Optional[float] = None
    xi: Optional[float] = None

    @property
    def f_n(self) -> float:
        return self.omega_n / (2.0 * math.pi)

    @property
    def shape(self) -> float:
        """beta for the improved scheme, xi for the conventional one."""
        return self.beta if self.scheme == "improved" else self.xi


def _check_angle(theta_max):
    check_scalar(theta_max, "theta_max", (int, float), min_val=0.0, max_val=90.0, include_boundaries="neither")


def beta_from_phase_margin(theta_max: float) -> float:
    """Invert ``theta = atan((beta - 1)/(2 sqrt(beta)))`` for ``beta > 1``."""
    _check_angle(theta_max)
    th = math.radians(theta_max)
    return (math.tan(th) + 1.0 / math.cos(th)) ** 2


def phase_margin_from_beta(beta: float) -> float:
    if not beta > 1.0:
        raise ValueError(f"beta must exceed 1, got {beta}")
    return math.degrees(math.atan((beta - 1.0) / (2.0 * math.sqrt(beta))))


def conventional_phase_margin(xi: float) -> float:
    """Phase margin of ``omega_n^2 (1 + 2 xi s/omega_n) / s^2`` in degrees."""
    u = math.sqrt(2.0 * xi**2 + math.sqrt(4.0 * xi**4 + 1.0))
    return math.degrees(math.atan(2.0 * xi * u))


def xi_from_phase_margin(theta_max: float) -> float:
    _check_angle(theta_max)
    lo, hi = 1e-12, 5.0
    if theta_max >= conventional_phase_margin(hi):
        raise ValueError(f"phase margin {theta_max} deg needs xi > {hi}")
    return optimize.bisect(lambda x: conventional_phase_margin(x) - theta_max, lo, hi, xtol=1e-14, rtol=1e-12)


def design_conventional(plant: VscParams, omega_n: float, xi: float) -> DesignPoint:
    check_scalar(omega_n, "omega_n", (int, float), min_val=0.0, include_boundaries="neither")
    check_scalar(xi, "xi", (int, float), min_val=0.0, include_boundaries="neither")
    k_p = 2.0 * xi * omega_n / plant.process_gain
    t_i = 2.0 * xi / omega_n
    return DesignPoint(
        scheme="conventional",
        omega_n=float(omega_n),
        theta_max=conventional_phase_margin(xi),
        gains=ControllerGains(k_p, t_i),
        xi=float(xi),
    )


def design_improved(plant: VscParams, omega_n: float, beta: float) -> DesignPoint:
    check_scalar(omega_n, "omega_n", (int, float), min_val=0.0, include_boundaries="neither")
    theta = phase_margin_from_beta(beta)
    t_f = 1.0 / (math.sqrt(beta) * omega_n)
    k_p = omega_n / plant.process_gain
    return DesignPoint(
        scheme="improved",
        omega_n=float(omega_n),
        theta_max=theta,
        gains=ControllerGains(k_p, beta * t_f, t_f),
        beta=float(beta),
    )


def _gvl(scheme: str, omega_n: float, shape: float) -> TransferFunction:
    w = omega_n
    if scheme == "conventional":
        xi = shape
        return TransferFunction([1.0, 2 * xi / w], [1.0, 2 * xi / w, 1 / w**2])
    if scheme == "improved":
        r = math.sqrt(shape)
        return TransferFunction([1.0, r / w], [1.0, r / w, r / w**2, 1 / w**3])
    raise ValueError(f"unknown scheme {scheme!r}")


def build_gvl(dp: DesignPoint) -> TransferFunction:
    """Closed-loop bus-voltage reference tracking transfer function."""
    return _gvl(dp.scheme, dp.omega_n, dp.shape)


def build_gdp(dp: DesignPoint, plant: VscParams) -> TransferFunction:
    """Bus-power disturbance to bus-voltage transfer function."""
    k = -1.0 / (plant.v_o_ref * plant.c_o)
    w = dp.omega_n
    if dp.scheme == "conventional":
        return TransferFunction([0.0, k / w**2], [1.0, 2 * dp.xi / w, 1 / w**2])
    r = math.sqrt(dp.beta)
    # (r s / w^2) (s / (r w) + 1) = r s / w^2 + s^2 / w^3
    return TransferFunction([0.0, k * r / w**2, k / w**3], [1.0, r / w, r / w**2, 1 / w**3])


def controller_tf(gains: ControllerGains) -> TransferFunction:
    """``K_p (T_i s + 1)/(T_i s)`` optionally followed by ``1/(T_f s + 1)``."""
    num = [gains.k_p, gains.k_p * gains.t_i]
    den = [0.0, gains.t_i]
    tf = TransferFunction(num, den)
    if gains.t_f is not None:
        tf = tf * TransferFunction([1.0], [1.0, gains.t_f])
    return tf


def open_loop(gains: ControllerGains, plant: VscParams, v_scale: float = 1.0) -> TransferFunction:
    """Voltage-loop open loop with the line voltage scaled by ``v_scale``.

    The current loop is taken as unity gain.
    """
    return controller_tf(gains) * TransferFunction([v_scale * plant.process_gain], [0.0, 1.0])


def disturbance_tf(gains: ControllerGains, plant: VscParams, v_scale: float = 1.0) -> TransferFunction:
    """Bus-power to bus-voltage response computed from the loop itself.

    Unlike :func:`build_gdp` this does not assume the gains were designed
    for ``plant``; it is valid for any gain/plant pair.
    """
    L = open_loop(gains, plant, v_scale)
    k = -1.0 / (plant.v_o_ref * plant.c_o)
    # -k/s * 1/(1+L) = -k/s * D/(D+N); D carries a factor s
    d = L.den.coeffs
    if d[0] != 0.0:
        raise ValueError("open loop has no integrator")
    return TransferFunction(np.asarray(d[1:]) * k, (L.den + L.num).coeffs)


def bandwidth_for_attenuation(
    scheme: Scheme,
    shape: float,
    omega_s: float,
    target_mag: float,
    rtol: float = 1e-9,
) -> float:
    """Natural frequency giving ``|G_vl(j 2 omega_s)| = target_mag``.

    ``shape`` is beta (improved) or xi (conventional). The solution is
    searched in ``[2 omega_s / 1000, 2 omega_s]``.
    """
    check_scalar(target_mag, "target_mag", (int, float), min_val=0.0, max_val=1.0, include_boundaries="neither")
    w2 = 2.0 * omega_s

    def excess(wn):
        return freq_response(_gvl(scheme, wn, shape), w2).magnitude - target_mag

    lo, hi = w2 / 1000.0, w2
    f_lo, f_hi = excess(lo), excess(hi)
    if not (f_lo < 0.0 < f_hi):
        raise ValueError(
            f"target |G_vl(j2ws)|={target_mag} not bracketed on [{lo:.4g}, {hi:.4g}] rad/s "
            f"(magnitudes {f_lo + target_mag:.4g}..{f_hi + target_mag:.4g})"
        )
    return optimize.bisect(excess, lo, hi, xtol=1e-12, rtol=rtol)


def ripple_attenuation(dp: DesignPoint, omega_s: float) -> complex:
    """Complex ``G_vl(j 2 omega_s)``."""
    return complex(build_gvl(dp)(2j * omega_s))


class DCBusVoltageTuner(BaseEstimator):
    """Design a DC-bus voltage regulator for a given plant.

    Parameters
    ----------
    scheme : {"improved", "conventional"}
    phase_margin : float, default=45
        Desired phase margin in degrees. Ignored when ``beta`` (improved)
        or ``xi`` (conventional) is given.
    beta, xi : float, optional
        Shape parameter given directly.
    target_i3 : float, default=2.0
        Permitted third-harmonic line current, percent of fundamental.
        Ignored when ``bandwidth_hz`` is given.
    bandwidth_hz : float, optional
        Natural frequency of the loop in Hz.

    Attributes
    ----------
    design_ : DesignPoint
    gains_ : ControllerGains
    gvl_, gdp_ : TransferFunction
    plant_ : VscParams
    """

    def __init__(
        self,
        scheme: Scheme = "improved",
        phase_margin: float = 45.0,
        beta: Optional[float] = None,
        xi: Optional[float] = None,
        target_i3: float = 2.0,
        bandwidth_hz: Optional[float] = None,
    ):
        self.scheme = scheme
        self.phase_margin = phase_margin
        self.beta = beta
        self.xi = xi
        self.target_i3 = target_i3
        self.bandwidth_hz = bandwidth_hz

    def _shape(self) -> float:
        if self.scheme == "improved":
            if self.xi is not None:
                raise ValueError("xi applies to the conventional scheme only")
            return float(self.beta) if self.beta is not None else beta_from_phase_margin(self.phase_margin)
        if self.beta is not None:
            raise ValueError("beta applies to the improved scheme only")
        return float(self.xi) if self.xi is not None else xi_from_phase_margin(self.phase_margin)

    def fit(self, X: Optional[VscParams] = None, y=None):
        """Run the design procedure for plant ``X`` (defaults to the 1.5 kVA rig)."""
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        plant = VscParams() if X is None else X
        if not isinstance(plant, VscParams):
            raise TypeError(f"expected VscParams, got {type(plant).__name__}")
        shape = self._shape()
        if self.bandwidth_hz is not None:
            check_scalar(self.bandwidth_hz, "bandwidth_hz", (int, float), min_val=0.0, include_boundaries="neither")
            omega_n = 2.0 * math.pi * self.bandwidth_hz
        else:
            check_scalar(self.target_i3, "target_i3", (int, float), min_val=0.0, max_val=50.0, include_boundaries="neither")
            omega_n = bandwidth_for_attenuation(self.scheme, shape, plant.omega_s, self.target_i3 / 50.0)
        if self.scheme == "improved":
            dp = design_improved(plant, omega_n, shape)
        else:
            dp = design_conventional(plant, omega_n, shape)
        self.plant_ = plant
        self.design_ = dp
        self.gains_ = dp.gains
        self.gvl_ = build_gvl(dp)
        self.gdp_ = build_gdp(dp, plant)
        return self

    def predict(self, omega) -> np.ndarray:
        """Closed-loop ripple transfer ``|G_vl(j omega)|`` at the given frequencies (rad/s)."""
        check_is_fitted(self, "design_")
        w = np.asarray(omega, dtype=float)
        return np.abs(self.gvl_(1j * w))
