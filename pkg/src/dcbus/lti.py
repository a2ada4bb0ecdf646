"""Continuous-time SISO transfer functions.

Polynomials are stored in ascending powers of ``s`` (``c0 + c1*s + ...``).
Everything here is immutable; operations return new objects.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize

SCAN_RANGE = (1e-3, 1e6)


class PoleOnAxisError(ValueError):
    """Frequency response requested at a pole on the imaginary axis."""


class NoCrossoverError(ValueError):
    pass


class UnstableResponseError(RuntimeError):
    pass


class Polynomial:
    """Real polynomial in ``s`` with ascending-power coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Sequence[float]):
        c = np.atleast_1d(np.asarray(coeffs, dtype=float)).copy()
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        nz = np.flatnonzero(c)
        c = c[: nz[-1] + 1] if nz.size else np.zeros(1)
        c.flags.writeable = False
        self.coeffs = c

    @property
    def degree(self) -> int:
        """Degree; the zero polynomial reports -1."""
        return -1 if self.is_zero else self.coeffs.size - 1

    @property
    def is_zero(self) -> bool:
        return self.coeffs.size == 1 and self.coeffs[0] == 0.0

    @property
    def leading(self) -> float:
        return float(self.coeffs[-1])

    def __call__(self, s):
        return np.polyval(self.coeffs[::-1], s)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        n = max(self.coeffs.size, other.coeffs.size)
        a = np.zeros(n)
        a[: self.coeffs.size] += self.coeffs
        a[: other.coeffs.size] += other.coeffs
        return Polynomial(a)

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return Polynomial(np.convolve(self.coeffs, other.coeffs))
        return Polynomial(self.coeffs * float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Polynomial":
        return Polynomial(-self.coeffs)

    def roots(self) -> np.ndarray:
        if self.degree < 1:
            return np.zeros(0, dtype=complex)
        return np.roots(self.coeffs[::-1])

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash(self.coeffs.tobytes())

    def __repr__(self) -> str:
        return f"Polynomial({self.coeffs.tolist()})"


def _as_poly(p) -> Polynomial:
    return p if isinstance(p, Polynomial) else Polynomial(p)


@dataclass(frozen=True, init=False)
class TransferFunction:
    """Rational transfer function ``num(s)/den(s)``.

    On construction both polynomials are divided by the leading coefficient
    of the denominator, so the stored denominator is monic.
    """

    num: Polynomial
    den: Polynomial

    def __init__(self, num, den):
        num, den = _as_poly(num), _as_poly(den)
        if den.is_zero:
            raise ValueError("denominator is the zero polynomial")
        lead = den.leading
        object.__setattr__(self, "num", num * (1.0 / lead))
        object.__setattr__(self, "den", den * (1.0 / lead))

    @property
    def order(self) -> int:
        return self.den.degree

    @property
    def is_proper(self) -> bool:
        return self.num.degree <= self.den.degree

    @property
    def is_strictly_proper(self) -> bool:
        return self.num.degree < self.den.degree

    def poles(self) -> np.ndarray:
        return self.den.roots()

    def zeros(self) -> np.ndarray:
        return self.num.roots()

    def is_stable(self) -> bool:
        p = self.poles()
        return bool(np.all(p.real < 0)) if p.size else True

    def dc_gain(self) -> float:
        if self.den.coeffs[0] == 0.0:
            raise PoleOnAxisError("pole at s = 0")
        return float(self.num.coeffs[0] / self.den.coeffs[0])

    def __call__(self, s):
        return self.num(s) / self.den(s)

    def __mul__(self, other):
        if isinstance(other, TransferFunction):
            return TransferFunction(self.num * other.num, self.den * other.den)
        return TransferFunction(self.num * float(other), self.den)

    __rmul__ = __mul__

    def __neg__(self):
        return TransferFunction(-self.num, self.den)

    @classmethod
    def from_descending(cls, num, den) -> "TransferFunction":
        """Build from MATLAB/scipy style (highest power first) coefficients."""
        return cls(np.asarray(num, dtype=float)[::-1], np.asarray(den, dtype=float)[::-1])


@dataclass(frozen=True)
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    def evaluate(self, s: complex) -> complex:
        n = self.n_states
        if n == 0:
            return complex(self.D)
        x = np.linalg.solve(s * np.eye(n) - self.A, self.B[:, 0])
        return complex(self.C[0] @ x + self.D)


@dataclass(frozen=True)
class FreqPoint:
    omega: float
    magnitude: float
    magnitude_db: float
    phase_deg: float
    ok: bool = field(default=True)


def _root_phase(tf: TransferFunction, omega: float) -> float:
    # sum of per-root angles is continuous in omega, unlike np.angle of the ratio
    s = 1j * omega
    ph = 0.0 if tf.num.leading > 0 else -math.pi
    ph += float(np.sum(np.angle(s - tf.zeros())))
    ph -= float(np.sum(np.angle(s - tf.poles())))
    return math.degrees(ph)


def _den_vanishes(den: Polynomial, omega: float) -> bool:
    s = 1j * omega
    scale = float(np.sum(np.abs(den.coeffs) * omega ** np.arange(den.coeffs.size)))
    return abs(den(s)) <= 1e-13 * scale


def freq_response(tf: TransferFunction, omega: float) -> FreqPoint:
    """Evaluate ``tf(j*omega)`` in polar form.

    Raises PoleOnAxisError when ``j*omega`` is a pole.
    """
    if omega < 0:
        raise ValueError("omega must be non-negative")
    if _den_vanishes(tf.den, omega):
        raise PoleOnAxisError(f"pole on the imaginary axis at omega={omega:g}")
    h = tf(1j * omega)
    mag = abs(h)
    if omega == 0.0:
        phase = 0.0 if h.real >= 0 else -180.0
    else:
        phase = _root_phase(tf, omega)
    mag_db = 20.0 * math.log10(mag) if mag > 0 else -math.inf
    return FreqPoint(float(omega), float(mag), mag_db, phase)


def bode_sweep(
    tf: TransferFunction,
    omega_min: float,
    omega_max: float,
    points_per_decade: int = 20,
) -> list[FreqPoint]:
    """Log-spaced frequency sweep with continuous (unwrapped) phase.

    Points that land on an imaginary-axis pole are returned with ``ok=False``
    and NaN values; the sweep carries on past them.
    """
    if not 0 < omega_min < omega_max:
        raise ValueError("need 0 < omega_min < omega_max")
    if points_per_decade < 1:
        raise ValueError("points_per_decade must be >= 1")
    decades = math.log10(omega_max / omega_min)
    n = max(2, int(math.ceil(decades * points_per_decade)) + 1)
    out: list[FreqPoint] = []
    prev = None
    for w in np.logspace(math.log10(omega_min), math.log10(omega_max), n):
        try:
            fp = freq_response(tf, float(w))
        except PoleOnAxisError:
            out.append(FreqPoint(float(w), math.nan, math.nan, math.nan, ok=False))
            continue
        ph = fp.phase_deg
        if prev is not None:
            ph -= 360.0 * round((ph - prev) / 360.0)
        prev = ph
        out.append(FreqPoint(fp.omega, fp.magnitude, fp.magnitude_db, ph))
    return out


def write_bode_csv(points: Sequence[FreqPoint], path, digits: int = 9) -> None:
    fmt = f"{{:.{digits}g}}"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq_hz", "mag_db", "phase_deg"])
        for p in points:
            w.writerow([fmt.format(p.omega / (2 * math.pi)), fmt.format(p.magnitude_db), fmt.format(p.phase_deg)])


def gain_crossover(tf_open: TransferFunction, points_per_decade: int = 10) -> float:
    """First frequency in ``SCAN_RANGE`` where ``|tf_open(jw)| = 1``."""
    lo, hi = SCAN_RANGE
    grid = np.logspace(math.log10(lo), math.log10(hi), int(math.log10(hi / lo) * points_per_decade) + 1)

    def logmag(logw):
        return math.log(abs(tf_open(1j * math.exp(logw))))

    prev_w, prev_f = None, None
    for w in grid:
        try:
            f = logmag(math.log(w))
        except (ValueError, ZeroDivisionError):
            prev_w = None
            continue
        if prev_w is not None and (f == 0.0 or (prev_f > 0) != (f > 0)):
            if f == 0.0:
                return float(w)
            root = optimize.brentq(logmag, math.log(prev_w), math.log(w), xtol=1e-12, rtol=1e-12)
            return math.exp(root)
        prev_w, prev_f = w, f
    raise NoCrossoverError(f"no gain crossover in [{lo:g}, {hi:g}] rad/s")


def phase_margin(tf_open: TransferFunction) -> float:
    """Phase margin in degrees, wrapped to (-180, 180]."""
    wc = gain_crossover(tf_open)
    pm = 180.0 + freq_response(tf_open, wc).phase_deg
    pm = (pm + 180.0) % 360.0 - 180.0
    return 180.0 if pm == -180.0 else pm


def close_unity_feedback(tf_open: TransferFunction) -> TransferFunction:
    """``L / (1 + L)`` for an open loop ``L = N/D``."""
    if not tf_open.is_proper:
        raise ValueError("open loop must be proper")
    return TransferFunction(tf_open.num, tf_open.den + tf_open.num)


def to_state_space(tf: TransferFunction) -> StateSpace:
    """Controllable canonical realization."""
    if not tf.is_proper:
        raise ValueError("improper transfer function has no state-space realization")
    n = tf.order
    a = tf.den.coeffs  # monic
    b = np.zeros(n + 1)
    b[: tf.num.coeffs.size] = tf.num.coeffs
    d = b[n] if n >= 0 else 0.0
    bp = b[:n] - d * a[:n]
    A = np.zeros((n, n))
    if n:
        A[:-1, 1:] = np.eye(n - 1)
        A[-1, :] = -a[:n]
    B = np.zeros((n, 1))
    if n:
        B[-1, 0] = 1.0
    C = bp.reshape(1, n)
    return StateSpace(A, B, C, float(d))


class StepResponse(NamedTuple):
    t: np.ndarray
    y: np.ndarray
    dt: float


def _rk4_step_matrices(A: np.ndarray, B: np.ndarray, dt: float):
    # RK4 applied to x' = Ax + Bu with u held constant reduces to a fixed linear map
    n = A.shape[0]
    I = np.eye(n)
    Ah = A * dt
    Ah2 = Ah @ Ah
    Ah3 = Ah2 @ Ah
    phi = I + Ah + Ah2 / 2 + Ah3 / 6 + Ah3 @ Ah / 24
    gam = (I + Ah / 2 + Ah2 / 6 + Ah3 / 24) @ B * dt
    return phi, gam[:, 0]


def _rk4_trace(ss: StateSpace, amplitude: float, dt: float, t_end: float) -> StepResponse:
    n_steps = int(round(t_end / dt))
    t = np.arange(n_steps + 1) * dt
    y = np.empty(n_steps + 1)
    n = ss.n_states
    if n == 0:
        y[:] = ss.D * amplitude
        return StepResponse(t, y, dt)
    phi, gam = _rk4_step_matrices(ss.A, ss.B, dt)
    gam = gam * amplitude
    c = ss.C[0]
    du = ss.D * amplitude
    x = np.zeros(n)
    xs = np.empty((n_steps + 1, n))
    xs[0] = x
    for k in range(n_steps):
        x = phi @ x + gam
        xs[k + 1] = x
        if k % 256 == 0 and not np.all(np.abs(x) < 1e12):
            raise UnstableResponseError(f"state diverged at t={t[k + 1]:.6g} s")
    y[:] = xs @ c + du
    if not np.all(np.abs(y) < 1e12):
        raise UnstableResponseError("output magnitude exceeded 1e12")
    return StepResponse(t, y, dt)


def step_response(
    ss: StateSpace,
    amplitude: float = 1.0,
    dt: float = 1e-3,
    t_end: float = 5.0,
    rtol: float = 1e-3,
    max_halvings: int = 12,
) -> StepResponse:
    """Fixed-step RK4 step response from rest.

    ``dt`` is halved until the peak |y| moves by less than ``rtol``
    (relative) between successive refinements; the finer trace is returned.
    """
    if dt <= 0 or t_end < 0:
        raise ValueError("dt must be positive and t_end non-negative")
    coarse = _rk4_trace(ss, amplitude, dt, t_end)
    for _ in range(max_halvings):
        dt /= 2
        fine = _rk4_trace(ss, amplitude, dt, t_end)
        p0 = np.max(np.abs(coarse.y))
        p1 = np.max(np.abs(fine.y))
        if p1 == 0.0 or abs(p0 - p1) / p1 < rtol:
            return fine
        coarse = fine
    raise RuntimeError("step response did not converge under dt refinement")
