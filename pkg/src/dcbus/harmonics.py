"""Synchronous DFT harmonic analysis of line-current traces."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .sim import SimTrace

THD_MAX_ORDER = 40
REPORTED_ORDERS = (3, 5, 7, 9)


@dataclass(frozen=True)
class HarmonicReport:
    fundamental_peak: float
    harmonics: dict[int, float]
    thd_percent: float
    # two-sided DFT of the window, normalised by the sample count
    spectrum: np.ndarray = field(repr=False, compare=False, default=None)

    def __getitem__(self, order: int) -> float:
        return self.harmonics[order]


def harmonic_amplitudes(x: np.ndarray, window_cycles: int, max_order: int = THD_MAX_ORDER) -> np.ndarray:
    """Peak amplitude of harmonics ``0..max_order`` of an integer-cycle window.

    ``x`` must span exactly ``window_cycles`` fundamental periods, so
    harmonic ``n`` sits on DFT bin ``n * window_cycles``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if max_order * window_cycles >= n // 2:
        raise ValueError(f"sampling too coarse for order {max_order}: {n} samples over {window_cycles} cycles")
    X = np.fft.rfft(x) / n
    amp = 2.0 * np.abs(X[: max_order * window_cycles + 1 : window_cycles])
    amp[0] /= 2.0
    return amp


def _report(amp: np.ndarray, orders: Sequence[int], spectrum=None) -> HarmonicReport:
    fund = amp[1]
    if fund == 0.0:
        raise ValueError("fundamental component is zero")
    pct = 100.0 * amp / fund
    thd = math.sqrt(float(np.sum(pct[2:] ** 2)))
    return HarmonicReport(float(fund), {n: float(pct[n]) for n in orders}, thd, spectrum)


def analyze_signal(
    x: np.ndarray,
    fs: float,
    f0: float,
    window_cycles: int,
    orders: Sequence[int] = REPORTED_ORDERS,
    max_order: int = THD_MAX_ORDER,
) -> HarmonicReport:
    if window_cycles < 1:
        raise ValueError("window_cycles must be positive")
    n_exact = window_cycles * fs / f0
    n = int(round(n_exact))
    if abs(n - n_exact) > 0.5:
        raise ValueError("window is not an integer number of fundamental cycles")
    if len(x) != n:
        raise ValueError(f"expected {n} samples for {window_cycles} cycles, got {len(x)}")
    x = np.asarray(x, dtype=float)
    return _report(harmonic_amplitudes(x, window_cycles, max_order), orders, np.fft.fft(x) / n)


def analyze_harmonics(
    trace: SimTrace,
    column: str = "i_s",
    window_cycles: int = 10,
    f0: float = 50.0,
    start: float | None = None,
    orders: Sequence[int] = REPORTED_ORDERS,
) -> HarmonicReport:
    """Harmonic content of one trace column over ``window_cycles`` periods.

    The window starts at ``start`` (default: the last full window of the
    trace). Rectangular window, so it must hold an integer number of cycles
    to avoid leakage.
    """
    if window_cycles < 10:
        raise ValueError("window_cycles must be at least 10")
    span = window_cycles / f0
    if start is None:
        start = trace.t[-1] + trace.dt_out - span
    x = trace.column(column)[trace.window(start, start + span)]
    return analyze_signal(x, 1.0 / trace.dt_out, f0, window_cycles, orders)


def compare_prediction(report: HarmonicReport, predicted_i3: float) -> float:
    """Measured minus predicted third harmonic, percentage points."""
    return report.harmonics[3] - predicted_i3


HARMONIC_COLUMNS = ("design_id", "i1_peak_a", "i3_pct", "i5_pct", "i7_pct", "i9_pct", "thd_pct")


def write_harmonics_csv(rows: Sequence[tuple[str, HarmonicReport]], path, digits: int = 9) -> None:
    fmt = f"{{:.{digits}g}}".format
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HARMONIC_COLUMNS)
        for name, r in rows:
            w.writerow([name, fmt(r.fundamental_peak)] + [fmt(r.harmonics.get(n, math.nan)) for n in (3, 5, 7, 9)] + [fmt(r.thd_percent)])


class HarmonicAnalyzer(TransformerMixin, BaseEstimator):
    """Map integer-cycle signal windows to harmonic percentages.

    Each row of ``X`` is one window of uniformly sampled signal covering
    ``window_cycles`` fundamental periods. ``transform`` returns one row per
    window: the percentages for ``orders`` followed by THD.

    >>> t = np.arange(2000) / 10e3
    >>> X = np.cos(2 * np.pi * 50 * t) + 0.05 * np.cos(2 * np.pi * 150 * t)
    >>> HarmonicAnalyzer().fit_transform(X[None, :]).round(6)[0, :2]
    array([5., 0.])
    """

    def __init__(self, window_cycles: int = 10, orders: Sequence[int] = REPORTED_ORDERS, max_order: int = THD_MAX_ORDER):
        self.window_cycles = window_cycles
        self.orders = orders
        self.max_order = max_order

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_features=2 * self.max_order * self.window_cycles + 2)
        if max(self.orders) > self.max_order:
            raise ValueError("reported orders exceed max_order")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} samples per window, expected {self.n_features_in_}")
        out = np.empty((X.shape[0], len(self.orders) + 1))
        for i, row in enumerate(X):
            r = _report(harmonic_amplitudes(row, self.window_cycles, self.max_order), self.orders)
            out[i, :-1] = [r.harmonics[n] for n in self.orders]
            out[i, -1] = r.thd_percent
        return out

    def get_feature_names_out(self, input_features=None):
        return np.array([f"i{n}_pct" for n in self.orders] + ["thd_pct"], dtype=object)
