"""Ratio-of-ratios SpO2 estimation.

Two extraction algorithms operate on fixed-length windows of the red and
infrared channels:

* ``baseline`` computes the ratio of ratios on every window with no filtering.
* ``enhanced`` additionally detrends both channels and rejects windows whose
  inter-channel Pearson correlation falls below a threshold; uncorrelated
  channels indicate noise rather than pulse.

AC is defined as the RMS of the least-squares linearly detrended window and DC
as the window mean. The RMS definition is robust to single-sample spikes,
unlike peak-to-peak. The linear map ``spo2 = y0 - m * R`` is the calibration
contract; constants are configuration, nominally supplied per sensor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DcNonPositive, DegenerateIr, TooFewPairs, WindowTooShort
from .signal_io import FrameSeries

MIN_WINDOW = 8

GATE_CORR_REJECTED = "corr_rejected"
GATE_CLAMPED = "out_of_range_clamped"
GATE_DC_INVALID = "dc_invalid"

ALGORITHMS = ("baseline", "enhanced", "pruned")


@dataclass(frozen=True)
class AcDc:
    ac: float
    dc: float


@dataclass(frozen=True)
class CalibrationCurve:
    """First-order fit mapping ratio R to a percentage: spo2 = y0 - m * R."""

    y0: float = 110.0
    m: float = 25.0

    def __post_init__(self):
        if self.m <= 0:
            raise ValueError("calibration slope m must be positive")


@dataclass(frozen=True)
class EnhancedConfig:
    corr_threshold: float = 0.4

    def __post_init__(self):
        if not -1.0 <= self.corr_threshold <= 1.0:
            raise ValueError("corr_threshold must lie in [-1, 1]")


@dataclass(frozen=True)
class Spo2Estimate:
    """One reading: window-end timestamp, ratio, calibrated percentage, flags.

    ``spo2_pct`` is NaN when a gate flag suppressed the value
    (``corr_rejected`` or ``dc_invalid``).
    """

    t_ms: int
    ratio_r: float
    spo2_pct: float
    algorithm: str
    gates: frozenset = field(default_factory=frozenset)

    @property
    def valid(self) -> bool:
        return GATE_CORR_REJECTED not in self.gates and GATE_DC_INVALID not in self.gates


def emitted(estimates) -> list:
    """Estimates that carry an actual reading (no suppressing gate flag)."""
    return [e for e in estimates if e.valid]


def _detrend(x: np.ndarray) -> np.ndarray:
    """Remove the least-squares line from each row of a (n, w) matrix."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    w = x.shape[1]
    k = np.arange(w, dtype=float)
    k0 = k - k.mean()
    denom = np.dot(k0, k0)
    slope = x @ k0 / denom
    mean = x.mean(axis=1)
    return x - mean[:, None] - slope[:, None] * k0[None, :]


def extract_ac_dc(channel_window) -> AcDc:
    """AC (RMS of detrended window) and DC (mean) of one channel window."""
    x = np.asarray(channel_window, dtype=float)
    if x.ndim != 1 or len(x) < MIN_WINDOW:
        raise WindowTooShort(f"need at least {MIN_WINDOW} samples, got {x.shape}")
    if np.isnan(x).any():
        raise DcNonPositive("window contains gap samples")
    dc = float(x.mean())
    if dc <= 0:
        raise DcNonPositive(f"dc={dc}")
    ac = float(np.sqrt(np.mean(_detrend(x)[0] ** 2)))
    return AcDc(ac=ac, dc=dc)


def compute_r(red: AcDc, ir: AcDc) -> float:
    """Ratio of ratios: (red.ac/red.dc) / (ir.ac/ir.dc)."""
    if red.dc <= 0 or ir.dc <= 0:
        raise DcNonPositive("dc must be positive for both channels")
    if ir.ac == 0:
        raise DegenerateIr("infrared channel has no pulsatile component")
    return (red.ac / red.dc) / (ir.ac / ir.dc)


def spo2_from_r(r: float, calib: CalibrationCurve):
    """Calibrated percentage, clamped to [0, 100].

    Returns ``(spo2_pct, gates)``; ``out_of_range_clamped`` is flagged instead
    of rejecting so the reading cadence is preserved while physical
    impossibility stays visible.
    """
    raw = calib.y0 - calib.m * r
    clamped = min(100.0, max(0.0, raw))
    gates = frozenset() if clamped == raw else frozenset({GATE_CLAMPED})
    return clamped, gates


@dataclass
class WindowStats:
    """Vectorized per-window statistics over the two optical channels."""

    t_ms: np.ndarray        # window-end timestamps
    start_idx: np.ndarray
    dc_red: np.ndarray
    dc_ir: np.ndarray
    ac_red: np.ndarray
    ac_ir: np.ndarray
    ratio: np.ndarray       # NaN where dc invalid or ir degenerate
    corr: np.ndarray        # Pearson r of detrended channels, NaN if undefined
    dc_invalid: np.ndarray  # bool: gap in window, dc <= 0, or ir.ac == 0

    def __len__(self):
        return len(self.t_ms)


def matrix_stats(red, ir, t_ms, start_idx=None, has_gap=None) -> WindowStats:
    """Per-window AC/DC, ratio, and correlation from (n, w) channel matrices.

    Matches the scalar operations exactly; exists so that full-trace
    processing over step-1 sliding windows stays fast.
    """
    red = np.atleast_2d(np.asarray(red, dtype=float))
    ir = np.atleast_2d(np.asarray(ir, dtype=float))
    if start_idx is None:
        start_idx = np.arange(len(red))
    if has_gap is None:
        has_gap = np.isnan(red).any(axis=1) | np.isnan(ir).any(axis=1)

    dc_red = red.mean(axis=1)
    dc_ir = ir.mean(axis=1)
    red_d = _detrend(np.nan_to_num(red))
    ir_d = _detrend(np.nan_to_num(ir))
    ac_red = np.sqrt(np.mean(red_d**2, axis=1))
    ac_ir = np.sqrt(np.mean(ir_d**2, axis=1))

    bad = has_gap | ~(dc_red > 0) | ~(dc_ir > 0) | (ac_ir == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (ac_red / dc_red) / (ac_ir / dc_ir)
        denom = np.sqrt(np.sum(red_d**2, axis=1) * np.sum(ir_d**2, axis=1))
        corr = np.sum(red_d * ir_d, axis=1) / denom
    ratio[bad] = np.nan
    corr[denom == 0] = np.nan
    corr[has_gap] = np.nan

    return WindowStats(
        t_ms=np.asarray(t_ms, dtype=np.int64),
        start_idx=np.asarray(start_idx),
        dc_red=dc_red,
        dc_ir=dc_ir,
        ac_red=ac_red,
        ac_ir=ac_ir,
        ratio=ratio,
        corr=corr,
        dc_invalid=bad,
    )


def window_stats(series: FrameSeries, window_len: int = 100, step: int = 1) -> WindowStats:
    """Per-window statistics over every complete window of a stream."""
    if window_len < MIN_WINDOW:
        raise WindowTooShort(f"window_len must be >= {MIN_WINDOW}")
    n = len(series)
    if n < window_len:
        z = np.empty(0)
        return WindowStats(
            z.astype(np.int64), z.astype(int), z, z, z, z, z, z, z.astype(bool)
        )
    starts = np.arange(0, n - window_len + 1, step)
    idx = starts[:, None] + np.arange(window_len)[None, :]
    return matrix_stats(
        series.red[idx],
        series.ir[idx],
        series.t_ms[starts + window_len - 1],
        start_idx=starts,
        has_gap=series.gap[idx].any(axis=1),
    )


def _estimates_from_stats(stats: WindowStats, calib, algorithm, reject=None):
    reject = np.zeros(len(stats), dtype=bool) if reject is None else reject
    out = []
    for i in range(len(stats)):
        gates = set()
        if stats.dc_invalid[i]:
            gates.add(GATE_DC_INVALID)
        if reject[i]:
            gates.add(GATE_CORR_REJECTED)
        if gates:
            out.append(
                Spo2Estimate(
                    int(stats.t_ms[i]), float("nan"), float("nan"), algorithm, frozenset(gates)
                )
            )
            continue
        pct, clamp_gates = spo2_from_r(float(stats.ratio[i]), calib)
        out.append(
            Spo2Estimate(int(stats.t_ms[i]), float(stats.ratio[i]), pct, algorithm, clamp_gates)
        )
    return out


def baseline_spo2(series, calib: CalibrationCurve, window_len: int = 100, step: int = 1):
    """Ratio of ratios on every complete window, no filtering.

    Windows containing gap markers (or a non-positive DC) are emitted with the
    ``dc_invalid`` flag and no value; degenerate windows are flagged, not fatal.
    """
    stats = window_stats(series, window_len, step)
    return _estimates_from_stats(stats, calib, "baseline")


def enhanced_spo2(
    series,
    calib: CalibrationCurve,
    cfg: EnhancedConfig = EnhancedConfig(),
    window_len: int = 100,
    step: int = 1,
):
    """Correlation-gated ratio of ratios.

    Both channels are leveled by least-squares linear detrend; windows whose
    detrended channels correlate below ``cfg.corr_threshold`` are flagged
    ``corr_rejected`` and emit no value. Zero-variance windows have undefined
    correlation and are likewise rejected: a flat trace carries no pulse.
    """
    stats = window_stats(series, window_len, step)
    reject = ~(stats.corr >= cfg.corr_threshold)  # NaN correlation rejects too
    return _estimates_from_stats(stats, calib, "enhanced", reject=reject)


def recalibrate(paired, fit_fraction: float = 0.5):
    """Estimate a constant device bias from the leading part of a session.

    ``paired`` is a sequence of ``(reference_pct, device_pct)``. The offset is
    the mean of (reference - device) over the first ``fit_fraction`` of pairs.
    Returns ``(offset, residual_mad)`` where ``residual_mad`` is the mean
    absolute difference between reference and bias-corrected device readings
    over the held-out remainder (NaN when nothing is held out).
    """
    pairs = np.asarray(paired, dtype=float)
    if len(pairs) < 10:
        raise TooFewPairs(f"need >= 10 pairs, got {len(pairs)}")
    if not 0 < fit_fraction <= 1:
        raise ValueError("fit_fraction must lie in (0, 1]")
    n_fit = max(1, int(round(fit_fraction * len(pairs))))
    ref, dev = pairs[:, 0], pairs[:, 1]
    offset = float(np.mean(ref[:n_fit] - dev[:n_fit]))
    if n_fit < len(pairs):
        residual = float(np.mean(np.abs(ref[n_fit:] - (dev[n_fit:] + offset))))
    else:
        residual = float("nan")
    return offset, residual


def apply_offset(calib: CalibrationCurve, offset: float) -> CalibrationCurve:
    """Shift the calibration intercept by a recalibration offset."""
    return CalibrationCurve(y0=calib.y0 + offset, m=calib.m)


def estimates_to_csv(path, estimates):
    import csv as _csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _csv.writer(fh, lineterminator="\n")
        w.writerow(["t_ms", "algorithm", "ratio_r", "spo2_pct", "gates"])
        for e in estimates:
            w.writerow(
                [e.t_ms, e.algorithm, repr(float(e.ratio_r)), repr(float(e.spo2_pct)), "|".join(sorted(e.gates))]
            )
