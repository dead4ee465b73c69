"""Parsing, validation, and time-alignment of raw sensor streams.

Streams arrive as CSV files written by the capture side (wrist band with
optical + IMU channels, or a fingertip clip with optical channels only).
Everything downstream works on a regularized :class:`FrameSeries`: a columnar
block of samples on a uniform time grid where dropped samples are explicit
gap markers, never interpolated values.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyStream, MalformedHeader, NonMonotonicBeyondTolerance

WRIST_HEADER = ["t_ms", "red", "ir", "ax", "ay", "az", "gx", "gy", "gz"]
FINGERTIP_HEADER = ["t_ms", "red", "ir"]

SITES = ("wrist_top", "wrist_bottom", "fingertip")
SKIN_TONES = ("light", "medium", "dark", "unknown")

#: A grid slot longer than this many sample periods without a source sample is
#: still a gap marker; the constant exists so window invalidation is explicit.
GAP_TOLERANCE_PERIODS = 5

#: Fraction of out-of-order rows above which a capture is considered corrupt.
ORDER_TOLERANCE = 0.01


@dataclass(frozen=True)
class RawRecord:
    """One timestamped multi-channel sample as read from disk."""

    t_ms: int
    red: float
    ir: float
    ax: float = 0.0
    ay: float = 0.0
    az: float = 0.0
    gx: float = 0.0
    gy: float = 0.0
    gz: float = 0.0


@dataclass(frozen=True)
class StreamMeta:
    nominal_rate_hz: float = 25.0
    site: str = "wrist_top"
    subject_id: str = ""
    skin_tone: str = "unknown"

    def __post_init__(self):
        if self.nominal_rate_hz <= 0:
            raise ValueError("nominal_rate_hz must be positive")
        if self.site not in SITES:
            raise ValueError(f"unknown site {self.site!r}")
        if self.skin_tone not in SKIN_TONES:
            raise ValueError(f"unknown skin_tone {self.skin_tone!r}")


@dataclass(frozen=True)
class SensorFrame:
    """One sample with derived motion magnitudes."""

    t_ms: int
    red: float
    ir: float
    accel_mag: float
    gyro_mag: float


@dataclass
class FrameSeries:
    """Columnar frame storage; gap rows carry NaN values and ``gap=True``."""

    t_ms: np.ndarray
    red: np.ndarray
    ir: np.ndarray
    accel_mag: np.ndarray
    gyro_mag: np.ndarray
    gap: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.t_ms = np.asarray(self.t_ms, dtype=np.int64)
        for name in ("red", "ir", "accel_mag", "gyro_mag"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.gap is None:
            self.gap = np.zeros(len(self.t_ms), dtype=bool)
        else:
            self.gap = np.asarray(self.gap, dtype=bool)

    def __len__(self):
        return len(self.t_ms)

    def frame(self, i: int) -> SensorFrame:
        return SensorFrame(
            int(self.t_ms[i]),
            float(self.red[i]),
            float(self.ir[i]),
            float(self.accel_mag[i]),
            float(self.gyro_mag[i]),
        )

    def channel(self, name: str) -> np.ndarray:
        if name not in ("red", "ir", "accel_mag", "gyro_mag"):
            raise KeyError(name)
        return getattr(self, name)

    def slice(self, start: int, stop: int) -> "FrameSeries":
        return FrameSeries(
            self.t_ms[start:stop],
            self.red[start:stop],
            self.ir[start:stop],
            self.accel_mag[start:stop],
            self.gyro_mag[start:stop],
            self.gap[start:stop],
        )


def meta_path(stream_path):
    import pathlib

    return pathlib.Path(stream_path).with_suffix(".meta")


def load_meta(stream_path, default_site="wrist_top") -> StreamMeta:
    """Read the JSON sidecar next to a stream file, or fall back to defaults."""
    p = meta_path(stream_path)
    if not p.exists():
        return StreamMeta(site=default_site)
    with open(p, encoding="utf-8") as fh:
        d = json.load(fh)
    return StreamMeta(
        nominal_rate_hz=float(d.get("rate_hz", 25.0)),
        site=d.get("site", default_site),
        subject_id=d.get("subject_id", ""),
        skin_tone=d.get("skin_tone", "unknown"),
    )


def save_meta(stream_path, meta: StreamMeta):
    doc = {
        "rate_hz": meta.nominal_rate_hz,
        "site": meta.site,
        "subject_id": meta.subject_id,
        "skin_tone": meta.skin_tone,
    }
    with open(meta_path(stream_path), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def parse_stream(path, kind: str):
    """Parse a wrist or fingertip CSV into validated records.

    Returns ``(records, meta, n_dropped)`` where ``n_dropped`` counts malformed
    rows (wrong field count, non-numeric fields, negative optical values).
    Records are sorted by timestamp with duplicate timestamps collapsed to the
    last occurrence. Raises :class:`NonMonotonicBeyondTolerance` when more than
    1% of rows arrive out of order, which signals a corrupt capture rather
    than ordinary jitter.
    """
    if kind not in ("wrist", "fingertip"):
        raise ValueError(f"unknown stream kind {kind!r}")
    expected = WRIST_HEADER if kind == "wrist" else FINGERTIP_HEADER

    rows = []
    dropped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedHeader(f"{path}: empty file")
        if [h.strip() for h in header] != expected:
            raise MalformedHeader(f"{path}: expected header {expected}, got {header}")
        for raw in reader:
            if len(raw) != len(expected):
                dropped += 1
                continue
            try:
                t = int(raw[0])
                vals = [float(v) for v in raw[1:]]
            except ValueError:
                dropped += 1
                continue
            if vals[0] < 0 or vals[1] < 0 or not all(math.isfinite(v) for v in vals):
                dropped += 1
                continue
            rows.append((t, vals))

    out_of_order = sum(1 for a, b in zip(rows, rows[1:]) if b[0] < a[0])
    if rows and out_of_order > ORDER_TOLERANCE * len(rows):
        raise NonMonotonicBeyondTolerance(
            f"{path}: {out_of_order}/{len(rows)} rows out of order"
        )

    # Sort, then collapse duplicate timestamps keeping the last occurrence
    # (append-only capture semantics: later rows supersede earlier ones).
    order = sorted(range(len(rows)), key=lambda i: (rows[i][0], i))
    records = []
    for i in order:
        t, vals = rows[i]
        if kind == "fingertip":
            rec = RawRecord(t, vals[0], vals[1])
        else:
            rec = RawRecord(t, *vals)
        if records and records[-1].t_ms == t:
            records[-1] = rec
        else:
            records.append(rec)

    meta = load_meta(path, default_site="fingertip" if kind == "fingertip" else "wrist_top")
    return records, meta, dropped


def write_stream(path, series: FrameSeries, kind: str, meta: StreamMeta | None = None):
    """Write a frame series in the CSV format :func:`parse_stream` reads.

    Motion magnitudes are stored on the x axes with y/z zeroed, so the
    round-trip through :func:`to_frames` reproduces the magnitudes exactly.
    Gap rows are omitted (a capture never writes samples it did not take).
    """
    header = WRIST_HEADER if kind == "wrist" else FINGERTIP_HEADER
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(series)):
            if series.gap[i]:
                continue
            if kind == "fingertip":
                w.writerow([int(series.t_ms[i]), repr(float(series.red[i])), repr(float(series.ir[i]))])
            else:
                w.writerow(
                    [
                        int(series.t_ms[i]),
                        repr(float(series.red[i])),
                        repr(float(series.ir[i])),
                        repr(float(series.accel_mag[i])),
                        "0.0",
                        "0.0",
                        repr(float(series.gyro_mag[i])),
                        "0.0",
                        "0.0",
                    ]
                )
    if meta is not None:
        save_meta(path, meta)


def to_frames(records) -> FrameSeries:
    """Compute motion-magnitude channels from validated records."""
    n = len(records)
    t = np.fromiter((r.t_ms for r in records), dtype=np.int64, count=n)
    red = np.fromiter((r.red for r in records), dtype=float, count=n)
    ir = np.fromiter((r.ir for r in records), dtype=float, count=n)
    acc = np.fromiter(
        (math.sqrt(r.ax * r.ax + r.ay * r.ay + r.az * r.az) for r in records),
        dtype=float,
        count=n,
    )
    gyr = np.fromiter(
        (math.sqrt(r.gx * r.gx + r.gy * r.gy + r.gz * r.gz) for r in records),
        dtype=float,
        count=n,
    )
    return FrameSeries(t, red, ir, acc, gyr)


def regularize(series: FrameSeries, meta: StreamMeta) -> FrameSeries:
    """Snap frames onto a uniform 1/rate grid via nearest-neighbor picks.

    Grid slots with no source sample within half a sample period become gap
    markers (NaN values, ``gap=True``); values are never interpolated because
    the downstream AC estimate assumes real samples.
    """
    if len(series) < 2:
        raise EmptyStream("need at least 2 frames to regularize")
    period = 1000.0 / meta.nominal_rate_hz
    src_t = series.t_ms[~series.gap].astype(float)
    if len(src_t) < 2:
        raise EmptyStream("need at least 2 non-gap frames to regularize")
    t0 = src_t[0]
    n_slots = int(round((src_t[-1] - t0) / period)) + 1
    grid = t0 + period * np.arange(n_slots)

    # nearest source sample per grid slot
    idx = np.searchsorted(src_t, grid)
    idx = np.clip(idx, 1, len(src_t) - 1)
    left = idx - 1
    pick = np.where(grid - src_t[left] <= src_t[idx] - grid, left, idx)
    dist = np.abs(src_t[pick] - grid)
    ok = dist <= period / 2.0 + 1e-9

    src_rows = np.flatnonzero(~series.gap)[pick]
    t_out = np.rint(grid).astype(np.int64)

    def take(channel):
        out = channel[src_rows].astype(float).copy()
        out[~ok] = np.nan
        return out

    return FrameSeries(
        t_out,
        take(series.red),
        take(series.ir),
        take(series.accel_mag),
        take(series.gyro_mag),
        ~ok,
    )


def load_frames(path, kind: str, regular: bool = True):
    """Convenience loader: parse, derive magnitudes, optionally regularize."""
    records, meta, _ = parse_stream(path, kind)
    frames = to_frames(records)
    if regular:
        frames = regularize(frames, meta)
    return frames, meta
