"""End-to-end orchestration: labeling, training, cross-validation, pruning.

The flow mirrors the measurement protocol: a wrist stream produces one
candidate reading per window; a fingertip stream processed with the enhanced
algorithm provides the reference. A window is labeled reliable when its wrist
reading lands within the reliability threshold of the time-aligned reference.
Training uses non-overlapping windows so feature rows stay independent;
inference slides the window one sample at a time and prunes to windows the
classifier trusts (and which pass the correlation gate).
"""

from __future__ import annotations

import json
import pathlib
from dataclasses import dataclass, field

import numpy as np

from . import features as feats
from . import gbdt, metrics, signal_io, spo2
from .errors import EmptyGroup, InsufficientUserData, NoOverlap, SingleClass


@dataclass(frozen=True)
class LabelConfig:
    reliability_threshold_pct: float = 2.0
    alignment_tolerance_ms: int = 500

    def __post_init__(self):
        if self.reliability_threshold_pct <= 0:
            raise ValueError("reliability threshold must be positive")


@dataclass(frozen=True)
class LabeledWindow:
    t_ms: int
    wrist_estimate: spo2.Spo2Estimate
    reference_pct: float
    reliable: bool


@dataclass(frozen=True)
class CohortSplit:
    train_subjects: frozenset
    test_subjects: frozenset
    train_site: str = "wrist_top"
    test_site: str = "wrist_top"
    group_filter: str | None = None  # skin-tone tag or None


@dataclass
class SubjectData:
    subject_id: str
    wrist: signal_io.FrameSeries
    finger: signal_io.FrameSeries
    meta: signal_io.StreamMeta

    @property
    def site(self):
        return self.meta.site

    @property
    def skin_tone(self):
        return self.meta.skin_tone


@dataclass
class PipelineSettings:
    window: feats.WindowConfig = feats.WindowConfig(window_len=100, step=1)
    label: LabelConfig = LabelConfig()
    gbdt_params: gbdt.GbdtParams = gbdt.GbdtParams()
    calibration: spo2.CalibrationCurve = spo2.CalibrationCurve()
    enhanced: spo2.EnhancedConfig = spo2.EnhancedConfig()
    fdr_q: float = 0.05
    decision_threshold: float = 0.5
    catalog: list = field(default_factory=feats.build_catalog)


# --- alignment and labeling ---------------------------------------------------


def _nearest_reference(wrist_t, ref_t, ref_v, tolerance_ms):
    """Nearest reference value per wrist timestamp; NaN outside tolerance."""
    out = np.full(len(wrist_t), np.nan)
    if len(ref_t) == 0:
        return out
    idx = np.searchsorted(ref_t, wrist_t)
    idx = np.clip(idx, 1, len(ref_t) - 1)
    left = idx - 1
    pick = np.where(wrist_t - ref_t[left] <= ref_t[idx] - wrist_t, left, idx)
    ok = np.abs(ref_t[pick] - wrist_t) <= tolerance_ms
    out[ok] = ref_v[pick[ok]]
    return out


def align_streams(wrist_estimates, finger_estimates, cfg: LabelConfig):
    """Pair each wrist estimate with the nearest fingertip estimate in time.

    Wrist estimates with no reference inside the tolerance are dropped;
    returns ``(pairs, n_dropped)`` where each pair is
    ``(wrist_estimate, reference_pct)``. Raises :class:`NoOverlap` when
    nothing pairs, which signals clock misconfiguration.
    """
    finger_valid = [e for e in finger_estimates if e.valid]
    ref_t = np.array([e.t_ms for e in finger_valid], dtype=float)
    ref_v = np.array([e.spo2_pct for e in finger_valid])
    wrist_t = np.array([e.t_ms for e in wrist_estimates], dtype=float)
    ref = _nearest_reference(wrist_t, ref_t, ref_v, cfg.alignment_tolerance_ms)
    pairs = [
        (e, float(r)) for e, r in zip(wrist_estimates, ref) if not np.isnan(r)
    ]
    if wrist_estimates and not pairs:
        raise NoOverlap("no wrist estimate found a reference within tolerance")
    return pairs, len(wrist_estimates) - len(pairs)


def label_windows(paired, cfg: LabelConfig):
    """Reliable iff |wrist - reference| <= threshold (inclusive)."""
    out = []
    for est, ref in paired:
        reliable = bool(
            est.valid
            and abs(est.spo2_pct - ref) <= cfg.reliability_threshold_pct
        )
        out.append(LabeledWindow(est.t_ms, est, ref, reliable))
    return out


def reference_series(subject: SubjectData, settings: PipelineSettings):
    """Fingertip reference readings: enhanced algorithm, dense enough steps
    that every wrist window finds a reference within the alignment tolerance."""
    period_ms = 1000.0 / subject.meta.nominal_rate_hz
    step = max(1, int(settings.label.alignment_tolerance_ms / period_ms))
    stats = spo2.window_stats(subject.finger, settings.window.window_len, step)
    keep = (stats.corr >= settings.enhanced.corr_threshold) & ~stats.dc_invalid
    pct = np.clip(settings.calibration.y0 - settings.calibration.m * stats.ratio, 0.0, 100.0)
    return stats.t_ms[keep].astype(float), pct[keep]


@dataclass
class StreamAnalysis:
    """Per-window view of one wrist stream at a fixed step.

    Only gap-free windows appear. ``value`` is the ratio-of-ratios reading
    (NaN when DC is invalid), ``gate_pass`` the enhanced correlation gate,
    ``reference`` the aligned fingertip reading (NaN when unmatched), and
    ``label`` reliability where defined (entries without value or reference
    have ``has_label`` False).
    """

    t_ms: np.ndarray
    value: np.ndarray
    gate_pass: np.ndarray
    reference: np.ndarray
    label: np.ndarray
    has_label: np.ndarray
    windows: feats.WindowSet
    span_ms: tuple


def analyze_stream(subject: SubjectData, settings: PipelineSettings, step: int) -> StreamAnalysis:
    wcfg = feats.WindowConfig(settings.window.window_len, step)
    ws = feats.window_stream(subject.wrist, wcfg)
    stats = spo2.matrix_stats(ws.channels["red"], ws.channels["ir"], ws.t_ms, ws.start_idx)
    calib = settings.calibration
    with np.errstate(invalid="ignore"):
        value = np.clip(calib.y0 - calib.m * stats.ratio, 0.0, 100.0)
    gate_pass = (stats.corr >= settings.enhanced.corr_threshold) & ~stats.dc_invalid

    ref_t, ref_v = reference_series(subject, settings)
    reference = _nearest_reference(ws.t_ms.astype(float), ref_t, ref_v, settings.label.alignment_tolerance_ms)
    has_label = ~np.isnan(value) & ~np.isnan(reference)
    with np.errstate(invalid="ignore"):
        label = np.abs(value - reference) <= settings.label.reliability_threshold_pct
    label &= has_label
    span = (int(subject.wrist.t_ms[0]), int(subject.wrist.t_ms[-1]))
    return StreamAnalysis(ws.t_ms, value, gate_pass, reference, label, has_label, ws, span)


# --- training -----------------------------------------------------------------


def subject_training_rows(subject: SubjectData, settings: PipelineSettings, catalog=None, max_ms=None):
    """Non-overlapping labeled feature rows for one subject.

    ``max_ms`` truncates to windows ending within the first ``max_ms`` of the
    stream (used for per-user calibration prefixes).
    """
    catalog = settings.catalog if catalog is None else catalog
    analysis = analyze_stream(subject, settings, step=settings.window.window_len)
    keep = analysis.has_label
    if max_ms is not None:
        keep = keep & (analysis.t_ms <= analysis.span_ms[0] + max_ms)
    ws = analysis.windows
    sub = feats.WindowSet(
        ws.t_ms[keep],
        ws.start_idx[keep],
        {c: m[keep] for c, m in ws.channels.items()},
    )
    X = feats.extract_matrix(sub, catalog)
    y = analysis.label[keep].astype(int)
    return X, y


def build_training_set(subjects, settings: PipelineSettings):
    """Stack non-overlapping labeled rows across subjects -> (X, y)."""
    blocks = [subject_training_rows(s, settings) for s in subjects]
    X = np.vstack([b[0] for b in blocks]) if blocks else np.empty((0, len(settings.catalog)))
    y = np.concatenate([b[1] for b in blocks]) if blocks else np.empty(0, dtype=int)
    return X, y


def train_model(X, y, settings: PipelineSettings, training_meta=None):
    """Feature selection (Mann-Whitney + BH) followed by GBDT training.

    If selection keeps nothing, the full catalog is used; a classifier with no
    inputs is worse than one with unselected ones.
    """
    selection = feats.select_features(X, y, settings.catalog, settings.fdr_q)
    kept = selection.kept if selection.kept else list(settings.catalog)
    cols = [settings.catalog.index(s) for s in kept]
    model = gbdt.train(
        X[:, cols],
        y,
        settings.gbdt_params,
        feature_catalog=kept,
        training_meta=dict(
            training_meta or {},
            label_threshold=settings.label.reliability_threshold_pct,
        ),
    )
    return model, selection


# --- inference and evaluation -------------------------------------------------


def _predict(analysis: StreamAnalysis, model: gbdt.GbdtModel, settings: PipelineSettings):
    X = feats.extract_matrix(analysis.windows, model.feature_catalog)
    proba = model.predict_proba_batch(X)
    return proba >= settings.decision_threshold


def prune(series, model, settings: PipelineSettings, subject_meta=None):
    """Sliding-window pruned readings: emit the enhanced-algorithm value for
    windows that pass both the correlation gate and the classifier."""
    wcfg = feats.WindowConfig(settings.window.window_len, 1)
    ws = feats.window_stream(series, wcfg)
    stats = spo2.matrix_stats(ws.channels["red"], ws.channels["ir"], ws.t_ms, ws.start_idx)
    gate_pass = (stats.corr >= settings.enhanced.corr_threshold) & ~stats.dc_invalid
    X = feats.extract_matrix(ws, model.feature_catalog)
    positive = model.predict_proba_batch(X) >= settings.decision_threshold
    emit = gate_pass & positive
    out = []
    for i in np.flatnonzero(emit):
        pct, gates = spo2.spo2_from_r(float(stats.ratio[i]), settings.calibration)
        out.append(
            spo2.Spo2Estimate(int(stats.t_ms[i]), float(stats.ratio[i]), pct, "pruned", gates)
        )
    return out


def evaluate_subject(subject: SubjectData, model, settings: PipelineSettings, group="") -> metrics.EvalReport:
    analysis = analyze_stream(subject, settings, step=1)
    positive = _predict(analysis, model, settings)
    emit = positive & analysis.gate_pass

    def pair_set(mask):
        mask = mask & ~np.isnan(analysis.value) & ~np.isnan(analysis.reference)
        return np.column_stack([analysis.value[mask], analysis.reference[mask]])

    all_windows = np.ones(len(analysis.t_ms), dtype=bool)
    labeled = analysis.has_label
    tp, fp, tn, fn = metrics.confusion(analysis.label[labeled], emit[labeled])

    report = metrics.EvalReport(
        subject_id=subject.subject_id,
        site=subject.site,
        group=group or subject.skin_tone,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        precision=metrics.precision(analysis.label[labeled], emit[labeled]),
        rmse_baseline=metrics.rmse_or_none(pair_set(all_windows)),
        rmse_enhanced=metrics.rmse_or_none(pair_set(analysis.gate_pass)),
        rmse_pruned=metrics.rmse_or_none(pair_set(emit)),
        max_silent_interval_s=metrics.max_silent_interval(
            analysis.t_ms[emit], analysis.span_ms
        ),
        n_emitted=int(emit.sum()),
    )
    report.extras["n_labeled"] = int(labeled.sum())
    report.extras["abs_errors_pruned"] = [
        float(v) for v in np.abs(pair_set(emit)[:, 0] - pair_set(emit)[:, 1])
    ]
    return report


def run_loocv(subjects, settings: PipelineSettings):
    """Leave-one-subject-out: train on all others, evaluate on the hold-out.

    Folds that cannot train (single-class training set) are reported with a
    diagnostic instead of aborting the run. Reports come back sorted by
    subject id, independent of input order.
    """
    subjects = sorted(subjects, key=lambda s: s.subject_id)
    if len(subjects) < 2:
        raise EmptyGroup("leave-one-out needs at least 2 subjects")
    rows = {s.subject_id: subject_training_rows(s, settings) for s in subjects}
    reports = []
    for held in subjects:
        train_ids = [s.subject_id for s in subjects if s.subject_id != held.subject_id]
        X = np.vstack([rows[i][0] for i in train_ids])
        y = np.concatenate([rows[i][1] for i in train_ids])
        try:
            model, _ = train_model(X, y, settings, training_meta={"held_out": held.subject_id})
        except SingleClass as e:
            r = metrics.EvalReport(subject_id=held.subject_id, site=held.site)
            r.extras["skipped"] = f"single-class training set: {e}"
            reports.append(r)
            continue
        reports.append(evaluate_subject(held, model, settings))
    return reports


def run_group_experiment(split: CohortSplit, subjects, settings: PipelineSettings):
    """Train on the train-side subjects, evaluate every test-side subject."""
    by_id = {s.subject_id: s for s in subjects}
    train = [by_id[i] for i in sorted(split.train_subjects) if i in by_id]
    test = [by_id[i] for i in sorted(split.test_subjects) if i in by_id]
    if split.group_filter:
        train = [s for s in train if s.skin_tone == split.group_filter]
    if not train or not test:
        raise EmptyGroup("both sides of the split must be nonempty")
    X, y = build_training_set(train, settings)
    model, _ = train_model(X, y, settings)
    group = f"{split.train_site}->{split.test_site}"
    return [evaluate_subject(s, model, settings, group=group) for s in test]


def calibrate_user(base_X, base_y, user: SubjectData, minutes: float, settings: PipelineSettings):
    """Retrain from scratch with the user's first ``minutes`` of labeled
    non-overlapping windows appended to the base training set."""
    span_ms = int(user.wrist.t_ms[-1] - user.wrist.t_ms[0])
    if span_ms < minutes * 60_000:
        raise InsufficientUserData(
            f"user stream spans {span_ms / 60000:.1f} min < {minutes} min"
        )
    if minutes > 0:
        Xu, yu = subject_training_rows(user, settings, max_ms=int(minutes * 60_000))
        X = np.vstack([base_X, Xu])
        y = np.concatenate([base_y, yu])
    else:
        X, y = base_X, base_y
    model, _ = train_model(X, y, settings, training_meta={"calibration_minutes": minutes})
    return model


def sweep(axis: str, values, subjects, settings: PipelineSettings):
    """One full leave-one-out run per value of the swept knob.

    Returns rows of ``(value, mean precision, mean pruned RMSE, mean max
    silent interval, mean enhanced RMSE, total training rows)``.
    """
    if axis not in ("window_len", "reliability_threshold"):
        raise ValueError(f"unknown sweep axis {axis!r}")
    if not values:
        raise ValueError("sweep needs at least one value")
    rows = []
    for v in values:
        if axis == "window_len":
            s = replace_settings(settings, window=feats.WindowConfig(int(v), settings.window.step))
        else:
            s = replace_settings(
                settings,
                label=LabelConfig(float(v), settings.label.alignment_tolerance_ms),
            )
        reports = run_loocv(subjects, s)
        prec, _ = metrics.aggregate([r.precision for r in reports])
        rmse_p, _ = metrics.aggregate([r.rmse_pruned for r in reports])
        rmse_e, _ = metrics.aggregate([r.rmse_enhanced for r in reports])
        silent, _ = metrics.aggregate([r.max_silent_interval_s for r in reports])
        n_rows = sum(r.extras.get("n_labeled", 0) for r in reports)
        rows.append(
            {
                "value": float(v),
                "precision": prec,
                "rmse_pruned": rmse_p,
                "rmse_enhanced": rmse_e,
                "max_silent_s": silent,
                "n_labeled": n_rows,
            }
        )
    return rows


def sweep_to_csv(path, rows):
    import csv as _csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "precision", "rmse_pruned", "rmse_enhanced", "max_silent_s", "n_labeled"])
        for r in rows:
            w.writerow(
                [
                    repr(r["value"]),
                    "" if r["precision"] is None else repr(r["precision"]),
                    "" if r["rmse_pruned"] is None else repr(r["rmse_pruned"]),
                    "" if r["rmse_enhanced"] is None else repr(r["rmse_enhanced"]),
                    "" if r["max_silent_s"] is None else repr(r["max_silent_s"]),
                    str(r["n_labeled"]),
                ]
            )


def replace_settings(settings: PipelineSettings, **kwargs) -> PipelineSettings:
    d = dict(
        window=settings.window,
        label=settings.label,
        gbdt_params=settings.gbdt_params,
        calibration=settings.calibration,
        enhanced=settings.enhanced,
        fdr_q=settings.fdr_q,
        decision_threshold=settings.decision_threshold,
        catalog=settings.catalog,
    )
    d.update(kwargs)
    return PipelineSettings(**d)


# --- experiment config --------------------------------------------------------


def load_experiment(config_path):
    """Load an experiment config JSON plus its cohort streams.

    Returns ``(subjects, settings)``. Stream paths are resolved relative to
    the config file's directory; stream metadata comes from the sidecars.
    """
    config_path = pathlib.Path(config_path)
    with open(config_path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    base = config_path.parent

    calib_d = cfg.get("calibration", {})
    win_d = cfg.get("window", {})
    lab_d = cfg.get("label", {})
    params_d = cfg.get("gbdt_params", {})
    if "seed" in cfg and "seed" not in params_d:
        params_d["seed"] = cfg["seed"]
    settings = PipelineSettings(
        window=feats.WindowConfig(
            win_d.get("window_len", 100), win_d.get("step", 1)
        ),
        label=LabelConfig(
            lab_d.get("reliability_threshold_pct", 2.0),
            lab_d.get("alignment_tolerance_ms", 500),
        ),
        gbdt_params=gbdt.GbdtParams(**params_d),
        calibration=spo2.CalibrationCurve(
            calib_d.get("y0", 110.0), calib_d.get("m", 25.0)
        ),
        fdr_q=cfg.get("fdr_q", 0.05),
        decision_threshold=cfg.get("decision_threshold", 0.5),
    )

    subjects = []
    for entry in cfg["cohort"]:
        wrist_path = base / entry["wrist_csv"]
        finger_path = base / entry["finger_csv"]
        wrist, meta = signal_io.load_frames(wrist_path, "wrist")
        finger, _ = signal_io.load_frames(finger_path, "fingertip")
        sid = entry.get("subject_id", meta.subject_id or wrist_path.stem)
        subjects.append(SubjectData(sid, wrist, finger, meta))
    return subjects, settings
