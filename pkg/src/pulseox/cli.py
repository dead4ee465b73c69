"""Command-line interface.

Subcommands wrap the library end to end: ``simulate`` writes a synthetic
cohort, ``spo2`` runs an extraction algorithm over one stream, ``train``
fits and saves a classifier, ``evaluate`` runs leave-one-subject-out (or a
fixed model) over a cohort, ``prune`` emits classifier-filtered readings,
``sweep`` scans a hyperparameter. Every run writes a ``manifest.json`` into
its output directory recording the resolved config, seed, and component
versions so the run can be reproduced exactly.

Exit codes: 0 success, 1 I/O error, 2 config error.
"""

from __future__ import annotations

import argparse
import json
import pathlib
import sys

import numpy as np
import scipy

from . import __version__, features, gbdt, metrics, pipeline, signal_io, spo2, synth
from .errors import PulseoxError

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2


def _write_manifest(out_dir, command, config, seed):
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": command,
        "config": config,
        "seed": seed,
        "versions": {
            "pulseox": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def cmd_simulate(args):
    cfg = _load_json(args.config)
    n = int(cfg.get("n_subjects", 10))
    base = synth.SynthConfig(
        duration_s=float(cfg.get("duration_s", 720.0)),
        rate_hz=float(cfg.get("rate_hz", 25.0)),
    )
    calib_d = cfg.get("calibration", {})
    calib = spo2.CalibrationCurve(calib_d.get("y0", 110.0), calib_d.get("m", 25.0))
    seed = int(cfg.get("seed", args.seed))
    config = synth.gen_cohort(n, args.out_dir, base, variation_seed=seed, calib=calib)
    _write_manifest(args.out_dir, "simulate", cfg, seed)
    print(f"wrote {n} subjects to {args.out_dir}")
    for entry in config["cohort"]:
        print(f"  {entry['subject_id']}: {entry['wrist_csv']} / {entry['finger_csv']}")
    return EXIT_OK


def cmd_spo2(args):
    frames, meta = signal_io.load_frames(args.stream, args.kind)
    calib = spo2.CalibrationCurve(args.y0, args.m)
    if args.algo == "baseline":
        estimates = spo2.baseline_spo2(frames, calib, args.window, args.step)
    else:
        estimates = spo2.enhanced_spo2(frames, calib, window_len=args.window, step=args.step)
    spo2.estimates_to_csv(args.out, estimates)
    valid = spo2.emitted(estimates)
    rate = 1.0 - len(valid) / len(estimates) if estimates else 0.0
    mean = float(np.mean([e.spo2_pct for e in valid])) if valid else float("nan")
    print(f"windows={len(estimates)} emitted={len(valid)} rejection_rate={rate:.3f} mean_spo2={mean:.2f}")
    return EXIT_OK


def cmd_train(args):
    subjects, settings = pipeline.load_experiment(args.config)
    X, y = pipeline.build_training_set(subjects, settings)
    model, selection = pipeline.train_model(X, y, settings)
    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gbdt.save(model, out / "model.json")
    with open(out / "selection.json", "w", encoding="utf-8") as fh:
        json.dump(selection.to_json_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    _write_manifest(out, "train", _load_json(args.config), settings.gbdt_params.seed)
    print(f"trained on {len(X)} rows; kept {len(model.feature_catalog)}/{len(settings.catalog)} features")
    return EXIT_OK


def cmd_evaluate(args):
    subjects, settings = pipeline.load_experiment(args.config)
    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.model:
        model = gbdt.load(args.model)
        reports = [pipeline.evaluate_subject(s, model, settings) for s in subjects]
    else:
        reports = pipeline.run_loocv(subjects, settings)
    ok = [r for r in reports if "skipped" not in r.extras]
    if not ok:
        print("all folds failed", file=sys.stderr)
        return EXIT_IO
    metrics.reports_to_csv(out / "reports.csv", reports)
    for r in reports:
        with open(out / f"report_{r.subject_id}.json", "w", encoding="utf-8") as fh:
            json.dump(r.to_json_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")
    _write_manifest(out, "evaluate", _load_json(args.config), settings.gbdt_params.seed)
    prec, skipped = metrics.aggregate([r.precision for r in ok])
    rmse_p, _ = metrics.aggregate([r.rmse_pruned for r in ok])
    rmse_e, _ = metrics.aggregate([r.rmse_enhanced for r in ok])
    rmse_b, _ = metrics.aggregate([r.rmse_baseline for r in ok])
    print(f"folds={len(reports)} ok={len(ok)}")
    print(f"mean precision={prec} (skipped {skipped} undefined)")
    print(f"mean rmse baseline={rmse_b} enhanced={rmse_e} pruned={rmse_p}")
    return EXIT_OK


def cmd_prune(args):
    frames, meta = signal_io.load_frames(args.stream, "wrist")
    model = gbdt.load(args.model)
    settings = pipeline.PipelineSettings(
        calibration=spo2.CalibrationCurve(args.y0, args.m),
        decision_threshold=args.threshold,
    )
    readings = pipeline.prune(frames, model, settings, subject_meta=meta)
    spo2.estimates_to_csv(args.out, readings)
    print(f"emitted {len(readings)} readings")
    return EXIT_OK


def cmd_sweep(args):
    subjects, settings = pipeline.load_experiment(args.config)
    values = [float(v) for v in args.values]
    rows = pipeline.sweep(args.axis, values, subjects, settings)
    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.sweep_to_csv(out / "sweep.csv", rows)
    _write_manifest(out, "sweep", {"axis": args.axis, "values": values, "config": _load_json(args.config)}, settings.gbdt_params.seed)
    for r in rows:
        print(r)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="pulseox", description=__doc__.split("\n")[0])
    p.add_argument("--seed", type=int, default=0, help="global seed fallback")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic cohort")
    s.add_argument("config", help="JSON config: n_subjects, duration_s, rate_hz, seed, calibration")
    s.add_argument("out_dir")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("spo2", help="run an extraction algorithm over one stream")
    s.add_argument("stream")
    s.add_argument("out")
    s.add_argument("--algo", choices=["baseline", "enhanced"], default="enhanced")
    s.add_argument("--kind", choices=["wrist", "fingertip"], default="wrist")
    s.add_argument("--window", type=int, default=100)
    s.add_argument("--step", type=int, default=1)
    s.add_argument("--y0", type=float, default=110.0)
    s.add_argument("--m", type=float, default=25.0)
    s.set_defaults(func=cmd_spo2)

    s = sub.add_parser("train", help="train a reliability classifier from an experiment config")
    s.add_argument("config")
    s.add_argument("out_dir")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="leave-one-subject-out (or fixed-model) evaluation")
    s.add_argument("config")
    s.add_argument("out_dir")
    s.add_argument("--model", help="evaluate this model file instead of running LOOCV")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("prune", help="classifier-filtered readings for one stream")
    s.add_argument("stream")
    s.add_argument("model")
    s.add_argument("out")
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--y0", type=float, default=110.0)
    s.add_argument("--m", type=float, default=25.0)
    s.set_defaults(func=cmd_prune)

    s = sub.add_parser("sweep", help="scan window length or reliability threshold")
    s.add_argument("axis", choices=["window_len", "reliability_threshold"])
    s.add_argument("config")
    s.add_argument("out_dir")
    s.add_argument("values", nargs="+")
    s.set_defaults(func=cmd_sweep)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, json.JSONDecodeError, KeyError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, PulseoxError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
