import math

import numpy as np
import pytest

from naive_features import naive_pearson
from pulseox import spo2, synth
from pulseox.errors import DcNonPositive, DegenerateIr, TooFewPairs, WindowTooShort
from pulseox.signal_io import FrameSeries
from pulseox.spo2 import (
    GATE_CLAMPED,
    GATE_CORR_REJECTED,
    AcDc,
    CalibrationCurve,
    EnhancedConfig,
)


def sine_series(n=300, dc=1000.0, amp=10.0, flip_red=False):
    k = np.arange(n)
    s = np.sin(2 * np.pi * 5 * k / 100)
    red = dc + (-amp if flip_red else amp) * s
    ir = dc + amp * s
    z = np.zeros(n)
    return FrameSeries(40 * k, red, ir, z, z)


class TestExtractAcDc:
    def test_constant(self):
        r = spo2.extract_ac_dc([5.0] * 20)
        assert r.ac == 0.0
        assert r.dc == 5.0

    def test_ramp(self):
        r = spo2.extract_ac_dc(np.arange(100.0))
        assert r.dc == pytest.approx(49.5, abs=1e-12)
        assert r.ac == pytest.approx(0.0, abs=1e-9)

    def test_sinusoid(self):
        # integer periods, symmetric about the window center so the
        # least-squares line is exactly zero and only the RMS remains
        x = 10.0 + np.cos(2 * np.pi * 5 * (np.arange(100) - 49.5) / 100)
        r = spo2.extract_ac_dc(x)
        assert r.dc == pytest.approx(10.0, abs=1e-12)
        assert r.ac == pytest.approx(1 / math.sqrt(2), abs=1e-6)
        # direct recomputation of the RMS of the detrended samples
        slope, intercept = np.polyfit(np.arange(100), x, 1)
        resid = x - (slope * np.arange(100) + intercept)
        assert r.ac == pytest.approx(math.sqrt(np.mean(resid**2)), abs=1e-12)

    def test_errors(self):
        with pytest.raises(WindowTooShort):
            spo2.extract_ac_dc([1.0] * 7)
        with pytest.raises(DcNonPositive):
            spo2.extract_ac_dc([-5.0] * 20)


class TestComputeR:
    def test_identical(self):
        a = AcDc(ac=0.5, dc=100.0)
        assert spo2.compute_r(a, a) == 1.0

    def test_two_to_one(self):
        assert spo2.compute_r(AcDc(2.0, 100.0), AcDc(1.0, 100.0)) == pytest.approx(2.0)

    def test_degenerate_ir(self):
        with pytest.raises(DegenerateIr):
            spo2.compute_r(AcDc(1.0, 100.0), AcDc(0.0, 100.0))

    def test_synth_embeds_target_ratio(self):
        # target ratio 0.5 <=> saturation y0 - 0.5 m = 97.5 under defaults
        cfg = synth.SynthConfig(duration_s=8.0, target_spo2_pct=97.5, seed=1)
        frames, truth = synth.gen_ppg(cfg)
        assert np.allclose(truth.implied_r, 0.5)
        stats = spo2.window_stats(frames, 100, 100)
        assert len(stats) == 2
        np.testing.assert_allclose(stats.ratio, 0.5, atol=0.01)

    def test_scale_invariance(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            x = rng.uniform(900, 1100, 100)
            ir = AcDc(1.0, 1000.0)
            r1 = spo2.compute_r(spo2.extract_ac_dc(x), ir)
            r2 = spo2.compute_r(spo2.extract_ac_dc(3.7 * x), ir)
            assert abs(r2 / r1 - 1.0) <= 1e-9

    def test_offset_covariance(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(900, 1100, 100)
        ir = AcDc(1.0, 1000.0)
        base = spo2.extract_ac_dc(x)
        shifted = spo2.extract_ac_dc(x + 250.0)
        assert shifted.ac == pytest.approx(base.ac, rel=1e-9)
        assert shifted.dc == pytest.approx(base.dc + 250.0)
        r1 = spo2.compute_r(base, ir)
        r2 = spo2.compute_r(shifted, ir)
        assert r2 == pytest.approx(r1 * base.dc / shifted.dc, rel=1e-12)


class TestSpo2FromR:
    calib = CalibrationCurve(y0=110.0, m=25.0)

    def test_no_clamp(self):
        pct, gates = spo2.spo2_from_r(0.4, self.calib)
        assert pct == 100.0
        assert not gates

    def test_clamped(self):
        pct, gates = spo2.spo2_from_r(0.2, self.calib)
        assert pct == 100.0
        assert gates == {GATE_CLAMPED}

    def test_arithmetic(self):
        pct, gates = spo2.spo2_from_r(0.56, self.calib)
        assert pct == pytest.approx(96.0)
        assert not gates

    def test_monotone_nonincreasing(self):
        rs = np.linspace(0.0, 5.0, 200)
        vals = [spo2.spo2_from_r(r, self.calib)[0] for r in rs]
        assert all(a >= b for a, b in zip(vals, vals[1:]))


class TestBaseline:
    def test_clean_synth_recovery(self):
        cfg = synth.SynthConfig(duration_s=60.0, target_spo2_pct=97.0, seed=2)
        frames, _ = synth.gen_ppg(cfg)
        for est in spo2.baseline_spo2(frames, CalibrationCurve(), step=25):
            assert abs(est.spo2_pct - 97.0) <= 0.5

    def test_short_trace_empty(self):
        s = sine_series(n=50)
        assert spo2.baseline_spo2(s, CalibrationCurve()) == []

    def test_step_equals_window(self):
        s = sine_series(n=300)
        assert len(spo2.baseline_spo2(s, CalibrationCurve(), 100, 100)) == 3


class TestEnhanced:
    def test_identical_waveform_kept(self):
        ests = spo2.enhanced_spo2(sine_series(), CalibrationCurve(), step=100)
        assert all(e.valid for e in ests)

    def test_anticorrelated_rejected(self):
        ests = spo2.enhanced_spo2(sine_series(flip_red=True), CalibrationCurve(), step=100)
        assert all(GATE_CORR_REJECTED in e.gates for e in ests)

    def test_zero_variance_rejected(self):
        z = np.zeros(100)
        s = FrameSeries(40 * np.arange(100), np.full(100, 7.0), np.full(100, 9.0), z, z)
        ests = spo2.enhanced_spo2(s, CalibrationCurve())
        assert all(GATE_CORR_REJECTED in e.gates for e in ests)

    def test_white_noise_rejection_rate(self):
        # independent channels: |r| > 0.4 at n=100 is vanishingly unlikely
        rng = np.random.default_rng(0)
        red = 1000.0 + rng.standard_normal((1000, 100))
        ir = 1000.0 + rng.standard_normal((1000, 100))
        stats = spo2.matrix_stats(red, ir, np.zeros(1000))
        rejected = ~(stats.corr >= EnhancedConfig().corr_threshold)
        assert rejected.mean() >= 0.95

    def test_subset_of_baseline(self):
        cfg = synth.SynthConfig(
            duration_s=60.0,
            seed=3,
            noise_sigma=0.001,
            artifacts=(synth.ArtifactSegment(20.0, 10.0, "motion", 1.5),),
        )
        frames, _ = synth.gen_ppg(cfg)
        base = spo2.baseline_spo2(frames, CalibrationCurve(), step=10)
        enh = spo2.enhanced_spo2(frames, CalibrationCurve(), step=10)
        base_by_t = {e.t_ms: e for e in spo2.emitted(base)}
        enh_emitted = spo2.emitted(enh)
        assert 0 < len(enh_emitted) < len(base_by_t)
        for e in enh_emitted:
            assert e.t_ms in base_by_t
            assert e.spo2_pct == base_by_t[e.t_ms].spo2_pct

    def test_pearson_matches_naive(self):
        rng = np.random.default_rng(11)
        red = rng.uniform(900, 1100, (20, 100))
        ir = rng.uniform(900, 1100, (20, 100))
        stats = spo2.matrix_stats(red, ir, np.zeros(20))
        k = np.arange(100)
        for i in range(20):
            rd = red[i] - np.polyval(np.polyfit(k, red[i], 1), k)
            id_ = ir[i] - np.polyval(np.polyfit(k, ir[i], 1), k)
            assert abs(stats.corr[i] - naive_pearson(list(rd), list(id_))) <= 1e-12


class TestRecalibrate:
    def test_constant_offset_removed(self):
        ref = np.linspace(95.0, 98.0, 40)
        dev = ref + 1.46
        offset, residual = spo2.recalibrate(list(zip(ref, dev)))
        assert offset == pytest.approx(-1.46, abs=1e-12)
        assert residual == pytest.approx(0.0, abs=1e-12)

    def test_identity(self):
        ref = np.linspace(95.0, 98.0, 40)
        offset, _ = spo2.recalibrate(list(zip(ref, ref)))
        assert offset == 0.0

    def test_noisy_offset_concentrates(self):
        rng = np.random.default_rng(4)
        ref = np.full(600, 97.0)
        dev = ref + rng.normal(1.0, 0.1, 600)
        offset, _ = spo2.recalibrate(list(zip(ref, dev)))
        assert abs(-offset - 1.0) <= 0.05

    def test_too_few(self):
        with pytest.raises(TooFewPairs):
            spo2.recalibrate([(97.0, 97.0)] * 9)

    def test_apply_offset(self):
        c = spo2.apply_offset(CalibrationCurve(), -1.46)
        assert c.y0 == pytest.approx(108.54)
        assert c.m == 25.0
