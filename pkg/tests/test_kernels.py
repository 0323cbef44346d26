"""DSP kernels: oscillators, noise, filters, STFT, envelope, filterbank."""

import numpy as np
import pytest

from soundmatch import dual as dn
from soundmatch import kernels as K
from soundmatch.dual import lift

SR = K.SAMPLE_RATE


class TestSineOsc:
    def test_zero_frequency_is_silence(self):
        assert np.all(K.sine_osc(0.0, 64) == 0.0)

    def test_quarter_period_steps(self):
        out = K.sine_osc(SR / 4, 4)
        assert np.allclose(out, [1.0, 0.0, -1.0, 0.0], atol=1e-12)

    def test_output_range(self):
        out = K.sine_osc(440.0)
        assert np.all(np.abs(out) <= 1.0)

    def test_dual_partial_matches_phase_ramp(self):
        # finite-difference oracle on the frequency
        f, eps, n = 313.7, 1e-3, 2000
        d = K.sine_osc(lift(f, 0), n)
        fd = (K.sine_osc(f + eps, n) - K.sine_osc(f - eps, n)) / (2 * eps)
        denom = np.maximum(np.abs(fd), 1e-6)
        assert np.max(np.abs(d.partials[0] - fd) / denom) <= 1e-2

    def test_length_validation(self):
        with pytest.raises(ValueError):
            K.sine_osc(440.0, 0)


class TestSawOsc:
    def test_zero_frequency(self):
        assert np.all(K.saw_osc(0.0, 16) == 0.0)

    def test_quarter_period_accumulation(self):
        assert np.allclose(K.saw_osc(SR / 4, 4), [0.25, 0.5, 0.75, 0.0], atol=1e-12)

    def test_range_half_open(self):
        rng = np.random.default_rng(0)
        for f in rng.uniform(20, 1000, 8):
            out = K.saw_osc(f, 4096)
            assert np.all(out >= 0.0) and np.all(out < 1.0)

    def test_dual_partial_away_from_wraps(self):
        # mask samples whose phase wraps inside the stencil; frac jumps carry
        # no gradient by convention
        f, eps, n = 500.0, 1e-3, SR
        d = K.saw_osc(lift(f, 0), n)
        fd = (K.saw_osc(f + eps, n) - K.saw_osc(f - eps, n)) / (2 * eps)
        idx = np.arange(1, n + 1)
        wraps = np.floor(idx * (f + eps) / SR) != np.floor(idx * (f - eps) / SR)
        ok = ~wraps
        assert ok.sum() > 0.99 * n
        rel = np.abs(d.partials[0][ok] - fd[ok]) / np.maximum(np.abs(fd[ok]), 1e-9)
        assert np.max(rel) <= 1e-2


class TestNoise:
    def test_determinism(self):
        assert np.array_equal(K.noise(4096, 7), K.noise(4096, 7))

    def test_range(self):
        out = K.noise(SR, 3)
        assert np.all(out >= -1.0) and np.all(out <= 1.0)

    def test_seed_changes_stream(self):
        assert not np.array_equal(K.noise(1024, 1), K.noise(1024, 2))

    def test_mean_regression_seed1(self):
        # frozen for the fixed LCG constants
        mean = float(np.mean(K.noise(SR, 1)))
        assert -0.02 < mean < 0.02
        assert mean == pytest.approx(-0.0027891372778408585, abs=1e-15)


class TestButterworth:
    def test_lowpass_unity_dc_gain(self):
        out = K.butterworth(np.ones(SR), 3, 700.0, "lowpass")
        assert np.allclose(out[-100:], 1.0, atol=1e-3)

    def test_highpass_zero_dc_gain(self):
        out = K.butterworth(np.ones(SR), 10, 100.0, "highpass")
        assert np.max(np.abs(out[-100:])) < 1e-3

    def test_half_power_at_cutoff_by_sine_probe(self):
        fc = 900.0
        probe = K.sine_osc(fc, SR)
        out = K.butterworth(probe, 3, fc, "lowpass")
        amp = np.max(np.abs(out[SR // 2 :]))
        assert amp == pytest.approx(1.0 / np.sqrt(2.0), rel=0.02)

    def test_cutoff_domain_errors(self):
        with pytest.raises(ValueError):
            K.butterworth(np.zeros(16), 3, 0.0, "lowpass")
        with pytest.raises(ValueError):
            K.butterworth(np.zeros(16), 3, SR / 2, "lowpass")
        with pytest.raises(ValueError):
            K.butterworth(np.zeros(16), 3, 100.0, "bandpass")

    def test_finite_over_declared_ranges(self):
        rng = np.random.default_rng(5)
        x = K.noise(8192, 9)
        for _ in range(20):
            lp = rng.uniform(50, 1000)
            hp = rng.uniform(1, 120)
            y = K.butterworth(K.butterworth(x, 3, lp, "lowpass"), 10, hp, "highpass")
            assert np.all(np.isfinite(y))
        for _ in range(10):
            y = K.butterworth(x, 10, rng.uniform(100, 20000), "highpass")
            assert np.all(np.isfinite(y))

    def test_cutoff_gradient_matches_finite_differences(self):
        x = K.noise(SR, 3)
        fc, eps = 400.0, 1e-3
        yd = K.butterworth(x, 3, lift(fc, 0), "lowpass")
        g = dn.dmean(dn.mul(yd, yd)).partials[0]
        energy = lambda f: float(np.mean(K.butterworth(x, 3, f, "lowpass") ** 2))
        fd = (energy(fc + eps) - energy(fc - eps)) / (2 * eps)
        assert abs(g - fd) / abs(fd) <= 1e-2

    def test_dual_input_and_dual_cutoff_chain(self):
        # chained sections must propagate both input and coefficient partials
        x = K.noise(4096, 1)
        fc0, fc1, eps = 600.0, 80.0, 1e-3
        y = K.butterworth(x, 3, lift(fc0, 0), "lowpass")
        y = K.butterworth(y, 10, lift(fc1, 1), "highpass")
        g = dn.dmean(dn.mul(y, y)).partials

        def energy(a, b):
            out = K.butterworth(K.butterworth(x, 3, a, "lowpass"), 10, b, "highpass")
            return float(np.mean(out**2))

        fd0 = (energy(fc0 + eps, fc1) - energy(fc0 - eps, fc1)) / (2 * eps)
        fd1 = (energy(fc0, fc1 + eps) - energy(fc0, fc1 - eps)) / (2 * eps)
        assert abs(g[0] - fd0) / abs(fd0) <= 1e-2
        assert abs(g[1] - fd1) / abs(fd1) <= 1e-2


class TestStft:
    def test_frame_count(self):
        spec = K.stft_magnitude(np.zeros(SR))
        assert spec.n_frames == (SR - 600) // 100 + 1 == 436

    def test_all_zero_input_at_delta_floor(self):
        spec = K.stft_magnitude(np.zeros(SR))
        assert np.all(spec.magnitudes <= np.sqrt(K.MAGNITUDE_DELTA) + 1e-15)

    def test_pure_tone_peak_bin_vs_dft_oracle(self):
        x = K.sine_osc(440.0, SR)
        spec = K.stft_magnitude(x)
        frame_idx = 10
        assert int(np.argmax(spec.magnitudes[frame_idx])) == round(440 * 1024 / SR) == 10
        # direct DFT on one windowed frame
        frame = x[frame_idx * 100 : frame_idx * 100 + 600] * K._hann(600)
        bins = np.arange(0, 40)
        oracle = np.abs(
            np.array(
                [np.sum(frame * np.exp(-2j * np.pi * k * np.arange(600) / 1024)) for k in bins]
            )
        )
        assert np.allclose(spec.magnitudes[frame_idx][:40], oracle, atol=1e-8)

    def test_hop_shift_moves_frames_by_one(self):
        x = np.asarray(K.noise(SR, 4))
        shifted = np.concatenate([np.zeros(100), x[:-100]])
        a = K.stft_magnitude(x).magnitudes
        b = K.stft_magnitude(shifted).magnitudes
        assert np.max(np.abs(b[1:436] - a[: 436 - 1])) <= 1e-6

    def test_config_validation(self):
        with pytest.raises(K.ConfigError):
            K.stft_magnitude(np.zeros(SR), fft_length=512, window_length=600)
        with pytest.raises(K.ConfigError):
            K.stft_magnitude(np.zeros(SR), hop=0)
        with pytest.raises(K.ConfigError):
            K.stft_magnitude(np.zeros(300))

    def test_value_channel_identical_for_duals(self):
        x = K.sine_osc(220.0, SR)
        xd = K.sine_osc(lift(220.0, 0), SR)
        a = K.stft_magnitude(x).magnitudes
        b = K.stft_magnitude(xd).magnitudes
        assert np.array_equal(a, b.value)


class TestEnvelope:
    def test_zero_input(self):
        env = K.envelope(np.zeros(SR))
        assert np.all(env.values <= 513 * np.sqrt(K.MAGNITUDE_DELTA) + 1e-12)

    def test_am_two_hertz_has_two_maxima(self):
        from scipy.signal import find_peaks

        t = np.arange(SR) / SR
        x = (1 + 0.5 * np.sin(2 * np.pi * 2 * t)) * np.sin(2 * np.pi * 440 * t)
        env = K.envelope(x).values
        peaks, _ = find_peaks(env, prominence=0.2 * np.max(env))
        assert len(peaks) == 2

    def test_positive_scaling_linearity(self):
        x = np.asarray(K.noise(SR, 2))
        a = K.envelope(x).values
        b = K.envelope(2.5 * x).values
        assert np.allclose(b, 2.5 * a, rtol=1e-9, atol=1e-5)


class TestFilterbank:
    def test_center_ratio(self):
        fb = K.morlet_filterbank()
        ratios = fb.centers[:-1] / fb.centers[1:]
        assert np.allclose(ratios, 2 ** (1 / 8))

    def test_unit_peak_magnitude(self):
        fb = K.morlet_filterbank()
        assert np.allclose(fb.psi_hat.max(axis=1), 1.0)

    def test_energy_coverage_regression(self):
        fb = K.morlet_filterbank()
        freqs = np.arange(fb.fft_length) * (fb.sample_rate / fb.fft_length)
        lp = (fb.psi_hat**2).sum(axis=0)
        band = (freqs >= fb.centers[-1]) & (freqs <= fb.centers[0])
        assert lp[band].min() >= 0.5
        assert lp[band].max() <= 1.05

    def test_analytic_positive_frequencies_only(self):
        fb = K.morlet_filterbank()
        assert np.all(fb.psi_hat[:, fb.fft_length // 2 + 1 :] == 0.0)


class TestScalogram:
    def test_folding_matches_full_resolution(self):
        # frequency-domain folding is exact time-domain subsampling
        fb = K.morlet_filterbank()
        x = np.asarray(K.noise(SR, 11))
        spectrum = np.fft.rfft(x, n=fb.fft_length)
        for i in (3, 30, 60):
            full = np.zeros(fb.fft_length, dtype=complex)
            full[: fb.fft_length // 2 + 1] = spectrum * fb.psi_hat[i, : fb.fft_length // 2 + 1]
            y_full = np.fft.ifft(full)
            sub = int(fb.sub_factors[i])
            binhz = fb.sample_rate / fb.fft_length
            lo = max(0, int((fb.centers[i] - 5 * fb.sigmas[i]) / binhz))
            hi = min(fb.fft_length // 2 + 1, int((fb.centers[i] + 5 * fb.sigmas[i]) / binhz) + 2)
            folded = K._fold_band(spectrum, fb.psi_hat[i], lo, hi, fb.fft_length // sub)
            y_sub = np.fft.ifft(folded) / sub
            assert np.max(np.abs(y_sub - y_full[::sub])) < 1e-6

    def test_pure_tone_activates_nearest_filter(self):
        fb = K.morlet_filterbank()
        u1 = K.scalogram(K.sine_osc(1000.0, SR), fb)
        best = int(np.argmax(u1[:, 80]))
        assert abs(np.log2(fb.centers[best] / 1000.0)) <= 1.01 / 8

    def test_real_dual_value_identity(self):
        fb = K.morlet_filterbank()
        x = K.sine_osc(500.0, SR)
        xd = K.sine_osc(lift(500.0, 0), SR)
        assert np.allclose(K.scalogram(x, fb), K.scalogram(xd, fb).value, atol=0.0)


def test_butterworth_real_dual_value_identity():
    x = np.asarray(K.noise(8192, 6))
    real = K.butterworth(x, 3, 555.0, "lowpass")
    dual = K.butterworth(x, 3, lift(555.0, 0), "lowpass")
    assert np.array_equal(real, dual.value)


def test_oscillator_real_dual_value_identity():
    for osc in (K.sine_osc, K.saw_osc):
        real = osc(333.0, 4096)
        dual = osc(lift(333.0, 1), 4096)
        assert np.array_equal(real, dual.value)
