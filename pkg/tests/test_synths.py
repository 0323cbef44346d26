"""Synthesizer programs: ranges, rendering, sampling, clamping."""

import numpy as np
import pytest

from soundmatch import dual as dn
from soundmatch import kernels as K
from soundmatch import synths as S
from soundmatch.dual import lift


class TestSpecs:
    def test_declared_ranges(self):
        expect = {
            "BPNoise": [("lp_cut", 50, 1000, 900), ("hp_cut", 1, 120, 100)],
            "AddSineSaw": [("saw_freq", 20, 1000, 800), ("sine_freq", 20, 1000, 300)],
            "NoiseAM": [("amp", 0, 5, 0.5), ("modulator", 0, 4, 0.5)],
            "SineSawAM": [("carrier", 20, 1000, 100), ("amp", 1, 20, 6)],
        }
        for pid, params in expect.items():
            prog = S.PROGRAMS[pid]
            for spec, (name, mn, mx, d) in zip(prog.params, params):
                assert (spec.name, spec.minimum, spec.maximum, spec.default) == (name, mn, mx, d)

    def test_bad_spec_rejected(self):
        with pytest.raises(ValueError):
            S.ParamSpec("x", 1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            S.ParamSpec("x", 0.0, 1.0, 2.0)

    def test_normalized_round_trip(self):
        prog = S.PROGRAMS["BPNoise"]
        pv = S.ParamVector.from_raw(prog, (437.5, 63.25))
        back = prog.denormalize(pv.normalized)
        assert np.allclose(back, pv.raw, atol=1e-12)


class TestSampling:
    def test_deterministic_given_seed(self):
        prog = S.PROGRAMS["AddSineSaw"]
        a = S.sample_params(prog, np.random.default_rng(9))
        b = S.sample_params(prog, np.random.default_rng(9))
        assert a == b

    def test_uniform_ranges_and_mean(self):
        prog = S.PROGRAMS["BPNoise"]
        rng = np.random.default_rng(0)
        draws = [S.sample_params(prog, rng) for _ in range(10000)]
        lp = np.array([d.raw[0] for d in draws])
        norm0 = np.array([d.normalized[0] for d in draws])
        assert lp.min() >= 50 and lp.max() <= 1000
        assert 0.48 <= norm0.mean() <= 0.52


class TestClamp:
    def test_inside_unchanged(self):
        prog = S.PROGRAMS["BPNoise"]
        pv, diverged = S.clamp_for_render((400.0, 60.0), prog)
        assert pv.raw == (400.0, 60.0)
        assert not diverged

    def test_clamped_and_diverged(self):
        prog = S.PROGRAMS["BPNoise"]
        pv, diverged = S.clamp_for_render((2000.0, 60.0), prog)
        assert pv.raw[0] == 1000.0
        assert diverged  # 2000 > 1000 + 475

    def test_clamped_not_diverged(self):
        prog = S.PROGRAMS["BPNoise"]
        pv, diverged = S.clamp_for_render((1200.0, 60.0), prog)
        assert pv.raw[0] == 1000.0
        assert not diverged


class TestRender:
    def test_noise_am_zero_modulator_is_silent(self):
        out = S.render(S.PROGRAMS["NoiseAM"], (0.8, 0.0), seed=1)
        assert np.all(out == 0.0)

    def test_add_sine_saw_range(self):
        out = S.render(S.PROGRAMS["AddSineSaw"], (123.0, 456.0))
        assert np.all(out >= -1.0) and np.all(out < 2.0)

    def test_render_deterministic(self):
        prog = S.PROGRAMS["BPNoise"]
        a = S.render(prog, (700.0, 50.0), seed=3)
        b = S.render(prog, (700.0, 50.0), seed=3)
        assert np.array_equal(a, b)

    def test_length_and_sample_rate_contract(self):
        for prog in S.PROGRAMS.values():
            defaults = tuple(p.default for p in prog.params)
            out = S.render(prog, defaults, seed=1)
            assert np.shape(dn.value_of(out)) == (K.SIGNAL_LENGTH,)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            S.render(S.PROGRAMS["NoiseAM"], (0.5, 8.0))

    def test_finite_everywhere(self):
        rng = np.random.default_rng(1)
        for prog in S.PROGRAMS.values():
            for _ in range(25):
                pv = S.sample_params(prog, rng)
                out = S.render(prog, pv.raw, seed=int(rng.integers(2**31)))
                assert np.all(np.isfinite(dn.value_of(out)))

    def test_bpnoise_band_energy_margin(self):
        # band-pass at defaults: energy near 300 Hz dominates 5 kHz by >= 20 dB
        out = S.render(S.PROGRAMS["BPNoise"], (900.0, 100.0), seed=7)
        spec = K.stft_magnitude(out).magnitudes
        freqs = np.arange(513) * K.SAMPLE_RATE / 1024
        band = np.mean(spec[:, (freqs > 200) & (freqs < 400)] ** 2)
        high = np.mean(spec[:, (freqs > 4800) & (freqs < 5200)] ** 2)
        assert 10 * np.log10(band / high) >= 20.0

    def test_sweep_variants_render(self):
        hp = S.render(S.SWEEP_VARIANTS["HPNoise"], (5000.0,), seed=2)
        am = S.render(S.SWEEP_VARIANTS["SNoiseAM"], (3.0,), seed=2)
        assert np.all(np.isfinite(hp)) and np.all(np.isfinite(am))


class TestRenderNormalized:
    def test_matches_raw_render(self):
        prog = S.PROGRAMS["AddSineSaw"]
        pv = S.ParamVector.from_raw(prog, (321.0, 654.0))
        a = S.render(prog, pv.raw)
        b = S.render_normalized(prog, pv.normalized)
        assert np.allclose(a, b, atol=1e-12)

    def test_clamps_out_of_range_normalized(self):
        prog = S.PROGRAMS["NoiseAM"]
        out = S.render_normalized(prog, (1.7, 0.5), seed=1)
        ref = S.render(prog, (5.0, 2.0), seed=1)
        assert np.allclose(dn.value_of(out), ref)

    def test_span_factor_chain_rule(self):
        # gradients w.r.t. normalized params = raw-space gradients x span
        prog = S.PROGRAMS["NoiseAM"]
        pv = S.ParamVector.from_raw(prog, (2.0, 1.5))
        norm_duals = [lift(pv.normalized[i], i) for i in range(2)]
        raw_duals = [lift(pv.raw[i], i) for i in range(2)]
        a = S.render_normalized(prog, norm_duals, seed=5)
        b = S.render(prog, raw_duals, seed=5)
        for i, spec in enumerate(prog.params):
            assert np.allclose(a.partials[i], b.partials[i] * spec.span, rtol=1e-10, atol=1e-12)


def test_peak_normalize():
    x = np.array([0.1, -0.5, 0.25])
    out = S.peak_normalize(x)
    assert np.max(np.abs(out)) == pytest.approx(1.0)
    silent = np.zeros(8)
    assert np.array_equal(S.peak_normalize(silent), silent)
