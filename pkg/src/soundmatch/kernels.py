"""Differentiable signal-processing primitives.

Oscillators, a seeded noise source, Butterworth filter cascades, STFT
magnitude spectrograms, loudness envelopes, and the Morlet filterbank used
by the scattering-based loss. Every kernel accepts plain numpy data or
:class:`~soundmatch.dual.Dual` values and produces identical value channels
either way.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from . import dual as dn
from .dual import Dual

SAMPLE_RATE = 44100
SIGNAL_LENGTH = 44100  # all rendered program outputs are 1 s

# Default short-time analysis used by the spectrogram losses and envelopes.
# The window and hop dominate time-frequency resolution; the transform
# length is the next power of two that fits the window.
DEFAULT_FFT_LENGTH = 1024
DEFAULT_WINDOW_LENGTH = 600
DEFAULT_HOP = 100

MAGNITUDE_DELTA = 1e-12  # keeps |X| differentiable at silent bins


class ConfigError(ValueError):
    """Raised for invalid analysis or run configuration."""


@dataclass
class Spectrogram:
    """Magnitude spectrogram; ``magnitudes`` is [frames x bins], real or dual."""

    magnitudes: object
    fft_length: int
    window_length: int
    hop: int

    @property
    def n_frames(self) -> int:
        return np.shape(dn.value_of(self.magnitudes))[0]


@dataclass
class Envelope:
    """Per-frame sum of STFT magnitudes: loudness over time."""

    values: object
    hop: int

    def __len__(self) -> int:
        return np.shape(dn.value_of(self.values))[0]


# ---------------------------------------------------------------------------
# oscillators and noise
# ---------------------------------------------------------------------------


def sine_osc(freq, length: int = SIGNAL_LENGTH):
    """Sine oscillator driven by a wrapping phase accumulator.

    The accumulator p[n] = frac(p[n-1] + f/SR) with p[-1] = 0 telescopes to
    frac((n+1) f / SR), which is what is computed here; the frac derivative
    of 1 carries the frequency gradient through the wraps.
    """
    if length <= 0:
        raise ValueError("length must be positive")
    ramp = np.arange(1, length + 1, dtype=np.float64) / SAMPLE_RATE
    phase = dn.frac(dn.mul(freq, ramp))
    return dn.sin(dn.mul(2.0 * np.pi, phase))


def saw_osc(freq, length: int = SIGNAL_LENGTH):
    """Sawtooth oscillator: the raw wrapping phase accumulator, range [0, 1)."""
    if length <= 0:
        raise ValueError("length must be positive")
    ramp = np.arange(1, length + 1, dtype=np.float64) / SAMPLE_RATE
    return dn.frac(dn.mul(freq, ramp))


_LCG_MULT = 1664525
_LCG_INC = 1013904223
_LCG_MOD = 2**32


@functools.lru_cache(maxsize=128)
def noise(length: int = SIGNAL_LENGTH, seed: int = 0) -> np.ndarray:
    """Deterministic uniform noise in [-1, 1] from a linear congruential
    generator; constant with respect to all synthesizer parameters."""
    if length <= 0:
        raise ValueError("length must be positive")
    out = np.empty(length, dtype=np.float64)
    state = seed % _LCG_MOD
    for i in range(length):
        state = (_LCG_MULT * state + _LCG_INC) % _LCG_MOD
        out[i] = state * (2.0 / _LCG_MOD) - 1.0
    out.flags.writeable = False
    return out


# ---------------------------------------------------------------------------
# Butterworth filters
# ---------------------------------------------------------------------------


def _butter_sections(order: int, cutoff, kind: str):
    """Second-order (plus one first-order for odd order) Butterworth sections
    via bilinear transform with prewarping. Coefficients are differentiable
    functions of the cutoff, so dual cutoffs propagate gradients."""
    fc = dn.value_of(cutoff)
    if not 0.0 < fc < SAMPLE_RATE / 2:
        raise ValueError(f"cutoff {fc} outside (0, {SAMPLE_RATE / 2})")
    if kind not in ("lowpass", "highpass"):
        raise ValueError(f"unknown filter kind {kind!r}")

    g = dn.tan(dn.mul(np.pi / SAMPLE_RATE, cutoff))
    sections = []
    for k in range(1, order // 2 + 1):
        # conjugate analog pole pair s^2 + 2 sin(theta_k) s + 1
        alpha = np.sin(np.pi * (2 * k - 1) / (2 * order))
        g2 = dn.mul(g, g)
        a0 = dn.add(dn.add(1.0, dn.mul(2.0 * alpha, g)), g2)
        a1 = dn.div(dn.mul(2.0, dn.sub(g2, 1.0)), a0)
        a2 = dn.div(dn.add(dn.sub(1.0, dn.mul(2.0 * alpha, g)), g2), a0)
        if kind == "lowpass":
            b0 = dn.div(g2, a0)
            b = (b0, dn.mul(2.0, b0), b0)
        else:
            b0 = dn.div(1.0, a0)
            b = (b0, dn.mul(-2.0, b0), b0)
        sections.append((b, (1.0, a1, a2)))
    if order % 2:
        a0 = dn.add(g, 1.0)
        a1 = dn.div(dn.sub(g, 1.0), a0)
        if kind == "lowpass":
            b0 = dn.div(g, a0)
            b = (b0, b0)
        else:
            b0 = dn.div(1.0, a0)
            b = (b0, dn.mul(-1.0, b0))
        sections.append((b, (1.0, a1)))
    return sections


def _coef_arrays(coefs):
    values = np.array([dn.value_of(c) for c in coefs], dtype=np.float64)
    n = dn.N_PARTIALS
    parts = np.stack([np.asarray(dn.partials_of(c, n), dtype=np.float64) for c in coefs], axis=1)
    return values, parts


def _apply_section(x, b, a):
    """Run one IIR section. The derivative of the output obeys the same
    autoregression driven by coefficient- and input-derivative terms:
    dy = lfilter(b, a, dx) + lfilter([1], a, db (*) x - da (*) y)."""
    xv = dn.value_of(x)
    bv, bp = _coef_arrays(b)
    av, ap = _coef_arrays(a)
    yv = lfilter(bv, av, xv)
    dual_coef = bp.any() or ap.any()
    dual_input = isinstance(x, Dual)
    if not dual_coef and not dual_input:
        return yv
    n = dn.N_PARTIALS
    yp = np.empty((n,) + yv.shape)
    one = np.array([1.0])
    for k in range(n):
        drive = np.zeros_like(yv)
        if dual_coef:
            drive = lfilter(bp[k], one, xv) - lfilter(np.concatenate(([0.0], ap[k, 1:])), one, yv)
        acc = lfilter(one, av, drive)
        if dual_input:
            acc = acc + lfilter(bv, av, x.partials[k])
        yp[k] = acc
    return Dual(yv, yp)


def butterworth(x, order: int, cutoff, kind: str):
    """Butterworth low- or high-pass of the given order as a cascade of
    bilinear-transformed sections. ``cutoff`` may be real or dual."""
    y = x
    for b, a in _butter_sections(order, cutoff, kind):
        y = _apply_section(y, b, a)
    return y


# ---------------------------------------------------------------------------
# STFT and envelopes
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=16)
def _hann(length: int) -> np.ndarray:
    # periodic Hann
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(length) / length)
    w.flags.writeable = False
    return w


def _frame(x, window_length: int, hop: int):
    v = dn.value_of(x)
    frames = np.lib.stride_tricks.sliding_window_view(v, window_length)[::hop]
    if not isinstance(x, Dual):
        return frames
    pframes = np.lib.stride_tricks.sliding_window_view(x.partials, window_length, axis=-1)[:, ::hop]
    return Dual(frames, pframes)


def stft_magnitude(
    x,
    fft_length: int = DEFAULT_FFT_LENGTH,
    window_length: int = DEFAULT_WINDOW_LENGTH,
    hop: int = DEFAULT_HOP,
) -> Spectrogram:
    """Hann-windowed magnitude spectrogram, zero-padded to ``fft_length``.

    The FFT is linear, so dual partials flow through unchanged; magnitudes
    carry a small delta inside the square root for differentiability.
    """
    if window_length > fft_length:
        raise ConfigError("window_length must not exceed fft_length")
    if hop <= 0:
        raise ConfigError("hop must be positive")
    if np.shape(dn.value_of(x))[-1] < window_length:
        raise ConfigError("signal shorter than the analysis window")
    frames = _frame(x, window_length, hop)
    windowed = dn.mul(frames, _hann(window_length))
    spectrum = dn.rfft(windowed, n=fft_length, axis=-1)
    mags = dn.complex_abs(spectrum, delta=MAGNITUDE_DELTA)
    return Spectrogram(mags, fft_length, window_length, hop)


def envelope(x) -> Envelope:
    """Loudness envelope: per-frame sum of default-config STFT magnitudes."""
    spec = stft_magnitude(x)
    return Envelope(dn.dsum(spec.magnitudes, axis=-1), spec.hop)


# ---------------------------------------------------------------------------
# Morlet filterbank for the scattering transform
# ---------------------------------------------------------------------------

SCATTERING_FFT_LENGTH = 65536  # 44100 rounded up to a power of two
_XI_MAX_FRACTION = 0.40  # highest band-pass center, as a fraction of SR
_AVERAGING_WINDOW = 1024  # temporal low-pass span in samples (2**10)


@dataclass(frozen=True)
class Filterbank:
    """Frequency-domain complex Morlet band-pass bank plus one low-pass.

    ``psi_hat`` rows are Gaussians on the positive-frequency axis with unit
    peak magnitude (the L1-style normalization for analytic wavelets);
    ``sub_factors`` give the alias-safe spectrum folding factor per filter.
    """

    centers: np.ndarray
    sigmas: np.ndarray
    psi_hat: np.ndarray
    phi_hat: np.ndarray
    phi_sigma: float
    sub_factors: np.ndarray
    fft_length: int
    sample_rate: int


@functools.lru_cache(maxsize=4)
def morlet_filterbank(
    octaves: int = 8,
    per_octave: int = 8,
    fft_length: int = SCATTERING_FFT_LENGTH,
    sample_rate: int = SAMPLE_RATE,
) -> Filterbank:
    """Log-spaced analytic Morlet band-pass filters covering ``octaves``
    octaves at ``per_octave`` filters per octave, descending from 0.4*SR."""
    if octaves < 1 or per_octave < 1:
        raise ValueError("octaves and per_octave must be >= 1")
    n_filters = octaves * per_octave
    ratio = 2.0 ** (1.0 / per_octave)
    xi_max = _XI_MAX_FRACTION * sample_rate
    centers = xi_max * ratio ** -np.arange(n_filters)
    # bandwidth tuned so the squared-magnitude sum over the covered band
    # stays within [0.5, 1.05] (checked by the filterbank regression test)
    sigmas = centers * (ratio - 1.0) / 2.1

    freqs = np.arange(fft_length) * (sample_rate / fft_length)
    half = fft_length // 2
    psi = np.exp(-((freqs[None, :] - centers[:, None]) ** 2) / (2.0 * sigmas[:, None] ** 2))
    psi[:, half + 1 :] = 0.0  # analytic: positive frequencies only
    psi /= psi.max(axis=1, keepdims=True)  # unit peak on the sampled grid

    # time-domain sigma of half the averaging window -> frequency sigma
    phi_sigma = sample_rate / (2.0 * np.pi * (_AVERAGING_WINDOW / 2.0))
    wrapped = np.minimum(freqs, sample_rate - freqs)
    phi = np.exp(-(wrapped**2) / (2.0 * phi_sigma**2))

    # Fold factor: the +-5 sigma support must fit inside 0.8 * SR/factor so
    # the folded analytic signal keeps its envelope.
    width = 10.0 * sigmas
    raw = 0.8 * sample_rate / width
    factors = 2 ** np.floor(np.log2(np.maximum(raw, 1.0))).astype(int)
    factors = np.clip(factors, 1, 256)

    return Filterbank(
        centers=centers,
        sigmas=sigmas,
        psi_hat=psi,
        phi_hat=phi,
        phi_sigma=phi_sigma,
        sub_factors=factors,
        fft_length=fft_length,
        sample_rate=sample_rate,
    )


SCALOGRAM_HOP = 256  # common time grid for first-order scattering output


def _fold_band(spectrum: np.ndarray, psi: np.ndarray, lo: int, hi: int, sub_len: int):
    """Accumulate the band-limited product spectrum into a length ``sub_len``
    folded spectrum (frequency-domain equivalent of time subsampling)."""
    acc = np.zeros(spectrum.shape[:-1] + (sub_len,), dtype=np.complex128)
    band = spectrum[..., lo:hi] * psi[lo:hi]
    j = lo // sub_len
    while j * sub_len < hi:
        gs = max(lo, j * sub_len)
        ge = min(hi, (j + 1) * sub_len)
        acc[..., gs - j * sub_len : ge - j * sub_len] += band[..., gs - lo : ge - lo]
        j += 1
    return acc


def scalogram(x, fb: Filterbank | None = None, hop: int = SCALOGRAM_HOP):
    """First-order scattering layer: |x * psi| for every band-pass filter,
    mean-pooled onto a common time grid of ``hop`` samples per frame.

    Per filter, the analytic signal is computed at a reduced rate by folding
    the product spectrum (exact time-domain subsampling), which keeps the
    modulus intact while shrinking the inverse FFTs.
    """
    if fb is None:
        fb = morlet_filterbank()
    nfft = fb.fft_length
    binhz = fb.sample_rate / nfft
    length = np.shape(dn.value_of(x))[-1]
    n_frames = length // hop
    spectrum = dn.rfft(x, n=nfft, axis=-1)
    half = nfft // 2
    sv = dn.value_of(spectrum)

    rows = []
    for i in range(len(fb.centers)):
        sub = int(fb.sub_factors[i])
        sub_len = nfft // sub
        lo = max(0, int((fb.centers[i] - 5.0 * fb.sigmas[i]) / binhz))
        hi = min(half + 1, int((fb.centers[i] + 5.0 * fb.sigmas[i]) / binhz) + 2)
        folded = _fold_band(sv, fb.psi_hat[i], lo, hi, sub_len)
        if isinstance(spectrum, Dual):
            pfolded = _fold_band(spectrum.partials, fb.psi_hat[i], lo, hi, sub_len)
            z = np.fft.ifft(np.concatenate((folded[None], pfolded), axis=0), axis=-1)
            analytic = Dual(z[0] / sub, z[1:] / sub)
        else:
            analytic = np.fft.ifft(folded, axis=-1) / sub
        mag = dn.complex_abs(analytic, delta=MAGNITUDE_DELTA)
        pool = hop // sub
        mag = mag[..., : n_frames * pool]
        mag = dn.reshape(mag, (n_frames, pool))
        rows.append(dn.dmean(mag, axis=-1))
    return dn.concatenate([dn.reshape(r, (1, n_frames)) for r in rows], axis=0)
