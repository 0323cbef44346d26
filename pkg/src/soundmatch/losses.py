"""The four differentiable loss functions.

Each maps (candidate signal, target signal) to a scalar; candidates may be
dual-valued, in which case the loss carries partial derivatives with respect
to both synthesizer parameters. For use inside the matching loop every loss
also exposes a prepared-target form so per-iteration work touches only the
candidate side.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import dual as dn
from . import kernels as K
from .dual import Dual
from .kernels import ConfigError

LOSS_IDS = ("L1Spec", "SIMSESpec", "JTFS", "DTWEnvelope")

_SIMSE_DELTA = 1e-12
DEFAULT_SDTW_GAMMA = 0.1


# ---------------------------------------------------------------------------
# spectrogram losses
# ---------------------------------------------------------------------------


def _spec(x):
    return K.stft_magnitude(x).magnitudes


def l1_spec(candidate, target):
    """Mean absolute difference between default-config spectrograms."""
    return _l1_spec_prepared(_spec(candidate), _spec(target))


def _l1_spec_prepared(cand_mags, targ_mags):
    return dn.dmean(dn.absolute(dn.sub(cand_mags, targ_mags)))


def simse_spec(candidate, target):
    """Scale-invariant MSE between spectrograms: the candidate is rescaled by
    the closed-form optimal factor before the squared error, and that factor
    participates in the chain rule."""
    return _simse_prepared(_spec(candidate), _spec(target))


def _simse_prepared(cand_mags, targ_mags):
    sxy = dn.dsum(dn.mul(targ_mags, cand_mags))
    syy = dn.dsum(dn.mul(cand_mags, cand_mags))
    scale = dn.div(sxy, dn.add(syy, _SIMSE_DELTA))
    resid = dn.sub(targ_mags, dn.mul(scale, cand_mags))
    return dn.dmean(dn.mul(resid, resid))


# ---------------------------------------------------------------------------
# soft dynamic time warping
# ---------------------------------------------------------------------------


@njit(cache=True)
def _sdtw_value(cost, gamma):
    m, n = cost.shape
    r = np.empty((m, n))
    r[0, 0] = cost[0, 0]
    for i in range(1, m):
        r[i, 0] = cost[i, 0] + r[i - 1, 0]
    for j in range(1, n):
        r[0, j] = cost[0, j] + r[0, j - 1]
    for i in range(1, m):
        for j in range(1, n):
            a = r[i - 1, j]
            b = r[i, j - 1]
            c = r[i - 1, j - 1]
            mn = min(a, min(b, c))
            ea = np.exp(-(a - mn) / gamma)
            eb = np.exp(-(b - mn) / gamma)
            ec = np.exp(-(c - mn) / gamma)
            r[i, j] = cost[i, j] + mn - gamma * np.log(ea + eb + ec)
    return r[m - 1, n - 1]


@njit(cache=True)
def _sdtw_dual(cost, cost_p, gamma):
    m, n = cost.shape
    r = np.empty((m, n))
    rp = np.empty((m, n, 2))
    r[0, 0] = cost[0, 0]
    rp[0, 0, 0] = cost_p[0, 0, 0]
    rp[0, 0, 1] = cost_p[0, 0, 1]
    for i in range(1, m):
        r[i, 0] = cost[i, 0] + r[i - 1, 0]
        rp[i, 0, 0] = cost_p[i, 0, 0] + rp[i - 1, 0, 0]
        rp[i, 0, 1] = cost_p[i, 0, 1] + rp[i - 1, 0, 1]
    for j in range(1, n):
        r[0, j] = cost[0, j] + r[0, j - 1]
        rp[0, j, 0] = cost_p[0, j, 0] + rp[0, j - 1, 0]
        rp[0, j, 1] = cost_p[0, j, 1] + rp[0, j - 1, 1]
    for i in range(1, m):
        for j in range(1, n):
            a = r[i - 1, j]
            b = r[i, j - 1]
            c = r[i - 1, j - 1]
            mn = min(a, min(b, c))
            ea = np.exp(-(a - mn) / gamma)
            eb = np.exp(-(b - mn) / gamma)
            ec = np.exp(-(c - mn) / gamma)
            s = ea + eb + ec
            r[i, j] = cost[i, j] + mn - gamma * np.log(s)
            wa = ea / s
            wb = eb / s
            wc = ec / s
            rp[i, j, 0] = (
                cost_p[i, j, 0] + wa * rp[i - 1, j, 0] + wb * rp[i, j - 1, 0] + wc * rp[i - 1, j - 1, 0]
            )
            rp[i, j, 1] = (
                cost_p[i, j, 1] + wa * rp[i - 1, j, 1] + wb * rp[i, j - 1, 1] + wc * rp[i - 1, j - 1, 1]
            )
    return r[m - 1, n - 1], rp[m - 1, n - 1, 0], rp[m - 1, n - 1, 1]


def _env_values(x):
    return x.values if isinstance(x, K.Envelope) else x


def cost_matrix(x, y):
    """Pairwise squared differences between envelope frames (real or dual)."""
    x = _env_values(x)
    y = _env_values(y)
    xv = np.asarray(dn.value_of(x), dtype=np.float64)
    yv = np.asarray(dn.value_of(y), dtype=np.float64)
    diff = xv[:, None] - yv[None, :]
    cost = diff * diff
    if not (isinstance(x, Dual) or isinstance(y, Dual)):
        return cost
    n = dn.N_PARTIALS
    xp = dn.partials_of(x, n)
    yp = dn.partials_of(y, n)
    cost_p = np.empty(cost.shape + (n,))
    for k in range(n):
        cost_p[:, :, k] = 2.0 * diff * (xp[k][:, None] - yp[k][None, :])
    return Dual(cost, np.moveaxis(cost_p, -1, 0))


def soft_dtw(x, y, gamma: float):
    """Soft-DTW alignment cost r[m][n] computed by the smoothed-minimum
    dynamic program; dual partials flow through the whole recursion."""
    if gamma <= 0:
        raise ConfigError("soft-DTW gamma must be positive")
    x = _env_values(x)
    y = _env_values(y)
    if np.shape(dn.value_of(x))[0] == 0 or np.shape(dn.value_of(y))[0] == 0:
        raise ValueError("soft-DTW inputs must be non-empty")
    cost = cost_matrix(x, y)
    if isinstance(cost, Dual):
        cp = np.ascontiguousarray(np.moveaxis(cost.partials, 0, -1))
        val, p0, p1 = _sdtw_dual(np.ascontiguousarray(cost.value), cp, float(gamma))
        return Dual(val, np.array([p0, p1]))
    return float(_sdtw_value(np.ascontiguousarray(cost), float(gamma)))


def _max_normalize(env_values, floor: float = 1e-9):
    peak_idx = int(np.argmax(np.abs(dn.value_of(env_values))))
    peak = env_values[peak_idx]
    if abs(dn.value_of(peak)) < floor:
        return env_values
    return dn.div(env_values, peak)


def dtw_envelope_loss(candidate, target, gamma: float = DEFAULT_SDTW_GAMMA):
    """Soft-DTW between max-normalized loudness envelopes, debiased so that
    identical signals score exactly zero, and divided by the frame count.

    The debiasing subtracts the self-alignment terms 0.5*(sdtw(x,x) +
    sdtw(y,y)); without it the smoothed minimum accumulates a negative offset
    of order gamma per step on near-tied paths.
    """
    ey = _max_normalize(K.envelope(target).values)
    ctx = (ey, soft_dtw(ey, ey, gamma))
    return _dtw_prepared(candidate, ctx, gamma)


def _dtw_prepared(candidate, ctx, gamma, debias: bool = True, env_norm: str = "max"):
    ey, self_y = ctx
    ex = K.envelope(candidate).values
    if env_norm == "max":
        ex = _max_normalize(ex)
    m = np.shape(dn.value_of(ex))[0]
    cross = soft_dtw(ex, ey, gamma)
    if not debias:
        return dn.div(cross, float(m))
    self_x = soft_dtw(ex, ex, gamma)
    return dn.div(dn.sub(cross, dn.mul(0.5, dn.add(self_x, self_y))), float(m))


# ---------------------------------------------------------------------------
# joint time-frequency scattering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JtfsConfig:
    octaves: int = 8
    per_octave: int = 8
    # octave-spaced temporal rates ascending to the folded second-order
    # Nyquist of the scalogram grid (~43 Hz); the top band is shelf-like
    rates_hz: tuple[float, ...] = (5.4, 10.8, 21.5, 43.1)
    scales_cpc: tuple[float, ...] = (0.0625, 0.125, 0.25)  # cycles per channel
    smooth_stride: int = 4


_U1_PAD_CH = 128
_U1_PAD_T = 256
_U2_TIME_FOLD = 4  # second-order time grid: 256 -> 64 frames


@functools.lru_cache(maxsize=4)
def _joint_filters(rates_hz, scales_cpc, time_rate):
    """Separable 2-D Morlet bank over (log-frequency, time): one analytic
    Gaussian per temporal rate and per frequential scale, both spins.

    The temporal parts live well below the folded Nyquist of the reduced
    second-order grid, so their support is returned for band-limited work.
    """
    t_freqs = np.arange(_U1_PAD_T) * (time_rate / _U1_PAD_T)
    fr_freqs = np.arange(_U1_PAD_CH) / _U1_PAD_CH
    bin_hz = time_rate / _U1_PAD_T

    temporal = []
    for rate in rates_hz:
        sig = rate / 2.0
        g = np.exp(-((t_freqs - rate) ** 2) / (2.0 * sig**2))
        g[_U1_PAD_T // 2 + 1 :] = 0.0
        support = min(int((rate + 5.0 * sig) / bin_hz) + 2, _U1_PAD_T // _U2_TIME_FOLD)
        temporal.append((g, support))

    frequential = []
    for scale in scales_cpc:
        sig = scale / 2.0
        g = np.exp(-((fr_freqs - scale) ** 2) / (2.0 * sig**2))
        g[_U1_PAD_CH // 2 + 1 :] = 0.0
        mirrored = np.concatenate(([g[0]], g[1:][::-1]))
        frequential.extend([g, mirrored])

    return temporal, frequential


def _phi_smooth(u, phi_sigma: float, frame_rate: float, stride: int):
    """Low-pass each time row with the averaging filter, then subsample."""
    nt = np.shape(dn.value_of(u))[-1]
    freqs = np.fft.rfftfreq(nt, d=1.0 / frame_rate)
    ph = np.exp(-(freqs**2) / (2.0 * phi_sigma**2))
    smoothed = dn.irfft(dn.mul(dn.rfft(u, axis=-1), ph), n=nt, axis=-1)
    return smoothed[..., ::stride]


def jtfs_coefficients(x, config: JtfsConfig = JtfsConfig()):
    """Simplified joint time-frequency scattering coefficient vector.

    Order 1: Morlet scalogram, modulus, temporal low-pass. Order 2: separable
    2-D Morlets over (time, log-frequency) applied to the scalogram, modulus,
    same low-pass. Both orders are concatenated as one flat vector.

    The second-order convolutions run on a 4x-folded time grid (subsampling
    before the modulus is exact for band-limited products); rate filters are
    truncated at the folded Nyquist, which only reshapes the top band.
    """
    fb = K.morlet_filterbank(config.octaves, config.per_octave)
    u1 = K.scalogram(x, fb)
    n_ch, n_t = np.shape(dn.value_of(u1))
    frame_rate = fb.sample_rate / K.SCALOGRAM_HOP

    s1 = _phi_smooth(u1, fb.phi_sigma, frame_rate, config.smooth_stride)

    spec_t = dn.fft(u1, n=_U1_PAD_T, axis=-1)
    spec = dn.fft(spec_t, n=_U1_PAD_CH, axis=-2)
    temporal, frequential = _joint_filters(config.rates_hz, config.scales_cpc, frame_rate)

    sub_t = _U1_PAD_T // _U2_TIME_FOLD
    n_t_sub = n_t // _U2_TIME_FOLD
    sub_rate = frame_rate / _U2_TIME_FOLD
    sub_stride = max(config.smooth_stride // _U2_TIME_FOLD, 1)
    fr_stack = np.stack(frequential)[:, :, None]  # (spins*scales, channels, 1)
    pieces = []
    for g_t, support in temporal:
        # band-limited product lands entirely inside the first fold segment
        band = dn.mul(spec[:, :support], g_t[:support])
        bv = dn.value_of(band)
        folded = np.zeros((_U1_PAD_CH, sub_t), dtype=np.complex128)
        folded[:, :support] = bv
        if isinstance(band, Dual):
            pf = np.zeros((band.partials.shape[0], _U1_PAD_CH, sub_t), dtype=np.complex128)
            pf[:, :, :support] = band.partials
            g_fold = Dual(folded, pf)
        else:
            g_fold = folded
        prod = dn.mul(dn.reshape(g_fold, (1, _U1_PAD_CH, sub_t)), fr_stack)
        z = dn.ifft(dn.ifft(prod, axis=-1), axis=-2)
        u2 = dn.complex_abs(z[:, :n_ch, :n_t_sub], delta=K.MAGNITUDE_DELTA * _U2_TIME_FOLD**2)
        u2 = dn.div(u2, float(_U2_TIME_FOLD))
        s2 = _phi_smooth(u2, fb.phi_sigma, sub_rate, sub_stride)
        pieces.append(dn.reshape(s2, (-1,)))

    return dn.concatenate([dn.reshape(s1, (-1,))] + pieces)


def jtfs_loss(candidate, target, config: JtfsConfig = JtfsConfig()):
    """Mean absolute difference between scattering coefficient tensors."""
    return _jtfs_prepared(candidate, jtfs_coefficients(target, config), config)


def _jtfs_prepared(candidate, target_coeffs, config):
    cand = jtfs_coefficients(candidate, config)
    return dn.dmean(dn.absolute(dn.sub(cand, target_coeffs)))


# ---------------------------------------------------------------------------
# prepared-target loss objects for the matching loop
# ---------------------------------------------------------------------------


class LossFunction:
    """A loss with a precomputed target side. ``prepare_target`` runs once per
    trial; ``evaluate`` runs every iteration on the (dual) candidate."""

    loss_id: str

    def prepare_target(self, target):
        raise NotImplementedError

    def evaluate(self, candidate, ctx):
        raise NotImplementedError

    def __call__(self, candidate, target):
        return self.evaluate(candidate, self.prepare_target(target))


class L1SpecLoss(LossFunction):
    loss_id = "L1Spec"

    def prepare_target(self, target):
        return _spec(target)

    def evaluate(self, candidate, ctx):
        return _l1_spec_prepared(_spec(candidate), ctx)


class SIMSESpecLoss(LossFunction):
    loss_id = "SIMSESpec"

    def prepare_target(self, target):
        return _spec(target)

    def evaluate(self, candidate, ctx):
        return _simse_prepared(_spec(candidate), ctx)


class JTFSLoss(LossFunction):
    loss_id = "JTFS"

    def __init__(self, config: JtfsConfig = JtfsConfig()):
        self.config = config

    def prepare_target(self, target):
        return jtfs_coefficients(target, self.config)

    def evaluate(self, candidate, ctx):
        return _jtfs_prepared(candidate, ctx, self.config)


class DTWEnvelopeLoss(LossFunction):
    loss_id = "DTWEnvelope"

    def __init__(self, gamma: float = DEFAULT_SDTW_GAMMA, debias: bool = True, env_norm: str = "max"):
        if gamma <= 0:
            raise ConfigError("soft-DTW gamma must be positive")
        self.gamma = gamma
        self.debias = debias
        self.env_norm = env_norm

    def _norm(self, values):
        return _max_normalize(values) if self.env_norm == "max" else values

    def prepare_target(self, target):
        ey = self._norm(K.envelope(target).values)
        self_y = soft_dtw(ey, ey, self.gamma) if self.debias else 0.0
        return (ey, self_y)

    def evaluate(self, candidate, ctx):
        return _dtw_prepared(candidate, ctx, self.gamma, self.debias, self.env_norm)


def make_loss(loss_id: str, sdtw_gamma: float = DEFAULT_SDTW_GAMMA, jtfs_config: JtfsConfig | None = None) -> LossFunction:
    if loss_id == "L1Spec":
        return L1SpecLoss()
    if loss_id == "SIMSESpec":
        return SIMSESpecLoss()
    if loss_id == "JTFS":
        return JTFSLoss(jtfs_config or JtfsConfig())
    if loss_id == "DTWEnvelope":
        return DTWEnvelopeLoss(sdtw_gamma)
    raise KeyError(f"unknown loss {loss_id!r}")
