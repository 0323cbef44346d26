"""The four two-parameter synthesizer programs, plus one-parameter sweep
variants used for loss-landscape visualization.

Programs are immutable descriptions; rendering is a pure function of
(program, parameters, noise seed) and accepts dual-number parameters so
gradients flow into every output sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dual as dn
from . import kernels as K


@dataclass(frozen=True)
class ParamSpec:
    name: str
    minimum: float
    maximum: float
    default: float

    def __post_init__(self):
        if not self.minimum < self.maximum:
            raise ValueError(f"{self.name}: min must be < max")
        if not self.minimum <= self.default <= self.maximum:
            raise ValueError(f"{self.name}: default outside range")

    @property
    def span(self) -> float:
        return self.maximum - self.minimum


@dataclass(frozen=True)
class SynthProgram:
    program_id: str
    params: tuple[ParamSpec, ...]
    uses_noise: bool

    @property
    def n_params(self) -> int:
        return len(self.params)

    def normalize(self, raw) -> tuple[float, ...]:
        return tuple((r - p.minimum) / p.span for r, p in zip(raw, self.params))

    def denormalize(self, normalized) -> tuple[float, ...]:
        return tuple(p.minimum + n * p.span for n, p in zip(normalized, self.params))


@dataclass(frozen=True)
class ParamVector:
    """Raw parameter values paired with their [0, 1] normalized form."""

    raw: tuple[float, ...]
    normalized: tuple[float, ...]

    @classmethod
    def from_raw(cls, program: SynthProgram, raw) -> "ParamVector":
        raw = tuple(float(r) for r in raw)
        return cls(raw, program.normalize(raw))

    @classmethod
    def from_normalized(cls, program: SynthProgram, normalized) -> "ParamVector":
        normalized = tuple(float(n) for n in normalized)
        return cls(program.denormalize(normalized), normalized)


PROGRAMS: dict[str, SynthProgram] = {
    "BPNoise": SynthProgram(
        "BPNoise",
        (ParamSpec("lp_cut", 50.0, 1000.0, 900.0), ParamSpec("hp_cut", 1.0, 120.0, 100.0)),
        uses_noise=True,
    ),
    "AddSineSaw": SynthProgram(
        "AddSineSaw",
        (ParamSpec("saw_freq", 20.0, 1000.0, 800.0), ParamSpec("sine_freq", 20.0, 1000.0, 300.0)),
        uses_noise=False,
    ),
    "NoiseAM": SynthProgram(
        "NoiseAM",
        (ParamSpec("amp", 0.0, 5.0, 0.5), ParamSpec("modulator", 0.0, 4.0, 0.5)),
        uses_noise=True,
    ),
    "SineSawAM": SynthProgram(
        "SineSawAM",
        (ParamSpec("carrier", 20.0, 1000.0, 100.0), ParamSpec("amp", 1.0, 20.0, 6.0)),
        uses_noise=False,
    ),
}

#: One-parameter simplifications used only by the landscape sweeps.
SWEEP_VARIANTS: dict[str, SynthProgram] = {
    "HPNoise": SynthProgram(
        "HPNoise", (ParamSpec("hp_cut", 100.0, 20000.0, 5000.0),), uses_noise=True
    ),
    "SNoiseAM": SynthProgram(
        "SNoiseAM", (ParamSpec("rate", 0.1, 20.0, 4.0),), uses_noise=True
    ),
}


def get_program(program_id: str) -> SynthProgram:
    if program_id in PROGRAMS:
        return PROGRAMS[program_id]
    if program_id in SWEEP_VARIANTS:
        return SWEEP_VARIANTS[program_id]
    raise KeyError(f"unknown program {program_id!r}")


def sample_params(program: SynthProgram, rng: np.random.Generator) -> ParamVector:
    """Draw each parameter independently and uniformly over its range."""
    raw = tuple(rng.uniform(p.minimum, p.maximum) for p in program.params)
    return ParamVector.from_raw(program, raw)


#: Divergence is declared when a raw value leaves the range widened by half
#: a span on each side.
DIVERGENCE_MARGIN = 0.5


def clamp_for_render(raw, program: SynthProgram) -> tuple[ParamVector, bool]:
    """Clamp raw values into their declared ranges; flag runs whose raw
    parameters have wandered more than half a span outside."""
    clamped = []
    diverged = False
    for r, p in zip(raw, program.params):
        r = float(r)
        if r < p.minimum - DIVERGENCE_MARGIN * p.span or r > p.maximum + DIVERGENCE_MARGIN * p.span:
            diverged = True
        clamped.append(min(max(r, p.minimum), p.maximum))
    return ParamVector.from_raw(program, clamped), diverged


def render(program: SynthProgram, params, seed: int = 0, length: int = K.SIGNAL_LENGTH):
    """Render one second of audio. ``params`` are raw-unit scalars (real or
    dual), already inside their declared ranges."""
    for prm, spec in zip(params, program.params):
        v = dn.value_of(prm)
        if not spec.minimum <= v <= spec.maximum:
            raise ValueError(f"{spec.name}={v} outside [{spec.minimum}, {spec.maximum}]")

    pid = program.program_id
    if pid == "BPNoise":
        lp_cut, hp_cut = params
        x = K.noise(length, seed)
        x = K.butterworth(x, 3, lp_cut, "lowpass")
        return K.butterworth(x, 10, hp_cut, "highpass")
    if pid == "AddSineSaw":
        saw_freq, sine_freq = params
        return dn.add(K.sine_osc(sine_freq, length), K.saw_osc(saw_freq, length))
    if pid == "NoiseAM":
        amp, modulator = params
        return dn.mul(dn.mul(K.noise(length, seed), K.sine_osc(modulator, length)), amp)
    if pid == "SineSawAM":
        carrier, amp = params
        return dn.mul(K.sine_osc(amp, length), K.saw_osc(carrier, length))
    if pid == "HPNoise":
        (hp_cut,) = params
        return K.butterworth(K.noise(length, seed), 10, hp_cut, "highpass")
    if pid == "SNoiseAM":
        (rate,) = params
        return dn.mul(dn.mul(K.noise(length, seed), K.sine_osc(rate, length)), 0.5)
    raise KeyError(f"unknown program {pid!r}")


def render_normalized(program: SynthProgram, normalized, seed: int = 0):
    """Render from parameters in normalized [0, 1] space (real or dual).

    Values are clamped with pass-through gradients inside the range and zero
    gradients outside, then mapped to raw units; the span factor enters the
    chain rule automatically.
    """
    raw = []
    for n, spec in zip(normalized, program.params):
        clamped = dn.clip_passthrough(n, 0.0, 1.0)
        raw.append(dn.add(spec.minimum, dn.mul(spec.span, clamped)))
    return render(program, raw, seed)


def peak_normalize(x: np.ndarray, floor: float = 1e-9) -> np.ndarray:
    """Scale to unit peak; silence (peak below ``floor``) is left unchanged."""
    peak = np.max(np.abs(x))
    if peak < floor:
        return x
    return x / peak


def peak_normalize_dual(x, floor: float = 1e-9):
    """Peak normalization that works on dual signals: the gradient flows
    through the peak sample (argmax subgradient)."""
    values = dn.value_of(x)
    idx = int(np.argmax(np.abs(values)))
    if abs(values[idx]) < floor:
        return x
    return dn.div(x, dn.absolute(x[idx]))
