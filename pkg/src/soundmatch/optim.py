"""Iterative gradient-descent sound matching.

One trial: sample target and initial parameters, render the target once,
then repeatedly render the candidate with dual-number parameters, evaluate
the loss, clip the gradient, and apply an RMSProp update, up to the
iteration cap. Optimization runs in normalized [0, 1] parameter space so a
single learning rate is meaningful across heterogeneous units.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import dual as dn
from . import losses as LO
from . import synths as SY

DEFAULT_LEARNING_RATE = 0.045
DEFAULT_MAX_ITERATIONS = 200
DEFAULT_CLIP_THRESHOLD = 1.0
DEFAULT_RMS_DECAY = 0.9
DEFAULT_RMS_EPS = 1e-8

#: Normalized parameters are persisted every this many iterations; losses are
#: persisted every iteration. Full fidelity is recoverable by re-rendering.
PARAM_TRAJECTORY_STRIDE = 10


@dataclass
class OptimizerState:
    """RMSProp state over the two normalized parameters."""

    params: np.ndarray
    rms: np.ndarray
    iteration: int = 0


def clip_gradient(grad: np.ndarray, threshold: float = DEFAULT_CLIP_THRESHOLD) -> np.ndarray:
    """Rescale so the l2 norm does not exceed ``threshold``."""
    if threshold <= 0:
        raise ValueError("clip threshold must be positive")
    grad = np.asarray(grad, dtype=np.float64)
    norm = float(np.sqrt(np.sum(grad * grad)))
    if norm > threshold:
        return grad * (threshold / norm)
    return grad.copy()


def rmsprop_step(
    state: OptimizerState,
    grad: np.ndarray,
    lr: float = DEFAULT_LEARNING_RATE,
    decay: float = DEFAULT_RMS_DECAY,
    eps: float = DEFAULT_RMS_EPS,
) -> OptimizerState:
    """One RMSProp update: scale each gradient by the root of the running
    mean of its squares."""
    grad = np.asarray(grad, dtype=np.float64)
    rms = decay * state.rms + (1.0 - decay) * grad * grad
    params = state.params - lr * grad / (np.sqrt(rms) + eps)
    return OptimizerState(params=params, rms=rms, iteration=state.iteration + 1)


@dataclass
class MatchConfig:
    lr: float = DEFAULT_LEARNING_RATE
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    clip_threshold: float = DEFAULT_CLIP_THRESHOLD
    rms_decay: float = DEFAULT_RMS_DECAY
    rms_eps: float = DEFAULT_RMS_EPS
    sdtw_gamma: float = LO.DEFAULT_SDTW_GAMMA
    jtfs: LO.JtfsConfig = field(default_factory=LO.JtfsConfig)
    #: peak-normalize rendered audio before the loss sees it, so overall gain
    #: carries no matching signal (global volume is not a timbral feature)
    normalize_signals: bool = True


@dataclass
class TrialRecord:
    """One complete matching run, in a deterministic, serializable form.

    ``duration_ms`` is measured wall-clock and deliberately excluded from the
    canonical record so datasets are byte-stable across machines and worker
    counts; the harness persists timings in a separate sidecar.
    """

    trial_id: str
    program: str
    loss: str
    trial_seed: int
    noise_seed: int
    target: SY.ParamVector
    initial: SY.ParamVector
    final: SY.ParamVector
    loss_trajectory: list[float]
    param_iterations: list[int]
    param_trajectory: list[list[float]]
    diverged: bool
    failed_numeric: bool
    duration_ms: float | None = None

    def to_record(self) -> dict:
        return {
            "version": 1,
            "trial_id": self.trial_id,
            "program": self.program,
            "loss": self.loss,
            "trial_seed": self.trial_seed,
            "noise_seed": self.noise_seed,
            "target_raw": list(self.target.raw),
            "target_norm": list(self.target.normalized),
            "initial_raw": list(self.initial.raw),
            "initial_norm": list(self.initial.normalized),
            "final_raw": list(self.final.raw),
            "final_norm": list(self.final.normalized),
            "loss_trajectory": self.loss_trajectory,
            "param_iterations": self.param_iterations,
            "param_trajectory": self.param_trajectory,
            "diverged": self.diverged,
            "failed_numeric": self.failed_numeric,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "TrialRecord":
        if rec.get("version") != 1:
            raise ValueError(f"unsupported record version {rec.get('version')!r}")
        return cls(
            trial_id=rec["trial_id"],
            program=rec["program"],
            loss=rec["loss"],
            trial_seed=rec["trial_seed"],
            noise_seed=rec["noise_seed"],
            target=SY.ParamVector(tuple(rec["target_raw"]), tuple(rec["target_norm"])),
            initial=SY.ParamVector(tuple(rec["initial_raw"]), tuple(rec["initial_norm"])),
            final=SY.ParamVector(tuple(rec["final_raw"]), tuple(rec["final_norm"])),
            loss_trajectory=list(rec["loss_trajectory"]),
            param_iterations=list(rec["param_iterations"]),
            param_trajectory=[list(p) for p in rec["param_trajectory"]],
            diverged=rec["diverged"],
            failed_numeric=rec["failed_numeric"],
        )


def run_trial(
    program: SY.SynthProgram,
    loss_id: str,
    trial_seed: int,
    config: MatchConfig | None = None,
    trial_id: str | None = None,
    target_override: SY.ParamVector | None = None,
    initial_override: SY.ParamVector | None = None,
) -> TrialRecord:
    config = config or MatchConfig()
    loss = LO.make_loss(loss_id, sdtw_gamma=config.sdtw_gamma, jtfs_config=config.jtfs)
    rng = np.random.default_rng(trial_seed)
    target = target_override or SY.sample_params(program, rng)
    initial = initial_override or SY.sample_params(program, rng)
    noise_seed = int(rng.integers(0, 2**31 - 1))

    start = time.perf_counter()
    target_signal = SY.render(program, target.raw, seed=noise_seed)
    if config.normalize_signals:
        target_signal = SY.peak_normalize(target_signal)
    ctx = loss.prepare_target(target_signal)

    theta = np.array(initial.normalized, dtype=np.float64)
    state = OptimizerState(params=theta, rms=np.zeros_like(theta))
    losses: list[float] = []
    param_iters: list[int] = []
    param_traj: list[list[float]] = []
    diverged = False
    failed_numeric = False

    def record_params(it: int) -> None:
        param_iters.append(it)
        param_traj.append([float(v) for v in state.params])

    for it in range(config.max_iterations):
        clamped, div_now = SY.clamp_for_render(
            program.denormalize(state.params), program
        )
        diverged = diverged or div_now
        duals = [dn.lift(state.params[i], i) for i in range(program.n_params)]
        candidate = SY.render_normalized(program, duals, seed=noise_seed)
        if config.normalize_signals:
            candidate = SY.peak_normalize_dual(candidate)
        value = loss.evaluate(candidate, ctx)
        lv = float(dn.value_of(value))
        grad = np.asarray(value.partials[: program.n_params], dtype=np.float64)
        losses.append(lv)
        if it % PARAM_TRAJECTORY_STRIDE == 0:
            record_params(it)
        if not np.isfinite(lv) or not np.all(np.isfinite(grad)):
            failed_numeric = True
            break
        grad = clip_gradient(grad, config.clip_threshold)
        state = rmsprop_step(state, grad, config.lr, config.rms_decay, config.rms_eps)

    if not failed_numeric:
        final_candidate = SY.render_normalized(
            program, [float(v) for v in state.params], seed=noise_seed
        )
        if config.normalize_signals:
            final_candidate = SY.peak_normalize_dual(final_candidate)
        losses.append(float(dn.value_of(loss.evaluate(final_candidate, ctx))))
        record_params(config.max_iterations)

    final_pv, div_final = SY.clamp_for_render(program.denormalize(state.params), program)
    diverged = diverged or div_final
    duration_ms = (time.perf_counter() - start) * 1e3

    return TrialRecord(
        trial_id=trial_id or f"{program.program_id}_{loss_id}_{trial_seed}",
        program=program.program_id,
        loss=loss_id,
        trial_seed=trial_seed,
        noise_seed=noise_seed,
        target=target,
        initial=initial,
        final=final_pv,
        loss_trajectory=losses,
        param_iterations=param_iters,
        param_trajectory=param_traj,
        diverged=diverged,
        failed_numeric=failed_numeric,
        duration_ms=duration_ms,
    )
