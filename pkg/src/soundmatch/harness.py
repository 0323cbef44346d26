"""Experiment orchestration and persistence.

A run config expands into a (program x loss x trial) job list with per-trial
seeds derived from the master seed by stable hashing, so datasets are
independent of worker count and scheduling order. Completed trials append to
a line-delimited dataset; audio pairs are exported as 16-bit WAV.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import multiprocessing
import time
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dual as dn
from . import evaluation as EV
from . import kernels as K
from . import losses as LO
from . import optim as OP
from . import stats as ST
from . import synths as SY
from .kernels import ConfigError

DATASET_FILENAME = "trials.jsonl"
TIMINGS_FILENAME = "timings.jsonl"
EVALS_FILENAME = "evals.jsonl"
RANKING_FILENAME = "ranking.json"
WAV_DIRNAME = "wav"

DEFAULT_MASTER_SEED = 42


@dataclass
class RunConfig:
    programs: list[str] = field(default_factory=lambda: list(SY.PROGRAMS))
    losses: list[str] = field(default_factory=lambda: list(LO.LOSS_IDS))
    trials_per_combo: int = 300
    max_iterations: int = OP.DEFAULT_MAX_ITERATIONS
    lr: float = OP.DEFAULT_LEARNING_RATE
    clip_threshold: float = OP.DEFAULT_CLIP_THRESHOLD
    rms_decay: float = OP.DEFAULT_RMS_DECAY
    rms_eps: float = OP.DEFAULT_RMS_EPS
    sdtw_gamma: float = LO.DEFAULT_SDTW_GAMMA
    jtfs_octaves: int = 8
    jtfs_per_octave: int = 8
    jtfs_rates_hz: list[float] = field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0])
    jtfs_scales_cpc: list[float] = field(default_factory=lambda: [0.0625, 0.125, 0.25])
    normalize_signals: bool = True
    master_seed: int = DEFAULT_MASTER_SEED
    workers: int = 1
    out_dir: str = "runs/default"
    write_wav: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for p in self.programs:
            if p not in SY.PROGRAMS:
                raise ConfigError(f"unknown program {p!r}")
        for l in self.losses:
            if l not in LO.LOSS_IDS:
                raise ConfigError(f"unknown loss {l!r}")
        if self.trials_per_combo < 1:
            raise ConfigError("trials_per_combo must be >= 1")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.clip_threshold <= 0:
            raise ConfigError("clip threshold must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def match_config(self) -> OP.MatchConfig:
        return OP.MatchConfig(
            lr=self.lr,
            max_iterations=self.max_iterations,
            clip_threshold=self.clip_threshold,
            rms_decay=self.rms_decay,
            rms_eps=self.rms_eps,
            sdtw_gamma=self.sdtw_gamma,
            jtfs=LO.JtfsConfig(
                octaves=self.jtfs_octaves,
                per_octave=self.jtfs_per_octave,
                rates_hz=tuple(self.jtfs_rates_hz),
                scales_cpc=tuple(self.jtfs_scales_cpc),
            ),
            normalize_signals=self.normalize_signals,
        )

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if overrides:
            data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def trial_identity(master_seed: int, program: str, loss: str, index: int) -> tuple[str, int]:
    """Stable (trial id, seed): the seed hashes the full coordinate so any
    scheduling produces the same dataset content."""
    trial_id = f"{program}_{loss}_{index:04d}"
    digest = hashlib.sha256(f"{master_seed}|{program}|{loss}|{index}".encode()).digest()
    seed = int.from_bytes(digest[:8], "big") & (2**63 - 1)
    return trial_id, seed


def canonical_json(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def write_wav(path, samples: np.ndarray, sample_rate: int = K.SAMPLE_RATE) -> None:
    """16-bit mono PCM."""
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())


def read_wav(path) -> tuple[np.ndarray, int]:
    with wave.open(str(path), "rb") as wf:
        rate = wf.getframerate()
        pcm = np.frombuffer(wf.readframes(wf.getnframes()), dtype="<i2")
    return pcm.astype(np.float64) / 32767.0, rate


def export_trial_wavs(record: OP.TrialRecord, wav_dir: Path) -> None:
    program = SY.get_program(record.program)
    target = SY.render(program, record.target.raw, seed=record.noise_seed)
    final = SY.render(program, record.final.raw, seed=record.noise_seed)
    write_wav(wav_dir / f"{record.trial_id}.target.wav", SY.peak_normalize(target))
    write_wav(wav_dir / f"{record.trial_id}.final.wav", SY.peak_normalize(final))


def read_trials(path) -> list[OP.TrialRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(OP.TrialRecord.from_record(json.loads(line)))
    return records


_WORKER_CONFIG: RunConfig | None = None


def _worker_init(config: RunConfig) -> None:
    global _WORKER_CONFIG
    _WORKER_CONFIG = config


def _run_job(job: tuple[str, str, int]) -> dict:
    program_id, loss_id, index = job
    config = _WORKER_CONFIG
    trial_id, seed = trial_identity(config.master_seed, program_id, loss_id, index)
    record = OP.run_trial(
        SY.get_program(program_id),
        loss_id,
        seed,
        config.match_config(),
        trial_id=trial_id,
    )
    if config.write_wav:
        export_trial_wavs(record, Path(config.out_dir) / WAV_DIRNAME)
    return {"line": canonical_json(record.to_record()), "trial_id": record.trial_id, "duration_ms": record.duration_ms}


def run_matrix(config: RunConfig) -> Path:
    """Run the full (programs x losses x trials) matrix, resuming past work.

    Jobs execute on a pool of ``config.workers`` processes but results are
    written in job order, so the dataset bytes are independent of worker
    count. Existing trial ids are skipped.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if config.write_wav:
        (out_dir / WAV_DIRNAME).mkdir(exist_ok=True)
    dataset = out_dir / DATASET_FILENAME

    done: set[str] = set()
    if dataset.exists():
        for rec in read_trials(dataset):
            done.add(rec.trial_id)

    jobs = []
    for program_id in config.programs:
        for loss_id in config.losses:
            for index in range(config.trials_per_combo):
                trial_id, _ = trial_identity(config.master_seed, program_id, loss_id, index)
                if trial_id not in done:
                    jobs.append((program_id, loss_id, index))

    if not jobs:
        return dataset

    started = time.perf_counter()
    with open(dataset, "a", encoding="utf-8") as data_fh, open(
        out_dir / TIMINGS_FILENAME, "a", encoding="utf-8"
    ) as timing_fh:
        if config.workers == 1:
            _worker_init(config)
            results = map(_run_job, jobs)
            _consume(results, data_fh, timing_fh)
        else:
            with multiprocessing.Pool(
                config.workers, initializer=_worker_init, initargs=(config,)
            ) as pool:
                _consume(pool.imap(_run_job, jobs), data_fh, timing_fh)
        timing_fh.write(
            json.dumps(
                {
                    "total_s": time.perf_counter() - started,
                    "jobs": len(jobs),
                    "workers": config.workers,
                }
            )
            + "\n"
        )
    return dataset


def _consume(results, data_fh, timing_fh) -> None:
    for res in results:
        data_fh.write(res["line"] + "\n")
        timing_fh.write(
            json.dumps({"trial_id": res["trial_id"], "duration_ms": res["duration_ms"]}) + "\n"
        )


# ---------------------------------------------------------------------------
# evaluation and ranking stages
# ---------------------------------------------------------------------------


def evaluate_dataset(out_dir, include_failed: bool = False) -> Path:
    """Score every completed trial with P-Loss and MSS; failed-numeric trials
    are skipped unless requested."""
    out_dir = Path(out_dir)
    records = read_trials(out_dir / DATASET_FILENAME)
    evals_path = out_dir / EVALS_FILENAME
    with open(evals_path, "w", encoding="utf-8") as fh:
        for rec in records:
            if rec.failed_numeric and not include_failed:
                continue
            fh.write(canonical_json(EV.evaluate_trial(rec).to_record()) + "\n")
    return evals_path


def read_evals(path) -> list[EV.EvalResult]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(EV.EvalResult.from_record(json.loads(line)))
    return out


def rank_dataset(
    out_dir,
    likert_path=None,
    bootstrap_k: int = ST.BOOTSTRAP_K,
    seed: int = 0,
) -> ST.RankingReport:
    """Assemble per-(program, loss) score samples and rank the losses under
    each evaluation method."""
    out_dir = Path(out_dir)
    evals_path = out_dir / EVALS_FILENAME
    if not evals_path.exists():
        raise ConfigError(
            f"no evaluation results at {evals_path}; run the 'evaluate' stage first"
        )
    trials = {r.trial_id: r for r in read_trials(out_dir / DATASET_FILENAME)}
    evals = read_evals(evals_path)

    samples: dict = {}
    for ev in evals:
        trial = trials.get(ev.trial_id)
        if trial is None:
            continue
        prog_methods = samples.setdefault(trial.program, {})
        prog_methods.setdefault("P-Loss", {}).setdefault(trial.loss, []).append(ev.p_loss)
        prog_methods.setdefault("MSS", {}).setdefault(trial.loss, []).append(ev.mss)

    if likert_path is not None:
        scored = EV.ingest_likert(EV.read_likert_file(likert_path), trials)
        for (program, loss), pool in scored.pooled.items():
            samples.setdefault(program, {}).setdefault("Likert", {}).setdefault(loss, []).extend(pool)

    report = ST.build_ranking_report(samples, bootstrap_k=bootstrap_k, seed=seed)
    with open(out_dir / RANKING_FILENAME, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


# ---------------------------------------------------------------------------
# loss-landscape sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepSpec:
    variant: str = "HPNoise"
    grid_size: int = 128
    target_value: float | None = None  # defaults to the variant's default
    master_seed: int = DEFAULT_MASTER_SEED
    sdtw_gamma: float = LO.DEFAULT_SDTW_GAMMA
    normalize_signals: bool = True

    def __post_init__(self):
        if self.variant not in SY.SWEEP_VARIANTS:
            raise ConfigError(f"unknown sweep variant {self.variant!r}")
        if self.grid_size < 16:
            raise ConfigError("sweep grid size must be >= 16")
        spec = SY.SWEEP_VARIANTS[self.variant].params[0]
        if self.target_value is None:
            self.target_value = spec.default
        if not spec.minimum <= self.target_value <= spec.maximum:
            raise ConfigError(
                f"sweep target {self.target_value} outside [{spec.minimum}, {spec.maximum}]"
            )


@dataclass
class SweepTable:
    variant: str
    target_value: float
    grid: np.ndarray
    columns: dict  # loss_id -> normalized values over the grid

    def to_tsv(self) -> str:
        names = list(self.columns)
        lines = ["\t".join([SY.SWEEP_VARIANTS[self.variant].params[0].name] + names)]
        for i, v in enumerate(self.grid):
            cells = [f"{v:.8g}"] + [f"{self.columns[n][i]:.8g}" for n in names]
            lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"

    def target_cell(self) -> int:
        return int(np.argmin(np.abs(self.grid - self.target_value)))


def sweep_landscape(spec: SweepSpec) -> SweepTable:
    """Render the one-parameter program over a uniform grid and compute all
    four losses against a fixed target, min-max normalized per column.

    The target uses an independent noise realization from the sweep renders:
    the landscape describes matching an externally given target, not one
    sharing the candidate's noise draw.
    """
    program = SY.SWEEP_VARIANTS[spec.variant]
    pspec = program.params[0]
    rng = np.random.default_rng(spec.master_seed)
    target_seed = int(rng.integers(0, 2**31 - 1))
    candidate_seed = int(rng.integers(0, 2**31 - 1))

    target_signal = SY.render(program, (spec.target_value,), seed=target_seed)
    if spec.normalize_signals:
        target_signal = SY.peak_normalize(target_signal)
    loss_fns = [LO.make_loss(lid, sdtw_gamma=spec.sdtw_gamma) for lid in LO.LOSS_IDS]
    ctxs = [fn.prepare_target(target_signal) for fn in loss_fns]

    grid = np.linspace(pspec.minimum, pspec.maximum, spec.grid_size)
    raw_columns = {fn.loss_id: np.empty(spec.grid_size) for fn in loss_fns}
    for i, value in enumerate(grid):
        candidate = SY.render(program, (float(value),), seed=candidate_seed)
        if spec.normalize_signals:
            candidate = SY.peak_normalize(candidate)
        for fn, ctx in zip(loss_fns, ctxs):
            raw_columns[fn.loss_id][i] = float(dn.value_of(fn.evaluate(candidate, ctx)))

    columns = {}
    for name, col in raw_columns.items():
        lo, hi = col.min(), col.max()
        columns[name] = (col - lo) / (hi - lo) if hi > lo else np.zeros_like(col)
    return SweepTable(spec.variant, spec.target_value, grid, columns)


# ---------------------------------------------------------------------------
# timing projection
# ---------------------------------------------------------------------------


def read_timings(out_dir) -> list[dict]:
    path = Path(out_dir) / TIMINGS_FILENAME
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def project_runtime_hours(out_dir, trials_total: int) -> float:
    """Extrapolate a full-scale run from recorded per-trial durations."""
    per_trial = [t["duration_ms"] for t in read_timings(out_dir) if "duration_ms" in t]
    if not per_trial:
        raise ValueError("no per-trial timings recorded")
    mean_s = float(np.mean(per_trial)) / 1e3
    return trials_total * mean_s / 3600.0
