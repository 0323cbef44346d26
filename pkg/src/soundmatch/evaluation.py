"""Automatic performance measures and listening-score ingestion.

Parameter distance and the multi-scale spectral distance are computed on
completed trials; Likert scores arrive as line-delimited records from the
listening service (or a file) and are pooled per (program, loss) pair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels as K
from . import synths as SY

MSS_WINDOWS = (512, 1024, 2048, 4096)
MSS_HOP = 100


@dataclass(frozen=True)
class EvalResult:
    trial_id: str
    p_loss: float
    mss: float

    def to_record(self) -> dict:
        return {"trial_id": self.trial_id, "p_loss": self.p_loss, "mss": self.mss}

    @classmethod
    def from_record(cls, rec: dict) -> "EvalResult":
        return cls(rec["trial_id"], float(rec["p_loss"]), float(rec["mss"]))


def p_loss(final: SY.ParamVector, target: SY.ParamVector) -> float:
    """Mean absolute difference between normalized parameter vectors.

    Both vectors are clamped to [0, 1] first, so the result lies in [0, 1]
    regardless of parameter count.
    """
    a = np.clip(np.asarray(final.normalized, dtype=np.float64), 0.0, 1.0)
    b = np.clip(np.asarray(target.normalized, dtype=np.float64), 0.0, 1.0)
    return float(np.mean(np.abs(a - b)))


def mss(output: np.ndarray, target: np.ndarray) -> float:
    """Multi-scale spectral distance: unweighted mean over four window
    lengths of the mean absolute spectrogram difference. Both signals are
    peak-normalized before analysis."""
    a = SY.peak_normalize(np.asarray(output, dtype=np.float64))
    b = SY.peak_normalize(np.asarray(target, dtype=np.float64))
    total = 0.0
    for w in MSS_WINDOWS:
        sa = K.stft_magnitude(a, fft_length=w, window_length=w, hop=MSS_HOP).magnitudes
        sb = K.stft_magnitude(b, fft_length=w, window_length=w, hop=MSS_HOP).magnitudes
        total += float(np.mean(np.abs(sa - sb)))
    return total / len(MSS_WINDOWS)


def evaluate_trial(record) -> EvalResult:
    """Re-render target and final output for one trial and score it."""
    program = SY.get_program(record.program)
    target_sig = SY.render(program, record.target.raw, seed=record.noise_seed)
    final_sig = SY.render(program, record.final.raw, seed=record.noise_seed)
    return EvalResult(
        trial_id=record.trial_id,
        p_loss=p_loss(record.final, record.target),
        mss=mss(final_sig, target_sig),
    )


# ---------------------------------------------------------------------------
# Likert scores
# ---------------------------------------------------------------------------

LIKERT_MIN, LIKERT_MAX = 1, 5


@dataclass(frozen=True)
class LikertScore:
    trial_id: str
    rater_id: str
    score: int
    timestamp: str

    def to_record(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "rater_id": self.rater_id,
            "score": self.score,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "LikertScore":
        return cls(rec["trial_id"], rec["rater_id"], int(rec["score"]), rec["timestamp"])


@dataclass(frozen=True)
class RejectedScore:
    record: dict
    reason: str


@dataclass
class ScoredDataset:
    """Accepted Likert scores plus per-(program, loss) pooled score lists."""

    scores: list[LikertScore]
    pooled: dict[tuple[str, str], list[int]]
    rejected: list[RejectedScore]


def ingest_likert(records, trials_by_id: dict) -> ScoredDataset:
    """Validate and attach Likert records to trials.

    Rejects out-of-range scores, unknown trial ids, and duplicate
    (trial, rater) submissions; pooled lists concatenate raters' scores.
    """
    seen: set[tuple[str, str]] = set()
    accepted: list[LikertScore] = []
    rejected: list[RejectedScore] = []
    pooled: dict[tuple[str, str], list[int]] = {}
    for rec in records:
        raw = rec.to_record() if isinstance(rec, LikertScore) else dict(rec)
        try:
            score = LikertScore.from_record(raw)
        except (KeyError, TypeError, ValueError):
            rejected.append(RejectedScore(raw, "malformed record"))
            continue
        if not LIKERT_MIN <= score.score <= LIKERT_MAX:
            rejected.append(RejectedScore(raw, f"score {score.score} outside 1..5"))
            continue
        trial = trials_by_id.get(score.trial_id)
        if trial is None:
            rejected.append(RejectedScore(raw, f"unknown trial id {score.trial_id!r}"))
            continue
        key = (score.trial_id, score.rater_id)
        if key in seen:
            rejected.append(RejectedScore(raw, "duplicate (trial, rater) submission"))
            continue
        seen.add(key)
        accepted.append(score)
        pooled.setdefault((trial.program, trial.loss), []).append(score.score)
    return ScoredDataset(accepted, pooled, rejected)


def read_likert_file(path) -> list[LikertScore]:
    scores = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                scores.append(LikertScore.from_record(json.loads(line)))
    return scores
