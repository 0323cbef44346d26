"""Evaluation measures and Likert ingestion."""

import numpy as np
import pytest

from soundmatch import evaluation as EV
from soundmatch import kernels as K
from soundmatch import synths as S


def _pv(prog_id, normalized):
    return S.ParamVector.from_normalized(S.PROGRAMS[prog_id], normalized)


class TestPLoss:
    def test_identical(self):
        pv = _pv("NoiseAM", (0.3, 0.7))
        assert EV.p_loss(pv, pv) == 0.0

    def test_maximal(self):
        assert EV.p_loss(_pv("NoiseAM", (0.0, 0.0)), _pv("NoiseAM", (1.0, 1.0))) == 1.0

    def test_mean_of_component_differences(self):
        got = EV.p_loss(_pv("NoiseAM", (0.2, 0.6)), _pv("NoiseAM", (0.4, 0.2)))
        assert got == pytest.approx(0.3)

    def test_symmetry_and_clamping(self):
        a = S.ParamVector((0.0, 0.0), (-0.5, 0.2))
        b = S.ParamVector((0.0, 0.0), (0.5, 0.9))
        assert EV.p_loss(a, b) == EV.p_loss(b, a)
        assert 0.0 <= EV.p_loss(a, b) <= 1.0


class TestMss:
    def test_identity(self):
        x = S.render(S.PROGRAMS["AddSineSaw"], (100.0, 300.0))
        assert EV.mss(x, x) == 0.0

    def test_symmetry(self):
        a = S.render(S.PROGRAMS["AddSineSaw"], (100.0, 300.0))
        b = S.render(S.PROGRAMS["NoiseAM"], (1.0, 2.0), seed=3)
        assert EV.mss(a, b) == pytest.approx(EV.mss(b, a))

    def test_silence_vs_tone_reduces_to_one_sided_norm(self):
        tone = K.sine_osc(440.0, K.SIGNAL_LENGTH)
        got = EV.mss(np.zeros(K.SIGNAL_LENGTH), tone)
        expected = 0.0
        for w in EV.MSS_WINDOWS:
            mags = K.stft_magnitude(tone, w, w, EV.MSS_HOP).magnitudes
            expected += float(np.mean(np.abs(mags)))
        expected /= len(EV.MSS_WINDOWS)
        assert got == pytest.approx(expected, rel=1e-4)
        assert got > 0

    def test_polarity_invariance(self):
        a = S.render(S.PROGRAMS["NoiseAM"], (1.0, 2.0), seed=3)
        b = S.render(S.PROGRAMS["NoiseAM"], (2.0, 1.0), seed=3)
        assert EV.mss(a, b) == pytest.approx(EV.mss(-a, b), rel=1e-9)


class _FakeTrial:
    def __init__(self, trial_id, program="NoiseAM", loss="L1Spec"):
        self.trial_id = trial_id
        self.program = program
        self.loss = loss


class TestIngestLikert:
    def _records(self, n_trials=3, raters=("r1", "r2"), score=4):
        recs = []
        for t in range(n_trials):
            for r in raters:
                recs.append(
                    {
                        "trial_id": f"t{t}",
                        "rater_id": r,
                        "score": score,
                        "timestamp": "2026-01-01T00:00:00+00:00",
                    }
                )
        return recs

    def _trials(self, n=3):
        return {f"t{i}": _FakeTrial(f"t{i}") for i in range(n)}

    def test_pooled_concatenates_raters(self):
        out = EV.ingest_likert(self._records(), self._trials())
        assert len(out.scores) == 6
        assert out.pooled[("NoiseAM", "L1Spec")] == [4] * 6
        assert not out.rejected

    def test_duplicate_rejected(self):
        recs = self._records()
        recs.append(recs[0])
        out = EV.ingest_likert(recs, self._trials())
        assert len(out.scores) == 6
        assert len(out.rejected) == 1
        assert "duplicate" in out.rejected[0].reason

    def test_out_of_range_score_rejected(self):
        recs = self._records()
        recs[0]["score"] = 6
        out = EV.ingest_likert(recs, self._trials())
        assert any("outside 1..5" in r.reason for r in out.rejected)

    def test_unknown_trial_rejected(self):
        recs = self._records()
        recs[0]["trial_id"] = "missing"
        out = EV.ingest_likert(recs, self._trials())
        assert any("unknown trial" in r.reason for r in out.rejected)

    def test_malformed_rejected(self):
        out = EV.ingest_likert([{"rater_id": "x"}], self._trials())
        assert out.rejected and out.rejected[0].reason == "malformed record"

    def test_forty_trials_two_raters_pools_eighty(self):
        trials = {f"t{i}": _FakeTrial(f"t{i}") for i in range(40)}
        recs = []
        for i in range(40):
            for r in ("a", "b"):
                recs.append(
                    {"trial_id": f"t{i}", "rater_id": r, "score": 3, "timestamp": "now"}
                )
        out = EV.ingest_likert(recs, trials)
        assert len(out.pooled[("NoiseAM", "L1Spec")]) == 80


def test_evaluate_trial_does_not_mutate_record():
    from soundmatch import optim as OP

    rec = OP.run_trial(S.PROGRAMS["NoiseAM"], "L1Spec", 5, OP.MatchConfig(max_iterations=2))
    before = rec.to_record()
    result = EV.evaluate_trial(rec)
    assert rec.to_record() == before
    assert result.trial_id == rec.trial_id
    assert 0.0 <= result.p_loss <= 1.0 and result.mss >= 0.0
