"""Blinded listening-test service.

Samples a fixed number of trials per (program, loss) pair — the same sample
for every rater — serves anonymized audio pairs in per-rater randomized
order, and appends Likert scores to a line-delimited ratings file. Restarts
lose nothing: sessions rebuild deterministically from the seed registry and
cursors replay from the ratings file.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from . import harness as H

RATINGS_FILENAME = "ratings.jsonl"
SESSIONS_FILENAME = "sessions.json"


class SessionError(ValueError):
    pass


@dataclass
class RatingSession:
    """One rater's queue of blinded pairs. The queue is globally shuffled so
    position reveals nothing about program or loss."""

    rater_id: str
    queue: list[str]  # opaque pair tokens
    completed: int = 0
    _trial_by_token: dict = field(default_factory=dict, repr=False)

    @property
    def total(self) -> int:
        return len(self.queue)

    @property
    def done(self) -> bool:
        return self.completed >= len(self.queue)


def _token_key(seed: int) -> bytes:
    return hashlib.sha256(f"soundmatch-tokens|{seed}".encode()).digest()


def pair_token(trial_id: str, seed: int) -> str:
    return hmac.new(_token_key(seed), trial_id.encode(), "sha256").hexdigest()[:16]


def _stratified_sample(records, per_combo: int, seed: int) -> list:
    """The shared trial sample: ``per_combo`` draws per (program, loss),
    without replacement, identical for every rater."""
    combos: dict = {}
    for rec in sorted(records, key=lambda r: r.trial_id):
        if rec.failed_numeric:
            continue
        combos.setdefault((rec.program, rec.loss), []).append(rec)
    sampled = []
    for key in sorted(combos):
        pool = combos[key]
        if len(pool) < per_combo:
            raise SessionError(
                f"combo {key[0]}/{key[1]} has only {len(pool)} trials; need {per_combo}"
            )
        rng = np.random.default_rng(
            int.from_bytes(
                hashlib.sha256(f"sample|{seed}|{key[0]}|{key[1]}".encode()).digest()[:8], "big"
            )
        )
        idx = rng.choice(len(pool), size=per_combo, replace=False)
        sampled.extend(pool[i] for i in sorted(idx))
    return sampled


def build_session(records, rater_id: str, per_combo: int, seed: int) -> RatingSession:
    """Stratified shared sample, shuffled per (seed, rater)."""
    sampled = _stratified_sample(records, per_combo, seed)
    order_rng = np.random.default_rng(
        int.from_bytes(
            hashlib.sha256(f"order|{seed}|{rater_id}".encode()).digest()[:8], "big"
        )
    )
    order = order_rng.permutation(len(sampled))
    tokens = [pair_token(sampled[i].trial_id, seed) for i in order]
    trial_by_token = {pair_token(r.trial_id, seed): r.trial_id for r in sampled}
    return RatingSession(rater_id, tokens, 0, trial_by_token)


def next_pair(session: RatingSession) -> dict:
    """The current unrated pair; idempotent until a rating is accepted."""
    if session.done:
        return {"done": True, "completed": session.completed}
    token = session.queue[session.completed]
    return {
        "pair": token,
        "target": f"/audio/{token}/target.wav",
        "output": f"/audio/{token}/output.wav",
        "index": session.completed + 1,
        "total": session.total,
    }


def submit_rating(session: RatingSession, token: str, score) -> dict:
    """Validate against the session cursor; returns the persistable record.

    Raises ``SessionError`` with ``.status`` 422 for bad scores and 409 for
    stale, unknown, or already-rated tokens.
    """
    if not isinstance(score, int) or isinstance(score, bool) or not 1 <= score <= 5:
        err = SessionError(f"score must be an integer in 1..5, got {score!r}")
        err.status = 422
        raise err
    if session.done or token != session.queue[session.completed]:
        err = SessionError("token does not match the current pair (stale or duplicate)")
        err.status = 409
        raise err
    trial_id = session._trial_by_token[token]
    session.completed += 1
    return {
        "trial_id": trial_id,
        "rater_id": session.rater_id,
        "score": score,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


class ListeningService:
    """Service state shared by all raters; HTTP layer sits on top."""

    def __init__(self, run_dir, ratings_path=None, per_combo: int = 40, seed: int = 0):
        self.run_dir = Path(run_dir)
        self.records = H.read_trials(self.run_dir / H.DATASET_FILENAME)
        self.trials = {r.trial_id: r for r in self.records}
        self.per_combo = per_combo
        self.seed = seed
        self.ratings_path = Path(ratings_path) if ratings_path else self.run_dir / RATINGS_FILENAME
        self.sessions_path = self.run_dir / SESSIONS_FILENAME
        self._lock = threading.Lock()
        self._sessions: dict[str, RatingSession] = {}
        self._restore()

    # -- persistence --------------------------------------------------------

    def _restore(self) -> None:
        registry = {}
        if self.sessions_path.exists():
            registry = json.loads(self.sessions_path.read_text(encoding="utf-8"))
        completed: dict[str, int] = {}
        if self.ratings_path.exists():
            with open(self.ratings_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        rec = json.loads(line)
                        completed[rec["rater_id"]] = completed.get(rec["rater_id"], 0) + 1
        for rater_id in registry:
            session = build_session(self.records, rater_id, self.per_combo, self.seed)
            session.completed = completed.get(rater_id, 0)
            self._sessions[rater_id] = session

    def _register(self, rater_id: str) -> RatingSession:
        session = build_session(self.records, rater_id, self.per_combo, self.seed)
        self._sessions[rater_id] = session
        registry = {r: {"seed": self.seed} for r in self._sessions}
        self.sessions_path.write_text(
            json.dumps(registry, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return session

    # -- operations ---------------------------------------------------------

    def session(self, rater_id: str) -> RatingSession:
        with self._lock:
            if rater_id not in self._sessions:
                return self._register(rater_id)
            return self._sessions[rater_id]

    def get_next(self, rater_id: str) -> dict:
        return next_pair(self.session(rater_id))

    def rate(self, rater_id: str, token: str, score) -> dict:
        session = self.session(rater_id)
        with self._lock:
            record = submit_rating(session, token, score)
            with open(self.ratings_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        return {"ok": True, "completed": session.completed, "total": session.total}

    def audio_bytes(self, token: str, which: str) -> bytes:
        trial_id = None
        for session in self._sessions.values():
            if token in session._trial_by_token:
                trial_id = session._trial_by_token[token]
                break
        if trial_id is None:
            err = SessionError("unknown audio token")
            err.status = 404
            raise err
        suffix = "target" if which == "target" else "final"
        wav_path = self.run_dir / H.WAV_DIRNAME / f"{trial_id}.{suffix}.wav"
        if not wav_path.exists():
            # dataset may have been produced without WAV export
            wav_path.parent.mkdir(parents=True, exist_ok=True)
            H.export_trial_wavs(self.trials[trial_id], wav_path.parent)
        return wav_path.read_bytes()

    def serve_forever(self, host: str = "127.0.0.1", port: int = 8765):
        server = self.make_server(host, port)
        server.serve_forever()

    def make_server(self, host: str = "127.0.0.1", port: int = 8765) -> ThreadingHTTPServer:
        service = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # quiet
                pass

            def _json(self, status: int, payload: dict) -> None:
                body = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                parts = [p for p in self.path.split("?")[0].split("/") if p]
                try:
                    if len(parts) == 3 and parts[0] == "session" and parts[2] == "next":
                        self._json(200, service.get_next(parts[1]))
                        return
                    if len(parts) == 3 and parts[0] == "audio":
                        which = "target" if parts[2].startswith("target") else "output"
                        data = service.audio_bytes(parts[1], which)
                        self.send_response(200)
                        self.send_header("Content-Type", "audio/wav")
                        self.send_header("Content-Length", str(len(data)))
                        self.send_header("Access-Control-Allow-Origin", "*")
                        self.end_headers()
                        self.wfile.write(data)
                        return
                    if len(parts) == 0 or parts == ["index.html"]:
                        self._serve_ui()
                        return
                    self._json(404, {"error": "not found"})
                except SessionError as exc:
                    self._json(getattr(exc, "status", 400), {"error": str(exc)})

            def _serve_ui(self):
                ui = service.run_dir / "ui" / "index.html"
                if ui.exists():
                    data = ui.read_bytes()
                    self.send_response(200)
                    self.send_header("Content-Type", "text/html")
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                else:
                    self._json(200, {"service": "soundmatch listening test"})

            def do_POST(self):
                parts = [p for p in self.path.split("?")[0].split("/") if p]
                if len(parts) != 3 or parts[0] != "session" or parts[2] != "rating":
                    self._json(404, {"error": "not found"})
                    return
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    payload = json.loads(self.rfile.read(length) or b"{}")
                except (ValueError, json.JSONDecodeError):
                    self._json(400, {"error": "invalid JSON body"})
                    return
                try:
                    result = service.rate(parts[1], payload.get("pair", ""), payload.get("score"))
                    self._json(200, result)
                except SessionError as exc:
                    self._json(getattr(exc, "status", 400), {"error": str(exc)})

            def do_OPTIONS(self):
                self.send_response(204)
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
                self.send_header("Access-Control-Allow-Headers", "Content-Type")
                self.end_headers()

        return ThreadingHTTPServer((host, port), Handler)
