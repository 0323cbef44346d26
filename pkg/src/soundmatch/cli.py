"""Command-line surface: run the trial matrix, sweep loss landscapes,
evaluate and rank datasets, export audio, and serve the listening test."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness as H
from . import stats as ST
from .kernels import ConfigError

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="soundmatch",
        description="Differentiable iterative sound-matching benchmark",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the (program x loss x trial) matrix")
    run.add_argument("--config", type=str, default=None, help="JSON run config file")
    run.add_argument("--seed", type=int, default=None, help="master seed override")
    run.add_argument("--workers", type=int, default=None, help="worker process count")
    run.add_argument("--out", type=str, default=None, help="output directory")
    run.add_argument("--trials", type=int, default=None, help="trials per combo override")
    run.add_argument("--no-wav", action="store_true", help="skip WAV export")

    sweep = sub.add_parser("sweep", help="one-parameter loss landscape sweep")
    sweep.add_argument("--variant", type=str, default="hp-noise", help="hp-noise | s-noise-am")
    sweep.add_argument("--grid", type=int, default=128)
    sweep.add_argument("--target", type=float, default=None, help="target parameter value")
    sweep.add_argument("--seed", type=int, default=H.DEFAULT_MASTER_SEED)
    sweep.add_argument("--out", type=str, default=None, help="output table path (.tsv)")

    ev = sub.add_parser("evaluate", help="score completed trials with P-Loss and MSS")
    ev.add_argument("--out", type=str, required=True, help="run output directory")
    ev.add_argument("--include-failed", action="store_true")

    rank = sub.add_parser("rank", help="bootstrap + Kruskal-Wallis + Scott-Knott ranking")
    rank.add_argument("--out", type=str, required=True, help="run output directory")
    rank.add_argument("--likert", type=str, default=None, help="Likert ratings file (jsonl)")
    rank.add_argument("--bootstrap-k", type=int, default=ST.BOOTSTRAP_K)
    rank.add_argument("--seed", type=int, default=0)

    export = sub.add_parser("export-wav", help="regenerate audio for trial ids")
    export.add_argument("--out", type=str, required=True, help="run output directory")
    export.add_argument("trial_ids", nargs="+", help="trial ids to export")

    serve = sub.add_parser("serve", help="serve the blinded listening test")
    serve.add_argument("--out", type=str, required=True, help="run output directory")
    serve.add_argument("--host", type=str, default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8765)
    serve.add_argument("--per-combo", type=int, default=40)
    serve.add_argument("--seed", type=int, default=H.DEFAULT_MASTER_SEED)
    serve.add_argument("--ratings", type=str, default=None, help="ratings output file")

    return parser


_VARIANTS = {"hp-noise": "HPNoise", "s-noise-am": "SNoiseAM"}


def _cmd_run(args) -> int:
    overrides = {
        "master_seed": args.seed,
        "workers": args.workers,
        "out_dir": args.out,
        "trials_per_combo": args.trials,
    }
    if args.config:
        config = H.RunConfig.from_file(args.config, overrides)
    else:
        config = H.RunConfig(**{k: v for k, v in overrides.items() if v is not None})
    if args.no_wav:
        config.write_wav = False
    dataset = H.run_matrix(config)
    print(f"dataset: {dataset}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    if args.variant not in _VARIANTS:
        raise ConfigError(f"unknown sweep variant {args.variant!r}; use hp-noise or s-noise-am")
    spec = H.SweepSpec(
        variant=_VARIANTS[args.variant],
        grid_size=args.grid,
        target_value=args.target,
        master_seed=args.seed,
    )
    table = H.sweep_landscape(spec)
    out = Path(args.out) if args.out else Path(f"sweep_{args.variant}.tsv")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(table.to_tsv(), encoding="utf-8")
    print(f"sweep table: {out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    path = H.evaluate_dataset(args.out, include_failed=args.include_failed)
    print(f"evaluations: {path}")
    return EXIT_OK


def _cmd_rank(args) -> int:
    report = H.rank_dataset(
        args.out, likert_path=args.likert, bootstrap_k=args.bootstrap_k, seed=args.seed
    )
    print(ST.render_table(report))
    print(f"report: {Path(args.out) / H.RANKING_FILENAME}")
    return EXIT_OK


def _cmd_export_wav(args) -> int:
    out_dir = Path(args.out)
    trials = {r.trial_id: r for r in H.read_trials(out_dir / H.DATASET_FILENAME)}
    wav_dir = out_dir / H.WAV_DIRNAME
    wav_dir.mkdir(parents=True, exist_ok=True)
    missing = [t for t in args.trial_ids if t not in trials]
    if missing:
        raise ConfigError(f"unknown trial ids: {missing}")
    for tid in args.trial_ids:
        H.export_trial_wavs(trials[tid], wav_dir)
    print(f"exported {len(args.trial_ids)} trial pairs to {wav_dir}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .service import ListeningService

    out_dir = Path(args.out)
    ratings = Path(args.ratings) if args.ratings else out_dir / "ratings.jsonl"
    service = ListeningService(
        out_dir, ratings_path=ratings, per_combo=args.per_combo, seed=args.seed
    )
    print(json.dumps({"listening_service": f"http://{args.host}:{args.port}"}))
    service.serve_forever(args.host, args.port)
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "evaluate": _cmd_evaluate,
    "rank": _cmd_rank,
    "export-wav": _cmd_export_wav,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors already
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
