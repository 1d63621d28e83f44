"""Command-line surface: train, eval, analyze, replay, serve.

``analyze`` and ``replay`` can run against a live service (``--server URL``)
or locally; ``train``/``eval`` are local batch jobs; ``serve`` starts the
FastAPI app. Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from cleanuplab.errors import CleanupError, ConfigurationError, RecordCorruptionError


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument("--config", default=None, help="experiment config JSON path")
    parser.add_argument("--out", default="runs", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cleanuplab")
    sub = parser.add_subparsers(dest="verb", required=True)

    train = sub.add_parser("train", help="train a population for one condition")
    _add_common(train)
    train.add_argument(
        "--condition", choices=["identifiable", "anonymous"], required=True
    )
    train.add_argument("--desk-scale", action="store_true", help="use desk-scale sizing")
    train.add_argument("--progress-every", type=int, default=50)

    evaluate = sub.add_parser("eval", help="frozen-policy evaluation of checkpoints")
    _add_common(evaluate)
    evaluate.add_argument("--checkpoints", required=True, help="checkpoint directory")
    evaluate.add_argument("--groups", type=int, default=24)
    evaluate.add_argument("--episodes", type=int, default=7)
    evaluate.add_argument(
        "--condition", choices=["identifiable", "anonymous"], default=None,
        help="override the checkpoint manifest's condition",
    )

    analyze = sub.add_parser("analyze", help="compute metrics/statistics from records")
    _add_common(analyze)
    analyze.add_argument("--logs", required=True, help="directory of episode records")
    analyze.add_argument("--dilemma", action="store_true")
    analyze.add_argument("--server", default=None, help="URL of a running service")

    rep = sub.add_parser("replay", help="verify a record replays bit-exactly")
    _add_common(rep)
    rep.add_argument("record", help="record file path")
    rep.add_argument("--server", default=None, help="URL of a running service")

    serve = sub.add_parser("serve", help="host live play sessions and the API")
    _add_common(serve)
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--sessions", type=int, default=16)
    serve.add_argument(
        "--order",
        choices=["auto", "identifiable-first", "anonymous-first"],
        default="auto",
    )
    serve.add_argument("--tick-ms", type=int, default=60)
    serve.add_argument("--episode-steps", type=int, default=None)
    serve.add_argument("--episodes-per-condition", type=int, default=7)
    serve.add_argument("--tutorial-cap", type=int, default=600)
    serve.add_argument("--lockstep", action="store_true")
    return parser


def _load_experiment(args):
    from cleanuplab.experiment import ExperimentConfig, load_config
    from cleanuplab.env.config import preset
    from cleanuplab.experiment import AnalysisOptions
    from cleanuplab.training.orchestrate import PopulationConfig

    if args.config:
        cfg = load_config(args.config)
    else:
        pop = (
            PopulationConfig.desk_scale()
            if getattr(args, "desk_scale", False)
            else PopulationConfig()
        )
        cfg = ExperimentConfig(
            env=preset("agent-paper"),
            env_preset="agent-paper",
            conditions=("identifiable", "anonymous"),
            master_seed=0,
            population=pop,
            analysis=AnalysisOptions(),
        )
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, master_seed=args.seed)
    return cfg


def cmd_train(args) -> int:
    from cleanuplab.env.grid import builtin_map
    from cleanuplab.experiment import write_manifest
    from cleanuplab.training.orchestrate import run_training

    cfg = _load_experiment(args)
    grid = builtin_map(cfg.map_name)
    out_dir = os.path.join(args.out, f"train-{args.condition}-seed{cfg.master_seed}")
    os.makedirs(out_dir, exist_ok=True)
    run_training(
        cfg.population,
        cfg.env,
        grid,
        args.condition,
        cfg.master_seed,
        out_dir=out_dir,
        metrics_path=os.path.join(out_dir, "training_metrics.jsonl"),
        progress_every=args.progress_every,
    )
    write_manifest(cfg, out_dir, {"checkpoints": out_dir})
    print(f"checkpoints written to {out_dir}")
    return 0


def cmd_eval(args) -> int:
    from cleanuplab.env.grid import builtin_map
    from cleanuplab.nets import NetConfig
    from cleanuplab.training.orchestrate import (
        PopulationConfig,
        load_population,
        run_evaluation,
    )

    cfg = _load_experiment(args)
    net_cfg = NetConfig(window=cfg.env.obs_window)
    agents, manifest = load_population(args.checkpoints, net_cfg)
    condition = args.condition or manifest["condition"]
    pop_cfg = dataclasses.replace(
        cfg.population,
        population_size=len(agents),
        evaluation_groups=args.groups,
        evaluation_episodes=args.episodes,
    )
    grid = builtin_map(cfg.map_name)
    records = run_evaluation(
        agents, pop_cfg, cfg.env, grid, condition, cfg.master_seed,
        groups=args.groups, episodes=args.episodes,
    )
    out_dir = os.path.join(args.out, f"eval-{condition}-seed{cfg.master_seed}")
    os.makedirs(out_dir, exist_ok=True)
    for i, record in enumerate(records):
        record.write(os.path.join(out_dir, f"{record.group_id}_ep{record.episode_index:02d}.jsonl"))
    print(f"{len(records)} episode records written to {out_dir}")
    return 0


def cmd_analyze(args) -> int:
    if args.server:
        import httpx

        response = httpx.post(
            f"{args.server.rstrip('/')}/analyze",
            json={"logs_dir": os.path.abspath(args.logs),
                  "out_dir": os.path.abspath(args.out),
                  "dilemma": args.dilemma},
            timeout=600.0,
        )
        if response.status_code != 200:
            print(f"server error: {response.status_code} {response.text}", file=sys.stderr)
            return 2
        print(json.dumps(response.json(), indent=2))
        return 0
    from cleanuplab.experiment import AnalysisOptions, analyze_directory

    report = analyze_directory(args.logs, args.out, AnalysisOptions(dilemma=args.dilemma))
    print(f"analyzed {len(report['episodes'])} episodes; artifacts in {args.out}")
    with open(os.path.join(args.out, "summary.txt"), encoding="utf-8") as fh:
        print(fh.read())
    return 0


def cmd_replay(args) -> int:
    if args.server:
        import httpx

        response = httpx.post(
            f"{args.server.rstrip('/')}/replay",
            json={"record_path": os.path.abspath(args.record)},
            timeout=600.0,
        )
        if response.status_code != 200:
            print(f"replay failed: {response.text}", file=sys.stderr)
            return 2
        print(json.dumps(response.json(), indent=2))
        return 0
    from cleanuplab.records import read_record, replay

    record = read_record(args.record)
    replay(record)
    print(f"replay ok: {record.length} steps, digest {record.final_digest}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from cleanuplab.env.config import preset
    from cleanuplab.play.session import SessionConfig
    from cleanuplab.service.app import ServiceSettings, create_app

    env = preset("human-paper")
    if args.episode_steps:
        env = dataclasses.replace(env, episode_length=args.episode_steps)
    session_config = SessionConfig(
        env=env,
        tick_ms=args.tick_ms,
        episodes_per_condition=args.episodes_per_condition,
        tutorial_step_cap=args.tutorial_cap,
        seed=args.seed or 0,
        lockstep=args.lockstep,
    )
    static_dir = None
    for candidate in ("frontend", os.path.join(os.path.dirname(__file__), "..", "..", "frontend")):
        if os.path.isfile(os.path.join(candidate, "index.html")):
            static_dir = os.path.abspath(candidate)
            break
    settings = ServiceSettings(
        session_config=session_config,
        order=args.order,
        max_sessions=args.sessions,
        records_dir=os.path.join(args.out, "session_records"),
        static_dir=static_dir,
    )
    app = create_app(settings)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "train": cmd_train,
        "eval": cmd_eval,
        "analyze": cmd_analyze,
        "replay": cmd_replay,
        "serve": cmd_serve,
    }
    try:
        return handlers[args.verb](args)
    except (ConfigurationError, RecordCorruptionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CleanupError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
