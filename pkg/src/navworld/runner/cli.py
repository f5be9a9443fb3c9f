"""Command-line entry points.

Subcommands: train, eval, analyze, replay, render-map, serve-env.  Exit
codes: 0 success, 2 bad configuration, 3 missing checkpoint.  The NAVW_OUT
environment variable overrides the output directory.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from ..agent import build
from ..analysis import (
    collect_dataset,
    curve_auc,
    episode_log_from_jsonl,
    export_activations,
    metrics_report,
    run_episode,
    top_k_mean,
    train_position_decoder,
)
from ..errors import ConfigurationError, DataError, NavWorldError
from ..trainer import HyperParams, sample_hyperparams, train, transform_reward
from ..world import MazeEnv, generate_layout
from .config import ExperimentConfig, parse_config, serialize_config
from .mapplot import render_map, split_segments
from .persist import load_checkpoint, save_checkpoint
from .server import EnvServer

EXIT_BAD_CONFIG = 2
EXIT_MISSING_CHECKPOINT = 3


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 0
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING_CHECKPOINT
    except NavWorldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="navworld", description="Maze navigation agents: train, evaluate, analyze, serve.")
    sub = p.add_subparsers(dest="command")
    p.set_defaults(command=None)

    tr = sub.add_parser("train", help="train an agent (or a hyperparameter sweep)")
    _common_config(tr)
    tr.add_argument("--steps", type=int, help="override max agent steps")
    tr.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="run test episodes from a checkpoint and report metrics")
    _common_config(ev, required=False)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--episodes", type=int)
    ev.set_defaults(func=cmd_eval)

    an = sub.add_parser("analyze", help="recompute metrics from existing logs and curves")
    an.add_argument("--logs", help="episodes.jsonl produced by eval")
    an.add_argument("--curve", action="append", default=[], help="curve CSV (repeatable)")
    an.add_argument("--top-k", type=int, default=5)
    an.add_argument("--num-cells", type=int, help="decoder classes; defaults to the log's layout size")
    an.add_argument("--out", help="write the JSON report here")
    an.set_defaults(func=cmd_analyze)

    rp = sub.add_parser("replay", help="re-simulate a logged episode and verify it")
    rp.add_argument("--log", required=True)
    rp.add_argument("--episode", type=int, default=0)
    rp.add_argument("--frames", help="directory for re-rendered PNG frames")
    rp.add_argument("--img", type=int, default=84, help="frame size for --frames")
    rp.set_defaults(func=cmd_replay)

    rm = sub.add_parser("render-map", help="draw the maze and a logged trajectory")
    rm.add_argument("--log", required=True)
    rm.add_argument("--episode", type=int, default=0)
    rm.add_argument("--out", required=True, help="output .png or .svg")
    rm.set_defaults(func=cmd_render_map)

    sv = sub.add_parser("serve-env", help="serve environments over the wire protocol")
    _common_config(sv)
    sv.add_argument("--port", type=int)
    sv.set_defaults(func=cmd_serve)
    return p


def _common_config(sp, required=True):
    sp.add_argument("--config", required=required, help="experiment TOML file")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--deterministic", action="store_true", default=None)
    sp.add_argument("--out", help="output directory (NAVW_OUT also works)")


def _load_config(args) -> ExperimentConfig:
    if getattr(args, "config", None) is None:
        return ExperimentConfig()
    text = Path(args.config).read_text()
    cfg = parse_config(text)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "workers", None) is not None:
        cfg.hp.n_workers = args.workers
    if getattr(args, "deterministic", None):
        cfg.deterministic = True
    out = os.environ.get("NAVW_OUT") or getattr(args, "out", None)
    if out:
        cfg.out_dir = out
    return cfg


def _out_dir(cfg) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    cfg = _load_config(args)
    if args.steps:
        cfg.max_agent_steps = args.steps
    if args.checkpoint_every:
        cfg.checkpoint_every = args.checkpoint_every
    out = _out_dir(cfg)
    (out / "config.toml").write_text(serialize_config(cfg))
    layout = generate_layout(cfg.kind, cfg.layout_seed)
    spec = cfg.arch_spec()

    if cfg.sweep:
        hp_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed & 0xFFFFFFFF, 0x5A3E]))
        curves = []
        for i in range(cfg.sweep):
            hp = sample_hyperparams(hp_rng, base=cfg.hp)
            rdir = out / f"replica_{i:02d}"
            rdir.mkdir(exist_ok=True)
            run = _run_one(layout, spec, hp, cfg, rdir, seed=cfg.seed + i)
            rows = run.curve()
            if rows:
                curves.append((np.array([r[0] for r in rows]), np.array([r[1] for r in rows])))
            print(f"replica {i}: lr={hp.lr:.2e} entropy={hp.beta_entropy:.2e} "
                  f"final={rows[-1][1] if rows else float('nan'):.2f}")
        if curves:
            grid, mean_curve = top_k_mean(curves, k=min(5, len(curves)))
            with open(out / "topk_curve.csv", "w") as fh:
                fh.write("agent_steps,mean_episode_score\n")
                for s, v in zip(grid, mean_curve):
                    fh.write(f"{s:.0f},{v:.6g}\n")
        return 0

    run = _run_one(layout, spec, cfg.hp, cfg, out, seed=cfg.seed)
    rows = run.curve()
    if rows:
        print(f"trained {run.agent_steps} agent steps; last-window score {rows[-1][1]:.2f} over {rows[-1][2]} episodes")
    else:
        print(f"trained {run.agent_steps} agent steps; no episodes finished")
    if run.incidents:
        print(f"{len(run.incidents)} worker incidents (see incidents.log)")
        (out / "incidents.log").write_text("\n".join(run.incidents) + "\n")
    return 0


def _run_one(layout, spec, hp, cfg, out: Path, seed: int):
    ckpt_dir = out / "checkpoints"

    def checkpoint_fn(run, tag):
        save_checkpoint(
            ckpt_dir / tag,
            run.net,
            hp,
            extra={
                "agent_steps": run.agent_steps,
                "kind": cfg.kind,
                "layout_seed": cfg.layout_seed,
                "img_h": cfg.img_h,
                "img_w": cfg.img_w,
            },
        )

    run = train(
        layout,
        spec,
        hp,
        seed=seed,
        max_agent_steps=cfg.max_agent_steps,
        img_hw=(cfg.img_h, cfg.img_w),
        deterministic=cfg.deterministic,
        checkpoint_every=cfg.checkpoint_every,
        checkpoint_fn=checkpoint_fn,
    )
    run.write_curve_csv(out / "curve.csv")
    return run


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    net, hp, extra = load_checkpoint(args.checkpoint)
    hp = hp or cfg.hp
    kind = extra.get("kind", cfg.kind)
    layout_seed = extra.get("layout_seed", cfg.layout_seed)
    img_hw = (extra.get("img_h", cfg.img_h), extra.get("img_w", cfg.img_w))
    layout = generate_layout(kind, layout_seed)
    env = MazeEnv(layout, img_hw=img_hw, reward_transform=lambda r: transform_reward(r, hp))
    episodes = args.episodes or cfg.eval_episodes
    out = _out_dir(cfg)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.eval_seed & 0xFFFFFFFF, 0xE7A1]))

    logs = []
    with open(out / "episodes.jsonl", "w") as fh:
        for ep in range(episodes):
            log = run_episode(net, env, episode_seed=cfg.eval_seed + ep, rng=rng, collect_features=cfg.collect_features)
            logs.append(log)
            fh.write(log.to_jsonl())

    position_acc = None
    if cfg.collect_features and net.spec.recurrent and len(logs) >= 4:
        feats = np.concatenate([np.asarray(log.features) for log in logs])
        labels = np.concatenate([np.asarray(log.cells) for log in logs])
        ep_ids = np.concatenate([np.full(len(log), i) for i, log in enumerate(logs)])
        try:
            _, position_acc = train_position_decoder(feats, labels, ep_ids, num_cells=layout.n_locations)
        except DataError:
            position_acc = None
        export_activations(net, logs, out / "activations.csv")

    report = metrics_report(logs, position_acc=position_acc)
    report["checkpoint"] = str(args.checkpoint)
    report["maze_kind"] = kind
    (out / "metrics.json").write_text(json.dumps(report, indent=2) + "\n")
    print(json.dumps(report, indent=2))
    return 0


def cmd_analyze(args) -> int:
    report: dict = {}
    if args.logs:
        logs = episode_log_from_jsonl(Path(args.logs).read_text())
        position_acc = None
        if logs and logs[0].features:
            feats = np.concatenate([np.asarray(log.features) for log in logs])
            labels = np.concatenate([np.asarray(log.cells) for log in logs])
            ep_ids = np.concatenate([np.full(len(log), i) for i, log in enumerate(logs)])
            num_cells = args.num_cells or generate_layout(logs[0].maze_kind, logs[0].layout_seed).n_locations
            _, position_acc = train_position_decoder(feats, labels, ep_ids, num_cells=num_cells)
        report.update(metrics_report(logs, position_acc=position_acc))
    if args.curve:
        curves = []
        for path in args.curve:
            rows = np.genfromtxt(path, delimiter=",", names=True)
            steps = np.atleast_1d(rows["agent_steps"])
            scores = np.atleast_1d(rows["mean_episode_score"])
            curves.append((steps, scores))
        report["auc"] = float(np.mean([curve_auc(s, v) for s, v in curves]))
        if len(curves) > 1:
            grid, mean_curve = top_k_mean(curves, k=args.top_k)
            report["top_k_final"] = float(mean_curve[-1])
            report["top_k_auc"] = curve_auc(grid, mean_curve)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_replay(args) -> int:
    logs = episode_log_from_jsonl(Path(args.log).read_text())
    if not 0 <= args.episode < len(logs):
        raise DataError(f"log has {len(logs)} episodes, asked for {args.episode}")
    log = logs[args.episode]
    layout = generate_layout(log.maze_kind, log.layout_seed)
    env = MazeEnv(layout, img_hw=(args.img, args.img))
    env.reset(log.episode_seed)
    frames_dir = Path(args.frames) if args.frames else None
    if frames_dir:
        frames_dir.mkdir(parents=True, exist_ok=True)
    mismatches = 0
    for t, action in enumerate(log.actions):
        obs, reward, done, info = env.step(action)
        if abs(reward - log.rewards[t]) > 1e-9:
            mismatches += 1
        if frames_dir:
            from PIL import Image

            Image.fromarray(np.moveaxis(obs.rgb, 0, -1)).save(frames_dir / f"frame_{t:05d}.png")
    print(f"replayed {len(log.actions)} steps; reward mismatches: {mismatches}; final score {env.score} (logged {log.score})")
    return 0 if mismatches == 0 and env.score == log.score else 1


def cmd_render_map(args) -> int:
    logs = episode_log_from_jsonl(Path(args.log).read_text())
    if not 0 <= args.episode < len(logs):
        raise DataError(f"log has {len(logs)} episodes, asked for {args.episode}")
    log = logs[args.episode]
    layout = generate_layout(log.maze_kind, log.layout_seed)
    segments = split_segments(log.positions, log.respawn_steps)
    render_map(layout, args.out, trajectories=segments, goal_cell=log.goal_cell)
    print(f"wrote {args.out} ({len(segments)} trajectory segments)")
    return 0


def cmd_serve(args) -> int:
    cfg = _load_config(args)
    layout = generate_layout(cfg.kind, cfg.layout_seed)
    port = args.port if args.port is not None else cfg.port
    server = EnvServer(layout, img_hw=(cfg.img_h, cfg.img_w), port=port, raw_depth=cfg.raw_depth, max_range=cfg.max_range)
    print(f"serving {cfg.kind} (seed {cfg.layout_seed}) on {server.address[0]}:{server.port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
