"""``ddqn-planner`` command line.

Exit codes: 0 success, 2 bad configuration or malformed input, 3 missing
artifact, 4 no path between start and end, 5 corpus generation failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .agent import TrainConfig, read_episode_csv, run_training, write_episode_csv
from .baselines import NoPath, astar, dijkstra, rrt_plan
from .experiments import (
    CorpusGenerationError,
    NoiseCorpusSpec,
    eval_all_starts,
    eval_fixed_start,
    eval_maps,
    format_summary_csv,
    generate_noise_corpus,
    load_corpus,
    write_corpus,
    write_summary_csv,
)
from .gridworld import CANONICAL_MAP_PATH, MapFormatError, Position, load_map, render_map
from .neuralnet import NetworkArch, OptimizerConfig, load_params, save_params
from .render import curves_svg, map_svg
from .reward import RewardParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NO_PATH = 4
EXIT_GENERATION = 5

OUTPUT_ROOT_ENV = "DDQN_PLANNER_OUT"
CHECKPOINT_NAME = "checkpoint.ddqn"
EPISODES_NAME = "episodes.csv"
MANIFEST_NAME = "manifest.json"

log = logging.getLogger("ddqn_planner")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# flag dest -> location inside the nested config dict
_CONFIG_FLAGS: dict[str, tuple[str, ...]] = {
    "steps": ("total_train_steps",),
    "seed": ("seed",),
    "gamma": ("gamma",),
    "batch_size": ("batch_size",),
    "p_r": ("p_r",),
    "sync_period": ("target_sync_period",),
    "eps_start": ("epsilon_start",),
    "eps_end": ("epsilon_end",),
    "eps_decay_steps": ("epsilon_decay_steps",),
    "max_episode_steps": ("max_episode_steps",),
    "warmup": ("min_replay_before_training",),
    "replay_capacity": ("replay_capacity",),
    "alpha": ("reward", "alpha"),
    "beta": ("reward", "beta"),
    "reward_end": ("reward", "reward_end"),
    "reward_obstacle": ("reward", "reward_obstacle"),
    "lr": ("optimizer", "learning_rate"),
    "filters": ("arch", "conv_filters"),
}


def config_to_dict(config: TrainConfig) -> dict[str, Any]:
    return dataclasses.asdict(config)


def config_from_dict(data: dict[str, Any]) -> TrainConfig:
    data = dict(data)
    nested = {"reward": RewardParams, "optimizer": OptimizerConfig, "arch": NetworkArch}
    for key, cls in nested.items():
        if key in data:
            data[key] = cls(**data[key])
    return TrainConfig(**data)


def _merge(base: dict, update: dict) -> dict:
    out = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def build_config(args: argparse.Namespace, grid_shape: tuple[int, int]) -> TrainConfig:
    """Defaults, then ``--config`` file, then explicit flags."""
    data = config_to_dict(TrainConfig())
    height, width = grid_shape
    data["arch"]["input_h"], data["arch"]["input_w"] = height, width
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise CliError(f"config file not found: {path}", EXIT_MISSING)
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise CliError(f"{path}: invalid JSON ({exc})", EXIT_CONFIG) from None
        # a run manifest carries its config under "config"
        data = _merge(data, loaded.get("config", loaded))
    for dest, where in _CONFIG_FLAGS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        node = data
        for key in where[:-1]:
            node = node[key]
        node[where[-1]] = value
    if args.baseline:
        data["use_random_init"] = False
        data["use_shaped_reward"] = False
    try:
        return config_from_dict(data)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid configuration: {exc}", EXIT_CONFIG) from None


def _read_map(path: str | Path):
    path = Path(path)
    if not path.is_file():
        raise CliError(f"map file not found: {path}", EXIT_MISSING)
    try:
        return load_map(path)
    except MapFormatError as exc:
        raise CliError(f"{path}: {exc}", EXIT_CONFIG) from None


def _read_corpus(path: str | Path):
    try:
        return load_corpus(path)
    except FileNotFoundError as exc:
        raise CliError(str(exc), EXIT_MISSING) from None
    except MapFormatError as exc:
        raise CliError(f"{path}: {exc}", EXIT_CONFIG) from None


def _read_checkpoint(args: argparse.Namespace):
    path = Path(args.checkpoint) if args.checkpoint else Path(args.run or ".") / CHECKPOINT_NAME
    if not path.is_file():
        raise CliError(f"checkpoint not found: {path}", EXIT_MISSING)
    try:
        return load_params(path)
    except (ValueError, KeyError) as exc:
        raise CliError(f"{path}: unreadable checkpoint ({exc})", EXIT_CONFIG) from None


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _parse_xy(text: str) -> Position:
    try:
        x, y = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}") from None
    return Position(x, y)


# ---------------------------------------------------------------------------
# commands


def cmd_train(args: argparse.Namespace) -> int:
    if args.corpus:
        grids, _, corpus_manifest = _read_corpus(args.corpus)
        if not grids:
            raise CliError(f"{args.corpus}: corpus has no training maps", EXIT_MISSING)
        source = {"corpus": str(args.corpus), "corpus_seed": corpus_manifest.get("seed")}
    else:
        grids = [_read_map(args.map)]
        source = {"map": str(args.map)}
    config = build_config(args, (grids[0].height, grids[0].width))
    out = Path(args.out) if args.out else Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / f"train-seed{config.seed}"
    out.mkdir(parents=True, exist_ok=True)

    started = time.time()
    params, records = run_training(grids, config, log_every=args.log_every)
    finished = time.time()

    save_params(params, config.arch, out / CHECKPOINT_NAME)
    write_episode_csv(records, out / EPISODES_NAME)
    (out / "episodes.svg").write_text(
        curves_svg({"avg_reward_per_step": [r.average_reward_per_step for r in records]})
    )
    manifest = {
        "version": __version__,
        "config": config_to_dict(config),
        "seed": config.seed,
        **source,
        "map_sha256": _sha256("".join(render_map(g) for g in grids)),
        "started": started,
        "finished": finished,
        "episodes": len(records),
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    successes = sum(r.success for r in records)
    print(f"trained {config.total_train_steps} steps, {len(records)} episodes "
          f"({successes} reached the end) -> {out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    params, arch = _read_checkpoint(args)
    if args.mode == "corpus":
        if not args.corpus:
            raise CliError("--mode corpus needs --corpus", EXIT_CONFIG)
        train, test, _ = _read_corpus(args.corpus)
        rows = {
            "train": eval_maps(train, params, arch, args.step_cap),
            "test": eval_maps(test, params, arch, args.step_cap),
        }
    else:
        grid = _read_map(args.map)
        if (grid.height, grid.width) != (arch.input_h, arch.input_w):
            raise CliError(f"map is {grid.width}x{grid.height}, network expects "
                           f"{arch.input_w}x{arch.input_h}", EXIT_CONFIG)
        if args.mode == "fixed":
            summary, record = eval_fixed_start(grid, params, arch, args.step_cap)
            rows = {"fixed": summary}
            if args.svg:
                Path(args.svg).write_text(map_svg(grid, record.path))
        else:
            rows = {"all-starts": eval_all_starts(grid, params, arch, args.step_cap)}
    if args.out:
        write_summary_csv(rows, args.out)
    else:
        sys.stdout.write(format_summary_csv(rows))
    return EXIT_OK


def _plan(grid, args: argparse.Namespace):
    start = args.start or grid.start
    try:
        if args.algo == "astar":
            return astar(grid, start)
        if args.algo == "dijkstra":
            return dijkstra(grid, start)
        result = rrt_plan(grid, start, args.max_samples, np.random.default_rng(args.seed))
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    except NoPath as exc:
        raise CliError(f"no path: {exc}", EXIT_NO_PATH) from None
    if result is None:
        raise CliError(f"no path: rrt did not reach the end within {args.max_samples} samples", EXIT_NO_PATH)
    return result


def format_plan(result) -> str:
    lines = [f"{p.x},{p.y}" for p in result.path]
    lines.append(f"length={result.length!r} expanded={result.expanded}")
    return "\n".join(lines) + "\n"


def parse_plan(text: str) -> list[Position]:
    path = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("length="):
            continue
        x, y = line.split(",")
        path.append(Position(int(x), int(y)))
    return path


def cmd_plan(args: argparse.Namespace) -> int:
    grid = _read_map(args.map)
    sys.stdout.write(format_plan(_plan(grid, args)))
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    if args.curve:
        path = Path(args.curve)
        if not path.is_file():
            raise CliError(f"episode CSV not found: {path}", EXIT_MISSING)
        try:
            rows = read_episode_csv(path)
            series = {m: [float(r[m]) for r in rows] for m in args.metric or ["avg_reward_per_step"]}
        except (ValueError, KeyError) as exc:
            raise CliError(f"{path}: {exc}", EXIT_CONFIG) from None
        svg = curves_svg(series)
    else:
        grid = _read_map(args.map)
        cells = None
        if args.path:
            p = Path(args.path)
            if not p.is_file():
                raise CliError(f"path file not found: {p}", EXIT_MISSING)
            try:
                cells = parse_plan(p.read_text())
            except ValueError:
                raise CliError(f"{p}: malformed path file", EXIT_CONFIG) from None
        elif args.algo:
            cells = _plan(grid, args).path
        svg = map_svg(grid, cells, cell=args.cell)
    Path(args.out).write_text(svg)
    return EXIT_OK


def cmd_gen_corpus(args: argparse.Namespace) -> int:
    base = _read_map(args.map)
    try:
        spec = NoiseCorpusSpec(
            base_map=base, count=args.count, min_new_obstacles=args.min, max_new_obstacles=args.max,
            n_train=args.train, placement_band=args.band, seed=args.seed,
        )
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    try:
        train, test = generate_noise_corpus(spec)
    except CorpusGenerationError as exc:
        raise CliError(f"corpus generation failed: {exc}", EXIT_GENERATION) from None
    out = Path(args.out) if args.out else Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / "corpus" / f"noise-seed{args.seed}"
    write_corpus(out, train, test, spec)
    print(f"wrote {len(train)} train and {len(test)} test maps -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_plan_flags(p: argparse.ArgumentParser, required: bool) -> None:
    p.add_argument("--algo", choices=("astar", "dijkstra", "rrt"), default="astar" if required else None)
    p.add_argument("--start", type=_parse_xy, default=None, help="query start as x,y (default: map start)")
    p.add_argument("--seed", type=int, default=0, help="rrt sampling seed")
    p.add_argument("--max-samples", type=int, default=20_000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddqn-planner", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    d = TrainConfig()
    p = sub.add_parser("train", help="train a Q-network on a map or a corpus")
    p.add_argument("--map", default=str(CANONICAL_MAP_PATH))
    p.add_argument("--corpus", help="train on the train/ split of a corpus directory")
    p.add_argument("--out", help=f"run directory (default: ${OUTPUT_ROOT_ENV}/train-seed<seed>)")
    p.add_argument("--config", help="JSON config or run manifest to start from")
    p.add_argument("--baseline", action="store_true",
                   help="unmodified DDQN: fixed start and zero reward on free moves")
    p.add_argument("--log-every", type=int, default=0, metavar="EPISODES")
    g = p.add_argument_group("hyperparameters (defaults shown)")
    g.add_argument("--steps", type=int, help=f"environment steps [{d.total_train_steps}]")
    g.add_argument("--seed", type=int, help=f"[{d.seed}]")
    g.add_argument("--gamma", type=float, help=f"[{d.gamma}]")
    g.add_argument("--batch-size", type=int, help=f"[{d.batch_size}]")
    g.add_argument("--p-r", type=float, help=f"probability of the designated start [{d.p_r}]")
    g.add_argument("--sync-period", type=int, help=f"target sync, in updates [{d.target_sync_period}]")
    g.add_argument("--eps-start", type=float, help=f"[{d.epsilon_start}]")
    g.add_argument("--eps-end", type=float, help=f"[{d.epsilon_end}]")
    g.add_argument("--eps-decay-steps", type=int, help=f"[{d.epsilon_decay_steps}]")
    g.add_argument("--max-episode-steps", type=int, help=f"[{d.max_episode_steps}]")
    g.add_argument("--warmup", type=int, help=f"replay size before updates start [{d.min_replay_before_training}]")
    g.add_argument("--replay-capacity", type=int, help=f"[{d.replay_capacity}]")
    g.add_argument("--alpha", type=float, help=f"[{d.reward.alpha}]")
    g.add_argument("--beta", type=float, help=f"[{d.reward.beta}]")
    g.add_argument("--reward-end", type=float, help=f"[{d.reward.reward_end}]")
    g.add_argument("--reward-obstacle", type=float, help=f"[{d.reward.reward_obstacle}]")
    g.add_argument("--lr", type=float, help=f"Adam learning rate [{d.optimizer.learning_rate}]")
    g.add_argument("--filters", type=int, help=f"conv filters [{d.arch.conv_filters}]")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--mode", choices=("fixed", "all-starts", "corpus"), default="fixed")
    p.add_argument("--run", help=f"run directory holding {CHECKPOINT_NAME}")
    p.add_argument("--checkpoint")
    p.add_argument("--map", default=str(CANONICAL_MAP_PATH))
    p.add_argument("--corpus")
    p.add_argument("--step-cap", type=int, default=d.max_episode_steps)
    p.add_argument("--out", help="summary CSV path (default: stdout)")
    p.add_argument("--svg", help="fixed mode: also draw the greedy path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plan", help="run a classical planner")
    p.add_argument("--map", default=str(CANONICAL_MAP_PATH))
    _add_plan_flags(p, required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("render", help="draw a map, a path, or training curves as SVG")
    p.add_argument("--map", default=str(CANONICAL_MAP_PATH))
    p.add_argument("--path", help="path file in planner output format")
    p.add_argument("--curve", help="episode CSV to plot instead of a map")
    p.add_argument("--metric", action="append",
                   choices=("steps", "total_reward", "avg_reward_per_step", "epsilon"))
    p.add_argument("--cell", type=int, default=20, help="cell size in pixels")
    p.add_argument("--out", required=True)
    _add_plan_flags(p, required=False)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("gen-corpus", help="generate a noisy-map corpus")
    p.add_argument("--map", default=str(CANONICAL_MAP_PATH))
    p.add_argument("--out")
    p.add_argument("--count", type=int, default=300)
    p.add_argument("--train", type=int, default=100)
    p.add_argument("--min", type=int, default=1)
    p.add_argument("--max", type=int, default=5)
    p.add_argument("--band", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_corpus)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"ddqn-planner: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
