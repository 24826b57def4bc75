"""Evaluation harness: fixed start, every reachable start, and noisy-map corpora."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .agent import EpisodeRecord, TrainConfig, rollout_policy, run_training
from .baselines import astar, cost_to_end, NoPath
from .gridworld import CellKind, GridMap, Position, load_map, reachable_positions, render_map, save_map
from .neuralnet import NetworkArch, NetworkParams

SUMMARY_HEADER = ("split", "attempted", "succeeded", "success_rate", "mean_path_ratio")


class CorpusGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class EvalSummary:
    attempted: int
    succeeded: int
    mean_path_ratio: float  # nan when nothing succeeded

    @property
    def success_rate(self) -> float:
        return self.succeeded / self.attempted if self.attempted else 0.0

    @classmethod
    def from_ratios(cls, attempted: int, ratios: Sequence[float]) -> "EvalSummary":
        mean = float(np.mean(ratios)) if len(ratios) else math.nan
        return cls(attempted, len(ratios), mean)


def _arch_for(grid: GridMap, arch: NetworkArch | None) -> NetworkArch:
    return arch or NetworkArch(input_h=grid.height, input_w=grid.width)


def eval_fixed_start(
    grid: GridMap, params: NetworkParams, arch: NetworkArch | None = None, step_cap: int = 200
) -> tuple[EvalSummary, EpisodeRecord]:
    """Single greedy rollout from the designated start, scored against A*."""
    record = rollout_policy(grid, params, grid.start, step_cap, _arch_for(grid, arch))
    ratios = [record.path_length / astar(grid, grid.start).length] if record.success else []
    return EvalSummary.from_ratios(1, ratios), record


def eval_all_starts(
    grid: GridMap, params: NetworkParams, arch: NetworkArch | None = None, step_cap: int = 200
) -> EvalSummary:
    """Greedy rollouts from every free cell that can reach the end."""
    arch = _arch_for(grid, arch)
    optimum = cost_to_end(grid)
    starts = reachable_positions(grid)
    ratios = []
    for start in starts:
        record = rollout_policy(grid, params, start, step_cap, arch)
        if record.success:
            ratios.append(record.path_length / optimum[start])
    return EvalSummary.from_ratios(len(starts), ratios)


def eval_maps(
    grids: Sequence[GridMap], params: NetworkParams, arch: NetworkArch | None = None, step_cap: int = 200
) -> EvalSummary:
    """Greedy rollout from each map's designated start."""
    ratios = []
    for grid in grids:
        summary, _ = eval_fixed_start(grid, params, arch, step_cap)
        if summary.succeeded:
            ratios.append(summary.mean_path_ratio)
    return EvalSummary.from_ratios(len(grids), ratios)


# ---------------------------------------------------------------------------
# noisy-map corpus


@dataclass(frozen=True)
class NoiseCorpusSpec:
    base_map: GridMap
    count: int = 300
    min_new_obstacles: int = 1
    max_new_obstacles: int = 5
    n_train: int = 100
    placement_band: int = 1
    seed: int = 0
    max_retries: int = 1000

    def __post_init__(self) -> None:
        if not 1 <= self.min_new_obstacles <= self.max_new_obstacles:
            raise ValueError("need 1 <= min_new_obstacles <= max_new_obstacles")
        if not 0 <= self.n_train <= self.count:
            raise ValueError("n_train must lie in [0, count]")
        if self.placement_band < 0:
            raise ValueError("placement_band must be non-negative")

    def manifest(self) -> dict:
        fields = {k: v for k, v in asdict(self).items() if k != "base_map"}
        text = render_map(self.base_map)
        fields["base_map_sha256"] = hashlib.sha256(text.encode()).hexdigest()
        return fields


def placement_cells(grid: GridMap, band: int) -> list[Position]:
    """Free cells within Chebyshev distance ``band`` of the optimal base path."""
    path = astar(grid, grid.start).path
    cells = set()
    for p in path:
        for dy in range(-band, band + 1):
            for dx in range(-band, band + 1):
                q = Position(p.x + dx, p.y + dy)
                if grid.in_bounds(q) and grid.kind(q) is CellKind.FREE:
                    cells.add(q)
    return sorted(cells, key=lambda q: (q.y, q.x))


def generate_noise_corpus(spec: NoiseCorpusSpec) -> tuple[list[GridMap], list[GridMap]]:
    """Sample ``count`` distinct solvable maps, each with extra obstacles near the base path.

    Returns ``(train, test)`` with ``n_train`` maps in the first split.
    """
    base = spec.base_map
    try:
        cells = placement_cells(base, spec.placement_band)
    except NoPath as exc:
        raise CorpusGenerationError("base map is not solvable") from exc
    if len(cells) < spec.min_new_obstacles:
        raise CorpusGenerationError("placement band holds too few free cells")
    rng = np.random.default_rng(spec.seed)
    seen: set[frozenset[Position]] = set()
    maps: list[GridMap] = []
    for i in range(spec.count):
        for _ in range(spec.max_retries):
            k = int(rng.integers(spec.min_new_obstacles, spec.max_new_obstacles + 1))
            k = min(k, len(cells))
            picks = rng.choice(len(cells), size=k, replace=False)
            added = frozenset(cells[j] for j in sorted(picks))
            if added in seen:
                continue
            candidate = base.with_obstacles(added)
            try:
                astar(candidate, candidate.start)
            except NoPath:
                continue
            seen.add(added)
            maps.append(candidate)
            break
        else:
            raise CorpusGenerationError(
                f"map {i}: no new solvable obstacle set after {spec.max_retries} attempts"
            )
    return maps[: spec.n_train], maps[spec.n_train :]


def write_corpus(directory: str | Path, train: Sequence[GridMap], test: Sequence[GridMap],
                 spec: NoiseCorpusSpec) -> Path:
    root = Path(directory)
    for split, grids in (("train", train), ("test", test)):
        (root / split).mkdir(parents=True, exist_ok=True)
        for i, grid in enumerate(grids):
            save_map(grid, root / split / f"{i:03d}.map")
    save_map(spec.base_map, root / "base.map")
    manifest = spec.manifest() | {"train_maps": len(train), "test_maps": len(test)}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return root


def load_corpus(directory: str | Path) -> tuple[list[GridMap], list[GridMap], dict]:
    root = Path(directory)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise FileNotFoundError(f"{root} is not a corpus directory (no manifest.json)")
    manifest = json.loads(manifest_path.read_text())
    train = [load_map(p) for p in sorted((root / "train").glob("*.map"))]
    test = [load_map(p) for p in sorted((root / "test").glob("*.map"))]
    return train, test, manifest


def run_noise_experiment(
    spec: NoiseCorpusSpec, config: TrainConfig, log_every: int = 0
) -> tuple[dict[str, EvalSummary], NetworkParams]:
    """Train one model across the training maps, then evaluate both splits."""
    train, test = generate_noise_corpus(spec)
    params, _ = run_training(train, config, log_every=log_every)
    step_cap = config.max_episode_steps
    summaries = {
        "train": eval_maps(train, params, config.arch, step_cap),
        "test": eval_maps(test, params, config.arch, step_cap),
    }
    return summaries, params


def format_summary_csv(rows: dict[str, EvalSummary]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for split, s in rows.items():
        writer.writerow([split, s.attempted, s.succeeded, repr(s.success_rate), repr(s.mean_path_ratio)])
    return buf.getvalue()


def write_summary_csv(rows: dict[str, EvalSummary], path: str | Path) -> None:
    Path(path).write_text(format_summary_csv(rows))
