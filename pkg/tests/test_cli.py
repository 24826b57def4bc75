import json
import math
import re
import xml.etree.ElementTree as ET

import pytest

from ddqn_planner.agent import CURVE_HEADER
from ddqn_planner.baselines import astar
from ddqn_planner.cli import (
    EXIT_CONFIG,
    EXIT_GENERATION,
    EXIT_MISSING,
    EXIT_NO_PATH,
    build_config,
    build_parser,
    main,
    parse_plan,
)
from ddqn_planner.experiments import SUMMARY_HEADER
from ddqn_planner.gridworld import CANONICAL_MAP_PATH, Position

SVG = "{http://www.w3.org/2000/svg}"
QUICK = ["--steps", "700", "--warmup", "100", "--seed", "3"]


def tiny_map(tmp_path, text="5 5\n....E\n.....\n..#..\n.....\nS....\n"):
    p = tmp_path / "tiny.map"
    p.write_text(text)
    return p


def run_files(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", "--out", str(out), *QUICK]) == 0
    return out


def test_train_writes_run_directory(trained_run):
    files = {p.name for p in trained_run.iterdir()}
    assert files == {"checkpoint.ddqn", "episodes.csv", "episodes.svg", "manifest.json"}
    manifest = json.loads((trained_run / "manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["config"]["total_train_steps"] == 700
    assert manifest["map"] == str(CANONICAL_MAP_PATH)
    header = (trained_run / "episodes.csv").read_text().splitlines()[0]
    assert header == ",".join(CURVE_HEADER)


def test_train_is_byte_reproducible(tmp_path, trained_run):
    assert main(["train", "--out", str(tmp_path), *QUICK]) == 0
    a, b = run_files(trained_run), run_files(tmp_path)
    for name in ("checkpoint.ddqn", "episodes.csv", "episodes.svg"):
        assert a[name] == b[name]


def test_train_from_manifest_reproduces(tmp_path, trained_run):
    assert main(["train", "--out", str(tmp_path), "--config", str(trained_run / "manifest.json")]) == 0
    assert (tmp_path / "checkpoint.ddqn").read_bytes() == (trained_run / "checkpoint.ddqn").read_bytes()


def test_output_root_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("DDQN_PLANNER_OUT", str(tmp_path))
    assert main(["train", "--steps", "50", "--seed", "8", "--map", str(tiny_map(tmp_path))]) == 0
    assert (tmp_path / "train-seed8" / "checkpoint.ddqn").is_file()
    assert "50 steps" in capsys.readouterr().out


def test_eval_fixed_to_stdout(trained_run, capsys, tmp_path):
    svg = tmp_path / "path.svg"
    assert main(["eval", "--run", str(trained_run), "--svg", str(svg)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == ",".join(SUMMARY_HEADER)
    assert lines[1].startswith("fixed,1,")
    assert ET.parse(svg).getroot().tag == SVG + "svg"


def test_eval_all_starts_to_file(trained_run, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["eval", "--run", str(trained_run), "--mode", "all-starts", "--out", str(out)]) == 0
    row = out.read_text().splitlines()[1].split(",")
    assert row[0] == "all-starts" and row[1] == "244"


def test_eval_corpus(trained_run, tmp_path, capsys):
    corpus = tmp_path / "corpus"
    assert main(["gen-corpus", "--out", str(corpus), "--count", "6", "--train", "2", "--seed", "1"]) == 0
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(trained_run / "checkpoint.ddqn"), "--mode", "corpus",
                 "--corpus", str(corpus)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [line.split(",")[:2] for line in lines[1:]] == [["train", "2"], ["test", "4"]]


def test_eval_errors(trained_run, tmp_path):
    assert main(["eval", "--run", str(tmp_path)]) == EXIT_MISSING
    assert main(["eval", "--run", str(trained_run), "--mode", "corpus"]) == EXIT_CONFIG
    assert main(["eval", "--run", str(trained_run), "--map", str(tiny_map(tmp_path))]) == EXIT_CONFIG
    bad = tmp_path / "bad.ddqn"
    bad.write_bytes(b"garbage")
    assert main(["eval", "--checkpoint", str(bad)]) == EXIT_CONFIG


def test_train_on_corpus(tmp_path):
    corpus = tmp_path / "c"
    assert main(["gen-corpus", "--out", str(corpus), "--count", "4", "--train", "2", "--seed", "2"]) == 0
    out = tmp_path / "run"
    assert main(["train", "--corpus", str(corpus), "--out", str(out), "--steps", "100"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["corpus_seed"] == 2


def test_plan_output_format(capsys):
    assert main(["plan"]) == 0
    text = capsys.readouterr().out
    last = text.splitlines()[-1]
    m = re.fullmatch(r"length=(\S+) expanded=(\d+)", last)
    assert m is not None
    assert float(m.group(1)) == pytest.approx(22.55634918610405, abs=1e-12)
    path = parse_plan(text)
    assert path[0] == Position(5, 14) and path[-1] == Position(16, 2)


@pytest.mark.parametrize("algo", ["astar", "dijkstra", "rrt"])
def test_plan_algorithms_agree_on_tiny_map(tmp_path, capsys, algo):
    assert main(["plan", "--map", str(tiny_map(tmp_path)), "--algo", algo, "--seed", "1"]) == 0
    length = float(capsys.readouterr().out.splitlines()[-1].split()[0].split("=")[1])
    # the centre obstacle blocks the diagonal, forcing two straight moves
    optimum = 2 + 3 * math.sqrt(2)
    assert length >= optimum - 1e-12
    if algo != "rrt":
        assert length == pytest.approx(optimum, abs=1e-12)


def test_plan_errors(tmp_path):
    walled = tiny_map(tmp_path, "3 3\n..E\n###\nS..\n")
    assert main(["plan", "--map", str(walled)]) == EXIT_NO_PATH
    assert main(["plan", "--map", str(walled), "--algo", "rrt", "--max-samples", "200"]) == EXIT_NO_PATH
    assert main(["plan", "--map", str(tmp_path / "missing.map")]) == EXIT_MISSING
    assert main(["plan", "--map", str(tiny_map(tmp_path, "2 2\n.X\nSE\n"))]) == EXIT_CONFIG
    assert main(["plan", "--start", "2,2", "--map", str(tiny_map(tmp_path))]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        main(["plan", "--start", "nonsense"])
    assert exc.value.code == 2


def test_render_map_with_planned_path(tmp_path, canonical):
    out = tmp_path / "map.svg"
    assert main(["render", "--algo", "astar", "--out", str(out)]) == 0
    root = ET.parse(out).getroot()
    assert len(root.findall(SVG + "rect")) == 400
    (poly,) = root.findall(SVG + "polyline")
    assert len(poly.get("points").split()) == len(astar(canonical, canonical.start).path)


def test_render_path_file(tmp_path, capsys):
    assert main(["plan", "--map", str(tiny_map(tmp_path))]) == 0
    plan = tmp_path / "plan.txt"
    plan.write_text(capsys.readouterr().out)
    out = tmp_path / "p.svg"
    assert main(["render", "--map", str(tiny_map(tmp_path)), "--path", str(plan), "--out", str(out)]) == 0
    root = ET.parse(out).getroot()
    assert len(root.findall(SVG + "rect")) == 25
    assert len(root.find(SVG + "polyline").get("points").split()) == len(parse_plan(plan.read_text())) == 6


def test_render_curves(trained_run, tmp_path):
    out = tmp_path / "c.svg"
    args = ["render", "--curve", str(trained_run / "episodes.csv"), "--metric", "steps", "--metric",
            "epsilon", "--out", str(out)]
    assert main(args) == 0
    assert len(ET.parse(out).getroot().findall(SVG + "polyline")) == 2
    assert main(["render", "--curve", str(tmp_path / "none.csv"), "--out", str(out)]) == EXIT_MISSING


def test_gen_corpus_is_byte_reproducible(tmp_path):
    for name in ("a", "b"):
        assert main(["gen-corpus", "--out", str(tmp_path / name), "--count", "8", "--train", "3",
                     "--seed", "5"]) == 0
    a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert a == b and len(a) == 10
    for rel in a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_gen_corpus_failures(tmp_path):
    corridor = tiny_map(tmp_path, "3 1\nS.E\n")
    assert main(["gen-corpus", "--map", str(corridor), "--count", "2", "--train", "1",
                 "--max", "1", "--out", str(tmp_path / "x")]) == EXIT_GENERATION
    assert main(["gen-corpus", "--min", "4", "--max", "2", "--out", str(tmp_path / "y")]) == EXIT_CONFIG


def test_config_layering(tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"gamma": 0.9, "reward": {"alpha": 0.2}, "seed": 4}))
    args = build_parser().parse_args(["train", "--config", str(cfg_file), "--seed", "6", "--baseline"])
    cfg = build_config(args, (20, 20))
    assert (cfg.gamma, cfg.seed, cfg.reward.alpha, cfg.reward.beta) == (0.9, 6, 0.2, 0.4)
    assert not cfg.use_random_init and not cfg.use_shaped_reward


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["train", "--config", str(bad), "--out", str(tmp_path / "r")]) == EXIT_CONFIG
    assert main(["train", "--config", str(tmp_path / "none.json")]) == EXIT_MISSING
    assert main(["train", "--gamma", "1.5", "--out", str(tmp_path / "r")]) == EXIT_CONFIG
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"learning_speed": 3}))
    assert main(["train", "--config", str(unknown), "--out", str(tmp_path / "r")]) == EXIT_CONFIG
