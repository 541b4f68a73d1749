import json

import pytest

from resq.cli import default_config_path, main
from resq.harness import ExperimentConfig
from resq.learner import QTable

CSV = """timestamp,role,id,lat,lon
2017-08-28T00:00:00Z,volunteer,u1,29.8,-95.4
2017-08-28T00:00:00Z,volunteer,u2,29.7,-95.3
2017-08-28T00:00:00Z,victim,v1,29.9,-95.5
2017-08-28T00:00:00Z,victim,v2,29.6,-95.2
2017-08-28T00:00:00Z,victim,v3,29.5,-95.1
"""

SMALL = {
    "grid": {"rows": 5, "cols": 5},
    "synthetic": {"agents": 2, "victims": 3, "placement_seed": 1},
    "train_episodes": 15,
    "eval_episodes": 4,
    "rule_episodes": 2,
    "seed": 3,
    "step_cap": 60,
}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL), encoding="utf-8")
    return path


def test_convert_csv(tmp_path, capsys):
    src = tmp_path / "in.csv"
    src.write_text(CSV, encoding="utf-8")
    out = tmp_path / "scen.json"
    assert main(["convert", "--csv", str(src), "--out", str(out)]) == 0
    assert capsys.readouterr().out.strip() == "snapshot 1: 2 volunteers, 3 victims"
    doc = json.loads(out.read_text())
    assert doc["grid"] == {"rows": 25, "cols": 25}
    assert [v["id"] for v in doc["snapshots"][0]["victims"]] == ["v1", "v2", "v3"]
    # the emitted JSON converts back to itself
    again = tmp_path / "again.json"
    assert main(["convert", "--json", str(out), "--out", str(again)]) == 0
    assert json.loads(again.read_text()) == doc


def test_convert_out_of_region(tmp_path, capsys):
    src = tmp_path / "in.csv"
    src.write_text(CSV + "2017-08-28T00:00:00Z,victim,v9,31.0,-95.1\n", encoding="utf-8")
    out = tmp_path / "scen.json"
    assert main(["convert", "--csv", str(src), "--out", str(out)]) == 2
    assert "OutOfRegion" in capsys.readouterr().err
    assert main(["convert", "--csv", str(src), "--out", str(out), "--clamp"]) == 0
    victims = json.loads(out.read_text())["snapshots"][0]["victims"]
    assert victims[-1]["lat"] == 30.154665


def test_convert_parse_error(tmp_path, capsys):
    src = tmp_path / "in.csv"
    src.write_text("nonsense\n", encoding="utf-8")
    assert main(["convert", "--csv", str(src), "--out", str(tmp_path / "x.json")]) == 2
    assert "ParseError" in capsys.readouterr().err


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        main(["convert", "--csv", "a", "--json", "b", "--out", "c"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["compare", "--bogus"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["train", "--config", "c", "--policy", "greedy", "--out", "q"])
    assert info.value.code == 1


def test_compare_single_policy(tmp_path, capsys):
    cfg = tmp_path / "one.json"
    cfg.write_text(json.dumps({**SMALL, "policies": ["greedy"]}), encoding="utf-8")
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split()[0] == "policy"
    assert [l.split()[0] for l in lines[2:-1]] == ["greedy"]


def test_compare_sorted_and_reproducible(small_config, tmp_path, capsys):
    assert main(["compare", "--config", str(small_config), "--out", str(tmp_path / "a")]) == 0
    text = capsys.readouterr().out.splitlines()
    rates = [float(l.split()[4]) for l in text[2:-1]]
    assert len(rates) == 6 and rates == sorted(rates, reverse=True)
    assert main(["compare", "--config", str(small_config), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()


def test_compare_missing_config(tmp_path, capsys):
    assert main(["compare", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "r")]) == 1
    assert "cannot read config" in capsys.readouterr().err


def test_bundled_config_is_the_benchmark():
    cfg = ExperimentConfig.load(default_config_path())
    assert (cfg.grid.rows, cfg.grid.cols, cfg.agents, cfg.victims) == (25, 25, 5, 19)
    assert (cfg.train_episodes, cfg.eval_episodes) == (1000, 2000)
    assert len(cfg.policies) == 6


def test_train_writes_table_and_curve(small_config, tmp_path):
    out = tmp_path / "q.json"
    assert main(["train", "--config", str(small_config), "--policy", "resq", "--out", str(out)]) == 0
    table = QTable.from_json(out.read_text())
    assert len(table) > 0
    curve = (tmp_path / "q_curve.csv").read_text().splitlines()
    assert curve[0] == "episode,reward,steps" and len(curve) == 16
    first = (tmp_path / "q_curve.csv").read_bytes()
    assert main(["train", "--config", str(small_config), "--policy", "resq", "--out", str(out)]) == 0
    assert (tmp_path / "q_curve.csv").read_bytes() == first


def test_oracle_check(capsys):
    assert main(["oracle-check", "--size", "5", "--instances", "200", "--seed", "1"]) == 0
    out = capsys.readouterr().out
    assert "hungarian==bruteforce: 200/200" in out
    assert "max greedy-match optimality gap" in out
    assert main(["oracle-check", "--size", "8", "--instances", "10"]) == 1
    assert main(["oracle-check", "--size", "3", "--instances", "0"]) == 1
