import json

import pytest

from metamario.cli import main


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"difficulty": 1, "level_width": 60, "num_runs": 2,
                                "ppo": {"rollout_length": 64, "epochs": 1}}))
    return path


def test_bench_random(tmp_path, config_file, capsys):
    out = tmp_path / "bench"
    assert main(["bench", "--algo", "random", "--budget", "0", "--config", str(config_file),
                 "--out", str(out)]) == 0
    assert "random" in capsys.readouterr().out
    assert {p.name for p in out.iterdir()} == {"steps.csv", "summary.json", "curves.json"}
    assert len(json.loads((out / "summary.json").read_text())["algorithms"]["random"]["rows"]) == 2


def test_train_then_eval(tmp_path, config_file, capsys):
    out = tmp_path / "train"
    assert main(["train", "--algo", "ppo", "--budget", "1", "--config", str(config_file), "--out", str(out)]) == 0
    assert (out / "checkpoint.json").exists() and (out / "metrics.jsonl").exists()
    assert main(["eval", "--checkpoint", str(out / "checkpoint.json"), "--config", str(config_file),
                 "--out", str(out)]) == 0
    assert "average reward" in capsys.readouterr().out
    assert (out / "eval.json").exists()


def test_failures_exit_nonzero(tmp_path, capsys):
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.json")]) != 0
    assert "error" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"num_runs": 0}))
    assert main(["bench", "--algo", "random", "--config", str(bad)]) != 0
    with pytest.raises(SystemExit) as exc:
        main(["bench", "--algo", "a3c"])
    assert exc.value.code != 0
