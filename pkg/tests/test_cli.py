import json

import pytest

from crowddss import __version__
from crowddss.cli import main, sha256_file
from crowddss.storage import read_data_dir

from conftest import SMALL


def busiest_open_task(log, day):
    candidates = [t for t in log.tasks.values() if str(t.registration_open) <= day < str(t.submission_deadline)]
    return max(candidates, key=lambda t: sum(1 for k in log.pairs if k[1] == t.task_id)).task_id


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "gen.json").write_text(json.dumps(SMALL.to_dict()))
    assert main(["simulate", "--config", str(root / "gen.json"), "--out", str(root / "data")]) == 0
    return root / "data"


def test_simulate_writes_exchange_files_and_manifest(data):
    log = read_data_dir(data)
    assert len(log.tasks) == SMALL.num_tasks
    manifest = json.loads((data / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == SMALL.seed and manifest["version"] == __version__
    for name, digest in manifest["outputs"].items():
        assert sha256_file(data / name) == digest
    assert "tasks.csv" in manifest["outputs"]


def test_seed_override_changes_the_log(data, tmp_path):
    assert main(["simulate", "--config", str(data.parent / "gen.json"), "--seed", "9", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "events.csv").read_bytes() != (data / "events.csv").read_bytes()


def test_ingest_and_use_persisted_log(data, tmp_path, capsys):
    assert main(["ingest", "--data", str(data), "--out", str(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["tasks"] == SMALL.num_tasks
    assert main(["rank-workers", "--data", str(tmp_path / "eventlog.json"), "--day", "2014-08-10",
                 "--task", busiest_open_task(read_data_dir(data), "2014-08-10"), "--trees", "5",
                 "--features", "10"]) == 0


def test_rank_workers_prints_ordered_rows(data, tmp_path, capsys):
    day = "2014-08-10"
    task_id = busiest_open_task(read_data_dir(data), day)
    code = main(["--threads", "1", "rank-workers", "--data", str(data), "--day", day, "--task", task_id,
                 "--trees", "10", "--features", "20", "--out", str(tmp_path)])
    assert code == 0
    lines = [l.split("\t") for l in capsys.readouterr().out.splitlines()]
    assert [int(l[0]) for l in lines] == list(range(1, len(lines) + 1))
    assert all(l[-1] in ("winner", "submitter") for l in lines)
    assert (tmp_path / "ranking.csv").exists() and (tmp_path / "manifest.json").exists()


def test_rank_tasks_for_a_worker(data, capsys):
    code = main(["rank-tasks", "--data", str(data), "--day", "2014-08-10", "--worker", "w0001",
                 "--candidates", "--learner", "nb"])
    assert code == 0
    for line in capsys.readouterr().out.splitlines():
        assert len(line.split("\t")) == 6


def test_train_then_rank_with_saved_model(data, tmp_path, capsys):
    assert main(["train", "--data", str(data), "--day", "2014-08-10", "--learner", "dt", "--out", str(tmp_path)]) == 0
    task_id = busiest_open_task(read_data_dir(data), "2014-08-10")
    capsys.readouterr()
    assert main(["rank-workers", "--data", str(data), "--day", "2014-08-10", "--task", task_id,
                 "--model", str(tmp_path / "model.json")]) == 0


def test_predict_cancel_and_tune(data, tmp_path):
    assert main(["predict-cancel", "--data", str(data), "--start", "2014-08-01", "--days", "4",
                 "--learner", "nb", "--out", str(tmp_path / "cancel")]) == 0
    header = (tmp_path / "cancel" / "cancellations.csv").read_text().splitlines()[0]
    assert header == "task_id,duration_days,predicted_on,actual_cancelled,savings_pct"
    assert main(["tune", "--data", str(data), "--start", "2014-08-01", "--days", "2", "--learner", "nb",
                 "--out", str(tmp_path / "tune")]) == 0
    assert (tmp_path / "tune" / "best.json").exists()


def test_errors_exit_with_one(data, tmp_path, capsys):
    assert main(["rank-workers", "--data", str(data), "--day", "2014-08-10", "--task", "nope"]) == 1
    assert "nope" in capsys.readouterr().err
    assert main(["evaluate", "--data", str(tmp_path / "missing"), "--start", "2014-08-01",
                 "--out", str(tmp_path / "o")]) == 1
    assert main(["evaluate", "--data", str(data), "--start", "2014-07-02", "--days", "2", "--learner", "nb",
                 "--out", str(tmp_path / "o")]) == 1
    assert "2014-07-02" in capsys.readouterr().err


def test_usage_errors_exit_with_two(capsys):
    assert main([]) == 2
    assert main(["evaluate", "--data", "x", "--start", "not-a-date", "--out", "y"]) == 2
    assert main(["train", "--data", "x", "--day", "2014-08-01", "--trees", "0", "--out", "y"]) == 2
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out
