import csv
import hashlib
import json
import os

from specshare.cli import main
from specshare.simulator import SimConfig


def write_config(tmp_path, **overrides):
    cfg = SimConfig(lte_count=1, wifi_count=1, seed=0, **overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg.to_json()))
    return str(path)


def test_collect_learn_evaluate_report_pipeline(tmp_path, capsys):
    config = write_config(tmp_path)
    episodes = str(tmp_path / "episodes.jsonl")
    assert main(["collect", "--config", config, "--out", episodes,
                 "--k", "4", "--t", "10", "--seed", "1"]) == 0
    assert sum(1 for _ in open(episodes)) == 4

    out_dir = str(tmp_path / "run")
    assert main(["learn", "--episodes", episodes, "--out", out_dir,
                 "--max-iters", "10", "--max-nodes", "4"]) == 0
    assert os.path.exists(os.path.join(out_dir, "policies.json"))
    with open(os.path.join(out_dir, "trace.csv")) as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:3] == ["iteration", "elbo", "discounted_value"]
    assert len(rows) >= 2

    assert main(["evaluate", "--policies", os.path.join(out_dir, "policies.json"),
                 "--episodes", episodes,
                 "--out", str(tmp_path / "eval.json")]) == 0
    report = json.loads((tmp_path / "eval.json").read_text())
    assert "discounted_value" in report

    assert main(["report", "--trace-dir", out_dir]) == 0
    for name in ("elbo.csv", "nodes.csv", "value.csv", "gh.csv"):
        with open(os.path.join(out_dir, name)) as fh:
            out_rows = list(csv.reader(fh))
        assert len(out_rows) == len(rows)


def test_collect_deterministic_file_hash(tmp_path):
    config = write_config(tmp_path)
    digests = []
    for name in ("a.jsonl", "b.jsonl"):
        out = str(tmp_path / name)
        assert main(["collect", "--config", config, "--out", out,
                     "--k", "2", "--t", "6", "--seed", "9"]) == 0
        digests.append(hashlib.sha256(open(out, "rb").read()).hexdigest())
    assert digests[0] == digests[1]


def test_usage_error_exit_code():
    assert main(["collect"]) == 1          # missing required flags
    assert main(["no-such-command"]) == 1


def test_data_error_exit_code(tmp_path):
    assert main(["learn", "--episodes", str(tmp_path / "missing.jsonl"),
                 "--out", str(tmp_path / "o")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["collect", "--config", str(bad),
                 "--out", str(tmp_path / "x.jsonl")]) == 2


def test_report_g_column_constant(tmp_path):
    config = write_config(tmp_path)
    episodes = str(tmp_path / "eps.jsonl")
    main(["collect", "--config", config, "--out", episodes,
          "--k", "3", "--t", "8", "--seed", "2"])
    out_dir = str(tmp_path / "run")
    main(["learn", "--episodes", episodes, "--out", out_dir,
          "--max-iters", "8"])
    main(["report", "--trace-dir", out_dir])
    with open(os.path.join(out_dir, "gh.csv")) as fh:
        rows = list(csv.reader(fh))
    g_cols = [i for i, name in enumerate(rows[0]) if name.startswith("g_")]
    for i in g_cols:
        column = {row[i] for row in rows[1:]}
        assert len(column) == 1


def test_thread_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("SPECSHARE_THREADS", "2")
    config = write_config(tmp_path)
    out = str(tmp_path / "eps.jsonl")
    assert main(["collect", "--config", config, "--out", out,
                 "--k", "1", "--t", "4"]) == 0
