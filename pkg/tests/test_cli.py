import csv
import os

import pytest

from robustrx.cli import main

GEN = ["--set", "n=300", "--set", "p=3", "--set", "m=3"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", *GEN, "--seed", "5", "--out", str(d)]) == 0
    model = d / "model.json"
    assert main(["train", "--train-csv", str(d / "train.csv"), "--out-model", str(model),
                 "--subsample-reps", "5"]) == 0
    return d


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_gen_data_outputs(workdir):
    for name in ("cohort.csv", "oracle.csv", "train.csv", "test.csv", "generator.conf"):
        assert (workdir / name).exists()
    assert len(_rows(workdir / "train.csv")) - 1 == 240
    assert len(_rows(workdir / "oracle.csv")) - 1 == 900


def test_gen_data_config_dir(tmp_path, monkeypatch):
    conf = tmp_path / "conf"
    conf.mkdir()
    (conf / "generator.conf").write_text("n = 40\np = 2\nm = 2\n")
    monkeypatch.setenv("ROBUSTRX_CONFIG_DIR", str(conf))
    assert main(["gen-data", "--out", str(tmp_path / "a")]) == 0
    assert len(_rows(tmp_path / "a" / "cohort.csv")) - 1 == 40
    (conf / "small.conf").write_text("n = 30\np = 2\nm = 2\n")
    assert main(["gen-data", "small.conf", "--out", str(tmp_path / "b")]) == 0
    assert len(_rows(tmp_path / "b" / "cohort.csv")) - 1 == 30


def test_prescribe_output_and_round_trip(workdir, tmp_path):
    out = tmp_path / "rx.csv"
    args = ["prescribe", "--model", str(workdir / "model.json"), "--input-csv", str(workdir / "test.csv"),
            "--seed", "3", "--out"]
    assert main([*args, str(out)]) == 0
    rows = _rows(out)
    # probability columns follow the model's label order (first appearance in the training CSV)
    assert rows[0][0] == "id" and rows[0][4:] == ["chosen", "frozen", "threshold"]
    assert sorted(rows[0][1:4]) == ["p_T0", "p_T1", "p_T2"]
    assert len(rows) == 61
    for r in rows[1:]:
        assert abs(sum(map(float, r[1:4])) - 1) <= 1e-12
        assert r[4] in ("T0", "T1", "T2") and r[5] in ("0", "1") and float(r[6]) >= 0
    # a model file written back from a loaded bundle prescribes identically
    from robustrx.bundle import load_pipeline, save_pipeline

    save_pipeline(load_pipeline(workdir / "model.json"), tmp_path / "copy.json")
    args[2] = str(tmp_path / "copy.json")
    assert main([*args, str(tmp_path / "rx2.csv")]) == 0
    assert (tmp_path / "rx2.csv").read_bytes() == out.read_bytes()


def test_prescribe_deterministic_policy(workdir, tmp_path):
    out = tmp_path / "det.csv"
    assert main(["prescribe", "--model", str(workdir / "model.json"), "--input-csv", str(workdir / "test.csv"),
                 "--policy", "deterministic", "--method", "lasso", "--out", str(out)]) == 0
    for r in _rows(out)[1:]:
        assert sorted(map(float, r[1:4])) == [0.0, 0.0, 1.0]


def test_evaluate_is_byte_reproducible(workdir, tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"eval{i}.csv"
        assert main(["evaluate", "--model", str(workdir / "model.json"), "--test-csv", str(workdir / "test.csv"),
                     "--oracle-csv", str(workdir / "oracle.csv"), "--reps", "5", "--seed", "1",
                     "--out", str(out)]) == 0
        outs.append(out)
    assert outs[0].read_bytes() == outs[1].read_bytes()
    assert (tmp_path / "eval0.imputed.csv").read_bytes() == (tmp_path / "eval1.imputed.csv").read_bytes()
    rows = _rows(outs[0])
    assert rows[0] == ["method", "policy_mode", "mean", "std", "reps"]
    assert len(rows) == 11 and all(r[4] == "5" for r in rows[1:])


def test_bench_command(workdir, tmp_path):
    out = tmp_path / "bench.csv"
    assert main(["bench", "--train-csv", str(workdir / "train.csv"), "--test-csv", str(workdir / "test.csv"),
                 "--methods", "ols,rlad,rlad-knn", "--out", str(out)]) == 0
    assert [r[0] for r in _rows(out)[1:]] == ["OLS", "RLAD", "RLAD+K-NN"]


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["bench", "--train-csv", "a", "--test-csv", "b", "--methods", "ridge"])
    assert exc.value.code == 2


def test_data_errors_exit_3(workdir, tmp_path):
    assert main(["train", "--train-csv", str(tmp_path / "missing.csv"), "--out-model", str(tmp_path / "m")]) == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("id,foo\n1,2\n")
    assert main(["train", "--train-csv", str(bad), "--out-model", str(tmp_path / "m")]) == 3
    (tmp_path / "old.json").write_text('{"version": "robustrx-model/0"}')
    assert main(["prescribe", "--model", str(tmp_path / "old.json"), "--input-csv", str(workdir / "test.csv"),
                 "--out", str(tmp_path / "x.csv")]) == 3
    assert main(["prescribe", "--model", str(workdir / "model.json"), "--input-csv", str(workdir / "test.csv"),
                 "--method", "huber", "--out", str(tmp_path / "x.csv")]) == 3
    assert not os.path.exists(tmp_path / "x.csv")


def test_solver_failure_exits_4(workdir, tmp_path):
    assert main(["train", "--train-csv", str(workdir / "train.csv"), "--out-model", str(tmp_path / "m.json"),
                 "--rlad-max-iters", "1"]) == 4
    assert not os.path.exists(tmp_path / "m.json")
