import json

import numpy as np
import pytest

from supcomm.cli import main
from supcomm.core import (co_clustering_error, load_sample, read_labels, read_matrix,
                          standardize, write_labels)
from supcomm.losses import fit_restricted


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--out", str(out), "--seed", "3"]) == 0
    return out


def test_simulate_defaults(sim_dir):
    sample = load_sample(sim_dir / "manifest.json")
    assert sample.adjacency.shape == (150, 40, 40)
    assert len(np.triu_indices(40, 1)[0]) == 780
    assert sorted(np.bincount(read_labels(sim_dir / "labels_true.csv"))) == [10] * 4
    manifest = json.loads((sim_dir / "run_manifest.json").read_text())
    assert manifest["subcommand"] == "simulate" and manifest["seeds"] == {"seed": 3}


def test_simulate_is_byte_reproducible(tmp_path, sim_dir):
    assert main(["simulate", "--out", str(tmp_path), "--seed", "3"]) == 0
    for name in ("responses.csv", "networks/network_0001.csv", "networks/network_0150.csv"):
        assert (tmp_path / name).read_bytes() == (sim_dir / name).read_bytes()


def test_invalid_n_leaves_no_outputs(tmp_path, capsys):
    out = tmp_path / "bad"
    assert main(["simulate", "--n", "42", "--out", str(out)]) == 2
    assert not out.exists()
    assert "divisible" in capsys.readouterr().err


def test_usage_error_exit_code(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--n", "forty", "--out", str(tmp_path)])
    assert exc.value.code == 1


def test_noiseless_pipeline_recovers_truth(tmp_path):
    data, fit = tmp_path / "data", tmp_path / "fit"
    assert main(["simulate", "--sigma", "0", "--t", "0.1", "--seed", "1", "--out", str(data)]) == 0
    assert main(["fit", "--data", str(data / "manifest.json"), "--k", "4", "--out", str(fit)]) == 0
    truth = read_labels(data / "labels_true.csv")
    assert co_clustering_error(read_labels(fit / "labels.csv"), truth) == 0.0


def test_fixed_partition_fit_matches_restricted_oracle(tmp_path, sim_dir):
    out = tmp_path / "fit"
    args = ["fit", "--data", str(sim_dir / "manifest.json"), "--k", "4", "--no-admm",
            "--init", f"file:{sim_dir / 'labels_true.csv'}", "--out", str(out)]
    assert main(args) == 0
    sample = load_sample(sim_dir / "manifest.json")
    truth = read_labels(sim_dir / "labels_true.csv")
    C, b, _ = fit_restricted(standardize(sample), truth, 4)
    np.testing.assert_array_equal(read_matrix(out / "C.csv"), C)
    spec = json.loads((out / "fit.json").read_text())
    assert spec["intercept"] == b and spec["labels"] == (truth + 1).tolist()


def test_predict_on_training_data_matches_fit(tmp_path, sim_dir):
    fit, pred = tmp_path / "fit", tmp_path / "pred"
    assert main(["fit", "--data", str(sim_dir / "manifest.json"), "--k", "4",
                 "--rho-grid", "1,10", "--out", str(fit)]) == 0
    assert main(["predict", "--model", str(fit / "fit.json"), "--data",
                 str(sim_dir / "manifest.json"), "--out", str(pred)]) == 0
    fitted = json.loads((fit / "fit.json").read_text())["in_sample"]["relative_mse"]
    assert json.loads((pred / "predict.json").read_text())["relative_mse"] == fitted


def test_zero_model_predicts_constant(tmp_path, sim_dir):
    fit, pred = tmp_path / "fit", tmp_path / "pred"
    assert main(["fit", "--data", str(sim_dir / "manifest.json"), "--k", "2", "--no-admm",
                 "--out", str(fit)]) == 0
    spec = json.loads((fit / "fit.json").read_text())
    spec["C"] = [[0.0, 0.0], [0.0, 0.0]]
    (fit / "fit.json").write_text(json.dumps(spec))
    assert main(["predict", "--model", str(fit / "fit.json"), "--data",
                 str(sim_dir / "manifest.json"), "--out", str(pred)]) == 0
    values = read_matrix(pred / "predictions.csv")
    assert np.unique(values).size == 1


def test_predict_rejects_mismatched_nodes(tmp_path, sim_dir):
    small, fit = tmp_path / "small", tmp_path / "fit"
    assert main(["simulate", "--n", "20", "--num-networks", "10", "--out", str(small)]) == 0
    assert main(["fit", "--data", str(sim_dir / "manifest.json"), "--k", "4", "--no-admm",
                 "--out", str(fit)]) == 0
    code = main(["predict", "--model", str(fit / "fit.json"), "--data",
                 str(small / "manifest.json"), "--out", str(tmp_path / "p")])
    assert code == 2


def test_missing_responses_named(tmp_path, sim_dir, capsys):
    data = tmp_path / "data"
    assert main(["simulate", "--num-networks", "5", "--out", str(data)]) == 0
    (data / "responses.csv").unlink()
    code = main(["fit", "--data", str(data / "manifest.json"), "--k", "2",
                 "--out", str(tmp_path / "fit")])
    assert code == 2
    assert "responses.csv" in capsys.readouterr().err


def test_singular_fit_exit_code(tmp_path, sim_dir):
    labels = tmp_path / "singletons.csv"
    write_labels(labels, np.arange(40))
    code = main(["fit", "--data", str(sim_dir / "manifest.json"), "--k", "40", "--no-admm",
                 "--init", f"file:{labels}", "--out", str(tmp_path / "fit")])
    assert code == 3


def test_logistic_fit_beats_chance_on_held_out(tmp_path):
    train, test, fit, pred = (tmp_path / d for d in ("train", "test", "fit", "pred"))
    common = ["--task", "classification", "--label-noise", "0.1", "--t", "0.05",
              "--sigma", "0.5", "--num-networks", "300"]
    assert main(["simulate", *common, "--seed", "1", "--out", str(train)]) == 0
    assert main(["simulate", *common, "--seed", "2", "--out", str(test)]) == 0
    assert main(["fit", "--data", str(train / "manifest.json"), "--k", "4", "--loss",
                 "logistic", "--out", str(fit)]) == 0
    assert main(["predict", "--model", str(fit / "fit.json"), "--data",
                 str(test / "manifest.json"), "--out", str(pred)]) == 0
    acc = json.loads((pred / "predict.json").read_text())["accuracy"]
    assert acc > 0.5 + 2 * np.sqrt(acc * (1 - acc) / 300)


def test_cv_subcommand(tmp_path, sim_dir):
    out = tmp_path / "cv"
    assert main(["cv", "--data", str(sim_dir / "manifest.json"), "--method", "spectral",
                 "--k-grid", "2,4", "--out", str(out)]) == 0
    result = json.loads((out / "cv.json").read_text())
    assert result["best_k"] in (2, 4) and len(result["curve"]) == 2
    assert (out / "cv_curve.csv").read_text().startswith("k,lambda,mean,se")


def test_cv_unknown_method(tmp_path, sim_dir, capsys):
    code = main(["cv", "--data", str(sim_dir / "manifest.json"), "--method", "magic",
                 "--out", str(tmp_path)])
    assert code == 1 and "valid methods" in capsys.readouterr().err


def test_benchmark_twice_identical(tmp_path):
    args = ["benchmark", "--vary", "t", "--grid", "0.05", "--replicates", "2", "--seed", "7",
            "--methods", "oracle,spectral,ridge", "--n-test", "50"]
    assert main([*args, "--out", str(tmp_path / "a.csv")]) == 0
    assert main([*args, "--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header == "method,param,value,replicate,relative_mse,coclust_error"
    assert (tmp_path / "a.summary.csv").exists() and (tmp_path / "a.meta.json").exists()


def test_benchmark_unknown_method(tmp_path, capsys):
    code = main(["benchmark", "--vary", "t", "--grid", "0.05", "--methods", "oracle,nope",
                 "--out", str(tmp_path / "r.csv")])
    err = capsys.readouterr().err
    assert code == 1 and "nope" in err and "valid methods: oracle" in err


def test_replay_reproduces_outputs(tmp_path):
    first = tmp_path / "first"
    assert main(["simulate", "--num-networks", "8", "--seed", "5", "--out", str(first)]) == 0
    before = (first / "responses.csv").read_bytes()
    (first / "responses.csv").unlink()
    assert main(["replay", str(first / "run_manifest.json")]) == 0
    assert (first / "responses.csv").read_bytes() == before
