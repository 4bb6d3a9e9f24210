import numpy as np
import pytest

import aggmle.likelihood
from aggmle.cli import ConfigError, main, parse_config
from aggmle.metrics import error_variance, mse, permutation_accuracy

LINEAR_CFG = """\
dataset = linear
aggregation = mean
k = 4
n = 400
dim = 3
noise = 0.1
epochs = 5
trials = 2
seed = 1
"""


def cfg_file(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def test_run_rows_and_determinism(tmp_path, capsys):
    path = cfg_file(tmp_path, LINEAR_CFG)
    assert main(["run", "--config", path]) == 0
    first = capsys.readouterr().out
    assert main(["run", "--config", path]) == 0
    assert capsys.readouterr().out == first
    fields = first.strip().split("\t")
    assert fields[:3] == ["linear", "mean/gauss/linear", "mse"]
    assert float(fields[4]) >= 0


def test_seed_override_changes_output(tmp_path, capsys):
    path = cfg_file(tmp_path, LINEAR_CFG)
    main(["run", "--config", path])
    a = capsys.readouterr().out
    main(["run", "--config", path, "--seed", "5"])
    assert capsys.readouterr().out != a


def test_single_trial_zero_std(tmp_path, capsys):
    path = cfg_file(tmp_path, LINEAR_CFG.replace("trials = 2", "trials = 1"))
    assert main(["run", "--config", path]) == 0
    assert capsys.readouterr().out.strip().split("\t")[4] == "0.000000"


def _rows_from_predictions(out_dir):
    lines = (out_dir / "predictions.tsv").read_text().splitlines()[1:]
    trials = {}
    for line in lines:
        t, _, truth, pred = line.split("\t")
        trials.setdefault(int(t), ([], []))
        trials[int(t)][0].append(float(truth))
        trials[int(t)][1].append(float(pred))
    return {t: (np.array(a), np.array(b)) for t, (a, b) in trials.items()}


def test_metrics_recomputable_from_predictions(tmp_path, capsys):
    cfg = LINEAR_CFG + "metric = mse, error_variance\n"
    out = tmp_path / "out"
    assert main(["run", "--config", cfg_file(tmp_path, cfg), "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert printed == (out / "results.tsv").read_text()
    trials = _rows_from_predictions(out)
    for row in printed.splitlines():
        _, _, metric, mean, std = row.split("\t")
        fn = {"mse": mse, "error_variance": error_variance}[metric]
        vals = [fn(p, t) for t, p in trials.values()]
        assert f"{np.mean(vals):.6f}" == mean
        assert f"{np.std(vals, ddof=1):.6f}" == std


def test_triplet_blobs_run_records_permutation(tmp_path, capsys):
    cfg = """\
dataset = blobs
aggregation = triplet
classes = 3
n = 300
noise = 0.5
model = mlp
hidden = 16
epochs = 2
trials = 1
"""
    out = tmp_path / "out"
    assert main(["run", "--config", cfg_file(tmp_path, cfg), "--out", str(out)]) == 0
    row = capsys.readouterr().out.strip().split("\t")
    assert row[1:3] == ["triplet/categorical/mlp", "permutation_accuracy"]
    meta = (out / "metadata.tsv").read_text().strip().split("\t")
    assert meta[:2] == ["0", "permutation"] and sorted(meta[2].split(",")) == ["0", "1", "2"]
    (trial,) = _rows_from_predictions(out).values()
    truth, pred = (a.astype(int) for a in trial)
    assert f"{permutation_accuracy(pred, truth, 3):.6f}" == row[3]


def test_csv_dataset(tmp_path, capsys):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(120, 2))
    lines = ["kind,a,b,y"] + [
        f"{'pq'[i % 2]},{x[0]},{x[1]},{x[0] - x[1] + 0.1 * rng.normal()}" for i, x in enumerate(X)
    ]
    lines.insert(5, "p,1.0,,2.0")
    (tmp_path / "d.csv").write_text("\n".join(lines) + "\n")
    (tmp_path / "d.schema").write_text("kind\tcategorical\ny\ttarget\n")
    cfg = "dataset = d.csv\nschema = d.schema\naggregation = rank_pair\nn_sets = 500\nepochs = 3\ntrials = 1\n"
    assert main(["run", "--config", cfg_file(tmp_path, cfg)]) == 0
    row = capsys.readouterr().out.strip().split("\t")
    assert row[:3] == ["d", "rank_pair/gauss/linear", "error_variance"]


def test_dump(tmp_path, capsys):
    assert main(["dump", "--config", cfg_file(tmp_path, LINEAR_CFG)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 240 and lines[0].endswith("\tmean")


@pytest.mark.parametrize(
    "text",
    [
        "aggregation = mean\n",
        "dataset = linear\nbogus = 1\n",
        "dataset = linear\nlr = fast\n",
        "dataset = linear\naggregation = triplet\n",
        "dataset = linear\nloss = poisson\n",
        "dataset = data.csv\n",
        "dataset = linear\nmetric = auc\n",
    ],
)
def test_config_errors_exit_2(tmp_path, capsys, text):
    assert main(["run", "--config", cfg_file(tmp_path, text)]) == 2
    err = capsys.readouterr().err
    assert err.startswith("config error") and len(err.strip().splitlines()) == 1


def test_missing_config_exit_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.cfg")]) == 2


def test_data_error_exit_3(tmp_path, capsys):
    (tmp_path / "s").write_text("y\ttarget\n")
    cfg = "dataset = missing.csv\nschema = s\n"
    assert main(["run", "--config", cfg_file(tmp_path, cfg)]) == 3
    assert capsys.readouterr().err.startswith("data error")


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_exit_4(tmp_path, capsys):
    cfg = LINEAR_CFG.replace("epochs = 5", "epochs = 50") + "lr = 1000\n"
    assert main(["run", "--config", cfg_file(tmp_path, cfg)]) == 4
    assert capsys.readouterr().err.startswith("numeric failure")


def test_parse_config_types():
    cfg = parse_config("dataset = linear  # synthetic\nk = 3\nlr = 0.5\nmetric = mse,error_variance\n")
    assert (cfg.k, cfg.lr, cfg.metric) == (3, 0.5, ["mse", "error_variance"])
    with pytest.raises(ConfigError):
        parse_config("dataset linear\n")


def test_verify_passes(capsys):
    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert "PASS\ttriplet_uniform_c3_is_2/9" in out
    assert "FAIL" not in out


def test_verify_detects_perturbed_erf(monkeypatch, capsys):
    real = aggmle.likelihood.erf
    monkeypatch.setattr(aggmle.likelihood, "erf", lambda x: real(x) + 1e-4)
    assert main(["verify"]) == 1
    out = capsys.readouterr().out
    assert any(line.startswith("FAIL\trank_gauss_vs_2d_quadrature") for line in out.splitlines())
