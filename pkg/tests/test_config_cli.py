import csv
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgdchain.cli import main
from sgdchain.config import (
    ConfigError,
    ExperimentSpec,
    NoiseSpec,
    ObjectiveSpec,
    OutputSpec,
    RunSpec,
    SgdSpec,
    TestSpec,
    format_config,
    load_config,
    parse_config,
    save_config,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
positive = st.floats(1e-6, 1e6, allow_nan=False, allow_infinity=False)
word = st.text("abcdefghijklmnopqrstuvwxyz-_:0123456789", min_size=1, max_size=12)
vec = st.lists(finite, min_size=1, max_size=5)

specs = st.builds(
    RunSpec,
    objective=st.builds(ObjectiveSpec, name=word, dim=st.integers(1, 50), lam=positive,
                        nu=positive, R=st.none() | positive, center=st.none() | vec,
                        dataset=st.none() | word),
    noise=st.builds(NoiseSpec, kind=st.sampled_from(["none", "gaussian", "student_t", "minibatch"]),
                    sigma=positive, df=positive, scale=positive, replace=st.booleans()),
    sgd=st.builds(SgdSpec, eta=positive, n_iters=st.integers(1, 10**9),
                  burn_in=st.integers(0, 10**6), theta0=vec, seed=st.integers(0, 2**63),
                  batch_size=st.integers(1, 1000)),
    test=st.builds(TestSpec, functions=st.lists(word, min_size=1, max_size=3)),
    experiment=st.builds(ExperimentSpec, N=st.integers(2, 10**5),
                         etas=st.none() | st.lists(positive, min_size=1, max_size=4),
                         theta0_alt=st.none() | vec, skew_tol=positive, kurt_tol=positive,
                         level=st.floats(0.01, 0.99),
                         strategy=st.sampled_from(["batch-means", "replication"]),
                         batch_len=st.none() | st.integers(1, 10**6)),
    output=st.builds(OutputSpec, dir=word),
)


@settings(max_examples=100, deadline=None)
@given(specs)
def test_config_round_trip(spec):
    assert parse_config(format_config(spec)) == spec


def test_config_file_io_and_errors(tmp_path):
    spec = RunSpec()
    spec.sgd.eta = 0.3
    path = save_config(spec, tmp_path / "a" / "run.cfg")
    assert load_config(path) == spec
    assert "sgd.eta = 0.3" in path.read_text()
    with pytest.raises(ConfigError):
        parse_config("sgd.eta 0.3")
    with pytest.raises(ConfigError):
        parse_config("sgd.speed = 1")
    with pytest.raises(ConfigError):
        parse_config("gpu.count = 1")
    with pytest.raises(ConfigError):
        parse_config("sgd.n_iters = many")
    assert parse_config("# comment\n\nnoise.replace = no\n").noise.replace is False


def test_generate_data_cli(tmp_path, capsys):
    out = tmp_path / "d.csv"
    args = ["generate-data", "--m", "50", "--d", "10", "--noise-df", "10", "--seed", "1",
            "--out", str(out)]
    assert main(args) == 0
    first = out.read_bytes()
    rows = list(csv.reader(out.read_text().splitlines()))
    assert len(rows) == 51 and len(rows[0]) == 11
    assert main(args) == 0
    assert out.read_bytes() == first
    assert main(["generate-data", "--m", "0", "--d", "10"]) == 1


def test_run_cli_outputs_and_cap(tmp_path):
    out = tmp_path / "run"
    base = ["run", "--objective", "quadsine", "--noise", "gaussian", "--n-iters", "2000",
            "--burn-in", "100", "--theta0", "0", "--out", str(out), "--dump-iterates"]
    # c_L_alpha for quadsine with unit gaussian noise is about 0.0033
    assert main(base + ["--eta", "0.02"]) == 1
    assert main(base + ["--eta", "0.003"]) == 0
    summary = json.loads((out / "run_summary.json").read_text())
    assert summary["n_recorded"] == 1900
    lines = (out / "iterates.csv").read_text().splitlines()
    assert lines[0] == "k,theta_1" and lines[1].startswith("101,")
    assert load_config(out / "run_spec.cfg").sgd.eta == 0.003


def test_run_cli_divergence_exit_code(tmp_path):
    args = ["run", "--objective", "quadratic", "--noise", "none", "--eta", "3", "--theta0", "1",
            "--n-iters", "1000", "--force", "--out", str(tmp_path)]
    assert main(args) == 2


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "spec.cfg"
    cfg.write_text("objective.name = quadratic\nnoise.kind = none\nsgd.eta = 0.1\n"
                   "sgd.n_iters = 100\nsgd.theta0 = 1.0\n")
    assert main(["run", "--config", str(cfg), "--eta", "0.2", "--out", str(tmp_path / "o")]) == 0
    assert load_config(tmp_path / "o" / "run_spec.cfg").sgd.eta == 0.2


def test_clt_cli(tmp_path):
    out = tmp_path / "clt"
    args = ["clt", "--objective", "quadratic", "--noise", "gaussian", "--etas", "0.1,0.2",
            "--theta0", "0", "--theta0-alt", "0.5", "--n-iters", "600", "--burn-in", "100",
            "--N", "200", "--phi", "coord:0", "--out", str(out), "--force"]
    assert main(args) == 0
    summary = json.loads((out / "clt_summary.json").read_text())
    assert len(summary["cells"]) == 4 and len(summary["init_ks"]) == 2
    assert (out / "clt_eta0.1_init1.csv").read_text().startswith("stream_id,value\n")
    assert main(args[:-6] + ["--N", "1", "--phi", "coord:0", "--out", str(out)]) == 1


def test_bias_cli_guard_and_output(tmp_path):
    data = tmp_path / "d.csv"
    main(["generate-data", "--m", "30", "--d", "3", "--out", str(data)])
    rc = main(["bias", "--objective", "cauchy-reg-mle", "--dataset", str(data), "--etas", "0.1,0.2",
               "--n-iters", "100", "--N", "5", "--force", "--out", str(tmp_path / "b")])
    assert rc == 1
    out = tmp_path / "q"
    rc = main(["bias", "--objective", "quadratic", "--noise", "gaussian", "--etas", "0.1,0.2",
               "--n-iters", "300", "--N", "20", "--phi", "norm", "--force", "--out", str(out)])
    assert rc == 0
    curve = json.loads((out / "bias_curve.json").read_text())
    assert curve["etas"] == [0.1, 0.2] and len(curve["bias"]) == 2
    assert (out / "bias_trace.csv").read_text().startswith("eta,k,abs_bias\n")


def test_variance_cli(tmp_path):
    common = ["variance", "--objective", "quadratic", "--noise", "gaussian", "--eta", "0.1",
              "--theta0", "0", "--phi", "coord:0", "--force"]
    bm = tmp_path / "bm"
    assert main(common + ["--n-iters", "200000", "--batch-len", "2000", "--out", str(bm)]) == 0
    rep = tmp_path / "rep"
    assert main(common + ["--n-iters", "5100", "--burn-in", "100", "--N", "1000",
                          "--strategy", "replication", "--out", str(rep)]) == 0
    a = json.loads((bm / "variance.json").read_text())
    b = json.loads((rep / "variance.json").read_text())
    assert a["sigma2"] == pytest.approx(b["sigma2"], rel=0.25)
    lo, hi = a["ci"]
    assert lo < a["mean"] < hi
    assert main(common + ["--level", "1.5", "--out", str(rep)]) == 1
    const = tmp_path / "c"
    assert main(["variance", "--objective", "quadratic", "--noise", "none", "--eta", "0.1",
                 "--theta0", "0", "--n-iters", "10000", "--out", str(const)]) == 0
    c = json.loads((const / "variance.json").read_text())
    assert c["sigma2"] == 0.0 and c["ci"][0] == c["ci"][1]


def test_check_cli(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["check", "--objective", "quadsine", "--assumption", "dissipativity",
                 "--alpha", "1", "--out", out]) == 0
    cert = json.loads((tmp_path / "certificate_dissipativity.json").read_text())
    assert cert["certified"] and cert["estimates"]["beta"] <= 25
    assert main(["check", "--objective", "simplified-cauchy", "--dim", "10",
                 "--assumption", "lojasiewicz", "--out", out]) == 0
    cert = json.loads((tmp_path / "certificate_lojasiewicz.json").read_text())
    assert cert["params"]["gamma"] == pytest.approx(2 * 0.01 / 1.1)
    assert main(["check", "--objective", "simplified-cauchy", "--dim", "10",
                 "--assumption", "convexity", "--out", out]) == 3


def test_constants_cli(capsys):
    assert main(["constants", "--L", "1", "--alpha", "1", "--beta", "25", "--L-xi", "1"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["c_L_alpha"] == 0.25 and report["mu2"] == 53
    assert main(["constants", "--L", "1", "--alpha", "1", "--beta", "1", "--L-xi", "0",
                 "--eta", "0.5"]) == 1
    assert "c_dagger" in capsys.readouterr().err
    assert main(["constants", "--alpha", "1"]) == 1
    assert main(["constants", "--objective", "quadsine", "--noise", "gaussian"]) == 0


def test_unknown_subcommand_is_usage_error():
    assert main(["plot"]) == 1
    assert main(["run", "--eta", "fast"]) == 1


def test_horizon_presets(tmp_path):
    base = ["run", "--objective", "quadratic", "--noise", "none", "--eta", "0.1", "--theta0", "1",
            "--burn-in", "50"]
    assert main(base + ["--horizon", "moderate", "--out", str(tmp_path / "m")]) == 0
    assert load_config(tmp_path / "m" / "run_spec.cfg").sgd.n_iters == 1050
    assert main(base + ["--horizon", "long", "--n-iters", "300", "--out", str(tmp_path / "l")]) == 0
    assert load_config(tmp_path / "l" / "run_spec.cfg").sgd.n_iters == 300
