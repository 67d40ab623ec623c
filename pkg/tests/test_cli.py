import json
import warnings

import numpy as np
import pytest

from nldp_halfspace import __version__
from nldp_halfspace.cli import main
from nldp_halfspace.dataset_io import read_dataset
from nldp_halfspace.harness import read_hypothesis
from nldp_halfspace.ldp_client import read_reports

BASE = """
pipeline = "{pipeline}"
seed = 5
trials = 1000

[data]
d = 2
n_private = 2000
m_public = 3000
mu_norm = 2.0

[privacy]
epsilon = 4.0
delta = 0.1

[encode]
p = 4

[committee]
k = 3

[lhmn]
N = 500
eta = 1e-4

[selftrain]
T = 20
"""

AUDIT = """
[audit]
mechanism = "hinge"
p = 2
epsilon = 16.0
delta = 0.1
x = [0.6, -0.3]
y = 1.0
w = [0.3, 0.4]
trials = 20000
reuse_copy = {reuse}
"""


@pytest.fixture
def config(tmp_path):
    def make(pipeline="hinge_private", extra=""):
        path = tmp_path / f"{pipeline}.toml"
        path.write_text(BASE.format(pipeline=pipeline) + extra)
        return str(path)
    return make


@pytest.fixture(autouse=True)
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


class TestCli:
    def test_version(self, capsys):
        with pytest.raises(SystemExit):
            main(["--version"])
        assert __version__ in capsys.readouterr().out

    def test_generate_encode_train_evaluate(self, config, tmp_path, capsys):
        cfg = config()
        out = tmp_path / "run"
        assert main(["generate", "--config", cfg, "--out", str(out)]) == 0
        private = read_dataset(out / "private.ds")
        assert len(private) == 2000 and private.X.shape[1] == 2
        assert main(["encode", "--config", cfg, "--data", str(out / "private.ds"), "--out", str(out)]) == 0
        reports = list(read_reports(out / "reports.jsonl"))
        assert len(reports) == 2000 and reports[0].kind == "hinge"
        assert main(["train-private", "--config", cfg, "--reports", str(out / "reports.jsonl"),
                     "--out", str(out)]) == 0
        w = read_hypothesis(out / "hypothesis.json")
        assert w.shape == (2,)
        assert (out / "training_log.csv").read_text().startswith("schema,iteration")
        capsys.readouterr()
        assert main(["evaluate", "--config", cfg, "--hypothesis", str(out / "hypothesis.json"),
                     "--trials", "2000"]) == 0
        result = json.loads(capsys.readouterr().out)
        assert result["schema"] == 1 and result["n"] == 2000 and 0.0 <= result["estimate"] <= 1.0

    def test_logistic_encode_and_train(self, config, tmp_path):
        cfg = config("logistic_private")
        out = tmp_path / "lr"
        assert main(["generate", "--config", cfg, "--out", str(out)]) == 0
        assert main(["encode", "--config", cfg, "--data", str(out / "private.ds"), "--out", str(out)]) == 0
        assert next(iter(read_reports(out / "reports.jsonl"))).kind == "logistic"
        assert main(["train-private", "--config", cfg, "--reports", str(out / "reports.jsonl"),
                     "--out", str(out)]) == 0
        assert np.all(np.isfinite(read_hypothesis(out / "hypothesis.json")))

    def test_train_massart(self, config, tmp_path, capsys):
        out = tmp_path / "m"
        assert main(["train-massart", "--config", config("massart"), "--out", str(out),
                     "--k", "5", "--log-every", "500"]) == 0
        text = capsys.readouterr().out
        assert "committee_vote error" in text and "report hash" in text
        report = json.loads((out / "report.json").read_text())
        assert report["config"]["committee"]["k"] == 5
        assert (out / "learning_log.csv").read_text().count("\n") >= 2

    def test_train_selftrain_and_seed_override(self, config, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        cfg = config("selftrain")
        assert main(["train-selftrain", "--config", cfg, "--out", str(a)]) == 0
        assert main(["train-selftrain", "--config", cfg, "--out", str(b), "--seed", "6"]) == 0
        lines = (a / "trajectory.jsonl").read_text().splitlines()
        assert len(lines) == 21
        ha = json.loads((a / "report.json").read_text())["hash"]
        hb = json.loads((b / "report.json").read_text())["hash"]
        assert ha != hb

    @pytest.mark.parametrize("reuse,code", [("false", 0), ("true", 1)])
    def test_audit_exit_codes(self, config, tmp_path, reuse, code, capsys):
        # reusing one noisy copy across product terms biases the estimator
        cfg = config(extra=AUDIT.format(reuse=reuse))
        assert main(["audit", "--config", cfg, "--out", str(tmp_path)]) == code
        report = json.loads((tmp_path / "audit.json").read_text())
        assert report["passed"] is (code == 0)

    def test_sweep(self, config, tmp_path):
        cfg = config(extra='\n[sweep]\naxis = "n"\ngrid = [500, 1000]\ntrials = 1\n')
        assert main(["sweep", "--config", cfg, "--out", str(tmp_path)]) == 0
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert len(lines) == 1 + 2 * 2

    def test_poly_inspect(self, tmp_path, capsys):
        assert main(["poly", "inspect", "--p", "4", "--degrees", "8,16"]) == 0
        assert capsys.readouterr().out.strip()
        target = tmp_path / "poly.csv"
        assert main(["poly", "inspect", "--out", str(target)]) == 0
        assert target.read_text().strip()

    def test_errors_exit_two(self, config, tmp_path, capsys):
        assert main(["train-massart", "--config", str(tmp_path / "missing.toml")]) == 2
        bad = tmp_path / "bad.toml"
        bad.write_text('pipeline = "massart"\n[privacy]\nepsilon = -1.0\n')
        assert main(["train-massart", "--config", str(bad)]) == 2
        assert "epsilon" in capsys.readouterr().err
