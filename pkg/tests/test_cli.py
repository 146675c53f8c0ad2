import csv
import json

import numpy as np
import pytest

from abcadjust.cli import EXIT_CONFIG, EXIT_NUMERICAL, config_hash, main
from abcadjust.estimators import weighted_quantiles
from abcadjust.reference import ReferenceTable, accept


def _run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def gaussian_table(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert _run("simulate", "--model", "gaussian", "--n", 3000, "--seed", 4, "--out", out) == 0
    return out


class TestSimulate:
    def test_outputs(self, gaussian_table):
        with open(gaussian_table / "table.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["theta_sigma2", "stat_xbar", "stat_s2"]
        assert len(rows) == 3001
        meta = json.loads((gaussian_table / "table.json").read_text())
        assert meta["seed"] == 4 and meta["n"] == 3000
        assert meta["config_hash"]

    def test_byte_identical_rerun(self, gaussian_table, tmp_path):
        assert _run("simulate", "--model", "gaussian", "--n", 3000, "--seed", 4, "--out", tmp_path) == 0
        assert (tmp_path / "table.csv").read_bytes() == (gaussian_table / "table.csv").read_bytes()
        assert (tmp_path / "table.json").read_bytes() == (gaussian_table / "table.json").read_bytes()

    def test_worker_count_does_not_change_output(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert _run("simulate", "--model", "coalescent", "--n", 5000, "--seed", 2, "--out", a) == 0
        assert _run("simulate", "--model", "coalescent", "--n", 5000, "--seed", 2, "--workers", 2, "--out", b) == 0
        assert (a / "table.csv").read_bytes() == (b / "table.csv").read_bytes()


    def test_coalescent_counts_are_integers(self, tmp_path):
        assert _run("simulate", "--model", "coalescent", "--n", 100, "--seed", 1, "--out", tmp_path) == 0
        with open(tmp_path / "table.csv") as fh:
            S = np.array([float(r["stat_S"]) for r in csv.DictReader(fh)])
        assert np.all(S >= 0) and np.array_equal(S, np.round(S))


class TestEstimate:
    def test_fixed_degree_zero(self, gaussian_table, tmp_path):
        code = _run(
            "estimate", "--table", gaussian_table / "table.csv", "--obs", "[0.1, 1.2]",
            "--seed", 1, "--degree", 0, "--transform", "fixed:id,log", "--accept-q", 0.05,
            "--out", tmp_path,
        )
        assert code == 0
        summary = json.loads((tmp_path / "sigma2_summary.json").read_text())
        assert summary["seed"] == 1 and len(summary["config_hash"]) == 16
        lo, hi = summary["ci95"]
        assert 0 < lo < hi
        report = json.loads((tmp_path / "sigma2_report.json").read_text())
        assert report["chosen_degree"] == 0
        assert report["chosen_transform"] == "identity,log"
        lines = (tmp_path / "sigma2_density.csv").read_text().splitlines()
        assert lines[0] == "theta,density" and len(lines) == 513

    def test_degree_zero_matches_direct_rejection(self, gaussian_table, tmp_path):
        code = _run(
            "estimate", "--table", gaussian_table / "table.csv", "--obs", "[0.1, 1.2]",
            "--seed", 1, "--degree", 0, "--transform", "fixed:id,log", "--accept-q", 0.05,
            "--out", tmp_path,
        )
        assert code == 0
        summary = json.loads((tmp_path / "sigma2_summary.json").read_text())
        table = ReferenceTable.load(str(gaussian_table / "table.csv"))
        stats = np.column_stack([table.stats[:, 0], np.log(table.stats[:, 1])])
        acc = accept(stats, [0.1, np.log(1.2)], q=0.05, theta=table.param("sigma2"))
        probs = [float(p) for p in summary["quantiles"]]
        direct = weighted_quantiles(acc.theta, acc.weights, probs)
        np.testing.assert_allclose(list(summary["quantiles"].values()), direct, rtol=1e-12)

    def test_auto_rerun_identical(self, gaussian_table, tmp_path):
        args = ["estimate", "--table", gaussian_table / "table.csv", "--obs", "[0.1, 1.2]",
                "--seed", 1, "--accept-q", 0.05]
        assert _run(*args, "--out", tmp_path / "a") == 0
        assert _run(*args, "--out", tmp_path / "b") == 0
        for name in ("sigma2_summary.json", "sigma2_density.csv", "sigma2_report.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_missing_seed_is_config_error(self, gaussian_table, tmp_path, capsys):
        code = _run("estimate", "--table", gaussian_table / "table.csv", "--obs", "[0, 1]", "--out", tmp_path)
        assert code == EXIT_CONFIG == 2
        assert "seed" in capsys.readouterr().err

    def test_bad_quantile(self, gaussian_table, tmp_path):
        code = _run("estimate", "--table", gaussian_table / "table.csv", "--obs", "[0, 1]",
                    "--seed", 1, "--accept-q", 1.5, "--out", tmp_path)
        assert code == EXIT_CONFIG

    def test_inapplicable_fixed_transform(self, gaussian_table, tmp_path):
        code = _run("estimate", "--table", gaussian_table / "table.csv", "--obs", "[-1.0, 1]",
                    "--seed", 1, "--transform", "fixed:log,id", "--out", tmp_path)
        assert code == EXIT_CONFIG

    def test_degenerate_table_is_numerical(self, tmp_path):
        path = tmp_path / "flat.csv"
        rows = ["theta_x,stat_a"] + [f"{i / 10!r},1.0" for i in range(100)]
        path.write_text("\n".join(rows) + "\n")
        code = _run("estimate", "--table", path, "--obs", "[1.0]", "--seed", 1,
                    "--degree", 1, "--transform", "fixed:id", "--out", tmp_path / "o")
        assert code == EXIT_NUMERICAL == 3


class TestSelectAndReplicate:
    def test_select_writes_report(self, gaussian_table, tmp_path):
        code = _run("select", "--table", gaussian_table / "table.csv", "--obs", "[0.1, 1.2]",
                    "--seed", 1, "--accept-q", 0.05, "--out", tmp_path)
        assert code == 0
        report = json.loads((tmp_path / "sigma2_report.json").read_text())
        assert len(report["wssr"]) == 9
        assert report["chosen_transform"] == "identity,log"
        assert report["chosen_degree"] in (0, 1, 2)

    def test_replicate(self, tmp_path):
        code = _run("replicate", "--model", "gaussian", "--n", 2000, "--seed", 3, "-R", 2,
                    "--obs", "[0.5, 1.0]", "--accept-q", 0.05, "--degree", 1,
                    "--transform", "fixed:id,log", "--out", tmp_path)
        assert code == 0
        with open(tmp_path / "quantiles.csv") as fh:
            rows = list(csv.DictReader(fh))
        # one row per (replicate, degree)
        assert len(rows) == 6
        assert sum(int(r["selected"]) for r in rows) == 2
        assert {r["within_tol"] for r in rows} <= {"0", "1"}
        tally = json.loads((tmp_path / "tally.json").read_text())
        assert tally["replicates"] == 2
        again = tmp_path / "again"
        assert _run("replicate", "--model", "gaussian", "--n", 2000, "--seed", 3, "-R", 2,
                    "--obs", "[0.5, 1.0]", "--accept-q", 0.05, "--degree", 1,
                    "--transform", "fixed:id,log", "--out", again) == 0
        assert (again / "quantiles.csv").read_bytes() == (tmp_path / "quantiles.csv").read_bytes()


class TestTheory:
    def test_constants(self, tmp_path):
        code = _run("theory", "--model", "toy", "--s-obs", "[0.5]", "--theta", 1.0,
                    "--seed", 1, "--out", tmp_path)
        assert code == 0
        c = json.loads((tmp_path / "constants.json").read_text())
        assert c["C2_1"] == 0.0
        np.testing.assert_allclose(c["C3"], 0.36, rtol=1e-12)

    def test_sweep(self, tmp_path):
        code = _run("theory", "--model", "linear", "--s-obs", "[0.0]", "--theta", 0.0,
                    "--seed", 1, "--sweep", "--n-values", "[1000, 2000]", "--b-values", "[0.5]",
                    "--b-prime", 0.4, "--degrees", "[0, 1]", "-R", 3, "--out", tmp_path)
        assert code == 0
        with open(tmp_path / "sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        assert {r["estimator"] for r in rows} == {"0", "1"}


def test_config_hash_ignores_output_location():
    a = {"seed": 1, "n": 10, "out": "x", "workers": 1}
    b = {"seed": 1, "n": 10, "out": "y", "workers": 4}
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash({**a, "n": 11})
