"""Tests for the command-line harness: configs, reports, sweeps, suites."""

import csv
import json

import numpy as np
import pytest

from qmdp.cli import (
    build_instance,
    fit_power_law,
    load_config,
    main,
    run_suite,
    run_sweep,
    sandwich_success,
    validate_config,
)
from qmdp.errors import ConfigError, InternalError
from qmdp.mdp import mdp_to_dict
from qmdp.rng import derived_rng


def fig_two_config(eps=0.5, solver="variance-reduced", seed=42, A=2, arms=(1,)):
    return {
        "instance": {
            "hard_instance": {
                "gamma": 0.9,
                "num_actions": A,
                "eps": eps,
                "large_arms": list(arms),
            }
        },
        "solver": {"name": solver, "eps": eps, "delta": 0.1},
        "seed": seed,
    }


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


class TestConfigValidation:
    def test_exactly_one_instance_source(self):
        doc = fig_two_config()
        doc["instance"]["two_state"] = {"gamma": 0.9, "p": 0.5}
        with pytest.raises(ConfigError, match="exactly one"):
            validate_config(doc)

    def test_missing_seed(self):
        doc = fig_two_config()
        del doc["seed"]
        with pytest.raises(ConfigError, match="seed"):
            validate_config(doc)

    def test_unknown_solver(self):
        doc = fig_two_config()
        doc["solver"]["name"] = "magic"
        with pytest.raises(ConfigError, match="solver.name"):
            validate_config(doc)

    def test_malformed_json_reports_path(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="broken.json"):
            load_config(path)

    def test_build_instance_variants(self, tmp_path):
        mdp, prov = build_instance({"two_state": {"gamma": 0.9, "p": 0.5}})
        assert mdp.num_states == 2 and prov is not None
        mdp2, prov2 = build_instance({"mdp": mdp_to_dict(mdp)})
        np.testing.assert_array_equal(mdp.transitions, mdp2.transitions)
        assert prov2 is None


class TestSolveCommand:
    def test_zero_reward_instance_reports_zero(self, tmp_path):
        zero = {
            "S": 2, "A": 2, "gamma": 0.9,
            "r": [[0.0, 0.0], [0.0, 0.0]],
            "p": [[[0.5, 0.5], [0.5, 0.5]], [[0.5, 0.5], [0.5, 0.5]]],
        }
        doc = fig_two_config()
        doc["instance"] = {"mdp": zero}
        cfg = write_config(tmp_path, doc)
        out = tmp_path / "report.json"
        assert main(["solve", "--config", str(cfg), "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["v_hat"] == [0.0, 0.0]

    def test_determinism_modulo_timestamp(self, tmp_path):
        cfg = write_config(tmp_path, fig_two_config())
        out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
        assert main(["solve", "--config", str(cfg), "--out", str(out1)]) == 0
        assert main(["solve", "--config", str(cfg), "--out", str(out2)]) == 0
        d1 = json.loads(out1.read_text())
        d2 = json.loads(out2.read_text())
        d1.pop("timestamp")
        d2.pop("timestamp")
        assert json.dumps(d1, sort_keys=True) == json.dumps(d2, sort_keys=True)

    def test_sandwich_versus_closed_form(self, tmp_path):
        doc = fig_two_config(eps=0.3)
        doc["instance"] = {"two_state": {"gamma": 0.9, "p": 0.5}}
        cfg = write_config(tmp_path, doc)
        out = tmp_path / "report.json"
        assert main(["solve", "--config", str(cfg), "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        v_star = 1.0 / (1.0 - 0.45)
        assert v_star - 0.3 <= report["v_hat"][0] <= v_star + 1e-9

    def test_snapshots_csv(self, tmp_path):
        doc = fig_two_config(eps=1.0)
        doc["snapshots_csv"] = str(tmp_path / "snaps.csv")
        cfg = write_config(tmp_path, doc)
        assert main(["solve", "--config", str(cfg), "--out",
                     str(tmp_path / "r.json")]) == 0
        with open(doc["snapshots_csv"], newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["epoch", "iteration", "state", "v", "pi"]
        assert len(rows) > 1

    def test_bad_config_exit_code(self, tmp_path):
        doc = fig_two_config()
        del doc["solver"]["eps"]
        cfg = write_config(tmp_path, doc)
        assert main(["solve", "--config", str(cfg), "--out",
                     str(tmp_path / "r.json")]) == 2

    def test_precondition_exit_code(self, tmp_path):
        doc = fig_two_config()
        doc["solver"]["eps"] = 9.0  # above sqrt(horizon) for variance-reduced
        cfg = write_config(tmp_path, doc)
        assert main(["solve", "--config", str(cfg), "--out",
                     str(tmp_path / "r.json")]) == 2

    def test_internal_error_exit_code(self, tmp_path, monkeypatch):
        import qmdp.cli as cli_mod

        def boom(*args, **kwargs):
            raise InternalError("synthetic")

        monkeypatch.setattr(cli_mod, "run_solver", boom)
        cfg = write_config(tmp_path, fig_two_config())
        assert main(["solve", "--config", str(cfg), "--out",
                     str(tmp_path / "r.json")]) == 3


class TestSweepCommand:
    def test_eps_sweep_csv_and_fit(self, tmp_path):
        cfg = write_config(tmp_path, fig_two_config(solver="max-finding"))
        out_csv = tmp_path / "sweep.csv"
        out_fit = tmp_path / "fit.json"
        rc = main([
            "sweep", "--config", str(cfg), "--axis", "eps",
            "--values", "0.8,0.4,0.2", "--seeds", "3",
            "--out-csv", str(out_csv), "--out-fit", str(out_fit),
        ])
        assert rc == 0
        with open(out_csv, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["axis_value", "seed", "classical_samples",
                           "quantum_oracle_calls", "success"]
        assert len(rows) == 1 + 3 * 3
        # round-trip: parsed rows match the in-memory sweep
        mem_rows, fit = run_sweep(json.loads(cfg.read_text()), "eps",
                                  [0.8, 0.4, 0.2], 3)
        parsed = [(float(r[0]), int(r[1]), int(r[2]), int(r[3]), int(r[4]))
                  for r in rows[1:]]
        assert parsed == [tuple(r) for r in mem_rows]
        fit_doc = json.loads(out_fit.read_text())
        assert fit_doc["axis"] == "eps"
        assert fit_doc["slope"] == pytest.approx(fit["slope"])
        assert len(fit_doc["points"]) == 3

    def test_requires_three_values(self, tmp_path):
        cfg = write_config(tmp_path, fig_two_config())
        rc = main([
            "sweep", "--config", str(cfg), "--axis", "eps", "--values", "0.5,0.4",
            "--seeds", "3", "--out-csv", str(tmp_path / "s.csv"),
            "--out-fit", str(tmp_path / "f.json"),
        ])
        assert rc == 2

    def test_num_actions_axis(self, tmp_path):
        doc = fig_two_config(solver="max-finding", A=2, arms=(1,))
        rows, fit = run_sweep(doc, "num_actions", [2, 4, 8], 2)
        assert fit["axis"] == "num_actions"
        assert {r[0] for r in rows} == {2, 4, 8}

    def test_success_column_uses_exact_oracle(self):
        doc = fig_two_config(eps=1.0)
        rows, _ = run_sweep(doc, "eps", [1.0, 0.5, 0.25], 2)
        # estimates on these instances succeed essentially always
        assert np.mean([r[4] for r in rows]) >= 0.8


class TestFitPowerLaw:
    def test_known_exponents_with_noise(self):
        for beta in (0.5, 1.0, 2.0):
            rng = derived_rng(31, "fit", int(beta * 10))
            xs = np.array([2.0, 4.0, 8.0, 16.0, 32.0])
            ys = 3.0 * xs**beta * np.exp(rng.normal(0.0, 0.01, xs.size))
            slope, r2 = fit_power_law(xs, ys)
            assert slope == pytest.approx(beta, abs=0.02)
            assert r2 > 0.99

    def test_constant_data_gives_zero_slope(self):
        # degenerate sweep: fixed query charge at every point
        slope, _ = fit_power_law([1.0, 2.0, 4.0], [10.0, 10.0, 10.0])
        assert slope == pytest.approx(0.0, abs=1e-12)

    def test_needs_three_points(self):
        from qmdp.errors import PreconditionError

        with pytest.raises(PreconditionError):
            fit_power_law([1.0, 2.0], [1.0, 2.0])


class TestVerifyCommand:
    def test_gap_suite(self, capsys):
        assert main(["verify", "--suite", "gap"]) == 0
        assert "pass" in capsys.readouterr().out

    def test_total_variance_suite_small(self):
        assert main(["verify", "--suite", "total-variance", "--trials", "40"]) == 0

    def test_oracle_normalization_suite_small(self):
        assert main(["verify", "--suite", "oracle-normalization", "--trials", "10"]) == 0

    def test_monotone_suite_small(self):
        assert main(["verify", "--suite", "monotone-iterates", "--trials", "5"]) == 0

    def test_contraction_suite_small(self):
        assert main(["verify", "--suite", "contraction", "--trials", "50"]) == 0

    def test_sandwich_suite_small(self):
        assert main(["verify", "--suite", "sandwich", "--trials", "10"]) == 0

    def test_unknown_suite(self):
        assert main(["verify", "--suite", "nope"]) == 2

    def test_run_suite_counts(self):
        passed, total, ok = run_suite("gap")
        assert ok and passed == total > 0


class TestOracleBuildCommand:
    def test_round_trip(self, tmp_path):
        mdp, _ = build_instance({"two_state": {"gamma": 0.9, "p": 0.375}})
        src = tmp_path / "m.json"
        src.write_text(json.dumps(mdp_to_dict(mdp)))
        out = tmp_path / "dyadic.json"
        assert main(["oracle-build", "--mdp", str(src), "--m", "8",
                     "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["m"] == 8
        counts = np.asarray(doc["counts"])
        assert counts.shape == (2, 1, 2)
        assert counts.sum(axis=2).tolist() == [[256], [256]]
        # 0.375 = 96/256 is exactly dyadic at m = 8
        assert doc["max_distortion"] == 0.0
        assert counts[0, 0].tolist() == [96, 160]


class TestSandwichSuccessHelper:
    def test_accepts_good_report_and_rejects_bad(self):
        doc = fig_two_config(eps=0.5)
        mdp, _ = build_instance(doc["instance"])
        from qmdp.cli import estimator_config, run_solver

        report = run_solver(mdp, doc["solver"], estimator_config(None), seed=3)
        assert sandwich_success(mdp, report, 0.5)
        report.v_hat = report.v_hat + 1.0  # above v*: must fail
        assert not sandwich_success(mdp, report, 0.5)
