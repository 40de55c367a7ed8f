"""CLI subcommands, config handling, determinism, and exit codes."""

import csv
import json
from pathlib import Path

import pytest

from cascade_lab.cli import DEFAULT_CONFIG, ExperimentConfig, main
from cascade_lab.errors import ConfigError


def run(tmp_path, *args, config=None):
    argv = []
    if config is not None:
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(config))
        argv += ["--config", str(cfg_path)]
    argv += list(args)
    return main(argv)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestConfig:
    def test_defaults_validate(self):
        cfg = ExperimentConfig.from_dict({})
        assert cfg.data == DEFAULT_CONFIG

    def test_unknown_top_level_field_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"bogus": 1})

    def test_unknown_nested_field_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"shape": {"m": 2, "k": 2, "depth": 3}})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"verify": {"nope": True}})

    def test_round_trip_identity(self):
        doc = {
            "shape": {"m": 3, "k": 2},
            "q": [2.0, 3.0],
            "trials": 77,
            "orbits": {"n": [2], "lambdas": [0.5], "epsilons": [0.5]},
        }
        cfg = ExperimentConfig.from_dict(doc)
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again.to_dict() == cfg.to_dict()

    def test_model_and_measure_materialize(self):
        cfg = ExperimentConfig.from_dict({})
        assert cfg.shape.m == 2 and cfg.shape.k == 2
        assert cfg.measure.cylinder_mass((1,)) == pytest.approx(0.5)
        assert cfg.model.law_at((1,)).moment(2) == pytest.approx(1.25)

    def test_invalid_model_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(
                {"model": {"assignment": "homogeneous", "laws": [{"type": "two_point", "a": 1, "b": 1, "p": 2}]}}
            ).model


class TestSimulate:
    def test_row_count_and_shape(self, tmp_path):
        config = {"shape": {"m": 2, "k": 5}, "trials": 10}
        out = tmp_path / "o"
        assert run(tmp_path, "--out", str(out), "simulate", config=config) == 0
        rows = read_csv(out / "simulate.csv")
        assert rows[0] == ["trial", "level", "Z"]
        assert len(rows) - 1 == 50

    def test_constant_model_unit_mass(self, tmp_path):
        config = {
            "model": {"assignment": "homogeneous", "laws": [{"type": "constant"}]},
            "trials": 4,
        }
        out = tmp_path / "o"
        assert run(tmp_path, "--out", str(out), "simulate", config=config) == 0
        rows = read_csv(out / "simulate.csv")[1:]
        assert all(row[2] == "1.0" for row in rows)

    def test_byte_identical_runs_and_threads(self, tmp_path):
        outs = []
        for name, threads in [("a", "1"), ("b", "1"), ("c", "4")]:
            out = tmp_path / name
            assert (
                run(
                    tmp_path,
                    "--out",
                    str(out),
                    "--seed",
                    "31",
                    "--trials",
                    "50",
                    "--threads",
                    threads,
                    "simulate",
                )
                == 0
            )
            outs.append((out / "simulate.csv").read_bytes())
        assert outs[0] == outs[1] == outs[2]


class TestMoments:
    def test_cross_engine_values(self, tmp_path):
        config = {"shape": {"m": 2, "k": 1}, "q": [2.0], "trials": 100_000}
        values = {}
        for engine in ("exact_integer", "exact_discrete", "mc"):
            out = tmp_path / engine
            assert (
                run(tmp_path, "--out", str(out), "--engine", engine, "moments", config=config)
                == 0
            )
            rows = read_csv(out / "moments.csv")[1:]
            values[engine] = float(rows[0][3])
            stderr = rows[0][4]
            if engine == "mc":
                assert abs(values["mc"] - 1.125) < 4 * float(stderr)
            else:
                assert values[engine] == 1.125
                assert stderr == ""

    def test_auto_engine_routing(self, tmp_path):
        config = {"shape": {"m": 2, "k": 1}, "q": [2.0, 2.5]}
        out = tmp_path / "o"
        assert run(tmp_path, "--out", str(out), "moments", config=config) == 0
        rows = read_csv(out / "moments.csv")[1:]
        engines = {row[1]: row[2] for row in rows}
        assert engines["2.0"] == "exact_integer"
        assert engines["2.5"] == "exact_discrete"

    def test_unit_mean_column(self, tmp_path):
        config = {"shape": {"m": 2, "k": 3}, "q": [1.0]}
        out = tmp_path / "o"
        assert run(tmp_path, "--out", str(out), "moments", config=config) == 0
        rows = read_csv(out / "moments.csv")[1:]
        assert all(float(row[3]) == 1.0 for row in rows)


class TestCriterion:
    def test_profile_and_fit(self, tmp_path):
        out = tmp_path / "o"
        assert run(tmp_path, "--out", str(out), "--k", "6", "criterion") == 0
        fit = read_csv(out / "criterion_fit.csv")
        assert fit[0] == ["q", "delta", "verdict", "c", "lambda"]
        assert all(row[2] == "satisfied" for row in fit[1:])
        prof = read_csv(out / "criterion.csv")[1:]
        q2 = [row for row in prof if row[0] == "2.0"]
        assert all(float(row[3]) == pytest.approx(0.625) for row in q2)

    def test_constant_model_half(self, tmp_path):
        config = {
            "model": {"assignment": "homogeneous", "laws": [{"type": "constant"}]},
            "q": [2.0],
        }
        out = tmp_path / "o"
        assert run(tmp_path, "--out", str(out), "--k", "5", "criterion", config=config) == 0
        prof = read_csv(out / "criterion.csv")[1:]
        assert all(float(row[3]) == pytest.approx(0.5) for row in prof)


class TestVerify:
    def test_default_suite_passes(self, tmp_path):
        out = tmp_path / "o"
        assert run(tmp_path, "--out", str(out), "--trials", "64", "verify") == 0
        rows = read_csv(out / "verify.csv")
        assert rows[0] == ["check", "instance", "lhs", "rhs", "margin", "mode", "pass"]
        assert all(row[6] == "true" for row in rows[1:])

    def test_perturbed_rhs_fails(self, tmp_path):
        out = tmp_path / "o"
        code = run(
            tmp_path, "--out", str(out), "--trials", "64", "verify", "--perturb-rhs", "-0.01"
        )
        assert code == 1

    def test_constant_model_trivially_passes(self, tmp_path):
        config = {
            "model": {"assignment": "homogeneous", "laws": [{"type": "constant"}]},
            "q": [2.0],
            "verify": {"checks": ["mass-identity", "power-bound", "orbit-bound", "moment-cap"]},
        }
        out = tmp_path / "o"
        assert run(tmp_path, "--out", str(out), "verify", config=config) == 0

    def test_byte_identical_runs_and_threads(self, tmp_path):
        outs = []
        for name, threads in [("a", "1"), ("b", "4")]:
            out = tmp_path / name
            assert (
                run(
                    tmp_path,
                    "--out",
                    str(out),
                    "--trials",
                    "64",
                    "--threads",
                    threads,
                    "verify",
                )
                == 0
            )
            outs.append((out / "verify.csv").read_bytes())
        assert outs[0] == outs[1]


class TestOrbits:
    def test_small_census(self, tmp_path):
        config = {"shape": {"m": 2, "k": 1}, "orbits": {"n": [2], "lambdas": [0.5], "epsilons": [0.5]}}
        out = tmp_path / "o"
        assert run(tmp_path, "--out", str(out), "orbits", config=config) == 0
        rows = read_csv(out / "orbits.csv")[1:]
        assert len(rows) == 2  # join at the root or an equal pair
        assert all(int(row[2]) <= 1 for row in rows)  # N <= (n-1)! at n=2
        sums = read_csv(out / "orbits_sums.csv")[1:]
        assert all(row[5] == "true" for row in sums)

    def test_marked_census_columns(self, tmp_path):
        out = tmp_path / "o"
        assert run(tmp_path, "--out", str(out), "orbits", "--n", "2") == 0
        rows = read_csv(out / "orbits_marked.csv")
        assert rows[0] == ["n", "levels", "mark_level", "N_plus"]


class TestExitCodes:
    def test_bad_config_is_2(self, tmp_path):
        assert run(tmp_path, "verify", config={"zzz": 1}) == 2

    def test_cap_is_3(self, tmp_path):
        out = tmp_path / "o"
        code = run(
            tmp_path, "--out", str(out), "--cap", "4", "--engine", "exact_discrete", "moments"
        )
        assert code == 3

    def test_bad_q_list_is_2(self, tmp_path):
        assert run(tmp_path, "--q", "2,banana", "moments") == 2


class TestJsonFormat:
    def test_json_output(self, tmp_path):
        out = tmp_path / "o"
        assert run(tmp_path, "--out", str(out), "--format", "json", "--trials", "3", "simulate") == 0
        payload = json.loads((out / "simulate.json").read_text())
        assert isinstance(payload, list) and payload[0].keys() == {"trial", "level", "Z"}
