# Copyright (C) 2024 Leiden University Medical Center
# This file is part of heavycoin
#
# heavycoin is free software: you can redistribute it and/or modify
# it under the terms of the GNU Affero General Public License as
# published by the Free Software Foundation, either version 3 of the
# License, or (at your option) any later version.
#
# heavycoin is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU Affero General Public License for more details.
#
# You should have received a copy of the GNU Affero General Public License
# along with heavycoin.  If not, see <https://www.gnu.org/licenses/

import csv
import gzip
import json

import pytest

from heavycoin.__main__ import main, parse_args

MODEL = ["--p", "0.5", "--epsilon", "0.1", "--alpha", "0.5", "--delta", "0.1"]


def run(tmp_path, name, *args):
    output = tmp_path / name
    main([*args, *MODEL, "--deterministic", "-o", str(output)])
    return output


def test_bounds(tmp_path):
    output = run(tmp_path, "bounds.json", "bounds")
    result = json.loads(output.read_text())
    assert result["meta"]["command"] == "bounds"
    assert result["meta"]["report_generated"] is None
    assert result["config"]["p"] == 0.5
    bounds = result["bounds"]
    assert bounds["theorem2_bound"] == pytest.approx(5115.6, abs=0.05)
    assert bounds["naive_bound"] == pytest.approx(1842.07, abs=0.01)
    assert bounds["lemma5"]["pi_lower"] == pytest.approx(0.05)
    assert bounds["lemma5"]["c_upper"] == pytest.approx(20)
    assert bounds["lemma5"]["d_over_pi_upper"] == pytest.approx(722.6,
                                                                abs=0.1)


def test_bounds_stdout(capsys):
    main(["bounds", *MODEL])
    result = json.loads(capsys.readouterr().out)
    assert result["bounds"]["naive_budget"] == 922


def test_bounds_zero_boundary(capsys):
    main(["bounds", "--p", "0.5", "--epsilon", "0.1", "--alpha", "0.5",
          "--delta", "0.5"])
    result = json.loads(capsys.readouterr().out)
    assert result["bounds"]["boundary_b"] == 0.0
    assert result["bounds"]["lemma5"] is None
    assert result["bounds"]["heavy_walk_rho0"] is None


@pytest.mark.parametrize(["args", "flag"], [
    (["--p", "0.5", "--epsilon", "0.6", "--alpha", "0.5", "--delta", "0.1"],
     "--epsilon"),
    (["--p", "0.05", "--epsilon", "0.1", "--alpha", "0.5", "--delta", "0.1"],
     "--p"),
    (["--p", "0.5", "--epsilon", "0.1", "--alpha", "0.95", "--delta", "0.1"],
     "--alpha"),
    (["--p", "0.5", "--epsilon", "0.1", "--alpha", "0.5", "--delta", "1.5"],
     "--delta"),
    ([*MODEL, "--trials", "0"], "--trials"),
    ([*MODEL, "--parallelism", "0"], "--parallelism"),
    ([*MODEL, "--seed", "-1"], "--seed"),
    ([*MODEL, "--strategy", "best"], "--strategy"),
])
def test_invalid_arguments(capsys, args, flag):
    with pytest.raises(SystemExit) as error:
        main(["simulate", *args])
    assert error.value.code == 2
    assert f"{flag}:" in capsys.readouterr().err


def test_missing_argument(capsys):
    with pytest.raises(SystemExit) as error:
        main(["bounds", "--p", "0.5"])
    assert error.value.code == 2
    assert "--epsilon" in capsys.readouterr().err


def test_parse_args_defaults():
    config = parse_args(["simulate", *MODEL])
    assert config.strategy == "likelihood-toss"
    assert config.trials == 10_000
    assert config.seed == 42
    assert config.parallelism == 1
    assert config.cap == 10_000_000
    assert config.output_format == "json"
    assert config.progress


def test_simulate(tmp_path):
    output = run(tmp_path, "simulate.json", "simulate", "--trials", "200",
                 "--no-progress")
    result = json.loads(output.read_text())
    simulation = result["simulation"]
    assert simulation["policy"] == "likelihood-toss"
    assert simulation["trials"] == 200
    assert simulation["capped"] == 0
    assert simulation["mean_tosses"] < 5115.6
    assert set(simulation["toss_quantiles"]) == {"q1", "q5", "q25", "q50",
                                                 "q75", "q95", "q99"}


def test_simulate_deterministic(tmp_path):
    args = ("simulate", "--trials", "100", "--seed", "7", "--no-progress")
    first = run(tmp_path, "first.json", *args)
    second = run(tmp_path, "second.json", *args)
    assert first.read_bytes() == second.read_bytes()


def test_simulate_parallelism_independent(tmp_path):
    args = ("simulate", "--trials", "100", "--seed", "7", "--no-progress")
    serial = run(tmp_path, "serial.json", *args, "-t", "1")
    parallel = run(tmp_path, "parallel.json", *args, "-t", "2")
    assert json.loads(serial.read_text())["simulation"] == \
        json.loads(parallel.read_text())["simulation"]


def test_simulate_csv(tmp_path):
    output = run(tmp_path, "simulate.csv", "simulate", "--trials", "50",
                 "--no-progress", "--format", "csv", "--strategy",
                 "round-robin")
    with open(output) as csv_file:
        rows = list(csv.reader(csv_file))
    assert len(rows) == 2
    row = dict(zip(*rows))
    assert row["config.strategy"] == "round-robin"
    assert row["simulation.policy"] == "round-robin"
    assert row["simulation.trials"] == "50"
    assert float(row["simulation.mean_tosses"]) > 0


def test_simulate_compressed(tmp_path):
    output = run(tmp_path, "simulate.json.gz", "simulate", "--trials", "20",
                 "--no-progress")
    with gzip.open(output, "rt") as compressed:
        assert json.load(compressed)["simulation"]["trials"] == 20


def test_simulate_capped(tmp_path, capsys):
    output = tmp_path / "capped.json"
    with pytest.raises(SystemExit) as error:
        main(["simulate", *MODEL, "--trials", "20", "--cap", "5",
              "--no-progress", "-o", str(output)])
    assert error.value.code == 1
    assert "hit the toss cap" in capsys.readouterr().err
    result = json.loads(output.read_text())
    assert result["simulation"]["capped"] == 20
    assert result["simulation"]["capped_fraction"] == 1.0


def test_grade_check(tmp_path):
    output = run(tmp_path, "grades.json", "grade-check", "--depth", "10")
    result = json.loads(output.read_text())
    assert result["monotonicity"]["ok"]
    assert result["monotonicity"]["violation"] is None
    assert result["cutoff_stability"]["stable"]
    assert result["joint_oracle"]["optimal"]
    assert result["joint_oracle"]["violations"] == []
    grades = result["grade_table"]["grades"]
    assert len(grades) == len(result["grade_table"]["states"]) == 31
    assert result["grade_table"]["states"][-1]["target"]


def test_grade_check_without_oracle(tmp_path):
    output = run(tmp_path, "grades.json", "grade-check", "--depth", "10",
                 "--no-oracle")
    result = json.loads(output.read_text())
    assert "joint_oracle" not in result
    assert result["config"]["oracle"] is False


def test_grade_check_oracle_too_large(tmp_path, capsys):
    output = tmp_path / "grades.json"
    with pytest.raises(SystemExit) as error:
        main(["grade-check", *MODEL, "--depth", "10", "--oracle-depth",
              "200", "-o", str(output)])
    assert error.value.code == 1
    assert "--oracle-depth" in capsys.readouterr().err
    result = json.loads(output.read_text())
    assert "joint_oracle" not in result
    assert len(result["grade_table"]["grades"]) == 31
    assert result["monotonicity"]["ok"]


def test_compare(tmp_path):
    output = run(tmp_path, "compare.json", "compare", "--trials", "100",
                 "--no-progress")
    result = json.loads(output.read_text())
    for name in ("likelihood_toss", "naive", "round_robin"):
        assert result[name]["trials"] == 100
        assert result[name]["capped"] == 0
    comparison = result["comparison"]
    assert set(comparison) == {"naive_over_likelihood_toss",
                               "naive_disjoint_3sigma",
                               "round_robin_over_likelihood_toss",
                               "round_robin_disjoint_3sigma"}
    assert comparison["naive_over_likelihood_toss"] > 1
