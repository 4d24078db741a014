import io
from unittest.mock import patch

import pandas as pd
import pytest

from src.cli import _overrides, build_parser, main
from src.consts import EXIT_CONFIG, EXIT_FAILURE, EXIT_OK


class TestParser:
    """Argument parsing and overrides."""

    def test_global_flags_after_subcommand(self):
        args = build_parser().parse_args(
            ["table1", "--dist", "exp(mean=10)", "--seed", "3", "--out", "md", "--parallel"]
        )
        overrides = _overrides(args)
        assert overrides["experiment"] == {
            "seed": 3,
            "format": "md",
            "parallel": True,
            "distributions": ["exp(mean=10)"],
        }

    def test_global_flags_before_subcommand(self):
        args = build_parser().parse_args(["--seed", "5", "--log-level", "debug", "table3", "--reps", "2"])
        overrides = _overrides(args)
        assert overrides["experiment"] == {"seed": 5}
        assert overrides["bayes"] == {"reps": 2}
        assert overrides["logger"] == {"level": "DEBUG"}

    def test_cut_sets(self):
        args = build_parser().parse_args(
            ["verify", "--dist", "exp(mean=10)", "--base", "stoploss:20", "--cuts", "25;40", "--cuts", "30,60"]
        )
        assert args.cuts == [(25.0, 40.0), (30.0, 60.0)]

    def test_table3_flags(self):
        args = build_parser().parse_args(
            [
                "table3",
                "--claim-dist",
                "exp(mean=4)",
                "--priors",
                "d0=exp(1), d1=gamma(3, 2), d2=exp(mean=2)",
                "--n",
                "40",
                "--init",
                "0.20,0.15,0.02",
            ]
        )
        assert args.claim_dist == "exp(mean=4)"
        assert args.priors == ("exp(1)", "gamma(3, 2)", "exp(mean=2)")
        assert _overrides(args)["bayes"] == {"sample_size": 40, "init": [0.20, 0.15, 0.02]}

    @pytest.mark.parametrize(
        "flag, value",
        [
            ("--priors", "d0=exp(1),d1=exp(1)"),
            ("--priors", "d0=exp(1),d1=lognormal(1, 2),d2=exp(1)"),
            ("--priors", "exp(1),exp(1),exp(1)"),
            ("--init", "0.2,0.15"),
            ("--init", "0.2,-0.15,0.02"),
        ],
    )
    def test_table3_bad_flags(self, flag, value):
        with pytest.raises(SystemExit) as e:
            build_parser().parse_args(["table3", flag, value])
        assert e.value.code == EXIT_CONFIG

    def test_subcommand_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestMain:
    """Exit codes and emitted tables."""

    def test_report_csv(self, capsys):
        code = main(["report", "--dist", "exp(mean=10)", "--contract", "stoploss:23.0259"])
        assert code == EXIT_OK
        frame = pd.read_csv(io.StringIO(capsys.readouterr().out))
        assert frame.loc[0, "e_ceded"] == pytest.approx(1.0, abs=1e-4)
        assert frame.loc[0, "q"] == pytest.approx(46.1586, abs=1e-3)

    def test_report_markdown_to_file(self, tmp_path):
        code = main(
            [
                "report",
                "--dist",
                "exp(mean=10)",
                "--contract",
                "prop:0.8",
                "--format",
                "md",
                "--output",
                str(tmp_path / "report.md"),
            ]
        )
        assert code == EXIT_OK
        text = (tmp_path / "report.md").read_text()
        assert text.startswith("| dist")

    def test_bad_distribution(self):
        assert main(["report", "--dist", "pareto(a=1)", "--contract", "prop:0.5"]) == EXIT_CONFIG

    def test_bad_config_file(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[experiment]\nunknown = 1\n")
        assert main(["--config", str(path), "report", "--dist", "exp(mean=1)", "--contract", "prop:0.5"]) == EXIT_CONFIG

    def test_verify_without_seed_fails(self, capsys):
        code = main(
            ["verify", "--dist", "exp(mean=10)", "--base", "stoploss:20", "--cuts", "25;40", "--n", "1000"]
        )
        assert code == EXIT_FAILURE
        frame = pd.read_csv(io.StringIO(capsys.readouterr().out))
        assert frame.loc[0, "status"] == "failure"

    def test_verify(self, capsys):
        code = main(
            [
                "verify",
                "--dist",
                "exp(mean=10)",
                "--base",
                "stoploss:20",
                "--cuts",
                "25;40",
                "--adversarial",
                "--n",
                "20000",
                "--seed",
                "1",
            ]
        )
        assert code == EXIT_OK
        frame = pd.read_csv(io.StringIO(capsys.readouterr().out))
        assert list(frame["status"]) == ["success", "success"]

    @patch("src.cli.serve")
    def test_serve(self, mock_serve):
        assert main(["serve"]) == EXIT_OK
        mock_serve.assert_called_once()

    @pytest.mark.parametrize(
        "argv",
        [
            ["table1", "--dist", "pareto(a=1)"],
            ["table2", "--dist", "exp(mean=10)", "--dist", "weibull(scale=1)"],
            ["table3", "--claim-dist", "exp(rate=1)", "--seed", "1"],
            ["calibrate", "--dist", "pareto(a=1)"],
        ],
    )
    def test_bad_severity_in_table_rows(self, argv):
        assert main(argv) == EXIT_CONFIG

    def test_table3_rerun_is_byte_identical(self, tmp_path):
        argv = [
            "table3",
            "--claim-dist",
            "exp(mean=1)",
            "--priors",
            "d0=exp(1),d1=exp(1),d2=exp(1)",
            "--n",
            "30",
            "--reps",
            "2",
            "--rounds",
            "1",
            "--grid-points",
            "12",
            "--init",
            "0.20,0.15,0.02",
            "--seed",
            "3",
        ]
        first, second = tmp_path / "first.csv", tmp_path / "second.csv"
        assert main(argv + ["--output", str(first)]) == EXIT_OK
        assert main(argv + ["--output", str(second)]) == EXIT_OK
        assert first.read_bytes() == second.read_bytes()
        frame = pd.read_csv(first)
        assert len(frame) == 1
        assert frame.loc[0, "status"] == "success"
        assert frame.loc[0, "prior_d1"] == "exp(1)"
        assert frame.loc[0, "reps"] == 2
