import json

import numpy as np
import pytest

from doiedwards import cli, modal
from doiedwards.sphere import build_grid

SMALL = ["--n-modes", "8", "--sphere-degree", "6"]
SHEAR = ["--kappa", "0 1 0 0 0 0 0 0 0"]


def write_config(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return str(path)


class TestConfigParsing:
    def test_comments_and_blank_lines(self, tmp_path):
        path = write_config(
            tmp_path,
            "# a comment\n\nepsilon = 0.05  # trailing\nn_modes=12\n",
        )
        values = cli.parse_config_file(path)
        assert values == {"epsilon": "0.05", "n_modes": "12"}

    def test_unknown_key_names_file_and_line(self, tmp_path):
        path = write_config(tmp_path, "epsilon=0.1\nbogus=3\n")
        with pytest.raises(cli.ConfigError, match="line 2.*bogus"):
            cli.parse_config_file(path)

    def test_missing_equals_sign(self, tmp_path):
        path = write_config(tmp_path, "just words\n")
        with pytest.raises(cli.ConfigError, match="key=value"):
            cli.parse_config_file(path)

    def test_missing_file(self):
        with pytest.raises(cli.ConfigError, match="no_such_file"):
            cli.parse_config_file("no_such_file.cfg")

    def test_kappa_needs_nine_entries(self):
        values = dict(cli.CONFIG_DEFAULTS, kappa="1 2 3")
        with pytest.raises(cli.ConfigError, match="'kappa'"):
            cli.build_run_config(values)

    def test_bad_float_names_key(self):
        values = dict(cli.CONFIG_DEFAULTS, dt="abc")
        with pytest.raises(cli.ConfigError, match="'dt'"):
            cli.build_run_config(values)

    def test_invalid_value_fails_validation(self):
        values = dict(cli.CONFIG_DEFAULTS, dt="-0.5")
        with pytest.raises(cli.ConfigError, match="dt"):
            cli.build_run_config(values)

    def test_bool_casting(self):
        assert cli._cast_bool("TRUE") is True
        assert cli._cast_bool("no") is False
        with pytest.raises(ValueError):
            cli._cast_bool("maybe")

    def test_defaults_build(self):
        config = cli.build_run_config(dict(cli.CONFIG_DEFAULTS))
        assert config.n_modes == 32
        assert config.solver.epsilon_target == 0.0
        assert config.evolution.scheme == "imex-cn"


class TestPrecedence:
    def test_file_overrides_defaults(self, tmp_path):
        cfg = write_config(tmp_path, "output_dir=from_file\n")
        args = cli.build_parser().parse_args(["solve", "--config", cfg])
        assert cli.load_run_config(args).output_dir == "from_file"

    def test_env_overrides_file(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path, "output_dir=from_file\n")
        monkeypatch.setenv(cli.OUTPUT_DIR_ENV, "from_env")
        args = cli.build_parser().parse_args(["solve", "--config", cfg])
        assert cli.load_run_config(args).output_dir == "from_env"

    def test_flag_overrides_env(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path, "output_dir=from_file\n")
        monkeypatch.setenv(cli.OUTPUT_DIR_ENV, "from_env")
        args = cli.build_parser().parse_args(
            ["solve", "--config", cfg, "--output-dir", "from_flag"]
        )
        assert cli.load_run_config(args).output_dir == "from_flag"

    def test_flag_overrides_file_for_numbers(self, tmp_path):
        cfg = write_config(tmp_path, "epsilon=0.3\n")
        args = cli.build_parser().parse_args(
            ["solve", "--config", cfg, "--epsilon", "0.05"]
        )
        assert cli.load_run_config(args).epsilon == 0.05


def test_usage_error_exits_one():
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["no-such-command"])
    assert excinfo.value.code == 1


def test_config_error_exits_one(tmp_path, capsys):
    path = write_config(tmp_path, "bogus=1\n")
    assert cli.main(["solve", "--config", path]) == 1
    assert "config error" in capsys.readouterr().err


def test_solve_writes_artifacts(tmp_path):
    out = str(tmp_path / "run")
    code = cli.main(
        ["solve", *SHEAR, *SMALL, "--epsilon", "0.0125", "--output-dir", out]
    )
    assert code == 0
    report = json.loads((tmp_path / "run" / "solve_report.json").read_text())
    assert report["converged"] is True
    assert report["epsilon_final"] == 0.0125
    lines = (tmp_path / "run" / "mode_norms.csv").read_text().splitlines()
    assert lines[0] == "n,l1_norm,n3_l1"
    assert len(lines) == 9

    # the container round-trips exactly
    grid = build_grid(6)
    f, kappa = modal.load_modal(tmp_path / "run" / "solution.npz", grid=grid)
    assert f.n_modes == 8
    assert kappa.entries[0, 1] == 1.0


def test_solve_then_evolve_with_reference(tmp_path):
    out = str(tmp_path / "run")
    assert cli.main(
        ["solve", *SHEAR, *SMALL, "--epsilon", "0.0125", "--output-dir", out]
    ) == 0
    code = cli.main(
        [
            "evolve", *SHEAR, *SMALL,
            "--epsilon", "0.0125",
            "--dt", "0.01", "--t-final", "0.5", "--snapshot-stride", "1",
            "--output-dir", out,
            "--reference", str(tmp_path / "run" / "solution.npz"),
        ]
    )
    assert code == 0
    summary = json.loads((tmp_path / "run" / "evolve_summary.json").read_text())
    assert summary["decay_rate"] is not None
    assert summary["decay_rate"] < 0
    assert summary["final"]["t"] == 0.5
    assert (tmp_path / "run" / "trajectory.csv").exists()


def test_evolve_reference_mismatch_is_config_error(tmp_path, capsys):
    out = str(tmp_path / "run")
    assert cli.main(
        ["solve", *SHEAR, *SMALL, "--epsilon", "0.0125", "--output-dir", out]
    ) == 0
    code = cli.main(
        [
            "evolve", *SHEAR, "--n-modes", "4", "--sphere-degree", "6",
            "--t-final", "0.1", "--output-dir", out,
            "--reference", str(tmp_path / "run" / "solution.npz"),
        ]
    )
    assert code == 1
    assert "reference" in capsys.readouterr().err


def test_evolve_require_ref_without_reference(tmp_path, capsys):
    code = cli.main(
        ["evolve", *SMALL, "--output-dir", str(tmp_path), "--require-ref"]
    )
    assert code == 1
    assert "require-ref" in capsys.readouterr().err


def test_evolve_is_deterministic(tmp_path):
    args = [
        "evolve", *SMALL,
        "--initial-data", "randomized-admissible", "--seed", "3",
        "--dt", "0.01", "--t-final", "0.2",
    ]
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert cli.main(args + ["--output-dir", a]) == 0
    assert cli.main(args + ["--output-dir", b]) == 0
    csv_a = (tmp_path / "a" / "trajectory.csv").read_bytes()
    csv_b = (tmp_path / "b" / "trajectory.csv").read_bytes()
    assert csv_a == csv_b


def test_solve_stall_exits_two_with_partial(tmp_path, capsys):
    out = str(tmp_path / "stall")
    code = cli.main(
        [
            "solve",
            "--kappa", "0 50 0 0 0 0 0 0 0",
            "--epsilon", "0.9",
            "--max-newton-iters", "1",
            "--output-dir", out,
        ]
    )
    assert code == 2
    report = json.loads((tmp_path / "stall" / "solve_report.json").read_text())
    assert report["converged"] is False
    assert 0.0 < report["epsilon_failed"] <= 0.9
    assert (tmp_path / "stall" / "solution.npz").exists()


def test_verify_unknown_bound(tmp_path, capsys):
    code = cli.main(
        ["verify", "nonsense", "--output-dir", str(tmp_path)]
    )
    assert code == 1
    assert "unknown bound" in capsys.readouterr().err


def test_verify_resolvent_zero_kappa(tmp_path, capsys):
    code = cli.main(
        ["verify", "resolvent", "--sphere-degree", "6",
         "--output-dir", str(tmp_path)]
    )
    assert code == 0
    report = json.loads((tmp_path / "resolvent.json").read_text())
    assert report["verdict"] is True
    assert np.allclose(report["normalized"], 1.0 / np.pi**2)
    assert (tmp_path / "resolvent.csv").exists()
    assert "verdict" in capsys.readouterr().out


def test_sweep_epsilon_grid(tmp_path):
    code = cli.main(
        [
            "sweep-epsilon", *SHEAR, *SMALL,
            "--epsilon-grid", "0, 0.025, 0.05",
            "--output-dir", str(tmp_path),
        ]
    )
    assert code == 0
    lines = (tmp_path / "epsilon_sweep.csv").read_text().splitlines()
    assert lines[0] == "epsilon,x1_norm,max_mode_l1,mass_error,min_F"
    assert len(lines) == 4
    eps_col = [float(line.split(",")[0]) for line in lines[1:]]
    assert eps_col == [0.0, 0.025, 0.05]


def test_sweep_epsilon_colon_spec(tmp_path):
    code = cli.main(
        [
            "sweep-epsilon", *SHEAR, *SMALL,
            "--epsilon-grid", "0:0.05:3",
            "--output-dir", str(tmp_path),
        ]
    )
    assert code == 0
    lines = (tmp_path / "epsilon_sweep.csv").read_text().splitlines()
    assert len(lines) == 4


def test_sweep_needs_grid_or_epsilon(tmp_path, capsys):
    code = cli.main(["sweep-epsilon", *SMALL, "--output-dir", str(tmp_path)])
    assert code == 1
    assert "epsilon_grid" in capsys.readouterr().err


def test_sweep_bad_grid_spec(tmp_path, capsys):
    code = cli.main(
        ["sweep-epsilon", *SMALL, "--epsilon-grid", "0:0.05",
         "--output-dir", str(tmp_path)]
    )
    assert code == 1
    assert "start:stop:count" in capsys.readouterr().err
