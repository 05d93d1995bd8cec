"""Unit tests for main controller and CLI."""

import csv
import json
import pytest
from pathlib import Path
from unittest.mock import patch

from config import RunConfig
from errors import ConfigError, UsageError
from main import KprToolkit, load_config, main, parse_arguments
from verifier import AcceptanceSuite


def run_cli(*arguments):
    """Run main() with the given arguments and return the exit status."""
    with patch('sys.argv', ['main.py', *arguments]):
        with pytest.raises(SystemExit) as exc_info:
            main()
    return exc_info.value.code


def read_key_values(path: Path) -> dict:
    return dict(line.rsplit('=', 1) for line in path.read_text(encoding='utf-8').splitlines())


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    """Run every CLI test from an empty folder (no config.json present)."""
    monkeypatch.chdir(tmp_path)
    return tmp_path


class TestKprToolkit:
    """Tests for the KprToolkit controller."""

    def make_config(self, tmp_path) -> RunConfig:
        config = RunConfig.get_default_config()
        config.output.output_folder = str(tmp_path / "results")
        config.output.logs_folder = str(tmp_path / "logs")
        config.output.plot = False
        return config

    def test_report_writes_key_values(self, tmp_path):
        toolkit = KprToolkit(self.make_config(tmp_path))
        assert toolkit.run('report') == 0

        values = read_key_values(tmp_path / "results" / "report.txt")
        assert values['regime'] == 'supercritical'
        assert float(values['sigma_c']) == pytest.approx(1.77293, abs=1e-4)

    def test_pres_writes_exact_probability(self, tmp_path):
        toolkit = KprToolkit(self.make_config(tmp_path))
        assert toolkit.run('pres') == 0

        values = read_key_values(tmp_path / "results" / "pres.txt")
        assert 0.0 < float(values['pres']) < 1.0
        assert float(values['total_probability_defect']) <= 1e-10
        assert tmp_path / "results" / "pres.txt" in toolkit.artifacts

    def test_run_logs_completion(self, tmp_path):
        toolkit = KprToolkit(self.make_config(tmp_path))
        toolkit.run('phase')

        content = toolkit.logger.get_log_file_path().read_text(encoding='utf-8')
        assert "Starting 'phase'" in content
        assert "Run complete: status 0" in content

    def test_numerical_error_gives_record(self, tmp_path):
        config = self.make_config(tmp_path)
        config.pde.Delta = 0.2
        toolkit = KprToolkit(config)

        status = toolkit.run('pde1')

        assert status == 3
        record = json.loads((tmp_path / "results" / "error.json").read_text(encoding='utf-8'))
        assert record['error_type'] == 'TransportSignError'
        assert record['exit_code'] == 3
        assert record['status'] == 'error'

    def test_failed_verification_exits_4(self, tmp_path):
        toolkit = KprToolkit(self.make_config(tmp_path))
        with patch.object(AcceptanceSuite, 'check_phase_curve', return_value=(False, 'flat', 'increasing')):
            status = toolkit.run('verify', checks=['phase_curve'])

        assert status == 4
        summary = (tmp_path / "results" / "summary.md").read_text(encoding='utf-8')
        assert "| phase_curve | FAIL | flat | increasing |" in summary


class TestArguments:
    """Tests for argument parsing and configuration loading."""

    def test_parse_arguments_defaults(self):
        args = parse_arguments(['sweep'])
        assert args.subcommand == 'sweep'
        assert args.config == 'config.json'
        assert args.overrides == []
        assert args.workers is None
        assert not args.no_plot

    def test_parse_arguments_repeated_overrides(self):
        args = parse_arguments(['mc', '--set', 'mc.trials=10', '--set', 'model.N=4', '--workers', '2'])
        assert args.overrides == ['mc.trials=10', 'model.N=4']
        assert args.workers == 2

    def test_unknown_subcommand_rejected(self, capsys):
        with pytest.raises(SystemExit) as exc_info:
            parse_arguments(['simulate'])

        assert exc_info.value.code == UsageError.exit_code == 64
        err = capsys.readouterr().err
        assert "invalid choice" in err and "simulate" in err

    def test_unknown_option_rejected(self):
        with pytest.raises(SystemExit) as exc_info:
            parse_arguments(['pres', '--trials', '10'])
        assert exc_info.value.code == 64

    def test_load_config_applies_options(self, workspace):
        args = parse_arguments(['pres', '--set', 'model.N=7', '--output', 'out', '--no-plot'])
        config = load_config(args)

        assert config.model.N == 7
        assert config.output.output_folder == 'out'
        assert config.output.plot is False

    def test_explicit_missing_config_is_an_error(self, workspace):
        with pytest.raises(ConfigError):
            load_config(parse_arguments(['pres', '--config', 'missing.json']))


class TestMain:
    """Tests for the command-line entry point."""

    def test_missing_default_config_uses_defaults(self, workspace, capsys):
        status = run_cli('pres', '--output', 'out')

        assert status == 0
        output = capsys.readouterr().out
        assert "Using default configuration..." in output
        assert "✓ pres complete!" in output
        assert (workspace / "out" / "pres.txt").exists()

    def test_sweep_writes_csv_and_plot(self, workspace):
        status = run_cli('sweep', '--output', 'out', '--set', 'grids.sigma_min=0',
                         '--set', 'grids.sigma_max=1', '--set', 'grids.sigma_step=0.5')

        assert status == 0
        with open(workspace / "out" / "sweep.csv", newline='', encoding='utf-8') as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 6
        assert {row['delta'] for row in rows} == {'0.10000000000000001', '2'}
        assert (workspace / "out" / "sweep.svg").exists()

    def test_no_plot_skips_svg(self, workspace):
        assert run_cli('phase', '--output', 'out', '--no-plot') == 0
        assert (workspace / "out" / "phase.csv").exists()
        assert not (workspace / "out" / "phase.svg").exists()

    def test_variant_subcommand(self, workspace):
        status = run_cli('variant', '--output', 'out', '--set', 'variant.K=100',
                         '--set', 'model.energy_E=0.5', '--no-plot')

        assert status == 0
        with open(workspace / "out" / "variant.csv", newline='', encoding='utf-8') as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 2

    def test_mc_subcommand(self, workspace):
        status = run_cli('mc', '--output', 'out', '--no-plot', '--set', 'model.N=3',
                         '--set', 'mc.trials=500', '--set', 'grids.sigma_min=0',
                         '--set', 'grids.sigma_max=0', '--set', 'grids.sigma_step=1')

        assert status == 0
        with open(workspace / "out" / "mc.csv", newline='', encoding='utf-8') as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 1
        assert 0.0 <= float(rows[0]['p_hat']) <= 1.0

    def test_invalid_override_exits_2(self, workspace, capsys):
        status = run_cli('pres', '--output', 'out', '--set', 'model.N=0')

        assert status == 2
        assert "Configuration validation failed" in capsys.readouterr().out
        record = json.loads((workspace / "out" / "error.json").read_text(encoding='utf-8'))
        assert record['error_type'] == 'ConfigError'
        assert record['exit_code'] == 2

    def test_usage_errors_exit_64(self, workspace):
        assert run_cli('simulate') == 64
        assert run_cli('phase', '--workers', '0') == 64
        assert not (workspace / "results").exists()

    def test_numerical_failure_exits_3(self, workspace):
        status = run_cli('pde2', '--output', 'out', '--set', 'pde.Delta=-0.5')
        assert status == 3
        assert (workspace / "out" / "error.json").exists()

    def test_handles_keyboard_interrupt(self, workspace, capsys):
        with patch.object(KprToolkit, 'run', side_effect=KeyboardInterrupt):
            status = run_cli('report', '--output', 'out')

        assert status == 1
        assert "Operation cancelled by user." in capsys.readouterr().out
