"""Integration tests for KPR Toolkit.

These tests run whole subcommands end to end through the controller.
"""

import csv
import math
import pytest
from pathlib import Path

import analytic
from analytic import ThetaCase
from config import RunConfig
from main import KprToolkit
from reporter import ReportGenerator
from verifier import AcceptanceSuite, ray_checks

QUICK_CHECKS = ['sweep_low_delta', 'sweep_crossing', 'phase_curve',
                'rational_oracle', 'total_probability', 'enlarged_equilibrium', 'enlarged_fluxes',
                'delta_infty_limit', 'wegscheider', 'theta_kernel', 'phi_product']


def read_rows(path: Path):
    with open(path, newline='', encoding='utf-8') as f:
        return list(csv.DictReader(f))


def read_key_values(path: Path) -> dict:
    return dict(line.rsplit('=', 1) for line in path.read_text(encoding='utf-8').splitlines())


class TestIntegration:
    """Integration tests for the complete workflow."""

    @pytest.fixture
    def test_config(self, tmp_path):
        """Create a test configuration writing into tmp_path."""
        config = RunConfig.get_default_config()
        config.output.output_folder = str(tmp_path / "results")
        config.output.logs_folder = str(tmp_path / "logs")
        return config

    def test_sweep_has_switch_shape(self, test_config, tmp_path):
        status = KprToolkit(test_config).run('sweep')
        assert status == 0

        rows = read_rows(tmp_path / "results" / "sweep.csv")
        low = [float(r['pres']) for r in rows if float(r['delta']) == 0.1]
        high = [float(r['pres']) for r in rows if float(r['delta']) == 2.0]
        assert len(low) == len(high) == 121
        assert max(low) < 0.05
        assert high[0] > 0.9 and high[-1] < 0.1

        summary = read_key_values(tmp_path / "results" / "sweep.txt")
        assert float(summary['sigma_half[delta=2]']) == pytest.approx(1.773, abs=0.15)

    def test_quick_acceptance_checks_pass(self, test_config, tmp_path):
        reporter = ReportGenerator(test_config)
        results = AcceptanceSuite(test_config, reporter).run(QUICK_CHECKS)

        assert [r.name for r in results] == QUICK_CHECKS
        failures = [(r.name, r.measured, r.error) for r in results if not r.passed]
        assert failures == []
        assert reporter.all_passed()

    def test_ray_limit_check_covers_every_regime(self, test_config):
        checks = ray_checks(test_config.grids.taus)
        labels = [check[0] for check in checks]
        assert labels == ['subcritical', 'critical', 'supercritical case 1', 'supercritical case 3']
        assert analytic.classify_theta_regime(checks[2][2], checks[2][1]) is ThetaCase.CASE1
        assert analytic.classify_theta_regime(checks[3][2], checks[3][1]) is ThetaCase.CASE3

        reporter = ReportGenerator(test_config)
        result = AcceptanceSuite(test_config, reporter).run(['ray_limits'])[0]
        assert result.passed, result.measured
        assert all(f"{label} theta=" in result.measured for label in labels)

    def test_verify_writes_summary_and_table(self, test_config, tmp_path):
        status = KprToolkit(test_config).run('verify', checks=['phase_curve', 'wegscheider'])
        assert status == 0

        summary = (tmp_path / "results" / "summary.md").read_text(encoding='utf-8')
        assert "**Checks Run:** 2" in summary
        assert "**Failed:** 0" in summary
        rows = read_rows(tmp_path / "results" / "verification.csv")
        assert [r['check'] for r in rows] == ['phase_curve', 'wegscheider']
        assert all(r['passed'] == 'True' for r in rows)

    def test_enlarged_run_conserves(self, test_config, tmp_path):
        test_config.model.N = 3
        test_config.enlarged.t_final = 20.0
        status = KprToolkit(test_config).run('enlarged')
        assert status == 0

        rows = read_rows(tmp_path / "results" / "enlarged.csv")
        assert len(rows) == 101
        for name in ('m1', 'm2', 'm3'):
            first = float(rows[0][name])
            assert all(abs(float(r[name]) - first) <= 1e-8 * abs(first) for r in rows)

        values = read_key_values(tmp_path / "results" / "enlarged.txt")
        assert float(values['J_T']) > 0
        assert float(values['J_P']) == pytest.approx(-math.expm1(2.0), rel=1e-12)
        assert float(values['frozen_delta']) == pytest.approx(math.log(2.0), rel=1e-12)

    def test_halfline_subcritical_run(self, test_config, tmp_path):
        test_config.model.delta = 0.1
        test_config.grids.taus = [10.0, 20.0]
        status = KprToolkit(test_config).run('halfline')
        assert status == 0

        values = read_key_values(tmp_path / "results" / "halfline.txt")
        assert values['regime'] == 'subcritical'
        assert len(read_rows(tmp_path / "results" / "halfline.csv")) == 4
        assert {'limit[theta=0.3]', 'limit[theta=1]'} <= values.keys()
        assert (tmp_path / "results" / "halfline_profile.svg").exists()

    def test_pde2_run_reports_lambda(self, test_config, tmp_path):
        test_config.pde.Delta = math.log(4.0)
        test_config.pde.L = 30.0
        test_config.pde.cells = 600
        status = KprToolkit(test_config).run('pde2')
        assert status == 0

        values = read_key_values(tmp_path / "results" / "pde2.txt")
        assert float(values['predicted_lam']) == pytest.approx(1.0 / 3.0)
        assert float(values['lam']) == pytest.approx(1.0 / 3.0, rel=0.03)
        assert values['discriminates'] == 'True'

    def test_log_records_every_artifact(self, test_config, tmp_path):
        toolkit = KprToolkit(test_config)
        toolkit.run('phase')

        content = toolkit.logger.get_log_file_path().read_text(encoding='utf-8')
        for artifact in toolkit.artifacts:
            assert f"Artifact: {artifact}" in content
