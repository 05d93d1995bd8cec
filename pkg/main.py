"""Main controller and CLI for KPR Toolkit."""

import sys
import json
import argparse
import traceback
from dataclasses import replace
from pathlib import Path
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

import analytic
import enlarged
import finite_model
import half_line
import mc
import pde_limits
import variants
from config import RunConfig
from crn_core import ModelParams
from errors import ConfigError, ToolkitError, UsageError, VerificationError
from logger import RunLogger
from reporter import ReportGenerator, plot_lines, write_csv, write_key_values
from verifier import AcceptanceSuite, summarize

SUBCOMMANDS = ('report', 'pres', 'sweep', 'phase', 'halfline', 'enlarged',
               'pde1', 'pde2', 'variant', 'mc', 'verify')
DEFAULT_CONFIG = 'config.json'


def write_error_record(output_folder: Path, error: BaseException, exit_code: int) -> Path:
    """Write the machine-readable failure record ``error.json``."""
    output_folder.mkdir(parents=True, exist_ok=True)
    path = output_folder / "error.json"
    record = {
        'status': 'error',
        'error_type': type(error).__name__,
        'message': str(error),
        'exit_code': exit_code,
    }
    path.write_text(json.dumps(record, indent=2) + "\n", encoding='utf-8')
    return path


class KprToolkit:
    """Main controller that runs one subcommand and writes its artifacts."""

    def __init__(self, config: RunConfig, workers: int = 1):
        """Initialize the toolkit with configuration.

        Args:
            config: Configuration object
            workers: Worker processes for sweeps and ladders
        """
        self.config = config
        self.workers = workers
        self.output_folder = config.get_output_folder()
        self.reporter = ReportGenerator(config)
        self.logger = RunLogger(config)
        self.artifacts: List[Path] = []

    def run(self, subcommand: str, compare: bool = False, checks: Sequence[str] = ()) -> int:
        """Execute one subcommand.

        Args:
            subcommand: One of SUBCOMMANDS
            compare: For pde1/pde2, also compare against the scaled ladder
            checks: For verify, restrict the suite to these check names

        Returns:
            Process exit status (0 on success)
        """
        self.reporter.set_start_time(datetime.now())
        self.logger.log_run_start(subcommand, self.config)
        status = 0

        try:
            self.output_folder.mkdir(parents=True, exist_ok=True)
            print(f"Running {subcommand}...")
            if subcommand in ('pde1', 'pde2'):
                self.run_pde(subcommand, compare)
            elif subcommand == 'verify':
                self.run_verify(checks)
            else:
                getattr(self, f"run_{subcommand}")()

        except ToolkitError as e:
            status = e.exit_code
            self.logger.log_error(type(e).__name__, str(e), traceback.format_exc())
            self.artifacts.append(write_error_record(self.output_folder, e, status))
            print(f"Error: {e}")

        except (ArithmeticError, ValueError, RuntimeError) as e:
            status = ToolkitError.exit_code
            self.logger.log_error(type(e).__name__, str(e), traceback.format_exc())
            self.artifacts.append(write_error_record(self.output_folder, e, status))
            print(f"Error: {e}")
            traceback.print_exc()

        finally:
            self.reporter.set_end_time(datetime.now())
            self.logger.log_run_complete(status, self.artifacts)
            self.logger.close()

        return status

    def _path(self, name: str) -> Path:
        return self.output_folder / name

    def _write_csv(self, name: str, header: Sequence[str], rows) -> Path:
        path = write_csv(self._path(name), header, rows)
        self.artifacts.append(path)
        return path

    def _write_key_values(self, name: str, mapping: Dict[str, Any]) -> Path:
        path = write_key_values(self._path(name), mapping)
        self.artifacts.append(path)
        for key, value in mapping.items():
            self.logger.log_result(key, value)
        return path

    def _plot(self, name: str, series, **labels):
        if not self.config.output.plot:
            return
        self.artifacts.append(plot_lines(self._path(name), series, **labels))

    def _model(self) -> ModelParams:
        return self.config.model_params().ensure_valid()

    def _degradation_free(self) -> ModelParams:
        return self._model().with_changes(b=None, mu=None)

    # Subcommands

    def run_report(self):
        report = analytic.compute_report(self._model())
        for warning in report.warnings:
            self.logger.log_warning(warning)
        self._write_key_values("report.txt", report.as_dict())
        print(f"Regime: {report.regime.value}, Delta_c = {report.delta_c:.6g}, lambda = {report.lam:.6g}")

    def run_pres(self):
        params = self._model()
        self.logger.log_stage("Solving the arrowhead response system")
        values = {
            'pres': finite_model.pres_exact(params),
            'log_odds': finite_model.log_odds_exact(params),
            'total_probability_defect': finite_model.total_probability_defect(params),
        }
        self._write_key_values("pres.txt", values)
        print(f"p_res = {values['pres']:.17g}")

    def run_sweep(self):
        params = self._model()
        grid = self.config.sigma_grid()
        rows = []
        series = []
        summary: Dict[str, Any] = {}
        for delta in self.config.grids.deltas:
            self.logger.log_stage(f"Sweeping sigma at delta = {delta}")
            result = finite_model.sweep_sigma(params.with_changes(delta=float(delta)), grid, self.workers)
            for sigma, pres, log_odds, error in zip(result.sigma_grid, result.pres, result.log_odds,
                                                    result.errors):
                rows.append([float(delta), float(sigma), float(pres), float(log_odds), error or ''])
            series.append((f"Delta = {delta:g}", result.sigma_grid, result.pres))
            summary[f"sigma_half[delta={delta:g}]"] = finite_model.midpoint_crossing(result)
        self._write_csv("sweep.csv", ['delta', 'sigma', 'pres', 'log_odds', 'error'], rows)
        self._write_key_values("sweep.txt", summary)
        self._plot("sweep.svg", series, xlabel='sigma', ylabel='p_res', title=f"N = {params.N}")
        print(f"Swept {len(grid)} binding energies at {len(self.config.grids.deltas)} values of Delta")

    def run_phase(self):
        params = self._model()
        grid = self.config.sigma_grid()
        curve = [analytic.delta_c(float(sigma), params.alpha, params.energy_E) for sigma in grid]
        self._write_csv("phase.csv", ['sigma', 'delta_c'], zip(grid, curve))
        self._plot("phase.svg", [('Delta_c', grid, curve)], xlabel='sigma', ylabel='Delta_c')
        print(f"Delta_c ranges over [{min(curve):.6g}, {max(curve):.6g}]")

    def run_halfline(self):
        params = self._degradation_free()
        grids = self.config.grids
        rows = []
        summary: Dict[str, Any] = {'regime': analytic.regime_of(params).value}
        for theta in grids.thetas:
            self.logger.log_stage(f"Ray theta = {theta} over tau = {grids.taus}")
            table = half_line.verify_ray_limits(theta, grids.taus, params, self.workers)
            for row in table.rows:
                rows.append([row.theta, row.tau, row.k, row.ratio, table.limit, row.gap])
            summary[f"limit[theta={theta:g}]"] = table.limit
            summary[f"final_relative_gap[theta={theta:g}]"] = table.final_relative_gap()
            summary[f"gap_decreasing[theta={theta:g}]"] = table.gap_decreasing()
            if table.stated_limit is not None:
                summary[f"stated_limit[theta={theta:g}]"] = table.stated_limit

        t_final = analytic.time_from_tau(max(grids.taus), params)
        run = half_line.integrate_halfline(params, t_final, theta_targets=grids.thetas)
        summary['front_position'] = half_line.front_position(run, params)
        k = np.arange(run.K + 1)
        self._write_csv("halfline.csv", ['theta', 'tau', 'k', 'ratio', 'limit', 'gap'], rows)
        self._write_csv("halfline_profile.csv", ['k', 'n_k', 'scaled'], zip(k, run.n, run.scaled))
        self._write_key_values("halfline.txt", summary)
        self._plot("halfline_profile.svg", [('n_k', k, np.maximum(run.n, 1e-300))],
                   xlabel='k', ylabel='n_k', title=f"tau = {run.tau:g}", logy=True)
        print(f"Regime {summary['regime']}, {len(rows)} ray measurements")

    def run_enlarged(self):
        params = self.config.enlarged_params().ensure_valid()
        t_final = self.config.enlarged.t_final
        state = enlarged.equilibrium_state(params)
        state.n_T *= 2.0
        self.logger.log_stage(f"Integrating the enlarged network to t = {t_final}")
        times = np.linspace(0.0, t_final, 101)
        run = enlarged.integrate_enlarged(state, params, t_final, t_eval=times)
        conserved = [enlarged.conserved_quantities(s) for s in run.states]
        multipliers, _ = enlarged.fit_steady_state(run.states[-1], params)

        delta = self.config.model.delta
        fluxes = enlarged.external_fluxes(params, delta)
        reduced, _ = enlarged.frozen_reduction(state.n_T, state.n_D, state.n_P, params)
        self._write_csv("enlarged.csv", ['t', 'm1', 'm2', 'm3', 'n_T', 'n_D', 'n_P', 'n_S'],
                        ([t, *m, s.n_T, s.n_D, s.n_P, s.n_S]
                         for t, m, s in zip(run.times, conserved, run.states)))
        self._write_key_values("enlarged.txt", {
            'conserved_drift': run.conserved_drift,
            'mu1': multipliers[0],
            'mu2': multipliers[1],
            'mu3': multipliers[2],
            'frozen_delta': reduced.delta,
            'J_T': fluxes.J_T,
            'J_D': fluxes.J_D,
            'J_P': fluxes.J_P,
        })
        print(f"Conserved drift {run.conserved_drift:.2e}; J_T = {fluxes.J_T:.6g} at Delta = {delta}")

    def run_pde(self, kind: str, compare: bool):
        p = self.config.pde_params()
        p.ensure_valid()
        self.logger.log_stage(f"Relaxing {kind} to its steady shape")
        relaxed = pde_limits.relax_to_shape(kind, p)
        shape = relaxed.normalized()
        summary: Dict[str, Any] = {'tau': relaxed.tau, 'steps': relaxed.steps, 'log_mass': relaxed.log_mass}
        if kind == 'pde1':
            fit = pde_limits.fit_exponent(relaxed)
            summary.update(slope=fit.slope, slope_stderr=fit.stderr,
                           eigen_exponent=pde_limits.pde1_steady_exponent(p),
                           stated_exponent=pde_limits.stated_pde1_exponent(p))
        else:
            fit = pde_limits.fit_pde2_lambda(relaxed)
            summary.update(lam=fit.lam, m_bar=fit.m_bar, C=fit.C, residual=fit.residual,
                           predicted_lam=pde_limits.pde2_lambda(p),
                           discriminates=pde_limits.pde2_discriminates(p))
        self._write_csv(f"{kind}.csv", ['x', 'f'], zip(relaxed.x, shape))
        self._plot(f"{kind}.svg", [(kind, relaxed.x, np.maximum(shape, 1e-300))],
                   xlabel='x', ylabel='f (normalized)', logy=True)

        if compare:
            tau = self.config.pde.t_final
            self.logger.log_stage(f"Comparing {kind} with the scaled ladder at tau = {tau}")
            comparison = pde_limits.compare_pde_vs_discrete(kind, p, self.config.grids.N_list, tau,
                                                            workers=self.workers)
            self._write_csv(f"{kind}_comparison.csv", ['N', 'sites', 'gap'],
                            ([row.N, row.sites, row.gap] for row in comparison.rows))
            summary['gap_decreasing'] = comparison.gap_decreasing()

        self._write_key_values(f"{kind}.txt", summary)
        print(f"{kind} settled after tau = {relaxed.tau:.6g}")

    def run_variant(self):
        v = self.config.variant
        spec = variants.VariantSpec(variants.parse_kind(v.kind), self._degradation_free(), v.K, v.gamma)
        spec.ensure_valid()
        self.logger.log_stage(f"Scanning the {v.kind} variant over Delta = {self.config.grids.deltas}")
        rows = variants.delta_scan(spec, self.config.grids.deltas, self.workers)
        profile = variants.variant_steady_profile(spec)
        self._write_csv("variant.csv",
                        ['delta', 'lam', 'stderr', 'sigma_sensitive', 'lam_minus', 'lam_plus', 'predicted'],
                        ([d, r.lam, r.stderr, r.sigma_sensitive, r.lam_minus, r.lam_plus, r.predicted]
                         for d, r in zip(self.config.grids.deltas, rows)))
        self._write_csv("variant_profile.csv", ['k', 'log_n'], zip(profile.k, profile.log_n))
        self._plot("variant_profile.svg", [(v.kind, profile.k, profile.log_n)],
                   xlabel='k', ylabel='log n_k')
        print(f"{v.kind}: {sum(r.sigma_sensitive for r in rows)} of {len(rows)} values of Delta are sigma-sensitive")

    def run_mc(self):
        params = self._model()
        m = self.config.mc
        grid = self.config.sigma_grid()
        self.logger.log_stage(f"Monte Carlo: {m.trials} trials at {len(grid)} binding energies")
        sweep = mc.sweep_mc(params, grid, m.trials, m.seed, self.workers)
        exact = finite_model.sweep_sigma(params, grid, self.workers).pres
        self._write_csv("mc.csv", ['sigma', 'p_hat', 'stderr', 'exact', 'mean_events'],
                        ([r.sigma, r.p_hat, r.stderr, x, r.mean_events] for r, x in zip(sweep.rows, exact)))
        self._plot("mc.svg", [('Monte Carlo', grid, [r.p_hat for r in sweep.rows]), ('exact', grid, exact)],
                   xlabel='sigma', ylabel='p_res')
        print(f"Simulated {m.trials * len(grid)} trials (seed {m.seed})")

    def run_verify(self, checks: Sequence[str] = ()):
        suite = AcceptanceSuite(self.config, self.reporter, self.workers)
        results = suite.run(checks)
        self.reporter.set_end_time(datetime.now())
        summary_path = self._path("summary.md")
        self.reporter.write_summary(summary_path)
        self.artifacts.append(summary_path)
        self._write_csv("verification.csv", ['check', 'group', 'passed', 'measured', 'expected', 'seconds'],
                        summarize(results))

        stats = self.reporter.get_statistics()
        print(f"{stats['passed']} of {stats['total_checks']} checks passed")
        if not self.reporter.all_passed():
            failed = [r.name for r in results if not r.passed]
            raise VerificationError(f"Failed checks: {', '.join(failed)}")


class ToolkitArgumentParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with UsageError.exit_code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(UsageError.exit_code, f"{self.prog}: error: {message}\n")


def parse_arguments(argv: Optional[Sequence[str]] = None):
    """Parse command-line arguments.

    Returns:
        Parsed arguments namespace
    """
    parser = ToolkitArgumentParser(
        description='KPR Toolkit - kinetic proofreading response probabilities and their asymptotics',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s report                              # Closed-form report for config.json
  %(prog)s sweep --set model.N=40              # Binding-energy sweep at N = 40
  %(prog)s pde2 --set pde.Delta=1.5 --compare  # Continuum limit and ladder comparison
  %(prog)s verify --workers 4                  # Full acceptance suite
        """
    )

    parser.add_argument('subcommand', choices=SUBCOMMANDS, help='Computation to run')

    parser.add_argument(
        '--config',
        type=str,
        default=DEFAULT_CONFIG,
        help='Path to configuration file (default: config.json)'
    )

    parser.add_argument(
        '--set',
        dest='overrides',
        action='append',
        default=[],
        metavar='SECTION.KEY=VALUE',
        help='Override one configuration value (repeatable)'
    )

    parser.add_argument('--workers', type=int, default=None, help='Worker processes (default: mc.workers)')
    parser.add_argument('--output', type=str, default=None, help='Output folder (default: output.output_folder)')
    parser.add_argument('--no-plot', action='store_true', help='Skip SVG plots')
    parser.add_argument('--compare', action='store_true', help='pde1/pde2: compare with the scaled ladder')
    parser.add_argument('--checks', nargs='*', default=[], help='verify: run only these checks')

    return parser.parse_args(argv)


def load_config(args) -> RunConfig:
    """Configuration from file, overrides and command-line options.

    A missing default config.json falls back to the built-in defaults; any
    other loading problem raises ConfigError.
    """
    if args.config == DEFAULT_CONFIG and not Path(args.config).exists():
        print(f"Configuration file not found: {args.config}")
        print("Using default configuration...")
        config = RunConfig.get_default_config()
    else:
        config = RunConfig.load_from_file(args.config)

    config = config.apply_overrides(args.overrides)
    if args.output:
        config.output = replace(config.output, output_folder=args.output)
    if args.no_plot:
        config.output = replace(config.output, plot=False)

    errors = config.validate()
    if errors:
        raise ConfigError(f"Configuration validation failed: {', '.join(errors)}")
    return config


def main():
    """Main entry point for the CLI."""
    args = parse_arguments()

    try:
        config = load_config(args)
    except ConfigError as e:
        print(f"Error loading configuration: {e}")
        write_error_record(Path(args.output or RunConfig().output.output_folder), e, e.exit_code)
        sys.exit(e.exit_code)

    workers = args.workers if args.workers is not None else config.mc.workers
    if workers < 1:
        print("Error: --workers must be at least 1")
        sys.exit(UsageError.exit_code)

    try:
        print("\n" + "="*60)
        print(f"KPR Toolkit: {args.subcommand}")
        print("="*60 + "\n")

        toolkit = KprToolkit(config, workers)
        status = toolkit.run(args.subcommand, compare=args.compare, checks=args.checks)

        print("\n" + "="*60)
        if status == 0:
            print(f"✓ {args.subcommand} complete!")
        else:
            print(f"✗ {args.subcommand} failed (exit status {status})")
        print(f"Output folder: {toolkit.output_folder}")
        print(f"Log file: {toolkit.logger.get_log_file_path()}")
        print("="*60 + "\n")

        sys.exit(status)

    except KeyboardInterrupt:
        print("\n\nOperation cancelled by user.")
        sys.exit(1)


if __name__ == '__main__':
    main()
