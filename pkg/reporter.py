"""Report generator module for KPR Toolkit.

Writes result tables as CSV, fit summaries as key=value text and line plots
as SVG, and collects acceptance checks into a markdown summary.
"""

import csv
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import matplotlib

matplotlib.use('Agg')
matplotlib.rcParams['svg.hashsalt'] = 'kpr-toolkit'
import matplotlib.pyplot as plt  # noqa: E402

from config import RunConfig

Series = Tuple[str, Sequence[float], Sequence[float]]


def format_value(value: Any) -> str:
    """17 significant digits for floats, plain text for everything else."""
    if isinstance(value, bool) or value is None:
        return str(value)
    if isinstance(value, float):
        return format(value, '.17g')
    if hasattr(value, 'item'):
        return format_value(value.item())
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write a CSV table with full float precision.

    Args:
        path: Output file
        header: Column names
        rows: Row values, one sequence per row

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(value) for value in row])
    return path


def write_key_values(path: Path, mapping: Mapping[str, Any]) -> Path:
    """Write ``key=value`` lines in insertion order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{key}={format_value(value)}" for key, value in mapping.items()]
    path.write_text("\n".join(lines) + "\n", encoding='utf-8')
    return path


def plot_lines(path: Path, series: Sequence[Series], xlabel: str = '', ylabel: str = '',
               title: str = '', logy: bool = False) -> Path:
    """Plot one polyline per series into a static SVG.

    The SVG carries no creation date, so identical data give identical files.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    try:
        for label, x, y in series:
            ax.plot(list(x), list(y), label=label, linewidth=1.2)
        if logy:
            ax.set_yscale('log')
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend()
        ax.grid(True, linewidth=0.3)
        fig.tight_layout()
        fig.savefig(path, format='svg', metadata={'Date': None})
    finally:
        plt.close(fig)
    return path


@dataclass
class CheckResult:
    """Outcome of one acceptance check."""

    name: str
    group: str
    passed: bool
    measured: str
    expected: str
    seconds: float = 0.0
    error: Optional[str] = None


class ReportGenerator:
    """Collects acceptance checks and renders the verification summary."""

    def __init__(self, config: RunConfig):
        """Initialize reporter with configuration.

        Args:
            config: Configuration object
        """
        self.config = config
        self.checks: List[CheckResult] = []
        self.start_time: datetime = datetime.now()
        self.end_time: datetime = datetime.now()

    def set_start_time(self, start_time: datetime):
        self.start_time = start_time

    def set_end_time(self, end_time: datetime):
        self.end_time = end_time

    def add_check(self, check: CheckResult):
        self.checks.append(check)

    def get_statistics(self) -> Dict[str, Any]:
        """Get verification statistics.

        Returns:
            Dictionary with totals, per-group pass counts and timing
        """
        passed = sum(1 for check in self.checks if check.passed)
        groups = defaultdict(lambda: [0, 0])
        for check in self.checks:
            groups[check.group][1] += 1
            if check.passed:
                groups[check.group][0] += 1

        return {
            'total_checks': len(self.checks),
            'passed': passed,
            'failed': len(self.checks) - passed,
            'group_breakdown': {group: tuple(counts) for group, counts in groups.items()},
            'duration_seconds': (self.end_time - self.start_time).total_seconds(),
            'start_time': self.start_time,
            'end_time': self.end_time,
        }

    def all_passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def generate_summary(self) -> str:
        """Generate markdown summary report.

        Returns:
            Markdown-formatted summary report as a string
        """
        stats = self.get_statistics()

        lines = []
        lines.append("# Verification Summary")
        lines.append("")
        lines.append(f"**Date:** {self.start_time.strftime('%Y-%m-%d %H:%M:%S')}")
        lines.append(f"**Duration:** {stats['duration_seconds']:.1f} seconds")
        lines.append(f"**Checks Run:** {stats['total_checks']}")
        lines.append(f"**Passed:** {stats['passed']}")
        lines.append(f"**Failed:** {stats['failed']}")
        lines.append("")

        if stats['group_breakdown']:
            lines.append("## Group Breakdown")
            lines.append("")
            lines.append("| Group | Passed | Total |")
            lines.append("|-------|--------|-------|")
            for group in sorted(stats['group_breakdown']):
                passed, total = stats['group_breakdown'][group]
                lines.append(f"| {group} | {passed} | {total} |")
            lines.append("")

        if self.checks:
            lines.append("## Checks")
            lines.append("")
            lines.append("| Check | Result | Measured | Expected | Time (s) |")
            lines.append("|-------|--------|----------|----------|----------|")
            for check in self.checks:
                result = "PASS" if check.passed else "FAIL"
                lines.append(f"| {check.name} | {result} | {check.measured} | {check.expected} | "
                             f"{check.seconds:.2f} |")
            lines.append("")

        failures = [check for check in self.checks if check.error]
        if failures:
            lines.append("## Errors")
            lines.append("")
            for check in failures:
                lines.append(f"- `{check.name}`: {check.error}")
            lines.append("")

        return "\n".join(lines)

    def write_summary(self, output_path: Path):
        """Write summary report to a file.

        Args:
            output_path: Path where the summary should be written
        """
        summary = self.generate_summary()
        output_path.parent.mkdir(parents=True, exist_ok=True)
        output_path.write_text(summary, encoding='utf-8')
