"""
Report Service - Deterministic text reports for CLI commands.

A report carries a schema header, a human-readable table section, pass/fail checks and
machine-readable ``record`` lines (metric, variant, value, unit). Nothing time- or
host-dependent is written, so identical runs produce byte-identical reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from loguru import logger

from utils.constants import REPORT_HEADER
from utils.errors import SerializationError


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class MetricRecord:
    metric: str
    variant: str
    value: float
    unit: str

    def render(self) -> str:
        value = f"{self.value:.6g}" if isinstance(self.value, float) else str(self.value)
        return f"record {self.metric} {self.variant} {value} {self.unit}"


@dataclass
class Report:
    """One command's output."""

    command: str
    lines: list[str] = field(default_factory=list)
    checks: list[CheckResult] = field(default_factory=list)
    records: list[MetricRecord] = field(default_factory=list)

    @property
    def failed(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    @property
    def passed(self) -> bool:
        return not self.failed

    def render(self) -> str:
        out = [REPORT_HEADER, f"command: {self.command}", ""]
        out.extend(self.lines)
        if self.checks:
            out += ["", "checks:"]
            for check in self.checks:
                status = "PASS" if check.passed else "FAIL"
                detail = f" ({check.detail})" if check.detail else ""
                out.append(f"  [{status}] {check.name}{detail}")
            out.append(f"summary: {len(self.checks) - len(self.failed)}/{len(self.checks)} passed")
        if self.records:
            out += ["", "records:"]
            out.extend(r.render() for r in self.records)
        return "\n".join(out) + "\n"


class ReportService:
    """Builds, logs and writes reports."""

    def new_report(self, command: str) -> Report:
        return Report(command=command)

    def check(self, report: Report, name: str, passed: bool, detail: str = "") -> bool:
        result = CheckResult(name, bool(passed), detail)
        report.checks.append(result)
        if result.passed:
            logger.debug(f"check passed: {name} {detail}")
        else:
            logger.error(f"check FAILED: {name} {detail}")
        return result.passed

    def record(
        self, report: Report, metric: str, variant: str, value: float, unit: str
    ) -> MetricRecord:
        entry = MetricRecord(metric, variant, value, unit)
        report.records.append(entry)
        return entry

    def table(self, report: Report, headers: list[str], rows: list[list[str]]) -> None:
        """Append a fixed-width table."""
        widths = [len(h) for h in headers]
        for row in rows:
            widths = [max(w, len(cell)) for w, cell in zip(widths, row, strict=True)]
        report.lines.append("  ".join(h.ljust(w) for h, w in zip(headers, widths, strict=True)))
        report.lines.append("  ".join("-" * w for w in widths))
        for row in rows:
            report.lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths, strict=True)))
        report.lines.append("")

    def write(self, report: Report, path: Path | str) -> Path:
        target = Path(path)
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(report.render(), encoding="utf-8")
        except OSError as exc:
            raise SerializationError(f"Failed to write report {target}: {exc}") from exc
        logger.info(f"Report written to {target}")
        return target


_default_service = None


def get_report_service() -> ReportService:
    """Get the default report service instance."""
    global _default_service
    if _default_service is None:
        _default_service = ReportService()
    return _default_service


def reset_report_service() -> None:
    """Reset the global report service instance."""
    global _default_service
    _default_service = None


__all__ = [
    "CheckResult",
    "MetricRecord",
    "Report",
    "ReportService",
    "get_report_service",
    "reset_report_service",
]
