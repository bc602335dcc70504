"""Per-task delay records and the CSV report built from them."""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

CSV_HEADER = ("scenario", "mode", "period_s", "run", "task", "task_id", "publish_t", "deliver_t", "e2e_ms", "verdict")


@dataclass(frozen=True)
class TaskRecord:
    scenario: str
    mode: str
    period_ms: int
    run: int
    name: str
    task_id: str
    publish_t: int
    deliver_t: int | None
    verdict: str

    @property
    def e2e_ms(self) -> int | None:
        return None if self.deliver_t is None else self.deliver_t - self.publish_t

    def row(self) -> list[str]:
        return [
            self.scenario,
            self.mode,
            format_seconds(self.period_ms),
            str(self.run),
            self.name,
            self.task_id,
            f"{self.publish_t / 1000:.3f}",
            "" if self.deliver_t is None else f"{self.deliver_t / 1000:.3f}",
            "" if self.e2e_ms is None else str(self.e2e_ms),
            self.verdict,
        ]


def format_seconds(ms: int) -> str:
    return f"{ms / 1000:g}"


def _ms(value: float) -> str:
    return "n/a" if math.isnan(value) else f"{value:.1f}ms"


def percentile(values: Sequence[int], p: float) -> float:
    """Nearest-rank percentile."""
    ordered = sorted(values)
    rank = max(1, math.ceil(p * len(ordered)))
    return float(ordered[rank - 1])


@dataclass
class MetricsReport:
    scenario: str
    mode: str
    period_ms: int
    records: list[TaskRecord] = field(default_factory=list)
    insights: dict[tuple[int, str], Fraction] = field(default_factory=dict)
    expected: dict[tuple[int, str], Fraction] = field(default_factory=dict)
    summaries: dict[int, str] = field(default_factory=dict)
    counters: dict[str, int] = field(default_factory=dict)
    node_busy_ms: dict[str, int] = field(default_factory=dict)
    credit_rejections: int = 0
    taint_checks: int = 0
    taint_violations: int = 0
    ledger_lines: list[str] = field(default_factory=list)
    ledger_digest: bytes = b""
    event_log: list[str] = field(default_factory=list)

    @property
    def delays(self) -> list[int]:
        return [r.e2e_ms for r in self.records if r.e2e_ms is not None]

    @property
    def mean_delay(self) -> float:
        d = self.delays
        return statistics.fmean(d) if d else float("nan")

    @property
    def p50(self) -> float:
        return statistics.median(self.delays) if self.delays else float("nan")

    @property
    def p95(self) -> float:
        return percentile(self.delays, 0.95) if self.delays else float("nan")

    @property
    def rejected(self) -> int:
        return sum(r.verdict == "Rejected" for r in self.records)

    @property
    def rejection_rate(self) -> float:
        return self.rejected / len(self.records) if self.records else 0.0

    @property
    def oracle_mismatches(self) -> list[tuple[int, str]]:
        return sorted(k for k, v in self.insights.items() if self.expected.get(k) != v)

    def csv_text(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(CSV_HEADER)
        for r in sorted(self.records, key=lambda r: (r.run, r.publish_t, r.name)):
            w.writerow(r.row())
        return buf.getvalue()

    def summary_line(self) -> str:
        return (
            f"{self.scenario} {self.mode} period={format_seconds(self.period_ms)}s "
            f"tasks={len(self.records)} mean={_ms(self.mean_delay)} p50={_ms(self.p50)} "
            f"p95={_ms(self.p95)} rejected={self.rejected} credit_rejections={self.credit_rejections} "
            f"taint_violations={self.taint_violations}"
        )


def emit_csv(reports: MetricsReport | Sequence[MetricsReport], path: str) -> None:
    """Write one header and every report's rows; raises OSError on an unwritable path."""
    if isinstance(reports, MetricsReport):
        reports = [reports]
    text = ",".join(CSV_HEADER) + "\n"
    text += "".join(r.csv_text(header=False) for r in reports)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
