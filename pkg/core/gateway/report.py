"""
Per-step timing statistics over completed sessions, as CSV and as a text table.
"""
import csv
import io
import logging
from collections import defaultdict
from statistics import mean
from typing import Dict, Iterable, List

from pydantic import Field

from core.gateway.pipeline import TIMING_STEPS, SessionRecord
from core.models import Record
from core.templates import get_environment

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["transport", "step", "name", "mean_ms", "min_ms", "max_ms", "n"]


class StepStats(Record):
    transport: str
    step: int
    name: str
    mean_ms: float
    min_ms: float
    max_ms: float
    n: int


class TimingReport(Record):
    rows: List[StepStats] = Field(default_factory=list)
    # Steps (2) to (10) per session, by transport
    end_to_end_ms: Dict[str, List[float]] = Field(default_factory=dict)
    setup_ms: Dict[str, List[float]] = Field(default_factory=dict)

    @property
    def transports(self) -> List[str]:
        return list(self.end_to_end_ms)

    def rows_for(self, transport: str) -> List[StepStats]:
        return [row for row in self.rows if row.transport == transport]

    def slowest_step(self, transport: str) -> str:
        return max(self.rows_for(transport), key=lambda row: row.mean_ms).name


def report_timings(sessions: Iterable[SessionRecord]) -> TimingReport:
    """Aggregate the ten steps per transport; sessions missing a step do not count toward it."""
    samples: Dict[str, Dict[str, List[float]]] = defaultdict(lambda: defaultdict(list))
    end_to_end: Dict[str, List[float]] = defaultdict(list)
    for record in sessions:
        for _, name, value in record.timings.steps():
            if value is not None:
                samples[record.transport][name].append(value)
        end_to_end[record.transport].append(record.timings.measured_ms())

    rows = []
    for transport in samples:
        for number, name in enumerate(TIMING_STEPS, start=1):
            values = samples[transport].get(name)
            if not values:
                continue
            rows.append(StepStats(transport=transport, step=number, name=name, mean_ms=round(mean(values), 3),
                                  min_ms=round(min(values), 3), max_ms=round(max(values), 3), n=len(values)))
    setup = {transport: list(samples[transport].get("setup", [])) for transport in samples}
    return TimingReport(rows=rows, end_to_end_ms=dict(end_to_end), setup_ms=setup)


def to_csv(report: TimingReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in report.rows:
        writer.writerow([row.transport, row.step, row.name, f"{row.mean_ms:.3f}",
                         f"{row.min_ms:.3f}", f"{row.max_ms:.3f}", row.n])
    return buffer.getvalue()


def render_table(report: TimingReport) -> str:
    template = get_environment("text").get_template("timing_table.j2")
    return template.render(report=report)
