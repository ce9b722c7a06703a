"""Tests for core.gateway.report module."""
import csv
import io

from core.gateway import PhaseTimings, SessionOutcome, SessionRecord, TIMING_STEPS, render_table, report_timings, to_csv
from core.gateway.report import CSV_COLUMNS


def record(transport: str = "tcp", scale: float = 1.0, **overrides) -> SessionRecord:
    values = {name: scale * number for number, name in enumerate(TIMING_STEPS, start=1)}
    values.update(overrides)
    return SessionRecord(transport=transport, outcome=SessionOutcome.COMPLETED, phases=[],
                         timings=PhaseTimings(**values), wall_ms=0.0)


class TestReportTimings:
    """Tests for report_timings()."""

    def test_stats_per_step(self):
        report = report_timings([record(scale=1.0), record(scale=3.0)])
        sampling = next(row for row in report.rows if row.name == "cfg_sampling")
        assert sampling.step == 6
        assert (sampling.mean_ms, sampling.min_ms, sampling.max_ms, sampling.n) == (12.0, 6.0, 18.0, 2)

    def test_end_to_end_excludes_setup(self):
        report = report_timings([record(setup=10_000.0)])
        assert report.end_to_end_ms == {"tcp": [float(sum(range(2, 11)))]}
        assert report.setup_ms == {"tcp": [10_000.0]}

    def test_transports_are_separate(self):
        report = report_timings([record("tcp"), record("bt-sim", scale=10.0)])
        assert report.transports == ["tcp", "bt-sim"]
        assert len(report.rows_for("bt-sim")) == 10
        assert report.slowest_step("bt-sim") == "join_secure"

    def test_missing_steps_do_not_count(self):
        report = report_timings([record(join_secure=None), record()])
        join = next(row for row in report.rows if row.name == "join_secure")
        assert join.n == 1

    def test_empty(self):
        report = report_timings([])
        assert report.rows == []
        assert report.transports == []


class TestRendering:
    """Tests for CSV and table output."""

    def test_csv(self):
        rows = list(csv.reader(io.StringIO(to_csv(report_timings([record()])))))
        assert rows[0] == CSV_COLUMNS
        assert rows[1] == ["tcp", "1", "setup", "1.000", "1.000", "1.000", "1"]
        assert len(rows) == 11

    def test_table(self):
        text = render_table(report_timings([record(), record(scale=2.0)]))
        assert "== tcp (2 sessions) ==" in text
        assert "(10)" in text
        assert "join_secure" in text
        assert "steps (2)-(10): mean 81.0 ms, max 108.0 ms" in text

    def test_empty_table(self):
        assert render_table(report_timings([])).strip() == "No completed sessions."
