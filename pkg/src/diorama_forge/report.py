"""Technical-feasibility summary over stage logs from many runs."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .pipeline import ELEMENT_GENERATION, FAILED, MANUAL, OK, PHOTO_ANALYSIS, PLACEMENT_ROUTE, RunLog

STAGE_TITLES = {
    PHOTO_ANALYSIS: "Photo Analysis",
    ELEMENT_GENERATION: "Element Generation",
    PLACEMENT_ROUTE: "Placement/Route Generation",
}
HEADERS = ("Stage", "Time (min)", "Count", "Success Rate (%)")
DASH = "--"


@dataclass(frozen=True)
class ReportRow:
    stage: str
    time_min: float | None
    count: float | None
    success_rate: float | None

    def cells(self) -> tuple[str, str, str, str]:
        def fmt(x):
            return DASH if x is None else f"{x:.2f}"

        return (self.stage, fmt(self.time_min), fmt(self.count), fmt(self.success_rate))


@dataclass(frozen=True)
class ManualFlag:
    run: str
    stage: str
    item_id: str
    note: str


@dataclass(frozen=True)
class FeasibilityReport:
    rows: tuple[ReportRow, ...]
    runs: int
    manual_flags: tuple[ManualFlag, ...] = ()

    def to_text(self) -> str:
        table = [HEADERS] + [r.cells() for r in self.rows]
        widths = [max(len(row[i]) for row in table) for i in range(4)]

        def line(cells):
            first = cells[0].ljust(widths[0])
            rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
            return "  ".join([first, *rest])

        rule = "-" * len(line(HEADERS))
        out = [line(HEADERS), rule]
        out += [line(r.cells()) for r in self.rows[:-1]]
        out += [rule, line(self.rows[-1].cells())]
        if self.manual_flags:
            out += ["", "Manual flags (excluded from success rates):"]
            out += [f"  {f.run} {f.stage} {f.item_id}: {f.note}" for f in self.manual_flags]
        return "\n".join(out) + "\n"

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "columns": list(HEADERS),
            "rows": [dict(zip(HEADERS, r.cells())) for r in self.rows],
            "manual_flags": [
                {"run": f.run, "stage": f.stage, "item_id": f.item_id, "note": f.note} for f in self.manual_flags
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _mean(values: Sequence[float]) -> float | None:
    return sum(values) / len(values) if values else None


def feasibility_report(logs: Sequence[RunLog]) -> FeasibilityReport:
    """Aggregate runs into per-stage mean time, mean item count and success rate.

    Stage time is the stage's elapsed wall time when logged, otherwise the sum
    of its item times. Manually flagged items count toward item totals but not
    toward the success rate.
    """
    if not logs:
        raise ValueError("feasibility_report needs at least one run")
    rows = []
    flags = []
    for stage, title in STAGE_TITLES.items():
        times, counts = [], []
        ok = failed = 0
        for run in logs:
            log = run.stage(stage)
            if log is None:
                continue
            times.append(log.elapsed_s if log.elapsed_s is not None else sum(i.wall_time_s for i in log.items))
            counts.append(len(log.items))
            for item in log.items:
                if item.outcome == OK:
                    ok += 1
                elif item.outcome == FAILED:
                    failed += 1
                elif item.outcome == MANUAL:
                    flags.append(ManualFlag(run.event_id, stage, item.item_id, item.detail))
        t = _mean(times)
        rows.append(ReportRow(
            title,
            None if t is None else t / 60.0,
            _mean(counts),
            100.0 * ok / (ok + failed) if ok + failed else None,
        ))
    e2e = []
    for run in logs:
        if run.end_to_end_s is not None:
            e2e.append(run.end_to_end_s)
        else:
            e2e.append(sum(
                s.elapsed_s if s.elapsed_s is not None else sum(i.wall_time_s for i in s.items) for s in run.stages
            ))
    rows.append(ReportRow("End-to-End", _mean(e2e) / 60.0, None, None))
    return FeasibilityReport(tuple(rows), len(logs), tuple(flags))


def load_logs(runs_dir: str | Path) -> list[RunLog]:
    """Every ``*.json`` stage log under a directory, in path order."""
    runs_dir = Path(runs_dir)
    paths = sorted(runs_dir.rglob("*.json")) if runs_dir.is_dir() else [runs_dir]
    logs = []
    for p in paths:
        doc = json.loads(p.read_text(encoding="utf-8"))
        if isinstance(doc, dict) and "stages" in doc:
            logs.append(RunLog.from_dict(doc))
    return logs
