import csv
import io
import math
import sys
from dataclasses import dataclass, field

HEADER = ("setting", "query_range", "system", "backend", "fold", "count", "mae")
SYSTEMS = ("constant", "regressor", "retrieve", "adapt")
MEAN_FOLD = "mean"


@dataclass(frozen=True)
class ReportRow:
    setting: str
    query_range: str
    system: str
    backend: str
    fold: object  # int, or MEAN_FOLD for the fold average
    count: int
    mae: float | None


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)
    range_order: tuple = ()

    def sorted_rows(self):
        order = {name: i for i, name in enumerate(self.range_order)}

        def key(r):
            fold = (1, 0) if r.fold == MEAN_FOLD else (0, int(r.fold))
            return (r.setting, order.get(r.query_range, len(order)), r.query_range,
                    SYSTEMS.index(r.system), r.backend, fold)

        return sorted(self.rows, key=key)

    def select(self, **criteria):
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in criteria.items())]

    def mean_mae(self, query_range, system, backend="-"):
        rows = self.select(query_range=query_range, system=system, backend=backend, fold=MEAN_FOLD)
        if len(rows) != 1:
            raise KeyError(f"no unique mean row for {(query_range, system, backend)}")
        return rows[0].mae


def _fmt(v):
    return "" if v is None else repr(float(v))


def write_report_csv(report: ExperimentReport, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(HEADER)
    for r in report.sorted_rows():
        writer.writerow([r.setting, r.query_range, r.system, r.backend, r.fold, r.count, _fmt(r.mae)])


def render_table(report: ExperimentReport) -> str:
    """Aligned plain-text table with MAE to four decimals."""
    body = [
        [r.setting, r.query_range, r.system, r.backend, str(r.fold), str(r.count),
         "-" if r.mae is None else f"{r.mae:.4f}"]
        for r in report.sorted_rows()
    ]
    widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h) for i, h in enumerate(HEADER)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(HEADER, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in body:
        lines.append("  ".join(c.rjust(w) if i >= 4 else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths))))
    return "\n".join(lines)


def emit_report(report: ExperimentReport, path, stream=sys.stdout):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            write_report_csv(report, fh)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    if stream is not None:
        print(render_table(report), file=stream)


def parse_report(source) -> ExperimentReport:
    """Read a report CSV from a path or an open text stream."""
    if isinstance(source, io.TextIOBase):
        text = source.read()
    else:
        with open(source, encoding="utf-8", newline="") as fh:
            text = fh.read()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != HEADER:
        raise ValueError(f"unexpected report header {header}")
    rows, ranges = [], []
    for rec in reader:
        if len(rec) != len(HEADER):
            raise ValueError(f"malformed report row {rec}")
        setting, qr, system, backend, fold, count, value = rec
        if system not in SYSTEMS:
            raise ValueError(f"unknown system {system!r}")
        mae = float(value) if value else None
        if mae is not None and not math.isfinite(mae):
            raise ValueError(f"non-finite MAE in row {rec}")
        if qr not in ranges:
            ranges.append(qr)
        rows.append(ReportRow(setting, qr, system, backend,
                              MEAN_FOLD if fold == MEAN_FOLD else int(fold), int(count), mae))
    return ExperimentReport(rows, tuple(ranges))
