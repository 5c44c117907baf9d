"""Shared metrics CSV schema and schema validation.

All training and double-oracle runs emit the same header so curves can be
aligned on the samples axis.  The ``wallclock_ms`` column is part of the
schema but always written empty: metrics files must be byte-identical
across reruns of the same seeded config, and wall-clock time lives in the
run manifest instead.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from .errors import SchemaError

CSV_HEADER = "step,samples,loss_estimate,duality_gap,eta,tau,epsilon,wallclock_ms"
_COLUMNS = CSV_HEADER.split(",")


@dataclass
class MetricsRow:
    """One evaluation-interval record of a run."""

    step: int
    samples: int
    loss_estimate: float
    duality_gap: float | None
    eta: float
    tau: float
    epsilon: float
    wallclock_ms: float | None = None

    def to_line(self) -> str:
        gap = "" if self.duality_gap is None else repr(float(self.duality_gap))
        wall = "" if self.wallclock_ms is None else repr(float(self.wallclock_ms))
        return (
            f"{self.step},{self.samples},{float(self.loss_estimate)!r},{gap},"
            f"{float(self.eta)!r},{float(self.tau)!r},{float(self.epsilon)!r},{wall}"
        )


class MetricsLog:
    """In-memory row collector with deterministic CSV serialization."""

    def __init__(self):
        self.rows: list[MetricsRow] = []

    def append(self, row: MetricsRow) -> None:
        self.rows.append(row)

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        lines.extend(row.to_line() for row in self.rows)
        return "\n".join(lines) + "\n"

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())


def validate_metrics_csv(text: str) -> list[MetricsRow]:
    """Parse and validate a metrics CSV; raises :class:`SchemaError` with
    the offending line number on any violation."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty file", line=1) from None
    if header != _COLUMNS:
        raise SchemaError(f"bad header {','.join(header)!r}", line=1)
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(_COLUMNS):
            raise SchemaError(f"expected {len(_COLUMNS)} fields, got {len(rec)}", line=lineno)
        try:
            rows.append(
                MetricsRow(
                    step=int(rec[0]),
                    samples=int(rec[1]),
                    loss_estimate=float(rec[2]),
                    duality_gap=float(rec[3]) if rec[3] != "" else None,
                    eta=float(rec[4]),
                    tau=float(rec[5]),
                    epsilon=float(rec[6]),
                    wallclock_ms=float(rec[7]) if rec[7] != "" else None,
                )
            )
        except ValueError as exc:
            raise SchemaError(str(exc), line=lineno) from exc
    return rows


def read_metrics_csv(path: str) -> list[MetricsRow]:
    with open(path, encoding="utf-8") as fh:
        return validate_metrics_csv(fh.read())
