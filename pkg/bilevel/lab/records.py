"""
Sweep records and their CSV form.
"""

from __future__ import annotations
import csv
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional

logger = logging.getLogger(__name__)

CSV_HEADER = (
    "method",
    "beta",
    "delta",
    "delta_prime",
    "seed",
    "grad_error",
    "bound_value",
    "status",
)

STATUS_OK = "ok"


def format_float(value: Optional[float]) -> str:
    """17 significant digits; None becomes an empty cell."""
    if value is None:
        return ""
    return format(float(value), ".17g")


def parse_float(cell: str) -> Optional[float]:
    return None if cell == "" else float(cell)


@dataclass(frozen=True)
class SweepRecord:
    """
    One cell of a bound experiment.

    Attributes:
        method: Estimator tag (ep, cg, rbp, ep_opt_beta)
        beta: Nudging step, None for implicit-differentiation methods
        delta: First-phase error norm
        delta_prime: Second-phase error norm
        seed: Seed of the injected directions
        grad_error: ||estimate - oracle||, NaN for failed cells
        bound_value: Theoretical bound, when constants were supplied
        status: "ok" or "failed:<ErrorClass>"
    """
    method: str
    beta: Optional[float]
    delta: float
    delta_prime: float
    seed: int
    grad_error: float
    bound_value: Optional[float] = None
    status: str = STATUS_OK

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    @classmethod
    def failed(
        cls,
        method: str,
        beta: Optional[float],
        delta: float,
        delta_prime: float,
        seed: int,
        error: Exception,
    ) -> SweepRecord:
        return cls(
            method=method,
            beta=beta,
            delta=delta,
            delta_prime=delta_prime,
            seed=seed,
            grad_error=math.nan,
            status=f"failed:{type(error).__name__}",
        )

    def with_bound(self, bound_value: Optional[float]) -> SweepRecord:
        return replace(self, bound_value=bound_value)

    def violates_bound(self, slack: float = 1.0) -> bool:
        """True if a bound is attached and grad_error exceeds bound * slack."""
        if not self.ok or self.bound_value is None:
            return False
        return self.grad_error > self.bound_value * slack

    def to_csv_row(self) -> list[str]:
        return [
            self.method,
            format_float(self.beta),
            format_float(self.delta),
            format_float(self.delta_prime),
            str(int(self.seed)),
            format_float(self.grad_error),
            format_float(self.bound_value),
            self.status,
        ]

    @classmethod
    def from_csv_row(cls, row: list[str]) -> SweepRecord:
        if len(row) != len(CSV_HEADER):
            raise ValueError(f"Expected {len(CSV_HEADER)} columns, got {len(row)}")
        method, beta, delta, delta_prime, seed, grad_error, bound_value, status = row
        return cls(
            method=method,
            beta=parse_float(beta),
            delta=float(delta),
            delta_prime=float(delta_prime),
            seed=int(seed),
            grad_error=float(grad_error),
            bound_value=parse_float(bound_value),
            status=status,
        )


def write_records(path: Path | str, records: Iterable[SweepRecord]) -> Path:
    """Write records with the fixed header; rows keep the given order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for record in records:
            writer.writerow(record.to_csv_row())
            count += 1
    logger.info(f"Wrote {count} sweep records to {path}")
    return path


def read_records(path: Path | str) -> list[SweepRecord]:
    path = Path(path)
    with path.open(newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValueError(f"{path} does not have the sweep CSV header")
        return [SweepRecord.from_csv_row(row) for row in reader]
