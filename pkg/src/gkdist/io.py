"""CSV ingestion and output, log returns, and run manifests."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from gkdist.errors import DomainError

__all__ = [
    "PriceSeries",
    "log_returns",
    "read_price_csv",
    "read_column",
    "format_value",
    "write_csv",
    "RunManifest",
]


@dataclass
class PriceSeries:
    prices: np.ndarray
    timestamps: list[str] | None = None

    def __post_init__(self) -> None:
        self.prices = np.asarray(self.prices, dtype=float).ravel()
        bad = np.flatnonzero(~(self.prices > 0) | ~np.isfinite(self.prices))
        if bad.size:
            i = int(bad[0])
            raise DomainError(f"price at row {i + 1} is not a positive finite number: {self.prices[i]!r}")
        if self.timestamps is not None and len(self.timestamps) != self.prices.size:
            raise DomainError("timestamps and prices differ in length")


def log_returns(series: PriceSeries | Sequence[float]) -> np.ndarray:
    """``log(x[t+1] / x[t])`` for consecutive prices."""
    if not isinstance(series, PriceSeries):
        series = PriceSeries(series)
    if series.prices.size < 2:
        raise DomainError("need at least two prices for returns")
    p = series.prices
    # log1p of the relative change avoids cancellation between nearby logs
    return np.log1p(np.diff(p) / p[:-1])


def _read_rows(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DomainError(f"{path}: file is empty") from None
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    return header, rows


def _column(header: list[str], name: str, path) -> int:
    try:
        return header.index(name)
    except ValueError:
        raise DomainError(f"{path}: no column named {name!r} (have {', '.join(header)})") from None


def read_column(path: str | Path, column: str = "x") -> np.ndarray:
    """Read one numeric column from a headed CSV file."""
    header, rows = _read_rows(path)
    j = _column(header, column, path)
    out = np.empty(len(rows))
    for i, row in enumerate(rows):
        try:
            out[i] = float(row[j])
        except (ValueError, IndexError):
            raise DomainError(f"{path}: row {i + 1}: cannot parse {column!r} value") from None
    return out


def read_price_csv(path: str | Path, column: str = "price", time_column: str | None = None) -> PriceSeries:
    """Read a price series; rows are reported 1-based, not counting the header."""
    header, rows = _read_rows(path)
    j = _column(header, column, path)
    tj = _column(header, time_column, path) if time_column else None
    prices = []
    stamps = [] if tj is not None else None
    for i, row in enumerate(rows):
        try:
            value = float(row[j])
        except (ValueError, IndexError):
            raise DomainError(f"{path}: row {i + 1}: cannot parse price") from None
        if not (value > 0 and math.isfinite(value)):
            raise DomainError(f"{path}: row {i + 1}: price must be positive, got {row[j]!r}")
        prices.append(value)
        if stamps is not None:
            stamps.append(row[tj])
    return PriceSeries(np.array(prices), stamps)


def format_value(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str | Path | None, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """Write a headed CSV; ``None`` or ``"-"`` means standard output."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    if path is None or str(path) == "-":
        sys.stdout.write(buf.getvalue())
    else:
        _atomic_write(Path(path), buf.getvalue())


@dataclass
class RunManifest:
    """Everything needed to repeat a command-line run."""

    command: str
    parameters: dict[str, Any]
    seed: int | None
    argv: list[str]
    artifacts: list[str] = field(default_factory=list)
    status: str = "ok"
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_jsonable) + "\n"

    def write(self, path: str | Path) -> None:
        _atomic_write(Path(path), self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))


def _jsonable(v: Any):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"cannot serialise {type(v).__name__}")
