"""Data model and CSV ingestion for right-censored two-period panel survival data.

The on-disk format is a UTF-8 CSV with a mandatory header and columns
``unit,period,treatment,time,event[,x1,x2,...]``. ``period`` is 0 (pre) or
1 (post), ``event`` is 1 for an observed event and 0 for censoring, and any
extra columns are read as numeric covariates in header order. Row numbers in
error messages count physical lines, with the header as row 1.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import CellConflictError, RowValidationError, SchemaError

REQUIRED_COLUMNS = ("unit", "period", "treatment", "time", "event")

Cell = tuple[int, str]


@dataclass(frozen=True)
class CensoredObservation:
    """One subject's observed follow-up.

    ``time`` is min(event time, censoring time) on the study clock,
    ``event`` is True when the event was observed (False = censored),
    ``treatment`` is 0 (control) or 1 (treated), and ``covariates`` is an
    optional fixed-length numeric vector (empty when none were recorded).
    """

    time: float
    event: bool
    treatment: int
    covariates: tuple[float, ...] = ()

    def __post_init__(self):
        if not math.isfinite(self.time) or self.time < 0:
            raise ValueError(f"time must be finite and >= 0, got {self.time}")
        if self.treatment not in (0, 1):
            raise ValueError(f"treatment must be 0 or 1, got {self.treatment}")


@dataclass(frozen=True)
class PanelDataset:
    """Observations indexed by (period, unit) over exactly two periods.

    ``units`` keeps first-appearance order from the source file; every
    matrix built downstream uses that ordering. Construction enforces
    field validity and within-cell treatment consistency; panel-level
    conditions (non-empty cells, presence of controls, a single treated
    unit in the post period) are reported by :func:`validate_panel` so
    that partially broken files can still be inspected.
    """

    units: tuple[str, ...]
    observations: Mapping[Cell, tuple[CensoredObservation, ...]]
    treatment_of: Mapping[Cell, int]

    def __post_init__(self):
        n_cov = None
        for cell, obs in self.observations.items():
            period, unit = cell
            if period not in (0, 1):
                raise ValueError(f"period must be 0 or 1, got {period!r}")
            if unit not in self.units:
                raise ValueError(f"unit {unit!r} missing from unit list")
            cell_treatment = self.treatment_of.get(cell)
            for o in obs:
                if cell_treatment is not None and o.treatment != cell_treatment:
                    raise CellConflictError(
                        period, unit,
                        f"treatment {o.treatment} conflicts with cell value {cell_treatment}",
                    )
                if n_cov is None:
                    n_cov = len(o.covariates)
                elif len(o.covariates) != n_cov:
                    raise ValueError(
                        f"inconsistent covariate length in cell ({period}, {unit}): "
                        f"{len(o.covariates)} != {n_cov}"
                    )

    @property
    def n_covariates(self) -> int:
        for obs in self.observations.values():
            for o in obs:
                return len(o.covariates)
        return 0

    def cell(self, period: int, unit: str) -> tuple[CensoredObservation, ...]:
        return self.observations.get((period, unit), ())

    def pooled_times(self) -> list[float]:
        """All observed times across every cell, in dataset order."""
        times: list[float] = []
        for unit in self.units:
            for period in (0, 1):
                times.extend(o.time for o in self.cell(period, unit))
        return times


@dataclass(frozen=True)
class DonorPool:
    """Ordered control units plus the single target unit they synthesize."""

    control_units: tuple[str, ...]
    target_unit: str

    def __post_init__(self):
        if not self.control_units:
            raise ValueError("donor pool must contain at least one control unit")
        if len(set(self.control_units)) != len(self.control_units):
            raise ValueError("duplicate units in donor pool")
        if self.target_unit in self.control_units:
            raise ValueError(f"target unit {self.target_unit!r} cannot be its own donor")

    @classmethod
    def from_panel(cls, data: PanelDataset, target_unit: str | None = None) -> "DonorPool":
        """Infer the pool from treatment assignment.

        The target defaults to the unique unit treated in the post period;
        donors are the units under control in both periods, in dataset order.
        """
        if target_unit is None:
            treated = [u for u in data.units if data.treatment_of.get((1, u)) == 1]
            if len(treated) != 1:
                raise ValueError(
                    f"expected exactly one post-period treated unit, found {len(treated)}"
                )
            target_unit = treated[0]
        controls = tuple(
            u for u in data.units
            if u != target_unit
            and data.treatment_of.get((0, u)) == 0
            and data.treatment_of.get((1, u)) == 0
        )
        return cls(control_units=controls, target_unit=target_unit)


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding; ``cell`` is None for panel-level findings."""

    message: str
    cell: Cell | None = None

    def __str__(self) -> str:
        return self.message


@dataclass(frozen=True)
class CellStats:
    period: int
    unit: str
    n_obs: int
    n_events: int
    censoring: float
    t_min: float
    t_max: float


def _resolve_schema(header: Sequence[str], schema: Mapping[str, str] | None):
    mapping = dict(zip(REQUIRED_COLUMNS, REQUIRED_COLUMNS))
    covariate_cols: list[str] | None = None
    if schema:
        for key, value in schema.items():
            if key == "covariates":
                covariate_cols = list(value)
            elif key in mapping:
                mapping[key] = value
            else:
                raise SchemaError(f"unknown schema key {key!r}")
    for canonical, actual in mapping.items():
        if actual not in header:
            raise SchemaError(f"missing required column {actual!r}")
    if covariate_cols is None:
        used = set(mapping.values())
        covariate_cols = [c for c in header if c not in used]
    else:
        for c in covariate_cols:
            if c not in header:
                raise SchemaError(f"missing covariate column {c!r}")
    return mapping, covariate_cols


def _parse_int(raw: str, name: str, allowed: tuple[int, ...], row: int) -> int:
    try:
        value = int(raw)
    except ValueError:
        raise RowValidationError(row, f"{name} must be an integer, got {raw!r}") from None
    if value not in allowed:
        raise RowValidationError(row, f"{name} must be one of {allowed}, got {value}")
    return value


def _parse_float(raw: str, name: str, row: int) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise RowValidationError(row, f"{name} must be numeric, got {raw!r}") from None
    if not math.isfinite(value):
        raise RowValidationError(row, f"{name} must be finite, got {raw!r}")
    return value


def iter_rows(path: str | Path, schema: Mapping[str, str] | None = None):
    """Yield (row_number, unit, period, observation) for each data row.

    Performs field-level validation only; grouping and cell-consistency
    checks live in :func:`load_csv`.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row is mandatory") from None
        mapping, covariate_cols = _resolve_schema(header, schema)
        idx = {name: header.index(col) for name, col in mapping.items()}
        cov_idx = [header.index(c) for c in covariate_cols]
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != len(header):
                raise RowValidationError(row_no, f"expected {len(header)} fields, got {len(row)}")
            unit = row[idx["unit"]].strip()
            if not unit:
                raise RowValidationError(row_no, "unit must be non-empty")
            period = _parse_int(row[idx["period"]], "period", (0, 1), row_no)
            treatment = _parse_int(row[idx["treatment"]], "treatment", (0, 1), row_no)
            time = _parse_float(row[idx["time"]], "time", row_no)
            if time < 0:
                raise RowValidationError(row_no, f"time must be >= 0, got {time}")
            event = _parse_int(row[idx["event"]], "event", (0, 1), row_no)
            covariates = tuple(_parse_float(row[j], header[j], row_no) for j in cov_idx)
            yield row_no, unit, period, CensoredObservation(
                time=time, event=bool(event), treatment=treatment, covariates=covariates
            )


def load_csv(path: str | Path, schema: Mapping[str, str] | None = None) -> PanelDataset:
    """Read and validate a panel CSV.

    Rows are grouped by (period, unit); the first row of a cell fixes the
    cell's treatment and later disagreement raises :class:`CellConflictError`.
    """
    units: list[str] = []
    observations: dict[Cell, list[CensoredObservation]] = {}
    treatment_of: dict[Cell, int] = {}
    for row_no, unit, period, obs in iter_rows(path, schema):
        if unit not in units:
            units.append(unit)
        cell = (period, unit)
        if cell in treatment_of and treatment_of[cell] != obs.treatment:
            raise CellConflictError(
                period, unit,
                f"treatment {obs.treatment} in row {row_no} conflicts with "
                f"earlier value {treatment_of[cell]}",
            )
        treatment_of.setdefault(cell, obs.treatment)
        observations.setdefault(cell, []).append(obs)
    if not observations:
        raise SchemaError(f"{path}: no data rows")
    return PanelDataset(
        units=tuple(units),
        observations={c: tuple(v) for c, v in observations.items()},
        treatment_of=treatment_of,
    )


def write_csv(data: PanelDataset, path: str | Path) -> None:
    """Write a dataset back to the canonical CSV layout.

    Rows are unit-major in dataset order so that re-loading reproduces the
    same first-appearance unit ordering. Floats use 17 significant digits.
    """
    n_cov = data.n_covariates
    header = list(REQUIRED_COLUMNS) + [f"x{i+1}" for i in range(n_cov)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for unit in data.units:
            for period in (0, 1):
                for o in data.cell(period, unit):
                    writer.writerow(
                        [unit, period, o.treatment, format(o.time, ".17g"), int(o.event)]
                        + [format(x, ".17g") for x in o.covariates]
                    )


def summarize_cells(data: PanelDataset) -> list[CellStats]:
    """Per-cell counts, censoring proportions and time ranges."""
    stats = []
    for unit in data.units:
        for period in (0, 1):
            cell = (period, unit)
            if cell not in data.observations:
                continue
            obs = data.observations[cell]
            n = len(obs)
            n_events = sum(o.event for o in obs)
            times = [o.time for o in obs]
            stats.append(CellStats(
                period=period,
                unit=unit,
                n_obs=n,
                n_events=n_events,
                censoring=float("nan") if n == 0 else 1.0 - n_events / n,
                t_min=min(times) if times else float("nan"),
                t_max=max(times) if times else float("nan"),
            ))
    return stats


def validate_panel(data: PanelDataset) -> list[Diagnostic]:
    """Check panel-level invariants; an empty list means the panel is clean.

    Never raises: every problem becomes a finding so that broken inputs can
    be reported in full.
    """
    findings: list[Diagnostic] = []
    for unit in data.units:
        for period in (0, 1):
            cell = (period, unit)
            if cell not in data.observations:
                findings.append(Diagnostic(f"missing cell ({period}, {unit})", cell))
                continue
            obs = data.observations[cell]
            if len(obs) == 0:
                findings.append(Diagnostic(f"empty cell ({period}, {unit})", cell))
            elif not any(o.event for o in obs):
                findings.append(Diagnostic(f"no events in cell ({period}, {unit})", cell))
    controls = [
        u for u in data.units
        if data.treatment_of.get((0, u)) == 0 and data.treatment_of.get((1, u)) == 0
    ]
    if not controls:
        findings.append(Diagnostic("no unit is under control in both periods"))
    treated_pre = [u for u in data.units if data.treatment_of.get((0, u)) == 1]
    for u in treated_pre:
        findings.append(Diagnostic(f"unit {u} is treated in the pre-period"))
    treated_post = [u for u in data.units if data.treatment_of.get((1, u)) == 1]
    if len(treated_post) == 0:
        findings.append(Diagnostic("no treated unit in the post-period"))
    elif len(treated_post) > 1:
        findings.append(Diagnostic(
            f"multiple treated units in the post-period: {', '.join(treated_post)}"
        ))
    return findings
