"""CSV ingestion and export for ExperimentData.

Cells are read as raw strings so that missing-cell encodings are decided
here, not by pandas' NA heuristics:

  * empty string, "NA" and "nan" (any case) mark a missing covariate
  * the same encodings in the outcome or treatment column are errors
  * a row with fewer or more fields than the header is an error

Row numbers in errors are 1-based data rows (the header is row 0).
"""
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd
from loguru import logger

from core.errors import CsvFormatError, InputError
from dataset.experiment import ExperimentData

MISSING_TOKENS = frozenset({"", "na", "nan"})
REST = "rest"


@dataclass
class ColumnRoles:
    """Which CSV column plays which role. `covariates="rest"` takes every unassigned column."""

    outcome: str
    treatment: str
    covariates: Union[List[str], str] = field(default_factory=list)
    cluster: Optional[str] = None
    stratum: Optional[str] = None

    def resolve_covariates(self, header: List[str]) -> List[str]:
        if isinstance(self.covariates, str):
            if self.covariates.strip().lower() == REST:
                taken = {self.outcome, self.treatment, self.cluster, self.stratum}
                return [c for c in header if c not in taken]
            return [c.strip() for c in self.covariates.split(",") if c.strip()]
        return list(self.covariates)


def _is_missing(cell: str) -> bool:
    return cell.strip().lower() in MISSING_TOKENS


def _check_field_counts(path: Path) -> None:
    """Compare every record's field count to the header before pandas pads short rows."""
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            records = (record for record in csv.reader(handle) if record)
            header = next(records, None)
            if header is None:
                raise CsvFormatError("file is empty or has no header row")
            for row, record in enumerate(records, start=1):
                if len(record) != len(header):
                    side = "fewer" if len(record) < len(header) else "more"
                    raise CsvFormatError(
                        f"ragged row ({len(record)} fields, {side} than the header's {len(header)})", row=row
                    )
    except csv.Error as e:
        raise CsvFormatError(f"unparseable CSV: {e}") from None
    except FileNotFoundError:
        raise InputError(f"input file not found: {path}") from None


def _read_raw(path: Path) -> pd.DataFrame:
    _check_field_counts(path)
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise CsvFormatError("file is empty or has no header row") from None
    except pd.errors.ParserError as e:
        raise CsvFormatError(f"unparseable CSV: {e}") from None


def load_csv(path: Union[str, Path], schema: ColumnRoles) -> ExperimentData:
    """Read a CSV into ExperimentData, building the mask from missing cells."""
    path = Path(path)
    frame = _read_raw(path)
    header = list(frame.columns)

    covariates = schema.resolve_covariates(header)
    required = [schema.outcome, schema.treatment, *covariates]
    required += [c for c in (schema.cluster, schema.stratum) if c]
    absent = [c for c in required if c not in header]
    if absent:
        raise InputError(f"column(s) not in header: {', '.join(absent)}")

    outcome = _parse_numeric(frame[schema.outcome], schema.outcome, allow_missing=False)[0]
    treatment = _parse_treatment(frame[schema.treatment], schema.treatment)

    n = len(frame)
    x = np.zeros((n, len(covariates)))
    mask = np.zeros((n, len(covariates)), dtype=bool)
    for j, name in enumerate(covariates):
        x[:, j], mask[:, j] = _parse_numeric(frame[name], name, allow_missing=True)

    cluster_id = _parse_labels(frame[schema.cluster], schema.cluster) if schema.cluster else None
    stratum_id = _parse_labels(frame[schema.stratum], schema.stratum) if schema.stratum else None

    data = ExperimentData(
        outcome=outcome,
        treatment=treatment,
        covariates=x,
        mask=mask,
        covariate_names=tuple(covariates),
        cluster_id=cluster_id,
        stratum_id=stratum_id,
        outcome_name=schema.outcome,
        treatment_name=schema.treatment,
    )
    logger.info(
        f"Loaded {path.name}: N={data.n} (N1={data.n_treated}, N0={data.n_control}), "
        f"J={data.n_covariates}, missing cells={int(mask.sum())}"
    )
    return data


def _parse_numeric(column: pd.Series, name: str, allow_missing: bool):
    values = np.zeros(len(column))
    missing = np.zeros(len(column), dtype=bool)
    for i, cell in enumerate(column.tolist()):
        if _is_missing(cell):
            if not allow_missing:
                raise CsvFormatError("missing value", row=i + 1, column=name)
            missing[i] = True
            continue
        try:
            values[i] = float(cell)
        except ValueError:
            raise CsvFormatError(f"not a number: '{cell}'", row=i + 1, column=name) from None
        if not np.isfinite(values[i]):
            raise CsvFormatError(f"non-finite value: '{cell}'", row=i + 1, column=name)
    return values, missing


def _parse_treatment(column: pd.Series, name: str) -> np.ndarray:
    values, _ = _parse_numeric(column, name, allow_missing=False)
    bad = np.flatnonzero(~np.isin(values, (0.0, 1.0)))
    if bad.size:
        i = int(bad[0])
        raise CsvFormatError(
            f"treatment must be 0 or 1, got '{column.iloc[i]}'", row=i + 1, column=name
        )
    return values.astype(np.int8)


def _parse_labels(column: pd.Series, name: str) -> np.ndarray:
    for i, cell in enumerate(column.tolist()):
        if _is_missing(cell):
            raise CsvFormatError("missing label", row=i + 1, column=name)
    codes, _ = pd.factorize(column.str.strip())
    return codes.astype(np.int64)


def write_csv(data: ExperimentData, path: Union[str, Path]) -> None:
    """Write ExperimentData back out; masked covariates become "NA"."""
    frame = pd.DataFrame({data.outcome_name: data.outcome, data.treatment_name: data.treatment.astype(int)})
    for j, name in enumerate(data.covariate_names):
        column = pd.Series(data.covariates[:, j], dtype=object)
        column[data.mask[:, j]] = "NA"
        frame[name] = column
    if data.cluster_id is not None:
        frame["cluster"] = data.cluster_id
    if data.stratum_id is not None:
        frame["stratum"] = data.stratum_id
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
