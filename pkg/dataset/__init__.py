"""Observed data model and CSV ingestion"""
from dataset.experiment import (
    CompleteCovariateSet,
    ExperimentData,
    PatternTable,
    complete_covariate_set,
    pattern_table,
)
from dataset.csv_io import ColumnRoles, load_csv, write_csv

__all__ = [
    "ExperimentData",
    "PatternTable",
    "CompleteCovariateSet",
    "pattern_table",
    "complete_covariate_set",
    "ColumnRoles",
    "load_csv",
    "write_csv",
]
