"""Plain-text renderers for estimates, compare tables and Monte Carlo summaries.

Every number is printed with three decimals. The compare table puts
estimate, robust s.e. and p-value side by side for the additive (F) and the
interacted (L) model, with the difference in means as a reference row.
"""
from typing import Iterable, List, Optional

import pandas as pd

from dataset.experiment import ExperimentData, pattern_table
from estimators.compare import MODEL_FORMS, CompareReport
from estimators.models import EstimateResult, FrtResult
from simulation.monte_carlo import McSummary

_MISSING = "-"
_CELL = 9
_LABEL = 12


def fmt(value: Optional[float]) -> str:
    if value is None or pd.isna(value):
        return _MISSING
    return f"{value:.3f}"


def _cells(result: Optional[EstimateResult]) -> List[str]:
    if result is None:
        return [_MISSING] * 3
    return [fmt(result.estimate), fmt(result.se), fmt(result.p_value)]


def _line(label: str, cells: Iterable[str]) -> str:
    return f"{label:<{_LABEL}}" + "".join(f"{cell:>{_CELL}}" for cell in cells)


def render_compare(report: CompareReport) -> str:
    group = _CELL * 3
    lines = [
        " " * _LABEL + "".join(f"{model:^{group}}" for model in MODEL_FORMS),
        _line("strategy", ["estimate", "s.e.", "p-value"] * len(MODEL_FORMS)),
        "-" * (_LABEL + group * len(MODEL_FORMS)),
    ]
    for row in report.rows:
        cells = []
        for model in MODEL_FORMS:
            cells.extend(_cells(row.fits.get(model)))
        lines.append(_line(row.strategy, cells))
    lines.append("-" * (_LABEL + group * len(MODEL_FORMS)))
    lines.append(_line("neyman", _cells(report.reference)))
    if report.notes:
        lines.append("")
        lines.append("Notes:")
        lines.extend(f"  * {note}" for note in report.notes)
    return "\n".join(lines)


def render_estimate(result: EstimateResult, data: Optional[ExperimentData] = None) -> str:
    """Estimate, SE, CI and p-value followed by the diagnostics."""
    d = result.diagnostics
    lo, hi = result.ci
    lines = [
        f"Estimator: {result.label}",
        f"  estimate  {fmt(result.estimate)}",
        f"  s.e.      {fmt(result.se)}",
        f"  {result.ci_level:.0%} CI    [{fmt(lo)}, {fmt(hi)}]",
        f"  p-value   {fmt(result.p_value)}",
        f"Units: N={d.n}, N1={d.n_treated}, N0={d.n_control}, complete cases={d.n_complete_cases}",
    ]
    if data is not None and data.n_covariates:
        table = pattern_table(data)
        lines.append("Missingness patterns (1 = missing):")
        lines.append("  " + " ".join(data.covariate_names))
        for k in range(table.n_patterns):
            lines.append(f"  {table.key(k)}  n={table.counts[k]}  share={fmt(table.proportions[k])}")
    if d.constants is not None:
        lines.append("Imputation constants: " + ", ".join(fmt(v) for v in d.constants))
    if d.groups:
        lines.append("Groups:")
        for g in d.groups:
            lines.append(
                f"  {g.label}: n={g.n} (N1={g.n_treated}, N0={g.n_control}) weight={fmt(g.weight)} "
                f"estimate={fmt(g.estimate)} s.e.={fmt(g.se)} [{g.method}]"
            )
    if d.dropped_columns:
        lines.append("Dropped (collinear or constant): " + ", ".join(d.dropped_columns))
    for note in d.fallbacks:
        lines.append(f"Note: {note}")
    if d.balance is not None:
        lines.append(f"Missingness balance (max |z| = {fmt(d.balance.max_abs_z)}):")
        for b in d.balance.indicators:
            lines.append(
                f"  M_{b.column}: treated {fmt(b.rate_treated)}, control {fmt(b.rate_control)}, z={fmt(b.z)}"
            )
    return "\n".join(lines)


def render_frt(frt: FrtResult) -> str:
    line = (
        f"Randomization test: t={fmt(frt.statistic)}, p-value={fmt(frt.p_value)} "
        f"({frt.valid_draws} of {frt.draws} draws"
    )
    if frt.dropped_draws:
        line += f", {frt.dropped_draws} dropped"
    return line + ")"


def render_mc_summary(summary: McSummary) -> str:
    header = ["bias", "(mcse)", "sd", "(mcse)", "rmse", "mean se", "cover", "(mcse)", "fails"]
    lines = [
        f"Monte Carlo: tau={fmt(summary.tau)}, reps={summary.reps}, seed={summary.seed}",
        _line("estimator", header),
    ]
    for row in summary.rows:
        lines.append(
            _line(
                row.label,
                [
                    fmt(row.bias), fmt(row.bias_mcse), fmt(row.sd), fmt(row.sd_mcse), fmt(row.rmse),
                    fmt(row.mean_se), fmt(row.coverage), fmt(row.coverage_mcse), str(row.failures),
                ],
            )
        )
    return "\n".join(lines)


def result_frame(results: Iterable[EstimateResult]) -> pd.DataFrame:
    """Machine-readable rows for --out."""
    return pd.DataFrame(
        [
            {
                "strategy": r.strategy,
                "model": r.model,
                "estimate": r.estimate,
                "se": r.se,
                "ci_lo": r.ci[0],
                "ci_hi": r.ci[1],
                "p_value": r.p_value,
                "ci_level": r.ci_level,
                "n": r.diagnostics.n,
                "n_treated": r.diagnostics.n_treated,
                "n_control": r.diagnostics.n_control,
            }
            for r in results
        ]
    )


def compare_frame(report: CompareReport) -> pd.DataFrame:
    fits = [report.reference]
    fits.extend(fit for row in report.rows for fit in row.fits.values() if fit is not None)
    return result_frame(fits)
