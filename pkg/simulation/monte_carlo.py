"""Monte Carlo runner over repeated random assignments of one finite population.

Replicate r draws its assignment from `default_rng([seed, r])` and results are
stored by replicate index, so the output is the same for any worker count.
Monte Carlo standard errors of each summary use batch means over contiguous
replicate batches.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field
from scipy.stats import kurtosis

from core.config import settings
from core.errors import EstimationInfeasible, InputError, TooManyFailuresError
from estimators.dispatch import estimate
from estimators.models import EstimatorSpec
from simulation.populations import PotentialPopulation, reveal

REPLICATE_COLUMNS = ["rep", "strategy", "model", "estimate", "se", "ci_lo", "ci_hi", "covered"]


class McRow(BaseModel):
    """Summary of one estimator over the replicates where it succeeded"""
    label: str
    strategy: str
    model: str
    reps_ok: int
    failures: int
    bias: float
    bias_mcse: float
    sd: float = Field(..., ge=0)
    sd_mcse: float
    rmse: float
    mean_se: float
    coverage: float = Field(..., ge=0, le=1)
    coverage_mcse: float
    excess_kurtosis: float = Field(..., description="Reported for tail behaviour, never gated")


@dataclass
class McSummary:
    tau: float
    reps: int
    seed: int
    rows: List[McRow]
    replicates: pd.DataFrame

    def row(self, label: str) -> McRow:
        for row in self.rows:
            if row.label == label:
                return row
        raise KeyError(label)

    def table(self) -> pd.DataFrame:
        return pd.DataFrame([row.model_dump() for row in self.rows])

    def write(self, summary_path: Union[str, Path], replicate_path: Optional[Union[str, Path]] = None) -> None:
        Path(summary_path).parent.mkdir(parents=True, exist_ok=True)
        self.table().to_csv(summary_path, index=False, lineterminator="\n", float_format="%.10g")
        if replicate_path is not None:
            Path(replicate_path).parent.mkdir(parents=True, exist_ok=True)
            self.replicates[REPLICATE_COLUMNS].to_csv(
                replicate_path, index=False, lineterminator="\n", float_format="%.10g"
            )


def batch_mcse(values: np.ndarray, statistic, batches: int) -> float:
    """Standard error of `statistic(values)` from its spread over contiguous batches."""
    batches = min(batches, len(values))
    if batches < 2:
        return float("nan")
    per_batch = np.array([statistic(chunk) for chunk in np.array_split(values, batches)])
    return float(np.std(per_batch, ddof=1) / np.sqrt(batches))


def pooled_bias(summaries: Sequence[McSummary], label: str) -> Tuple[float, float]:
    """Mean bias of one estimator over independent runs, with the MC-SE of that mean."""
    if not summaries:
        raise InputError("pooling needs at least one Monte Carlo run")
    rows = [summary.row(label) for summary in summaries]
    bias = float(np.mean([row.bias for row in rows]))
    mcse = float(np.sqrt(sum(row.bias_mcse**2 for row in rows))) / len(rows)
    return bias, mcse


def _replicate(pop: PotentialPopulation, specs: Sequence[EstimatorSpec], seed: int, rep: int) -> List[dict]:
    z = pop.draw_assignment(np.random.default_rng([seed, rep]))
    data = reveal(pop, z)
    rows = []
    for spec in specs:
        try:
            result = estimate(data, spec)
            lo, hi = result.ci
            rows.append({
                "rep": rep, "label": spec.label, "strategy": spec.strategy, "model": result.model,
                "estimate": result.estimate, "se": result.se, "ci_lo": lo, "ci_hi": hi,
                "covered": bool(lo <= pop.tau <= hi), "ok": True,
            })
        except EstimationInfeasible as e:
            logger.debug(f"rep {rep}: {spec.label} failed: {e}")
            rows.append({
                "rep": rep, "label": spec.label, "strategy": spec.strategy,
                "model": "-" if spec.strategy == "neyman" else spec.model,
                "estimate": np.nan, "se": np.nan, "ci_lo": np.nan, "ci_hi": np.nan,
                "covered": False, "ok": False,
            })
    return rows


def _summarize(label: str, frame: pd.DataFrame, tau: float, batches: int) -> McRow:
    ok = frame[frame["ok"]]
    estimates = ok["estimate"].to_numpy()
    covered = ok["covered"].to_numpy(dtype=float)
    errors = estimates - tau
    return McRow(
        label=label,
        strategy=str(frame["strategy"].iloc[0]),
        model=str(frame["model"].iloc[0]),
        reps_ok=len(ok),
        failures=int((~frame["ok"]).sum()),
        bias=float(errors.mean()),
        bias_mcse=batch_mcse(errors, np.mean, batches),
        sd=float(np.std(estimates, ddof=1)),
        sd_mcse=batch_mcse(estimates, lambda v: np.std(v, ddof=1), batches),
        rmse=float(np.sqrt(np.mean(errors**2))),
        mean_se=float(ok["se"].mean()),
        coverage=float(covered.mean()),
        coverage_mcse=batch_mcse(covered, np.mean, batches),
        excess_kurtosis=float(kurtosis(estimates, fisher=True)),
    )


def monte_carlo(
    pop: PotentialPopulation,
    specs: Sequence[EstimatorSpec],
    reps: int,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> McSummary:
    """Estimate every spec on `reps` independent assignments and summarize."""
    if reps < 2:
        raise InputError(f"reps must be >= 2, got {reps}")
    if not specs:
        raise InputError("no estimators to simulate")
    seed = settings.default_seed if seed is None else seed
    threads = settings.threads if threads is None else threads
    logger.info(f"Monte Carlo: N={pop.n}, reps={reps}, seed={seed}, estimators={len(specs)}, threads={threads}")

    with ThreadPoolExecutor(max_workers=threads) as pool:
        per_rep = list(pool.map(lambda r: _replicate(pop, specs, seed, r), range(reps)))
    replicates = pd.DataFrame([row for rows in per_rep for row in rows])

    rows = []
    for spec in specs:
        frame = replicates[replicates["label"] == spec.label]
        failures = int((~frame["ok"]).sum())
        if failures > settings.mc_max_failure_share * reps or failures > reps - 2:
            first = frame[~frame["ok"]]["rep"].head(5).tolist()
            raise TooManyFailuresError(
                f"{spec.label} failed on {failures} of {reps} replicates (first: {first})"
            )
        if failures:
            logger.warning(f"{spec.label} failed on {failures} of {reps} replicates")
        rows.append(_summarize(spec.label, frame, pop.tau, min(settings.mc_batches, reps)))

    return McSummary(tau=pop.tau, reps=reps, seed=seed, rows=rows, replicates=replicates)
