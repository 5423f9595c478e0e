"""Wald intervals and the studentized Fisher randomization test."""
from concurrent.futures import ThreadPoolExecutor
from typing import TYPE_CHECKING, Callable, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.stats import norm

from core.config import settings
from core.errors import EstimationInfeasible, InputError, TooManyFailuresError
from dataset.experiment import ExperimentData

if TYPE_CHECKING:
    from estimators.models import EstimateResult


def wald(estimate: float, se: float, level: float) -> Tuple[float, float, float]:
    """Normal-reference interval and two-sided p-value.

    se = 0 gives the degenerate interval at the estimate, with p = 1 when the
    estimate is exactly 0 and p = 0 otherwise.
    """
    if not 0 < level < 1:
        raise InputError(f"confidence level must be in (0, 1), got {level}")
    if se < 0 or not np.isfinite(se):
        raise InputError(f"standard error must be finite and >= 0, got {se}")
    if se == 0:
        return estimate, estimate, 1.0 if estimate == 0 else 0.0
    half_width = norm.ppf(0.5 + level / 2) * se
    p_value = float(min(1.0, 2 * norm.sf(abs(estimate) / se)))
    return estimate - half_width, estimate + half_width, p_value


def _t_statistic(estimate: float, se: float) -> float:
    if se > 0:
        return estimate / se
    # Zero SE: 0/0 carries no evidence, anything else is infinitely extreme
    return 0.0 if estimate == 0 else np.inf


def permuted_assignment(data: ExperimentData, rng: np.random.Generator) -> np.ndarray:
    """Uniform relabeling of treatment that keeps arm sizes.

    Clustered data relabel whole clusters; stratified data relabel within each
    stratum, so every stratum keeps its own arm sizes.
    """
    units = data.cluster_id if data.cluster_id is not None else np.arange(data.n)
    _, first, codes = np.unique(units, return_index=True, return_inverse=True)
    codes = np.asarray(codes).reshape(-1)
    unit_treatment = data.treatment[first]
    if data.stratum_id is None:
        return rng.permutation(unit_treatment)[codes]
    blocks = np.asarray(data.stratum_id)[first]
    permuted = unit_treatment.copy()
    for block in np.unique(blocks):
        members = np.flatnonzero(blocks == block)
        permuted[members] = rng.permutation(unit_treatment[members])
    return permuted[codes]


def frt_studentized(
    data: ExperimentData,
    spec,
    draws: Optional[int] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    estimator: Optional[Callable[[ExperimentData], "EstimateResult"]] = None,
):
    """Randomization p-value of |estimate / se| under the sharp null.

    Draw d uses the generator seeded with [seed, d], so the p-value does not
    depend on the worker count. Draws whose fit fails or gives a non-finite
    statistic are dropped; draws with zero SE count as exceedances.
    `estimator` replaces the plain `estimate(data, spec)` fit, e.g. with a
    cluster or stratified estimator; `spec` then only labels the run.
    """
    from estimators.dispatch import estimate
    from estimators.models import FrtResult

    fit = estimator if estimator is not None else (lambda d: estimate(d, spec))

    draws = settings.frt_draws if draws is None else draws
    seed = settings.default_seed if seed is None else seed
    threads = settings.threads if threads is None else threads
    if draws < 1:
        raise InputError("draws must be >= 1")

    observed = fit(data)
    if observed.se == 0 and observed.estimate == 0:
        logger.info("Observed statistic is 0/0; randomization p-value is 1")
        return FrtResult(statistic=0.0, p_value=1.0, draws=draws, valid_draws=0, dropped_draws=0, exceedances=0)
    t_observed = abs(_t_statistic(observed.estimate, observed.se))

    def one_draw(d: int) -> Optional[bool]:
        rng = np.random.default_rng([seed, d])
        try:
            result = fit(data.with_treatment(permuted_assignment(data, rng)))
        except EstimationInfeasible:
            return None
        if result.se == 0:
            return True
        t = result.estimate / result.se
        if not np.isfinite(t):
            return None
        return abs(t) >= t_observed

    with ThreadPoolExecutor(max_workers=threads) as pool:
        outcomes = list(pool.map(one_draw, range(draws)))

    valid = [o for o in outcomes if o is not None]
    dropped = draws - len(valid)
    if len(valid) < settings.frt_min_valid_share * draws:
        raise TooManyFailuresError(
            f"only {len(valid)} of {draws} randomization draws produced a finite statistic"
        )
    if dropped:
        logger.warning(f"Dropped {dropped} of {draws} randomization draws (degenerate fits)")
    exceedances = int(sum(valid))
    p_value = (1 + exceedances) / (len(valid) + 1)
    logger.info(f"FRT {spec.label}: t_obs={t_observed:.3f}, p={p_value:.4f} over {len(valid)} draws")
    return FrtResult(
        statistic=_t_statistic(observed.estimate, observed.se),
        p_value=p_value,
        draws=draws,
        valid_draws=len(valid),
        dropped_draws=dropped,
        exceedances=exceedances,
    )
