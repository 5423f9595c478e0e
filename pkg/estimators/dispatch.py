"""Entry point that routes an EstimatorSpec to its strategy function."""
import numpy as np
from loguru import logger

from core.strategy_registry import strategy_registry
from dataset.experiment import ExperimentData
from estimators.models import EstimateResult, EstimatorSpec
from features.missingness import balance_check, resolve_constants


def estimate(data: ExperimentData, spec: EstimatorSpec) -> EstimateResult:
    """Estimate the average treatment effect with the strategy the spec names.

    Imputation constants are resolved only for strategies that take them, so
    a 'debias' policy never fails a strategy that ignores c.
    """
    config = strategy_registry.get_config(spec.strategy)
    c = resolve_constants(data, spec.constants) if config.uses_constants else None

    result = strategy_registry.call(
        spec.strategy,
        data=data,
        model=spec.model,
        c=c,
        fallback=spec.mp_fallback,
        hc_flavor=spec.hc_flavor,
        ci_level=spec.ci_level,
    )
    if data.n_covariates:
        result.diagnostics.balance = balance_check(data)
    if c is not None and result.diagnostics.constants is None:
        result.diagnostics.constants = [float(v) for v in np.asarray(c)]
    logger.debug(f"{spec.label}: {result.estimate:.4f} (se {result.se:.4f})")
    return result
