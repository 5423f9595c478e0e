"""Average-treatment-effect estimators for experiments with missing covariates"""
from estimators.models import EstimateResult, EstimatorSpec, FrtResult
from estimators.dispatch import estimate
from estimators.compare import CompareReport, compare_strategies
from estimators.inference import frt_studentized, wald

__all__ = [
    "CompareReport",
    "EstimateResult",
    "EstimatorSpec",
    "FrtResult",
    "compare_strategies",
    "estimate",
    "frt_studentized",
    "wald",
]
