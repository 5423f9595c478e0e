"""Side-by-side fits of every compare-table strategy under both model forms."""
from typing import Dict, List, Optional

from loguru import logger
from pydantic import BaseModel, Field

from core.errors import EstimationInfeasible
from core.strategy_registry import strategy_registry
from dataset.experiment import ExperimentData
from estimators.dispatch import estimate
from estimators.models import EstimateResult, EstimatorSpec

MODEL_FORMS = ("F", "L")


class CompareRow(BaseModel):
    strategy: str
    fits: Dict[str, Optional[EstimateResult]] = Field(
        default_factory=dict, description="Model form -> result, None when excluded"
    )


class CompareReport(BaseModel):
    reference: EstimateResult
    rows: List[CompareRow]
    notes: List[str] = Field(default_factory=list)

    def result(self, strategy: str, model: str) -> Optional[EstimateResult]:
        for row in self.rows:
            if row.strategy == strategy:
                return row.fits.get(model)
        raise KeyError(strategy)


def compare_strategies(data: ExperimentData, template: EstimatorSpec) -> CompareReport:
    """Difference in means plus each compare strategy under F and L.

    The template supplies the shared knobs (constants, HC flavor, CI level).
    The missingness-pattern method never falls back here: a pattern below its
    size threshold excludes that row and the reason goes into the notes.
    """
    shared = template.model_dump(exclude={"strategy", "model", "mp_fallback"})
    reference = estimate(data, EstimatorSpec(strategy="neyman", model="F", **shared))

    rows = []
    notes = []
    for name in strategy_registry.list_strategies(compare_only=True):
        row = CompareRow(strategy=name)
        for model in MODEL_FORMS:
            spec = EstimatorSpec(strategy=name, model=model, mp_fallback="error", **shared)
            try:
                row.fits[model] = estimate(data, spec)
            except EstimationInfeasible as e:
                logger.info(f"excluding {spec.label}: {e}")
                row.fits[model] = None
                notes.append(f"{spec.label} excluded: {e}")
        rows.append(row)
    return CompareReport(reference=reference, rows=rows, notes=notes)
