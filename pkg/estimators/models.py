"""
Pydantic models for estimator specs and results

Shared by the strategies, the dispatcher, the designs package and the CLI
so that none of them import each other for types.
"""

from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

from core.config import settings
from features.missingness import BalanceReport

Strategy = Literal["neyman", "cc", "ccov", "imp", "mim", "mp", "mp_aggregate", "mc", "cim", "mim2"]
ModelForm = Literal["F", "L"]
Fallback = Literal["error", "neyman", "mim"]
HcFlavor = Literal["hc0", "hc1"]


class EstimatorSpec(BaseModel):
    """One estimator from the menu: strategy x model form plus its knobs"""
    model_config = ConfigDict(extra="forbid")

    strategy: Strategy = Field(..., description="Missing-covariate strategy")
    model: ModelForm = Field("L", description="F = additive, L = fully interacted with centered covariates")
    constants: Union[Literal["zeros", "means", "debias"], List[float]] = Field(
        "zeros", description="Imputation constants c: a policy name or an explicit vector"
    )
    hc_flavor: HcFlavor = Field(
        default_factory=lambda: settings.hc_flavor, description="Robust covariance flavor"
    )
    mp_fallback: Fallback = Field(
        default_factory=lambda: settings.mp_fallback,
        description="What to do with a pattern (or stratum) below the size thresholds",
    )
    ci_level: float = Field(default_factory=lambda: settings.ci_level, gt=0, lt=1)

    @property
    def label(self) -> str:
        if self.strategy == "neyman":
            return "neyman"
        if self.constants == "zeros":
            return f"{self.strategy}/{self.model}"
        policy = self.constants if isinstance(self.constants, str) else "c"
        return f"{self.strategy}[{policy}]/{self.model}"


class GroupDiagnostics(BaseModel):
    """Per-pattern or per-stratum fit summary"""
    label: str
    n: int
    n_treated: int
    n_control: int
    weight: float = Field(..., ge=0, le=1)
    estimate: float
    se: float
    method: str = Field(..., description="F, L, neyman or the stratum's strategy label")


class Diagnostics(BaseModel):
    n: int
    n_treated: int
    n_control: int
    n_complete_cases: int
    dropped_columns: List[str] = Field(default_factory=list)
    kept_columns: int = 0
    constants: Optional[List[float]] = None
    groups: List[GroupDiagnostics] = Field(default_factory=list)
    fallbacks: List[str] = Field(default_factory=list)
    balance: Optional[BalanceReport] = None


class EstimateResult(BaseModel):
    strategy: str
    model: str
    estimate: float
    se: float = Field(..., ge=0)
    ci: Tuple[float, float]
    p_value: float = Field(..., ge=0, le=1)
    ci_level: float
    diagnostics: Diagnostics

    @property
    def label(self) -> str:
        return self.strategy if self.strategy == "neyman" else f"{self.strategy}/{self.model}"


class FrtResult(BaseModel):
    """Studentized Fisher randomization test outcome"""
    statistic: float = Field(..., description="Observed estimate / se")
    p_value: float = Field(..., gt=0, le=1)
    draws: int
    valid_draws: int
    dropped_draws: int
    exceedances: int
