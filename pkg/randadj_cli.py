"""
CLI for regression-adjusted treatment effects with missing covariates
Run: python randadj_cli.py {analyze,compare,simulate,frt} --help

Every failure prints one line "error: <reason>" to stderr and exits with the
code carried by the error: 1 input, 2 estimation infeasible, 3 internal.
"""
import argparse
import sys
from pathlib import Path
from typing import List, Literal, Optional, Union

from loguru import logger
from pydantic import BaseModel, ValidationError, field_validator, model_validator

from core.config import settings
from core.errors import InputError, RandAdjError
from dataset.csv_io import ColumnRoles, load_csv
from designs.cluster import cluster_total_level, cluster_unit_level
from designs.stratified import StratifiedPlan, stratified
from estimators.compare import compare_strategies
from estimators.dispatch import estimate
from estimators.inference import frt_studentized
from estimators.models import EstimatorSpec
from services.docx_renderer import render_compare_docx
from services.table_renderer import (
    compare_frame,
    render_compare,
    render_estimate,
    render_frt,
    render_mc_summary,
    result_frame,
)
from simulation.monte_carlo import monte_carlo
from simulation.populations import SCENARIOS, gen_scenario

SIMULATED_STRATEGIES = ("cc", "ccov", "imp", "mim", "mp")
CONSTANT_POLICIES = ("zeros", "means", "debias")


# --- Logging ---
def setup_logging():
    logger.remove()
    logger.add(
        sys.stderr,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan> - <level>{message}</level>",
        level=settings.log_level,
    )
    if settings.log_file:
        logger.add(settings.log_file, rotation="10 MB", retention="7 days", level=settings.log_level)


# --- Run configuration ---
class RunConfig(BaseModel):
    """Validated command line; built before any computation."""

    command: Literal["analyze", "compare", "simulate", "frt"]
    input: Optional[Path] = None
    outcome: Optional[str] = None
    treatment: Optional[str] = None
    covariates: str = "rest"
    cluster: Optional[str] = None
    stratum: Optional[str] = None
    cluster_level: Literal["unit", "total"] = "unit"

    strategy: str = "mim"
    model: Literal["F", "L"] = "L"
    impute_const: Union[Literal["zeros", "means", "debias"], List[float]] = "zeros"
    hc: Literal["hc0", "hc1"] = settings.hc_flavor
    mp_fallback: Literal["error", "neyman", "mim"] = settings.mp_fallback
    ci: float = settings.ci_level

    frt_draws: int = 0
    seed: int = settings.default_seed
    threads: int = settings.threads

    scenario: Optional[str] = None
    n: int = 1000
    reps: int = 1000

    out: Optional[Path] = None
    dump: Optional[Path] = None
    docx: Optional[Path] = None

    @field_validator("impute_const", mode="before")
    @classmethod
    def parse_constants(cls, value):
        if isinstance(value, str) and value.strip().lower() not in CONSTANT_POLICIES:
            try:
                return [float(v) for v in value.split(",")]
            except ValueError:
                raise ValueError(f"--impute-const must be one of {CONSTANT_POLICIES} or numbers, got '{value}'")
        return value.strip().lower() if isinstance(value, str) else value

    @model_validator(mode="after")
    def check_required(self):
        if self.command == "simulate":
            if self.scenario not in SCENARIOS:
                raise ValueError(f"simulate needs --scenario in {SCENARIOS}")
            if self.reps < 2:
                raise ValueError(f"--reps must be >= 2, got {self.reps}")
        else:
            missing = [flag for flag, value in (("input", self.input), ("--outcome", self.outcome),
                                                ("--treatment", self.treatment)) if value is None]
            if missing:
                raise ValueError(f"{self.command} needs {', '.join(missing)}")
        if self.dump and not self.out:
            raise ValueError("--dump needs --out for the summary")
        if self.cluster and self.stratum:
            raise ValueError("--cluster and --stratum cannot be combined")
        if self.command == "frt" and self.frt_draws < 1:
            self.frt_draws = settings.frt_draws
        if not 0 < self.ci < 1:
            raise ValueError(f"--ci must be in (0, 1), got {self.ci}")
        if self.threads < 1:
            raise ValueError("--threads must be >= 1")
        return self

    def spec(self, strategy: Optional[str] = None, model: Optional[str] = None) -> EstimatorSpec:
        return EstimatorSpec(
            strategy=strategy or self.strategy,
            model=model or self.model,
            constants=self.impute_const,
            hc_flavor=self.hc,
            mp_fallback=self.mp_fallback,
            ci_level=self.ci,
        )

    def roles(self) -> ColumnRoles:
        return ColumnRoles(
            outcome=self.outcome,
            treatment=self.treatment,
            covariates=self.covariates,
            cluster=self.cluster,
            stratum=self.stratum,
        )


class _Parser(argparse.ArgumentParser):
    """Usage errors become InputError so they share the one-line format and exit code 1."""

    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="randadj",
        description="Average treatment effects in randomized experiments with missing covariates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def data_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("input", type=Path, help="CSV file with a header row")
        p.add_argument("--outcome", required=True)
        p.add_argument("--treatment", required=True)
        p.add_argument("--covariates", default="rest", help='comma list or "rest"')
        p.add_argument("--cluster", help="cluster label column (cluster randomization)")
        p.add_argument("--stratum", help="stratum label column (stratified randomization)")

    def spec_flags(p: argparse.ArgumentParser, with_strategy: bool = True) -> None:
        if with_strategy:
            p.add_argument("--strategy", default="mim")
            p.add_argument("--model", choices=["F", "L"], default="L")
            p.add_argument("--mp-fallback", choices=["error", "neyman", "mim"], default=settings.mp_fallback)
        p.add_argument("--impute-const", default="zeros", help="zeros | means | debias | v1,v2,...")
        p.add_argument("--hc", choices=["hc0", "hc1"], default=settings.hc_flavor)
        p.add_argument("--ci", type=float, default=settings.ci_level)

    analyze = sub.add_parser("analyze", help="estimate one strategy on a CSV")
    data_flags(analyze)
    spec_flags(analyze)
    analyze.add_argument("--cluster-level", choices=["unit", "total"], default="unit")
    analyze.add_argument("--frt-draws", type=int, default=0, help="also run the randomization test")
    analyze.add_argument("--seed", type=int, default=settings.default_seed)
    analyze.add_argument("--threads", type=int, default=settings.threads)
    analyze.add_argument("--out", type=Path, help="write the result as CSV")

    compare = sub.add_parser("compare", help="every strategy under F and L, side by side")
    data_flags(compare)
    spec_flags(compare, with_strategy=False)
    compare.add_argument("--out", type=Path, help="write the table as CSV")
    compare.add_argument("--docx", type=Path, help="write the table as a Word document")

    frt = sub.add_parser("frt", help="studentized Fisher randomization test")
    data_flags(frt)
    spec_flags(frt)
    frt.add_argument("--frt-draws", type=int, default=settings.frt_draws)
    frt.add_argument("--seed", type=int, default=settings.default_seed)
    frt.add_argument("--threads", type=int, default=settings.threads)

    simulate = sub.add_parser("simulate", help="Monte Carlo over a simulated population")
    simulate.add_argument("--scenario", required=True, choices=list(SCENARIOS))
    simulate.add_argument("--n", type=int, default=1000)
    simulate.add_argument("--reps", type=int, default=1000)
    simulate.add_argument("--seed", type=int, default=settings.default_seed)
    simulate.add_argument("--threads", type=int, default=settings.threads)
    simulate.add_argument("--impute-const", default="zeros")
    simulate.add_argument("--hc", choices=["hc0", "hc1"], default=settings.hc_flavor)
    simulate.add_argument("--mp-fallback", choices=["error", "neyman", "mim"], default=settings.mp_fallback)
    simulate.add_argument("--ci", type=float, default=settings.ci_level)
    simulate.add_argument("--out", type=Path, help="summary CSV")
    simulate.add_argument("--dump", type=Path, help="replicate-level CSV")
    return parser


# --- Subcommands ---
def _estimate(config: RunConfig, data):
    spec = config.spec()
    if config.cluster:
        run = cluster_total_level if config.cluster_level == "total" else cluster_unit_level
        return run(data, spec)
    if config.stratum:
        return stratified(data, StratifiedPlan.from_strata(data, spec))
    return estimate(data, spec)


def _frt(config: RunConfig, data):
    """Randomization test studentized with the same estimator `_estimate` reports."""
    return frt_studentized(
        data, config.spec(), config.frt_draws, config.seed, config.threads, estimator=lambda d: _estimate(config, d)
    )


def analyze(config: RunConfig) -> int:
    data = load_csv(config.input, config.roles())
    result = _estimate(config, data)
    print(render_estimate(result, data))
    if config.frt_draws > 0:
        frt = _frt(config, data)
        print(render_frt(frt))
    if config.out:
        config.out.parent.mkdir(parents=True, exist_ok=True)
        result_frame([result]).to_csv(config.out, index=False, lineterminator="\n", float_format="%.10g")
    return 0


def compare(config: RunConfig) -> int:
    data = load_csv(config.input, config.roles())
    report = compare_strategies(data, config.spec(strategy="neyman", model="F"))
    print(render_compare(report))
    if config.out:
        config.out.parent.mkdir(parents=True, exist_ok=True)
        compare_frame(report).to_csv(config.out, index=False, lineterminator="\n", float_format="%.10g")
    if config.docx:
        config.docx.parent.mkdir(parents=True, exist_ok=True)
        config.docx.write_bytes(render_compare_docx(report))
    return 0


def frt(config: RunConfig) -> int:
    data = load_csv(config.input, config.roles())
    print(render_frt(_frt(config, data)))
    return 0


def simulate(config: RunConfig) -> int:
    pop = gen_scenario(config.scenario, config.n, config.seed)
    specs = [config.spec(strategy="neyman", model="F")]
    specs.extend(config.spec(strategy=s, model=m) for s in SIMULATED_STRATEGIES for m in ("F", "L"))
    summary = monte_carlo(pop, specs, config.reps, config.seed, config.threads)
    print(render_mc_summary(summary))
    if config.out:
        summary.write(config.out, config.dump)
    return 0


COMMANDS = {"analyze": analyze, "compare": compare, "frt": frt, "simulate": simulate}


def main(argv: Optional[List[str]] = None) -> int:
    setup_logging()
    try:
        args = vars(build_parser().parse_args(argv))
        config = RunConfig(**{k: v for k, v in args.items() if v is not None})
        logger.info(f"randadj {config.command}")
        return COMMANDS[config.command](config)
    except ValidationError as e:
        reason = "; ".join(err["msg"] for err in e.errors())
        print(f"error: {reason}", file=sys.stderr)
        return InputError.exit_code
    except RandAdjError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception("Unexpected failure")
        print(f"error: internal: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
