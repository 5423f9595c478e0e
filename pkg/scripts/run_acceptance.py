"""
Full-scale acceptance checks (minutes, not seconds)
Run: python scripts/run_acceptance.py [--check NAME ...] [--seed N] [--threads N]

Each check logs PASS/FAIL with the numbers behind it; the exit code is the
number of failed checks. The test suite runs desk-scale versions of the same
properties.
"""
import argparse
import itertools
import sys
import time
from pathlib import Path

import numpy as np
from loguru import logger
from scipy.stats import kstest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from core.config import settings  # noqa: E402
from dataset.experiment import ExperimentData  # noqa: E402
from designs.cluster import cluster_total_level, cluster_unit_level  # noqa: E402
from estimators.dispatch import estimate  # noqa: E402
from estimators.inference import frt_studentized  # noqa: E402
from estimators.models import EstimatorSpec  # noqa: E402
from simulation.monte_carlo import batch_mcse, monte_carlo, pooled_bias  # noqa: E402
from simulation.oracle import oracle_cc_bias, oracle_variance  # noqa: E402
from simulation.populations import (  # noqa: E402
    gen_cluster_scenario,
    gen_scenario,
    gen_treatment_dependent,
    reveal,
    with_constant_effect,
)

CONSISTENT = ("ccov", "imp", "mim", "mp")


def _spec(strategy: str, model: str = "L", **kwargs) -> EstimatorSpec:
    return EstimatorSpec(strategy=strategy, model=model, **kwargs)


def _menu(models=("F", "L")):
    specs = [_spec("neyman", "F")]
    specs.extend(_spec(s, m) for s in ("cc", *CONSISTENT) for m in models)
    return specs


def _random_data(rng: np.random.Generator, n: int, j: int, missing_rate: float) -> ExperimentData:
    x = rng.normal(size=(n, j))
    mask = rng.random((n, j)) < missing_rate
    z = rng.permutation(np.repeat([1, 0], [n // 2, n - n // 2]))
    y = x @ rng.normal(size=j) + mask.sum(axis=1) + z * (1 + x[:, 0]) + rng.normal(size=n)
    return ExperimentData(outcome=y, treatment=z, covariates=x, mask=mask)


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


# --- Checks ---


def check_invariance(seed: int, **_):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(50):
        data = _random_data(rng, 200, 4, 0.2)
        for model in ("F", "L"):
            base = estimate(data, _spec("mim", model))
            for _ in range(20):
                other = estimate(data, _spec("mim", model, constants=list(rng.normal(scale=5, size=4))))
                worst = max(worst, _rel(base.estimate, other.estimate), _rel(base.se, other.se))
    return worst <= 1e-8, f"max relative difference {worst:.2e}"


def check_equivalence(seed: int, **_):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        data = _random_data(rng, 400, 2, 0.3)
        for model in ("F", "L"):
            per_pattern = estimate(data, _spec("mp", model, mp_fallback="error"))
            aggregate = estimate(data, _spec("mp_aggregate", model))
            worst = max(worst, _rel(per_pattern.estimate, aggregate.estimate), _rel(per_pattern.se, aggregate.se))
    return worst <= 1e-8, f"max relative difference {worst:.2e}"


def check_single_covariate(seed: int, **_):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        data = _random_data(rng, 200, 1, 0.3)
        mp = estimate(data, _spec("mp", "L", mp_fallback="error"))
        mim = estimate(data, _spec("mim", "L"))
        worst = max(worst, _rel(mp.estimate, mim.estimate), _rel(mp.se, mim.se))
    return worst <= 1e-8, f"max relative difference {worst:.2e}"


def check_neyman(seed: int, **_):
    rng = np.random.default_rng(seed)
    n, n1 = 8, 4
    y0, y1 = rng.normal(size=n), rng.normal(size=n) + 1
    estimates = []
    for treated in itertools.combinations(range(n), n1):
        z = np.zeros(n, dtype=np.int8)
        z[list(treated)] = 1
        data = ExperimentData(outcome=np.where(z == 1, y1, y0), treatment=z, covariates=np.empty((n, 0)),
                              mask=np.empty((n, 0), dtype=bool))
        estimates.append(estimate(data, _spec("neyman", "F")).estimate)
    bias = abs(np.mean(estimates) - np.mean(y1 - y0))

    worst = 0.0
    for _ in range(100):
        data = _random_data(rng, 40, 1, 0.0)
        y, z = data.outcome, data.treatment == 1
        closed = ((y[z] - y[z].mean()) ** 2).sum() / z.sum() ** 2 + ((y[~z] - y[~z].mean()) ** 2).sum() / (~z).sum() ** 2
        worst = max(worst, _rel(estimate(data, _spec("neyman", "F")).se ** 2, closed))
    return bias <= 1e-12 and worst <= 1e-10, f"exhaustive bias {bias:.1e}, HC0 identity {worst:.1e}"


SCENARIO_I_SEEDS = 3


def check_scenario_i(seed: int, threads: int, **_):
    # bias gate on the mean over consecutive seeds, against the pooled MC-SE
    pops = [gen_scenario("i", 500, seed + k) for k in range(SCENARIO_I_SEEDS)]
    runs = [monte_carlo(pop, _menu(), 1000, seed + k, threads) for k, pop in enumerate(pops)]
    ok = True
    details = []
    for row in runs[0].rows:
        bias, mcse = pooled_bias(runs, row.label)
        if row.strategy in CONSISTENT:
            ok &= abs(bias) <= 3 * mcse
        details.append(f"{row.label} {bias:+.3f}({mcse:.3f})")
    cc = [r for r in runs[0].rows if r.strategy == "cc"]
    ok &= all(abs(r.bias) > 5 * r.bias_mcse for r in cc)
    bias = oracle_cc_bias(pops[0])
    ok &= bias.tau_cc < 0 < bias.tau_ic
    details.append(f"tau_cc={bias.tau_cc:.3f} tau_ic={bias.tau_ic:.3f}")
    return ok, ", ".join(details)


def _sd_gap(summary, better: str, worse: str):
    a, b = summary.row(better), summary.row(worse)
    return b.sd - a.sd, max(a.sd_mcse, b.sd_mcse)


def check_scenario_ii(seed: int, threads: int, **_):
    summary = monte_carlo(gen_scenario("ii", 500, seed), [_spec("imp"), _spec("mim")], 2000, seed, threads)
    gap, mcse = _sd_gap(summary, "mim/L", "imp/L")
    return gap >= 2 * mcse, f"SD(imp) - SD(mim) = {gap:.4f}, MC-SE {mcse:.4f}"


def check_scenario_iii(seed: int, threads: int, **_):
    specs = [_spec("neyman", "F"), _spec("ccov"), _spec("imp"), _spec("mim"), _spec("mp")]
    summary = monte_carlo(gen_scenario("iii", 10_000, seed), specs, 500, seed, threads)
    gap, mcse = _sd_gap(summary, "mp/L", "mim/L")
    ordering = ["mp/L", "mim/L", "imp/L", "ccov/L", "neyman"]
    sds = [summary.row(label) for label in ordering]
    ordered = all(a.sd <= b.sd + 2 * max(a.sd_mcse, b.sd_mcse) for a, b in zip(sds, sds[1:]))
    listing = " <= ".join(f"{r.label} {r.sd:.4f}" for r in sds)
    return gap >= 2 * mcse and ordered, f"gap {gap:.4f} (MC-SE {mcse:.4f}); {listing}"


def check_oracle(seed: int, threads: int, **_):
    pop = gen_scenario("ii", 10_000, seed)
    specs = [_spec("ccov"), _spec("imp"), _spec("mim")]
    summary = monte_carlo(pop, specs, 5000, seed, threads)
    ratios = {}
    for spec in specs:
        c = None if spec.strategy == "ccov" else np.zeros(3)
        ratios[spec.label] = pop.n * summary.row(spec.label).sd ** 2 / oracle_variance(pop, spec.strategy, "L", c)
    ok = all(0.9 <= r <= 1.1 for r in ratios.values())
    return ok, ", ".join(f"{k} {v:.3f}" for k, v in ratios.items())


def check_coverage(seed: int, threads: int, **_):
    ok = True
    details = []
    # scenario iii at the size of the efficiency check, where every pattern supports its own fit
    for which, n in (("i", 500), ("ii", 500), ("iii", 10_000)):
        summary = monte_carlo(gen_scenario(which, n, seed), [_spec(s) for s in CONSISTENT], 2000, seed, threads)
        for row in summary.rows:
            ok &= row.coverage >= 0.94
            details.append(f"{which}:{row.label} {row.coverage:.3f}")
    return ok, ", ".join(details)


def check_treatment_dependent(seed: int, threads: int, **_):
    pop = gen_treatment_dependent(2000, seed, effect_on_missingness=0.5)
    specs = [_spec("ccov"), _spec("mim"), _spec("imp"), _spec("imp", constants="debias")]
    summary = monte_carlo(pop, specs, 1000, seed, threads)
    ccov, mim = summary.row("ccov/L"), summary.row("mim/L")
    naive, debiased = summary.row("imp/L"), summary.row("imp[debias]/L")
    ok = abs(ccov.bias) <= 3 * ccov.bias_mcse and abs(mim.bias) >= 5 * mim.bias_mcse
    ok &= abs(debiased.bias) <= 0.5 * abs(naive.bias)
    return ok, (
        f"ccov {ccov.bias:+.3f}({ccov.bias_mcse:.3f}), mim {mim.bias:+.3f}({mim.bias_mcse:.3f}), "
        f"imp c=0 {naive.bias:+.3f}, imp debias {debiased.bias:+.3f}"
    )


def check_cluster(seed: int, threads: int, **_):
    rng = np.random.default_rng(seed)
    data = _random_data(rng, 200, 3, 0.2)
    singletons = ExperimentData(
        outcome=data.outcome, treatment=data.treatment, covariates=data.covariates, mask=data.mask,
        cluster_id=np.arange(data.n),
    )
    worst = 0.0
    for strategy in ("neyman", "mim"):
        model = "F" if strategy == "neyman" else "L"
        unit = estimate(data, _spec(strategy, model))
        for fit in (cluster_unit_level, cluster_total_level):
            other = fit(singletons, _spec(strategy, model))
            worst = max(worst, _rel(unit.estimate, other.estimate), _rel(unit.se, other.se))

    small = gen_cluster_scenario(8, seed, treated_share=0.5)
    clusters = np.unique(small.cluster_id)
    estimates = []
    for treated in itertools.combinations(range(len(clusters)), 4):
        z = np.isin(small.cluster_id, clusters[list(treated)]).astype(np.int8)
        estimates.append(cluster_total_level(reveal(small, z), _spec("neyman", "F")).estimate)
    bias = abs(np.mean(estimates) - small.tau)

    pop = gen_cluster_scenario(200, seed)
    total, unit = [], []
    for r in range(1000):
        data = reveal(pop, pop.draw_assignment(np.random.default_rng([seed, r])))
        total.append(cluster_total_level(data, _spec("mim")).estimate)
        unit.append(cluster_unit_level(data, _spec("mim")).estimate)
    total, unit = np.array(total), np.array(unit)
    sd = lambda v: np.std(v, ddof=1)  # noqa: E731
    slack = 2 * max(batch_mcse(total, sd, settings.mc_batches), batch_mcse(unit, sd, settings.mc_batches))
    ok = worst <= 1e-8 and bias <= 1e-12 and sd(total) <= sd(unit) + slack
    return ok, (
        f"singleton diff {worst:.1e}, exhaustive bias {bias:.1e}, "
        f"SD total {sd(total):.4f} vs unit {sd(unit):.4f}"
    )


def check_frt(seed: int, threads: int, **_):
    pop = with_constant_effect(gen_scenario("i", 100, seed), 0.0)
    spec = _spec("mim")
    p_values = []
    for r in range(1000):
        data = reveal(pop, pop.draw_assignment(np.random.default_rng([seed, r])))
        p_values.append(frt_studentized(data, spec, draws=500, seed=seed + r + 1, threads=threads).p_value)
    ks = kstest(p_values, "uniform")
    return ks.pvalue >= 0.01, f"KS statistic {ks.statistic:.4f}, p={ks.pvalue:.4f}"


CHECKS = {
    "invariance": check_invariance,
    "equivalence": check_equivalence,
    "single-covariate": check_single_covariate,
    "neyman": check_neyman,
    "scenario-i": check_scenario_i,
    "scenario-ii": check_scenario_ii,
    "scenario-iii": check_scenario_iii,
    "oracle": check_oracle,
    "coverage": check_coverage,
    "treatment-dependent": check_treatment_dependent,
    "cluster": check_cluster,
    "frt": check_frt,
}


def main() -> int:
    parser = argparse.ArgumentParser(description="Full-scale acceptance checks")
    parser.add_argument("--check", action="append", choices=list(CHECKS), help="repeatable; default all")
    parser.add_argument("--seed", type=int, default=settings.default_seed)
    parser.add_argument("--threads", type=int, default=settings.threads)
    args = parser.parse_args()

    logger.remove()
    logger.add(sys.stderr, format="<level>{level: <8}</level> | {message}", level="INFO")

    failed = 0
    for name in args.check or list(CHECKS):
        start = time.perf_counter()
        ok, detail = CHECKS[name](seed=args.seed, threads=args.threads)
        elapsed = time.perf_counter() - start
        if ok:
            logger.success(f"PASS {name} ({elapsed:.1f}s): {detail}")
        else:
            failed += 1
            logger.error(f"FAIL {name} ({elapsed:.1f}s): {detail}")
    return failed


if __name__ == "__main__":
    sys.exit(main())
