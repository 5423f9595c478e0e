"""Tests for simulation.monte_carlo - reproducibility, summaries and outputs."""
from unittest.mock import patch

import numpy as np
import pytest

from core.errors import InputError, TooManyFailuresError
from estimators.models import EstimatorSpec
from simulation.monte_carlo import McSummary, batch_mcse, monte_carlo, pooled_bias
from simulation.populations import gen_scenario, gen_treatment_dependent


def _specs():
    return [
        EstimatorSpec(strategy="neyman"),
        EstimatorSpec(strategy="mim", model="L"),
        EstimatorSpec(strategy="ccov", model="F"),
    ]


# --- Runner ---


def test_results_do_not_depend_on_thread_count():
    pop = gen_scenario("ii", 120, seed=1)
    serial = monte_carlo(pop, _specs(), reps=20, seed=3, threads=1)
    parallel = monte_carlo(pop, _specs(), reps=20, seed=3, threads=4)
    assert serial.table().equals(parallel.table())
    assert serial.replicates.equals(parallel.replicates)


def test_rows_follow_spec_order():
    pop = gen_scenario("i", 100, seed=2)
    summary = monte_carlo(pop, _specs(), reps=10, seed=0)
    assert [row.label for row in summary.rows] == ["neyman", "mim/L", "ccov/F"]
    assert summary.row("mim/L").reps_ok == 10
    with pytest.raises(KeyError):
        summary.row("mp/L")


def test_summary_statistics_match_replicates():
    pop = gen_scenario("i", 100, seed=4)
    summary = monte_carlo(pop, _specs(), reps=12, seed=1)
    frame = summary.replicates[summary.replicates["label"] == "neyman"]
    row = summary.row("neyman")
    assert row.bias == pytest.approx(frame["estimate"].mean() - pop.tau)
    assert row.sd == pytest.approx(frame["estimate"].std(ddof=1))
    assert row.coverage == pytest.approx(frame["covered"].mean())
    assert row.model == "-"


def test_reps_below_two_is_an_input_error():
    with pytest.raises(InputError):
        monte_carlo(gen_scenario("i", 60, seed=0), _specs(), reps=1)


def test_empty_spec_list_is_an_input_error():
    with pytest.raises(InputError):
        monte_carlo(gen_scenario("i", 60, seed=0), [], reps=5)


def test_failing_estimator_aborts_the_run():
    pop = gen_scenario("iii", 60, seed=5)
    specs = [EstimatorSpec(strategy="mp", model="L", mp_fallback="error")]
    with patch("simulation.monte_carlo.settings") as s:
        s.default_seed = 0
        s.threads = 1
        s.mc_batches = 5
        s.mc_max_failure_share = 0.0
        with pytest.raises(TooManyFailuresError) as err:
            monte_carlo(pop, specs, reps=5)
    assert "mp/L" in str(err.value)


# --- Batch means ---


def test_batch_mcse_of_the_mean():
    values = np.arange(20.0)
    # four batch means 2, 7, 12, 17
    expected = np.std([2.0, 7.0, 12.0, 17.0], ddof=1) / 2.0
    assert batch_mcse(values, np.mean, 4) == pytest.approx(expected)


def test_batch_mcse_needs_two_batches():
    assert np.isnan(batch_mcse(np.arange(5.0), np.mean, 1))


def test_pooled_bias_averages_runs_and_shrinks_the_mcse():
    pop = gen_scenario("i", 100, seed=9)
    runs = [monte_carlo(pop, _specs(), reps=20, seed=s) for s in (1, 2, 3)]
    bias, mcse = pooled_bias(runs, "mim/L")
    rows = [run.row("mim/L") for run in runs]
    assert bias == pytest.approx(np.mean([r.bias for r in rows]))
    assert mcse == pytest.approx(np.sqrt(sum(r.bias_mcse**2 for r in rows)) / 3)
    assert mcse < max(r.bias_mcse for r in rows)


def test_pooled_bias_needs_a_run():
    with pytest.raises(InputError):
        pooled_bias([], "mim/L")


# --- Outputs ---


@pytest.mark.slow
def test_written_files_are_byte_identical_across_runs(tmp_path):
    pop = gen_scenario("ii", 80, seed=6)
    paths = []
    for run in range(2):
        summary = monte_carlo(pop, _specs(), reps=8, seed=2, threads=run + 1)
        out = tmp_path / f"run{run}" / "summary.csv"
        dump = tmp_path / f"run{run}" / "reps.csv"
        summary.write(out, dump)
        paths.append((out, dump))
    assert paths[0][0].read_bytes() == paths[1][0].read_bytes()
    assert paths[0][1].read_bytes() == paths[1][1].read_bytes()
    header = paths[0][1].read_text(encoding="utf-8").splitlines()[0]
    assert header == "rep,strategy,model,estimate,se,ci_lo,ci_hi,covered"


def test_summary_type():
    summary = monte_carlo(gen_scenario("i", 60, seed=7), _specs()[:1], reps=4, seed=0)
    assert isinstance(summary, McSummary)
    assert summary.reps == 4
    assert len(summary.replicates) == 4


# --- Treatment-dependent missingness ---


@pytest.mark.slow
def test_treatment_dependent_missingness_biases_mim_but_not_ccov():
    pop = gen_treatment_dependent(1000, seed=8, effect_on_missingness=0.8)
    specs = [
        EstimatorSpec(strategy="ccov", model="L"),
        EstimatorSpec(strategy="mim", model="L"),
        EstimatorSpec(strategy="imp", model="L"),
        EstimatorSpec(strategy="imp", model="L", constants="debias"),
    ]
    summary = monte_carlo(pop, specs, reps=200, seed=4)
    ccov, mim = summary.row("ccov/L"), summary.row("mim/L")
    naive, debiased = summary.row("imp/L"), summary.row("imp[debias]/L")
    assert abs(ccov.bias) <= 4 * ccov.bias_mcse
    assert abs(mim.bias) >= 5 * mim.bias_mcse
    assert abs(debiased.bias) <= 0.5 * abs(naive.bias)


# --- Efficiency ---


@pytest.mark.slow
def test_second_order_variant_is_no_noisier_than_indicator_method():
    # scenario iii outcomes carry M_2 * M_3 and M_2 * x terms that only the second-order design spans
    pop = gen_scenario("iii", 1000, seed=10)
    specs = [EstimatorSpec(strategy="mim", model="L"), EstimatorSpec(strategy="mim2", model="L")]
    summary = monte_carlo(pop, specs, reps=200, seed=5)
    mim, mim2 = summary.row("mim/L"), summary.row("mim2/L")
    assert mim2.sd <= mim.sd + 2 * max(mim.sd_mcse, mim2.sd_mcse)
