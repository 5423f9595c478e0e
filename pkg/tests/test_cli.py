"""Tests for randadj_cli - argument validation, subcommands and exit codes."""
import numpy as np
import pandas as pd
import pytest

from dataset.csv_io import ColumnRoles, load_csv, write_csv
from dataset.experiment import ExperimentData
from designs.stratified import StratifiedPlan, stratified
from estimators.models import EstimatorSpec
from randadj_cli import RunConfig, main


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def _fixture(tmp_path):
    # treated 4, 6 -> 5; control 1, 3 -> 2
    return _write(tmp_path, "y,z,a\n4,1,1\n1,0,2\n6,1,NA\n3,0,4\n")


def _make_csv(tmp_path, n=200, seed=0, small_pattern=False):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    mask = np.zeros((n, 3), dtype=bool)
    mask[:, 1:] = rng.random((n, 2)) < 0.2
    if small_pattern:
        mask[:, 1:] = False
        mask[:3, 2] = True
    z = rng.permutation(np.repeat([1, 0], n // 2))
    y = x.sum(axis=1) + mask.sum(axis=1) + z + rng.normal(size=n)
    path = tmp_path / "trial.csv"
    write_csv(ExperimentData(outcome=y, treatment=z, covariates=x, mask=mask), path)
    return path


def _printed_estimate(out: str) -> str:
    return next(line.split()[1] for line in out.splitlines() if line.strip().startswith("estimate"))


# --- Run configuration ---


def test_run_config_requires_input_columns():
    with pytest.raises(ValueError):
        RunConfig(command="analyze", input="data.csv", outcome="y")


def test_run_config_parses_constant_vectors():
    config = RunConfig(command="analyze", input="d.csv", outcome="y", treatment="z", impute_const="3.5, 0,1")
    assert config.impute_const == [3.5, 0.0, 1.0]
    assert RunConfig(command="analyze", input="d.csv", outcome="y", treatment="z",
                     impute_const="Means").impute_const == "means"


def test_run_config_rejects_cluster_with_stratum():
    with pytest.raises(ValueError):
        RunConfig(command="analyze", input="d.csv", outcome="y", treatment="z", cluster="g", stratum="s")


def test_run_config_spec():
    config = RunConfig(command="analyze", input="d.csv", outcome="y", treatment="z", strategy="mp", model="F",
                       hc="hc1", mp_fallback="error", ci=0.9)
    spec = config.spec()
    assert (spec.strategy, spec.model, spec.hc_flavor, spec.mp_fallback, spec.ci_level) == ("mp", "F", "hc1", "error", 0.9)


# --- analyze ---


def test_analyze_neyman_prints_difference_in_means(tmp_path, capsys):
    code = main(["analyze", str(_fixture(tmp_path)), "--outcome", "y", "--treatment", "z", "--strategy", "neyman"])
    out = capsys.readouterr().out
    assert code == 0
    assert _printed_estimate(out) == "3.000"


def test_analyze_writes_csv(tmp_path, capsys):
    out_path = tmp_path / "res" / "result.csv"
    code = main(["analyze", str(_make_csv(tmp_path)), "--outcome", "y", "--treatment", "z", "--out", str(out_path)])
    assert code == 0
    frame = pd.read_csv(out_path)
    assert list(frame["strategy"]) == ["mim"]
    assert frame["n"].iloc[0] == 200


def test_analyze_mim_ignores_constants(tmp_path, capsys):
    path = str(_make_csv(tmp_path, seed=1))
    outputs = []
    for constants in ("3.5,0,1", "0,0,0"):
        assert main(["analyze", path, "--outcome", "y", "--treatment", "z", "--strategy", "mim",
                     "--impute-const", constants]) == 0
        out = capsys.readouterr().out
        # estimator label, estimate, s.e., CI and p-value
        outputs.append(out.splitlines()[:5])
    assert outputs[0] == outputs[1]


def test_analyze_undersized_pattern_exits_2(tmp_path, capsys):
    path = str(_make_csv(tmp_path, small_pattern=True))
    code = main(["analyze", path, "--outcome", "y", "--treatment", "z", "--strategy", "mp", "--mp-fallback", "error"])
    err = capsys.readouterr().err
    assert code == 2
    assert "error: pattern 001" in err


def test_analyze_with_randomization_test(tmp_path, capsys):
    code = main(["analyze", str(_make_csv(tmp_path)), "--outcome", "y", "--treatment", "z",
                 "--frt-draws", "19", "--seed", "3"])
    assert code == 0
    assert "Randomization test:" in capsys.readouterr().out


def test_stratified_randomization_test_uses_the_stratified_estimate(tmp_path, capsys):
    rng = np.random.default_rng(4)
    n = 120
    x = rng.normal(size=(n, 2))
    mask = np.zeros((n, 2), dtype=bool)
    mask[:, 1] = rng.random(n) < 0.2
    stratum = np.repeat([0, 1, 2], 40)
    z = np.concatenate([rng.permutation(np.repeat([1, 0], 20)) for _ in range(3)])
    y = x.sum(axis=1) + 2 * stratum + z + rng.normal(size=n)
    path = tmp_path / "strata.csv"
    write_csv(ExperimentData(outcome=y, treatment=z, covariates=x, mask=mask, stratum_id=stratum), path)

    code = main(["analyze", str(path), "--outcome", "y", "--treatment", "z", "--covariates", "x1,x2",
                 "--stratum", "stratum", "--frt-draws", "9", "--seed", "2"])
    out = capsys.readouterr().out
    assert code == 0
    data = load_csv(path, ColumnRoles(outcome="y", treatment="z", covariates="x1,x2", stratum="stratum"))
    spec = EstimatorSpec(strategy="mim", model="L")
    reported = stratified(data, StratifiedPlan.from_strata(data, spec))
    assert f"t={reported.estimate / reported.se:.3f}" in out


# --- compare ---


def test_compare_prints_reference_row_and_writes_docx(tmp_path, capsys):
    docx_path = tmp_path / "table.docx"
    code = main(["compare", str(_make_csv(tmp_path)), "--outcome", "y", "--treatment", "z", "--docx", str(docx_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert any(line.startswith("neyman") for line in out.splitlines())
    assert docx_path.read_bytes()[:2] == b"PK"


# --- simulate ---


def test_simulate_rejects_single_replicate(capsys):
    assert main(["simulate", "--scenario", "i", "--reps", "1"]) == 1
    assert "reps" in capsys.readouterr().err


@pytest.mark.slow
def test_simulate_outputs_are_byte_identical(tmp_path, capsys):
    outputs = []
    for run in range(2):
        out = tmp_path / f"run{run}" / "summary.csv"
        dump = tmp_path / f"run{run}" / "reps.csv"
        code = main(["simulate", "--scenario", "i", "--n", "100", "--reps", "4", "--seed", "7",
                     "--threads", str(run + 1), "--out", str(out), "--dump", str(dump)])
        assert code == 0
        outputs.append((out.read_bytes(), dump.read_bytes()))
    assert outputs[0] == outputs[1]


# --- Errors ---


def test_dump_without_out_is_an_input_error(tmp_path, capsys):
    assert main(["simulate", "--scenario", "i", "--reps", "3", "--dump", str(tmp_path / "r.csv")]) == 1


def test_unknown_flag_exits_1(capsys):
    assert main(["analyze", "--bogus"]) == 1
    err = capsys.readouterr().err
    assert err.strip().splitlines()[-1].startswith("error:")


def test_missing_file_exits_1(tmp_path, capsys):
    assert main(["analyze", str(tmp_path / "none.csv"), "--outcome", "y", "--treatment", "z"]) == 1


def test_unknown_strategy_exits_1(tmp_path, capsys):
    code = main(["analyze", str(_fixture(tmp_path)), "--outcome", "y", "--treatment", "z", "--strategy", "lasso"])
    assert code == 1
