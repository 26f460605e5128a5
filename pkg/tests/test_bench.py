import numpy as np
import pytest

import factories as F
import oracles as O
from wrmc import exact
from wrmc.bench import (
    BLOCK,
    BenchConfig,
    BudgetExceededError,
    difference_interval,
    replicate,
    run_bench,
    variance_interval,
)
from wrmc.model import Metropolis


def test_deterministic_across_workers(ce_model, ce_f):
    cfg1 = BenchConfig(n_list=(1, 10), reps=1000, seed=3, estimators=("plain", "cv", "adaptive", "ppsi"))
    cfg4 = BenchConfig(n_list=(1, 10), reps=1000, seed=3, estimators=("plain", "cv", "adaptive", "ppsi"), workers=4)
    a = run_bench(ce_model, ce_f, cfg=cfg1)
    b = run_bench(ce_model, ce_f, cfg=cfg4)
    assert a.format_csv() == b.format_csv()
    assert a.format_text() == b.format_text()


def test_reps_not_multiple_of_block(ce_model, ce_f):
    vals = replicate(ce_model, ce_f, ce_f, 3, BLOCK + 7, seed=0)
    assert len(vals["i_n"]) == BLOCK + 7
    head = replicate(ce_model, ce_f, ce_f, 3, BLOCK, seed=0)
    np.testing.assert_array_equal(vals["i_n"][:BLOCK], head["i_n"])


def test_difference_midpoint(ce_model, ce_f):
    table = run_bench(ce_model, ce_f, cfg=BenchConfig(n_list=(5, 50), reps=2000, seed=1))
    vals = replicate(ce_model, ce_f, ce_f, 50, 2000, seed=1)
    for r in table.rows:
        d = r.differences["cv"]
        assert abs((d.lo + d.hi) / 2 - (r.variances["plain"].value - r.variances["cv"].value)) < 1e-12
    r = table.row(50)
    assert r.variances["plain"].value == pytest.approx(50 * np.var(vals["i_n"], ddof=1), rel=1e-12)


def test_variance_interval_formula():
    rng = np.random.default_rng(0)
    y = rng.normal(size=5000)
    iv = variance_interval(y, 7, 0.95)
    d = y - y.mean()
    s2 = d @ d / 4999
    half = 1.959963984540054 * 7 * np.sqrt((np.mean(d**4) - s2**2) / 5000)
    assert iv.value == pytest.approx(7 * s2, rel=1e-14)
    assert iv.hi - iv.value == pytest.approx(half, rel=1e-12)
    diff = difference_interval(y, y, 7)
    assert diff.lo == diff.hi == 0


def test_coverage_of_exact_variance():
    """Nominal 95% intervals cover the enumerated exact variance in at least 90% of runs."""
    rng = np.random.default_rng(12)
    model = F.random_single(rng, 3, "metropolis")
    f = F.random_f(rng, 3)
    n = 3
    target = n * O.enumerate_estimators(model, n, f, f)["i_n"][1]
    covered = 0
    for seed in range(200):
        table = run_bench(model, f, cfg=BenchConfig(n_list=(n,), reps=2000, seed=seed))
        covered += table.row(n).variances["plain"].contains(target)
    assert covered >= 180


def test_counterexample_n1000_wr_band(ce_model, ce_f):
    table = run_bench(ce_model, ce_f, cfg=BenchConfig(n_list=(1000,), reps=10_000, seed=21, workers=4))
    cv = table.row(1000).variances["cv"]
    assert cv.lo < 0.0867 and cv.hi > 0.0811


def test_budget_guard(ce_model, ce_f, monkeypatch):
    monkeypatch.setenv("WRMC_MAX_STEPS", "1000")
    with pytest.raises(BudgetExceededError):
        run_bench(ce_model, ce_f, cfg=BenchConfig(n_list=(10,), reps=200))
    with pytest.raises(BudgetExceededError):
        run_bench(ce_model, ce_f, cfg=BenchConfig(n_list=(10,), reps=200, max_steps=5))


def test_config_validation():
    with pytest.raises(ValueError):
        BenchConfig(reps=1)
    with pytest.raises(ValueError):
        BenchConfig(level=1.0)
    with pytest.raises(ValueError):
        BenchConfig(estimators=("plain", "bogus"))
    with pytest.raises(ValueError):
        BenchConfig(estimators=("jprime",))
    assert BenchConfig(estimators=("cv",)).estimators == ("plain", "cv")


def test_csv_layout(ce_model, ce_f):
    table = run_bench(ce_model, ce_f, cfg=BenchConfig(n_list=(1, 2), reps=300, seed=0))
    lines = table.format_csv().splitlines()
    assert lines[0] == "n,est,var_lo,var_hi,diff_lo,diff_hi,reps,level,seed"
    assert len(lines) == 1 + 2 * 2
    plain = lines[1].split(",")
    assert plain[:2] == ["1", "plain"] and plain[4] == plain[5] == ""


def test_jprime_column_and_annotation(ce_model, ce_f):
    cfg = BenchConfig(n_list=(100,), reps=2000, seed=0, estimators=("plain", "jprime"), kappa_prime=Metropolis())
    table = run_bench(ce_model, ce_f, cfg=cfg)
    assert set(table.exact) == {"plain", "jprime"}
    assert table.exact["jprime"] == pytest.approx(exact.sigma2_j_prime(ce_model, ce_f, ce_f, Metropolis()))
    assert "I_n(f)+J'_n(psi)" in table.format_text()


def test_fixed_init(ce_model, ce_f):
    vals = replicate(ce_model, ce_f, ce_f, 1, 500, seed=0, init="c")
    # from c the chain moves to a or b, both with f = 1{x=c} - P(x, c) fixed
    assert set(np.round(vals["i_n"], 12)) <= {round(ce_f[0], 12), round(ce_f[1], 12)}
