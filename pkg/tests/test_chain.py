import io

import numpy as np
import pytest
from scipy import stats

import factories as F
import oracles as O
from wrmc import rng as wrng
from wrmc.chain import ChainTrace, guarded_cumsum, run_chain, sampling_tables, simulate
from wrmc.model import Metropolis, ModelError, SingleProposalModel, StateSpace, ensure_valid


def transition_counts(states, size):
    counts = np.zeros((size, size))
    np.add.at(counts, (states[:-1], states[1:]), 1)
    return counts


def chi2_pvalue(counts, p):
    """Pooled Pearson test of observed transition counts against rows of ``p``."""
    stat, dof = 0.0, 0
    for x in range(len(p)):
        support = p[x] > 0
        assert counts[x, ~support].sum() == 0
        total = counts[x].sum()
        if total == 0 or support.sum() < 2:
            continue
        expected = total * p[x, support]
        stat += ((counts[x, support] - expected) ** 2 / expected).sum()
        dof += support.sum() - 1
    return stats.chi2.sf(stat, dof)


def test_same_inputs_same_trace(ce_model):
    a = run_chain(ce_model, 5000, seed=11)
    b = run_chain(ce_model, 5000, seed=11)
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.proposals, b.proposals)
    np.testing.assert_array_equal(a.accepted, b.accepted)
    c = run_chain(ce_model, 5000, seed=12)
    assert not np.array_equal(a.states, c.states)


def test_trace_shape_and_start(ce_model):
    trace = run_chain(ce_model, 100, seed=0, init="c")
    assert trace.n == len(trace) == 100
    assert trace.initial_state == 2
    assert trace.model_kind == "single"
    assert len(list(trace.steps)) == 100


def test_replay_single(ce_model):
    trace = run_chain(ce_model, 20_000, seed=3)
    assert trace.replay() == []
    rec = trace.step(5)
    assert rec.state == trace.states[5] and rec.next_state == trace.states[6]
    assert rec.acceptance_prob == ce_model.rho[rec.state, rec.proposal]


def test_replay_detects_tampering(ce_model):
    trace = run_chain(ce_model, 200, seed=3)
    acc = trace.acceptance_prob.copy()
    acc[7] += 1e-3
    tampered = ChainTrace(ce_model, trace.states, trace.proposals, acc, trace.accepted)
    assert tampered.replay() == [7]


def test_replay_multi(rng):
    for rule in F.MULTI_RULES:
        model = F.random_multi(rng, 5, rule)
        trace = run_chain(model, 5000, seed=9)
        assert trace.replay() == []
        for k in range(0, 5000, 499):
            rec = trace.step(k)
            assert rec.state in rec.proposal_set and rec.next_state in rec.proposal_set
            assert abs(sum(rec.selection_weights) - 1) < 1e-12


def test_deterministic_alternation():
    model = ensure_valid(SingleProposalModel(StateSpace(("a", "b")), np.array([0.5, 0.5]),
                                             np.array([[0.0, 1.0], [1.0, 0.0]]), Metropolis()))
    trace = run_chain(model, 11, seed=4, init="a")
    np.testing.assert_array_equal(trace.states, [0, 1] * 6)
    assert trace.accepted.all()


def test_empirical_frequencies(ce_model):
    n = 10**6
    trace = run_chain(ce_model, n, seed=2024)
    freq = np.bincount(trace.states[1:], minlength=3) / n
    band = 5 * 3 * np.sqrt(ce_model.pi * (1 - ce_model.pi) / n)
    assert np.all(np.abs(freq - ce_model.pi) < band)


def test_transition_counts_single(ce_model):
    trace = run_chain(ce_model, 10**6, seed=77)
    assert chi2_pvalue(transition_counts(trace.states, 3), ce_model.p) > 0.001


def test_transition_counts_multi(rng):
    model = F.random_multi(rng, 5, "metropolis")
    trace = run_chain(model, 10**6, seed=78)
    assert chi2_pvalue(transition_counts(trace.states, 5), O.transition_oracle(model)) > 0.001


def test_naive_simulator_agrees_in_distribution(rng):
    model = F.random_single(rng, 4, "explicit")
    naive = O.naive_chain(model, 20_000, np.random.default_rng(1), 0)
    fast = run_chain(model, 20_000, seed=1, init=0)
    a = np.bincount(naive, minlength=4)
    b = np.bincount(fast.states, minlength=4)
    assert stats.chi2_contingency(np.vstack([a, b]))[1] > 0.001


def test_stationary_start_distribution(ce_model):
    x0 = np.array([run_chain(ce_model, 1, seed=s).initial_state for s in range(3000)])
    counts = np.bincount(x0, minlength=3)
    assert stats.chisquare(counts, 3000 * ce_model.pi).pvalue > 0.001


def test_bad_init_and_length(ce_model):
    with pytest.raises(ModelError):
        run_chain(ce_model, 10, init="z")
    with pytest.raises(ModelError):
        run_chain(ce_model, 10, init=5)
    with pytest.raises(ValueError):
        run_chain(ce_model, 0)


def test_guarded_cumsum_skips_zero_weights():
    from wrmc._kernels import pick_many

    w = np.array([0.0, 0.3, 0.0, 0.7, 0.0])
    cum = guarded_cumsum(w)
    assert np.isinf(cum[3:]).all()
    u = np.array([0.0, 0.2999999, 0.3, 0.5, np.nextafter(1.0, 0.0)])
    picks = pick_many(cum, u)
    assert set(picks.tolist()) <= {1, 3}
    with pytest.raises(ModelError):
        guarded_cumsum(np.zeros(3))


def test_block_rows_take_n_steps(ce_model):
    """Every chain of a block takes exactly ``n`` steps."""
    sums, _ = simulate(ce_model, 50, wrng.stream(1, 2), rows=4, G=np.ones((1, 3)))
    assert sums.shape == (4, 2)
    np.testing.assert_allclose(sums[:, 0], 50)


def test_streams():
    a = wrng.stream(5, 1, 2).random(4)
    b = wrng.stream(5, 1, 2).random(4)
    c = wrng.stream(5, 1, 3).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(ValueError):
        wrng.stream(-1)
    chunks = list(wrng.uniform_chunks(wrng.stream(0), 3, wrng.CHUNK + 5))
    assert [off for off, _ in chunks] == [0, wrng.CHUNK]
    assert chunks[0][1].shape == (3, wrng.CHUNK, 2) and chunks[1][1].shape == (3, 5, 2)


def test_dump(ce_model):
    trace = run_chain(ce_model, 3, seed=0, init="a")
    buf = io.StringIO()
    trace.dump(buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == 4
    assert lines[0].startswith("0\ta\t")
    multi = run_chain(F.random_multi(np.random.default_rng(0), 3), 3, seed=0)
    buf = io.StringIO()
    multi.dump(buf)
    assert "{" in buf.getvalue()


def test_sampling_tables_cover_model(rng):
    model = F.random_multi(rng, 4, "boltzmann")
    tables = sampling_tables(model)
    for x, row in enumerate(model.kernel.support):
        assert np.isinf(tables.cumA[x, len(row) - 1])
        for k, (subset, _) in enumerate(row):
            assert tuple(tables.sets[x, k, : tables.setlen[x, k]]) == subset
