import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import factories as F
import oracles as O
from wrmc.exact import build_p_single, kappa_of
from wrmc.model import (
    AlphaBarker,
    BoltzmannKappa,
    ExplicitRho,
    Metropolis,
    MetropolisKappa,
    ModelError,
    ModelValidationError,
    MultiProposalKernel,
    MultiProposalModel,
    SingleProposalModel,
    StateSpace,
    acceptance_matrix,
    function_from_file,
    load_model,
    model_to_dict,
    pair_embedding,
    parse_model,
    state_function,
    validate_model,
)

CE_FILE = {
    "states": ["a", "b", "c"],
    "pi": ["6/10", "3/10", "1/10"],
    "single": {
        "Q": [["13/120", "105/120", "2/120"], ["84/120", 0, "36/120"], ["12/120", "108/120", 0]],
        "acceptance": {"type": "explicit", "rho": [[1, "4/10", 1], [1, None, 1], [1, 1, None]]},
    },
}


def test_counterexample_file_is_valid():
    model = load_model(json.dumps(CE_FILE))
    report = validate_model(model)
    assert report.ok
    assert report["detailed_balance"].residual < 1e-15
    expected = np.array([[38, 21, 1], [42, 0, 18], [6, 54, 0]]) / 60
    np.testing.assert_allclose(model.p, expected, atol=1e-15)


def test_single_state_rejected():
    with pytest.raises(ModelError):
        StateSpace(("a",))


def test_duplicate_labels_rejected():
    with pytest.raises(ModelError):
        StateSpace(("a", "a"))


def test_zero_symmetry_violation():
    q = np.array([[0.5, 0.5], [0.0, 1.0]])
    model = SingleProposalModel(StateSpace(("a", "b")), np.array([0.5, 0.5]), q, Metropolis())
    report = validate_model(model)
    assert not report["q_zero_symmetry"].passed
    with pytest.raises(ModelValidationError) as err:
        load_model(json.dumps(model_to_dict(model)))
    assert err.value.report is not None


def test_non_normalized_pi():
    model = SingleProposalModel(StateSpace(("a", "b")), np.array([0.5, 0.6]), np.full((2, 2), 0.5), Metropolis())
    assert not validate_model(model)["pi_normalized"].passed


def test_symmetric_uniform_metropolis_accepts_everything():
    q = np.array([[0.2, 0.5, 0.3], [0.5, 0.1, 0.4], [0.3, 0.4, 0.3]])
    model = SingleProposalModel(StateSpace(("a", "b", "c")), np.full(3, 1 / 3), q, Metropolis())
    assert np.all(model.rho == 1.0)
    assert validate_model(model)["detailed_balance"].residual == 0.0
    np.testing.assert_array_equal(model.p, q)


def test_alpha_barker_bound_enforced():
    # u = pi(b)/pi(a) = 4, so 1.5 * 4 / 5 > 1
    q = np.array([[0.0, 1.0], [1.0, 0.0]])
    model = SingleProposalModel(StateSpace(("a", "b")), np.array([0.2, 0.8]), q, AlphaBarker(1.5))
    report = validate_model(model)
    assert not report.ok
    assert not report["alpha_bound"].passed


def test_alpha_out_of_range():
    with pytest.raises(ModelError):
        AlphaBarker(2.0)
    with pytest.raises(ModelError):
        AlphaBarker(0.0)


def test_explicit_rho_irreversible_rejected():
    q = np.full((2, 2), 0.5)
    rho = np.array([[1.0, 0.5], [0.9, 1.0]])
    model = SingleProposalModel(StateSpace(("a", "b")), np.array([0.5, 0.5]), q, ExplicitRho(rho))
    assert not validate_model(model)["detailed_balance"].passed


def test_explicit_rho_zero_on_support_rejected():
    bad = json.loads(json.dumps(CE_FILE))
    bad["single"]["acceptance"]["rho"][0][1] = 0
    with pytest.raises(ModelError):
        parse_model(json.dumps(bad))


def test_rule_with_explicit_rho_is_conflict():
    bad = json.loads(json.dumps(CE_FILE))
    bad["single"]["acceptance"]["type"] = "metropolis"
    with pytest.raises(ModelError):
        parse_model(json.dumps(bad))


def test_single_and_multi_together_rejected():
    bad = dict(CE_FILE, multi={"kernel": []})
    with pytest.raises(ModelError):
        parse_model(json.dumps(bad))


def test_reducible_chain_rejected():
    q = np.eye(3)
    model = SingleProposalModel(StateSpace(("a", "b", "c")), np.full(3, 1 / 3), q, Metropolis())
    report = validate_model(model)
    assert not report["q_irreducible"].passed


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), rule=st.sampled_from(F.SINGLE_RULES))
def test_acceptance_in_unit_interval_and_reversible(seed, rule):
    rng = np.random.default_rng(seed)
    model = F.random_single(rng, rule=rule)
    support = (model.q > 0) & ~np.eye(model.size, dtype=bool)
    rho = model.rho[support]
    assert rho.min() > 0 and rho.max() <= 1 + 1e-12
    flow = model.pi[:, None] * model.q * model.rho
    assert np.abs(flow - flow.T)[support].max() < 1e-12


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_metropolis_kappa_diagonal_nonnegative(seed):
    rng = np.random.default_rng(seed)
    model = F.random_multi(rng, rule="metropolis")
    for x, row in enumerate(model.kernel.support):
        for subset, _ in row:
            kap = kappa_of(model.pi, model.kernel, model.selection, x, subset)
            assert kap[subset.index(x)] >= -1e-15
            assert abs(kap.sum() - 1) < 1e-12


def test_acceptance_matches_gamma_formula(rng):
    for rule in (Metropolis(), AlphaBarker(0.7), AlphaBarker(1.0)):
        model = F.random_single(rng, 5, "metropolis")
        rho = acceptance_matrix(model.pi, model.q, rule)
        for x in range(5):
            for y in range(5):
                if x != y and model.q[x, y] > 0:
                    assert rho[x, y] == pytest.approx(O.rho_oracle(model.pi, model.q, rule, x, y), abs=1e-15)


def test_two_state_hand_example():
    pi = np.array([2 / 3, 1 / 3])
    q = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(build_p_single(pi, q, Metropolis()), [[0.5, 0.5], [1.0, 0.0]], atol=1e-15)


def test_boltzmann_pair_matches_barker():
    pi = np.array([0.2, 0.5, 0.3])
    kernel = MultiProposalKernel((
        (((0, 1), 0.6), ((0, 2), 0.4)),
        (((0, 1), 0.3), ((1, 2), 0.7)),
        (((0, 2), 0.5), ((1, 2), 0.5)),
    ))
    kap = kappa_of(pi, kernel, BoltzmannKappa(), 0, (0, 1))
    a, b = pi[0] * 0.6, pi[1] * 0.3
    assert kap[1] == pytest.approx(b / (a + b), abs=1e-15)
    q = np.array([[0.0, 0.6, 0.4], [0.3, 0.0, 0.7], [0.5, 0.5, 0.0]])
    barker = acceptance_matrix(pi, q, AlphaBarker(1.0))
    assert kap[1] == pytest.approx(barker[0, 1], abs=1e-15)


def test_boltzmann_uniform_symmetric_set():
    kernel = MultiProposalKernel(tuple((((0, 1, 2), 1.0),) for _ in range(3)))
    kap = kappa_of(np.full(3, 1 / 3), kernel, BoltzmannKappa(), 1, (0, 1, 2))
    np.testing.assert_allclose(kap, np.full(3, 1 / 3), atol=1e-15)


def test_metropolis_kappa_three_element_set():
    # pi(z) Q(z, A) = (1, 2, 3) / 6 over A = (0, 1, 2), starting from 0
    pi = np.array([1.0, 2.0, 3.0]) / 6
    kernel = MultiProposalKernel(tuple((((0, 1, 2), 1.0),) for _ in range(3)))
    kap = kappa_of(pi, kernel, MetropolisKappa(), 0, (0, 1, 2))
    w = pi
    expected_1 = w[1] / (max(w[1], w[0]) + w[2])
    expected_2 = w[2] / (max(w[2], w[0]) + w[1])
    np.testing.assert_allclose(kap, [1 - expected_1 - expected_2, expected_1, expected_2], atol=1e-15)
    assert np.all((kap >= 0) & (kap <= 1))


def test_multi_boltzmann_reversible():
    kernel = MultiProposalKernel((
        (((0, 1), 0.5), ((0, 2), 0.5)),
        (((0, 1), 0.5), ((1, 2), 0.5)),
        (((0, 2), 0.5), ((1, 2), 0.5)),
    ))
    model = MultiProposalModel(StateSpace(("a", "b", "c")), np.array([0.5, 0.3, 0.2]), kernel, BoltzmannKappa())
    report = validate_model(model)
    assert report.ok
    assert report["kappa_reversible"].residual < 1e-15
    assert report["p_reversible"].residual < 1e-14


def test_multi_singletons_only_is_reducible():
    kernel = MultiProposalKernel(tuple((((x,), 1.0),) for x in range(3)))
    model = MultiProposalModel(StateSpace(("a", "b", "c")), np.full(3, 1 / 3), kernel, BoltzmannKappa())
    report = validate_model(model)
    assert not report["p_irreducible"].passed


def test_kernel_set_without_start_rejected():
    kernel = MultiProposalKernel(((((1, 2), 1.0),), (((0, 1), 1.0),), (((0, 2), 1.0),)))
    model = MultiProposalModel(StateSpace(("a", "b", "c")), np.full(3, 1 / 3), kernel, BoltzmannKappa())
    assert not validate_model(model)["kernel_contains_start"].passed


def test_multi_file_roundtrip(rng):
    for rule in F.MULTI_RULES:
        model = F.random_multi(rng, 4, rule)
        again = load_model(json.dumps(model_to_dict(model)))
        np.testing.assert_allclose(again.p, model.p, atol=1e-15)


def test_single_file_roundtrip(rng):
    for rule in F.SINGLE_RULES:
        model = F.random_single(rng, 4, rule)
        again = load_model(json.dumps(model_to_dict(model)))
        np.testing.assert_allclose(again.p, model.p, atol=1e-15)


def test_explicit_multi_duplicate_entry_rejected():
    spec = {
        "states": ["a", "b"],
        "pi": [0.5, 0.5],
        "multi": {
            "kernel": [[{"set": ["a", "b"], "prob": 1}], [{"set": ["a", "b"], "prob": 1}]],
            "selection": {"type": "explicit", "table": [
                {"from": "a", "set": ["a", "b"], "kappa": [0.5, 0.5]},
                {"from": "a", "set": ["b", "a"], "kappa": [0.5, 0.5]},
                {"from": "b", "set": ["a", "b"], "kappa": [0.5, 0.5]},
            ]},
        },
    }
    with pytest.raises(ModelError, match="duplicate"):
        parse_model(json.dumps(spec))


def test_state_function_requires_every_label(ce_model, tmp_path):
    with pytest.raises(ModelError, match="missing"):
        state_function(ce_model, {"a": 1, "b": 2})
    with pytest.raises(ModelError, match="unknown"):
        state_function(ce_model, {"a": 1, "b": 2, "c": 3, "d": 4})
    path = tmp_path / "f.json"
    path.write_text(json.dumps({"a": "1/2", "b": 0, "c": -1}))
    np.testing.assert_array_equal(function_from_file(ce_model, path), [0.5, 0.0, -1.0])


def test_invalid_json():
    with pytest.raises(ModelError):
        parse_model("{not json")


def test_pair_embedding_reproduces_p(rng):
    for rule in F.SINGLE_RULES:
        model = F.random_single(rng, rule=rule)
        emb = pair_embedding(model)
        assert validate_model(emb).ok
        np.testing.assert_allclose(emb.p, model.p, atol=1e-12)
