import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_force_marginal
from per_cis.dataset import Dataset
from per_cis.dropout_scm import (DropoutScm, JointTable, Lossy, enumerate_joint, random_dropout_scm, sample,
                                 split_separable, three_proxy_scm)
from per_cis.graph import Dag, DistributionShiftDiagram, classify_hidden
from per_cis.info import (BOUNDS, Binning, InfoQuery, QueryKind, check_bound, check_bounds,
                          closed_form_conditions, closed_form_redundancy, closed_form_sensitivity_bad,
                          closed_form_sensitivity_good, conditional_entropy, conditional_mi,
                          context_sensitivity, entropy, estimate_mi, interaction_info,
                          interaction_info_entropies, mutual_info, redundancy)


def table(probs, names=None):
    probs = np.asarray(probs, dtype=float)
    names = names or tuple("ABCDEFG"[: probs.ndim])
    return JointTable(tuple(range(probs.ndim)), tuple(names), probs, (False,) * probs.ndim)


def random_table(rng, shape):
    p = rng.random(shape) ** 3
    return table(p / p.sum())


# -- table quantities ---------------------------------------------------------

def test_entropy_examples():
    assert entropy(table(np.full(4, 0.25)), ["A"]) == pytest.approx(2.0)
    assert entropy(table([0.0, 1.0, 0.0]), ["A"]) == 0.0
    bern = -.25 * math.log2(.25) - .75 * math.log2(.75)
    assert entropy(table([0.25, 0.75]), ["A"]) == pytest.approx(bern, abs=1e-12)
    assert bern == pytest.approx(0.811278, abs=1e-6)


def test_unknown_variable_raises():
    with pytest.raises(KeyError):
        entropy(table([0.5, 0.5]), ["Z"])


def test_overlapping_sets_raise():
    t = table(np.full((2, 2), 0.25))
    with pytest.raises(ValueError):
        conditional_mi(t, ["A"], ["A", "B"])


def test_conditional_mi_examples():
    assert mutual_info(table(np.full((2, 3), 1 / 6)), ["A"], ["B"]) == pytest.approx(0.0, abs=1e-12)
    assert mutual_info(table(np.eye(2) / 2), ["A"], ["B"]) == pytest.approx(1.0)


def test_markov_chain_conditional_independence():
    scm = DropoutScm.build(
        Dag.from_names("ABC", [("A", "B"), ("B", "C")]),
        {("A", "B"): 1.0, ("B", "C"): 1.0}, {"A": [0.3, 0.7]})
    t = enumerate_joint(scm, ["A", "B", "C"])
    assert conditional_mi(t, ["A"], ["C"], ["B"]) == pytest.approx(0.0, abs=1e-12)


def test_xor_interaction_is_minus_one():
    p = np.zeros((2, 2, 2))
    for a, b in itertools.product((0, 1), repeat=2):
        p[a, b, a ^ b] = 0.25
    assert interaction_info(table(p), ["A"], ["B"], ["C"]) == pytest.approx(-1.0)


def test_common_cause_copies_give_source_entropy():
    dist = np.array([0.2, 0.5, 0.3])
    p = np.zeros((3, 3, 3))
    for s in range(3):
        p[s, s, s] = dist[s]
    t = table(p)
    assert interaction_info(t, ["A"], ["B"], ["C"]) == pytest.approx(entropy(t, ["A"]), abs=1e-12)


def test_pair_independent_of_third_matches_expansion():
    p = np.einsum("ab,c->abc", np.array([[0.3, 0.1], [0.2, 0.4]]), np.array([0.6, 0.4]))
    t = table(p)
    ii = interaction_info(t, ["A"], ["B"], ["C"])
    assert ii == pytest.approx(mutual_info(t, ["A"], ["B"]) - conditional_mi(t, ["A"], ["B"], ["C"]))
    assert ii == pytest.approx(interaction_info_entropies(t, ["A"], ["B"], ["C"]), abs=1e-12)


shapes = st.lists(st.integers(2, 3), min_size=3, max_size=4)


@settings(max_examples=150, deadline=None)
@given(shapes, st.integers(0, 2**32 - 1))
def test_chain_rule_and_nonnegativity(shape, seed):
    t = random_table(np.random.default_rng(seed), shape)
    a, rest = ["A"], list(t.names[1:])
    head, tail = rest[:1], rest[1:]
    lhs = mutual_info(t, a, rest)
    rhs = mutual_info(t, a, head) + conditional_mi(t, a, tail, head)
    assert lhs == pytest.approx(rhs, abs=1e-9)
    for v in t.names:
        assert entropy(t, [v]) >= -1e-12
        assert entropy(t, [v]) <= math.log2(t.probs.shape[t.names.index(v)]) + 1e-12
    for x, y in itertools.permutations(t.names, 2):
        z = [v for v in t.names if v not in (x, y)]
        assert conditional_mi(t, [x], [y], z) >= -1e-12


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(2, 3), min_size=3, max_size=3), st.integers(0, 2**32 - 1))
def test_interaction_symmetry(shape, seed):
    t = random_table(np.random.default_rng(seed), shape)
    ref = interaction_info_entropies(t, ["A"], ["B"], ["C"])
    for perm in itertools.permutations(["A", "B", "C"]):
        assert interaction_info(t, *[[v] for v in perm]) == pytest.approx(ref, abs=1e-9)


def test_conditional_entropy_difference():
    t = random_table(np.random.default_rng(3), (2, 3, 2))
    assert conditional_entropy(t, ["A"], ["B"]) == pytest.approx(entropy(t, ["A", "B"]) - entropy(t, ["B"]))


# -- SCM quantities -------------------------------------------------------------

def test_sensitivity_rewrite_holds_on_random_models(rng):
    for _ in range(40):
        scm = random_dropout_scm(rng)
        dsd = scm.dsd
        y = dsd.label
        for m in dsd.mechanisms:
            for k in range(3):
                for x in itertools.combinations(dsd.proxies, k):
                    t = enumerate_joint(scm, [y, m, *x])
                    x = list(x)
                    lhs = conditional_mi(t, [y], [m], x)
                    rhs = (mutual_info(t, [y], [m]) - (mutual_info(t, [y], x) if x else 0.0)
                           + (conditional_mi(t, [y], x, [m]) if x else 0.0))
                    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_enumeration_matches_brute_force_for_info(rng):
    scm = random_dropout_scm(rng, max_vertices=5, max_alphabet=3)
    vs = list(range(len(scm.dag)))
    t = enumerate_joint(scm, vs)
    np.testing.assert_allclose(t.probs, brute_force_marginal(scm, vs), atol=1e-12)


def _one_cause(a_mu, a_uv, a_uy, dist=(0.5, 0.5)):
    dsd = DistributionShiftDiagram.from_spec(
        {"M": "mechanism", "U": "hidden", "Y": "label", "V": "proxy"},
        [("M", "U"), ("U", "Y"), ("U", "V")])
    return DropoutScm.build(dsd, {("M", "U"): a_mu, ("U", "V"): a_uv, ("U", "Y"): a_uy}, {"M": list(dist)})


def _one_effect(a_uv, alphabet=2):
    dsd = DistributionShiftDiagram.from_spec(
        {"Y": "label", "M": "mechanism", "U": "hidden", "V": "proxy"},
        [("Y", "U"), ("M", "U"), ("U", "V")])
    alphas = {("Y", "U"): 0.8, ("M", "U"): 0.7, ("U", "V"): a_uv}
    dists = {"Y": np.full(alphabet, 1 / alphabet), "M": np.full(alphabet, 1 / alphabet)}
    probe = DropoutScm.build(dsd, alphas, dists)
    comb = {"U": Lossy.modular_sum(probe.contribution_sizes("U"), alphabet, never_null=True)}
    return DropoutScm.build(dsd, alphas, dists, comb)


def test_good_closed_form_worked_example():
    scm = _one_cause(0.8, 0.5, 0.9)
    exact = context_sensitivity(scm, "M", ["V"])
    assert exact == pytest.approx(0.36, abs=1e-9)
    assert closed_form_sensitivity_good(scm, "U", ["V"]) == pytest.approx(exact, abs=1e-9)
    assert closed_form_conditions(scm, "U", ["V"], "good") == []


def test_good_closed_form_limits():
    assert context_sensitivity(_one_cause(0.8, 1.0, 0.9), "M", ["V"]) == pytest.approx(0.0, abs=1e-12)
    assert context_sensitivity(_one_cause(0.0, 0.5, 0.9), "M", ["V"]) == pytest.approx(0.0, abs=1e-12)
    scm = _one_cause(0.7, 0.5, 0.6, dist=(0.2, 0.3, 0.5))
    h_m = entropy(enumerate_joint(scm, ["M"]), ["M"])
    assert context_sensitivity(scm, "M") == pytest.approx(0.7 * 0.6 * h_m, abs=1e-9)


def test_bad_closed_form_examples():
    scm = _one_effect(0.75)
    t = enumerate_joint(scm, ["M", "Y", "U"])
    i_my_u = conditional_mi(t, ["M"], ["Y"], ["U"])
    assert i_my_u > 0.1
    assert context_sensitivity(scm, "M", ["V"]) == pytest.approx(0.75 * i_my_u, abs=1e-9)
    assert closed_form_sensitivity_bad(scm, "U", ["V"]) == pytest.approx(0.75 * i_my_u, abs=1e-9)
    assert context_sensitivity(_one_effect(1.0), "M", ["V"]) == pytest.approx(i_my_u, abs=1e-9)
    assert context_sensitivity(scm, "M", []) == pytest.approx(0.0, abs=1e-12)
    assert closed_form_sensitivity_bad(scm, "U", []) == 0.0


def test_closed_forms_reject_wrong_partition():
    with pytest.raises(ValueError):
        closed_form_sensitivity_bad(_one_cause(0.8, 0.5, 0.9), "U", ["V"])
    with pytest.raises(ValueError):
        closed_form_sensitivity_good(_one_effect(0.5), "U", ["V"])


def test_context_sensitivity_zero_when_separated():
    scm = three_proxy_scm()
    assert context_sensitivity(scm, "M_B", []) == pytest.approx(0.0, abs=1e-12)
    assert context_sensitivity(scm, "M_B", ["V_G"]) == pytest.approx(0.0, abs=1e-12)
    assert context_sensitivity(scm, "M_B", ["V_B"]) > 1e-4
    with pytest.raises(ValueError):
        context_sensitivity(scm, "U_B", [])


def test_redundancy_examples():
    dsd = DistributionShiftDiagram.from_spec(
        {"M": "mechanism", "U": "hidden", "Y": "label", "V1": "proxy", "V2": "proxy"},
        [("M", "U"), ("U", "Y"), ("U", "V1"), ("U", "V2")])
    scm = DropoutScm.build(dsd, {("M", "U"): 1.0, ("U", "Y"): 0.5, ("U", "V1"): 0.5, ("U", "V2"): 0.5},
                           {"M": [0.1, 0.2, 0.7]})
    h = entropy(enumerate_joint(scm, ["U"]), ["U"])
    assert redundancy(scm, "U", []) == 0.0
    assert redundancy(scm, "U", ["V1", "V2"]) == pytest.approx(0.75 * h, abs=1e-9)
    assert closed_form_redundancy(scm, "U", ["V1", "V2"]) == pytest.approx(0.75 * h, abs=1e-9)
    perfect = DropoutScm.build(dsd, {("M", "U"): 1.0, ("U", "Y"): 0.5, ("U", "V1"): 1.0, ("U", "V2"): 0.5},
                               {"M": [0.1, 0.2, 0.7]})
    assert redundancy(perfect, "U", ["V1"]) == pytest.approx(h, abs=1e-9)


def test_closed_forms_on_random_models(rng):
    """Every closed form equals enumeration wherever its conditions hold."""
    counts = {"redundancy": 0, "good": 0, "bad": 0}
    for _ in range(150):
        scm = random_dropout_scm(rng)
        dsd = scm.dsd
        hp = classify_hidden(dsd)
        for u in dsd.hidden:
            for k in range(3):
                for x in itertools.combinations(dsd.proxies, k):
                    if not closed_form_conditions(scm, u, x, "redundancy"):
                        counts["redundancy"] += 1
                        assert redundancy(scm, u, x) == pytest.approx(closed_form_redundancy(scm, u, x), abs=1e-9)
                    kind = "good" if u in hp.good else "bad"
                    if closed_form_conditions(scm, u, x, kind):
                        continue
                    counts[kind] += 1
                    m = dsd.mechanism_of(u)
                    exact = context_sensitivity(scm, m, x)
                    cf = (closed_form_sensitivity_good if kind == "good" else closed_form_sensitivity_bad)(scm, u, x)
                    assert exact == pytest.approx(cf, abs=1e-9)
    assert min(counts.values()) >= 20, counts


def test_closed_form_conditions_matter():
    # U can be null when M drops out, so the dropout redundancy formula overshoots
    scm = _one_cause(0.6, 0.5, 0.9)
    assert closed_form_conditions(scm, "U", ["V"], "redundancy")
    assert redundancy(scm, "U", ["V"]) < closed_form_redundancy(scm, "U", ["V"]) - 1e-3


# -- estimation -------------------------------------------------------------------

def test_estimate_mi_correlated_and_independent():
    r = np.random.default_rng(0)
    a = r.integers(0, 2, 100_000)
    assert abs(estimate_mi(Dataset({"a": a, "b": a.copy()}), "a", "b") - 1.0) <= 0.02
    ds = Dataset({"a": a, "b": r.integers(0, 2, 100_000)})
    assert estimate_mi(ds, "a", "b") <= 0.01


def test_estimate_mi_is_stratum_average():
    r = np.random.default_rng(1)
    z = np.repeat([0, 1], [3000, 1000])
    a = r.integers(0, 3, z.size)
    b = np.where(z == 1, a, r.integers(0, 3, z.size))
    ds = Dataset({"a": a, "b": b, "z": z})
    parts = [estimate_mi(ds.take(np.flatnonzero(z == k)), "a", "b") for k in (0, 1)]
    assert estimate_mi(ds, "a", "b", "z") == pytest.approx(0.75 * parts[0] + 0.25 * parts[1], abs=1e-12)


def test_estimate_mi_empty_is_nan():
    ds = Dataset({"a": np.array([], dtype=int), "b": np.array([], dtype=int)})
    assert math.isnan(estimate_mi(ds, "a", "b"))


def test_estimate_mi_converges_on_samples():
    scm = three_proxy_scm()
    exact = mutual_info(enumerate_joint(scm, ["V_G", "Y"]), ["V_G"], ["Y"])
    ds = sample(scm, 200_000, seed=4)
    assert estimate_mi(ds, "V_G", "Y") == pytest.approx(exact, abs=0.01)


def test_binning_equal_frequency():
    col = np.random.default_rng(2).normal(size=8000)
    codes = Binning(n_bins=8).discretize("x", col)
    np.testing.assert_array_equal(np.bincount(codes), np.full(8, 1000))


# -- queries and bounds ------------------------------------------------------------

def test_info_query_round_trip():
    scm = three_proxy_scm()
    q = InfoQuery.from_json({"kind": "conditional_mi", "args": [["Y"], ["M_B"]], "given": ["V_B"]})
    assert q.kind is QueryKind.CONDITIONAL_MI
    assert q.evaluate(scm) == pytest.approx(context_sensitivity(scm, "M_B", ["V_B"]), abs=1e-12)
    h = InfoQuery.from_json({"kind": "entropy", "args": [["M_G"]]}).evaluate(scm)
    assert h == pytest.approx(1.0)


def test_bounds_hold_on_random_models(rng):
    seen = set()
    for i in range(100):
        scm = random_dropout_scm(rng)
        for r in check_bounds(scm, seed=i, per_bound=4):
            assert r.name in BOUNDS
            if not r.skipped:
                seen.add(r.name)
                assert r.satisfied, r
    assert {"dpi", "dpi_entropy", "positive_ii", "applied_dpi", "common_cause"} <= seen


def test_common_cause_bound_on_separated_ambiguous_proxy():
    split = split_separable(three_proxy_scm(), "V_A")
    r = check_bound(split, "common_cause", vi="V_G", vj="V_A^(U_G)", u="U_G")
    assert not r.skipped and r.satisfied and r.lhs > 0


def test_failed_precondition_is_skipped():
    scm = three_proxy_scm()
    r = check_bound(scm, "common_cause", vi="V_G", vj="V_A", u="U_B")
    assert r.skipped and r.satisfied and r.reason
    r = check_bound(scm, "dpi", a=["M_G"], b=["V_G"], c=["Y"])
    assert r.skipped
    with pytest.raises(ValueError):
        check_bound(scm, "nonsense")


def test_query_argument_count_is_checked():
    with pytest.raises(ValueError, match="given"):
        InfoQuery.from_json({"kind": "conditional_mi", "args": [["Y"], ["M_B"], ["V_A"]]})
    q = InfoQuery.from_json({"kind": "conditional_mi", "args": [["Y"], ["M_B"]], "given": ["V_A"]})
    assert q.evaluate(three_proxy_scm()) == pytest.approx(context_sensitivity(three_proxy_scm(), "M_B", ["V_A"]))
