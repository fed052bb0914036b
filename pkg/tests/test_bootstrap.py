import numpy as np
import pytest

from per_cis.bootstrap import (CITest, DependenceGraph, ProxyClass, bootstrap_labels, dependence_graph_oracle,
                               dependence_graph_statistical, parse_seeds, verify_seed_conditions)
from per_cis.dataset import Dataset
from per_cis.dropout_scm import sample, three_proxy_scm
from per_cis.graph import (DistributionShiftDiagram, classify_hidden, classify_proxies, random_dsd,
                           seven_proxy_dsd, three_proxy_dsd)

GOOD, BAD, AMB, UNL = ProxyClass.GOOD, ProxyClass.BAD, ProxyClass.AMBIGUOUS, ProxyClass.UNLABELED


def edge_names(g):
    return {frozenset(e) for e in g.edges}


def test_three_proxy_oracle_edges():
    g = dependence_graph_oracle(three_proxy_dsd())
    assert edge_names(g) == {frozenset({"V_G", "V_A"}), frozenset({"V_B", "V_A"})}


def test_disjoint_effects_have_no_edge():
    dsd = DistributionShiftDiagram.from_spec(
        {"Y": "label", "U1": "hidden", "U2": "hidden", "M1": "mechanism", "M2": "mechanism",
         "V1": "proxy", "V2": "proxy"},
        [("Y", "U1"), ("Y", "U2"), ("M1", "U1"), ("M2", "U2"), ("U1", "V1"), ("U2", "V2")])
    assert not dependence_graph_oracle(dsd).edges


def test_two_causes_are_linked_through_the_label():
    dsd = DistributionShiftDiagram.from_spec(
        {"Y": "label", "U1": "hidden", "U2": "hidden", "M1": "mechanism", "M2": "mechanism",
         "V1": "proxy", "V2": "proxy"},
        [("U1", "Y"), ("U2", "Y"), ("M1", "U1"), ("M2", "U2"), ("U1", "V1"), ("U2", "V2")])
    assert edge_names(dependence_graph_oracle(dsd)) == {frozenset({"V1", "V2"})}


def test_oracle_edges_have_structural_explanation(rng):
    # the post-check inside the oracle raises on a violation
    for _ in range(200):
        dependence_graph_oracle(random_dsd(rng, int(rng.integers(0, 3)), int(rng.integers(0, 3)) or 1,
                                           int(rng.integers(2, 7)), density=0.5, p_reversed=0.3))


def test_dependence_graph_rejects_bad_edges():
    with pytest.raises(ValueError):
        DependenceGraph(("A", "B"), frozenset({("A", "C")}))
    with pytest.raises(ValueError):
        DependenceGraph(("A", "B"), frozenset({("A", "B")}), frozenset({("B", "A")}))


def test_graph_json_round_trip():
    g = dependence_graph_oracle(seven_proxy_dsd())
    assert DependenceGraph.from_json(g.to_json()) == g


# -- propagation ----------------------------------------------------------------

def test_empty_seeds_leave_everything_unlabeled():
    state = bootstrap_labels(dependence_graph_oracle(three_proxy_dsd()), {})
    assert set(state.classes().values()) == {UNL}


def test_three_proxy_seeds_make_shared_proxy_ambiguous():
    state = bootstrap_labels(dependence_graph_oracle(three_proxy_dsd()), {"V_G": "good", "V_B": "bad"})
    assert state.classes() == {"V_G": GOOD, "V_B": BAD, "V_A": AMB}


def test_seven_proxy_seeds():
    state = bootstrap_labels(dependence_graph_oracle(seven_proxy_dsd()), {"V1": "good", "V4": "bad", "V7": "good"})
    c = state.classes()
    assert c["V2"] is GOOD
    assert {v for v, k in c.items() if k is AMB} == {"V3", "V5", "V6"}
    assert (c["V1"], c["V4"], c["V7"]) == (GOOD, BAD, GOOD)


def test_ambiguous_seed_spreads_nothing():
    state = bootstrap_labels(dependence_graph_oracle(three_proxy_dsd()), {"V_A": "ambiguous"})
    assert state.classes() == {"V_G": UNL, "V_B": UNL, "V_A": AMB}


def test_unknown_or_unlabeled_seed_raises():
    g = dependence_graph_oracle(three_proxy_dsd())
    with pytest.raises(KeyError):
        bootstrap_labels(g, {"V_Z": "good"})
    with pytest.raises(ValueError):
        parse_seeds({"V_G": "unlabeled"})
    with pytest.raises(ValueError):
        parse_seeds({"V_G": "great"})


def test_undetermined_pairs_take_no_part():
    g = DependenceGraph(("A", "B", "C"), frozenset({("A", "B")}), frozenset({("A", "C")}))
    state = bootstrap_labels(g, {"A": "good"})
    assert state.class_of("B") is GOOD and state.class_of("C") is UNL


def _true_classes(dsd):
    pp = classify_proxies(dsd)
    name = dsd.dag.names
    out = {name[v]: GOOD for v in pp.good}
    out.update({name[v]: BAD for v in pp.bad})
    out.update({name[v]: AMB for v in pp.ambiguous})
    return out


def _random_seeds(rng, truth):
    labeled = [v for v, c in truth.items() if c is not AMB]
    k = int(rng.integers(0, len(labeled) + 1))
    return {v: truth[v] for v in rng.permutation(labeled)[:k]}


def test_soundness_on_random_diagrams(rng):
    checked = misclassified = 0
    while checked < 200:
        dsd = random_dsd(rng, int(rng.integers(0, 3)), int(rng.integers(0, 3)) or 1, int(rng.integers(2, 7)),
                         density=0.5, p_reversed=0.2)
        truth = _true_classes(dsd)
        seeds = _random_seeds(rng, truth)
        if not verify_seed_conditions(dsd, seeds).passed:
            continue
        checked += 1
        classes = bootstrap_labels(dependence_graph_oracle(dsd), seeds).classes()
        for v, c in classes.items():
            if v in seeds or c is UNL:
                continue
            misclassified += c is not truth[v]
        for v, c in truth.items():
            if c is AMB and v not in seeds:
                misclassified += classes[v] is not AMB
    assert misclassified == 0


def test_monotone_in_seeds(rng):
    for _ in range(100):
        dsd = random_dsd(rng, 1, 1, int(rng.integers(2, 7)), density=0.5)
        truth = _true_classes(dsd)
        g = dependence_graph_oracle(dsd)
        seeds = _random_seeds(rng, truth)
        more = dict(seeds)
        more.update(_random_seeds(rng, truth))
        before, after = bootstrap_labels(g, seeds).classes(), bootstrap_labels(g, more).classes()
        for v in before:
            if before[v] in (GOOD, BAD):
                assert after[v] in (before[v], AMB)
            if before[v] is AMB:
                assert after[v] is AMB


# -- seed conditions --------------------------------------------------------------

def test_seven_proxy_conditions():
    dsd = seven_proxy_dsd()
    rep = verify_seed_conditions(dsd, {"V1": "good", "V4": "bad", "V7": "good"})
    assert [c.status for c in rep.conditions] == ["skipped", "pass", "pass", "pass"]
    assert rep.passed
    rep = verify_seed_conditions(dsd, {"V1": "good", "V7": "good"})
    c4 = rep.conditions[3]
    assert c4.status == "fail" and c4.missing == ("U2",)
    assert not rep.passed


def test_empty_seeds_fail_bad_condition():
    rep = verify_seed_conditions(three_proxy_dsd(), {})
    assert rep.conditions[3].status == "fail" and rep.conditions[3].missing == ("U_B",)
    assert rep.to_json()[0]["status"] == "skipped"


def test_bad_condition_needs_child_of_collider():
    # a Bad seed is present but does not hang below the collider it should witness
    dsd = DistributionShiftDiagram.from_spec(
        {"Y": "label", "U1": "hidden", "U2": "hidden", "M1": "mechanism", "M2": "mechanism",
         "V1": "proxy", "V2": "proxy"},
        [("Y", "U1"), ("M1", "U1"), ("Y", "U2"), ("M2", "U2"), ("U1", "V1"), ("U2", "V2")])
    hp = classify_hidden(dsd)
    assert len(hp.bad) == 2
    rep = verify_seed_conditions(dsd, {"V1": "bad"})
    assert rep.conditions[3].missing == ("U2",)


# -- statistical mode ---------------------------------------------------------------

def test_statistical_graph_matches_oracle_on_samples():
    oracle = dependence_graph_oracle(three_proxy_dsd())
    scm = three_proxy_scm()
    hits = 0
    for seed in range(10):
        ds = sample(scm, 50_000, seed=seed)
        g = dependence_graph_statistical(ds, "Y", ["V_G", "V_B", "V_A"])
        hits += g.edges == oracle.edges and not g.undetermined
    assert hits >= 9


def test_independent_columns_are_calibrated():
    r = np.random.default_rng(7)
    test = CITest(alpha_level=0.05)
    rejections = total = 0
    for _ in range(30):
        cols = {f"c{i}": r.integers(0, 3, 2000) for i in range(6)}
        cols["y"] = r.integers(0, 2, 2000)
        g = dependence_graph_statistical(Dataset(cols), "y", test=test)
        rejections += len(g.edges)
        total += 15
    assert 0.02 <= rejections / total <= 0.09


def test_permutation_test_agrees_on_clear_cases():
    r = np.random.default_rng(8)
    y = r.integers(0, 2, 600)
    a = r.integers(0, 3, 600)
    ds = Dataset({"a": a, "b": (a + (r.random(600) < 0.1)) % 3, "c": r.integers(0, 3, 600), "y": y})
    g = dependence_graph_statistical(ds, "y", test=CITest(method="permutation", n_permutations=199))
    assert edge_names(g) == {frozenset({"a", "b"})}


def test_small_strata_make_pairs_undetermined():
    r = np.random.default_rng(9)
    ds = Dataset({"a": r.integers(0, 2, 40), "b": r.integers(0, 2, 40), "y": np.repeat([0, 1], [30, 10])})
    g = dependence_graph_statistical(ds, "y")
    assert not g.edges and g.undetermined == {("a", "b")}


def test_statistical_mode_is_deterministic():
    ds = sample(three_proxy_scm(), 5000, seed=1)
    t = CITest(method="permutation", n_permutations=30)
    assert dependence_graph_statistical(ds, "Y", test=t) == dependence_graph_statistical(ds, "Y", test=t)


def test_single_valued_label_raises():
    ds = Dataset({"a": np.arange(50), "b": np.arange(50), "y": np.zeros(50, dtype=int)})
    with pytest.raises(ValueError):
        dependence_graph_statistical(ds, "y")
