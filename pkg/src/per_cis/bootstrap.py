"""Dependence graph of proxies given Y and label propagation from seed proxies."""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import stats

from ._config import pmap
from .dataset import Dataset
from .graph import DistributionShiftDiagram, classify_hidden, d_separated, require_valid
from .info import Binning


class ProxyClass(str, enum.Enum):
    GOOD = "good"
    BAD = "bad"
    AMBIGUOUS = "ambiguous"
    UNLABELED = "unlabeled"


def _edge(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class DependenceGraph:
    """Undirected graph on proxy names.

    ``undetermined`` holds pairs the statistical test could not decide; they
    are neither edges nor non-edges and take no part in propagation.
    """

    proxies: tuple[str, ...]
    edges: frozenset = frozenset()
    undetermined: frozenset = frozenset()

    def __post_init__(self):
        known = set(self.proxies)
        norm = lambda es: frozenset(_edge(*e) for e in es)  # noqa: E731
        edges, und = norm(self.edges), norm(self.undetermined)
        for a, b in edges | und:
            if a == b or a not in known or b not in known:
                raise ValueError(f"bad edge {a}-{b}")
        if edges & und:
            raise ValueError("an edge cannot also be undetermined")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "undetermined", und)

    def neighbors(self, v: str) -> set[str]:
        return {b if a == v else a for a, b in self.edges if v in (a, b)}

    def to_json(self) -> dict:
        return {"proxies": list(self.proxies),
                "edges": [list(e) for e in sorted(self.edges)],
                "undetermined": [list(e) for e in sorted(self.undetermined)]}

    @classmethod
    def from_json(cls, doc: Mapping) -> "DependenceGraph":
        return cls(tuple(doc["proxies"]), frozenset(tuple(e) for e in doc["edges"]),
                   frozenset(tuple(e) for e in doc.get("undetermined", ())))


def dependence_graph_oracle(dsd: DistributionShiftDiagram) -> DependenceGraph:
    """Edge between two proxies iff they are d-connected given Y.

    Every edge is checked against the structural explanation: the two proxies
    share a hidden parent, or both have a hidden parent among the causes of Y.
    """
    require_valid(dsd)
    dag, y = dsd.dag, dsd.label
    causes = set(dag.parents[y])
    edges = set()
    for a, b in itertools.combinations(dsd.proxies, 2):
        if d_separated(dag, {a}, {b}, {y}):
            continue
        pa, pb = set(dag.parents[a]), set(dag.parents[b])
        if not (pa & pb or (pa & causes and pb & causes)):
            raise AssertionError(f"edge {dag.names[a]}-{dag.names[b]} has no structural explanation")
        edges.add((dag.names[a], dag.names[b]))
    return DependenceGraph(tuple(dag.names[v] for v in dsd.proxies), frozenset(edges))


# -- statistical mode -------------------------------------------------------

@dataclass(frozen=True)
class CITest:
    """Stratified conditional-independence test configuration.

    ``method`` is ``"g"`` (per-stratum G-test, Fisher-combined) or
    ``"permutation"`` (within-stratum shuffles of the summed G statistic).
    """

    method: str = "g"
    alpha_level: float = 0.01
    min_stratum: int = 30
    binning: Binning = field(default_factory=Binning)
    n_permutations: int = 200
    seed: int = 0


def _g_stat(a: np.ndarray, b: np.ndarray) -> tuple[float, int]:
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    r, c = ai.max() + 1, bi.max() + 1
    obs = np.zeros((r, c))
    np.add.at(obs, (ai, bi), 1.0)
    exp = obs.sum(1, keepdims=True) * obs.sum(0, keepdims=True) / obs.sum()
    nz = obs > 0
    g = 2.0 * float((obs[nz] * np.log(obs[nz] / exp[nz])).sum())
    return max(g, 0.0), int((r - 1) * (c - 1))


def ci_test_pvalue(a: np.ndarray, b: np.ndarray, strata: list[np.ndarray], test: CITest, rng=None) -> float:
    """p-value for independence of discrete codes ``a`` and ``b`` within strata."""
    if test.method == "g":
        # Fisher's method on log p-values so tiny p never underflows to log(0)
        log_ps = []
        for idx in strata:
            g, df = _g_stat(a[idx], b[idx])
            if df > 0:
                log_ps.append(stats.chi2.logsf(g, df))
        if not log_ps:
            return 1.0
        return float(stats.chi2.sf(-2.0 * np.sum(log_ps), 2 * len(log_ps)))
    if test.method == "permutation":
        rng = np.random.default_rng(test.seed) if rng is None else rng
        total = lambda bb: sum(_g_stat(a[i], bb[i])[0] for i in strata)  # noqa: E731
        observed = total(b)
        hits = 0
        for _ in range(test.n_permutations):
            bb = b.copy()
            for idx in strata:
                bb[idx] = rng.permutation(b[idx])
            hits += total(bb) >= observed - 1e-12
        return (hits + 1) / (test.n_permutations + 1)
    raise ValueError(f"unknown CI test {test.method!r}")


def dependence_graph_statistical(ds: Dataset, y: str, proxies=None, test: CITest | None = None) -> DependenceGraph:
    """Edge iff the stratified CI test rejects independence given ``y`` at ``test.alpha_level``.

    Real-valued proxies are discretised with ``test.binning``. When any
    stratum is below ``test.min_stratum`` rows, every pair is undetermined.
    """
    test = test or CITest()
    proxies = [c for c in ds.names if c != y] if proxies is None else list(proxies)
    ds.require(proxies + [y])
    strata = list(ds.strata(y).values())
    if len(strata) < 2:
        raise ValueError(f"label column {y!r} needs at least two values")
    pairs = list(itertools.combinations(proxies, 2))
    if min(len(s) for s in strata) < test.min_stratum:
        return DependenceGraph(tuple(proxies), frozenset(), frozenset(pairs))
    codes = {p: test.binning.discretize(p, ds[p]) for p in proxies}

    def decide(k_pair):
        k, (a, b) = k_pair
        rng = np.random.default_rng([test.seed, k])
        return ci_test_pvalue(codes[a], codes[b], strata, test, rng) < test.alpha_level

    hits = pmap(decide, list(enumerate(pairs)))
    return DependenceGraph(tuple(proxies), frozenset(p for p, h in zip(pairs, hits) if h))


# -- propagation ------------------------------------------------------------

@dataclass(frozen=True)
class LabelState:
    labels: Mapping[str, frozenset]
    seeds: Mapping[str, ProxyClass] = field(default_factory=dict)

    def class_of(self, v: str) -> ProxyClass:
        if v in self.seeds:
            return self.seeds[v]
        lab = self.labels[v]
        if lab == {"good", "bad"}:
            return ProxyClass.AMBIGUOUS
        if lab == {"good"}:
            return ProxyClass.GOOD
        if lab == {"bad"}:
            return ProxyClass.BAD
        return ProxyClass.UNLABELED

    def classes(self) -> dict[str, ProxyClass]:
        return {v: self.class_of(v) for v in self.labels}

    def with_class(self, cls: ProxyClass) -> list[str]:
        return [v for v in self.labels if self.class_of(v) is cls]

    def to_json(self) -> dict:
        return {v: c.value for v, c in self.classes().items()}


def parse_seeds(doc: Mapping) -> dict[str, ProxyClass]:
    out = {}
    for k, v in doc.items():
        cls = v if isinstance(v, ProxyClass) else ProxyClass(str(v).lower())
        if cls is ProxyClass.UNLABELED:
            raise ValueError(f"seed {k!r} cannot be unlabeled")
        out[str(k)] = cls
    return out


def bootstrap_labels(g: DependenceGraph, seeds: Mapping[str, ProxyClass | str]) -> LabelState:
    """Spread ``good``/``bad`` labels from Good/Bad seeds to their neighbours.

    Ambiguous seeds are accepted but spread nothing. Seeds keep their class.
    """
    seeds = parse_seeds(seeds)
    unknown = set(seeds) - set(g.proxies)
    if unknown:
        raise KeyError(f"seed(s) not in the dependence graph: {', '.join(sorted(unknown))}")
    labels: dict[str, set] = {v: set() for v in g.proxies}
    for s, cls in seeds.items():
        if cls in (ProxyClass.GOOD, ProxyClass.BAD):
            for v in g.neighbors(s):
                labels[v].add(cls.value)
    return LabelState({v: frozenset(lab) for v, lab in labels.items()}, seeds)


# -- seed conditions ----------------------------------------------------------

@dataclass(frozen=True)
class SeedCondition:
    number: int
    status: str  # "pass", "fail" or "skipped"
    note: str = ""
    witnesses: tuple[str, ...] = ()
    missing: tuple[str, ...] = ()


@dataclass(frozen=True)
class SeedConditionReport:
    conditions: tuple[SeedCondition, ...]

    @property
    def passed(self) -> bool:
        return all(c.status != "fail" for c in self.conditions)

    def to_json(self) -> list[dict]:
        return [{"condition": c.number, "status": c.status, "note": c.note,
                 "witnesses": list(c.witnesses), "missing": list(c.missing)} for c in self.conditions]


def verify_seed_conditions(dsd: DistributionShiftDiagram, seeds: Mapping[str, ProxyClass | str]) -> SeedConditionReport:
    """Check the graph-level conditions under which propagation is sound.

    Condition 1 (faithfulness) cannot be read off the graph and is skipped.
    Conditions 2 and 3 need Good seeds, condition 4 needs a Bad seed below each
    collider: Ambiguous seeds spread nothing, so they cannot serve as witnesses.
    """
    seeds = parse_seeds(seeds)
    dag = dsd.dag
    name = dag.names
    hp = classify_hidden(dsd)
    y = dsd.label
    by_class = lambda cls: {dag.vid(s) for s, c in seeds.items() if c is cls}  # noqa: E731
    good_seeds, bad_seeds = by_class(ProxyClass.GOOD), by_class(ProxyClass.BAD)

    def per_hidden(number, hidden, pool, what):
        wit, miss = [], []
        for u in sorted(hidden):
            hit = sorted(set(dag.children[u]) & pool)
            (wit.extend(name[v] for v in hit) if hit else miss.append(name[u]))
        return SeedCondition(number, "fail" if miss else "pass", what, tuple(wit), tuple(miss))

    c1 = SeedCondition(1, "skipped", "faithfulness is an assumption about the distribution, not the graph")
    c2 = per_hidden(2, hp.good & set(dag.children[y]), good_seeds,
                    "a Good seed below each good hidden effect of Y")
    causes = set(dag.parents[y])
    below = set().union(*(dag.children[u] for u in causes)) if causes else set()
    hit = sorted(below & good_seeds)
    ok3 = bool(hit) or not below
    c3 = SeedCondition(3, "pass" if ok3 else "fail", "a Good seed below some cause of Y",
                       tuple(name[v] for v in hit), () if ok3 else tuple(name[u] for u in sorted(causes)))
    c4 = per_hidden(4, hp.bad, bad_seeds, "a Bad seed below each bad hidden vertex")
    return SeedConditionReport((c1, c2, c3, c4))
