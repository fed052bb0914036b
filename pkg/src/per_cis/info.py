"""Information-theoretic quantities in bits.

Exact values come from :class:`~per_cis.dropout_scm.JointTable`; the plug-in
estimator works on sampled :class:`~per_cis.dataset.Dataset` columns. The
closed forms for the dropout setting are exact only under the structural
conditions reported by :func:`closed_form_conditions`.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dataset import Dataset
from .dropout_scm import DEFAULT_CAP, DropoutScm, Invertible, JointTable, alpha_to_children, enumerate_joint
from .graph import Dag, VertexRole, d_separated


@dataclass(frozen=True)
class Tolerances:
    exact: float = 1e-9
    nonneg: float = 1e-12


TOL = Tolerances()


def _as_list(vs) -> list:
    if vs is None:
        return []
    if isinstance(vs, (str, int, np.integer)):
        return [vs]
    return list(vs)


def _disjoint(table: JointTable, *sets) -> list[tuple[int, ...]]:
    axes = [table.axes(s) for s in sets]
    seen: set[int] = set()
    for ax in axes:
        if seen & set(ax):
            raise ValueError("variable sets must be pairwise disjoint")
        seen |= set(ax)
    return axes


def _h(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def entropy(table: JointTable, a) -> float:
    return _h(table.marginal(_as_list(a)).ravel())


def conditional_entropy(table: JointTable, a, z=()) -> float:
    _disjoint(table, _as_list(a), _as_list(z))
    return entropy(table, _as_list(a) + _as_list(z)) - entropy(table, _as_list(z))


def conditional_mi(table: JointTable, a, b, z=()) -> float:
    """I(a : b | z) = H(a,z) + H(b,z) - H(a,b,z) - H(z)."""
    a, b, z = _as_list(a), _as_list(b), _as_list(z)
    _disjoint(table, a, b, z)
    return entropy(table, a + z) + entropy(table, b + z) - entropy(table, a + b + z) - entropy(table, z)


def mutual_info(table: JointTable, a, b) -> float:
    return conditional_mi(table, a, b)


def interaction_info(table: JointTable, a, b, c) -> float:
    """I(a : b : c) = I(a : b) - I(a : b | c); may be negative."""
    return conditional_mi(table, a, b) - conditional_mi(table, a, b, c)


def interaction_info_entropies(table: JointTable, a, b, c) -> float:
    """Symmetric seven-entropy form of the interaction information."""
    a, b, c = _as_list(a), _as_list(b), _as_list(c)
    _disjoint(table, a, b, c)
    H = lambda *s: entropy(table, [v for part in s for v in part])  # noqa: E731
    return H(a, b, c) + H(a) + H(b) + H(c) - H(a, b) - H(b, c) - H(c, a)


# -- exact quantities on dropout SCMs -------------------------------------

def _table(scm: DropoutScm, *sets, cap: int = DEFAULT_CAP) -> JointTable:
    vs: list[int] = []
    for s in sets:
        for v in scm.dag.vids(s):
            if v not in vs:
                vs.append(v)
    return enumerate_joint(scm, vs, cap=cap)


def context_sensitivity(scm: DropoutScm, m, x=(), cap: int = DEFAULT_CAP) -> float:
    """Exact I(Y : m | x) for a mechanism ``m`` and proxy set ``x``."""
    dsd = scm.dsd
    m = scm.dag.vid(m)
    if dsd.roles[m] is not VertexRole.MECHANISM:
        raise ValueError(f"{scm.names[m]} is not a mechanism")
    y = dsd.label
    x = scm.dag.vids(x)
    t = _table(scm, [y], [m], x, cap=cap)
    return max(conditional_mi(t, [y], [m], list(x)), 0.0)


def redundancy(scm: DropoutScm, u, x=(), cap: int = DEFAULT_CAP) -> float:
    """Exact I(u : x)."""
    u, x = scm.dag.vid(u), scm.dag.vids(x)
    if not x:
        return 0.0
    t = _table(scm, [u], x, cap=cap)
    return max(mutual_info(t, [u], list(x)), 0.0)


def closed_form_redundancy(scm: DropoutScm, u, x=(), cap: int = DEFAULT_CAP) -> float:
    """Transmission probability to ``x`` times H(u)."""
    u = scm.dag.vid(u)
    return alpha_to_children(scm, u, x) * entropy(_table(scm, [u], cap=cap), [u])


def _mechanism_edge(scm: DropoutScm, u: int) -> tuple[int, float]:
    m = scm.dsd.mechanism_of(u)
    if (m, u) not in scm.dag.edge_set:
        raise ValueError(f"closed form needs {scm.names[m]} -> {scm.names[u]}")
    return m, scm.alpha[(m, u)]


def closed_form_sensitivity_good(scm: DropoutScm, u, x=(), cap: int = DEFAULT_CAP) -> float:
    """alpha(M,U) * (1 - alpha(U, children in x)) * alpha(U,Y) * H(M) for a hidden cause."""
    from .graph import classify_hidden

    u = scm.dag.vid(u)
    if u not in classify_hidden(scm.dsd).good:
        raise ValueError(f"{scm.names[u]} is not in the good partition")
    m, a_mu = _mechanism_edge(scm, u)
    y = scm.dsd.label
    if (u, y) not in scm.dag.edge_set:
        raise ValueError(f"closed form needs {scm.names[u]} -> {scm.names[y]}")
    h_m = entropy(_table(scm, [m], cap=cap), [m])
    return a_mu * (1.0 - alpha_to_children(scm, u, x)) * scm.alpha[(u, y)] * h_m


def closed_form_sensitivity_bad(scm: DropoutScm, u, x=(), cap: int = DEFAULT_CAP) -> float:
    """alpha(U, children in x) * I(M : Y | U) for a hidden collider."""
    from .graph import classify_hidden

    u = scm.dag.vid(u)
    if u not in classify_hidden(scm.dsd).bad:
        raise ValueError(f"{scm.names[u]} is not in the bad partition")
    m = scm.dsd.mechanism_of(u)
    y = scm.dsd.label
    a = alpha_to_children(scm, u, x)
    if a == 0.0:
        return 0.0
    t = _table(scm, [m], [y], [u], cap=cap)
    return a * max(conditional_mi(t, [m], [y], [u]), 0.0)


def _null_mass(scm: DropoutScm, u: int, cap: int) -> float:
    if scm.dag.is_root(u):
        return 0.0
    return float(enumerate_joint(scm, [u], cap=cap).probs[0])


def _component_dag(scm: DropoutScm, x: Iterable[int]) -> tuple[Dag, dict[int, list[int]]]:
    """Structure in which every invertible multi-parent member of ``x`` is split.

    Returns the new DAG and, for each member of ``x``, the ids standing in for it.
    """
    dag = scm.dag
    x = set(x)
    names = list(dag.names)
    edges = [e for e in dag.edges if not (e[1] in x and len(dag.parents[e[1]]) > 1
                                          and isinstance(scm.combiner[e[1]], Invertible))]
    stand_in = {}
    for v in sorted(x):
        pa = dag.parents[v]
        if len(pa) > 1 and isinstance(scm.combiner[v], Invertible):
            stand_in[v] = []
            for p in pa:
                stand_in[v].append(len(names))
                names.append(f"{dag.names[v]}^({dag.names[p]})")
                edges.append((p, len(names) - 1))
        else:
            stand_in[v] = [v]
    return Dag(tuple(names), tuple(edges)), stand_in


def closed_form_conditions(scm: DropoutScm, u, x=(), kind: str = "redundancy",
                           cap: int = DEFAULT_CAP) -> list[str]:
    """Unmet conditions for the dropout closed form ``kind`` to be exact.

    ``kind`` is one of ``"redundancy"``, ``"good"`` or ``"bad"``. An empty
    list means the closed form equals the enumerated value.
    """
    dag, dsd = scm.dag, scm.dsd
    u, x = dag.vid(u), dag.vids(x)
    y = dsd.label
    out = []
    ch_u = set(dag.children[u])
    for v in x:
        if v in ch_u and not isinstance(scm.combiner[v], Invertible):
            out.append(f"{dag.names[v]} merges {dag.names[u]} through a lossy combiner")
    if kind == "redundancy":
        if _null_mass(scm, u, cap) > 0:
            out.append(f"{dag.names[u]} can be null")
        split, stand_in = _component_dag(scm, x)
        own, other = set(), set()
        for v in x:
            for w in stand_in[v]:
                (own if u in split.parents[w] and len(split.parents[w]) == 1 else other).add(w)
        if other and not d_separated(split, {u}, other, own):
            out.append("other proxies in x stay d-connected to the hidden vertex")
        return out
    m = dsd.mechanism_of(u)
    if (m, u) not in dag.edge_set or not dag.is_root(m):
        out.append(f"{dag.names[m]} is not a root parent of {dag.names[u]}")
    if kind == "good":
        if dag.parents[u] != (m,):
            out.append(f"{dag.names[u]} has parents besides its mechanism")
        if (u, y) not in dag.edge_set:
            out.append(f"{dag.names[u]} is not a parent of the label")
        if not isinstance(scm.combiner[y], Invertible):
            out.append("the label combines its parents lossily")
        causes = set(dag.parents[y])
        for v in x:
            if not set(dag.parents[v]) <= causes:
                out.append(f"{dag.names[v]} has a parent that is not a cause of the label")
    elif kind == "bad":
        if set(dag.parents[u]) != {m, y}:
            out.append(f"{dag.names[u]} is not a collider of the label and its mechanism")
        if _null_mass(scm, u, cap) > 0:
            out.append(f"{dag.names[u]} can be null")
        for v in x:
            if dag.parents[v] != (u,):
                out.append(f"{dag.names[v]} is not a sole-parent child of {dag.names[u]}")
    else:
        raise ValueError(f"unknown closed form {kind!r}")
    return out


# -- plug-in estimation ----------------------------------------------------

@dataclass(frozen=True)
class Binning:
    """Equal-frequency discretisation of real-valued columns.

    A column is binned when it is floating point with more than ``n_bins``
    distinct values, or when it is listed in ``columns``.
    """

    n_bins: int = 8
    columns: tuple[str, ...] = ()

    def discretize(self, name: str, col: np.ndarray) -> np.ndarray:
        col = np.asarray(col)
        real = np.issubdtype(col.dtype, np.floating) and len(np.unique(col)) > self.n_bins
        if not (real or name in self.columns):
            return np.unique(col, return_inverse=True)[1]
        edges = np.unique(np.quantile(col, np.linspace(0, 1, self.n_bins + 1)[1:-1]))
        return np.searchsorted(edges, col, side="right")


def _codes(ds: Dataset, names: Sequence[str], binning: Binning) -> np.ndarray:
    if not names:
        return np.zeros(ds.n_rows, dtype=np.int64)
    cols = np.column_stack([binning.discretize(n, ds[n]) for n in names])
    return np.unique(cols, axis=0, return_inverse=True)[1].ravel()


def _plugin_entropy(codes: np.ndarray) -> float:
    counts = np.bincount(codes)
    return _h(counts / counts.sum())


def estimate_mi(ds: Dataset, a, b, z=(), binning: Binning | None = None) -> float:
    """Plug-in I(a : b | z) in bits on discretised columns; NaN when there are no rows."""
    binning = binning or Binning()
    a, b, z = _as_list(a), _as_list(b), _as_list(z)
    if set(a) & set(b) or set(a) & set(z) or set(b) & set(z):
        raise ValueError("column sets must be pairwise disjoint")
    ds.require(a + b + z)
    if ds.n_rows == 0:
        return float("nan")
    ca, cb, cz = (_codes(ds, s, binning) for s in (a, b, z))
    joint = lambda *cs: np.unique(np.column_stack(cs), axis=0, return_inverse=True)[1].ravel()  # noqa: E731
    h = _plugin_entropy
    val = h(joint(ca, cz)) + h(joint(cb, cz)) - h(joint(ca, cb, cz)) - h(cz)
    return max(val, 0.0)


# -- queries and bound checks -----------------------------------------------

class QueryKind(str, enum.Enum):
    ENTROPY = "entropy"
    MUTUAL_INFO = "mutual_info"
    CONDITIONAL_MI = "conditional_mi"
    INTERACTION_INFO = "interaction_info"


_N_ARGS = {QueryKind.ENTROPY: 1, QueryKind.MUTUAL_INFO: 2, QueryKind.CONDITIONAL_MI: 2,
           QueryKind.INTERACTION_INFO: 3}


@dataclass(frozen=True)
class InfoQuery:
    kind: QueryKind
    args: tuple[tuple, ...]
    given: tuple = ()

    def __post_init__(self):
        want = _N_ARGS[self.kind]
        if len(self.args) != want:
            raise ValueError(f"{self.kind.value} takes {want} variable set(s) in args, got {len(self.args)};"
                             " put conditioning variables in 'given'")

    @classmethod
    def from_json(cls, doc) -> "InfoQuery":
        return cls(QueryKind(doc["kind"]), tuple(tuple(_as_list(a)) for a in doc["args"]),
                   tuple(_as_list(doc.get("given", ()))))

    def evaluate(self, scm: DropoutScm, cap: int = DEFAULT_CAP) -> float:
        t = _table(scm, *self.args, self.given, cap=cap)
        k = self.kind
        if k is QueryKind.ENTROPY:
            return conditional_entropy(t, self.args[0], self.given)
        if k in (QueryKind.MUTUAL_INFO, QueryKind.CONDITIONAL_MI):
            return conditional_mi(t, self.args[0], self.args[1], self.given)
        if self.given:
            raise ValueError("interaction information takes no conditioning set")
        return interaction_info(t, *self.args[:3])


@dataclass(frozen=True)
class BoundReport:
    """``lhs <= rhs`` check; skipped reports carry the failed precondition."""

    name: str
    lhs: float = float("nan")
    rhs: float = float("nan")
    slack: float = float("nan")
    satisfied: bool = True
    skipped: bool = False
    reason: str = ""
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "slack": self.slack,
                "satisfied": self.satisfied, "skipped": self.skipped, "reason": self.reason,
                "detail": self.detail}


def _report(name: str, lhs: float, rhs: float, detail: dict, tol: float) -> BoundReport:
    slack = rhs - lhs
    return BoundReport(name, lhs, rhs, slack, slack >= -tol, detail=detail)


def _skip(name: str, reason: str, detail: dict) -> BoundReport:
    return BoundReport(name, skipped=True, reason=reason, detail=detail)


BOUNDS = ("dpi", "dpi_entropy", "positive_ii", "applied_dpi", "collider_dpi",
          "collider_dpi_marginal", "common_cause")


def check_bound(scm: DropoutScm, name: str, tol: float = TOL.exact, cap: int = DEFAULT_CAP, **args) -> BoundReport:
    """Evaluate one named bound on one configuration of vertices.

    Arguments by bound: ``dpi``/``dpi_entropy``/``positive_ii`` take ``a, b, c``
    (and ``d`` for the DPI variants); ``applied_dpi``, ``collider_dpi`` and
    ``collider_dpi_marginal`` take hidden ``u``, proxy set ``x`` and mechanism
    set ``m_prime``; ``common_cause`` takes proxies ``vi, vj`` and hidden ``u``.
    """
    dag = scm.dag
    ids = lambda vs: sorted(dag.vids(vs))  # noqa: E731
    detail = {k: [dag.names[v] for v in ids(val)] for k, val in args.items()}

    if name in ("dpi", "dpi_entropy", "positive_ii"):
        a, b, c = ids(args["a"]), ids(args["b"]), ids(args["c"])
        d = ids(args.get("d", ()))
        if not d_separated(dag, a, c, set(b) | set(d)):
            return _skip(name, "a and c are not d-separated given b and d", detail)
        t = _table(scm, a, b, c, d, cap=cap)
        if name == "positive_ii":
            return _report(name, 0.0, interaction_info(t, a, b, c), detail, tol)
        i_ab = conditional_mi(t, a, b, d)
        i_bc = conditional_mi(t, b, c, d)
        if name == "dpi":
            return _report(name, conditional_mi(t, a, c, d), min(i_ab, i_bc), detail, tol)
        return _report(name, min(i_ab, i_bc), conditional_entropy(t, b, d), detail, tol)

    if name in ("applied_dpi", "collider_dpi", "collider_dpi_marginal"):
        dsd = scm.dsd
        u = dag.vid(args["u"])
        x = ids(args.get("x", ()))
        mp = ids(args.get("m_prime", ()))
        m, y = dsd.mechanism_of(u), dsd.label
        if m in mp:
            return _skip(name, "m_prime contains the mechanism of u", detail)
        marg_sep = d_separated(dag, {m}, {y})
        if name == "applied_dpi":
            if marg_sep or not d_separated(dag, {m}, {y}, {u}):
                return _skip(name, "u is not a non-collider between its mechanism and the label", detail)
            if not d_separated(dag, {m}, {y}, {u} | set(x) | set(mp)):
                return _skip(name, "mechanism and label not separated by u, x and m_prime", detail)
            t = _table(scm, [m], [y], [u], x, mp, cap=cap)
            return _report(name, conditional_mi(t, [m], [y], x + mp), conditional_entropy(t, [u], x), detail, tol)
        if not marg_sep or d_separated(dag, {m}, {y}, {u}):
            return _skip(name, "u is not a collider between its mechanism and the label", detail)
        xp = sorted(set(x) & set(dag.children[u]))
        rest = sorted((set(x) - set(xp)) | set(mp))
        if not xp:
            return _skip(name, "x holds no child of u", detail)
        if name == "collider_dpi":
            if not d_separated(dag, {m}, {y}, rest):
                return _skip(name, "mechanism and label connected by the non-child part of x", detail)
            if not d_separated(dag, {m}, xp, {u, y} | set(rest)):
                return _skip(name, "mechanism reaches the children of u around u", detail)
            if rest and not d_separated(dag, xp, rest, {u, y}):
                return _skip(name, "children of u not separated from the rest of x by u and y", detail)
            t = _table(scm, [m], [y], [u], x, mp, cap=cap)
            return _report(name, conditional_mi(t, [m], [y], x + mp), conditional_mi(t, [u], xp, [y]), detail, tol)
        if not d_separated(dag, xp, {y}, {u}):
            return _skip(name, "children of u in x are not separated from the label by u", detail)
        t = _table(scm, [u], [y], xp, cap=cap)
        return _report(name, conditional_mi(t, [u], xp, [y]), mutual_info(t, [u], xp), detail, tol)

    if name == "common_cause":
        vi, vj, u = dag.vid(args["vi"]), dag.vid(args["vj"]), dag.vid(args["u"])
        if d_separated(dag, {vi}, {vj}) or not d_separated(dag, {vi}, {vj}, {u}):
            return _skip(name, "u does not switch off the dependence of vi and vj", detail)
        t = _table(scm, [vi], [vj], [u], cap=cap)
        return _report(name, mutual_info(t, [vi], [vj]), mutual_info(t, [vi, vj], [u]), detail, tol)

    raise ValueError(f"unknown bound {name!r}")


def _subsets(items: Sequence[int], max_size: int) -> list[tuple[int, ...]]:
    return [s for k in range(max_size + 1) for s in itertools.combinations(items, k)]


def check_bounds(scm: DropoutScm, seed=0, per_bound: int = 8, max_set: int = 2,
                 tol: float = TOL.exact, cap: int = DEFAULT_CAP) -> list[BoundReport]:
    """Check every bound on a random sample of configurations meeting its preconditions.

    Conditioning sets of other mechanisms are sampled rather than enumerated.
    Bounds with no admissible configuration yield a single skipped report.
    """
    rng = np.random.default_rng(seed)
    dag = scm.dag
    n = len(dag)
    structural = scm.roles is not None
    reports: list[BoundReport] = []

    def sample_configs(name, configs):
        configs = list(configs)
        rng.shuffle(configs)
        found = 0
        for cfg in configs:
            if found >= per_bound:
                break
            r = check_bound(scm, name, tol=tol, cap=cap, **cfg)
            if not r.skipped:
                reports.append(r)
                found += 1
        if not found:
            reports.append(_skip(name, "no sampled configuration meets the preconditions", {}))

    triples = list(itertools.permutations(range(n), 3))
    dpi_cfgs = []
    for a, b, c in triples:
        others = [v for v in range(n) if v not in (a, b, c)]
        d = () if not others or rng.random() < 0.5 else (int(rng.choice(others)),)
        dpi_cfgs.append({"a": [a], "b": [b], "c": [c], "d": list(d)})
    sample_configs("dpi", dpi_cfgs)
    sample_configs("dpi_entropy", dpi_cfgs)
    sample_configs("positive_ii", [{"a": [a], "b": [b], "c": [c]} for a, b, c in triples])
    if not structural:
        return reports

    dsd = scm.dsd
    proxies = list(dsd.proxies)
    mechs = list(dsd.mechanisms)
    unit_cfgs = []
    for u in dsd.hidden:
        m = dsd.mechanism_of(u)
        others = [w for w in mechs if w != m]
        for x in _subsets(proxies, max_set):
            k = int(rng.integers(0, len(others) + 1))
            mp = sorted(rng.choice(others, size=k, replace=False).tolist()) if others else []
            unit_cfgs.append({"u": u, "x": list(x), "m_prime": mp})
    for name in ("applied_dpi", "collider_dpi", "collider_dpi_marginal"):
        sample_configs(name, unit_cfgs)
    cc = [{"vi": vi, "vj": vj, "u": u} for vi, vj in itertools.combinations(proxies, 2) for u in dsd.hidden]
    sample_configs("common_cause", cc)
    return reports
