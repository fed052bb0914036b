"""Dropout structural equation models over finite alphabets.

Each edge ``A -> B`` carries an invertible relabelling of ``A``'s symbols that
is transmitted with probability ``alpha`` and replaced by the null value
otherwise. A non-root vertex combines the tuple of its per-parent
contributions with either an invertible combiner (the vertex *is* the tuple)
or an explicit lossy map.

Value encoding used throughout: a root's codes are its symbols ``0..k-1``.
A non-root vertex reserves code ``0`` for null and uses ``1..card-1`` for its
symbols. Sampled datasets expose symbols, with :data:`~per_cis.dataset.NULL`
for null.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np

from .dataset import NULL, Dataset
from .graph import Dag, DistributionShiftDiagram, VertexRole

DEFAULT_CAP = 10**7


class EnumerationTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class Invertible:
    """The vertex value is the tuple of parent contributions."""


@dataclass(frozen=True)
class Lossy:
    """Explicit map from the contribution-tuple index to an output code.

    The tuple index is the C-order mixed-radix index over parents sorted by
    id, each contribution coded ``0`` for null and ``1 + symbol`` otherwise.
    Output code ``0`` is null.
    """

    table: tuple[int, ...]
    n_out: int

    def __post_init__(self):
        table = tuple(int(t) for t in self.table)
        object.__setattr__(self, "table", table)
        if self.n_out < 2:
            raise ValueError("lossy combiner needs at least one non-null output")
        if min(table) < 0 or max(table) >= self.n_out:
            raise ValueError("lossy table entries must lie in [0, n_out)")

    @classmethod
    def from_function(cls, sizes: Sequence[int], fn: Callable[[tuple[int, ...]], int], n_out: int) -> "Lossy":
        return cls(tuple(fn(t) for t in itertools.product(*(range(s) for s in sizes))), n_out)

    @classmethod
    def modular_sum(cls, sizes: Sequence[int], modulus: int, never_null: bool = False) -> "Lossy":
        """Sum of transmitted symbols modulo ``modulus``.

        With ``never_null`` the all-null tuple maps to symbol 0 instead of null.
        """
        def fn(t):
            live = [c - 1 for c in t if c > 0]
            if not live and not never_null:
                return 0
            return 1 + sum(live) % modulus
        return cls.from_function(sizes, fn, modulus + 1)


Combiner = Invertible | Lossy


@dataclass(frozen=True)
class JointTable:
    """Exact probabilities over an ordered tuple of SCM vertices."""

    variables: tuple[int, ...]
    names: tuple[str, ...]
    probs: np.ndarray
    has_null: tuple[bool, ...]

    def __post_init__(self):
        if self.probs.ndim != len(self.variables):
            raise ValueError("one table axis per variable required")
        if (self.probs < 0).any():
            raise ValueError("negative probability")
        total = float(self.probs.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"table mass {total!r} differs from 1")

    @property
    def cards(self) -> tuple[int, ...]:
        return self.probs.shape

    def axis(self, v) -> int:
        if isinstance(v, str):
            try:
                return self.names.index(v)
            except ValueError:
                raise KeyError(f"unknown variable {v!r}") from None
        try:
            return self.variables.index(int(v))
        except ValueError:
            raise KeyError(f"unknown variable {v!r}") from None

    def axes(self, vs) -> tuple[int, ...]:
        if vs is None:
            return ()
        if isinstance(vs, (str, int, np.integer)):
            vs = [vs]
        return tuple(sorted({self.axis(v) for v in vs}))

    def marginal(self, vs) -> np.ndarray:
        """Marginal over ``vs`` with axes in table order."""
        keep = self.axes(vs)
        drop = tuple(i for i in range(self.probs.ndim) if i not in keep)
        return self.probs.sum(axis=drop)

    def code(self, v, symbol) -> int:
        i = self.axis(v)
        if symbol is None:
            if not self.has_null[i]:
                raise ValueError(f"{self.names[i]} has no null value")
            return 0
        return int(symbol) + (1 if self.has_null[i] else 0)

    def prob(self, assignment: Mapping) -> float:
        """Probability of a partial assignment ``{var: symbol or None}``."""
        keep = self.axes(list(assignment))
        marg = self.marginal(list(assignment))
        idx = [0] * len(keep)
        for v, s in assignment.items():
            idx[keep.index(self.axis(v))] = self.code(v, s)
        return float(marg[tuple(idx)])


@dataclass(frozen=True)
class DropoutScm:
    """Dropout SCM on a DAG, optionally carrying distribution-shift roles."""

    dag: Dag
    alpha: Mapping[tuple[int, int], float]
    root_dist: Mapping[int, np.ndarray]
    combiner: Mapping[int, Combiner] = field(default_factory=dict)
    transforms: Mapping[tuple[int, int], tuple[int, ...]] = field(default_factory=dict)
    roles: tuple[VertexRole, ...] | None = None

    def __post_init__(self):
        dag = self.dag
        alpha = {(int(a), int(b)): float(p) for (a, b), p in self.alpha.items()}
        for e in dag.edges:
            if e not in alpha:
                raise ValueError(f"missing alpha for edge {dag.names[e[0]]} -> {dag.names[e[1]]}")
        for e, p in alpha.items():
            if e not in dag.edge_set:
                raise ValueError(f"alpha given for non-edge {e}")
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"alpha {p} outside [0, 1]")
        root_dist = {}
        for v in dag.topological_order:
            if dag.is_root(v):
                if v not in self.root_dist:
                    raise ValueError(f"root {dag.names[v]} needs a distribution")
                d = np.asarray(self.root_dist[v], dtype=float)
                if d.ndim != 1 or d.size == 0 or (d < 0).any() or abs(d.sum() - 1) > 1e-9:
                    raise ValueError(f"bad distribution for root {dag.names[v]}")
                root_dist[v] = d / d.sum()
        comb = {int(v): c for v, c in self.combiner.items()}
        for v in range(len(dag)):
            if not dag.is_root(v):
                comb.setdefault(v, Invertible())
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "root_dist", root_dist)
        object.__setattr__(self, "combiner", comb)
        object.__setattr__(self, "transforms", {(int(a), int(b)): tuple(int(i) for i in t)
                                                for (a, b), t in self.transforms.items()})
        if self.roles is not None:
            object.__setattr__(self, "roles", tuple(VertexRole(r) for r in self.roles))
        # sizes are computed in topological order; validate lossy tables and perms
        for v in dag.topological_order:
            c = comb.get(v)
            if isinstance(c, Lossy) and len(c.table) != math.prod(self.contribution_sizes(v)):
                raise ValueError(f"lossy table for {dag.names[v]} has wrong length")
        for (a, b), t in self.transforms.items():
            if sorted(t) != list(range(self.n_symbols(a))):
                raise ValueError(f"transform on {dag.names[a]} -> {dag.names[b]} is not a permutation")

    @classmethod
    def build(cls, graph: Dag | DistributionShiftDiagram, alpha: Mapping, root_dist: Mapping,
              combiner: Mapping | None = None, transforms: Mapping | None = None) -> "DropoutScm":
        """Construct from name- or id-keyed mappings."""
        if isinstance(graph, DistributionShiftDiagram):
            dag, roles = graph.dag, graph.roles
        else:
            dag, roles = graph, None

        def edge(e):
            return dag.vid(e[0]), dag.vid(e[1])

        return cls(
            dag,
            {edge(e): p for e, p in alpha.items()},
            {dag.vid(v): d for v, d in root_dist.items()},
            {dag.vid(v): c for v, c in (combiner or {}).items()},
            {edge(e): t for e, t in (transforms or {}).items()},
            roles,
        )

    # -- structure -------------------------------------------------------

    @property
    def names(self) -> tuple[str, ...]:
        return self.dag.names

    @cached_property
    def dsd(self) -> DistributionShiftDiagram:
        if self.roles is None:
            raise ValueError("this SCM carries no vertex roles")
        return DistributionShiftDiagram(self.dag, self.roles)

    def card(self, v) -> int:
        return self._cards[self.dag.vid(v)]

    def n_symbols(self, v) -> int:
        v = self.dag.vid(v)
        return self._cards[v] - (0 if self.dag.is_root(v) else 1)

    def has_null(self, v) -> bool:
        return not self.dag.is_root(v)

    def contribution_sizes(self, v) -> tuple[int, ...]:
        return tuple(self.n_symbols(p) + 1 for p in self.dag.parents[self.dag.vid(v)])

    @cached_property
    def _cards(self) -> dict[int, int]:
        cards: dict[int, int] = {}
        for v in self.dag.topological_order:
            if self.dag.is_root(v):
                cards[v] = len(self.root_dist[v])
                continue
            sizes = [cards[p] - (0 if self.dag.is_root(p) else 1) + 1 for p in self.dag.parents[v]]
            c = self.combiner[v]
            cards[v] = math.prod(sizes) if isinstance(c, Invertible) else c.n_out
        return cards

    def perm(self, a: int, b: int) -> np.ndarray:
        t = self.transforms.get((a, b))
        return np.arange(self.n_symbols(a)) if t is None else np.asarray(t)

    # -- conditional probability tables -----------------------------------

    def edge_matrix(self, a: int, b: int) -> np.ndarray:
        """``P(contribution of a to b | a)``, shape ``(card(a), n_symbols(a) + 1)``."""
        alpha = self.alpha[(a, b)]
        perm = self.perm(a, b)
        offset = 0 if self.dag.is_root(a) else 1
        mat = np.zeros((self.card(a), self.n_symbols(a) + 1))
        if offset:
            mat[0, 0] = 1.0
        for s in range(self.n_symbols(a)):
            mat[s + offset, 1 + perm[s]] = alpha
            mat[s + offset, 0] += 1.0 - alpha
        return mat

    def output_codes(self, v: int) -> np.ndarray:
        """Output code for every contribution-tuple index of ``v``."""
        c = self.combiner[v]
        if isinstance(c, Invertible):
            return np.arange(math.prod(self.contribution_sizes(v)))
        return np.asarray(c.table)

    def cpt(self, v: int) -> np.ndarray:
        """``P(v | parents)`` with axes ``(*parents, v)``."""
        if self.dag.is_root(v):
            return self.root_dist[v]
        parents = self.dag.parents[v]
        k = len(parents)
        operands = []
        for i, p in enumerate(parents):
            operands += [self.edge_matrix(p, v), [i, k + i]]
        tup = np.einsum(*operands, list(range(2 * k)))
        pshape = tup.shape[:k]
        tup = tup.reshape(math.prod(pshape), -1)
        onehot = np.zeros((tup.shape[1], self.card(v)))
        onehot[np.arange(tup.shape[1]), self.output_codes(v)] = 1.0
        return (tup @ onehot).reshape(*pshape, self.card(v))

    def to_json(self) -> dict:
        verts = []
        for i, name in enumerate(self.names):
            entry = {"id": i, "name": name}
            if self.roles is not None:
                entry["role"] = self.roles[i].value
            if self.dag.is_root(i):
                entry["dist"] = self.root_dist[i].tolist()
            else:
                c = self.combiner[i]
                entry["combiner"] = ({"type": "invertible"} if isinstance(c, Invertible)
                                     else {"type": "lossy", "n_out": c.n_out, "table": list(c.table)})
            verts.append(entry)
        edges = []
        for a, b in self.dag.edges:
            e = {"parent": a, "child": b, "alpha": self.alpha[(a, b)]}
            if (a, b) in self.transforms:
                e["perm"] = list(self.transforms[(a, b)])
            edges.append(e)
        return {"vertices": verts, "edges": edges}

    @classmethod
    def from_json(cls, doc: Mapping) -> "DropoutScm":
        verts = sorted(doc["vertices"], key=lambda v: v.get("id", 0))
        names = [v["name"] for v in verts]
        index = {n: i for i, n in enumerate(names)}

        def ref(x):
            return x if isinstance(x, int) else index[x]

        edges, alpha, transforms = [], {}, {}
        for e in doc["edges"]:
            if isinstance(e, Mapping):
                a, b = ref(e["parent"]), ref(e["child"])
                p = e.get("alpha", 1.0)
                if "perm" in e:
                    transforms[(a, b)] = tuple(e["perm"])
            else:
                a, b = ref(e[0]), ref(e[1])
                p = e[2] if len(e) > 2 else 1.0
            edges.append((a, b))
            alpha[(a, b)] = p
        dag = Dag(tuple(names), tuple(edges))
        roles = None
        if all("role" in v for v in verts):
            roles = tuple(VertexRole(v["role"]) for v in verts)
        root_dist, combiner = {}, {}
        for i, v in enumerate(verts):
            if "dist" in v:
                root_dist[i] = v["dist"]
        partial = {i: Invertible() for i in range(len(names)) if not dag.is_root(i)}
        # lossy tables need contribution sizes, which only depend on ancestors
        for i in dag.topological_order:
            spec = verts[i].get("combiner")
            if spec is None or dag.is_root(i):
                continue
            kind = spec.get("type", "invertible")
            if kind == "invertible":
                continue
            probe = cls(dag, alpha, root_dist, partial, {}, roles)
            sizes = probe.contribution_sizes(i)
            if kind == "lossy":
                partial[i] = Lossy(tuple(spec["table"]), int(spec["n_out"]))
            elif kind == "modular_sum":
                partial[i] = Lossy.modular_sum(sizes, int(spec["modulus"]), bool(spec.get("never_null", False)))
            else:
                raise ValueError(f"unknown combiner type {kind!r}")
        combiner = partial
        return cls(dag, alpha, root_dist, combiner, transforms, roles)

    @classmethod
    def load(cls, path) -> "DropoutScm":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def enumerate_joint(scm: DropoutScm, variables, cap: int = DEFAULT_CAP) -> JointTable:
    """Exact marginal joint of ``variables`` by factorised enumeration.

    Only the ancestral closure of ``variables`` is touched and every other
    vertex is summed out as soon as all of its children have been multiplied
    in. ``cap`` bounds the largest intermediate table.
    """
    dag = scm.dag
    if isinstance(variables, (str, int, np.integer)):
        variables = [variables]
    targets = [dag.vid(v) for v in variables]
    if len(set(targets)) != len(targets):
        raise ValueError("duplicate variables")
    keep = set(targets)
    anc = dag.ancestors(keep)
    order = [v for v in dag.topological_order if v in anc]
    pending = {v: sum(1 for c in dag.children[v] if c in anc) for v in order}

    # dry run to check the cap before allocating anything
    live: list[int] = []
    worst = 1
    for v in order:
        live.append(v)
        worst = max(worst, math.prod(scm.card(w) for w in live)
                    * math.prod(scm.card(p) for p in dag.parents[v] if p not in live))
        for p in dag.parents[v]:
            pending[p] -= 1
        live = [w for w in live if w in keep or pending[w] > 0]
    if worst > cap:
        raise EnumerationTooLarge(
            f"enumeration needs a table of {worst} entries, above the cap of {cap}")

    pending = {v: sum(1 for c in dag.children[v] if c in anc) for v in order}
    joint = np.ones(())
    axes: list[int] = []
    for v in order:
        parents = list(dag.parents[v])
        out = axes + [v]
        joint = np.einsum(joint, axes, scm.cpt(v), parents + [v], out)
        axes = out
        for p in parents:
            pending[p] -= 1
        drop = [w for w in axes if w not in keep and pending[w] == 0]
        if drop:
            joint = joint.sum(axis=tuple(axes.index(w) for w in drop))
            axes = [w for w in axes if w not in drop]
    joint = np.transpose(joint, [axes.index(v) for v in targets])
    return JointTable(
        tuple(targets),
        tuple(dag.names[v] for v in targets),
        joint,
        tuple(scm.has_null(v) for v in targets),
    )


def sample(scm: DropoutScm, n: int, seed) -> Dataset:
    """Draw ``n`` i.i.d. rows; columns are named after vertices and hold symbols."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    dag = scm.dag
    codes: dict[int, np.ndarray] = {}
    for v in dag.topological_order:
        if dag.is_root(v):
            codes[v] = rng.choice(scm.card(v), size=n, p=scm.root_dist[v])
            continue
        parents = dag.parents[v]
        contribs = []
        for p in parents:
            offset = 0 if dag.is_root(p) else 1
            pc = codes[p]
            live = (pc >= offset) if offset == 0 else (pc > 0)
            sym = np.where(live, pc - offset, 0)
            transmit = rng.random(n) < scm.alpha[(p, v)]
            contribs.append(np.where(live & transmit, 1 + scm.perm(p, v)[sym], 0))
        idx = np.ravel_multi_index(contribs, scm.contribution_sizes(v)) if len(contribs) > 1 else contribs[0]
        codes[v] = scm.output_codes(v)[idx]
    cols = {}
    for v in range(len(dag)):
        c = codes[v]
        cols[dag.names[v]] = c.astype(np.int64) if dag.is_root(v) else np.where(c == 0, NULL, c - 1).astype(np.int64)
    return Dataset(cols)


def alpha_to_children(scm: DropoutScm, u, x) -> float:
    """Probability that at least one child of ``u`` inside ``x`` receives a transmission."""
    dag = scm.dag
    u = dag.vid(u)
    x = dag.vids(x)
    miss = 1.0
    for c in dag.children[u]:
        if c in x:
            miss *= 1.0 - scm.alpha[(u, c)]
    return 1.0 - miss


def path_transmission(scm: DropoutScm, path: Sequence) -> float:
    """Product of transmission probabilities along a collider-free path."""
    dag = scm.dag
    path = [dag.vid(v) for v in path]
    if len(path) < 2:
        raise ValueError("a path needs at least two vertices")
    if len(set(path)) != len(path):
        raise ValueError("path repeats a vertex")
    into = []  # per step: True if the edge points forward along the path
    prob = 1.0
    for a, b in zip(path, path[1:]):
        if (a, b) in dag.edge_set:
            into.append(True)
            prob *= scm.alpha[(a, b)]
        elif (b, a) in dag.edge_set:
            into.append(False)
            prob *= scm.alpha[(b, a)]
        else:
            raise ValueError(f"{dag.names[a]} and {dag.names[b]} are not adjacent")
    for i in range(1, len(path) - 1):
        if into[i - 1] and not into[i]:
            raise ValueError(f"path has a collider at {dag.names[path[i]]}")
    return prob


def split_separable(scm: DropoutScm, v) -> DropoutScm:
    """Replace an invertibly combined vertex by one single-parent component per parent."""
    dag = scm.dag
    v = dag.vid(v)
    parents = dag.parents[v]
    if not isinstance(scm.combiner.get(v), Invertible) or len(parents) < 2:
        raise ValueError(f"{dag.names[v]} is not a separable multi-parent vertex")
    if dag.children[v]:
        raise ValueError(f"{dag.names[v]} has children; only sink vertices can be split")
    old = [w for w in range(len(dag)) if w != v]
    remap = {w: i for i, w in enumerate(old)}
    names = [dag.names[w] for w in old]
    roles = None if scm.roles is None else [scm.roles[w] for w in old]
    edges, alpha, transforms = [], {}, {}
    for a, b in dag.edges:
        if b == v:
            continue
        edges.append((remap[a], remap[b]))
        alpha[(remap[a], remap[b])] = scm.alpha[(a, b)]
        if (a, b) in scm.transforms:
            transforms[(remap[a], remap[b])] = scm.transforms[(a, b)]
    for p in parents:
        c = len(names)
        names.append(f"{dag.names[v]}^({dag.names[p]})")
        if roles is not None:
            roles.append(scm.roles[v])
        edges.append((remap[p], c))
        alpha[(remap[p], c)] = scm.alpha[(p, v)]
        if (p, v) in scm.transforms:
            transforms[(remap[p], c)] = scm.transforms[(p, v)]
    new_dag = Dag(tuple(names), tuple(edges))
    return DropoutScm(
        new_dag,
        alpha,
        {remap[w]: d for w, d in scm.root_dist.items()},
        {remap[w]: c for w, c in scm.combiner.items() if w != v},
        transforms,
        None if roles is None else tuple(roles),
    )


def random_dropout_scm(rng: np.random.Generator, max_vertices: int = 6, max_alphabet: int = 4) -> DropoutScm:
    """Random dropout SCM on a random valid diagram with at most ``max_vertices`` vertices.

    Hidden causes take their mechanism through an invertible edge; hidden
    effects usually merge Y and their mechanism with a lossy, never-null
    modular sum so that they act as genuine colliders.
    """
    from .graph import random_dsd

    options = [(c, e) for c in range(3) for e in range(3)
               if c + e >= 1 and 2 + 2 * (c + e) <= max_vertices]
    c, e = options[rng.integers(len(options))]
    n_prox = int(rng.integers(1, max_vertices - 1 - 2 * (c + e) + 1))
    dsd = random_dsd(rng, c, e, n_prox, density=0.5)
    dag = dsd.dag

    def rand_alpha():
        r = rng.random()
        if r < 0.1:
            return 1.0
        if r < 0.15:
            return 0.0
        return float(rng.uniform(0.05, 0.95))

    alpha, root_dist, combiner = {}, {}, {}
    for a, b in dag.edges:
        if dsd.roles[a] is VertexRole.MECHANISM and rng.random() < 0.5:
            alpha[(a, b)] = 1.0
        else:
            alpha[(a, b)] = rand_alpha()
    for v in dag.topological_order:
        if dag.is_root(v):
            root_dist[v] = rng.dirichlet(np.ones(int(rng.integers(2, max_alphabet + 1))))
    # lossy tables need sizes, which depend on upstream choices: fill in topological order
    scm = DropoutScm(dag, alpha, root_dist, {}, {}, dsd.roles)
    for v in dag.topological_order:
        if dag.is_root(v):
            continue
        role = dsd.roles[v]
        lossy = False
        if role is VertexRole.HIDDEN and len(dag.parents[v]) == 2:
            lossy = rng.random() < 0.75
        elif role is VertexRole.PROXY and len(dag.parents[v]) >= 2:
            lossy = rng.random() < 0.5
        if lossy:
            sizes = DropoutScm(dag, alpha, root_dist, combiner, {}, dsd.roles).contribution_sizes(v)
            modulus = int(rng.integers(2, max_alphabet + 1))
            combiner[v] = Lossy.modular_sum(sizes, modulus, never_null=role is VertexRole.HIDDEN)
    scm = DropoutScm(dag, alpha, root_dist, combiner, {}, dsd.roles)
    transforms = {(a, b): tuple(rng.permutation(scm.n_symbols(a)).tolist()) for a, b in dag.edges}
    return DropoutScm(dag, alpha, root_dist, combiner, transforms, dsd.roles)


def three_proxy_scm(
    alphas: Mapping[tuple[str, str], float] | None = None,
    alphabet: int = 2,
    lossy_effect: bool = True,
) -> DropoutScm:
    """Dropout SCM on :func:`~per_cis.graph.three_proxy_dsd` with uniform mechanisms.

    ``V_A`` is combined invertibly (separable). The bad hidden vertex ``U_B``
    uses a never-null modular sum of Y and ``M_B`` unless ``lossy_effect`` is off.
    """
    from .graph import three_proxy_dsd

    dsd = three_proxy_dsd()
    a = {("M_G", "U_G"): 0.9, ("U_G", "Y"): 0.8, ("Y", "U_B"): 0.85, ("M_B", "U_B"): 0.9,
         ("U_G", "V_G"): 0.7, ("U_B", "V_B"): 0.75, ("U_G", "V_A"): 0.6, ("U_B", "V_A"): 0.65}
    if alphas:
        a.update(alphas)
    uniform = np.full(alphabet, 1.0 / alphabet)
    dists = {"M_G": uniform, "M_B": uniform}
    combiner = {}
    if lossy_effect:
        probe = DropoutScm.build(dsd, a, dists)
        combiner["U_B"] = Lossy.modular_sum(probe.contribution_sizes("U_B"), alphabet, never_null=True)
    return DropoutScm.build(dsd, a, dists, combiner)
