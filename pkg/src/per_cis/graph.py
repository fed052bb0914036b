"""Causal DAGs, distribution shift diagrams and d-separation.

Vertices are dense integers ``0..n-1`` with a side table of names. Every
public function that takes vertices also accepts their names.
"""
from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np


class VertexRole(str, enum.Enum):
    LABEL = "label"
    HIDDEN = "hidden"
    PROXY = "proxy"
    MECHANISM = "mechanism"


@dataclass(frozen=True)
class Dag:
    """Immutable directed acyclic graph."""

    names: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "edges", tuple((int(a), int(b)) for a, b in self.edges))
        n = len(self.names)
        if len(set(self.names)) != n:
            raise ValueError("vertex names must be unique")
        seen = set()
        for a, b in self.edges:
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"edge ({a}, {b}) references an unknown vertex")
            if a == b:
                raise ValueError(f"self-loop on {self.names[a]}")
            if (a, b) in seen:
                raise ValueError(f"duplicate edge {self.names[a]} -> {self.names[b]}")
            seen.add((a, b))
        self.topological_order  # raises on cycles

    @classmethod
    def from_names(cls, names: Sequence[str], edges: Iterable[tuple[str, str]]) -> "Dag":
        index = {name: i for i, name in enumerate(names)}
        return cls(tuple(names), tuple((index[a], index[b]) for a, b in edges))

    def __len__(self):
        return len(self.names)

    @cached_property
    def _index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    def vid(self, v) -> int:
        """Resolve a vertex id or name to its integer id."""
        if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
            if not 0 <= v < len(self.names):
                raise KeyError(f"unknown vertex id {v}")
            return int(v)
        try:
            return self._index[v]
        except KeyError:
            raise KeyError(f"unknown vertex {v!r}") from None

    def vids(self, vs) -> frozenset[int]:
        if vs is None:
            return frozenset()
        if isinstance(vs, (str, int, np.integer)):
            vs = [vs]
        return frozenset(self.vid(v) for v in vs)

    def name(self, v) -> str:
        return self.names[self.vid(v)]

    @cached_property
    def parents(self) -> tuple[tuple[int, ...], ...]:
        pa: list[list[int]] = [[] for _ in self.names]
        for a, b in self.edges:
            pa[b].append(a)
        return tuple(tuple(sorted(p)) for p in pa)

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        ch: list[list[int]] = [[] for _ in self.names]
        for a, b in self.edges:
            ch[a].append(b)
        return tuple(tuple(sorted(c)) for c in ch)

    @cached_property
    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(self.edges)

    @cached_property
    def topological_order(self) -> tuple[int, ...]:
        # Kahn's algorithm with a sorted frontier so the order is reproducible
        indeg = [len(p) for p in self.parents]
        frontier = sorted(v for v, d in enumerate(indeg) if d == 0)
        order = []
        while frontier:
            v = frontier.pop(0)
            order.append(v)
            for c in self.children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    frontier.append(c)
            frontier.sort()
        if len(order) != len(self.names):
            raise ValueError("graph contains a cycle")
        return tuple(order)

    def ancestors(self, vs, include_self: bool = True) -> frozenset[int]:
        start = self.vids(vs)
        out = set(start) if include_self else set()
        stack = list(start)
        while stack:
            v = stack.pop()
            for p in self.parents[v]:
                if p not in out:
                    out.add(p)
                    stack.append(p)
        return frozenset(out)

    def descendants(self, vs, include_self: bool = True) -> frozenset[int]:
        start = self.vids(vs)
        out = set(start) if include_self else set()
        stack = list(start)
        while stack:
            v = stack.pop()
            for c in self.children[v]:
                if c not in out:
                    out.add(c)
                    stack.append(c)
        return frozenset(out)

    def is_root(self, v) -> bool:
        return not self.parents[self.vid(v)]


def d_separated(dag: Dag, a, b, z=()) -> bool:
    """Return True when every path between ``a`` and ``b`` is blocked by ``z``.

    Reachability ("Bayes ball") over (vertex, direction) states, linear in the
    number of edges.
    """
    a, b, z = dag.vids(a), dag.vids(b), dag.vids(z)
    if a & b or a & z or b & z:
        raise ValueError("a, b and z must be pairwise disjoint")
    if not a or not b:
        return True
    anc_z = dag.ancestors(z)
    # direction: True = arrived from a child (moving up), False = from a parent
    queue = deque((v, True) for v in a)
    visited: set[tuple[int, bool]] = set()
    while queue:
        v, up = queue.popleft()
        if (v, up) in visited:
            continue
        visited.add((v, up))
        if v not in z and v in b:
            return False
        if up:
            if v in z:
                continue
            queue.extend((p, True) for p in dag.parents[v])
            queue.extend((c, False) for c in dag.children[v])
        else:
            if v not in z:
                queue.extend((c, False) for c in dag.children[v])
            if v in anc_z:
                queue.extend((p, True) for p in dag.parents[v])
    return True


@dataclass(frozen=True)
class DistributionShiftDiagram:
    """A DAG whose vertices carry roles: one label, hidden, proxy, mechanism.

    Construction does not validate the PER structure; call :func:`validate_dsd`.
    """

    dag: Dag
    roles: tuple[VertexRole, ...]

    def __post_init__(self):
        roles = tuple(VertexRole(r) for r in self.roles)
        object.__setattr__(self, "roles", roles)
        if len(roles) != len(self.dag):
            raise ValueError("one role per vertex required")

    @classmethod
    def from_spec(
        cls, roles: Mapping[str, str | VertexRole], edges: Iterable[tuple[str, str]]
    ) -> "DistributionShiftDiagram":
        names = list(roles)
        return cls(Dag.from_names(names, edges), tuple(VertexRole(roles[n]) for n in names))

    def role(self, v) -> VertexRole:
        return self.roles[self.dag.vid(v)]

    def _with_role(self, role: VertexRole) -> tuple[int, ...]:
        return tuple(i for i, r in enumerate(self.roles) if r is role)

    @property
    def names(self) -> tuple[str, ...]:
        return self.dag.names

    @cached_property
    def label(self) -> int:
        labels = self._with_role(VertexRole.LABEL)
        if len(labels) != 1:
            raise ValueError(f"expected exactly one label vertex, found {len(labels)}")
        return labels[0]

    @cached_property
    def hidden(self) -> tuple[int, ...]:
        return self._with_role(VertexRole.HIDDEN)

    @cached_property
    def proxies(self) -> tuple[int, ...]:
        return self._with_role(VertexRole.PROXY)

    @cached_property
    def mechanisms(self) -> tuple[int, ...]:
        return self._with_role(VertexRole.MECHANISM)

    def neighbors(self, v) -> frozenset[int]:
        v = self.dag.vid(v)
        return frozenset(self.dag.parents[v]) | frozenset(self.dag.children[v])

    def mechanism_of(self, u) -> int:
        u = self.dag.vid(u)
        ms = [m for m in self.neighbors(u) if self.roles[m] is VertexRole.MECHANISM]
        if len(ms) != 1:
            raise ValueError(f"{self.dag.names[u]} has {len(ms)} mechanisms, expected 1")
        return ms[0]

    def hidden_of(self, m) -> int:
        m = self.dag.vid(m)
        us = [u for u in self.neighbors(m) if self.roles[u] is VertexRole.HIDDEN]
        if len(us) != 1:
            raise ValueError(f"{self.dag.names[m]} touches {len(us)} hidden vertices")
        return us[0]

    def children_of(self, vs) -> frozenset[int]:
        return frozenset(c for v in self.dag.vids(vs) for c in self.dag.children[v])

    def to_json(self) -> dict:
        return {
            "vertices": [
                {"id": i, "name": n, "role": r.value}
                for i, (n, r) in enumerate(zip(self.dag.names, self.roles))
            ],
            "edges": [[a, b] for a, b in self.dag.edges],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "DistributionShiftDiagram":
        verts = sorted(doc["vertices"], key=lambda v: v.get("id", 0))
        ids = [v.get("id", i) for i, v in enumerate(verts)]
        if ids != list(range(len(verts))):
            raise ValueError("vertex ids must be 0..n-1")
        names = [v["name"] for v in verts]
        index = {n: i for i, n in enumerate(names)}

        def ref(x):
            return x if isinstance(x, int) else index[x]

        edges = tuple((ref(a), ref(b)) for a, b in doc["edges"])
        return cls(Dag(tuple(names), edges), tuple(VertexRole(v["role"]) for v in verts))

    @classmethod
    def load(cls, path) -> "DistributionShiftDiagram":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def validate_dsd(dsd: DistributionShiftDiagram) -> list[str]:
    """List every violated structural rule; empty means valid.

    Mechanisms attach to exactly one hidden vertex. The usual orientation is
    ``M -> U`` but a mechanism drawn as a child of its hidden vertex is
    accepted as well.
    """
    dag, roles, names = dsd.dag, dsd.roles, dsd.dag.names
    R = VertexRole
    out: list[str] = []
    labels = [i for i, r in enumerate(roles) if r is R.LABEL]
    if len(labels) != 1:
        return [f"expected exactly one label vertex, found {len(labels)}"]
    y = labels[0]
    for a, b in dag.edges:
        ra, rb = roles[a], roles[b]
        if ra is R.HIDDEN and rb is R.HIDDEN:
            out.append(f"hidden-hidden edge {names[a]} -> {names[b]}")
        elif ra is R.PROXY and rb is R.PROXY:
            out.append(f"proxy-proxy edge {names[a]} -> {names[b]}")
        elif ra is R.PROXY:
            out.append(f"proxy {names[a]} has child {names[b]}")
    for u in dsd.hidden:
        if y not in dsd.neighbors(u):
            out.append(f"hidden {names[u]} is neither parent nor child of {names[y]}")
        ms = [m for m in dsd.neighbors(u) if roles[m] is R.MECHANISM]
        if len(ms) != 1:
            out.append(f"hidden {names[u]} has {len(ms)} mechanisms, expected 1")
    for m in dsd.mechanisms:
        nb = dsd.neighbors(m)
        if len(nb) != 1 or roles[next(iter(nb))] is not R.HIDDEN:
            out.append(f"mechanism {names[m]} must touch exactly one hidden vertex")
    for v in dsd.proxies:
        pa = dag.parents[v]
        if not any(roles[p] is R.HIDDEN for p in pa):
            out.append(f"proxy {names[v]} has no hidden parent")
        for p in pa:
            if roles[p] is R.MECHANISM:
                out.append(f"proxy {names[v]} has mechanism parent {names[p]}")
            elif roles[p] is R.LABEL:
                out.append(f"proxy {names[v]} has label parent {names[p]}")
    for p in dag.parents[y]:
        if roles[p] is not R.HIDDEN:
            out.append(f"label has non-hidden parent {names[p]}")
    for c in dag.children[y]:
        if roles[c] is not R.HIDDEN:
            out.append(f"label has non-hidden child {names[c]}")
    return out


def require_valid(dsd: DistributionShiftDiagram) -> None:
    problems = validate_dsd(dsd)
    if problems:
        raise ValueError("invalid distribution shift diagram: " + "; ".join(problems))


@dataclass(frozen=True)
class HiddenPartition:
    good: frozenset[int]
    bad: frozenset[int]
    # hidden vertices where the d-separation test and the parent/child reading differ
    disagreements: frozenset[int] = field(default_factory=frozenset)


@dataclass(frozen=True)
class ProxyPartition:
    good: frozenset[int]
    bad: frozenset[int]
    ambiguous: frozenset[int]

    def class_of(self, v: int) -> str:
        if v in self.good:
            return "good"
        if v in self.bad:
            return "bad"
        if v in self.ambiguous:
            return "ambiguous"
        raise KeyError(v)


def classify_hidden(dsd: DistributionShiftDiagram) -> HiddenPartition:
    """Split hidden vertices by whether their mechanism reaches Y through a collider.

    ``U`` is good when ``M`` and ``Y`` are d-connected marginally, and bad when
    they are d-separated marginally but d-connected given ``U``.
    """
    require_valid(dsd)
    dag, y = dsd.dag, dsd.label
    good, bad, disagree = set(), set(), set()
    for u in dsd.hidden:
        m = dsd.mechanism_of(u)
        if not d_separated(dag, {m}, {y}):
            good.add(u)
            if u not in dag.parents[y]:
                disagree.add(u)
        elif not d_separated(dag, {m}, {y}, {u}):
            bad.add(u)
            if u not in dag.children[y]:
                disagree.add(u)
        else:
            raise ValueError(f"{dag.names[u]} fits neither hidden class")
    return HiddenPartition(frozenset(good), frozenset(bad), frozenset(disagree))


def classify_proxies(dsd: DistributionShiftDiagram, hp: HiddenPartition | None = None) -> ProxyPartition:
    if hp is None:
        hp = classify_hidden(dsd)
    ch_good = dsd.children_of(hp.good) & set(dsd.proxies)
    ch_bad = dsd.children_of(hp.bad) & set(dsd.proxies)
    return ProxyPartition(
        good=frozenset(ch_good - ch_bad),
        bad=frozenset(ch_bad - ch_good),
        ambiguous=frozenset(ch_good & ch_bad),
    )


def random_dsd(
    rng: np.random.Generator,
    n_causes: int,
    n_effects: int,
    n_proxies: int,
    density: float = 0.4,
    p_reversed: float = 0.0,
) -> DistributionShiftDiagram:
    """Draw a valid diagram with the given numbers of hidden causes/effects of Y.

    Every hidden vertex gets one mechanism, normally as a parent; with
    probability ``p_reversed`` the mechanism hangs below the hidden vertex
    instead. Each proxy gets an independent Bernoulli(``density``) parent set
    over the hidden vertices, forced nonempty.
    """
    if n_causes + n_effects < 1:
        raise ValueError("need at least one hidden vertex")
    names = ["Y"]
    roles = [VertexRole.LABEL]
    edges = []
    hidden = []
    for kind, count in (("C", n_causes), ("E", n_effects)):
        for i in range(count):
            u = len(names)
            names.append(f"U{kind}{i}")
            roles.append(VertexRole.HIDDEN)
            hidden.append(u)
            edges.append((u, 0) if kind == "C" else (0, u))
            m = len(names)
            names.append(f"M{kind}{i}")
            roles.append(VertexRole.MECHANISM)
            edges.append((u, m) if p_reversed and rng.random() < p_reversed else (m, u))
    for i in range(n_proxies):
        v = len(names)
        names.append(f"V{i}")
        roles.append(VertexRole.PROXY)
        mask = rng.random(len(hidden)) < density
        if not mask.any():
            mask[rng.integers(len(hidden))] = True
        edges.extend((hidden[j], v) for j in np.flatnonzero(mask))
    return DistributionShiftDiagram(Dag(tuple(names), tuple(edges)), tuple(roles))


def seven_proxy_dsd() -> DistributionShiftDiagram:
    """One hidden cause and two hidden effects of Y observed through seven proxies.

    ``U1`` causes Y, ``U2`` and ``U3`` are effects. ``M3`` hangs below ``U3``,
    so ``U3`` is not a collider between its mechanism and Y.
    """
    roles = {"Y": "label", "U1": "hidden", "U2": "hidden", "U3": "hidden",
             "M1": "mechanism", "M2": "mechanism", "M3": "mechanism"}
    roles.update({f"V{i}": "proxy" for i in range(1, 8)})
    edges = [("U1", "Y"), ("Y", "U2"), ("Y", "U3"),
             ("M1", "U1"), ("M2", "U2"), ("U3", "M3"),
             ("U1", "V1"), ("U1", "V2"), ("U1", "V3"), ("U1", "V6"),
             ("U2", "V3"), ("U2", "V4"), ("U2", "V5"), ("U2", "V6"),
             ("U3", "V2"), ("U3", "V5"), ("U3", "V6"), ("U3", "V7")]
    return DistributionShiftDiagram.from_spec(roles, edges)


def three_proxy_dsd() -> DistributionShiftDiagram:
    """Good cause ``U_G``, bad effect ``U_B`` and proxies ``V_G``, ``V_B``, ``V_A``.

    ``V_A`` has both hidden vertices as parents.
    """
    roles = {"M_G": "mechanism", "U_G": "hidden", "Y": "label", "M_B": "mechanism",
             "U_B": "hidden", "V_G": "proxy", "V_B": "proxy", "V_A": "proxy"}
    edges = [("M_G", "U_G"), ("U_G", "Y"), ("Y", "U_B"), ("M_B", "U_B"),
             ("U_G", "V_G"), ("U_B", "V_B"), ("U_G", "V_A"), ("U_B", "V_A")]
    return DistributionShiftDiagram.from_spec(roles, edges)
