"""Independent oracles shared by the test modules.

These deliberately avoid the package's own algorithms: d-separation by
enumerating simple paths, and the joint distribution of a dropout SCM by
enumerating every root assignment and every edge drop pattern.
"""
import itertools
import math

import numpy as np
import pytest

from per_cis.dropout_scm import Invertible, JointTable


def _descendants(edges, v):
    out, stack = {v}, [v]
    while stack:
        a = stack.pop()
        for p, c in edges:
            if p == a and c not in out:
                out.add(c)
                stack.append(c)
    return out


def dsep_by_paths(n, edges, a, b, z):
    """True iff every simple path between the sets is blocked given ``z``."""
    edges = list(edges)
    z = set(z)
    adj = {v: set() for v in range(n)}
    for p, c in edges:
        adj[p].add(c)
        adj[c].add(p)
    eset = set(edges)
    desc = {v: _descendants(edges, v) for v in range(n)}

    def active(path):
        for i in range(1, len(path) - 1):
            prev, mid, nxt = path[i - 1], path[i], path[i + 1]
            collider = (prev, mid) in eset and (nxt, mid) in eset
            if collider:
                if not desc[mid] & z:
                    return False
            elif mid in z:
                return False
        return True

    def walk(path):
        last = path[-1]
        if last in b:
            return active(path)
        for nb in adj[last]:
            if nb not in path and walk(path + [nb]):
                return True
        return False

    return not any(walk([s]) for s in a)


def brute_force_joint(scm):
    """Joint over all vertices as a dict from full code tuples to probability."""
    dag = scm.dag
    n = len(dag)
    order = list(dag.topological_order)
    roots = [v for v in order if not dag.parents[v]]
    edges = list(dag.edges)
    nsym = _nsym_table(scm)
    out = {}
    root_ranges = [range(len(scm.root_dist[r])) for r in roots]
    for rvals in itertools.product(*root_ranges):
        p_root = math.prod(float(scm.root_dist[r][s]) for r, s in zip(roots, rvals))
        if p_root == 0:
            continue
        for bits in itertools.product((0, 1), repeat=len(edges)):
            p = p_root
            for e, on in zip(edges, bits):
                a = scm.alpha[e]
                p *= a if on else 1 - a
            if p == 0:
                continue
            sent = dict(zip(edges, bits))
            sym = {}   # symbol or None for null
            code = {}
            for r, s in zip(roots, rvals):
                sym[r], code[r] = s, s
            for v in order:
                if v in code:
                    continue
                contribs, sizes = [], []
                for q in dag.parents[v]:
                    k = len(scm.root_dist[q]) if not dag.parents[q] else nsym[q]
                    sizes.append(k + 1)
                    perm = scm.transforms.get((q, v), tuple(range(k)))
                    contribs.append(0 if sym[q] is None or not sent[(q, v)] else 1 + perm[sym[q]])
                idx = 0
                for c, s in zip(contribs, sizes):
                    idx = idx * s + c
                comb = scm.combiner[v]
                code[v] = idx if isinstance(comb, Invertible) else comb.table[idx]
                sym[v] = None if code[v] == 0 else code[v] - 1
            key = tuple(code[v] for v in range(n))
            out[key] = out.get(key, 0.0) + p
    return out


def _nsym_table(scm):
    dag = scm.dag
    res = {}
    for v in dag.topological_order:
        if not dag.parents[v]:
            continue
        comb = scm.combiner[v]
        if isinstance(comb, Invertible):
            res[v] = math.prod((len(scm.root_dist[q]) if not dag.parents[q] else res[q]) + 1
                               for q in dag.parents[v]) - 1
        else:
            res[v] = comb.n_out - 1
    return res


def brute_force_marginal(scm, variables):
    """Dense array of the marginal over ``variables`` (vertex ids) from :func:`brute_force_joint`."""
    nsym = _nsym_table(scm)
    full = brute_force_joint(scm)
    dag = scm.dag
    cards = [len(scm.root_dist[v]) if not dag.parents[v] else nsym[v] + 1 for v in variables]
    arr = np.zeros(cards)
    for key, p in full.items():
        arr[tuple(key[v] for v in variables)] += p
    return arr


def brute_force_table(scm, joint, variables):
    """:class:`JointTable` over vertex ids ``variables`` from a :func:`brute_force_joint` result."""
    nsym = _nsym_table(scm)
    dag = scm.dag
    variables = list(variables)
    cards = [len(scm.root_dist[v]) if not dag.parents[v] else nsym[v] + 1 for v in variables]
    arr = np.zeros(cards)
    for key, p in joint.items():
        arr[tuple(key[v] for v in variables)] += p
    return JointTable(tuple(variables), tuple(dag.names[v] for v in variables), arr,
                      tuple(bool(dag.parents[v]) for v in variables))


def world_count(scm):
    return math.prod(len(scm.root_dist[v]) for v in scm.dag.topological_order
                     if not scm.dag.parents[v]) * 2 ** len(scm.dag.edges)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, repeated at the end of the terminal report
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
