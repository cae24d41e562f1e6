"""Graph data model for lag-indexed DAGs and partially directed graphs.

Nodes are plain integers in ``[0, p*(q+1))``.  Index ``(q - l) * p + g``
holds variable ``g`` at lag ``l``, so the current-time block occupies the
last ``p`` indices.  Cross-time edges always point from an earlier block
to a later one.
"""

from __future__ import annotations

import itertools
import json
import logging
from typing import Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)


class GraphError(ValueError):
    """Invalid graph construction or query argument."""


class CyclicGraphError(GraphError):
    """A directed cycle was found where acyclicity is required."""


# ---------------------------------------------------------------------------
# node index helpers

def node_index(var: int, lag: int, p: int, q: int) -> int:
    if not (0 <= var < p and 0 <= lag <= q):
        raise GraphError(f"variable {var} at lag {lag} out of range (p={p}, q={q})")
    return (q - lag) * p + var


def node_var(index: int, p: int) -> int:
    return index % p


def node_lag(index: int, p: int, q: int) -> int:
    return q - index // p


def is_current(index: int, p: int, q: int) -> bool:
    return index >= p * q


def _check_node(g, v: int) -> None:
    if not isinstance(v, int) or not (0 <= v < g.node_count):
        raise GraphError(f"node {v!r} out of range [0, {g.node_count})")


# ---------------------------------------------------------------------------
# DAG

class Dag:
    """Immutable directed acyclic graph over ``node_count`` integer nodes."""

    def __init__(self, node_count: int, edges: Iterable[tuple[int, int]] = ()):
        self.node_count = int(node_count)
        edge_set = set()
        self._parent_mask = [0] * self.node_count
        self._child_mask = [0] * self.node_count
        for u, v in edges:
            _check_node(self, u)
            _check_node(self, v)
            if u == v:
                raise GraphError(f"self loop at node {u}")
            edge_set.add((u, v))
            self._parent_mask[v] |= 1 << u
            self._child_mask[u] |= 1 << v
        self.edges = frozenset(edge_set)
        self._topo = self._topological_sort()
        self._anc_mask: list[int] | None = None

    def _topological_sort(self) -> tuple[int, ...]:
        indeg = [bin(m).count("1") for m in self._parent_mask]
        ready = [v for v in range(self.node_count) if indeg[v] == 0]
        order = []
        while ready:
            v = ready.pop()
            order.append(v)
            m = self._child_mask[v]
            while m:
                c = (m & -m).bit_length() - 1
                m &= m - 1
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        if len(order) != self.node_count:
            raise CyclicGraphError("directed cycle detected")
        return tuple(order)

    # -- queries ------------------------------------------------------------

    def topological_order(self) -> tuple[int, ...]:
        return self._topo

    def parents(self, v: int) -> set[int]:
        _check_node(self, v)
        return _mask_to_set(self._parent_mask[v])

    def children(self, v: int) -> set[int]:
        _check_node(self, v)
        return _mask_to_set(self._child_mask[v])

    def parent_mask(self, v: int) -> int:
        return self._parent_mask[v]

    def has_edge(self, u: int, v: int) -> bool:
        return (u, v) in self.edges

    def adjacent(self, u: int, v: int) -> bool:
        return (u, v) in self.edges or (v, u) in self.edges

    def ancestor_masks(self) -> list[int]:
        """Bitmask of strict ancestors per node (cached)."""
        if self._anc_mask is None:
            anc = [0] * self.node_count
            for v in self._topo:
                m = self._parent_mask[v]
                a = m
                while m:
                    u = (m & -m).bit_length() - 1
                    m &= m - 1
                    a |= anc[u]
                anc[v] = a
            self._anc_mask = anc
        return self._anc_mask

    def check_dynamic(self, p: int, q: int) -> None:
        """Require every cross-block edge to point earlier -> later."""
        if self.node_count != p * (q + 1):
            raise GraphError(f"node count {self.node_count} != p(q+1) = {p * (q + 1)}")
        for u, v in self.edges:
            if node_lag(u, p, q) < node_lag(v, p, q):
                raise GraphError(f"edge {u}->{v} points backwards in time")

    def skeleton_pairs(self) -> set[frozenset[int]]:
        return {frozenset(e) for e in self.edges}

    def v_structures(self) -> set[tuple[int, int, int]]:
        """Unshielded colliders (a, b, c) with a -> b <- c, a < c."""
        out = set()
        for b in range(self.node_count):
            pa = sorted(self.parents(b))
            for a, c in itertools.combinations(pa, 2):
                if not self.adjacent(a, c):
                    out.add((a, b, c))
        return out

    def __eq__(self, other):
        return (isinstance(other, Dag) and self.node_count == other.node_count
                and self.edges == other.edges)

    def __hash__(self):
        return hash((self.node_count, self.edges))

    def __repr__(self):
        return f"Dag(node_count={self.node_count}, edges={sorted(self.edges)})"


def _mask_to_set(mask: int) -> set[int]:
    out = set()
    while mask:
        out.add((mask & -mask).bit_length() - 1)
        mask &= mask - 1
    return out


def _mask_iter(mask: int):
    while mask:
        yield (mask & -mask).bit_length() - 1
        mask &= mask - 1


# ---------------------------------------------------------------------------
# PDAG

class Pdag:
    """Mixed graph: a set of directed edges plus a set of undirected edges.

    Built incrementally; the directed part is kept acyclic.  ``orient`` is
    the only way an undirected edge becomes directed.
    """

    def __init__(self, node_count: int,
                 directed: Iterable[tuple[int, int]] = (),
                 undirected: Iterable[Iterable[int]] = ()):
        self.node_count = int(node_count)
        self.directed: set[tuple[int, int]] = set()
        self.undirected: set[frozenset[int]] = set()
        for u, v in directed:
            self.add_directed(u, v)
        for pair in undirected:
            u, v = tuple(pair)
            self.add_undirected(u, v)

    def copy(self) -> "Pdag":
        g = Pdag(self.node_count)
        g.directed = set(self.directed)
        g.undirected = set(self.undirected)
        return g

    # -- mutation -----------------------------------------------------------

    def add_directed(self, u: int, v: int) -> None:
        _check_node(self, u)
        _check_node(self, v)
        if u == v:
            raise GraphError(f"self loop at node {u}")
        if frozenset((u, v)) in self.undirected or (v, u) in self.directed:
            raise GraphError(f"edge {u}-{v} already present with another mark")
        if self.reaches(v, u):
            raise CyclicGraphError(f"adding {u}->{v} creates a directed cycle")
        self.directed.add((u, v))

    def add_undirected(self, u: int, v: int) -> None:
        _check_node(self, u)
        _check_node(self, v)
        if u == v:
            raise GraphError(f"self loop at node {u}")
        if (u, v) in self.directed or (v, u) in self.directed:
            raise GraphError(f"edge {u}-{v} already present as directed")
        self.undirected.add(frozenset((u, v)))

    def orient(self, u: int, v: int) -> bool:
        """Turn undirected u-v into u->v; refuse if it would create a cycle.

        Returns True if the edge was oriented.
        """
        pair = frozenset((u, v))
        if pair not in self.undirected:
            return False
        if self.reaches(v, u):
            logger.debug("skipping orientation %s->%s: would create a cycle", u, v)
            return False
        self.undirected.discard(pair)
        self.directed.add((u, v))
        return True

    def remove_edge(self, u: int, v: int) -> None:
        self.undirected.discard(frozenset((u, v)))
        self.directed.discard((u, v))
        self.directed.discard((v, u))

    # -- queries ------------------------------------------------------------

    def adjacent(self, u: int, v: int) -> bool:
        return (frozenset((u, v)) in self.undirected
                or (u, v) in self.directed or (v, u) in self.directed)

    def has_directed(self, u: int, v: int) -> bool:
        return (u, v) in self.directed

    def has_undirected(self, u: int, v: int) -> bool:
        return frozenset((u, v)) in self.undirected

    def parents_of(self, v: int) -> set[int]:
        return {u for (u, w) in self.directed if w == v}

    def children_of(self, v: int) -> set[int]:
        return {w for (u, w) in self.directed if u == v}

    def undirected_neighbors(self, v: int) -> set[int]:
        return {next(iter(pair - {v})) for pair in self.undirected if v in pair}

    def neighbors(self, v: int) -> set[int]:
        return self.parents_of(v) | self.children_of(v) | self.undirected_neighbors(v)

    def nodes_with_edges(self) -> set[int]:
        out = set()
        for u, v in self.directed:
            out.update((u, v))
        for pair in self.undirected:
            out.update(pair)
        return out

    def reaches(self, src: int, dst: int) -> bool:
        """Directed-path reachability src ->* dst."""
        if src == dst:
            return True
        seen = {src}
        stack = [src]
        children: dict[int, list[int]] = {}
        for u, v in self.directed:
            children.setdefault(u, []).append(v)
        while stack:
            x = stack.pop()
            for y in children.get(x, ()):
                if y == dst:
                    return True
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        return False

    def skeleton_pairs(self) -> set[frozenset[int]]:
        return {frozenset(e) for e in self.directed} | set(self.undirected)

    def __eq__(self, other):
        return (isinstance(other, Pdag) and self.node_count == other.node_count
                and self.directed == other.directed
                and self.undirected == other.undirected)

    def __repr__(self):
        return (f"Pdag(node_count={self.node_count}, "
                f"directed={sorted(self.directed)}, "
                f"undirected={sorted(map(sorted, self.undirected))})")


# ---------------------------------------------------------------------------
# separator-set registry

class SepsetRegistry:
    """Separator sets recorded whenever a CI test accepted independence."""

    def __init__(self):
        self._sets: dict[frozenset[int], frozenset[int]] = {}

    def record(self, a: int, b: int, sepset: Iterable[int]) -> None:
        self._sets[frozenset((a, b))] = frozenset(sepset)

    def get(self, a: int, b: int) -> frozenset[int] | None:
        return self._sets.get(frozenset((a, b)))

    def merge(self, other: "SepsetRegistry") -> None:
        self._sets.update(other._sets)

    def items(self):
        return self._sets.items()

    def __contains__(self, pair) -> bool:
        return frozenset(pair) in self._sets

    def __len__(self):
        return len(self._sets)


# ---------------------------------------------------------------------------
# d-separation

def d_separated(dag: Dag, a: int, b: int, Z: Iterable[int]) -> bool:
    """Check whether Z blocks every path between a and b in ``dag``.

    Implemented as reachability in the moralized ancestral graph; the
    brute-force path enumerator in the test suite is the oracle for this.
    """
    Z = frozenset(Z)
    _check_node(dag, a)
    _check_node(dag, b)
    for z in Z:
        _check_node(dag, z)
    if a == b:
        raise GraphError("endpoints must differ")
    if a in Z or b in Z:
        raise GraphError("endpoints may not appear in the conditioning set")

    anc_masks = dag.ancestor_masks()
    zmask = 0
    for z in Z:
        zmask |= 1 << z
    relevant = (1 << a) | (1 << b) | zmask
    anc = relevant
    for v in _mask_iter(relevant):
        anc |= anc_masks[v]

    # moralized adjacency restricted to the ancestral set
    adj = {}
    for v in _mask_iter(anc):
        m = (dag._parent_mask[v] | dag._child_mask[v]) & anc
        adj[v] = adj.get(v, 0) | m
        pa = dag._parent_mask[v] & anc
        for x in _mask_iter(pa):
            adj[x] = adj.get(x, 0) | (pa & ~(1 << x))

    # BFS from a avoiding Z
    seen = 1 << a
    frontier = 1 << a
    target = 1 << b
    blocked = zmask
    while frontier:
        nxt = 0
        for v in _mask_iter(frontier):
            nxt |= adj.get(v, 0)
        nxt &= ~seen & ~blocked
        if nxt & target:
            return False
        seen |= nxt
        frontier = nxt
    return True


# ---------------------------------------------------------------------------
# v-structures, Meek closure, CPDAG

def find_v_structures(skeleton: Pdag, sepsets: SepsetRegistry) -> list[tuple[int, int, int]]:
    """Orient unshielded colliders in place; return the oriented triples.

    A triple a-b-c with a,c non-adjacent becomes a->b<-c exactly when b is
    not in the recorded separator of {a, c}.  Non-adjacent pairs with no
    recorded separator are skipped with a diagnostic.
    """
    triples = []
    for b in range(skeleton.node_count):
        nbrs = sorted(skeleton.neighbors(b))
        for a, c in itertools.combinations(nbrs, 2):
            if skeleton.adjacent(a, c):
                continue
            sep = sepsets.get(a, c)
            if sep is None:
                logger.warning("no separator recorded for non-adjacent pair (%s, %s); "
                               "triple (%s, %s, %s) skipped", a, c, a, b, c)
                continue
            if b not in sep:
                triples.append((a, b, c))
    for a, b, c in triples:
        skeleton.orient(a, b)
        skeleton.orient(c, b)
    return triples


def _meek_pass(g: Pdag) -> bool:
    changed = False
    for pair in sorted(g.undirected, key=sorted):
        if pair not in g.undirected:
            continue
        u, v = sorted(pair)
        for x, y in ((u, v), (v, u)):
            if _meek_forces(g, x, y):
                if g.orient(x, y):
                    changed = True
                break
    return changed


def _meek_forces(g: Pdag, x: int, y: int) -> bool:
    """True when one of Meek's rules R1-R4 orients x-y as x->y."""
    # R1: z -> x, z and y non-adjacent
    for z in g.parents_of(x):
        if not g.adjacent(z, y):
            return True
    # R2: x -> z -> y
    for z in g.children_of(x):
        if g.has_directed(z, y):
            return True
    # R3: x - z, x - w, z -> y, w -> y, z and w non-adjacent
    caps = [z for z in g.undirected_neighbors(x) if g.has_directed(z, y)]
    for z, w in itertools.combinations(sorted(caps), 2):
        if not g.adjacent(z, w):
            return True
    # R4: z -> w -> y with z,y non-adjacent and x adjacent to both z and w
    for w in g.parents_of(y):
        if not g.adjacent(x, w):
            continue
        for z in g.parents_of(w):
            if z != y and not g.adjacent(z, y) and g.adjacent(x, z):
                return True
    return False


def meek_closure(g: Pdag) -> Pdag:
    """Apply Meek rules R1-R4 to a fixed point; returns a new Pdag."""
    out = g.copy()
    while _meek_pass(out):
        pass
    return out


def cpdag(dag: Dag) -> Pdag:
    """Completed PDAG representing the Markov equivalence class of ``dag``."""
    g = Pdag(dag.node_count)
    for u, v in dag.edges:
        g.add_undirected(u, v)
    for a, b, c in dag.v_structures():
        g.orient(a, b)
        g.orient(c, b)
    return meek_closure(g)


# ---------------------------------------------------------------------------
# JSON graph format

def graph_to_json(g: Dag | Pdag, p: int, q: int, variables: Sequence[str]) -> dict:
    if len(variables) != p:
        raise GraphError(f"expected {p} variable names, got {len(variables)}")
    if g.node_count != p * (q + 1):
        raise GraphError(f"node count {g.node_count} != p(q+1) = {p * (q + 1)}")

    def endpoint(idx):
        return {"var": variables[node_var(idx, p)], "lag": node_lag(idx, p, q)}

    edges = []
    directed = g.edges if isinstance(g, Dag) else g.directed
    for u, v in sorted(directed):
        edges.append({"from": endpoint(u), "to": endpoint(v)})
    if isinstance(g, Pdag):
        for pair in sorted(g.undirected, key=sorted):
            u, v = sorted(pair)
            edges.append({"from": endpoint(u), "to": endpoint(v), "undirected": True})
    return {"p": p, "q": q, "variables": list(variables), "edges": edges}


def graph_from_json(doc: Mapping) -> tuple[Dag | Pdag, int, int, list[str]]:
    """Parse the JSON graph format; returns (graph, p, q, variables).

    Returns a Dag when no edge is marked undirected, otherwise a Pdag.
    """
    p = int(doc["p"])
    q = int(doc["q"])
    variables = list(doc["variables"])
    if len(variables) != p:
        raise GraphError(f"'variables' has {len(variables)} names, expected p={p}")
    if len(set(variables)) != p:
        raise GraphError("duplicate variable names")
    var_idx = {name: i for i, name in enumerate(variables)}

    def endpoint(spec):
        name = spec["var"]
        if name not in var_idx:
            raise GraphError(f"unknown variable {name!r}")
        return node_index(var_idx[name], int(spec.get("lag", 0)), p, q)

    directed, undirected = [], []
    for e in doc["edges"]:
        u, v = endpoint(e["from"]), endpoint(e["to"])
        lag_from = node_lag(u, p, q)
        lag_to = node_lag(v, p, q)
        if e.get("undirected"):
            if lag_from != lag_to:
                raise GraphError("cross-time edges cannot be undirected")
            undirected.append((u, v))
        else:
            if lag_from < lag_to:
                raise GraphError(f"edge {e} points backwards in time")
            directed.append((u, v))
    n = p * (q + 1)
    if undirected:
        return Pdag(n, directed, undirected), p, q, variables
    dag = Dag(n, directed)
    dag.check_dynamic(p, q)
    return dag, p, q, variables


def load_graph_file(path) -> tuple[Dag | Pdag, int, int, list[str]]:
    with open(path) as fh:
        doc = json.load(fh)
    return graph_from_json(doc)
