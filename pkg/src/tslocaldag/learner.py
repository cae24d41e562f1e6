"""Two-part local structure learner around a current-time target node.

Part I builds the layered local skeleton out to depth d-1, directing
cross-time edges by time order as they appear.  Part II finds the edges at
layer d and extends along still-undirected paths until the remaining
undirected edges either orient or cannot be oriented at all.
"""

from __future__ import annotations

import itertools
import json
import logging
from collections import deque
from dataclasses import dataclass, field

from .graph import (GraphError, Pdag, SepsetRegistry, meek_closure, node_lag,
                    node_var)
from .mmpc import MmpcConfig, PcdResult, find_pcd

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PathRecord:
    """Worklist entry of part II: a frontier node and how it was reached."""

    leaf: int
    length: int
    path: tuple[int, ...]

    def __post_init__(self):
        if not self.path or self.leaf in self.path:
            raise ValueError("path must be non-empty and exclude the leaf")
        if self.length != len(self.path):
            raise ValueError("length must equal the number of hops from layer d-1")


@dataclass
class LearnConfig:
    mmpc: MmpcConfig = field(default_factory=MmpcConfig)
    ignore_time_order: bool = False  # baseline mode: treat all columns alike
    pcd_cache: dict | None = None  # share PCD results across runs on one tester


@dataclass
class LocalStructure:
    target: int
    depth: int
    p: int
    q: int
    graph: Pdag
    layers: list[frozenset[int]]
    sepsets: SepsetRegistry
    visited: frozenset[int]
    diagnostics: list[str]

    @property
    def parents(self) -> frozenset[int]:
        return frozenset(self.graph.parents_of(self.target))

    @property
    def children(self) -> frozenset[int]:
        return frozenset(self.graph.children_of(self.target))

    @property
    def pc(self) -> frozenset[int]:
        return frozenset(self.graph.neighbors(self.target))

    def to_json(self, variables) -> dict:
        from .graph import graph_to_json
        doc = graph_to_json(self.graph, self.p, self.q, variables)

        def endpoint(idx):
            return {"var": variables[node_var(idx, self.p)],
                    "lag": node_lag(idx, self.p, self.q)}

        doc["target"] = endpoint(self.target)
        doc["depth"] = self.depth
        doc["layers"] = [[endpoint(v) for v in sorted(layer)] for layer in self.layers]
        doc["sepsets"] = [
            {"a": endpoint(a), "b": endpoint(b), "sepset": [endpoint(z) for z in sorted(Z)]}
            for (a, b), Z in sorted(((tuple(sorted(pair)), Z)
                                     for pair, Z in self.sepsets.items()))
        ]
        doc["diagnostics"] = list(self.diagnostics)
        return doc


class _Driver:
    def __init__(self, tester, p: int, q: int, cfg: LearnConfig):
        self.tester = tester
        self.p = p
        self.q = q
        self.cfg = cfg
        n = p * (q + 1)
        if tester.node_count != n:
            raise GraphError(f"tester covers {tester.node_count} nodes, expected {n}")
        if cfg.ignore_time_order:
            self.C = frozenset(range(n))
        else:
            self.C = frozenset(range(p * q, n))
        self.graph = Pdag(n)
        self.sepsets = SepsetRegistry()
        self.V: set[int] = set()
        self.pcd_current: dict[int, frozenset[int]] = {}
        self.diagnostics: list[str] = []
        self.D = 1

    # -- PCD with optional cross-run cache -----------------------------------

    def _find_pcd(self, x: int) -> PcdResult:
        cache = self.cfg.pcd_cache
        if cache is not None and x in cache:
            return cache[x]
        mcfg = MmpcConfig(max_sepset_size=self.cfg.mmpc.max_sepset_size,
                          candidate_scope=self.cfg.mmpc.candidate_scope)
        res = find_pcd(self.tester, x, mcfg)
        if cache is not None:
            cache[x] = res
        return res

    # -- per-visit edge and orientation steps ---------------------------------

    def visit(self, x: int) -> None:
        if x in self.V:
            return
        res = self._find_pcd(x)
        self.V.add(x)
        self.sepsets.merge(res.sepsets)
        for w in sorted(res.pcd - self.C):  # earlier time point: edge is directed
            if not self.graph.adjacent(w, x):
                self.graph.add_directed(w, x)
        pcd_c = frozenset(res.pcd & self.C)
        self.pcd_current[x] = pcd_c
        for y in sorted(self.V - {x}):
            if y in pcd_c and x in self.pcd_current.get(y, frozenset()):
                if not self.graph.adjacent(x, y):
                    self.graph.add_undirected(x, y)
        self._v_structures_with_lag_parent(x)
        self._v_structures_within_visited(x)
        self.graph = meek_closure(self.graph)

    def _v_structures_with_lag_parent(self, x: int) -> None:
        lag_parents = sorted(self.graph.parents_of(x) - self.C)
        for y in sorted(self.graph.undirected_neighbors(x)):
            for w in lag_parents:
                if self.graph.adjacent(w, y):
                    continue
                self._apply_v_structure(w, x, y)

    def _v_structures_within_visited(self, x: int) -> None:
        for m in sorted({x} | self.graph.neighbors(x)):
            nbrs = sorted(self.graph.neighbors(m))
            for a, c in itertools.combinations(nbrs, 2):
                if x not in (m, a, c):
                    continue
                if self.graph.adjacent(a, c):
                    continue
                self._apply_v_structure(a, m, c)

    def _apply_v_structure(self, a: int, m: int, c: int) -> None:
        """Orient a->m<-c when m is outside the recorded separator of (a, c)."""
        arms = [(a, m), (c, m)]
        undirected = [arm for arm in arms if self.graph.has_undirected(*arm)]
        if not undirected:
            return
        if any(self.graph.has_directed(m, end) for end, _ in arms):
            return  # opposite arm already directed away; nothing sound to do
        sep = self.sepsets.get(a, c)
        if sep is None:
            self.diagnostics.append(
                f"no separator recorded for non-adjacent pair ({a}, {c}); "
                f"triple ({a}, {m}, {c}) skipped")
            logger.debug(self.diagnostics[-1])
            return
        if m in sep:
            return
        for end, mid in undirected:
            if not self.graph.orient(end, mid):
                self.diagnostics.append(
                    f"orientation {end}->{mid} skipped (cycle guard)")

    # -- Part I ---------------------------------------------------------------

    def part1(self, target: int, d: int) -> list[set[int]]:
        if node_lag(target, self.p, self.q) != 0:
            raise GraphError(f"target {target} is not in the current-time block")
        if d < 1:
            raise GraphError(f"depth must be >= 1, got {d}")
        self.visit(target)
        layers: list[set[int]] = [set() for _ in range(d + 1)]
        layers[0] = {target}
        self.L_all: set[int] = {target}
        queue: dict[int, deque[int]] = {1: deque(sorted(self.pcd_current[target]))}
        self.D = 1
        while self.D < d and queue.get(self.D):
            x = queue[self.D].popleft()
            self.visit(x)
            if (x not in self.L_all and x not in layers[self.D]
                    and any(self.graph.adjacent(x, y) for y in layers[self.D - 1])):
                layers[self.D].add(x)
                queue.setdefault(self.D + 1, deque()).extend(
                    sorted(self.pcd_current[x] - self.L_all))
            elif x not in self.L_all and x not in layers[self.D]:
                self.diagnostics.append(
                    f"node {x} dequeued at layer {self.D} but not adjacent to "
                    f"layer {self.D - 1}; discarded")
            if not queue[self.D]:
                self.L_all |= layers[self.D]
                self.D += 1
        return layers

    # -- Part II ----------------------------------------------------------------

    def part2(self, layers: list[set[int]], d: int) -> None:
        if self.D < d:
            return  # part I exhausted the component before reaching depth d
        work: deque[PathRecord] = deque()
        for u in sorted(layers[d - 1]):
            for v in sorted(self.pcd_current[u] - self.L_all):
                work.append(PathRecord(leaf=v, length=1, path=(u,)))
        part2_seen: set[int] = set()
        while work:
            rec = work.popleft()
            if any(not self.graph.has_undirected(a, b)
                   for a, b in zip(rec.path, rec.path[1:])):
                continue
            self.visit(rec.leaf)
            part2_seen.add(rec.leaf)
            last = rec.path[-1]
            if self.graph.has_undirected(rec.leaf, last):
                for v in sorted(self.pcd_current[rec.leaf]
                                - set(rec.path) - self.L_all - {rec.leaf}):
                    work.append(PathRecord(leaf=v, length=rec.length + 1,
                                           path=rec.path + (rec.leaf,)))
        # bookkeeping: layer d = fresh part-II nodes adjacent to layer d-1
        layers[d] = {v for v in part2_seen - self.L_all
                     if any(self.graph.adjacent(v, y) for y in layers[d - 1])}


def learn_local(tester, p: int, q: int, target: int, d: int,
                cfg: LearnConfig | None = None) -> LocalStructure:
    """Learn the local structure of ``target`` out to depth ``d``.

    Under oracle CI tests and faithfulness the result matches the true
    skeleton within depth d plus lagged edges into visited nodes, oriented
    as in the CPDAG of the unrolled graph.
    """
    cfg = cfg or LearnConfig()
    drv = _Driver(tester, p, q, cfg)
    layers = drv.part1(target, d)
    drv.part2(layers, d)
    return LocalStructure(target=target, depth=d, p=p, q=q, graph=drv.graph,
                          layers=[frozenset(s) for s in layers],
                          sepsets=drv.sepsets, visited=frozenset(drv.V),
                          diagnostics=drv.diagnostics)


def save_local_structure(ls: LocalStructure, variables, path) -> None:
    with open(path, "w") as fh:
        json.dump(ls.to_json(variables), fh, indent=1)
        fh.write("\n")
