"""Max-min parents-and-children search for the PCD of a node.

The forward phase grows a candidate set using the max-min heuristic; the
backward phase removes candidates separable from the target given some
subset of the remaining candidates.  Association is zero whenever the CI
test accepts independence, so the stopping rule "the maximum is zero"
coincides with all remaining variables being separated.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .graph import SepsetRegistry


@dataclass
class MmpcConfig:
    max_sepset_size: int | None = 3  # None = unbounded (exponential)
    candidate_scope: frozenset[int] | None = None  # None = all other nodes

    def __post_init__(self):
        if self.max_sepset_size is not None and self.max_sepset_size < 0:
            raise ValueError("max_sepset_size must be >= 0 or None")


@dataclass
class PcdResult:
    node: int
    pcd: frozenset[int]
    sepsets: SepsetRegistry
    test_count: int


def _subsets(pool: Sequence[int], cap: int | None, containing: int | None = None):
    """Subsets of pool (optionally forced to contain one element), smallest first."""
    pool = list(pool)
    if containing is not None:
        rest = [x for x in pool if x != containing]
        top = len(rest) if cap is None else min(cap - 1, len(rest))
        for k in range(top + 1):
            for combo in itertools.combinations(rest, k):
                yield frozenset((containing, *combo))
    else:
        top = len(pool) if cap is None else min(cap, len(pool))
        for k in range(top + 1):
            for combo in itertools.combinations(pool, k):
                yield frozenset(combo)


def _assoc(tester, u: int, v: int, Z: frozenset[int]) -> float:
    res = tester.test(u, v, Z)
    return 0.0 if res.independent else 1.0 - res.p_value


def _oracle_separator(tester, u: int, v: int, pool, cap: int | None):
    """Shortcut past subset enumeration for exact testers.

    Returns (handled, witness).  handled=True with witness=None means no
    subset of pool separates the pair; handled=True with a witness means
    that witness does and fits the cap.  handled=False falls back to the
    generic enumeration (tester has no shortcut, or the separator found
    exceeds the cap while a smaller one may still exist).
    """
    probe = getattr(tester, "find_separator", None)
    if probe is None:
        return False, None
    S = probe(u, v, pool)
    if S is None:
        return True, None
    if cap is None or len(S) <= cap:
        return True, S
    return False, None


def min_assoc(tester, u: int, v: int, cpcd: Sequence[int],
              cfg: MmpcConfig | None = None) -> tuple[float, frozenset[int]]:
    """Minimum association of (u, v) over subsets of cpcd, smallest first.

    Returns (value, witness); exits early at value 0, so the witness of a
    separated pair is a smallest separating subset.
    """
    cfg = cfg or MmpcConfig()
    if v == u or v in cpcd:
        raise ValueError("v must differ from u and lie outside cpcd")
    handled, S = _oracle_separator(tester, u, v, cpcd, cfg.max_sepset_size)
    if handled:
        if S is None:
            return _assoc(tester, u, v, frozenset()), frozenset()
        return 0.0, S
    best, witness = None, frozenset()
    for Z in _subsets(cpcd, cfg.max_sepset_size):
        a = _assoc(tester, u, v, Z)
        if best is None or a < best:
            best, witness = a, Z
        if best == 0.0:
            break
    return best, witness


def mmpc_forward(tester, u: int, cfg: MmpcConfig | None = None,
                 sepsets: SepsetRegistry | None = None) -> list[int]:
    """Forward phase: grow CPCD by the max-min heuristic.

    Candidates whose minimum association hits zero are dropped for good
    (the minimum can only decrease) and their witness separator recorded.
    Ties in the argmax break toward the lowest node index.
    """
    cfg = cfg or MmpcConfig()
    if sepsets is None:
        sepsets = SepsetRegistry()
    scope = cfg.candidate_scope
    if scope is None:
        scope = frozenset(range(tester.node_count)) - {u}
    if u in scope:
        raise ValueError("candidate scope must exclude the target")

    cpcd: list[int] = []
    # per-candidate running minimum over all subsets examined so far
    state: dict[int, tuple[float, frozenset[int]]] = {}
    pending = sorted(scope)
    for v in list(pending):
        a = _assoc(tester, u, v, frozenset())
        if a == 0.0:
            sepsets.record(u, v, frozenset())
            pending.remove(v)
        else:
            state[v] = (a, frozenset())

    while pending:
        best_v, best_a = None, -1.0
        for v in pending:
            a, _ = state[v]
            if a > best_a:
                best_v, best_a = v, a
        if best_a == 0.0:
            break
        cpcd.append(best_v)
        pending.remove(best_v)
        state.pop(best_v)
        # fold in subsets that contain the new member
        for v in list(pending):
            cur, _ = state[v]
            handled, S = _oracle_separator(tester, u, v, cpcd, cfg.max_sepset_size)
            if handled:
                if S is not None:
                    sepsets.record(u, v, S)
                    pending.remove(v)
                    state.pop(v)
                continue
            for Z in _subsets(cpcd, cfg.max_sepset_size, containing=best_v):
                if v in Z:
                    continue
                a = _assoc(tester, u, v, Z)
                if a < cur:
                    cur = a
                    state[v] = (a, Z)
                if cur == 0.0:
                    break
            if cur == 0.0:
                sepsets.record(u, v, state[v][1])
                pending.remove(v)
                state.pop(v)
    for v in pending:  # max hit zero: remaining candidates all separated
        sepsets.record(u, v, state[v][1])
    return cpcd


def mmpc_backward(tester, u: int, cpcd: Sequence[int],
                  cfg: MmpcConfig | None = None,
                  sepsets: SepsetRegistry | None = None) -> list[int]:
    """Backward phase: remove false positives separable within CPCD.

    Candidates are scanned in insertion order; the pass repeats until no
    removal happens.
    """
    cfg = cfg or MmpcConfig()
    if sepsets is None:
        sepsets = SepsetRegistry()
    kept = list(cpcd)
    changed = True
    while changed:
        changed = False
        for v in list(kept):
            rest = [w for w in kept if w != v]
            handled, S = _oracle_separator(tester, u, v, rest, cfg.max_sepset_size)
            if handled:
                if S is not None:
                    kept.remove(v)
                    sepsets.record(u, v, S)
                    changed = True
                continue
            for Z in _subsets(rest, cfg.max_sepset_size):
                if tester.test(u, v, Z).independent:
                    kept.remove(v)
                    sepsets.record(u, v, Z)
                    changed = True
                    break
    return kept


def find_pcd(tester, u: int, cfg: MmpcConfig | None = None) -> PcdResult:
    """Forward then backward phase; separators of every rejected candidate
    are collected into the result registry."""
    cfg = cfg or MmpcConfig()
    sepsets = SepsetRegistry()
    calls_before = tester.calls
    cpcd = mmpc_forward(tester, u, cfg, sepsets)
    kept = mmpc_backward(tester, u, cpcd, cfg, sepsets)
    return PcdResult(node=u, pcd=frozenset(kept), sepsets=sepsets,
                     test_count=tester.calls - calls_before)
