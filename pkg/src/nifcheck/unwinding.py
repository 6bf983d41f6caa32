"""Unwinding closure over traces and the prohibitive transmission trees.

The closure merges traces a domain cannot tell apart: deleting an action the
policy disallowed leaves the observer's class unchanged, and two traces that
are jointly equivalent for an observer and an actor stay equivalent after the
actor moves.  The prohibitive trees then branch on distributed knowledge over
those classes, and the two labellings are compared class for class, with a
margin that separates genuine disagreement from artifacts of the depth bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from .model import InputError, PolicyEnhancedSystem, Trace, permits, run
from .traceindex import MATERIALIZE_LIMIT, TraceIndex
from .trees import (
    LEAF,
    SHARED_ARENA,
    TracePartition,
    TreeArena,
    partition_by,
    select_violation,
)


@dataclass(frozen=True)
class UnwindingResult:
    """Finished per-domain closure, plus how much work it took.

    ``saturated`` records that the final fixpoint sweep fired no rule; the
    engine always runs until that holds, so a False value would indicate an
    aborted computation.  Transitive closure is implicit in the union-find,
    so ``rule_counts`` tracks only the two generating rules and the sweeps.
    """

    partitions: Mapping[str, TracePartition]
    rule_counts: Mapping[str, int]
    depth: int
    saturated: bool = True

    def same_class(self, domain: str, a: Trace, b: Trace) -> bool:
        return self.partitions[domain].same_class(a, b)


def unwinding_partition(system: PolicyEnhancedSystem, depth: int) -> UnwindingResult:
    """Materialize the closure as trace partitions.

    This builds explicit trace tuples for every node, so it is capped at a
    couple of million traces; verdict-only checks go through the array path
    in ``checkers`` and never materialize.
    """
    idx = TraceIndex(system, depth)
    if idx.n_nodes > MATERIALIZE_LIMIT:
        raise InputError(
            f"{idx.n_nodes} traces is too many to materialize; "
            "use check_unwinding_security for verdicts at this scale"
        )
    roots, counts = idx.unwinding_roots()
    sig = system.signature
    traces = [idx.trace_of(i) for i in range(idx.n_nodes)]
    partitions = {}
    for ui, u in enumerate(sig.domains):
        row = roots[ui]
        labels = {traces[i]: int(row[i]) for i in range(idx.n_nodes)}
        partitions[u] = partition_by(sig, labels, depth, domain=u)
    return UnwindingResult(
        partitions=partitions, rule_counts=dict(counts), depth=depth, saturated=True
    )


def holds_distributed(
    result: UnwindingResult,
    system: PolicyEnhancedSystem,
    group: Iterable[str],
    atom: Tuple[str, str],
    trace: Trace,
) -> bool:
    """Does the group jointly know the policy edge holds after this trace?

    True iff the edge holds at the end of every trace the whole group finds
    equivalent to the given one.
    """
    names = tuple(group)
    if not names:
        raise InputError("knowledge group must contain at least one domain")
    u, v = atom
    parts = [result.partitions[g] for g in names]
    members = set(parts[0].members(trace))
    for p in parts[1:]:
        members &= set(p.members(trace))
    return all(permits(system, run(system, b), u, v) for b in members)


def _joint_atom(
    system: PolicyEnhancedSystem,
    result: UnwindingResult,
    actor: str,
    observer: str,
    prefix: Trace,
    cache: Dict[tuple, bool],
) -> bool:
    pd = result.partitions[actor]
    pu = result.partitions[observer]
    key = (actor, observer, pd.find(prefix), pu.find(prefix))
    got = cache.get(key)
    if got is None:
        in_u = set(pu.members(prefix))
        got = all(
            permits(system, run(system, b), actor, observer)
            for b in pd.members(prefix)
            if b in in_u
        )
        cache[key] = got
    return got


def ta_must(
    system: PolicyEnhancedSystem,
    result: UnwindingResult,
    trace: Trace,
    domain: str,
    arena: Optional[TreeArena] = None,
) -> int:
    """Transmission tree under the prohibitive reading: an action reaches the
    observer only when actor and observer jointly know it was allowed."""
    arena = SHARED_ARENA if arena is None else arena
    sig = system.signature
    if domain not in sig.domains:
        raise InputError(f"unknown domain {domain!r}")
    if len(trace) > result.depth:
        raise InputError("trace exceeds the closure depth")
    cache: Dict[tuple, bool] = {}
    cur = {u: LEAF for u in sig.domains}
    for i, a in enumerate(trace):
        prefix = trace[:i]
        d = sig.domain_of(a)
        nxt = {}
        for u in sig.domains:
            if u == d or _joint_atom(system, result, d, u, prefix, cache):
                nxt[u] = arena.node(cur[u], cur[d], a)
            else:
                nxt[u] = cur[u]
        cur = nxt
    return cur[domain]


def ta_must_labels(
    system: PolicyEnhancedSystem,
    result: UnwindingResult,
    arena: Optional[TreeArena] = None,
) -> Dict[str, Dict[Trace, int]]:
    """Prohibitive tree ids for every domain and every trace up to the
    closure depth, sharing prefix work and the joint-knowledge cache."""
    arena = SHARED_ARENA if arena is None else arena
    sig = system.signature
    cache: Dict[tuple, bool] = {}
    level: Dict[Trace, Dict[str, int]] = {(): {u: LEAF for u in sig.domains}}
    out: Dict[str, Dict[Trace, int]] = {u: {(): LEAF} for u in sig.domains}
    for _ in range(result.depth):
        nxt_level: Dict[Trace, Dict[str, int]] = {}
        for prefix, cur in level.items():
            for a in sig.actions:
                d = sig.domain_of(a)
                nxt = {}
                for u in sig.domains:
                    if u == d or _joint_atom(system, result, d, u, prefix, cache):
                        nxt[u] = arena.node(cur[u], cur[d], a)
                    else:
                        nxt[u] = cur[u]
                t = prefix + (a,)
                nxt_level[t] = nxt
                for u in sig.domains:
                    out[u][t] = nxt[u]
        level = nxt_level
    return out


@dataclass(frozen=True)
class AgreementReport:
    """Outcome of comparing the closure partitions with the prohibitive-tree
    partitions.

    The two coincide on unbounded traces, but the bounded closure can miss
    merges whose connecting traces are longer than the bound, so mismatched
    pairs are split by whether they fit strictly inside the bound by the
    given margin.  ``interior_agrees`` is the meaningful sound signal.
    """

    depth: int
    margin: int
    interior_agrees: bool
    interior_mismatches: Tuple[Tuple[Trace, Trace, str, str], ...]
    boundary_mismatches: Tuple[Tuple[Trace, Trace, str, str], ...]
    class_counts: Mapping[str, Tuple[int, int]]

    def __bool__(self) -> bool:
        return self.interior_agrees


def _mismatches_upto(
    sig,
    part: TracePartition,
    other_label,
    cutoff: int,
    domain: str,
    kind: str,
) -> List[Tuple[Trace, Trace, str, str]]:
    found = []
    for members in part.classes():
        mem = [t for t in members if len(t) <= cutoff]
        pair = select_violation(sig, mem, other_label)
        if pair is not None:
            found.append((pair[0], pair[1], domain, kind))
    return found


def check_theorem_mustunwind(
    system: PolicyEnhancedSystem,
    depth: int,
    margin: int = 1,
) -> AgreementReport:
    """Compare the closure with the prohibitive trees, per observer.

    The two labellings induce the same equivalence on unbounded traces; at a
    finite depth the closure can miss merges whose derivations pass beyond
    the bound, which is why a margin is subtracted before judging agreement.
    A mismatch kind of ``closure-coarser`` means one closure class holds two
    distinct tree labels; ``trees-coarser`` means one tree label spans two
    closure classes.  Pairs entirely within depth - margin land in
    ``interior_mismatches``; everything else is attributed to the bound.
    """
    if not 0 <= margin < depth:
        raise InputError("margin must satisfy 0 <= margin < depth")
    result = unwinding_partition(system, depth)
    must = ta_must_labels(system, result, arena=TreeArena())
    sig = system.signature
    cut = depth - margin
    interior: List[Tuple[Trace, Trace, str, str]] = []
    boundary: List[Tuple[Trace, Trace, str, str]] = []
    class_counts = {}
    for u in sig.domains:
        unw_part = result.partitions[u]
        must_lab = must[u]
        must_part = partition_by(sig, must_lab, depth, domain=u)
        class_counts[u] = (len(unw_part), len(must_part))
        sides = (
            (unw_part, must_lab.__getitem__, "closure-coarser"),
            (must_part, unw_part.find, "trees-coarser"),
        )
        for part, other, kind in sides:
            interior.extend(_mismatches_upto(sig, part, other, cut, u, kind))
            for x, y, dom_name, k in _mismatches_upto(sig, part, other, depth, u, kind):
                if len(x) > cut or len(y) > cut:
                    boundary.append((x, y, dom_name, k))
    return AgreementReport(
        depth=depth,
        margin=margin,
        interior_agrees=not interior,
        interior_mismatches=tuple(interior),
        boundary_mismatches=tuple(boundary),
        class_counts=class_counts,
    )
