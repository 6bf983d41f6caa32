"""Security checkers producing verdicts with deterministic witnesses.

Every trace-quantified check runs over the bulk engine in ``traceindex`` and
extracts witnesses with the shared selection rule, so reported pairs are
stable across runs and scales.  Purge-style comparisons and the state-level
certification are quantifier-light and stay in plain python.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from .model import (
    InputError,
    PolicyEnhancedSystem,
    State,
    Trace,
    permits,
    reachable_states,
    run,
    shortlex_key,
    step,
    traces_upto,
    unfold,
)
from .traceindex import MATERIALIZE_LIMIT, TraceIndex
from .trees import TracePartition, partition_by, select_violation_seq
from .verdicts import (
    BOUNDED_SECURE,
    CERTIFIED_SECURE,
    INCONCLUSIVE,
    INSECURE,
    Verdict,
)


# ---------------------------------------------------------------------------
# observation consistency over bulk label arrays


def _grouped_violation(
    idx: TraceIndex,
    key: np.ndarray,
    values: np.ndarray,
) -> Optional[Tuple[Trace, Trace]]:
    """Witness pair for the first labelling with inconsistent values.

    ``key`` groups nodes, ``values`` must be constant per group.  Returns the
    rule-minimal pair over all offending groups, or None.
    """
    sig = idx.signature
    uniq, ginv = np.unique(key, return_inverse=True)
    gmin = np.full(len(uniq), np.iinfo(np.int64).max, dtype=np.int64)
    gmax = np.full(len(uniq), np.iinfo(np.int64).min, dtype=np.int64)
    np.minimum.at(gmin, ginv, values)
    np.maximum.at(gmax, ginv, values)
    bad = np.nonzero(gmin != gmax)[0]
    if not len(bad):
        return None
    order = np.argsort(ginv, kind="stable")
    sorted_g = ginv[order]
    starts = np.searchsorted(sorted_g, bad, side="left")
    ends = np.searchsorted(sorted_g, bad, side="right")
    best = None
    for s_, e_ in zip(starts, ends):
        member_ids = order[s_:e_]
        traces = [idx.trace_of(int(i)) for i in member_ids]
        vals = values[member_ids].tolist()
        pair = select_violation_seq(sig, traces, vals)
        if pair is None:
            continue
        x, y = pair
        rank = (shortlex_key(sig, y), shortlex_key(sig, x))
        if best is None or rank < best[0]:
            best = (rank, pair)
    return best[1] if best else None


def _observation_consistency(
    idx: TraceIndex,
    labels: np.ndarray,
    property_name: str,
    notes: Tuple[str, ...] = (),
    details: Optional[Mapping] = None,
) -> Verdict:
    """Equal labels must yield equal observations, per domain."""
    sig = idx.signature
    best = None
    for ui, u in enumerate(sig.domains):
        obs_arr = idx.obs_ids[ui][idx.states].astype(np.int64)
        pair = _grouped_violation(idx, labels[ui], obs_arr)
        if pair is None:
            continue
        x, y = pair
        rank = (shortlex_key(sig, y), shortlex_key(sig, x), ui)
        if best is None or rank < best[0]:
            best = (rank, (x, y, u))
    if best is not None:
        return Verdict(
            property=property_name,
            outcome=INSECURE,
            witness=best[1],
            depth=idx.depth,
            notes=notes,
            details=dict(details or {}),
        )
    return Verdict(
        property=property_name,
        outcome=BOUNDED_SECURE,
        depth=idx.depth,
        notes=notes,
        details=dict(details or {}),
    )


def strip_inactive_edges(
    system: PolicyEnhancedSystem,
) -> Tuple[PolicyEnhancedSystem, Tuple[str, ...]]:
    """Drop policy edges whose source domain never acts.

    An edge from a domain with no actions can never transmit anything, so
    removing it changes no security verdict; it does make locality-style
    judgements about that domain vacuous instead of spurious.  Returns the
    system unchanged (and no notes) when there is nothing to strip.
    """
    sig = system.signature
    active = {sig.domain_of(a) for a in sig.actions}
    idle = [u for u in sig.domains if u not in active]
    if not idle:
        return system, ()
    idle_set = set(idle)
    hit = sorted(
        {u for s in system.states for (u, _v) in system.edges[s] if u in idle_set},
        key=sig.domain_index,
    )
    if not hit:
        return system, ()
    hit_set = set(hit)
    edges = {
        s: frozenset(p for p in system.edges[s] if p[0] not in hit_set)
        for s in system.states
    }
    normalized = PolicyEnhancedSystem(
        signature=sig,
        states=system.states,
        initial=system.initial,
        transitions=system.transitions,
        obs=system.obs,
        edges=edges,
        truncated=system.truncated,
    )
    return normalized, ("stripped policy edges from inactive domains: " + ", ".join(hit),)


# ---------------------------------------------------------------------------
# trace-quantified checks


def check_ta_may_security(system: PolicyEnhancedSystem, depth: int) -> Verdict:
    """Permissive reading: actions are transmitted whenever the policy edge
    holds at the state where they happen; equal transmission trees must look
    identical to the observer."""
    system, notes = strip_inactive_edges(system)
    idx = TraceIndex(system, depth)
    labels = idx.ta_labels()
    return _observation_consistency(idx, labels, "ta-permissive", notes=notes)


def check_unwinding_security(system: PolicyEnhancedSystem, depth: int) -> Verdict:
    """Prohibitive reading via the unwinding closure: traces merged by
    deletion of disallowed actions and joint stepping must look identical."""
    system, notes = strip_inactive_edges(system)
    idx = TraceIndex(system, depth)
    roots, counts = idx.unwinding_roots()
    return _observation_consistency(
        idx,
        roots,
        "unwinding",
        notes=notes,
        details={"rule_applications": dict(counts)},
    )


def check_ta_must_security(system: PolicyEnhancedSystem, depth: int) -> Verdict:
    """Prohibitive reading via the transmission trees themselves.

    Builds the prohibitive tree for every trace and observer, with the edge
    test replaced by joint knowledge of the edge, and compares observations
    across equal trees.  Same property as ``check_unwinding_security`` by the
    coincidence theorem, computed along the independent route; keeping both
    is deliberate.  Materializes every trace, so bounded by engine size.
    """
    from .trees import TreeArena, check_f_security, partition_from_labels
    from .unwinding import ta_must_labels, unwinding_partition

    system, notes = strip_inactive_edges(system)
    result = unwinding_partition(system, depth)
    labels = ta_must_labels(system, result, arena=TreeArena())
    sig = system.signature
    parts = {
        u: partition_from_labels(sig, labels[u], depth, domain=u) for u in sig.domains
    }
    verdict = check_f_security(
        parts, system, depth, mode="final-obs", property_name="ta-prohibitive"
    )
    if notes:
        verdict = dataclasses.replace(verdict, notes=verdict.notes + notes)
    return verdict


def check_static(system: PolicyEnhancedSystem) -> bool:
    """True iff the policy never changes across reachable states."""
    e0 = system.edges[system.initial]
    return all(system.edges[s] == e0 for s in reachable_states(system))


def check_ta_static_security(system: PolicyEnhancedSystem, depth: int) -> Verdict:
    """Security against the fixed policy read off the initial state.

    For systems whose policy actually changes this is a different property
    from the dynamic readings; a note marks that case.
    """
    system, notes = strip_inactive_edges(system)
    e0 = system.edges[system.initial]
    frozen = PolicyEnhancedSystem(
        signature=system.signature,
        states=system.states,
        initial=system.initial,
        transitions=system.transitions,
        obs=system.obs,
        edges={s: e0 for s in system.states},
        truncated=system.truncated,
    )
    idx = TraceIndex(frozen, depth)
    labels = idx.ta_labels()
    if not check_static(system):
        notes = notes + (
            "policy is state-dependent; the static reading fixes the initial state's edges",
        )
    return _observation_consistency(idx, labels, "ta-static", notes=notes)


_KNOWN_TO = (None, "sender", "receiver")


def check_locality(
    system: PolicyEnhancedSystem,
    depth: int,
    known_to: Optional[str] = None,
) -> Verdict:
    """Is the policy determined by what the endpoint domains can observe?

    For each ordered pair (u, v), any two traces that u and v jointly cannot
    distinguish must agree on the edge u to v.  ``known_to`` strengthens the
    requirement to one endpoint alone ("sender" = u, "receiver" = v).
    """
    if known_to not in _KNOWN_TO:
        raise InputError(f"known_to must be one of {_KNOWN_TO}")
    system, notes = strip_inactive_edges(system)
    idx = TraceIndex(system, depth)
    labels = idx.ta_labels()
    sig = idx.signature
    best = None
    pair_pos = -1
    for ui, u in enumerate(sig.domains):
        for vi, v in enumerate(sig.domains):
            if ui == vi:
                continue
            pair_pos += 1
            if known_to == "sender":
                key = labels[ui]
            elif known_to == "receiver":
                key = labels[vi]
            else:
                key = (labels[ui].astype(np.uint64) << np.uint64(32)) | labels[
                    vi
                ].astype(np.uint64)
            atom = idx.edge_bool[idx.states, ui, vi].astype(np.int64)
            pair = _grouped_violation(idx, key, atom)
            if pair is None:
                continue
            x, y = pair
            rank = (shortlex_key(sig, y), shortlex_key(sig, x), pair_pos)
            if best is None or rank < best[0]:
                best = (rank, (x, y, u, v))
    name = "locality" if known_to is None else f"locality-{known_to}"
    if best is not None:
        return Verdict(
            property=name, outcome=INSECURE, witness=best[1], depth=depth, notes=notes
        )
    return Verdict(property=name, outcome=BOUNDED_SECURE, depth=depth, notes=notes)


def check_globally_known(
    system: PolicyEnhancedSystem,
    policy_domain: str,
    depth: int,
) -> Verdict:
    """Is the policy public knowledge administered by one domain?

    Two obligations: the administering domain may always flow to everyone,
    and the policy state is a function of the administering domain's own
    actions.  Holding both makes every locality variant immediate; the
    verdict cross-checks plain locality and records the outcome.
    """
    sig = system.signature
    if policy_domain not in sig.domains:
        raise InputError(f"unknown domain {policy_domain!r}")
    for s in reachable_states(system, depth):
        for u in sig.domains:
            if not permits(system, s, policy_domain, u):
                return Verdict(
                    property="globally-known",
                    outcome=INSECURE,
                    witness=(s, u),
                    depth=depth,
                    notes=("administering domain cannot flow to every domain",),
                )
    _guard_enumeration(sig, depth, "the public-policy check")
    groups: Dict[Trace, List[Trace]] = {}
    ends: Dict[Trace, State] = {}
    for t in traces_upto(sig, depth):
        ends[t] = system.initial if not t else step(system, ends[t[:-1]], t[-1])
        proj = tuple(a for a in t if sig.domain_of(a) == policy_domain)
        groups.setdefault(proj, []).append(t)
    best = None
    for members in groups.values():
        pair = select_violation_seq(
            sig, members, [system.edges[ends[t]] for t in members]
        )
        if pair is None:
            continue
        x, y = pair
        rank = (shortlex_key(sig, y), shortlex_key(sig, x))
        if best is None or rank < best[0]:
            best = (rank, pair)
    if best is not None:
        x, y = best[1]
        return Verdict(
            property="globally-known",
            outcome=INSECURE,
            witness=(x, y),
            depth=depth,
            notes=(
                "policy state is not a function of the administering domain's actions",
            ),
        )
    cross = check_locality(system, depth)
    note = (
        "locality cross-check passed"
        if cross
        else "locality cross-check FAILED unexpectedly"
    )
    return Verdict(
        property="globally-known",
        outcome=BOUNDED_SECURE,
        depth=depth,
        notes=(note,),
    )


def policy_leq(
    tighter: PolicyEnhancedSystem,
    looser: PolicyEnhancedSystem,
    depth: int,
) -> bool:
    """Does the first system permit at most what the second permits, on every
    trace up to the depth?  Edges depend only on the pair of states reached in
    lockstep, so the walk deduplicates on state pairs."""
    if tighter.signature != looser.signature:
        raise InputError("systems have different signatures")
    sig = tighter.signature
    seen = {(tighter.initial, looser.initial)}
    frontier = [(tighter.initial, looser.initial)]
    d = 0
    while frontier:
        for (s1, s2) in frontier:
            if not tighter.edges[s1] <= looser.edges[s2]:
                return False
        if d == depth:
            break
        nxt = []
        for (s1, s2) in frontier:
            for a in sig.actions:
                pair = (tighter.transitions[(s1, a)], looser.transitions[(s2, a)])
                if pair not in seen:
                    seen.add(pair)
                    nxt.append(pair)
        frontier = nxt
        d += 1
    return True


def restrict_to_local(system: PolicyEnhancedSystem, depth: int) -> PolicyEnhancedSystem:
    """Largest locally-determined weakening of the policy, as a tree system.

    The result has one state per trace up to the depth; an edge (u, v) holds
    at a trace iff the original policy grants it at every trace the pair
    {u, v} jointly cannot distinguish.  Granted edges never exceed the
    original ones, and the result's policy is local by construction.
    """
    system, _ = strip_inactive_edges(system)
    idx = TraceIndex(system, depth)
    if idx.n_nodes > MATERIALIZE_LIMIT:
        raise InputError("too many traces to materialize the localized system")
    roots, _ = idx.unwinding_roots()
    sig = idx.signature
    tree = unfold(system, depth)
    granted: Dict[int, set] = {i: set() for i in range(idx.n_nodes)}
    for ui, u in enumerate(sig.domains):
        for vi, v in enumerate(sig.domains):
            if ui == vi:
                continue
            key = (roots[ui].astype(np.uint64) << np.uint64(32)) | roots[vi].astype(
                np.uint64
            )
            uniq, ginv = np.unique(key, return_inverse=True)
            atom = idx.edge_bool[idx.states, ui, vi].astype(np.int64)
            gmin = np.ones(len(uniq), dtype=np.int64)
            np.minimum.at(gmin, ginv, atom)
            keep = gmin[ginv] == 1
            for node in np.nonzero(keep)[0]:
                granted[int(node)].add((u, v))
    edges = {idx.trace_of(i): frozenset(granted[i]) for i in range(idx.n_nodes)}
    return PolicyEnhancedSystem(
        signature=sig,
        states=tree.states,
        initial=tree.initial,
        transitions=tree.transitions,
        obs=tree.obs,
        edges=edges,
        truncated=tree.truncated,
    )


# ---------------------------------------------------------------------------
# purge-style comparison semantics


def _source_table(system: PolicyEnhancedSystem, domain: str) -> Callable:
    """Memoized source-set recursion for one observer.

    Sources of the empty trace are the observer alone; a leading action joins
    the sources iff its domain may flow, at the current state, to someone who
    is already a source of the rest.
    """
    sig = system.signature
    memo: Dict[tuple, frozenset] = {}

    def go(suffix: Trace, state: State) -> frozenset:
        key = (suffix, state)
        got = memo.get(key)
        if got is not None:
            return got
        if not suffix:
            out = frozenset((domain,))
        else:
            a = suffix[0]
            inner = go(suffix[1:], step(system, state, a))
            d = sig.domain_of(a)
            if any(permits(system, state, d, v) for v in inner):
                out = inner | {d}
            else:
                out = inner
        memo[key] = out
        return out

    return go


def dsrc(
    system: PolicyEnhancedSystem,
    trace: Trace,
    domain: str,
    state: Optional[State] = None,
) -> frozenset:
    """Domains whose actions may have influenced the observer over the trace."""
    if domain not in system.signature.domains:
        raise InputError(f"unknown domain {domain!r}")
    start = system.initial if state is None else state
    return _source_table(system, domain)(tuple(trace), start)


def _lpurge(system, trace: Trace, domain: str, state: State, src: Callable) -> Trace:
    sig = system.signature
    out: List[str] = []
    suffix = tuple(trace)
    s = state
    while suffix:
        a = suffix[0]
        d = sig.domain_of(a)
        if any(permits(system, s, d, v) for v in src(suffix, s)):
            out.append(a)
        s = step(system, s, a)
        suffix = suffix[1:]
    return tuple(out)


def lpurge(
    system: PolicyEnhancedSystem,
    trace: Trace,
    domain: str,
    state: Optional[State] = None,
) -> Trace:
    """Keep an action iff it may flow to some current source; the purge walks
    every state of the original trace, deleted actions included."""
    if domain not in system.signature.domains:
        raise InputError(f"unknown domain {domain!r}")
    start = system.initial if state is None else state
    return _lpurge(system, trace, domain, start, _source_table(system, domain))


def _dipurge(system, trace: Trace, domain: str, state: State, src: Callable) -> Trace:
    sig = system.signature
    out: List[str] = []
    suffix = tuple(trace)
    s = state
    while suffix:
        a = suffix[0]
        if sig.domain_of(a) in src(suffix, s):
            out.append(a)
            s = step(system, s, a)
        suffix = suffix[1:]
    return tuple(out)


def dipurge(
    system: PolicyEnhancedSystem,
    trace: Trace,
    domain: str,
    state: Optional[State] = None,
) -> Trace:
    """Keep an action iff its domain is a source; unlike ``lpurge`` the state
    does not advance past deleted actions, so the purged trace is a run of the
    system in its own right."""
    if domain not in system.signature.domains:
        raise InputError(f"unknown domain {domain!r}")
    start = system.initial if state is None else state
    return _dipurge(system, trace, domain, start, _source_table(system, domain))


def _guard_enumeration(sig, depth: int, what: str) -> None:
    total = 1
    size = 1
    for _ in range(depth):
        size *= len(sig.actions)
        total += size
        if total > MATERIALIZE_LIMIT:
            raise InputError(f"too many traces for {what} at depth {depth}")


def check_lpurge_security(system: PolicyEnhancedSystem, depth: int) -> Verdict:
    """Does every trace look like its purged counterpart?

    The witness is the shortlex-first trace (with the first domain in
    declaration order) whose observation differs from its purge's; the purged
    trace rides along in the details.
    """
    system, notes = strip_inactive_edges(system)
    sig = system.signature
    _guard_enumeration(sig, depth, "the purge comparison")
    srcs = {u: _source_table(system, u) for u in sig.domains}
    ends: Dict[Trace, State] = {}
    for t in traces_upto(sig, depth):
        ends[t] = system.initial if not t else step(system, ends[t[:-1]], t[-1])
        for u in sig.domains:
            purged = _lpurge(system, t, u, system.initial, srcs[u])
            if system.obs[(u, run(system, purged))] != system.obs[(u, ends[t])]:
                return Verdict(
                    property="purge",
                    outcome=INSECURE,
                    witness=(t, u),
                    depth=depth,
                    notes=notes,
                    details={"purged": purged},
                )
    return Verdict(property="purge", outcome=BOUNDED_SECURE, depth=depth, notes=notes)


def check_i_security(system: PolicyEnhancedSystem, depth: int) -> Verdict:
    """Purge-based security from every reachable start state.

    Traces with the same source-filtered purge must look identical to the
    observer.  States are tried in discovery order and the first state with a
    violating pair wins; within a state the pair follows the witness rule.
    """
    system, stripped = strip_inactive_edges(system)
    sig = system.signature
    _guard_enumeration(sig, depth, "the purge comparison")
    srcs = {u: _source_table(system, u) for u in sig.domains}
    for start in reachable_states(system):
        ends: Dict[Trace, State] = {}
        groups: Dict[Tuple[str, Trace], List[Trace]] = {}
        for t in traces_upto(sig, depth):
            ends[t] = start if not t else step(system, ends[t[:-1]], t[-1])
            for u in sig.domains:
                purged = _dipurge(system, t, u, start, srcs[u])
                groups.setdefault((u, purged), []).append(t)
        best = None
        for ui, u in enumerate(sig.domains):
            for (gu, purged), members in groups.items():
                if gu != u:
                    continue
                vals = [system.obs[(u, ends[t])] for t in members]
                pair = select_violation_seq(sig, members, vals)
                if pair is None:
                    continue
                x, y = pair
                rank = (shortlex_key(sig, y), shortlex_key(sig, x), ui)
                if best is None or rank < best[0]:
                    best = (rank, (start, x, y, u), purged)
        if best is not None:
            return Verdict(
                property="intransitive-purge",
                outcome=INSECURE,
                witness=best[1],
                depth=depth,
                details={"common_purge": best[2]},
                notes=stripped + ("quantified over every reachable start state",),
            )
    return Verdict(
        property="intransitive-purge",
        outcome=BOUNDED_SECURE,
        depth=depth,
        notes=stripped + ("quantified over every reachable start state",),
    )


# ---------------------------------------------------------------------------
# finite-state certification


def state_unwinding_check(system: PolicyEnhancedSystem, mode: str = "box") -> Verdict:
    """Sound but incomplete certification directly on the state space.

    Builds per-domain state equivalences closed under the deletion rule and a
    step-consistency rule ("box": joint equivalence suffices; "diamond": the
    policy edge must additionally hold at both states), then demands equal
    observations inside every class.  Success certifies security at every
    depth; failure is inconclusive, not a counterexample.
    """
    if mode not in ("box", "diamond"):
        raise InputError(f"unknown mode {mode!r}")
    system, stripped = strip_inactive_edges(system)
    sig = system.signature
    reach = list(reachable_states(system))
    index = {s: i for i, s in enumerate(reach)}
    parent: Dict[str, List[int]] = {u: list(range(len(reach))) for u in sig.domains}

    def find(p: List[int], i: int) -> int:
        root = i
        while p[root] != root:
            root = p[root]
        while p[i] != root:
            p[i], i = root, p[i]
        return root

    def union(p: List[int], i: int, j: int) -> bool:
        ri, rj = find(p, i), find(p, j)
        if ri == rj:
            return False
        if rj < ri:
            ri, rj = rj, ri
        p[rj] = ri
        return True

    for s in reach:
        si = index[s]
        for a in sig.actions:
            d = sig.domain_of(a)
            ti = index[system.transitions[(s, a)]]
            for u in sig.domains:
                if not permits(system, s, d, u):
                    union(parent[u], si, ti)

    changed = True
    while changed:
        changed = False
        for u in sig.domains:
            pu = parent[u]
            for a in sig.actions:
                d = sig.domain_of(a)
                pd = parent[d]
                first: Dict[Tuple[int, int], int] = {}
                for s in reach:
                    si = index[s]
                    if mode == "diamond" and not permits(system, s, d, u):
                        continue
                    key = (find(pu, si), find(pd, si))
                    ti = index[system.transitions[(s, a)]]
                    prev = first.get(key)
                    if prev is None:
                        first[key] = ti
                    elif union(pu, prev, ti):
                        changed = True

    best = None
    for ui, u in enumerate(sig.domains):
        pu = parent[u]
        exemplar: Dict[int, int] = {}
        for s in reach:
            si = index[s]
            root = find(pu, si)
            xi = exemplar.setdefault(root, si)
            if system.obs[(u, reach[xi])] != system.obs[(u, s)]:
                rank = (si, xi, ui)
                if best is None or rank < best[0]:
                    best = (rank, (reach[xi], s, u))
    counts = {u: len({find(parent[u], i) for i in range(len(reach))}) for u in sig.domains}
    name = f"state-unwinding-{mode}"
    if best is not None:
        return Verdict(
            property=name,
            outcome=INCONCLUSIVE,
            witness=best[1],
            notes=stripped
            + (
                "state-level rules are sound but incomplete; "
                "this failure is not a counterexample",
            ),
            details={"class_counts": counts, "states_checked": len(reach)},
        )
    return Verdict(
        property=name,
        outcome=CERTIFIED_SECURE,
        notes=stripped + ("holds on all reachable states; certifies every trace depth",),
        details={"class_counts": counts, "states_checked": len(reach)},
    )


# ---------------------------------------------------------------------------
# convenience: materialized partitions for the permissive labels


def ta_may_partitions(
    system: PolicyEnhancedSystem, depth: int
) -> Dict[str, TracePartition]:
    """Permissive-tree partitions per domain, for callers that need classes
    rather than a verdict.  Materializes traces, so bounded by size."""
    idx = TraceIndex(system, depth)
    if idx.n_nodes > MATERIALIZE_LIMIT:
        raise InputError("too many traces to materialize partitions")
    labels = idx.ta_labels()
    sig = idx.signature
    traces = [idx.trace_of(i) for i in range(idx.n_nodes)]
    out = {}
    for ui, u in enumerate(sig.domains):
        row = labels[ui]
        out[u] = partition_by(
            sig,
            {traces[i]: int(row[i]) for i in range(idx.n_nodes)},
            depth,
            domain=u,
        )
    return out
