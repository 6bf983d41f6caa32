"""Bulk labelling over the dense tree of traces.

Every trace up to the depth bound is a node; the node id of a trace is its
shortlex rank, so children are contiguous and parent/action decompose
arithmetically instead of being stored.  Labelling passes (run states,
permissive transmission trees, unwinding closure) sweep level by level over
numpy arrays, which keeps systems with tens of millions of traces inside a
two-minute budget.  Brute-force oracles in the test suite pin the semantics
at small scale.
"""

from __future__ import annotations

from bisect import bisect_right
from typing import Dict, List, Optional, Tuple

import numpy as np

from .model import InputError, PolicyEnhancedSystem, Trace

_MAX_NODES = 1 << 27
_MAX_ACTIONS = 1 << 10  # label packing reserves 10 bits for the action
_MAX_LABELS = 1 << 27  # and 27 bits for each child id

# Checks that build python tuples for every trace stop here; the array
# paths keep working well past this.
MATERIALIZE_LIMIT = 2_000_000


def _compress(parent: np.ndarray) -> np.ndarray:
    """Full path compression by pointer jumping.  Links always point to
    strictly smaller ids, so this terminates."""
    while True:
        hop = parent[parent]
        if np.array_equal(hop, parent):
            return hop
        parent = hop


class _PackedArena:
    """Interning table keyed by packed (left, right, action) words.

    Ids are dense, start at 1 (0 is the leaf), and are stable across levels:
    the same packed word always maps to the same id, so label equality is
    structural tree equality.
    """

    def __init__(self) -> None:
        self.keys = np.empty(0, dtype=np.uint64)
        self.ids = np.empty(0, dtype=np.int64)
        self.count = 1

    def intern(self, packed: np.ndarray) -> np.ndarray:
        uniq = np.unique(packed)
        if len(self.keys):
            pos = np.searchsorted(self.keys, uniq)
            pos_c = np.minimum(pos, len(self.keys) - 1)
            known = self.keys[pos_c] == uniq
            fresh = uniq[~known]
        else:
            fresh = uniq
        if len(fresh):
            new_ids = np.arange(self.count, self.count + len(fresh), dtype=np.int64)
            self.count += len(fresh)
            if self.count >= _MAX_LABELS:
                raise InputError("tree label space exhausted; reduce the depth bound")
            merged_keys = np.concatenate([self.keys, fresh])
            merged_ids = np.concatenate([self.ids, new_ids])
            order = np.argsort(merged_keys)
            self.keys = merged_keys[order]
            self.ids = merged_ids[order]
        pos = np.searchsorted(self.keys, packed)
        return self.ids[pos]


class TraceIndex:
    """Shortlex-ranked enumeration of all traces of length <= depth."""

    def __init__(self, system: PolicyEnhancedSystem, depth: int) -> None:
        if depth < 0:
            raise InputError("depth must be non-negative")
        sig = system.signature
        self.system = system
        self.signature = sig
        self.depth = depth
        self.n_actions = len(sig.actions)
        self.n_domains = len(sig.domains)
        if self.n_actions >= _MAX_ACTIONS:
            raise InputError("action alphabet too large for the bulk engine")

        sizes = [1]
        for _ in range(depth if self.n_actions else 0):
            sizes.append(sizes[-1] * self.n_actions)
        while len(sizes) < depth + 1:
            sizes.append(0)
        self.offs: List[int] = [0]
        for sz in sizes:
            self.offs.append(self.offs[-1] + sz)
        self.n_nodes = self.offs[-1]
        if self.n_nodes > _MAX_NODES:
            raise InputError(
                f"{self.n_nodes} traces at depth {depth} exceed the bulk engine limit"
            )

        self.state_names: Tuple = tuple(system.states)
        self.state_ids: Dict = {s: i for i, s in enumerate(self.state_names)}
        n_states = len(self.state_names)

        table = getattr(system.transitions, "table", None)
        if (
            table is not None
            and getattr(system.transitions, "state_order", None) == self.state_names
            and getattr(system.transitions, "actions", None) == sig.actions
        ):
            self.trans = table
        else:
            self.trans = np.empty((n_states, self.n_actions), dtype=np.int32)
            for i, s in enumerate(self.state_names):
                for j, a in enumerate(sig.actions):
                    self.trans[i, j] = self.state_ids[system.transitions[(s, a)]]

        self.obs_ids = np.empty((self.n_domains, n_states), dtype=np.int32)
        for ui, u in enumerate(sig.domains):
            intern: Dict[object, int] = {}
            for i, s in enumerate(self.state_names):
                tok = system.obs[(u, s)]
                self.obs_ids[ui, i] = intern.setdefault(tok, len(intern))

        self.edge_bool = np.zeros((n_states, self.n_domains, self.n_domains), dtype=bool)
        dom_index = {u: i for i, u in enumerate(sig.domains)}
        for i in range(self.n_domains):
            self.edge_bool[:, i, i] = True
        for i, s in enumerate(self.state_names):
            for (u, v) in system.edges[s]:
                self.edge_bool[i, dom_index[u], dom_index[v]] = True

        self.dom_of = np.array(
            [dom_index[sig.domain_of(a)] for a in sig.actions], dtype=np.int32
        )

        self.states = np.empty(self.n_nodes, dtype=np.int32)
        self.states[0] = self.state_ids[system.initial]
        for l in range(1, depth + 1):
            s, e = self.offs[l], self.offs[l + 1]
            if s == e:
                break
            prev = self.states[self.offs[l - 1] : self.offs[l]]
            self.states[s:e] = self.trans[prev].ravel()

        self._ta: Optional[np.ndarray] = None
        self._unw: Optional[Tuple[np.ndarray, Dict[str, int]]] = None

    # ---- id arithmetic ------------------------------------------------

    def level_of(self, node: int) -> int:
        return bisect_right(self.offs, node) - 1

    def trace_of(self, node: int) -> Trace:
        actions = self.signature.actions
        out = []
        l = self.level_of(node)
        while l > 0:
            local = node - self.offs[l]
            out.append(actions[local % self.n_actions])
            node = self.offs[l - 1] + local // self.n_actions
            l -= 1
        out.reverse()
        return tuple(out)

    def node_of(self, trace: Trace) -> int:
        if len(trace) > self.depth:
            raise InputError(f"trace longer than depth bound {self.depth}")
        node = 0
        for l, a in enumerate(trace):
            j = self.signature.action_index(a)
            node = self.offs[l + 1] + (node - self.offs[l]) * self.n_actions + j
        return node

    @property
    def interior_end(self) -> int:
        """Nodes below this id have length < depth; only they have children."""
        return self.offs[self.depth]

    def _child_base(self) -> np.ndarray:
        """child id of interior node n on action j is child_base[n] + j."""
        cb = np.empty(self.interior_end, dtype=np.int64)
        for l in range(self.depth):
            s, e = self.offs[l], self.offs[l + 1]
            cb[s:e] = self.offs[l + 1] + (np.arange(s, e, dtype=np.int64) - s) * self.n_actions
        return cb

    # ---- permissive transmission-tree labels ---------------------------

    def ta_labels(self) -> np.ndarray:
        """Per-domain interned tree labels, shape [n_domains, n_nodes].

        Label equality is structural equality of the permissive transmission
        trees (the single-trace recursion in ``trees.ta_may`` is the
        reference semantics)."""
        if self._ta is not None:
            return self._ta
        labels = np.zeros((self.n_domains, self.n_nodes), dtype=np.int64)
        arena = _PackedArena()
        for l in range(1, self.depth + 1):
            s, e = self.offs[l], self.offs[l + 1]
            if s == e:
                break
            size = e - s
            local = np.arange(size, dtype=np.int32)
            pid = self.offs[l - 1] + local // self.n_actions
            aidx = local % self.n_actions
            ps = self.states[pid]
            di = self.dom_of[aidx]
            for u in range(self.n_domains):
                allowed = self.edge_bool[ps, di, u]
                left = labels[u][pid]
                row = left.copy()
                if allowed.any():
                    right = labels[di[allowed], pid[allowed]]
                    packed = (
                        (left[allowed].astype(np.uint64) << np.uint64(37))
                        | (right.astype(np.uint64) << np.uint64(10))
                        | aidx[allowed].astype(np.uint64)
                    )
                    row[allowed] = arena.intern(packed)
                labels[u][s:e] = row
        self._ta = labels
        return labels

    # ---- unwinding closure ---------------------------------------------

    def unwinding_roots(self) -> Tuple[np.ndarray, Dict[str, int]]:
        """Least per-domain equivalences closed under deletion of disallowed
        actions and joint stepping, as root node ids (the root is always the
        shortlex-least member of its class).

        Returns (roots[n_domains, n_nodes], rule application counts)."""
        if self._unw is not None:
            return self._unw
        n = self.n_nodes
        parents = np.tile(np.arange(n, dtype=np.int64), (self.n_domains, 1))
        counts = {"dlr": 0, "wsc": 0, "sweeps": 0}

        for l in range(1, self.depth + 1):
            s, e = self.offs[l], self.offs[l + 1]
            if s == e:
                break
            local = np.arange(e - s, dtype=np.int32)
            pid = (self.offs[l - 1] + local // self.n_actions).astype(np.int64)
            aidx = local % self.n_actions
            ps = self.states[pid]
            di = self.dom_of[aidx]
            ids = np.arange(s, e, dtype=np.int64)
            for u in range(self.n_domains):
                allowed = self.edge_bool[ps, di, u]
                parents[u][s:e] = np.where(allowed, ids, pid)
                counts["dlr"] += int((~allowed).sum())

        interior = self.interior_end
        if interior == 0 or self.n_actions == 0:
            self._unw = (parents, counts)
            return self._unw
        cb = self._child_base()
        actions_by_domain: Dict[int, List[int]] = {}
        for j in range(self.n_actions):
            actions_by_domain.setdefault(int(self.dom_of[j]), []).append(j)

        while True:
            counts["sweeps"] += 1
            for u in range(self.n_domains):
                parents[u] = _compress(parents[u])
            changed = 0
            for u in range(self.n_domains):
                for d, action_list in actions_by_domain.items():
                    ru = parents[u][:interior].astype(np.uint64)
                    rd = parents[d][:interior].astype(np.uint64)
                    key = (ru << np.uint64(32)) | rd
                    uniq, ginv = np.unique(key, return_inverse=True)
                    if len(uniq) == interior:
                        continue  # all joint classes are singletons
                    for j in action_list:
                        child = cb + j
                        croots = parents[u][child]
                        gmin = np.full(len(uniq), n, dtype=np.int64)
                        np.minimum.at(gmin, ginv, croots)
                        tgt = gmin[ginv]
                        mask = croots != tgt
                        hits = int(mask.sum())
                        if hits:
                            np.minimum.at(parents[u], croots[mask], tgt[mask])
                            changed += hits
                            counts["wsc"] += hits
            if changed == 0:
                break
        for u in range(self.n_domains):
            parents[u] = _compress(parents[u])
        self._unw = (parents, counts)
        return self._unw
