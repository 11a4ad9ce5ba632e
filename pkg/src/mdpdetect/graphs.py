"""Qualitative graph algorithms on transition systems.

Everything here ignores probability values: maximal end components,
almost-sure reachability, and the two policy fragments (deterministic reach
policy, uniform in-component policy) are all functions of the support
structure alone.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import ContractError
from .models import TransitionSystem


class Mec:
    """An end component: a state set plus, per state, the enabled action subset.

    Closure (every enabled action's successors stay inside) and strong
    connectivity are guaranteed by construction in :func:`mec_decompose`.
    """

    __slots__ = ("states", "actions", "_key")

    def __init__(self, states: Iterable[str], actions: Mapping[str, Iterable[str]]):
        self.states = frozenset(states)
        self.actions: dict[str, frozenset[str]] = {
            s: frozenset(acts) for s, acts in actions.items()
        }
        self._key = tuple(sorted((s, tuple(sorted(a))) for s, a in self.actions.items()))

    def pairs(self) -> Iterable[tuple[str, str]]:
        for s in sorted(self.states):
            for a in sorted(self.actions[s]):
                yield (s, a)

    def __contains__(self, item: object) -> bool:
        if isinstance(item, tuple) and len(item) == 2:
            s, a = item
            return s in self.states and a in self.actions.get(s, frozenset())
        return item in self.states

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Mec) and self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        return f"Mec({sorted(self.states)})"

    def as_dict(self) -> dict[str, list[str]]:
        return {s: sorted(self.actions[s]) for s in sorted(self.states)}


@dataclass(frozen=True)
class PartialDeterministicPolicy:
    """Deterministic state -> action map on an explicit domain."""

    table: Mapping[str, str]

    @property
    def domain(self) -> frozenset[str]:
        return frozenset(self.table)

    def action(self, state: str) -> str:
        return self.table[state]


@dataclass(frozen=True)
class MecUniformPolicy:
    """Uniform randomization over the enabled actions of one end component."""

    mec: Mec
    probs: Mapping[str, Mapping[str, float]]

    def distribution(self, state: str) -> Mapping[str, float]:
        return self.probs[state]


def mec_decompose(ts: TransitionSystem) -> tuple[Mec, ...]:
    """The unique set of maximal end components of ``ts``.

    Standard SCC-refinement: starting from the full state set, repeatedly
    drop actions whose support leaves the current block, drop states with no
    actions left, and split blocks into strongly connected components until
    nothing changes. Surviving blocks are exactly the MECs.
    """
    succ = ts.successors
    initial_block = sorted(ts.states)
    work = deque()
    work.append((initial_block, {s: set(ts.actions.get(s, ())) for s in initial_block}))
    result = []
    while work:
        block, acts = work.popleft()
        members = set(block)
        changed = True
        while changed:
            changed = False
            for s in list(members):
                keep = {a for a in acts[s] if succ[(s, a)] <= members}
                if keep != acts[s]:
                    acts[s] = keep
                    changed = True
                if not keep:
                    members.discard(s)
                    del acts[s]
                    changed = True
        if not members:
            continue
        edges = {s: sorted({t for a in acts[s] for t in succ[(s, a)]}) for s in members}
        sccs = _strongly_connected_components(sorted(members), edges)
        if len(sccs) == 1 and len(sccs[0]) == len(members):
            result.append(Mec(members, acts))
        else:
            for comp in sccs:
                work.append((sorted(comp), {s: set(acts[s]) for s in comp}))
    result.sort(key=lambda c: sorted(c.states))
    return tuple(result)


def _strongly_connected_components(
    nodes: list[str], edges: Mapping[str, list[str]]
) -> list[list[str]]:
    """Iterative Tarjan over the given adjacency lists."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    sccs: list[list[str]] = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        call: list[tuple[str, int]] = [(root, 0)]
        while call:
            node, ei = call.pop()
            if ei == 0:
                index[node] = low[node] = counter
                counter += 1
                stack.append(node)
                on_stack.add(node)
            advanced = False
            neighbors = edges[node]
            while ei < len(neighbors):
                nxt = neighbors[ei]
                ei += 1
                if nxt not in index:
                    call.append((node, ei))
                    call.append((nxt, 0))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                sccs.append(comp)
            if call:
                parent = call[-1][0]
                low[parent] = min(low[parent], low[node])
    return sccs


def almost_sure_reach_set(ts: TransitionSystem, targets: Iterable[str]) -> frozenset[str]:
    """States from which some policy reaches ``targets`` with probability one.

    Double fixpoint: within a shrinking candidate set U, keep the states that
    can reach the targets using only actions whose full support stays in U.
    """
    target_set = frozenset(targets)
    unknown = target_set - set(ts.states)
    if unknown:
        raise ContractError(f"targets outside the state space: {sorted(unknown)}")
    succ = ts.successors
    preds: dict[str, list[tuple[str, str]]] = {s: [] for s in ts.states}
    for (s, a), dests in succ.items():
        for t in dests:
            preds[t].append((s, a))

    candidate = set(ts.states)
    while True:
        reached = set(target_set)
        frontier = deque(target_set)
        while frontier:
            t = frontier.popleft()
            for (s, a) in preds[t]:
                if s in reached or s not in candidate:
                    continue
                if succ[(s, a)] <= candidate:
                    reached.add(s)
                    frontier.append(s)
        if reached == candidate:
            return frozenset(reached)
        candidate = reached


def reach_policy(
    ts: TransitionSystem, targets: Iterable[str], rmax: Iterable[str]
) -> PartialDeterministicPolicy:
    """Deterministic policy reaching ``targets`` with probability one on ``rmax``.

    Requires ``rmax == almost_sure_reach_set(ts, targets)``. At each state of
    ``rmax`` minus the targets, picks the admissible action (support inside
    ``rmax``) of minimal BFS distance to the targets, ties broken by action
    identifier order.
    """
    target_set = frozenset(targets)
    rmax_set = frozenset(rmax)
    succ = ts.successors
    admissible: dict[str, list[str]] = {}
    for s in sorted(rmax_set - target_set):
        admissible[s] = [a for a in sorted(ts.actions.get(s, ())) if succ[(s, a)] <= rmax_set]
        if not admissible[s]:
            raise ContractError(
                f"no admissible action at {s!r}: rmax is not an almost-sure reach set"
            )

    # Multi-source backward BFS over admissible edges.
    dist: dict[str, int] = {t: 0 for t in target_set}
    frontier = deque(target_set)
    preds: dict[str, list[str]] = {s: [] for s in ts.states}
    for s, acts in admissible.items():
        for a in acts:
            for t in succ[(s, a)]:
                preds[t].append(s)
    while frontier:
        t = frontier.popleft()
        for s in preds[t]:
            if s not in dist:
                dist[s] = dist[t] + 1
                frontier.append(s)

    table: dict[str, str] = {}
    for s, acts in admissible.items():
        if s not in dist:
            raise ContractError(
                f"state {s!r} cannot reach the targets: rmax is not an almost-sure reach set"
            )
        best = None
        best_d = None
        for a in acts:
            d = 1 + min(dist.get(t, len(ts.states) + 1) for t in succ[(s, a)])
            if best_d is None or d < best_d:
                best, best_d = a, d
        assert best is not None and best_d == dist[s]
        table[s] = best
    return PartialDeterministicPolicy(table=table)


def mec_uniform_policy(mec: Mec) -> MecUniformPolicy:
    """Uniform distribution over the enabled actions at each member state."""
    probs = {
        s: {a: 1.0 / len(mec.actions[s]) for a in sorted(mec.actions[s])}
        for s in sorted(mec.states)
    }
    return MecUniformPolicy(mec=mec, probs=probs)
