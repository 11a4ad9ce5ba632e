"""Detection synthesis for three or more candidate models.

The algorithm explores, breadth-first, the states reachable while every
active model agrees a transition is possible. A transition possible in only a
strict subset of the active models ends the current level: it either settles
detection outright (one survivor), or spawns a subproblem for the surviving
subset from the successor state, solved recursively with memoization. The
explored region plus two terminal states ("subdetection succeeds" / "fails")
forms a transition system on which the binary machinery decides existence.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Any

from .binary import ApdOutcome, _binary_synthesis, classify_pairs
from .errors import ModelError
from .graphs import Mec, almost_sure_reach_set, mec_decompose, mec_uniform_policy, reach_policy
from .models import Mdp, Mmdp, TransitionSystem, fresh_name, support
from .policy import ActiveSet, DetectionPolicy, PolicyEntry, active_set

PairSet = frozenset[tuple[str, str]]


def pairwise_isa(mmdp: Mmdp, i: int, j: int) -> PairSet:
    """Informative pairs of the (i, j) model pair, on the original kernels."""
    if i == j:
        raise ModelError("pairwise classification needs two distinct model indices")
    return classify_pairs(mmdp.model(i), mmdp.model(j)).informative_pairs


def base_case_apd(mmdp: Mmdp, initial: str | None = None) -> ApdOutcome:
    """Synthesis when all models share one transition structure.

    With no identity-revealing transitions anywhere, the union structure is
    the structure of any single model, and an end component counts as
    informative only when it contains an informative pair for every unordered
    model pair.
    """
    if initial is None:
        initial = mmdp.initial
    for s in mmdp.states:
        for a in mmdp.actions[s]:
            supports = {support(m.row(s, a)) for m in mmdp.models}
            if len(supports) > 1:
                raise ModelError(
                    f"models disagree on the support at ({s}, {a}); use general_apd"
                )
    ctx = _Context(mmdp=mmdp, memoize=False)
    full = active_set(range(1, mmdp.n + 1))
    exists, entry, diagnostics = _same_structure_synthesis(ctx, full, initial)
    policy = None
    if entry is not None:
        policy = DetectionPolicy(entries={(full, initial): entry})
    return ApdOutcome(exists=exists, policy=policy, diagnostics=diagnostics)


def general_apd(mmdp: Mmdp, initial: str | None = None, memoize: bool = True) -> ApdOutcome:
    """Decide and synthesize detection for any number of candidate models."""
    if mmdp.n < 2:
        raise ModelError(f"need at least 2 models, got {mmdp.n}")
    if initial is None:
        initial = mmdp.initial
    if initial not in mmdp.models[0].state_index:
        raise ModelError(f"unknown initial state {initial!r}")
    if mmdp.n == 2:
        from .binary import bi_apd

        return bi_apd(mmdp, initial)

    ctx = _Context(mmdp=mmdp, memoize=memoize)
    full = active_set(range(1, mmdp.n + 1))
    exists, entries, diagnostics = _solve(ctx, full, initial, depth=0)
    diagnostics = dict(diagnostics)
    diagnostics["cache"] = {"hits": ctx.hits, "misses": ctx.misses}
    policy = DetectionPolicy(entries=entries) if exists else None
    return ApdOutcome(exists=exists, policy=policy, diagnostics=diagnostics)


@dataclass
class _Context:
    """Shared state of one synthesis run; the memo behaves as an atomic map."""

    mmdp: Mmdp
    memoize: bool
    memo: dict[tuple[ActiveSet, str], tuple[bool, dict, dict]] = field(default_factory=dict)
    isa_cache: dict[tuple[int, int], PairSet] = field(default_factory=dict)
    hits: int = 0
    misses: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)

    def isa(self, i: int, j: int) -> PairSet:
        key = (min(i, j), max(i, j))
        with self.lock:
            cached = self.isa_cache.get(key)
        if cached is None:
            cached = pairwise_isa(self.mmdp, *key)
            with self.lock:
                self.isa_cache[key] = cached
        return cached


def _solve(
    ctx: _Context, active: ActiveSet, initial: str, depth: int
) -> tuple[bool, dict[tuple[ActiveSet, str], PolicyEntry], dict[str, Any]]:
    """Memoized dispatch on the active-set size."""
    assert depth <= ctx.mmdp.n - 2, "recursion deeper than the model count allows"
    key = (active, initial)
    if ctx.memoize:
        with ctx.lock:
            if key in ctx.memo:
                ctx.hits += 1
                return ctx.memo[key]
            ctx.misses += 1
    if len(active) == 2:
        i, j = active
        exists, entry, diagnostics = _binary_synthesis(
            ctx.mmdp.model(i), ctx.mmdp.model(j), initial, active
        )
        entries = {(active, initial): entry} if entry is not None else {}
        result = (exists, entries, diagnostics)
    else:
        result = _general_level(ctx, active, initial, depth)
    if ctx.memoize:
        with ctx.lock:
            ctx.memo.setdefault(key, result)
    return result


def _general_level(
    ctx: _Context, active: ActiveSet, initial: str, depth: int
) -> tuple[bool, dict[tuple[ActiveSet, str], PolicyEntry], dict[str, Any]]:
    """One BFS + recursion level of the synthesis for ``len(active) >= 3``."""
    models = {i: ctx.mmdp.model(i) for i in active}
    base = next(iter(models.values()))
    bot0 = fresh_name("botg0", base.states)
    bot1 = fresh_name("botg1", (*base.states, bot0))
    a_bot0, a_bot1 = f"a_{bot0}", f"a_{bot1}"

    explored: set[str] = {initial}
    queue: deque[str] = deque([initial])
    triples: set[tuple[str, str, str]] = {(bot0, a_bot0, bot0), (bot1, a_bot1, bot1)}
    recursion_jobs: deque[tuple[ActiveSet, tuple[str, str, str]]] = deque()
    terminal_edges: list[dict[str, Any]] = []
    sub_entries: dict[tuple[ActiveSet, str], PolicyEntry] = {}

    def settle(edge: tuple[str, str, str], sub: ActiveSet, flag: int) -> None:
        s, a, s2 = edge
        triples.add((s, a, bot1 if flag else bot0))
        terminal_edges.append(
            {"state": s, "action": a, "successor": s2, "support": list(sub), "flag": flag}
        )

    while queue:
        s = queue.popleft()
        for a in base.actions[s]:
            union_succ: set[str] = set()
            for m in models.values():
                union_succ |= support(m.row(s, a))
            for s2 in sorted(union_succ):
                sub = active_set(i for i in active if models[i].prob(s, a, s2) > 0.0)
                if sub == active:
                    triples.add((s, a, s2))
                    if s2 not in explored:
                        explored.add(s2)
                        queue.append(s2)
                elif len(sub) == 1:
                    settle((s, a, s2), sub, flag=1)
                elif len(sub) == 2:
                    exists, entries, _ = _solve(ctx, sub, s2, depth + 1)
                    if exists:
                        sub_entries.update(entries)
                    settle((s, a, s2), sub, flag=1 if exists else 0)
                else:
                    recursion_jobs.append((sub, (s, a, s2)))

    while recursion_jobs:
        sub, edge = recursion_jobs.popleft()
        assert len(sub) < len(active), "active sets must shrink on recursion"
        exists, entries, _ = _solve(ctx, sub, edge[2], depth + 1)
        if exists:
            sub_entries.update(entries)
        settle(edge, sub, flag=1 if exists else 0)

    ts_states = (*sorted(explored), bot0, bot1)
    ts_actions: dict[str, tuple[str, ...]] = {s: base.actions[s] for s in explored}
    ts_actions[bot0] = (a_bot0,)
    ts_actions[bot1] = (a_bot1,)
    ts = TransitionSystem(
        states=ts_states, actions=ts_actions, transitions=frozenset(triples), initial=initial
    )

    mecs = mec_decompose(ts)
    inf_mecs = _informative_mecs_for(ctx, active, mecs, bot1)
    targets = frozenset(s for c in inf_mecs for s in c.states)
    rmax = almost_sure_reach_set(ts, targets)
    exists = initial in rmax

    diagnostics: dict[str, Any] = {
        "active": list(active),
        "initial": initial,
        "explored": sorted(explored),
        "terminal_edges": terminal_edges,
        "rmax": sorted(rmax),
        "mecs": [c.as_dict() for c in mecs],
        "informative_mecs": [c.as_dict() for c in inf_mecs],
    }
    if not exists:
        return False, {}, diagnostics

    fragment = reach_policy(ts, targets, rmax)
    reach_table = {s: a for s, a in fragment.table.items() if s in explored}
    runtime_mecs = tuple(
        mec_uniform_policy(c) for c in inf_mecs if bot1 not in c.states
    )
    entry = PolicyEntry(active=active, entry_state=initial, reach=reach_table, mecs=runtime_mecs)
    entries = dict(sub_entries)
    entries[(active, initial)] = entry
    return True, entries, diagnostics


def _informative_mecs_for(
    ctx: _Context, active: ActiveSet, mecs: tuple[Mec, ...], bot1: str
) -> tuple[Mec, ...]:
    """Components informative for every unordered active pair, plus the good terminal."""
    pairs = [(i, j) for k, i in enumerate(active) for j in active[k + 1 :]]
    keep = []
    for c in mecs:
        if c.states == frozenset({bot1}):
            keep.append(c)
            continue
        member_pairs = list(c.pairs())
        if all(any(p in ctx.isa(i, j) for p in member_pairs) for (i, j) in pairs):
            keep.append(c)
    return tuple(keep)


def _same_structure_synthesis(
    ctx: _Context, active: ActiveSet, initial: str
) -> tuple[bool, PolicyEntry | None, dict[str, Any]]:
    """Synthesis over the common structure (no identity-revealing transitions)."""
    from .models import induced_transition_system

    base = ctx.mmdp.models[0]
    if initial not in base.state_index:
        raise ModelError(f"unknown initial state {initial!r}")
    ts = induced_transition_system(base)
    mecs = mec_decompose(ts)
    pairs = [(i, j) for k, i in enumerate(active) for j in active[k + 1 :]]
    inf_mecs = tuple(
        c
        for c in mecs
        if all(any(p in ctx.isa(i, j) for p in c.pairs()) for (i, j) in pairs)
    )
    targets = frozenset(s for c in inf_mecs for s in c.states)
    rmax = almost_sure_reach_set(ts, targets)
    exists = initial in rmax
    diagnostics: dict[str, Any] = {
        "active": list(active),
        "initial": initial,
        "rmax": sorted(rmax),
        "mecs": [c.as_dict() for c in mecs],
        "informative_mecs": [c.as_dict() for c in inf_mecs],
    }
    if not exists:
        return False, None, diagnostics
    fragment = reach_policy(ts, targets, rmax)
    entry = PolicyEntry(
        active=active,
        entry_state=initial,
        reach=dict(fragment.table),
        mecs=tuple(mec_uniform_policy(c) for c in inf_mecs),
    )
    return True, entry, diagnostics
