"""Shared fixtures: reference models, random instance generators, graph oracles."""

from __future__ import annotations

import itertools
from collections import deque

import numpy as np
import pytest

from mdpdetect.models import Mdp, Mmdp, TransitionSystem


def mk_mdp(states, actions, kernel, initial, name="M"):
    return Mdp(
        states=tuple(states),
        actions={s: tuple(a) for s, a in actions.items()},
        kernel={k: dict(v) for k, v in kernel.items()},
        initial=initial,
        name=name,
    )


def example1_mmdp(initial="1"):
    """Seven-state reference pair: two informative pairs, one revealing state."""
    states = [str(i) for i in range(1, 8)]
    actions = {
        "1": ("a1",),
        "2": ("a2", "b2"),
        "3": ("a3",),
        "4": ("a4",),
        "5": ("a5", "b5"),
        "6": ("a6",),
        "7": ("a7",),
    }
    common = {
        ("2", "a2"): {"2": 0.2, "5": 0.3, "6": 0.5},
        ("3", "a3"): {"3": 0.5, "4": 0.5},
        ("4", "a4"): {"3": 0.5, "4": 0.5},
        ("6", "a6"): {"6": 1.0},
        ("7", "a7"): {"7": 1.0},
    }
    k1 = dict(common)
    k1[("1", "a1")] = {"2": 0.7, "3": 0.3}
    k1[("2", "b2")] = {"2": 0.5, "5": 0.5}
    k1[("5", "a5")] = {"5": 0.7, "7": 0.3}
    k1[("5", "b5")] = {"5": 1.0}
    k2 = dict(common)
    k2[("1", "a1")] = {"2": 0.4, "3": 0.6}
    k2[("2", "b2")] = {"2": 0.5, "6": 0.5}
    k2[("5", "a5")] = {"5": 0.3, "7": 0.7}
    k2[("5", "b5")] = {"7": 1.0}
    m1 = mk_mdp(states, actions, k1, initial, "M1")
    m2 = mk_mdp(states, actions, k2, initial, "M2")
    return Mmdp(models=(m1, m2))


@pytest.fixture
def example1():
    return example1_mmdp()


def sqrt_half_mmdp():
    """One informative self-loop: B(t) = (1/2)^(t/2) in closed form."""
    states = ("s", "u")
    actions = {"s": ("a",), "u": ("a",)}
    m1 = mk_mdp(states, actions, {("s", "a"): {"s": 1.0}, ("u", "a"): {"u": 1.0}}, "s", "M1")
    m2 = mk_mdp(
        states, actions, {("s", "a"): {"s": 0.5, "u": 0.5}, ("u", "a"): {"u": 1.0}}, "s", "M2"
    )
    return Mmdp(models=(m1, m2))


def identical_mmdp(n_models=2, initial="x"):
    """All models equal: nothing is detectable."""
    states = ("x", "y")
    actions = {"x": ("a", "b"), "y": ("a",)}
    kernel = {
        ("x", "a"): {"x": 0.5, "y": 0.5},
        ("x", "b"): {"x": 1.0},
        ("y", "a"): {"x": 1.0},
    }
    models = tuple(mk_mdp(states, actions, kernel, initial, f"M{i+1}") for i in range(n_models))
    return Mmdp(models=models)


def rng_for(seed):
    return np.random.Generator(np.random.Philox(key=(seed, 0)))


def random_transition_system(rng, n_states=6, max_actions=3) -> TransitionSystem:
    states = tuple(f"s{i}" for i in range(n_states))
    actions = {}
    triples = set()
    for s in states:
        count = int(rng.integers(1, max_actions + 1))
        acts = tuple(f"a{j}" for j in range(count))
        actions[s] = acts
        for a in acts:
            n_succ = int(rng.integers(1, 3))
            succs = rng.choice(n_states, size=n_succ, replace=False)
            for t in succs:
                triples.add((s, a, states[int(t)]))
    return TransitionSystem(
        states=states, actions=actions, transitions=frozenset(triples), initial=states[0]
    )


def random_binary_mmdp(rng, n_states=5, max_actions=2, informative_share=0.6) -> Mmdp:
    """Shared-support pair; a random share of rows differ in their masses."""
    states = tuple(f"s{i}" for i in range(n_states))
    actions = {}
    k1, k2 = {}, {}
    for i, s in enumerate(states):
        count = int(rng.integers(1, max_actions + 1))
        acts = tuple(f"a{j}" for j in range(count))
        actions[s] = acts
        for a in acts:
            other = int(rng.integers(0, n_states - 1))
            if other >= i:
                other += 1
            succs = (s if rng.random() < 0.5 else states[other], states[int(rng.integers(0, n_states))])
            succs = tuple(dict.fromkeys(succs))
            if len(succs) == 1:
                row1 = {succs[0]: 1.0}
                row2 = {succs[0]: 1.0}
            else:
                p = float(rng.uniform(0.2, 0.8))
                row1 = {succs[0]: p, succs[1]: 1.0 - p}
                if rng.random() < informative_share:
                    shift = float(rng.uniform(0.1, min(0.15, p - 0.05, 0.95 - p)))
                    q = p + shift if rng.random() < 0.5 else p - shift
                    row2 = {succs[0]: q, succs[1]: 1.0 - q}
                else:
                    row2 = dict(row1)
            k1[(s, a)] = row1
            k2[(s, a)] = row2
    m1 = mk_mdp(states, actions, k1, states[0], "M1")
    m2 = mk_mdp(states, actions, k2, states[0], "M2")
    return Mmdp(models=(m1, m2))


def random_detectable_binary(rng, n_states=5) -> Mmdp:
    """Strongly connected shared-support pair with at least one informative row.

    A directed cycle through all states keeps the whole space one end
    component, so synthesis succeeds from every initial state.
    """
    states = tuple(f"s{i}" for i in range(n_states))
    actions = {s: ("a0",) if rng.random() < 0.5 else ("a0", "a1") for s in states}
    k1, k2 = {}, {}
    for i, s in enumerate(states):
        for a in actions[s]:
            nxt = states[(i + 1) % n_states]
            extra = states[int(rng.integers(0, n_states))]
            p = float(rng.uniform(0.3, 0.7))
            if extra == nxt:
                row1 = {nxt: 1.0}
                row2 = {nxt: 1.0}
            else:
                row1 = {nxt: p, extra: 1.0 - p}
                q = p + (0.2 if p < 0.5 else -0.2)
                row2 = {nxt: q, extra: 1.0 - q} if rng.random() < 0.7 else dict(row1)
            k1[(s, a)] = row1
            k2[(s, a)] = row2
    # force one genuinely informative pair
    s0 = states[0]
    a0 = actions[s0][0]
    nxt = states[1 % n_states]
    k1[(s0, a0)] = {s0: 0.6, nxt: 0.4}
    k2[(s0, a0)] = {s0: 0.3, nxt: 0.7}
    m1 = mk_mdp(states, actions, k1, states[0], "M1")
    m2 = mk_mdp(states, actions, k2, states[0], "M2")
    return Mmdp(models=(m1, m2))


def random_multi_mmdp(rng, n_models=3, n_states=5, reveal_share=0.25) -> Mmdp:
    """Shared skeleton with informative mass differences and occasional
    identity-revealing support drops."""
    states = tuple(f"s{i}" for i in range(n_states))
    actions = {s: ("a0",) if rng.random() < 0.6 else ("a0", "a1") for s in states}
    kernels = [dict() for _ in range(n_models)]
    for i, s in enumerate(states):
        for a in actions[s]:
            nxt = states[(i + 1) % n_states]
            extra = states[int(rng.integers(0, n_states))]
            succs = tuple(dict.fromkeys((nxt, extra)))
            if len(succs) == 1:
                for k in kernels:
                    k[(s, a)] = {succs[0]: 1.0}
                continue
            cut = None
            if rng.random() < reveal_share:
                cut = int(rng.integers(0, n_models))
            for m, k in enumerate(kernels):
                if m == cut:
                    k[(s, a)] = {succs[0]: 1.0}
                else:
                    p = float(rng.uniform(0.25, 0.75))
                    k[(s, a)] = {succs[0]: p, succs[1]: 1.0 - p}
    models = tuple(
        mk_mdp(states, actions, kernels[m], states[0], f"M{m+1}") for m in range(n_models)
    )
    return Mmdp(models=models)


def random_stationary_policy(rng, mmdp) -> dict:
    table = {}
    for s in mmdp.states:
        acts = mmdp.actions[s]
        weights = rng.uniform(0.2, 1.0, size=len(acts))
        weights = weights / weights.sum()
        table[s] = {a: float(w) for a, w in zip(acts, weights)}
    return table


# ---------------------------------------------------------------------------
# Independent oracles for the graph layer.
# ---------------------------------------------------------------------------


def oracle_mecs(ts: TransitionSystem):
    """All maximal end components by exhaustive state-subset enumeration."""
    states = list(ts.states)
    succ = ts.successors
    components = []
    for r in range(1, len(states) + 1):
        for subset in itertools.combinations(states, r):
            inside = set(subset)
            acts = {
                s: {a for a in ts.actions.get(s, ()) if succ[(s, a)] and succ[(s, a)] <= inside}
                for s in subset
            }
            if any(not acts[s] for s in subset):
                continue
            if not _strongly_connected(subset, acts, succ):
                continue
            components.append((frozenset(subset), {s: frozenset(acts[s]) for s in subset}))
    maximal = []
    for states_a, acts_a in components:
        dominated = False
        for states_b, acts_b in components:
            if (states_a, acts_a) == (states_b, acts_b):
                continue
            if states_a <= states_b and all(acts_a[s] <= acts_b[s] for s in states_a):
                dominated = True
                break
        if not dominated:
            maximal.append((states_a, {s: acts_a[s] for s in states_a}))
    return sorted(maximal, key=lambda c: sorted(c[0]))


def _strongly_connected(subset, acts, succ):
    inside = set(subset)
    for start in subset:
        seen = {start}
        frontier = deque([start])
        while frontier:
            x = frontier.popleft()
            for a in acts[x]:
                for t in succ[(x, a)]:
                    if t in inside and t not in seen:
                        seen.add(t)
                        frontier.append(t)
        if seen != inside:
            return False
    return True


def oracle_almost_sure_reach(ts: TransitionSystem, targets) -> frozenset:
    """Membership by enumerating every deterministic stationary policy.

    A state qualifies when, under some policy (with targets absorbing), no
    state from which the targets are unreachable can be reached.
    """
    targets = frozenset(targets)
    states = list(ts.states)
    succ = ts.successors
    choices = [ts.actions.get(s, ()) for s in states]
    winners = set(targets)
    for assignment in itertools.product(*choices):
        chain = {}
        for s, a in zip(states, assignment):
            chain[s] = frozenset() if s in targets else succ[(s, a)]
        can_reach = set(targets)
        changed = True
        while changed:
            changed = False
            for s in states:
                if s not in can_reach and chain[s] & can_reach:
                    can_reach.add(s)
                    changed = True
        doomed = {s for s in states if s not in can_reach}
        for s in states:
            if s in winners:
                continue
            seen = {s}
            frontier = deque([s])
            ok = s not in doomed
            while frontier and ok:
                x = frontier.popleft()
                for t in chain[x]:
                    if t in doomed:
                        ok = False
                        break
                    if t not in seen:
                        seen.add(t)
                        frontier.append(t)
            if ok:
                winners.add(s)
    return frozenset(winners)


def chain_reach_probability(rows, targets, tol=1e-13, max_iter=200000):
    """Hitting probabilities of ``targets`` for a Markov chain given as sparse rows."""
    states = sorted(rows)
    targets = frozenset(targets)
    h = {s: 1.0 if s in targets else 0.0 for s in states}
    for _ in range(max_iter):
        delta = 0.0
        for s in states:
            if s in targets:
                continue
            val = sum(p * h[t] for t, p in rows[s].items())
            delta = max(delta, abs(val - h[s]))
            h[s] = val
        if delta < tol:
            break
    return h
