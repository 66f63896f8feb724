"""Nondeterministic automata on k-ary labeled infinite trees.

States and letters are opaque hashables supplied by two lazy providers: a
per-state letter enumeration and a per-(state, letter) enumeration of child
state vectors. The alphabet is never materialized; the KB automaton's letter
space is astronomically large and only constraint-guided generation keeps
emptiness runnable.

Verdicts are three-valued: nonempty always comes with a regular witness;
empty is claimed only when exploration was exhaustive within budget;
everything else is inconclusive.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

EMPTY = "empty"
NONEMPTY = "nonempty"
INCONCLUSIVE = "inconclusive"


@dataclass
class Budgets:
    max_states: int = 100_000
    max_letters_per_state: int = 20_000
    max_seconds: float = None

    def timer(self):
        start = time.monotonic()

        def over():
            return (self.max_seconds is not None
                    and time.monotonic() - start > self.max_seconds)
        return over


class TreeAutomaton:
    def __init__(self, initial, arity, letters, transitions, accepting=None,
                 name="nta"):
        self.initial = initial
        self.arity = arity
        self._letters = letters
        self._transitions = transitions
        self.accepting = accepting          # None = trivial acceptance
        self.name = name
        self._letters_cache = {}
        self._trans_cache = {}

    @property
    def is_buchi(self):
        return self.accepting is not None

    def letters(self, state):
        if state not in self._letters_cache:
            self._letters_cache[state] = list(self._letters(state))
        return self._letters_cache[state]

    def transitions(self, state, letter):
        key = (state, letter)
        if key not in self._trans_cache:
            self._trans_cache[key] = [tuple(v) for v in
                                      self._transitions(state, letter)]
        return self._trans_cache[key]


@dataclass
class WitnessNode:
    letter: object
    children: tuple
    state: object = None


@dataclass
class Witness:
    """Regular representation of an accepted tree (nodes unfold lazily)."""
    nodes: list
    root: int = 0


@dataclass
class EmptinessResult:
    status: str
    witness: Witness = None
    reason: str = ""
    explored_states: int = 0

    def __bool__(self):
        return self.status == NONEMPTY


def _explore(aut, budgets):
    """Forward discovery of the reachable option table; returns
    (options, complete) where options[q] = [(letter, vec), ...]."""
    over = budgets.timer()
    options = {}
    complete = True
    queue = [aut.initial]
    seen = {aut.initial}
    while queue:
        if over():
            complete = False
            break
        if len(seen) > budgets.max_states:
            complete = False
            break
        q = queue.pop(0)
        opts = []
        letters = aut.letters(q)
        if len(letters) > budgets.max_letters_per_state:
            letters = letters[:budgets.max_letters_per_state]
            complete = False
        for letter in letters:
            for vec in aut.transitions(q, letter):
                if len(vec) > aut.arity:
                    continue
                opts.append((letter, vec))
                for child in vec:
                    if child not in seen:
                        seen.add(child)
                        queue.append(child)
        options[q] = opts
    else:
        return options, complete
    # budget path: states still queued are unexplored
    for q in queue:
        options.setdefault(q, None)
    return options, False


def is_empty_trivial(aut, budgets=None):
    """Greatest fixpoint of productivity over the reachable states."""
    if aut.is_buchi:
        raise ValueError("trivial-acceptance emptiness on a Buchi automaton")
    budgets = budgets or Budgets()
    options, complete = _explore(aut, budgets)
    productive = {q for q, opts in options.items() if opts is not None}
    unexplored = {q for q, opts in options.items() if opts is None}
    # unexplored states count as productive for the nonemptiness side only
    live = set(productive) | unexplored
    changed = True
    while changed:
        changed = False
        for q in list(productive):
            opts = options[q]
            if not any(all(c in live for c in vec) for _, vec in opts):
                productive.discard(q)
                live.discard(q)
                changed = True
    if aut.initial in productive:
        witness = _extract_witness(aut, options, productive, unexplored)
        if witness is not None:
            return EmptinessResult(NONEMPTY, witness,
                                   explored_states=len(options))
        if not complete:
            return EmptinessResult(INCONCLUSIVE,
                                   reason="witness relies on unexplored states",
                                   explored_states=len(options))
        return EmptinessResult(NONEMPTY, None, explored_states=len(options))
    if complete:
        return EmptinessResult(EMPTY, explored_states=len(options))
    return EmptinessResult(INCONCLUSIVE, reason="state budget exceeded",
                           explored_states=len(options))


def _extract_witness(aut, options, productive, unexplored):
    """Unfold one productive choice per state into a finite rep; fails if
    every justification leans on an unexplored state."""
    strict = set(productive)
    changed = True
    while changed:
        changed = False
        for q in list(strict):
            opts = options[q]
            if not any(all(c in strict for c in vec) for _, vec in opts):
                strict.discard(q)
                changed = True
    if aut.initial not in strict:
        return None
    choice = {}
    for q in strict:
        for letter, vec in options[q]:
            if all(c in strict for c in vec):
                choice[q] = (letter, vec)
                break
    index = {}
    nodes = []

    def node_of(q):
        if q in index:
            return index[q]
        idx = len(nodes)
        index[q] = idx
        nodes.append(None)
        letter, vec = choice[q]
        nodes[idx] = WitnessNode(letter, tuple(node_of(c) for c in vec), q)
        return idx

    node_of(aut.initial)
    return Witness(nodes=nodes)


def is_empty_buchi(aut, budgets=None):
    """Classical avoid-set fixpoint for the two-player game: the automaton
    picks letter and transition, the pathfinder picks the branch; a play is
    won if its branch ends (a leaf transition) or visits accepting states
    infinitely often."""
    if not aut.is_buchi:
        raise ValueError("buchi emptiness on a trivial-acceptance automaton")
    budgets = budgets or Budgets()
    options, complete = _explore(aut, budgets)
    known = {q for q, opts in options.items() if opts is not None}

    lower = _buchi_region(aut, options, known, win_unexplored=False)
    if aut.initial in lower:
        strategy = _buchi_strategy(aut, options, lower)
        witness = _unfold_strategy(aut, strategy)
        return EmptinessResult(NONEMPTY, witness,
                               explored_states=len(options))
    if complete:
        return EmptinessResult(EMPTY, explored_states=len(options))
    upper = _buchi_region(aut, options, known, win_unexplored=True)
    if aut.initial not in upper:
        return EmptinessResult(EMPTY, explored_states=len(options))
    return EmptinessResult(INCONCLUSIVE, reason="budget exceeded",
                           explored_states=len(options))


def _buchi_region(aut, options, known, win_unexplored):
    """nu Z. mu Y. (leaf | acc & PreAll(Z) | PreAll(Y)); unexplored states
    count as winning (upper bound) or losing (lower bound)."""

    def inside(c, target):
        if options.get(c) is None:
            return win_unexplored
        return c in target

    z = set(known)
    while True:
        y = set()
        changed = True
        while changed:
            changed = False
            for q in known:
                if q in y:
                    continue
                ok = False
                for letter, vec in options[q]:
                    if not vec:
                        ok = True
                        break
                    if aut.accepting(q) and all(inside(c, z) for c in vec):
                        ok = True
                        break
                    if all(inside(c, y) for c in vec):
                        ok = True
                        break
                if ok:
                    y.add(q)
                    changed = True
        if y == z:
            return z
        z = y


def _buchi_strategy(aut, options, z):
    """Positional strategy on the pessimistic winning region (children all
    explored): leaf picks, accepting picks back into z, otherwise picks whose
    children were assigned strictly earlier (ranks decrease)."""
    strategy = {}
    done = set()
    changed = True
    while changed:
        changed = False
        for q in sorted(z, key=repr):
            if q in done:
                continue
            pick = None
            for letter, vec in options[q]:
                if not vec:
                    pick = (letter, vec)
                    break
                if aut.accepting(q) and all(c in z for c in vec):
                    pick = (letter, vec)
                    break
                if all(c in done for c in vec):
                    pick = (letter, vec)
                    break
            if pick is not None:
                strategy[q] = pick
                done.add(q)
                changed = True
    return strategy


def _unfold_strategy(aut, strategy):
    index = {}
    nodes = []

    def node_of(q):
        if q in index:
            return index[q]
        idx = len(nodes)
        index[q] = idx
        nodes.append(None)
        letter, vec = strategy[q]
        nodes[idx] = WitnessNode(letter, tuple(node_of(c) for c in vec), q)
        return idx

    node_of(aut.initial)
    return Witness(nodes=nodes)


def is_empty(aut, budgets=None):
    if aut.is_buchi:
        return is_empty_buchi(aut, budgets)
    return is_empty_trivial(aut, budgets)


# --- products -----------------------------------------------------------------------

def product(a, b):
    """Synchronized product; letters are enumerated from the first factor
    and filtered by the second, so `a` should be the factor with the
    constraint-guided letter generator. At most one factor may be Buchi."""
    if a.is_buchi and b.is_buchi:
        raise ValueError("product of two Buchi automata is unsupported")
    arity = min(a.arity, b.arity)

    def letters(pair):
        qa, qb = pair
        out = []
        for letter in a.letters(qa):
            if b.transitions(qb, letter):
                out.append(letter)
        return out

    def transitions(pair, letter):
        qa, qb = pair
        for va in a.transitions(qa, letter):
            for vb in b.transitions(qb, letter):
                if len(va) == len(vb):
                    yield tuple(zip(va, vb))

    accepting = None
    if a.is_buchi:
        accepting = lambda pair: a.accepting(pair[0])
    elif b.is_buchi:
        accepting = lambda pair: b.accepting(pair[1])
    return TreeAutomaton((a.initial, b.initial), arity, letters, transitions,
                         accepting, name=f"({a.name}x{b.name})")


def universal_automaton(letter_pool, arity):
    """Accepts every tree labeled from the pool (handy in tests)."""
    pool = list(letter_pool)

    def transitions(state, letter):
        for width in range(arity + 1):
            yield tuple(0 for _ in range(width))

    return TreeAutomaton(0, arity, lambda q: pool, transitions, None,
                         name="universal")


# --- finite prefixes and ultimately periodic trees -----------------------------------

@dataclass
class PrefixTree:
    """Finite letter-labeled tree with an open frontier."""
    letters: dict                  # node tuple -> letter
    frontier: set = field(default_factory=set)

    def children(self, node):
        n = len(node)
        return sorted(w for w in self.letters
                      if len(w) == n + 1 and w[:n] == node)


def accepts_prefix(aut, prefix):
    """True iff some partial run labels the prefix consistently; frontier
    nodes only need one transition on their letter, with any child vector."""
    if not prefix.letters:
        return True
    memo = {}

    def can(node, state):
        key = (node, state)
        if key in memo:
            return memo[key]
        memo[key] = True            # coinductive default for rep cycles
        letter = prefix.letters[node]
        kids = prefix.children(node)
        ok = False
        for vec in aut.transitions(state, letter):
            if node in prefix.frontier and not kids:
                ok = True
                break
            if len(vec) != len(kids):
                continue
            if all(can(k, s) for k, s in zip(kids, vec)):
                ok = True
                break
        if not ok and node in prefix.frontier and not kids \
                and aut.transitions(state, letter):
            ok = True
        memo[key] = ok
        return ok

    return can((), aut.initial)


def rep_automaton(rep_nodes, root, arity):
    """Trivial automaton accepting exactly the unfolding of a labeled rep;
    rep_nodes is a list of (letter, children-index-tuple)."""

    def letters(idx):
        return [rep_nodes[idx][0]]

    def transitions(idx, letter):
        if letter == rep_nodes[idx][0]:
            yield tuple(rep_nodes[idx][1])

    return TreeAutomaton(root, arity, letters, transitions, None, name="rep")


def accepts_tree(aut, rep_nodes, root=0, budgets=None):
    """Membership of an ultimately periodic tree, via the product game."""
    prod = product(rep_automaton(rep_nodes, root, aut.arity), aut)
    return bool(is_empty(prod, budgets))
