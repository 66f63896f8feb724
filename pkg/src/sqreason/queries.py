"""Queries: instance queries, positive existential queries, and regular path
queries, with NFA-compiled path expressions and an exhaustive matcher.

Path expression grammar (text form):
    E ::= r | inv(r) | A? | E* | (E | E) | (E ; E)
Formula grammar:
    query  ::= 'iq' Concept '(' ind ')'
             | ['exists' x (',' x)* '.'] formula
    formula::= atom | '(' formula ('and'|'or') formula ... ')'
    atom   ::= E '(' term ',' term ')' | A '(' term ')'
Terms are variables (declared by 'exists') or individual names.

Closure semantics (matching over I*) is reduced to plain edge semantics by
rewriting the NFA: every transition over a transitive role gets a stutter
state that may repeat the edge.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from . import kb as K
from . import interp as I


class QuerySyntaxError(Exception):
    pass


# --- abstract syntax -----------------------------------------------------------

@dataclass(frozen=True)
class PRole:
    role: K.Role

    def __str__(self):
        return str(self.role)


@dataclass(frozen=True)
class PTest:
    name: str

    def __str__(self):
        return f"{self.name}?"


@dataclass(frozen=True)
class PStar:
    arg: object

    def __str__(self):
        return f"({self.arg})*"


@dataclass(frozen=True)
class PUnion:
    left: object
    right: object

    def __str__(self):
        return f"({self.left} | {self.right})"


@dataclass(frozen=True)
class PComp:
    left: object
    right: object

    def __str__(self):
        return f"({self.left} ; {self.right})"


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return f"?{self.name}"


@dataclass(frozen=True)
class Ind:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class PathAtom:
    path: object
    s: object
    t: object

    def __str__(self):
        return f"{self.path}({self.s},{self.t})"


@dataclass(frozen=True)
class ConceptAtom:
    name: str
    t: object

    def __str__(self):
        return f"{self.name}({self.t})"


@dataclass(frozen=True)
class QAnd:
    args: tuple


@dataclass(frozen=True)
class QOr:
    args: tuple


@dataclass(frozen=True)
class PRPQ:
    variables: tuple
    formula: object


@dataclass(frozen=True)
class IQ:
    concept: K.Concept
    individual: str


def _path_ops(p):
    if isinstance(p, (PRole, PTest)):
        return set()
    if isinstance(p, PStar):
        return {"*"} | _path_ops(p.arg)
    if isinstance(p, PUnion):
        return {"|"} | _path_ops(p.left) | _path_ops(p.right)
    if isinstance(p, PComp):
        return {";"} | _path_ops(p.left) | _path_ops(p.right)
    raise TypeError(p)


def query_kind(q):
    """'iq', 'peq' or 'prpq'. A PEQ uses no *, union or composition."""
    if isinstance(q, IQ):
        return "iq"
    for atom in atoms_of(q.formula):
        if isinstance(atom, PathAtom):
            if _path_ops(atom.path):
                return "prpq"
            if isinstance(atom.path, PTest):
                return "prpq"
    return "peq"


def atoms_of(f):
    if isinstance(f, (PathAtom, ConceptAtom)):
        return [f]
    out = []
    for a in f.args:
        out.extend(atoms_of(a))
    return out


def disjuncts(f, cap=64):
    """Expand or-of-ands; each disjunct is a tuple of atoms."""
    if isinstance(f, (PathAtom, ConceptAtom)):
        return [(f,)]
    if isinstance(f, QOr):
        out = []
        for a in f.args:
            out.extend(disjuncts(a, cap))
            if len(out) > cap:
                raise QuerySyntaxError(f"more than {cap} disjuncts")
        return out
    if isinstance(f, QAnd):
        parts = [disjuncts(a, cap) for a in f.args]
        out = []
        for combo in itertools.product(*parts):
            merged = tuple(a for d in combo for a in d)
            out.append(merged)
            if len(out) > cap:
                raise QuerySyntaxError(f"more than {cap} disjuncts")
        return out
    raise TypeError(f)


# --- parsing ---------------------------------------------------------------------

def parse_query(text, kb):
    """Parse a query file against a KB (for role kinds and concept checks)."""
    text = " ".join(line.split("#")[0] for line in text.splitlines())
    text = text.strip()
    if text.startswith("iq "):
        body = text[3:].strip()
        if not body.endswith(")"):
            raise QuerySyntaxError("iq must end with (individual)")
        open_paren = body.rfind("(")
        if open_paren < 0:
            raise QuerySyntaxError("iq needs (individual)")
        concept_text = body[:open_paren].strip()
        ind = body[open_paren + 1:-1].strip()
        p = K._Parser(concept_text)
        concept = p.concept({"roles": dict(kb.role_kinds)})
        if p.peek().kind != "eof":
            raise QuerySyntaxError("trailing input after iq concept")
        return IQ(concept, ind)
    variables = ()
    if text.startswith("exists"):
        dot = text.index(".")
        variables = tuple(v.strip() for v in text[6:dot].split(","))
        text = text[dot + 1:].strip()
    f = _FormulaParser(text, kb, set(variables)).formula_top()
    return PRPQ(variables, f)


class _FormulaParser:
    def __init__(self, text, kb, variables):
        self.text = text
        self.pos = 0
        self.kb = kb
        self.variables = variables

    def error(self, msg):
        raise QuerySyntaxError(f"{msg} (at offset {self.pos})")

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def word(self):
        self.skip_ws()
        j = self.pos
        while j < len(self.text) and (self.text[j].isalnum()
                                      or self.text[j] in "_-'"):
            j += 1
        if j == self.pos:
            self.error("expected a name")
        w = self.text[self.pos:j]
        self.pos = j
        return w

    def expect(self, ch):
        self.skip_ws()
        if not self.text.startswith(ch, self.pos):
            self.error(f"expected {ch!r}")
        self.pos += len(ch)

    def formula_top(self):
        f = self.formula()
        self.skip_ws()
        if self.pos != len(self.text):
            self.error("trailing input")
        return f

    def _kw_at(self, word):
        if not self.text.startswith(word, self.pos):
            return False
        end = self.pos + len(word)
        return end >= len(self.text) or not (self.text[end].isalnum()
                                             or self.text[end] in "_-'")

    def formula(self):
        # '(' is ambiguous between a subformula and a grouped path
        # expression; try the subformula reading first and backtrack.
        if self.peek() == "(":
            save = self.pos
            try:
                self.expect("(")
                first = self.formula()
                self.skip_ws()
                op = "and" if self._kw_at("and") else (
                    "or" if self._kw_at("or") else None)
                if op:
                    args = [first]
                    while True:
                        self.skip_ws()
                        if self._kw_at(op):
                            self.pos += len(op)
                            args.append(self.formula())
                        else:
                            break
                    self.expect(")")
                    return (QAnd(tuple(args)) if op == "and"
                            else QOr(tuple(args)))
            except QuerySyntaxError:
                pass
            self.pos = save
        return self.atom()

    def atom(self):
        path = self.path_union()
        self.expect("(")
        t1 = self.term()
        self.skip_ws()
        if self.peek() == ",":
            self.expect(",")
            t2 = self.term()
            self.expect(")")
            return PathAtom(path, t1, t2)
        self.expect(")")
        if isinstance(path, PRole) and not path.role.inverted \
                and path.role.name not in self.kb.role_kinds:
            return ConceptAtom(path.role.name, t1)
        if isinstance(path, PTest):
            return ConceptAtom(path.name, t1)
        self.error("unary atom must be a concept name")

    def term(self):
        w = self.word()
        return Var(w) if w in self.variables else Ind(w)

    # path expressions: union < composition < star
    def path_union(self):
        left = self.path_comp()
        while self.peek() == "|":
            self.expect("|")
            left = PUnion(left, self.path_comp())
        return left

    def path_comp(self):
        left = self.path_star()
        while self.peek() == ";":
            self.expect(";")
            left = PComp(left, self.path_star())
        return left

    def path_star(self):
        p = self.path_primary()
        while self.peek() == "*":
            self.expect("*")
            p = PStar(p)
        return p

    def path_primary(self):
        if self.peek() == "(":
            self.expect("(")
            p = self.path_union()
            self.expect(")")
            return p
        w = self.word()
        if self.peek() == "?":
            self.expect("?")
            return PTest(w)
        if w == "inv":
            self.expect("(")
            name = self.word()
            self.expect(")")
            if name not in self.kb.role_kinds:
                self.error(f"undeclared role {name!r}")
            return PRole(K.Role(name, True, self.kb.role_kinds[name]))
        if w in self.kb.role_kinds:
            return PRole(K.Role(w, False, self.kb.role_kinds[w]))
        # leave as a bare name; atom() decides concept-vs-role by arity
        return PRole(K.Role(w, False, False))


# --- NFA compilation --------------------------------------------------------------

@dataclass(frozen=True)
class Nfa:
    """Letters: ('role', name, inverted) and ('test', concept-name)."""
    n_states: int
    start: int
    final: int
    transitions: tuple        # (state, letter, state)

    def moves_from(self, q):
        return [(l, t) for s, l, t in self.transitions if s == q]


def compile_path(p, closure=False):
    """Thompson construction; with closure=True every transition over a
    transitive role is replaced by a stuttering gadget so that matching the
    result over plain edges equals matching the original over the closure."""
    counter = itertools.count()
    transitions = []

    def new():
        return next(counter)

    def eps(a, b):
        transitions.append((a, None, b))

    def build(p, a, b):
        if isinstance(p, PRole):
            if closure and p.role.transitive:
                mid = new()
                letter = ("role", p.role.name, p.role.inverted)
                transitions.append((a, letter, mid))
                transitions.append((mid, letter, mid))
                eps(mid, b)
            else:
                transitions.append(
                    (a, ("role", p.role.name, p.role.inverted), b))
        elif isinstance(p, PTest):
            transitions.append((a, ("test", p.name), b))
        elif isinstance(p, PStar):
            mid = new()
            eps(a, mid)
            build(p.arg, mid, mid)
            eps(mid, b)
        elif isinstance(p, PUnion):
            build(p.left, a, b)
            build(p.right, a, b)
        elif isinstance(p, PComp):
            mid = new()
            build(p.left, a, mid)
            build(p.right, mid, b)
        else:
            raise TypeError(p)

    start, final = new(), new()
    build(p, start, final)
    return _eliminate_epsilon(Nfa(next(counter), start, final,
                                  tuple(transitions)))


def _eliminate_epsilon(nfa):
    closure = {q: {q} for q in range(nfa.n_states)}
    changed = True
    while changed:
        changed = False
        for s, l, t in nfa.transitions:
            if l is None:
                for q in list(closure):
                    if s in closure[q] and t not in closure[q]:
                        closure[q].add(t)
                        changed = True
    moves = set()
    for s, l, t in nfa.transitions:
        if l is None:
            continue
        for q in range(nfa.n_states):
            if s in closure[q]:
                moves.add((q, l, t))
    finals = {q for q in range(nfa.n_states) if nfa.final in closure[q]}
    # single final state: add a fresh sink reachable by duplicating moves
    sink = nfa.n_states
    out = set(moves)
    for s, l, t in moves:
        if t in finals:
            out.add((s, l, sink))
    start_final = nfa.final in closure[nfa.start]
    if start_final:
        # empty word accepted: handled by the matcher via `accepts_empty`
        pass
    return EpsFreeNfa(sink + 1, nfa.start, sink, tuple(sorted(out)),
                      accepts_empty=start_final)


@dataclass(frozen=True)
class EpsFreeNfa:
    n_states: int
    start: int
    final: int
    transitions: tuple
    accepts_empty: bool

    def moves_from(self, q):
        return [(l, t) for s, l, t in self.transitions if s == q]


def path_pairs(nfa, i):
    """All (d, e) with an nfa-accepted path from d to e in interpretation i."""
    reach = {(nfa.start, d, d) for d in i.domain}
    # states reached: (nfa-state, origin, current)
    frontier = list(reach)
    while frontier:
        q, origin, cur = frontier.pop()
        for l, t in nfa.moves_from(q):
            if l[0] == "role":
                _, name, inverted = l
                targets = i.successors(name, cur, inverted)
            else:
                targets = {cur} if cur in i.concept(l[1]) else set()
            for nxt in targets:
                state = (t, origin, nxt)
                if state not in reach:
                    reach.add(state)
                    frontier.append(state)
    pairs = {(origin, cur) for q, origin, cur in reach if q == nfa.final}
    if nfa.accepts_empty:
        pairs |= {(d, d) for d in i.domain}
    return pairs


# --- matching ----------------------------------------------------------------------

def match_query(i, q, closed=False, kb=None):
    """Return the canonically least match (a dict term->element) or None.

    closed=True evaluates over the transitive closure of i (per the KB's
    role kinds when a kb is supplied, else per the roles' own flags).
    """
    if isinstance(q, IQ):
        target = i
        if closed:
            target = _close(i, q.concept, kb)
        if q.individual not in target.individuals:
            return None
        e = target.element_of(q.individual)
        if e in I.evaluate_concept(target, q.concept):
            return {q.individual: e}
        return None
    target = i
    if closed:
        trans = _transitive_names(q, kb)
        target = I.transitive_closure(i, trans)
    for disjunct in disjuncts(q.formula):
        got = _match_disjunct(target, disjunct)
        if got is not None:
            return got
    return None


def _close(i, concept, kb):
    if kb is not None:
        return I.close_for_kb(i, kb)
    names = set()

    def walk(c):
        if isinstance(c, (K.Exists, K.ForAll, K.AtMost, K.AtLeast)):
            if c.role.transitive:
                names.add(c.role.name)
            walk(c.arg)
        elif isinstance(c, K.Not):
            walk(c.arg)
        elif isinstance(c, (K.And, K.Or)):
            for a in c.args:
                walk(a)

    walk(concept)
    return I.transitive_closure(i, names)


def _transitive_names(q, kb):
    if kb is not None:
        return [r for r, t in kb.role_kinds.items() if t]
    names = set()
    for atom in atoms_of(q.formula):
        if isinstance(atom, PathAtom):
            stack = [atom.path]
            while stack:
                p = stack.pop()
                if isinstance(p, PRole) and p.role.transitive:
                    names.add(p.role.name)
                elif isinstance(p, PStar):
                    stack.append(p.arg)
                elif isinstance(p, (PUnion, PComp)):
                    stack.extend((p.left, p.right))
    return sorted(names)


def _match_disjunct(i, atoms):
    terms = []
    for a in atoms:
        ts = (a.s, a.t) if isinstance(a, PathAtom) else (a.t,)
        for t in ts:
            if t not in terms:
                terms.append(t)
    assignment = {}
    for t in terms:
        if isinstance(t, Ind):
            if t.name not in i.individuals:
                return None
            assignment[t] = i.element_of(t.name)
    pair_cache = {}

    def atom_ok(a):
        vals = []
        for t in ((a.s, a.t) if isinstance(a, PathAtom) else (a.t,)):
            if t not in assignment:
                return True
            vals.append(assignment[t])
        if isinstance(a, ConceptAtom):
            return vals[0] in i.concept(a.name)
        key = id(a.path)
        if key not in pair_cache:
            pair_cache[key] = path_pairs(compile_path(a.path), i)
        return tuple(vals) in pair_cache[key]

    variables = [t for t in terms if isinstance(t, Var)]

    def rec(k):
        if k == len(variables):
            return all(atom_ok(a) for a in atoms)
        v = variables[k]
        for d in i.domain:
            assignment[v] = d
            if all(atom_ok(a) for a in atoms) and rec(k + 1):
                return True
            del assignment[v]
        return False

    if rec(0):
        return {str(t): e for t, e in sorted(assignment.items(),
                                             key=lambda kv: str(kv[0]))}
    return None
