"""Knowledge-base syntax: concepts, roles, axioms, the text format, the
normalizer, and signatures.

Dialects:
  SQ    -- no inverse roles, no nominals
  SOQ   -- nominals allowed, no inverse roles
  SIQ-  -- inverse roles allowed, no nominals; number restrictions may not
           use inverse transitive roles

Normal form produced by :func:`normalize` (A, B atoms = names or nominals):
  1. A1 n ... n Ak [= B1 u ... u Bm
  2. A [= all inv(r).B       (r transitive only)
  3. A [= some inv(r).B      (r transitive only)
  4. A [= atmost n s.B       (s non-transitive role or transitive role name)
  5. A [= atleast n s.B      (same s)
plus, for every at-most/at-least restriction occurring in the output, the
equivalence triple  E [= atmost n s.B,  E' [= atleast n+1 s.B,
T [= E u E'  with E fresh and not on the left of any other axiom.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

MAX_NUMBER = 2**31 - 1

SQ = "SQ"
SOQ = "SOQ"
SIQ = "SIQ-"


class KbError(Exception):
    pass


class KbSyntaxError(KbError):
    def __init__(self, msg, line=None, col=None):
        self.line, self.col = line, col
        where = f" at line {line}, column {col}" if line is not None else ""
        super().__init__(f"syntax error{where}: {msg}")


class DialectError(KbError):
    pass


class NumberOverflowError(KbError):
    pass


# --- roles -----------------------------------------------------------------

@dataclass(frozen=True, order=True)
class Role:
    """A role name or its inverse; `transitive` refers to the name."""
    name: str
    inverted: bool = False
    transitive: bool = False

    def inverse(self):
        return Role(self.name, not self.inverted, self.transitive)

    def __str__(self):
        return f"inv({self.name})" if self.inverted else self.name


# --- concepts ---------------------------------------------------------------

class Concept:
    __slots__ = ()

    def __str__(self):
        return concept_str(self)


@dataclass(frozen=True)
class Top(Concept):
    __slots__ = ()


@dataclass(frozen=True)
class Bottom(Concept):
    __slots__ = ()


@dataclass(frozen=True)
class Name(Concept):
    name: str


@dataclass(frozen=True)
class Nominal(Concept):
    individual: str


@dataclass(frozen=True)
class Not(Concept):
    arg: Concept


@dataclass(frozen=True)
class And(Concept):
    args: tuple


@dataclass(frozen=True)
class Or(Concept):
    args: tuple


@dataclass(frozen=True)
class Exists(Concept):
    role: Role
    arg: Concept


@dataclass(frozen=True)
class ForAll(Concept):
    role: Role
    arg: Concept


@dataclass(frozen=True)
class AtMost(Concept):
    n: int
    role: Role
    arg: Concept


@dataclass(frozen=True)
class AtLeast(Concept):
    n: int
    role: Role
    arg: Concept


TOP = Top()
BOTTOM = Bottom()


def concept_str(c):
    if isinstance(c, Top):
        return "top"
    if isinstance(c, Bottom):
        return "bottom"
    if isinstance(c, Name):
        return c.name
    if isinstance(c, Nominal):
        return "{%s}" % c.individual
    if isinstance(c, Not):
        return f"not {concept_str(c.arg)}"
    if isinstance(c, And):
        return "(" + " and ".join(concept_str(a) for a in c.args) + ")"
    if isinstance(c, Or):
        return "(" + " or ".join(concept_str(a) for a in c.args) + ")"
    if isinstance(c, Exists):
        return f"some {c.role}.{concept_str(c.arg)}"
    if isinstance(c, ForAll):
        return f"all {c.role}.{concept_str(c.arg)}"
    if isinstance(c, AtMost):
        return f"atmost {c.n} {c.role}.{concept_str(c.arg)}"
    if isinstance(c, AtLeast):
        return f"atleast {c.n} {c.role}.{concept_str(c.arg)}"
    raise TypeError(c)


def is_atom(c):
    return isinstance(c, (Name, Nominal))


# --- axioms and knowledge bases ---------------------------------------------

@dataclass(frozen=True)
class CI:
    lhs: Concept
    rhs: Concept

    def __str__(self):
        return f"{self.lhs} [= {self.rhs}"


@dataclass(frozen=True)
class ConceptAssertion:
    concept: str
    individual: str

    def __str__(self):
        return f"{self.concept}({self.individual})"


@dataclass(frozen=True)
class RoleAssertion:
    role: str
    a: str
    b: str

    def __str__(self):
        return f"{self.role}({self.a},{self.b})"


@dataclass(frozen=True)
class Signature:
    concept_names: tuple
    role_names: tuple            # pairs (name, transitive)
    individuals: tuple

    @property
    def transitive_roles(self):
        return tuple(n for n, t in self.role_names if t)

    @property
    def nontransitive_roles(self):
        return tuple(n for n, t in self.role_names if not t)


@dataclass(frozen=True)
class Restriction:
    """An at-most/at-least restriction shape, key of the equivalence map."""
    kind: str       # "atmost" | "atleast"
    n: int
    role: Role
    atom: Concept


@dataclass(frozen=True)
class KnowledgeBase:
    tbox: tuple
    abox: tuple
    role_kinds: dict = field(compare=False)      # role name -> transitive?
    dialect: str = SQ
    normalized: bool = False
    # eq map: Restriction -> concept name equivalent to it (appendix triple)
    eq_names: dict = field(default_factory=dict, compare=False)
    # fresh definition names introduced by the normalizer: name -> Concept
    abbreviations: dict = field(default_factory=dict, compare=False)

    def individuals_abox(self):
        out = set()
        for a in self.abox:
            if isinstance(a, ConceptAssertion):
                out.add(a.individual)
            else:
                out.update((a.a, a.b))
        return frozenset(out)

    def nominals(self):
        out = set()

        def walk(c):
            if isinstance(c, Nominal):
                out.add(c.individual)
            elif isinstance(c, Not):
                walk(c.arg)
            elif isinstance(c, (And, Or)):
                for a in c.args:
                    walk(a)
            elif isinstance(c, (Exists, ForAll, AtMost, AtLeast)):
                walk(c.arg)

        for ci in self.tbox:
            walk(ci.lhs)
            walk(ci.rhs)
        return frozenset(out)

    def individuals(self):
        return frozenset(self.individuals_abox() | self.nominals())

    def role(self, name, inverted=False):
        return Role(name, inverted, self.role_kinds.get(name, False))

    def atmost_axioms(self):
        return [ci for ci in self.tbox if isinstance(ci.rhs, AtMost)]

    def atleast_axioms(self):
        return [ci for ci in self.tbox if isinstance(ci.rhs, AtLeast)]


# --- parsing -----------------------------------------------------------------

_KEYWORDS = {"transitive", "role", "concept", "individual", "tbox", "abox",
             "not", "and", "or", "some", "all", "atmost", "atleast", "inv",
             "top", "bottom"}


class _Tok:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind, self.text, self.line, self.col = kind, text, line, col


def _tokenize(text):
    toks = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            toks.append(_Tok("nl", "\n", line, col))
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if text.startswith("[=", i):
            toks.append(_Tok("sub", "[=", line, col))
            i += 2
            col += 2
            continue
        if ch in "(){}.,;:":
            toks.append(_Tok(ch, ch, line, col))
            i += 1
            col += 1
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(_Tok("num", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_-'"):
                j += 1
            word = text[i:j]
            kind = "kw" if word in _KEYWORDS else "id"
            toks.append(_Tok(kind, word, line, col))
            col += j - i
            i = j
            continue
        raise KbSyntaxError(f"unexpected character {ch!r}", line, col)
    toks.append(_Tok("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.toks[self.pos]

    def next(self):
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def fail(self, msg, tok=None):
        tok = tok or self.peek()
        raise KbSyntaxError(msg, tok.line, tok.col)

    def expect(self, kind, text=None):
        t = self.next()
        if t.kind != kind or (text is not None and t.text != text):
            self.fail(f"expected {text or kind}, found {t.text!r}", t)
        return t

    def skip_separators(self):
        while self.peek().kind in ("nl", ";"):
            self.next()

    def at_separator(self):
        return self.peek().kind in ("nl", ";", "eof")

    # concept grammar: atoms bind tightest; `not`/quantifiers prefix; binary
    # and/or only inside parentheses, mirroring the axiom file format.
    def concept(self, kb):
        t = self.peek()
        if t.kind == "kw" and t.text == "top":
            self.next()
            return TOP
        if t.kind == "kw" and t.text == "bottom":
            self.next()
            return BOTTOM
        if t.kind == "kw" and t.text == "not":
            self.next()
            return Not(self.concept(kb))
        if t.kind == "kw" and t.text in ("some", "all"):
            self.next()
            r = self.role(kb)
            self.expect(".")
            c = self.concept(kb)
            return Exists(r, c) if t.text == "some" else ForAll(r, c)
        if t.kind == "kw" and t.text in ("atmost", "atleast"):
            self.next()
            num = self.expect("num")
            n = int(num.text)
            if n > MAX_NUMBER:
                raise NumberOverflowError(
                    f"number {n} exceeds {MAX_NUMBER} (line {num.line})")
            r = self.role(kb)
            self.expect(".")
            c = self.concept(kb)
            return AtMost(n, r, c) if t.text == "atmost" else AtLeast(n, r, c)
        if t.kind == "{":
            self.next()
            ind = self.expect("id")
            self.expect("}")
            return Nominal(ind.text)
        if t.kind == "(":
            self.next()
            first = self.concept(kb)
            if self.peek().kind == ")":
                self.next()
                return first
            op = self.next()
            if op.kind != "kw" or op.text not in ("and", "or"):
                self.fail("expected 'and' or 'or'", op)
            args = [first, self.concept(kb)]
            while self.peek().kind == "kw" and self.peek().text == op.text:
                self.next()
                args.append(self.concept(kb))
            self.expect(")")
            return And(tuple(args)) if op.text == "and" else Or(tuple(args))
        if t.kind == "id":
            self.next()
            return Name(t.text)
        self.fail(f"expected a concept, found {t.text!r}")

    def role(self, kb):
        t = self.peek()
        if t.kind == "kw" and t.text == "inv":
            self.next()
            self.expect("(")
            name = self.expect("id")
            self.expect(")")
            inverted = True
        else:
            name = self.expect("id")
            inverted = False
        if name.text not in kb["roles"]:
            self.fail(f"undeclared role {name.text!r}", name)
        return Role(name.text, inverted, kb["roles"][name.text])


def parse_kb(text):
    """Parse the axiom text format into a KnowledgeBase.

    Header declarations (`transitive r` / `role s` / `concept A` /
    `individual a`), then a `tbox:` section of `C [= D` lines and an `abox:`
    section of `A(a)` / `r(a,b)` lines; newlines and `;` both separate
    entries. Dialect is inferred and mixed dialects are rejected.
    """
    p = _Parser(text)
    decl = {"roles": {}, "concepts": set(), "individuals": set()}
    tbox, abox = [], []
    section = "header"
    while True:
        p.skip_separators()
        t = p.peek()
        if t.kind == "eof":
            break
        if t.kind == "kw" and t.text in ("tbox", "abox"):
            p.next()
            p.expect(":")
            section = t.text
            continue
        if section == "header":
            if t.kind != "kw" or t.text not in ("transitive", "role",
                                                "concept", "individual"):
                p.fail("expected a declaration, 'tbox:' or 'abox:'", t)
            p.next()
            name = p.expect("id")
            if t.text == "transitive":
                decl["roles"][name.text] = True
            elif t.text == "role":
                decl["roles"].setdefault(name.text, False)
            elif t.text == "concept":
                decl["concepts"].add(name.text)
            else:
                decl["individuals"].add(name.text)
        elif section == "tbox":
            lhs = p.concept(decl)
            p.expect("sub")
            rhs = p.concept(decl)
            tbox.append(CI(lhs, rhs))
            if not p.at_separator():
                p.fail("trailing input after concept inclusion")
        else:
            name = p.expect("id")
            p.expect("(")
            a = p.expect("id")
            if p.peek().kind == ",":
                p.next()
                b = p.expect("id")
                p.expect(")")
                if name.text not in decl["roles"]:
                    p.fail(f"undeclared role {name.text!r}", name)
                abox.append(RoleAssertion(name.text, a.text, b.text))
            else:
                p.expect(")")
                abox.append(ConceptAssertion(name.text, a.text))
            if not p.at_separator():
                p.fail("trailing input after assertion")
    if not abox:
        raise KbSyntaxError("ABox must be non-empty")
    kb = KnowledgeBase(tbox=tuple(tbox), abox=tuple(abox),
                       role_kinds=dict(decl["roles"]))
    dialect = infer_dialect(kb)
    check_well_formed(kb, dialect)
    return KnowledgeBase(tbox=kb.tbox, abox=kb.abox,
                         role_kinds=kb.role_kinds, dialect=dialect)


def _concept_roles(c, out):
    if isinstance(c, Not):
        _concept_roles(c.arg, out)
    elif isinstance(c, (And, Or)):
        for a in c.args:
            _concept_roles(a, out)
    elif isinstance(c, (Exists, ForAll, AtMost, AtLeast)):
        out.append((c.role, c))
        _concept_roles(c.arg, out)


def infer_dialect(kb):
    uses_inverse = False
    uses_nominal = bool(kb.nominals())
    for ci in kb.tbox:
        occ = []
        _concept_roles(ci.lhs, occ)
        _concept_roles(ci.rhs, occ)
        if any(r.inverted for r, _ in occ):
            uses_inverse = True
    if uses_inverse and uses_nominal:
        raise DialectError(
            "mixed dialect: inverse roles and nominals cannot both occur")
    if uses_inverse:
        return SIQ
    if uses_nominal:
        return SOQ
    return SQ


def check_well_formed(kb, dialect):
    for ci in kb.tbox:
        occ = []
        _concept_roles(ci.lhs, occ)
        _concept_roles(ci.rhs, occ)
        for r, c in occ:
            if isinstance(c, (AtMost, AtLeast)) and r.inverted and r.transitive:
                raise DialectError(
                    "inverse transitive roles are not allowed in at-most and "
                    f"at-least restrictions: offending axiom '{ci}'")
            if isinstance(c, (AtMost, AtLeast)) and c.n > MAX_NUMBER:
                raise NumberOverflowError(f"number {c.n} exceeds {MAX_NUMBER}")


# --- normalization ------------------------------------------------------------

def _hash_name(prefix, payload):
    h = hashlib.sha256(payload.encode()).hexdigest()[:8]
    return f"_{prefix}{h}"


def _nnf(c, positive=True):
    """Negation normal form with constant folding; ForAll/Exists and
    AtMost/AtLeast are dual pairs, >=0 collapses to top."""
    if isinstance(c, Top):
        return TOP if positive else BOTTOM
    if isinstance(c, Bottom):
        return BOTTOM if positive else TOP
    if is_atom(c):
        return c if positive else Not(c)
    if isinstance(c, Not):
        return _nnf(c.arg, not positive)
    if isinstance(c, And):
        args = tuple(_nnf(a, positive) for a in c.args)
        return And(args) if positive else Or(args)
    if isinstance(c, Or):
        args = tuple(_nnf(a, positive) for a in c.args)
        return Or(args) if positive else And(args)
    if isinstance(c, Exists):
        a = _nnf(c.arg, positive)
        return Exists(c.role, a) if positive else ForAll(c.role, a)
    if isinstance(c, ForAll):
        a = _nnf(c.arg, positive)
        return ForAll(c.role, a) if positive else Exists(c.role, a)
    if isinstance(c, AtMost):
        a = _nnf(c.arg, True)
        if positive:
            return AtMost(c.n, c.role, a)
        return AtLeast(c.n + 1, c.role, a)
    if isinstance(c, AtLeast):
        a = _nnf(c.arg, True)
        if positive:
            return TOP if c.n == 0 else AtLeast(c.n, c.role, a)
        return BOTTOM if c.n == 0 else AtMost(c.n - 1, c.role, a)
    raise TypeError(c)


class _Normalizer:
    def __init__(self, kb):
        self.kb = kb
        self.out = []
        self.abbr = {}
        self.defined = {}      # memo key -> atom

    def lower_atom_for(self, c):
        """Atom X with X [= c; for fillers in positive positions."""
        if is_atom(c):
            return c
        key = "lo:" + concept_str(c)
        if key in self.defined:
            return self.defined[key]
        name = Name(_hash_name("D", key))
        self.defined[key] = name
        self.abbr[name.name] = c
        self.define(name, c)
        return name

    def upper_atom_for(self, c):
        """Atom X with c [= X (via top [= not-c u X); for at-most fillers."""
        if is_atom(c):
            return c
        key = "up:" + concept_str(c)
        if key in self.defined:
            return self.defined[key]
        name = Name(_hash_name("U", key))
        self.defined[key] = name
        self.abbr[name.name] = c
        self.emit_clause([], [_nnf(Not(c)), name])
        return name

    def define(self, atom, c):
        """Emit axioms forcing atom [= c for an NNF concept c."""
        if isinstance(c, Top):
            return
        if isinstance(c, Bottom):
            self.emit_clause([atom], [])
            return
        if is_atom(c):
            self.emit_clause([atom], [c])
            return
        if isinstance(c, Not):      # argument is an atom in NNF
            self.emit_clause([atom, c.arg], [])
            return
        if isinstance(c, And):
            for a in c.args:
                self.define(atom, a)
            return
        if isinstance(c, Or):
            self.emit_clause([atom], list(c.args))
            return
        if isinstance(c, Exists):
            r = c.role
            if r.inverted and r.transitive:
                self.out.append(CI(atom, Exists(r, self.lower_atom_for(c.arg))))
            else:
                self.out.append(CI(atom, AtLeast(1, r,
                                                 self.lower_atom_for(c.arg))))
            return
        if isinstance(c, ForAll):
            r = c.role
            if r.inverted and r.transitive:
                self.out.append(CI(atom, ForAll(r, self.lower_atom_for(c.arg))))
            else:
                self.out.append(
                    CI(atom, AtMost(0, r,
                                    self.upper_atom_for(_nnf(Not(c.arg))))))
            return
        if isinstance(c, AtMost):
            self.out.append(CI(atom, AtMost(c.n, c.role,
                                            self.upper_atom_for(c.arg))))
            return
        if isinstance(c, AtLeast):
            if c.n == 0:
                return
            self.out.append(CI(atom, AtLeast(c.n, c.role,
                                             self.lower_atom_for(c.arg))))
            return
        raise TypeError(c)

    def emit_clause(self, lhs_atoms, rhs):
        """Emit (and-of-atoms) [= (or of NNF concepts), flattening
        disjunctions and naming complex disjuncts."""
        rhs_atoms = []
        extra_lhs = list(lhs_atoms)
        queue = [_nnf(d) for d in rhs]
        while queue:
            d = queue.pop(0)
            if isinstance(d, Top):
                return
            if isinstance(d, Bottom):
                continue
            if isinstance(d, Or):
                queue = list(d.args) + queue
            elif isinstance(d, Not) and is_atom(d.arg):
                extra_lhs.append(d.arg)
            elif is_atom(d):
                rhs_atoms.append(d)
            else:
                rhs_atoms.append(self.lower_atom_for(d))
        lhs = And(tuple(dict.fromkeys(extra_lhs)))
        rhs_c = Or(tuple(dict.fromkeys(rhs_atoms)))
        self.out.append(CI(lhs, rhs_c))

    def run(self):
        for ci in self.kb.tbox:
            lhs = _nnf(ci.lhs)
            # fast path: a conjunction of atoms on the left
            if is_atom(lhs) or (isinstance(lhs, And)
                                and all(is_atom(a) for a in lhs.args)):
                atoms = [lhs] if is_atom(lhs) else list(lhs.args)
                rhs = _nnf(ci.rhs)
                if len(atoms) == 1 and isinstance(
                        rhs, (Exists, ForAll, AtMost, AtLeast, And)):
                    self.define(atoms[0], rhs)
                else:
                    self.emit_clause(atoms, [rhs])
            else:
                self.emit_clause([], [_nnf(Not(ci.lhs)), _nnf(ci.rhs)])
        eq = self._close_equivalences()
        return self.out, self.abbr, eq

    def _close_equivalences(self):
        eq = {}
        seen = set()
        queue = []
        for ci in self.out:
            if isinstance(ci.rhs, (AtMost, AtLeast)):
                queue.append(ci.rhs)
        while queue:
            c = queue.pop()
            kind = "atmost" if isinstance(c, AtMost) else "atleast"
            key = Restriction(kind, c.n, c.role, c.arg)
            if key in seen:
                continue
            seen.add(key)
            payload = f"{kind} {c.n} {c.role}.{concept_str(c.arg)}"
            e = Name(_hash_name("E", payload))
            e2 = Name(_hash_name("E", "co:" + payload))
            eq[key] = e.name
            if kind == "atmost":
                partner = AtLeast(c.n + 1, c.role, c.arg)
            else:
                partner = AtMost(c.n - 1, c.role, c.arg)
            self.out.append(CI(e, c))
            self.out.append(CI(e2, partner))
            self.out.append(CI(And(()), Or((e, e2))))
            self.abbr[e.name] = c
            self.abbr[e2.name] = partner
            queue.append(partner)
        return eq


def _dedupe_cis(cis):
    seen = set()
    out = []
    for ci in cis:
        if ci not in seen:
            seen.add(ci)
            out.append(ci)
    return out


def normalize(kb):
    """Rewrite every concept inclusion into the five normal forms and add the
    equivalence triples for all at-most/at-least restrictions.

    Total on well-formed input; idempotent because fresh names are derived
    from content hashes.
    """
    if kb.normalized:
        return kb
    nz = _Normalizer(kb)
    tbox, abbr, eq = nz.run()
    tbox = _dedupe_cis(tbox)
    return KnowledgeBase(tbox=tuple(tbox), abox=kb.abox,
                         role_kinds=dict(kb.role_kinds), dialect=kb.dialect,
                         normalized=True, eq_names=eq, abbreviations=abbr)


# --- signatures ---------------------------------------------------------------

def signature(kb):
    """Every symbol occurring in the KB, in stable sorted order."""
    concepts, roles, individuals = set(), set(), set()

    def walk(c):
        if isinstance(c, Name):
            concepts.add(c.name)
        elif isinstance(c, Nominal):
            individuals.add(c.individual)
        elif isinstance(c, Not):
            walk(c.arg)
        elif isinstance(c, (And, Or)):
            for a in c.args:
                walk(a)
        elif isinstance(c, (Exists, ForAll, AtMost, AtLeast)):
            roles.add(c.role.name)
            walk(c.arg)

    for ci in kb.tbox:
        walk(ci.lhs)
        walk(ci.rhs)
    for a in kb.abox:
        if isinstance(a, ConceptAssertion):
            concepts.add(a.concept)
            individuals.add(a.individual)
        else:
            roles.add(a.role)
            individuals.update((a.a, a.b))
    return Signature(
        concept_names=tuple(sorted(concepts)),
        role_names=tuple((r, kb.role_kinds.get(r, False))
                         for r in sorted(roles)),
        individuals=tuple(sorted(individuals)),
    )


def kb_text(kb):
    """Render a KnowledgeBase back into the axiom text format."""
    lines = []
    for r in sorted(kb.role_kinds):
        lines.append(("transitive " if kb.role_kinds[r] else "role ") + r)
    for ind in sorted(kb.individuals()):
        lines.append("individual " + ind)
    lines.append("tbox:")
    for ci in kb.tbox:
        lines.append(str(ci))
    lines.append("abox:")
    for a in kb.abox:
        lines.append(str(a))
    return "\n".join(lines) + "\n"
