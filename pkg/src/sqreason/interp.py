"""Finite interpretations: semantics, transitive closure, clusters and
relevant successors, model checking, homomorphisms, and the exhaustive
finite-model oracle.

Element ids are small dense integers; individuals are mapped to elements by
the standard name assumption and fixed under homomorphisms.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

from . import kb as K


class BudgetExceeded(Exception):
    """A bounded search ran out of budget; distinctly not a 'none' answer."""


def _freeze_roles(roles):
    return {r: frozenset((int(a), int(b)) for a, b in pairs)
            for r, pairs in roles.items() if pairs}


class Interpretation:
    """Immutable finite structure: domain, concept and role extensions, and
    the (injective) individual map."""

    __slots__ = ("domain", "concepts", "roles", "individuals", "_key")

    def __init__(self, domain, concepts=None, roles=None, individuals=None):
        self.domain = tuple(sorted(int(d) for d in set(domain)))
        dom = set(self.domain)
        self.concepts = {a: frozenset(int(x) for x in ext)
                         for a, ext in (concepts or {}).items() if ext}
        self.roles = _freeze_roles(roles or {})
        self.individuals = dict(sorted((individuals or {}).items()))
        for a, ext in self.concepts.items():
            if not ext <= dom:
                raise ValueError(f"extension of {a} outside domain")
        for r, pairs in self.roles.items():
            for x, y in pairs:
                if x not in dom or y not in dom:
                    raise ValueError(f"edge of {r} outside domain")
        for name, e in self.individuals.items():
            if e not in dom:
                raise ValueError(f"individual {name} outside domain")
        self._key = None

    def key(self):
        if self._key is None:
            self._key = (
                self.domain,
                tuple(sorted((a, tuple(sorted(ext)))
                             for a, ext in self.concepts.items())),
                tuple(sorted((r, tuple(sorted(p)))
                             for r, p in self.roles.items())),
                tuple(self.individuals.items()),
            )
        return self._key

    def __eq__(self, other):
        return isinstance(other, Interpretation) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return (f"Interpretation(domain={self.domain}, "
                f"concepts={ {a: sorted(e) for a, e in self.concepts.items()} }, "
                f"roles={ {r: sorted(p) for r, p in self.roles.items()} }, "
                f"individuals={self.individuals})")

    # -- basic accessors

    def concept(self, name):
        return self.concepts.get(name, frozenset())

    def role(self, name):
        return self.roles.get(name, frozenset())

    def successors(self, role, d, inverted=False):
        if inverted:
            return frozenset(a for a, b in self.role(role) if b == d)
        return frozenset(b for a, b in self.role(role) if a == d)

    def element_of(self, individual):
        if individual not in self.individuals:
            raise KeyError(f"unknown individual {individual!r}")
        return self.individuals[individual]

    # -- constructions (all pure)

    def restrict_domain(self, elements):
        elements = set(elements)
        return Interpretation(
            domain=elements,
            concepts={a: ext & elements for a, ext in self.concepts.items()},
            roles={r: {(x, y) for x, y in p if x in elements and y in elements}
                   for r, p in self.roles.items()},
            individuals={n: e for n, e in self.individuals.items()
                         if e in elements},
        )

    def restrict_signature(self, concept_names, role_names):
        cn, rn = set(concept_names), set(role_names)
        return Interpretation(
            domain=self.domain,
            concepts={a: e for a, e in self.concepts.items() if a in cn},
            roles={r: p for r, p in self.roles.items() if r in rn},
            individuals=self.individuals,
        )

    def union(self, other):
        concepts = {a: set(e) for a, e in self.concepts.items()}
        for a, e in other.concepts.items():
            concepts.setdefault(a, set()).update(e)
        roles = {r: set(p) for r, p in self.roles.items()}
        for r, p in other.roles.items():
            roles.setdefault(r, set()).update(p)
        individuals = dict(self.individuals)
        for n, e in other.individuals.items():
            if individuals.get(n, e) != e:
                raise ValueError(f"individual {n} maps to two elements")
            individuals[n] = e
        return Interpretation(set(self.domain) | set(other.domain),
                              concepts, roles, individuals)

    def is_sub_interpretation(self, other):
        if not set(self.domain) <= set(other.domain):
            return False
        for a, e in self.concepts.items():
            if not e <= other.concept(a):
                return False
        for r, p in self.roles.items():
            if not p <= other.role(r):
                return False
        return True

    def renamed(self, mapping):
        return Interpretation(
            domain={mapping[d] for d in self.domain},
            concepts={a: {mapping[x] for x in e}
                      for a, e in self.concepts.items()},
            roles={r: {(mapping[x], mapping[y]) for x, y in p}
                   for r, p in self.roles.items()},
            individuals={n: mapping[e] for n, e in self.individuals.items()},
        )

    def with_concepts(self, extra):
        concepts = {a: set(e) for a, e in self.concepts.items()}
        for a, e in extra.items():
            concepts.setdefault(a, set()).update(e)
        return Interpretation(self.domain, concepts, self.roles,
                              self.individuals)

    # -- JSON (stable key order)

    def to_json(self):
        obj = {
            "domain": list(self.domain),
            "concepts": {a: sorted(e)
                         for a, e in sorted(self.concepts.items())},
            "roles": {r: [list(p) for p in sorted(pairs)]
                      for r, pairs in sorted(self.roles.items())},
            "individuals": dict(sorted(self.individuals.items())),
        }
        return json.dumps(obj, indent=2, sort_keys=False)

    @staticmethod
    def from_json(text):
        obj = json.loads(text)
        return Interpretation(
            domain=obj["domain"],
            concepts={a: set(e) for a, e in obj.get("concepts", {}).items()},
            roles={r: {tuple(p) for p in pairs}
                   for r, pairs in obj.get("roles", {}).items()},
            individuals=obj.get("individuals", {}),
        )


def transitive_closure(i, transitive_roles):
    """Close the listed role names transitively; everything else unchanged."""
    roles = {r: set(p) for r, p in i.roles.items()}
    for r in transitive_roles:
        pairs = roles.get(r)
        if not pairs:
            continue
        succ = {}
        for x, y in pairs:
            succ.setdefault(x, set()).add(y)
        closed = set(pairs)
        changed = True
        while changed:
            changed = False
            for x, y in list(closed):
                for z in succ.get(y, ()):
                    if (x, z) not in closed:
                        closed.add((x, z))
                        succ.setdefault(x, set()).add(z)
                        changed = True
        roles[r] = closed
    return Interpretation(i.domain, i.concepts, roles, i.individuals)


def close_for_kb(i, kb):
    return transitive_closure(
        i, [r for r, t in kb.role_kinds.items() if t])


# --- concept evaluation -------------------------------------------------------

def evaluate_concept(i, c):
    """Standard semantics over the given interpretation (no implicit
    closure); nominals via standard names; counting is over distinct
    successors."""
    if isinstance(c, K.Top):
        return frozenset(i.domain)
    if isinstance(c, K.Bottom):
        return frozenset()
    if isinstance(c, K.Name):
        return i.concept(c.name)
    if isinstance(c, K.Nominal):
        return frozenset({i.element_of(c.individual)})
    if isinstance(c, K.Not):
        return frozenset(i.domain) - evaluate_concept(i, c.arg)
    if isinstance(c, K.And):
        out = frozenset(i.domain)
        for a in c.args:
            out &= evaluate_concept(i, a)
        return out
    if isinstance(c, K.Or):
        out = frozenset()
        for a in c.args:
            out |= evaluate_concept(i, a)
        return out
    ext = evaluate_concept(i, c.arg)
    if isinstance(c, K.Exists):
        return frozenset(d for d in i.domain
                         if i.successors(c.role.name, d, c.role.inverted) & ext)
    if isinstance(c, K.ForAll):
        return frozenset(
            d for d in i.domain
            if i.successors(c.role.name, d, c.role.inverted) <= ext)
    if isinstance(c, K.AtMost):
        return frozenset(
            d for d in i.domain
            if len(i.successors(c.role.name, d, c.role.inverted) & ext) <= c.n)
    if isinstance(c, K.AtLeast):
        return frozenset(
            d for d in i.domain
            if len(i.successors(c.role.name, d, c.role.inverted) & ext) >= c.n)
    raise TypeError(c)


# --- model checking -----------------------------------------------------------

@dataclass
class Violation:
    kind: str          # "ci" | "concept-assertion" | "role-assertion" | "transitivity"
    axiom: object
    witness: tuple

    def __str__(self):
        return f"{self.kind}: {self.axiom} (witness {self.witness})"


@dataclass
class Report:
    ok: bool
    violations: list

    def __bool__(self):
        return self.ok


def check_model(i, kb, mode="closed"):
    """mode='closed' checks I |= T, I |= A, and transitivity of every
    transitive role occurring in the KB; mode='as-written' skips the
    transitivity check (the counter-witness notion)."""
    if mode not in ("closed", "as-written"):
        raise ValueError(mode)
    sig = K.signature(kb)
    for name in sig.individuals:
        if name not in i.individuals:
            raise ValueError(f"interpretation misses individual {name}")
    violations = []
    for ci in kb.tbox:
        bad = evaluate_concept(i, ci.lhs) - evaluate_concept(i, ci.rhs)
        if bad:
            violations.append(Violation("ci", ci, (min(bad),)))
    for a in kb.abox:
        if isinstance(a, K.ConceptAssertion):
            if i.element_of(a.individual) not in i.concept(a.concept):
                violations.append(Violation("concept-assertion", a,
                                            (a.individual,)))
        else:
            pair = (i.element_of(a.a), i.element_of(a.b))
            if pair not in i.role(a.role):
                violations.append(Violation("role-assertion", a, pair))
    if mode == "closed":
        for r, t in sorted(kb.role_kinds.items()):
            if not t:
                continue
            pairs = i.role(r)
            for (x, y), (y2, z) in itertools.product(pairs, pairs):
                if y == y2 and (x, z) not in pairs:
                    violations.append(
                        Violation("transitivity", r, (x, y, z)))
    return Report(ok=not violations, violations=violations)


# --- clusters and relevant successors ------------------------------------------

def cluster(i, role_name, d):
    """The r-cluster of d: d plus every e with edges both ways."""
    if d not in set(i.domain):
        raise KeyError(f"unknown element {d}")
    pairs = i.role(role_name)
    out = {d}
    for e in i.domain:
        if (d, e) in pairs and (e, d) in pairs:
            out.add(e)
    return frozenset(out)


def relevant_successors(i, tbox, role_name, d):
    """Least set X with cluster(d) <= X, closed under: for e in X and an
    at-most axiom A [= atmost n r.B, if e in A, f in B and (e,f) in the
    closure, then cluster(f) <= X."""
    star = transitive_closure(i, [role_name])
    reach = star.role(role_name)
    atmosts = [ci for ci in tbox
               if isinstance(ci.rhs, K.AtMost)
               and ci.rhs.role.name == role_name
               and not ci.rhs.role.inverted]
    lhs_ext = [(evaluate_concept(i, ci.lhs), evaluate_concept(i, ci.rhs.arg))
               for ci in atmosts]
    x = set(cluster(i, role_name, d))
    work = sorted(x)
    while work:
        e = work.pop(0)
        for a_ext, b_ext in lhs_ext:
            if e not in a_ext:
                continue
            for f in sorted(b_ext):
                if (e, f) in reach and f not in x:
                    for g in sorted(cluster(i, role_name, f)):
                        if g not in x:
                            x.add(g)
                            work.append(g)
    return frozenset(x)


def direct_relevance_tree_depth(i, tbox, role_name, d):
    """Depth of the direct-relevance tree X_r(d) built by repeatedly hanging,
    under each leaf e, the elements directly relevant for e but not for any
    predecessor of e. Returns the number of inner edges on the longest path;
    bounded by the number of at-most restrictions in the TBox.
    """
    star = transitive_closure(i, [role_name])
    reach = star.role(role_name)
    atmosts = [ci.rhs for ci in tbox
               if isinstance(ci.rhs, K.AtMost)
               and ci.rhs.role.name == role_name
               and not ci.rhs.role.inverted]
    shapes = {}
    for c in atmosts:
        shapes.setdefault((c.n, K.concept_str(c.arg)), c)
    sems = [(evaluate_concept(star, K.AtMost(c.n, c.role, c.arg)),
             evaluate_concept(i, c.arg)) for c in shapes.values()]

    def directly_relevant(e):
        out = set()
        for am_ext, b_ext in sems:
            if e in am_ext:
                out |= {f for f in b_ext if (e, f) in reach}
        return out

    depth = 0
    seen = {d}
    frontier = [(d, frozenset(directly_relevant(d)), 0)]
    while frontier:
        e, banned, lvl = frontier.pop()
        for f in sorted(directly_relevant(e) - seen):
            children = directly_relevant(f) - banned
            seen.add(f)
            if children:
                depth = max(depth, lvl + 1)
                frontier.append((f, banned | frozenset(directly_relevant(e)),
                                 lvl + 1))
    return depth


# --- homomorphisms --------------------------------------------------------------

def find_homomorphism(j, i, fixed=None):
    """A map j -> i preserving concept memberships and role edges, fixing
    individuals (and the supplied elements pointwise). Exhaustive search,
    first witness in element order."""
    fixed = dict(fixed or {})
    for name, e in j.individuals.items():
        if name in i.individuals:
            fixed[e] = i.individuals[name]
        else:
            return None
    idom = list(i.domain)
    order = sorted(j.domain)
    jconcepts = {d: {a for a, e in j.concepts.items() if d in e}
                 for d in j.domain}

    def candidates(d):
        if d in fixed:
            return [fixed[d]]
        return [t for t in idom
                if all(t in i.concept(a) for a in jconcepts[d])]

    edges = [(r, x, y) for r, p in j.roles.items() for x, y in sorted(p)]

    def ok(assign):
        for r, x, y in edges:
            if x in assign and y in assign:
                if (assign[x], assign[y]) not in i.role(r):
                    return False
        return True

    assign = {}

    def rec(k):
        if k == len(order):
            return True
        d = order[k]
        for t in candidates(d):
            assign[d] = t
            if ok(assign) and rec(k + 1):
                return True
            del assign[d]
        return False

    if rec(0):
        return dict(assign)
    return None


def find_isomorphism(i, j, fixed=None):
    """A bijection i -> j preserving and reflecting concepts and edges,
    fixing individuals by name (and any supplied pairs)."""
    if len(i.domain) != len(j.domain):
        return None
    for a in set(i.concepts) | set(j.concepts):
        if len(i.concept(a)) != len(j.concept(a)):
            return None
    for r in set(i.roles) | set(j.roles):
        if len(i.role(r)) != len(j.role(r)):
            return None
    fixed = dict(fixed or {})
    for name, e in i.individuals.items():
        if name not in j.individuals:
            return None
        fixed[e] = j.individuals[name]
    names = sorted(set(i.concepts) | set(j.concepts))
    rolenames = sorted(set(i.roles) | set(j.roles))

    def row(interp, d):
        return tuple(d in interp.concept(a) for a in names)

    order = sorted(i.domain)
    assign = {}
    used = set()

    def edges_ok(d, t):
        for r in rolenames:
            pe, qe = i.role(r), j.role(r)
            for e, im in assign.items():
                if ((d, e) in pe) != ((t, im) in qe):
                    return False
                if ((e, d) in pe) != ((im, t) in qe):
                    return False
            if ((d, d) in pe) != ((t, t) in qe):
                return False
        return True

    def rec(k):
        if k == len(order):
            return True
        d = order[k]
        cands = [fixed[d]] if d in fixed else list(j.domain)
        for t in cands:
            if t in used or row(i, d) != row(j, t):
                continue
            if not edges_ok(d, t):
                continue
            assign[d] = t
            used.add(t)
            if rec(k + 1):
                return True
            del assign[d]
            used.discard(t)
        return False

    if rec(0):
        return dict(assign)
    return None


# --- exhaustive finite model search ---------------------------------------------

class _Clauses:
    """Tiny DPLL over int literals (+v / -v), exact and deterministic."""

    def __init__(self):
        self.clauses = []
        self.nvars = 0

    def var(self):
        self.nvars += 1
        return self.nvars

    def add(self, lits):
        lits = sorted(set(lits))
        if any(-l in lits for l in lits):
            return
        self.clauses.append(tuple(lits))

    def solve(self, budget=2_000_000, prefer_false=None):
        """Returns a dict var->bool or None. `prefer_false` orders branching
        (canonically least model under the given variable order)."""
        steps = [0]
        order = prefer_false or list(range(1, self.nvars + 1))

        def unit_propagate(assign, clauses):
            clauses = list(clauses)
            changed = True
            while changed:
                changed = False
                new = []
                for cl in clauses:
                    undecided = []
                    satisfied = False
                    for l in cl:
                        v = assign.get(abs(l))
                        if v is None:
                            undecided.append(l)
                        elif (l > 0) == v:
                            satisfied = True
                            break
                    if satisfied:
                        continue
                    if not undecided:
                        return None
                    if len(undecided) == 1:
                        l = undecided[0]
                        assign[abs(l)] = l > 0
                        changed = True
                    else:
                        new.append(tuple(undecided))
                clauses = new
            return clauses

        def rec(assign, clauses):
            steps[0] += 1
            if steps[0] > budget:
                raise BudgetExceeded("finite-model search budget exceeded")
            clauses = unit_propagate(assign, clauses)
            if clauses is None:
                return None
            if not clauses:
                return assign
            v = next((v for v in order if v not in assign), None)
            if v is None:
                return assign
            for val in (False, True):
                trial = dict(assign)
                trial[v] = val
                got = rec(trial, clauses)
                if got is not None:
                    return got
            return None

        return rec({}, self.clauses)


def find_finite_model(kb, max_size, budget=2_000_000):
    """Exhaustive search for a closed model with at most max_size elements.

    Works on the original signature (normalization names are determined
    anyway); individuals are pinned to the first ids and anonymous elements
    are forced into a canonical order for symmetry breaking. Returns an
    Interpretation, or None if no model of size <= max_size exists.
    """
    sig = K.signature(kb)
    inds = list(sig.individuals)
    if max_size < len(inds):
        return None
    concepts = list(sig.concept_names)
    roles = [r for r, _ in sig.role_names]
    trans = [r for r, t in sig.role_names if t]
    for m in range(max(1, len(inds)), max_size + 1):
        got = _find_model_of_size(kb, m, inds, concepts, roles, trans, budget)
        if got is not None:
            return got
    return None


def _find_model_of_size(kb, m, inds, concepts, roles, trans, budget):
    dom = list(range(m))
    ind_map = {name: idx for idx, name in enumerate(inds)}
    cl = _Clauses()
    cvar = {(a, d): cl.var() for a in concepts for d in dom}
    rvar = {(r, x, y): cl.var() for r in roles for x in dom for y in dom}

    def lit_concept(c, d, positive):
        """CNF encoding via semantics expansion; all constructs ground out."""
        if isinstance(c, K.Top):
            return [] if positive else None
        if isinstance(c, K.Bottom):
            return None if positive else []
        if isinstance(c, K.Name):
            v = cvar.get((c.name, d))
            if v is None:
                return None if positive else []
            return [v if positive else -v]
        if isinstance(c, K.Nominal):
            truth = ind_map.get(c.individual) == d
            return ([] if truth else None) if positive else (
                None if truth else [])
        raise TypeError(c)

    def ground_clauses(c, d, positive, out, top_guard):
        """Append clauses asserting d in c (positive) or d not in c, each
        clause prefixed with top_guard literals (an implication context)."""
        c = K._nnf(c, positive)
        if isinstance(c, (K.Top,)):
            return
        if isinstance(c, K.Bottom):
            out.append(list(top_guard))
            return
        if K.is_atom(c) or (isinstance(c, K.Not) and K.is_atom(c.arg)):
            pos = not isinstance(c, K.Not)
            atom = c if pos else c.arg
            lits = lit_concept(atom, d, pos)
            if lits is None:
                out.append(list(top_guard))
            elif lits:
                out.append(list(top_guard) + lits)
            return
        if isinstance(c, K.And):
            for a in c.args:
                ground_clauses(a, d, True, out, top_guard)
            return
        if isinstance(c, K.Or):
            # small-scope expansion: distribute over at most a few disjuncts
            options = []
            for a in c.args:
                sub = []
                ground_clauses(a, d, True, sub, [])
                options.append(sub)
            _distribute(options, list(top_guard), out)
            return
        if isinstance(c, (K.Exists, K.ForAll, K.AtMost, K.AtLeast)):
            _ground_restriction(c, d, out, top_guard)
            return
        raise TypeError(c)

    def _distribute(options, guard, out):
        picks = [[]]
        for sub in options:
            if not sub:          # a disjunct that is trivially true
                return
            picks = [p + [cl_] for p in picks for cl_ in sub]
            if len(picks) > 512:
                raise BudgetExceeded("CNF expansion too large")
        for p in picks:
            merged = list(guard)
            for cl_ in p:
                merged.extend(cl_)
            out.append(merged)

    fresh_defs = {}

    def defined_var(c, d):
        """Variable v with v <-> (d in c), for counting expansions."""
        key = (K.concept_str(c), d)
        if key in fresh_defs:
            return fresh_defs[key]
        v = cl.var()
        fresh_defs[key] = v
        pos, neg = [], []
        ground_clauses(c, d, True, pos, [-v])
        ground_clauses(c, d, False, neg, [v])
        for cl_ in pos:
            cl.add(cl_)
        for cl_ in neg:
            cl.add(cl_)
        return v

    def _ground_restriction(c, d, out, guard):
        r = c.role
        def edge(x, y):
            return rvar[(r.name, y, x)] if r.inverted else rvar[(r.name, x, y)]
        member = {y: defined_var(c.arg, y) for y in dom}
        if isinstance(c, K.Exists):
            c = K.AtLeast(1, c.role, c.arg)
        if isinstance(c, K.ForAll):
            for y in dom:
                out.append(list(guard) + [-edge(d, y), member[y]])
            return
        if isinstance(c, K.AtMost):
            # no subset of size n+1 may be all-successors-in-B
            if c.n >= m:
                return
            for subset in itertools.combinations(dom, c.n + 1):
                out.append(list(guard)
                           + [x for y in subset
                              for x in (-edge(d, y), -member[y])])
            return
        if isinstance(c, K.AtLeast):
            if c.n == 0:
                return
            if c.n > m:
                out.append(list(guard))
                return
            # for every subset of size m-n+1, at least one is a B-successor;
            # aux y <-> (edge(d,y) and member(y)) stays unguarded
            aux = {}
            for y in dom:
                v = cl.var()
                aux[y] = v
                cl.add([-v, edge(d, y)])
                cl.add([-v, member[y]])
                cl.add([v, -edge(d, y), -member[y]])
            for subset in itertools.combinations(dom, m - c.n + 1):
                out.append(list(guard) + [aux[y] for y in subset])
            return

    for ci in kb.tbox:
        for d in dom:
            lhs_sub = []
            ground_clauses(ci.lhs, d, False, lhs_sub, [])
            # d in lhs -> d in rhs; encode as (not lhs) or rhs via guard var
            g = cl.var()
            for cl_ in lhs_sub:
                cl.add([g] + cl_)          # g false -> lhs false
            rhs_sub = []
            ground_clauses(ci.rhs, d, True, rhs_sub, [-g])
            for cl_ in rhs_sub:
                cl.add(cl_)
    for a in kb.abox:
        if isinstance(a, K.ConceptAssertion):
            if a.concept in concepts:
                cl.add([cvar[(a.concept, ind_map[a.individual])]])
        else:
            cl.add([rvar[(a.role, ind_map[a.a], ind_map[a.b])]])
    for r in trans:
        for x in dom:
            for y in dom:
                for z in dom:
                    cl.add([-rvar[(r, x, y)], -rvar[(r, y, z)],
                            rvar[(r, x, z)]])

    got = cl.solve(budget=budget)
    if got is None:
        return None
    return Interpretation(
        domain=dom,
        concepts={a: {d for d in dom if got.get(cvar[(a, d)])}
                  for a in concepts},
        roles={r: {(x, y) for x in dom for y in dom
                   if got.get(rvar[(r, x, y)])} for r in roles},
        individuals=ind_map,
    )
