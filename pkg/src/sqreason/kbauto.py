"""The knowledge-base tree automaton: a trivial-acceptance NTA over letters
(x, I), with I a bag interpretation over the shared name pool D, recognizing
encodings of canonical tree decompositions whose underlying interpretation
models the ABox and TBox as written and whose transitive closure models the
KB.

States are <letter, F, M, B, C, e, r, f>: the parent's letter and fresh set,
the nominal core, the edge set a root child must realize among root elements,
pending obligations, and the designation markers (entry element e, child
label r, same-label exception f).

Letter generation is constraint-guided: bag rows come from a small
all-solutions DPLL over the unary axioms, witness edges from the
obligations, and only a budgeted number of optional edges is explored.
Truncations are recorded in `capped`; deciders downgrade `empty` verdicts to
`inconclusive` when generation was capped.

Beyond the bag-local conditions of the source construction, letters must be
locally transitive in their own transitive role, eq-names of at-most
restrictions are closed downward along that role (and at-most left-hand
sides imply them), and universals over inverse transitive roles propagate
through marker concepts. Without these, bag-local checking accepts trees
whose closure violates the TBox.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from . import kb as K
from . import interp as I
from . import automata as A


@dataclass
class GenBudgets:
    max_rows_per_seed: int = 256
    max_letters_per_state: int = 3000
    max_extra_edges: int = 3
    max_root_edge_extra: int = 2   # extra root/bedge pairs beyond assertions
    max_root_core_extra: int = 0   # core elements beyond the nominals
    max_slice: int = 8


Q0 = ("q0",)


@dataclass(frozen=True)
class KbState:
    label: object            # parent's x (role name or None)
    interp: I.Interpretation  # parent's bag
    fresh: frozenset
    core: I.Interpretation
    bedges: frozenset        # root-element edges the child must realize
    obligations: frozenset
    e: object                # designated entry element or None
    r: object                # designated child label or None
    f: object                # same-label exception element or None


def atom_key(atom):
    if isinstance(atom, K.Nominal):
        return ("o", atom.individual)
    return ("n", atom.name)


class KbAutomatonBuilder:
    def __init__(self, kb, width, gen=None):
        if not kb.normalized:
            raise ValueError("KB automaton needs a normalized KB")
        self.kb = kb
        self.width = width
        self.gen = gen or GenBudgets()
        self.capped = False
        sig = K.signature(kb)
        self.concepts = list(sig.concept_names)
        self.trans = sorted(r for r, t in kb.role_kinds.items() if t)
        self.nontrans = sorted(r for r, t in kb.role_kinds.items() if not t)
        self.inds = sorted(kb.individuals())
        self.nominals = sorted(kb.nominals())
        if width < max(1, len(self.inds)):
            raise ValueError("width smaller than the number of individuals")
        self.dsize = 2 * width + 2
        self.ind_name = {name: idx for idx, name in enumerate(self.inds)}
        self.univ_inv = [ci for ci in kb.tbox if isinstance(ci.rhs, K.ForAll)]
        self.markers = {idx: f"_Mk{idx}" for idx in range(len(self.univ_inv))}
        self.all_names = self.concepts + [self.markers[i]
                                          for i in sorted(self.markers)]
        self.form1 = [ci for ci in kb.tbox if isinstance(ci.rhs, K.Or)]
        self.atmost = kb.atmost_axioms()
        self.atleast = kb.atleast_axioms()
        self.invex = [ci for ci in kb.tbox if isinstance(ci.rhs, K.Exists)]
        self._row_cache = {}
        self._letter_cache = {}
        self._trans_cache = {}

    # ------------------------------------------------------------------ rows

    def _row_clauses(self, individual):
        names = {n: i + 1 for i, n in enumerate(self.all_names)}
        clauses = []

        def lit(atom, positive):
            if isinstance(atom, K.Nominal):
                truth = individual == atom.individual
                return "sat" if truth == positive else None
            v = names.get(atom.name)
            if v is None:
                return None if positive else "sat"
            return v if positive else -v

        def implication(neg_atom, pos_atom):
            la, lb = lit(neg_atom, False), lit(pos_atom, True)
            if la == "sat" or lb == "sat":
                return
            lits = [l for l in (la, lb) if l is not None]
            clauses.append(lits)

        for ci in self.form1:
            lits = []
            sat = False
            for a in ci.lhs.args:
                l = lit(a, False)
                if l == "sat":
                    sat = True
                    break
                if l is not None:
                    lits.append(l)
            if not sat:
                for b in ci.rhs.args:
                    l = lit(b, True)
                    if l == "sat":
                        sat = True
                        break
                    if l is not None:
                        lits.append(l)
            if not sat:
                clauses.append(lits)
        for ci in self.atmost:
            eq = self.eq_name(ci)
            if eq is not None:
                implication(ci.lhs, K.Name(eq))
        for idx, ci in enumerate(self.univ_inv):
            implication(ci.lhs, K.Name(self.markers[idx]))
        return names, clauses

    def rows(self, required=(), forbidden=(), individual=None):
        key = (tuple(sorted(required)), tuple(sorted(forbidden)), individual)
        if key in self._row_cache:
            return self._row_cache[key]
        names, clauses = self._row_clauses(individual)
        feasible = True
        for n in required:
            if n in names:
                clauses.append([names[n]])
            # a required name outside the alphabet can never hold
            elif n is not None:
                feasible = False
        for n in forbidden:
            if n in names:
                clauses.append([-names[n]])
        sols = [] if not feasible else _all_sat(
            clauses, len(self.all_names), cap=self.gen.max_rows_per_seed)
        if sols is None:
            self.capped = True
            sols = _all_sat(clauses, len(self.all_names),
                            cap=self.gen.max_rows_per_seed, best_effort=True)
        out = sorted({tuple(n for n, v in names.items() if sol.get(v))
                      for sol in sols})
        self._row_cache[key] = out
        return out

    # ------------------------------------------------------- letter helpers

    def eq_name(self, ci):
        key = K.Restriction("atmost", ci.rhs.n, ci.rhs.role, ci.rhs.arg)
        return self.kb.eq_names.get(key)

    def atom_ext(self, interp, atom):
        if isinstance(atom, tuple):
            atom = K.Nominal(atom[1]) if atom[0] == "o" else K.Name(atom[1])
        if isinstance(atom, K.Nominal):
            d = self.ind_name.get(atom.individual)
            return frozenset({d} if d in set(interp.domain) else set())
        return interp.concept(atom.name)

    def row_of(self, interp, d):
        return tuple(sorted(a for a, ext in interp.concepts.items()
                            if d in ext))

    def core_dnames(self, core):
        return frozenset(core.domain)

    def check_bag_local(self, label, interp):
        dom = set(interp.domain)
        for rname in interp.roles:
            if label is None:
                if rname not in self.nontrans:
                    return False
            elif rname != label:
                return False
        if label is None:
            for name, idx in self.ind_name.items():
                if idx not in dom:
                    return False
        for ci in self.form1:
            lhs = frozenset(dom)
            for a in ci.lhs.args:
                lhs &= self._nominal_aware_ext(interp, a)
            if not lhs:
                continue
            rhs = frozenset()
            for b in ci.rhs.args:
                rhs |= self._nominal_aware_ext(interp, b)
            if not lhs <= rhs:
                return False
        for ci in self.atmost:
            eq = self.eq_name(ci)
            if eq is not None and isinstance(ci.lhs, K.Name):
                if not interp.concept(ci.lhs.name) <= interp.concept(eq):
                    return False
        if label in self.trans:
            pairs = interp.role(label)
            succ = {}
            for x, y in pairs:
                succ.setdefault(x, set()).add(y)
            for x, y in pairs:
                for z in succ.get(y, ()):
                    if (x, z) not in pairs:
                        return False
        for ci in self.atmost:
            a_ext = self._nominal_aware_ext(interp, ci.lhs)
            if not a_ext:
                continue
            b_ext = self._nominal_aware_ext(interp, ci.rhs.arg)
            role = ci.rhs.role
            for d in a_ext:
                succ = interp.successors(role.name, d, role.inverted)
                if len(succ & b_ext) > ci.rhs.n:
                    return False
        for idx, ci in enumerate(self.univ_inv):
            role = ci.rhs.role
            if role.name != label:
                continue
            b_ext = self._nominal_aware_ext(interp, ci.rhs.arg)
            marker = interp.concept(self.markers[idx])
            for (x, y) in interp.role(role.name):
                if y in marker and (x not in marker or x not in b_ext):
                    return False
        if label in self.trans:
            for ci in self.atmost:
                role = ci.rhs.role
                if role.name != label or role.inverted:
                    continue
                eq = self.eq_name(ci)
                if eq is None:
                    continue
                ext = interp.concept(eq)
                for (x, y) in interp.role(label):
                    if x in ext and y not in ext:
                        return False
        return True

    def _nominal_aware_ext(self, interp, atom):
        return self.atom_ext(interp, atom)

    # ------------------------------------------------------------- automaton

    def automaton(self):
        return A.TreeAutomaton(Q0, self.arity(), self.letters,
                               self.transitions, None, name="A_K")

    def arity(self):
        base = (self.width + 2) * max(1, len(self.trans) + 1)
        demand = sum(min(ci.rhs.n, self.gen.max_slice)
                     for ci in self.atleast) + len(self.invex) + 4
        return min(128, base + demand)

    def letters(self, state):
        if state not in self._letter_cache:
            if state == Q0:
                out = self._root_letters()
            else:
                out = self._child_letters(state)
            if len(out) > self.gen.max_letters_per_state:
                out = out[:self.gen.max_letters_per_state]
                self.capped = True
            self._letter_cache[state] = out
        return self._letter_cache[state]

    def transitions(self, state, letter):
        key = (state, letter)
        if key not in self._trans_cache:
            if state == Q0:
                vecs = (self._root_transitions(letter)
                        if letter in self.letters(Q0) else [])
            else:
                vecs = (self._child_transitions(state, letter)
                        if self.check_letter(state, letter) else [])
            self._trans_cache[key] = vecs
        return self._trans_cache[key]

    # --------------------------------------------------------- root letters

    def _root_letters(self):
        """Root bags: all individuals at their fixed names, rows from the
        unary axioms seeded by the concept assertions, non-transitive edges
        covering the ABox with a budgeted number of extras."""
        seeds = {name: set() for name in self.inds}
        nt_edges = set()
        for a in self.kb.abox:
            if isinstance(a, K.ConceptAssertion):
                seeds[a.individual].add(a.concept)
            elif a.role in self.nontrans:
                nt_edges.add((a.role, self.ind_name[a.a], self.ind_name[a.b]))
        row_choices = []
        for name in self.inds:
            rows = self.rows(required=tuple(seeds[name]), individual=name)
            if not rows:
                return []
            row_choices.append(rows)
        dom = list(range(len(self.inds)))
        optional = [(s, x, y) for s in self.nontrans
                    for x in dom for y in dom
                    if (s, x, y) not in nt_edges]
        out = []
        for combo in itertools.product(*row_choices):
            concepts = {}
            for idx, row in enumerate(combo):
                for name in row:
                    concepts.setdefault(name, set()).add(idx)
            for extra in _bounded_subsets(optional,
                                          self.gen.max_root_edge_extra):
                roles = {}
                for (s, x, y) in nt_edges | set(extra):
                    roles.setdefault(s, set()).add((x, y))
                interp = I.Interpretation(
                    dom, concepts, roles,
                    {name: self.ind_name[name] for name in self.inds})
                if self.check_bag_local(None, interp):
                    out.append((None, interp))
        return _dedup_letters(out)

    def _root_transitions(self, letter):
        _, interp = letter
        dom = list(interp.domain)
        cores = self._core_guesses(interp)
        vecs = []
        for core in cores:
            for bmap in self._bedge_guesses(interp, core):
                demands, ok = self._collect_demands(
                    letter, frozenset(dom), core, bedges_by_role=bmap)
                if not ok:
                    continue
                for vec in self._assemble_children(
                        state=None, letter=letter, fresh=frozenset(dom),
                        core=core, demands=demands, bedges_by_role=bmap):
                    vecs.append(vec)
        return _dedup_vecs(vecs)

    def _core_guesses(self, root_interp):
        base = {self.ind_name[n] for n in self.nominals}
        others = [d for d in root_interp.domain if d not in base]
        subsets = [frozenset(base)]
        for k in range(1, self.gen.max_root_core_extra + 1):
            for combo in itertools.combinations(others, k):
                subsets.append(frozenset(base | set(combo)))
        out = []
        for elems in subsets:
            nt_part = root_interp.restrict_domain(elems)
            # transitive edges of the core are guessed (closed) relations
            pairs = [(x, y) for x in sorted(elems) for y in sorted(elems)]
            per_role = []
            for r in self.trans:
                sets = _closed_subsets(pairs, cap=64)
                per_role.append(sets)
            for combo in itertools.product(*per_role):
                roles = {r: set(nt_part.role(r)) for r in nt_part.roles}
                for r, pairs_r in zip(self.trans, combo):
                    if pairs_r:
                        roles[r] = set(pairs_r)
                out.append(I.Interpretation(elems, nt_part.concepts, roles,
                                            nt_part.individuals))
        return out

    def _bedge_guesses(self, root_interp, core):
        """Per transitive role: a transitively closed edge set over the root
        elements, containing the ABox assertions and the core's edges."""
        dom = sorted(root_interp.domain)
        per_role = []
        for r in self.trans:
            must = {(self.ind_name[a.a], self.ind_name[a.b])
                    for a in self.kb.abox
                    if isinstance(a, K.RoleAssertion) and a.role == r}
            must |= set(core.role(r))
            optional = [(x, y) for x in dom for y in dom
                        if (x, y) not in must]
            choices = []
            for extra in _bounded_subsets(optional,
                                          self.gen.max_root_edge_extra):
                closed = _transitive_close(must | set(extra))
                choices.append(frozenset(closed))
            per_role.append(sorted(set(choices), key=sorted))
        out = []
        for combo in itertools.product(*per_role):
            out.append(dict(zip(self.trans, combo)))
        return out

    # -------------------------------------------------------- child letters

    def _child_letters(self, state):
        if state.e is not None:
            label = state.r
            if state.label is None:
                # child of the root
                if label in self.trans:
                    shared = frozenset(state.interp.domain)
                else:
                    shared = frozenset({state.e}) | self.core_dnames(state.core)
            else:
                shared = frozenset({state.e}) | self.core_dnames(state.core)
        else:
            label = state.label
            shared = None        # depends on the anchor, handled below
        out = []
        if state.e is not None:
            out.extend(self._letters_for_shared(state, label, shared,
                                                anchor=state.e))
        else:
            anchors = set(state.fresh)
            if state.f is not None:
                anchors.add(state.f)
            for anchor in sorted(anchors):
                rel = I.relevant_successors(state.interp, self.kb.tbox,
                                            label, anchor)
                sh = frozenset(rel) | self.core_dnames(state.core)
                out.extend(self._letters_for_shared(state, label, sh,
                                                    anchor=anchor))
        return _dedup_letters(out)

    def _letters_for_shared(self, state, label, shared, anchor):
        parent = state.interp
        core = state.core
        core_dom = self.core_dnames(core)
        shared = frozenset(d for d in shared if d in set(parent.domain))
        # fixed rows for shared elements
        shared_rows = {d: self.row_of(parent, d) for d in shared}
        # fixed label-edges among shared elements
        fixed = set()
        if state.label == label or (state.label is None
                                    and label in self.nontrans):
            fixed = {(x, y) for (x, y) in parent.role(label)
                     if x in shared and y in shared}
        elif state.label is None and label in self.trans:
            fixed = {(x, y) for (x, y) in state.bedges
                     if x in shared and y in shared}
        else:
            # parent lacks the label: core edges are fixed, the rest of the
            # shared pairs is enumerated as optional
            fixed = {(x, y) for (x, y) in core.role(label) or frozenset()}
        # witness units from the obligations; inverse-existential units may
        # also be served by an optional edge from a shared element, so they
        # are optional in the planning
        units = []
        optional_units = []
        for ob in sorted(state.obligations):
            if ob[0] == "geq":
                _, n, role_enc, batom, d, _, _ = ob
                if batom[0] == "o":
                    continue
                for _ in range(min(n, self.gen.max_slice)):
                    units.append((d, role_enc, batom[1]))
            elif ob[0] == "invex":
                _, rname, batom, d = ob
                if batom[0] == "o":
                    continue
                optional_units.append((d, (rname, True), batom[1]))
        out = []
        plans = []
        for mask in itertools.product((False, True),
                                      repeat=len(optional_units)):
            chosen = units + [u for u, keep in zip(optional_units, mask)
                              if keep]
            plans.extend(_unit_plans(chosen, cap=24))
        seen_plans = set()
        for plan in plans:
            key = tuple(sorted((tuple(sorted(s)), tuple(sorted(e)))
                               for s, e in plan))
            if key in seen_plans:
                continue
            seen_plans.add(key)
            out.extend(self._letters_for_plan(state, label, shared,
                                              shared_rows, fixed, plan,
                                              anchor))
        return out

    def _letters_for_plan(self, state, label, shared, shared_rows, fixed,
                          plan, anchor):
        """plan: list of (seed-name-set, edge-demand list) per fresh slot."""
        parent_used = set(state.interp.domain)
        fresh_ids = []
        used = set(shared) | parent_used
        for _ in plan:
            nid = _least_unused(used, self.dsize)
            if nid is None:
                return []
            fresh_ids.append(nid)
            used.add(nid)
        row_options = []
        for seeds, _ in plan:
            rows = self.rows(required=tuple(sorted(seeds)))
            if not rows:
                return []
            row_options.append(rows)
        mandatory = set(fixed)
        for fid, (_, edges) in zip(fresh_ids, plan):
            for (d, role_enc) in edges:
                if d not in shared:
                    return []
                name, inverted = role_enc
                if inverted:
                    mandatory.add((fid, d))
                else:
                    mandatory.add((d, fid))
        domain = sorted(set(shared) | set(fresh_ids))
        optional = []
        for x in domain:
            for y in domain:
                if (x, y) in mandatory:
                    continue
                if x in shared and y in shared:
                    if state.label == label or (
                            state.label is None and label in self.nontrans) \
                            or (state.label is None and label in self.trans):
                        continue      # fixed by the parent/bedges
                    if x in self.core_dnames(state.core) \
                            and y in self.core_dnames(state.core):
                        continue      # fixed by the core
                optional.append((x, y))
        out = []
        for rows in itertools.product(*row_options):
            concepts = {}
            for d in shared:
                for name in shared_rows[d]:
                    concepts.setdefault(name, set()).add(d)
            for fid, row in zip(fresh_ids, rows):
                for name in row:
                    concepts.setdefault(name, set()).add(fid)
            for extra in _bounded_subsets(optional, self.gen.max_extra_edges):
                pairs = set(mandatory) | set(extra)
                if label in self.trans:
                    pairs = _transitive_close(pairs)
                interp = I.Interpretation(
                    domain, concepts, {label: pairs} if pairs else {},
                    {n: d for n, d in state.interp.individuals.items()
                     if d in set(domain)})
                letter = (label, interp)
                if self.check_letter(state, letter):
                    out.append(letter)
        if len(optional) > 0 and self.gen.max_extra_edges < len(optional):
            self.capped = True
        return out

    # ------------------------------------------------------------ validation

    def check_letter(self, state, letter):
        label, interp = letter
        if label is None:
            return False
        if not self.check_bag_local(label, interp):
            return False
        parent = state.interp
        core = state.core
        core_dom = self.core_dnames(core)
        dom = set(interp.domain)
        shared = set(parent.domain) & dom
        # designation conditions
        if state.e is not None:
            if label != state.r or state.e not in dom:
                return False
        else:
            if label != state.label:
                return False
        # B1 with the parent: concepts coincide on shared elements
        for name in set(parent.concepts) | set(interp.concepts):
            if parent.concept(name) & shared != interp.concept(name) & shared:
                return False
        psig = set(self.nontrans) if state.label is None else {state.label}
        if label in psig:
            pe = {(x, y) for x, y in parent.role(label)
                  if x in shared and y in shared}
            ce = {(x, y) for x, y in interp.role(label)
                  if x in shared and y in shared}
            if pe != ce:
                return False
        # root children: realize the guessed root edges exactly, and C0
        if state.label is None:
            if label in self.trans:
                if not set(parent.domain) <= dom:
                    return False
                want = set(state.bedges)
                have = {(x, y) for x, y in interp.role(label)
                        if x in set(parent.domain) and y in set(parent.domain)}
                if want != have:
                    return False
        # C1 / C2 sharing shapes
        if label in self.nontrans:
            if shared != {state.e} | core_dom:
                return False
        elif state.label is not None and label != state.label:
            if shared != {state.e} | core_dom:
                return False
        # C3: same-label continuation
        if state.e is None:
            anchors = set(state.fresh)
            if state.f is not None:
                anchors.add(state.f)
            ok = False
            for d in sorted(anchors):
                if d not in set(parent.domain):
                    continue
                rel_p = I.relevant_successors(parent, self.kb.tbox, label, d)
                if shared != rel_p | core_dom:
                    continue
                if d not in dom:
                    continue
                rel_c = I.relevant_successors(interp, self.kb.tbox, label, d)
                if rel_p == rel_c:
                    ok = True
                    break
            if not ok:
                return False
        # core faithfulness and C4
        if not core_dom <= dom:
            return False
        for name in set(core.concepts) | set(interp.concepts):
            if core.concept(name) != interp.concept(name) & core_dom:
                return False
        ce = {(x, y) for x, y in interp.role(label)
              if x in core_dom and y in core_dom}
        if ce != set(core.role(label)):
            return False
        if label in self.trans:
            for m in sorted(core_dom):
                if I.relevant_successors(interp, self.kb.tbox, label, m) != \
                        I.relevant_successors(core, self.kb.tbox, label, m):
                    return False
        # core elements never point at fresh elements in non-transitive bags
        # (what rule R1 removes by construction), except the bag introducing
        # a core element's own witnesses
        if label in self.nontrans:
            fresh_set = dom - set(parent.domain)
            for (x, y) in interp.role(label):
                if x in core_dom and y in fresh_set and x != state.e:
                    return False
        # obligations
        fresh_here = dom - set(parent.domain)
        for ob in sorted(state.obligations):
            if not self._obligation_ok(ob, label, interp, core_dom,
                                       fresh_here):
                return False
        return True

    def _obligation_ok(self, ob, label, interp, core_dom, fresh_here):
        if ob[0] == "invex":
            _, rname, batom, d = ob
            if rname != label or d not in set(interp.domain):
                return False
            b_ext = self.atom_ext(interp, batom)
            return any(x in b_ext for (x, y) in interp.role(rname) if y == d)
        kind, n, role_enc, batom, d, k, selfbit = ob
        rname, inverted = role_enc
        if rname != label:
            return False
        if d not in set(interp.domain):
            return kind == "leq"
        b_ext = self.atom_ext(interp, batom)
        succ = interp.successors(rname, d, inverted)
        m_targets = len(succ & b_ext & core_dom)
        self_t = 1 if (d in succ and d in b_ext) else 0
        if m_targets != k or self_t != selfbit:
            return False
        new = len((succ & b_ext & fresh_here) - {d})
        if kind == "geq":
            return new >= n
        return new <= n

    # -------------------------------------------------------------- emission

    def _collect_demands(self, letter, fresh, core, bedges_by_role=None,
                         state=None):
        """Demands per fresh element: at-least slices to route, nominal-core
        target guesses (k, b), inverse-existential needs, and at-most
        budgets. Returns (demand list, feasible)."""
        label, interp = letter
        core_dom = self.core_dnames(core)
        demands = []
        for ci in self.atleast + self.atmost:
            is_atmost = isinstance(ci.rhs, K.AtMost)
            role = ci.rhs.role
            a_ext = self.atom_ext(interp, ci.lhs)
            b_ext_letter = self.atom_ext(interp, ci.rhs.arg)
            if is_atmost and role.name in self.trans and not role.inverted:
                continue           # covered by canonicity and eq-closure
            if is_atmost and role.inverted and role.name in self.trans:
                continue           # excluded by well-formedness
            for d in sorted(a_ext & fresh):
                if role.name == label or (label is None
                                          and role.name in self.nontrans):
                    succ = interp.successors(role.name, d, role.inverted)
                    local = succ & b_ext_letter
                elif label is None and role.name in self.trans \
                        and bedges_by_role is not None:
                    pairs = bedges_by_role.get(role.name, frozenset())
                    if role.inverted:
                        succ = {x for (x, y) in pairs if y == d}
                    else:
                        succ = {y for (x, y) in pairs if x == d}
                    local = succ & b_ext_letter
                else:
                    local = frozenset()
                k = len(local & core_dom)
                b = 1 if d in local else 0
                n0 = len(local - core_dom - {d})
                capacity_known = (role.name == label) or label is None
                demands.append({
                    "kind": "leq" if is_atmost else "geq",
                    "ci": ci, "d": d, "role": (role.name, role.inverted),
                    "batom": atom_key(ci.rhs.arg),
                    "k": k, "b": b, "n0": n0,
                    "known": capacity_known,
                })
                if is_atmost and capacity_known and k + b + n0 > ci.rhs.n:
                    return [], False
        for ci in self.invex:
            role = ci.rhs.role          # always an inverse transitive role
            a_ext = self.atom_ext(interp, ci.lhs)
            b_ext = self.atom_ext(interp, ci.rhs.arg)
            for d in sorted(a_ext & fresh):
                preds = interp.successors(role.name, d, role.inverted)
                if label is None and bedges_by_role is not None:
                    pairs = bedges_by_role.get(role.name, frozenset())
                    preds = preds | {x for (x, y) in pairs if y == d}
                if preds & b_ext:
                    continue
                demands.append({"kind": "invex", "ci": ci, "d": d,
                                "role": (role.name, True),
                                "batom": atom_key(ci.rhs.arg)})
        return demands, True

    def _assemble_children(self, state, letter, fresh, core, demands,
                           bedges_by_role=None):
        """Enumerate child-state vectors: mandatory designated children per
        (fresh element, other transitive role), demand routing, and (k, b)
        guesses for roles invisible in the current bag."""
        label, interp = letter
        core_dom = self.core_dnames(core)
        guessy = [dm for dm in demands
                  if dm["kind"] in ("geq", "leq") and not dm["known"]]
        options = []
        for dm in guessy:
            b_of_core = self.atom_ext(core, dm["batom"]) & core_dom
            maxk = min(len(b_of_core), dm["ci"].rhs.n)
            drow_has_b = dm["d"] in self.atom_ext(interp, dm["batom"])
            b_opts = (0, 1) if drow_has_b else (0,)
            options.append([(k, b) for k in range(maxk + 1)
                            for b in b_opts])
        vecs = []
        for guess in itertools.product(*options):
            for dm, (k, b) in zip(guessy, guess):
                dm["k"], dm["b"] = k, b
                dm["n0"] = 0
            bad = False
            for dm in demands:
                if dm["kind"] == "leq" and \
                        dm["k"] + dm["b"] + dm["n0"] > dm["ci"].rhs.n:
                    bad = True
            if bad:
                continue
            vec = self._vector_for(state, letter, fresh, core, demands,
                                   bedges_by_role)
            if vec is not None:
                vecs.append(vec)
        return vecs

    def _vector_for(self, state, letter, fresh, core, demands,
                    bedges_by_role):
        label, interp = letter
        core_dom = self.core_dnames(core)
        f_mark = state.e if (state is not None and state.e is not None) \
            else None
        children = {}       # (d, role or None-for-continuation) -> obligations

        def child_key(d, role):
            return (d, role)

        # mandatory designated children per fresh element and other
        # transitive role (B2); at the root, one per element and role
        for d in sorted(fresh):
            for r in self.trans:
                if r != label:
                    children.setdefault(child_key(d, r), [])
        for dm in demands:
            d = dm["d"]
            rname, inverted = dm["role"]
            if dm["kind"] == "invex":
                if rname == label:
                    children.setdefault(child_key(d, None), []).append(
                        ("invex", rname, dm["batom"], d))
                else:
                    children.setdefault(child_key(d, rname), []).append(
                        ("invex", rname, dm["batom"], d))
                continue
            need = dm["ci"].rhs.n - dm["k"] - dm["b"] - dm["n0"]
            if dm["kind"] == "geq":
                if need <= 0:
                    continue
                if need > self.gen.max_slice:
                    self.capped = True
                    return None
                if dm["batom"][0] == "o":
                    return None       # nominal witnesses live in the core
                target = child_key(d, None if rname == label else rname)
                children.setdefault(target, []).append(
                    ("geq", need, dm["role"], dm["batom"], d,
                     dm["k"], dm["b"]))
            else:
                budget = max(0, dm["ci"].rhs.n - dm["k"] - dm["b"] - dm["n0"])
                target = child_key(d, None if rname == label else rname)
                if target in children or rname in self.nontrans:
                    children.setdefault(target, []).append(
                        ("leq", budget, dm["role"], dm["batom"], d,
                         dm["k"], dm["b"]))
        # prune leq-only children (no geq/invex reason to exist)
        for key in list(children):
            obs = children[key]
            if obs and all(ob[0] == "leq" for ob in obs) \
                    and key[1] in self.nontrans:
                del children[key]
        # at-most slices must reach every non-transitive child of the same
        # element and role that does exist
        for key, obs in children.items():
            d, role = key
            if role in self.nontrans:
                for dm in demands:
                    if dm["kind"] == "leq" and dm["d"] == d \
                            and dm["role"][0] == role:
                        ob = ("leq",
                              max(0, dm["ci"].rhs.n - dm["k"] - dm["b"]
                                  - dm["n0"]),
                              dm["role"], dm["batom"], d, dm["k"], dm["b"])
                        if ob not in obs:
                            obs.append(ob)
        states = []
        for (d, role), obs in sorted(children.items(),
                                     key=lambda kv: (kv[0][0],
                                                     str(kv[0][1]))):
            if role is None:
                st = KbState(label=label, interp=interp,
                             fresh=frozenset(fresh), core=core,
                             bedges=frozenset(), obligations=frozenset(obs),
                             e=None, r=None, f=f_mark)
            else:
                bed = frozenset()
                if state is None and role in self.trans:
                    bed = bedges_by_role.get(role, frozenset())
                st = KbState(label=label, interp=interp,
                             fresh=frozenset(fresh), core=core,
                             bedges=bed, obligations=frozenset(obs),
                             e=d, r=role, f=f_mark)
            states.append(st)
        if len(states) > self.arity():
            self.capped = True
            return None
        return tuple(states)

    def _child_transitions(self, state, letter):
        label, interp = letter
        fresh = frozenset(set(interp.domain) - set(state.interp.domain))
        demands, ok = self._collect_demands(letter, fresh, state.core,
                                            state=state)
        if not ok:
            return []
        return _dedup_vecs(self._assemble_children(
            state, letter, fresh, state.core, demands))


# --- small helpers --------------------------------------------------------------

def _all_sat(clauses, nvars, cap=256, best_effort=False):
    """All assignments satisfying the clauses, free variables enumerated
    False-first. Returns None when the cap is hit (unless best_effort)."""
    out = []
    capped = [False]

    def rec(assign, clauses):
        if capped[0] and not best_effort:
            return
        simplified = []
        for cl in clauses:
            undecided = []
            sat = False
            for l in cl:
                v = assign.get(abs(l))
                if v is None:
                    undecided.append(l)
                elif (l > 0) == v:
                    sat = True
                    break
            if sat:
                continue
            if not undecided:
                return
            simplified.append(undecided)
        if not simplified:
            branch_all_free(assign)
            return
        # unit propagation
        units = [cl[0] for cl in simplified if len(cl) == 1]
        if units:
            trial = dict(assign)
            for l in units:
                if trial.get(abs(l), l > 0) != (l > 0):
                    return
                trial[abs(l)] = l > 0
            rec(trial, simplified)
            return
        v = abs(simplified[0][0])
        for val in (False, True):
            trial = dict(assign)
            trial[v] = val
            rec(trial, simplified)

    def branch_all_free(assign):
        free = [u for u in range(1, nvars + 1) if u not in assign]
        stack = [dict(assign)]
        for u in free:
            nxt = []
            for s in stack:
                for val in (False, True):
                    s2 = dict(s)
                    s2[u] = val
                    nxt.append(s2)
            stack = nxt
            if len(stack) + len(out) > cap:
                capped[0] = True
                stack = stack[:max(0, cap - len(out))]
                break
        for s in stack:
            if len(out) >= cap:
                capped[0] = True
                break
            out.append(s)

    rec({}, clauses)
    if capped[0] and not best_effort:
        return None
    return out


def _least_unused(used, dsize):
    for k in range(dsize):
        if k not in used:
            return k
    return None


def _transitive_close(pairs):
    pairs = set(pairs)
    changed = True
    while changed:
        changed = False
        for (x, y) in list(pairs):
            for (y2, z) in list(pairs):
                if y == y2 and (x, z) not in pairs:
                    pairs.add((x, z))
                    changed = True
    return frozenset(pairs)


def _closed_subsets(pairs, cap=64):
    """Transitively closed subsets of the given pair list (deduped, capped)."""
    out = {frozenset()}
    for k in range(1, len(pairs) + 1):
        added = False
        for combo in itertools.combinations(pairs, k):
            closed = _transitive_close(combo)
            if closed <= set(pairs):
                if closed not in out:
                    out.add(closed)
                    added = True
            if len(out) >= cap:
                return sorted(out, key=sorted)
        if not added and k > 2:
            break
    return sorted(out, key=sorted)


def _bounded_subsets(options, max_size):
    yield ()
    for k in range(1, min(max_size, len(options)) + 1):
        for combo in itertools.combinations(options, k):
            yield combo


def _dedup_letters(letters):
    seen = set()
    out = []
    for (x, interp) in letters:
        key = (x, interp.key())
        if key not in seen:
            seen.add(key)
            out.append((x, interp))
    return out


def _dedup_vecs(vecs):
    seen = set()
    out = []
    for vec in vecs:
        if vec not in seen:
            seen.add(vec)
            out.append(vec)
    return out


def _unit_plans(units, cap=24):
    """Assignments of witness units to fresh slots: units of the same
    obligation stay in distinct slots, units of different obligations may
    share a slot (their seeds merge)."""
    if not units:
        return [[]]
    plans = []

    def rec(i, slots):
        if len(plans) >= cap:
            return
        if i == len(units):
            plans.append([(set(seeds), list(edges))
                          for seeds, edges, _ in slots])
            return
        d, role_enc, bname = units[i]
        owner = (d, role_enc, bname)
        for j, (seeds, edges, owners) in enumerate(slots):
            if owner in owners:
                continue
            merged = (seeds | {bname}, edges + ((d, role_enc),),
                      owners | {owner})
            rec(i + 1, slots[:j] + (merged,) + slots[j + 1:])
        new = (frozenset({bname}), ((d, role_enc),), frozenset({owner}))
        rec(i + 1, slots + (new,))

    rec(0, ())
    return plans
