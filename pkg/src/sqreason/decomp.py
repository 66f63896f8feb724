"""Tree decompositions of interpretations.

Nodes are int tuples (the root is ()); every non-root bag carries a single
role label, the root carries the non-transitive part. A nominal core M is
replicated into every bag. Canonicity is the conjunction of the structural
conditions B0..B2 and the sharing conditions C0..C4 checked by
:func:`validate_canonical`; :func:`unravel` produces canonical
decompositions from closed finite models by the four extension rules.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

from . import kb as K
from . import interp as I


ROOT = ()


@dataclass
class Bag:
    interp: I.Interpretation
    label: str | None = None      # None only at the root


@dataclass
class TreeDecomposition:
    nodes: dict                    # node tuple -> Bag
    core: I.Interpretation         # M (full signature, may be empty)
    original_map: dict = field(default_factory=dict)
    frontier: set = field(default_factory=set)

    def __post_init__(self):
        if ROOT not in self.nodes:
            raise ValueError("missing root bag")
        for node in self.nodes:
            if node != ROOT and node[:-1] not in self.nodes:
                raise ValueError(f"node {node} has no parent")
        if self.nodes[ROOT].label is not None:
            raise ValueError("root must carry the blank label")
        for node, bag in self.nodes.items():
            if node != ROOT and bag.label is None:
                raise ValueError(f"non-root node {node} missing a role label")

    # -- tree structure

    def children(self, node):
        n = len(node)
        return sorted(w for w in self.nodes
                      if len(w) == n + 1 and w[:n] == node)

    def parent(self, node):
        return node[:-1] if node != ROOT else None

    def bag(self, node):
        return self.nodes[node].interp

    def label(self, node):
        return self.nodes[node].label

    def elements(self):
        out = set()
        for bag in self.nodes.values():
            out.update(bag.interp.domain)
        return out

    def nodes_with(self, d):
        return [w for w, bag in self.nodes.items()
                if d in set(bag.interp.domain)]

    def fresh_map(self):
        """F(w): elements whose closest-to-root bag is w. Raises if some
        element's bag set is not connected."""
        fresh = {w: set() for w in self.nodes}
        for d in sorted(self.elements()):
            s = set(self.nodes_with(d))
            tops = [w for w in s if w == ROOT or w[:-1] not in s]
            if len(tops) != 1:
                raise ValueError(f"element {d} occurs in disconnected bags")
            fresh[tops[0]].add(d)
        return fresh


def check_connected(td):
    """For every element, the nodes containing it must form a subtree."""
    td.fresh_map()
    return True


def underlying(td):
    """The represented interpretation: the union of all bags and the core."""
    out = td.core
    for w in sorted(td.nodes):
        out = out.union(td.bag(w))
    return out


# --- unraveling (rules R0..R3) --------------------------------------------------

def unravel(i, kb, depth, check=True):
    """Unravel a closed finite model into a depth-bounded canonical tree
    decomposition. Rules are applied breadth-first, each once per bag; bags
    whose rules were cut off by the depth bound are marked as frontier.
    """
    if not kb.normalized:
        raise ValueError("unravel needs a normalized KB")
    if check:
        rep = I.check_model(i, kb, "closed")
        if not rep.ok:
            raise ValueError(f"input is not a closed model: {rep.violations[:3]}")
    sig = K.signature(kb)
    concept_names = set(sig.concept_names)
    trans = [r for r, t in sorted(kb.role_kinds.items()) if t]
    nontrans = [r for r, t in sorted(kb.role_kinds.items()) if not t]
    inds = sorted(i.individuals[n] for n in kb.individuals_abox())
    nom_elems = sorted(i.individuals[n] for n in kb.nominals())

    rel_cache = {}

    def rel(r, d):
        if (r, d) not in rel_cache:
            rel_cache[(r, d)] = I.relevant_successors(i, kb.tbox, r, d)
        return rel_cache[(r, d)]

    delta = set()
    for a in nom_elems:
        for r in trans:
            delta |= rel(r, a)
    core = i.restrict_domain(delta)

    counter = itertools.count(max(i.domain, default=0) + 1)
    atleasts = kb.atleast_axioms()
    invex = [ci for ci in kb.tbox if isinstance(ci.rhs, K.Exists)]
    atleast_ext = [(ci, I.evaluate_concept(i, ci.lhs),
                    I.evaluate_concept(i, ci.rhs.arg)) for ci in atleasts]
    invex_ext = [(ci, I.evaluate_concept(i, ci.lhs),
                  I.evaluate_concept(i, ci.rhs.arg)) for ci in invex]

    def restricted(domain, role_names):
        return (i.restrict_domain(domain)
                 .restrict_signature(concept_names, role_names))

    nodes = {}
    copies = {}        # node -> {source element -> bag element}
    original = {}
    frontier = set()

    root_dom = set(inds) | delta
    root = restricted(root_dom, nontrans)
    nodes[ROOT] = Bag(root, None)
    copies[ROOT] = {d: d for d in root_dom}
    for d in root_dom:
        original[d] = d
    fresh_at = {ROOT: set(root_dom)}

    child_counter = {ROOT: itertools.count(1)}

    def add_child(parent, source_dom, role_name, keep, base_bag=None):
        """Add a child bag: restriction of i to source_dom and {role_name};
        `keep` maps source elements to existing ids (identity or copies from
        the parent); everything else gets a fresh copy."""
        mapping = {}
        for e in sorted(source_dom):
            if e in keep:
                mapping[e] = keep[e]
            else:
                mapping[e] = next(counter)
        bag = (base_bag if base_bag is not None
               else restricted(source_dom, [role_name])).renamed(mapping)
        node = parent + (next(child_counter[parent]),)
        child_counter[node] = itertools.count(1)
        nodes[node] = Bag(bag, role_name)
        copies[node] = mapping
        fresh_at[node] = {mapping[e] for e in source_dom if e not in keep}
        for e, ne in mapping.items():
            original.setdefault(ne, original.get(e, e))
        return node

    # R0: one child of the root per transitive role, holding the relevant
    # successors of all ABox individuals plus the core.
    queue = []
    for r in trans:
        dom = set(delta)
        for a in inds:
            dom |= rel(r, a)
        keep = {e: e for e in (set(inds) | delta) if e in dom}
        node = add_child(ROOT, dom, r, keep)
        queue.append((node, 1))
    queue.insert(0, (ROOT, 0))

    def minimal_witnesses(d, base, role_name, include_inverse_exists):
        """Greedy minimal W for R1/R3: add smallest-id successors until each
        at-least (and inverse-existential) obligation of d holds inside W."""
        w = set(base)
        for ci, a_ext, b_ext in atleast_ext:
            role = ci.rhs.role
            if role.name != role_name or d not in a_ext:
                continue
            succ = i.successors(role.name, d, role.inverted)
            need = ci.rhs.n - len(succ & b_ext & w)
            for e in sorted(succ & b_ext - w):
                if need <= 0:
                    break
                w.add(e)
                need -= 1
        if include_inverse_exists:
            for ci, a_ext, b_ext in invex_ext:
                role = ci.rhs.role
                if role.name != role_name or not role.inverted \
                        or d not in a_ext:
                    continue
                preds = i.successors(role.name, d, not role.inverted)
                if not (preds & b_ext & w):
                    cands = sorted(preds & b_ext)
                    if cands:
                        w.add(cands[0])
        return w

    def apply_r1(v, dlevel):
        vbag = nodes[v].interp
        for s in nontrans:
            for dprime in sorted(fresh_at[v]):
                d = original[dprime]
                w0 = {original[e] for e in
                      vbag.successors(s, dprime)
                      | vbag.successors(s, dprime, inverted=True)}
                base = {d} | w0 | delta
                w = minimal_witnesses(d, base, s,
                                      include_inverse_exists=False)
                for e in sorted(w - (w0 - delta)):
                    if e == d:
                        continue
                    dom = {d, e} | delta
                    base_bag = restricted(dom, [s])
                    removed = {(x, y) for x, y in base_bag.role(s)
                               if x in delta - {d} and y in (dom - delta)}
                    if removed:
                        roles = {s: base_bag.role(s) - removed}
                        base_bag = I.Interpretation(
                            base_bag.domain, base_bag.concepts, roles,
                            base_bag.individuals)
                    keep = {x: x for x in delta}
                    keep[d] = dprime
                    node = add_child(v, dom, s, keep, base_bag=base_bag)
                    queue.append((node, dlevel + 1))

    def apply_r2(v, dlevel):
        if v == ROOT:
            return
        for r in trans:
            if r == nodes[v].label:
                continue
            for dprime in sorted(fresh_at[v]):
                d = original[dprime]
                dom = rel(r, d) | delta
                keep = {x: x for x in delta}
                keep[d] = dprime
                node = add_child(v, dom, r, keep)
                queue.append((node, dlevel + 1))

    def apply_r3(v, dlevel):
        r = nodes[v].label
        if r not in trans:
            return
        td_parent = v[:-1]
        parent_label = nodes[td_parent].label if v != ROOT else None
        entries = set(fresh_at[v])
        if v != ROOT and parent_label != r:
            entries |= {e for e in fresh_at[td_parent]
                        if e in set(nodes[v].interp.domain)}
        for dprime in sorted(entries):
            d = original[dprime]
            base = rel(r, d) | delta
            w = minimal_witnesses(d, base, r, include_inverse_exists=True)
            for e in sorted(w - base):
                dom = rel(r, e) | rel(r, d) | delta
                keep = {x: x for x in delta}
                for f in rel(r, d) - delta:
                    if f in copies[v]:
                        keep[f] = copies[v][f]
                node = add_child(v, dom, r, keep)
                queue.append((node, dlevel + 1))

    seen = set()
    while queue:
        v, dlevel = queue.pop(0)
        if v in seen:
            continue
        seen.add(v)
        if dlevel >= depth:
            if v != ROOT or depth <= 0:
                frontier.add(v)
            continue
        apply_r1(v, dlevel)
        apply_r2(v, dlevel)
        apply_r3(v, dlevel)

    td = TreeDecomposition(nodes=nodes, core=core, original_map=original,
                           frontier=frontier)
    return td


# --- canonicity --------------------------------------------------------------------

@dataclass
class CanonReport:
    ok: bool
    violations: list                 # (condition, node, message)
    frontier_notes: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def validate_canonical(td, kb):
    """Check B0..B2 and C0..C4 on every node; obligations that would need
    children of frontier nodes are reported as notes, not violations."""
    violations = []
    notes = []
    trans = {r for r, t in kb.role_kinds.items() if t}
    nontrans = {r for r, t in kb.role_kinds.items() if not t}
    try:
        fresh = td.fresh_map()
    except ValueError as e:
        return CanonReport(False, [("structure", ROOT, str(e))])
    core_dom = set(td.core.domain)

    rel_cache = {}

    def rel(node, r, d):
        key = (node, r, d)
        if key not in rel_cache:
            rel_cache[key] = I.relevant_successors(td.bag(node), kb.tbox, r, d)
        return rel_cache[key]

    # B0
    for w in td.nodes:
        bag = td.bag(w)
        allowed = nontrans if w == ROOT else {td.label(w)}
        extra = set(bag.roles) - allowed
        if extra:
            violations.append(("B0", w, f"roles {sorted(extra)} not allowed"))

    # B1: all pairs must coincide on shared domain and shared signature
    node_list = sorted(td.nodes)
    for v, w in itertools.combinations(node_list, 2):
        bv, bw = td.bag(v), td.bag(w)
        shared = set(bv.domain) & set(bw.domain)
        if not shared:
            continue
        names = set(bv.concepts) | set(bw.concepts)
        for a in names:
            if bv.concept(a) & shared != bw.concept(a) & shared:
                violations.append(
                    ("B1", w, f"concept {a} differs from {v} on {sorted(shared)}"))
                break
        sig_v = nontrans if v == ROOT else {td.label(v)}
        sig_w = nontrans if w == ROOT else {td.label(w)}
        for r in sig_v & sig_w:
            ev = {(x, y) for x, y in bv.role(r)
                  if x in shared and y in shared}
            ew = {(x, y) for x, y in bw.role(r)
                  if x in shared and y in shared}
            if ev != ew:
                violations.append(
                    ("B1", w, f"role {r} differs from {v} on shared pairs"))

    # B2 + C0..C4
    for v in node_list:
        children = td.children(v)
        if v != ROOT:
            vlabel = td.label(v)
            for d in sorted(fresh[v]):
                for r in sorted(trans - {vlabel}):
                    hits = [w for w in children
                            if td.label(w) == r
                            and d in set(td.bag(w).domain)]
                    if len(hits) == 1:
                        continue
                    if v in td.frontier and not hits:
                        notes.append(("B2", v,
                                      f"unverifiable at frontier: ({d},{r})"))
                    else:
                        violations.append(
                            ("B2", v,
                             f"{len(hits)} children with label {r} contain {d}"))
        for w in children:
            bw = td.bag(w)
            wl = td.label(w)
            shared = set(td.bag(v).domain) & set(bw.domain)
            if wl in trans and v == ROOT:
                if not set(td.bag(ROOT).domain) <= set(bw.domain):
                    violations.append(("C0", w, "root bag not contained"))
            if wl in nontrans:
                cands = [d for d in sorted(fresh[v])
                         if shared == {d} | core_dom]
                if not cands:
                    violations.append(
                        ("C1", w, f"shared domain {sorted(shared)} is not "
                                  "{d} + core for a fresh d"))
            if wl in trans and v != ROOT and td.label(v) != wl:
                cands = [d for d in sorted(fresh[v])
                         if shared == {d} | core_dom]
                if not cands:
                    violations.append(
                        ("C2", w, f"shared domain {sorted(shared)} is not "
                                  "{d} + core for a fresh d"))
            if wl in trans and v != ROOT and td.label(v) == wl:
                ok = False
                candidates = set(fresh[v])
                u = td.parent(v)
                if u is not None and td.label(u) != td.label(v):
                    candidates |= {d for d in fresh[u]
                                   if d in set(td.bag(v).domain)}
                for d in sorted(candidates):
                    rv = rel(v, wl, d)
                    if shared == rv | core_dom and rv == rel(w, wl, d):
                        ok = True
                        break
                if not ok:
                    violations.append(
                        ("C3", w, f"no anchor with shared = rel + core "
                                  f"(shared {sorted(shared)})"))
            if wl in trans:
                for d in sorted(core_dom):
                    if d not in set(bw.domain):
                        violations.append(("C4", w, f"core element {d} missing"))
                        continue
                    if rel(w, wl, d) != I.relevant_successors(
                            td.core, kb.tbox, wl, d):
                        violations.append(
                            ("C4", w, f"rel of core element {d} differs from core"))
    return CanonReport(ok=not violations, violations=violations,
                       frontier_notes=notes)


# --- encode / decode ---------------------------------------------------------------

@dataclass
class OmegaNode:
    label: str | None
    interp: I.Interpretation


@dataclass
class OmegaTree:
    """Finite (x, I)-labeled tree over the shared name pool D; individuals
    occupy the first D-names of the root in sorted-name order."""
    nodes: dict                    # node tuple -> OmegaNode
    individuals: tuple = ()
    frontier: set = field(default_factory=set)

    def children(self, node):
        n = len(node)
        return sorted(w for w in self.nodes
                      if len(w) == n + 1 and w[:n] == node)


def encode(td, n_width):
    """Encode a decomposition of width <= n_width over D = {0..2N+1}; fresh
    elements get the least name unused in the parent bag."""
    dsize = 2 * n_width + 2
    root_bag = td.bag(ROOT)
    inds = tuple(sorted(root_bag.individuals))
    assign = {}           # node -> {element -> dname}
    out = {}
    order = sorted(td.nodes, key=lambda w: (len(w), w))
    for w in order:
        bag = td.bag(w)
        if w == ROOT:
            m = {}
            for idx, name in enumerate(inds):
                m[root_bag.individuals[name]] = idx
            for d in sorted(bag.domain):
                if d not in m:
                    m[d] = _least_unused(m.values(), dsize)
        else:
            pm = assign[td.parent(w)]
            m = {}
            used_parent = set(pm.values())
            for d in sorted(bag.domain):
                if d in pm:
                    m[d] = pm[d]
            for d in sorted(bag.domain):
                if d not in m:
                    m[d] = _least_unused(set(m.values()) | used_parent, dsize)
        if len(set(m.values())) != len(m):
            raise ValueError("width overflow during encoding")
        assign[w] = m
        out[w] = OmegaNode(td.label(w), td.bag(w).renamed(m))
    return OmegaTree(nodes=out, individuals=inds, frontier=set(td.frontier))


def _least_unused(used, dsize):
    used = set(used)
    for k in range(dsize):
        if k not in used:
            return k
    raise ValueError("width overflow: name pool exhausted")


def decode(ot, core_dnames=()):
    """Rebuild a decomposition from an Omega-labeled tree: equal D-names in
    d-connected nodes denote one element, otherwise distinct elements."""
    parent_links = {}
    for w in ot.nodes:
        if w != ROOT:
            parent_links[w] = w[:-1]
    uf = {}

    def find(x):
        while uf[x] != x:
            uf[x] = uf[uf[x]]
            x = uf[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            uf[max(ra, rb)] = min(ra, rb)

    keys = []
    for w in sorted(ot.nodes, key=lambda n: (len(n), n)):
        for d in ot.nodes[w].interp.domain:
            uf[(w, d)] = (w, d)
            keys.append((w, d))
    for w, p in parent_links.items():
        for d in set(ot.nodes[w].interp.domain) & set(ot.nodes[p].interp.domain):
            union((w, d), (p, d))
    classes = sorted({find(k) for k in keys})
    elem_id = {cls: idx for idx, cls in enumerate(classes)}

    def eid(w, d):
        return elem_id[find((w, d))]

    nodes = {}
    for w in sorted(ot.nodes, key=lambda n: (len(n), n)):
        src = ot.nodes[w].interp
        mapping = {d: eid(w, d) for d in src.domain}
        nodes[w] = Bag(src.renamed(mapping), ot.nodes[w].label)
    root_interp = nodes[ROOT].interp
    individuals = {}
    for idx, name in enumerate(ot.individuals):
        individuals[name] = eid(ROOT, idx)
    nodes[ROOT] = Bag(
        I.Interpretation(root_interp.domain, root_interp.concepts,
                         root_interp.roles, individuals),
        None)
    if core_dnames:
        union = None
        for w in sorted(nodes):
            union = nodes[w].interp if union is None \
                else union.union(nodes[w].interp)
        core_elems = {eid(ROOT, d) for d in core_dnames if (ROOT, d) in uf}
        core = union.restrict_domain(core_elems)
    else:
        core = I.Interpretation([])
    return TreeDecomposition(nodes=nodes, core=core,
                             frontier=set(ot.frontier))


# --- regular representations --------------------------------------------------------

@dataclass
class RepNode:
    label: str | None
    interp: I.Interpretation       # over local D-style names
    children: tuple                # indices into the rep's node list


@dataclass
class RegularTreeRep:
    nodes: list
    root: int = 0
    individuals: tuple = ()
    core_names: tuple = ()         # local names of the core in every bag

    def to_json(self):
        return json.dumps({
            "root": self.root,
            "individuals": list(self.individuals),
            "core_names": list(self.core_names),
            "nodes": [{
                "label": n.label,
                "bag": json.loads(n.interp.to_json()),
                "children": list(n.children),
            } for n in self.nodes],
        }, indent=2)

    @staticmethod
    def from_json(text):
        obj = json.loads(text)
        nodes = [RepNode(n["label"],
                         I.Interpretation.from_json(json.dumps(n["bag"])),
                         tuple(n["children"])) for n in obj["nodes"]]
        return RegularTreeRep(nodes=nodes, root=obj.get("root", 0),
                              individuals=tuple(obj.get("individuals", ())),
                              core_names=tuple(obj.get("core_names", ())))


def unfold(rep, depth):
    """Unfold a regular representation into a finite OmegaTree truncation;
    nodes cut off before exhausting their children are marked frontier."""
    nodes = {}
    frontier = set()
    work = [(ROOT, rep.root, 0)]
    while work:
        path, idx, lvl = work.pop(0)
        n = rep.nodes[idx]
        nodes[path] = OmegaNode(n.label, n.interp)
        if lvl >= depth:
            if n.children:
                frontier.add(path)
            continue
        for k, child in enumerate(n.children, start=1):
            work.append((path + (k,), child, lvl + 1))
    return OmegaTree(nodes=nodes, individuals=tuple(rep.individuals),
                     frontier=frontier)


def unfold_decomposition(rep, depth):
    ot = unfold(rep, depth)
    return decode(ot, core_dnames=rep.core_names)


def check_safe(rep, transitive_roles=None):
    """True iff no cycle of the rep graph stays inside one transitive role
    label (equivalently: the unfolding has no infinite same-label downward
    path). Without the role-kind set every label counts as transitive."""
    labels = {n.label for n in rep.nodes if n.label is not None}
    if transitive_roles is not None:
        labels &= set(transitive_roles)
    for label in labels:
        members = {i for i, n in enumerate(rep.nodes) if n.label == label}
        color = {}

        def dfs(u):
            color[u] = 1
            for v in rep.nodes[u].children:
                if v in members:
                    if color.get(v) == 1:
                        return False
                    if color.get(v, 0) == 0 and not dfs(v):
                        return False
            color[u] = 2
            return True

        for u in members:
            if color.get(u, 0) == 0 and not dfs(u):
                return False
    return True


# --- strongly canonical restructuring ------------------------------------------------

def restructure_strongly_canonical(td, transitive_roles):
    """Merge neighboring nodes (parent absorbs child) that carry the same
    transitive role label; children are promoted. Returns a new finite
    TreeDecomposition with no such neighbors."""
    nodes = {w: Bag(bag.interp, bag.label) for w, bag in td.nodes.items()}
    frontier = set(td.frontier)
    transitive_roles = set(transitive_roles)

    def find_merge():
        for v in sorted(nodes, key=lambda w: (len(w), w)):
            for w in sorted(nodes):
                if len(w) == len(v) + 1 and w[:len(v)] == v \
                        and nodes[w].label == nodes[v].label \
                        and nodes[v].label in transitive_roles:
                    return v, w
        return None

    while True:
        hit = find_merge()
        if hit is None:
            break
        v, w = hit
        merged = nodes[v].interp.union(nodes[w].interp)
        nodes[v] = Bag(merged, nodes[v].label)
        if w in frontier:
            frontier.discard(w)
            frontier.add(v)
        # promote w's subtree one level up, renaming node paths
        subtree = sorted([u for u in nodes if u[:len(w)] == w],
                         key=lambda u: (len(u), u))
        taken = {u[-1] for u in nodes
                 if len(u) == len(v) + 1 and u[:len(v)] == v and u != w}
        next_free = itertools.count(max(taken, default=0) + 1)
        rename = {w: None}
        for u in subtree:
            if u == w:
                continue
            if len(u) == len(w) + 1:
                newpath = v + (next(next_free),)
            else:
                parent_new = rename[u[:-1]]
                newpath = parent_new + (u[-1],)
            rename[u] = newpath
        for u in subtree:
            bag = nodes.pop(u)
            if u == w:
                continue
            nodes[rename[u]] = bag
            if u in frontier:
                frontier.discard(u)
                frontier.add(rename[u])
    return TreeDecomposition(nodes=nodes, core=td.core,
                             original_map=dict(td.original_map),
                             frontier=frontier)


# --- helpers -------------------------------------------------------------------------

def isomorphic(i, j):
    """Isomorphism with individuals fixed by name."""
    return I.find_isomorphism(i, j) is not None


def td_to_json(td):
    return json.dumps({
        "nodes": [{
            "path": list(w),
            "label": td.label(w),
            "bag": json.loads(td.bag(w).to_json()),
        } for w in sorted(td.nodes)],
        "core": json.loads(td.core.to_json()),
        "frontier": [list(w) for w in sorted(td.frontier)],
    }, indent=2)


def td_from_json(text):
    obj = json.loads(text)
    nodes = {}
    for n in obj["nodes"]:
        nodes[tuple(n["path"])] = Bag(
            I.Interpretation.from_json(json.dumps(n["bag"])), n["label"])
    return TreeDecomposition(
        nodes=nodes,
        core=I.Interpretation.from_json(json.dumps(obj["core"])),
        frontier={tuple(w) for w in obj.get("frontier", [])})
