"""Analysis-ready fault tree model: ids, adjacency, spare modules, activation,
symmetry groups and independent-subtree decomposition."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .galileo import (Kind, ValidatedDft, PROPAGATING, STATIC_GATES,
                      spare_modules)
from .poly import Polynomial

ORDER_SENSITIVE = frozenset({Kind.PAND, Kind.POR, Kind.SEQ, Kind.SPARE,
                             Kind.PDEP})


@dataclass(frozen=True)
class SymmetryGroup:
    """Position-aligned node id sequences of pairwise isomorphic, isolated parts."""
    parts: tuple  # tuple of tuple[int, ...], aligned across parts


@dataclass
class ModuleTree:
    """Static composition skeleton over independent subtrees."""
    node: int                       # gate id (skeleton) or subtree root (leaf)
    children: list = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def leaves(self) -> list:
        if self.is_leaf:
            return [self]
        out = []
        for c in self.children:
            out.extend(c.leaves())
        return out


class DftModel:
    """Immutable view of a validated DFT with dense integer ids.

    Ids follow declaration order.  ``parents`` lists failure-propagation
    parents only (gates including SPARE); dependencies and restrictions are
    kept in separate maps since they do not forward failures.
    """

    def __init__(self, v: ValidatedDft):
        d = v.description
        self.description = d
        self.params: tuple = d.params
        self.names: tuple = tuple(n.name for n in d.nodes)
        self.index: dict = {n: i for i, n in enumerate(self.names)}
        decls = d.nodes
        self.kinds: tuple = tuple(n.kind for n in decls)
        self.children: tuple = tuple(
            tuple(self.index[c] for c in n.children) for n in decls)
        self.vot_k: dict = {i: n.k for i, n in enumerate(decls)
                            if n.kind == Kind.VOT}
        self.top: int = self.index[d.top_name]
        self.n = len(decls)

        par: list = [[] for _ in range(self.n)]
        for i, n in enumerate(decls):
            if n.kind in PROPAGATING:
                for c in self.children[i]:
                    if not par[c] or par[c][-1] != i:
                        par[c].append(i)
        self.parents: tuple = tuple(tuple(p) for p in par)

        self.be_ids: tuple = tuple(i for i, k in enumerate(self.kinds)
                                   if k == Kind.BE)
        self.be_lambda: dict = {self.index[n.name]: n.lam
                                for n in decls if n.kind == Kind.BE}
        self.be_dorm: dict = {self.index[n.name]: n.dorm
                              for n in decls if n.kind == Kind.BE}
        self.pdeps: tuple = tuple(i for i, k in enumerate(self.kinds)
                                  if k == Kind.PDEP)
        self.pdep_prob: dict = {i: decls[i].prob for i in self.pdeps}
        self.pdep_trigger: dict = {i: self.children[i][0] for i in self.pdeps}
        self.pdep_dependent: dict = {i: self.children[i][1] for i in self.pdeps}
        self.seqs: tuple = tuple(i for i, k in enumerate(self.kinds)
                                 if k == Kind.SEQ)
        self.spares: tuple = tuple(i for i, k in enumerate(self.kinds)
                                   if k == Kind.SPARE)
        self.spare_index: dict = {s: j for j, s in enumerate(self.spares)}

        # spare modules and activation roots
        mods = spare_modules(d.by_name())
        self.spare_modules: dict = {
            self.index[rep]: frozenset(self.index[x] for x in mod)
            for rep, mod in mods.items()}
        self.module_rep: dict = {}
        for rep, mod in self.spare_modules.items():
            for x in mod:
                self.module_rep[x] = rep
        self.representatives: tuple = tuple(sorted(self.spare_modules))
        self.rep_bit: dict = {r: j for j, r in enumerate(self.representatives)}
        self.spares_in_module: dict = {
            rep: tuple(s for s in self.spares if s in mod)
            for rep, mod in self.spare_modules.items()}
        self.initially_active: frozenset = self._initial_activation()

        self._topo_order()
        self._aux_maps()
        self._rate_cache()
        self._por_analysis()

    # -- construction helpers -------------------------------------------------

    def _initial_activation(self) -> frozenset:
        active: set = set()
        changed = True
        while changed:
            changed = False
            for s in self.spares:
                rep = self.module_rep.get(s)
                if rep is not None and rep not in active:
                    continue  # nested and not yet activated
                prim = self.children[s][0]
                prim_rep = self.module_rep[prim]
                if prim_rep not in active:
                    active.add(prim_rep)
                    changed = True
        return frozenset(active)

    def _topo_order(self) -> None:
        order: list = []
        state = [0] * self.n  # 0 unvisited, 1 in progress, 2 done
        for root in range(self.n):
            if state[root]:
                continue
            stack = [(root, 0)]
            while stack:
                node, ci = stack.pop()
                if ci == 0:
                    if state[node] == 2:
                        continue
                    state[node] = 1
                if ci < len(self.children[node]):
                    stack.append((node, ci + 1))
                    child = self.children[node][ci]
                    if state[child] == 0:
                        stack.append((child, 0))
                else:
                    state[node] = 2
                    order.append(node)
        self.topo: tuple = tuple(order)  # children before parents
        ti = [0] * self.n
        for pos, node in enumerate(order):
            ti[node] = pos
        self.topo_index: tuple = tuple(ti)
        self.gates_topo: tuple = tuple(
            i for i in order
            if self.kinds[i] in PROPAGATING and self.kinds[i] != Kind.BE)
        self.nodes_topdown: tuple = tuple(reversed(order))

    def _aux_maps(self) -> None:
        node_seqs: list = [[] for _ in range(self.n)]
        for q in self.seqs:
            for c in self.children[q]:
                node_seqs[c].append(q)
        self.node_seqs: tuple = tuple(tuple(x) for x in node_seqs)
        trig: list = [[] for _ in range(self.n)]
        for p in self.pdeps:
            trig[self.pdep_trigger[p]].append(p)
        self.trigger_of: tuple = tuple(tuple(x) for x in trig)
        # cuc encoding width per spare (spec packing layout)
        self.cuc_bits: tuple = tuple(
            max(1, (len(self.children[s]) - 1).bit_length())
            for s in self.spares)

    def _rate_cache(self) -> None:
        self.rate_active: dict = {}
        self.rate_passive: dict = {}
        for b in self.be_ids:
            lam = self.be_lambda[b]
            self.rate_active[b] = lam
            self.rate_passive[b] = self.be_dorm[b] * lam

    def _ancestor_closure(self, node: int) -> set:
        out: set = set()
        stack = [node]
        while stack:
            cur = stack.pop()
            for p in self.parents[cur]:
                if p not in out:
                    out.add(p)
                    stack.append(p)
        return out

    def _por_analysis(self) -> None:
        """Static commutation safety per dependency (conservative)."""
        unsafe = {}
        for p in self.pdeps:
            d = self.pdep_dependent[p]
            anc = self._ancestor_closure(d)
            bad = any(self.kinds[g] in (Kind.PAND, Kind.POR, Kind.SPARE)
                      for g in anc)
            bad = bad or bool(self.node_seqs[d]) or bool(self.trigger_of[d])
            bad = bad or self.module_rep.get(d) is not None
            unsafe[p] = bad
        self.pdep_por_unsafe: dict = unsafe

    # -- convenience -----------------------------------------------------------

    def name(self, i: int) -> str:
        return self.names[i]

    def is_parametric(self) -> bool:
        if not self.params:
            return False
        polys = list(self.be_lambda.values()) + list(self.be_dorm.values())
        polys += list(self.pdep_prob.values())
        return any(not p.is_constant() for p in polys)


def build_model(v: ValidatedDft) -> DftModel:
    return DftModel(v)


# ---------------------------------------------------------------------------
# Symmetry detection
# ---------------------------------------------------------------------------

def _canonical_hash(m: DftModel) -> list:
    h: list = [None] * m.n
    for node in m.topo:
        kind = m.kinds[node]
        ch = tuple(h[c] for c in m.children[node])
        if kind in STATIC_GATES:
            ch = tuple(sorted(ch))
        attrs: tuple = ()
        if kind == Kind.BE:
            attrs = (str(m.be_lambda[node]), str(m.be_dorm[node]))
        elif kind == Kind.VOT:
            attrs = (m.vot_k[node],)
        elif kind == Kind.PDEP:
            attrs = (str(m.pdep_prob[node]),)
        h[node] = hash((int(kind), attrs, ch))
    return h


def _subtree(m: DftModel, root: int) -> tuple:
    """Child-edge closure of root, in a deterministic traversal order."""
    seen = {root}
    order = [root]
    stack = [root]
    while stack:
        cur = stack.pop()
        for c in m.children[cur]:
            if c not in seen:
                seen.add(c)
                order.append(c)
                stack.append(c)
    return tuple(sorted(order))


def _aligned_isomorphism(m: DftModel, hashes: list,
                         r1: int, r2: int) -> list | None:
    """Position-aligned node pairing of the subtrees of r1 and r2, or None."""
    pairs: list = []
    mapping: dict = {}

    def walk(a: int, b: int) -> bool:
        if a in mapping:
            return mapping[a] == b
        if m.kinds[a] != m.kinds[b]:
            return False
        kind = m.kinds[a]
        if kind == Kind.BE:
            if (m.be_lambda[a] != m.be_lambda[b]
                    or m.be_dorm[a] != m.be_dorm[b]):
                return False
        if kind == Kind.VOT and m.vot_k[a] != m.vot_k[b]:
            return False
        if kind == Kind.PDEP and m.pdep_prob[a] != m.pdep_prob[b]:
            return False
        ca, cb = m.children[a], m.children[b]
        if len(ca) != len(cb):
            return False
        mapping[a] = b
        pairs.append((a, b))
        if kind in STATIC_GATES:
            ca = tuple(sorted(ca, key=lambda x: (hashes[x], x)))
            cb = tuple(sorted(cb, key=lambda x: (hashes[x], x)))
        return all(walk(x, y) for x, y in zip(ca, cb))

    if not walk(r1, r2):
        return None
    return pairs


def _attached_aux(m: DftModel, nodes: frozenset) -> tuple:
    """Dependencies/restrictions whose scope intersects the node set."""
    touching = []
    for p in m.pdeps:
        if m.pdep_trigger[p] in nodes or m.pdep_dependent[p] in nodes:
            touching.append(p)
    for q in m.seqs:
        if any(c in nodes for c in m.children[q]):
            touching.append(q)
    return tuple(touching)


def _part_ok(m: DftModel, root: int, parent: int, nodes: frozenset) -> bool:
    """Isolation: the part connects to the rest only through `parent`."""
    if m.parents[root] != (parent,):
        return False
    for n in nodes:
        if n == root:
            continue
        if any(p not in nodes for p in m.parents[n]):
            return False
    for aux in _attached_aux(m, nodes):
        scope = (m.children[aux] if m.kinds[aux] == Kind.SEQ
                 else (m.pdep_trigger[aux], m.pdep_dependent[aux]))
        if any(c not in nodes for c in scope):
            return False
    # activity uniformity: module structure must not straddle the boundary
    for n in nodes:
        rep = m.module_rep.get(n)
        if rep is not None and rep not in nodes:
            # whole part inside one external module is fine if uniform
            if m.module_rep.get(root) != rep:
                return False
    return True


def detect_symmetries(m: DftModel, protected: frozenset = frozenset()) -> list:
    """Maximal groups of interchangeable sibling subtrees.

    `protected` nodes (used by the active measure's labels) must keep their
    identity; parts containing them are dropped, which realises the light
    variant used for importance factors.
    """
    hashes = _canonical_hash(m)
    groups: list = []
    used_nodes: set = set()
    for parent in sorted(range(m.n)):
        if m.kinds[parent] not in STATIC_GATES:
            continue  # children of order-sensitive gates are not interchangeable
        buckets: dict = {}
        seen_child = set()
        for c in m.children[parent]:
            if c in seen_child:
                continue
            seen_child.add(c)
            buckets.setdefault(hashes[c], []).append(c)
        for _, roots in sorted(buckets.items(), key=lambda kv: min(kv[1])):
            if len(roots) < 2:
                continue
            roots = sorted(roots)
            subtrees = {r: frozenset(_subtree(m, r)) for r in roots}
            ok_roots = []
            for r in roots:
                nodes = subtrees[r]
                if nodes & protected or nodes & used_nodes:
                    continue
                if not _part_ok(m, r, parent, nodes):
                    continue
                ok_roots.append(r)
            if len(ok_roots) < 2:
                continue
            # parts governed by an external spare module must share it, else
            # their activities may diverge while slices cannot express that
            ext = {m.module_rep.get(r) if m.module_rep.get(r) != r else "self"
                   for r in ok_roots}
            if len(ext) != 1:
                continue
            base = ok_roots[0]
            base_order = None
            good = []
            for r in ok_roots[1:]:
                pairs = _aligned_isomorphism(m, hashes, base, r)
                if pairs is None:
                    continue
                if base_order is None:
                    base_order = tuple(a for a, _ in pairs)
                part = dict(pairs)
                good.append((r, tuple(part[a] for a in base_order)))
            if not good:
                continue
            parts = [base_order] + [g[1] for g in good]
            # initial activity must agree across aligned positions
            acts = []
            for part in parts:
                acts.append(tuple(
                    (m.module_rep.get(x) in m.initially_active)
                    if m.module_rep.get(x) is not None else None
                    for x in part))
            if len(set(acts)) != 1:
                continue
            groups.append(SymmetryGroup(tuple(tuple(p) for p in parts)))
            for part in parts:
                used_nodes.update(part)
    return groups


# ---------------------------------------------------------------------------
# Independent modules (modularisation)
# ---------------------------------------------------------------------------

def _independent(m: DftModel, root: int) -> frozenset | None:
    """Node set of the subtree under root if it is an independent module."""
    if m.module_rep.get(root) is not None:
        return None  # inside someone's spare module
    nodes = set(_subtree(m, root))
    for aux in _attached_aux(m, frozenset(nodes)):
        scope = (m.children[aux] if m.kinds[aux] == Kind.SEQ
                 else (m.pdep_trigger[aux], m.pdep_dependent[aux]))
        if any(c not in nodes for c in scope):
            return None
        nodes.add(aux)
    for n in sorted(nodes):
        if n == root or m.kinds[n] in (Kind.PDEP, Kind.SEQ):
            continue
        if any(p not in nodes for p in m.parents[n]):
            return None
        rep = m.module_rep.get(n)
        if rep is not None and rep not in nodes:
            return None
    return frozenset(nodes)


def detect_independent_modules(m: DftModel) -> ModuleTree:
    """Static skeleton over maximal independent subtrees.

    The skeleton splits a static gate when every child subtree is an
    independent module and the subtrees are pairwise disjoint; children
    become module leaves (maximality: independence is closed upwards, so
    splitting deeper never exposes more structure at the top).
    """

    def decompose(node: int) -> ModuleTree:
        if m.kinds[node] in STATIC_GATES:
            sets = []
            for c in m.children[node]:
                s = _independent(m, c)
                if s is None:
                    return ModuleTree(node)
                sets.append(s)
            for i in range(len(sets)):
                for j in range(i + 1, len(sets)):
                    if sets[i] & sets[j]:
                        return ModuleTree(node)
            return ModuleTree(node,
                              [ModuleTree(c) for c in m.children[node]])
        return ModuleTree(node)

    return decompose(m.top)


# ---------------------------------------------------------------------------
# DOT export
# ---------------------------------------------------------------------------

def export_dft_dot(m: DftModel) -> str:
    lines = ["digraph dft {", "  node [shape=box];"]
    for rep in m.representatives:
        lines.append("  subgraph cluster_%d {" % rep)
        lines.append('    label="module %s";' % m.names[rep])
        lines.append("    style=dotted;")
        for x in sorted(m.spare_modules[rep]):
            lines.append('    n%d;' % x)
        lines.append("  }")
    for i in range(m.n):
        kind = m.kinds[i]
        label = "%s:%s" % (m.names[i], kind.name.lower())
        if kind == Kind.VOT:
            label = "%s:%dof%d" % (m.names[i], m.vot_k[i], len(m.children[i]))
        shape = ' shape=ellipse' if kind == Kind.BE else ''
        lines.append('  n%d [label="%s"%s];' % (i, label, shape))
    for i in range(m.n):
        for j, c in enumerate(m.children[i]):
            style = ""
            if m.kinds[i] == Kind.PDEP:
                style = ' [style=dashed, label="%s"]' % ("trig" if j == 0 else "dep")
            elif m.kinds[i] == Kind.SEQ:
                style = ' [style=dotted, label="%d"]' % j
            lines.append("  n%d -> n%d%s;" % (i, c, style))
    lines.append("}")
    return "\n".join(lines) + "\n"
