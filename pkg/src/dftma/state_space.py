"""Fault tree automaton generation and translation to a Markov automaton.

A state maps every node to one of OP (operational), F (failed), FS
(fail-safe) or X (don't care), plus the currently used child of each
operational SPARE and an activity bit per spare module representative.
Statuses only degrade along transitions: OP -> {F, FS, X}, F -> X, FS -> X.

A basic event failure is processed in four stages, mirroring the intended
operational semantics:

1. bottom-up failure propagation over the gates, including SPARE claiming
   and module activation,
2. restriction check: if a sequence enforcer's order is violated the whole
   transition is discarded (`BLOCKED`),
3. bottom-up fail-safe marking (a gate that can no longer fail becomes FS),
4. top-down don't-care propagation: a node whose failure-propagation
   parents are all settled (F/FS/X) is overridden with X, which merges
   states that differ only in their past.  Operational SPAREs keep their
   status because they hold claims; triggers of still-live dependencies and
   the scopes of live sequence enforcers are protected (the latter are
   cleared all-or-nothing so order information is never half-forgotten).

States with a triggered dependency are immediate: they offer one two-point
probabilistic choice per triggered dependency and take no time.  All other
non-settled states are Markovian with one delay transition per operational
basic event whose current failure rate is not identically zero; events in
passive spare modules use their dormancy-scaled rate.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .galileo import Kind
from .model import DftModel, detect_symmetries
from .poly import Polynomial

OP, F, FS, X = 0, 1, 2, 3
STATUS_CHARS = ("OP", "F", "FS", "X")

BLOCKED = object()  # sentinel: transition discarded by a restriction


class StateBudgetExceeded(RuntimeError):
    def __init__(self, count: int):
        super().__init__("state budget exceeded after %d states" % count)
        self.count = count


@dataclass(frozen=True)
class FtState:
    """Immutable fault tree automaton state."""
    status: bytes   # per node id: OP/F/FS/X
    cuc: tuple      # per spare (model.spares order): child index, -1 if none
    active: int     # bitmask over model.representatives

    def pack(self, m: DftModel) -> bytes:
        """Bit-vector encoding: 2 status bits per node, ceil(log2(#children))
        bits per spare CUC, one bit per module representative."""
        acc = 0
        for v in self.status:
            acc = (acc << 2) | v
        for w, idx in zip(m.cuc_bits, self.cuc):
            acc = (acc << w) | (idx if idx >= 0 else 0)
        nrep = len(m.representatives)
        if nrep:
            acc = (acc << nrep) | self.active
        nbits = 2 * len(self.status) + sum(m.cuc_bits) + nrep
        return acc.to_bytes((nbits + 7) // 8 if nbits else 1, "big")

    def status_of(self, m: DftModel, name: str) -> str:
        return STATUS_CHARS[self.status[m.index[name]]]

    def cuc_of(self, m: DftModel, spare_name: str) -> str | None:
        s = m.index[spare_name]
        idx = self.cuc[m.spare_index[s]]
        if idx < 0:
            return None
        return m.names[m.children[s][idx]]

    def activity_of(self, m: DftModel, name: str) -> str:
        node = m.index[name]
        rep = m.module_rep.get(node)
        if rep is None:
            return "A"
        return "A" if (self.active >> m.rep_bit[rep]) & 1 else "P"


@dataclass
class GenOptions:
    symred: bool = True
    dc: bool = True
    por: bool = True
    budget: int | None = None
    keep: frozenset = frozenset()     # measure-relevant ids, never marked X
    event: object | None = None       # callable(status bytes) -> bool
    groups: list | None = None        # precomputed symmetry groups


# ---------------------------------------------------------------------------
# Single-failure semantics
# ---------------------------------------------------------------------------

def _spare_is_active(m: DftModel, active: int, s: int) -> bool:
    rep = m.module_rep.get(s)
    return rep is None or (active >> m.rep_bit[rep]) & 1 == 1


def _activate(m: DftModel, status, cuc, active: int, rep: int) -> int:
    stack = [rep]
    while stack:
        r = stack.pop()
        bit = m.rep_bit[r]
        if (active >> bit) & 1:
            continue
        active |= 1 << bit
        for s in m.spares_in_module[r]:
            j = m.spare_index[s]
            if status[s] == OP and cuc[j] >= 0:
                stack.append(m.children[s][cuc[j]])
    return active


def _bottom_up(m: DftModel, status, cuc, active: int, changed: list) -> int:
    """Propagate new failures upward; returns the updated activity mask."""
    topo_index = m.topo_index
    heap: list = []
    queued = set()

    def push_parents(x: int) -> None:
        for p in m.parents[x]:
            if p not in queued:
                queued.add(p)
                heapq.heappush(heap, (topo_index[p], p))

    for x in changed:
        push_parents(x)
    while heap:
        _, g = heapq.heappop(heap)
        if status[g] != OP:
            continue
        kind = m.kinds[g]
        ch = m.children[g]
        failed = False
        if kind == Kind.OR:
            failed = any(status[c] == F for c in ch)
        elif kind == Kind.AND:
            failed = all(status[c] == F for c in ch)
        elif kind == Kind.VOT:
            failed = sum(1 for c in ch if status[c] == F) >= m.vot_k[g]
        elif kind == Kind.PAND:
            # out-of-order completions were marked FS in an earlier step
            failed = all(status[c] == F for c in ch)
        elif kind == Kind.POR:
            failed = (status[ch[0]] == F
                      and all(status[c] != F for c in ch[1:]))
        elif kind == Kind.SPARE:
            si = m.spare_index[g]
            rep = ch[cuc[si]]
            if status[rep] == F:
                used = set()
                for s2 in m.spares:
                    j = m.spare_index[s2]
                    if status[s2] == OP and cuc[j] >= 0:
                        used.add(m.children[s2][cuc[j]])
                claimed = False
                for idx, cand in enumerate(ch):
                    if status[cand] != OP or cand in used:
                        continue
                    cuc[si] = idx
                    claimed = True
                    if _spare_is_active(m, active, g):
                        active = _activate(m, status, cuc, active, cand)
                    break
                if not claimed:
                    cuc[si] = -1
                    failed = True
        if failed:
            status[g] = F
            changed.append(g)
            push_parents(g)
    return active


def _restriction_violated(m: DftModel, status, changed: list) -> bool:
    seqs = set()
    for x in changed:
        seqs.update(m.node_seqs[x])
    for q in seqs:
        open_before = False
        for c in m.children[q]:
            st = status[c]
            if st in (OP, FS):
                open_before = True
            elif st == F and open_before:
                return True
    return False


def _fail_safe_pass(m: DftModel, status, changed: list) -> None:
    topo_index = m.topo_index
    heap: list = []
    queued = set()

    def push_parents(x: int) -> None:
        for p in m.parents[x]:
            if p not in queued:
                queued.add(p)
                heapq.heappush(heap, (topo_index[p], p))

    for x in changed:
        push_parents(x)
    while heap:
        _, g = heapq.heappop(heap)
        if status[g] != OP:
            continue
        kind = m.kinds[g]
        ch = m.children[g]
        fs = False
        if kind == Kind.AND:
            fs = any(status[c] == FS for c in ch)
        elif kind == Kind.OR:
            fs = all(status[c] == FS for c in ch)
        elif kind == Kind.VOT:
            fs = sum(1 for c in ch if status[c] == FS) > len(ch) - m.vot_k[g]
        elif kind == Kind.PAND:
            fs = any(status[c] == FS for c in ch)
            if not fs:
                seen_op = False
                for c in ch:
                    if status[c] == OP:
                        seen_op = True
                    elif status[c] == F and seen_op:
                        fs = True
                        break
        elif kind == Kind.POR:
            fs = (status[ch[0]] == FS
                  or any(status[c] == F for c in ch[1:]))
        if fs:
            status[g] = FS
            changed.append(g)
            push_parents(g)


def _dc_pass(m: DftModel, status, cuc, keep: frozenset) -> None:
    settled = (F, FS, X)
    top = m.top
    while True:
        any_change = False
        protected = set(keep)
        for p in m.pdeps:
            if (status[p] == OP
                    and status[m.pdep_dependent[p]] == OP
                    and status[m.pdep_trigger[p]] in (OP, F)):
                protected.add(m.pdep_trigger[p])

        def eligible(x: int) -> bool:
            if x == top or x in protected or status[x] == X:
                return False
            k = m.kinds[x]
            if k in (Kind.PDEP, Kind.SEQ):
                return False
            if k == Kind.SPARE and status[x] == OP:
                return False
            return all(status[pp] in settled for pp in m.parents[x])

        vetoed = set()
        for q in m.seqs:
            ch = m.children[q]
            if all(status[c] in (F, X) for c in ch):
                continue  # order satisfied in full, no longer restricts
            if not all(status[c] == X or eligible(c) for c in ch):
                vetoed.update(ch)

        for x in m.nodes_topdown:
            if status[x] == X or x in vetoed:
                continue
            if eligible(x):
                status[x] = X
                if m.kinds[x] == Kind.SPARE:
                    cuc[m.spare_index[x]] = -1
                any_change = True
        if not any_change:
            return


def apply_be_failure(m: DftModel, st: FtState, be: int,
                     opts: GenOptions | None = None):
    """Fail one operational basic event; returns the successor state or
    BLOCKED when a sequence restriction forbids the failure.  Calling this
    with a non-operational event is a contract violation."""
    if st.status[be] != OP:
        raise ValueError("basic event %s is not operational" % m.names[be])
    opts = opts or GenOptions()
    status = bytearray(st.status)
    cuc = list(st.cuc)
    status[be] = F
    changed = [be]
    active = _bottom_up(m, status, cuc, st.active, changed)
    if _restriction_violated(m, status, changed):
        return BLOCKED
    _fail_safe_pass(m, status, changed)
    if opts.dc:
        _dc_pass(m, status, cuc, opts.keep)
    return FtState(bytes(status), tuple(cuc), active)


def _decline_dependency(m: DftModel, st: FtState, p: int,
                        opts: GenOptions) -> FtState:
    status = bytearray(st.status)
    cuc = list(st.cuc)
    status[p] = X  # the dependency is spent without forwarding
    if opts.dc:
        _dc_pass(m, status, cuc, opts.keep)
    return FtState(bytes(status), tuple(cuc), st.active)


def initial_state(m: DftModel, opts: GenOptions | None = None) -> FtState:
    opts = opts or GenOptions()
    status = bytearray(m.n)
    cuc = [0] * len(m.spares)
    active = 0
    for rep in m.initially_active:
        active |= 1 << m.rep_bit[rep]
    if opts.dc:
        _dc_pass(m, status, cuc, opts.keep)
    return FtState(bytes(status), tuple(cuc), active)


# ---------------------------------------------------------------------------
# Symmetry canonicalisation
# ---------------------------------------------------------------------------

def canonicalize(st: FtState, groups: list, m: DftModel) -> FtState:
    """Orbit representative under part exchange: within each group the part
    slices are sorted under the lexicographic order on slice encodings."""
    if not groups:
        return st
    status = bytearray(st.status)
    cuc = list(st.cuc)
    active = st.active
    changed_any = False
    for g in groups:
        slices = []
        for part in g.parts:
            sl = []
            for x in part:
                entry = (status[x],
                         cuc[m.spare_index[x]] if x in m.spare_index else -2,
                         (active >> m.rep_bit[x]) & 1 if x in m.rep_bit else -2)
                sl.append(entry)
            slices.append(sl)
        order = sorted(range(len(slices)), key=lambda i: slices[i])
        if order == list(range(len(slices))):
            continue
        changed_any = True
        for dst_idx, src_idx in enumerate(order):
            part = g.parts[dst_idx]
            src = slices[src_idx]
            for pos, x in enumerate(part):
                stv, cucv, actv = src[pos]
                status[x] = stv
                if cucv != -2:
                    cuc[m.spare_index[x]] = cucv
                if actv != -2:
                    bit = m.rep_bit[x]
                    if actv:
                        active |= 1 << bit
                    else:
                        active &= ~(1 << bit)
    if not changed_any:
        return st
    return FtState(bytes(status), tuple(cuc), active)


# ---------------------------------------------------------------------------
# Successor relation and exploration
# ---------------------------------------------------------------------------

def _triggered(m: DftModel, st: FtState) -> list:
    out = []
    status = st.status
    for p in m.pdeps:
        if (status[p] == OP
                and status[m.pdep_trigger[p]] == F
                and status[m.pdep_dependent[p]] == OP):
            out.append(p)
    return out


def _por_reducible(m: DftModel, trig: list) -> bool:
    deps = set()
    for p in trig:
        if m.pdep_por_unsafe[p]:
            return False
        prob = m.pdep_prob[p]
        if not (prob.is_constant() and prob.constant_value() == 1):
            return False
        d = m.pdep_dependent[p]
        if d in deps:
            return False
        deps.add(d)
    return True


@dataclass
class MarkovAutomaton:
    """Markovian states with rate-labelled delay transitions, immediate
    states with one two-point distribution per triggered dependency, and
    absorbing states tagged FAILED / FAILSAFE."""
    params: tuple
    kinds: list                    # per state: 'M' | 'I' | 'A'
    absorb: list                   # per state: None | 'FAILED' | 'FAILSAFE'
    labels: list                   # per state: (top_status, ((name, status), ...))
    delay: list                    # per state: ((be_name, rate, target), ...)
    choices: list                  # per state: ((pdep_name, branches), ...)
                                   # branch: (prob, target, fault_be_name|None)
    states: list                   # per state: FtState | None
    initial: int = 0

    @property
    def n_states(self) -> int:
        return len(self.kinds)

    def num_delay_transitions(self) -> int:
        return sum(len(d) for d in self.delay)

    def num_choice_transitions(self) -> int:
        return sum(len(c) for c in self.choices)

    def num_transitions(self) -> int:
        return self.num_delay_transitions() + self.num_choice_transitions()


def successors(m: DftModel, st: FtState, opts: GenOptions | None = None):
    """Outgoing transitions of a single state, without deduplication.

    Returns ('immediate', [(pdep, [(prob, state, fault)...])...]) or
    ('markovian', [(be, rate, state)...]); the latter list may be empty for
    naturally absorbing states.
    """
    opts = opts or GenOptions()
    one = Polynomial.constant(1, m.params)
    trig = _triggered(m, st)
    if trig:
        if opts.por and len(trig) > 1 and _por_reducible(m, trig):
            trig = trig[:1]
        out = []
        for p in trig:
            prob = m.pdep_prob[p]
            dep = m.pdep_dependent[p]
            branches = []
            fwd = apply_be_failure(m, st, dep, opts)
            if fwd is BLOCKED:
                branches.append((one, _decline_dependency(m, st, p, opts), None))
            else:
                if not prob.is_zero():
                    branches.append((prob, fwd, dep))
                q = one - prob
                if not q.is_zero():
                    branches.append((q, _decline_dependency(m, st, p, opts), None))
            out.append((p, branches))
        return "immediate", out
    out = []
    status = st.status
    for be in m.be_ids:
        if status[be] != OP:
            continue
        if _spare_is_active(m, st.active, be):
            rate = m.rate_active[be]
        else:
            rate = m.rate_passive[be]
        if rate.is_zero():
            continue
        nxt = apply_be_failure(m, st, be, opts)
        if nxt is BLOCKED:
            continue
        out.append((be, rate, nxt))
    return "markovian", out


def _settled_class(m: DftModel, st: FtState, opts: GenOptions):
    if opts.event is not None:
        return "FAILED" if opts.event(st.status) else None
    ts = st.status[m.top]
    if ts == F:
        return "FAILED"
    if ts == FS:
        return "FAILSAFE"
    return None


def _label_of(m: DftModel, st: FtState, keep_sorted: tuple):
    return (STATUS_CHARS[st.status[m.top]],
            tuple((m.names[x], STATUS_CHARS[st.status[x]])
                  for x in keep_sorted))


def generate(m: DftModel, opts: GenOptions | None = None) -> MarkovAutomaton:
    """Depth-first exploration; states are deduplicated on their packed
    encoding after canonicalisation and numbered in discovery order.
    Exploration stops at states where the measure is settled."""
    opts = opts or GenOptions()
    if not opts.symred:
        groups = []
    elif opts.groups is not None:
        groups = opts.groups
    else:
        groups = detect_symmetries(m, protected=frozenset(opts.keep))
    keep_sorted = tuple(sorted(opts.keep))
    budget = opts.budget

    states: list = []
    kinds: list = []
    absorb: list = []
    labels: list = []
    delay: list = []
    choices: list = []
    key_to_id: dict = {}
    stack: list = []

    def register(st: FtState) -> int:
        st = canonicalize(st, groups, m)
        key = st.pack(m)
        sid = key_to_id.get(key)
        if sid is None:
            sid = len(states)
            key_to_id[key] = sid
            states.append(st)
            kinds.append(None)
            absorb.append(None)
            labels.append(None)
            delay.append(())
            choices.append(())
            if budget is not None and len(states) > budget:
                raise StateBudgetExceeded(len(states))
            stack.append(sid)
        return sid

    register(initial_state(m, opts))
    while stack:
        sid = stack.pop()
        if kinds[sid] is not None:
            continue
        st = states[sid]
        labels[sid] = _label_of(m, st, keep_sorted)
        cls = _settled_class(m, st, opts)
        if cls is not None:
            kinds[sid] = "A"
            absorb[sid] = cls
            continue
        mode, trans = successors(m, st, opts)
        if mode == "immediate":
            kinds[sid] = "I"
            choices[sid] = tuple(
                (m.names[p], tuple(
                    (prob, register(t),
                     m.names[fault] if fault is not None else None)
                    for prob, t, fault in branches))
                for p, branches in trans)
        elif trans:
            kinds[sid] = "M"
            delay[sid] = tuple((m.names[be], rate, register(t))
                               for be, rate, t in trans)
        else:
            kinds[sid] = "A"
            absorb[sid] = "FAILSAFE"
    return MarkovAutomaton(m.params, kinds, absorb, labels, delay, choices,
                           states)


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

def export_ma_dot(ma: MarkovAutomaton) -> str:
    lines = ["digraph ma {", "  node [shape=circle];"]
    for i in range(ma.n_states):
        shape = {"M": "circle", "I": "diamond", "A": "doublecircle"}[ma.kinds[i]]
        extra = ""
        if ma.absorb[i]:
            extra = "\\n%s" % ma.absorb[i]
        lines.append('  s%d [shape=%s, label="s%d%s"];' % (i, shape, i, extra))
    for i in range(ma.n_states):
        for be, rate, t in ma.delay[i]:
            lines.append('  s%d -> s%d [style=dashed, label="%s rate=%s"];'
                         % (i, t, be, rate))
        for pdep, branches in ma.choices[i]:
            for prob, t, fault in branches:
                lines.append('  s%d -> s%d [label="%s p=%s"];'
                             % (i, t, pdep, prob))
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_ma_json(ma: MarkovAutomaton) -> dict:
    return {
        "params": list(ma.params),
        "initial": ma.initial,
        "states": [
            {"id": i,
             "kind": ma.kinds[i],
             "absorb": ma.absorb[i],
             "top": ma.labels[i][0],
             "tracked": {k: v for k, v in ma.labels[i][1]}}
            for i in range(ma.n_states)],
        "delay": [
            [i, be, rate.to_expr_str(), t]
            for i in range(ma.n_states)
            for be, rate, t in ma.delay[i]],
        "choices": [
            [i, pdep, [[prob.to_expr_str(), t, fault]
                       for prob, t, fault in branches]]
            for i in range(ma.n_states)
            for pdep, branches in ma.choices[i]],
    }


def import_ma_json(doc: dict) -> MarkovAutomaton:
    from .galileo import parse_expr
    params = tuple(doc["params"])
    n = len(doc["states"])
    kinds = [None] * n
    absorb = [None] * n
    labels = [None] * n
    delay: list = [[] for _ in range(n)]
    choices: list = [[] for _ in range(n)]
    for s in doc["states"]:
        i = s["id"]
        kinds[i] = s["kind"]
        absorb[i] = s["absorb"]
        labels[i] = (s["top"], tuple(sorted(s["tracked"].items())))
    for i, be, rate, t in doc["delay"]:
        delay[i].append((be, parse_expr(rate, params), t))
    for i, pdep, branches in doc["choices"]:
        choices[i].append((pdep, tuple(
            (parse_expr(prob, params), t, fault)
            for prob, t, fault in branches)))
    return MarkovAutomaton(params, kinds, absorb, labels,
                           [tuple(d) for d in delay],
                           [tuple(c) for c in choices],
                           [None] * n, initial=doc["initial"])
