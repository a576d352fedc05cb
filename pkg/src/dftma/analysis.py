"""CTMC reduction and concrete-valued measures.

Immediate states with a single enabled choice are eliminated by pushing
incoming probability mass through their two-point branches; chains collapse
transitively.  The resulting CTMC keeps, per edge, the expected number of
basic-event faults realised along the collapsed path and the identity of the
final failing event, which the expected-faults and criticality measures
need.

Hitting probabilities and hitting-time moments solve sparse linear systems
(LU via scipy, with an optional Gauss-Seidel fallback); time-bounded
reachability uses uniformization with a Poisson tail truncated below 1e-10
total error.  Markov automata that keep nondeterministic branching are
handled by min/max backward induction (the state graphs derived from fault
trees are acyclic; cyclic inputs fall back to interval value iteration for
reachability).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.stats import poisson

from .galileo import Kind, DftDescription, ValidatedDft, validate
from .measures import MeasureKind, MeasureSpec
from .model import DftModel, ModuleTree, build_model, detect_independent_modules
from .poly import Polynomial
from .state_space import GenOptions, MarkovAutomaton, generate


class UndefinedMeasure(Exception):
    pass


class NotModular(Exception):
    pass


@dataclass
class NondeterminismRemains:
    """State elimination found an immediate state with several choices."""
    ma: MarkovAutomaton


@dataclass
class Ctmc:
    """Absorbing-labelled CTMC with fault-counting edge annotations."""
    params: tuple
    n: int
    init: list                       # [(state, Fraction weight)]
    src: list
    dst: list
    rate: list                       # Polynomial or Fraction per edge
    faults: list                     # int: faults realised along the edge
    final_be: list                   # str | None: last failing basic event
    failed: list                     # bool per state
    failsafe: list                   # bool per state
    labels: list                     # dict name -> status char per state
    _num: dict = field(default_factory=dict, repr=False)

    @property
    def n_transitions(self) -> int:
        return len(self.src)

    def is_parametric(self) -> bool:
        return any(isinstance(r, Polynomial) and not r.is_constant()
                   for r in self.rate)

    def instantiate(self, point: dict, exact: bool = True) -> "Ctmc":
        if exact:
            pt = {k: Fraction(v) for k, v in point.items()}
        else:
            pt = {k: float(v) for k, v in point.items()}
        rates = []
        for r in self.rate:
            if isinstance(r, Polynomial):
                v = r.evaluate(pt)
            else:
                v = Fraction(r) if exact else float(r)
            if v < 0:
                raise ValueError("negative rate %s at %r" % (v, point))
            rates.append(v)
        return Ctmc(self.params, self.n, self.init, self.src, self.dst,
                    rates, self.faults, self.final_be, self.failed,
                    self.failsafe, self.labels)

    # -- numeric view ---------------------------------------------------------

    def numeric(self):
        if "num" in self._num:
            return self._num["num"]
        rates = np.empty(len(self.rate))
        for i, r in enumerate(self.rate):
            rates[i] = float(r.constant_value()) if isinstance(r, Polynomial) \
                else r
        src = np.asarray(self.src, dtype=np.int64)
        dst = np.asarray(self.dst, dtype=np.int64)
        exit_rate = np.zeros(self.n)
        np.add.at(exit_rate, src, rates)
        absorbing = exit_rate == 0.0
        num = dict(rates=rates, src=src, dst=dst, exit=exit_rate,
                   absorbing=absorbing,
                   failed=np.asarray(self.failed, dtype=bool),
                   failsafe=np.asarray(self.failsafe, dtype=bool))
        num["transient"] = ~absorbing
        self._num["num"] = num
        return num

    def init_vector(self) -> np.ndarray:
        v = np.zeros(self.n)
        for s, w in self.init:
            v[s] += float(w)
        return v


# ---------------------------------------------------------------------------
# State elimination
# ---------------------------------------------------------------------------

def eliminate_immediate(ma: MarkovAutomaton):
    """Collapse single-choice immediate states into their Markovian
    predecessors; returns a Ctmc, or NondeterminismRemains carrying the MA
    when some immediate state keeps several enabled choices."""
    for i in range(ma.n_states):
        if ma.kinds[i] == "I" and len(ma.choices[i]) > 1:
            return NondeterminismRemains(ma)

    one = Polynomial.constant(1, ma.params)
    memo: dict = {}
    on_path: set = set()

    def resolve(i: int) -> list:
        # distribution over non-immediate states:
        # [(prob, target, faults, final_be)]
        if ma.kinds[i] != "I":
            return [(one, i, 0, None)]
        got = memo.get(i)
        if got is not None:
            return got
        if i in on_path:
            raise ValueError("instantaneous cycle through state %d" % i)
        on_path.add(i)
        (_, branches), = ma.choices[i]
        acc: dict = {}
        for prob, t, fault in branches:
            for p2, t2, f2, fb2 in resolve(t):
                pr = prob * p2
                faults = f2 + (1 if fault is not None else 0)
                fb = fb2 if fb2 is not None else fault
                key = (t2, faults, fb)
                acc[key] = acc[key] + pr if key in acc else pr
        on_path.discard(i)
        out = [(p, t, f, fb) for (t, f, fb), p in sorted(
            acc.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2] or ""))]
        memo[i] = out
        return out

    keep = [i for i in range(ma.n_states) if ma.kinds[i] != "I"]
    remap = {old: new for new, old in enumerate(keep)}
    n = len(keep)
    src: list = []
    dst: list = []
    rate: list = []
    faults: list = []
    final_be: list = []
    for old in keep:
        s = remap[old]
        for be, r, t in ma.delay[old]:
            for p2, t2, f2, fb2 in resolve(t):
                src.append(s)
                dst.append(remap[t2])
                rate.append(r * p2 if not (p2 is one) else r)
                faults.append(1 + f2)
                final_be.append(fb2 if fb2 is not None else be)
    init = [(remap[t], Fraction(p.constant_value()))
            for p, t, _, _ in resolve(ma.initial)]
    failed = [ma.absorb[old] == "FAILED" for old in keep]
    failsafe = [ma.absorb[old] == "FAILSAFE" for old in keep]
    labels = [dict(ma.labels[old][1]) if ma.labels[old] else {}
              for old in keep]
    return Ctmc(ma.params, n, init, src, dst, rate, faults, final_be,
                failed, failsafe, labels)


# ---------------------------------------------------------------------------
# Linear solves
# ---------------------------------------------------------------------------

def _gauss_seidel(A: sp.csr_matrix, b: np.ndarray,
                  tol: float = 1e-12, max_iter: int = 200000) -> np.ndarray:
    n = len(b)
    x = np.zeros(n)
    D = A.diagonal()
    L = sp.tril(A, k=-1).tocsr()
    U = sp.triu(A, k=1).tocsr()
    for _ in range(max_iter):
        x_new = x.copy()
        rhs = b - U @ x
        for i in range(n):
            s = (L[i, :i] @ x_new[:i]).item() if i else 0.0
            x_new[i] = (rhs[i] - s) / D[i]
        if np.max(np.abs(A @ x_new - b)) <= tol * max(1.0, np.max(np.abs(b))):
            return x_new
        x = x_new
    return x


def solve_linear(A: sp.spmatrix, b: np.ndarray, method: str = "lu") -> np.ndarray:
    if method == "gs":
        return _gauss_seidel(A.tocsr(), b)
    return spla.spsolve(A.tocsc(), b)


def _transient_system(c: Ctmc):
    """(I - P_TT) over transient states plus index maps."""
    num = c.numeric()
    transient = np.flatnonzero(num["transient"])
    pos = -np.ones(c.n, dtype=np.int64)
    pos[transient] = np.arange(len(transient))
    mask = num["transient"][num["src"]] & num["transient"][num["dst"]]
    rows = pos[num["src"][mask]]
    cols = pos[num["dst"][mask]]
    vals = num["rates"][mask] / num["exit"][num["src"][mask]]
    nt = len(transient)
    P_tt = sp.coo_matrix((vals, (rows, cols)), shape=(nt, nt)).tocsr()
    A = sp.identity(nt, format="csr") - P_tt
    return num, transient, pos, A


def _hitting_probability(c: Ctmc, target: np.ndarray,
                         method: str = "lu") -> np.ndarray:
    """h(s) = probability to reach the (absorbing) target set from s."""
    num, transient, pos, A = _transient_system(c)
    b = np.zeros(len(transient))
    mask = num["transient"][num["src"]] & target[num["dst"]]
    np.add.at(b, pos[num["src"][mask]],
              num["rates"][mask] / num["exit"][num["src"][mask]])
    h = np.zeros(c.n)
    h[target] = 1.0
    if len(transient):
        h[transient] = np.clip(solve_linear(A, b, method), 0.0, 1.0)
    return h


def _backward_value(c: Ctmc, rho: np.ndarray, carry: np.ndarray,
                    method: str = "lu") -> np.ndarray:
    """Solve v = rho + P v on transients with v = carry on absorbing."""
    num, transient, pos, A = _transient_system(c)
    b = rho[transient].copy()
    mask = num["transient"][num["src"]] & ~num["transient"][num["dst"]]
    np.add.at(b, pos[num["src"][mask]],
              num["rates"][mask] / num["exit"][num["src"][mask]]
              * carry[num["dst"][mask]])
    v = carry.copy()
    if len(transient):
        v[transient] = solve_linear(A, b, method)
    return v


def _push(c: Ctmc, vec: np.ndarray) -> np.ndarray:
    """(P vec) restricted to transient rows; zero elsewhere."""
    num = c.numeric()
    out = np.zeros(c.n)
    mask = num["transient"][num["src"]]
    np.add.at(out, num["src"][mask],
              num["rates"][mask] / num["exit"][num["src"][mask]]
              * vec[num["dst"][mask]])
    return out


# ---------------------------------------------------------------------------
# Measures on CTMCs
# ---------------------------------------------------------------------------

def reliability(c: Ctmc, t: float) -> float:
    """Probability that FAILED is reached by time t (uniformization)."""
    if t < 0:
        raise ValueError("time horizon must be non-negative")
    num = c.numeric()
    failed = num["failed"]
    pi = c.init_vector()
    max_exit = float(num["exit"].max(initial=0.0))
    mu = 1.02 * max_exit * t
    if mu == 0.0 or t == 0.0:
        return float(pi @ failed)
    lam = 1.02 * max_exit
    n_terms = int(poisson.isf(1e-10, mu)) + 1
    weights = poisson.pmf(np.arange(n_terms + 1), mu)
    rows = np.concatenate([num["src"], np.arange(c.n)])
    cols = np.concatenate([num["dst"], np.arange(c.n)])
    vals = np.concatenate([num["rates"] / lam, 1.0 - num["exit"] / lam])
    P = sp.coo_matrix((vals, (rows, cols)), shape=(c.n, c.n)).tocsr()
    PT = P.T.tocsr()
    acc = weights[0] * float(pi @ failed)
    vec = pi
    for k in range(1, n_terms + 1):
        vec = PT @ vec
        w = weights[k]
        if w:
            acc += w * float(vec @ failed)
    return min(max(acc, 0.0), 1.0)


def prob_fail(c: Ctmc, method: str = "lu") -> float:
    num = c.numeric()
    h = _hitting_probability(c, num["failed"], method)
    return float(c.init_vector() @ h)


def _require_failure_certain(c: Ctmc, h: np.ndarray, conditional: bool) -> float:
    h0 = float(c.init_vector() @ h)
    if not conditional and h0 < 1.0 - 1e-9:
        raise UndefinedMeasure(
            "probability of failure is %.12g < 1; use the conditional variant"
            % h0)
    if conditional and h0 <= 0.0:
        raise UndefinedMeasure("failure is unreachable; conditioning impossible")
    return h0


def mttf(c: Ctmc, conditional: bool = False, method: str = "lu") -> float:
    num = c.numeric()
    h = _hitting_probability(c, num["failed"], method)
    h0 = _require_failure_certain(c, h, conditional)
    weight = h if conditional else np.ones(c.n)
    rho = np.zeros(c.n)
    tr = num["transient"]
    rho[tr] = weight[tr] / num["exit"][tr]
    g = _backward_value(c, rho, np.zeros(c.n), method)
    val = float(c.init_vector() @ g)
    return val / h0 if conditional else val


def vttf(c: Ctmc, conditional: bool = False, method: str = "lu") -> float:
    num = c.numeric()
    h = _hitting_probability(c, num["failed"], method)
    h0 = _require_failure_certain(c, h, conditional)
    weight = h if conditional else np.ones(c.n)
    tr = num["transient"]
    exit_tr = num["exit"]
    rho1 = np.zeros(c.n)
    rho1[tr] = weight[tr] / exit_tr[tr]
    m1 = _backward_value(c, rho1, np.zeros(c.n), method)
    # E[T^2 1_fail]: 2 w / E^2 + (2/E) * sum_u p(s,u) m1(u) + recursion
    rho2 = np.zeros(c.n)
    rho2[tr] = 2.0 * weight[tr] / exit_tr[tr] ** 2
    rho2[tr] += 2.0 / exit_tr[tr] * _push(c, m1)[tr]
    m2 = _backward_value(c, rho2, np.zeros(c.n), method)
    pi = c.init_vector()
    e1 = float(pi @ m1) / h0 if conditional else float(pi @ m1)
    e2 = float(pi @ m2) / h0 if conditional else float(pi @ m2)
    return e2 - e1 * e1


def expected_faults(c: Ctmc, conditional: bool = False,
                    method: str = "lu") -> float:
    num = c.numeric()
    h = _hitting_probability(c, num["failed"], method)
    h0 = _require_failure_certain(c, h, conditional)
    weight = h if conditional else np.ones(c.n)
    fcount = np.asarray(c.faults, dtype=float)
    rho = np.zeros(c.n)
    mask = num["transient"][num["src"]]
    np.add.at(rho, num["src"][mask],
              num["rates"][mask] / num["exit"][num["src"][mask]]
              * fcount[mask] * weight[num["dst"][mask]])
    g = _backward_value(c, rho, np.zeros(c.n), method)
    val = float(c.init_vector() @ g)
    return val / h0 if conditional else val


def importance_fv(c: Ctmc, be: str, method: str = "lu") -> float:
    """Fussell-Vesely: P(be failed at absorption in FAILED | FAILED)."""
    num = c.numeric()
    h = _hitting_probability(c, num["failed"], method)
    h0 = float(c.init_vector() @ h)
    if h0 <= 0.0:
        raise UndefinedMeasure("failure is unreachable")
    target = num["failed"].copy()
    for i in range(c.n):
        if target[i]:
            lab = c.labels[i]
            if lab.get(be) != "F":
                target[i] = False
    h1 = _hitting_probability(c, target, method)
    return float(c.init_vector() @ h1) / h0


def importance_crit(c: Ctmc, be: str, method: str = "lu") -> float:
    """Criticality: P(the transition entering FAILED is be's failure | FAILED)."""
    num = c.numeric()
    h = _hitting_probability(c, num["failed"], method)
    h0 = float(c.init_vector() @ h)
    if h0 <= 0.0:
        raise UndefinedMeasure("failure is unreachable")
    rho = np.zeros(c.n)
    for e in range(len(c.src)):
        s = c.src[e]
        if num["transient"][s] and num["failed"][c.dst[e]] \
                and c.final_be[e] == be:
            rho[s] += float(num["rates"][e]) / num["exit"][s]
    g = _backward_value(c, rho, np.zeros(c.n), method)
    return float(c.init_vector() @ g) / h0


# ---------------------------------------------------------------------------
# Batched evaluation over many parameter points (vectorised form of the
# same embedded-chain linear systems; used by the region sampling validator)
# ---------------------------------------------------------------------------

def _bsolve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.solve(A, b[..., None])[..., 0]


def _poly_eval_batch(p, arrays: dict, k_points: int) -> np.ndarray:
    if not isinstance(p, Polynomial):
        return np.full(k_points, float(p))
    out = np.zeros(k_points)
    for e, c in p.terms.items():
        v = np.full(k_points, float(c))
        for i, k in enumerate(e):
            if k:
                v = v * arrays[p.params[i]] ** k
        out += v
    return out


def measure_batch(c: Ctmc, spec, points: dict) -> np.ndarray:
    """Measure values at many parameter points at once.

    Solves the same transient linear systems as the scalar pipeline, but as
    stacked dense systems.  Supports all measures except time-bounded
    reliability; chains must be small enough for dense solves.
    """
    from .measures import MeasureKind
    k_points = len(next(iter(points.values())))
    rates = np.stack([_poly_eval_batch(r, points, k_points)
                      for r in c.rate], axis=1)  # (K, E)
    src = np.asarray(c.src)
    dst = np.asarray(c.dst)
    exit_rate = np.zeros((k_points, c.n))
    np.add.at(exit_rate, (slice(None), src), rates)
    transient = np.zeros(c.n, dtype=bool)
    transient[src] = True
    tr_idx = np.flatnonzero(transient)
    nt = len(tr_idx)
    pos = -np.ones(c.n, dtype=np.int64)
    pos[tr_idx] = np.arange(nt)
    failed = np.asarray(c.failed, dtype=bool)

    p_edges = rates / exit_rate[:, src]
    inner = transient[dst]
    rows = pos[src[inner]]
    cols = pos[dst[inner]]
    A = np.zeros((k_points, nt, nt))
    A[:, np.arange(nt), np.arange(nt)] = 1.0
    np.subtract.at(A, (slice(None), rows, cols), p_edges[:, inner])

    def rhs_from_edges(edge_vals: np.ndarray, towards: np.ndarray) -> np.ndarray:
        b = np.zeros((k_points, nt))
        sel = towards
        np.add.at(b, (slice(None), pos[src[sel]]), edge_vals[:, sel])
        return b

    def full_vector(v_tr: np.ndarray, carry: np.ndarray) -> np.ndarray:
        out = np.tile(carry, (k_points, 1))
        out[:, tr_idx] = v_tr
        return out

    pi = c.init_vector()

    h_tr = _bsolve(A, rhs_from_edges(p_edges, failed[dst]))
    h = full_vector(h_tr, failed.astype(float))
    h0 = h @ pi

    kind = spec.kind
    if kind == MeasureKind.PROB_FAIL:
        return h0
    weight = h if spec.conditional else np.ones((k_points, c.n))
    denom = h0 if spec.conditional else np.ones(k_points)

    if kind in (MeasureKind.MTTF, MeasureKind.VTTF):
        rho1 = weight[:, tr_idx] / exit_rate[:, tr_idx]
        m1 = _bsolve(A, rho1)  # hitting moments vanish when absorbed
        if kind == MeasureKind.MTTF:
            m1_full = full_vector(m1, np.zeros(c.n))
            return (m1_full @ pi) / denom
        push1 = _batch_push(full_vector(m1, np.zeros(c.n)), p_edges, pos,
                            src, dst, transient, k_points, nt)
        rho2 = (2.0 * weight[:, tr_idx] / exit_rate[:, tr_idx] ** 2
                + 2.0 / exit_rate[:, tr_idx] * push1)
        m2 = _bsolve(A, rho2)
        e1 = (full_vector(m1, np.zeros(c.n)) @ pi) / denom
        e2 = (full_vector(m2, np.zeros(c.n)) @ pi) / denom
        return e2 - e1 * e1

    if kind == MeasureKind.EXPECTED_FAULTS:
        fcount = np.asarray(c.faults, dtype=float)
        wdst = weight[:, dst] if spec.conditional else 1.0
        b = np.zeros((k_points, nt))
        np.add.at(b, (slice(None), pos[src]),
                  p_edges * fcount[None, :] * wdst)
        g = _bsolve(A, b)
        return (full_vector(g, np.zeros(c.n)) @ pi) / denom

    if kind == MeasureKind.FUSSELL_VESELY:
        t1 = failed.copy()
        for i in range(c.n):
            if t1[i] and c.labels[i].get(spec.be) != "F":
                t1[i] = False
        n_tr = _bsolve(A, rhs_from_edges(p_edges, t1[dst]))
        n0 = full_vector(n_tr, t1.astype(float)) @ pi
        return n0 / h0

    if kind == MeasureKind.CRITICALITY:
        own = np.array([fb == spec.be for fb in c.final_be])
        sel = failed[dst] & own
        g = _bsolve(A, rhs_from_edges(p_edges, sel))
        return (full_vector(g, np.zeros(c.n)) @ pi) / h0

    raise ValueError("unsupported batched measure %s" % kind)


def _batch_push(vec_full: np.ndarray, p_edges, pos, src, dst, transient,
                k_points, nt) -> np.ndarray:
    out = np.zeros((k_points, nt))
    np.add.at(out, (slice(None), pos[src]), p_edges * vec_full[:, dst])
    return out


# ---------------------------------------------------------------------------
# Bounds on Markov automata with remaining nondeterminism
# ---------------------------------------------------------------------------

def _ma_topological(ma: MarkovAutomaton) -> list | None:
    indeg = [0] * ma.n_states
    succs: list = [[] for _ in range(ma.n_states)]
    for i in range(ma.n_states):
        for _, _, t in ma.delay[i]:
            succs[i].append(t)
            indeg[t] += 1
        for _, branches in ma.choices[i]:
            for _, t, _ in branches:
                succs[i].append(t)
                indeg[t] += 1
    order = [i for i in range(ma.n_states) if indeg[i] == 0]
    out = []
    while order:
        i = order.pop()
        out.append(i)
        for t in succs[i]:
            indeg[t] -= 1
            if indeg[t] == 0:
                order.append(t)
    return out if len(out) == ma.n_states else None


def _const(p) -> float:
    return float(p.constant_value())


def _bellman(ma: MarkovAutomaton, h: list, i: int, opt, reward: bool) -> float:
    if ma.kinds[i] == "A":
        if reward:
            return 0.0
        return 1.0 if ma.absorb[i] == "FAILED" else 0.0
    if ma.kinds[i] == "M":
        exit_rate = sum(_const(r) for _, r, _ in ma.delay[i])
        acc = 1.0 / exit_rate if reward else 0.0
        return acc + sum(_const(r) / exit_rate * h[t]
                         for _, r, t in ma.delay[i])
    vals = [sum(_const(p) * h[t] for p, t, _ in branches)
            for _, branches in ma.choices[i]]
    return opt(vals)


def prob_fail_bounds(ma: MarkovAutomaton) -> tuple:
    """(min, max) probability of reaching FAILED under any scheduler.

    Fault tree automata are acyclic, so backward induction over a
    topological order is exact; cyclic inputs fall back to value iteration.
    """
    order = _ma_topological(ma)

    def sweep(opt) -> float:
        h = [0.0] * ma.n_states
        if order is not None:
            for i in reversed(order):
                h[i] = _bellman(ma, h, i, opt, reward=False)
            return h[ma.initial]
        for _ in range(1000000):
            change = 0.0
            for i in range(ma.n_states):
                new = _bellman(ma, h, i, opt, reward=False)
                change = max(change, abs(new - h[i]))
                h[i] = new
            if change <= 1e-13:
                break
        return h[ma.initial]

    return sweep(min), sweep(max)


def mttf_bounds(ma: MarkovAutomaton) -> tuple:
    """(min, max) expected time to FAILED; time accrues only in Markovian
    states.  Requires failure to be almost sure under every scheduler."""
    lo, _ = prob_fail_bounds(ma)
    if lo < 1.0 - 1e-9:
        raise UndefinedMeasure(
            "some scheduler avoids failure (min probability %.12g < 1)" % lo)
    order = _ma_topological(ma)
    if order is None:
        raise UndefinedMeasure(
            "expected-time bounds require an acyclic Markov automaton")

    def sweep(opt) -> float:
        g = [0.0] * ma.n_states
        for i in reversed(order):
            g[i] = _bellman(ma, g, i, opt, reward=True)
        return g[ma.initial]

    return sweep(min), sweep(max)


# ---------------------------------------------------------------------------
# Modularisation
# ---------------------------------------------------------------------------

def _submodel(m: DftModel, leaf_root: int) -> DftModel:
    from .model import _independent
    nodes = _independent(m, leaf_root)
    if nodes is None:
        raise NotModular("subtree under %s is not independent"
                         % m.names[leaf_root])
    keep_names = {m.names[x] for x in nodes}
    decls = tuple(d for d in m.description.nodes if d.name in keep_names)
    desc = DftDescription(m.names[leaf_root], decls, m.params)
    return build_model(validate(desc))


def _combine(kind: Kind, k: int | None, probs: list) -> float:
    if kind == Kind.AND:
        out = 1.0
        for p in probs:
            out *= p
        return out
    if kind == Kind.OR:
        out = 1.0
        for p in probs:
            out *= (1.0 - p)
        return 1.0 - out
    # VOT(k): probability that at least k children fail (Poisson binomial)
    dist = np.zeros(len(probs) + 1)
    dist[0] = 1.0
    for p in probs:
        dist[1:] = dist[1:] * (1 - p) + dist[:-1] * p
        dist[0] *= (1 - p)
    return float(dist[k:].sum())


def modular_reliability(m: DftModel, t: float | None,
                        opts: GenOptions | None = None) -> float:
    """Reliability at t (or failure probability for t=None) through the
    static skeleton over independent modules; per-module values come from
    the full pipeline and independence makes the combination exact."""
    tree = detect_independent_modules(m)
    if tree.is_leaf:
        raise NotModular(
            "no static skeleton above independent modules (top %s is %s)"
            % (m.names[m.top], m.kinds[m.top].name))

    def value(node: ModuleTree) -> float:
        if node.is_leaf:
            sub = _submodel(m, node.node)
            ctmc = eliminate_immediate(generate(sub, opts or GenOptions()))
            if isinstance(ctmc, NondeterminismRemains):
                raise NotModular("module %s keeps nondeterminism"
                                 % m.names[node.node])
            conc = ctmc.instantiate({})
            return reliability(conc, t) if t is not None else prob_fail(conc)
        probs = [value(c) for c in node.children]
        return _combine(m.kinds[node.node], m.vot_k.get(node.node), probs)

    return value(tree)
