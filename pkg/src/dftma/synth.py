"""Closed-form measures on parametric CTMCs, sensitivities, and sound
parameter-space partitioning.

State elimination on the embedded jump chain with expected-time /
probability / fault-count rewards produces an exact rational function per
measure; evaluating it at an admissible point reproduces the concrete
pipeline.  Region classification replaces the SMT backend of the original
approach with exact interval arithmetic (Fraction endpoints, Horner-factored
evaluation) plus recursive bisection: verdicts are sound by construction,
at the price of incompleteness near the threshold surface.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from fractions import Fraction

from .analysis import Ctmc, UndefinedMeasure
from .measures import MeasureKind, MeasureSpec
from .poly import DegenerateDenominator, Polynomial, RationalFunction


class DenominatorMayVanish(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# Parametric state elimination
# ---------------------------------------------------------------------------

def _embedded_rows(c: Ctmc):
    """Per transient state: reward-free jump probabilities and exit rate."""
    params = c.params
    out_edges: dict = {}
    for e in range(c.n_transitions):
        out_edges.setdefault(c.src[e], []).append(e)
    exit_poly: dict = {}
    for s, es in out_edges.items():
        acc = Polynomial.constant(0, params)
        for e in es:
            r = c.rate[e]
            acc = acc + (r if isinstance(r, Polynomial)
                         else Polynomial.constant(r, params))
        exit_poly[s] = acc
    return out_edges, exit_poly


def _solve_system(coefs: dict, rho: dict, params: tuple) -> dict:
    """Solve m_s = rho_s + sum_u coefs[s][u] * m_u over the rational
    function field by greedy state elimination.

    Pivot rule: eliminate the variable whose current row has the lowest sum
    of denominator degrees, ties by id.  The result is order-independent.
    """
    rows = {s: dict(cs) for s, cs in coefs.items()}
    rhs = dict(rho)
    occurs: dict = {s: set() for s in rows}
    for s, cs in rows.items():
        for u in cs:
            occurs.setdefault(u, set()).add(s)

    def score(s: int):
        deg = rhs[s].den.total_degree()
        for f in rows[s].values():
            deg += f.den.total_degree()
        return (deg, s)

    remaining = set(rows)
    eliminated: list = []
    while remaining:
        k = min(remaining, key=score)
        remaining.discard(k)
        row = rows.pop(k)
        self_coef = row.pop(k, None)
        scale = RationalFunction.constant(1, params)
        if self_coef is not None:
            denom = RationalFunction.constant(1, params) - self_coef
            if denom.is_zero():
                raise DegenerateDenominator(
                    "self-loop probability is identically one at state %d" % k)
            scale = RationalFunction.constant(1, params) / denom
        k_rhs = rhs.pop(k) * scale
        k_row = {u: f * scale for u, f in row.items()}
        eliminated.append((k, k_rhs, k_row))
        for s in occurs.get(k, ()):  # substitute into rows that mention k
            if s not in rows:
                continue
            f = rows[s].pop(k, None)
            if f is None:
                continue
            rhs[s] = rhs[s] + f * k_rhs
            for u, g in k_row.items():
                add = f * g
                if u in rows[s]:
                    rows[s][u] = rows[s][u] + add
                else:
                    rows[s][u] = add
                    occurs.setdefault(u, set()).add(s)
    # back substitution in reverse elimination order
    values: dict = {}
    for k, k_rhs, k_row in reversed(eliminated):
        acc = k_rhs
        for u, f in k_row.items():
            acc = acc + f * values[u]
        values[k] = acc
    return values


def _as_rf(p, params) -> RationalFunction:
    if isinstance(p, RationalFunction):
        return p
    if isinstance(p, Polynomial):
        return RationalFunction(p)
    return RationalFunction.constant(p, params)


def _parametric_solve(c: Ctmc, rho_edge, boundary) -> dict:
    """Generic backward system over transient states.

    rho_edge(e, exit_poly) -> per-edge reward contribution (RationalFunction)
    boundary(state) -> value at absorbing states (RationalFunction)
    """
    params = c.params
    out_edges, exit_poly = _embedded_rows(c)
    transient = set(out_edges)
    coefs: dict = {}
    rho: dict = {}
    zero = RationalFunction.constant(0, params)
    for s in sorted(transient):
        ex = exit_poly[s]
        row: dict = {}
        acc = zero
        for e in out_edges[s]:
            r = c.rate[e]
            rp = r if isinstance(r, Polynomial) else Polynomial.constant(r, params)
            p_e = RationalFunction(rp, ex)
            contrib = rho_edge(e, p_e, ex)
            if contrib is not None:
                acc = acc + contrib
            t = c.dst[e]
            if t in transient:
                row[t] = row[t] + p_e if t in row else p_e
            else:
                bv = boundary(t)
                if bv is not None and not bv.is_zero():
                    acc = acc + p_e * bv
        coefs[s] = row
        rho[s] = acc
    return _solve_system(coefs, rho, params)


def _initial_value(c: Ctmc, values: dict, boundary) -> RationalFunction:
    params = c.params
    acc = RationalFunction.constant(0, params)
    for s, w in c.init:
        if s in values:
            v = values[s]
        else:
            v = boundary(s) or RationalFunction.constant(0, params)
        acc = acc + v * RationalFunction.constant(w, params)
    return acc


def _reach_values(c: Ctmc, target_states: set) -> dict:
    params = c.params

    def boundary(t):
        return RationalFunction.constant(1 if t in target_states else 0, params)

    return _parametric_solve(c, lambda e, p, ex: None, boundary), boundary


def param_eliminate(c: Ctmc, spec: MeasureSpec) -> RationalFunction:
    """Closed-form rational function of a measure on a parametric CTMC."""
    if spec.kind == MeasureKind.RELIABILITY:
        raise UndefinedMeasure(
            "time-bounded reliability has no rational closed form")
    params = c.params
    failed_states = {i for i in range(c.n) if c.failed[i]}
    one = RationalFunction.constant(1, params)
    zero = RationalFunction.constant(0, params)

    h_vals, h_bound = _reach_values(c, failed_states)

    def h_of(s):
        if s in h_vals:
            return h_vals[s]
        return h_bound(s)

    h0 = _initial_value(c, h_vals, h_bound)

    if spec.kind == MeasureKind.PROB_FAIL:
        return h0

    if spec.kind in (MeasureKind.MTTF, MeasureKind.VTTF,
                     MeasureKind.EXPECTED_FAULTS):
        if not spec.conditional and not (h0 == one):
            raise UndefinedMeasure(
                "failure probability is not identically 1 (%s); "
                "use the conditional variant" % h0)
        if spec.conditional and h0.is_zero():
            raise UndefinedMeasure("failure is unreachable")
    weight = h_of if spec.conditional else (lambda s: one)

    if spec.kind == MeasureKind.MTTF:
        vals = _solve_time(c, weight)
        g0 = _initial_value(c, vals, lambda t: zero)
        return g0 / h0 if spec.conditional else g0

    if spec.kind == MeasureKind.VTTF:
        m1 = _solve_time(c, weight)
        m2 = _solve_second_moment(c, weight, m1)
        e1 = _initial_value(c, m1, lambda t: zero)
        e2 = _initial_value(c, m2, lambda t: zero)
        if spec.conditional:
            e1, e2 = e1 / h0, e2 / h0
        return e2 - e1 * e1

    if spec.kind == MeasureKind.EXPECTED_FAULTS:
        if spec.conditional:
            def rho_edge(e, p_e, ex):
                fcount = c.faults[e]
                if fcount == 0:
                    return None
                return (p_e * RationalFunction.constant(fcount, params)
                        * h_of(c.dst[e]))
        else:
            def rho_edge(e, p_e, ex):
                fcount = c.faults[e]
                if fcount == 0:
                    return None
                return p_e * RationalFunction.constant(fcount, params)
        vals = _parametric_solve(c, rho_edge, lambda t: zero)
        g0 = _initial_value(c, vals, lambda t: zero)
        return g0 / h0 if spec.conditional else g0

    if spec.kind == MeasureKind.FUSSELL_VESELY:
        targets = {i for i in failed_states if c.labels[i].get(spec.be) == "F"}
        n_vals, n_bound = _reach_values(c, targets)
        n0 = _initial_value(c, n_vals, n_bound)
        if h0.is_zero():
            raise UndefinedMeasure("failure is unreachable")
        return n0 / h0

    if spec.kind == MeasureKind.CRITICALITY:
        def rho_edge(e, p_e, ex):
            if c.dst[e] in failed_states and c.final_be[e] == spec.be:
                return p_e
            return None

        vals = _parametric_solve(c, rho_edge, lambda t: zero)
        n0 = _initial_value(c, vals, lambda t: zero)
        if h0.is_zero():
            raise UndefinedMeasure("failure is unreachable")
        return n0 / h0

    raise ValueError("unsupported measure kind %s" % spec.kind)


def _solve_time(c: Ctmc, weight) -> dict:
    """Expected (weighted) time to absorption: g = w/E + P g."""
    params = c.params
    out_edges, exit_poly = _embedded_rows(c)
    transient = set(out_edges)
    coefs: dict = {}
    rho: dict = {}
    one_poly = Polynomial.constant(1, params)
    for s in sorted(transient):
        ex = exit_poly[s]
        row: dict = {}
        for e in out_edges[s]:
            r = c.rate[e]
            rp = r if isinstance(r, Polynomial) else Polynomial.constant(r, params)
            t = c.dst[e]
            if t in transient:
                p_e = RationalFunction(rp, ex)
                row[t] = row[t] + p_e if t in row else p_e
        coefs[s] = row
        rho[s] = weight(s) * RationalFunction(one_poly, ex)
    return _solve_system(coefs, rho, params)


def _solve_second_moment(c: Ctmc, weight, m1: dict) -> dict:
    """Second (weighted) moment: m2 = 2w/E^2 + (2/E) P m1 + P m2."""
    params = c.params
    out_edges, exit_poly = _embedded_rows(c)
    transient = set(out_edges)
    zero = RationalFunction.constant(0, params)
    one_poly = Polynomial.constant(1, params)
    coefs: dict = {}
    rho: dict = {}
    for s in sorted(transient):
        ex = exit_poly[s]
        inv_e = RationalFunction(one_poly, ex)
        row: dict = {}
        push = zero
        for e in out_edges[s]:
            r = c.rate[e]
            rp = r if isinstance(r, Polynomial) else Polynomial.constant(r, params)
            t = c.dst[e]
            p_e = RationalFunction(rp, ex)
            if t in transient:
                row[t] = row[t] + p_e if t in row else p_e
                push = push + p_e * m1.get(t, zero)
        coefs[s] = row
        rho[s] = (RationalFunction.constant(2, params) * weight(s)
                  * inv_e * inv_e
                  + RationalFunction.constant(2, params) * inv_e * push)
    return _solve_system(coefs, rho, params)


def sensitivity(f: RationalFunction, param: str) -> RationalFunction:
    """Formal partial derivative (quotient rule, canonicalised)."""
    if param not in f.params:
        raise ValueError("parameter %r is not declared" % param)
    return f.derivative(param)


# ---------------------------------------------------------------------------
# Interval arithmetic (exact Fraction endpoints)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError("empty interval [%s, %s]" % (self.lo, self.hi))

    def __add__(self, o: "Interval") -> "Interval":
        return Interval(self.lo + o.lo, self.hi + o.hi)

    def __mul__(self, o: "Interval") -> "Interval":
        cands = (self.lo * o.lo, self.lo * o.hi,
                 self.hi * o.lo, self.hi * o.hi)
        return Interval(min(cands), max(cands))

    def __truediv__(self, o: "Interval") -> "Interval":
        if o.lo <= 0 <= o.hi:
            raise DenominatorMayVanish(
                "denominator interval [%s, %s] contains zero" % (o.lo, o.hi))
        cands = (self.lo / o.lo, self.lo / o.hi,
                 self.hi / o.lo, self.hi / o.hi)
        return Interval(min(cands), max(cands))

    def contains(self, v: Fraction) -> bool:
        return self.lo <= v <= self.hi

    @classmethod
    def point(cls, v) -> "Interval":
        v = Fraction(v)
        return cls(v, v)


# Internally intervals are plain (lo, hi) Fraction pairs; Horner structures
# are compiled once per polynomial and cached on the term dict identity.

_ZERO_IV = (Fraction(0), Fraction(0))
_ONE_IV = (Fraction(1), Fraction(1))


def _iv_add(a, b):
    return (a[0] + b[0], a[1] + b[1])


def _iv_mul(a, b):
    c0, c1, c2, c3 = a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]
    return (min(c0, c1, c2, c3), max(c0, c1, c2, c3))


def _iv_pow(a, k: int):
    if k == 0:
        return _ONE_IV
    out = a
    for _ in range(k - 1):
        out = _iv_mul(out, a)
    if k % 2 == 0 and a[0] < 0 < a[1]:
        out = (Fraction(0), out[1])
    return out


def _iv_div(a, b):
    if b[0] <= 0 <= b[1]:
        raise DenominatorMayVanish(
            "denominator interval [%s, %s] contains zero" % (b[0], b[1]))
    c0, c1, c2, c3 = a[0] / b[0], a[0] / b[1], a[1] / b[0], a[1] / b[1]
    return (min(c0, c1, c2, c3), max(c0, c1, c2, c3))


def _compile_horner(terms: dict, nvars: int, var_index: int = 0):
    """Nested Horner representation: ('c', value) for constants or
    ('h', var_index, [(gap, sub), ...] high-to-low, min_exponent)."""
    if not terms:
        return ("c", Fraction(0))
    if var_index >= nvars:
        return ("c", next(iter(terms.values())))
    groups: dict = {}
    for e, c in terms.items():
        rest = e[:var_index] + (0,) + e[var_index + 1:]
        groups.setdefault(e[var_index], {})[rest] = c
    if len(groups) == 1 and 0 in groups:
        return _compile_horner(groups[0], nvars, var_index + 1)
    seq = []
    prev = None
    for k in sorted(groups, reverse=True):
        sub = _compile_horner(groups[k], nvars, var_index + 1)
        gap = 0 if prev is None else prev - k
        seq.append((gap, sub))
        prev = k
    return ("h", var_index, seq, min(groups))


def _eval_horner(node, box_ivs: list):
    if node[0] == "c":
        v = node[1]
        return (v, v)
    _, vi, seq, min_exp = node
    xs = box_ivs[vi]
    acc = None
    for gap, sub in seq:
        coeff = _eval_horner(sub, box_ivs)
        if acc is None:
            acc = coeff
        else:
            acc = _iv_add(_iv_mul(acc, _iv_pow(xs, gap)), coeff)
    if min_exp:
        acc = _iv_mul(acc, _iv_pow(xs, min_exp))
    return acc


_HORNER_CACHE: dict = {}


def _poly_range(p: Polynomial, box_ivs: list):
    key = id(p)
    node = _HORNER_CACHE.get(key)
    if node is None:
        node = _compile_horner(p.terms, len(p.params))
        _HORNER_CACHE[key] = node
    return _eval_horner(node, box_ivs)


def _box_ivs(f: RationalFunction, box: dict) -> list:
    out = []
    for p in f.params:
        v = box.get(p)
        if v is None:
            out.append(_ZERO_IV)  # unused parameter slot
        elif isinstance(v, Interval):
            out.append((v.lo, v.hi))
        else:
            out.append((Fraction(v[0]), Fraction(v[1])))
    return out


def interval_eval(f: RationalFunction, box: dict) -> Interval:
    """Sound range enclosure: f(p) lies in the result for every p in box
    (interval arithmetic on the Horner factorisation of num and den).

    Raises DenominatorMayVanish when the denominator enclosure contains 0.
    """
    ivs = _box_ivs(f, box)
    den = _poly_range(f.den, ivs)
    num = _poly_range(f.num, ivs)
    lo, hi = _iv_div(num, den)
    return Interval(lo, hi)


# ---------------------------------------------------------------------------
# Parameter space partitioning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegionVerdict:
    box: tuple          # ((lo, hi) Fractions per parameter, param order)
    cls: str            # "above" | "below" | "unknown"


class _RangeEvaluator:
    """Tight sound enclosures: natural Horner form intersected with the
    mean-value form f(mid) + grad(f)(box) . (box - mid)."""

    def __init__(self, f: RationalFunction, params: tuple):
        self.f = f
        self.params = params  # box dimensions, subset of f.params
        used = f.num.variables() | f.den.variables()
        self.active = [p for p in params if p in used]
        self.dnum = {p: f.num.derivative(p) for p in self.active}
        self.dden = {p: f.den.derivative(p) for p in self.active}

    def enclosure(self, box: tuple):
        f = self.f
        ivs = []
        by_name = dict(zip(self.params, box))
        for p in f.params:
            ivs.append(by_name.get(p, _ZERO_IV))
        den = _poly_range(f.den, ivs)
        if den[0] <= 0 <= den[1]:
            raise DenominatorMayVanish(
                "denominator interval [%s, %s] contains zero"
                % (den[0], den[1]))
        num = _poly_range(f.num, ivs)
        lo, hi = _iv_div(num, den)
        # mean-value form over the active dimensions
        mid = {p: (b[0] + b[1]) / 2 for p, b in zip(self.params, box)}
        for p in f.params:
            mid.setdefault(p, Fraction(0))
        fmid = f.num.evaluate(mid) / f.den.evaluate(mid)
        acc = (fmid, fmid)
        den_sq = _iv_mul(den, den)
        for p in self.active:
            dn = _poly_range(self.dnum[p], ivs)
            dd = _poly_range(self.dden[p], ivs)
            top = _iv_add(_iv_mul(dn, den),
                          _iv_mul((-num[1], -num[0]), dd))
            deriv = _iv_div(top, den_sq)
            b = by_name[p]
            half = (b[1] - b[0]) / 2
            acc = _iv_add(acc, _iv_mul(deriv, (-half, half)))
        return (max(lo, acc[0]), min(hi, acc[1]))


def _box_volume(box: tuple) -> Fraction:
    v = Fraction(1)
    for lo, hi in box:
        v *= hi - lo
    return v


def clip_box(box: dict, roles: dict) -> dict:
    """Clip parameter ranges to their admissible domain: rates stay
    positive, probabilities and dormancy factors stay within [0, 1]."""
    out = {}
    eps = Fraction(1, 10 ** 9)
    for name, (lo, hi) in box.items():
        lo, hi = Fraction(lo), Fraction(hi)
        role = roles.get(name, "rate")
        if role in ("prob", "dorm"):
            lo, hi = max(lo, Fraction(0)), min(hi, Fraction(1))
        else:
            lo = max(lo, eps)
        if lo > hi:
            raise ValueError("parameter %s has empty admissible range" % name)
        out[name] = (lo, hi)
    return out


def partition(f: RationalFunction, threshold, direction: str, box: dict,
              coverage_goal: float = 0.9, depth_cap: int = 24) -> list:
    """Sound classification of the box against `f` vs `threshold`.

    Recursive bisection of the widest dimension; a box is classified when
    interval evaluation proves every point lies strictly above or below the
    threshold.  `direction` only orients the reported satisfying class.
    Returns verdicts that tile the input box exactly.
    """
    if direction not in ("above", "below"):
        raise ValueError("direction must be 'above' or 'below'")
    thr = Fraction(threshold)
    params = [p for p in f.params if p in box]
    missing = [p for p in f.params
               if p not in box and p in f.num.variables() | f.den.variables()]
    if missing:
        raise ValueError("no range given for parameters %s" % missing)
    root = tuple((Fraction(box[p][0]), Fraction(box[p][1])) for p in params)
    total = _box_volume(root)
    if total == 0:
        raise ValueError("box has zero volume")
    goal = Fraction(coverage_goal).limit_denominator(10 ** 9) * total
    evaluator = _RangeEvaluator(f, tuple(params))

    verdicts: list = []
    classified = Fraction(0)
    # max-heap on volume, deterministic tiebreak via insertion counter
    counter = 0
    queue: list = [(-total, 0, root, 0)]

    def classify(b: tuple) -> str | None:
        try:
            lo, hi = evaluator.enclosure(b)
        except DenominatorMayVanish:
            return None
        if lo > thr:
            return "above"
        if hi < thr:
            return "below"
        return None

    while queue:
        if classified >= goal:
            verdicts.extend(RegionVerdict(b, "unknown") for _, _, b, _ in queue)
            break
        negvol, _, b, depth = heapq.heappop(queue)
        cls = classify(b)
        if cls is not None:
            verdicts.append(RegionVerdict(b, cls))
            classified += -negvol
            continue
        if depth >= depth_cap:
            verdicts.append(RegionVerdict(b, "unknown"))
            continue
        widths = [hi - lo for lo, hi in b]
        dim = widths.index(max(widths))
        lo, hi = b[dim]
        mid = (lo + hi) / 2
        for half in (((lo, mid),), ((mid, hi),)):
            counter += 1
            child = b[:dim] + half + b[dim + 1:]
            heapq.heappush(queue, (-_box_volume(child), counter, child,
                                   depth + 1))

    return sorted(verdicts, key=lambda v: v.box)


def coverage_fraction(verdicts: list, box: dict | None = None) -> float:
    total = Fraction(0)
    classified = Fraction(0)
    for v in verdicts:
        vol = _box_volume(v.box)
        total += vol
        if v.cls != "unknown":
            classified += vol
    if total == 0:
        return 0.0
    return float(classified / total)


def regions_csv(verdicts: list, params: tuple) -> str:
    header = []
    for p in params:
        header += ["%s_lo" % p, "%s_hi" % p]
    header.append("class")
    lines = [",".join(header)]
    for v in verdicts:
        cells = []
        for lo, hi in v.box:
            cells += ["%.9g" % float(lo), "%.9g" % float(hi)]
        cells.append(v.cls)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
