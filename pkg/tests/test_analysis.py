from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.integrate

from dftma.analysis import (Ctmc, NondeterminismRemains, NotModular,
                            UndefinedMeasure, eliminate_immediate,
                            expected_faults, importance_crit, importance_fv,
                            measure_batch, modular_reliability, mttf,
                            mttf_bounds, prob_fail, prob_fail_bounds,
                            reliability, solve_linear, vttf)
from dftma.galileo import parse_dft, validate
from dftma.measures import (CompatibilityError, MeasureKind, MeasureSpec,
                            OptimisationFlags, check_compatibility,
                            parse_event)
from dftma.model import build_model
from dftma.poly import Polynomial
from dftma.state_space import GenOptions, MarkovAutomaton, generate
from corpus import BY_NAME, concrete_entries, small_entries
from conftest import model_of
from oracles import DenseOracle, OracleExplorer

TOL = 1e-9


def chain_of(name, opts=None):
    m = model_of(BY_NAME[name].text)
    c = eliminate_immediate(generate(m, opts or GenOptions()))
    assert isinstance(c, Ctmc)
    return c.instantiate({})


# ---------------------------------------------------------------------------
# Analytic values
# ---------------------------------------------------------------------------

def test_or_mttf_and_probfail():
    c = chain_of("or2")
    assert abs(mttf(c) - 1 / 3) < TOL
    assert abs(prob_fail(c) - 1.0) < TOL


def test_and_mttf_vttf_faults():
    c = chain_of("and2")
    # 1/a + 1/b - 1/(a+b) for the max of exponentials
    assert abs(mttf(c) - 1.5) < TOL
    assert abs(vttf(c) - 1.25) < TOL
    assert abs(expected_faults(c) - 2.0) < TOL


def test_pand_probfail_is_race_probability():
    c = chain_of("pand12")
    assert abs(prob_fail(c) - 1 / 3) < TOL


def test_pand_conditional_mttf():
    c = chain_of("pand11")
    assert abs(mttf(c, conditional=True) - 1.5) < TOL
    with pytest.raises(UndefinedMeasure):
        mttf(c, conditional=False)


def test_seq_never_failsafe():
    c = chain_of("seq_and")
    assert abs(prob_fail(c) - 1.0) < TOL


def test_single_be_reliability_and_vttf():
    c = chain_of("single_be")
    assert abs(reliability(c, 10.0) - (1 - math.exp(-1))) < TOL
    assert abs(vttf(c) - 100.0) < TOL


def test_or_vttf_is_variance_of_minimum():
    c = chain_of("or2")
    assert abs(vttf(c) - 1 / 9) < TOL


def test_or_expected_faults_is_one():
    c = chain_of("or2")
    assert abs(expected_faults(c) - 1.0) < TOL


def test_reliability_pand_numeric_integration_oracle():
    m = model_of('toplevel "T"; "T" pand "A" "B"; "A" lambda=1; '
                 '"B" lambda=1;')
    c = eliminate_immediate(generate(m)).instantiate({})
    t = 2.0
    # P(A < B <= t) for independent unit exponentials
    oracle, err = scipy.integrate.quad(
        lambda u: math.exp(-u) * (math.exp(-u) - math.exp(-t)), 0.0, t)
    assert err < 1e-12
    got = reliability(c, t)
    assert abs(got - oracle) < TOL
    # Monte Carlo cross-check
    rng = np.random.default_rng(12345)
    a = rng.exponential(1.0, 10 ** 6)
    b = rng.exponential(1.0, 10 ** 6)
    mc = float(np.mean((a <= b) & (b <= t)))
    assert abs(got - mc) < 3e-3


def test_importances_on_or():
    m = model_of(BY_NAME["or2"].text)
    spec_keep = GenOptions(dc=False, keep=frozenset({m.index["A"]}))
    c = eliminate_immediate(generate(m, spec_keep)).instantiate({})
    assert abs(importance_fv(c, "A") - 1 / 3) < TOL
    assert abs(importance_crit(c, "A") - 1 / 3) < TOL


def test_importances_on_and_and_pand():
    m = model_of(BY_NAME["and2"].text)
    opts = GenOptions(dc=False, keep=frozenset({m.index["A"]}))
    c = eliminate_immediate(generate(m, opts)).instantiate({})
    assert abs(importance_fv(c, "A") - 1.0) < TOL
    c2 = chain_of("pand11")
    assert abs(importance_crit(c2, "B") - 1.0) < TOL


# ---------------------------------------------------------------------------
# State elimination
# ---------------------------------------------------------------------------

def test_eliminate_folds_probabilistic_branching():
    m = model_of(BY_NAME["pdep08"].text)
    ma = generate(m)
    c = eliminate_immediate(ma)
    assert isinstance(c, Ctmc)
    conc = c.instantiate({})
    # after A fails, B fails immediately w.p. 0.8, else B keeps racing
    assert abs(prob_fail(conc) - 1.0) < TOL
    # E[T] = 1/2 + P(B first)*1 + P(A first)*0.2*1 = 1.1
    assert abs(mttf(conc) - 1.1) < TOL


def test_eliminate_keeps_fault_counts_through_cascades():
    c = chain_of("pdep08", GenOptions(dc=False))
    # faults: A and B always both fail before the AND fails
    assert abs(expected_faults(c) - 2.0) < TOL


def coffee_machine():
    """Hand-built MA with a real scheduler choice (cyclic on purpose)."""
    one = Polynomial.constant(1, ())
    p9 = Polynomial.constant(Fraction(9, 10), ())
    p1 = Polynomial.constant(Fraction(1, 10), ())
    rate5 = Polynomial.constant(5, ())
    rate3 = Polynomial.constant(3, ())
    return MarkovAutomaton(
        params=(),
        kinds=["M", "I", "I", "I", "I"],
        absorb=[None] * 5,
        labels=[("OP", ())] * 5,
        delay=[(("ioa", rate5, 1), ("iob", rate3, 2)), (), (), (), ()],
        choices=[
            (),
            (("we", ((one, 3, None),)),),
            (("we", ((p1, 3, None), (p9, 4, None))),
             ("wc", ((one, 4, None),))),
            (("ge", ((one, 0, None),)),),
            (("gc", ((one, 0, None),)),),
        ],
        states=[None] * 5,
    )


def test_coffee_machine_keeps_nondeterminism():
    res = eliminate_immediate(coffee_machine())
    assert isinstance(res, NondeterminismRemains)
    assert res.ma.n_states == 5


def test_trivial_immediate_chain_collapse():
    one = Polynomial.constant(1, ())
    rate = Polynomial.constant(2, ())
    ma = MarkovAutomaton(
        params=(),
        kinds=["M", "I", "I", "A"],
        absorb=[None, None, None, "FAILED"],
        labels=[("OP", ()), ("OP", ()), ("OP", ()), ("F", ())],
        delay=[(("b", rate, 1),), (), (), ()],
        choices=[(), (("p", ((one, 2, "b2"),)),),
                 (("q", ((one, 3, "b3"),)),), ()],
        states=[None] * 4,
    )
    c = eliminate_immediate(ma)
    assert isinstance(c, Ctmc)
    assert c.n == 2
    assert c.faults == [3]  # delay + two forwarded dependents
    conc = c.instantiate({})
    assert abs(prob_fail(conc) - 1.0) < TOL
    assert abs(mttf(conc) - 0.5) < TOL


# ---------------------------------------------------------------------------
# Bounds under nondeterminism
# ---------------------------------------------------------------------------

def test_deterministic_ma_bounds_coincide():
    m = model_of(BY_NAME["or2"].text)
    ma = generate(m)
    lo, hi = prob_fail_bounds(ma)
    assert abs(lo - hi) < TOL and abs(lo - 1.0) < TOL
    tlo, thi = mttf_bounds(ma)
    assert abs(tlo - thi) < TOL and abs(tlo - 1 / 3) < TOL


def test_pdep_race_has_genuine_scheduler_gap():
    m = model_of(BY_NAME["pdep_race_pand"].text)
    ma = generate(m, GenOptions(por=True))
    res = eliminate_immediate(ma)
    assert isinstance(res, NondeterminismRemains)
    lo, hi = prob_fail_bounds(ma)
    assert lo < 1e-12 and abs(hi - 1.0) < 1e-12


def test_commuting_pdep_bounds_tight():
    m = model_of(BY_NAME["two_pdeps_or"].text)
    ma = generate(m)
    lo, hi = prob_fail_bounds(ma)
    assert abs(hi - lo) < TOL


# ---------------------------------------------------------------------------
# Linear-system and uniformization oracles
# ---------------------------------------------------------------------------

def make_random_chain(rng, n):
    """Random absorbing CTMC with cycles, a FAILED and a FAILSAFE sink."""
    src, dst, rate = [], [], []
    for i in range(n - 2):
        others = rng.choice(n, size=min(3, n - 1), replace=False)
        for j in others:
            if j == i:
                continue
            src.append(i)
            dst.append(int(j))
            rate.append(float(rng.uniform(0.1, 3.0)))
    # FAILED = n-2, FAILSAFE = n-1; ensure both reachable
    src += [0, 0]
    dst += [n - 2, n - 1]
    rate += [0.5, 0.25]
    failed = [i == n - 2 for i in range(n)]
    failsafe = [i == n - 1 for i in range(n)]
    # drop edges out of the sinks
    keep = [k for k in range(len(src)) if src[k] < n - 2]
    src = [src[k] for k in keep]
    dst = [dst[k] for k in keep]
    rate = [rate[k] for k in keep]
    faults = [1] * len(src)
    final = ["b%d" % k for k in range(len(src))]
    return Ctmc((), n, [(0, Fraction(1))], src, dst, rate, faults, final,
                failed, failsafe, [{} for _ in range(n)])


def test_sparse_measures_match_dense_on_random_chains():
    rng = np.random.default_rng(7)
    for n in (5, 20, 80, 200):
        c = make_random_chain(rng, n)
        # dense reference for the hitting probability
        N = c.n
        Q = np.zeros((N, N))
        for s, d, r in zip(c.src, c.dst, c.rate):
            Q[s, d] += float(r)
        exit_rate = Q.sum(axis=1)
        trans = exit_rate > 0
        P = np.zeros((N, N))
        P[trans] = Q[trans] / exit_rate[trans, None]
        idx = np.flatnonzero(trans)
        failed = np.asarray(c.failed, float)
        A = np.eye(len(idx)) - P[np.ix_(idx, idx)]
        absorbing = np.flatnonzero(~trans)
        b = P[np.ix_(idx, absorbing)] @ failed[absorbing]
        h_dense = float(np.linalg.solve(A, b)[0])
        assert abs(prob_fail(c) - h_dense) < TOL
        # conditional mttf against the dense h-weighted system
        hvec = failed.copy()
        hvec[idx] = np.linalg.solve(A, b)
        rho = hvec[idx] / exit_rate[idx]
        g_dense = float(np.linalg.solve(A, rho)[0])
        assert abs(mttf(c, conditional=True) - g_dense / h_dense) < TOL


def test_gauss_seidel_fallback_agrees_with_lu():
    rng = np.random.default_rng(3)
    c = make_random_chain(rng, 30)
    assert abs(prob_fail(c, method="gs") - prob_fail(c, method="lu")) < 1e-9


def test_uniformization_matches_series_oracle_on_three_state_chain():
    # 0 -(a)-> 1 -(b)-> 2(FAILED): hitting cdf has a closed form
    a, b = 1.3, 0.7
    c = Ctmc((), 3, [(0, Fraction(1))], [0, 1], [1, 2], [a, b], [1, 1],
             ["x", "y"], [False, False, True], [False] * 3, [{}, {}, {}])
    for t in (0.0, 0.4, 1.7, 6.0):
        exact = 1 - (b * math.exp(-a * t) - a * math.exp(-b * t)) / (b - a)
        assert abs(reliability(c, t) - exact) < TOL


def test_reliability_monotone_and_converges_to_probfail():
    c = chain_of("vot23")
    values = [reliability(c, t) for t in (0.0, 0.5, 1.0, 2.0, 5.0)]
    assert all(x <= y + 1e-12 for x, y in zip(values, values[1:]))
    lam_min = 1.0
    assert abs(reliability(c, 1000.0 / lam_min) - prob_fail(c)) < 1e-6


# ---------------------------------------------------------------------------
# Dense-oracle equivalence on the small corpus
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("entry", [e for e in small_entries()
                                   if e.commuting],
                         ids=lambda e: e.name)
def test_measures_match_dense_oracle(entry):
    v = validate(parse_dft(entry.text))
    m = build_model(v)
    oracle = DenseOracle(OracleExplorer(v))
    opts = GenOptions(symred=False, dc=False, por=True)
    ma = generate(m, opts)
    c = eliminate_immediate(ma)
    if isinstance(c, NondeterminismRemains):
        lo, hi = prob_fail_bounds(ma)
        assert abs(lo - oracle.prob_fail()) < TOL
        assert abs(hi - oracle.prob_fail()) < TOL
        return
    conc = c.instantiate({})
    assert abs(prob_fail(conc) - oracle.prob_fail()) < TOL, entry.name
    assert abs(mttf(conc, conditional=True)
               - oracle.mttf(conditional=True)) < TOL
    assert abs(vttf(conc, conditional=True)
               - oracle.vttf(conditional=True)) < TOL
    assert abs(expected_faults(conc, conditional=True)
               - oracle.expected_faults(conditional=True)) < TOL
    assert abs(reliability(conc, 0.7) - oracle.reliability(0.7)) < TOL
    if oracle.prob_fail() > 1e-9:
        for be in [n for n in m.names
                   if m.kinds[m.index[n]].name == "BE"][:2]:
            keep = GenOptions(symred=False, dc=False, por=False,
                              keep=frozenset({m.index[be]}))
            c2 = eliminate_immediate(generate(m, keep))
            if isinstance(c2, NondeterminismRemains):
                continue
            conc2 = c2.instantiate({})
            assert abs(importance_fv(conc2, be)
                       - oracle.importance_fv(be)) < TOL, (entry.name, be)
            assert abs(importance_crit(conc2, be)
                       - oracle.importance_crit(be)) < TOL, (entry.name, be)


# ---------------------------------------------------------------------------
# Conditioning, events, compatibility, modularisation
# ---------------------------------------------------------------------------

def test_conditional_equals_unconditional_when_failure_certain():
    for name in ("or2", "and2", "seq_and", "bike_cold"):
        c = chain_of(name)
        assert abs(mttf(c, True) - mttf(c, False)) < TOL, name


def test_event_measure_reaches_configuration():
    m = model_of(BY_NAME["or2"].text)
    formula = parse_event('failed("A") & operational("B")')
    event = formula.compile(m)
    opts = GenOptions(dc=False, keep=frozenset(m.index[a]
                                               for a in formula.atoms),
                      event=event)
    c = eliminate_immediate(generate(m, opts)).instantiate({})
    # P(A fails strictly before B) = 1/3
    assert abs(prob_fail(c) - 1 / 3) < TOL


def test_compatibility_matrix_rejections():
    cases = [
        (MeasureSpec(MeasureKind.RELIABILITY, t=1.0, conditional=True),
         OptimisationFlags(), False, "conditional"),
        (MeasureSpec(MeasureKind.RELIABILITY, t=1.0),
         OptimisationFlags(), True, "parametric"),
        (MeasureSpec(MeasureKind.MTTF),
         OptimisationFlags(modularisation=True), False, "modularisation"),
        (MeasureSpec(MeasureKind.VTTF),
         OptimisationFlags(modularisation=True), False, "modularisation"),
        (MeasureSpec(MeasureKind.EXPECTED_FAULTS),
         OptimisationFlags(modularisation=True), False, "modularisation"),
        (MeasureSpec(MeasureKind.EXPECTED_FAULTS),
         OptimisationFlags(dc=True), False, "dc"),
        (MeasureSpec(MeasureKind.FUSSELL_VESELY, be="A"),
         OptimisationFlags(modularisation=True), False, "modularisation"),
        (MeasureSpec(MeasureKind.FUSSELL_VESELY, be="A"),
         OptimisationFlags(dc=True), False, "dc"),
        (MeasureSpec(MeasureKind.CRITICALITY, be="A"),
         OptimisationFlags(modularisation=True), False, "modularisation"),
    ]
    for spec, flags, parametric, option in cases:
        viol = check_compatibility(spec, flags, parametric)
        assert any(v.option == option for v in viol), (spec.kind, option)
        assert any(spec.kind.value in v.message for v in viol)


def test_compatibility_all_clear_for_probfail():
    spec = MeasureSpec(MeasureKind.PROB_FAIL, conditional=True)
    flags = OptimisationFlags(symred=True, dc=True, por=True,
                              modularisation=True)
    assert check_compatibility(spec, flags, parametric=True) == []


def test_modular_reliability_matches_whole_space():
    m = model_of(BY_NAME["or_of_ands_sym"].text)
    t = 0.8
    whole = reliability(chain_of("or_of_ands_sym"), t)
    modular = modular_reliability(m, t)
    assert abs(whole - modular) < TOL
    p_whole = prob_fail(chain_of("or_of_ands_sym"))
    p_mod = modular_reliability(m, None)
    assert abs(p_whole - p_mod) < TOL


def test_modular_rejects_dynamic_skeleton():
    m = model_of(BY_NAME["pand12"].text)
    with pytest.raises(NotModular):
        modular_reliability(m, 1.0)


def test_batched_measures_match_scalar():
    m = model_of(BY_NAME["bike_param"].text)
    c = eliminate_immediate(generate(m))
    rng = np.random.default_rng(0)
    pts = {"x": rng.uniform(0.2, 1.5, 16), "y": rng.uniform(0.2, 1.5, 16)}
    batch = measure_batch(c, MeasureSpec(MeasureKind.MTTF), pts)
    for j in range(16):
        point = {k: pts[k][j] for k in pts}
        scalar = mttf(c.instantiate(point, exact=False))
        assert abs(batch[j] - scalar) < 1e-9
