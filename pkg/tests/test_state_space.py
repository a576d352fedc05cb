from __future__ import annotations

from fractions import Fraction

import pytest

from dftma.galileo import parse_dft, validate
from dftma.model import build_model, detect_symmetries
from dftma.state_space import (BLOCKED, FtState, GenOptions, OP, F, FS, X,
                               StateBudgetExceeded, apply_be_failure,
                               canonicalize, generate, initial_state,
                               successors, export_ma_json, import_ma_json)
from corpus import BY_NAME, concrete_entries, small_entries
from conftest import model_of
from oracles import OracleExplorer, ILLEGAL

RAW = GenOptions(symred=False, dc=False, por=False)


def statuses(m, s, names):
    return tuple(s.status_of(m, n) for n in names)


# ---------------------------------------------------------------------------
# Worked examples
# ---------------------------------------------------------------------------

def test_pand_golden_automaton():
    m = model_of(BY_NAME["pand12"].text)
    ma = generate(m)
    assert ma.n_states == 4
    assert ma.num_transitions() == 3
    labelled = {statuses(m, st, ("A", "B", "SF")) for st in ma.states}
    assert labelled == {("OP", "OP", "OP"), ("F", "OP", "OP"),
                        ("X", "X", "FS"), ("X", "X", "F")}
    rates = sorted(float(r.constant_value())
                   for be, r, t in ma.delay[ma.initial])
    assert rates == [1.0, 2.0]


def test_pand_single_step_states():
    m = model_of(BY_NAME["pand12"].text)
    s0 = initial_state(m)
    assert statuses(m, s0, ("A", "B", "SF")) == ("OP", "OP", "OP")
    s_b = apply_be_failure(m, s0, m.index["B"])
    assert statuses(m, s_b, ("A", "B", "SF")) == ("X", "X", "FS")
    s_a = apply_be_failure(m, s0, m.index["A"])
    assert statuses(m, s_a, ("A", "B", "SF")) == ("F", "OP", "OP")
    s_ab = apply_be_failure(m, s_a, m.index["B"])
    assert statuses(m, s_ab, ("A", "B", "SF")) == ("X", "X", "F")


def test_bike_trace():
    m = model_of(BY_NAME["bike"].text)
    order = ("W1", "W2", "WS", "FW", "BW", "SF")
    s0 = initial_state(m)
    assert statuses(m, s0, order) == ("OP",) * 6
    assert s0.cuc_of(m, "FW") == "W1" and s0.cuc_of(m, "BW") == "W2"
    assert [s0.activity_of(m, n) for n in ("W1", "W2", "WS")] == ["A", "A", "P"]
    s1 = apply_be_failure(m, s0, m.index["W1"])
    assert statuses(m, s1, order) == ("F", "OP", "OP", "OP", "OP", "OP")
    assert s1.cuc_of(m, "FW") == "WS"
    assert [s1.activity_of(m, n) for n in ("W1", "W2", "WS")] == ["A", "A", "A"]
    s2 = apply_be_failure(m, s1, m.index["W2"])
    assert statuses(m, s2, order) == ("F", "X", "OP", "OP", "X", "F")
    assert s2.cuc_of(m, "FW") == "WS"
    assert s2.cuc_of(m, "BW") is None
    assert [s2.activity_of(m, n) for n in ("W1", "W2", "WS")] == ["A", "A", "A"]


def test_fig3c_behaviours():
    m = model_of(BY_NAME["fig3c"].text)
    s0 = initial_state(m)
    order = ("A", "B", "C", "D", "E", "F", "G", "H", "I", "J")
    s_a = apply_be_failure(m, s0, m.index["A"])
    assert statuses(m, s_a, order) == (
        "F", "X", "OP", "OP", "OP", "OP", "OP", "F", "OP", "OP")
    kind, trans = successors(m, s_a)
    assert kind == "immediate"
    (pdep, branches), = trans
    assert m.names[pdep] == "G"
    probs = {str(p): (fault, statuses(m, t, ("C",))[0])
             for p, t, fault in branches}
    assert probs["4/5"] == (m.index["C"], "F")
    assert probs["1/5"] == (None, "OP")
    assert apply_be_failure(m, s0, m.index["F"]) is BLOCKED
    s_d = apply_be_failure(m, s0, m.index["D"])
    got = dict(zip(order, statuses(m, s_d, order)))
    assert got["G"] == "OP"
    assert got["J"] == "FS"
    assert all(v == "X" for k, v in got.items() if k not in ("G", "J"))


def test_seq_blocks_out_of_order():
    m = model_of(BY_NAME["seq_and"].text)
    s0 = initial_state(m)
    assert apply_be_failure(m, s0, m.index["B"]) is BLOCKED
    s_a = apply_be_failure(m, s0, m.index["A"])
    s_ab = apply_be_failure(m, s_a, m.index["B"])
    assert s_ab.status_of(m, "SF") == "F"


def test_cold_passive_event_emits_no_transition():
    m = model_of(BY_NAME["bike_cold"].text)
    s0 = initial_state(m)
    kind, trans = successors(m, s0)
    assert kind == "markovian"
    assert sorted(m.names[be] for be, _, _ in trans) == ["W1", "W2"]


def test_warm_passive_rate_is_dormancy_scaled():
    m = model_of(BY_NAME["bike"].text)
    s0 = initial_state(m)
    kind, trans = successors(m, s0)
    rates = {m.names[be]: r.constant_value() for be, r, _ in trans}
    assert rates == {"W1": 1, "W2": 1, "WS": Fraction(1, 2)}


def test_apply_on_non_operational_event_is_contract_violation():
    m = model_of(BY_NAME["pand12"].text)
    s0 = initial_state(m)
    s_a = apply_be_failure(m, s0, m.index["A"])
    with pytest.raises(ValueError):
        apply_be_failure(m, s_a, m.index["A"])


# ---------------------------------------------------------------------------
# Canonicalisation
# ---------------------------------------------------------------------------

def test_canonicalize_exchanges_parts():
    m = model_of(BY_NAME["sym_two_pands"].text)
    groups = detect_symmetries(m)
    s0 = initial_state(m)
    s_b = apply_be_failure(m, s0, m.index["B"])
    s_b2 = apply_be_failure(m, s0, m.index["B2"])
    assert s_b != s_b2
    assert canonicalize(s_b, groups, m) == canonicalize(s_b2, groups, m)


def test_canonicalize_idempotent_and_stable():
    m = model_of(BY_NAME["sym_two_pands"].text)
    groups = detect_symmetries(m)
    s0 = initial_state(m)
    assert canonicalize(s0, groups, m) == s0
    s_b = apply_be_failure(m, s0, m.index["B"])
    c1 = canonicalize(s_b, groups, m)
    assert canonicalize(c1, groups, m) == c1


def test_symred_reduces_and_preserves_probfail():
    from dftma.analysis import eliminate_immediate, prob_fail
    m = model_of(BY_NAME["sym_two_pands"].text)
    on = generate(m, GenOptions(symred=True))
    off = generate(m, GenOptions(symred=False))
    assert on.n_states < off.n_states
    p_on = prob_fail(eliminate_immediate(on).instantiate({}))
    p_off = prob_fail(eliminate_immediate(off).instantiate({}))
    assert abs(p_on - p_off) < 1e-12


def test_por_reduces_states_and_preserves_measures():
    from dftma.analysis import eliminate_immediate, prob_fail, mttf, \
        prob_fail_bounds, mttf_bounds
    m = model_of(BY_NAME["two_fdeps_cold"].text)
    on = generate(m, GenOptions(por=True))
    off = generate(m, GenOptions(por=False))
    assert on.n_states < off.n_states
    c_on = eliminate_immediate(on).instantiate({})
    lo, hi = prob_fail_bounds(off)
    assert abs(prob_fail(c_on) - lo) < 1e-12 and abs(hi - lo) < 1e-12
    tlo, thi = mttf_bounds(off)
    assert abs(mttf(c_on) - tlo) < 1e-12 and abs(thi - tlo) < 1e-12


# ---------------------------------------------------------------------------
# Packing, budget, exports
# ---------------------------------------------------------------------------

def test_packed_encoding_width_and_uniqueness():
    m = model_of(BY_NAME["bike"].text)
    ma = generate(m, RAW)
    keys = {st.pack(m) for st in ma.states}
    assert len(keys) == ma.n_states
    bits = 2 * m.n + sum(m.cuc_bits) + len(m.representatives)
    assert all(len(k) == (bits + 7) // 8 for k in keys)


def test_budget_exceeded():
    m = model_of(BY_NAME["fig3c"].text)
    with pytest.raises(StateBudgetExceeded):
        generate(m, GenOptions(budget=3))


def test_monotone_degradation_on_all_edges():
    # per-node monotonicity holds on the unexchanged state space; symmetry
    # canonicalisation permutes part slots, so it is checked with symred off
    allowed = {OP: {OP, F, FS, X}, F: {F, X}, FS: {FS, X}, X: {X}}
    for entry in concrete_entries():
        m = model_of(entry.text)
        for opts in (GenOptions(symred=False, dc=True), RAW):
            ma = generate(m, opts)
            for i in range(ma.n_states):
                src = ma.states[i]
                targets = [t for _, _, t in ma.delay[i]]
                targets += [t for _, br in ma.choices[i] for _, t, _ in br]
                for t in targets:
                    dst = ma.states[t]
                    for a, b in zip(src.status, dst.status):
                        assert b in allowed[a], entry.name


def test_immediate_states_have_triggered_dependency():
    for entry in concrete_entries():
        m = model_of(entry.text)
        ma = generate(m, RAW)
        for i in range(ma.n_states):
            if ma.kinds[i] == "I":
                assert len(ma.choices[i]) >= 1
                assert not ma.delay[i]
            if ma.kinds[i] == "M":
                assert ma.delay[i] and not ma.choices[i]


def test_claiming_never_steals_a_used_child():
    m = model_of(BY_NAME["bike"].text)
    ma = generate(m, RAW)
    for st in ma.states:
        used = []
        for s in m.spares:
            idx = st.cuc[m.spare_index[s]]
            if idx >= 0 and st.status[s] == OP:
                used.append(m.children[s][idx])
        assert len(used) == len(set(used))


def test_ma_json_roundtrip():
    m = model_of(BY_NAME["fig3c"].text)
    ma = generate(m)
    doc = export_ma_json(ma)
    ma2 = import_ma_json(doc)
    assert ma2.n_states == ma.n_states
    assert ma2.kinds == ma.kinds
    assert export_ma_json(ma2) == doc


def test_generation_deterministic():
    m1 = model_of(BY_NAME["fig3c"].text)
    m2 = model_of(BY_NAME["fig3c"].text)
    j1 = export_ma_json(generate(m1))
    j2 = export_ma_json(generate(m2))
    assert j1 == j2


# ---------------------------------------------------------------------------
# Brute-force equivalence (independent exhaustive enumerator)
# ---------------------------------------------------------------------------

def engine_space_for_oracle(m, entry):
    """Engine state space in the oracle's key format."""
    ma = generate(m, RAW)
    keys = []
    for st in ma.states:
        cuc = []
        for s in m.spares:
            idx = st.cuc[m.spare_index[s]]
            if idx >= 0 and st.status[s] == OP:
                cuc.append((m.names[s], m.names[m.children[s][idx]]))
        active = frozenset(m.names[r] for r in m.representatives
                           if (st.active >> m.rep_bit[r]) & 1)
        keys.append((tuple(("OP", "F", "FS", "X")[b] for b in st.status),
                     tuple(sorted(cuc)), active))
    edges = set()
    for i in range(ma.n_states):
        for be, rate, t in ma.delay[i]:
            edges.add((keys[i], ("delay", be, rate.constant_value()),
                       keys[t]))
        for pdep, branches in ma.choices[i]:
            for prob, t, fault in branches:
                kind = "fwd" if fault is not None else "dec"
                edges.add((keys[i],
                           ("choice", pdep, kind, prob.constant_value(),
                            fault), keys[t]))
    classes = {keys[i]: ma.absorb[i] for i in range(ma.n_states)
               if ma.absorb[i]}
    return set(keys), edges, classes


@pytest.mark.parametrize("entry", small_entries(),
                         ids=lambda e: e.name)
def test_bruteforce_state_bijection(entry):
    v = validate(parse_dft(entry.text))
    m = build_model(v)
    oracle = OracleExplorer(v)
    o_states, o_edges, o_classes = oracle.explore()
    e_states, e_edges, e_classes = engine_space_for_oracle(m, entry)
    o_keys = {(s.status, s.cuc, s.active) for s in o_states}
    assert o_keys == e_states, entry.name
    o_edges_plain = {((s.status, s.cuc, s.active), label,
                      (t.status, t.cuc, t.active))
                     for s, label, t in o_edges}
    assert o_edges_plain == e_edges, entry.name
    o_classes_plain = {(k.status, k.cuc, k.active): v
                       for k, v in o_classes.items()}
    assert o_classes_plain == e_classes, entry.name
