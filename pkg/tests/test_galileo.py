from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from dftma.galileo import (DftParseError, DftValidationError, Kind, parse_dft,
                           print_dft, validate)
from corpus import CORPUS


def test_parse_basic_and_gate():
    d = parse_dft('toplevel "T"; "T" and "A" "B"; "A" lambda=1.0; '
                  '"B" lambda=2.0;')
    assert d.top_name == "T"
    assert [n.name for n in d.nodes] == ["T", "A", "B"]
    t = d.by_name()["T"]
    assert t.kind == Kind.AND and t.children == ("A", "B")
    assert d.by_name()["A"].lam.constant_value() == 1
    assert d.by_name()["B"].lam.constant_value() == 2


def test_parse_parametric_rates():
    d = parse_dft('param x; toplevel "T"; "T" or "A" "B"; "A" lambda=x; '
                  '"B" lambda=2*x+1;')
    a, b = d.by_name()["A"], d.by_name()["B"]
    assert a.lam.evaluate({"x": Fraction(3)}) == 3
    assert b.lam.evaluate({"x": Fraction(3)}) == 7
    assert d.params == ("x",)


def test_unknown_reference_names_the_culprit():
    with pytest.raises(DftParseError, match="Z"):
        parse_dft('toplevel "T"; "T" and "A" "Z"; "A" lambda=1;')


def test_duplicate_name_rejected():
    with pytest.raises(DftParseError, match="duplicate"):
        parse_dft('toplevel "T"; "T" and "A"; "A" lambda=1; "A" lambda=2;')


def test_malformed_number_with_position():
    with pytest.raises(DftParseError, match="malformed number"):
        parse_dft('toplevel "T"; "T" lambda=1.2.3;')


def test_missing_toplevel():
    with pytest.raises(DftParseError, match="toplevel"):
        parse_dft('"A" lambda=1;')


def test_comments_stripped():
    d = parse_dft('// a comment\ntoplevel "T"; // trailing\n"T" lambda=1;')
    assert d.top_name == "T"


def test_rational_and_scientific_coefficients():
    d = parse_dft('toplevel "T"; "T" lambda=1/3 dorm=2e-1;')
    be = d.by_name()["T"]
    assert be.lam.constant_value() == Fraction(1, 3)
    assert be.dorm.constant_value() == Fraction(1, 5)


def test_fdep_normalised_to_pdep_prob_one():
    d = parse_dft('toplevel "T"; "T" and "A" "B"; "G" fdep "A" "B"; '
                  '"A" lambda=1; "B" lambda=1;')
    g = d.by_name()["G"]
    assert g.kind == Kind.PDEP
    assert g.prob.constant_value() == 1


def test_vot_arity_mismatch_is_restriction_a():
    d = parse_dft('toplevel "T"; "T" 2of3 "A" "B"; "A" lambda=1; '
                  '"B" lambda=1;')
    with pytest.raises(DftValidationError) as err:
        validate(d)
    assert [v.code for v in err.value.violations] == ["restriction-a"]


def test_pdep_as_child_is_restriction_c():
    d = parse_dft('toplevel "T"; "T" and "A" "G"; "G" pdep prob=1/2 "A" "B"; '
                  '"A" lambda=1; "B" lambda=1;')
    with pytest.raises(DftValidationError) as err:
        validate(d)
    assert any(v.code == "restriction-c" for v in err.value.violations)


def test_dependent_gate_is_restriction_d():
    d = parse_dft('toplevel "T"; "T" and "A" "B"; "H" or "A" "B"; '
                  '"G" fdep "A" "H"; "A" lambda=1; "B" lambda=1;')
    with pytest.raises(DftValidationError) as err:
        validate(d)
    assert any(v.code == "restriction-d" for v in err.value.violations)


def test_cycle_reported_with_path():
    d = parse_dft('toplevel "T"; "T" and "U"; "U" or "T";')
    with pytest.raises(DftValidationError) as err:
        validate(d)
    v = err.value.violations[0]
    assert v.code == "cycle" and "T" in v.message and "U" in v.message


def test_overlapping_spare_modules_rejected():
    text = '''
    toplevel "T";
    "T" and "S1" "S2";
    "S1" spare "G1" "W";
    "S2" spare "G2" "W2";
    "G1" or "A" "B";
    "G2" or "B" "C";
    "A" lambda=1; "B" lambda=1; "C" lambda=1;
    "W" lambda=1; "W2" lambda=1;
    '''
    with pytest.raises(DftValidationError) as err:
        validate(parse_dft(text))
    assert any(v.code == "restriction-e" for v in err.value.violations)


def test_shared_primary_rejected():
    text = '''
    toplevel "T";
    "T" and "S1" "S2";
    "S1" spare "P" "W1";
    "S2" spare "P" "W2";
    "P" lambda=1; "W1" lambda=1; "W2" lambda=1;
    '''
    with pytest.raises(DftValidationError) as err:
        validate(parse_dft(text))
    assert any(v.code == "restriction-f" for v in err.value.violations)


def test_shared_spare_child_is_fine():
    text = '''
    toplevel "T";
    "T" and "S1" "S2";
    "S1" spare "P1" "W";
    "S2" spare "P2" "W";
    "P1" lambda=1; "P2" lambda=1; "W" lambda=1;
    '''
    v = validate(parse_dft(text))
    assert v.top_name == "T"


def test_one_violation_per_restriction():
    text = '''
    toplevel "T";
    "T" 1of2 "A";
    "Q" seq "A" "B";
    "R" and "Q" "B";
    "A" lambda=1; "B" lambda=1;
    '''
    with pytest.raises(DftValidationError) as err:
        validate(parse_dft(text))
    codes = sorted(v.code for v in err.value.violations)
    assert codes == ["restriction-a", "restriction-c"]


def test_multi_dependent_pdep_split_keeps_order():
    d = parse_dft('toplevel "T"; "T" and "B1" "B2" "B3"; '
                  '"G" pdep prob=1/2 "A" "B1" "B2" "B3"; "A" lambda=1; '
                  '"B1" lambda=1; "B2" lambda=1; "B3" lambda=1;')
    v = validate(d)
    pdeps = [n for n in v.nodes if n.kind == Kind.PDEP]
    assert [p.name for p in pdeps] == ["G", "G#2", "G#3"]
    assert [p.children for p in pdeps] == [("A", "B1"), ("A", "B2"),
                                           ("A", "B3")]
    assert all(p.prob.constant_value() == Fraction(1, 2) for p in pdeps)


def test_corpus_validates():
    for entry in CORPUS:
        validate(parse_dft(entry.text))


def test_roundtrip_on_corpus():
    for entry in CORPUS:
        d1 = parse_dft(entry.text)
        d2 = parse_dft(print_dft(d1))
        assert d1 == d2, entry.name


names = st.sampled_from(["A", "B", "C", "D", "E", "F"])
rates = st.fractions(min_value=Fraction(1, 4), max_value=4, max_denominator=8)


@st.composite
def random_descriptions(draw):
    n_bes = draw(st.integers(1, 5))
    bes = ["B%d" % i for i in range(n_bes)]
    lines = []
    gates = []
    for i, b in enumerate(bes):
        dorm = draw(st.one_of(st.none(), rates.filter(lambda r: r <= 1)))
        decl = '"%s" lambda=%s' % (b, draw(rates))
        if dorm is not None:
            decl += " dorm=%s" % dorm
        lines.append(decl + ";")
    avail = list(bes)
    for g in range(draw(st.integers(1, 3))):
        kind = draw(st.sampled_from(["and", "or", "pand", "por"]))
        k = draw(st.integers(1, min(3, len(avail))))
        children = draw(st.permutations(avail))[:k]
        name = "G%d" % g
        if draw(st.booleans()) and len(children) >= 2:
            lines.append('"%s" %dof%d %s;'
                         % (name, draw(st.integers(1, len(children))),
                            len(children),
                            " ".join('"%s"' % c for c in children)))
        else:
            lines.append('"%s" %s %s;'
                         % (name, kind,
                            " ".join('"%s"' % c for c in children)))
        avail.append(name)
    top = avail[-1]
    return "toplevel \"%s\";\n" % top + "\n".join(lines)


@given(random_descriptions())
@settings(max_examples=60)
def test_parse_print_parse_is_parse(text):
    d1 = parse_dft(text)
    assert parse_dft(print_dft(d1)) == d1
