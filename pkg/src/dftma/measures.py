"""Measure specifications, the optimisation compatibility matrix, and
Boolean event formulas over node statuses."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from .state_space import OP, F


class MeasureKind(enum.Enum):
    RELIABILITY = "reliability"
    PROB_FAIL = "probfail"
    MTTF = "mttf"
    VTTF = "vttf"
    EXPECTED_FAULTS = "expectedfaults"
    FUSSELL_VESELY = "fv"
    CRITICALITY = "criticality"


@dataclass(frozen=True)
class MeasureSpec:
    kind: MeasureKind
    t: float | None = None          # reliability horizon
    be: str | None = None           # tracked event for FV / criticality
    conditional: bool = False
    event: str | None = None        # Boolean formula; default "failed(top)"

    def describe(self) -> str:
        s = self.kind.value
        if self.kind == MeasureKind.RELIABILITY:
            s += "=%g" % self.t
        if self.be:
            s += "=%s" % self.be
        if self.conditional:
            s += " (conditional)"
        return s


# Compatibility matrix: which optimisations and variants preserve which
# measure.  sym is "full", "light" (identity-free parts only) for the
# importance factors.
_ROW = ("cond", "par", "mod", "dc", "sym")
COMPATIBILITY = {
    MeasureKind.RELIABILITY:     dict(cond=False, par=False, mod=True,  dc=True,  sym="full"),
    MeasureKind.PROB_FAIL:       dict(cond=True,  par=True,  mod=True,  dc=True,  sym="full"),
    MeasureKind.MTTF:            dict(cond=True,  par=True,  mod=False, dc=True,  sym="full"),
    MeasureKind.VTTF:            dict(cond=True,  par=True,  mod=False, dc=True,  sym="full"),
    MeasureKind.EXPECTED_FAULTS: dict(cond=True,  par=True,  mod=False, dc=False, sym="full"),
    MeasureKind.FUSSELL_VESELY:  dict(cond=True,  par=True,  mod=False, dc=False, sym="light"),
    MeasureKind.CRITICALITY:     dict(cond=True,  par=True,  mod=False, dc=True,  sym="light"),
}

# Partial-order reduction truncates dependency cascades once the measure is
# settled, which preserves the failure-time law but not per-path fault
# counts or statuses at absorption.
POR_SAFE = frozenset({MeasureKind.RELIABILITY, MeasureKind.PROB_FAIL,
                      MeasureKind.MTTF, MeasureKind.VTTF})


@dataclass(frozen=True)
class CompatViolation:
    measure: str
    option: str
    message: str


class CompatibilityError(Exception):
    def __init__(self, violations: list):
        self.violations = violations
        super().__init__("; ".join(v.message for v in violations))


@dataclass(frozen=True)
class OptimisationFlags:
    symred: bool = True
    dc: bool = True
    por: bool = True
    modularisation: bool = False


def check_compatibility(spec: MeasureSpec, opts: OptimisationFlags,
                        parametric: bool = False) -> list:
    """Violations of the measure/optimisation compatibility matrix; an empty
    list means the combination is supported (possibly in light form)."""
    row = COMPATIBILITY[spec.kind]
    name = spec.kind.value
    out = []
    if spec.conditional and not row["cond"]:
        out.append(CompatViolation(
            name, "conditional",
            "measure %s does not support conditioning" % name))
    if parametric and not row["par"]:
        out.append(CompatViolation(
            name, "parametric",
            "measure %s does not support parameter synthesis" % name))
    if opts.modularisation and not row["mod"]:
        out.append(CompatViolation(
            name, "modularisation",
            "measure %s does not support modularisation" % name))
    if opts.dc and not row["dc"]:
        out.append(CompatViolation(
            name, "dc",
            "measure %s does not support don't-care propagation" % name))
    return out


def symmetry_mode(spec: MeasureSpec) -> str:
    return COMPATIBILITY[spec.kind]["sym"]


# ---------------------------------------------------------------------------
# Event formulas: Boolean combinations of failed(NAME) / operational(NAME)
# ---------------------------------------------------------------------------

@dataclass
class EventFormula:
    source: str
    atoms: tuple          # referenced node names
    _eval: object = field(repr=False, default=None)

    def compile(self, model):
        """Bind node names to ids; returns a predicate over status bytes."""
        ids = {}
        for name in self.atoms:
            if name not in model.index:
                raise ValueError("event references unknown node %r" % name)
            ids[name] = model.index[name]
        ast = self._eval

        def run(node, status):
            op = node[0]
            if op == "failed":
                return status[ids[node[1]]] == F
            if op == "operational":
                return status[ids[node[1]]] == OP
            if op == "not":
                return not run(node[1], status)
            if op == "and":
                return run(node[1], status) and run(node[2], status)
            return run(node[1], status) or run(node[2], status)

        return lambda status: run(ast, status)


_EVENT_TOKEN = re.compile(r'\s*(failed|operational|\(|\)|&|\||!|"[^"]*"|\w+)')


def parse_event(text: str) -> EventFormula:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _EVENT_TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise ValueError("bad event formula near %r" % text[pos:])
            break
        tokens.append(m.group(1))
        pos = m.end()
    tokens.append(None)
    idx = [0]
    atoms: list = []

    def peek():
        return tokens[idx[0]]

    def take(expect=None):
        t = tokens[idx[0]]
        if expect is not None and t != expect:
            raise ValueError("expected %r in event formula, found %r"
                             % (expect, t))
        idx[0] += 1
        return t

    def atom():
        t = take()
        if t == "!":
            return ("not", atom())
        if t == "(":
            e = disj()
            take(")")
            return e
        if t in ("failed", "operational"):
            take("(")
            name = take()
            if name is None:
                raise ValueError("unterminated event atom")
            if name.startswith('"'):
                name = name[1:-1]
            take(")")
            atoms.append(name)
            return (t, name)
        raise ValueError("unexpected token %r in event formula" % t)

    def conj():
        e = atom()
        while peek() == "&":
            take("&")
            e = ("and", e, atom())
        return e

    def disj():
        e = conj()
        while peek() == "|":
            take("|")
            e = ("or", e, conj())
        return e

    ast = disj()
    if peek() is not None:
        raise ValueError("trailing input in event formula: %r" % peek())
    return EventFormula(text, tuple(atoms), ast)
