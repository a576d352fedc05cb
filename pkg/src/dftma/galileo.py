"""Galileo-dialect fault tree parser, validator and canonical printer.

Grammar::

    file  = decl*
    decl  = "param" IDENT ";"
          | "toplevel" NAME ";"
          | NAME KIND NAME+ ";"                      (gate)
          | NAME "lambda" "=" EXPR ["dorm" "=" EXPR] ";"   (basic event)
    KIND  = "and" | "or" | <k>of<n> | "pand" | "por" | "spare" | "seq"
          | "fdep" | "pdep" "prob" "=" EXPR
    NAME  = double-quoted string
    EXPR  = polynomial over declared params; operators + - *, parentheses,
            decimal or rational (a/b) coefficients

For ``spare`` the first child is the primary, remaining children are spares
in left-to-right claim order.  For ``fdep``/``pdep`` the first child is the
trigger, remaining children are dependent basic events.  ``fdep`` is
normalised to ``pdep`` with probability one.  A basic event without ``dorm``
defaults to dormancy one (hot); ``dorm=0`` makes it cold in passive modules.

Validation enforces acyclicity plus the structural restrictions:
(a) a voting gate declared KofN has exactly N children and K <= N,
(b) the top event is a gate or basic event (not a dependency/restriction),
(c) dependencies and restrictions have no parents,
(d) dependent events are basic events,
(e) spare modules are pairwise disjoint and independent sub-DFTs,
(f) primary spare modules are not shared between spare gates.
Multi-dependent dependencies are split into single-dependent ones, keeping
the declared left-to-right order.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from .poly import Polynomial


class Kind(enum.IntEnum):
    BE = 0
    AND = 1
    OR = 2
    VOT = 3
    PAND = 4
    POR = 5
    SPARE = 6
    SEQ = 7
    PDEP = 8


GATE_KEYWORDS = {
    "and": Kind.AND,
    "or": Kind.OR,
    "pand": Kind.PAND,
    "por": Kind.POR,
    "spare": Kind.SPARE,
    "seq": Kind.SEQ,
}

_KOFN = re.compile(r"^(\d+)of(\d+)$")

# kinds that propagate failures to parents (SEQ restricts, PDEP forwards)
PROPAGATING = frozenset({Kind.BE, Kind.AND, Kind.OR, Kind.VOT,
                         Kind.PAND, Kind.POR, Kind.SPARE})
STATIC_GATES = frozenset({Kind.AND, Kind.OR, Kind.VOT})


class DftError(Exception):
    """Base class for fault tree input errors."""


class DftParseError(DftError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__("line %d, col %d: %s" % (line, col, message))
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Violation:
    code: str          # e.g. "restriction-a", "cycle", "spare-overlap"
    message: str
    nodes: tuple = ()


class DftValidationError(DftError):
    def __init__(self, violations: list):
        self.violations = violations
        super().__init__("; ".join(v.message for v in violations))


@dataclass(frozen=True)
class NodeDecl:
    name: str
    kind: Kind
    children: tuple = ()
    k: int | None = None            # VOT threshold
    declared_n: int | None = None   # VOT declared child count
    lam: Polynomial | None = None   # BE active failure rate
    dorm: Polynomial | None = None  # BE dormancy factor (passive = dorm*lam)
    prob: Polynomial | None = None  # PDEP forwarding probability


@dataclass(frozen=True)
class DftDescription:
    top_name: str
    nodes: tuple          # NodeDecl, declaration order preserved
    params: tuple         # declared parameter names, declaration order

    def by_name(self) -> dict:
        return {n.name: n for n in self.nodes}


@dataclass(frozen=True)
class ValidatedDft:
    """Normalised, restriction-checked description."""
    description: DftDescription

    @property
    def top_name(self) -> str:
        return self.description.top_name

    @property
    def nodes(self) -> tuple:
        return self.description.nodes

    @property
    def params(self) -> tuple:
        return self.description.params


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_SINGLE = {";": "SEMI", "=": "EQ", "(": "LP", ")": "RP",
           "+": "PLUS", "-": "MINUS", "*": "STAR", "/": "SLASH"}

_NUMBER = re.compile(r"\d+(\.\d+)?([eE][+-]?\d+)?")


@dataclass(frozen=True)
class _Tok:
    type: str
    value: object
    line: int
    col: int


def _lex(text: str) -> list:
    toks = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "/" and i + 1 < n and text[i + 1] == "/":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch == '"':
            j = text.find('"', i + 1)
            if j < 0 or "\n" in text[i + 1:j]:
                raise DftParseError("unterminated name string", line, col)
            toks.append(_Tok("NAME", text[i + 1:j], line, col))
            col += j - i + 1
            i = j + 1
            continue
        if ch in _SINGLE:
            toks.append(_Tok(_SINGLE[ch], ch, line, col))
            i += 1
            col += 1
            continue
        if ch.isdigit():
            word_end = i
            while word_end < n and (text[word_end].isalnum() or text[word_end] in "._"):
                word_end += 1
            word = text[i:word_end]
            if _KOFN.match(word):
                toks.append(_Tok("IDENT", word, line, col))
                col += word_end - i
                i = word_end
                continue
            m = _NUMBER.match(text, i)
            if m is None or (m.end() < n and
                             (text[m.end()].isalnum() or text[m.end()] in "._")):
                raise DftParseError("malformed number %r" % word, line, col)
            try:
                value = Fraction(m.group(0))
            except ValueError:
                raise DftParseError("malformed number %r" % m.group(0), line, col)
            toks.append(_Tok("NUMBER", value, line, col))
            col += m.end() - i
            i = m.end()
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(_Tok("IDENT", text[i:j], line, col))
            col += j - i
            i = j
            continue
        raise DftParseError("unexpected character %r" % ch, line, col)
    toks.append(_Tok("EOF", None, line, col))
    return toks


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, toks: list, params: tuple):
        self.toks = toks
        self.pos = 0
        self.params = params

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def next(self) -> _Tok:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, type_: str) -> _Tok:
        t = self.next()
        if t.type != type_:
            raise DftParseError("expected %s, found %r" % (type_, t.value),
                                t.line, t.col)
        return t

    def expect_kw(self, word: str) -> _Tok:
        t = self.next()
        if t.type != "IDENT" or t.value != word:
            raise DftParseError("expected %r, found %r" % (word, t.value),
                                t.line, t.col)
        return t

    # expression grammar: expr := term ((+|-) term)*; term := factor (* factor)*
    def expr(self) -> Polynomial:
        p = self.term()
        while self.peek().type in ("PLUS", "MINUS"):
            op = self.next().type
            q = self.term()
            p = p + q if op == "PLUS" else p - q
        return p

    def term(self) -> Polynomial:
        p = self.factor()
        while self.peek().type == "STAR":
            self.next()
            p = p * self.factor()
        return p

    def factor(self) -> Polynomial:
        t = self.peek()
        if t.type == "MINUS":
            self.next()
            return -self.factor()
        if t.type == "NUMBER":
            self.next()
            value = t.value
            if self.peek().type == "SLASH":
                self.next()
                d = self.expect("NUMBER")
                if d.value == 0:
                    raise DftParseError("zero denominator in rational literal",
                                        d.line, d.col)
                value = value / d.value
            return Polynomial.constant(value, self.params)
        if t.type == "IDENT":
            self.next()
            if t.value not in self.params:
                raise DftParseError("unknown parameter %r" % t.value,
                                    t.line, t.col)
            return Polynomial.variable(t.value, self.params)
        if t.type == "LP":
            self.next()
            p = self.expr()
            self.expect("RP")
            return p
        raise DftParseError("expected expression, found %r" % t.value,
                            t.line, t.col)


def parse_expr(text: str, params: Iterable) -> Polynomial:
    """Parse a standalone polynomial expression over the given parameters."""
    toks = _lex(text)
    p = _Parser(toks, tuple(params))
    poly = p.expr()
    p.expect("EOF")
    return poly


def _scan_params(toks: list) -> tuple:
    """Collect parameter declarations so they may appear anywhere in the file."""
    params: list = []
    i = 0
    while toks[i].type != "EOF":
        t = toks[i]
        if (t.type == "IDENT" and t.value == "param"
                and toks[i + 1].type == "IDENT"):
            name = toks[i + 1].value
            if name in params:
                raise DftParseError("duplicate parameter %r" % name,
                                    toks[i + 1].line, toks[i + 1].col)
            params.append(name)
            i += 2
            continue
        i += 1
    return tuple(params)


def parse_dft(text: str) -> DftDescription:
    """Parse Galileo-dialect text into a declaration-ordered description."""
    toks = _lex(text)
    params = _scan_params(toks)
    p = _Parser(toks, params)
    nodes: list = []
    names: dict = {}
    top_name = None
    one = Polynomial.constant(1, params)
    while p.peek().type != "EOF":
        t = p.peek()
        if t.type == "IDENT" and t.value == "param":
            p.next()
            p.expect("IDENT")
            p.expect("SEMI")
            continue
        if t.type == "IDENT" and t.value == "toplevel":
            p.next()
            name = p.expect("NAME")
            if top_name is not None:
                raise DftParseError("duplicate toplevel declaration",
                                    name.line, name.col)
            top_name = name.value
            p.expect("SEMI")
            continue
        if t.type != "NAME":
            raise DftParseError("expected declaration, found %r" % t.value,
                                t.line, t.col)
        name_tok = p.next()
        name = name_tok.value
        if name in names:
            raise DftParseError("duplicate name %r" % name,
                                name_tok.line, name_tok.col)
        kw = p.expect("IDENT")
        decl = None
        if kw.value == "lambda":
            p.expect("EQ")
            lam = p.expr()
            dorm = one
            if p.peek().type == "IDENT" and p.peek().value == "dorm":
                p.next()
                p.expect("EQ")
                dorm = p.expr()
            decl = NodeDecl(name, Kind.BE, lam=lam, dorm=dorm)
        else:
            kofn = _KOFN.match(kw.value)
            if kw.value in GATE_KEYWORDS:
                kind, k, declared_n, prob = GATE_KEYWORDS[kw.value], None, None, None
            elif kofn:
                kind = Kind.VOT
                k, declared_n, prob = int(kofn.group(1)), int(kofn.group(2)), None
                if k < 1:
                    raise DftParseError("voting threshold must be positive",
                                        kw.line, kw.col)
            elif kw.value == "fdep":
                kind, k, declared_n, prob = Kind.PDEP, None, None, one
            elif kw.value == "pdep":
                p.expect_kw("prob")
                p.expect("EQ")
                kind, k, declared_n, prob = Kind.PDEP, None, None, p.expr()
            else:
                raise DftParseError("unknown gate kind %r" % kw.value,
                                    kw.line, kw.col)
            children = []
            while p.peek().type == "NAME":
                children.append(p.next().value)
            if not children:
                raise DftParseError("gate %r needs at least one child" % name,
                                    kw.line, kw.col)
            decl = NodeDecl(name, kind, tuple(children), k=k,
                            declared_n=declared_n, prob=prob)
        p.expect("SEMI")
        nodes.append(decl)
        names[name] = decl
    if top_name is None:
        raise DftParseError("missing toplevel declaration", 1, 1)
    if top_name not in names:
        raise DftParseError("toplevel %r is not declared" % top_name, 1, 1)
    for decl in nodes:
        for c in decl.children:
            if c not in names:
                raise DftParseError(
                    "unknown reference %r in %r" % (c, decl.name), 1, 1)
    return DftDescription(top_name, tuple(nodes), params)


# ---------------------------------------------------------------------------
# Canonical printer
# ---------------------------------------------------------------------------

def print_dft(d: DftDescription) -> str:
    out = []
    for p in d.params:
        out.append("param %s;" % p)
    out.append('toplevel "%s";' % d.top_name)
    one = Polynomial.constant(1, d.params)
    for n in d.nodes:
        if n.kind == Kind.BE:
            line = '"%s" lambda=%s' % (n.name, n.lam.to_expr_str())
            if n.dorm != one:
                line += " dorm=%s" % n.dorm.to_expr_str()
            out.append(line + ";")
            continue
        if n.kind == Kind.VOT:
            kw = "%dof%d" % (n.k, n.declared_n if n.declared_n is not None
                             else len(n.children))
        elif n.kind == Kind.PDEP:
            kw = "pdep prob=%s" % n.prob.to_expr_str()
        else:
            kw = n.kind.name.lower()
        out.append('"%s" %s %s;' % (n.name, kw,
                                    " ".join('"%s"' % c for c in n.children)))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def spare_modules(decls: dict) -> dict:
    """Spare modules keyed by representative name.

    A representative is any child of a SPARE; its module is the child-edge
    closure that stops at (but includes) nested SPAREs.
    """
    reps = []
    for d in decls.values():
        if d.kind == Kind.SPARE:
            for c in d.children:
                if c not in reps:
                    reps.append(c)
    modules = {}
    for rep in reps:
        seen = {rep}
        stack = [rep]
        while stack:
            cur = decls[stack.pop()]
            if cur.kind == Kind.SPARE:
                continue  # spares are module leaves; their children form new modules
            for c in cur.children:
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        modules[rep] = frozenset(seen)
    return modules


def _find_cycle(decls: dict) -> list | None:
    WHITE, GREY, BLACK = 0, 1, 2
    colour = {n: WHITE for n in decls}
    stack_path: list = []

    def visit(n: str):
        colour[n] = GREY
        stack_path.append(n)
        for c in decls[n].children:
            if colour[c] == GREY:
                return stack_path[stack_path.index(c):] + [c]
            if colour[c] == WHITE:
                cyc = visit(c)
                if cyc:
                    return cyc
        stack_path.pop()
        colour[n] = BLACK
        return None

    for n in decls:
        if colour[n] == WHITE:
            cyc = visit(n)
            if cyc:
                return cyc
    return None


def validate(d: DftDescription) -> ValidatedDft:
    """Check the structural restrictions and normalise the description."""
    decls = d.by_name()
    violations: list = []

    cyc = _find_cycle(decls)
    if cyc:
        violations.append(Violation(
            "cycle", "cycle detected: %s" % " -> ".join(cyc), tuple(cyc)))

    parents: dict = {n: [] for n in decls}
    for decl in d.nodes:
        for c in decl.children:
            if c in parents:
                parents[c].append(decl.name)

    for decl in d.nodes:
        if decl.kind == Kind.VOT:
            if decl.declared_n != len(decl.children) or decl.k > len(decl.children):
                violations.append(Violation(
                    "restriction-a",
                    "voting gate %r declared %dof%d but has %d children"
                    % (decl.name, decl.k, decl.declared_n, len(decl.children)),
                    (decl.name,)))
        if decl.kind == Kind.PDEP and len(decl.children) < 2:
            violations.append(Violation(
                "pdep-arity",
                "dependency %r needs a trigger and at least one dependent event"
                % decl.name, (decl.name,)))

    top = decls.get(d.top_name)
    if top is not None and top.kind in (Kind.PDEP, Kind.SEQ):
        violations.append(Violation(
            "restriction-b",
            "top event %r must be a gate or a basic event" % d.top_name,
            (d.top_name,)))

    for decl in d.nodes:
        if decl.kind in (Kind.PDEP, Kind.SEQ) and parents[decl.name]:
            violations.append(Violation(
                "restriction-c",
                "%s %r may not have parents (found %s)"
                % ("dependency" if decl.kind == Kind.PDEP else "restriction",
                   decl.name, ", ".join(sorted(parents[decl.name]))),
                (decl.name,)))

    for decl in d.nodes:
        if decl.kind == Kind.PDEP:
            for dep in decl.children[1:]:
                if decls[dep].kind != Kind.BE:
                    violations.append(Violation(
                        "restriction-d",
                        "dependent event %r of %r is not a basic event"
                        % (dep, decl.name), (decl.name, dep)))

    if not cyc:
        modules = spare_modules(decls)
        reps = list(modules)
        for i, r1 in enumerate(reps):
            for r2 in reps[i + 1:]:
                shared = modules[r1] & modules[r2]
                if shared:
                    violations.append(Violation(
                        "restriction-e",
                        "spare modules of %r and %r overlap on %s"
                        % (r1, r2, ", ".join(sorted(shared))),
                        (r1, r2) + tuple(sorted(shared))))
        spare_names = {n.name for n in d.nodes if n.kind == Kind.SPARE}
        for rep, mod in modules.items():
            bad_parents = [p for p in parents[rep]
                           if p not in spare_names
                           and decls[p].kind in PROPAGATING]
            if bad_parents:
                violations.append(Violation(
                    "restriction-e",
                    "spare module representative %r has non-spare parents %s"
                    % (rep, ", ".join(sorted(bad_parents))), (rep,)))
            for n in mod:
                if n == rep:
                    continue
                outside = [p for p in parents[n]
                           if p not in mod and decls[p].kind in PROPAGATING]
                if outside:
                    violations.append(Violation(
                        "restriction-e",
                        "spare module of %r is not independent: %r also feeds %s"
                        % (rep, n, ", ".join(sorted(outside))),
                        (rep, n)))
        primaries: dict = {}
        for decl in d.nodes:
            if decl.kind == Kind.SPARE:
                prim = decl.children[0]
                primaries.setdefault(prim, []).append(decl.name)
        for prim, users in primaries.items():
            claimers = sorted(set(p for p in parents[prim] if p in spare_names))
            if len(users) > 1 or len(claimers) > 1:
                violations.append(Violation(
                    "restriction-f",
                    "primary spare module %r is shared between %s"
                    % (prim, ", ".join(claimers)), (prim,) + tuple(claimers)))

    for decl in d.nodes:
        if decl.kind == Kind.BE and decl.dorm.is_constant():
            v = decl.dorm.constant_value()
            if v < 0 or v > 1:
                violations.append(Violation(
                    "dormancy-range",
                    "dormancy of %r must lie in [0,1], found %s"
                    % (decl.name, v), (decl.name,)))

    if violations:
        raise DftValidationError(violations)

    return ValidatedDft(_split_dependencies(d))


def _split_dependencies(d: DftDescription) -> DftDescription:
    """Rewrite multi-dependent PDEPs into single-dependent ones."""
    out = []
    for decl in d.nodes:
        if decl.kind == Kind.PDEP and len(decl.children) > 2:
            trigger = decl.children[0]
            for i, dep in enumerate(decl.children[1:]):
                name = decl.name if i == 0 else "%s#%d" % (decl.name, i + 1)
                out.append(NodeDecl(name, Kind.PDEP, (trigger, dep),
                                    prob=decl.prob))
        else:
            out.append(decl)
    return DftDescription(d.top_name, tuple(out), d.params)
