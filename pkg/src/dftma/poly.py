"""Exact sparse multivariate polynomials and rational functions.

Coefficients are `fractions.Fraction`, exponent vectors are tuples aligned
with a fixed tuple of parameter names.  Terms are kept in a dict keyed by
exponent vector; zero coefficients are never stored.  The canonical term
order used for printing and leading-term queries is graded lexicographic.

Rational functions are stored as numerator/denominator pairs and brought to
a canonical form on construction: common monomial factors and the rational
content are cancelled, the denominator's leading coefficient is made
positive, and for single-parameter functions the exact univariate GCD is
divided out.  Multivariate GCD computation is deliberately not attempted;
it affects representation size only, never the value.
"""

from __future__ import annotations

from fractions import Fraction
from math import gcd
from typing import Iterable, Mapping, Union

Exponents = tuple  # tuple[int, ...] aligned with the parameter tuple
Scalar = Union[int, Fraction]


def _grlex(exps: Exponents):
    return (sum(exps), exps)


class Polynomial:
    """Sparse multivariate polynomial with exact rational coefficients."""

    __slots__ = ("params", "terms")

    def __init__(self, params: tuple, terms: dict):
        self.params = params
        self.terms = terms  # Exponents -> Fraction, no zero values

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, value, params: tuple = ()) -> "Polynomial":
        c = Fraction(value)
        if c == 0:
            return cls(params, {})
        return cls(params, {(0,) * len(params): c})

    @classmethod
    def variable(cls, name: str, params: tuple) -> "Polynomial":
        i = params.index(name)
        exps = tuple(1 if j == i else 0 for j in range(len(params)))
        return cls(params, {exps: Fraction(1)})

    @classmethod
    def from_terms(cls, params: tuple, terms: Mapping) -> "Polynomial":
        clean = {tuple(e): Fraction(c) for e, c in terms.items() if c != 0}
        return cls(params, clean)

    # -- predicates ----------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return all(sum(e) == 0 for e in self.terms)

    def constant_value(self) -> Fraction:
        if not self.terms:
            return Fraction(0)
        if not self.is_constant():
            raise ValueError("polynomial is not constant: %s" % self)
        return next(iter(self.terms.values()))

    def total_degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def variables(self) -> set:
        used = set()
        for e in self.terms:
            for i, k in enumerate(e):
                if k:
                    used.add(self.params[i])
        return used

    # -- arithmetic ----------------------------------------------------------

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.params != self.params:
                raise ValueError("parameter lists differ: %r vs %r"
                                 % (self.params, other.params))
            return other
        return Polynomial.constant(other, self.params)

    def __add__(self, other) -> "Polynomial":
        other = self._coerce(other)
        terms = dict(self.terms)
        for e, c in other.terms.items():
            s = terms.get(e, 0) + c
            if s == 0:
                terms.pop(e, None)
            else:
                terms[e] = s
        return Polynomial(self.params, terms)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.params, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other) -> "Polynomial":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Polynomial":
        return self._coerce(other) - self

    def __mul__(self, other) -> "Polynomial":
        other = self._coerce(other)
        out: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                s = out.get(e, 0) + c1 * c2
                if s == 0:
                    out.pop(e, None)
                else:
                    out[e] = s
        return Polynomial(self.params, out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Polynomial":
        if not isinstance(n, int) or n < 0:
            raise ValueError("only non-negative integer powers")
        result = Polynomial.constant(1, self.params)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def evaluate(self, point: Mapping[str, Scalar]):
        """Evaluate at a parameter point; exact if all values are Fractions."""
        vals = [point[p] for p in self.params]
        acc = None
        for e, c in self.terms.items():
            v = c
            for i, k in enumerate(e):
                if k:
                    v = v * vals[i] ** k
            acc = v if acc is None else acc + v
        return Fraction(0) if acc is None else acc

    def derivative(self, name: str) -> "Polynomial":
        i = self.params.index(name)
        out: dict = {}
        for e, c in self.terms.items():
            k = e[i]
            if k == 0:
                continue
            de = e[:i] + (k - 1,) + e[i + 1:]
            s = out.get(de, 0) + c * k
            if s == 0:
                out.pop(de, None)
            else:
                out[de] = s
        return Polynomial(self.params, out)

    # -- comparison / display -----------------------------------------------

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            return self.is_constant() and self.constant_value() == other
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.params == other.params and self.terms == other.terms

    def __hash__(self):
        return hash((self.params, frozenset(self.terms.items())))

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda t: _grlex(t[0]), reverse=True)

    def leading_coefficient(self) -> Fraction:
        if not self.terms:
            return Fraction(0)
        return self.sorted_terms()[0][1]

    def _monomial_str(self, e: Exponents, power_sep: str) -> str:
        parts = []
        for i, k in enumerate(e):
            if k == 0:
                continue
            if power_sep == "^":
                parts.append(self.params[i] if k == 1
                             else "%s^%d" % (self.params[i], k))
            else:  # expand powers as repeated products (Galileo expressions)
                parts.extend([self.params[i]] * k)
        return "*".join(parts)

    def _to_text(self, power_sep: str) -> str:
        if not self.terms:
            return "0"
        chunks = []
        for e, c in self.sorted_terms():
            mono = self._monomial_str(e, power_sep)
            mag = abs(c)
            if mono and mag == 1:
                body = mono
            elif mono:
                body = "%s*%s" % (mag, mono)
            else:
                body = str(mag)
            if not chunks:
                chunks.append(body if c > 0 else "-" + body)
            else:
                chunks.append(("+ " if c > 0 else "- ") + body)
        return " ".join(chunks)

    def __str__(self) -> str:
        return self._to_text("^")

    def to_expr_str(self) -> str:
        """Grammar-safe rendering using only ``+ - *`` and rational literals."""
        return self._to_text("*")

    def __repr__(self) -> str:
        return "Polynomial(%s)" % self


# -- univariate helpers for exact GCD cancellation ----------------------------


def _univar_coeffs(p: Polynomial) -> list:
    deg = max((e[0] for e in p.terms), default=0)
    cs = [Fraction(0)] * (deg + 1)
    for e, c in p.terms.items():
        cs[e[0]] = c
    return cs


def _univar_trim(cs: list) -> list:
    while cs and cs[-1] == 0:
        cs.pop()
    return cs


def _univar_mod(a: list, b: list) -> list:
    a = list(a)
    db, lb = len(b) - 1, b[-1]
    while len(a) - 1 >= db and _univar_trim(a):
        da = len(a) - 1
        if da < db:
            break
        f = a[-1] / lb
        for i in range(db + 1):
            a[da - db + i] -= f * b[i]
        _univar_trim(a)
    return a


def _univar_gcd(a: list, b: list) -> list:
    a, b = _univar_trim(list(a)), _univar_trim(list(b))
    while b:
        a, b = b, _univar_trim(_univar_mod(a, b))
    if not a:
        return [Fraction(1)]
    lead = a[-1]
    return [c / lead for c in a]


def _univar_div_exact(a: list, b: list) -> list:
    """Exact division a / b for univariate coefficient lists."""
    a = _univar_trim(list(a))
    db, lb = len(b) - 1, b[-1]
    q = [Fraction(0)] * max(len(a) - db, 1)
    while a and len(a) - 1 >= db:
        da = len(a) - 1
        f = a[-1] / lb
        q[da - db] = f
        for i in range(db + 1):
            a[da - db + i] -= f * b[i]
        _univar_trim(a)
    if a:
        raise ArithmeticError("inexact univariate division")
    return q


def _from_univar(cs: Iterable, params: tuple) -> Polynomial:
    return Polynomial(params, {(i,): Fraction(c)
                               for i, c in enumerate(cs) if c != 0})


class DegenerateDenominator(ArithmeticError):
    """Raised when an elimination step would divide by the zero polynomial."""


class RationalFunction:
    """Quotient of two polynomials over the same parameter tuple."""

    __slots__ = ("num", "den")

    def __init__(self, num: Polynomial, den: Polynomial | None = None):
        if den is None:
            den = Polynomial.constant(1, num.params)
        if num.params != den.params:
            raise ValueError("parameter lists differ")
        if den.is_zero():
            raise DegenerateDenominator("denominator is identically zero")
        self.num, self.den = self._normalise(num, den)

    # -- canonical form ------------------------------------------------------

    @staticmethod
    def _normalise(num: Polynomial, den: Polynomial):
        params = num.params
        if num.is_zero():
            return num, Polynomial.constant(1, params)
        # common monomial factor
        nvars = len(params)
        if nvars:
            mins = [min(min(e[i] for e in num.terms), min(e[i] for e in den.terms))
                    for i in range(nvars)]
            if any(mins):
                shift = tuple(mins)
                num = Polynomial(params, {
                    tuple(a - b for a, b in zip(e, shift)): c
                    for e, c in num.terms.items()})
                den = Polynomial(params, {
                    tuple(a - b for a, b in zip(e, shift)): c
                    for e, c in den.terms.items()})
        # exact univariate GCD
        if nvars == 1 and not den.is_constant() and not num.is_constant():
            g = _univar_gcd(_univar_coeffs(num), _univar_coeffs(den))
            if len(g) > 1:
                num = _from_univar(_univar_div_exact(_univar_coeffs(num), g), params)
                den = _from_univar(_univar_div_exact(_univar_coeffs(den), g), params)
        # rational content: integer coefficients, coprime overall
        denoms = [c.denominator for c in num.terms.values()]
        denoms += [c.denominator for c in den.terms.values()]
        lcm = 1
        for d in denoms:
            lcm = lcm * d // gcd(lcm, d)
        nums = [abs(c.numerator) * (lcm // c.denominator)
                for c in list(num.terms.values()) + list(den.terms.values())]
        g = 0
        for v in nums:
            g = gcd(g, v)
        scale = Fraction(lcm, g if g else 1)
        if den.leading_coefficient() < 0:
            scale = -scale
        if scale != 1:
            num = Polynomial(params, {e: c * scale for e, c in num.terms.items()})
            den = Polynomial(params, {e: c * scale for e, c in den.terms.items()})
        return num, den

    # -- constructors ---------------------------------------------------------

    @classmethod
    def constant(cls, value, params: tuple = ()) -> "RationalFunction":
        return cls(Polynomial.constant(value, params))

    @classmethod
    def from_poly(cls, p: Polynomial) -> "RationalFunction":
        return cls(p)

    # -- predicates -----------------------------------------------------------

    @property
    def params(self) -> tuple:
        return self.num.params

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def is_constant(self) -> bool:
        return self.num.is_constant() and self.den.is_constant()

    def constant_value(self) -> Fraction:
        return self.num.constant_value() / self.den.constant_value()

    # -- arithmetic -----------------------------------------------------------

    def _coerce(self, other) -> "RationalFunction":
        if isinstance(other, RationalFunction):
            return other
        if isinstance(other, Polynomial):
            return RationalFunction(other)
        return RationalFunction(Polynomial.constant(other, self.params))

    def __add__(self, other) -> "RationalFunction":
        o = self._coerce(other)
        return RationalFunction(self.num * o.den + o.num * self.den,
                                self.den * o.den)

    __radd__ = __add__

    def __neg__(self) -> "RationalFunction":
        return RationalFunction(-self.num, self.den)

    def __sub__(self, other) -> "RationalFunction":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "RationalFunction":
        return self._coerce(other) - self

    def __mul__(self, other) -> "RationalFunction":
        o = self._coerce(other)
        return RationalFunction(self.num * o.num, self.den * o.den)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "RationalFunction":
        o = self._coerce(other)
        if o.num.is_zero():
            raise DegenerateDenominator("division by the zero function")
        return RationalFunction(self.num * o.den, self.den * o.num)

    def __rtruediv__(self, other) -> "RationalFunction":
        return self._coerce(other) / self

    def evaluate(self, point: Mapping[str, Scalar]) -> Fraction:
        d = self.den.evaluate(point)
        if d == 0:
            raise ZeroDivisionError("denominator vanishes at %r" % (point,))
        return self.num.evaluate(point) / d

    def derivative(self, name: str) -> "RationalFunction":
        n, d = self.num, self.den
        return RationalFunction(n.derivative(name) * d - n * d.derivative(name),
                                d * d)

    # -- comparison / display ---------------------------------------------------

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction, Polynomial)):
            other = self._coerce(other)
        if not isinstance(other, RationalFunction):
            return NotImplemented
        return (self.num * other.den) == (other.num * self.den)

    __hash__ = None  # type: ignore[assignment]

    def __str__(self) -> str:
        if self.den.is_constant() and self.den.constant_value() == 1:
            return str(self.num)
        return "(%s)/(%s)" % (self.num, self.den)

    def __repr__(self) -> str:
        return "RationalFunction(%s)" % self
