"""Exact algebra of exponential-trigonometric polynomials.

A :class:`TermSum` is a finite sum of terms ``c * t**k * exp(lam*t) * trig(omega*t)``
with ``trig`` one of ``none``, ``sin``, ``cos``.  The class is closed under
addition, multiplication (product-to-sum rewriting) and definite integration,
which is all the averaging integrals need.

Rates and frequencies that are within 1e-14 of an integer are snapped to it,
so the integer rates that occur in practice compare exactly; other reals are
merged when they agree to 1e-14.
"""

from __future__ import annotations

import cmath
import contextlib
import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

NONE = "none"
SIN = "sin"
COS = "cos"

KEY_TOL = 1e-14
_TRIG_ORDER = {NONE: 0, COS: 1, SIN: 2}


def _snap(x: float) -> float:
    r = round(x)
    if abs(x - r) <= KEY_TOL:
        return float(r) + 0.0  # drops -0.0
    return float(x)


@dataclass(frozen=True)
class ExpTrigTerm:
    c: float
    k: int = 0
    lam: float = 0.0
    trig: str = NONE
    omega: float = 0.0

    def __post_init__(self):
        if self.k < 0 or int(self.k) != self.k:
            raise ValueError("power of t must be a non-negative integer")
        if self.trig not in _TRIG_ORDER:
            raise ValueError(f"unknown trig kind {self.trig!r}")
        if self.trig == NONE and self.omega != 0.0:
            raise ValueError("omega must be 0 when trig is none")

    @property
    def key(self) -> tuple:
        return (self.k, self.lam, self.trig, self.omega)

    def __call__(self, t: float) -> float:
        v = self.c * t**self.k * math.exp(self.lam * t)
        if self.trig == COS:
            v *= math.cos(self.omega * t)
        elif self.trig == SIN:
            v *= math.sin(self.omega * t)
        return v


def _canonical_parts(c: float, k: int, lam: float, trig: str, omega: float):
    """Yield (key, coefficient) with omega >= 0 and trivial trig removed."""
    lam = _snap(lam)
    omega = _snap(omega)
    if trig != NONE and omega < 0.0:
        omega = -omega
        if trig == SIN:
            c = -c
    if trig != NONE and omega == 0.0:
        if trig == SIN:
            return
        trig = NONE
    if trig == NONE:
        omega = 0.0
    yield (int(k), lam, trig, omega), c


class TermSum:
    """Canonical finite sum of :class:`ExpTrigTerm`.  Immutable."""

    __slots__ = ("_items",)

    def __init__(self, terms: Iterable[ExpTrigTerm] = ()):
        acc: dict[tuple, float] = {}
        for term in terms:
            for key, c in _canonical_parts(term.c, term.k, term.lam, term.trig, term.omega):
                _accumulate(acc, key, c)
        self._items = _freeze(acc)

    @classmethod
    def _from_items(cls, acc: dict) -> "TermSum":
        out = cls.__new__(cls)
        out._items = _freeze(acc)
        return out

    # constructors -----------------------------------------------------------
    @classmethod
    def constant(cls, c: float) -> "TermSum":
        return cls([ExpTrigTerm(c)])

    @classmethod
    def monomial(cls, c: float = 1.0, k: int = 1) -> "TermSum":
        return cls([ExpTrigTerm(c, k)])

    @classmethod
    def exp(cls, lam: float, c: float = 1.0) -> "TermSum":
        return cls([ExpTrigTerm(c, 0, lam)])

    @classmethod
    def cos(cls, omega: float = 1.0, c: float = 1.0) -> "TermSum":
        return cls([ExpTrigTerm(c, 0, 0.0, COS, omega)])

    @classmethod
    def sin(cls, omega: float = 1.0, c: float = 1.0) -> "TermSum":
        return cls([ExpTrigTerm(c, 0, 0.0, SIN, omega)])

    # container protocol ------------------------------------------------------
    @property
    def terms(self) -> tuple[ExpTrigTerm, ...]:
        return tuple(ExpTrigTerm(c, k, lam, trig, omega) for (k, lam, trig, omega), c in self._items)

    def __iter__(self) -> Iterator[ExpTrigTerm]:
        return iter(self.terms)

    def __len__(self) -> int:
        return len(self._items)

    def __bool__(self) -> bool:
        return bool(self._items)

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, float)):
            other = TermSum.constant(float(other))
        if not isinstance(other, TermSum):
            return NotImplemented
        return self._items == other._items

    def __hash__(self) -> int:
        return hash(self._items)

    def __repr__(self) -> str:
        if not self._items:
            return "TermSum(0)"
        parts = []
        for (k, lam, trig, omega), c in self._items:
            s = f"{c:g}"
            if k:
                s += f"*t^{k}"
            if lam:
                s += f"*exp({lam:g}t)"
            if trig != NONE:
                s += f"*{trig}({omega:g}t)"
            parts.append(s)
        return "TermSum(" + " + ".join(parts) + ")"

    # algebra ------------------------------------------------------------------
    def __add__(self, other) -> "TermSum":
        return add(self, _coerce(other))

    __radd__ = __add__

    def __neg__(self) -> "TermSum":
        return self.scale(-1.0)

    def __sub__(self, other) -> "TermSum":
        return add(self, -_coerce(other))

    def __rsub__(self, other) -> "TermSum":
        return add(_coerce(other), -self)

    def __mul__(self, other) -> "TermSum":
        if isinstance(other, (int, float)):
            return self.scale(float(other))
        return multiply(self, other)

    def __rmul__(self, other) -> "TermSum":
        return self.__mul__(other)

    def scale(self, factor: float) -> "TermSum":
        acc: dict[tuple, float] = {}
        for key, c in self._items:
            _accumulate(acc, key, c * factor)
        return TermSum._from_items(acc)

    def __call__(self, t: float) -> float:
        return math.fsum(term(t) for term in self.terms)

    def values(self, t) -> np.ndarray:
        """Vectorized evaluation on an array of times."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for term in self.terms:
            v = term.c * t**term.k * np.exp(term.lam * t)
            if term.trig == COS:
                v = v * np.cos(term.omega * t)
            elif term.trig == SIN:
                v = v * np.sin(term.omega * t)
            out += v
        return out

    def antiderivative(self, t: float) -> float:
        return math.fsum(_term_antiderivative(term, t) for term in self.terms)

    def integrate(self, T: float) -> float:
        return definite_integral(self, T)


def _coerce(x) -> TermSum:
    if isinstance(x, TermSum):
        return x
    if isinstance(x, (int, float)):
        return TermSum.constant(float(x))
    raise TypeError(f"cannot combine TermSum with {type(x).__name__}")


def _find_key(acc: dict, key: tuple):
    if key in acc:
        return key
    k, lam, trig, omega = key
    for other in acc:
        if (
            other[0] == k
            and other[2] == trig
            and abs(other[1] - lam) <= KEY_TOL
            and abs(other[3] - omega) <= KEY_TOL
        ):
            return other
    return key


def _accumulate(acc: dict, key: tuple, c: float) -> None:
    key = _find_key(acc, key)
    acc[key] = acc.get(key, 0.0) + c


def _freeze(acc: dict) -> tuple:
    items = [(key, c) for key, c in acc.items() if c != 0.0]
    items.sort(key=lambda kc: (kc[0][0], kc[0][1], _TRIG_ORDER[kc[0][2]], kc[0][3]))
    return tuple(items)


def add(a: TermSum, b: TermSum) -> TermSum:
    acc = dict(a._items)
    for key, c in b._items:
        _accumulate(acc, key, c)
    return TermSum._from_items(acc)


def _sin_sin(w1, w2):
    return [(0.5, COS, w1 - w2), (-0.5, COS, w1 + w2)]


def _cos_cos(w1, w2):
    return [(0.5, COS, w1 - w2), (0.5, COS, w1 + w2)]


def _sin_cos(w1, w2):
    return [(0.5, SIN, w1 + w2), (0.5, SIN, w1 - w2)]


def _cos_sin(w1, w2):
    return [(0.5, SIN, w1 + w2), (-0.5, SIN, w1 - w2)]


# product-to-sum identities, keyed by the trig kinds of the two factors
PRODUCT_TABLE = {
    (NONE, NONE): lambda w1, w2: [(1.0, NONE, 0.0)],
    (NONE, SIN): lambda w1, w2: [(1.0, SIN, w2)],
    (NONE, COS): lambda w1, w2: [(1.0, COS, w2)],
    (SIN, NONE): lambda w1, w2: [(1.0, SIN, w1)],
    (COS, NONE): lambda w1, w2: [(1.0, COS, w1)],
    (SIN, SIN): _sin_sin,
    (COS, COS): _cos_cos,
    (SIN, COS): _sin_cos,
    (COS, SIN): _cos_sin,
}


@contextlib.contextmanager
def corrupted_product_table():
    """Temporarily break the sin*sin identity.  Used as a negative control."""
    saved = PRODUCT_TABLE[(SIN, SIN)]
    PRODUCT_TABLE[(SIN, SIN)] = _cos_cos
    try:
        yield
    finally:
        PRODUCT_TABLE[(SIN, SIN)] = saved


def multiply(a: TermSum, b: TermSum) -> TermSum:
    acc: dict[tuple, float] = {}
    for (k1, l1, t1, w1), c1 in a._items:
        for (k2, l2, t2, w2), c2 in b._items:
            c = c1 * c2
            for f, trig, omega in PRODUCT_TABLE[(t1, t2)](w1, w2):
                for key, coeff in _canonical_parts(f * c, k1 + k2, l1 + l2, trig, omega):
                    _accumulate(acc, key, coeff)
    return TermSum._from_items(acc)


def _complex_rate(term: ExpTrigTerm) -> complex:
    return complex(term.lam, term.omega if term.trig != NONE else 0.0)


def _term_antiderivative(term: ExpTrigTerm, t: float) -> float:
    """Antiderivative of a single term, vanishing-constant convention of the
    closed form ``exp(mu t) sum_j (-1)^j k!/(k-j)! t^(k-j) / mu^(j+1)``."""
    mu = _complex_rate(term)
    k = term.k
    if mu == 0:
        return term.c * t ** (k + 1) / (k + 1)
    total = 0j
    falling = 1.0
    for j in range(k + 1):
        total += (-1) ** j * falling * t ** (k - j) / mu ** (j + 1)
        falling *= k - j
    value = cmath.exp(mu * t) * total
    if term.trig == SIN:
        return term.c * value.imag
    return term.c * value.real


def _expm1(z: complex) -> complex:
    """``exp(z) - 1`` without cancellation for small ``z``."""
    x, y = z.real, z.imag
    return complex(math.expm1(x) * math.cos(y) - 2.0 * math.sin(0.5 * y) ** 2, math.exp(x) * math.sin(y))


def _power_series_integral(mu: complex, k: int, T: float) -> complex:
    """``int_0^T t^k e^(mu t) dt`` by power series.  For ``Re mu < 0`` the
    Kummer-transformed form ``k! e^(mu T) T^(k+1) sum_j (-mu T)^j / (k+j+1)!``
    avoids the alternating signs of the direct series."""
    z = mu * T
    kummer = z.real < 0.0
    x = -z if kummer else z
    # direct: sum x^j / (j! (k+j+1));  kummer: sum x^j k! / (k+j+1)!
    term = 1.0 / (k + 1) + 0j
    total = 0j
    for j in range(400):
        total += term
        if abs(term) <= 1e-17 * abs(total):
            break
        term *= x / (k + j + 2) if kummer else x * (k + j + 1) / ((j + 1) * (k + j + 2))
    if kummer:
        total *= cmath.exp(z)
    return T ** (k + 1) * total


def _term_integral(term: ExpTrigTerm, T: float) -> float:
    """Integral over [0, T].  Uses the reduction
    ``I_k = T^k e^(mu T) / mu - (k / mu) I_(k-1)`` when ``|mu T|`` exceeds the
    power of ``t``; below that the reduction amplifies rounding and the power
    series is used instead."""
    mu = _complex_rate(term)
    k = term.k
    if abs(mu * T) <= max(k, 1):
        I = _power_series_integral(mu, k, T)
    else:
        emT = cmath.exp(mu * T)
        I = _expm1(mu * T) / mu
        for j in range(1, k + 1):
            I = T**j * emT / mu - (j / mu) * I
    return term.c * (I.imag if term.trig == SIN else I.real)


def definite_integral(a: TermSum, T: float) -> float:
    if not T > 0.0:
        raise ValueError("upper limit must be positive")
    return math.fsum(_term_integral(term, T) for term in a.terms)
