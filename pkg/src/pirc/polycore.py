"""Real polynomial arithmetic and the stability / coprimality predicates.

Coefficients are stored in ascending order: ``coeffs[i]`` multiplies
``s**i``.  Every polynomial is immutable and normalized on construction
(exact trailing zeros of the high-order end are dropped).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .tolerances import (
    EXACT_DIVISION_TOL,
    ROOT_TOL,
    ROUTH_ZERO_PIVOT_TOL,
    SYLVESTER_SV_TOL,
)


class PolynomialError(ValueError):
    """Invalid polynomial input (zero polynomial, wrong degree, ...)."""


def _trim(coeffs: Iterable[float]) -> tuple[float, ...]:
    c = [float(v) for v in coeffs]
    while c and c[-1] == 0.0:
        c.pop()
    return tuple(c)


@dataclass(frozen=True)
class Poly:
    """Real-coefficient polynomial in ``s`` (or ``p = d/dt``)."""

    coeffs: tuple[float, ...] = field(default=())

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).ravel()
        if not np.all(np.isfinite(c)):
            raise PolynomialError("polynomial coefficients must be finite")
        object.__setattr__(self, "coeffs", _trim(c))

    # -- construction -------------------------------------------------
    @classmethod
    def from_roots(cls, roots: Sequence[complex], lead: float = 1.0) -> "Poly":
        """Polynomial with the given roots; complex roots must come in pairs."""
        c = np.array([1.0 + 0j])
        for r in roots:
            # ascending-order multiplication by (s - r)
            c = np.concatenate([[0.0], c]) - r * np.concatenate([c, [0.0]])
        if np.max(np.abs(c.imag), initial=0.0) > 1e-9 * max(1.0, np.max(np.abs(c))):
            raise PolynomialError("roots are not closed under conjugation")
        return cls(lead * c.real)

    @classmethod
    def monomial(cls, k: int, value: float = 1.0) -> "Poly":
        return cls([0.0] * k + [value])

    # -- basic properties ---------------------------------------------
    @property
    def degree(self) -> int:
        """Index of the leading coefficient; -1 for the zero polynomial."""
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def lead(self) -> float:
        return self.coeffs[-1] if self.coeffs else 0.0

    def as_array(self, length: int | None = None) -> np.ndarray:
        """Ascending coefficients, zero-padded to ``length`` if given."""
        c = np.array(self.coeffs, dtype=float)
        if length is not None:
            if length < len(c):
                raise PolynomialError("padding length shorter than polynomial")
            c = np.concatenate([c, np.zeros(length - len(c))])
        return c

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs)) if self.coeffs else 0.0

    def monic(self) -> "Poly":
        if self.is_zero:
            raise PolynomialError("zero polynomial has no monic form")
        return self.scale(1.0 / self.lead)

    def scale(self, k: float) -> "Poly":
        return Poly([k * v for v in self.coeffs])

    def __call__(self, s):
        acc = 0.0 * s
        for v in reversed(self.coeffs):
            acc = acc * s + v
        return acc

    # -- arithmetic ---------------------------------------------------
    def __add__(self, other: "Poly") -> "Poly":
        other = _as_poly(other)
        n = max(len(self.coeffs), len(other.coeffs))
        return Poly(self.as_array(n) + other.as_array(n))

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return self.scale(-1.0)

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-_as_poly(other))

    def __rsub__(self, other: "Poly") -> "Poly":
        return _as_poly(other) - self

    def __mul__(self, other: "Poly") -> "Poly":
        other = _as_poly(other)
        if self.is_zero or other.is_zero:
            return Poly()
        return Poly(np.convolve(self.coeffs, other.coeffs))

    __rmul__ = __mul__

    def __divmod__(self, other: "Poly") -> tuple["Poly", "Poly"]:
        other = _as_poly(other)
        if other.is_zero:
            raise PolynomialError("division by the zero polynomial")
        rem = list(self.coeffs)
        dv = other.degree
        if self.degree < dv:
            return Poly(), Poly(rem)
        quot = [0.0] * (self.degree - dv + 1)
        for k in range(self.degree - dv, -1, -1):
            q = rem[k + dv] / other.lead
            quot[k] = q
            for j, oc in enumerate(other.coeffs):
                rem[k + j] -= q * oc
            rem[k + dv] = 0.0
        return Poly(quot), Poly(rem[:dv])

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, float)):
            other = Poly([other])
        if not isinstance(other, Poly):
            return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self):
        return hash(self.coeffs)

    def allclose(self, other: "Poly", atol: float = 1e-12) -> bool:
        n = max(len(self.coeffs), len(other.coeffs))
        return bool(np.allclose(self.as_array(n), other.as_array(n), rtol=0.0, atol=atol))

    def to_json(self) -> list[float]:
        return list(self.coeffs)

    def __repr__(self) -> str:
        return f"Poly({list(self.coeffs)})"

    def __str__(self) -> str:
        if self.is_zero:
            return "0"
        terms = []
        for i in range(self.degree, -1, -1):
            c = self.coeffs[i]
            if c == 0.0:
                continue
            mag = abs(c)
            sign = "-" if c < 0 else "+"
            body = "" if (mag == 1.0 and i > 0) else f"{mag:g}"
            if i >= 1:
                body += "s" if i == 1 else f"s^{i}"
            terms.append((sign, body))
        head_sign, head = terms[0]
        out = ("-" if head_sign == "-" else "") + head
        for sgn, body in terms[1:]:
            out += f" {sgn} {body}"
        return out


def _as_poly(value) -> Poly:
    if isinstance(value, Poly):
        return value
    if isinstance(value, (int, float)):
        return Poly([value])
    return Poly(value)


def poly_arith(lhs: Poly, rhs: Poly, op: str) -> Poly:
    """Apply ``op`` in {"add", "sub", "mul"} to two polynomials."""
    if op == "add":
        return lhs + rhs
    if op == "sub":
        return lhs - rhs
    if op == "mul":
        return lhs * rhs
    raise ValueError(f"unknown polynomial operation {op!r}")


def companion_matrix(p: Poly) -> np.ndarray:
    """Companion matrix of the monic-normalized ``p`` (last row holds -a_i)."""
    if p.degree < 1:
        raise PolynomialError("companion matrix needs degree >= 1")
    a = p.monic().as_array()[:-1]
    n = len(a)
    M = np.eye(n, k=1)
    M[-1, :] = -a
    return M


def roots(p: Poly) -> np.ndarray:
    """All complex roots of ``p`` with multiplicity (companion eigenvalues)."""
    if p.is_zero:
        raise PolynomialError("the zero polynomial has no finite root set")
    if p.degree == 0:
        return np.zeros(0, dtype=complex)
    return np.linalg.eigvals(companion_matrix(p)).astype(complex)


@dataclass(frozen=True)
class RouthReport:
    stable: bool
    degenerate: bool
    sign_changes: int
    first_column: tuple[float, ...]


def routh_array(p: Poly) -> RouthReport:
    """Routh-Hurwitz test of ``p`` via the Routh array.

    The polynomial is scaled so that its leading coefficient is positive and
    its largest coefficient has magnitude one.  An (almost) zero pivot stops
    the construction and is reported as ``degenerate``; such polynomials are
    never declared stable.
    """
    if p.degree < 1:
        raise PolynomialError("Routh test needs degree >= 1")
    c = p.as_array()[::-1]  # descending
    c = c * np.sign(c[0]) / np.max(np.abs(c))
    n = p.degree
    width = n // 2 + 1
    row0 = np.zeros(width)
    row1 = np.zeros(width)
    row0[: len(c[0::2])] = c[0::2]
    row1[: len(c[1::2])] = c[1::2]
    first = [row0[0]]
    for _ in range(n):
        pivot = row1[0]
        first.append(pivot)
        if abs(pivot) <= ROUTH_ZERO_PIVOT_TOL:
            return RouthReport(False, True, _sign_changes(first[:-1]), tuple(first))
        nxt = np.zeros(width)
        nxt[:-1] = (pivot * row0[1:] - row0[0] * row1[1:]) / pivot
        row0, row1 = row1, nxt
    changes = _sign_changes(first)
    return RouthReport(changes == 0 and all(v > 0 for v in first), False, changes, tuple(first))


def _sign_changes(values: Sequence[float]) -> int:
    signs = [np.sign(v) for v in values if v != 0.0]
    return int(sum(1 for a, b in zip(signs, signs[1:]) if a != b))


def hurwitz_test(p: Poly) -> bool:
    """True iff every root of ``p`` lies in the open left half plane."""
    return routh_array(p).stable


def sylvester_matrix(a: Poly, b: Poly) -> np.ndarray:
    """Sylvester matrix of ``a`` (degree m) and ``b`` (degree n), size m+n."""
    m, n = a.degree, b.degree
    if m < 0 or n < 0:
        raise PolynomialError("Sylvester matrix of the zero polynomial")
    size = m + n
    S = np.zeros((size, size))
    ad = a.as_array()[::-1]
    bd = b.as_array()[::-1]
    for i in range(n):
        S[i, i : i + m + 1] = ad
    for i in range(m):
        S[n + i, i : i + n + 1] = bd
    return S


def resultant(a: Poly, b: Poly) -> float:
    S = sylvester_matrix(a, b)
    return float(np.linalg.det(S)) if S.size else 1.0


def min_root_distance(a: Poly, b: Poly) -> float:
    ra, rb = roots(a), roots(b)
    if ra.size == 0 or rb.size == 0:
        return float("inf")
    return float(np.min(np.abs(ra[:, None] - rb[None, :])))


def coprime_test(a: Poly, b: Poly) -> bool:
    """True iff ``a`` and ``b`` share no root.

    Two checks must both pass: no pair of roots closer than ``ROOT_TOL``, and
    the Sylvester matrix of the unit-norm polynomials is numerically
    nonsingular.  The second check catches repeated roots, which the
    eigenvalue solver scatters by roughly eps**(1/k).
    """
    if a.is_zero or b.is_zero:
        raise PolynomialError("coprimality is undefined for the zero polynomial")
    if a.degree == 0 or b.degree == 0:
        return True
    if min_root_distance(a, b) <= ROOT_TOL:
        return False
    S = sylvester_matrix(a.scale(1.0 / a.norm()), b.scale(1.0 / b.norm()))
    sv = np.linalg.svd(S, compute_uv=False)
    return bool(sv[-1] > SYLVESTER_SV_TOL * sv[0])


def cancel_common_factors(num: Poly, den: Poly) -> tuple[Poly, Poly]:
    """Remove common factors of ``num/den``.

    Exact divisibility (remainder norm below ``EXACT_DIVISION_TOL``) is
    handled first by polynomial division; remaining shared roots are paired
    at ``ROOT_TOL`` and removed.  Leading coefficients are preserved so the
    sign convention of the input survives.
    """
    if den.is_zero:
        raise PolynomialError("zero denominator")
    if num.is_zero:
        return Poly(), Poly([1.0])
    if den.degree <= num.degree:
        q, r = divmod(num, den)
        if r.norm() < EXACT_DIVISION_TOL * max(1.0, num.norm()):
            return q, Poly([1.0])
    else:
        q, r = divmod(den, num)
        if r.norm() < EXACT_DIVISION_TOL * max(1.0, den.norm()):
            return Poly([1.0]), q
    if num.degree < 1 or den.degree < 1:
        return num, den
    rn = list(roots(num))
    rd = list(roots(den))
    changed = False
    for z in list(rn):
        if not rd:
            break
        dist = [abs(z - p) for p in rd]
        k = int(np.argmin(dist))
        if dist[k] <= ROOT_TOL * max(1.0, abs(z)):
            rn.remove(z)
            rd.pop(k)
            changed = True
    if not changed:
        return num, den
    return _from_root_list(rn, num.lead), _from_root_list(rd, den.lead)


def _from_root_list(rts: list[complex], lead: float) -> Poly:
    # conjugate pairs can be perturbed apart; project back onto real coefficients
    c = np.array([1.0 + 0j])
    for r in rts:
        c = np.concatenate([[0.0], c]) - r * np.concatenate([c, [0.0]])
    return Poly(lead * c.real)
