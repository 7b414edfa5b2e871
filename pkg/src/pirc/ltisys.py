"""State-space realizations, characteristic polynomials and frequency response."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .polycore import Poly, PolynomialError, coprime_test
from .tolerances import (
    FREQ_GRID_DECADES,
    FREQ_GRID_POINTS_PER_DECADE,
    POLE_PIVOT_TOL,
    SIMILARITY_COND_MAX,
)


class RealizationError(ValueError):
    """A realization cannot be built from the given data."""


class PoleEvaluationError(ValueError):
    """Frequency response requested at (numerically) a pole."""


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Continuous-time LTI system ``x' = Ax + Bu, y = Cx + Du``.

    Arrays are copied and made read-only, so instances can be shared freely.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray | None = None

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=2) if np.size(self.A) else np.zeros((0, 0))
        n = A.shape[0]
        if A.shape != (n, n):
            raise RealizationError(f"A must be square, got {A.shape}")
        B = np.array(self.B, dtype=float)
        if B.ndim < 2:
            B = B.reshape(n, -1)
        C = np.array(self.C, dtype=float)
        if C.ndim < 2:
            C = C.reshape(-1, n) if n else C.reshape(-1, 0)
        m, p = B.shape[1], C.shape[0]
        D = np.zeros((p, m)) if self.D is None else np.array(self.D, dtype=float).reshape(p, m)
        if B.shape[0] != n or C.shape[1] != n:
            raise RealizationError(
                f"inconsistent dimensions: A {A.shape}, B {B.shape}, C {C.shape}"
            )
        for name, M in (("A", A), ("B", B), ("C", C), ("D", D)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]

    def freq_response(self, s: complex) -> np.ndarray:
        return freq_response(self, s)

    def to_json(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "StateSpace":
        A = np.array(data["A"], dtype=float)
        n = A.shape[0] if A.ndim == 2 else 0
        B = np.array(data["B"], dtype=float).reshape(n, -1)
        C = np.array(data["C"], dtype=float).reshape(-1, n)
        D = data.get("D")
        return cls(A.reshape(n, n), B, C, D)

    def __repr__(self) -> str:
        return (
            f"StateSpace(n={self.n_states}, inputs={self.n_inputs}, "
            f"outputs={self.n_outputs})"
        )


def companion_realization(den: Poly, num: Poly) -> StateSpace:
    """Controllable canonical realization of ``num/den`` with ``b = e_n``.

    ``den`` is normalized to monic (``num`` is scaled alike).  The output row
    holds the numerator coefficients in ascending order.
    """
    if den.is_zero or num.is_zero:
        raise RealizationError("numerator and denominator must be nonzero")
    if num.degree >= den.degree:
        raise RealizationError("filter must be strictly proper")
    if not coprime_test(num, den):
        raise RealizationError("numerator and denominator share a root")
    k = den.lead
    den, num = den.scale(1.0 / k), num.scale(1.0 / k)
    n = den.degree
    A = np.eye(n, k=1)
    A[-1, :] = -den.as_array()[:-1]
    b = np.zeros((n, 1))
    b[-1, 0] = 1.0
    c = num.as_array(n).reshape(1, n)
    return StateSpace(A, b, c, np.zeros((1, 1)))


def char_poly(A) -> Poly:
    """det(sI - A) by the Faddeev-LeVerrier recursion.

    M_0 = 0, c_n = 1;  M_k = A M_{k-1} + c_{n-k+1} I,  c_{n-k} = -tr(A M_k)/k.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0] if A.ndim == 2 else 0
    if A.ndim == 2 and A.shape != (n, n):
        raise RealizationError("char_poly needs a square matrix")
    coeffs = np.zeros(n + 1)
    coeffs[n] = 1.0
    I = np.eye(n)
    M = np.zeros((n, n))
    for k in range(1, n + 1):
        M = A @ M + coeffs[n - k + 1] * I
        coeffs[n - k] = -np.trace(A @ M) / k
    return Poly(coeffs)


def freq_response(sys: StateSpace, s: complex, refine: int = 2) -> np.ndarray:
    """C (sI - A)^{-1} B + D evaluated at complex ``s``.

    The LU solution gets ``refine`` steps of iterative refinement with the
    residual formed in extended precision.  This keeps small entries of the
    response accurate when other state components are many orders of magnitude
    larger (high relative degree at high frequency).
    """
    n = sys.n_states
    if n == 0:
        return sys.D.astype(complex)
    M = s * np.eye(n) - sys.A
    with warnings.catch_warnings():
        # an exactly singular pivot is handled by the check below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= POLE_PIVOT_TOL * max(1.0, np.abs(M).max()):
        raise PoleEvaluationError(f"evaluation at a pole (s={s})")
    X = scipy.linalg.lu_solve((lu, piv), sys.B.astype(complex), check_finite=False)
    if refine:
        M_ext, B_ext = M.astype(np.clongdouble), sys.B.astype(np.clongdouble)
        X = X.astype(np.clongdouble)
        for _ in range(refine):
            R = (B_ext - M_ext @ X).astype(complex)
            X = X + scipy.linalg.lu_solve((lu, piv), R, check_finite=False)
        return (sys.C.astype(np.longdouble) @ X + sys.D).astype(complex)
    return sys.C @ X + sys.D


def frequency_grid() -> np.ndarray:
    """Imaginary-axis points used for transfer-function comparisons (no s=0)."""
    lo, hi = FREQ_GRID_DECADES
    count = int(round((hi - lo) * FREQ_GRID_POINTS_PER_DECADE)) + 1
    return 1j * np.logspace(lo, hi, count)


def max_response_deviation(sys1: StateSpace, sys2: StateSpace, points=None) -> float:
    """Largest relative entrywise deviation of two frequency responses.

    The grid includes s = 0 unless it is a pole of either system; points at
    which either system has a pole are skipped.
    """
    pts = list(frequency_grid() if points is None else points)
    if points is None:
        pts = [0.0] + pts
    worst = 0.0
    for s in pts:
        try:
            G1 = freq_response(sys1, s)
            G2 = freq_response(sys2, s)
        except PoleEvaluationError:
            continue
        scale = max(np.max(np.abs(G1)), np.finfo(float).tiny)
        worst = max(worst, float(np.max(np.abs(G1 - G2)) / scale))
    return worst


def similarity_transform(sys: StateSpace, T) -> StateSpace:
    """Change of state coordinates z = T x: (TAT^-1, TB, CT^-1, D)."""
    T = np.asarray(T, dtype=float)
    n = sys.n_states
    if T.shape != (n, n):
        raise RealizationError(f"transformation must be {n}x{n}, got {T.shape}")
    if n and np.linalg.cond(T) >= SIMILARITY_COND_MAX:
        raise RealizationError("transformation matrix is numerically singular")
    Tinv = np.linalg.inv(T) if n else T
    return StateSpace(T @ sys.A @ Tinv, T @ sys.B, sys.C @ Tinv, sys.D)


__all__ = [
    "PoleEvaluationError",
    "PolynomialError",
    "RealizationError",
    "StateSpace",
    "char_poly",
    "companion_realization",
    "freq_response",
    "frequency_grid",
    "max_response_deviation",
    "similarity_transform",
]
