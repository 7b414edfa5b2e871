"""Model reference controller construction.

State feedback: plant ``x' = A x + b u`` in companion form with last row
``-a``; reference model ``x_m' = A_m x_m + b r``; ideal gain ``theta = a - a_m``.

Output feedback: plant ``D(p) y = N(p) u`` and the direct (Monopoli)
parameterization ``D_m(p) e = u - theta^T phi`` with the regressor built from
``1/lambda(p)`` filters of ``u`` and ``y``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ltisys import RealizationError, StateSpace, companion_realization
from .polycore import Poly, coprime_test, hurwitz_test
from .tolerances import MATCHING_RESIDUAL_TOL


class SpecError(ValueError):
    """One or more modelling assumptions are violated.

    ``violations`` lists human-readable messages, each tagged with the
    assumption it breaks (``A.1``, ``A.2``, ``coprimality``, ``Hurwitz``,
    ``properness``, ``shape``).
    """

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class MatchingError(ArithmeticError):
    pass


def _companion(coeffs: np.ndarray) -> np.ndarray:
    n = len(coeffs)
    M = np.eye(n, k=1)
    M[-1, :] = -np.asarray(coeffs, dtype=float)
    return M


def _poly_field(data: dict, key: str, errors: list[str]) -> Poly | None:
    try:
        raw = data[key]
    except KeyError:
        errors.append(f"[shape] missing field {key!r}")
        return None
    try:
        return Poly(raw)
    except (TypeError, ValueError) as exc:
        errors.append(f"[shape] {key}: {exc}")
        return None


@dataclass(frozen=True)
class SfPlantSpec:
    """State-feedback plant (last-row coefficients ``a``) and model ``a_m``."""

    a: tuple[float, ...]
    a_m: tuple[float, ...]

    def __post_init__(self):
        a = tuple(float(v) for v in np.ravel(self.a))
        a_m = tuple(float(v) for v in np.ravel(self.a_m))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "a_m", a_m)
        errors = []
        if len(a) == 0:
            errors.append("[shape] plant order n must be at least 1")
        if len(a) != len(a_m):
            errors.append(f"[shape] a has {len(a)} entries but a_m has {len(a_m)}")
        if not all(np.isfinite(a + a_m)):
            errors.append("[shape] coefficients must be finite")
        if a_m and not errors and not hurwitz_test(self.model_poly()):
            errors.append("[Hurwitz] reference model matrix A_m is not Hurwitz")
        if errors:
            raise SpecError(errors)

    @property
    def n(self) -> int:
        return len(self.a)

    def model_poly(self) -> Poly:
        return Poly(list(self.a_m) + [1.0])

    def plant_poly(self) -> Poly:
        return Poly(list(self.a) + [1.0])

    def plant_matrix(self) -> np.ndarray:
        return _companion(np.array(self.a))

    def model_matrix(self) -> np.ndarray:
        return _companion(np.array(self.a_m))

    def input_vector(self) -> np.ndarray:
        b = np.zeros(self.n)
        b[-1] = 1.0
        return b

    def to_json(self) -> dict:
        return {"a": list(self.a), "a_m": list(self.a_m)}

    @classmethod
    def from_json(cls, data: dict) -> "SfPlantSpec":
        missing = [f"[shape] missing field {k!r}" for k in ("a", "a_m") if k not in data]
        if missing:
            raise SpecError(missing)
        return cls(tuple(data["a"]), tuple(data["a_m"]))


@dataclass(frozen=True)
class FilterSpec:
    """Input filter ``F = N_f / D_f``: strictly proper, coprime, D_f Hurwitz."""

    N_f: Poly
    D_f: Poly

    def __post_init__(self):
        errors = []
        if self.N_f.is_zero or self.D_f.is_zero:
            errors.append("[shape] N_f and D_f must be nonzero")
        elif self.D_f.degree <= self.N_f.degree:
            errors.append(
                f"[properness] F must be strictly proper: deg D_f={self.D_f.degree} "
                f"<= deg N_f={self.N_f.degree}"
            )
        else:
            if not coprime_test(self.N_f, self.D_f):
                errors.append("[coprimality] N_f and D_f share a root")
            if not hurwitz_test(self.D_f):
                errors.append("[Hurwitz] D_f is not a Hurwitz polynomial")
        if errors:
            raise SpecError(errors)

    @property
    def order(self) -> int:
        return self.D_f.degree

    def to_json(self) -> dict:
        return {"N_f": self.N_f.to_json(), "D_f": self.D_f.to_json()}

    @classmethod
    def from_json(cls, data: dict) -> "FilterSpec":
        errors: list[str] = []
        N_f = _poly_field(data, "N_f", errors)
        D_f = _poly_field(data, "D_f", errors)
        if errors:
            raise SpecError(errors)
        return cls(N_f, D_f)


@dataclass(frozen=True)
class OfPlantSpec:
    """Output-feedback plant ``D y = N u`` with model ``D_m`` and filter ``lambda``."""

    D: Poly
    N: Poly
    D_m: Poly
    lam: Poly

    def __post_init__(self):
        errors = []
        D, N, D_m, lam = self.D, self.N, self.D_m, self.lam
        if any(p.is_zero for p in (D, N, D_m, lam)):
            raise SpecError(["[shape] D, N, D_m and lambda must be nonzero"])
        n, m = D.degree, N.degree
        if n < 1:
            errors.append("[A.1] plant order n = deg D must be at least 1")
        if D.lead != 1.0:
            errors.append("[A.2] D must be monic (unit high-frequency gain with monic N)")
        if N.lead != 1.0:
            errors.append("[A.2] N must be monic: high-frequency gain n_m = 1")
        d = n - m
        if d < 1:
            errors.append(f"[A.1] relative degree d = n - m = {d} must be >= 1")
        if D_m.degree != d:
            errors.append(f"[A.1] deg D_m = {D_m.degree} must equal the relative degree d = {d}")
        if D_m.lead != 1.0:
            errors.append("[A.2] D_m must be monic (d_md = 1)")
        elif D_m.degree >= 1 and not hurwitz_test(D_m):
            errors.append("[Hurwitz] D_m is not a Hurwitz polynomial")
        if lam.degree != n - 1:
            errors.append(f"[A.1] deg lambda = {lam.degree} must equal n - 1 = {n - 1}")
        if lam.lead != 1.0:
            errors.append("[shape] lambda must be monic (lambda_{n-1} = 1)")
        elif lam.degree >= 1 and not hurwitz_test(lam):
            errors.append("[Hurwitz] lambda is not a Hurwitz polynomial")
        if n >= 1 and not coprime_test(D, N):
            errors.append("[coprimality] D and N share a root")
        if errors:
            raise SpecError(errors)

    @property
    def n(self) -> int:
        return self.D.degree

    @property
    def m(self) -> int:
        return self.N.degree

    @property
    def d(self) -> int:
        return self.n - self.m

    def to_json(self) -> dict:
        return {
            "D": self.D.to_json(),
            "N": self.N.to_json(),
            "D_m": self.D_m.to_json(),
            "lambda": self.lam.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "OfPlantSpec":
        errors: list[str] = []
        polys = [_poly_field(data, k, errors) for k in ("D", "N", "D_m", "lambda")]
        if errors:
            raise SpecError(errors)
        return cls(*polys)


# ---------------------------------------------------------------- state feedback

def sf_mrc_gain(spec: SfPlantSpec) -> np.ndarray:
    """Ideal state-feedback gain ``theta = a - a_m`` (so ``A + b theta^T = A_m``)."""
    theta = np.array(spec.a) - np.array(spec.a_m)
    b = spec.input_vector()
    residual = spec.plant_matrix() + np.outer(b, theta) - spec.model_matrix()
    if np.max(np.abs(residual)) > 1e-14 * max(1.0, np.max(np.abs(spec.a))):
        raise MatchingError("state-feedback matching equation not satisfied")
    return theta


def filter_realization(f: FilterSpec) -> StateSpace:
    """Companion realization ``(A_f, b_f, c_f^T)`` of the input filter."""
    try:
        return companion_realization(f.D_f, f.N_f)
    except RealizationError as exc:
        raise SpecError([f"[properness] {exc}"]) from exc


# ---------------------------------------------------------------- output feedback

def regressor_realization(spec: OfPlantSpec) -> StateSpace:
    """Generator of the regressor ``phi`` with inputs ``(u, y, r)``.

    State ``(w_u, w_y)``; each block is a companion realization of
    ``1/lambda`` so that ``w_u[k] = p^k/lambda u``.  The output is
    ``phi = [w_u; w_y; y; r]`` of length 2n; ``y`` and ``r`` pass through the
    feedthrough matrix.  For ``n = 1`` the generator has no state.
    """
    n = spec.n
    k = n - 1
    if k >= 1 and not hurwitz_test(spec.lam):
        raise SpecError(["[Hurwitz] lambda is not a Hurwitz polynomial"])
    A = np.zeros((2 * k, 2 * k))
    B = np.zeros((2 * k, 3))
    if k:
        Al = _companion(spec.lam.as_array()[:-1])
        A[:k, :k] = Al
        A[k:, k:] = Al
        B[k - 1, 0] = 1.0
        B[2 * k - 1, 1] = 1.0
    C = np.zeros((2 * n, 2 * k))
    C[: 2 * k, :] = np.eye(2 * k)
    D = np.zeros((2 * n, 3))
    D[2 * n - 2, 1] = 1.0
    D[2 * n - 1, 2] = 1.0
    return StateSpace(A, B, C, D)


def matching_residual(spec: OfPlantSpec, theta: np.ndarray) -> float:
    """Coefficient norm of (lambda - Q_u) D - (Q_y + t_y0 lambda) N - D_m lambda N."""
    n = spec.n
    theta = np.asarray(theta, dtype=float)
    Q_u = Poly(theta[: n - 1])
    Q_y = Poly(theta[n - 1 : 2 * n - 2])
    t_y0 = theta[2 * n - 2]
    lam, D, N, D_m = spec.lam, spec.D, spec.N, spec.D_m
    res = (lam - Q_u) * D - (Q_y + lam.scale(t_y0)) * N - D_m * lam * N
    return res.norm()


def monopoli_theta(spec: OfPlantSpec) -> np.ndarray:
    """Ideal output-feedback parameter vector ``[q_u; q_y; theta_y0; theta_r]``.

    Writing ``R = Q_y + theta_y0 lambda`` (degree n-1), the matching identity
    becomes ``Q_u D + R N = lambda D - D_m lambda N``; the right side has
    degree at most 2n-2 because both leading terms are monic of degree 2n-1.
    The 2n-1 coefficient equations in the 2n-1 unknowns are nonsingular
    whenever D and N are coprime.  ``theta_y0`` is the leading coefficient of
    R (lambda is monic) and ``theta_r = 1``.
    """
    n = spec.n
    D, N, lam, D_m = spec.D, spec.N, spec.lam, spec.D_m
    size = 2 * n - 1
    rhs = (lam * D - D_m * lam * N).as_array()
    if len(rhs) > size:
        if np.max(np.abs(rhs[size:])) > 1e-12 * max(1.0, np.max(np.abs(rhs))):
            raise MatchingError("matching unsolvable: leading terms do not cancel")
        rhs = rhs[:size]
    else:
        rhs = np.concatenate([rhs, np.zeros(size - len(rhs))])
    M = np.zeros((size, size))
    Dc, Nc = D.as_array(), N.as_array()
    for j in range(n - 1):  # Q_u coefficient j multiplies s^j D
        M[j : j + len(Dc), j] = Dc
    for j in range(n):  # R coefficient j multiplies s^j N
        M[j : j + len(Nc), n - 1 + j] = Nc
    try:
        if np.linalg.cond(M) > 1e12:
            raise np.linalg.LinAlgError
        sol = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise MatchingError("matching unsolvable: check coprimality") from exc
    q_u = sol[: n - 1]
    R = Poly(sol[n - 1 :])
    t_y0 = R.as_array(n)[n - 1]
    q_y = (R - lam.scale(t_y0)).as_array(n)[: n - 1]
    theta = np.concatenate([q_u, q_y, [t_y0, 1.0]])
    resid = matching_residual(spec, theta)
    scale = max(1.0, (lam * D).norm())
    if resid > MATCHING_RESIDUAL_TOL * scale:
        raise MatchingError(f"matching identity residual {resid:.3e} too large")
    return theta
