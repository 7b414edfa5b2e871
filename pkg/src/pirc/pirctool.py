"""Parameter-independent realizations of model reference controllers.

State feedback: the filtered law ``xi' = A_f xi + b_f (theta^T x + r)``,
``u = c_f^T xi`` becomes parameter free in the coordinates
``chi = b_f b^T x + xi``.

Output feedback: eliminating ``theta^T phi`` from
``D_m e = u - theta^T phi``, ``u = F (theta^T phi)`` leaves
``u = H_eu e`` with ``H_eu = N_f D_m / (N_f - D_f)``, implementable whenever
that transfer function is proper and stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ltisys import StateSpace, companion_realization, max_response_deviation
from .mrcdesign import FilterSpec, SfPlantSpec
from .polycore import Poly, cancel_common_factors, hurwitz_test, roots, routh_array

# Verdict thresholds for conditions (i) and (ii).
THETA_RESIDUAL_TOL = 1e-13
INVARIANCE_TOL = 1e-8


class TransformError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ClosedLoop:
    """Plant (companion form) in feedback with the filtered state-feedback MRC.

    ``A_cl = [[A_m - b theta^T, b c_f^T], [b_f theta^T, A_f]]``; ``A_nominal``
    is the same matrix with ``theta = 0``.  The reference enters through
    ``input_map = [0; b_f]`` and ``output_map = [I_n, 0]`` selects the plant
    state.
    """

    A_cl: np.ndarray
    A_nominal: np.ndarray
    input_map: np.ndarray
    output_map: np.ndarray
    n: int
    n_xi: int
    theta: np.ndarray
    b: np.ndarray
    filt: StateSpace

    def transfer(self) -> StateSpace:
        """P_cl(s, theta) as a state-space system from r to x."""
        return StateSpace(self.A_cl, self.input_map.reshape(-1, 1), self.output_map)

    def to_json(self) -> dict:
        return {
            "A_cl": self.A_cl.tolist(),
            "input_map": self.input_map.tolist(),
            "n": self.n,
            "n_xi": self.n_xi,
            "theta": self.theta.tolist(),
        }


def assemble_sf_closed_loop(spec: SfPlantSpec, filt: StateSpace, theta) -> ClosedLoop:
    n, n_xi = spec.n, filt.n_states
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.shape != (n,):
        raise ValueError(f"theta must have {n} entries, got {theta.shape}")
    if filt.n_inputs != 1 or filt.n_outputs != 1:
        raise ValueError("filter must be single-input single-output")
    b = spec.input_vector()
    b_f = filt.B[:, 0]
    c_f = filt.C[0, :]
    A_m = spec.model_matrix()

    def build(th):
        top = np.hstack([A_m - np.outer(b, th), np.outer(b, c_f)])
        bottom = np.hstack([np.outer(b_f, th), filt.A])
        return np.vstack([top, bottom])

    input_map = np.concatenate([np.zeros(n), b_f])
    output_map = np.hstack([np.eye(n), np.zeros((n, n_xi))])
    return ClosedLoop(build(theta), build(np.zeros(n)), input_map, output_map,
                      n, n_xi, theta, b, filt)


@dataclass(frozen=True, eq=False)
class PircResult:
    controller: StateSpace
    transform: np.ndarray
    transformed: np.ndarray
    theta_residual: float
    invariance_error: float
    split_error: float = 0.0

    @property
    def condition_i(self) -> bool:
        return self.theta_residual < THETA_RESIDUAL_TOL

    @property
    def condition_ii(self) -> bool:
        return self.invariance_error < INVARIANCE_TOL

    @property
    def is_pirc(self) -> bool:
        return self.condition_i and self.condition_ii

    def to_json(self) -> dict:
        return {
            "transform": self.transform.tolist(),
            "transformed_A": self.transformed.tolist(),
            "controller": self.controller.to_json(),
            "theta_residual": self.theta_residual,
            "invariance_error": self.invariance_error,
            "verdicts": {
                "(i)": self.condition_i,
                "(ii)": self.condition_ii,
                "is_pirc": self.is_pirc,
            },
        }


def pirc_transform_sf(cl: ClosedLoop, b=None, b_f=None) -> PircResult:
    """Apply ``T = [[I, 0], [b_f b^T, I]]`` and extract the chi-controller.

    The transformed matrix is computed twice: directly, for the invariance
    check, and as ``T A_nominal T^-1 + T Delta(theta) T^-1`` where
    ``Delta(theta)`` holds every theta entry of ``A_cl``.  The controller rows
    of the second term are the theta-dependent part; their magnitude is the
    reported ``theta_residual``.  The controller is
    ``chi' = K_x x + A_chi chi + b_f r``, ``u = c_f^T (chi - b_f b^T x)``.
    """
    n, n_xi = cl.n, cl.n_xi
    b = cl.b if b is None else np.asarray(b, dtype=float).ravel()
    b_f = cl.filt.B[:, 0] if b_f is None else np.asarray(b_f, dtype=float).ravel()
    if b.shape != (n,) or b_f.shape != (n_xi,):
        raise ValueError("b and b_f do not match the closed-loop dimensions")
    if abs(float(b @ b) - 1.0) > 1e-12:
        raise TransformError("transformation requires unit input vector (b^T b = 1)")

    coupling = np.outer(b_f, b)
    T = np.eye(n + n_xi)
    T[n:, :n] = coupling
    T_inv = np.eye(n + n_xi)
    T_inv[n:, :n] = -coupling

    transformed = T @ cl.A_cl @ T_inv
    delta = np.zeros_like(cl.A_cl)
    delta[:n, :n] = -np.outer(b, cl.theta)
    delta[n:, :n] = np.outer(b_f, cl.theta)
    theta_part = T @ delta @ T_inv
    controller_rows = (T @ cl.A_nominal @ T_inv)[n:, :] + theta_part[n:, :]
    theta_residual = float(np.max(np.abs(theta_part[n:, :]), initial=0.0))
    split_error = float(np.max(np.abs(controller_rows - transformed[n:, :]), initial=0.0))

    c_f = cl.filt.C[0, :]
    r_map = (T @ cl.input_map)[n:]
    K_x = controller_rows[:, :n]
    A_chi = controller_rows[:, n:]
    controller = StateSpace(
        A_chi,
        np.hstack([K_x, r_map.reshape(-1, 1)]),
        c_f.reshape(1, -1),
        np.concatenate([-(c_f @ b_f) * b, [0.0]]).reshape(1, -1),
    )

    before = cl.transfer()
    after = StateSpace(transformed, (T @ cl.input_map).reshape(-1, 1), cl.output_map @ T_inv)
    invariance = max_response_deviation(before, after)
    return PircResult(controller, T, transformed, theta_residual, invariance, split_error)


def build_sf_pirc_controller(a_m, filt: StateSpace) -> StateSpace:
    """Parameter-free controller built from the reference model and filter only.

    No plant coefficients enter: the closed loop is assembled with a zero
    placeholder gain, which is legitimate because the controller rows do not
    depend on it.
    """
    template = SfPlantSpec(tuple(a_m), tuple(a_m))
    cl = assemble_sf_closed_loop(template, filt, np.zeros(template.n))
    return pirc_transform_sf(cl).controller


def sf_unfiltered_verdict() -> dict:
    return {
        "is_pirc": False,
        "reason": "static parameter-dependent output map",
        "detail": "u = theta^T x + r has no controller state to absorb theta",
    }


def of_unfiltered_verdict() -> dict:
    return {
        "is_pirc": False,
        "reason": "no controller dynamics to absorb theta^T phi",
        "detail": "the regressor dynamics are theta-free; theta enters only the static map u = theta^T phi",
    }


# ---------------------------------------------------------------- output feedback

@dataclass(frozen=True)
class RationalTF:
    num: Poly
    den: Poly

    def __post_init__(self):
        if self.den.is_zero:
            raise ValueError("zero denominator")

    def __call__(self, s):
        return self.num(s) / self.den(s)

    @property
    def is_proper(self) -> bool:
        return self.num.degree <= self.den.degree

    def poles(self) -> np.ndarray:
        return roots(self.den)

    @property
    def is_stable(self) -> bool:
        return self.den.degree < 1 or hurwitz_test(self.den)

    def to_json(self) -> dict:
        return {"num": self.num.to_json(), "den": self.den.to_json(), "text": str(self)}

    def __str__(self) -> str:
        return f"({self.num}) / ({self.den})"


def heu_transfer(f: FilterSpec, D_m: Poly) -> RationalTF:
    """H_eu = N_f D_m / (N_f - D_f), common factors cancelled."""
    num = f.N_f * D_m
    den = f.N_f - f.D_f
    if den.is_zero:
        raise ValueError("N_f = D_f gives a zero denominator")
    num, den = cancel_common_factors(num, den)
    return RationalTF(num, den)


@dataclass(frozen=True)
class FilterConditionReport:
    proper: bool
    stable: bool
    is_pirc: bool
    c1_as_printed: bool
    c1_properness: bool
    c2_degenerate: bool
    heu: RationalTF
    details: tuple[str, ...] = field(default=())

    def to_json(self) -> dict:
        return {
            "proper": self.proper,
            "stable": self.stable,
            "is_pirc": self.is_pirc,
            "C1": {
                "verdict": self.proper,
                "as_printed_nNf_ge_nDf_plus_d": self.c1_as_printed,
                "properness_nDf_ge_nNf_plus_d": self.c1_properness,
            },
            "C2": {"verdict": self.stable, "marginal_or_degenerate": self.c2_degenerate},
            "H_eu": self.heu.to_json(),
            "details": list(self.details),
        }


def check_filter_conditions(f: FilterSpec, D_m: Poly, d: int | None = None) -> FilterConditionReport:
    """Gate for the filtered output-feedback MRC to admit a parameter-free form.

    Properness is read off the uncancelled H_eu degrees; stability is the
    Routh test of ``D_f - N_f``, whose roots coincide with those of
    ``N_f - D_f``.
    """
    if d is None:
        d = D_m.degree
    if D_m.degree != d:
        raise ValueError(f"deg D_m = {D_m.degree} differs from d = {d}")
    nN, nD = f.N_f.degree, f.D_f.degree
    den = f.N_f - f.D_f
    proper = nN + d <= den.degree
    routh = routh_array(f.D_f - f.N_f)
    stable = routh.stable
    c1_printed = nN >= nD + d
    c1_prop = nD >= nN + d
    details = [
        "C1 is evaluated as properness of H_eu = N_f D_m / (N_f - D_f): "
        f"deg num = {nN + d}, deg den = {den.degree} -> {'proper' if proper else 'improper'}",
        f"C1 as printed (n_Nf >= n_Df + d): {c1_printed}; "
        f"reversed reading (n_Df >= n_Nf + d): {c1_prop}",
        "C2 tests D_f - N_f; N_f - D_f has the same roots",
    ]
    if not proper:
        details.append("failed: C1 (H_eu improper, controller would need differentiation)")
    if not stable:
        why = "marginal or degenerate Routh array" if routh.degenerate else "right half-plane roots"
        details.append(f"failed: C2 (D_f - N_f not Hurwitz: {why})")
    return FilterConditionReport(
        proper, stable, proper and stable, c1_printed, c1_prop, routh.degenerate,
        heu_transfer(f, D_m), tuple(details),
    )


def ofb_pirc_controller(h: RationalTF, D_m: Poly) -> StateSpace:
    """Realize ``u = H_eu(p) (y - r / D_m(p))`` with inputs ``(y, r)``.

    States are ``[w, z]``: ``w`` realizes the strictly proper part of H_eu
    (the constant part becomes feedthrough) and ``z`` the reference model
    ``1/D_m``.
    """
    if not h.is_proper:
        raise TransformError("H_eu is improper; the controller would need differentiation")
    if not h.is_stable:
        raise TransformError("H_eu is unstable")
    ref = companion_realization(D_m, Poly([1.0]))
    if h.den.degree == 0:
        gain = h.num.as_array(1)[0] / h.den.lead
        A_h, b_h, c_h = np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0))
    else:
        q, rem = divmod(h.num, h.den)
        gain = q.as_array(1)[0]
        if rem.is_zero:
            A_h, b_h, c_h = np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0))
        else:
            part = companion_realization(h.den, rem)
            A_h, b_h, c_h = part.A, part.B, part.C
    nh, nz = A_h.shape[0], ref.n_states
    c_m = ref.C
    A = np.zeros((nh + nz, nh + nz))
    A[:nh, :nh] = A_h
    A[:nh, nh:] = -b_h @ c_m
    A[nh:, nh:] = ref.A
    B = np.zeros((nh + nz, 2))
    B[:nh, 0] = b_h[:, 0]
    B[nh:, 1] = ref.B[:, 0]
    C = np.hstack([c_h, -gain * c_m])
    D = np.array([[gain, 0.0]])
    return StateSpace(A, B, C, D)


__all__ = [
    "ClosedLoop",
    "FilterConditionReport",
    "PircResult",
    "RationalTF",
    "TransformError",
    "assemble_sf_closed_loop",
    "build_sf_pirc_controller",
    "check_filter_conditions",
    "heu_transfer",
    "of_unfiltered_verdict",
    "ofb_pirc_controller",
    "pirc_transform_sf",
    "sf_unfiltered_verdict",
]
