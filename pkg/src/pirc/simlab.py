"""Fixed-step closed-loop simulation of ideal, parameter-free and adaptive MRC."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np
import scipy.linalg

from .ltisys import StateSpace, char_poly, companion_realization
from .mrcdesign import (
    FilterSpec,
    OfPlantSpec,
    SfPlantSpec,
    filter_realization,
    monopoli_theta,
    regressor_realization,
    sf_mrc_gain,
)
from .pirctool import (
    assemble_sf_closed_loop,
    build_sf_pirc_controller,
    check_filter_conditions,
    ofb_pirc_controller,
)
from .polycore import Poly, hurwitz_test, roots
from .tolerances import DEFAULT_DIVERGENCE_BOUND, DEFAULT_HORIZON, DEFAULT_STEP


class SimulationRefused(ValueError):
    """A run was requested for a controller that does not exist for the data."""


# ---------------------------------------------------------------- references

@dataclass(frozen=True)
class Reference:
    """Reference signal: zero, step, sinusoid or a sum of sinusoids.

    Frequencies are in rad/s.  A step switches on at ``t0`` (inclusive).
    """

    kind: str = "zero"
    amplitudes: tuple[float, ...] = ()
    frequencies: tuple[float, ...] = ()
    phases: tuple[float, ...] = ()
    t0: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "step", "sinusoid", "sum-of-sinusoids"):
            raise ValueError(f"unknown reference kind {self.kind!r}")
        amps = tuple(float(a) for a in self.amplitudes)
        freqs = tuple(float(w) for w in self.frequencies)
        phases = tuple(float(p) for p in self.phases) or (0.0,) * len(freqs)
        if self.kind == "step" and len(amps) != 1:
            raise ValueError("step reference needs exactly one amplitude")
        if self.kind in ("sinusoid", "sum-of-sinusoids"):
            if len(amps) != len(freqs) or len(phases) != len(freqs) or not freqs:
                raise ValueError("sinusoid amplitude/frequency/phase lists must match")
            if self.kind == "sinusoid" and len(freqs) != 1:
                raise ValueError("sinusoid reference takes one frequency")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "phases", phases)

    @classmethod
    def step(cls, amplitude: float = 1.0, t0: float = 0.0) -> "Reference":
        return cls("step", (amplitude,), t0=t0)

    @classmethod
    def sinusoid(cls, amplitude: float, frequency: float, phase: float = 0.0) -> "Reference":
        return cls("sinusoid", (amplitude,), (frequency,), (phase,))

    def __call__(self, t: float) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "step":
            return self.amplitudes[0] if t >= self.t0 else 0.0
        return sum(a * math.sin(w * t + p)
                   for a, w, p in zip(self.amplitudes, self.frequencies, self.phases))

    def to_json(self) -> dict:
        out = {"type": self.kind}
        if self.kind == "step":
            out.update(amplitude=self.amplitudes[0], t0=self.t0)
        elif self.kind == "sinusoid":
            out.update(amplitude=self.amplitudes[0], frequency=self.frequencies[0],
                       phase=self.phases[0])
        elif self.kind != "zero":
            out.update(amplitudes=list(self.amplitudes), frequencies=list(self.frequencies),
                       phases=list(self.phases))
        return out

    @classmethod
    def from_json(cls, data: dict | None) -> "Reference":
        if not data:
            return cls()
        kind = data.get("type", "zero")
        if kind == "step":
            return cls.step(float(data.get("amplitude", 1.0)), float(data.get("t0", 0.0)))
        if kind == "sinusoid":
            return cls.sinusoid(float(data["amplitude"]), float(data["frequency"]),
                                float(data.get("phase", 0.0)))
        if kind == "sum-of-sinusoids":
            return cls(kind, tuple(data["amplitudes"]), tuple(data["frequencies"]),
                       tuple(data.get("phases", ())))
        return cls(kind)


# ---------------------------------------------------------------- trajectories

@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    c: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    u: np.ndarray = field(default_factory=lambda: np.zeros(0))
    r: np.ndarray = field(default_factory=lambda: np.zeros(0))
    e: np.ndarray = field(default_factory=lambda: np.zeros(0))
    theta_hat: np.ndarray | None = None
    diverged: bool = False
    t_diverged: float | None = None
    signals: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    def header(self) -> list[str]:
        cols = ["t"]
        cols += [f"x{i + 1}" for i in range(self.x.shape[1])]
        cols += [f"c{i + 1}" for i in range(self.c.shape[1])]
        cols += ["u", "r", "e"]
        if self.theta_hat is not None:
            cols += [f"th{i + 1}" for i in range(self.theta_hat.shape[1])]
        return cols

    def rows(self) -> np.ndarray:
        parts = [self.t[:, None], self.x, self.c, self.u[:, None], self.r[:, None], self.e[:, None]]
        if self.theta_hat is not None:
            parts.append(self.theta_hat)
        return np.hstack(parts)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            for row in self.rows():
                w.writerow([repr(float(v)) for v in row])

    def summary(self) -> dict:
        return {
            "samples": len(self),
            "t_end": float(self.t[-1]) if len(self) else 0.0,
            "diverged": self.diverged,
            "t_diverged": self.t_diverged,
        }


def rk4_integrate(dynamics: Callable[[float, np.ndarray], np.ndarray], x0, h: float, T: float,
                  B_div: float = math.inf, watch: slice | Sequence[int] | None = None) -> Trajectory:
    """Classical fixed-step RK4 from t=0 to t=T.

    Integration stops after the first step at which a watched component
    exceeds ``B_div`` in magnitude (that sample is kept), or at which the state
    stops being finite (that sample is dropped).  Either way the trajectory is
    flagged as diverged.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    if T < h:
        raise ValueError("horizon shorter than one step")
    steps = int(round(T / h))
    x = np.array(x0, dtype=float)
    watch = slice(None) if watch is None else watch
    out = np.empty((steps + 1, x.size))
    out[0] = x
    diverged, t_div, last = False, None, steps
    for k in range(steps):
        t = k * h
        k1 = dynamics(t, x)
        k2 = dynamics(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = dynamics(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = dynamics(t + h, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            diverged, t_div, last = True, (k + 1) * h, k
            break
        out[k + 1] = x
        if np.max(np.abs(x[watch]), initial=0.0) > B_div:
            diverged, t_div, last = True, (k + 1) * h, k + 1
            break
    t_grid = np.arange(last + 1) * h
    return Trajectory(t=t_grid, x=out[: last + 1], diverged=diverged, t_diverged=t_div)


def rk4_linear(A: np.ndarray, b_r: np.ndarray, ref: Callable[[float], float], x0, h: float,
               T: float, B_div: float = math.inf,
               watch: slice | Sequence[int] | None = None) -> Trajectory:
    """RK4 for ``x' = A x + b_r r(t)`` via its one-step propagator.

    For a linear right-hand side the four RK4 stages compose into
    ``x+ = Phi x + G [r(t), r(t+h/2), r(t+h)]``; ``Phi`` and ``G`` are formed
    once by pushing the stage recursion through matrices, so the iterates are
    those of the classical scheme.  Divergence handling matches
    ``rk4_integrate``.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    if T < h:
        raise ValueError("horizon shorter than one step")
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    b_r = np.asarray(b_r, dtype=float).reshape(n)
    S = np.hstack([np.eye(n), np.zeros((n, 3))])
    E = np.eye(n + 3)[n:]  # selectors of r(t), r(t+h/2), r(t+h)
    k1 = A @ S + np.outer(b_r, E[0])
    k2 = A @ (S + 0.5 * h * k1) + np.outer(b_r, E[1])
    k3 = A @ (S + 0.5 * h * k2) + np.outer(b_r, E[1])
    k4 = A @ (S + h * k3) + np.outer(b_r, E[2])
    step = S + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    Phi, G = step[:, :n], step[:, n:]

    steps = int(round(T / h))
    times = np.arange(steps + 1) * h
    r_node = np.array([ref(t) for t in times])
    r_mid = np.array([ref(t + 0.5 * h) for t in times[:-1]])
    forcing = G @ np.vstack([r_node[:-1], r_mid, r_node[1:]])
    watch = slice(None) if watch is None else watch
    out = np.empty((steps + 1, n))
    x = np.array(x0, dtype=float)
    out[0] = x
    diverged, t_div, last = False, None, steps
    chunk = 512
    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, steps, chunk):
            stop = min(start + chunk, steps)
            for k in range(start, stop):
                x = Phi @ x + forcing[:, k]
                out[k + 1] = x
            block = out[start + 1 : stop + 1]
            bad = ~np.all(np.isfinite(block), axis=1)
            big = np.max(np.abs(block[:, watch]), axis=1, initial=0.0) > B_div
            hit = np.flatnonzero(bad | big)
            if hit.size:
                k = start + int(hit[0])
                diverged, t_div = True, times[k + 1]
                last = k if bad[hit[0]] and not big[hit[0]] else k + 1
                break
    return Trajectory(t=times[: last + 1], x=out[: last + 1], diverged=diverged, t_diverged=t_div)


@dataclass(frozen=True, eq=False)
class _LinearLoop:
    """z' = A z + b_r r;  u = u_state z + u_ref r;  e = e_state z."""

    A: np.ndarray
    b_r: np.ndarray
    n_x: int
    n_c: int
    u_state: np.ndarray
    u_ref: float
    e_state: np.ndarray

    def run(self, ref: Reference, z0, h: float, T: float, B_div: float) -> Trajectory:
        raw = rk4_linear(self.A, self.b_r, ref, z0, h, T, B_div, watch=slice(0, self.n_x))
        Z = raw.x
        r = np.array([ref(t) for t in raw.t])
        return Trajectory(
            t=raw.t,
            x=Z[:, : self.n_x],
            c=Z[:, self.n_x : self.n_x + self.n_c],
            u=Z @ self.u_state + self.u_ref * r,
            r=r,
            e=Z @ self.e_state,
            diverged=raw.diverged,
            t_diverged=raw.t_diverged,
            signals={"state": Z},
        )


def _block(rows) -> np.ndarray:
    return np.block(rows)


def _e1(n: int) -> np.ndarray:
    v = np.zeros(n)
    if n:
        v[0] = 1.0
    return v


# ---------------------------------------------------------------- state feedback

def simulate_sf_ideal(spec: SfPlantSpec, filt: StateSpace, ref: Reference, h: float = DEFAULT_STEP,
                      T: float = DEFAULT_HORIZON, x0=None, xi0=None,
                      B_div: float = DEFAULT_DIVERGENCE_BOUND) -> Trajectory:
    """Known-parameter filtered MRC.  State ``[x, xi, x_m]``; e = x1 - x_m1."""
    n, nf = spec.n, filt.n_states
    theta = sf_mrc_gain(spec)
    cl = assemble_sf_closed_loop(spec, filt, theta)
    A_m, b = spec.model_matrix(), spec.input_vector()
    A = _block([[cl.A_cl, np.zeros((n + nf, n))],
                [np.zeros((n, n + nf)), A_m]])
    b_r = np.concatenate([cl.input_map, b])
    u_state = np.concatenate([np.zeros(n), filt.C[0], np.zeros(n)])
    e_state = np.concatenate([_e1(n), np.zeros(nf), -_e1(n)])
    loop = _LinearLoop(A, b_r, n, nf, u_state, 0.0, e_state)
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    xi0 = np.zeros(nf) if xi0 is None else np.asarray(xi0, dtype=float)
    return loop.run(ref, np.concatenate([x0, xi0, np.zeros(n)]), h, T, B_div)


def sf_initial_chi(filt: StateSpace, b, x0, xi0=None) -> np.ndarray:
    """chi(0) = b_f b^T x(0) + xi(0)."""
    b_f = filt.B[:, 0]
    xi0 = np.zeros(filt.n_states) if xi0 is None else np.asarray(xi0, dtype=float)
    return b_f * float(np.dot(b, x0)) + xi0


def simulate_sf_pirc(spec: SfPlantSpec, filt: StateSpace, ref: Reference, h: float = DEFAULT_STEP,
                     T: float = DEFAULT_HORIZON, x0=None, chi0=None, xi0=None,
                     B_div: float = DEFAULT_DIVERGENCE_BOUND,
                     controller: StateSpace | None = None) -> Trajectory:
    """Plant ``spec.a`` driven by the parameter-free controller.

    The controller is built from ``spec.a_m`` and ``filt`` alone, before the
    plant coefficients are read.  ``chi0`` defaults to the image of
    ``(x0, xi0)`` under the coordinate change.
    """
    if controller is None:
        controller = build_sf_pirc_controller(spec.a_m, filt)
    n, nc = spec.n, controller.n_states
    A_p, b = spec.plant_matrix(), spec.input_vector()
    A_m = spec.model_matrix()
    D_x, d_r = controller.D[0, :n], controller.D[0, n]
    C_c = controller.C[0]
    B_x, B_r = controller.B[:, :n], controller.B[:, n]
    A = _block([
        [A_p + np.outer(b, D_x), np.outer(b, C_c), np.zeros((n, n))],
        [B_x, controller.A, np.zeros((nc, n))],
        [np.zeros((n, n + nc)), A_m],
    ])
    b_r = np.concatenate([b * d_r, B_r, b])
    u_state = np.concatenate([D_x, C_c, np.zeros(n)])
    e_state = np.concatenate([_e1(n), np.zeros(nc), -_e1(n)])
    loop = _LinearLoop(A, b_r, n, nc, u_state, d_r, e_state)
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    if chi0 is None:
        chi0 = sf_initial_chi(filt, b, x0, xi0)
    return loop.run(ref, np.concatenate([x0, np.asarray(chi0, dtype=float), np.zeros(n)]), h, T, B_div)


@dataclass(frozen=True, eq=False)
class AdaptiveConfig:
    gamma: float = 10.0
    Q: np.ndarray | None = None
    theta_hat0: np.ndarray | None = None
    B_div: float = DEFAULT_DIVERGENCE_BOUND
    h: float = DEFAULT_STEP
    T_final: float = DEFAULT_HORIZON

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("adaptation gain must be positive")
        if not self.h > 0:
            raise ValueError("step size must be positive")
        if self.Q is not None:
            Q = np.asarray(self.Q, dtype=float)
            if not np.allclose(Q, Q.T) or np.min(np.linalg.eigvalsh(Q)) <= 0:
                raise ValueError("Q must be symmetric positive definite")

    def to_json(self) -> dict:
        return {
            "gamma": self.gamma,
            "Q": None if self.Q is None else np.asarray(self.Q, dtype=float).tolist(),
            "theta_hat0": None if self.theta_hat0 is None else np.asarray(self.theta_hat0, dtype=float).tolist(),
            "B_div": self.B_div,
            "h": self.h,
            "T_final": self.T_final,
        }


def lyapunov_matrix(A_m: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """P solving A_m^T P + P A_m = -Q."""
    return scipy.linalg.solve_continuous_lyapunov(A_m.T, -Q)


@numba.njit(cache=True)
def _adaptive_rhs(z, r, A_lin, b_ref, b_tx, Pb, gamma, n, nf):
    dz = A_lin @ z + b_ref * r
    ith = 2 * n + nf
    ixh = n + nf
    tx = 0.0
    pe = 0.0
    for i in range(n):
        tx += z[ith + i] * z[i]
        pe += Pb[i] * (z[ixh + i] - z[i])
    dz += b_tx * tx
    for i in range(n):
        dz[ith + i] = gamma * pe * z[i]
    return dz


@numba.njit(cache=True)
def _adaptive_rk4(A_lin, b_ref, b_tx, Pb, gamma, n, nf, r_node, r_mid, z0, h, steps, B_div):
    """RK4 loop of the adaptive closed loop.

    Returns (samples, last index, status) with status 0 = completed,
    1 = plant state exceeded B_div (sample kept), 2 = non-finite (dropped).
    """
    out = np.empty((steps + 1, z0.size))
    out[0] = z0
    z = z0.copy()
    for k in range(steps):
        k1 = _adaptive_rhs(z, r_node[k], A_lin, b_ref, b_tx, Pb, gamma, n, nf)
        k2 = _adaptive_rhs(z + 0.5 * h * k1, r_mid[k], A_lin, b_ref, b_tx, Pb, gamma, n, nf)
        k3 = _adaptive_rhs(z + 0.5 * h * k2, r_mid[k], A_lin, b_ref, b_tx, Pb, gamma, n, nf)
        k4 = _adaptive_rhs(z + h * k3, r_node[k + 1], A_lin, b_ref, b_tx, Pb, gamma, n, nf)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(z)):
            return out, k, 2
        out[k + 1] = z
        for i in range(n):
            if abs(z[i]) > B_div:
                return out, k + 1, 1
    return out, steps, 0


def simulate_sf_adaptive(spec: SfPlantSpec, filt: StateSpace, cfg: AdaptiveConfig, ref: Reference,
                         x0=None, xi0=None) -> Trajectory:
    """Certainty-equivalence filtered MRC with a series-parallel state predictor.

    Predictor ``xhat' = A_m xhat - b thetahat^T x + b u``; with
    ``xtilde = xhat - x`` the error obeys ``xtilde' = A_m xtilde - b thetatilde^T x``
    and the update ``thetahat' = gamma x (b^T P xtilde)`` makes
    ``xtilde^T P xtilde + |thetatilde|^2 / gamma`` nonincreasing.
    State ``[x, xi, xhat, thetahat, x_m]``.
    """
    n, nf = spec.n, filt.n_states
    A_p, A_m, b = spec.plant_matrix(), spec.model_matrix(), spec.input_vector()
    A_f, b_f, c_f = filt.A, filt.B[:, 0], filt.C[0]
    Q = np.eye(n) if cfg.Q is None else np.asarray(cfg.Q, dtype=float)
    Pb = lyapunov_matrix(A_m, Q) @ b
    gamma = cfg.gamma
    theta = sf_mrc_gain(spec)
    th0 = np.zeros(n) if cfg.theta_hat0 is None else np.asarray(cfg.theta_hat0, dtype=float)
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    xi0 = np.zeros(nf) if xi0 is None else np.asarray(xi0, dtype=float)
    ix, ixi, ixh, ith, ixm = (slice(0, n), slice(n, n + nf), slice(n + nf, 2 * n + nf),
                              slice(2 * n + nf, 3 * n + nf), slice(3 * n + nf, 4 * n + nf))

    # linear part of the vector field; theta_hat enters only bilinearly
    size = 4 * n + nf
    A_lin = np.zeros((size, size))
    A_lin[ix, ix] = A_p
    A_lin[ix, ixi] = np.outer(b, c_f)
    A_lin[ixi, ixi] = A_f
    A_lin[ixh, ixh] = A_m
    A_lin[ixh, ixi] = np.outer(b, c_f)
    A_lin[ixm, ixm] = A_m
    b_ref = np.zeros(size)
    b_ref[ixi] = b_f
    b_ref[ixm] = b
    # coupling of the scalar thetahat^T x into the xi and xhat rows
    b_tx = np.zeros(size)
    b_tx[ixi] = b_f
    b_tx[ixh] = -b

    z0 = np.concatenate([x0, xi0, x0, th0, np.zeros(n)])
    steps = int(round(cfg.T_final / cfg.h))
    if steps < 1:
        raise ValueError("horizon shorter than one step")
    times = np.arange(steps + 1) * cfg.h
    r_node = np.array([ref(t) for t in times])
    r_mid = np.array([ref(t + 0.5 * cfg.h) for t in times[:-1]])
    out, last, status = _adaptive_rk4(A_lin, b_ref, b_tx, Pb, float(gamma), n, nf,
                                      r_node, r_mid, z0, float(cfg.h), steps, float(cfg.B_div))
    t_div = None
    if status == 1:
        t_div = float(times[last])
    elif status == 2:
        t_div = float(times[last + 1])
    Z = out[: last + 1]
    X, TH = Z[:, ix], Z[:, ith]
    r = r_node[: last + 1]
    return Trajectory(
        t=times[: last + 1],
        x=X,
        c=np.hstack([Z[:, ixi], Z[:, ixh]]),
        u=Z[:, ixi] @ c_f,
        r=r,
        e=Z[:, 0] - Z[:, 3 * n + nf],
        theta_hat=TH,
        diverged=status != 0,
        t_diverged=t_div,
        signals={"state": Z, "theta_tilde_x": np.einsum("ij,ij->i", TH - theta, X),
                 "prediction_error": Z[:, ixh] - X},
    )


# ---------------------------------------------------------------- output feedback

def simulate_ofb(spec: OfPlantSpec, controller: str, f: FilterSpec | None, ref: Reference,
                 h: float = DEFAULT_STEP, T: float = DEFAULT_HORIZON, x0=None, c0=None,
                 B_div: float = DEFAULT_DIVERGENCE_BOUND, theta=None) -> Trajectory:
    """Plant ``D y = N u`` under the filtered MRC (``"ideal"``) or its PIRC.

    ``controller="ideal"`` with ``f=None`` runs the unfiltered law
    ``u = theta^T phi``.  ``controller="pirc"`` refuses to run unless the filter
    passes C1/C2.  Controller states: ideal ``[w_u, w_y, xi]``, pirc ``[w, z]``.
    The tracking error uses a separate reference-model state.  ``theta``
    overrides the matching solution of the ideal controller.
    """
    plant = companion_realization(spec.D, spec.N)
    n = plant.n_states
    A_p, b_p, c_p = plant.A, plant.B[:, 0], plant.C[0]
    model = companion_realization(spec.D_m, Poly([1.0]))
    A_m, b_m, c_m = model.A, model.B[:, 0], model.C[0]
    nm = model.n_states

    if controller == "ideal":
        theta = monopoli_theta(spec) if theta is None else np.asarray(theta, dtype=float)
        reg = regressor_realization(spec)
        nw = reg.n_states
        th_w, th_y, th_r = theta[:nw], theta[nw], theta[nw + 1]
        B_u, B_y = reg.B[:, 0], reg.B[:, 1]
        if f is None:
            # u = th_w w + th_y y + th_r r
            u_state_core = np.concatenate([th_y * c_p, th_w])
            A_core = _block([
                [A_p + th_y * np.outer(b_p, c_p), np.outer(b_p, th_w)],
                [np.outer(B_y, c_p) + th_y * np.outer(B_u, c_p), reg.A + np.outer(B_u, th_w)],
            ])
            b_core = np.concatenate([b_p * th_r, B_u * th_r])
            u_ref = th_r
            nc = nw
        else:
            filt = filter_realization(f)
            A_f, b_f, c_f = filt.A, filt.B[:, 0], filt.C[0]
            nf = filt.n_states
            A_core = _block([
                [A_p, np.zeros((n, nw)), np.outer(b_p, c_f)],
                [np.outer(B_y, c_p), reg.A, np.outer(B_u, c_f)],
                [th_y * np.outer(b_f, c_p), np.outer(b_f, th_w), A_f],
            ])
            b_core = np.concatenate([np.zeros(n + nw), b_f * th_r])
            u_state_core = np.concatenate([np.zeros(n + nw), c_f])
            u_ref = 0.0
            nc = nw + nf
    elif controller == "pirc":
        if f is None:
            raise SimulationRefused("the unfiltered output-feedback MRC has no parameter-free realization")
        report = check_filter_conditions(f, spec.D_m)
        if not report.is_pirc:
            failed = [c for c, ok in (("C1", report.proper), ("C2", report.stable)) if not ok]
            raise SimulationRefused(f"filter fails {', '.join(failed)}; no parameter-free controller")
        ctrl = ofb_pirc_controller(report.heu, spec.D_m)
        nc = ctrl.n_states
        D_y, C_c = ctrl.D[0, 0], ctrl.C[0]
        A_core = _block([
            [A_p + D_y * np.outer(b_p, c_p), np.outer(b_p, C_c)],
            [np.outer(ctrl.B[:, 0], c_p), ctrl.A],
        ])
        b_core = np.concatenate([np.zeros(n), ctrl.B[:, 1]])
        u_state_core = np.concatenate([D_y * c_p, C_c])
        u_ref = ctrl.D[0, 1]
    else:
        raise ValueError(f"unknown controller {controller!r}")

    size = n + nc
    A = _block([[A_core, np.zeros((size, nm))], [np.zeros((nm, size)), A_m]])
    b_r = np.concatenate([b_core, b_m])
    u_state = np.concatenate([u_state_core, np.zeros(nm)])
    e_state = np.concatenate([c_p, np.zeros(nc), -c_m])
    loop = _LinearLoop(A, b_r, n, nc, u_state, u_ref, e_state)
    z0 = np.zeros(size + nm)
    if x0 is not None:
        z0[:n] = np.asarray(x0, dtype=float)
    if c0 is not None:
        z0[n : n + nc] = np.asarray(c0, dtype=float)
    traj = loop.run(ref, z0, h, T, B_div)
    traj.signals["y"] = traj.x @ c_p
    traj.signals["closed_loop_A"] = A
    return traj


def consistent_initial_state(spec: OfPlantSpec, e0: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Plant and regressor states from which the ideal loop has no filter transient.

    With r = 0 the target error is the free response ``h`` of ``D_m(p) h = 0``
    with ``h(0) = e0`` and vanishing derivatives up to order d-1.  Writing
    ``h = sum c_i exp(mu_i t)`` over the (distinct) roots of D_m, every signal of
    the loop is a sum of the same exponentials: ``y = h``, the plant's first
    companion state is ``sum c_i / N(mu_i)``, ``u = sum c_i D(mu_i)/N(mu_i)`` and
    each regressor state is the filtered exponential ``mu^k / lambda(mu)``.
    Returns ``(x_p0, w0)`` with ``w0 = [w_u; w_y]``.
    """
    mu = roots(spec.D_m)
    d, n = spec.d, spec.n
    if d > 1 and np.min(np.abs(mu[:, None] - mu[None, :]) + np.eye(d) * 1e9) < 1e-6:
        raise ValueError("D_m must have distinct roots")
    V = np.vander(mu, d, increasing=True).T  # V[k, i] = mu_i^k
    rhs = np.zeros(d, dtype=complex)
    rhs[0] = e0
    c = np.linalg.solve(V, rhs)
    x1 = c / spec.N(mu)
    x_p0 = np.array([np.sum(x1 * mu**k) for k in range(n)])
    u_amp = x1 * spec.D(mu)
    lam = spec.lam(mu)
    w_u = np.array([np.sum(u_amp * mu**k / lam) for k in range(n - 1)])
    w_y = np.array([np.sum(c * mu**k / lam) for k in range(n - 1)])
    return x_p0.real, np.concatenate([w_u, w_y]).real


# ---------------------------------------------------------------- analysis helpers

def log_slope(t: np.ndarray, values: np.ndarray) -> float:
    """Least-squares slope of log|values| against t."""
    mag = np.abs(np.asarray(values, dtype=float))
    keep = mag > 0
    return float(np.polyfit(t[keep], np.log(mag[keep]), 1)[0])


def growth_rate(traj: Trajectory, start_fraction: float = 0.5) -> float:
    """Log-slope of the plant-state norm over the tail of a run."""
    norms = np.linalg.norm(traj.x, axis=1)
    k = int(len(traj.t) * start_fraction)
    return log_slope(traj.t[k:], norms[k:])


def sf_closed_loop_poly(spec: SfPlantSpec, filt: StateSpace) -> Poly:
    """char_poly of A_cl(theta) at the true theta."""
    cl = assemble_sf_closed_loop(spec, filt, sf_mrc_gain(spec))
    return char_poly(cl.A_cl)


def find_destabilizing_instance(rng: np.random.Generator, max_tries: int = 1000,
                                n: int = 1) -> tuple[SfPlantSpec, FilterSpec]:
    """Random search for (plant, filter) whose closed loop is not Hurwitz.

    Small first-order filters ``k/(s+k)`` and plants far from the model are
    drawn until ``char_poly(A_cl(theta))`` fails the Routh test with at least
    one root clearly in the right half plane.
    """
    for _ in range(max_tries):
        a_m_roots = -rng.uniform(0.5, 3.0, size=n)
        a_m = Poly.from_roots(a_m_roots).as_array()[:-1]
        a = a_m + rng.uniform(-8.0, 2.0, size=n)
        k = rng.uniform(0.2, 3.0)
        f = FilterSpec(Poly([k]), Poly([k, 1.0]))
        spec = SfPlantSpec(tuple(a), tuple(a_m))
        cp = sf_closed_loop_poly(spec, filter_realization(f))
        if not hurwitz_test(cp) and np.max(roots(cp).real) > 0.2:
            return spec, f
    raise RuntimeError("no destabilizing instance found")
