"""Riccati observer for body-frame velocity and gravity.

State (v_hat, z) follows

    v_hat' = -w x v_hat + a + z + K_v y
    z'     = -w x z + K_g y,        y = -pi_eta v_hat,

with K = P C^T D and P driven by the continuous Riccati equation
P' = A P + P A^T - P C^T D C P + S.

Inputs are held over a step, either constant (zero-order hold) or linearly
interpolated between the current and next sample (first-order hold).
"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .geometry import cross, exp_so3, proj, skew

ArrayOrScalar = Union[float, np.ndarray]


@dataclass(frozen=True)
class VelGravState:
    v_hat_B: np.ndarray
    z: np.ndarray


@dataclass(frozen=True)
class RiccatiConfig:
    S: ArrayOrScalar = 30.0  # scalar means S * I6
    d0: float = 5.0
    d1: float = 0.0
    P0: ArrayOrScalar = 1.0
    spd_floor: float = 1e-9
    min_speed: float = 1e-3
    integrator: str = "rk4"  # "rk4", "lawson" (integrating-factor RK4) or "euler"
    cre_method: str = "euler"  # "euler" or "rk4" for the Riccati equation

    def __post_init__(self):
        if self.d0 < 0 or self.d1 < 0:
            raise ValueError("d0 and d1 must be non-negative")
        if self.d0 == 0 and self.d1 == 0:
            raise ValueError("D must not vanish identically")
        if self.integrator not in ("rk4", "lawson", "euler"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.cre_method not in ("euler", "rk4"):
            raise ValueError(f"unknown CRE method {self.cre_method!r}")
        for name in ("S", "P0"):
            M = _as_matrix(getattr(self, name))
            if not np.allclose(M, M.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M).min() <= 0:
                raise ValueError(f"{name} must be positive definite")

    @property
    def S_matrix(self):
        return _as_matrix(self.S)

    @property
    def P0_matrix(self):
        return _as_matrix(self.P0)


def _as_matrix(M):
    if np.isscalar(M):
        return float(M) * np.eye(6)
    M = np.asarray(M, dtype=float)
    if M.shape != (6, 6):
        raise ValueError("expected a scalar or a 6x6 matrix")
    return M


def output_y(v_hat_B, eta_v):
    return -proj(eta_v) @ v_hat_B


def state_matrices(omega_m, eta_v):
    """A = [[-w^x, I], [0, -w^x]] and C = [pi_eta, 0]."""
    W = skew(omega_m)
    A = np.zeros((6, 6))
    A[:3, :3] = -W
    A[:3, 3:] = np.eye(3)
    A[3:, 3:] = -W
    C = np.zeros((3, 6))
    C[:, :3] = proj(eta_v)
    return A, C


def build_D(eta_v, cfg):
    return cfg.d0 * proj(eta_v) + cfg.d1 * np.eye(3)


def gain_K(P, C, D):
    return P @ C.T @ D


def floor_spd(P, floor):
    """Symmetrize and clamp eigenvalues from below."""
    P = 0.5 * (P + P.T)
    w, V = np.linalg.eigh(P)
    if w.min() >= floor:
        return P
    P = (V * np.maximum(w, floor)) @ V.T
    return 0.5 * (P + P.T)


def cre_step(P, A, C, D, cfg, dt):
    """One CRE step with A, C, D held, then symmetrization and eigenvalue floor.

    Explicit Euler by default; cfg.cre_method = "rk4" selects classical RK4.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    S = cfg.S_matrix
    M = C.T @ D @ C

    def f(X):
        return A @ X + X @ A.T - X @ M @ X + S

    if getattr(cfg, "cre_method", "euler") == "rk4":
        k1 = f(P)
        k2 = f(P + 0.5 * dt * k1)
        k3 = f(P + 0.5 * dt * k2)
        k4 = f(P + dt * k3)
        P_new = P + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    else:
        P_new = P + dt * f(P)
    return floor_spd(P_new, cfg.spd_floor)


# -- translational propagation ------------------------------------------------
#
# The propagated vector is x = (xi_B, v_B, z) in R^9; position rides along so
# that the cascade can integrate it consistently with the velocity.

def _lerp(u0, u1, s):
    return u0 if u1 is None else u0 + s * (u1 - u0)


def _rhs(x, w, a, Kv, Kg, Pi):
    xi, v, z = x[:3], x[3:6], x[6:]
    y = -Pi @ v
    return np.concatenate([
        -cross(w, xi) + v,
        -cross(w, v) + a + z + Kv @ y,
        -cross(w, z) + Kg @ y,
    ])


def step_rate(w0, w1, dt):
    """Constant rate w with exp(dt w) = rotation_factor(w0, w1, 1, dt)."""
    if w1 is None:
        return w0
    return 0.5 * (w0 + w1) + (dt / 12.0) * cross(w0, w1 - w0)


def rotation_factor(w0, w1, s, dt):
    """E(s dt) solving E' = E w^x, E(0) = I, under the input hold.

    For a linearly varying w the first two Magnus terms are kept, so the
    factor is accurate to third order in dt even when w changes direction.
    """
    if w1 is None:
        return exp_so3(s * dt * w0)
    dw = w1 - w0
    return exp_so3(dt * (s * w0 + 0.5 * s * s * dw + (s**3 * dt / 12.0) * cross(w0, dw)))


STAGES = (0.0, 0.5, 1.0)


def stage_projectors(eta0, eta1=None):
    """pi_eta at the RK4 stage fractions.

    With eta1 the direction is interpolated along the step (normalized
    linear interpolation); a sign change across the step falls back to eta0.
    """
    if eta0 is None:
        Z = np.zeros((3, 3))
        return {s: Z for s in STAGES}
    P0 = proj(eta0)
    if eta1 is None or eta0 @ eta1 <= 0:
        return {s: P0 for s in STAGES}
    return {0.0: P0, 0.5: proj(eta0 + eta1), 1.0: proj(eta1)}


def propagate_translational(x, w0, a0, K, dt, method="rk4", w1=None, a1=None, Pis=None):
    """Advance x = (xi_B, v_B, z) by dt with the gain K held constant.

    w1, a1 are the next samples for first-order hold; None means zero-order
    hold. Pis maps stage fraction to the output projector (see
    stage_projectors); None disables the output injection.
    """
    Kv, Kg = K[:3], K[3:]
    if Pis is None:
        Pis = stage_projectors(None)
    if method == "euler":
        return x + dt * _rhs(x, w0, a0, Kv, Kg, Pis[0.0])
    if method == "rk4":
        wm, am = _lerp(w0, w1, 0.5), _lerp(a0, a1, 0.5)
        we, ae = _lerp(w0, w1, 1.0), _lerp(a0, a1, 1.0)
        k1 = _rhs(x, w0, a0, Kv, Kg, Pis[0.0])
        k2 = _rhs(x + 0.5 * dt * k1, wm, am, Kv, Kg, Pis[0.5])
        k3 = _rhs(x + 0.5 * dt * k2, wm, am, Kv, Kg, Pis[0.5])
        k4 = _rhs(x + dt * k3, we, ae, Kv, Kg, Pis[1.0])
        return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if method == "lawson":
        # Integrating factor: with E' = E w^x, u = E x removes the -w x terms.
        E = {s: rotation_factor(w0, w1, s, dt) for s in STAGES}
        acc = {s: _lerp(a0, a1, s) for s in STAGES}

        def f(u, s):
            Es = E[s]
            ub = u.reshape(3, 3) @ Es  # rows E^T u_i
            y = -Pis[s] @ ub[1]
            return np.concatenate([
                u[3:6],
                Es @ (acc[s] + Kv @ y) + u[6:],
                Es @ (Kg @ y),
            ])

        k1 = f(x, 0.0)
        k2 = f(x + 0.5 * dt * k1, 0.5)
        k3 = f(x + 0.5 * dt * k2, 0.5)
        k4 = f(x + dt * k3, 1.0)
        u_new = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        return (u_new.reshape(3, 3) @ E[1.0]).reshape(9)
    raise ValueError(f"unknown integrator {method!r}")


def measurement_matrices(P, eta_v, cfg):
    """(K, D); both zero when no direction is available for this step."""
    if eta_v is None:
        return np.zeros((6, 3)), np.zeros((3, 3))
    D = build_D(eta_v, cfg)
    C = np.zeros((3, 6))
    C[:, :3] = proj(eta_v)
    return gain_K(P, C, D), D


def advance_riccati(P, omega_m, eta_v, D, cfg, dt):
    A = np.zeros((6, 6))
    W = skew(omega_m)
    A[:3, :3] = -W
    A[:3, 3:] = np.eye(3)
    A[3:, 3:] = -W
    C = np.zeros((3, 6))
    if eta_v is not None:
        C[:, :3] = proj(eta_v)
    return cre_step(P, A, C, D, cfg, dt)


def observer_step(state, omega_m, accel_m, eta_v: Optional[np.ndarray], P, cfg, dt,
                  omega_next=None, accel_next=None, eta_next=None):
    """Advance (v_hat, z) and P by dt.

    eta_v=None skips the measurement update (K = 0 and no information in
    the CRE), used when the direction is undefined. The *_next arguments
    are the samples at the end of the step, for first-order hold.
    Returns (state, P).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    K, D = measurement_matrices(P, eta_v, cfg)
    x = np.concatenate([np.zeros(3), state.v_hat_B, state.z])
    x = propagate_translational(x, omega_m, accel_m, K, dt, cfg.integrator,
                                omega_next, accel_next, stage_projectors(eta_v, eta_next))
    P_new = advance_riccati(P, omega_m, eta_v, D, cfg, dt)
    return VelGravState(x[3:6], x[6:]), P_new
