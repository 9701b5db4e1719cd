"""Complementary attitude filter on SO(3) and the cascade integrators.

The filter uses the gravity estimate z from the Riccati stage and,
optionally, a magnetometer direction:

    R_hat' = R_hat w^x - sigma_R^x R_hat,
    sigma_R = k_z g x (R_hat z) + k_m m_bar x (R_hat m_bar^B),

with m_bar = pi_g m and m_bar^B = pibar_z m^B, so the magnetometer only
acts about the gravity axis. The cascade can be propagated either in the
body frame (Riccati states, then attitude) or fully in the inertial frame.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import cross, exp_so3, orthonormalize, proj, proj_bar
from .riccati import (
    STAGES, _lerp, advance_riccati, measurement_matrices, rotation_factor, stage_projectors, step_rate,
)
from .sim import G_VEC, M_REF

COLLINEAR_WARN_DEG = 1.0


@dataclass(frozen=True)
class AttitudeConfig:
    k_z: float = 1.0
    k_m: float = 0.1
    m_ref: np.ndarray = field(default_factory=lambda: M_REF.copy())
    g_vec: np.ndarray = field(default_factory=lambda: G_VEC.copy())

    def __post_init__(self):
        if self.k_z <= 0:
            raise ValueError("k_z must be positive")
        if self.k_m < 0:
            raise ValueError("k_m must be non-negative")
        m = np.asarray(self.m_ref, dtype=float)
        g = np.asarray(self.g_vec, dtype=float)
        if abs(np.linalg.norm(m) - 1.0) > 1e-9:
            raise ValueError("m_ref must be a unit vector")
        if np.linalg.norm(g) < 1e-12:
            raise ValueError("g_vec must be nonzero")
        cos = abs(m @ g) / np.linalg.norm(g)
        if self.k_m > 0 and np.degrees(np.arccos(min(cos, 1.0))) < COLLINEAR_WARN_DEG:
            warnings.warn("m_ref is nearly collinear with gravity; yaw is poorly observable",
                          RuntimeWarning, stacklevel=2)


@dataclass(frozen=True)
class InertialCascadeState:
    R_hat: np.ndarray
    xi_hat: np.ndarray
    v_hat: np.ndarray
    z_I: np.ndarray


def sigma_R(R_hat, z, mB_m, cfg):
    g = np.asarray(cfg.g_vec, dtype=float)
    s = cfg.k_z * cross(g, R_hat @ z)
    if cfg.k_m > 0 and mB_m is not None:
        m_bar = proj(g) @ cfg.m_ref
        m_bar_B = proj_bar(z) @ mB_m
        s = s + cfg.k_m * cross(m_bar, R_hat @ m_bar_B)
    return s


def attitude_step(R_hat, omega_m, sigma, dt):
    """R_hat <- exp(-sigma dt) R_hat exp(w dt), re-orthonormalized."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return orthonormalize(exp_so3(-dt * np.asarray(sigma)) @ R_hat @ exp_so3(dt * np.asarray(omega_m)))


def position_step(xi_hat_B, omega_m, v_hat_B, dt):
    """RK4 step of xi_B' = -w x xi_B + v_B with w and v_B held constant."""
    if dt <= 0:
        raise ValueError("dt must be positive")

    def f(x):
        return -cross(omega_m, x) + v_hat_B

    k1 = f(xi_hat_B)
    k2 = f(xi_hat_B + 0.5 * dt * k1)
    k3 = f(xi_hat_B + 0.5 * dt * k2)
    k4 = f(xi_hat_B + dt * k3)
    return xi_hat_B + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def to_inertial(R_hat, xi_hat_B, v_hat_B, z):
    return R_hat @ xi_hat_B, R_hat @ v_hat_B, R_hat @ z


def to_body(R_hat, xi_hat, v_hat, z_I):
    return R_hat.T @ xi_hat, R_hat.T @ v_hat, R_hat.T @ z_I


def inertial_cascade_step(state, omega_m, accel_m, mB_m, eta_v, P, riccati_cfg, att_cfg, dt,
                          omega_next=None, accel_next=None, eta_next=None):
    """Advance (R_hat, xi_hat, v_hat, z_I) and P by dt in the inertial frame.

        R_hat' = R_hat w^x - sigma_R^x R_hat
        xi'    = -sigma_R x xi + v
        v'     = -sigma_R x v + z_I + R_hat (a + sigma_v)
        z_I'   = -sigma_R x z_I + R_hat sigma_g

    sigma_R and the gain are frozen over the step. The sigma_R rotation and
    the gyro rotation of R_hat are applied exactly through an integrating
    factor, and the remaining terms are integrated with RK4 (Lawson scheme).
    Returns (state, P).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    R0 = state.R_hat
    z_B = R0.T @ state.z_I
    sig = sigma_R(R0, z_B, mB_m, att_cfg)
    K, D = measurement_matrices(P, eta_v, riccati_cfg)
    Kv, Kg = K[:3], K[3:]
    Pis = stage_projectors(eta_v, eta_next)
    # u = Q(tau)^T x with Q(tau) = exp(-sigma tau); R_hat(tau) = Q R0 E(tau)
    E = {s: R0 @ rotation_factor(omega_m, omega_next, s, dt) for s in STAGES}
    acc = {s: _lerp(accel_m, accel_next, s) for s in STAGES}

    def f(u, s):
        RE = E[s]
        y = -Pis[s] @ (RE.T @ u[3:6])
        return np.concatenate([u[3:6], u[6:] + RE @ (acc[s] + Kv @ y), RE @ (Kg @ y)])

    u = np.concatenate([state.xi_hat, state.v_hat, state.z_I])
    k1 = f(u, 0.0)
    k2 = f(u + 0.5 * dt * k1, 0.5)
    k3 = f(u + 0.5 * dt * k2, 0.5)
    k4 = f(u + dt * k3, 1.0)
    u = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    Q = exp_so3(-dt * sig)
    x = (u.reshape(3, 3) @ Q.T).reshape(9)
    R_new = attitude_step(R0, step_rate(omega_m, omega_next, dt), sig, dt)
    P_new = advance_riccati(P, omega_m, eta_v, D, riccati_cfg, dt)
    return InertialCascadeState(R_new, x[:3], x[3:6], x[6:]), P_new


def lyapunov_value(R_hat, R, g_vec=G_VEC):
    """|g|^2 - g^T g_tilde with g_tilde = R_hat R^T g."""
    g = np.asarray(g_vec, dtype=float)
    return g @ g - g @ (R_hat @ (R.T @ g))
