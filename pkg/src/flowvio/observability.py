"""Observability Gramian and persistent-excitation checks for the Riccati stage.

The pair is A(t) = [[-w^x, I], [0, -w^x]], C(t) = [pi_eta(t), 0] with eta the
body-frame velocity direction. In inertial coordinates the transition
matrix is exp(Abar (s - t)) with Abar = [[0, I], [0, 0]], which gives the
factorization W(t, t+d) = Rbar(t)^T Wbar Rbar(t), Rbar = diag(R, R).
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import exp_so3, log_so3, proj, skew
from .sim import initial_truth, sample_truth

ABAR = np.block([[np.zeros((3, 3)), np.eye(3)], [np.zeros((3, 3)), np.zeros((3, 3))]])
H = np.hstack([np.eye(3), np.zeros((3, 3))])


@dataclass(frozen=True)
class Trajectory:
    """Callables of time: body angular velocity, attitude, inertial velocity."""
    omega: Callable[[float], np.ndarray]
    R: Callable[[float], np.ndarray]
    v: Callable[[float], np.ndarray]

    def eta_inertial(self, t):
        v = self.v(t)
        return v / np.linalg.norm(v)

    def eta_body(self, t):
        return self.R(t).T @ self.eta_inertial(t)


@dataclass(frozen=True)
class GramianReport:
    window: tuple
    W: np.ndarray
    min_eig: float
    pe_metric: float


def trajectory_from_states(profile, states):
    """Trajectory that interpolates a uniformly sampled truth log.

    Attitude is interpolated geodesically and velocity linearly, so queries
    on the sample grid return the logged values exactly.
    """
    t0 = states[0].t
    dt = states[1].t - states[0].t
    Rs = np.array([s.R for s in states])
    vs = np.array([s.v for s in states])
    n = len(states)

    def locate(t):
        x = (t - t0) / dt
        k = int(round(x))
        if abs(x - k) < 1e-9:
            return min(max(k, 0), n - 1), 0.0
        k = min(max(int(np.floor(x)), 0), n - 2)
        return k, x - k

    def R(t):
        k, f = locate(t)
        if f == 0.0:
            return Rs[k]
        return Rs[k] @ exp_so3(f * log_so3(Rs[k].T @ Rs[k + 1]))

    def v(t):
        k, f = locate(t)
        return vs[k] if f == 0.0 else (1 - f) * vs[k] + f * vs[k + 1]

    return Trajectory(profile.omega, R, v)


def simulate_trajectory(profile, duration, dt=1e-3, R0=None, xi0=None, v0=None):
    state0 = initial_truth(profile, R0, xi0, v0)
    return trajectory_from_states(profile, sample_truth(profile, state0, duration, dt, dt))


def state_matrix(omega):
    W = skew(omega)
    A = np.zeros((6, 6))
    A[:3, :3] = -W
    A[:3, 3:] = np.eye(3)
    A[3:, 3:] = -W
    return A


def _rk4_phi(A_of_t, t, h, Phi):
    k1 = A_of_t(t) @ Phi
    k2 = A_of_t(t + 0.5 * h) @ (Phi + 0.5 * h * k1)
    k3 = A_of_t(t + 0.5 * h) @ (Phi + 0.5 * h * k2)
    k4 = A_of_t(t + h) @ (Phi + h * k3)
    return Phi + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _grid(t0, t1, dt):
    n = max(int(round((t1 - t0) / dt)), 0)
    return np.linspace(t0, t1, n + 1) if n > 0 else np.array([t0])


def transition_matrix(A_of_t, t0, t1, dt):
    """Phi(t1, t0) by RK4 on Phi' = A(t) Phi with Phi(t0, t0) = I."""
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    if dt <= 0:
        raise ValueError("dt must be positive")
    Phi = np.eye(A_of_t(t0).shape[0])
    ts = _grid(t0, t1, dt)
    for a, b in zip(ts[:-1], ts[1:]):
        Phi = _rk4_phi(A_of_t, a, b - a, Phi)
    return Phi


def _trapezoid(values, ts):
    h = np.diff(ts)
    return sum(0.5 * hi * (values[i] + values[i + 1]) for i, hi in enumerate(h))


def _gramian(traj, t, delta, dt):
    if delta <= 0:
        raise ValueError("delta must be positive")
    ts = _grid(t, t + delta, dt)

    def A_of_t(s):
        return state_matrix(traj.omega(s))

    Phi = np.eye(6)
    integrand = []
    for i, s in enumerate(ts):
        if i > 0:
            Phi = _rk4_phi(A_of_t, ts[i - 1], s - ts[i - 1], Phi)
        CPhi = proj(traj.eta_body(s)) @ Phi[:3]
        integrand.append(CPhi.T @ CPhi)
    W = _trapezoid(integrand, ts) / delta
    return 0.5 * (W + W.T)


def pe_metric(traj, t, delta, dt=1e-3):
    """Minimum eigenvalue of the window average of pi over the inertial direction."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    ts = _grid(t, t + delta, dt)
    M = _trapezoid([proj(traj.eta_inertial(s)) for s in ts], ts) / delta
    return float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())


def gramian(traj, t, delta=5.0, dt=1e-3):
    W = _gramian(traj, t, delta, dt)
    return GramianReport((t, t + delta), W, float(np.linalg.eigvalsh(W).min()),
                         pe_metric(traj, t, delta, dt))


def inertial_gramian(traj, t, delta, dt=1e-3):
    """Wbar built from Abar and Cbar(s) = [pi_{eta_I(s)}, 0]."""
    ts = _grid(t, t + delta, dt)
    integrand = []
    for s in ts:
        Phibar = np.eye(6) + (s - t) * ABAR
        CPhi = proj(traj.eta_inertial(s)) @ Phibar[:3]
        integrand.append(CPhi.T @ CPhi)
    W = _trapezoid(integrand, ts) / delta
    return 0.5 * (W + W.T)


def gramian_factorization_check(traj, t, delta=5.0, dt=1e-3):
    """Frobenius norm of W - Rbar^T Wbar Rbar at the window start."""
    W = _gramian(traj, t, delta, dt)
    Wbar = inertial_gramian(traj, t, delta, dt)
    R = traj.R(t)
    Rbar = np.kron(np.eye(2), R)
    return float(np.linalg.norm(W - Rbar.T @ Wbar @ Rbar))


def kalman_rank(A=ABAR, C=H, tol=1e-9):
    """Rank of the observability matrix [C; C A; ...; C A^(n-1)]."""
    n = A.shape[0]
    blocks = [C]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    return int(np.linalg.matrix_rank(np.vstack(blocks), tol))
