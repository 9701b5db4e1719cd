"""Ground-truth rigid-body simulation and sensor synthesis.

Truth follows R' = R w^x, xi' = v, v' = R a + g, integrated with a
fixed-step RK4 whose attitude stages are exponential retractions. Sensors
(gyro, accelerometer, magnetometer, spherical bearings and their optical
flow) are sampled at a lower rate from the truth and corrupted with
i.i.d. Gaussian noise drawn from a per-simulator generator.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import exp_so3, normalize, orthonormalize

GRAVITY = 9.81
# Inertial gravity vector. The specific-force profile of trajectory B,
# a = R^T [.., .., 9.81 + ...], and the usual z(0) prior (~ -8.81 on the third axis)
# both place gravity along -e3, which is what keeps trajectory B bounded.
G_VEC = np.array([0.0, 0.0, -GRAVITY])
M_REF = np.array([0.0, 1.0, 1.0]) / np.sqrt(2.0)
MIN_RANGE = 1e-3

DEFAULT_LANDMARKS = np.array([
    [1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 2.0, 0.0],
    [0.0, -2.0, 0.0],
    [1.0, 1.0, -0.5],
    [-1.0, 1.0, -0.5],
    [2.0, 1.0, 1.0],
    [0.0, -2.0, -1.0],
])


@dataclass(frozen=True)
class TruthState:
    R: np.ndarray
    xi: np.ndarray
    v: np.ndarray
    t: float = 0.0

    @property
    def vB(self):
        return self.R.T @ self.v


@dataclass(frozen=True)
class BodyVelocityProfile:
    """Kinematic profile: body velocity and angular velocity given in closed form."""
    omega: Callable[[float], np.ndarray]
    velocity: Callable[[float], np.ndarray]
    velocity_rate: Callable[[float], np.ndarray]
    duration: float = 30.0
    kind = "body_velocity"


@dataclass(frozen=True)
class AccelProfile:
    """Dynamic profile: angular velocity and body specific force a(t, R)."""
    omega: Callable[[float], np.ndarray]
    accel: Callable[[float, np.ndarray], np.ndarray]
    duration: float = 30.0
    kind = "accel"


@dataclass(frozen=True)
class NoiseSpec:
    bearing_std: float = 0.0
    flow_std: float = 0.0
    gyro_std: float = 0.0
    accel_std: float = 0.0
    mag_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("bearing_std", "flow_std", "gyro_std", "accel_std", "mag_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class SensorFrame:
    t: float
    omega_m: np.ndarray
    accel_m: np.ndarray
    mag_m: np.ndarray
    bearings: np.ndarray  # (n, 3), unit rows
    bdots: np.ndarray  # (n, 3)
    valid: np.ndarray  # (n,) bool, False for landmarks inside MIN_RANGE


# -- reference trajectories --------------------------------------------------

def trajectory_A(duration=20.0):
    def omega(t):
        return np.array([0.1 * np.cos(0.1 * t), 0.05 * np.sin(0.15 * t), 0.05 * np.sin(0.1 * t)])

    def velocity(t):
        return np.array([0.4 * np.cos(0.2 * t), -0.4 * np.sin(0.4 * t), -0.5 * np.sin(t)])

    def velocity_rate(t):
        return np.array([-0.08 * np.sin(0.2 * t), -0.16 * np.cos(0.4 * t), -0.5 * np.cos(t)])

    return BodyVelocityProfile(omega, velocity, velocity_rate, duration)


def force_B(t):
    """Inertial-frame specific force R a of trajectory B."""
    return np.array([-5.0 * np.cos(3 * t), -5.0 * np.sin(4 * t), 9.81 + 5.0 * np.sin(4 * t)])


def trajectory_B(duration=30.0):
    def omega(t):
        return np.array([
            0.15 * np.sin(0.8 * t + np.pi),
            0.1 * np.sin(t),
            0.05 * np.sin(0.1 * t + np.pi / 3),
        ])

    def accel(t, R):
        return R.T @ force_B(t)

    return AccelProfile(omega, accel, duration)


def constant_velocity_profile(vB, omega=(0.0, 0.0, 0.0), duration=30.0):
    """Constant body velocity and angular velocity."""
    vB = np.array(vB, dtype=float)
    w = np.array(omega, dtype=float)
    return BodyVelocityProfile(
        omega=lambda t: w.copy(),
        velocity=lambda t: vB.copy(),
        velocity_rate=lambda t: np.zeros(3),
        duration=duration,
    )


def straight_line_profile(speed=1.0, duration=30.0):
    """Non-rotating vehicle with constant inertial velocity along e1."""
    return constant_velocity_profile([speed, 0.0, 0.0], duration=duration)


# -- truth propagation -------------------------------------------------------

def _accel_body(profile, t, R, vB, g_vec):
    if profile.kind == "accel":
        return profile.accel(t, R)
    w = profile.omega(t)
    return profile.velocity_rate(t) + np.cross(w, vB) - R.T @ g_vec


def propagate_truth(state, profile, dt, g_vec=G_VEC):
    """One RK4 step of the rigid-body kinematics.

    Each stage rotation is the retraction R exp(c dt w_prev). For a body
    velocity profile v is pinned to R v^B(t) and only xi is integrated.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    t, R, xi, v = state.t, state.R, state.xi, state.v
    h = 0.5 * dt
    w1 = profile.omega(t)
    w2 = profile.omega(t + h)
    w3 = w2
    w4 = profile.omega(t + dt)
    R2 = R @ exp_so3(h * w1)
    R3 = R @ exp_so3(h * w2)
    R4 = R @ exp_so3(dt * w3)
    R_new = orthonormalize(R @ exp_so3(dt / 6.0 * (w1 + 2 * w2 + 2 * w3 + w4)))
    if profile.kind == "body_velocity":
        k1 = R @ profile.velocity(t)
        k2 = R2 @ profile.velocity(t + h)
        k3 = R3 @ profile.velocity(t + h)
        k4 = R4 @ profile.velocity(t + dt)
        xi_new = xi + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        v_new = R_new @ profile.velocity(t + dt)
    else:
        a1 = R @ profile.accel(t, R) + g_vec
        v2 = v + h * a1
        a2 = R2 @ profile.accel(t + h, R2) + g_vec
        v3 = v + h * a2
        a3 = R3 @ profile.accel(t + h, R3) + g_vec
        v4 = v + dt * a3
        a4 = R4 @ profile.accel(t + dt, R4) + g_vec
        v_new = v + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        xi_new = xi + dt / 6.0 * (v + 2 * v2 + 2 * v3 + v4)
    return TruthState(R_new, xi_new, v_new, t + dt)


def initial_truth(profile, R0=None, xi0=None, v0=None):
    """Truth at t = 0; a body velocity profile fixes v0 = R0 v^B(0)."""
    R0 = np.eye(3) if R0 is None else np.asarray(R0, dtype=float)
    xi0 = np.zeros(3) if xi0 is None else np.asarray(xi0, dtype=float)
    if profile.kind == "body_velocity":
        v0 = R0 @ profile.velocity(0.0)
    else:
        v0 = np.zeros(3) if v0 is None else np.asarray(v0, dtype=float)
    return TruthState(R0, xi0, v0, 0.0)


def sample_truth(profile, state0, duration, truth_dt=1e-3, sample_dt=0.02, g_vec=G_VEC):
    """Integrate truth and return the states at every multiple of sample_dt."""
    ratio = sample_dt / truth_dt
    per_sample = int(round(ratio))
    if per_sample < 1 or abs(ratio - per_sample) > 1e-9 * ratio:
        raise ValueError("sample_dt must be an integer multiple of truth_dt")
    n_samples = int(round(duration / sample_dt)) + 1
    t0 = state0.t
    states = [state0]
    state = state0
    for k in range(1, n_samples):
        for j in range(per_sample):
            state = propagate_truth(state, profile, truth_dt, g_vec)
        # pin the clock to the grid to avoid accumulating float drift
        state = TruthState(state.R, state.xi, state.v, t0 + k * sample_dt)
        states.append(state)
    return states


# -- sensors -----------------------------------------------------------------

def observe_bearings(state, landmarks, min_range=MIN_RANGE):
    """Body-frame unit bearings to the landmarks.

    Returns (bearings, ranges, valid). Rows with range below min_range are
    flagged invalid and their bearing is left as zero.
    """
    Y = (np.asarray(landmarks, dtype=float) - state.xi) @ state.R  # rows R^T (Y_i - xi)
    ranges = np.linalg.norm(Y, axis=1)
    valid = ranges > min_range
    bearings = np.zeros_like(Y)
    bearings[valid] = Y[valid] / ranges[valid, None]
    return bearings, ranges, valid


def flow_from_geometry(b, rng_dist, vB, omega):
    """Spherical optical flow bdot = pi_b v^B / |Y| - w x b for rows of b.

    The translational term has the sign of a bearing that points from the
    landmark to the camera. For the camera-to-landmark bearings returned by
    observe_bearings the time derivative is -pi_b v^B / |Y| - w x b. The
    direction cost sees b only through pi_b, so estimates do not depend on
    which of the two conventions is used.
    """
    b = np.atleast_2d(b)
    pv = vB - (b @ vB)[:, None] * b
    return pv / np.asarray(rng_dist, dtype=float).reshape(-1, 1) - np.cross(omega, b)


def observe_flow(state, profile, landmarks, noise, rng, min_range=MIN_RANGE):
    """Noisy bearings and optical flow for all landmarks.

    Flow is evaluated analytically from the true range, body velocity and
    angular velocity. Bearing and flow noise are then drawn independently;
    noisy bearings are renormalized.
    """
    b, ranges, valid = observe_bearings(state, landmarks, min_range)
    n = len(b)
    nb = rng.standard_normal((n, 3)) * noise.bearing_std
    nf = rng.standard_normal((n, 3)) * noise.flow_std
    bdot = np.zeros_like(b)
    if valid.any():
        bdot[valid] = flow_from_geometry(b[valid], ranges[valid], state.vB, profile.omega(state.t))
    b_noisy = b + nb
    bdot_noisy = bdot + nf
    norms = np.linalg.norm(b_noisy, axis=1)
    ok = valid & (norms > 1e-12)
    b_noisy[ok] /= norms[ok, None]
    b_noisy[~ok] = 0.0
    bdot_noisy[~ok] = 0.0
    return b_noisy, bdot_noisy, ok


def true_imu(state, profile, g_vec=G_VEC):
    return profile.omega(state.t), _accel_body(profile, state.t, state.R, state.vB, g_vec)


def observe_imu(state, profile, noise, rng, g_vec=G_VEC):
    w, a = true_imu(state, profile, g_vec)
    w_m = w + rng.standard_normal(3) * noise.gyro_std
    a_m = a + rng.standard_normal(3) * noise.accel_std
    return w_m, a_m


def observe_mag(state, m_ref, noise, rng):
    return normalize(state.R.T @ m_ref + rng.standard_normal(3) * noise.mag_std)


def synthesize(states, profile, landmarks, noise, m_ref=M_REF, g_vec=G_VEC, min_range=MIN_RANGE):
    """Sensor frames for a list of truth samples.

    The generator is seeded from noise.seed, and draws happen in a fixed
    order (gyro, accel, mag, bearings, flow) even for zero stds, so a seed
    fully determines the stream.
    """
    rng = np.random.default_rng(noise.seed)
    frames = []
    for s in states:
        w_m, a_m = observe_imu(s, profile, noise, rng, g_vec)
        m_m = observe_mag(s, m_ref, noise, rng)
        b, bdot, ok = observe_flow(s, profile, landmarks, noise, rng, min_range)
        frames.append(SensorFrame(s.t, w_m, a_m, m_m, b, bdot, ok))
    return frames


def body_gravity(state, g_vec=G_VEC):
    return state.R.T @ g_vec

