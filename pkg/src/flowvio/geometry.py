"""Geometry on SO(3), so(3) and the unit sphere S^2.

Vectors are float arrays of shape (3,), rotations are (3, 3) arrays.
All functions are pure and never modify their inputs.
"""

import math

import numpy as np

SMALL_ANGLE = 1e-6
MIN_NORM = 1e-12

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])


def skew(u):
    """Return the matrix u^x such that u^x v = u x v."""
    x, y, z = u
    return np.array([
        [0.0, -z, y],
        [z, 0.0, -x],
        [-y, x, 0.0],
    ])


def cross(u, v):
    """u x v for two 3-vectors; much cheaper than np.cross on single vectors."""
    a, b, c = u
    x, y, z = v
    return np.array([b * z - c * y, c * x - a * z, a * y - b * x])


def unskew(W):
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def exp_so3(w):
    """Rodrigues' formula for exp(w^x).

    Below SMALL_ANGLE the second-order Taylor expansion is used so that the
    sin(t)/t and (1 - cos t)/t^2 coefficients never cancel catastrophically.
    """
    x, y, z = (float(c) for c in w)
    t2 = x * x + y * y + z * z
    theta = math.sqrt(t2)
    if theta < SMALL_ANGLE:
        a, b = 1.0, 0.5
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / t2
    # I + a W + b W^2 with W^2 = w w^T - |w|^2 I
    return np.array([
        [1.0 - b * (y * y + z * z), b * x * y - a * z, b * x * z + a * y],
        [b * x * y + a * z, 1.0 - b * (x * x + z * z), b * y * z - a * x],
        [b * x * z - a * y, b * y * z + a * x, 1.0 - b * (x * x + y * y)],
    ])


def log_so3(R):
    """Rotation vector of R, with angle in [0, pi]."""
    c = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    theta = np.arccos(c)
    if theta < SMALL_ANGLE:
        return unskew(R - R.T) / 2.0
    if np.pi - theta < 1e-6:
        # axis from the symmetric part, sign fixed by the antisymmetric residue
        B = 0.5 * (R + np.eye(3))
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(B[k, k])
        if axis @ unskew(R - R.T) < 0:
            axis = -axis
        return theta * axis
    return theta / (2.0 * np.sin(theta)) * unskew(R - R.T)


def orthonormalize(R):
    """Closest rotation matrix to R in the Frobenius sense (polar factor)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] = -U[:, -1]
        Q = U @ Vt
    return Q


def orthogonality_error(R):
    return np.linalg.norm(R.T @ R - np.eye(3))


def normalize(u):
    u = np.asarray(u, dtype=float)
    n = np.sqrt(u @ u)
    if n < MIN_NORM:
        raise ValueError(f"cannot normalize vector of norm {n:.3g}")
    return u / n


def proj(u):
    """Projector I - u u^T / |u|^2 onto the plane orthogonal to u."""
    u = np.asarray(u, dtype=float)
    n2 = u @ u
    if n2 < MIN_NORM**2:
        raise ValueError("proj(u) is undefined for |u| < 1e-12; use proj_bar")
    return np.eye(3) - np.outer(u, u) / n2


def proj_bar(u):
    """Scaled projector |u|^2 I - u u^T, which is well defined (zero) at u = 0."""
    u = np.asarray(u, dtype=float)
    return (u @ u) * np.eye(3) - np.outer(u, u)


def tangent_project(eta, g):
    """Component of g tangent to the sphere at the unit vector eta."""
    eta = np.asarray(eta, dtype=float)
    g = np.asarray(g, dtype=float)
    return g - (eta @ g) * eta


def attitude_error(R_hat, R):
    """Frobenius norm of I - R_hat R^T, in [0, 2 sqrt(2)]."""
    return np.linalg.norm(np.eye(3) - R_hat @ R.T)


def reduced_attitude_error(R_hat, gB, g):
    """1 - (R_hat gB)^T g / |g|^2, the tilt (vertical direction) error in [0, 2]."""
    g = np.asarray(g, dtype=float)
    n2 = g @ g
    if n2 < MIN_NORM**2:
        raise ValueError("reference gravity vector must be nonzero")
    return 1.0 - (R_hat @ gB) @ g / n2


def random_rotation(rng):
    """Uniformly distributed rotation (Haar measure)."""
    A = rng.standard_normal((3, 3))
    Q, Rr = np.linalg.qr(A)
    Q = Q * np.sign(np.diag(Rr))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q
