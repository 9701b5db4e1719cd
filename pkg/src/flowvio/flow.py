"""Velocity direction from sparse optical flow by gradient descent on S^2.

Each landmark contributes a translational flow s_i = bdot_i + w x b_i,
which is collinear with pi_{b_i} eta_v. The estimator minimizes

    C(eta) = 1/2 sum_i | |pi_i eta| s_i - |s_i| pi_i eta |^2

over the unit sphere with a fixed step size, a rotation-vector retraction
and a sign correction that moves the iterate to the hemisphere where the
flow constraints are satisfied.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import E3, SMALL_ANGLE, exp_so3

FLOW_MIN = 1e-6
PROJ_MIN = 1e-9


class NoFlowData(ValueError):
    """Raised when no valid translational flow sample is available."""


@dataclass(frozen=True)
class FlowSample:
    b: np.ndarray
    bdot: np.ndarray
    s: np.ndarray
    valid: bool


@dataclass(frozen=True)
class GdConfig:
    kappa: float = 5.0
    iterations: int = 20
    flow_min: float = FLOW_MIN
    proj_min: float = PROJ_MIN
    robust: str = "none"  # "none" or "huber"
    huber_delta: float = 1.0
    grad_tol: float = 0.0  # early exit on |grad| <= grad_tol; 0 disables
    # "fixed" uses kappa as is; "flow_energy" divides it by sum |s_i|^2, which
    # bounds kappa times the cost curvature and makes iterates scale invariant
    step_scale: str = "fixed"
    # multiply each iterate by sign(beta); off gives plain Riemannian descent on C
    hemisphere_correction: bool = True

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.flow_min <= 0 or self.proj_min <= 0:
            raise ValueError("flow_min and proj_min must be positive")
        if self.robust not in ("none", "huber"):
            raise ValueError(f"unknown robust cost {self.robust!r}")
        if self.robust == "huber" and self.huber_delta <= 0:
            raise ValueError("huber_delta must be positive")
        if self.step_scale not in ("fixed", "flow_energy"):
            raise ValueError(f"unknown step scale {self.step_scale!r}")


def effective_kappa(S, cfg):
    if cfg.step_scale == "fixed":
        return cfg.kappa
    return cfg.kappa / float(np.einsum("ij,ij->", S, S))


@dataclass(frozen=True)
class DirectionEstimate:
    eta: np.ndarray
    hemisphere_sign: int = 1
    cost: float = 0.0
    iterations_run: int = 0


def translational_flow(b, bdot, omega_m, flow_min=FLOW_MIN):
    """Remove the gyro-predicted rotational flow from one bearing's flow."""
    b = np.asarray(b, dtype=float)
    s = np.asarray(bdot, dtype=float) + np.cross(omega_m, b)
    return FlowSample(b, np.asarray(bdot, dtype=float), s, bool(np.linalg.norm(s) >= flow_min))


def translational_flows(bearings, bdots, omega_m, valid=None, flow_min=FLOW_MIN):
    """Vectorized translational_flow over rows; returns (B, S) of usable rows."""
    B = np.asarray(bearings, dtype=float)
    S = np.asarray(bdots, dtype=float) + np.cross(omega_m, B)
    keep = np.linalg.norm(S, axis=1) >= flow_min
    if valid is not None:
        keep &= np.asarray(valid, dtype=bool)
    return B[keep], S[keep]


def as_arrays(samples, flow_min=FLOW_MIN):
    """Stack the valid samples into (B, S) arrays.

    Accepts a sequence of FlowSample or an already stacked (B, S) pair.
    """
    if isinstance(samples, tuple) and len(samples) == 2 and isinstance(samples[0], np.ndarray):
        B, S = samples
    else:
        rows = [x for x in samples if x.valid]
        if not rows:
            raise NoFlowData("no valid optical flow samples")
        B = np.array([x.b for x in rows])
        S = np.array([x.s for x in rows])
    B = np.atleast_2d(B)
    S = np.atleast_2d(S)
    keep = np.linalg.norm(S, axis=1) >= flow_min
    if not keep.any():
        raise NoFlowData("no valid optical flow samples")
    return B[keep], S[keep]


def _terms(eta, B, S):
    P = eta - (B @ eta)[:, None] * B  # rows pi_{b_i} eta
    p_norm = np.linalg.norm(P, axis=1)
    s_norm = np.linalg.norm(S, axis=1)
    sp = np.einsum("ij,ij->i", S, P)
    return P, p_norm, s_norm, sp


def _per_sample_cost(eta, B, S):
    _, p_norm, s_norm, sp = _terms(eta, B, S)
    # |s|^2 |p|^2 - |s||p| s.p, which equals 1/2 | |p| s - |s| p |^2 >= 0
    return s_norm**2 * p_norm**2 - s_norm * p_norm * sp


def cost(eta_hat, samples):
    B, S = as_arrays(samples)
    return float(np.sum(_per_sample_cost(np.asarray(eta_hat, dtype=float), B, S)))


def residual_norms(eta_hat, samples):
    """|  |pi_i eta| s_i - |s_i| pi_i eta  | for each valid sample."""
    B, S = as_arrays(samples)
    eta = np.asarray(eta_hat, dtype=float)
    P, p_norm, s_norm, _ = _terms(eta, B, S)
    return np.linalg.norm(p_norm[:, None] * S - s_norm[:, None] * P, axis=1)


def _euclidean_grads(eta, B, S, proj_min):
    P, p_norm, s_norm, sp = _terms(eta, B, S)
    PS = S - np.einsum("ij,ij->i", B, S)[:, None] * B  # pi_{b_i} s_i
    G = 2.0 * (s_norm**2)[:, None] * P - (s_norm * p_norm)[:, None] * PS
    ok = p_norm >= proj_min
    # the |s| s.p / |p| term is singular where pi_b eta vanishes; dropped there
    coef = np.zeros_like(p_norm)
    coef[ok] = s_norm[ok] * sp[ok] / p_norm[ok]
    return G - coef[:, None] * P


def _huber_weights(eta, B, S, delta):
    r = residual_norms(eta, (B, S))
    w = np.ones_like(r)
    big = r > delta
    w[big] = delta / r[big]
    return w


def euclidean_grad(eta_hat, samples, proj_min=PROJ_MIN):
    B, S = as_arrays(samples)
    return _euclidean_grads(np.asarray(eta_hat, dtype=float), B, S, proj_min).sum(axis=0)


def _rgrad(eta, B, S, proj_min, weights=None):
    G = _euclidean_grads(eta, B, S, proj_min)
    if weights is not None:
        G = weights[:, None] * G
    g = G.sum(axis=0)
    return g - (eta @ g) * eta


def _beta(eta, B, S, proj_min):
    _, p_norm, s_norm, sp = _terms(eta, B, S)
    ok = p_norm >= proj_min
    if not ok.any():
        return 0.0
    return float(np.mean(sp[ok] / (s_norm[ok] * p_norm[ok])))


def riemannian_grad(eta_hat, samples, proj_min=PROJ_MIN, weights=None):
    """grad C on the sphere: the Euclidean gradient projected onto T_eta S^2."""
    B, S = as_arrays(samples)
    return _rgrad(np.asarray(eta_hat, dtype=float), B, S, proj_min, weights)


def beta(eta_hat, samples, proj_min=PROJ_MIN):
    """Mean cosine between s_i and pi_i eta; 0.0 when every sample is degenerate."""
    B, S = as_arrays(samples)
    return _beta(np.asarray(eta_hat, dtype=float), B, S, proj_min)


def huber(r, delta):
    r = np.abs(np.asarray(r, dtype=float))
    return np.where(r <= delta, 0.5 * r**2, delta * (r - 0.5 * delta))


def robust_cost(eta_hat, samples, delta):
    """Huber-weighted variant of cost(); equals cost() when all residuals are below delta."""
    return float(np.sum(huber(residual_norms(eta_hat, samples), delta)))


def gd_step(est, samples, cfg=GdConfig()):
    """One iteration: rotate by -kappa eta x grad, then fix the hemisphere by sign(beta)."""
    B, S = as_arrays(samples, cfg.flow_min)
    eta = est.eta
    w = _huber_weights(eta, B, S, cfg.huber_delta) if cfg.robust == "huber" else None
    g = _rgrad(eta, B, S, cfg.proj_min, w)
    delta = -effective_kappa(S, cfg) * np.cross(eta, g)
    eta_new = exp_so3(delta) @ eta
    bk = _beta(eta, B, S, cfg.proj_min) if cfg.hemisphere_correction else 0.0
    if bk > 0:
        sign = 1
    elif bk < 0:
        sign = -1
    else:
        sign = 0  # tie: stay in the current hemisphere
    if sign < 0:
        eta_new = -eta_new
    eta_new = eta_new / np.linalg.norm(eta_new)
    if cfg.robust == "huber":
        c = robust_cost(eta_new, (B, S), cfg.huber_delta)
    else:
        c = float(np.sum(_per_sample_cost(eta_new, B, S)))
    return DirectionEstimate(
        eta_new,
        est.hemisphere_sign if sign == 0 else sign,
        c,
        est.iterations_run + 1,
    )


def _fast_iterations(eta, sign, B, S, cfg):
    """gd_step repeated for the plain quadratic cost, with per-sample
    quantities that do not depend on eta hoisted out of the loop.

    Uses |pi_b eta|^2 = 1 - (b.eta)^2 for unit b and eta. Returns
    (eta, sign, iterations_run).
    """
    s_norm = np.sqrt(np.einsum("ij,ij->i", S, S))
    s2 = 2.0 * s_norm**2
    bs = np.einsum("ij,ij->i", B, S)
    PS = S - bs[:, None] * B
    BS = np.vstack([B, S])
    BPS_T = np.vstack([B, PS]).T
    m = len(B)
    kappa, proj_min, tol = effective_kappa(S, cfg), cfg.proj_min, cfg.grad_tol
    flip = cfg.hemisphere_correction
    n = 0
    for _ in range(cfg.iterations):
        proj_eta = BS @ eta
        be = proj_eta[:m]
        p_norm = np.sqrt(np.maximum(1.0 - be * be, 0.0))
        sp = proj_eta[m:] - be * bs
        ok = p_norm >= proj_min
        if ok.all():
            ratio = sp / p_norm
            bk = float((ratio / s_norm).sum()) / m
        else:
            ratio = np.zeros_like(p_norm)
            ratio[ok] = sp[ok] / p_norm[ok]
            bk = float((ratio[ok] / s_norm[ok]).sum()) / ok.sum() if ok.any() else 0.0
        w = s2 - s_norm * ratio
        # sum_i w_i (eta - be_i b_i) - |s_i||p_i| pi_i s_i
        g = w.sum() * eta - BPS_T @ np.concatenate([w * be, s_norm * p_norm])
        g = g - (eta @ g) * eta
        if tol > 0 and np.sqrt(g @ g) <= tol:
            break
        ex, ey, ez = eta
        gx, gy, gz = g
        # delta = -kappa eta x g, orthogonal to eta
        dx = -kappa * (ey * gz - ez * gy)
        dy = -kappa * (ez * gx - ex * gz)
        dz = -kappa * (ex * gy - ey * gx)
        th = math.sqrt(dx * dx + dy * dy + dz * dz)
        if th >= SMALL_ANGLE:
            c, sc = math.cos(th), math.sin(th) / th
        else:
            c, sc = 1.0 - 0.5 * th * th, 1.0
        # exp(delta^x) eta = cos|d| eta + sinc|d| (delta x eta) for delta orthogonal to eta
        new = np.array([
            c * ex + sc * (dy * ez - dz * ey),
            c * ey + sc * (dz * ex - dx * ez),
            c * ez + sc * (dx * ey - dy * ex),
        ])
        if flip and bk > 0:
            sign = 1
        elif flip and bk < 0:
            sign = -1
            new = -new
        eta = new / math.sqrt(new @ new)
        n += 1
    return eta, sign, n


def estimate_direction(eta_prev, samples, cfg=GdConfig()):
    """Run cfg.iterations gradient steps warm-started from the previous estimate.

    eta_prev may be a DirectionEstimate or a unit vector (e3 is the usual
    cold start). Raises NoFlowData when no sample is usable; callers keep
    their last estimate in that case.
    """
    if isinstance(eta_prev, DirectionEstimate):
        est = DirectionEstimate(eta_prev.eta, eta_prev.hemisphere_sign, eta_prev.cost, 0)
    else:
        est = DirectionEstimate(np.asarray(eta_prev, dtype=float) / np.linalg.norm(eta_prev))
    arrays = as_arrays(samples, cfg.flow_min)
    if cfg.robust == "none":
        eta, sign, n = _fast_iterations(np.array(est.eta, dtype=float), est.hemisphere_sign,
                                        *arrays, cfg)
        c = float(np.sum(_per_sample_cost(eta, *arrays)))
        return DirectionEstimate(eta, sign, c, n)
    for _ in range(cfg.iterations):
        if cfg.grad_tol > 0:
            g = _rgrad(est.eta, *arrays, cfg.proj_min)
            if np.linalg.norm(g) <= cfg.grad_tol:
                break
        est = gd_step(est, arrays, cfg)
    return est


def initial_estimate(eta0: Optional[np.ndarray] = None):
    return DirectionEstimate(E3.copy() if eta0 is None else np.asarray(eta0, dtype=float))
