"""Experiment orchestration: single runs, direction-only runs, Monte Carlo, CSV."""

import csv
import dataclasses
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import config as config_mod
from .attitude import InertialCascadeState, inertial_cascade_step, sigma_R, attitude_step, to_body
from .flow import NoFlowData, estimate_direction, initial_estimate, translational_flows
from .geometry import attitude_error, exp_so3, orthogonality_error, reduced_attitude_error
from .riccati import (
    advance_riccati, measurement_matrices, propagate_translational, stage_projectors, step_rate,
)
from .sim import (
    initial_truth,
    trajectory_A,
    trajectory_B,
    sample_truth,
    straight_line_profile,
    synthesize,
)

METRICS = ("v_err", "z_err", "att_err", "tilt_err", "dir_err", "xi_err")


def _vec(name):
    return tuple(f"{name}_{c}" for c in "xyz")


STATE_COLUMNS = (
    _vec("vB") + _vec("vB_hat") + _vec("gB") + _vec("z_hat")
    + _vec("eta") + _vec("eta_hat") + _vec("xi") + _vec("xi_hat")
    + tuple(f"R_hat_{i}{j}" for i in range(3) for j in range(3))
)
DIAG_COLUMNS = ("orth_err", "eta_norm_err", "P_min_eig", "n_flows", "skipped")
COLUMNS = ("t",) + METRICS + STATE_COLUMNS + DIAG_COLUMNS
DIRECTION_COLUMNS = ("t", "dir_err") + _vec("eta") + _vec("eta_hat") + (
    "cost", "n_flows", "eta_norm_err")


@dataclass
class RunResult:
    columns: tuple
    data: np.ndarray  # (n_samples, len(columns))
    summary: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.data[:, self.columns.index(name)]

    def __len__(self):
        return self.data.shape[0]


@dataclass
class MonteCarloSummary:
    t: np.ndarray
    bands: dict  # metric -> (3, n) array of 5th/50th/95th percentiles
    n_runs: int
    seeds: list
    failures: list  # (run index, message)
    runs: np.ndarray = None  # (n_ok, n, len(METRICS)) raw metric series
    integrity: dict = field(default_factory=dict)  # worst orth_err / eta_norm_err over runs

    @property
    def columns(self):
        return ("t",) + tuple(f"{m}_{p}" for m in METRICS for p in ("p5", "p50", "p95"))

    @property
    def data(self):
        cols = [self.t] + [self.bands[m][i] for m in METRICS for i in range(3)]
        return np.column_stack(cols) if len(self.t) else np.zeros((0, len(self.columns)))


# -- scenario construction ----------------------------------------------------

def build_profile(sc):
    if sc.trajectory == "paper-a":
        return trajectory_A(sc.duration)
    if sc.trajectory == "paper-b":
        return trajectory_B(sc.duration)
    return straight_line_profile(sc.speed, sc.duration)


@lru_cache(maxsize=8)
def _truth_cached(sc):
    profile = build_profile(sc)
    state0 = initial_truth(profile, exp_so3(np.array(sc.R0_rotvec)), np.array(sc.xi0), np.array(sc.v0))
    return tuple(sample_truth(profile, state0, sc.duration, sc.truth_dt, sc.sample_dt))


def simulate_truth(sc):
    """Truth states at the sensor instants (cached per scenario)."""
    return list(_truth_cached(sc))


def noise_seed(seed, run=0):
    """Sensor-noise seed for one run, derived from the master seed and run index."""
    return int(np.random.SeedSequence(seed, spawn_key=(run, 1)).generate_state(1)[0])


def sensor_frames(cfg, truth, run=0):
    noise = dataclasses.replace(cfg.noise, seed=noise_seed(cfg.seed, run))
    return synthesize(truth, build_profile(cfg.scenario), cfg.scenario.landmark_array, noise,
                      cfg.attitude.m_ref, cfg.attitude.g_vec)


# -- runs ---------------------------------------------------------------------

def _unit_or_none(v, min_norm):
    n = np.linalg.norm(v)
    return v / n if n >= min_norm else None


def _step_inputs(fr, nxt, eta0, eta1, use_mag):
    """Inputs at a fraction f of the sample interval.

    With the next frame given, gyro, accelerometer, magnetometer and the
    direction are interpolated linearly (directions renormalized); otherwise
    the current sample is held.
    """
    def at(f):
        mB = fr.mag_m if use_mag else None
        if nxt is None or f == 0.0:
            return fr.omega_m, fr.accel_m, mB, eta0
        w = fr.omega_m + f * (nxt.omega_m - fr.omega_m)
        a = fr.accel_m + f * (nxt.accel_m - fr.accel_m)
        if use_mag:
            mB = fr.mag_m + f * (nxt.mag_m - fr.mag_m)
            mB = mB / np.linalg.norm(mB)
        eta = eta0
        if eta0 is not None and eta1 is not None and eta0 @ eta1 > 0:
            eta = eta0 + f * (eta1 - eta0)
            eta = eta / np.linalg.norm(eta)
        return w, a, mB, eta
    return at


def direction_track(cfg, truth, frames):
    """Velocity direction fed to the observer at each sample.

    Returns (used, logged, n_flows): used[k] is None where the measurement
    update must be skipped; logged[k] is the running estimate.
    """
    used, logged, n_flows = [], [], []
    est = initial_estimate(np.array(cfg.init.eta_hat, dtype=float))
    for st, fr in zip(truth, frames):
        if cfg.mode.oracle_direction:
            eta = _unit_or_none(st.vB, cfg.riccati.min_speed)
            used.append(eta)
            logged.append(est.eta if eta is None else eta)
            n_flows.append(0)
            continue
        B, S = translational_flows(fr.bearings, fr.bdots, fr.omega_m, fr.valid, cfg.flow.flow_min)
        try:
            est = estimate_direction(est, (B, S), cfg.flow)
            used.append(est.eta)
        except NoFlowData:
            used.append(None)
        logged.append(est.eta)
        n_flows.append(len(B))
    return used, logged, n_flows


def run_single(cfg, truth=None, frames=None, run=0):
    """Simulate truth and sensors and run the full cascade; one row per sensor sample."""
    truth = simulate_truth(cfg.scenario) if truth is None else truth
    frames = sensor_frames(cfg, truth, run) if frames is None else frames
    dt = cfg.scenario.sample_dt
    ric, att, mode, init = cfg.riccati, cfg.attitude, cfg.mode, cfg.init
    g = np.asarray(att.g_vec, dtype=float)
    linear = mode.input_hold == "linear"

    R_hat = exp_so3(np.array(init.R_hat_rotvec, dtype=float))
    v_hat = np.array(init.v_hat_B, dtype=float)
    z = np.array(init.z, dtype=float)
    if init.xi_hat_B is None:
        xi_B = truth[0].R.T @ truth[0].xi
    else:
        xi_B = np.array(init.xi_hat_B, dtype=float)
    P = ric.P0_matrix
    if mode.inertial_formulation:
        ist = InertialCascadeState(R_hat, R_hat @ xi_B, R_hat @ v_hat, R_hat @ z)
    eta_used, eta_logged, n_flows = direction_track(cfg, truth, frames)

    rows = np.empty((len(truth), len(COLUMNS)))
    last = len(truth) - 1
    for k, (st, fr) in enumerate(zip(truth, frames)):
        if mode.inertial_formulation:
            R_hat = ist.R_hat
            xi_B, v_hat, z = to_body(R_hat, ist.xi_hat, ist.v_hat, ist.z_I)
        vB = st.vB
        eta_true = _unit_or_none(vB, 1e-12)
        eta_log = eta_logged[k]
        gB = st.R.T @ g
        dir_err = np.nan if eta_true is None else 1.0 - eta_log @ eta_true
        eta_row = np.full(3, np.nan) if eta_true is None else eta_true
        rows[k] = np.concatenate([
            [st.t,
             np.linalg.norm(vB - v_hat), np.linalg.norm(gB - z), attitude_error(R_hat, st.R),
             reduced_attitude_error(R_hat, gB, g), dir_err,
             np.linalg.norm(st.xi - R_hat @ xi_B)],
            vB, v_hat, gB, z, eta_row, eta_log, st.xi, R_hat @ xi_B, R_hat.reshape(9),
            [orthogonality_error(R_hat), abs(np.linalg.norm(eta_log) - 1.0),
             np.linalg.eigvalsh(P).min(), n_flows[k], float(eta_used[k] is None)],
        ])
        if k == last:
            break

        inputs = _step_inputs(fr, frames[k + 1] if linear else None, eta_used[k],
                              eta_used[k + 1] if linear else None, mode.use_magnetometer)
        h = dt / mode.substeps
        for j in range(mode.substeps):
            w0, a0, mB, eta0 = inputs(j / mode.substeps)
            w1, a1, _, eta1 = inputs((j + 1) / mode.substeps) if linear else (None,) * 4
            if mode.inertial_formulation:
                ist, P = inertial_cascade_step(ist, w0, a0, mB, eta0, P, ric, att, h, w1, a1, eta1)
                continue
            sig = sigma_R(R_hat, z, mB, att)
            K, D = measurement_matrices(P, eta0, ric)
            x = propagate_translational(np.concatenate([xi_B, v_hat, z]), w0, a0, K, h,
                                        ric.integrator, w1, a1, stage_projectors(eta0, eta1))
            xi_B, v_hat, z = x[:3], x[3:6], x[6:]
            R_hat = attitude_step(R_hat, step_rate(w0, w1, h), sig, h)
            P = advance_riccati(P, w0, eta0, D, ric, h)

    result = RunResult(COLUMNS, rows)
    result.summary = {
        "n_samples": len(truth),
        "skipped_updates": int(sum(e is None for e in eta_used)),
        "final": {m: float(result[m][-1]) for m in METRICS},
        "max_orth_err": float(np.max(result["orth_err"])),
        "max_eta_norm_err": float(np.max(result["eta_norm_err"])),
    }
    return result


def run_direction(cfg, truth=None, frames=None, run=0):
    """Run only the flow-direction estimator along the scenario."""
    truth = simulate_truth(cfg.scenario) if truth is None else truth
    frames = sensor_frames(cfg, truth, run) if frames is None else frames
    est = initial_estimate(np.array(cfg.init.eta_hat, dtype=float))
    rows = np.empty((len(truth), len(DIRECTION_COLUMNS)))
    for k, (st, fr) in enumerate(zip(truth, frames)):
        B, S = translational_flows(fr.bearings, fr.bdots, fr.omega_m, fr.valid, cfg.flow.flow_min)
        try:
            est = estimate_direction(est, (B, S), cfg.flow)
        except NoFlowData:
            pass
        eta = _unit_or_none(st.vB, 1e-12)
        err = np.nan if eta is None else 1.0 - est.eta @ eta
        eta = np.full(3, np.nan) if eta is None else eta
        rows[k] = np.concatenate([[st.t, err], eta, est.eta,
                                  [est.cost, len(B), abs(np.linalg.norm(est.eta) - 1.0)]])
    res = RunResult(DIRECTION_COLUMNS, rows)
    res.summary = {"max_eta_norm_err": float(np.max(res["eta_norm_err"]))}
    return res


def steady_state_mean(result, column="dir_err", after=5.0):
    vals = result[column][result["t"] > after]
    vals = vals[~np.isnan(vals)]
    return float(vals.mean()) if len(vals) else float("nan")


DIRECTION_SWEEP = tuple((n, m) for n in (3, 10, 20) for m in (4, 8))


def run_direction_sweep(cfg, sweep=DIRECTION_SWEEP):
    """Direction study over (iterations, number of landmarks); first m landmarks are used."""
    out = {}
    truth = simulate_truth(cfg.scenario)
    for n_iter, n_lm in sweep:
        c = config_mod.replace(cfg, flow={"iterations": n_iter}, scenario={"n_landmarks": n_lm})
        out[(n_iter, n_lm)] = run_direction(c, truth)
    return out


# -- Monte Carlo ----------------------------------------------------------------

def sample_init(cfg, run):
    """Initial estimates for one Monte Carlo run, drawn around cfg.init."""
    mc = cfg.monte_carlo
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(run, 0)))
    v = np.array(cfg.init.v_hat_B) + mc.v_std * rng.standard_normal(3)
    z = np.array(cfg.init.z) + mc.z_std * rng.standard_normal(3)
    r = np.array(cfg.init.R_hat_rotvec) + np.radians(mc.R_std_deg) * rng.standard_normal(3)
    return dataclasses.replace(cfg.init, v_hat_B=tuple(v), z=tuple(z), R_hat_rotvec=tuple(r))


def _mc_worker(args):
    cfg, truth, run = args
    c = dataclasses.replace(cfg, init=sample_init(cfg, run))
    try:
        res = run_single(c, truth, run=run)
        checks = (res.summary["max_orth_err"], res.summary["max_eta_norm_err"])
        return run, res.data[:, 1:1 + len(METRICS)], None, checks
    except Exception as exc:  # reported in the summary, never dropped silently
        return run, None, f"{type(exc).__name__}: {exc}", None


def run_monte_carlo(cfg, n_runs=None):
    n_runs = cfg.monte_carlo.n_runs if n_runs is None else n_runs
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    truth = simulate_truth(cfg.scenario)
    jobs = [(cfg, truth, r) for r in range(n_runs)]
    if cfg.monte_carlo.workers > 1:
        with ProcessPoolExecutor(cfg.monte_carlo.workers) as pool:
            outs = list(pool.map(_mc_worker, jobs))
    else:
        outs = [_mc_worker(j) for j in jobs]
    outs.sort(key=lambda o: o[0])
    ok = [o[1] for o in outs if o[2] is None]
    failures = [(o[0], o[2]) for o in outs if o[2] is not None]
    t = np.array([s.t for s in truth])
    bands = {}
    if ok:
        stack = np.stack(ok)
        pct = np.nanpercentile(stack, [5, 50, 95], axis=0)  # (3, n, n_metrics)
        for i, m in enumerate(METRICS):
            bands[m] = pct[:, :, i]
    else:
        stack = np.zeros((0, len(t), len(METRICS)))
        for m in METRICS:
            bands[m] = np.full((3, len(t)), np.nan)
    checks = [o[3] for o in outs if o[3] is not None]
    integrity = {"max_orth_err": max((c[0] for c in checks), default=np.nan),
                 "max_eta_norm_err": max((c[1] for c in checks), default=np.nan)}
    return MonteCarloSummary(t, bands, n_runs, [noise_seed(cfg.seed, r) for r in range(n_runs)],
                             failures, stack, integrity)


# -- export -----------------------------------------------------------------------

def to_csv_text(obj):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(obj.columns)
    for row in obj.data:
        w.writerow([format(float(x), ".17g") for x in row])
    return buf.getvalue()


def export(obj, path, plot=False):
    """Write a RunResult or MonteCarloSummary as CSV; optionally a PNG next to it."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(to_csv_text(obj))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    if plot:
        plot_csv(path, path.with_suffix(".png"))
    return path


def read_csv(path):
    """Inverse of export: returns (columns, data)."""
    with open(path, encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    columns = tuple(rows[0])
    data = np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, len(columns))
    return columns, data


def plot_csv(csv_path, png_path, metrics=None):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    columns, data = read_csv(csv_path)
    t = data[:, 0]
    names = [c for c in columns if c in (metrics or METRICS)]
    bands = [m for m in (metrics or METRICS) if f"{m}_p50" in columns]
    panels = names or bands
    fig, axes = plt.subplots(len(panels), 1, figsize=(7, 1.8 * len(panels)), sharex=True, squeeze=False)
    for ax, m in zip(axes[:, 0], panels):
        if m in columns:
            ax.semilogy(t, np.abs(data[:, columns.index(m)]) + 1e-16)
        else:
            lo, mid, hi = (data[:, columns.index(f"{m}_{p}")] for p in ("p5", "p50", "p95"))
            ax.fill_between(t, lo, hi, alpha=0.3)
            ax.plot(t, mid)
            ax.set_yscale("log")
        ax.set_ylabel(m)
    axes[-1, 0].set_xlabel("t [s]")
    fig.tight_layout()
    fig.savefig(png_path, dpi=100)
    plt.close(fig)
    return png_path
