"""Downstream task metrics for identified lifted models.

Open-loop prediction lifts the initial state once and iterates the learned
affine map in lifted coordinates. Tracking runs a discrete LQR designed on
the learned lifted pair against the true simulator. Failures (nonfinite or
exploding iterates, Riccati non-convergence) are flagged and their RMSE is
capped at ``failure_threshold`` so no NaN leaves this module.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .edmdc import EdmdcModel
from .exceptions import SimulationDivergence, UsageError
from .systems import SystemSpec, rk4, simulate_segment, vector_field

DEFAULT_REFERENCES = {
    "duffing": (0.5, 0.0),
    "vdp": (0.5, 0.0),
    "lorenz": (7.0, 7.0, 25.0),
}


@dataclass(frozen=True)
class TaskConfig:
    pred_horizon: int = 200
    ctrl_horizon: int = 100
    n_eval_rollouts: int = 5
    eval_block: int = 12
    references: dict = field(default_factory=lambda: dict(DEFAULT_REFERENCES))
    lqr_state_weight: float = 1.0
    lqr_input_weight: float = 0.1
    failure_threshold: float = 1e6
    riccati_max_iter: int = 5000
    riccati_tol: float = 1e-10

    def __post_init__(self):
        if self.pred_horizon < 1 or self.ctrl_horizon < 1:
            raise UsageError("horizons must be at least 1")
        if not self.failure_threshold > 0:
            raise UsageError("failure_threshold must be positive")

    def reference_for(self, spec: SystemSpec) -> np.ndarray:
        ref = self.references.get(spec.id)
        return np.zeros(spec.n_x) if ref is None else np.asarray(ref, dtype=float)

    @classmethod
    def from_dict(cls, d: dict) -> "TaskConfig":
        d = dict(d)
        if "references" in d:
            d["references"] = {k: tuple(v) for k, v in d["references"].items()}
        return cls(**d)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["references"] = {k: list(v) for k, v in self.references.items()}
        return out


@dataclass(frozen=True)
class TaskResult:
    open_loop_rmse: float
    tracking_rmse: float
    prediction_failed: bool
    control_failed: bool


def open_loop_predict(model: EdmdcModel, x0, inputs, horizon: Optional[int] = None,
                      failure_threshold: float = 1e6):
    """Pure lifted rollout.

    Returns
    -------
    states : ndarray of shape (h + 1, n_x)
        Predicted states including ``x0``; shorter than ``horizon + 1`` when
        the rollout failed.
    failed : bool
        True when an iterate became nonfinite or exceeded ``failure_threshold``.
    """
    inputs = np.asarray(inputs, dtype=float).reshape(-1, model.n_u)
    horizon = inputs.shape[0] if horizon is None else int(horizon)
    if horizon > inputs.shape[0]:
        raise UsageError("horizon exceeds the number of supplied inputs")
    A, B, c = model.affine_map()
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    n_x = x0.size
    z = model.dictionary.lift(x0)
    out = [x0.copy()]
    with np.errstate(all="ignore"):
        for k in range(horizon):
            z = A @ z + B @ inputs[k] + c
            if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > failure_threshold:
                return np.array(out), True
            out.append(z[:n_x].copy())
    return np.array(out), False


def _eval_inputs(rng, spec: SystemSpec, horizon: int, block: int) -> np.ndarray:
    n_blocks = -(-horizon // block)
    levels = rng.uniform(-spec.input_bound, spec.input_bound, size=(n_blocks, spec.n_u))
    return np.repeat(levels, block, axis=0)[:horizon]


def prediction_rmse(model: EdmdcModel, spec: SystemSpec, task: TaskConfig, seed: int, dt: float):
    """Mean open-loop RMSE over fresh initial states and held-out inputs.

    Returns ``(rmse, failed)``.
    """
    rng = np.random.default_rng([int(seed), 0x5EED])
    lo, hi = np.asarray(spec.init_low), np.asarray(spec.init_high)
    errs = []
    for _ in range(task.n_eval_rollouts):
        x0 = rng.uniform(lo, hi)
        u = _eval_inputs(rng, spec, task.pred_horizon, task.eval_block)
        try:
            truth = simulate_segment(spec, x0, u, dt).states
        except SimulationDivergence:
            continue
        pred, failed = open_loop_predict(model, x0, u, task.pred_horizon, task.failure_threshold)
        if failed:
            return task.failure_threshold, True
        errs.append(np.sqrt(np.mean((pred[1:] - truth[1:]) ** 2)))
    if not errs:
        return task.failure_threshold, True
    rmse = float(np.mean(errs))
    if not np.isfinite(rmse) or rmse > task.failure_threshold:
        return task.failure_threshold, True
    return rmse, False


def lqr_gain(A, B, Q, R, max_iter: int = 5000, tol: float = 1e-10):
    """Discrete infinite-horizon LQR gain ``K`` for ``u = -K z``.

    Tries the direct Riccati solver first and falls back to value
    iteration. Returns ``None`` when neither converges to a finite solution.
    """
    try:
        P = scipy.linalg.solve_discrete_are(A, B, Q, R)
        if np.all(np.isfinite(P)):
            return np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    except (np.linalg.LinAlgError, ValueError):
        pass
    P = Q.copy()
    with np.errstate(all="ignore"):
        for _ in range(max_iter):
            BtP = B.T @ P
            K = np.linalg.solve(R + BtP @ B, BtP @ A)
            P_new = Q + A.T @ P @ (A - B @ K)
            P_new = (P_new + P_new.T) / 2
            if not np.all(np.isfinite(P_new)):
                return None
            if np.max(np.abs(P_new - P)) <= tol * max(1.0, np.max(np.abs(P_new))):
                return np.linalg.solve(R + B.T @ P_new @ B, B.T @ P_new @ A)
            P = P_new
    return None


def tracking_control(model: EdmdcModel, spec: SystemSpec, task: TaskConfig, seed: int, dt: float,
                     x0=None, reference=None):
    """Closed-loop setpoint tracking on the true system.

    The feedback ``u = -K (psi(x) - psi(x_ref))`` uses an LQR gain computed
    on the identified lifted pair with state weight on the coordinate
    monomials only, clipped to the input bound.

    Returns ``(rmse, failed)``.
    """
    A, B, _ = model.affine_map()
    d = model.d_psi
    n_x = spec.n_x
    Q = np.zeros((d, d))
    Q[np.arange(n_x), np.arange(n_x)] = task.lqr_state_weight
    R = task.lqr_input_weight * np.eye(model.n_u)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        return task.failure_threshold, True
    K = lqr_gain(A, B, Q, R, task.riccati_max_iter, task.riccati_tol)
    if K is None:
        return task.failure_threshold, True
    x_ref = task.reference_for(spec) if reference is None else np.asarray(reference, dtype=float)
    if x0 is None:
        rng = np.random.default_rng([int(seed), 0xC0DE])
        x0 = rng.uniform(np.asarray(spec.init_low), np.asarray(spec.init_high))
    x = np.asarray(x0, dtype=float).copy()
    z_ref = model.dictionary.lift(x_ref)
    f = lambda s, v: vector_field(spec, s, v)
    sq = 0.0
    with np.errstate(all="ignore"):
        for _ in range(task.ctrl_horizon):
            u = np.clip(-K @ (model.dictionary.lift(x) - z_ref), -spec.input_bound, spec.input_bound)
            x = rk4(f, x, u, dt)
            if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > task.failure_threshold:
                return task.failure_threshold, True
            sq += float(np.sum((x - x_ref) ** 2))
    rmse = float(np.sqrt(sq / task.ctrl_horizon))
    if rmse > task.failure_threshold:
        return task.failure_threshold, True
    return rmse, False


def evaluate_tasks(model: EdmdcModel, spec: SystemSpec, task: TaskConfig, seed: int, dt: float) -> TaskResult:
    ol, pf = prediction_rmse(model, spec, task, seed, dt)
    tr, cf = tracking_control(model, spec, task, seed, dt)
    return TaskResult(ol, tr, pf, cf)
