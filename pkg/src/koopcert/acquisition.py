"""Data-acquisition strategies: IGPE-DOPT, its variants, and baselines.

Library-based methods draw constant-input segments from a seeded library
(same library for every method at a given system and seed) and pick
``budget`` of them. A-PE and OID are input-design baselines that run one
continuous experiment whose segments are defined purely by the input
signal, with no feedback from the collected states.

IGPE-style methods are myopic: each round appends every remaining
candidate to the current dataset, scores the change in state, lifted and
regression certificates, and keeps the best one.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional, Sequence

import numpy as np
from scipy.signal import chirp
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .certificates import (CertificateConfig, Whitener, effective_rank, fit_whitener,
                           greedy_direction_set, unit_directions)
from .exceptions import SimulationDivergence, UsageError
from .lifting import Dictionary
from .standardize import standardize
from .systems import Dataset, SystemSpec, simulate_segment

METHOD_IDS = (
    "RANDOM", "SOBOL", "STATE-KCENTER", "LIFT-DOPT", "REG-DOPT", "REG-EOPT", "A-PE", "OID",
    "GPE-STATE", "IGPE-DOPT", "IGPE-NO-DOPT", "IGPE-NO-DIR", "IGPE-NO-CLUSTER",
    "IGPE-WHALF", "IGPE-UNIFORM", "IGPE-REG-HEAVY", "IGPE-CLUSTER-HEAVY",
)
IGPE_FAMILY = tuple(m for m in METHOD_IDS if m.startswith("IGPE")) + ("GPE-STATE",)


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Generator keyed by an integer seed and stable string/int tags."""
    parts = [int(seed)]
    for k in keys:
        parts.append(zlib.crc32(k.encode()) if isinstance(k, str) else int(k))
    return np.random.default_rng(parts)


@dataclass(frozen=True)
class IgpeWeights:
    state_min: float = 0.75
    lift_logdet: float = 0.80
    lift_eff_rank: float = 0.35
    reg_min: float = 0.35
    novelty: float = 0.30
    u_var: float = 0.10
    cluster: float = 0.25

    def __post_init__(self):
        if any(getattr(self, f.name) < 0 for f in fields(self)):
            raise UsageError("IGPE weights must be nonnegative")

    def scaled(self, factor: float) -> "IgpeWeights":
        return IgpeWeights(**{k: v * factor for k, v in asdict(self).items()})


REG_EOPT_WEIGHTS = IgpeWeights(0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0)


def method_weights(method: str, base: IgpeWeights | None = None) -> IgpeWeights:
    """Scoring weights for an IGPE-family method id."""
    base = base or IgpeWeights()
    if method == "IGPE-DOPT":
        return base
    if method == "IGPE-NO-DOPT":
        return replace(base, lift_logdet=0.0)
    if method == "IGPE-NO-DIR":
        return replace(base, novelty=0.0)
    if method == "IGPE-NO-CLUSTER":
        return replace(base, cluster=0.0)
    if method == "IGPE-WHALF":
        return base.scaled(0.5)
    if method == "IGPE-UNIFORM":
        return IgpeWeights(*([1.0 / 7.0] * 7))
    if method == "IGPE-REG-HEAVY":
        return replace(base, reg_min=3.0 * base.reg_min)
    if method == "IGPE-CLUSTER-HEAVY":
        return replace(base, cluster=3.0 * base.cluster)
    if method == "GPE-STATE":
        return IgpeWeights(base.state_min, 0.0, 0.0, 0.0, base.novelty, 0.0, base.cluster)
    raise UsageError(f"{method!r} is not an IGPE-family method")


@dataclass(frozen=True)
class MethodSpec:
    id: str
    weights: Optional[IgpeWeights] = None
    seed: int = 0

    def __post_init__(self):
        if self.id not in METHOD_IDS:
            raise UsageError(f"unknown method {self.id!r}; expected one of {METHOD_IDS}")
        if self.weights is None and self.id in IGPE_FAMILY:
            object.__setattr__(self, "weights", method_weights(self.id))


@dataclass(frozen=True)
class SegmentCandidate:
    x0: np.ndarray
    u_const: np.ndarray
    length: int

    def inputs(self) -> np.ndarray:
        return np.tile(np.asarray(self.u_const, dtype=float), (self.length, 1))


@dataclass(frozen=True)
class AcquisitionConfig:
    library_size: int = 200
    l_seg: int = 12
    dt: float = 0.01
    design_eps: float = 1e-6
    ape_f0: float = 0.5
    ape_lags: int = 2
    ape_gain: float = 0.1
    oid_n_freq: int = 8
    oid_f_lo: float = 0.1
    oid_f_hi: float = 5.0

    def __post_init__(self):
        if self.l_seg < 1:
            raise UsageError("l_seg must be at least 1")
        if not self.design_eps > 0:
            raise UsageError("design_eps must be positive")


# -- library -----------------------------------------------------------------

def generate_library(spec: SystemSpec, seed: int, library_size: int, l_seg: int, dt: float = 0.01) -> list:
    """Seeded constant-input candidates with ``x0`` in the initial box."""
    rng = derive_rng(seed, "library", spec.id)
    lo, hi = np.asarray(spec.init_low, dtype=float), np.asarray(spec.init_high, dtype=float)
    x0 = rng.uniform(lo, hi, size=(library_size, spec.n_x))
    u = rng.uniform(-spec.input_bound, spec.input_bound, size=(library_size, spec.n_u))
    return [SegmentCandidate(x0[i], u[i], l_seg) for i in range(library_size)]


def simulate_candidate(spec: SystemSpec, cand: SegmentCandidate, dt: float) -> Optional[Dataset]:
    """Transition triples of one candidate, or ``None`` if it diverges."""
    try:
        return Dataset.from_trajectories([simulate_segment(spec, cand.x0, cand.inputs(), dt)])
    except SimulationDivergence:
        return None


def concat(datasets: Sequence[Dataset]) -> Dataset:
    out = datasets[0]
    for d in datasets[1:]:
        out = out.append(d)
    return out


# -- D-optimal greedy -------------------------------------------------------

def _grams(blocks) -> np.ndarray:
    return np.stack([np.asarray(b, dtype=float).T @ np.asarray(b, dtype=float) for b in blocks])


def dopt_objective(blocks, S, eps: float = 1e-6) -> float:
    """``log det(eps I + sum_{i in S} Phi_i^T Phi_i)``."""
    G = _grams(blocks)
    M = eps * np.eye(G.shape[1]) + G[list(S)].sum(axis=0)
    return float(np.linalg.slogdet(M)[1])


def greedy_dopt(blocks, budget: int, eps: float = 1e-6) -> list:
    """Greedy maximization of the D-optimal log-det objective.

    Ties go to the lowest candidate index.
    """
    if not eps > 0:
        raise UsageError("eps must be positive")
    G = _grams(blocks)
    if budget > G.shape[0]:
        raise UsageError("budget exceeds the number of blocks")
    M = eps * np.eye(G.shape[1])
    chosen: list = []
    free = np.ones(G.shape[0], dtype=bool)
    for _ in range(budget):
        vals = np.linalg.slogdet(M[None] + G)[1]
        vals[~free] = -np.inf
        j = int(np.argmax(vals))
        chosen.append(j)
        free[j] = False
        M = M + G[j]
    return chosen


def kcenter_greedy(points, budget: int) -> list:
    """Farthest-point selection in whitened coordinates.

    Starts from the point farthest from the sample mean.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if budget > P.shape[0]:
        raise UsageError("budget exceeds the number of points")
    wh = fit_whitener(P)
    W = wh(P)
    first = int(np.argmax(np.linalg.norm(W, axis=1)))
    chosen = [first]
    dmin = np.linalg.norm(W - W[first], axis=1)
    for _ in range(budget - 1):
        dmin[chosen] = -np.inf
        j = int(np.argmax(dmin))
        chosen.append(j)
        dmin = np.minimum(dmin, np.linalg.norm(W - W[j], axis=1))
    return chosen


# -- IGPE scoring ------------------------------------------------------------

def _layer_values(M, var_threshold: float, eps: float):
    """``(lambda_min, logdet(eps I + G) over all columns, eff_rank)`` of the correlation Gram."""
    p = M.shape[1]
    if M.shape[0] < 2:
        return 0.0, p * math.log(eps), 0.0
    mu = M.mean(axis=0)
    var = np.mean((M - mu) ** 2, axis=0)
    active = var >= var_threshold
    if not active.any():
        return 0.0, p * math.log(eps), 0.0
    Z = standardize(M, var_threshold).Zbar
    ev = np.clip(np.linalg.svd(Z, compute_uv=False) ** 2 / M.shape[0], 0.0, None)
    ev = np.concatenate([ev, np.zeros(Z.shape[1] - ev.size)])
    inactive = p - Z.shape[1]
    logdet = float(np.sum(np.log(eps + ev)) + inactive * math.log(eps))
    return float(ev.min()), logdet, effective_rank(ev)


def _max_ball_count(Pw, r: float) -> int:
    if len(Pw) == 0:
        return 0
    return int(cKDTree(Pw).query_ball_point(Pw, r, return_length=True).max())


def _thresholded_novelty(dirs, accepted, delta: float) -> float:
    if dirs.shape[0] == 0:
        return 0.0
    if accepted.shape[0] == 0:
        return math.pi
    ang = np.arccos(np.clip(dirs @ accepted.T, -1.0, 1.0)).min(axis=1)
    # directions within the finest resolution of the set are not new
    return float(np.mean(np.where(ang >= delta - 1e-12, ang, 0.0)))


def igpe_terms(dataset: Dataset, dictionary: Dictionary, cfg: CertificateConfig, input_bound: float,
               eps: float = 1e-6) -> dict:
    """State, lifted and regression scoring quantities of one dataset."""
    n_psi = dictionary.d_psi
    if len(dataset) == 0:
        return {"state_min": 0.0, "lift_logdet": n_psi * math.log(eps), "lift_eff_rank": 0.0,
                "reg_min": 0.0, "u_var": 0.0}
    Psi = dictionary.lift(dataset.X)
    Phi = np.hstack([Psi, dataset.U])
    state_min = _layer_values(dataset.X, cfg.var_threshold, eps)[0]
    _, lift_logdet, lift_rank = _layer_values(Psi, cfg.var_threshold, eps)
    reg_min = _layer_values(Phi, cfg.var_threshold, eps)[0]
    u_var = float(np.mean(np.var(dataset.U, axis=0)) / input_bound ** 2)
    return {"state_min": state_min, "lift_logdet": lift_logdet, "lift_eff_rank": lift_rank,
            "reg_min": reg_min, "u_var": u_var}


def score_igpe(current: Dataset, cand, weights: IgpeWeights, cfg: CertificateConfig,
               dictionary: Dictionary, input_bound: float, whitener: Whitener | None = None,
               eps: float = 1e-6, spec: SystemSpec | None = None, dt: float | None = None) -> float:
    """Myopic IGPE score of appending ``cand`` to ``current``.

    ``cand`` is either a simulated candidate :class:`Dataset` or a
    :class:`SegmentCandidate` (then ``spec`` and ``dt`` are required).
    Diverging candidates score ``-inf``. Novelty and clustering are measured
    in the coordinates of ``whitener`` (default: fitted on the union of
    current and candidate states).
    """
    if isinstance(cand, SegmentCandidate):
        if spec is None or dt is None:
            raise UsageError("simulating a SegmentCandidate requires spec and dt")
        cand = simulate_candidate(spec, cand, dt)
        if cand is None:
            return -math.inf
    after = current.append(cand) if len(current) else cand
    if whitener is None:
        whitener = fit_whitener(after.X, cfg.eps)
    before_t = igpe_terms(current, dictionary, cfg, input_bound, eps)
    after_t = igpe_terms(after, dictionary, cfg, input_bound, eps)
    delta_f = min(cfg.resolutions)
    r_min = min(cfg.scales)

    cur_dirs = unit_directions(whitener.directions(current.X_next - current.X)) if len(current) else np.empty((0, current.n_x))
    accepted = cur_dirs[greedy_direction_set(cur_dirs, delta_f)] if len(cur_dirs) else cur_dirs
    cand_dirs = unit_directions(whitener.directions(cand.X_next - cand.X))
    novelty = _thresholded_novelty(cand_dirs, accepted, delta_f)

    before_count = _max_ball_count(whitener(current.X), r_min) if len(current) else 0
    after_count = _max_ball_count(whitener(after.X), r_min)
    cluster = (after_count - before_count) / len(cand)

    w = weights
    return (w.state_min * (after_t["state_min"] - before_t["state_min"])
            + w.lift_logdet * (after_t["lift_logdet"] - before_t["lift_logdet"])
            + w.lift_eff_rank * (after_t["lift_eff_rank"] - before_t["lift_eff_rank"])
            + w.reg_min * (after_t["reg_min"] - before_t["reg_min"])
            + w.novelty * novelty
            + w.u_var * (after_t["u_var"] - before_t["u_var"])
            - w.cluster * cluster)


class IgpeScorer:
    """Vectorized IGPE scoring over a fixed candidate pool.

    Keeps sufficient statistics of the selected data so each round scores
    every candidate with batched eigen-decompositions. Candidates must all
    have the same number of transitions. Numerically equivalent to
    :func:`score_igpe` with a whitener fitted on the pooled candidate states.
    """

    def __init__(self, candidates: Sequence[Optional[Dataset]], dictionary: Dictionary,
                 cfg: CertificateConfig, weights: IgpeWeights, input_bound: float, eps: float = 1e-6):
        valid = [c for c in candidates if c is not None]
        if not valid:
            raise UsageError("no simulable candidates")
        l = len(valid[0])
        if any(len(c) != l for c in valid):
            raise UsageError("candidates must have equal length")
        n_x, n_u = valid[0].n_x, valid[0].n_u
        L = len(candidates)
        self.L, self.l, self.n_x = L, l, n_x
        self.valid = np.array([c is not None for c in candidates])
        X = np.zeros((L, l, n_x))
        Xn = np.zeros((L, l, n_x))
        U = np.zeros((L, l, n_u))
        for i, c in enumerate(candidates):
            if c is not None:
                X[i], Xn[i], U[i] = c.X, c.X_next, c.U
        self.d_psi = dictionary.d_psi
        self.n_u = n_u
        self.weights = weights
        self.eps = eps
        self.cfg = cfg
        self.input_bound = input_bound

        flatX = X[self.valid].reshape(-1, n_x)
        Phi = np.concatenate([dictionary.lift(X.reshape(-1, n_x)), U.reshape(-1, n_u)], axis=1)
        # shifting by pooled statistics keeps the running sums well conditioned
        Xv = X.reshape(-1, n_x)
        self._mx, self._sx = self._shift_scale(flatX)
        self._mp, self._sp = self._shift_scale(Phi.reshape(L, l, -1)[self.valid].reshape(len(flatX), -1))
        Zx = ((Xv - self._mx) / self._sx).reshape(L, l, n_x)
        Zp = ((Phi - self._mp) / self._sp).reshape(L, l, -1)
        # per-candidate means and centered scatter; merging these avoids the
        # cancellation of raw second moments on short, nearly constant segments
        self._mux, self._Mx = self._moments(Zx)
        self._mup, self._Mp = self._moments(Zp)
        self._thr_x = cfg.var_threshold / self._sx ** 2
        self._thr_p = cfg.var_threshold / self._sp ** 2

        self.whitener = fit_whitener(flatX, cfg.eps)
        W = self.whitener(X.reshape(-1, n_x))
        self.delta_f = min(cfg.resolutions)
        r = min(cfg.scales)
        self._adj = np.zeros((L * l, L * l), dtype=bool)
        idx = np.flatnonzero(np.repeat(self.valid, l))
        tree = cKDTree(W[idx])
        pairs = tree.query_pairs(r, output_type="ndarray")
        a, b = idx[pairs[:, 0]], idx[pairs[:, 1]]
        self._adj[a, b] = True
        self._adj[b, a] = True
        self._adj[idx, idx] = True
        blocks = self._adj.reshape(L, l, L, l)
        self._self_counts = np.einsum("ikil->ik", blocks.astype(np.int64))  # within-candidate neighbours

        D = self.whitener.directions((Xn - X).reshape(-1, n_x)).reshape(L, l, n_x)
        self._dirs = [unit_directions(D[i]) if self.valid[i] else np.empty((0, n_x)) for i in range(L)]

        self.selected: list = []
        self._free = self.valid.copy()
        self._n = 0
        self._sel_mux = np.zeros(n_x)
        self._sel_Mx = np.zeros((n_x, n_x))
        self._sel_mup = np.zeros(Phi.shape[1])
        self._sel_Mp = np.zeros((Phi.shape[1], Phi.shape[1]))
        self._counts = np.zeros(L * l, dtype=np.int64)
        self._sel_pts = np.empty(0, dtype=int)
        self._accepted = np.empty((0, n_x))
        self._before = self._terms(self._sel_Mx[None], self._sel_Mp[None], 0)

    @staticmethod
    def _moments(Z):
        mu = Z.mean(axis=1)
        C = Z - mu[:, None, :]
        return mu, np.einsum("lki,lkj->lij", C, C)

    def _merge(self, mu, M):
        """Scatter of the selection joined with each block of ``l`` rows (pairwise update)."""
        n_a, n_b = self._n, self.l
        sel_mu, sel_M = (self._sel_mux, self._sel_Mx) if mu.shape[-1] == self.n_x else (self._sel_mup, self._sel_Mp)
        d = mu - sel_mu
        return sel_M + M + d[..., :, None] * d[..., None, :] * (n_a * n_b / (n_a + n_b))

    @staticmethod
    def _shift_scale(M):
        m = M.mean(axis=0)
        s = M.std(axis=0)
        return m, np.where(s > 0, s, 1.0)

    def _spectra(self, M, n, thr, cols):
        """Batched ``(lambda_min, logdet_eps, eff_rank)`` of correlation Grams from scatter ``M``."""
        k = M.shape[0]
        p = len(cols)
        lam = np.zeros(k)
        logdet = np.full(k, p * math.log(self.eps))
        erank = np.zeros(k)
        if n < 2:
            return lam, logdet, erank
        cov = M[:, cols][:, :, cols] / n
        var = np.diagonal(cov, axis1=1, axis2=2)
        masks = var >= thr[cols]
        pats, inv = np.unique(masks, axis=0, return_inverse=True)
        inv = np.asarray(inv).reshape(-1)
        for g, pat in enumerate(pats):
            rows = np.flatnonzero(inv == g)
            if not pat.any():
                continue
            sub = cov[rows][:, pat][:, :, pat]
            sd = np.sqrt(var[rows][:, pat])
            corr = sub / (sd[:, :, None] * sd[:, None, :])
            ev = np.clip(np.linalg.eigvalsh(corr), 0.0, None)
            lam[rows] = ev[:, 0]
            logdet[rows] = np.sum(np.log(self.eps + ev), axis=1) + (p - pat.sum()) * math.log(self.eps)
            tot = ev.sum(axis=1, keepdims=True)
            q = np.where(ev > 0, ev / tot, 1.0)
            erank[rows] = np.exp(-np.sum(q * np.log(q), axis=1))
        return lam, logdet, erank

    def _terms(self, Mx, Mp, n):
        psi_cols = np.arange(self.d_psi)
        all_cols = np.arange(Mp.shape[1])
        state_min = self._spectra(Mx, n, self._thr_x, np.arange(self.n_x))[0]
        _, lift_logdet, lift_rank = self._spectra(Mp, n, self._thr_p, psi_cols)
        reg_min = self._spectra(Mp, n, self._thr_p, all_cols)[0]
        if n >= 1:
            u_cols = np.arange(self.d_psi, Mp.shape[1])
            v = np.diagonal(Mp, axis1=1, axis2=2)[:, u_cols] / n
            u_var = np.mean(np.clip(v, 0.0, None) * self._sp[u_cols] ** 2, axis=1) / self.input_bound ** 2
        else:
            u_var = np.zeros(Mp.shape[0])
        return {"state_min": state_min, "lift_logdet": lift_logdet, "lift_eff_rank": lift_rank,
                "reg_min": reg_min, "u_var": u_var}

    def scores(self) -> np.ndarray:
        """Score of appending each candidate to the current selection (``-inf`` if unavailable)."""
        n = self._n + self.l
        after = self._terms(self._merge(self._mux, self._Mx), self._merge(self._mup, self._Mp), n)
        w, b = self.weights, self._before
        score = (w.state_min * (after["state_min"] - b["state_min"])
                 + w.lift_logdet * (after["lift_logdet"] - b["lift_logdet"])
                 + w.lift_eff_rank * (after["lift_eff_rank"] - b["lift_eff_rank"])
                 + w.reg_min * (after["reg_min"] - b["reg_min"])
                 + w.u_var * (after["u_var"] - b["u_var"]))
        if w.novelty:
            score = score + w.novelty * np.array(
                [_thresholded_novelty(d, self._accepted, self.delta_f) for d in self._dirs])
        if w.cluster:
            L, l = self.L, self.l
            new_max = (self._counts.reshape(L, l) + self._self_counts).max(axis=1)
            if self._sel_pts.size:
                c_sel = self._counts[self._sel_pts]
                cross = self._adj[self._sel_pts].reshape(-1, L, l).sum(axis=2)
                old_max = (c_sel[:, None] + cross).max(axis=0)
                before_max = c_sel.max()
            else:
                old_max = np.zeros(L, dtype=np.int64)
                before_max = 0
            score = score - w.cluster * (np.maximum(new_max, old_max) - before_max) / l
        return np.where(self._free, score, -np.inf)

    def select(self, j: int) -> None:
        if not self._free[j]:
            raise UsageError(f"candidate {j} is not available")
        self._free[j] = False
        self.selected.append(int(j))
        self._sel_Mx = self._merge(self._mux[j], self._Mx[j])
        self._sel_Mp = self._merge(self._mup[j], self._Mp[j])
        frac = self.l / (self._n + self.l)
        self._sel_mux = self._sel_mux + frac * (self._mux[j] - self._sel_mux)
        self._sel_mup = self._sel_mup + frac * (self._mup[j] - self._sel_mup)
        self._n += self.l
        pts = np.arange(j * self.l, (j + 1) * self.l)
        self._counts += self._adj[:, pts].sum(axis=1)
        self._sel_pts = np.concatenate([self._sel_pts, pts])
        merged = np.vstack([self._accepted, self._dirs[j]])
        self._accepted = merged[greedy_direction_set(merged, self.delta_f)] if len(merged) else merged
        self._before = self._terms(self._sel_Mx[None], self._sel_Mp[None], self._n)

    def run(self, budget: int) -> list:
        for _ in range(budget):
            s = self.scores()
            j = int(np.argmax(s))
            if not np.isfinite(s[j]):
                raise UsageError("ran out of simulable candidates")
            self.select(j)
        return list(self.selected)


# -- input-design baselines --------------------------------------------------

def _continuous_experiment(spec: SystemSpec, x0, inputs: np.ndarray, l_seg: int, dt: float) -> Dataset:
    traj = simulate_segment(spec, x0, inputs, dt)
    n_seg = inputs.shape[0] // l_seg
    X, Xn = traj.states[:-1], traj.states[1:]
    return Dataset(X, inputs.copy(), Xn, np.repeat(np.arange(n_seg), l_seg))


def ape_inputs(spec: SystemSpec, budget: int, cfg: AcquisitionConfig) -> np.ndarray:
    """Adaptive PE-style probing signal.

    Segment ``t`` is a sinusoid at ``f0 * 2**t`` (cycling back to ``f0``
    once the next octave would pass a quarter of the sampling rate). Its
    amplitude is inversely proportional to the smallest eigenvalue of the
    lagged input autocovariance collected so far, capped at the input bound.
    """
    l, dt, bound = cfg.l_seg, cfg.dt, spec.input_bound
    f_max = 0.25 / dt
    n_oct = max(1, int(math.floor(math.log2(f_max / cfg.ape_f0))) + 1)
    u = np.zeros((budget * l, spec.n_u))
    for t in range(budget):
        freq = cfg.ape_f0 * 2 ** (t % n_oct)
        past = u[: t * l, 0]
        if past.size > cfg.ape_lags:
            H = np.lib.stride_tricks.sliding_window_view(past, cfg.ape_lags)
            sig = np.linalg.eigvalsh(np.atleast_2d(np.cov(H, rowvar=False, bias=True)))[0]
        else:
            sig = 0.0
        amp = min(bound, cfg.ape_gain * bound ** 3 / (max(sig, 0.0) + 1e-6))
        k = np.arange(t * l, (t + 1) * l)
        u[k, :] = amp * np.sin(2 * np.pi * freq * k * dt)[:, None]
    return np.clip(u, -bound, bound)


def oid_inputs(spec: SystemSpec, budget: int, cfg: AcquisitionConfig) -> np.ndarray:
    """Deterministic multisine / chirp probing signal.

    Even segments take a Schroeder-phased multisine over log-spaced
    frequencies, odd segments a linear chirp across the same band; both
    are scaled to peak at the input bound over the whole experiment.
    """
    l, dt, bound = cfg.l_seg, cfg.dt, spec.input_bound
    n = budget * l
    t = np.arange(n) * dt
    freqs = np.logspace(math.log10(cfg.oid_f_lo), math.log10(cfg.oid_f_hi), cfg.oid_n_freq)
    j = np.arange(1, cfg.oid_n_freq + 1)
    phases = -np.pi * j * (j - 1) / cfg.oid_n_freq
    ms = np.cos(2 * np.pi * freqs[None, :] * t[:, None] + phases[None, :]).sum(axis=1)
    ms *= bound / np.max(np.abs(ms))
    t1 = max(t[-1], dt)
    ch = bound * chirp(t, f0=cfg.oid_f_lo, t1=t1, f1=cfg.oid_f_hi, method="linear")
    seg = np.arange(n) // l
    u = np.where(seg % 2 == 0, ms, ch)
    return np.clip(u, -bound, bound)[:, None].repeat(spec.n_u, axis=1)


# -- dispatcher --------------------------------------------------------------

def _pooled_blocks(datasets, dictionary, lifted_only: bool):
    mats = []
    for d in datasets:
        Psi = dictionary.lift(d.X)
        mats.append(Psi if lifted_only else np.hstack([Psi, d.U]))
    pooled = np.vstack(mats)
    m = pooled.mean(axis=0)
    s = pooled.std(axis=0)
    s = np.where(s > 0, s, 1.0)
    return [(M - m) / s for M in mats]


def sobol_candidates(spec: SystemSpec, seed: int, n: int, l_seg: int) -> list:
    d = spec.n_x + spec.n_u
    sampler = qmc.Sobol(d=d, scramble=True, seed=derive_rng(seed, "sobol", spec.id))
    m = max(1, math.ceil(math.log2(max(n, 1))))
    pts = sampler.random_base2(m)[:n]
    lo = np.concatenate([spec.init_low, -spec.input_bound * np.ones(spec.n_u)])
    hi = np.concatenate([spec.init_high, spec.input_bound * np.ones(spec.n_u)])
    pts = qmc.scale(pts, lo, hi)
    return [SegmentCandidate(p[: spec.n_x], p[spec.n_x:], l_seg) for p in pts]


def acquire(method, spec: SystemSpec, budget: int, cfg: AcquisitionConfig | None = None,
            cert_cfg: CertificateConfig | None = None, dictionary: Dictionary | None = None,
            seed: int = 0) -> Dataset:
    """Collect ``budget`` segments with the given method.

    ``method`` is a method id string or a :class:`MethodSpec` (whose
    ``seed`` is used when ``seed`` is not given explicitly).
    """
    if isinstance(method, str):
        method = MethodSpec(method, seed=seed)
    else:
        seed = method.seed if seed == 0 else seed
    cfg = cfg or AcquisitionConfig()
    cert_cfg = cert_cfg or CertificateConfig()
    if dictionary is None:
        from .lifting import default_degree
        dictionary = Dictionary(spec.n_x, default_degree(spec.n_x))
    if budget < 1:
        raise UsageError("budget must be at least 1")
    if budget > cfg.library_size:
        raise UsageError(f"budget {budget} exceeds library size {cfg.library_size}")
    mid = method.id

    if mid in ("A-PE", "OID"):
        x0 = generate_library(spec, seed, 1, cfg.l_seg, cfg.dt)[0].x0
        u = ape_inputs(spec, budget, cfg) if mid == "A-PE" else oid_inputs(spec, budget, cfg)
        return _continuous_experiment(spec, x0, u, cfg.l_seg, cfg.dt)

    if mid == "SOBOL":
        out = []
        n_draw = budget
        while len(out) < budget:
            out = [d for d in (simulate_candidate(spec, c, cfg.dt)
                               for c in sobol_candidates(spec, seed, n_draw, cfg.l_seg)) if d is not None]
            if n_draw > 64 * budget:
                raise UsageError("too many diverging Sobol candidates")
            n_draw *= 2
        return concat(out[:budget])

    library = generate_library(spec, seed, cfg.library_size, cfg.l_seg, cfg.dt)
    sims = [simulate_candidate(spec, c, cfg.dt) for c in library]
    ok = [i for i, s in enumerate(sims) if s is not None]
    if len(ok) < budget:
        raise UsageError("not enough simulable candidates for the budget")

    if mid == "RANDOM":
        chosen = ok[:budget]
    elif mid == "STATE-KCENTER":
        means = np.array([sims[i].X.mean(axis=0) for i in ok])
        chosen = [ok[k] for k in kcenter_greedy(means, budget)]
    elif mid in ("LIFT-DOPT", "REG-DOPT"):
        blocks = _pooled_blocks([sims[i] for i in ok], dictionary, lifted_only=mid == "LIFT-DOPT")
        chosen = [ok[k] for k in greedy_dopt(blocks, budget, cfg.design_eps)]
    else:
        # REG-EOPT greedily raises the smallest eigenvalue of the union's own
        # standardized regression Gram, i.e. the regression certificate itself
        weights = REG_EOPT_WEIGHTS if mid == "REG-EOPT" else method.weights
        scorer = IgpeScorer(sims, dictionary, cert_cfg, weights, spec.input_bound, cfg.design_eps)
        chosen = scorer.run(budget)
    return concat([sims[i] for i in chosen])
