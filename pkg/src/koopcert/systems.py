"""Controlled benchmark systems and fixed-step RK4 simulation.

The three benchmark systems are the double-well Duffing oscillator, the
Van der Pol oscillator and the Lorenz system, each driven by one scalar
input held constant over every integration step (zero-order hold).

Custom systems (used for linear test problems) can be built by passing a
right-hand side callable to :class:`SystemSpec`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .exceptions import SimulationDivergence, UsageError

SYSTEM_IDS = ("duffing", "vdp", "lorenz")

_DEFAULTS = {
    "duffing": dict(
        n_x=2,
        params={"delta": 0.5, "alpha": -1.0, "beta": 1.0},
        input_bound=2.0,
        init_low=(-2.0, -2.0),
        init_high=(2.0, 2.0),
    ),
    "vdp": dict(
        n_x=2,
        params={"mu": 1.0},
        input_bound=2.0,
        init_low=(-2.0, -2.0),
        init_high=(2.0, 2.0),
    ),
    "lorenz": dict(
        n_x=3,
        params={"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0},
        input_bound=20.0,
        init_low=(-20.0, -25.0, 5.0),
        init_high=(20.0, 25.0, 45.0),
    ),
}


@dataclass(frozen=True)
class SystemSpec:
    """Parameterized controlled ODE ``xdot = f(x, u)``.

    Parameters
    ----------
    id : str
        One of ``duffing``, ``vdp``, ``lorenz``, or any other name when
        ``rhs`` is supplied.
    n_x, n_u : int
        State and input dimensions.
    params : mapping
        Named real parameters of the vector field.
    input_bound : float
        Componentwise amplitude limit for admissible inputs.
    init_low, init_high : tuple of float
        Box from which initial conditions are sampled.
    rhs : callable, optional
        ``rhs(x, u, params) -> xdot`` for custom systems.
    """

    id: str
    n_x: int
    n_u: int = 1
    params: Mapping[str, float] = field(default_factory=dict)
    input_bound: float = 1.0
    init_low: tuple = ()
    init_high: tuple = ()
    rhs: Optional[Callable] = None

    def __post_init__(self):
        if self.rhs is None:
            if self.id not in SYSTEM_IDS:
                raise UsageError(f"unknown system {self.id!r}; expected one of {SYSTEM_IDS}")
            expected = _DEFAULTS[self.id]["n_x"]
            if self.n_x != expected:
                raise UsageError(f"{self.id} has n_x={expected}, got {self.n_x}")
            if self.n_u != 1:
                raise UsageError(f"{self.id} has n_u=1, got {self.n_u}")
        if not all(np.isfinite(v) for v in self.params.values()):
            raise UsageError("system parameters must be finite")
        if not self.input_bound > 0:
            raise UsageError("input_bound must be positive")
        if len(self.init_low) != len(self.init_high):
            raise UsageError("init_low and init_high must have equal length")
        if self.init_low and len(self.init_low) != self.n_x:
            raise UsageError("initial box dimension does not match n_x")


def get_system(name: str, params: Optional[Mapping[str, float]] = None, **overrides) -> SystemSpec:
    """Build one of the benchmark systems with optional parameter overrides."""
    if name not in _DEFAULTS:
        raise UsageError(f"unknown system {name!r}; expected one of {SYSTEM_IDS}")
    base = dict(_DEFAULTS[name])
    merged = dict(base["params"])
    if params:
        unknown = set(params) - set(merged)
        if unknown:
            raise UsageError(f"unknown parameters for {name}: {sorted(unknown)}")
        merged.update(params)
    base["params"] = merged
    for key in ("init_low", "init_high"):
        if key in overrides:
            overrides[key] = tuple(float(v) for v in overrides[key])
    base.update(overrides)
    return SystemSpec(id=name, **base)


def _duffing(x, u, p):
    return np.array([x[1], -p["delta"] * x[1] - p["alpha"] * x[0] - p["beta"] * x[0] ** 3 + u[0]])


def _vdp(x, u, p):
    return np.array([x[1], p["mu"] * (1.0 - x[0] ** 2) * x[1] - x[0] + u[0]])


def _lorenz(x, u, p):
    return np.array([
        p["sigma"] * (x[1] - x[0]),
        x[0] * (p["rho"] - x[2]) - x[1] + u[0],
        x[0] * x[1] - p["beta"] * x[2],
    ])


_FIELDS = {"duffing": _duffing, "vdp": _vdp, "lorenz": _lorenz}


def vector_field(spec: SystemSpec, x, u) -> np.ndarray:
    """Continuous-time right-hand side ``xdot`` at state ``x`` and input ``u``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if x.shape[0] != spec.n_x or u.shape[0] != spec.n_u:
        raise UsageError(
            f"expected x of size {spec.n_x} and u of size {spec.n_u}, got {x.shape[0]} and {u.shape[0]}"
        )
    f = spec.rhs if spec.rhs is not None else _FIELDS[spec.id]
    return np.asarray(f(x, u, spec.params), dtype=float)


def rk4(f: Callable, x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``xdot = f(x, u)`` with ``u`` held."""
    k1 = f(x, u)
    k2 = f(x + 0.5 * dt * k1, u)
    k3 = f(x + 0.5 * dt * k2, u)
    k4 = f(x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(spec: SystemSpec, x, u, dt: float) -> np.ndarray:
    if not dt > 0:
        raise UsageError("dt must be positive")
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    x_next = rk4(lambda s, v: vector_field(spec, s, v), x, u, dt)
    if not np.all(np.isfinite(x_next)):
        raise SimulationDivergence(f"{spec.id}: nonfinite state after RK4 step", state=x)
    return x_next


@dataclass(frozen=True)
class Trajectory:
    """States ``x_0..x_L`` and the inputs ``u_0..u_{L-1}`` that produced them."""

    states: np.ndarray
    inputs: np.ndarray
    dt: float

    def __post_init__(self):
        if self.states.shape[0] != self.inputs.shape[0] + 1:
            raise UsageError("a trajectory needs exactly one more state than inputs")

    def __len__(self):
        return self.inputs.shape[0]


def simulate_segment(spec: SystemSpec, x0, inputs, dt: float) -> Trajectory:
    """Integrate ``spec`` from ``x0`` under a sequence of held inputs.

    Raises
    ------
    UsageError
        If an input exceeds ``spec.input_bound``.
    SimulationDivergence
        If the state becomes nonfinite; ``step`` holds the failing index.
    """
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.shape[0] != spec.n_x:
        raise UsageError(f"x0 must have size {spec.n_x}")
    inputs = np.asarray(inputs, dtype=float).reshape(-1, spec.n_u)
    if np.any(np.abs(inputs) > spec.input_bound * (1 + 1e-12)):
        raise UsageError(f"inputs exceed the admissible bound {spec.input_bound}")
    f = spec.rhs if spec.rhs is not None else _FIELDS[spec.id]
    params = spec.params
    states = np.empty((inputs.shape[0] + 1, spec.n_x))
    states[0] = x
    for k, u in enumerate(inputs):
        x = rk4(lambda s, v: np.asarray(f(s, v, params), dtype=float), x, u, dt)
        if not np.all(np.isfinite(x)):
            raise SimulationDivergence(
                f"{spec.id}: nonfinite state at step {k}", state=states[k], step=k
            )
        states[k + 1] = x
    return Trajectory(states=states, inputs=inputs, dt=dt)


@dataclass(frozen=True)
class Dataset:
    """Stacked transition triples ``(x_k, u_k, x_{k+1})``.

    ``segment`` labels each row with the index of the trajectory segment it
    came from; rows keep the order in which segments were collected.
    """

    X: np.ndarray
    U: np.ndarray
    X_next: np.ndarray
    segment: np.ndarray = None

    def __post_init__(self):
        n = self.X.shape[0]
        if self.U.shape[0] != n or self.X_next.shape[0] != n:
            raise UsageError("X, U and X_next must have the same number of rows")
        if self.X.shape[1] != self.X_next.shape[1]:
            raise UsageError("X and X_next must have the same state dimension")
        if self.segment is None:
            object.__setattr__(self, "segment", np.zeros(n, dtype=int))

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_x(self):
        return self.X.shape[1]

    @property
    def n_u(self):
        return self.U.shape[1]

    @classmethod
    def empty(cls, n_x: int, n_u: int = 1) -> "Dataset":
        return cls(np.empty((0, n_x)), np.empty((0, n_u)), np.empty((0, n_x)), np.empty(0, dtype=int))

    @classmethod
    def from_trajectories(cls, trajectories: Sequence[Trajectory]) -> "Dataset":
        if not trajectories:
            raise UsageError("need at least one trajectory")
        X = np.concatenate([t.states[:-1] for t in trajectories])
        X_next = np.concatenate([t.states[1:] for t in trajectories])
        U = np.concatenate([t.inputs for t in trajectories])
        seg = np.concatenate([np.full(len(t), i) for i, t in enumerate(trajectories)])
        return cls(X, U, X_next, seg)

    def append(self, other: "Dataset") -> "Dataset":
        offset = self.segment.max() + 1 if len(self) else 0
        return Dataset(
            np.vstack([self.X, other.X]),
            np.vstack([self.U, other.U]),
            np.vstack([self.X_next, other.X_next]),
            np.concatenate([self.segment, other.segment + offset]),
        )
