"""Benchmark dynamical systems: spring networks, a triple pendulum on
sticks, and a 3-D reversible strange attractor.

Every derivative function accepts states with arbitrary leading batch axes
(shape (..., n_agents, d)), so ensembles integrate in a single pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, IntegrationError, UnsupportedSystemError
from .integrators import StateVector

SYSTEM_KINDS = (
    "simple_spring",
    "forced_spring",
    "damped_spring",
    "triple_pendulum",
    "attractor",
)

# Smaller |denominator| than this in the pendulum's angular-velocity solve
# is treated as a mass-matrix singularity.  (For uniform sticks the
# denominator is provably bounded away from zero; the guard protects
# against corrupted states.)
PENDULUM_SINGULARITY_EPS = 1e-12


@dataclass(frozen=True)
class InteractionGraph:
    """Undirected interaction structure between agents."""

    n: int
    adjacency: np.ndarray  # (n, n) bool, symmetric, zero diagonal

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if adj.shape != (self.n, self.n):
            raise ConfigurationError(
                f"adjacency shape {adj.shape} does not match n={self.n}"
            )
        if adj.diagonal().any():
            raise ConfigurationError("adjacency has self-loops")
        if not np.array_equal(adj, adj.T):
            raise ConfigurationError("adjacency is not symmetric")
        object.__setattr__(self, "adjacency", adj)

    @staticmethod
    def complete(n: int) -> "InteractionGraph":
        adj = np.ones((n, n), dtype=bool)
        np.fill_diagonal(adj, False)
        return InteractionGraph(n, adj)

    @staticmethod
    def empty(n: int) -> "InteractionGraph":
        return InteractionGraph(n, np.zeros((n, n), dtype=bool))

    @staticmethod
    def chain(n: int) -> "InteractionGraph":
        adj = np.zeros((n, n), dtype=bool)
        for i in range(n - 1):
            adj[i, i + 1] = adj[i + 1, i] = True
        return InteractionGraph(n, adj)

    @staticmethod
    def from_edges(n: int, edges) -> "InteractionGraph":
        adj = np.zeros((n, n), dtype=bool)
        for i, j in edges:
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise ConfigurationError(f"bad edge ({i}, {j}) for n={n}")
            adj[i, j] = adj[j, i] = True
        return InteractionGraph(n, adj)

    def edges(self) -> list[tuple[int, int]]:
        ii, jj = np.nonzero(np.triu(self.adjacency, k=1))
        return [(int(i), int(j)) for i, j in zip(ii, jj)]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum()) // 2


@dataclass(frozen=True)
class SystemSpec:
    """Parameters fully determining one benchmark system.

    dim is the spatial dimension of spring systems (the pendulum and
    attractor fix their own state dimensions).  k0 is the self-spring
    constant used whenever an agent is anchored (single-ball systems, and
    the anchored damped form); it defaults to k.
    """

    kind: str
    n_agents: int = 1
    dim: int = 1
    m: float = 1.0
    k: float = 0.1
    k0: Optional[float] = None
    gamma: float = 10.0
    k1: float = 10.0
    omega: float = 1.0
    length: float = 1.0
    g: float = 9.8
    damped_form: Optional[str] = None  # 'anchored' | 'pairwise'
    graph: Optional[InteractionGraph] = None

    def __post_init__(self):
        if self.kind not in SYSTEM_KINDS:
            raise ConfigurationError(
                f"unknown system kind {self.kind!r}; expected one of {SYSTEM_KINDS}"
            )
        if self.kind == "triple_pendulum" and self.n_agents != 3:
            raise ConfigurationError("triple_pendulum requires n_agents=3")
        if self.kind == "attractor" and self.n_agents != 1:
            raise ConfigurationError("attractor is a single-agent system")
        if self.n_agents < 1:
            raise ConfigurationError("n_agents must be >= 1")
        if self.damped_form not in (None, "anchored", "pairwise"):
            raise ConfigurationError(
                f"damped_form must be 'anchored' or 'pairwise', got {self.damped_form!r}"
            )
        if self.graph is not None and self.graph.n != self.n_agents:
            raise ConfigurationError(
                f"graph has {self.graph.n} nodes but spec has {self.n_agents} agents"
            )

    @property
    def is_spring(self) -> bool:
        return self.kind.endswith("_spring")

    @property
    def anchor_k(self) -> float:
        return self.k if self.k0 is None else self.k0

    @property
    def effective_damped_form(self) -> str:
        if self.damped_form is not None:
            return self.damped_form
        return "anchored" if self.n_agents == 1 else "pairwise"

    @property
    def d_q(self) -> int:
        if self.kind == "triple_pendulum":
            return 1
        if self.kind == "attractor":
            return 3
        return self.dim

    @property
    def d_p(self) -> int:
        if self.kind == "attractor":
            return 0
        return self.d_q

    @property
    def feature_dim(self) -> int:
        return self.d_q + self.d_p

    def resolved_graph(self) -> InteractionGraph:
        if self.graph is not None:
            return self.graph
        if self.kind == "triple_pendulum":
            return InteractionGraph.chain(3)
        return InteractionGraph.complete(self.n_agents)

    def params_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "n_agents": self.n_agents,
            "dim": self.dim,
            "m": self.m,
            "k": self.k,
            "k0": self.anchor_k,
            "gamma": self.gamma,
            "k1": self.k1,
            "omega": self.omega,
            "length": self.length,
            "g": self.g,
            "damped_form": self.effective_damped_form,
            "edges": self.resolved_graph().edges(),
        }
        return out

    @staticmethod
    def from_params_dict(d: dict) -> "SystemSpec":
        graph = InteractionGraph.from_edges(d["n_agents"], d.get("edges", []))
        return SystemSpec(
            kind=d["kind"],
            n_agents=d["n_agents"],
            dim=d.get("dim", 1),
            m=d.get("m", 1.0),
            k=d.get("k", 0.1),
            k0=d.get("k0"),
            gamma=d.get("gamma", 10.0),
            k1=d.get("k1", 10.0),
            omega=d.get("omega", 1.0),
            length=d.get("length", 1.0),
            g=d.get("g", 9.8),
            damped_form=d.get("damped_form"),
            graph=graph,
        )


# ----------------------------------------------------------------- springs

def _spring_force(spec: SystemSpec, q: np.ndarray) -> np.ndarray:
    """Net spring force on each agent (shape like q)."""
    force = np.zeros_like(q)
    anchored_only = (
        spec.kind == "damped_spring" and spec.effective_damped_form == "anchored"
    )
    if spec.n_agents == 1 or anchored_only:
        force -= spec.anchor_k * q
    if spec.n_agents > 1 and not anchored_only:
        adj = spec.resolved_graph().adjacency.astype(np.float64)
        deg = adj.sum(axis=1)
        # sum_{j in N_i} (q_i - q_j) = deg_i q_i - (A q)_i
        force -= spec.k * (deg[:, None] * q - np.matmul(adj, q))
    return force


def _spring_potential(spec: SystemSpec, q: np.ndarray) -> np.ndarray:
    anchored_only = (
        spec.kind == "damped_spring" and spec.effective_damped_form == "anchored"
    )
    pot = np.zeros(q.shape[:-2], dtype=np.float64)
    if spec.n_agents == 1 or anchored_only:
        pot = pot + 0.5 * spec.anchor_k * np.sum(q * q, axis=(-2, -1))
    if spec.n_agents > 1 and not anchored_only:
        adj = spec.resolved_graph().adjacency.astype(np.float64)
        diff = q[..., :, None, :] - q[..., None, :, :]  # (..., n, n, d)
        sq = np.sum(diff * diff, axis=-1)
        # double sum over ordered pairs with the extra 1/2 in front
        pot = pot + 0.5 * 0.5 * spec.k * np.sum(adj * sq, axis=(-2, -1))
    return pot


def _spring_derivative(spec: SystemSpec, state: StateVector, t: float) -> StateVector:
    dq = state.p / spec.m
    dp = _spring_force(spec, state.q)
    if spec.kind == "damped_spring":
        dp = dp - spec.gamma * state.p / spec.m
    elif spec.kind == "forced_spring":
        dp = dp - spec.k1 * np.cos(spec.omega * t)
    return StateVector(dq, dp)


# ------------------------------------------------------------- pendulum

def _pendulum_angles(state: StateVector):
    th = state.q[..., 0]
    pm = state.p[..., 0]
    return (th[..., 0], th[..., 1], th[..., 2]), (pm[..., 0], pm[..., 1], pm[..., 2])


def pendulum_mass_matrix(theta: np.ndarray, m: float, length: float) -> np.ndarray:
    """Angular-momentum map p = M(theta) thetadot for three uniform sticks.

    theta has shape (..., 3); the result has shape (..., 3, 3).
    """
    th1, th2, th3 = theta[..., 0], theta[..., 1], theta[..., 2]
    c12 = np.cos(th1 - th2)
    c13 = np.cos(th1 - th3)
    c23 = np.cos(th2 - th3)
    ml2 = m * length * length
    rows = np.empty(th1.shape + (3, 3), dtype=np.float64)
    rows[..., 0, 0] = 7.0 / 3.0
    rows[..., 0, 1] = 1.5 * c12
    rows[..., 0, 2] = 0.5 * c13
    rows[..., 1, 0] = 1.5 * c12
    rows[..., 1, 1] = 4.0 / 3.0
    rows[..., 1, 2] = 0.5 * c23
    rows[..., 2, 0] = 0.5 * c13
    rows[..., 2, 1] = 0.5 * c23
    rows[..., 2, 2] = 1.0 / 3.0
    return ml2 * rows


def _pendulum_denominator(spec: SystemSpec, th1, th2, th3) -> np.ndarray:
    ml2 = spec.m * spec.length**2
    return ml2 * (
        81.0 * np.cos(2.0 * (th1 - th2))
        - 9.0 * np.cos(2.0 * (th1 - th3))
        + 45.0 * np.cos(2.0 * (th2 - th3))
        - 169.0
    )


def _pendulum_derivative(spec: SystemSpec, state: StateVector, t: float) -> StateVector:
    (th1, th2, th3), (p1, p2, p3) = _pendulum_angles(state)
    m, length, g = spec.m, spec.length, spec.g

    den = _pendulum_denominator(spec, th1, th2, th3)
    if np.any(np.abs(den) < PENDULUM_SINGULARITY_EPS):
        raise IntegrationError(
            "pendulum angular-velocity solve hit a singular mass matrix"
        )

    th1d = (
        6.0
        * (
            9.0 * p1 * np.cos(2.0 * (th2 - th3))
            + 27.0 * p2 * np.cos(th1 - th2)
            - 9.0 * p2 * np.cos(th1 + th2 - 2.0 * th3)
            + 21.0 * p3 * np.cos(th1 - th3)
            - 27.0 * p3 * np.cos(th1 - 2.0 * th2 + th3)
            - 23.0 * p1
        )
        / den
    )
    th2d = (
        6.0
        * (
            27.0 * p1 * np.cos(th1 - th2)
            - 9.0 * p1 * np.cos(th1 + th2 - 2.0 * th3)
            + 9.0 * p2 * np.cos(2.0 * (th1 - th3))
            - 27.0 * p3 * np.cos(2.0 * th1 - th2 - th3)
            + 57.0 * p3 * np.cos(th2 - th3)
            - 47.0 * p2
        )
        / den
    )
    th3d = (
        6.0
        * (
            21.0 * p1 * np.cos(th1 - th3)
            - 27.0 * p1 * np.cos(th1 - 2.0 * th2 + th3)
            - 27.0 * p2 * np.cos(2.0 * th1 - th2 - th3)
            + 57.0 * p2 * np.cos(th2 - th3)
            + 81.0 * p3 * np.cos(2.0 * (th1 - th2))
            - 143.0 * p3
        )
        / den
    )

    s12 = np.sin(th1 - th2)
    s13 = np.sin(th1 - th3)
    s23 = np.sin(th2 - th3)
    half_ml = 0.5 * m * length
    pd1 = -half_ml * (
        3.0 * th1d * th2d * length * s12 + th1d * th3d * length * s13 + 5.0 * g * np.sin(th1)
    )
    pd2 = -half_ml * (
        -3.0 * th1d * th2d * length * s12 + th2d * th3d * length * s23 + 3.0 * g * np.sin(th2)
    )
    # Third stick: dL/dtheta3 carries a positive overall prefactor (all
    # theta3 terms enter the Lagrangian through +cos(theta_i - theta_3)
    # and +cos(theta_3)); the small-angle limit must be restoring,
    # pd3 ~ -(1/2) m l g theta3.
    pd3 = +half_ml * (
        th1d * th3d * length * s13 + th2d * th3d * length * s23 - g * np.sin(th3)
    )

    dq = np.stack([th1d, th2d, th3d], axis=-1)[..., None]
    dp = np.stack([pd1, pd2, pd3], axis=-1)[..., None]
    return StateVector(dq, dp)


def pendulum_energy(spec: SystemSpec, state: StateVector) -> np.ndarray:
    """Total energy T + V of the stick pendulum (batched)."""
    if spec.kind != "triple_pendulum":
        raise UnsupportedSystemError(
            f"pendulum_energy does not apply to {spec.kind!r}"
        )
    theta = state.q[..., 0]
    pvec = state.p[..., 0]
    (th1, th2, th3), _ = _pendulum_angles(state)
    den = _pendulum_denominator(spec, th1, th2, th3)
    if np.any(np.abs(den) < PENDULUM_SINGULARITY_EPS):
        raise IntegrationError("singular mass matrix in pendulum_energy")
    mass = pendulum_mass_matrix(theta, spec.m, spec.length)
    thd = np.linalg.solve(mass, pvec[..., None])[..., 0]
    kinetic = 0.5 * np.einsum("...i,...ij,...j->...", thd, mass, thd)
    mgl = spec.m * spec.g * spec.length
    potential = -mgl * (
        2.5 * np.cos(th1) + 1.5 * np.cos(th2) + 0.5 * np.cos(th3)
    )
    return kinetic + potential


# ------------------------------------------------------------ attractor

def _attractor_derivative(spec: SystemSpec, state: StateVector, t: float) -> StateVector:
    x = state.q[..., 0, 0]
    y = state.q[..., 0, 1]
    z = state.q[..., 0, 2]
    dx = 1.0 + y * z
    dy = -x * z
    dz = y * y + 2.0 * y * z
    dq = np.stack([dx, dy, dz], axis=-1)[..., None, :]
    return StateVector(dq, np.zeros_like(state.p))


# ------------------------------------------------------------- public API

def eval_derivative(spec: SystemSpec, state: StateVector, t: float = 0.0) -> StateVector:
    """Time derivative of the state under the system's equations of motion."""
    if spec.is_spring:
        return _spring_derivative(spec, state, t)
    if spec.kind == "triple_pendulum":
        return _pendulum_derivative(spec, state, t)
    if spec.kind == "attractor":
        return _attractor_derivative(spec, state, t)
    raise UnsupportedSystemError(f"no derivative for {spec.kind!r}")


def make_derivative(spec: SystemSpec):
    """Bind spec into a (state, t) -> StateVector callable for integrators."""
    return lambda state, t: eval_derivative(spec, state, t)


@dataclass(frozen=True)
class Energy:
    mechanical: np.ndarray
    time_term: np.ndarray
    total: np.ndarray


def hamiltonian(
    spec: SystemSpec,
    state: StateVector,
    t: float = 0.0,
    accumulated_work: float | np.ndarray = 0.0,
) -> Energy:
    """Energy bookkeeping for spring systems.

    mechanical = kinetic + spring potential.  The time/work term is the
    explicitly time-dependent part: q-coupled drive for the forced system,
    caller-integrated friction work for the damped one, zero otherwise.
    """
    if not spec.is_spring:
        raise UnsupportedSystemError(
            f"hamiltonian is defined for spring systems only, not {spec.kind!r}"
        )
    kinetic = np.sum(state.p * state.p, axis=(-2, -1)) / (2.0 * spec.m)
    mechanical = kinetic + _spring_potential(spec, state.q)
    if spec.kind == "forced_spring":
        time_term = spec.k1 * np.cos(spec.omega * t) * np.sum(state.q, axis=(-2, -1))
    elif spec.kind == "damped_spring":
        time_term = np.asarray(accumulated_work, dtype=np.float64)
    else:
        time_term = np.zeros_like(mechanical)
    return Energy(mechanical=mechanical, time_term=time_term, total=mechanical + time_term)


def mechanical_energy(spec: SystemSpec, state: StateVector) -> np.ndarray:
    """Kinetic + potential for any system that has one."""
    if spec.is_spring:
        return hamiltonian(spec, state).mechanical
    if spec.kind == "triple_pendulum":
        return pendulum_energy(spec, state)
    raise UnsupportedSystemError(f"{spec.kind!r} has no mechanical energy")


def mechanical_energy_rate(spec: SystemSpec, state: StateVector, t: float = 0.0) -> np.ndarray:
    """Predicted d(mechanical)/dt along trajectories of the system."""
    if spec.kind == "simple_spring":
        return np.zeros(state.q.shape[:-2], dtype=np.float64)
    if spec.kind == "damped_spring":
        psq = np.sum(state.p * state.p, axis=(-2, -1))
        return -spec.gamma * psq / (spec.m * spec.m)
    if spec.kind == "forced_spring":
        qdot_sum = np.sum(state.p, axis=(-2, -1)) / spec.m
        return -qdot_sum * spec.k1 * np.cos(spec.omega * t)
    raise UnsupportedSystemError(
        f"mechanical_energy_rate is defined for spring systems, not {spec.kind!r}"
    )


def classify_reversibility(spec: SystemSpec) -> str:
    """Conservation/reversibility class used by the verification suites."""
    if spec.kind in ("simple_spring", "triple_pendulum"):
        return "conservative_reversible"
    if spec.kind in ("forced_spring", "attractor"):
        return "nonconservative_reversible"
    if spec.kind == "damped_spring":
        return "nonconservative_irreversible"
    return "unknown"


def analytic_solution_simple_spring_1d(q0, p0, k, m, t):
    """Closed-form anchored oscillator: q'' = -(k/m) q.

    Returns (q(t), p(t)); t may be an array.
    """
    if k <= 0 or m <= 0:
        raise ConfigurationError("k and m must be positive")
    t = np.asarray(t, dtype=np.float64)
    w = np.sqrt(k / m)
    q = q0 * np.cos(w * t) + (p0 / (m * w)) * np.sin(w * t)
    p = -q0 * m * w * np.sin(w * t) + p0 * np.cos(w * t)
    return q, p
