"""Trajectory generation, irregular observation sampling, and JSONL I/O.

Randomness policy: every stochastic step draws from its own counter-based
stream so that datasets are bitwise reproducible and insertion-order
independent.  Stream keys are `seed * 2**64 + stream_index`, where the
stream index packs (item_index << 4) | purpose.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DatasetFormatError
from .integrators import StateVector, TimeGrid, Trajectory, integrate
from .systems import InteractionGraph, SystemSpec, make_derivative

SCHEMA_VERSION = 1

# purpose nibble for stream indices
PURPOSE_GRAPH = 0
PURPOSE_INIT = 1
PURPOSE_NOISE = 2
PURPOSE_OBS = 3
PURPOSE_SPLIT = 4
PURPOSE_SHUFFLE = 5
PURPOSE_PARAMS = 6


def rng_stream(seed: int, item_index: int = 0, purpose: int = 0) -> np.random.Generator:
    """Philox generator keyed by (seed, item, purpose); order-independent."""
    if seed < 0 or item_index < 0 or purpose < 0 or purpose > 15:
        raise ConfigurationError("rng_stream arguments must be non-negative (purpose < 16)")
    stream_index = (item_index << 4) | purpose
    return np.random.Generator(np.random.Philox(key=(seed << 64) + stream_index))


def sample_graph(n: int, edge_prob: float, rng_seed: int) -> InteractionGraph:
    """Bernoulli graph over unordered pairs in fixed (i, j) iteration order."""
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    return sample_graph_with_rng(n, edge_prob, rng_stream(rng_seed, 0, PURPOSE_GRAPH))


def generate_trajectory(
    spec: SystemSpec,
    initial_state: StateVector,
    scheme: str,
    dt: float,
    raw_steps: int,
    subsample_every: int = 1,
) -> Trajectory:
    """Integrate and record every `subsample_every`-th raw step."""
    if raw_steps % subsample_every != 0:
        raise ConfigurationError(
            f"raw_steps={raw_steps} is not a multiple of subsample_every={subsample_every}"
        )
    grid = TimeGrid(0.0, dt, raw_steps)
    traj = integrate(make_derivative(spec), initial_state, grid, scheme, subsample_every)
    return traj.with_metadata(system=spec.params_dict(), scale=1.0)


def add_gaussian_noise(traj: Trajectory, sigma: float, rng_seed: int) -> Trajectory:
    if sigma < 0:
        raise ConfigurationError(f"noise sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        return Trajectory(
            traj.times.copy(), traj.q.copy(), traj.p.copy(),
            system=traj.system, seed=traj.seed, scale=traj.scale,
        )
    rng = rng_stream(rng_seed, 0, PURPOSE_NOISE)
    q = traj.q + sigma * rng.standard_normal(traj.q.shape)
    p = traj.p + sigma * rng.standard_normal(traj.p.shape)
    return Trajectory(traj.times.copy(), q, p, system=traj.system, seed=traj.seed, scale=traj.scale)


@dataclass
class ObservationSet:
    """Irregular per-agent observations around a single anchor time t0.

    Condition observations live strictly before the prediction window and
    carry times relative to t0 (non-positive).  Prediction targets are
    indexed by their rollout step (1..n_rollout_steps) on the uniform grid
    t0 + idx*dt.
    """

    n_agents: int
    d: int
    t0: float
    dt: float
    n_rollout_steps: int
    cond_times: list  # per agent: (m_i,) float64, relative to t0
    cond_feats: list  # per agent: (m_i, d)
    pred_idx: list    # per agent: (r_i,) int64 rollout indices in [1, K]
    pred_feats: list  # per agent: (r_i, d)
    graph: InteractionGraph | None = None
    system: dict | None = None
    seed: int | None = None
    scale: float = 1.0

    def __post_init__(self):
        for i in range(self.n_agents):
            if len(self.cond_times[i]) == 0:
                raise ConfigurationError(f"agent {i} has no condition observations")
            if np.any(np.diff(self.cond_times[i]) <= 0):
                raise ConfigurationError(f"agent {i} condition times are not increasing")
            if len(self.pred_idx[i]) and (
                self.pred_idx[i].min() < 1 or self.pred_idx[i].max() > self.n_rollout_steps
            ):
                raise ConfigurationError(f"agent {i} target index out of rollout range")
            if np.any(self.cond_times[i] > 0):
                raise ConfigurationError(
                    f"agent {i} has condition observations after the anchor"
                )

    @property
    def n_condition(self) -> list[int]:
        return [len(t) for t in self.cond_times]

    @property
    def n_targets(self) -> list[int]:
        return [len(ix) for ix in self.pred_idx]


def irregular_subsample(
    traj: Trajectory,
    n_obs_min: int,
    n_obs_max: int,
    window: tuple[int, int, int],
    rng_seed: int,
    item_index: int = 0,
) -> ObservationSet:
    """Draw per-agent irregular observations from grid window (lo, split, hi).

    For each agent a count n ~ U{n_obs_min..n_obs_max} is drawn, then n
    distinct grid indices uniformly without replacement from [lo, hi).
    Indices below `split` become condition observations, the rest become
    prediction targets; the anchor t0 is the grid point split-1.  Draws
    leaving either side empty are retried on the same stream.
    """
    if traj.q.ndim != 3:
        raise ConfigurationError("irregular_subsample expects a single (unbatched) trajectory")
    lo, split, hi = window
    if not (0 <= lo < split < hi <= traj.n_points):
        raise ConfigurationError(
            f"window (lo={lo}, split={split}, hi={hi}) invalid for {traj.n_points} grid points"
        )
    if not (1 <= n_obs_min <= n_obs_max <= hi - lo):
        raise ConfigurationError(
            f"need 1 <= n_obs_min <= n_obs_max <= window size; "
            f"got ({n_obs_min}, {n_obs_max}) for window of {hi - lo}"
        )
    rng = rng_stream(rng_seed, item_index, PURPOSE_OBS)
    feats = traj.features()
    anchor = split - 1
    t0 = float(traj.times[anchor])
    dt = float(traj.times[1] - traj.times[0])
    n_roll = hi - 1 - anchor

    cond_times, cond_feats, pred_idx, pred_feats = [], [], [], []
    for agent in range(traj.n_agents):
        for _attempt in range(1000):
            count = int(rng.integers(n_obs_min, n_obs_max + 1))
            idx = np.sort(rng.choice(hi - lo, size=count, replace=False)) + lo
            cond = idx[idx < split]
            targ = idx[idx >= split]
            if len(cond) > 0 and len(targ) > 0:
                break
        else:  # pragma: no cover - astronomically unlikely
            raise ConfigurationError("could not draw a non-degenerate observation split")
        cond_times.append(traj.times[cond] - t0)
        cond_feats.append(feats[cond, agent, :].copy())
        pred_idx.append((targ - anchor).astype(np.int64))
        pred_feats.append(feats[targ, agent, :].copy())

    graph = None
    if traj.system is not None:
        graph = InteractionGraph.from_edges(
            traj.system["n_agents"], traj.system.get("edges", [])
        )
    return ObservationSet(
        n_agents=traj.n_agents,
        d=feats.shape[-1],
        t0=t0,
        dt=dt,
        n_rollout_steps=n_roll,
        cond_times=cond_times,
        cond_feats=cond_feats,
        pred_idx=pred_idx,
        pred_feats=pred_feats,
        graph=graph,
        system=traj.system,
        seed=rng_seed,
        scale=traj.scale,
    )


def normalize_trajectories(
    groups: Sequence[Sequence[Trajectory]],
) -> tuple[list[list[Trajectory]], float]:
    """Scale all features so the max absolute value across groups is 1.

    Returns rescaled copies plus the scale; multiplying by the scale
    restores the originals.
    """
    peak = 0.0
    for group in groups:
        for traj in group:
            feats = traj.features()
            if feats.size:
                peak = max(peak, float(np.max(np.abs(feats))))
    scale = peak if peak > 0 else 1.0
    out = []
    for group in groups:
        out.append(
            [
                Trajectory(
                    t.times.copy(), t.q / scale, t.p / scale,
                    system=t.system, seed=t.seed, scale=scale,
                )
                for t in group
            ]
        )
    return out, scale


# ------------------------------------------------------------------ I/O

def _traj_record(traj: Trajectory) -> dict:
    if traj.system is None:
        raise ConfigurationError("trajectory must carry system metadata to be serialized")
    return {
        "schema_version": SCHEMA_VERSION,
        "record": "trajectory",
        "system": traj.system["kind"],
        "params": traj.system,
        "seed": traj.seed,
        "times": traj.times.tolist(),
        "states": traj.features().reshape(traj.n_points, -1).tolist(),
        "scale": traj.scale,
    }


def _traj_from_record(rec: dict, lineno: int) -> Trajectory:
    params = rec["params"]
    spec = SystemSpec.from_params_dict(params)
    times = np.asarray(rec["times"], dtype=np.float64)
    if len(times) > 1 and np.any(np.diff(times) <= 0):
        raise DatasetFormatError(f"line {lineno}: timestamps are not strictly increasing")
    states = np.asarray(rec["states"], dtype=np.float64)
    if states.ndim != 2 or states.shape[0] != len(times):
        raise DatasetFormatError(f"line {lineno}: states/timestamps shape mismatch")
    expected = spec.n_agents * spec.feature_dim
    if states.shape[1] != expected:
        raise DatasetFormatError(
            f"line {lineno}: state width {states.shape[1]} != n_agents*feature_dim {expected}"
        )
    mats = states.reshape(len(times), spec.n_agents, spec.feature_dim)
    return Trajectory(
        times=times,
        q=mats[..., : spec.d_q].copy(),
        p=mats[..., spec.d_q :].copy(),
        system=params,
        seed=rec.get("seed"),
        scale=float(rec.get("scale", 1.0)),
    )


def _obs_record(obs: ObservationSet) -> dict:
    if obs.system is None:
        raise ConfigurationError("observation set must carry system metadata to be serialized")
    return {
        "schema_version": SCHEMA_VERSION,
        "record": "observation_set",
        "system": obs.system["kind"],
        "params": obs.system,
        "seed": obs.seed,
        "t0": obs.t0,
        "dt": obs.dt,
        "n_rollout_steps": obs.n_rollout_steps,
        "agents": [
            {
                "cond_times": obs.cond_times[i].tolist(),
                "cond_feats": obs.cond_feats[i].tolist(),
                "pred_idx": obs.pred_idx[i].tolist(),
                "pred_feats": obs.pred_feats[i].tolist(),
            }
            for i in range(obs.n_agents)
        ],
        "scale": obs.scale,
    }


def _obs_from_record(rec: dict, lineno: int) -> ObservationSet:
    params = rec["params"]
    spec = SystemSpec.from_params_dict(params)
    agents = rec["agents"]
    if len(agents) != spec.n_agents:
        raise DatasetFormatError(f"line {lineno}: agent count mismatch")
    graph = InteractionGraph.from_edges(spec.n_agents, params.get("edges", []))
    return ObservationSet(
        n_agents=spec.n_agents,
        d=spec.feature_dim,
        t0=float(rec["t0"]),
        dt=float(rec["dt"]),
        n_rollout_steps=int(rec["n_rollout_steps"]),
        cond_times=[np.asarray(a["cond_times"], dtype=np.float64) for a in agents],
        cond_feats=[np.asarray(a["cond_feats"], dtype=np.float64) for a in agents],
        pred_idx=[np.asarray(a["pred_idx"], dtype=np.int64) for a in agents],
        pred_feats=[np.asarray(a["pred_feats"], dtype=np.float64) for a in agents],
        graph=graph,
        system=params,
        seed=rec.get("seed"),
        scale=float(rec.get("scale", 1.0)),
    )


def write_dataset(path, items: Iterable[Trajectory | ObservationSet]) -> int:
    """Write trajectories/observation sets as JSON lines; returns count."""
    n = 0
    with open(path, "w") as fh:
        for item in items:
            if isinstance(item, Trajectory):
                rec = _traj_record(item)
            elif isinstance(item, ObservationSet):
                rec = _obs_record(item)
            else:
                raise ConfigurationError(f"cannot serialize {type(item).__name__}")
            fh.write(json.dumps(rec) + "\n")
            n += 1
    return n


def read_dataset(path) -> list:
    items = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"line {lineno}: invalid JSON ({exc})") from None
            if not isinstance(rec, dict):
                raise DatasetFormatError(f"line {lineno}: record is not an object")
            version = rec.get("schema_version")
            if version != SCHEMA_VERSION:
                raise DatasetFormatError(
                    f"line {lineno}: schema_version {version!r} != {SCHEMA_VERSION}"
                )
            kind = rec.get("record", "trajectory")
            try:
                if kind == "trajectory":
                    items.append(_traj_from_record(rec, lineno))
                elif kind == "observation_set":
                    items.append(_obs_from_record(rec, lineno))
                else:
                    raise DatasetFormatError(f"line {lineno}: unknown record type {kind!r}")
            except KeyError as exc:
                raise DatasetFormatError(f"line {lineno}: missing field {exc}") from None
    return items


# ------------------------------------------------------- dataset builders

SIM_DEFAULTS = {
    # scheme, dt, subsample; spring defaults follow the coarse explicit
    # protocol, stiffer systems get RK4 with finer steps.
    "simple_spring": ("euler", 0.001, 100),
    "forced_spring": ("euler", 0.001, 100),
    "damped_spring": ("euler", 0.001, 100),
    "triple_pendulum": ("rk4", 0.0001, 100),
    "attractor": ("rk4", 0.03, 10),
}


def draw_initial_state(
    spec: SystemSpec, rng: np.random.Generator, init_scale: float = 1.0,
    theta_range: float = np.pi / 2,
) -> StateVector:
    """Seeded initial conditions per system family."""
    if spec.is_spring:
        q = init_scale * rng.standard_normal((spec.n_agents, spec.d_q))
        p = init_scale * rng.standard_normal((spec.n_agents, spec.d_p))
        return StateVector(q, p)
    if spec.kind == "triple_pendulum":
        theta = rng.uniform(-theta_range, theta_range, size=(3, 1))
        return StateVector(theta, np.zeros((3, 1)))
    if spec.kind == "attractor":
        z0 = rng.uniform(1.0, 3.0)
        return StateVector(np.array([[0.0, 0.0, z0]]), np.zeros((1, 0)))
    raise ConfigurationError(f"no initial-state sampler for {spec.kind!r}")


def build_trajectory(
    base_spec: SystemSpec,
    seed: int,
    index: int,
    raw_steps: int,
    dt: float | None = None,
    subsample_every: int | None = None,
    scheme: str | None = None,
    edge_prob: float = 1.0,
    noise_sigma: float = 0.0,
    init_scale: float = 1.0,
    theta_range: float = np.pi / 2,
) -> Trajectory:
    """One dataset trajectory: sampled graph, sampled start, integrated, noised."""
    default_scheme, default_dt, default_sub = SIM_DEFAULTS[base_spec.kind]
    scheme = scheme or default_scheme
    dt = default_dt if dt is None else dt
    subsample_every = default_sub if subsample_every is None else subsample_every

    spec = base_spec
    if base_spec.is_spring and base_spec.n_agents > 1:
        graph_rng = rng_stream(seed, index, PURPOSE_GRAPH)
        graph = sample_graph_with_rng(base_spec.n_agents, edge_prob, graph_rng)
        spec = SystemSpec(**{**_spec_kwargs(base_spec), "graph": graph})
    init_rng = rng_stream(seed, index, PURPOSE_INIT)
    state0 = draw_initial_state(spec, init_rng, init_scale, theta_range)
    traj = generate_trajectory(spec, state0, scheme, dt, raw_steps, subsample_every)
    traj = traj.with_metadata(seed=(seed << 16) + index)
    if noise_sigma > 0:
        traj = add_gaussian_noise(traj, noise_sigma, (seed << 16) + index)
    return traj


def sample_graph_with_rng(n: int, edge_prob: float, rng: np.random.Generator) -> InteractionGraph:
    if not (0.0 <= edge_prob <= 1.0):
        raise ConfigurationError(f"edge_prob must lie in [0, 1], got {edge_prob}")
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < edge_prob:
                adj[i, j] = adj[j, i] = True
    return InteractionGraph(n, adj)


def _spec_kwargs(spec: SystemSpec) -> dict:
    return {
        "kind": spec.kind,
        "n_agents": spec.n_agents,
        "dim": spec.dim,
        "m": spec.m,
        "k": spec.k,
        "k0": spec.k0,
        "gamma": spec.gamma,
        "k1": spec.k1,
        "omega": spec.omega,
        "length": spec.length,
        "g": spec.g,
        "damped_form": spec.damped_form,
        "graph": spec.graph,
    }


def build_observation_sets(
    trajectories: Sequence[Trajectory],
    window: tuple[int, int, int],
    n_obs_min: int,
    n_obs_max: int,
    obs_seed: int,
) -> list[ObservationSet]:
    return [
        irregular_subsample(traj, n_obs_min, n_obs_max, window, obs_seed, item_index=i)
        for i, traj in enumerate(trajectories)
    ]
