"""Latent GraphODE: attention encoder over irregular observations, a GNN
vector field unrolled by a fixed-step solver, and an MLP decoder.

Everything here builds autodiff graphs; the numerical schemes mirror
`integrators` but operate on Tensors so gradients flow through the
unrolled solver (discretize-then-optimize).
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .data import ObservationSet, rng_stream
from .errors import (
    ArtifactMismatchError,
    ConfigurationError,
    EncodingError,
    RolloutDivergedError,
)

CHECKPOINT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    d_obs: int
    d_enc: int = 16
    d_aug: int = 16
    d_model: int = 32
    ode_hidden: int = 64
    dec_hidden: int = 64
    scheme: str = "rk4"
    spatial_round: bool = False
    te_base: float = 10000.0

    def __post_init__(self):
        if self.d_model % 2 != 0:
            raise ConfigurationError("d_model must be even for the temporal encoding")
        if self.scheme not in ("euler", "heun", "rk4"):
            raise ConfigurationError(f"unknown rollout scheme {self.scheme!r}")
        for name in ("d_obs", "d_enc", "d_aug", "d_model", "ode_hidden", "dec_hidden"):
            if getattr(self, name) < (0 if name == "d_aug" else 1):
                raise ConfigurationError(f"{name} must be positive")

    @property
    def d_z(self) -> int:
        return self.d_enc + self.d_aug

    @property
    def d_out(self) -> int:
        return self.d_obs

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        known = {f for f in ModelConfig.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown model config fields: {sorted(unknown)}")
        return ModelConfig(**d)


def temporal_encoding(delta_ts: np.ndarray, d: int, base: float = 10000.0) -> np.ndarray:
    """Sinusoidal encoding of (possibly negative, irregular) time offsets.

    Column 2i is sin(t / base^(2i/d)), column 2i+1 the matching cos, so a
    zero offset encodes as (0, 1, 0, 1, ...).
    """
    if d % 2 != 0:
        raise ConfigurationError("temporal encoding dimension must be even")
    delta_ts = np.asarray(delta_ts, dtype=np.float64).reshape(-1)
    i2 = np.arange(0, d, 2, dtype=np.float64)
    scales = base ** (i2 / d)
    args = delta_ts[:, None] / scales[None, :]
    out = np.empty((len(delta_ts), d), dtype=np.float64)
    out[:, 0::2] = np.sin(args)
    out[:, 1::2] = np.cos(args)
    return out


def init_params(config: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases, in a fixed key order."""
    rng = rng_stream(seed, 0, 7)

    def glorot(fan_in, fan_out):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-a, a, size=(fan_in, fan_out))

    dm, dz, h = config.d_model, config.d_z, config.ode_hidden
    params = {
        "enc.embed.W": glorot(config.d_obs, dm),
        "enc.embed.b": np.zeros((1, dm)),
        "enc.attn.Wq": glorot(dm, dm),
        "enc.attn.Wk": glorot(dm, dm),
        "enc.attn.Wv": glorot(dm, dm),
        "enc.pool.Wa": glorot(dm, dm),
        "enc.out.W": glorot(dm, config.d_enc),
        "enc.out.b": np.zeros((1, config.d_enc)),
        "ode.msg.W": glorot(2 * dz, h),
        "ode.msg.b": np.zeros((1, h)),
        "ode.upd1.W": glorot(dz + h, h),
        "ode.upd1.b": np.zeros((1, h)),
        "ode.upd2.W": glorot(h, dz),
        "ode.upd2.b": np.zeros((1, dz)),
        "dec.W1": glorot(dz, config.dec_hidden),
        "dec.b1": np.zeros((1, config.dec_hidden)),
        "dec.W2": glorot(config.dec_hidden, config.d_out),
        "dec.b2": np.zeros((1, config.d_out)),
    }
    if config.spatial_round:
        params["enc.spatial.W"] = glorot(dm, dm)
        params["enc.spatial.b"] = np.zeros((1, dm))
    return params


def _linear(x: Tensor, W: Tensor, b: Tensor, ones: Tensor) -> Tensor:
    """x @ W + broadcast bias, with the broadcast written as ones @ b."""
    return ad.add(ad.matmul(x, W), ad.matmul(ones, b))


def _ones_const(tape: Tape, rows: int) -> Tensor:
    return tape.const(np.ones((rows, 1)))


def encode_agent(
    tape: Tape,
    leaves: dict[str, Tensor],
    config: ModelConfig,
    rel_times: np.ndarray,
    feats: np.ndarray,
    n_valid: int | None = None,
) -> Tensor:
    """Temporal self-attention over one agent's observations -> (1, d_model).

    `n_valid` marks how many leading rows are real; any padding rows after
    them are masked out of the attention weights and the pooling sums, so
    padded and unpadded calls agree exactly.
    """
    m = feats.shape[0]
    if n_valid is None:
        n_valid = m
    if n_valid < 1:
        raise EncodingError("agent has no observations to encode")
    dm = config.d_model

    X = tape.const(feats)
    ones_m = _ones_const(tape, m)
    H = _linear(X, leaves["enc.embed.W"], leaves["enc.embed.b"], ones_m)
    H = ad.add(H, tape.const(temporal_encoding(rel_times, dm, config.te_base)))

    Q = ad.matmul(H, leaves["enc.attn.Wq"])
    K = ad.matmul(H, leaves["enc.attn.Wk"])
    V = ad.matmul(H, leaves["enc.attn.Wv"])
    S = ad.smul(ad.matmul(Q, ad.transpose(K)), 1.0 / np.sqrt(dm))
    if n_valid < m:
        mask = np.zeros((m, m))
        mask[:, n_valid:] = -1e30
        S = ad.add(S, tape.const(mask))
    A = ad.softmax(S, axis=-1)
    H2 = ad.add(H, ad.relu(ad.matmul(A, V)))
    if n_valid < m:
        H2 = H2[0:n_valid, :]

    pool_ones = tape.const(np.full((1, n_valid), 1.0 / n_valid))
    mean_row = ad.matmul(pool_ones, H2)
    a = ad.tanh(ad.matmul(mean_row, leaves["enc.pool.Wa"]))
    scores = ad.tanh(ad.matmul(H2, ad.transpose(a)))
    u = ad.smul(ad.matmul(ad.transpose(scores), H2), 1.0 / n_valid)
    return u


def encode_initial_states(
    tape: Tape,
    leaves: dict[str, Tensor],
    config: ModelConfig,
    obs: ObservationSet,
) -> Tensor:
    """Latent initial states for all agents of one sample -> (N, d_z)."""
    rows = []
    for i in range(obs.n_agents):
        if obs.cond_feats[i].shape[0] == 0:
            raise EncodingError(f"agent {i} has no condition observations")
        rows.append(
            encode_agent(tape, leaves, config, obs.cond_times[i], obs.cond_feats[i])
        )
    U = rows[0] if len(rows) == 1 else ad.concat(rows, axis=0)

    if config.spatial_round and obs.graph is not None and obs.graph.n_edges > 0:
        adj = obs.graph.adjacency.astype(np.float64)
        deg = np.maximum(adj.sum(axis=1, keepdims=True), 1.0)
        ones_n = _ones_const(tape, obs.n_agents)
        msg = ad.matmul(tape.const(adj / deg), U)
        U = ad.add(U, ad.relu(_linear(msg, leaves["enc.spatial.W"],
                                      leaves["enc.spatial.b"], ones_n)))

    ones_n = _ones_const(tape, obs.n_agents)
    z_enc = _linear(U, leaves["enc.out.W"], leaves["enc.out.b"], ones_n)
    if config.d_aug == 0:
        return z_enc
    zeros_aug = tape.const(np.zeros((obs.n_agents, config.d_aug)))
    return ad.concat([z_enc, zeros_aug], axis=1)


def directed_edges(graph, n_agents: int, offset: int = 0) -> list[tuple[int, int]]:
    """Both directions per undirected edge; a lone agent gets a self-loop
    so the interaction path stays active in single-agent mode."""
    out = []
    if graph is not None:
        for i, j in graph.edges():
            out.append((offset + i, offset + j))
            out.append((offset + j, offset + i))
    if n_agents == 1 and not out:
        out.append((offset, offset))
    return out


def make_ode_func(
    tape: Tape,
    leaves: dict[str, Tensor],
    config: ModelConfig,
    edges: list[tuple[int, int]],
    n_nodes: int,
):
    """Message-passing vector field g over n_nodes stacked latent rows.

    `edges` are directed (src, tgt) pairs; messages m_e = MLP([z_tgt, z_src])
    are summed per target and fed with z into the update MLP.
    """
    n_e = len(edges)
    s_src = np.zeros((n_e, n_nodes))
    s_tgt = np.zeros((n_e, n_nodes))
    for e, (src, tgt) in enumerate(edges):
        s_src[e, src] = 1.0
        s_tgt[e, tgt] = 1.0
    src_sel = tape.const(s_src)
    tgt_sel = tape.const(s_tgt)
    scatter = tape.const(s_tgt.T.copy())
    ones_e = _ones_const(tape, n_e)
    ones_n = _ones_const(tape, n_nodes)

    def g(z: Tensor) -> Tensor:
        zi = ad.matmul(tgt_sel, z)
        zj = ad.matmul(src_sel, z)
        pair = ad.concat([zi, zj], axis=1)
        msg = ad.relu(_linear(pair, leaves["ode.msg.W"], leaves["ode.msg.b"], ones_e))
        agg = ad.matmul(scatter, msg)
        upd_in = ad.concat([z, agg], axis=1)
        hidden = ad.relu(_linear(upd_in, leaves["ode.upd1.W"], leaves["ode.upd1.b"], ones_n))
        return _linear(hidden, leaves["ode.upd2.W"], leaves["ode.upd2.b"], ones_n)

    return g


def _latent_step(z: Tensor, g, dt: float, scheme: str) -> Tensor:
    if scheme == "euler":
        return ad.add(z, ad.smul(g(z), dt))
    if scheme == "heun":
        k1 = g(z)
        k2 = g(ad.add(z, ad.smul(k1, dt)))
        return ad.add(z, ad.smul(ad.add(k1, k2), dt / 2.0))
    if scheme == "rk4":
        k1 = g(z)
        k2 = g(ad.add(z, ad.smul(k1, dt / 2.0)))
        k3 = g(ad.add(z, ad.smul(k2, dt / 2.0)))
        k4 = g(ad.add(z, ad.smul(k3, dt)))
        incr = ad.add(ad.add(k1, ad.smul(k2, 2.0)), ad.add(ad.smul(k3, 2.0), k4))
        return ad.add(z, ad.smul(incr, dt / 6.0))
    raise ConfigurationError(f"unknown rollout scheme {scheme!r}")


def _rollout(z0: Tensor, g, n_steps: int, dt: float, scheme: str, tag: str) -> list[Tensor]:
    states = [z0]
    z = z0
    for k in range(n_steps):
        z = _latent_step(z, g, dt, scheme)
        if not np.all(np.isfinite(z.value)):
            raise RolloutDivergedError(f"{tag} rollout diverged at step {k + 1}", step=k + 1)
        states.append(z)
    return states


def rollout_forward(z0: Tensor, g, n_steps: int, dt: float, scheme: str = "rk4") -> list[Tensor]:
    """Unrolled forward integration; returns K+1 latent states z(t_k)."""
    return _rollout(z0, g, n_steps, dt, scheme, "forward")


def rollout_reverse(z_end: Tensor, g, n_steps: int, dt: float, scheme: str = "rk4") -> list[Tensor]:
    """Integrate -g from the forward endpoint.

    Element j of the result sits at reverse index t'_j, so it pairs with
    forward index K - j.
    """
    neg_g = lambda z: ad.smul(g(z), -1.0)
    return _rollout(z_end, neg_g, n_steps, dt, scheme, "reverse")


def decode(tape: Tape, leaves: dict[str, Tensor], config: ModelConfig,
           z_states: list[Tensor]) -> Tensor:
    """Map stacked latent rows to observation space.

    Returns ((K+1)*n_rows, d_out); row k*n_rows + r is time index k, row r.
    """
    Z = z_states[0] if len(z_states) == 1 else ad.concat(z_states, axis=0)
    ones = _ones_const(tape, Z.value.shape[0])
    hidden = ad.relu(_linear(Z, leaves["dec.W1"], leaves["dec.b1"], ones))
    return _linear(hidden, leaves["dec.W2"], leaves["dec.b2"], ones)


# ------------------------------------------------------------ checkpoints

def _encode_array(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    return {
        "shape": list(arr.shape),
        "dtype": "float64",
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def _decode_array(blob: dict, name: str) -> np.ndarray:
    if blob.get("dtype") != "float64":
        raise ArtifactMismatchError(f"param {name!r} has dtype {blob.get('dtype')!r}")
    raw = base64.b64decode(blob["data"])
    arr = np.frombuffer(raw, dtype=np.float64).copy()
    shape = tuple(blob["shape"])
    expected = int(np.prod(shape)) if shape else 1
    if arr.size != expected:
        raise ArtifactMismatchError(f"param {name!r} data does not match shape {shape}")
    return arr.reshape(shape)


def save_checkpoint(path, params: dict[str, np.ndarray], config: ModelConfig,
                    extra: dict | None = None):
    doc = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "model": config.to_dict(),
        "params": {name: _encode_array(arr) for name, arr in params.items()},
    }
    if extra:
        doc["extra"] = extra
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path):
    """Returns (params, ModelConfig, extra); validates shapes against the
    architecture implied by the stored model config."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ArtifactMismatchError(f"checkpoint is not valid JSON: {exc}") from None
    if doc.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise ArtifactMismatchError(
            f"checkpoint schema_version {doc.get('schema_version')!r} "
            f"!= {CHECKPOINT_SCHEMA_VERSION}"
        )
    config = ModelConfig.from_dict(doc["model"])
    params = {name: _decode_array(blob, name) for name, blob in doc["params"].items()}
    reference = init_params(config, seed=0)
    if set(params) != set(reference):
        missing = sorted(set(reference) - set(params))
        extra_keys = sorted(set(params) - set(reference))
        raise ArtifactMismatchError(
            f"checkpoint params do not match architecture "
            f"(missing {missing}, unexpected {extra_keys})"
        )
    for name, ref in reference.items():
        if params[name].shape != ref.shape:
            raise ArtifactMismatchError(
                f"param {name!r} has shape {params[name].shape}, expected {ref.shape}"
            )
    return params, config, doc.get("extra", {})
