"""Model-component tests: encoder, latent rollout machinery, decoder,
and checkpoint persistence.

The latent solver steps are verified against a linear field z' = A z
whose unrolled update has a closed matrix form.
"""

import numpy as np
import pytest

from revode import autodiff as ad
from revode.autodiff import Tape, backward
from revode.data import ObservationSet
from revode.errors import ArtifactMismatchError, ConfigurationError, RolloutDivergedError
from revode.model import (
    ModelConfig,
    decode,
    directed_edges,
    encode_initial_states,
    init_params,
    load_checkpoint,
    make_ode_func,
    rollout_forward,
    rollout_reverse,
    save_checkpoint,
    temporal_encoding,
)
from revode.systems import InteractionGraph

TINY = ModelConfig(d_obs=2, d_enc=4, d_aug=4, d_model=8, ode_hidden=8, dec_hidden=8)


def tiny_obs(seed=0, n_agents=2, K=4, d=2):
    rng = np.random.default_rng(seed)
    cond_times, cond_feats, pred_idx, pred_feats = [], [], [], []
    for _ in range(n_agents):
        ct = np.sort(rng.uniform(-1.0, -0.01, 3))
        cond_times.append(np.append(ct, 0.0))
        cond_feats.append(rng.standard_normal((4, d)))
        pred_idx.append(np.arange(1, K + 1, dtype=np.int64))
        pred_feats.append(rng.standard_normal((K, d)))
    return ObservationSet(
        n_agents=n_agents, d=d, t0=0.0, dt=0.1, n_rollout_steps=K,
        cond_times=cond_times, cond_feats=cond_feats,
        pred_idx=pred_idx, pred_feats=pred_feats,
        graph=InteractionGraph.complete(n_agents),
    )


# ------------------------------------------------------------------ config

def test_model_config_validation():
    with pytest.raises(ConfigurationError):
        ModelConfig(d_obs=2, d_model=7)  # odd width breaks the sin/cos pairs
    with pytest.raises(ConfigurationError):
        ModelConfig(d_obs=2, scheme="leapfrog")
    with pytest.raises(ConfigurationError):
        ModelConfig(d_obs=0)
    cfg = ModelConfig(d_obs=2, d_enc=4, d_aug=0)
    assert cfg.d_z == 4


def test_model_config_dict_roundtrip():
    cfg = ModelConfig(d_obs=4, d_enc=8, d_aug=8, d_model=16, scheme="euler")
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


# ---------------------------------------------------------------- encoding

def test_temporal_encoding_zero_offset():
    enc = temporal_encoding(np.array([0.0]), d=6)
    assert np.allclose(enc[0, 0::2], 0.0)
    assert np.allclose(enc[0, 1::2], 1.0)


def test_temporal_encoding_hand_values():
    t = 0.5
    enc = temporal_encoding(np.array([t]), d=4, base=100.0)
    # scales are 100^(0/4)=1 and 100^(2/4)=10
    expected = [np.sin(t), np.cos(t), np.sin(t / 10), np.cos(t / 10)]
    assert np.allclose(enc[0], expected)


def test_temporal_encoding_rejects_odd_dim():
    with pytest.raises(ConfigurationError):
        temporal_encoding(np.zeros(1), d=5)


def test_init_params_deterministic_and_seed_sensitive():
    a = init_params(TINY, seed=3)
    b = init_params(TINY, seed=3)
    c = init_params(TINY, seed=4)
    assert set(a) == set(b) == set(c)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert any(not np.array_equal(a[k], c[k]) for k in a)


def test_init_params_shapes_compose():
    p = init_params(TINY, seed=0)
    assert p["enc.embed.W"].shape == (TINY.d_obs, TINY.d_model)
    assert p["ode.msg.W"].shape == (2 * TINY.d_z, TINY.ode_hidden)
    assert p["ode.upd2.W"].shape == (TINY.ode_hidden, TINY.d_z)
    assert p["dec.W2"].shape == (TINY.dec_hidden, TINY.d_obs)


def test_encode_initial_states_shape_and_determinism():
    obs = tiny_obs(seed=5)
    params = init_params(TINY, seed=0)

    def run():
        tape = Tape()
        leaves = {k: tape.leaf(v, k) for k, v in params.items()}
        return encode_initial_states(tape, leaves, TINY, obs).value

    z0_a, z0_b = run(), run()
    assert z0_a.shape == (2, TINY.d_z)
    assert np.array_equal(z0_a, z0_b)
    # augmented tail starts at exactly zero
    assert np.all(z0_a[:, TINY.d_enc:] == 0.0)


def test_encoder_gradients_reach_attention_weights():
    obs = tiny_obs(seed=6)
    params = init_params(TINY, seed=1)
    tape = Tape()
    leaves = {k: tape.leaf(v, k) for k, v in params.items()}
    z0 = encode_initial_states(tape, leaves, TINY, obs)
    grads = backward(tape, ad.l2_norm_sq(z0))
    for key in ("enc.embed.W", "enc.attn.Wq", "enc.attn.Wk", "enc.attn.Wv", "enc.out.W"):
        assert key in grads and np.any(grads[key] != 0.0), key


# ------------------------------------------------------------------- edges

def test_directed_edges_doubles_undirected_pairs():
    g = InteractionGraph.from_edges(3, [(0, 1), (1, 2)])
    edges = directed_edges(g, 3)
    assert sorted(edges) == [(0, 1), (1, 0), (1, 2), (2, 1)]


def test_directed_edges_offset_for_batching():
    g = InteractionGraph.complete(2)
    assert directed_edges(g, 2, offset=4) == [(4, 5), (5, 4)]


def test_lone_agent_gets_self_loop():
    g = InteractionGraph.empty(1)
    assert directed_edges(g, 1) == [(0, 0)]
    assert directed_edges(None, 1, offset=3) == [(3, 3)]


# ----------------------------------------------------------------- rollout

def linear_field(tape, A):
    """z -> z @ A^T as an autodiff closure, mimicking make_ode_func's g."""
    At = tape.const(A.T.copy())
    return lambda z: ad.matmul(z, At)


def test_euler_rollout_matches_matrix_power():
    rng = np.random.default_rng(8)
    A = 0.3 * rng.standard_normal((3, 3))
    z0_val = rng.standard_normal((2, 3))
    dt, K = 0.1, 5

    tape = Tape()
    z0 = tape.const(z0_val)
    states = rollout_forward(z0, linear_field(tape, A), K, dt, scheme="euler")
    assert len(states) == K + 1

    M = np.eye(3) + dt * A.T  # right-multiplication update
    expected = z0_val.copy()
    for k in range(1, K + 1):
        expected = expected @ M
        assert np.allclose(states[k].value, expected, atol=1e-12)


def test_rk4_rollout_approximates_matrix_exponential():
    """On a linear field one RK4 step reproduces the degree-4 Taylor
    polynomial of expm(dt A); check against a high-accuracy reference."""
    rng = np.random.default_rng(2)
    A = 0.5 * rng.standard_normal((3, 3))
    z0_val = rng.standard_normal((1, 3))
    dt = 0.05

    tape = Tape()
    states = rollout_forward(
        tape.const(z0_val), linear_field(tape, A), 1, dt, scheme="rk4"
    )
    taylor = np.eye(3)
    term = np.eye(3)
    for n in range(1, 5):
        term = term @ (dt * A) / n
        taylor = taylor + term
    assert np.allclose(states[1].value, z0_val @ taylor.T, atol=1e-14)


def test_reverse_rollout_negates_field():
    rng = np.random.default_rng(3)
    A = 0.4 * rng.standard_normal((2, 2))
    z_end = rng.standard_normal((1, 2))
    dt = 0.1

    tape = Tape()
    states = rollout_reverse(
        tape.const(z_end), linear_field(tape, A), 1, dt, scheme="euler"
    )
    assert np.allclose(states[1].value, z_end - dt * z_end @ A.T)


def test_reverse_rollout_retraces_forward_under_euler():
    """Euler is exactly reversible on a linear field only up to O(dt^2);
    the defect must shrink quadratically as dt drops."""
    rng = np.random.default_rng(4)
    A = 0.3 * rng.standard_normal((3, 3))
    z0_val = rng.standard_normal((1, 3))

    defects = []
    for dt in (0.1, 0.05):
        tape = Tape()
        g = linear_field(tape, A)
        fwd = rollout_forward(tape.const(z0_val), g, 4, dt, scheme="euler")
        rev = rollout_reverse(fwd[-1], g, 4, dt, scheme="euler")
        defects.append(float(np.max(np.abs(rev[-1].value - z0_val))))
    assert defects[0] > 0
    assert 3.0 < defects[0] / defects[1] < 5.5


def test_rollout_diverged_error():
    tape = Tape()
    blow_up = lambda z: ad.smul(z, 1e200)
    with np.errstate(over="ignore"), pytest.raises(RolloutDivergedError):
        rollout_forward(tape.const(np.ones((1, 2))), blow_up, 3, 1.0, scheme="euler")


def test_message_passing_respects_graph_structure():
    """With no edge between two batched samples, one sample's latent must
    not influence the other's field."""
    params = init_params(TINY, seed=2)
    edges = [(0, 1), (1, 0)]  # nodes 2,3 are isolated from 0,1
    rng = np.random.default_rng(0)
    z_base = rng.standard_normal((4, TINY.d_z))
    z_pert = z_base.copy()
    z_pert[3] += 1.0  # perturb an isolated node

    def field(z_val):
        tape = Tape()
        leaves = {k: tape.leaf(v, k) for k, v in params.items()}
        g = make_ode_func(tape, leaves, TINY, edges, n_nodes=4)
        return g(tape.const(z_val)).value

    f_base, f_pert = field(z_base), field(z_pert)
    assert np.array_equal(f_base[:2], f_pert[:2])   # coupled pair untouched
    assert not np.array_equal(f_base[3], f_pert[3])  # self-term still moves


# ------------------------------------------------------------------ decode

def test_decode_shape_and_row_layout():
    params = init_params(TINY, seed=0)
    tape = Tape()
    leaves = {k: tape.leaf(v, k) for k, v in params.items()}
    rng = np.random.default_rng(1)
    z_states = [tape.const(rng.standard_normal((3, TINY.d_z))) for _ in range(4)]
    out = decode(tape, leaves, TINY, z_states)
    assert out.value.shape == (12, TINY.d_obs)
    single = decode(tape, leaves, TINY, [z_states[2]])
    assert np.allclose(out.value[6:9], single.value)


# -------------------------------------------------------------- checkpoint

def test_checkpoint_roundtrip_bitwise(tmp_path):
    params = init_params(TINY, seed=9)
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, params, TINY, extra={"note": "unit", "alpha": 0.5})
    loaded, config, extra = load_checkpoint(path)
    assert config == TINY
    assert extra == {"note": "unit", "alpha": 0.5}
    for k in params:
        assert loaded[k].tobytes() == params[k].tobytes()


def test_checkpoint_rejects_wrong_schema(tmp_path):
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, init_params(TINY, 0), TINY)
    doc = path.read_text().replace('"schema_version": 1', '"schema_version": 99')
    path.write_text(doc)
    with pytest.raises(ArtifactMismatchError):
        load_checkpoint(path)


def test_checkpoint_rejects_missing_param(tmp_path):
    params = init_params(TINY, 0)
    del params["dec.W2"]
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, params, TINY)
    with pytest.raises(ArtifactMismatchError):
        load_checkpoint(path)


def test_checkpoint_rejects_corrupt_json(tmp_path):
    path = tmp_path / "ckpt.json"
    path.write_text("{ not json")
    with pytest.raises(ArtifactMismatchError):
        load_checkpoint(path)
