"""Objectives, optimizer, and the training/evaluation loops.

The prediction loss sums squared errors over each sample's irregular
target observations; the reversal regularizer compares the forward latent
trajectory (decoded) against a second rollout integrated with the negated
vector field.  Index pairing follows t'_{K-k} = T - t_k: reverse step K-k
aligns with forward step k.  Everything trains by backpropagation through
the unrolled solver on one tape per minibatch.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward, check_finite_grads
from .data import ObservationSet, rng_stream, PURPOSE_SPLIT, PURPOSE_SHUFFLE
from .errors import ConfigurationError, NonFiniteGradientError, TrainingDivergedError
from .model import (
    ModelConfig,
    decode,
    directed_edges,
    encode_initial_states,
    init_params,
    make_ode_func,
    rollout_forward,
    rollout_reverse,
)

LOSS_VARIANTS = ("treat", "gt_rev", "rev2", "none")


# ------------------------------------------------------------ loss ops

def _sq_diff(a, b):
    if isinstance(a, Tensor):
        if not isinstance(b, Tensor):
            b = a.tape.const(b)
        return ad.l2_norm_sq(ad.sub(a, b))
    return float(np.sum((np.asarray(a) - np.asarray(b)) ** 2))


def reconstruction_loss(y_hat, y_true):
    """Sum of squared residuals between aligned prediction/target stacks."""
    return _sq_diff(y_hat, y_true)


def reversal_loss_treat(fwd_states, rev_states):
    """Forward vs reverse trajectories under the t'_{K-k} = T - t_k pairing.

    Both arguments are per-time lists (length K+1); element k of the
    forward list is compared against element K-k of the reverse list.
    """
    if len(fwd_states) != len(rev_states):
        raise ConfigurationError(
            f"trajectory lengths differ: {len(fwd_states)} vs {len(rev_states)}"
        )
    paired = list(reversed(rev_states))
    if isinstance(fwd_states[0], Tensor):
        fwd = ad.concat(list(fwd_states), axis=0)
        rev = ad.concat(paired, axis=0)
        return ad.l2_norm_sq(ad.sub(fwd, rev))
    fwd = np.concatenate(list(fwd_states), axis=0)
    rev = np.concatenate(paired, axis=0)
    return float(np.sum((fwd - rev) ** 2))


def reversal_loss_gt_rev(y_true, y_rev_paired):
    """Ground truth vs the reverse trajectory at the paired indices."""
    return _sq_diff(y_rev_paired, y_true)


def reversal_loss_rev2(fwd_states, rev2_states):
    """Same-index comparison for the reverse-from-initial-state variant."""
    if len(fwd_states) != len(rev2_states):
        raise ConfigurationError(
            f"trajectory lengths differ: {len(fwd_states)} vs {len(rev2_states)}"
        )
    if isinstance(fwd_states[0], Tensor):
        fwd = ad.concat(list(fwd_states), axis=0)
        rev = ad.concat(list(rev2_states), axis=0)
        return ad.l2_norm_sq(ad.sub(fwd, rev))
    fwd = np.concatenate(list(fwd_states), axis=0)
    rev = np.concatenate(list(rev2_states), axis=0)
    return float(np.sum((fwd - rev) ** 2))


def combined_loss(l_pred, l_rev, alpha: float):
    if isinstance(l_pred, Tensor):
        if l_rev is None or alpha == 0.0:
            return l_pred
        return ad.add(l_pred, ad.smul(l_rev, alpha))
    return l_pred + (0.0 if l_rev is None else alpha * float(l_rev))


# --------------------------------------------------------------- batches

@dataclass
class Batch:
    obs_list: list
    n_agents: int
    K: int
    dt: float
    edges: list
    n_nodes: int
    sel_matrix: np.ndarray   # (n_targets, (K+1) * n_nodes)
    targets: np.ndarray      # (n_targets, d)
    target_rows: list        # per (item, agent): row span into sel rows


def build_batch(obs_list: list[ObservationSet]) -> Batch:
    first = obs_list[0]
    n, K, dt = first.n_agents, first.n_rollout_steps, first.dt
    for obs in obs_list[1:]:
        if obs.n_agents != n or obs.n_rollout_steps != K or obs.dt != dt:
            raise ConfigurationError(
                "all samples in a batch must share n_agents, rollout length, and dt"
            )
    b_total = len(obs_list)
    n_nodes = b_total * n
    edges = []
    for b, obs in enumerate(obs_list):
        edges.extend(directed_edges(obs.graph, n, offset=b * n))

    rows = []
    targets = []
    spans = []
    for b, obs in enumerate(obs_list):
        for i in range(n):
            start = len(rows)
            for k in obs.pred_idx[i]:
                rows.append(int(k) * n_nodes + b * n + i)
            targets.append(obs.pred_feats[i])
            spans.append((b, i, start, len(rows)))
    sel = np.zeros((len(rows), (K + 1) * n_nodes))
    sel[np.arange(len(rows)), rows] = 1.0
    return Batch(
        obs_list=obs_list,
        n_agents=n,
        K=K,
        dt=dt,
        edges=edges,
        n_nodes=n_nodes,
        sel_matrix=sel,
        targets=np.concatenate(targets, axis=0),
        target_rows=spans,
    )


@dataclass
class BatchForward:
    loss: Tensor
    l_pred: float
    l_rev: float | None
    fwd_states: list
    rev_paired_values: np.ndarray | None  # ((K+1)*n_nodes, d) paired decode
    yhat_values: np.ndarray


def batch_forward(
    tape: Tape,
    leaves: dict[str, Tensor],
    config: ModelConfig,
    batch: Batch,
    variant: str,
    alpha: float,
    with_reverse: bool | None = None,
) -> BatchForward:
    """Trace one minibatch; losses are means over the batch's samples."""
    if variant not in LOSS_VARIANTS:
        raise ConfigurationError(f"unknown loss variant {variant!r}")
    b_total = len(batch.obs_list)
    z_rows = [
        encode_initial_states(tape, leaves, config, obs) for obs in batch.obs_list
    ]
    z0 = z_rows[0] if b_total == 1 else ad.concat(z_rows, axis=0)
    g = make_ode_func(tape, leaves, config, batch.edges, batch.n_nodes)
    fwd = rollout_forward(z0, g, batch.K, batch.dt, config.scheme)
    yhat = decode(tape, leaves, config, fwd)

    sel = tape.const(batch.sel_matrix)
    y = tape.const(batch.targets)
    l_pred = ad.smul(
        reconstruction_loss(ad.matmul(sel, yhat), y), 1.0 / b_total
    )

    if with_reverse is None:
        with_reverse = variant in ("treat", "gt_rev", "rev2")
    l_rev = None
    rev_vals = None
    if with_reverse:
        if variant == "rev2":
            rev = rollout_reverse(fwd[0], g, batch.K, batch.dt, config.scheme)
            yrev = decode(tape, leaves, config, rev)
            l_rev = ad.smul(ad.l2_norm_sq(ad.sub(yhat, yrev)), 1.0 / b_total)
            rev_vals = yrev.value
        else:
            rev = rollout_reverse(fwd[-1], g, batch.K, batch.dt, config.scheme)
            yrev_paired = decode(tape, leaves, config, list(reversed(rev)))
            rev_vals = yrev_paired.value
            if variant == "gt_rev":
                l_rev = ad.smul(
                    reversal_loss_gt_rev(y, ad.matmul(sel, yrev_paired)), 1.0 / b_total
                )
            else:
                l_rev = ad.smul(ad.l2_norm_sq(ad.sub(yhat, yrev_paired)), 1.0 / b_total)

    use_rev = l_rev if variant != "none" else None
    loss = combined_loss(l_pred, use_rev, alpha)
    return BatchForward(
        loss=loss,
        l_pred=float(l_pred.value),
        l_rev=None if l_rev is None else float(l_rev.value),
        fwd_states=fwd,
        rev_paired_values=rev_vals,
        yhat_values=yhat.value,
    )


# --------------------------------------------------------------- optimizer

@dataclass
class AdamWState:
    m: dict
    v: dict
    t: int = 0

    @staticmethod
    def init(params: dict[str, np.ndarray]) -> "AdamWState":
        return AdamWState(
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
            t=0,
        )


def optimizer_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamWState,
    lr: float,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> dict[str, np.ndarray]:
    """One decoupled-weight-decay Adam step; returns new params, mutates state."""
    check_finite_grads(grads)
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    out = {}
    for name, theta in params.items():
        g = grads.get(name)
        if g is None:
            out[name] = theta.copy()
            continue
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        out[name] = theta - lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * theta)
    return out


# ------------------------------------------------------------- settings

@dataclass
class TrainSettings:
    model: ModelConfig
    loss_variant: str = "treat"
    alpha: float = 0.5
    lr: float = 3e-3
    epochs: int = 80
    batch_size: int = 32
    patience: int = 20
    val_fraction: float = 0.1
    weight_decay: float = 0.0
    seed: int = 0
    diag_samples: int = 32

    def __post_init__(self):
        if self.loss_variant not in LOSS_VARIANTS:
            raise ConfigurationError(
                f"loss_variant must be one of {LOSS_VARIANTS}, got {self.loss_variant!r}"
            )
        if self.loss_variant == "none" and self.alpha != 0.0:
            raise ConfigurationError("variant 'none' requires alpha = 0")
        if self.alpha < 0:
            raise ConfigurationError("alpha must be >= 0")
        if not (0.0 <= self.val_fraction < 1.0):
            raise ConfigurationError("val_fraction must lie in [0, 1)")


@dataclass
class TrainResult:
    params: dict
    history: list          # rows: dicts with epoch, l_pred, l_reverse, total, val_mse
    best_epoch: int
    final_diag_l_reverse: float
    n_train: int
    n_val: int


def diagnostic_reverse_loss(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    obs_sets: list[ObservationSet],
    chunk: int = 16,
) -> float:
    """Variant-independent reversal gap: mean per-sample treat-style loss.

    Computed outside the optimized graph so baseline runs can report how
    irreversibly their learned field behaves without training on it.
    """
    if not obs_sets:
        return float("nan")
    total = 0.0
    for start in range(0, len(obs_sets), chunk):
        part = obs_sets[start : start + chunk]
        tape = Tape()
        leaves = {k: tape.leaf(v, k) for k, v in params.items()}
        batch = build_batch(part)
        out = batch_forward(
            tape, leaves, config, batch, variant="treat", alpha=0.0, with_reverse=True
        )
        total += out.l_rev * len(part)
    return total / len(obs_sets)


def train(
    train_sets: list[ObservationSet],
    settings: TrainSettings,
    val_sets: list[ObservationSet] | None = None,
) -> TrainResult:
    """Minibatch AdamW training with early stopping on validation MSE."""
    if not train_sets:
        raise ConfigurationError("empty training set")
    if val_sets is None:
        n = len(train_sets)
        n_val = int(round(settings.val_fraction * n)) if n >= 5 else 0
        perm = rng_stream(settings.seed, 0, PURPOSE_SPLIT).permutation(n)
        val_sets = [train_sets[i] for i in perm[:n_val]]
        train_sets = [train_sets[i] for i in perm[n_val:]]

    params = init_params(settings.model, settings.seed)
    state = AdamWState.init(params)
    diag_sets = train_sets[: min(settings.diag_samples, len(train_sets))]

    history = []
    best_val = np.inf
    best_params = {k: v.copy() for k, v in params.items()}
    best_epoch = 0
    stale = 0

    for epoch in range(settings.epochs):
        order = rng_stream(settings.seed, epoch, PURPOSE_SHUFFLE).permutation(
            len(train_sets)
        )
        sum_pred = 0.0
        sum_rev = 0.0
        n_rev = 0
        for start in range(0, len(order), settings.batch_size):
            idx = order[start : start + settings.batch_size]
            batch = build_batch([train_sets[i] for i in idx])
            tape = Tape()
            leaves = {k: tape.leaf(v, k) for k, v in params.items()}
            out = batch_forward(
                tape, leaves, settings.model, batch,
                settings.loss_variant, settings.alpha,
            )
            if not np.isfinite(out.loss.value):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} (batch starting {start})"
                )
            grads = backward(tape, out.loss)
            try:
                params = optimizer_step(
                    params, grads, state, settings.lr, settings.weight_decay
                )
            except NonFiniteGradientError as exc:
                raise TrainingDivergedError(str(exc)) from exc
            sum_pred += out.l_pred * len(idx)
            if out.l_rev is not None:
                sum_rev += out.l_rev * len(idx)
                n_rev += len(idx)

        l_pred_epoch = sum_pred / len(train_sets)
        if n_rev:
            l_rev_epoch = sum_rev / n_rev
        else:
            l_rev_epoch = diagnostic_reverse_loss(params, settings.model, diag_sets)
        total_epoch = l_pred_epoch + settings.alpha * l_rev_epoch

        val_mse = np.nan
        if val_sets:
            val_mse = evaluate(params, val_sets, settings.model, chunk=32).mse
        history.append(
            {
                "epoch": epoch,
                "l_pred": l_pred_epoch,
                "l_reverse": l_rev_epoch,
                "total": total_epoch,
                "val_mse": val_mse,
            }
        )

        if val_sets:
            if val_mse < best_val * (1.0 - 1e-6):
                best_val = val_mse
                best_params = {k: v.copy() for k, v in params.items()}
                best_epoch = epoch
                stale = 0
            else:
                stale += 1
                if stale >= settings.patience:
                    break
        else:
            best_params = {k: v.copy() for k, v in params.items()}
            best_epoch = epoch

    final_diag = diagnostic_reverse_loss(best_params, settings.model, diag_sets)
    return TrainResult(
        params=best_params,
        history=history,
        best_epoch=best_epoch,
        final_diag_l_reverse=final_diag,
        n_train=len(train_sets),
        n_val=len(val_sets) if val_sets else 0,
    )


# ------------------------------------------------------------- evaluation

@dataclass
class EvalReport:
    mse: float
    n_targets: int
    bucket_mse: dict            # horizon -> cumulative MSE over targets <= horizon
    max_error_gt_rev: float     # mean over (sample, agent) of max paired deviation
    per_sample_mse: list


BUCKETS = (20, 40, 60)


def evaluate(
    params: dict[str, np.ndarray],
    obs_sets: list[ObservationSet],
    config: ModelConfig,
    chunk: int = 16,
) -> EvalReport:
    """Forward metrics plus the ground-truth-vs-reverse deviation metric."""
    if not obs_sets:
        raise ConfigurationError("empty evaluation set")
    sq_sum = 0.0
    n_tot = 0
    bucket_sq = {b: 0.0 for b in BUCKETS}
    bucket_n = {b: 0 for b in BUCKETS}
    max_errs = []
    per_sample = []

    for start in range(0, len(obs_sets), chunk):
        part = obs_sets[start : start + chunk]
        batch = build_batch(part)
        tape = Tape()
        leaves = {k: tape.leaf(v, k) for k, v in params.items()}
        out = batch_forward(
            tape, leaves, config, batch, variant="treat", alpha=0.0, with_reverse=True
        )
        yhat = out.yhat_values
        yrev = out.rev_paired_values
        n_nodes = batch.n_nodes
        for b, obs in enumerate(part):
            samp_sq = 0.0
            samp_n = 0
            for i in range(obs.n_agents):
                idxs = obs.pred_idx[i]
                truth = obs.pred_feats[i]
                rows = idxs * n_nodes + b * obs.n_agents + i
                pred = yhat[rows]
                err_sq = np.sum((pred - truth) ** 2, axis=1)
                samp_sq += float(err_sq.sum())
                samp_n += truth.size
                for bk in BUCKETS:
                    if bk <= obs.n_rollout_steps:
                        mask = idxs <= bk
                        bucket_sq[bk] += float(err_sq[mask].sum())
                        bucket_n[bk] += int(mask.sum()) * truth.shape[1]
                rev_pred = yrev[rows]
                dist = np.sqrt(np.sum((rev_pred - truth) ** 2, axis=1))
                max_errs.append(float(dist.max()) if len(dist) else 0.0)
            sq_sum += samp_sq
            n_tot += samp_n
            per_sample.append(samp_sq / samp_n)

    bucket_mse = {
        bk: (bucket_sq[bk] / bucket_n[bk]) for bk in BUCKETS if bucket_n[bk] > 0
    }
    return EvalReport(
        mse=sq_sum / n_tot,
        n_targets=n_tot,
        bucket_mse=bucket_mse,
        max_error_gt_rev=float(np.mean(max_errs)),
        per_sample_mse=per_sample,
    )


# ------------------------------------------------------------- reporting

def write_loss_report(path, history: list[dict]):
    """CSV with the loss identity total = l_pred + alpha * l_reverse intact."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "l_pred", "l_reverse", "total"])
        for row in history:
            writer.writerow(
                [row["epoch"], repr(row["l_pred"]), repr(row["l_reverse"]), repr(row["total"])]
            )
