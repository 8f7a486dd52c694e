"""Mini-batch training loop shared by all three autoencoder variants."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from pita import autodiff as ad
from pita.errors import ConfigError, ContractError, NumericalError
from pita.loss import LossConfig, physical_loss, reconstruction_loss, schedule_alpha, total_loss
from pita.model.network import Autoencoder, ModelConfig, init_params
from pita.model.optim import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or not self.lr > 0:
            raise ConfigError(f"invalid training config {self}")


@dataclass
class TrainingLog:
    steps: list[dict] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)

    def records(self) -> list[dict]:
        """Step and epoch records interleaved in the order they were made."""
        out = []
        by_epoch: dict[int, list[dict]] = {}
        for rec in self.steps:
            by_epoch.setdefault(rec["epoch"], []).append(rec)
        for rec in self.epochs:
            out.extend({"kind": "step", **r} for r in by_epoch.pop(rec["epoch"], []))
            out.append({"kind": "epoch", **rec})
        for rest in by_epoch.values():
            out.extend({"kind": "step", **r} for r in rest)
        return out


@dataclass
class TrainResult:
    model: Autoencoder
    log: TrainingLog
    adam: AdamState
    step: int
    loss_config: LossConfig


def position_scale(positions: np.ndarray) -> float:
    """95th percentile of the absolute coordinates, used to normalize inputs."""
    s = float(np.percentile(np.abs(positions), 95)) if positions.size else 0.0
    return s if s > 1e-9 else 1.0


def speed_scale(positions: np.ndarray, dt: float) -> float:
    """95th percentile of finite-difference speeds, used to scale speed outputs."""
    if positions.size == 0:
        return 1.0
    step = np.diff(positions, axis=-2)
    s = float(np.percentile(np.hypot(step[..., 0], step[..., 1]), 95)) / dt
    return s if s > 1e-9 else 1.0


def stack_positions(trajectories, config: ModelConfig) -> np.ndarray:
    arr = np.stack([np.asarray(t.positions, dtype=np.float64) for t in trajectories])
    if arr.shape[1:] != (config.T, 2):
        raise ConfigError(f"trajectories have shape {arr.shape[1:]}, model expects ({config.T}, 2)")
    for t in trajectories:
        if not math.isclose(t.dt, config.dt, rel_tol=1e-9):
            raise ConfigError(f"trajectory dt {t.dt} differs from model dt {config.dt}")
    return arr


def batch_loss(model: Autoencoder, layers, batch: np.ndarray, tau: float, loss_config: LossConfig):
    """Batch-mean losses for one forward pass.

    Returns ``(total, rec, phy)``; ``phy`` is None except for the PITA
    variant.  Works with parameter arrays or parameter nodes.
    """
    decoded = model.decode_with(layers, model.encode_with(layers, batch))
    rec = ad.mean(reconstruction_loss(decoded.positions, batch))
    if model.config.variant != "pita":
        return ad.scale(rec, loss_config.lambda1), rec, None
    phy = ad.mean(physical_loss(decoded.states, decoded.controls, loss_config.weights, model.config.dt))
    return total_loss(rec, phy, tau, loss_config), rec, phy


def evaluate_loss(model: Autoencoder, positions: np.ndarray, tau: float, loss_config: LossConfig,
                  batch_size: int = 256) -> dict:
    """Dataset-mean losses without recording a tape."""
    n = len(positions)
    sums = {"loss_total": 0.0, "loss_rec": 0.0, "loss_phy": 0.0}
    has_phy = False
    for i in range(0, n, batch_size):
        chunk = positions[i : i + batch_size]
        total, rec, phy = batch_loss(model, model.params.layers, chunk, tau, loss_config)
        w = len(chunk) / n
        sums["loss_total"] += w * float(total)
        sums["loss_rec"] += w * float(rec)
        if phy is not None:
            has_phy = True
            sums["loss_phy"] += w * float(phy)
    if not has_phy:
        sums["loss_phy"] = None
    return sums


def loss_and_grads(model: Autoencoder, arrays, batch, tau, loss_config):
    tape = ad.Tape()
    nodes = [tape.leaf(a) for a in arrays]
    layers = [(nodes[i], nodes[i + 1]) for i in range(0, len(nodes), 2)]
    total, rec, phy = batch_loss(model, layers, batch, tau, loss_config)
    grads = tape.backward(total)
    return (
        float(total.value),
        float(rec.value),
        None if phy is None else float(phy.value),
        [grads[n] for n in nodes],
    )


def train(
    train_set,
    val_set,
    config: ModelConfig,
    loss_config: LossConfig,
    train_config: TrainConfig,
    resume=None,
) -> TrainResult:
    """Train an autoencoder with Adam on shuffled mini-batches.

    ``resume`` may be a :class:`pita.model.checkpoint.Checkpoint`; its
    parameters, optimizer moments, step counter and resolved loss config are
    continued so the physical-loss schedule has no jump.  ``tau_max`` of
    ``loss_config`` may be None, in which case it is set to the final step
    of this run.
    """
    if not train_set:
        raise ContractError("training set is empty")
    X = stack_positions(train_set, config)
    V = stack_positions(val_set, config) if val_set else None
    n = len(X)
    steps_per_epoch = math.ceil(n / train_config.batch_size)
    hyper = dict(lr=train_config.lr, beta1=train_config.beta1, beta2=train_config.beta2, eps=train_config.eps)

    if resume is not None:
        if resume.model.config != config:
            raise ConfigError("checkpoint model config differs from the requested config")
        model = resume.model
        tau = resume.step
        adam = resume.adam or AdamState.zeros_like(model.params.arrays(), **hyper)
        adam.lr = train_config.lr
        if loss_config.tau_max is None and resume.loss_config is not None:
            loss_config = replace(loss_config, tau_max=resume.loss_config.tau_max)
    else:
        model = Autoencoder(
            config, init_params(config, train_config.seed), position_scale(X), speed_scale(X, config.dt)
        )
        tau = 0
        adam = AdamState.zeros_like(model.params.arrays(), **hyper)
    if loss_config.tau_max is None:
        loss_config = replace(loss_config, tau_max=max(1, tau + train_config.epochs * steps_per_epoch))

    rng = np.random.default_rng([train_config.seed, tau])
    arrays = model.params.arrays()
    history = TrainingLog()
    first_epoch = tau // steps_per_epoch
    for epoch in range(first_epoch, first_epoch + train_config.epochs):
        order = rng.permutation(n)
        totals = []
        for b in range(steps_per_epoch):
            idx = order[b * train_config.batch_size : (b + 1) * train_config.batch_size]
            total, rec, phy, grads = loss_and_grads(model, arrays, X[idx], tau, loss_config)
            if not (math.isfinite(total) and all(np.isfinite(g).all() for g in grads)):
                raise NumericalError(
                    f"non-finite loss or gradient at step {tau} (epoch {epoch}, batch {b}, "
                    f"trajectories {idx.tolist()[:8]}...)"
                )
            arrays, adam = adam_step(arrays, grads, adam)
            alpha = schedule_alpha(tau, loss_config) if config.variant == "pita" else 0.0
            history.steps.append(
                {"step": tau, "epoch": epoch, "loss_total": total, "loss_rec": rec, "loss_phy": phy, "alpha": alpha}
            )
            totals.append((total, rec, phy))
            tau += 1
        model = replace(model, params=model.params.from_arrays(arrays))
        has_phy = totals[0][2] is not None
        record = {
            "step": tau,
            "epoch": epoch,
            "loss_total": float(np.mean([t[0] for t in totals])),
            "loss_rec": float(np.mean([t[1] for t in totals])),
            "loss_phy": float(np.mean([t[2] for t in totals])) if has_phy else None,
            "alpha": schedule_alpha(tau, loss_config) if config.variant == "pita" else 0.0,
        }
        if V is not None:
            val = evaluate_loss(model, V, tau, loss_config)
            record.update({f"val_{k}": v for k, v in val.items()})
        history.epochs.append(record)
        log.debug("epoch %d: %s", epoch, record)

    model = replace(model, params=model.params.from_arrays(arrays))
    return TrainResult(model, history, adam, tau, loss_config)
