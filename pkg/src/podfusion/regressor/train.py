"""Mini-batch SGD with momentum on mean-normalised counts."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import DivergedTraining, EmptySampleSet, NonFiniteActivation, ShapeMismatch, WrongViewCount
from ..rng import Stream
from .network import Network, NetworkConfig

log = logging.getLogger(__name__)


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)
    final_validation_loss: float = 0.0
    seed: int = 0
    target_scale: float = 1.0

    def to_dict(self) -> dict:
        return {"losses": self.losses, "final_validation_loss": self.final_validation_loss,
                "seed": self.seed, "target_scale": self.target_scale}


def _stack(net: Network, samples: Sequence[tuple[np.ndarray, float]]) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    want = net.config.input_shape
    for i, (x, y) in enumerate(samples):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != want:
            if x.shape[1:] == want[1:] and x.shape[0] % net.config.input_grid[0] == 0:
                raise WrongViewCount(f"sample {i} carries {x.shape[0] // net.config.input_grid[0]} views, "
                                     f"network expects {net.config.views}")
            raise ShapeMismatch(f"sample {i} has shape {x.shape}, expected {want}")
        xs.append(x)
        ys.append(float(y))
    return np.stack(xs), np.array(ys)


def _batches(order: np.ndarray, size: int) -> list[np.ndarray]:
    chunks = [order[i:i + size] for i in range(0, len(order), size)]
    # a lone trailing sample would give batch norm zero variance
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def mse(net: Network, x: np.ndarray, t: np.ndarray) -> float:
    return float(np.mean((net.forward(x) - t) ** 2))


def train(
    net: Network,
    samples: Sequence[tuple[np.ndarray, float]],
    config: NetworkConfig | None = None,
    validation: Sequence[tuple[np.ndarray, float]] | None = None,
) -> TrainReport:
    """Fit ``net`` to (fused input, pod count) pairs.

    Targets are counts divided by the training-set mean, which becomes
    ``net.target_scale``.  Shuffling uses the stream ``(seed, "shuffle",
    epoch)`` so runs are reproducible.  The validation loss is the
    inference-mode MSE on ``validation`` (the training set if omitted), in
    normalised units.
    """
    cfg = config or net.config
    if not samples:
        raise EmptySampleSet("training needs at least one sample")
    x, counts = _stack(net, samples)
    scale = float(counts.mean()) if counts.mean() > 0 else 1.0
    t = counts / scale
    report = TrainReport(seed=cfg.seed, target_scale=scale)
    if validation:
        xv, cv = _stack(net, validation)
        tv = cv / scale
    else:
        xv, tv = x, t
    if cfg.epochs == 0:
        saved = net.target_scale
        net.target_scale = scale
        report.final_validation_loss = mse(net, xv, tv)
        net.target_scale = saved
        return report

    net.target_scale = scale
    params = net.parameters()
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    # overflow on the way to divergence is reported as DivergedTraining below
    with np.errstate(over="ignore", invalid="ignore"):
        _run_epochs(net, cfg, x, t, params, velocity, report)
    try:
        report.final_validation_loss = mse(net, xv, tv)
    except NonFiniteActivation as exc:
        raise DivergedTraining("non-finite validation output") from exc
    return report


def _run_epochs(net, cfg, x, t, params, velocity, report) -> None:
    n = len(t)
    for epoch in range(cfg.epochs):
        order = Stream(cfg.seed, "shuffle", epoch).permutation(n)
        total = 0.0
        for idx in _batches(order, cfg.batch_size):
            try:
                y, cache = net.forward_train(x[idx])
            except NonFiniteActivation as exc:
                raise DivergedTraining(f"non-finite activation at epoch {epoch}") from exc
            err = y - t[idx]
            total += float(np.sum(err ** 2))
            grads = net.backward(cache, 2.0 * err / len(idx))
            for k, p in params.items():
                g = grads[k]
                if cfg.weight_decay and k.endswith(".weight"):
                    g = g + cfg.weight_decay * p
                v = velocity[k]
                v *= cfg.momentum
                v -= cfg.learning_rate * g
                p += v
            net.mark_updated()
        loss = total / n
        if not np.isfinite(loss):
            raise DivergedTraining(f"training loss became {loss} at epoch {epoch}")
        report.losses.append(loss)
        log.debug("epoch %d loss %.6g", epoch, loss)
