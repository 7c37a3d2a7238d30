"""Mini-batch gradient descent with early stopping and gradient verification."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import WindowSample, stack_samples
from .models import LossBreakdown
from .tensor import NumericError

__all__ = [
    "Adam",
    "EpochStats",
    "GradcheckReport",
    "Sgd",
    "TrainConfig",
    "TrainReport",
    "gradcheck",
    "train",
]

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Optimization settings; the paper-side models leave these open."""

    optimizer: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    shuffle: bool = True
    determinism: bool = True

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be >= 1")


class Sgd:
    def __init__(self, learning_rate: float):
        self.lr = learning_rate

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        for name, p in params.items():
            p -= self.lr * grads[name]


class Adam:
    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, p in params.items():
            g = grads[name]
            m = self._m.setdefault(name, np.zeros_like(p))
            v = self._v.setdefault(name, np.zeros_like(p))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.epsilon)


def _make_optimizer(config: TrainConfig):
    if config.optimizer == "sgd":
        return Sgd(config.learning_rate)
    return Adam(config.learning_rate, config.beta1, config.beta2, config.adam_epsilon)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    j: float
    j1: float
    j2: float
    val_j1: float


@dataclass
class TrainReport:
    """Per-epoch objective trace plus the early-stopping outcome."""

    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    best_val_j1: float = float("inf")
    stopping_reason: str = ""

    def to_table(self) -> str:
        lines = ["epoch\tj\tj1\tj2\tval_j1"]
        for e in self.epochs:
            lines.append("%d\t%.17g\t%.17g\t%.17g\t%.17g"
                         % (e.epoch, e.j, e.j1, e.j2, e.val_j1))
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        return ("best_epoch=%d best_val_j1=%.17g epochs_run=%d reason=%s"
                % (self.best_epoch, self.best_val_j1, len(self.epochs),
                   self.stopping_reason))


def train(model, samples: Sequence[WindowSample], config: TrainConfig,
          val_samples: Sequence[WindowSample] | None = None):
    """Fit a model by mini-batch gradient descent.

    Early stopping monitors validation forecast loss (j1). When no validation
    windows are supplied, the training j1 of each epoch is monitored instead
    (useful for deliberate overfitting). The model is left holding the
    parameters of the best epoch; they are also returned.
    """
    if not samples:
        raise ValueError("train() needs at least one training sample")
    x_train, y_train = stack_samples(samples)
    have_val = bool(val_samples)
    if have_val:
        x_val, y_val = stack_samples(val_samples)

    optimizer = _make_optimizer(config)
    rng = np.random.default_rng(config.seed)
    n = x_train.shape[0]
    report = TrainReport()
    best_params = model.get_params_copy()
    epochs_since_best = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        sum_j1 = 0.0
        sum_j2 = 0.0
        try:
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                loss, grads = model.batch_backward(x_train[idx], y_train[idx])
                optimizer.step(model.params, grads)
                sum_j1 += loss.j1 * idx.size
                sum_j2 += loss.j2 * idx.size
            epoch_j1 = sum_j1 / n
            epoch_j2 = sum_j2 / n
            monitored = (model.batch_loss(x_val, y_val).j1 if have_val
                         else model.batch_loss(x_train, y_train).j1)
        except NumericError as exc:
            log.warning("training diverged at epoch %d: %s", epoch, exc)
            report.stopping_reason = "diverged"
            break
        report.epochs.append(EpochStats(epoch, epoch_j1 + epoch_j2,
                                        epoch_j1, epoch_j2, monitored))
        if monitored < report.best_val_j1:
            report.best_val_j1 = monitored
            report.best_epoch = epoch
            best_params = model.get_params_copy()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= config.patience:
                report.stopping_reason = "early-stopping"
                break
    if not report.stopping_reason:
        report.stopping_reason = "max-epochs"
    model.set_params(best_params)
    return model.get_params_copy(), report


@dataclass
class GradcheckReport:
    """Outcome of comparing analytic gradients against finite differences."""

    max_rel_error: float
    worst_param: str
    num_checked: int
    tolerance: float
    failures: list[tuple[str, int, float, float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        line = (f"{verdict} max_rel_error={self.max_rel_error:.3e} "
                f"worst={self.worst_param} checked={self.num_checked}")
        if self.failures:
            names = sorted({name for name, *_ in self.failures})
            line += f" failing={','.join(names)}"
        return line


def gradcheck(model, sample: WindowSample, tolerance: float = 1e-5,
              step: float = 1e-6) -> GradcheckReport:
    """Verify every parameter's analytic gradient with central differences.

    Relative error uses |a - n| / max(|a| + |n|, 1e-6); the floor keeps
    near-zero gradients from amplifying finite-difference noise. Intended for
    small models (a few thousand parameters at most).
    """
    x = sample.input.array[None]
    y = np.asarray(sample.target, dtype=np.float64)[None]
    _, analytic = model.batch_backward(x, y)

    def loss_value() -> float:
        return model.batch_loss(x, y).j

    report = GradcheckReport(0.0, "", 0, tolerance)
    for name, param in model.params.items():
        flat = param.reshape(-1)
        grad_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            up = loss_value()
            flat[i] = saved - step
            down = loss_value()
            flat[i] = saved
            numeric = (up - down) / (2.0 * step)
            a = grad_flat[i]
            rel = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-6)
            report.num_checked += 1
            if rel > report.max_rel_error:
                report.max_rel_error = rel
                report.worst_param = f"{name}[{i}]"
            if rel > tolerance:
                report.failures.append((name, i, float(a), float(numeric), float(rel)))
    return report
