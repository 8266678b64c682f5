"""Generator training loops for the score-matching and kernel-flow losses.

One iteration draws a latent batch, (flow only) regenerates previous-generator
centres from ``theta_{t-1}`` with a fresh latent batch, draws a data reference
batch, evaluates the loss and its parameter gradient, and takes an Adam step.
The random stream is consumed in that fixed order, so a seed fixes the run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..generators import AdamState, adam_step
from .losses import flowgan_drift, flowgan_loss, scoregan_loss

LOSS_KINDS = ("scoregan", "flowgan")
FLOW_OBJECTIVES = ("residual", "drift")


class TrainingDiverged(FloatingPointError):
    def __init__(self, iteration, value):
        super().__init__(f"non-finite loss {value!r} at iteration {iteration}")
        self.iteration = iteration
        self.value = value


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of a training run.

    ``flow_objective`` picks the FloWGAN parameter step: ``"residual"``
    descends the mean squared flow residual, ``"drift"`` moves samples along
    the flow field (descends the kernel discriminator).
    """

    iterations: int
    batch_size: int = 500
    n_centers: int = 500
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    metric_stride: int = 10
    flow_objective: str = "residual"
    fd_step: float = 1e-5

    def __post_init__(self):
        for name in ("iterations",):
            if int(getattr(self, name)) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("batch_size", "n_centers", "metric_stride"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValueError("invalid Adam hyperparameters")
        if self.flow_objective not in FLOW_OBJECTIVES:
            raise ValueError(f"flow_objective must be one of {FLOW_OBJECTIVES}")


@dataclass
class TrainResult:
    columns: list
    rows: list = field(default_factory=list)
    params: np.ndarray = None
    generator: object = None

    def column(self, name):
        i = self.columns.index(name)
        return np.array([row[i] for row in self.rows], dtype=np.float64)


def train(kind, generator, target, config, rng, kernel=None, metrics=None):
    """Run ``config.iterations`` steps of the ``kind`` loop.

    ``target`` supplies data samples (``sample``) and, for ScoreGAN, the data
    score. ``metrics`` maps column names to callables of the current generator;
    they are recorded with the loss at iteration 0 and every
    ``metric_stride`` iterations, plus the last one. Loss at iteration 0 is
    left as NaN since no batch has been drawn yet.
    """
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")
    if kind == "flowgan" and kernel is None:
        raise ValueError("flowgan training needs a kernel")
    metrics = dict(metrics or {})
    result = TrainResult(columns=["iteration", "loss", *metrics])

    def record(t, loss, g):
        result.rows.append([t, loss, *(float(fn(g)) for fn in metrics.values())])

    theta = generator.params.copy()
    prev = theta.copy()
    state = AdamState.zeros(theta.size, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    record(0, float("nan"), generator)
    n_in = generator.n_in
    flow_step = flowgan_drift if config.flow_objective == "drift" else flowgan_loss
    for t in range(1, config.iterations + 1):
        z = rng.normal((config.batch_size, n_in))
        if kind == "flowgan":
            prev_centers = generator.with_params(prev).forward(rng.normal((config.n_centers, n_in)))
            data = target.sample(rng, config.n_centers)
            loss, grad = flow_step(generator, theta, z, data, prev_centers, kernel)
        else:
            loss, grad = scoregan_loss(generator, theta, z, target, h=config.fd_step)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise TrainingDiverged(t, loss)
        prev = theta
        theta, state = adam_step(state, theta, grad)
        if t % config.metric_stride == 0 or t == config.iterations:
            record(t, loss, generator.with_params(theta))
    result.params = theta
    result.generator = generator.with_params(theta)
    return result
