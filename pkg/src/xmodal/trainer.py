"""Student adapter and its training loop.

The adapter maps raw audio features into the frozen teacher text space.
Two architectures are supported:

* ``linear_head_only``: a single affine map, input -> teacher space.
* ``mlp_encoder_plus_head``: a one-hidden-layer ReLU encoder producing
  the student embedding, followed by an affine head into teacher space.

Forward, backward, and both optimizers (Adam and SGD with momentum) are
implemented directly on numpy arrays; parameters live in a plain dict
keyed by layer name. Training minimizes the contrastive distillation
objective against teacher text rows, drawing each item's prompt variant
from a configurable mixture every epoch. The teacher set is read-only
throughout; only adapter parameters are updated.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .errors import (
    InvalidConfigError,
    NonFiniteLossError,
    ShapeMismatchError,
    TooFewItemsError,
)
from .objective import distill_loss
from .rng import rng_for
from .world import WorldView

__all__ = [
    "AdapterConfig",
    "TrainConfig",
    "TrainReport",
    "init_params",
    "adapter_forward",
    "adapter_backward",
    "embed_audio",
    "dataset_loss",
    "make_optimizer",
    "xavier_uniform",
    "train_adapter",
]

ADAPTER_MODES = ("linear_head_only", "mlp_encoder_plus_head")
OPTIMIZERS = ("adam", "sgd_momentum")

Params = Dict[str, np.ndarray]


@dataclass(frozen=True)
class AdapterConfig:
    """Architecture of the audio-to-teacher adapter."""

    mode: str = "mlp_encoder_plus_head"
    d_in: int = 20
    d_student: int = 24
    d_teacher: int = 32
    d_hidden: int = 512

    def __post_init__(self) -> None:
        if self.mode not in ADAPTER_MODES:
            raise InvalidConfigError(f"unknown adapter mode {self.mode!r}; expected one of {ADAPTER_MODES}")
        for name in ("d_in", "d_student", "d_teacher", "d_hidden"):
            if getattr(self, name) < 1:
                raise InvalidConfigError(f"{name} must be >= 1, got {getattr(self, name)}")

    @property
    def head_in(self) -> int:
        """Input width of the projection head."""
        return self.d_in if self.mode == "linear_head_only" else self.d_student


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters for a distillation run.

    ``prompt_mixture`` is a probability vector over prompt variants;
    None means uniform over the world's variant count. ``epochs`` may be
    0 (report initialization untouched) and ``learning_rate`` may be 0
    (steps become no-ops), both useful as experimental controls.
    """

    batch_size: int = 32
    epochs: int = 30
    learning_rate: float = 0.01
    tau: float = 0.07
    optimizer: str = "adam"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 7
    prompt_mixture: Optional[Tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise InvalidConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.epochs < 0:
            raise InvalidConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate < 0 or not math.isfinite(self.learning_rate):
            raise InvalidConfigError(f"learning_rate must be a finite non-negative real, got {self.learning_rate}")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise InvalidConfigError(f"tau must be positive, got {self.tau}")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidConfigError(f"unknown optimizer {self.optimizer!r}; expected one of {OPTIMIZERS}")
        if not (0.0 <= self.momentum < 1.0):
            raise InvalidConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not (0.0 <= value < 1.0):
                raise InvalidConfigError(f"{name} must be in [0, 1), got {value}")
        if self.adam_eps <= 0:
            raise InvalidConfigError(f"adam_eps must be positive, got {self.adam_eps}")
        if self.prompt_mixture is not None:
            mix = tuple(float(p) for p in self.prompt_mixture)
            if any(p < 0 for p in mix):
                raise InvalidConfigError("prompt_mixture probabilities must be non-negative")
            if abs(sum(mix) - 1.0) > 1e-9:
                raise InvalidConfigError(f"prompt_mixture must sum to 1, got {sum(mix)}")
            object.__setattr__(self, "prompt_mixture", mix)

    def mixture_for(self, variant_count: int) -> np.ndarray:
        """Concrete mixture vector for a world with this many variants."""
        if self.prompt_mixture is None:
            return np.full(variant_count, 1.0 / variant_count)
        if len(self.prompt_mixture) != variant_count:
            raise InvalidConfigError(
                f"prompt_mixture has {len(self.prompt_mixture)} entries but the world has {variant_count} variants"
            )
        return np.asarray(self.prompt_mixture, dtype=np.float64)


@dataclass(frozen=True)
class TrainReport:
    """Outcome of a training run."""

    loss_curve: Tuple[float, ...]
    final_params: Params
    steps: int
    wallclock: float
    adapter_config: AdapterConfig
    train_config: TrainConfig


def xavier_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    """Glorot uniform weight matrix of shape (fan_out, fan_in)."""
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_params(config: AdapterConfig, seed: int) -> Params:
    """Fresh parameters; weights Xavier-uniform, biases zero."""
    if config.mode == "linear_head_only":
        return {
            "head_w": xavier_uniform(rng_for(seed, "init", "head_w"), config.d_teacher, config.d_in),
            "head_b": np.zeros(config.d_teacher, dtype=np.float64),
        }
    return {
        "enc1_w": xavier_uniform(rng_for(seed, "init", "enc1_w"), config.d_hidden, config.d_in),
        "enc1_b": np.zeros(config.d_hidden, dtype=np.float64),
        "enc2_w": xavier_uniform(rng_for(seed, "init", "enc2_w"), config.d_student, config.d_hidden),
        "enc2_b": np.zeros(config.d_student, dtype=np.float64),
        "head_w": xavier_uniform(rng_for(seed, "init", "head_w"), config.d_teacher, config.d_student),
        "head_b": np.zeros(config.d_teacher, dtype=np.float64),
    }


def adapter_forward(config: AdapterConfig, params: Params, inputs: np.ndarray) -> Tuple[np.ndarray, dict]:
    """Map raw inputs (n, d_in) to teacher space (n, d_teacher).

    Returns unnormalized teacher-space rows (the objective's cosine does
    the normalization) and a cache for ``adapter_backward``.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != config.d_in:
        raise ShapeMismatchError(f"expected inputs of shape (n, {config.d_in}), got {x.shape}")
    if config.mode == "linear_head_only":
        z = x @ params["head_w"].T + params["head_b"]
        return z, {"x": x}
    pre1 = x @ params["enc1_w"].T + params["enc1_b"]
    h1 = np.maximum(pre1, 0.0)
    student = h1 @ params["enc2_w"].T + params["enc2_b"]
    z = student @ params["head_w"].T + params["head_b"]
    return z, {"x": x, "pre1": pre1, "h1": h1, "student": student}


def adapter_backward(config: AdapterConfig, params: Params, cache: dict, grad_z: np.ndarray) -> Params:
    """Parameter gradients given d(loss)/d(teacher-space output)."""
    if config.mode == "linear_head_only":
        return {
            "head_w": grad_z.T @ cache["x"],
            "head_b": grad_z.sum(axis=0),
        }
    grads: Params = {
        "head_w": grad_z.T @ cache["student"],
        "head_b": grad_z.sum(axis=0),
    }
    d_student = grad_z @ params["head_w"]
    grads["enc2_w"] = d_student.T @ cache["h1"]
    grads["enc2_b"] = d_student.sum(axis=0)
    d_h1 = d_student @ params["enc2_w"]
    d_h1 = np.where(cache["pre1"] > 0.0, d_h1, 0.0)
    grads["enc1_w"] = d_h1.T @ cache["x"]
    grads["enc1_b"] = d_h1.sum(axis=0)
    return grads


def embed_audio(config: AdapterConfig, params: Params, inputs: np.ndarray) -> np.ndarray:
    """Teacher-space embeddings for raw audio rows (no cache)."""
    z, _ = adapter_forward(config, params, inputs)
    return z


def dataset_loss(view: WorldView, config: AdapterConfig, params: Params, tau: float) -> float:
    """Distillation loss over the whole view in one batch, variant 0."""
    targets = view.teacher_text.matrix[view.audio_features.labels * view.config.variant_count]
    z, _ = adapter_forward(config, params, view.audio_features.matrix)
    return distill_loss(z, targets, tau).loss


def make_optimizer(train_config: TrainConfig, params: Params) -> Callable[[Params, Params], None]:
    """In-place parameter update rule closed over its own state."""
    if train_config.optimizer == "sgd_momentum":
        velocity = {k: np.zeros_like(v) for k, v in params.items()}

        def sgd_step(p: Params, grads: Params) -> None:
            for key in p:
                velocity[key] = train_config.momentum * velocity[key] + grads[key]
                p[key] -= train_config.learning_rate * velocity[key]

        return sgd_step

    first = {k: np.zeros_like(v) for k, v in params.items()}
    second = {k: np.zeros_like(v) for k, v in params.items()}
    t = {"step": 0}

    def adam_step(p: Params, grads: Params) -> None:
        t["step"] += 1
        b1, b2 = train_config.beta1, train_config.beta2
        correction1 = 1.0 - b1 ** t["step"]
        correction2 = 1.0 - b2 ** t["step"]
        for key in p:
            first[key] = b1 * first[key] + (1.0 - b1) * grads[key]
            second[key] = b2 * second[key] + (1.0 - b2) * grads[key] ** 2
            m_hat = first[key] / correction1
            v_hat = second[key] / correction2
            p[key] -= train_config.learning_rate * m_hat / (np.sqrt(v_hat) + train_config.adam_eps)

    return adam_step


def sample_variants(seed: int, epoch: int, n_items: int, mixture: np.ndarray) -> np.ndarray:
    """Prompt variant per training item for one epoch, drawn per mixture."""
    rng = rng_for(seed, "variant", epoch)
    return rng.choice(mixture.size, size=n_items, p=mixture)


def train_adapter(
    view: WorldView,
    adapter_config: AdapterConfig,
    train_config: TrainConfig,
) -> TrainReport:
    """Distill the teacher text space into the audio adapter.

    Each epoch visits the training audio in a fresh seeded permutation,
    pairs every clip with the teacher text row of its species (variant
    drawn from the prompt mixture, per item per epoch), and takes one
    optimizer step per batch. A trailing batch with fewer than two items
    is dropped because the contrastive loss needs negatives.
    """
    started = time.perf_counter()
    audio = view.audio_features
    n_train = audio.n_items
    if n_train < 2:
        raise TooFewItemsError(f"training needs at least 2 audio clips, got {n_train}")
    if adapter_config.d_in != audio.dim:
        raise InvalidConfigError(
            f"adapter expects {adapter_config.d_in}-dim inputs but audio rows have {audio.dim}"
        )
    if adapter_config.d_teacher != view.teacher_text.dim:
        raise InvalidConfigError(
            f"adapter head emits {adapter_config.d_teacher} dims but teacher space has {view.teacher_text.dim}"
        )

    variant_count = view.config.variant_count
    mixture = train_config.mixture_for(variant_count)
    species = audio.labels
    params = init_params(adapter_config, train_config.seed)
    step_fn = make_optimizer(train_config, params)

    loss_curve: List[float] = []
    step = 0
    for epoch in range(train_config.epochs):
        perm = rng_for(train_config.seed, "shuffle", epoch).permutation(n_train)
        variants = sample_variants(train_config.seed, epoch, n_train, mixture)
        epoch_losses: List[float] = []
        for start in range(0, n_train, train_config.batch_size):
            batch = perm[start : start + train_config.batch_size]
            if batch.size < 2:
                continue
            rows = audio.matrix[batch]
            teacher_rows = view.teacher_text.matrix[
                species[batch] * variant_count + variants[batch]
            ]
            z, cache = adapter_forward(adapter_config, params, rows)
            out = distill_loss(z, teacher_rows, train_config.tau)
            if not math.isfinite(out.loss):
                raise NonFiniteLossError(step)
            grads = adapter_backward(adapter_config, params, cache, out.grad_student)
            step_fn(params, grads)
            step += 1
            epoch_losses.append(out.loss)
        if not epoch_losses:
            raise TooFewItemsError("every batch in the epoch had fewer than 2 items")
        loss_curve.append(sum(epoch_losses) / len(epoch_losses))

    return TrainReport(
        loss_curve=tuple(loss_curve),
        final_params=params,
        steps=step,
        wallclock=time.perf_counter() - started,
        adapter_config=adapter_config,
        train_config=train_config,
    )
