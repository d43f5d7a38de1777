"""Multilayer-perceptron autoencoder that learns analog precoder phases.

The network consumes flattened re/im channel features and emits one
sigmoid unit per phase-shifter entry.  The digital stage is refit by
least squares inside the loss, so training minimizes
``||f_opt - f_a @ f_d||_F`` end to end.  Forward, backward, and the Adam
update are written out explicitly; gradients are exact (verified against
central finite differences in the test suite).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import ChannelRealization, make_rng
from .exceptions import DimensionError, DivergenceError
from .linalg import least_squares
from .precoders import HybridPrecoder, enforce_power, optimal_precoder
from .validation import check_positive_int

ACTIVATIONS = ("relu", "sigmoid", "linear")
ROLES = ("input", "encoder", "noise", "decoder", "output")

# Stream tags for deriving independent generators from one master seed.
_INIT_STREAM = 101
_TRAIN_STREAM = 102
_PROJECTION_KEY = 0xFEA7


@dataclass(frozen=True)
class LayerSpec:
    units: int
    activation: str
    role: str

    def __post_init__(self):
        check_positive_int(self.units, "units")
        if self.activation not in ACTIVATIONS:
            raise DimensionError(f"unknown activation {self.activation!r}")
        if self.role not in ROLES:
            raise DimensionError(f"unknown role {self.role!r}")


def default_layer_stack(n_features: int, n_t: int, n_rf: int,
                        encoder_units: Sequence[int] = (300, 128),
                        decoder_units: Sequence[int] = (100, 64)) -> list[LayerSpec]:
    """Encoder, noise, decoder stack with one output unit per analog phase."""
    layers = [LayerSpec(n_features, "linear", "input")]
    for u in encoder_units:
        layers.append(LayerSpec(u, "relu", "encoder"))
    layers.append(LayerSpec(layers[-1].units, "linear", "noise"))
    for u in decoder_units:
        layers.append(LayerSpec(u, "relu", "decoder"))
    layers.append(LayerSpec(n_t * n_rf, "sigmoid", "output"))
    return layers


@dataclass
class MlpModel:
    """Layer specs plus per-layer parameters and Adam state.

    ``weights[i]``/``biases[i]`` correspond to ``layers[i]`` and are None
    for the input and noise layers.  ``meta`` records the channel and
    precoder dimensions the model was built for.
    """

    layers: tuple
    weights: list
    biases: list
    noise_sigma: float = 0.1
    meta: dict = field(default_factory=dict)
    adam_m_w: list = field(default_factory=list)
    adam_v_w: list = field(default_factory=list)
    adam_m_b: list = field(default_factory=list)
    adam_v_b: list = field(default_factory=list)
    step: int = 0

    @property
    def n_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases)
                   if w is not None)


def attach_adam_state(model: MlpModel) -> None:
    """Zero first/second moment accumulators matching the parameter shapes."""
    model.adam_m_w = [None if w is None else np.zeros_like(w) for w in model.weights]
    model.adam_v_w = [None if w is None else np.zeros_like(w) for w in model.weights]
    model.adam_m_b = [None if b is None else np.zeros_like(b) for b in model.biases]
    model.adam_v_b = [None if b is None else np.zeros_like(b) for b in model.biases]
    model.step = 0


def _validate_stack(layers: Sequence[LayerSpec]) -> None:
    if layers[0].role != "input" or layers[-1].role != "output":
        raise DimensionError("layer stack must start with input and end with output")
    inner = [s.role for s in layers[1:-1]]
    if "input" in inner or "output" in inner:
        raise DimensionError("exactly one input and one output layer allowed")
    prev = layers[0].units
    for spec in layers[1:]:
        if spec.role == "noise" and spec.units != prev:
            raise DimensionError(
                f"noise layer must keep width {prev}, got {spec.units}")
        prev = spec.units


def init_network(spec: Sequence[LayerSpec], rng: np.random.Generator,
                 noise_sigma: float = 0.1, meta: dict | None = None) -> MlpModel:
    """Variance-scaled Gaussian init: 2/fan_in for relu layers, 1/fan_in otherwise."""
    spec = tuple(spec)
    _validate_stack(spec)
    weights: list = [None]
    biases: list = [None]
    fan_in = spec[0].units
    for layer in spec[1:]:
        if layer.role == "noise":
            weights.append(None)
            biases.append(None)
            continue
        scale = 2.0 if layer.activation == "relu" else 1.0
        weights.append(rng.standard_normal((layer.units, fan_in))
                       * math.sqrt(scale / fan_in))
        biases.append(np.zeros(layer.units))
        fan_in = layer.units
    model = MlpModel(layers=spec, weights=weights, biases=biases,
                     noise_sigma=noise_sigma, meta=dict(meta or {}))
    attach_adam_state(model)
    return model


def _apply_activation(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    return z


def forward(model: MlpModel, x, mode: str = "infer",
            rng: np.random.Generator | None = None) -> list[np.ndarray]:
    """Run the network, returning one activation array per layer.

    In ``train`` mode the noise layer adds zero-mean Gaussian draws with
    ``model.noise_sigma``; in ``infer`` mode it is the identity.
    """
    if mode not in ("train", "infer"):
        raise DimensionError(f"mode must be 'train' or 'infer', got {mode!r}")
    a = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if a.shape[1] != model.layers[0].units:
        raise DimensionError(
            f"input width {a.shape[1]} does not match input layer "
            f"({model.layers[0].units} units)")
    activations = [a]
    for i, layer in enumerate(model.layers[1:], start=1):
        if layer.role == "noise":
            if mode == "train":
                if rng is None:
                    raise DimensionError("train-mode forward requires an rng for the noise layer")
                a = a + model.noise_sigma * rng.standard_normal(a.shape)
            activations.append(a)
            continue
        z = a @ model.weights[i].T + model.biases[i]
        a = _apply_activation(z, layer.activation)
        if not np.all(np.isfinite(a)):
            raise DivergenceError(f"non-finite activation in layer {i}", layer=i)
        activations.append(a)
    return activations


@dataclass
class Gradients:
    weights: list
    biases: list


def backward(model: MlpModel, activations: Sequence[np.ndarray],
             grad_output: np.ndarray) -> Gradients:
    """Exact chain-rule gradients of a scalar loss given d(loss)/d(output).

    ``grad_output`` must already carry any batch averaging; gradients are
    summed over the batch dimension.  The noise layer passes gradients
    through unchanged.
    """
    g = np.atleast_2d(np.asarray(grad_output, dtype=np.float64))
    grad_w: list = [None] * len(model.weights)
    grad_b: list = [None] * len(model.biases)
    for i in range(len(model.layers) - 1, 0, -1):
        layer = model.layers[i]
        if layer.role == "noise":
            continue
        a = activations[i]
        if layer.activation == "relu":
            dz = g * (a > 0.0)
        elif layer.activation == "sigmoid":
            dz = g * a * (1.0 - a)
        else:
            dz = g
        grad_w[i] = dz.T @ activations[i - 1]
        grad_b[i] = dz.sum(axis=0)
        g = dz @ model.weights[i]
    return Gradients(weights=grad_w, biases=grad_b)


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def adam_step(model: MlpModel, grads: Gradients, lr: float) -> MlpModel:
    """Bias-corrected Adam update applied in place; returns the model."""
    model.step += 1
    t = model.step
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    for i, w in enumerate(model.weights):
        if w is None or grads.weights[i] is None:
            continue
        for param, grad, m, v in ((w, grads.weights[i], model.adam_m_w[i], model.adam_v_w[i]),
                                  (model.biases[i], grads.biases[i],
                                   model.adam_m_b[i], model.adam_v_b[i])):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * grad
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * grad * grad
            update = lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
            param -= update
            if not np.all(np.isfinite(param)):
                raise DivergenceError(f"non-finite parameter after Adam step {t}", layer=i)
    return model


def gauge_fixed(h: np.ndarray) -> np.ndarray:
    """Remove the global phase: rotate so the entry sum is real non-negative.

    A global unit scalar on the channel is physically irrelevant (every
    closed-form scheme's rate is invariant to it) but would force the
    network to learn a continuum of rotated copies of the same map.
    Fixing the gauge keeps the feature-to-phase map single-valued and
    makes the decoded precoder exactly phase-invariant.
    """
    total = h.sum()
    mag = abs(total)
    if mag < 1e-12:
        return h
    return h * (mag / total)


def channel_features(h: np.ndarray) -> np.ndarray:
    """Flatten a complex channel into interleaved re/im float features.

    The channel is gauge-fixed first; see gauge_fixed.
    """
    flat = gauge_fixed(np.asarray(h, dtype=np.complex128)).ravel()
    out = np.empty(2 * flat.size)
    out[0::2] = flat.real
    out[1::2] = flat.imag
    return out


def input_projection_matrix(n_features: int, width: int) -> np.ndarray:
    """Fixed seeded random projection used by the reduced-input configuration.

    Deterministic in the dimensions only, so checkpoints stay self-contained.
    """
    rng = make_rng(_PROJECTION_KEY, n_features, width)
    return rng.standard_normal((n_features, width)) / math.sqrt(n_features)


def _model_inputs(model: MlpModel, feats: np.ndarray) -> np.ndarray:
    feats = np.atleast_2d(feats)
    width = model.layers[0].units
    if feats.shape[1] == width:
        return feats
    return feats @ input_projection_matrix(feats.shape[1], width)


def phases_to_analog(output: np.ndarray, n_t: int, n_rf: int) -> np.ndarray:
    """Sigmoid outputs in [0, 1] become phases in [0, 2*pi), row-major over f_a."""
    out = np.asarray(output, dtype=np.float64)
    if out.size != n_t * n_rf:
        raise DimensionError(
            f"output length {out.size} does not match n_t*n_rf={n_t * n_rf}")
    return np.exp(2j * np.pi * out.reshape(n_t, n_rf))


def reconstruction_loss(output, f_opt: np.ndarray, n_rf: int,
                        n_s: int) -> tuple[float, HybridPrecoder]:
    """Frobenius distance between ``f_opt`` and the decoded hybrid precoder.

    The analog matrix comes from the network output, the digital matrix
    from a least-squares refit followed by power normalization.
    """
    n_t = f_opt.shape[0]
    f_a = phases_to_analog(output, n_t, n_rf)
    f_d = least_squares(f_a, f_opt).x
    precoder = enforce_power(HybridPrecoder(f_a=f_a, f_d=f_d), n_s)
    loss = float(np.linalg.norm(f_opt - precoder.matrix))
    return loss, precoder


def _batch_analog(outputs: np.ndarray, n_t: int, n_rf: int) -> np.ndarray:
    return np.exp(2j * np.pi * outputs.reshape(outputs.shape[0], n_t, n_rf))


def _projection_energy(a: np.ndarray, targets: np.ndarray):
    """Batched ``q^2 = ||P_A T||_F^2`` via the Gram pseudo-inverse.

    The pseudo-inverse keeps the projection exact when analog columns
    coincide (rank-deficient case, e.g. all-equal outputs), matching the
    minimum-norm least-squares semantics of the reference path.
    Returns (q^2, gram pseudo-inverse, A^H T, digital coefficients).
    """
    gram = np.einsum("bik,bil->bkl", a.conj(), a)
    rhs = np.einsum("bik,bis->bks", a.conj(), targets)
    lam, vec = np.linalg.eigh(gram)
    cutoff = 1e-9 * np.maximum(lam[:, -1:], 1e-300)
    inv_lam = np.where(lam > cutoff, 1.0 / np.maximum(lam, 1e-300), 0.0)
    gplus = np.einsum("bij,bj,bkj->bik", vec, inv_lam, vec.conj())
    d0 = np.einsum("bkl,bls->bks", gplus, rhs)
    q2 = np.einsum("bks,bks->b", rhs.conj(), d0).real
    return np.clip(q2, 0.0, None), gplus, rhs, d0


def batch_losses(outputs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-sample reconstruction losses for a batch of network outputs.

    Uses the projector identity
    ``loss^2 = ||T||^2 + n_s - 2 sqrt(n_s) ||P_A T||`` which matches
    reconstruction_loss exactly for full-rank analog matrices.
    """
    n_samples, n_t, n_s = targets.shape
    n_rf = outputs.shape[1] // n_t
    a = _batch_analog(outputs, n_t, n_rf)
    q2, _, _, _ = _projection_energy(a, targets)
    t_norm2 = np.einsum("bis,bis->b", targets.conj(), targets).real
    loss2 = t_norm2 + n_s - 2.0 * math.sqrt(n_s) * np.sqrt(q2)
    return np.sqrt(np.clip(loss2, 0.0, None))


def batch_loss_and_grad(outputs: np.ndarray,
                        targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample losses and exact d(loss)/d(output) for the composed loss.

    The gradient flows through the least-squares digital refit: with
    ``P = A (A^H A)^-1 A^H`` and ``q = ||P T||_F``,
    ``d(q^2)/d(phase) = -2 Im(A * conj(B))`` where
    ``B = (I - P) T T^H A (A^H A)^-1``.
    """
    n_samples, n_t, n_s = targets.shape
    n_rf = outputs.shape[1] // n_t
    a = _batch_analog(outputs, n_t, n_rf)
    q2, gplus, rhs, d0 = _projection_energy(a, targets)
    q = np.sqrt(q2)
    t_norm2 = np.einsum("bis,bis->b", targets.conj(), targets).real
    loss2 = t_norm2 + n_s - 2.0 * math.sqrt(n_s) * q
    losses = np.sqrt(np.clip(loss2, 0.0, None))

    # B = (I - P) T T^H A G^+, assembled right to left.
    ta = np.einsum("bis,bik->bsk", targets.conj(), a)       # T^H A
    c1 = np.einsum("bis,bsk->bik", targets, ta)             # T T^H A
    c2 = np.einsum("bik,bkm->bim", c1, gplus)               # T T^H A G^+
    y = np.einsum("bik,bim->bkm", a.conj(), c2)             # A^H C2
    z = np.einsum("bkl,blm->bkm", gplus, y)
    b_mat = c2 - np.einsum("bik,bkm->bim", a, z)

    # dL/dp = (dL/dq) (dq/dq2) (dq2/dp) = (-sqrt(n_s)/L) (1/(2q)) dq2/dp
    dq2_dphase = -2.0 * (a * b_mat.conj()).imag
    coeff = -math.sqrt(n_s) / (2.0 * np.maximum(losses, 1e-12) * np.maximum(q, 1e-12))
    dloss_dphase = coeff[:, None, None] * dq2_dphase
    grad_out = 2.0 * np.pi * dloss_dphase.reshape(n_samples, -1)
    # Perfect reconstructions sit at the maximum of q: zero gradient.
    grad_out[losses < 1e-9] = 0.0
    return losses, grad_out


@dataclass(frozen=True)
class TrainingSample:
    """Flattened channel features plus the unconstrained target precoder."""

    features: np.ndarray
    target: np.ndarray


def make_training_samples(channels: Sequence[ChannelRealization],
                          n_s: int) -> list[TrainingSample]:
    """Pair each channel's features with its optimal precoder target."""
    return [TrainingSample(features=channel_features(ch.h),
                           target=optimal_precoder(ch, n_s))
            for ch in channels]


def split_dataset(samples: Sequence, rng: np.random.Generator):
    """Shuffled disjoint 80/10/10 split (train gets the floor of 0.8 n,
    validation the floor of 0.1 n, test the remainder)."""
    n = len(samples)
    if n < 10:
        raise DimensionError(f"need at least 10 samples to split, got {n}")
    order = rng.permutation(n)
    n_train = int(0.8 * n)
    n_val = int(0.1 * n)
    train = [samples[i] for i in order[:n_train]]
    val = [samples[i] for i in order[n_train:n_train + n_val]]
    test = [samples[i] for i in order[n_train + n_val:]]
    return train, val, test


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters for one training run."""

    epochs: int = 100
    batch_size: int = 250
    learning_rate: float = 1e-4
    seed: int = 0
    noise_sigma: float = 0.1
    tau: float = 0.1
    n_rf: int = 4
    encoder_units: tuple = (300, 128)
    decoder_units: tuple = (100, 64)
    input_projection: int | None = None


@dataclass
class TrainHistory:
    """Per-epoch metrics plus the per-batch squared-loss trace."""

    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    train_accuracy: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    epoch_mse: list = field(default_factory=list)
    batch_mse: list = field(default_factory=list)
    extra_accuracy: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"train_loss": self.train_loss, "val_loss": self.val_loss,
                "train_accuracy": self.train_accuracy,
                "val_accuracy": self.val_accuracy,
                "epoch_mse": self.epoch_mse, "batch_mse": self.batch_mse,
                "extra_accuracy": self.extra_accuracy}


def _stack_samples(samples: Sequence[TrainingSample]):
    feats = np.stack([s.features for s in samples])
    targets = np.stack([s.target for s in samples])
    return feats, targets


def _evaluate(model: MlpModel, feats: np.ndarray, targets: np.ndarray,
              tau: float) -> tuple[float, float, float]:
    """(mean loss, mean squared loss, accuracy) on a sample set, infer mode."""
    outputs = forward(model, _model_inputs(model, feats), mode="infer")[-1]
    losses = batch_losses(outputs, targets)
    rel = losses / np.linalg.norm(targets, axis=(1, 2))
    return float(losses.mean()), float((losses**2).mean()), float((rel <= tau).mean())


def train(samples: Sequence[TrainingSample], config: TrainingConfig,
          validation: Sequence[TrainingSample] | None = None,
          extra_eval: dict | None = None) -> tuple[MlpModel, TrainHistory]:
    """Mini-batch training loop; deterministic given the config seed.

    ``extra_eval`` maps names to sample sets whose accuracy is tracked
    per epoch alongside train/validation (used for held-out test curves).
    """
    feats, targets = _stack_samples(samples)
    n, n_t, n_s = targets.shape[0], targets.shape[1], targets.shape[2]
    n_features = feats.shape[1]
    width = config.input_projection or n_features
    x = feats if config.input_projection is None else feats @ input_projection_matrix(n_features, width)

    stack = default_layer_stack(width, n_t, config.n_rf,
                                encoder_units=tuple(config.encoder_units),
                                decoder_units=tuple(config.decoder_units))
    meta = {"n_t": n_t, "n_r": n_features // (2 * n_t), "n_rf": config.n_rf, "n_s": n_s}
    model = init_network(stack, make_rng(config.seed, _INIT_STREAM),
                         noise_sigma=config.noise_sigma, meta=meta)
    rng = make_rng(config.seed, _TRAIN_STREAM)
    history = TrainHistory()
    eval_sets = {name: _stack_samples(s) for name, s in (extra_eval or {}).items()}
    for name in eval_sets:
        history.extra_accuracy[name] = []
    val_stack = _stack_samples(validation) if validation else None

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            acts = forward(model, x[idx], mode="train", rng=rng)
            losses, grad_out = batch_loss_and_grad(acts[-1], targets[idx])
            if not np.all(np.isfinite(losses)):
                raise DivergenceError("non-finite loss",
                                      epoch=epoch, batch=start // config.batch_size)
            history.batch_mse.append(float((losses**2).mean()))
            grads = backward(model, acts, grad_out / len(idx))
            adam_step(model, grads, config.learning_rate)

        loss, mse, acc = _evaluate(model, x, targets, config.tau)
        history.train_loss.append(loss)
        history.epoch_mse.append(mse)
        history.train_accuracy.append(acc)
        if val_stack is not None:
            vloss, _, vacc = _evaluate(model, val_stack[0], val_stack[1], config.tau)
            history.val_loss.append(vloss)
            history.val_accuracy.append(vacc)
        for name, (efeats, etargets) in eval_sets.items():
            _, _, eacc = _evaluate(model, efeats, etargets, config.tau)
            history.extra_accuracy[name].append(eacc)
    return model, history


def accuracy(model: MlpModel, samples: Sequence[TrainingSample], tau: float) -> float:
    """Fraction of samples whose relative reconstruction loss is at most tau."""
    if tau <= 0:
        raise DimensionError("tau must be positive")
    feats, targets = _stack_samples(samples)
    _, _, acc = _evaluate(model, feats, targets, tau)
    return acc


def infer_precoder(model: MlpModel, ch: ChannelRealization,
                   f_opt: np.ndarray | None = None) -> HybridPrecoder:
    """Decode a hybrid precoder for one channel from the trained model.

    The digital stage refits against ``f_opt`` when supplied, otherwise
    against the top right-singular-vector estimate computed from the
    channel itself (the deployment path; both give the same matrix here).
    """
    n_t, n_rf, n_s = model.meta["n_t"], model.meta["n_rf"], model.meta["n_s"]
    if ch.n_t != n_t:
        raise DimensionError(
            f"model was built for n_t={n_t}, channel has n_t={ch.n_t}")
    norm = np.linalg.norm(ch.h)
    scale = math.sqrt(ch.n_t * ch.n_r) / norm if norm > 0 else 1.0
    feats = channel_features(ch.h * scale)
    outputs = forward(model, _model_inputs(model, feats), mode="infer")[-1]
    target = f_opt if f_opt is not None else optimal_precoder(ch, n_s)
    f_a = phases_to_analog(outputs[0], n_t, n_rf)
    f_d = least_squares(f_a, target).x
    return enforce_power(HybridPrecoder(f_a=f_a, f_d=f_d), n_s)
