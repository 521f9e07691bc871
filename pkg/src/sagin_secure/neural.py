"""Small fully connected networks with hand-written backprop.

Rows are samples: ``mlp_forward`` takes an input of shape (batch, d_in) (a
1-D input is treated as a batch of one) and returns (batch, d_out). Hidden
layers are affine -> ReLU -> inverted dropout; the output layer is affine
followed by ``output_map``. Weights are stored as (fan_in, fan_out).

Updates are functional: ``sgd_step`` and ``adam_step`` return new models and
never mutate their inputs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1
OUTPUT_MAPS = ("identity", "softplus", "none")


class StructureError(ValueError):
    pass


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def inverse_softplus(y):
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


@dataclass(frozen=True)
class MlpModel:
    layer_dims: tuple
    weights: tuple
    biases: tuple
    dropout_rate: float = 0.2
    output_map: str = "identity"
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "weights", tuple(np.asarray(w, dtype=float) for w in self.weights))
        object.__setattr__(self, "biases", tuple(np.asarray(b, dtype=float) for b in self.biases))
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise StructureError("need one weight matrix and bias per layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[k], dims[k + 1]) or b.shape != (dims[k + 1],):
                raise StructureError(f"layer {k}: weight {w.shape} / bias {b.shape} "
                                     f"incompatible with dims {dims[k]}->{dims[k + 1]}")
        if self.output_map not in OUTPUT_MAPS:
            raise StructureError(f"unknown output map {self.output_map!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise StructureError("dropout rate must lie in [0, 1)")

    @property
    def n_layers(self):
        return len(self.weights)

    def params(self):
        return list(self.weights) + list(self.biases)

    def with_params(self, weights, biases):
        return dataclasses.replace(self, weights=tuple(weights), biases=tuple(biases))

    def with_standardization(self, mean, std):
        return dataclasses.replace(self, feature_mean=np.asarray(mean, dtype=float),
                                   feature_std=np.asarray(std, dtype=float))

    def standardize(self, x):
        if self.feature_mean is None:
            return x
        return (x - self.feature_mean) / self.feature_std

    def to_dict(self):
        def arr(a):
            return None if a is None else np.asarray(a).tolist()
        return {
            "format": "sagin-mlp",
            "version": FORMAT_VERSION,
            "layer_dims": list(self.layer_dims),
            "dropout_rate": self.dropout_rate,
            "output_map": self.output_map,
            "feature_mean": arr(self.feature_mean),
            "feature_std": arr(self.feature_std),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "sagin-mlp" or d.get("version") != FORMAT_VERSION:
            raise StructureError("not a version-1 sagin-mlp record")
        mean = None if d["feature_mean"] is None else np.array(d["feature_mean"])
        std = None if d["feature_std"] is None else np.array(d["feature_std"])
        return cls(tuple(d["layer_dims"]), tuple(np.array(w) for w in d["weights"]),
                   tuple(np.array(b) for b in d["biases"]), d["dropout_rate"],
                   d["output_map"], mean, std)

    def dumps(self):
        return json.dumps(self.to_dict(), separators=(",", ":"))


def init_mlp(layer_dims, rng, dropout_rate=0.2, output_map="identity"):
    """He-uniform weights (bound sqrt(6 / fan_in)), zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(tuple(layer_dims), tuple(weights), tuple(biases), dropout_rate, output_map)


@dataclass
class ForwardCache:
    weights: tuple
    inputs: list = field(default_factory=list)   # input to each affine layer
    pre: list = field(default_factory=list)      # pre-activations
    masks: list = field(default_factory=list)    # dropout multipliers, None in eval mode
    squeeze: bool = False


def mlp_forward(model, x, mode="eval", rng=None):
    """Returns (output, cache). ``mode='train'`` applies dropout and needs ``rng``."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x)
    squeeze = x.ndim == 1
    a = np.atleast_2d(x)
    if a.shape[-1] != model.layer_dims[0]:
        raise StructureError(f"input width {a.shape[-1]} != {model.layer_dims[0]}")
    dropout = mode == "train" and model.dropout_rate > 0
    if dropout and rng is None:
        raise ValueError("train mode with dropout needs an rng")
    a = model.standardize(a)
    cache = ForwardCache(weights=model.weights, squeeze=squeeze)
    last = model.n_layers - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        cache.inputs.append(a)
        z = a @ w + b
        cache.pre.append(z)
        if k < last:
            a = np.maximum(z, 0.0)
            if dropout:
                keep = 1.0 - model.dropout_rate
                mask = (rng.random(a.shape) < keep) / keep
                a = a * mask
                cache.masks.append(mask)
            else:
                cache.masks.append(None)
        elif model.output_map == "softplus":
            a = softplus(z)
        else:
            a = z
    return (a[0] if squeeze else a), cache


@dataclass
class Gradients:
    weights: list
    biases: list

    def scaled(self, c):
        return Gradients([c * w for w in self.weights], [c * b for b in self.biases])

    def flat(self):
        return np.concatenate([g.ravel() for g in self.weights + self.biases])


def mlp_backward(model, cache, output_gradient):
    """Gradients of sum(output * output_gradient) w.r.t. every weight and bias."""
    if cache is None or not cache.pre:
        raise StructureError("backward needs the cache of a forward pass")
    if len(cache.weights) != model.n_layers or any(
            a is not b for a, b in zip(cache.weights, model.weights)):
        raise StructureError("cache was produced by a different set of parameters")
    delta = np.atleast_2d(np.asarray(output_gradient, dtype=float))
    if delta.shape != cache.pre[-1].shape:
        raise StructureError(f"output gradient shape {delta.shape} != {cache.pre[-1].shape}")
    if model.output_map == "softplus":
        delta = delta * sigmoid(cache.pre[-1])
    gw = [None] * model.n_layers
    gb = [None] * model.n_layers
    for k in range(model.n_layers - 1, -1, -1):
        gw[k] = cache.inputs[k].T @ delta
        gb[k] = delta.sum(axis=0)
        if k == 0:
            break
        delta = delta @ model.weights[k].T
        mask = cache.masks[k - 1]
        if mask is not None:
            delta = delta * mask
        delta = delta * (cache.pre[k - 1] > 0)
    return Gradients(gw, gb)


def sgd_step(model, gradients, lr):
    """Plain descent: theta <- theta - lr * grad."""
    return model.with_params(
        [w - lr * g for w, g in zip(model.weights, gradients.weights)],
        [b - lr * g for b, g in zip(model.biases, gradients.biases)],
    )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 500
    batch_size: int = 64
    seed: int = 0
    optimizer: str = "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def zeros_like(cls, model):
        return cls([np.zeros_like(p) for p in model.params()],
                   [np.zeros_like(p) for p in model.params()])


def adam_step(model, gradients, state, config):
    """Bias-corrected Adam update; returns (new model, new state)."""
    if state is None:
        state = AdamState.zeros_like(model)
    b1, b2 = config.beta1, config.beta2
    t = state.step + 1
    grads = gradients.weights + gradients.biases
    m = [b1 * mi + (1 - b1) * g for mi, g in zip(state.m, grads)]
    v = [b2 * vi + (1 - b2) * g * g for vi, g in zip(state.v, grads)]
    c1, c2 = 1 - b1 ** t, 1 - b2 ** t
    new = [p - config.learning_rate * (mi / c1) / (np.sqrt(vi / c2) + config.eps)
           for p, mi, vi in zip(model.params(), m, v)]
    nl = model.n_layers
    return model.with_params(new[:nl], new[nl:]), AdamState(m, v, t)


def apply_update(model, gradients, state, config):
    if config.optimizer == "sgd":
        return sgd_step(model, gradients, config.learning_rate), state
    return adam_step(model, gradients, state, config)


@dataclass(frozen=True)
class GradcheckReport:
    max_rel_error: float  # over differentiable coordinates
    n_coordinates: int
    n_kinks: int          # coordinates whose stencil flips a ReLU and are left out


def gradcheck_report(model, loss_fn, x, step=1e-6, dtype=np.float64, chunk=256):
    """Compare backprop with central differences on every parameter.

    ``loss_fn(output) -> (loss, d loss / d output)`` receives outputs shaped
    (..., batch, out) and must reduce the last two axes, so the numeric side
    can push every perturbed parameter set through one stacked forward pass.
    It may return a third item, a boolean array of the loss's own hinge
    states, so stencils that cross a kink of the loss are skipped as well.
    The difference quotients are evaluated in ``dtype`` (``np.longdouble``
    shrinks roundoff on the numeric side). Dropout is off. A coordinate whose
    +h and -h evaluations see different ReLU patterns straddles a kink, where
    no derivative exists; it is counted in ``n_kinks`` instead of compared.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out, cache = mlp_forward(model, x, "eval")
    _, dout = loss_fn(out)
    analytic = mlp_backward(model, cache, dout).flat()

    params = [np.asarray(p, dtype=dtype) for p in model.params()]
    nl = model.n_layers
    xs = np.asarray(x, dtype=dtype)
    if model.feature_mean is not None:
        xs = (xs - np.asarray(model.feature_mean, dtype=dtype)) / np.asarray(model.feature_std, dtype=dtype)
    offsets = np.concatenate([[0], np.cumsum([p.size for p in params])])
    total = int(offsets[-1])
    h = dtype(step)

    def losses(coords, sign):
        # stacked parameter copies, copy j perturbed at flat coordinate coords[j]
        stacked = []
        for k, p in enumerate(params):
            rep = np.broadcast_to(p, (len(coords),) + p.shape).copy()
            inside = (coords >= offsets[k]) & (coords < offsets[k + 1])
            flat = rep.reshape(len(coords), -1)
            flat[np.flatnonzero(inside), coords[inside] - offsets[k]] += sign * h
            stacked.append(rep)
        a = np.broadcast_to(xs, (len(coords),) + xs.shape)
        pattern = []
        for k in range(nl):
            z = a @ stacked[k] + stacked[nl + k][:, None, :]
            if k < nl - 1:
                pattern.append((z > 0).reshape(len(coords), -1))
                a = np.maximum(z, 0)
            else:
                a = np.logaddexp(0, z) if model.output_map == "softplus" else z
        result = loss_fn(a)
        if len(result) > 2 and result[2] is not None:
            # kinks inside the loss itself (hinges), one flag row per perturbed copy
            pattern.append(np.asarray(result[2]).reshape(len(coords), -1))
        pattern = np.concatenate(pattern, axis=1) if pattern else np.zeros((len(coords), 0), bool)
        return np.asarray(result[0], dtype=dtype), pattern

    numeric = np.empty(total)
    kink = np.zeros(total, dtype=bool)
    for lo in range(0, total, chunk):
        coords = np.arange(lo, min(lo + chunk, total))
        up, pat_up = losses(coords, 1)
        down, pat_down = losses(coords, -1)
        numeric[lo:lo + len(coords)] = (up - down) / (2 * h)
        kink[lo:lo + len(coords)] = (pat_up != pat_down).any(axis=1)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-12)
    rel = np.abs(analytic - numeric) / denom
    smooth = rel[~kink]
    return GradcheckReport(float(smooth.max()) if smooth.size else 0.0, total, int(kink.sum()))


def finite_diff_gradcheck(model, loss_fn, x, step=1e-6, dtype=np.float64):
    """Max relative error |analytic - numeric| / max(|analytic|, |numeric|, 1e-12)."""
    return gradcheck_report(model, loss_fn, x, step, dtype).max_rel_error
