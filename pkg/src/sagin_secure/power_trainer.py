"""Unsupervised power control: one network per access assignment.

Each network maps the 12 standardized log-gains to three raw outputs; a
softplus turns them into powers. Training minimizes the penalized loss

    -phi * sum_u (R_main_u - R_eve_u)
      + sum_k lambda_k * max(q_min - R_main_k, 0)
      + sum_i lambda_i * max(load_i - P_i, 0)

with the secrecy difference left unclamped so that negative-secrecy users
still produce a gradient. At inference, users sharing an AP are rescaled by
``min(1, P_i / load_i)`` so budgets hold exactly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sagin_secure.dataset import as_channels
from sagin_secure.neural import (MlpModel, TrainConfig, apply_update, init_mlp,
                                 inverse_softplus, mlp_backward, mlp_forward, sigmoid,
                                 softplus)
from sagin_secure.rates import (N_ACCESS, ap_loads, as_access, project_to_budgets,
                                rate_jacobians, rate_terms)

log = logging.getLogger(__name__)

POWER_NET_DIMS = (12, 20, 20, 3)
BUNDLE_FORMAT = "sagin-power-bundle"


class TrainingError(RuntimeError):
    pass


def power_output_map(raw_outputs, access, config, project=True):
    p = softplus(np.asarray(raw_outputs, dtype=float))
    return project_to_budgets(p, access, config) if project else p


def _secrecy_term(diff, slope):
    return np.where(diff > 0, diff, slope * diff)


def _loss_parts(main, eve, loads, config):
    secrecy = config.secrecy_weight * _secrecy_term(main - eve, config.negative_secrecy_slope).sum(-1)
    shortfall = np.maximum(config.q_min + config.qos_margin - main, 0.0)
    excess = np.maximum(loads - np.asarray(config.budgets_lin), 0.0)
    return secrecy, shortfall, excess


def penalty_loss(ch, access, power, config):
    """Per-instance penalized loss; shape matches the batch shape of ``ch``."""
    main, eve = rate_terms(access, power, ch)
    secrecy, shortfall, excess = _loss_parts(main, eve, ap_loads(access, power), config)
    return (-secrecy + (np.asarray(config.qos_weights) * shortfall).sum(-1)
            + (np.asarray(config.budget_weights) * excess).sum(-1))


def penalty_hinge_pattern(ch, access, power, config):
    """Which hinges are active, (..., 9): QoS shortfall per user, budget excess per AP, positive secrecy per user."""
    main, eve = rate_terms(access, power, ch)
    _, shortfall, excess = _loss_parts(main, eve, ap_loads(access, power), config)
    return np.concatenate([shortfall > 0, excess > 0, main - eve > 0], axis=-1)


def penalty_loss_and_gradient(ch, access, power, config):
    """Loss and dL/dp (..., 3). Hinge kinks use the inactive branch (subgradient 0)."""
    access = as_access(access)
    main, eve, d_main, d_eve = rate_jacobians(access, power, ch)
    loads = ap_loads(access, power)
    secrecy, shortfall, excess = _loss_parts(main, eve, loads, config)
    qos_w = np.asarray(config.qos_weights)
    bud_w = np.asarray(config.budget_weights)
    loss = -secrecy + (qos_w * shortfall).sum(-1) + (bud_w * excess).sum(-1)

    slope = np.where(main - eve > 0, 1.0, config.negative_secrecy_slope)
    grad = -config.secrecy_weight * np.einsum("...u,...uv->...v", slope, d_main - d_eve)
    qos_active = (shortfall > 0) * qos_w
    grad = grad - np.einsum("...k,...kv->...v", qos_active, d_main)
    bud_active = (excess > 0) * bud_w
    grad = grad + np.einsum("...i,iv->...v", bud_active, access.matrix)
    return loss, grad


def penalty_loss_power_gradient(ch, access, power, config):
    return penalty_loss_and_gradient(ch, access, power, config)[1]


# --------------------------------------------------------------------------

def feature_stats(features):
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    return mean, np.where(std > 0, std, 1.0)


def init_power_net(access, config, rng, mean, std, dropout_rate=0.0):
    """He-uniform net whose output bias starts at the equal-split allocation."""
    from sagin_secure.baselines import baseline_equal_power

    model = init_mlp(POWER_NET_DIMS, rng, dropout_rate)
    start = np.maximum(baseline_equal_power(access, config), 1e-3)
    biases = list(model.biases)
    biases[-1] = inverse_softplus(start)
    return model.with_params(model.weights, biases).with_standardization(mean, std)


@dataclass
class PowerNet:
    access_index: int
    model: MlpModel
    loss_history: list = field(default_factory=list)

    def raw(self, ch):
        return mlp_forward(self.model, as_channels(ch).features, "eval")[0]

    def allocate(self, ch, config, project=True):
        """Powers for a batch (N, 3); projected onto the budgets unless ``project=False``."""
        return power_output_map(self.raw(ch), self.access_index, config, project)


def train_power_net(dataset, access_index, train_config, config, feature_norm=None,
                    model=None, log_every=0, dropout_rate=0.0):
    """Mini-batch descent on the mean penalized loss; returns a :class:`PowerNet`."""
    chans = as_channels(dataset)
    n = len(chans)
    if n == 0:
        raise TrainingError("empty training set")
    access = as_access(access_index)
    gains = chans.gains
    features = chans.features
    mean, std = feature_norm if feature_norm is not None else feature_stats(features)
    rng = np.random.default_rng(np.random.SeedSequence([train_config.seed, access.index]))
    if model is None:
        model = init_power_net(access, config, rng, mean, std, dropout_rate)
    state = None
    history = []
    bs = train_config.batch_size
    for epoch in range(train_config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, bs):
            idx = order[lo:lo + bs]
            raw, cache = mlp_forward(model, features[idx], "train", rng)
            p = softplus(raw)
            if not np.all(np.isfinite(p)):
                raise TrainingError(f"access {access.index}: non-finite output at epoch {epoch} "
                                    f"(lr={train_config.learning_rate})")
            loss, dp = penalty_loss_and_gradient(gains[idx], access, p, config)
            draw = dp * sigmoid(raw) / len(idx)
            grads = mlp_backward(model, cache, draw)
            model, state = apply_update(model, grads, state, train_config)
            total += loss.sum()
        mean_loss = total / n
        if not np.isfinite(mean_loss):
            raise TrainingError(f"access {access.index}: loss diverged at epoch {epoch} "
                                f"(lr={train_config.learning_rate})")
        history.append(float(mean_loss))
        if log_every and (epoch % log_every == 0 or epoch == train_config.epochs - 1):
            log.info(json.dumps({"event": "power_epoch", "access": access.index,
                                 "epoch": epoch, "mean_loss": mean_loss}))
    return PowerNet(access.index, model, history)


def trailing_means(history, window=50):
    h = np.asarray(history, dtype=float)
    if len(h) < window:
        return h.copy()
    c = np.cumsum(np.concatenate([[0.0], h]))
    return (c[window:] - c[:-window]) / window


@dataclass
class PowerNetBundle:
    nets: list
    feature_mean: np.ndarray
    feature_std: np.ndarray
    train_config: TrainConfig
    config_fingerprint: str = ""

    def __post_init__(self):
        if len(self.nets) != N_ACCESS:
            raise ValueError(f"bundle needs {N_ACCESS} nets, got {len(self.nets)}")
        for k, net in enumerate(self.nets):
            if net.access_index != k or net.model.layer_dims[0] != 12 or net.model.layer_dims[-1] != 3:
                raise ValueError(f"net {k} does not fit slot {k} (12 inputs, 3 outputs)")

    def __getitem__(self, n):
        return self.nets[n]

    def allocate_all(self, ch, config):
        """Projected powers of every net, shape (N, 27, 3)."""
        return np.stack([net.allocate(ch, config) for net in self.nets], axis=1)

    def to_dict(self):
        return {
            "format": BUNDLE_FORMAT,
            "version": 1,
            "config_fingerprint": self.config_fingerprint,
            "feature_mean": self.feature_mean.tolist(),
            "feature_std": self.feature_std.tolist(),
            "train_config": vars(self.train_config),
            "nets": [{"access_index": net.access_index, "loss_history": net.loss_history,
                      "model": net.model.to_dict()} for net in self.nets],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != BUNDLE_FORMAT:
            raise ValueError("not a power-net bundle")
        nets = [PowerNet(e["access_index"], MlpModel.from_dict(e["model"]), e["loss_history"])
                for e in d["nets"]]
        return cls(nets, np.array(d["feature_mean"]), np.array(d["feature_std"]),
                   TrainConfig(**d["train_config"]), d["config_fingerprint"])

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def train_power_bundle(dataset, train_config, config, log_every=0, progress=None, dropout_rate=0.0):
    chans = as_channels(dataset)
    mean, std = feature_stats(chans.features)
    nets = []
    for n in range(N_ACCESS):
        nets.append(train_power_net(chans, n, train_config, config, (mean, std),
                                    log_every=log_every, dropout_rate=dropout_rate))
        if progress is not None:
            progress(n, nets[-1])
    return PowerNetBundle(nets, mean, std, train_config, config.fingerprint())
