"""Access selection by value regression over the 27 assignments.

For every training draw, each trained power net proposes a projected
allocation for its assignment; the resulting clamped sum secrecy rates form a
27-vector of targets. A 12 -> 40 -> 27 network regresses onto those vectors
(squared-residual gradient, Adam) and the access choice at inference is the
argmax of its output.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sagin_secure.dataset import as_channels
from sagin_secure.neural import (MlpModel, TrainConfig, apply_update, init_mlp,
                                 mlp_backward, mlp_forward)
from sagin_secure.power_trainer import PowerNetBundle, TrainingError
from sagin_secure.rates import N_ACCESS, check_constraints

log = logging.getLogger(__name__)

ACCESS_NET_DIMS = (12, 40, N_ACCESS)


@dataclass
class QTargetTable:
    targets: np.ndarray   # (N, 27) clamped sum secrecy, masked entries set to 0
    qos_ok: np.ndarray    # (N, 27) every user met q_min under that net's allocation
    raw_targets: np.ndarray  # (N, 27) before masking

    def __len__(self):
        return self.targets.shape[0]

    def save(self, path):
        """``.npz`` with arrays targets, qos_ok, raw_targets (zip entries carry a fixed date)."""
        with open(path, "wb") as fh:
            np.savez(fh, targets=self.targets, qos_ok=self.qos_ok, raw_targets=self.raw_targets)

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            table = cls(z["targets"], z["qos_ok"], z["raw_targets"])
        if table.targets.ndim != 2 or table.targets.shape[1] != N_ACCESS:
            raise ValueError(f"{path}: target table must be (N, {N_ACCESS})")
        return table


def build_q_targets(dataset, bundle, config, mask_infeasible=True):
    """Achieved clamped sum secrecy of every power net on every draw.

    With ``mask_infeasible`` an entry whose allocation misses ``q_min`` for
    any user is replaced by 0, so the selector learns to avoid it.
    """
    chans = as_channels(dataset)
    n = len(chans)
    raw = np.zeros((n, N_ACCESS))
    ok = np.zeros((n, N_ACCESS), dtype=bool)
    for k, net in enumerate(bundle.nets):
        report = check_constraints(k, net.allocate(chans, config), chans, config)
        raw[:, k] = report.sum_secrecy
        ok[:, k] = report.qos_ok.all(axis=-1)
    targets = np.where(ok, raw, 0.0) if mask_infeasible else raw.copy()
    return QTargetTable(targets, ok, raw)


def weighted_abs_loss(targets, prediction, phi):
    """sum_n phi_n |targets_n - prediction_n| (per row for 2-D input)."""
    return (np.asarray(phi) * np.abs(np.asarray(targets) - np.asarray(prediction))).sum(axis=-1)


def uniform_phi():
    return np.full(N_ACCESS, 1.0 / N_ACCESS)


@dataclass
class AccessNet:
    model: MlpModel
    phi: np.ndarray = field(default_factory=uniform_phi)
    loss_history: list = field(default_factory=list)
    metric_history: list = field(default_factory=list)

    def __post_init__(self):
        if self.model.layer_dims[-1] != N_ACCESS:
            raise ValueError(f"access net must have {N_ACCESS} outputs")
        self.phi = np.asarray(self.phi, dtype=float)

    def values(self, features):
        return mlp_forward(self.model, features, "eval")[0]

    def to_dict(self):
        return {"format": "sagin-access-net", "version": 1, "phi": self.phi.tolist(),
                "loss_history": self.loss_history, "metric_history": self.metric_history,
                "model": self.model.to_dict()}

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "sagin-access-net":
            raise ValueError("not an access-net record")
        return cls(MlpModel.from_dict(d["model"]), np.array(d["phi"]),
                   d["loss_history"], d["metric_history"])

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def select_access(net, features):
    """Argmax over the 27 values; ties go to the lowest index."""
    values = net.values(features) if isinstance(net, AccessNet) else np.asarray(net)
    return np.argmax(values, axis=-1)


def train_access_net(q_table, dataset, train_config, feature_norm, phi=None,
                     validation=None, dropout_rate=0.2, log_every=0):
    """Adam on the squared residual (V(h) - R); Eq.-18 error tracked per epoch.

    ``validation`` is an optional ``(features, QTargetTable)`` pair for the
    tracked metric; without it the metric is taken on the training set.
    """
    chans = as_channels(dataset)
    features = chans.features
    targets = q_table.targets
    if len(targets) != len(features):
        raise TrainingError("target table and dataset are not aligned")
    n = len(features)
    if n == 0:
        raise TrainingError("empty training set")
    phi = uniform_phi() if phi is None else np.asarray(phi, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence([train_config.seed, 1000]))
    model = init_mlp(ACCESS_NET_DIMS, rng, dropout_rate).with_standardization(*feature_norm)
    val_x, val_t = (features, targets) if validation is None else (validation[0], validation[1].targets)
    state = None
    losses, metrics = [], []
    bs = train_config.batch_size
    for epoch in range(train_config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, bs):
            idx = order[lo:lo + bs]
            out, cache = mlp_forward(model, features[idx], "train", rng)
            resid = out - targets[idx]
            total += 0.5 * (resid * resid).sum()
            grads = mlp_backward(model, cache, resid / len(idx))
            model, state = apply_update(model, grads, state, train_config)
        loss = total / n
        if not np.isfinite(loss):
            raise TrainingError(f"access net diverged at epoch {epoch}")
        losses.append(float(loss))
        pred = mlp_forward(model, val_x, "eval")[0]
        metrics.append(float(weighted_abs_loss(val_t, pred, phi).mean()))
        if log_every and (epoch % log_every == 0 or epoch == train_config.epochs - 1):
            log.info(json.dumps({"event": "access_epoch", "epoch": epoch,
                                 "mean_loss": loss, "weighted_abs_error": metrics[-1]}))
    return AccessNet(model, phi, losses, metrics)


# --------------------------------------------------------------------------

@dataclass
class InferenceResult:
    access: np.ndarray   # (N,)
    power: np.ndarray    # (N, 3), projected
    sum_secrecy: np.ndarray
    qos_ok: np.ndarray   # (N,) all users met q_min
    budget_ok: np.ndarray  # (N,) all APs within budget


@dataclass
class InferencePipeline:
    access_net: AccessNet
    power_bundle: PowerNetBundle

    def run(self, ch, config):
        """Select access, then allocate with the matching power net."""
        chans = as_channels(ch)
        access = select_access(self.access_net, chans.features)
        power = np.zeros((len(access), 3))
        secrecy = np.zeros(len(access))
        qos = np.zeros(len(access), dtype=bool)
        budget = np.zeros(len(access), dtype=bool)
        for n in np.unique(access):
            rows = np.flatnonzero(access == n)
            sub = chans[rows]
            p = self.power_bundle[n].allocate(sub, config)
            report = check_constraints(int(n), p, sub, config)
            power[rows] = p
            secrecy[rows] = report.sum_secrecy
            qos[rows] = report.qos_ok.all(axis=-1)
            budget[rows] = report.budget_ok.all(axis=-1)
        return InferenceResult(access, power, secrecy, qos, budget)

    def save(self, directory):
        """Write power bundle, access net and a manifest pinning both by sha256."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.power_bundle.save(d / "power_bundle.json")
        self.access_net.save(d / "access_net.json")
        manifest = {"format": "sagin-inference-bundle", "version": 1, "files": {}}
        for name in ("power_bundle.json", "access_net.json"):
            manifest["files"][name] = hashlib.sha256((d / name).read_bytes()).hexdigest()
        (d / "bundle.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return d / "bundle.json"

    @classmethod
    def load(cls, path):
        p = Path(path)
        d = p.parent if p.is_file() else p
        manifest = json.loads((d / "bundle.json").read_text())
        for name, digest in manifest["files"].items():
            if hashlib.sha256((d / name).read_bytes()).hexdigest() != digest:
                raise ValueError(f"{name} does not match the bundle manifest")
        return cls(AccessNet.load(d / "access_net.json"),
                   PowerNetBundle.load(d / "power_bundle.json"))
