"""Static figures written next to the CSV results (Agg backend, PNG)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SCHEME_STYLE = {
    "learned": dict(color="tab:blue", marker="o", label="learned (access + power nets)"),
    "oracle": dict(color="black", marker="s", linestyle="--", label="grid oracle"),
    "equal_power": dict(color="tab:orange", marker="^", label="equal power"),
    "fractional_power": dict(color="tab:green", marker="v", label="fractional power"),
    "random_access": dict(color="tab:red", marker="x", label="random access"),
}
AXIS_LABEL = {"P_S": "satellite budget P_S (dBm)", "P_U": "UAV budget P_U (dBm)",
              "P_B": "BS budget P_B (dBm)"}
_META = {"Software": None}  # keep files free of version strings


def _by_scheme(rows):
    out = {}
    for r in rows:
        out.setdefault(r.scheme, []).append(r)
    return {k: sorted(v, key=lambda r: r.sweep_db) for k, v in out.items()}


def plot_sweep(rows, path, variable="P_S"):
    """Mean sum secrecy and QoS violation rate against the swept budget."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for scheme, rs in _by_scheme(rows).items():
        style = SCHEME_STYLE.get(scheme, {})
        x = [r.sweep_db for r in rs]
        ax1.plot(x, [r.mean_sum_secrecy for r in rs], **style)
        ax2.plot(x, [r.qos_violation_rate for r in rs], **style)
    ax1.set_xlabel(AXIS_LABEL.get(variable, variable))
    ax1.set_ylabel("mean sum secrecy rate (bit/s/Hz)")
    ax2.set_xlabel(AXIS_LABEL.get(variable, variable))
    ax2.set_ylabel("QoS violation rate")
    ax2.set_ylim(bottom=0)
    ax1.grid(alpha=0.3)
    ax2.grid(alpha=0.3)
    ax1.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return Path(path)


def plot_schemes(rows, path):
    """Bar chart of one evaluation point."""
    fig, ax = plt.subplots(figsize=(6, 4))
    names = [r.scheme for r in rows]
    vals = [r.mean_sum_secrecy for r in rows]
    colors = [SCHEME_STYLE.get(n, {}).get("color", "gray") for n in names]
    ax.bar(np.arange(len(rows)), vals, color=colors)
    ax.set_xticks(np.arange(len(rows)), names, rotation=20)
    ax.set_ylabel("mean sum secrecy rate (bit/s/Hz)")
    for k, r in enumerate(rows):
        ax.annotate(f"viol {r.qos_violation_rate:.1%}", (k, r.mean_sum_secrecy),
                    ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return Path(path)


def plot_loss_histories(bundle, path):
    """Per-epoch mean penalty loss of all 27 power nets."""
    from sagin_secure.rates import AccessMatrix

    fig, ax = plt.subplots(figsize=(7, 4.5))
    cmap = plt.get_cmap("viridis")
    for net in bundle.nets:
        ax.plot(net.loss_history, color=cmap(net.access_index / 26), lw=0.8,
                label=AccessMatrix.from_index(net.access_index).label())
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean penalty loss")
    ax.legend(fontsize=5, ncol=3)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return Path(path)
