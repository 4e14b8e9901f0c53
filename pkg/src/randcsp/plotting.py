"""Static figures for CLI reports.  Uses the non-interactive Agg backend."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def plot_decay(curve: dict, path) -> str:
    """Empirical tail Pr[d_Ham >= kM] against the 2^-M reference."""
    rows = curve["rows"]
    Ms = [r["M"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    tail = [max(r["tail"], 1e-6) for r in rows]
    ax.semilogy(Ms, tail, "o-", label="Pr[d_Ham >= kM]")
    ax.semilogy(Ms, [max(r["tree_tail"], 1e-6) for r in rows], "s--", label="Pr[|T| >= M]")
    ax.semilogy(Ms, [r["bound"] for r in rows], "k:", label="2^-M")
    ax.set_xlabel("M")
    ax.set_ylabel("probability")
    ax.legend()
    return _save(fig, path)


def plot_sample_histogram(empirical: dict, exact: dict, path) -> str:
    """Empirical frequencies of each solution next to the uniform target."""
    keys = sorted(set(exact) | set(empirical))
    fig, ax = plt.subplots(figsize=(max(5, 0.15 * len(keys)), 3.5))
    x = np.arange(len(keys))
    ax.bar(x - 0.2, [empirical.get(k, 0) for k in keys], 0.4, label="empirical")
    ax.bar(x + 0.2, [exact.get(k, 0) for k in keys], 0.4, label="uniform")
    ax.set_xlabel("solution index")
    ax.set_ylabel("frequency")
    ax.legend()
    return _save(fig, path)


def plot_replica_heatmap(n: int, pairs, path) -> str:
    """Symmetric matrix of pairwise gaps; ``pairs`` is an iterable of (u, v, gap)."""
    mat = np.zeros((n, n))
    for u, v, g in pairs:
        mat[u, v] = mat[v, u] = g
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(mat, cmap="viridis")
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("v2")
    ax.set_ylabel("v1")
    return _save(fig, path)


def plot_count_steps(steps: list, path) -> str:
    """Per-step certified ratio windows of the telescoping product."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    i = [s["step"] for s in steps]
    lo = np.array([s["inflated"][0] for s in steps])
    hi = np.array([s["inflated"][1] for s in steps])
    ax.vlines(i, lo, hi, lw=4)
    ax.set_xlabel("step i")
    ax.set_ylabel("ratio window")
    return _save(fig, path)
