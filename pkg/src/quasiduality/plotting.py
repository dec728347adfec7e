"""Figures for CLI results (matplotlib, Agg backend) and two-column plot data."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def write_plot_data(path, x, y) -> Path:
    """Plain two-column text file next to a figure."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)]), fmt="%.17g")
    return path


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_curve(x, y, path, xlabel: str, ylabel: str, title: str = "", style: str = "-") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(x, y, style, lw=1, ms=3)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    write_plot_data(Path(path).with_suffix(".dat"), x, y)
    return _save(fig, path)


def plot_ids(energies, values, path, gaps=(), title: str = "integrated density of states") -> Path:
    """N(E) with detected gaps shaded and labelled by k."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(energies, values, lw=1)
    for g in gaps:
        ax.axvspan(g["E_left"], g["E_right"], color="tab:orange", alpha=0.25)
        if g.get("k") is not None:
            ax.annotate(str(g["k"]), ((g["E_left"] + g["E_right"]) / 2, g["N_gap"]), fontsize=7, ha="center")
    ax.set_xlabel("E")
    ax.set_ylabel("N(E)")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    write_plot_data(Path(path).with_suffix(".dat"), energies, values)
    return _save(fig, path)


def plot_spectrum(points, path, title: str = "spectrum sample") -> Path:
    fig, ax = plt.subplots(figsize=(6, 1.8))
    pts = np.asarray(points, dtype=float)
    ax.plot(pts, np.zeros_like(pts), "|", ms=20)
    ax.set_yticks([])
    ax.set_xlabel("E")
    ax.set_title(title)
    write_plot_data(Path(path).with_suffix(".dat"), pts, np.zeros_like(pts))
    return _save(fig, path)


def plot_decay(indices, u_hat, path, windows=(), title: str = "dual eigenvector decay") -> Path:
    """log10 |û_k| with inter-resonance windows shaded."""
    mag = np.abs(np.asarray(u_hat))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(indices, np.log10(np.maximum(mag, 1e-300)), ".", ms=2)
    for lo, hi in windows:
        ax.axvspan(lo, hi, color="tab:green", alpha=0.15)
        ax.axvspan(-hi, -lo, color="tab:green", alpha=0.15)
    ax.set_xlabel("k")
    ax.set_ylabel("log10 |û_k|")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    write_plot_data(Path(path).with_suffix(".dat"), indices, np.log10(np.maximum(mag, 1e-300)))
    return _save(fig, path)


def plot_matrix_map(x, values, path, title: str = "conjugacy entries") -> Path:
    """|B_ij(x)| on the real line for a 2×2 matrix map; the data file holds max_ij |B_ij(x)|."""
    v = np.asarray(values)
    fig, ax = plt.subplots(figsize=(6, 4))
    for i in range(2):
        for j in range(2):
            ax.plot(x, np.abs(v[:, i, j]), lw=1, label=f"|B{i + 1}{j + 1}|")
    ax.set_xlabel("x")
    ax.legend(fontsize=7)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    write_plot_data(Path(path).with_suffix(".dat"), x, np.max(np.abs(v), axis=(1, 2)))
    return _save(fig, path)


def plot_loglog_fit(scales, increments, slope: float, intercept: float, path, title: str = "Hölder fit") -> Path:
    s = np.asarray(scales, dtype=float)
    inc = np.asarray(increments, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ok = inc > 0
    ax.loglog(s[ok], inc[ok], "o", ms=4, label="N(E0+ε) − N(E0−ε)")
    ax.loglog(s, np.exp(intercept) * s ** slope, "-", lw=1, label=f"slope {slope:.3f}")
    ax.set_xlabel("ε")
    ax.legend(fontsize=8)
    ax.set_title(title)
    ax.grid(alpha=0.3, which="both")
    write_plot_data(Path(path).with_suffix(".dat"), s, inc)
    return _save(fig, path)
