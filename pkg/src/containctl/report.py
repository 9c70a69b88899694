"""Figure rendering for finished simulation runs.

The delimited trajectory file stays the canonical data interface; these
figures are companion artifacts written next to it by the CLI report path.
Rendering uses the object-oriented matplotlib API with an Agg canvas, so no
global backend state is touched and the functions work headless.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

__all__ = [
    "observer_error_figure",
    "containment_figure",
    "output_figure",
    "learning_figure",
    "save_figures",
]

_ERROR_PANELS = (
    ("err_xi", "state estimate"),
    ("err_eta", "reference estimate"),
    ("err_S", "dynamics estimate"),
    ("err_D", "output-map estimate"),
    ("err_y0", "reference output"),
)


def _new_figure(width: float = 10.0, height: float = 6.0) -> Figure:
    fig = Figure(figsize=(width, height))
    FigureCanvasAgg(fig)
    return fig


def observer_error_figure(result, path: Path) -> Path:
    """Log-scale panels of the five observer error norms per follower."""
    traj = result.trajectory
    fig = _new_figure(12.0, 7.0)
    axes = fig.subplots(2, 3).ravel()
    for ax, (key, title) in zip(axes, _ERROR_PANELS):
        series = traj.channels[key]
        for i in range(series.shape[1]):
            ax.semilogy(traj.t, np.maximum(series[:, i], 1e-16), lw=0.9,
                        label=f"follower {i + 1}")
        ax.set_title(title)
        ax.set_xlabel("t [s]")
        ax.grid(True, which="both", alpha=0.3)
    axes[0].legend(fontsize=8)
    axes[-1].axis("off")
    fig.suptitle("observer error norms")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    return path


def containment_figure(result, path: Path) -> Path:
    """Per-follower neighbourhood containment error norms over time."""
    traj = result.trajectory
    e = traj.channels["e"]
    fig = _new_figure(8.0, 5.0)
    ax = fig.subplots()
    for i in range(e.shape[1]):
        ax.semilogy(traj.t, np.maximum(np.linalg.norm(e[:, i], axis=1), 1e-16),
                    lw=0.9, label=f"follower {i + 1}")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("||e_i||")
    ax.set_title("containment error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    return path


def output_figure(result, path: Path) -> Path:
    """Output trajectories; for planar outputs, the phase plane with the final hull."""
    traj = result.trajectory
    Y = traj.channels["y"]
    YL = traj.channels["y_leaders"]
    fig = _new_figure(8.0, 6.5)
    if Y.shape[2] == 2:
        ax = fig.subplots()
        for k in range(YL.shape[1]):
            ax.plot(YL[:, k, 0], YL[:, k, 1], lw=1.6, label=f"leader {k + 1}")
        for i in range(Y.shape[1]):
            ax.plot(Y[:, i, 0], Y[:, i, 1], lw=0.8, alpha=0.8,
                    label=f"follower {i + 1}")
        hull = YL[-1]
        order = np.argsort(np.arctan2(hull[:, 1] - hull[:, 1].mean(),
                                      hull[:, 0] - hull[:, 0].mean()))
        poly = np.vstack([hull[order], hull[order][:1]])
        ax.plot(poly[:, 0], poly[:, 1], "k--", lw=1.2, label="final hull")
        ax.plot(Y[-1, :, 0], Y[-1, :, 1], "k.", ms=8)
        ax.set_xlabel("output 1")
        ax.set_ylabel("output 2")
        ax.set_title("output trajectories")
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3)
    else:
        q = Y.shape[2]
        axes = fig.subplots(q, 1, squeeze=False)[:, 0]
        for c, ax in enumerate(axes):
            for k in range(YL.shape[1]):
                ax.plot(traj.t, YL[:, k, c], lw=1.6)
            for i in range(Y.shape[1]):
                ax.plot(traj.t, Y[:, i, c], lw=0.8)
            ax.set_ylabel(f"output {c + 1}")
            ax.grid(alpha=0.3)
        axes[-1].set_xlabel("t [s]")
        fig.suptitle("output trajectories")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    return path


def learning_figure(result, path: Path) -> Path:
    """Distance of each follower's gain iterates to the model-based optimum."""
    learning = result.learning
    fig = _new_figure(8.0, 5.0)
    ax = fig.subplots()
    refs = learning.data.reference_gains
    for rec, ref in zip(learning.followers, refs):
        if ref is None or not rec.gains:
            continue
        gaps = [np.linalg.norm(K - ref) for K in rec.gains]
        ax.semilogy(range(1, len(gaps) + 1), np.maximum(gaps, 1e-16), "o-",
                    lw=0.9, ms=4, label=f"follower {rec.label}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("||gain - optimum||")
    ax.set_title("learning convergence")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    return path


def save_figures(result, directory: str | Path, stem: str) -> list[Path]:
    """Render the standard figure set for one run; returns the written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = [
        observer_error_figure(result, directory / f"{stem}-observers.png"),
        containment_figure(result, directory / f"{stem}-containment.png"),
        output_figure(result, directory / f"{stem}-outputs.png"),
    ]
    if result.learning is not None:
        paths.append(learning_figure(result, directory / f"{stem}-learning.png"))
    return paths
