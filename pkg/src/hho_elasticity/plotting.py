"""Static SVG plots of convergence histories and meshes."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402

# fixed ids and no timestamp keep the SVG bytes reproducible
_RC = {"svg.hashsalt": "hho-elasticity", "svg.fonttype": "none"}
_METADATA = {"Date": None}

_SERIES = (("eta_tilde", "estimator", "o-"), ("err_sigma", "stress error", "s-"), ("err_l2", "L2 displacement error", "^-"))


def plot_convergence(history, path) -> None:
    """Log-log plot of estimator and errors against the number of unknowns."""
    ndof = history.ndof
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4.5))
        for name, label, style in _SERIES:
            y = history.column(name)
            ok = np.isfinite(y) & (y > 0)
            if ok.any():
                ax.loglog(ndof[ok], y[ok], style, label=label, markersize=4)
        if len(ndof) > 1:
            k = history.config.k
            ref = ndof / ndof[0]
            y0 = history.column("eta_tilde")[0]
            ax.loglog(ndof, y0 * ref ** (-(k + 1) / 2), "k--", linewidth=0.8, label=f"slope {(k + 1) / 2:g}")
        ax.set_xlabel("ndof")
        ax.grid(True, which="both", linewidth=0.3)
        ax.legend()
        cfg = history.config
        ax.set_title(f"{cfg.benchmark}, k={cfg.k}, {cfg.mode}, {cfg.variant}")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata=_METADATA)
        plt.close(fig)


def plot_mesh(mesh, path) -> None:
    """Wireframe of a triangulation with Neumann sides highlighted."""
    from .mesh import NEUMANN

    segs = mesh.vertices[mesh.sides]
    neu = mesh.side_labels == NEUMANN
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 6))
        ax.add_collection(LineCollection(segs[~neu], colors="k", linewidths=0.2))
        ax.add_collection(LineCollection(segs[neu], colors="tab:red", linewidths=1.0))
        ax.set_xlim(mesh.vertices[:, 0].min(), mesh.vertices[:, 0].max())
        ax.set_ylim(mesh.vertices[:, 1].min(), mesh.vertices[:, 1].max())
        ax.set_aspect("equal")
        ax.set_title(f"{mesh.n_elements} triangles")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata=_METADATA)
        plt.close(fig)
