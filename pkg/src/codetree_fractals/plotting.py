"""Figures for CLI reports, rendered off-screen to image files."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_pressure_curve(curve, path, reference=None):
    """log S(k, alpha)/k against alpha, one line per depth (at most 8 shown)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    depths = curve.depths
    pick = np.unique(np.linspace(0, len(depths) - 1, min(8, len(depths))).astype(int))
    for j in pick:
        ax.plot(curve.alpha_grid, curve.values[:, j], label=f"k={depths[j]}")
    if reference is not None:
        ax.plot(curve.alpha_grid, reference(curve.alpha_grid), "k--", label="reference")
    ax.axhline(0.0, color="0.6", lw=0.8)
    ax.set_xlabel("alpha")
    ax.set_ylabel("log S(k, alpha) / k")
    ax.legend(fontsize=7)
    _save(fig, path)


def plot_cloud(cloud, path, size=2.0):
    fig, ax = plt.subplots(figsize=(5, 5) if cloud.dimension >= 2 else (6, 1.8))
    pts = cloud.points
    if cloud.dimension == 1:
        ax.plot(pts[:, 0], np.zeros(len(pts)), "|", ms=12, color="k")
        ax.set_yticks([])
    else:
        ax.scatter(pts[:, 0], pts[:, 1], s=size, c="k", lw=0)
        ax.set_aspect("equal")
    ax.set_title(f"depth {cloud.depth}, {len(cloud)} points")
    _save(fig, path)


def plot_box_counts(est, path):
    x = np.log(1.0 / est.scales)
    y = np.log(est.counts)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(x, y, "o")
    ax.plot(x, est.slope * x + est.intercept, "-", label=f"slope {est.slope:.4f}, r2 {est.r2:.4f}")
    ax.set_xlabel("log(1/eps)")
    ax.set_ylabel("log N(eps)")
    ax.legend()
    _save(fig, path)


def plot_dimension_report(report, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(len(report.slopes)), report.slopes, "o", label="box-counting slope")
    ax.axhline(report.target, color="r", label=f"min(alpha0, D) = {report.target:.4f}")
    ax.axhline(report.mean_slope, color="k", ls="--", label=f"mean {report.mean_slope:.4f}")
    ax.set_xlabel("translation sample")
    ax.set_ylabel("dimension estimate")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_estimate_rows(alphas, means, errors, path, reference=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(alphas, means, yerr=errors, fmt="o", capsize=3, label="Monte Carlo")
    if reference is not None:
        grid = np.linspace(min(alphas), max(alphas), 200)
        ax.plot(grid, reference(grid), "k--", label="reference")
    ax.set_xlabel("alpha")
    ax.set_ylabel("pressure estimate")
    ax.legend()
    _save(fig, path)
