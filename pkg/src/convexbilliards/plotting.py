"""Figures written next to the CSV/JSON reports. Non-interactive (Agg)."""

from __future__ import annotations

import math
import warnings

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import ConvexBody, radial_point  # noqa: E402


def new_figure(width=6.0, height=None, projection=None):
    golden_ratio = (math.sqrt(5) - 1.0) / 2.0
    if not height:
        height = width * golden_ratio
    fig = plt.figure(figsize=(width, height), facecolor="w")
    ax = fig.add_subplot(111, projection=projection)
    return fig, ax


def save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _outline(body: ConvexBody, plane=(0, 1), samples=256):
    th = np.linspace(0, 2 * np.pi, samples)
    pts = []
    for t in th:
        u = np.zeros(body.ambient_dim)
        u[plane[0]], u[plane[1]] = np.cos(t), np.sin(t)
        pts.append(radial_point(body, u).coords)
    return np.array(pts)


def plot_orbits(body: ConvexBody, orbits, path, title=None):
    three_d = body.ambient_dim >= 3
    fig, ax = new_figure(6, 6, projection="3d" if three_d else None)
    for plane in ([(0, 1), (0, 2), (1, 2)] if three_d else [(0, 1)]):
        o = _outline(body, plane)
        if three_d:
            ax.plot(o[:, 0], o[:, 1], o[:, 2], color="0.7", lw=0.6)
        else:
            ax.plot(o[:, 0], o[:, 1], color="k", lw=1)
    for orb in orbits:
        P = np.vstack([orb.config.points, orb.config.points[:1]])
        label = f"n={orb.n}, L={orb.length:.6f}"
        if three_d:
            ax.plot(P[:, 0], P[:, 1], P[:, 2], marker="o", ms=3, label=label)
        else:
            ax.plot(P[:, 0], P[:, 1], marker="o", ms=3, label=label)
    if not three_d:
        ax.set_aspect("equal")
    if len(orbits) <= 8:
        ax.legend(fontsize=7, loc="best")
    if title:
        ax.set_title(title)
    save(fig, path)


def plot_twisted_indices(H, path, samples=721, title=None):
    """ind_z and coind_z along the unit circle, Poincare points marked."""
    from .spectral import monodromy, triple_at_angle

    th = np.linspace(0, 2 * np.pi, samples)
    with warnings.catch_warnings():
        # the dense grid lands next to Poincare points on purpose
        warnings.simplefilter("ignore", RuntimeWarning)
        ts = [triple_at_angle(H, t) for t in th]
    fig, ax = new_figure()
    ax.step(th, [t.ind for t in ts], where="mid", label="ind_z")
    ax.step(th, [t.coind for t in ts], where="mid", label="coind_z")
    try:
        for a in monodromy(H).poincare_angles:
            ax.axvline(a, color="r", ls=":", lw=1)
    except Exception:  # figure is best effort
        pass
    ax.set_xlabel("arg z")
    ax.set_ylabel("count")
    ax.legend()
    if title:
        ax.set_title(title)
    save(fig, path)


def plot_iteration_report(report, path, title=None):
    ms = np.array([r.m for r in report.rows])
    fig, ax = new_figure()
    ax.fill_between(ms, [r.ind_lower for r in report.rows], [r.ind_upper for r in report.rows],
                    alpha=0.2, label="ind bounds")
    ax.plot(ms, [r.ind for r in report.rows], "o-", label="ind(q^m)")
    ax.plot(ms, [r.coind for r in report.rows], "s-", label="coind(q^m)")
    ax.plot(ms, [r.nul for r in report.rows], "^-", label="nul(q^m)")
    ax.set_xlabel("m")
    ax.set_xscale("log", base=2)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    save(fig, path)


def plot_bangert(lift, path, title=None):
    rows = lift.estimate_rows()
    fig, ax = new_figure()
    ax.plot([r[0] for r in rows], [r[1] for r in rows], label="L_nm(lift)")
    ax.axhline(lift.bound(), color="r", ls="--", label="(m-3) min L_n")
    ax.set_xlabel("x")
    ax.legend()
    if title:
        ax.set_title(title)
    save(fig, path)
