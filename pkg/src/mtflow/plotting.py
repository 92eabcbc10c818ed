"""Report figures (matplotlib, non-interactive backend)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bubbles import liouville_profile  # noqa: E402
from .grid import RADIAL  # noqa: E402

STYLE = {"figure.dpi": 110, "axes.grid": True, "grid.alpha": 0.3, "font.size": 9,
         "legend.fontsize": 8}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def ledger_figure(path, rows):
    t = np.array([r.t for r in rows])
    cols = {name: np.array([getattr(r, name) for r in rows])
            for name in ("E", "D", "lam", "u_max", "kinetic")}
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(2, 2, figsize=(8, 6), sharex=True)
        ax[0, 0].plot(t, cols["E"], label="E")
        ax[0, 0].plot(t, cols["D"], label="D")
        ax[0, 0].legend()
        ax[0, 0].set_ylabel("energy")
        ax[0, 1].plot(t, cols["lam"])
        ax[0, 1].set_ylabel(r"$\lambda$")
        ax[1, 0].plot(t, cols["u_max"])
        ax[1, 0].set_ylabel(r"$\max u$")
        kin = cols["kinetic"][1:]
        if kin.size and np.any(kin > 0):
            ax[1, 1].semilogy(t[1:], np.maximum(kin, 1e-300))
        ax[1, 1].set_ylabel(r"$\int u_t^2 e^{u^2}$")
        for a in ax[1]:
            a.set_xlabel("t")
        _save(fig, path)


def snapshot_figure(path, states):
    g = states[0].u.grid
    with plt.rc_context(STYLE):
        if g.kind == RADIAL:
            fig, ax = plt.subplots(figsize=(6, 4))
            r = g.coords
            for s in states:
                ax.plot(r[1:], s.u.values[1:], lw=0.9, label=f"t={s.t:.3g}")
            ax.set_xscale("log")
            ax.set_xlabel("r")
            ax.set_ylabel("u")
            if len(states) <= 12:
                ax.legend(ncol=2)
        else:
            fig, ax = plt.subplots(figsize=(5, 4.5))
            s = states[-1]
            img = np.full(g.index_map.shape, np.nan)
            m = g.index_map >= 0
            img[m] = s.u.values[g.index_map[m]]
            i0, j0 = g.lattice.min(axis=0)
            i1, j1 = g.lattice.max(axis=0)
            im = ax.imshow(img.T, origin="lower", cmap="viridis",
                           extent=(i0 * g.h, i1 * g.h, j0 * g.h, j1 * g.h))
            fig.colorbar(im, ax=ax, label="u")
            ax.set_title(f"t={s.t:.4g}")
            ax.set_aspect("equal")
        _save(fig, path)


def bubble_figure(path, analyses):
    """Rescaled profiles against the Liouville profile, and local energies."""
    usable = [a for a in analyses if a.get("bubbles")]
    if not usable:
        return False
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(1, 2, figsize=(9, 3.8))
        x = np.linspace(0, 4, 200)
        ax[0].plot(x, liouville_profile(x), "k--", lw=1.5, label=r"$\eta_0$")
        for a in usable:
            prof = a["_profiles"][0] if a.get("_profiles") else None
            if prof is None or prof.x.ndim != 1:
                continue
            ax[0].plot(prof.x, prof.eta, lw=0.8, label=f"max u={a['u_max']:.2f}")
        ax[0].set_xlabel("x")
        ax[0].set_ylabel(r"$\eta_k$")
        ax[0].legend()
        um = [a["u_max"] for a in usable]
        lam_loc = [a["bubbles"][0]["lambda_local"] for a in usable]
        ax[1].plot(um, lam_loc, "o-", ms=3)
        ax[1].axhline(4 * math.pi, color="k", ls="--", lw=1)
        ax[1].set_xlabel(r"$\max u$")
        ax[1].set_ylabel("local energy")
        _save(fig, path)
    return True


def scenario_figures(outdir, rows, states, analyses):
    ledger_figure(outdir / "ledger.png", rows)
    snapshot_figure(outdir / "snapshots.png", states)
    bubble_figure(outdir / "bubbles.png", analyses)


def sweep_figure(path, track, delta, s0):
    track = np.array(track, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 5))
        cmap = plt.get_cmap("viridis")
        svals = np.unique(track[:, 0])
        for s in svals:
            for angle in np.unique(track[track[:, 0] == s, 1]):
                sel = (track[:, 0] == s) & (track[:, 1] == angle)
                ax.plot(track[sel, 3], track[sel, 4], color=cmap(s), lw=0.8,
                        ls="-" if s <= s0 else ":")
                ax.plot(track[sel, 3][-1], track[sel, 4][-1], ".", color=cmap(s))
        th = np.linspace(0, 2 * np.pi, 200)
        ax.plot(delta * np.cos(th), delta * np.sin(th), "r--", lw=1, label=r"$|m| = \delta$")
        ax.set_aspect("equal")
        ax.set_xlabel(r"$m_x$")
        ax.set_ylabel(r"$m_y$")
        ax.legend()
        _save(fig, path)
