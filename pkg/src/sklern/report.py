"""Figure rendering for solve and verify outputs.

Every function takes the object it draws and a target path, writes one PNG
with the Agg backend (no display required), and returns the path.  The CLI
calls these next to its CSV/JSON writers when --figures is on; nothing in
here is needed for the numerics.
"""

import math

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .geometry import minimal_sphere, radial_G_pointwise, sphere_report

__all__ = ["profile_figure", "corner_figure", "barrier_figure",
           "area_figure", "coefficient_figure"]

_DPI = 140


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def profile_figure(sol, path):
    """w and u against r, with the detected corner marked."""
    fig, (ax_w, ax_u) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax_w.plot(sol.r, sol.w, lw=1.0)
    ax_w.set_xlabel("r")
    ax_w.set_ylabel("w")
    ax_u.plot(sol.r, sol.u, lw=1.0)
    ax_u.set_xlabel("r")
    ax_u.set_ylabel("u")
    corner = sol.corner or {}
    if corner.get("found"):
        for ax in (ax_w, ax_u):
            ax.axvline(corner["r_star"], color="tab:red", lw=0.8, ls="--")
        ax_u.set_title(f"corner at r* = {corner['r_star']:.6g}")
    fig.suptitle(f"n={sol.n}, k={sol.k}, {sol.method}")
    return _finish(fig, path)


def corner_figure(sol, path):
    """One-sided |u' - limit| against distance from the corner, log-log.

    The reference lines carry the fitted exponents, so a kink of the
    expected strength shows as data tracking a line of slope 1/k.
    """
    corner = sol.corner or {}
    if not corner.get("found"):
        raise ValueError("no corner recorded on this solution")
    jc = corner["node"]
    h = corner["cell"]
    lo_c, hi_c = corner["window_cells"]
    fig, ax = plt.subplots(figsize=(5, 4))
    for side, sign, color in (("left", -1, "tab:blue"),
                              ("right", +1, "tab:orange")):
        fit = corner[side]
        idx = jc + sign * np.arange(lo_c, int(hi_c) + 1)
        idx = idx[(idx > 0) & (idx < len(sol.r) - 1)]
        s = np.abs(sol.r[idx] - corner["r_star"])
        uc = (sol.u[idx + 1] - sol.u[idx - 1]) / (sol.r[idx + 1]
                                                  - sol.r[idx - 1])
        y = np.abs(uc - fit["limit"])
        ax.loglog(s, y, "o", ms=3, color=color,
                  label=f"{side}: alpha = {fit['exponent']:.3f}")
        ax.loglog(s, np.abs(fit["amplitude"]) * s ** fit["exponent"],
                  "-", lw=0.8, color=color)
    ax.set_xlabel("|r - r*|")
    ax.set_ylabel("|u' - one-sided limit|")
    ax.legend()
    ax.set_title(f"jump = {corner['jump']:.4f} at r* = "
                 f"{corner['r_star']:.6g} (cell {h:.2e})")
    return _finish(fig, path)


def barrier_figure(table, spec, path):
    """Signed G along the collar for the upper and lower barriers."""
    n = table.n
    theta = spec.resolve_theta(n)
    d = np.geomspace(spec.delta * spec.window, spec.delta, spec.n_samples)
    g_plus = radial_G_pointwise(table, d, n, table.k, barrier=+1.0,
                                theta=theta, beta=spec.beta)
    g_minus = radial_G_pointwise(table, d, n, table.k, barrier=-1.0,
                                 theta=theta, beta=spec.beta)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.loglog(d, -g_plus, label="-G(W + beta(d^n - d^theta))")
    ax.loglog(d, g_minus, label="+G(W - beta(d^n - d^theta))")
    ax.set_xlabel("d")
    ax.set_ylabel("signed G (positive = inequality holds)")
    ax.legend(fontsize=8)
    ax.set_title(f"theta={theta}, beta={spec.beta}, delta={spec.delta}")
    return _finish(fig, path)


def area_figure(sol, path):
    """Conformal sphere area with the located minimum."""
    rep = sphere_report(sol)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.semilogy(rep["r"], rep["area_g"], lw=1.0)
    try:
        ms = minimal_sphere(sol)
    except ValueError:
        ms = None
    if ms is not None and ms.status == "interior":
        ax.axvline(ms.r_min, color="tab:red", lw=0.8, ls="--",
                   label=f"r_min = {ms.r_min:.6g}")
        ax.legend()
    ax.set_xlabel("r")
    ax.set_ylabel("area_g of the centered sphere")
    return _finish(fig, path)


def coefficient_figure(table, path):
    """Coefficient magnitudes by order; log entries drawn as squares."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for (p, q), c in sorted(table.coeffs.items()):
        if c == 0.0:
            continue
        marker = "o" if q == 0 else "s"
        ax.semilogy(p, abs(c), marker, ms=4,
                    color="tab:blue" if q == 0 else "tab:red")
    ax.set_xlabel("order p")
    ax.set_ylabel("|c_pq|  (squares: ln d factors)")
    ax.set_title(f"n={table.n}, k={table.k}, order {table.order}, "
                 f"mu={table.mu}")
    if (table.n, 1) in table.coeffs or table.c_n1:
        ax.axvline(table.n, color="0.6", lw=0.6)
    return _finish(fig, path)
