"""Figure rendering for the report command.

Everything draws through the Agg backend and lands in files next to the
delimited data; nothing ever opens a window.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np               # noqa: E402


def save_bode_figure(response, path, title="Open-loop response"):
    fig, (ax_mag, ax_ph) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
    ax_mag.semilogx(response.freq, response.mag_db(), lw=1.2)
    ax_mag.set_ylabel("magnitude [dB]")
    ax_mag.grid(True, which="both", alpha=0.3)
    ax_mag.axhline(0.0, color="k", lw=0.6)
    ax_ph.semilogx(response.freq, response.phase_deg_unwrapped(), lw=1.2, color="C1")
    ax_ph.set_ylabel("phase [deg]")
    ax_ph.set_xlabel("frequency [Hz]")
    ax_ph.grid(True, which="both", alpha=0.3)
    ax_ph.axhline(-180.0, color="k", lw=0.6, ls="--")
    ax_mag.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_step_figure(step, path, title="Closed-loop step response"):
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(step.t * 1e6, step.v * 1e3, lw=1.2)
    ax.axhline(step.final_value * 1e3, color="k", lw=0.6, ls="--")
    band = 0.01 * abs(step.final_value)
    ax.axhspan((step.final_value - band) * 1e3, (step.final_value + band) * 1e3,
               color="C2", alpha=0.15, label="1% band")
    ax.set_xlabel("time [us]")
    ax.set_ylabel("output [mV]")
    ax.set_title(title)
    ax.legend(loc="lower right")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_pz_figure(pz, path, title="Pole-zero map"):
    fig, ax = plt.subplots(figsize=(6, 5))

    def split(vals):
        vals = np.asarray(vals)
        return np.abs(vals.real), vals.imag

    if len(pz.poles):
        ax.scatter(*split(pz.poles), marker="x", s=60, color="C0", label="poles (|Re|)")
    if len(pz.zeros):
        ax.scatter(*split(pz.zeros), marker="o", s=50, facecolors="none",
                   edgecolors="C3", label="zeros (|Re|)")
    for d in pz.doublets:
        p, z = pz.poles[d.pole_index], pz.zeros[d.zero_index]
        ax.plot([abs(p.real), abs(z.real)], [p.imag, z.imag], color="0.5", lw=0.8, ls=":")
    ax.set_xscale("symlog", linthresh=1.0)
    ax.set_yscale("symlog", linthresh=1.0)
    ax.set_xlabel("|Re| [rad/s]")
    ax.set_ylabel("Im [rad/s]")
    ax.set_title(title)
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
