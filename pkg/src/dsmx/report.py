"""Figure rendering for design, simulation, and sweep artifacts.

Every renderer writes a PNG next to the delimited output and never opens a
window; the Agg backend is forced before pyplot is imported.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .lti import FirFilter, freq_response
from .metrics import SnrSweep, Spectrum

__all__ = ["plot_ntf", "plot_spectrum", "plot_sweep"]

_FLOOR_DB = -150.0


def plot_ntf(ntf: FirFilter, path: str, bands=(), gamma: float | None = None) -> None:
    """Magnitude response over [0, pi] with the design bands shaded."""
    omega = np.linspace(0.0, math.pi, 4097)
    mag = np.abs(freq_response(ntf, omega))
    db = 20.0 * np.log10(np.maximum(mag, 10.0 ** (_FLOOR_DB / 20.0)))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(omega, db, lw=1.2)
    for band in bands:
        lo, hi = band.interval() if hasattr(band, "interval") else band
        ax.axvspan(lo, hi, color="0.85", zorder=0)
    if gamma is not None and gamma > 0:
        ax.axhline(20.0 * math.log10(gamma), color="r", ls="--", lw=0.8)
    ax.set_xlim(0, math.pi)
    ax.set_xlabel("frequency (rad/sample)")
    ax.set_ylabel("|NTF| (dB)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def plot_spectrum(spec: Spectrum, path: str, band=None) -> None:
    """Output spectrum in dB with the measurement band shaded."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(spec.omega, np.maximum(spec.mag_db, _FLOOR_DB), lw=0.7)
    if band is not None:
        lo, hi = band.interval() if hasattr(band, "interval") else band
        ax.axvspan(lo, hi, color="0.85", zorder=0)
    ax.set_xscale("log")
    ax.set_xlim(spec.omega[1], math.pi)
    ax.set_xlabel("frequency (rad/sample)")
    ax.set_ylabel("magnitude (dB)")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def plot_sweep(sweep: SnrSweep, path: str) -> None:
    """SNR versus amplitude with the stability bound marked."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(sweep.amp_db, sweep.snr_db, marker=".", lw=1.0)
    if sweep.stability_bound > 0:
        ax.axvline(
            20.0 * math.log10(sweep.stability_bound), color="r", ls="--", lw=0.8
        )
    ax.set_xlabel("input amplitude (dB)")
    ax.set_ylabel("SNR (dB)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
