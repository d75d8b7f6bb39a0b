"""Band measures of the NTF, output spectra, and SNR estimation.

Band measures treat the NTF magnitude on an interval of [0, pi]: the rms
average, the worst case, and the worst-case reconstruction error they induce.
SNR estimators window the simulated output, compare in-band signal and noise
spectra, and sweep the input amplitude to locate the peak.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .lti import FirFilter, band_max, cascade_error_filter, freq_response
from .sim import SimTrace, UniformQuantizer, simulate_cascade
from .stability import input_bound

__all__ = [
    "Spectrum",
    "SnrSweep",
    "n_average",
    "n_worst",
    "worst_error",
    "worst_snr",
    "spectrum",
    "snr_pp",
    "snr_power",
    "snr_sweep",
    "summary_lines",
    "write_spectrum_csv",
    "read_spectrum_csv",
    "write_sweep_csv",
    "read_sweep_csv",
]

_DB_FLOOR = -400.0
_GUARD_BINS = 3
_SIGNAL_BINS = 2


def _interval(band) -> tuple[float, float]:
    """Accept a (lo, hi) pair or anything exposing interval()."""
    if hasattr(band, "interval"):
        lo, hi = band.interval()
    else:
        lo, hi = band
    lo = float(lo)
    hi = float(hi)
    if not (0.0 <= lo < hi <= math.pi):
        raise ValueError("band must satisfy 0 <= lo < hi <= pi")
    return lo, hi


def n_average(ntf: FirFilter, band) -> float:
    """Root-mean-square NTF magnitude over the band.

    sqrt((1/|I|) * integral of |T|^2), adaptive quadrature with relative
    error well below 1e-8.
    """
    lo, hi = _interval(band)

    def integrand(w: float) -> float:
        return abs(freq_response(ntf, w)) ** 2

    val, _ = quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-10, limit=400)
    return math.sqrt(val / (hi - lo))


def n_worst(ntf: FirFilter, band) -> float:
    """Peak NTF magnitude over the band, refining the grid to convergence."""
    return band_max(ntf, _interval(band))


def worst_error(ntf: FirFilter, band, c0: float) -> float:
    """Worst-case reconstruction error C0 * n_worst for error spectra
    bounded by C0 and a unity signal path."""
    if c0 < 0.0:
        raise ValueError("c0 must be nonnegative")
    return c0 * n_worst(ntf, band)


def worst_snr(ntf: FirFilter, band, c0: float) -> float:
    """Reciprocal of worst_error; inf when the bound is zero."""
    err = worst_error(ntf, band, c0)
    if err == 0.0:
        return math.inf
    return 1.0 / err


@dataclass
class Spectrum:
    """Single-sided amplitude spectrum on [0, pi]."""

    omega: np.ndarray
    magnitude: np.ndarray
    window: str
    length: int

    @property
    def mag_db(self) -> np.ndarray:
        out = np.full(self.magnitude.shape, _DB_FLOOR)
        pos = self.magnitude > 0.0
        out[pos] = 20.0 * np.log10(self.magnitude[pos])
        return np.maximum(out, _DB_FLOOR)


def _hann(k: int) -> np.ndarray:
    return np.hanning(k)


def spectrum(signal: np.ndarray, window: str = "hann") -> Spectrum:
    """Windowed rFFT scaled so a full-scale unit sinusoid reads about one."""
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("signal must be 1-D with at least two samples")
    if window == "hann":
        w = _hann(x.size)
    elif window == "rect":
        w = np.ones(x.size)
    else:
        raise ValueError("window must be 'hann' or 'rect'")
    xw = np.fft.rfft(x * w)
    scale = 2.0 / w.sum()
    mag = np.abs(xw) * scale
    mag[0] *= 0.5
    if x.size % 2 == 0:
        mag[-1] *= 0.5
    omega = 2.0 * math.pi * np.arange(mag.size) / x.size
    return Spectrum(omega=omega, magnitude=mag, window=window, length=x.size)


def _band_bins(omega: np.ndarray, band) -> np.ndarray:
    lo, hi = _interval(band)
    idx = np.flatnonzero((omega >= lo) & (omega <= hi))
    if idx.size == 0:
        raise ValueError("band contains no FFT bins at this length")
    return idx


def snr_pp(trace, u: np.ndarray, band) -> float:
    """Peak-to-peak SNR in dB: peak signal bin over peak in-band error bin.

    The signal bin is the global spectral peak of the input (the test tone
    may sit outside the measurement band); error bins within 3 of the tone
    are excluded.  ``trace`` may be a SimTrace or the output samples.
    """
    y = trace.y if isinstance(trace, SimTrace) else np.asarray(trace, dtype=float)
    u = np.asarray(u, dtype=float)
    if y.shape != u.shape:
        raise ValueError("trace and u must have the same length")
    su = spectrum(u)
    idx = _band_bins(su.omega, band)
    tone = int(np.argmax(su.magnitude))
    sig_peak = su.magnitude[tone] ** 2
    err = np.abs(np.fft.rfft((y - u) * _hann(u.size))) * (2.0 / _hann(u.size).sum())
    noise_idx = idx[np.abs(idx - tone) > _GUARD_BINS]
    if noise_idx.size == 0:
        raise ValueError("band too narrow: no noise bins outside the tone guard")
    noise_peak = float(np.max(err[noise_idx] ** 2))
    if noise_peak == 0.0:
        return math.inf
    return 10.0 * math.log10(sig_peak / noise_peak)


def snr_power(y: np.ndarray, u: np.ndarray, band) -> float:
    """Power-ratio SQNR in dB: tone power (tone +-2 bins) over in-band error
    power outside the tone +-3 guard; the tone is the global input peak."""
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    if y.shape != u.shape:
        raise ValueError("y and u must have the same length")
    su = spectrum(u)
    idx = _band_bins(su.omega, band)
    tone = int(np.argmax(su.magnitude))
    w = _hann(u.size)
    scale = 2.0 / w.sum()
    uhat = np.abs(np.fft.rfft(u * w)) * scale
    ehat = np.abs(np.fft.rfft((y - u) * w)) * scale
    bins = np.arange(uhat.size)
    sig_idx = bins[np.abs(bins - tone) <= _SIGNAL_BINS]
    noise_idx = idx[np.abs(idx - tone) > _GUARD_BINS]
    if noise_idx.size == 0:
        raise ValueError("band too narrow: no noise bins outside the tone guard")
    psig = float(np.sum(uhat[sig_idx] ** 2))
    pnoise = float(np.sum(ehat[noise_idx] ** 2))
    if pnoise == 0.0:
        return math.inf
    return 10.0 * math.log10(psig / pnoise)


@dataclass
class SnrSweep:
    """SNR versus input amplitude for a fixed test tone."""

    amplitudes: np.ndarray
    snr_db: np.ndarray
    beyond_bound: np.ndarray
    stability_bound: float

    def __post_init__(self) -> None:
        if np.any(np.diff(self.amplitudes) <= 0.0):
            raise ValueError("amplitudes must be strictly increasing")

    @property
    def amp_db(self) -> np.ndarray:
        return 20.0 * np.log10(self.amplitudes)

    @property
    def peak_snr_db(self) -> float:
        return float(np.max(self.snr_db))

    @property
    def peak_amplitude(self) -> float:
        return float(self.amplitudes[int(np.argmax(self.snr_db))])


def _sweep_band(design, f_test: float):
    """Design band holding the tone, else the first band; the test tone may
    legitimately sit outside the measurement band."""
    for rep in design.bands:
        lo, hi = rep.band.interval()
        if lo <= f_test <= hi:
            return (lo, hi)
    return design.bands[0].band.interval()


def snr_sweep(
    design,
    q: UniformQuantizer,
    amplitudes: np.ndarray,
    f_test: float,
    length: int,
    m: int = 1,
) -> SnrSweep:
    """Simulate the (possibly cascaded) loop at each amplitude and record
    the SQNR at the tone; deterministic, no dithering."""
    amplitudes = np.asarray(amplitudes, dtype=float)
    if amplitudes.ndim != 1 or amplitudes.size == 0:
        raise ValueError("amplitudes must be a non-empty 1-D array")
    if np.any(amplitudes <= 0.0) or np.any(np.diff(amplitudes) <= 0.0):
        raise ValueError("amplitudes must be positive and strictly increasing")
    if length < 16:
        raise ValueError("length too short for spectral estimation")
    r = design.r if hasattr(design, "r") else design
    band = _sweep_band(design, f_test) if hasattr(design, "bands") else None
    if band is None:
        raise ValueError("design must carry band information")
    p = FirFilter([1.0])
    r_eff = cascade_error_filter(r, m)
    bound = input_bound(p, r_eff, q.spec)
    k = np.arange(length)
    snr = np.empty(amplitudes.size)
    for i, amp in enumerate(amplitudes):
        u = amp * np.sin(f_test * k)
        tr = simulate_cascade(p, r, m, q, u)
        snr[i] = snr_power(tr.y, u, band)
    beyond = amplitudes > max(bound, 0.0)
    return SnrSweep(
        amplitudes=amplitudes, snr_db=snr, beyond_bound=beyond, stability_bound=bound
    )


def summary_lines(
    ntf_max_db: float | None = None,
    snr_pp_db: float | None = None,
    peak_snr_db: float | None = None,
) -> list:
    """Report fields: peak in-band NTF gain, peak-to-peak SNR, peak sweep SNR.

    Fields left as None are omitted so each workflow reports what it measured.
    """
    out = []
    if ntf_max_db is not None:
        out.append(f"max_ntf_db: {ntf_max_db:.6g}")
    if snr_pp_db is not None:
        out.append(f"snr_pp_db: {snr_pp_db:.6g}")
    if peak_snr_db is not None:
        out.append(f"peak_snr_db: {peak_snr_db:.6g}")
    return out


def write_spectrum_csv(spec: Spectrum, path: str) -> None:
    mag_db = spec.mag_db
    with open(path, "w") as fh:
        fh.write("omega,mag_db\n")
        for i in range(spec.omega.size):
            fh.write(f"{spec.omega[i]:.17g},{mag_db[i]:.17g}\n")


def read_spectrum_csv(path: str) -> Spectrum:
    data = np.atleast_1d(np.genfromtxt(path, delimiter=",", names=True))
    mag = 10.0 ** (data["mag_db"] / 20.0)
    mag[data["mag_db"] <= _DB_FLOOR] = 0.0
    return Spectrum(
        omega=data["omega"].copy(),
        magnitude=mag,
        window="hann",
        length=2 * (data["omega"].size - 1),
    )


def write_sweep_csv(sweep: SnrSweep, path: str) -> None:
    amp_db = sweep.amp_db
    with open(path, "w") as fh:
        fh.write("amp,amp_db,snr_db,beyond_bound\n")
        for i in range(sweep.amplitudes.size):
            fh.write(
                f"{sweep.amplitudes[i]:.17g},{amp_db[i]:.17g},"
                f"{sweep.snr_db[i]:.17g},{int(sweep.beyond_bound[i])}\n"
            )


def read_sweep_csv(path: str, stability_bound: float = math.nan) -> SnrSweep:
    data = np.atleast_1d(np.genfromtxt(path, delimiter=",", names=True))
    return SnrSweep(
        amplitudes=data["amp"].copy(),
        snr_db=data["snr_db"].copy(),
        beyond_bound=data["beyond_bound"] != 0,
        stability_bound=stability_bound,
    )
