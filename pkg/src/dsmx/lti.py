"""FIR transfer functions, companion realizations and frequency-domain norms.

Everything downstream works with real FIR filters f(z) = sum_k c[k] z^-k and
their state-space companion form.  Frequencies are in radians per sample on
[0, pi]; magnitude maxima over closed sub-bands are computed on refining
uniform grids that always contain the band endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FirFilter",
    "StateSpace",
    "FrequencyGrid",
    "freq_response",
    "l1_norm",
    "companion_realization",
    "impulse_response",
    "state_freq_response",
    "fir_multiply",
    "fir_power",
    "ntf_of",
    "cascade_error_filter",
    "max_magnitude_on_band",
    "band_max",
    "hinf_norm",
]

_REFINE_START = 4096
_REFINE_CAP = 2**20
_REFINE_TOL = 1e-6


@dataclass(frozen=True)
class FirFilter:
    """Real FIR filter given by its impulse response ``coeffs[k] = c_k``.

    ``coeffs[0]`` is the direct feedthrough tap.  The filter is strictly
    causal when that tap is exactly zero, which is what an error-feedback
    loop requires of R(z).
    """

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coeffs must be a non-empty 1-D real array")
        if not np.all(np.isfinite(c)):
            raise ValueError("coeffs must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def order(self) -> int:
        return self.coeffs.size - 1

    @property
    def strictly_causal(self) -> bool:
        return self.coeffs[0] == 0.0


@dataclass(frozen=True)
class StateSpace:
    """Real discrete-time realization (A, B, C, D) with scalar input/output."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float

    def __post_init__(self) -> None:
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        B = np.asarray(self.B, dtype=float).reshape(n)
        C = np.asarray(self.C, dtype=float).reshape(n)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", float(self.D))

    @property
    def order(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing evaluation points inside [0, pi]."""

    points: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.points, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("grid must be a non-empty 1-D array")
        if w[0] < 0.0 or w[-1] > np.pi or np.any(np.diff(w) <= 0):
            raise ValueError("grid points must increase strictly inside [0, pi]")
        object.__setattr__(self, "points", w)

    @classmethod
    def uniform(cls, n: int = _REFINE_START + 1) -> "FrequencyGrid":
        return cls(np.linspace(0.0, np.pi, int(n)))

    def with_band(self, band: tuple[float, float]) -> "FrequencyGrid":
        """Return a grid guaranteed to contain both band endpoints."""
        lo, hi = _check_band(band)
        pts = np.union1d(self.points, [lo, hi])
        return FrequencyGrid(pts)


def _check_band(band: tuple[float, float]) -> tuple[float, float]:
    lo, hi = float(band[0]), float(band[1])
    if not (0.0 <= lo < hi <= np.pi):
        raise ValueError(f"band [{lo}, {hi}] must satisfy 0 <= lo < hi <= pi")
    return lo, hi


def freq_response(f: FirFilter, omega) -> complex | np.ndarray:
    """Evaluate f(e^{j*omega}) = sum_k c_k e^{-j*omega*k}.

    Parameters
    ----------
    f : FirFilter
    omega : float or array_like
        Frequencies in radians per sample, each in [0, pi].

    Returns
    -------
    complex or ndarray of complex
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0.0) or np.any(w > np.pi):
        raise ValueError("omega must lie in [0, pi]")
    k = np.arange(f.coeffs.size)
    resp = np.exp(-1j * np.multiply.outer(w, k)) @ f.coeffs
    if np.isscalar(omega) or w.ndim == 0:
        return complex(resp)
    return resp


def l1_norm(f: FirFilter) -> float:
    """Impulse-response l1 norm sum_k |c_k|."""
    return float(np.sum(np.abs(f.coeffs)))


def companion_realization(f: FirFilter) -> StateSpace:
    """Companion form of a strictly causal FIR filter.

    For R(z) = sum_{k=1}^{N} a_k z^-k the realization is the length-N delay
    line: A the upper shift matrix, B the last unit vector, C the reversed
    tap vector [a_N, ..., a_1] and D = 0.  The state at time k holds the last
    N inputs, oldest first.
    """
    if not f.strictly_causal:
        raise ValueError("companion realization requires a strictly causal filter")
    n = f.order
    if n < 1:
        raise ValueError("filter order must be at least 1")
    A = np.zeros((n, n))
    A[np.arange(n - 1), np.arange(1, n)] = 1.0
    B = np.zeros(n)
    B[-1] = 1.0
    C = f.coeffs[:0:-1].copy()
    return StateSpace(A, B, C, 0.0)


def impulse_response(ss: StateSpace, length: int) -> np.ndarray:
    """First ``length`` Markov parameters [D, CB, CAB, ...]."""
    if length < 1:
        raise ValueError("length must be positive")
    h = np.empty(length)
    h[0] = ss.D
    v = ss.B.copy()
    for k in range(1, length):
        h[k] = ss.C @ v
        v = ss.A @ v
    return h


def state_freq_response(ss: StateSpace, omega) -> complex | np.ndarray:
    """Evaluate C (e^{j*omega} I - A)^{-1} B + D at each frequency."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0.0) or np.any(w > np.pi):
        raise ValueError("omega must lie in [0, pi]")
    scalar = np.isscalar(omega) or w.ndim == 0
    w1 = np.atleast_1d(w)
    n = ss.order
    eye = np.eye(n)
    out = np.empty(w1.size, dtype=complex)
    for i, wi in enumerate(w1):
        out[i] = ss.C @ np.linalg.solve(np.exp(1j * wi) * eye - ss.A, ss.B) + ss.D
    return complex(out[0]) if scalar else out


def fir_multiply(f: FirFilter, g: FirFilter) -> FirFilter:
    """Polynomial product (f*g)(z)."""
    return FirFilter(np.convolve(f.coeffs, g.coeffs))


def fir_power(f: FirFilter, m: int) -> FirFilter:
    """m-fold polynomial power of f; m = 0 gives the identity filter."""
    if m < 0:
        raise ValueError("power must be non-negative")
    out = FirFilter(np.array([1.0]))
    for _ in range(m):
        out = fir_multiply(out, f)
    return out


def ntf_of(r: FirFilter) -> FirFilter:
    """Noise transfer function 1 + R(z) of an error-feedback loop."""
    if not r.strictly_causal:
        raise ValueError("R must be strictly causal")
    c = r.coeffs.copy()
    c[0] = 1.0
    return FirFilter(c)


def cascade_error_filter(r: FirFilter, m: int) -> FirFilter:
    """Effective error filter (1+R)^m - 1 seen by the quantizer of an m-stage cascade.

    The cascade output satisfies y = P u + (1+R)^m n, and since y = psi_1 + n
    the quantizer input obeys psi_1 = P u + ((1+R)^m - 1) n.  The returned
    filter is strictly causal.
    """
    if m < 1:
        raise ValueError("cascade depth must be at least 1")
    c = fir_power(ntf_of(r), m).coeffs.copy()
    c[0] -= 1.0
    return FirFilter(c)


def max_magnitude_on_band(
    f: FirFilter, band: tuple[float, float], grid: FrequencyGrid | None = None
) -> float:
    """Maximum of |f(e^{j*omega})| over the grid points falling in ``band``.

    The band endpoints are appended to the grid, so the closed interval is
    always sampled.  Raises if no grid point intersects the band.
    """
    lo, hi = _check_band(band)
    if grid is None:
        grid = FrequencyGrid.uniform()
    pts = grid.with_band((lo, hi)).points
    sel = pts[(pts >= lo) & (pts <= hi)]
    if sel.size == 0:
        raise ValueError("grid does not intersect the band")
    return float(np.max(np.abs(freq_response(f, sel))))


def band_max(f: FirFilter, band: tuple[float, float]) -> float:
    """Band maximum of |f| on a refining grid.

    Starts from a uniform grid and doubles the density until the maximum
    moves by less than 1e-6 (relative to max(1, value)), capped at 2**20
    points over [0, pi].
    """
    lo, hi = _check_band(band)
    n = _REFINE_START
    prev = max_magnitude_on_band(f, (lo, hi), FrequencyGrid.uniform(n + 1))
    while n < _REFINE_CAP:
        n *= 2
        cur = max_magnitude_on_band(f, (lo, hi), FrequencyGrid.uniform(n + 1))
        if abs(cur - prev) < _REFINE_TOL * max(1.0, cur):
            return cur
        prev = cur
    return prev


def hinf_norm(f: FirFilter) -> float:
    """H-infinity norm of an FIR filter, i.e. its peak gain on [0, pi]."""
    return band_max(f, (0.0, np.pi))
