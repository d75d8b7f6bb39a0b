"""Time-domain execution of single-stage and cascaded error-feedback loops.

The single-stage loop computes psi = P u + R (y - psi), y = Q(psi); the
m-stage cascade chains the same R so the quantization error is shaped by
(1 + R)^m.  Per sample, stage m sees the filtered input and its own error
history, each lower stage adds R applied to its error history, and the
single quantizer closes the loop at stage 1:

    psi_m(k) = (p*u)(k) + sum_d r_d e_m(k-d)
    psi_j(k) = psi_{j+1}(k) + sum_d r_d e_j(k-d)     j = m-1, ..., 1
    y(k)     = Q(psi_1(k)),   e_j(k) = y(k) - psi_j(k),   n = e_1.

Each stage keeps its error window oldest-first and applies the reversed tap
vector, exactly the companion-form state recursion, so a 1-stage cascade and
the plain simulator produce identical floating-point traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lti import FirFilter
from .stability import QuantizerSpec

__all__ = [
    "UniformQuantizer",
    "SimTrace",
    "simulate",
    "simulate_cascade",
    "simulate_cascade_linear",
    "write_trace_csv",
    "read_trace_csv",
]


@dataclass(frozen=True)
class UniformQuantizer:
    """Mid-rise uniform quantizer with ``levels`` outputs spaced 2*delta.

    Output values are delta*(2k+1), clamped to +-(levels-1)*delta.  Ties at
    even multiples of delta round toward +infinity.  The no-overload range is
    |psi| <= M + 1 with M = levels*delta - 1.
    """

    delta: float
    levels: int

    def __post_init__(self) -> None:
        if not (self.delta > 0.0):
            raise ValueError("delta must be positive")
        if self.levels < 2 or self.levels % 2 != 0:
            raise ValueError("levels must be a positive even count")

    @property
    def M(self) -> float:
        return self.levels * self.delta - 1.0

    @property
    def spec(self) -> QuantizerSpec:
        return QuantizerSpec(self.M, self.delta)

    def quantize(self, psi):
        """Vectorized staircase; accepts scalars or arrays."""
        d = self.delta
        top = (self.levels - 1.0) * d
        q = d * (2.0 * np.floor(np.asarray(psi, dtype=float) / (2.0 * d)) + 1.0)
        q = np.clip(q, -top, top)
        if np.isscalar(psi):
            return float(q)
        return q


@dataclass
class SimTrace:
    """Per-sample records of one run; ``x`` stacks the stage error windows."""

    u: np.ndarray
    psi: np.ndarray
    y: np.ndarray
    n: np.ndarray
    x: np.ndarray
    overload: np.ndarray

    @property
    def length(self) -> int:
        return self.u.size


def _check_loop(p: FirFilter, r: FirFilter) -> None:
    if not r.strictly_causal:
        raise ValueError("r must be strictly causal")
    if r.order < 1:
        raise ValueError("r must have at least one delay tap")


def _run_cascade(
    p: FirFilter,
    r: FirFilter,
    m: int,
    quantizer: UniformQuantizer | None,
    u: np.ndarray,
    inject: np.ndarray | None,
) -> SimTrace:
    _check_loop(p, r)
    if m < 1:
        raise ValueError("stage count must be at least 1")
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.size == 0:
        raise ValueError("u must be a non-empty 1-D array")
    kk = u.size
    n_taps = r.order
    crev = r.coeffs[:0:-1].copy()  # [r_N, ..., r_1]; dot with oldest-first window
    pu = np.convolve(u, p.coeffs)[:kk]

    wins = np.zeros((m, n_taps))
    psi_rec = np.empty(kk)
    y_rec = np.empty(kk)
    n_rec = np.empty(kk)
    x_rec = np.empty((kk, m * n_taps))
    over = np.zeros(kk, dtype=bool)

    if quantizer is not None:
        d = quantizer.delta
        top = (quantizer.levels - 1.0) * d
        limit = quantizer.M + 1.0
    psis = np.empty(m)

    for k in range(kk):
        x_rec[k] = wins.ravel()
        acc = pu[k] + float(crev @ wins[m - 1])
        psis[m - 1] = acc
        for j in range(m - 2, -1, -1):
            acc = acc + float(crev @ wins[j])
            psis[j] = acc
        psi = acc
        if quantizer is not None:
            y = d * (2.0 * math.floor(psi / (2.0 * d)) + 1.0)
            y = -top if y < -top else (top if y > top else y)
            if abs(psi) > limit:
                over[k] = True
        elif inject is not None:
            y = psi + inject[k]
        else:
            y = psi
        psi_rec[k] = psi
        y_rec[k] = y
        n_rec[k] = y - psi
        wins[:, :-1] = wins[:, 1:]
        wins[:, -1] = y - psis
    return SimTrace(u=u.copy(), psi=psi_rec, y=y_rec, n=n_rec, x=x_rec, overload=over)


def simulate(
    p: FirFilter,
    r: FirFilter,
    q: UniformQuantizer,
    u: np.ndarray,
    method: str = "state",
) -> SimTrace:
    """Run the single-stage loop from zero initial state.

    ``method="state"`` is the companion-form recursion; ``method="direct"``
    re-accumulates the feedback convolution lag by lag in ascending order, an
    independently ordered implementation kept as a cross-check.
    """
    if method == "state":
        return _run_cascade(p, r, 1, q, u, None)
    if method != "direct":
        raise ValueError("method must be 'state' or 'direct'")
    _check_loop(p, r)
    u = np.asarray(u, dtype=float)
    kk = u.size
    n_taps = r.order
    taps = r.coeffs
    pu = np.convolve(u, p.coeffs)[:kk]
    hist = [0.0] * kk  # n history
    psi_rec = np.empty(kk)
    y_rec = np.empty(kk)
    n_rec = np.empty(kk)
    x_rec = np.zeros((kk, n_taps))
    over = np.zeros(kk, dtype=bool)
    limit = q.M + 1.0
    for k in range(kk):
        acc = pu[k]
        for dlag in range(1, min(n_taps, k) + 1):
            acc += taps[dlag] * hist[k - dlag]
        for i in range(n_taps):
            back = k - n_taps + i
            x_rec[k, i] = hist[back] if back >= 0 else 0.0
        y = q.quantize(acc)
        psi_rec[k] = acc
        y_rec[k] = y
        n_rec[k] = y - acc
        hist[k] = y - acc
        if abs(acc) > limit:
            over[k] = True
    return SimTrace(u=u.copy(), psi=psi_rec, y=y_rec, n=n_rec, x=x_rec, overload=over)


def simulate_cascade(
    p: FirFilter,
    r: FirFilter,
    m: int,
    q: UniformQuantizer,
    u: np.ndarray,
) -> SimTrace:
    """Run the m-stage cascade; one stage reduces to simulate() bit-exactly."""
    return _run_cascade(p, r, m, q, u, None)


def simulate_cascade_linear(
    p: FirFilter,
    r: FirFilter,
    m: int,
    u: np.ndarray,
    w: np.ndarray,
) -> SimTrace:
    """Replace the quantizer by identity plus the injected error ``w``.

    The output then equals P u + (1 + R)^m w exactly (up to roundoff), which
    pins the linearized noise shaping of the cascade.
    """
    w = np.asarray(w, dtype=float)
    u = np.asarray(u, dtype=float)
    if w.shape != u.shape:
        raise ValueError("w must match u in shape")
    return _run_cascade(p, r, m, None, u, w)


def write_trace_csv(trace: SimTrace, path: str) -> None:
    """Columns k,u,psi,y,n,overload with full-precision floats."""
    with open(path, "w") as fh:
        fh.write("k,u,psi,y,n,overload\n")
        for k in range(trace.length):
            fh.write(
                f"{k},{trace.u[k]:.17g},{trace.psi[k]:.17g},"
                f"{trace.y[k]:.17g},{trace.n[k]:.17g},{int(trace.overload[k])}\n"
            )


def read_trace_csv(path: str) -> SimTrace:
    """Inverse of write_trace_csv; the state record is not stored in the file."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    return SimTrace(
        u=data["u"].copy(),
        psi=data["psi"].copy(),
        y=data["y"].copy(),
        n=data["n"].copy(),
        x=np.zeros((data["u"].size, 0)),
        overload=data["overload"] != 0,
    )
