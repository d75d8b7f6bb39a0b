"""Nonlinear stability certificates for error-feedback modulators.

The quantizer is modelled set-valued: whenever its input stays within
[-(M+1), M+1] the quantization error stays within [-delta, delta].  Under
that assumption an input bound keeps the loop in the no-overload regime,

    u_max = (M + 1 - delta * ||r||_1) / ||p||_1,

and the state deviation from the unquantized run obeys the envelope
beta_k = delta * sum_{i<k} ||A^i B||.  The remaining checks are the
worst-case NTF gain tests: the classical peak-gain rule and the sufficient
small-gain condition tying ||1+R||_inf to the tap count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lti import FirFilter, hinf_norm, l1_norm, ntf_of

__all__ = [
    "QuantizerSpec",
    "StabilityReport",
    "input_bound",
    "beta_envelope",
    "impulse_l1",
    "lee_check",
    "sufficient_condition",
    "build_report",
    "save_report",
]

_TAIL_TOL = 1e-12
_TAIL_CAP = 10**6


@dataclass(frozen=True)
class QuantizerSpec:
    """No-overload model: |psi| <= M + 1 implies |Q(psi) - psi| <= delta."""

    M: float
    delta: float

    def __post_init__(self) -> None:
        if not (self.M > 0.0) or not (self.delta > 0.0):
            raise ValueError("M and delta must be positive")


@dataclass(frozen=True)
class StabilityReport:
    """Certificates for one loop: bounds, norms and gain checks."""

    u_max: float
    l1_r: float
    l1_p: float
    lee_value: float
    lee_ok: bool
    sufficient: bool
    beta_limit: float
    g_l1: float


def input_bound(p: FirFilter, r: FirFilter, q: QuantizerSpec) -> float:
    """Largest ||u||_inf that certifiably avoids quantizer overload.

    Requires a strictly causal r; may be negative when delta*||r||_1
    already exceeds M + 1, meaning no input level is certified.
    """
    if not r.strictly_causal:
        raise ValueError("r must be strictly causal")
    l1p = l1_norm(p)
    if l1p == 0.0:
        raise ValueError("p must be nonzero")
    return (q.M + 1.0 - q.delta * l1_norm(r)) / l1p


def impulse_l1(a: np.ndarray, b: np.ndarray) -> float:
    """sum_i ||A^i B||_2, truncated once increments fall below 1e-12.

    Raises for spectral radius >= 1, where the sum need not converge.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).reshape(a.shape[0])
    rho = float(np.max(np.abs(np.linalg.eigvals(a)))) if a.size else 0.0
    if rho >= 1.0:
        raise ValueError(f"spectral radius {rho:.6f} >= 1; sum diverges")
    total = 0.0
    v = b.copy()
    for _ in range(_TAIL_CAP):
        inc = float(np.linalg.norm(v))
        total += inc
        if inc < _TAIL_TOL * (1.0 + total):
            return total
        v = a @ v
    raise ArithmeticError("impulse sum did not settle within the iteration cap")


def beta_envelope(a: np.ndarray, b: np.ndarray, delta: float, length: int) -> np.ndarray:
    """State-deviation envelope beta_k = delta * sum_{i<k} ||A^i B||, k = 1..length."""
    if length < 1:
        raise ValueError("length must be positive")
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).reshape(a.shape[0])
    rho = float(np.max(np.abs(np.linalg.eigvals(a)))) if a.size else 0.0
    if rho >= 1.0:
        raise ValueError(f"spectral radius {rho:.6f} >= 1")
    out = np.empty(length)
    total = 0.0
    v = b.copy()
    for k in range(length):
        total += float(np.linalg.norm(v))
        out[k] = delta * total
        v = a @ v
    return out


def lee_check(ntf: FirFilter, limit: float = 1.5) -> tuple[bool, float]:
    """Peak-gain rule ||1+R||_inf < limit; returns (ok, peak value)."""
    peak = hinf_norm(ntf)
    return peak < limit, peak


def sufficient_condition(ntf: FirFilter, q: QuantizerSpec, u_inf: float) -> bool:
    """Small-gain sufficient test for no overload at input level ``u_inf``.

    Uses ||1+r||_1 <= (2N+1) * ||1+R||_inf to bound the l1 norm by the peak
    gain; conservative but checkable from the frequency response alone.
    """
    n = ntf.order
    if u_inf < 0.0:
        raise ValueError("u_inf must be non-negative")
    return hinf_norm(ntf) <= (q.M + 1.0 + q.delta - u_inf) / ((2.0 * n + 1.0) * q.delta)


def build_report(
    p: FirFilter,
    r: FirFilter,
    q: QuantizerSpec,
    lee_limit: float = 1.5,
    u_inf: float | None = None,
) -> StabilityReport:
    """Assemble every certificate for the loop (p, r, q).

    ``u_inf`` defaults to the certified bound itself (clamped at 0), so the
    small-gain test is evaluated at the operating level the l1 argument
    already certifies; pass an explicit level to probe other inputs.
    """
    from .lti import companion_realization

    u_max = input_bound(p, r, q)
    ntf = ntf_of(r)
    lee_ok, lee_value = lee_check(ntf, lee_limit)
    level = max(u_max, 0.0) if u_inf is None else u_inf
    ss = companion_realization(r)
    g_l1 = impulse_l1(ss.A, ss.B)
    return StabilityReport(
        u_max=u_max,
        l1_r=l1_norm(r),
        l1_p=l1_norm(p),
        lee_value=lee_value,
        lee_ok=lee_ok,
        sufficient=sufficient_condition(ntf, q, level),
        beta_limit=q.delta * g_l1,
        g_l1=g_l1,
    )


def save_report(report: StabilityReport, q: QuantizerSpec, path: str) -> None:
    """Write the report as flat key: value text next to the design file."""
    lines = [
        "# dsmx stability report",
        f"quantizer.M: {q.M:.17g}",
        f"quantizer.delta: {q.delta:.17g}",
        f"u_max: {report.u_max:.17g}",
        f"l1_r: {report.l1_r:.17g}",
        f"l1_p: {report.l1_p:.17g}",
        f"lee_value: {report.lee_value:.17g}",
        f"lee_ok: {'yes' if report.lee_ok else 'no'}",
        f"sufficient_small_gain: {'yes' if report.sufficient else 'no'}",
        f"beta_limit: {report.beta_limit:.17g}",
        f"g_l1: {report.g_l1:.17g}",
    ]
    if report.u_max > 0 and math.isfinite(report.u_max):
        lines.append(f"u_max_db: {20.0 * math.log10(report.u_max):.6f}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
