"""Min-max NTF synthesis over frequency bands via finite-frequency LMIs.

For an error-feedback loop with strictly causal FIR R(z), the noise transfer
function is T(z) = 1 + R(z).  Feasibility of max_{|omega - w0| <= W} |T| <
gamma is equivalent to a linear matrix inequality in the companion-form data
(A, B) of R, the tap vector alpha and auxiliary symmetric matrices (X, Y
with Y > 0).  With t = gamma^2 entering affinely, the min-max design is a
single SDP: minimize t subject to the band blocks, optional unit-circle zero
placements (linear equalities in alpha) and an optional H-infinity cap on T
(bounded-real block with one more symmetric matrix Z > 0).

Band conventions: a band is centred at w0 with half-width W, both in radians
per sample; w0 = 0 denotes the lowpass band [0, W].  Multi-band designs
share alpha across per-band blocks and minimize the sum of the per-band
t_l = gamma_l^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lmi, sdp
from .lti import FirFilter, band_max, freq_response, ntf_of

__all__ = [
    "BandSpec",
    "ZeroAssignment",
    "DesignSpec",
    "BandReport",
    "DesignResult",
    "companion_pair",
    "build_lowpass",
    "build_bandpass_real",
    "build_multiband",
    "zero_equalities",
    "build_hinf_cap",
    "design",
    "save_design",
    "load_design",
]

GRID_MAX_HARD_LIMIT = 1e-2  # relative excess of grid max over gamma that flags the solve
ZERO_TOL = 1e-6


@dataclass(frozen=True)
class BandSpec:
    """Frequency band: centre and half-width in radians per sample.

    ``center == 0`` means the lowpass band [0, halfwidth]; otherwise the band
    is [center - halfwidth, center + halfwidth] and must stay inside [0, pi].
    """

    center: float
    halfwidth: float

    def __post_init__(self) -> None:
        if not (self.halfwidth > 0.0):
            raise ValueError("halfwidth must be positive")
        if not (0.0 <= self.center < np.pi):
            raise ValueError("center must lie in [0, pi)")
        if not self.lowpass:
            lo = self.center - self.halfwidth
            hi = self.center + self.halfwidth
            if lo < 0.0 or hi > np.pi + 1e-15:
                raise ValueError("band must lie inside [0, pi]")

    @property
    def lowpass(self) -> bool:
        return self.center == 0.0

    def interval(self) -> tuple[float, float]:
        if self.lowpass:
            return 0.0, min(self.halfwidth, np.pi)
        return self.center - self.halfwidth, min(self.center + self.halfwidth, np.pi)


@dataclass(frozen=True)
class ZeroAssignment:
    """Forces T(e^{j*w}) and its first multiplicity-1 derivatives to vanish."""

    frequency: float
    multiplicity: int = 1

    def __post_init__(self) -> None:
        if not (0.0 <= self.frequency <= np.pi):
            raise ValueError("zero frequency must lie in [0, pi]")
        if self.multiplicity < 1:
            raise ValueError("multiplicity must be at least 1")

    def equation_count(self) -> int:
        real_only = self.frequency in (0.0, float(np.pi))
        return self.multiplicity if real_only else 2 * self.multiplicity


@dataclass(frozen=True)
class DesignSpec:
    """Everything design() needs: order, bands, optional cap and zeros."""

    order: int
    bands: tuple[BandSpec, ...]
    hinf_cap: float | None = None
    zeros: tuple[ZeroAssignment, ...] = ()
    options: sdp.SolverOptions = field(default_factory=sdp.SolverOptions)

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ValueError("order must be at least 1")
        if not self.bands:
            raise ValueError("at least one band is required")
        object.__setattr__(self, "bands", tuple(self.bands))
        object.__setattr__(self, "zeros", tuple(self.zeros))
        if self.hinf_cap is not None and not (self.hinf_cap > 1.0):
            raise ValueError("hinf cap must exceed 1 (T(inf) = 1 forces sup >= 1)")
        eqs = sum(z.equation_count() for z in self.zeros)
        if eqs >= self.order:
            raise ValueError(
                f"{eqs} zero equations over-constrain an order-{self.order} filter"
            )


@dataclass(frozen=True)
class BandReport:
    band: BandSpec
    gamma: float
    grid_max: float


@dataclass(frozen=True)
class DesignResult:
    """Synthesised loop filter with per-band levels and solve diagnostics."""

    order: int
    status: str
    r: FirFilter | None
    ntf: FirFilter | None
    bands: tuple[BandReport, ...]
    hinf_cap: float | None
    zeros: tuple[ZeroAssignment, ...]
    iterations: int
    objective: float
    max_violation: float
    message: str = ""

    @property
    def gamma(self) -> float:
        """Worst per-band gamma (the single gamma for one-band designs)."""
        return max(b.gamma for b in self.bands)


def companion_pair(order: int) -> tuple[np.ndarray, np.ndarray]:
    """(A, B) of the length-``order`` delay line shared by every block."""
    a = np.zeros((order, order))
    a[np.arange(order - 1), np.arange(1, order)] = 1.0
    b = np.zeros(order)
    b[-1] = 1.0
    return a, b


def _selectors(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Maps Phi_A = [A B 0] and Phi_I = [I 0 0] onto the (N+2) block frame."""
    n = order
    a, b = companion_pair(n)
    phi_a = np.zeros((n, n + 2))
    phi_a[:, :n] = a
    phi_a[:, n] = b
    phi_i = np.zeros((n, n + 2))
    phi_i[:, :n] = np.eye(n)
    return phi_a, phi_i


def _alpha_border(order: int, k: int) -> np.ndarray:
    """Symmetric basis matrix placing alpha_k on the border row/column."""
    n = order
    g = np.zeros((n + 2, n + 2))
    g[n + 1, n - k] = 1.0
    g[n - k, n + 1] = 1.0
    return g


def _const_border(order: int) -> np.ndarray:
    n = order
    c = np.zeros((n + 2, n + 2))
    c[n, n + 1] = c[n + 1, n] = 1.0
    c[n + 1, n + 1] = -1.0
    return c


def build_lowpass(
    problem: lmi.LmiProblem,
    alpha: list[lmi.VarRef],
    t: lmi.VarRef,
    order: int,
    omega_cut: float,
    tag: str = "",
) -> None:
    """Append the lowpass band block for [0, omega_cut] to ``problem``.

    Declares the auxiliary symmetric X (indefinite) and Y > 0 and adds the
    (order+2) strict block coupling them with alpha and t = gamma^2.
    """
    if not (0.0 < omega_cut < np.pi):
        raise ValueError("omega_cut must lie strictly inside (0, pi)")
    build_bandpass_real(problem, alpha, t, order, 0.0, omega_cut, tag=tag)


def build_bandpass_real(
    problem: lmi.LmiProblem,
    alpha: list[lmi.VarRef],
    t: lmi.VarRef,
    order: int,
    omega_center: float,
    omega_halfwidth: float,
    tag: str = "",
) -> None:
    """Append the band block centred at omega_center with the given half-width.

    The underlying frequency-restricted inequality is complex Hermitian for a
    nonzero centre; it is embedded as the real block

        [[Re F, -Im F], [Im F, Re F]]  of side 2*(order+2),

    which is negative definite exactly when F is.  At omega_center = 0 the
    imaginary part vanishes and the two diagonal copies decouple into the
    lowpass block, so this builder covers both cases; for a zero centre the
    plain (order+2) block is emitted directly.
    """
    if len(alpha) != order:
        raise ValueError("need one alpha variable per tap")
    if not (0.0 <= omega_center <= np.pi):
        raise ValueError("omega_center must lie in [0, pi]")
    if not (0.0 < omega_halfwidth < np.pi):
        raise ValueError("omega_halfwidth must lie strictly inside (0, pi)")
    n = order
    phi_a, phi_i = _selectors(n)
    cw = math.cos(omega_center)
    sw = math.sin(omega_center)
    cwidth = math.cos(omega_halfwidth)
    x = problem.declare_symmetric(n, f"X{tag}")
    y = problem.declare_symmetric(n, f"Y{tag}")

    if omega_center == 0.0:
        expr = lmi.AffineMatrixExpr(n + 2)
        expr.add_matrix_term(x, phi_a.T, phi_a)
        expr.add_matrix_term(x, phi_i.T, phi_i, -1.0)
        expr.add_matrix_term(y, phi_i.T, phi_a, 2.0)
        expr.add_matrix_term(y, phi_i.T, phi_i, -2.0 * cwidth)
        expr.add_constant(_const_border(n))
        for k in range(1, n + 1):
            expr.add_scalar_term(alpha[k - 1], _alpha_border(n, k))
        g_t = np.zeros((n + 2, n + 2))
        g_t[n, n] = -1.0
        expr.add_scalar_term(t, g_t)
        problem.add_strict_lmi(expr, lmi.NEGATIVE)
    else:
        d = n + 2
        u0 = np.vstack([np.eye(d), np.zeros((d, d))])
        u1 = np.vstack([np.zeros((d, d)), np.eye(d)])
        expr = lmi.AffineMatrixExpr(2 * d)
        for u in (u0, u1):
            expr.add_matrix_term(x, u @ phi_a.T, phi_a @ u.T)
            expr.add_matrix_term(x, u @ phi_i.T, phi_i @ u.T, -1.0)
            expr.add_matrix_term(y, u @ phi_i.T, phi_a @ u.T, 2.0 * cw)
            expr.add_matrix_term(y, u @ phi_i.T, phi_i @ u.T, -2.0 * cwidth)
        # skew coupling Im F = sin(w0) * (Phi_A' Y Phi_I - Phi_I' Y Phi_A)
        expr.add_matrix_term(y, u1 @ phi_a.T, phi_i @ u0.T, 2.0 * sw)
        expr.add_matrix_term(y, u1 @ phi_i.T, phi_a @ u0.T, -2.0 * sw)
        cb = _const_border(n)
        expr.add_constant(u0 @ cb @ u0.T + u1 @ cb @ u1.T)
        for k in range(1, n + 1):
            ab = _alpha_border(n, k)
            expr.add_scalar_term(alpha[k - 1], u0 @ ab @ u0.T + u1 @ ab @ u1.T)
        g_t = np.zeros((2 * d, 2 * d))
        g_t[n, n] = -1.0
        g_t[d + n, d + n] = -1.0
        expr.add_scalar_term(t, g_t)
        problem.add_strict_lmi(expr, lmi.NEGATIVE)

    y_pos = lmi.AffineMatrixExpr(n)
    y_pos.add_matrix_term(y, np.eye(n), np.eye(n))
    problem.add_strict_lmi(y_pos, lmi.POSITIVE)


def build_multiband(
    problem: lmi.LmiProblem,
    alpha: list[lmi.VarRef],
    ts: list[lmi.VarRef],
    order: int,
    bands: tuple[BandSpec, ...],
) -> None:
    """Append one band block per entry of ``bands``, sharing alpha."""
    if len(ts) != len(bands):
        raise ValueError("need one t variable per band")
    for i, (band, t) in enumerate(zip(bands, ts)):
        build_bandpass_real(
            problem, alpha, t, order, band.center, band.halfwidth, tag=f"_{i}"
        )


def zero_equalities(zero: ZeroAssignment, order: int) -> list[tuple[np.ndarray, float]]:
    """Linear equations on alpha forcing a unit-circle NTF zero.

    With nu(z) = z^N + sum_k alpha_k z^{N-k} = z^N T(z), a zero of
    multiplicity mu at z0 = e^{j*w} is nu^{(i)}(z0) = 0 for i < mu.  Each
    derivative yields one real equation at w in {0, pi} and a real/imaginary
    pair otherwise.  Returns (coefficient row over alpha_1..alpha_N, rhs).
    """
    n = order
    if zero.equation_count() >= n:
        raise ValueError("zero assignment over-constrains the filter")
    z0 = np.exp(1j * zero.frequency)
    real_only = zero.frequency in (0.0, float(np.pi))
    rows: list[tuple[np.ndarray, float]] = []
    for deriv in range(zero.multiplicity):
        coeff = np.zeros(n, dtype=complex)
        for k in range(1, n + 1):
            p = n - k
            if p >= deriv:
                coeff[k - 1] = math.perm(p, deriv) * z0 ** (p - deriv)
        const = math.perm(n, deriv) * z0 ** (n - deriv)
        rows.append((coeff.real.copy(), -const.real))
        if not real_only:
            rows.append((coeff.imag.copy(), -const.imag))
    return rows


def build_hinf_cap(
    problem: lmi.LmiProblem,
    alpha: list[lmi.VarRef],
    order: int,
    gamma0: float,
) -> None:
    """Append the bounded-real block enforcing ||1 + R||_inf < gamma0."""
    if not (gamma0 > 1.0):
        raise ValueError("gamma0 must exceed 1")
    n = order
    phi_a, phi_i = _selectors(n)
    z = problem.declare_symmetric(n, "Z_cap")
    expr = lmi.AffineMatrixExpr(n + 2)
    expr.add_matrix_term(z, phi_a.T, phi_a)
    expr.add_matrix_term(z, phi_i.T, phi_i, -1.0)
    const = _const_border(n)
    const[n, n] = -gamma0 * gamma0
    expr.add_constant(const)
    for k in range(1, n + 1):
        expr.add_scalar_term(alpha[k - 1], _alpha_border(n, k))
    problem.add_strict_lmi(expr, lmi.NEGATIVE)
    z_pos = lmi.AffineMatrixExpr(n)
    z_pos.add_matrix_term(z, np.eye(n), np.eye(n))
    problem.add_strict_lmi(z_pos, lmi.POSITIVE)


def _covers_everything(band: BandSpec) -> bool:
    lo, hi = band.interval()
    return lo <= 0.0 and hi >= np.pi - 1e-15


def design(spec: DesignSpec) -> DesignResult:
    """Solve the min-max NTF problem described by ``spec``.

    Returns a DesignResult whose status mirrors the solver verdict.  After an
    Optimal solve the per-band maxima of |T| are re-measured on a refining
    frequency grid; a grid maximum more than 1% above the reported gamma
    raises, flagging solver inaccuracy rather than silently passing it on.
    """
    for band in spec.bands:
        if _covers_everything(band):
            return DesignResult(
                order=spec.order,
                status=sdp.INFEASIBLE,
                r=None,
                ntf=None,
                bands=tuple(BandReport(b, math.nan, math.nan) for b in spec.bands),
                hinf_cap=spec.hinf_cap,
                zeros=spec.zeros,
                iterations=0,
                objective=math.nan,
                max_violation=math.nan,
                message="band covers all of [0, pi]; gamma < 1 is unattainable "
                        "for a strictly causal loop filter",
            )

    n = spec.order
    problem = lmi.LmiProblem()
    alpha = [problem.declare_scalar(f"alpha_{k}") for k in range(1, n + 1)]
    ts = [problem.declare_scalar(f"t_{i}") for i in range(len(spec.bands))]
    build_multiband(problem, alpha, ts, n, spec.bands)
    for zero in spec.zeros:
        for row, rhs in zero_equalities(zero, n):
            terms = [(alpha[k], 0, row[k]) for k in range(n) if row[k] != 0.0]
            problem.add_equality(terms, rhs)
    if spec.hinf_cap is not None:
        build_hinf_cap(problem, alpha, n, spec.hinf_cap)
    problem.set_objective({t: 1.0 for t in ts})

    compiled = problem.compile(eps=spec.options.eps_margin)
    solution = sdp.solve(compiled, spec.options)

    if solution.status != sdp.OPTIMAL:
        return DesignResult(
            order=n,
            status=solution.status,
            r=None,
            ntf=None,
            bands=tuple(BandReport(b, math.nan, math.nan) for b in spec.bands),
            hinf_cap=spec.hinf_cap,
            zeros=spec.zeros,
            iterations=solution.iterations,
            objective=solution.objective,
            max_violation=solution.max_violation,
            message=solution.message,
        )

    taps = np.zeros(n + 1)
    for k in range(n):
        taps[k + 1] = problem.value_of(alpha[k], solution.x)
    r = FirFilter(taps)
    ntf = ntf_of(r)

    reports = []
    for band, t in zip(spec.bands, ts):
        gamma = math.sqrt(max(problem.value_of(t, solution.x), 0.0))
        gmax = band_max(ntf, band.interval())
        if gmax > gamma * (1.0 + GRID_MAX_HARD_LIMIT):
            raise ArithmeticError(
                f"grid max {gmax:.6e} exceeds gamma {gamma:.6e} by more than "
                f"{GRID_MAX_HARD_LIMIT:.0%}: solver inaccuracy"
            )
        reports.append(BandReport(band, gamma, gmax))

    return DesignResult(
        order=n,
        status=solution.status,
        r=r,
        ntf=ntf,
        bands=tuple(reports),
        hinf_cap=spec.hinf_cap,
        zeros=spec.zeros,
        iterations=solution.iterations,
        objective=solution.objective,
        max_violation=solution.max_violation,
    )


def save_design(result: DesignResult, path: str, extra: dict[str, str] | None = None) -> None:
    """Write a design to a flat ``key: value`` text file.

    Coefficients are stored with 17 significant digits so the filter is
    reconstructed bit-exactly.  ``extra`` entries (e.g. run configuration)
    are appended verbatim.
    """
    lines = ["# dsmx design result"]
    lines.append(f"order: {result.order}")
    lines.append(f"status: {result.status}")
    if result.hinf_cap is not None:
        lines.append(f"hinf_cap: {result.hinf_cap:.17g}")
    for i, rep in enumerate(result.bands, start=1):
        lines.append(f"band.{i}.center: {rep.band.center:.17g}")
        lines.append(f"band.{i}.halfwidth: {rep.band.halfwidth:.17g}")
        lines.append(f"band.{i}.gamma: {rep.gamma:.17g}")
        if math.isfinite(rep.gamma) and rep.gamma > 0:
            lines.append(f"band.{i}.gamma_db: {20.0 * math.log10(rep.gamma):.6f}")
        lines.append(f"band.{i}.grid_max: {rep.grid_max:.17g}")
    for i, z in enumerate(result.zeros, start=1):
        lines.append(f"zero.{i}.frequency: {z.frequency:.17g}")
        lines.append(f"zero.{i}.multiplicity: {z.multiplicity}")
    lines.append(f"solver.iterations: {result.iterations}")
    lines.append(f"solver.objective: {result.objective:.17g}")
    lines.append(f"solver.max_violation: {result.max_violation:.17g}")
    if result.message:
        lines.append(f"solver.message: {result.message}")
    if result.r is not None:
        for k, ck in enumerate(result.r.coeffs):
            lines.append(f"coeff.{k}: {ck:.17g}")
    if extra:
        for key, value in extra.items():
            lines.append(f"{key}: {value}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_design(path: str) -> tuple[DesignResult, dict[str, str]]:
    """Parse a file written by save_design; returns (result, leftover fields)."""
    fields: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if ":" not in line:
                raise ValueError(f"malformed design line: {line!r}")
            key, value = line.split(":", 1)
            fields[key.strip()] = value.strip()

    def pop(key: str, default=None):
        return fields.pop(key, default)

    order = int(pop("order"))
    status = pop("status")
    hinf_raw = pop("hinf_cap")
    hinf_cap = float(hinf_raw) if hinf_raw is not None else None

    bands = []
    i = 1
    while f"band.{i}.center" in fields:
        center = float(pop(f"band.{i}.center"))
        halfwidth = float(pop(f"band.{i}.halfwidth"))
        gamma = float(pop(f"band.{i}.gamma"))
        pop(f"band.{i}.gamma_db")
        grid_max = float(pop(f"band.{i}.grid_max"))
        bands.append(BandReport(BandSpec(center, halfwidth), gamma, grid_max))
        i += 1
    if not bands:
        raise ValueError("design file has no bands")

    zeros = []
    i = 1
    while f"zero.{i}.frequency" in fields:
        zeros.append(
            ZeroAssignment(
                float(pop(f"zero.{i}.frequency")),
                int(pop(f"zero.{i}.multiplicity", "1")),
            )
        )
        i += 1

    iterations = int(pop("solver.iterations", "0"))
    objective = float(pop("solver.objective", "nan"))
    max_violation = float(pop("solver.max_violation", "nan"))
    message = pop("solver.message", "")

    coeffs = []
    k = 0
    while f"coeff.{k}" in fields:
        coeffs.append(float(pop(f"coeff.{k}")))
        k += 1
    r = FirFilter(np.array(coeffs)) if coeffs else None
    ntf = ntf_of(r) if r is not None else None
    if r is not None and r.order != order:
        raise ValueError("coefficient count does not match the stated order")

    result = DesignResult(
        order=order,
        status=status,
        r=r,
        ntf=ntf,
        bands=tuple(bands),
        hinf_cap=hinf_cap,
        zeros=tuple(zeros),
        iterations=iterations,
        objective=objective,
        max_violation=max_violation,
        message=message,
    )
    return result, fields
