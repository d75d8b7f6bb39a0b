"""Dense primal-dual interior-point solver for the compiled LMI problems.

The problem handled is

    minimize    c @ x
    subject to  F_b(x) = G0_b + sum_k x_k G_{k,b}  PSD for every block b,
                eq_A x = eq_b.

Internally the solver follows the conic dual: it keeps matrix multipliers
X_b and slacks S_b together with x, takes HKM-scaled Newton steps on the
perturbed complementarity system with a Mehrotra predictor-corrector, and
forms the Schur complement densely.  Linear equalities are eliminated onto a
nullspace basis before the loop starts.

Feasibility-only questions (zero objective) and ambiguous stalls are decided
by an auxiliary phase: minimize s subject to F_b(x) + s I PSD and s >= -1.
That problem always has a strictly feasible start, and the sign of its
optimal s certifies feasibility of the original constraints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve, null_space, solve_triangular

from .lmi import StandardSdp

__all__ = [
    "SolverOptions",
    "SdpSolution",
    "solve",
    "OPTIMAL",
    "INFEASIBLE",
    "NUMERICAL_TROUBLE",
    "ITERATION_LIMIT",
    "NUMERICAL_MESSAGE",
]

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
NUMERICAL_TROUBLE = "NumericalTrouble"
ITERATION_LIMIT = "IterationLimit"

NUMERICAL_MESSAGE = "Run into numerical problems"

_PHASE1_EXIT = 1e-7
_PHASE1_DECIDE = 1e-9


@dataclass
class SolverOptions:
    """Interior-point knobs; the defaults suit every built-in problem family."""

    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iterations: int = 200
    eps_margin: float = 1e-8
    step_fraction: float = 0.98
    verbose: bool = False


@dataclass
class SdpSolution:
    """Outcome of a solve.

    ``x`` is the full decision vector of the compiled problem (zeros when no
    meaningful point exists) and ``max_violation`` the worst eigenvalue
    deficit across blocks at ``x`` (0 when every block is PSD), measured on
    the compiled data by a direct eigenvalue decomposition.
    """

    status: str
    x: np.ndarray
    objective: float
    max_violation: float
    iterations: int
    message: str = ""


class _Block:
    """Per-block data with a dense stack of the active coefficient matrices."""

    def __init__(self, dim: int, const: np.ndarray, coeffs: sp.csr_matrix):
        self.dim = dim
        self.const = np.asarray(const, dtype=float)
        self.coeffs = coeffs.tocsr()
        self.act = np.nonzero(np.diff(self.coeffs.indptr))[0]
        self.coeffs_act = self.coeffs[self.act]
        self.gstack = np.asarray(self.coeffs_act.todense()).reshape(
            self.act.size, dim, dim
        )

    def lincomb(self, x: np.ndarray) -> np.ndarray:
        """sum_k x_k G_k (no constant term)."""
        if self.act.size == 0:
            return np.zeros((self.dim, self.dim))
        return np.tensordot(x[self.act], self.gstack, axes=1)

    def affine(self, x: np.ndarray) -> np.ndarray:
        """F(x) = const + sum_k x_k G_k."""
        return self.const + self.lincomb(x)

    def adjoint_into(self, mat: np.ndarray, out: np.ndarray, scale: float = 1.0) -> None:
        """out[k] += scale * <G_k, mat> for the active variables."""
        if self.act.size:
            out[self.act] += scale * (self.coeffs_act @ mat.ravel())


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _max_step(mat: np.ndarray, dmat: np.ndarray) -> float:
    """sup of alpha with mat + alpha*dmat PSD; mat must be PD."""
    ell = np.linalg.cholesky(mat)
    w = solve_triangular(ell, dmat, lower=True)
    w = solve_triangular(ell, w.T, lower=True)
    lam = float(np.linalg.eigvalsh(_sym(w))[0])
    if lam >= -1e-14:
        return np.inf
    return -1.0 / lam


class _IpmResult:
    def __init__(self, code: str, x: np.ndarray, iterations: int):
        self.code = code  # converged | early | iteration_limit | stalled
        self.x = x
        self.iterations = iterations


def _ipm(
    blocks: list[_Block],
    c: np.ndarray,
    x0: np.ndarray,
    big_x0: list[np.ndarray],
    s0: list[np.ndarray],
    opts: SolverOptions,
    early_stop=None,
) -> _IpmResult:
    """Path-following loop with Nesterov-Todd scaling.

    Per block the scaling factor G (with W = G G' the NT point) maps the
    iterates to a common diagonal, X_hat = S_hat = diag(sig); directions are
    computed in that well-conditioned frame, which is what lets the loop
    reach 1e-8 duality gaps in double precision.
    """
    m = c.size
    nb = len(blocks)
    x = x0.copy()
    xs = [xb.copy() for xb in big_x0]
    ss = [sb.copy() for sb in s0]
    ntot = sum(b.dim for b in blocks)
    norm_c = 1.0 + float(np.linalg.norm(c))
    norm_g0 = 1.0 + max(float(np.linalg.norm(b.const)) for b in blocks)
    tau = opts.step_fraction
    mu_hist: list[float] = []
    small_steps = 0

    for it in range(1, opts.max_iterations + 1):
        # NT scaling per block: G = chol(X) V / sqrt(sig) from svd(chol(S)' chol(X))
        try:
            gs, gts, ws, sigs = [], [], [], []
            for xb, sb in zip(xs, ss):
                ell = np.linalg.cholesky(xb)
                rr = np.linalg.cholesky(sb)
                u, sig, vt = np.linalg.svd(rr.T @ ell)
                if sig[-1] <= 0.0:
                    raise np.linalg.LinAlgError
                g = (ell @ vt.T) / np.sqrt(sig)
                gs.append(g)
                gts.append(g.T)
                ws.append(g @ g.T)
                sigs.append(sig)
        except np.linalg.LinAlgError:
            return _IpmResult("stalled", x, it)

        ax = np.zeros(m)
        for b, xb in zip(blocks, xs):
            b.adjoint_into(xb, ax)
        rp = c - ax
        rd = [b.affine(x) - sb for b, sb in zip(blocks, ss)]
        gap = sum(float(np.sum(sig * sig)) for sig in sigs)
        mu = gap / ntot
        pobj = float(c @ x)
        dobj = -sum(float(np.tensordot(b.const, xb)) for b, xb in zip(blocks, xs))
        relgap = gap / (1.0 + abs(pobj) + abs(dobj))
        pres = float(np.linalg.norm(rp)) / norm_c
        dres = max(float(np.linalg.norm(r)) for r in rd) / norm_g0

        if opts.verbose:
            print(
                f"  it {it:3d}  mu {mu:9.2e}  gap {relgap:9.2e}  "
                f"pres {pres:9.2e}  dres {dres:9.2e}"
            )

        if not (np.isfinite(mu) and np.isfinite(pres) and np.isfinite(dres)):
            return _IpmResult("stalled", x, it)
        if early_stop is not None and early_stop(x, pres, dres):
            return _IpmResult("early", x, it)
        if relgap <= opts.gap_tol and pres <= opts.feas_tol and dres <= opts.feas_tol:
            return _IpmResult("converged", x, it)

        mu_hist.append(mu)
        if len(mu_hist) > 15 and mu > 0.98 * mu_hist[-16]:
            return _IpmResult("stalled", x, it)
        if float(np.linalg.norm(x)) > 1e12:
            return _IpmResult("stalled", x, it)

        # Endgame guard: driving mu far below what the gap tolerance needs
        # only amplifies roundoff in the scaled directions (and with it the
        # multiplier residual), so floor the target and simplify the steps.
        mu_floor = 0.3 * opts.gap_tol * (1.0 + abs(pobj) + abs(dobj)) / ntot
        endgame = mu < 1e3 * mu_floor

        # Schur complement M[k, j] = sum_b <G_k, W_b G_j W_b>
        def assemble_fast() -> np.ndarray:
            out = np.zeros((m, m))
            for b, w in zip(blocks, ws):
                if b.act.size == 0:
                    continue
                k2 = np.matmul(np.matmul(w[None, :, :], b.gstack), w[None, :, :])
                mb = b.coeffs_act @ k2.reshape(b.act.size, b.dim * b.dim).T
                out[np.ix_(b.act, b.act)] += mb
            return _sym(out)

        def assemble_gram() -> np.ndarray:
            # <G_k, W G_j W> = <G'G_k G, G'G_j G>, and the Gram form stays
            # PSD in floating point where the sandwich form goes indefinite
            # near a degenerate optimum.
            out = np.zeros((m, m))
            for i, b in enumerate(blocks):
                if b.act.size == 0:
                    continue
                ghat = np.matmul(np.matmul(gts[i][None, :, :], b.gstack), gs[i][None, :, :])
                v = ghat.reshape(b.act.size, b.dim * b.dim)
                out[np.ix_(b.act, b.act)] += v @ v.T
            return _sym(out)

        # Jacobi equilibration keeps the factorization accurate near optimum
        fac = None
        for use_gram in (True,) if endgame else (False, True):
            schur = assemble_gram() if use_gram else assemble_fast()
            dscale = 1.0 / np.sqrt(np.maximum(np.diag(schur), 1e-300))
            scaled = schur * dscale[:, None] * dscale[None, :]
            fac = None
            ridge = 0.0
            while ridge < 1.0:
                try:
                    fac = cho_factor(scaled + ridge * np.eye(m), lower=True)
                    break
                except np.linalg.LinAlgError:
                    fac = None
                    ridge = 1e-14 if ridge == 0.0 else ridge * 100.0
            if fac is not None and (use_gram or ridge <= 1e-12):
                break
        if fac is None:
            return _IpmResult("stalled", x, it)

        def schur_solve(h: np.ndarray) -> np.ndarray:
            dx = dscale * cho_solve(fac, dscale * h)
            for _ in range(3 if endgame else 2):
                resid = h - schur @ dx
                dx = dx + dscale * cho_solve(fac, dscale * resid)
            return dx

        rd_hat = [gts[i] @ rd[i] @ gs[i] for i in range(nb)]
        kden = [2.0 / np.add.outer(sig, sig) for sig in sigs]

        def solve_dir(sigma_mu: float, corr: list[np.ndarray] | None):
            """Return (dx, dX_hat list, dS_hat list) for the given target."""
            rhs0 = []
            for i in range(nb):
                r0 = -np.diag(sigs[i])
                if sigma_mu != 0.0:
                    r0 = r0 + sigma_mu * np.diag(1.0 / sigs[i])
                if corr is not None:
                    r0 = r0 - kden[i] * _sym(corr[i])
                rhs0.append(r0)
            h = -rp.copy()
            for i, b in enumerate(blocks):
                b.adjoint_into(gs[i] @ (rhs0[i] - rd_hat[i]) @ gts[i], h)
            dx = schur_solve(h)
            ds_hat = [rd_hat[i] + gts[i] @ blocks[i].lincomb(dx) @ gs[i] for i in range(nb)]
            dx_hat = [rhs0[i] - ds_hat[i] for i in range(nb)]
            return dx, dx_hat, ds_hat

        def max_steps(dx_hat, ds_hat) -> tuple[float, float]:
            ap = ad = 1.0
            for i in range(nb):
                d = 1.0 / np.sqrt(sigs[i])
                lam_x = float(np.linalg.eigvalsh(_sym(d[:, None] * dx_hat[i] * d[None, :]))[0])
                lam_s = float(np.linalg.eigvalsh(_sym(d[:, None] * ds_hat[i] * d[None, :]))[0])
                if lam_x < -1e-14:
                    ap = min(ap, -1.0 / lam_x)
                if lam_s < -1e-14:
                    ad = min(ad, -1.0 / lam_s)
            return ap, ad

        dx_a, dxh_a, dsh_a = solve_dir(0.0, None)
        ap_a, ad_a = max_steps(dxh_a, dsh_a)
        gap_a = sum(
            float(np.tensordot(np.diag(sigs[i]) + ap_a * dxh_a[i],
                               np.diag(sigs[i]) + ad_a * dsh_a[i]))
            for i in range(nb)
        )
        sigma = min(1.0, max((max(gap_a, 0.0) / gap) ** 3, 1e-10)) if gap > 0 else 0.1
        if sigma * mu < mu_floor:
            sigma = min(1.0, mu_floor / mu)

        corr = None if endgame else [dxh_a[i] @ dsh_a[i] for i in range(nb)]
        dx, dxh, dsh = solve_dir(sigma * mu, corr)
        ap, ad = max_steps(dxh, dsh)
        ap, ad = min(tau * ap, 1.0), min(tau * ad, 1.0)

        if min(ap, ad) < 1e-3:
            # recenter instead of forcing a doomed combined step
            dx, dxh, dsh = solve_dir(mu, None)
            ap, ad = max_steps(dxh, dsh)
            ap, ad = min(tau * ap, 1.0), min(tau * ad, 1.0)

        if min(ap, ad) < 1e-4:
            small_steps += 1
            if small_steps >= 5:
                return _IpmResult("stalled", x, it)
        else:
            small_steps = 0

        xs = [_sym(xs[i] + ap * (gs[i] @ dxh[i] @ gts[i])) for i in range(nb)]
        x = x + ad * dx
        ss = [_sym(ss[i] + ad * (blocks[i].lincomb(dx) + rd[i])) for i in range(nb)]

    return _IpmResult("iteration_limit", x, opts.max_iterations)


def _cold_start(blocks: list[_Block], c: np.ndarray):
    """SDPT3-flavoured identity scalings for an infeasible start."""
    x0 = np.zeros(c.size)
    big_x0 = []
    s0 = []
    for b in blocks:
        gnorms = np.sqrt(np.asarray(b.coeffs_act.multiply(b.coeffs_act).sum(axis=1))).ravel()
        if gnorms.size:
            xi = max(10.0, np.sqrt(b.dim),
                     b.dim * float(np.max((1.0 + np.abs(c[b.act])) / (1.0 + gnorms))))
            eta = max(10.0, np.sqrt(b.dim), float(np.linalg.norm(b.const)),
                      float(np.max(gnorms)))
        else:
            xi = max(10.0, np.sqrt(b.dim))
            eta = max(10.0, np.sqrt(b.dim), float(np.linalg.norm(b.const)))
        big_x0.append(xi * np.eye(b.dim))
        s0.append(eta * np.eye(b.dim))
    return x0, big_x0, s0


def _phase1(blocks: list[_Block], m: int, opts: SolverOptions):
    """Feasibility oracle.

    Returns (verdict, x_feas, iterations) with verdict True/False, or
    (None, x, iterations) when the auxiliary solve itself fails.
    """
    aug = []
    for b in blocks:
        eye_row = sp.csr_matrix(np.eye(b.dim).reshape(1, -1))
        coeffs = sp.vstack([b.coeffs, eye_row], format="csr")
        aug.append(_Block(b.dim, b.const, coeffs))
    cap = _Block(1, np.array([[1.0]]),
                 sp.csr_matrix(([1.0], ([m], [0])), shape=(m + 1, 1)))
    aug.append(cap)

    c1 = np.zeros(m + 1)
    c1[m] = 1.0
    s_start = 1.0
    for b in blocks:
        lam = float(np.linalg.eigvalsh(_sym(b.const))[0])
        s_start = max(s_start, 1.1 * (-lam) + 1.0)

    x0 = np.zeros(m + 1)
    x0[m] = s_start
    big_x0 = [max(10.0, np.sqrt(b.dim)) * np.eye(b.dim) for b in aug]
    s0 = [b.affine(x0) for b in aug]

    scale = max(1.0, s_start)
    exit_level = -_PHASE1_EXIT * scale

    def early(xv, pres, dres):
        return xv[m] <= exit_level and dres <= 1e-10

    res = _ipm(aug, c1, x0, big_x0, s0, opts, early_stop=early)
    s_val = res.x[m]
    if res.code == "early":
        return True, res.x[:m], res.iterations
    if res.code == "converged":
        if s_val <= -_PHASE1_DECIDE * scale:
            return True, res.x[:m], res.iterations
        return False, res.x[:m], res.iterations
    if res.code == "iteration_limit" and s_val <= exit_level:
        return True, res.x[:m], res.iterations
    return None, res.x[:m], res.iterations


def _eliminate_equalities(sdp: StandardSdp):
    """Return (ok, blocks', c', offset, recover) with equalities removed.

    ``recover`` maps the reduced vector back to the full one.  ``ok`` is
    False when the equalities are inconsistent.
    """
    m = sdp.num_vars
    if sdp.eq_b.size == 0:
        blocks = [_Block(b.dim, b.const, b.coeffs) for b in sdp.blocks]
        return True, blocks, sdp.c.copy(), 0.0, lambda y: y

    eq_a = sdp.eq_A
    touched = np.nonzero(np.any(eq_a != 0.0, axis=0))[0]
    sub = eq_a[:, touched]
    xp_sub, *_ = np.linalg.lstsq(sub, sdp.eq_b, rcond=None)
    resid = float(np.linalg.norm(sub @ xp_sub - sdp.eq_b))
    if resid > 1e-9 * (1.0 + float(np.linalg.norm(sdp.eq_b))):
        return False, None, None, 0.0, None

    nsub = null_space(sub)
    keep = np.setdiff1d(np.arange(m), touched)
    x_p = np.zeros(m)
    x_p[touched] = xp_sub

    # basis columns: identity on untouched vars, then nullspace on touched ones
    cols = keep.size + nsub.shape[1]
    rows_list = []
    cols_list = []
    data_list = []
    for j, k in enumerate(keep):
        rows_list.append(k)
        cols_list.append(j)
        data_list.append(1.0)
    for j in range(nsub.shape[1]):
        for i, k in enumerate(touched):
            v = nsub[i, j]
            if v != 0.0:
                rows_list.append(k)
                cols_list.append(keep.size + j)
                data_list.append(v)
    basis = sp.csr_matrix((data_list, (rows_list, cols_list)), shape=(m, cols))

    blocks = []
    for b in sdp.blocks:
        const = b.const + (b.coeffs.T @ x_p).reshape(b.dim, b.dim)
        coeffs = (basis.T @ b.coeffs).tocsr()
        blocks.append(_Block(b.dim, _sym(const), coeffs))
    c_red = basis.T @ sdp.c
    offset = float(sdp.c @ x_p)

    def recover(y: np.ndarray) -> np.ndarray:
        return x_p + basis @ y

    return True, blocks, np.asarray(c_red).ravel(), offset, recover


def _finalize(sdp: StandardSdp, status: str, x: np.ndarray, iterations: int,
              message: str = "") -> SdpSolution:
    viol = 0.0
    for b in sdp.blocks:
        fx = b.const + (b.coeffs.T @ x).reshape(b.dim, b.dim)
        lam = float(np.linalg.eigvalsh(_sym(fx))[0])
        viol = max(viol, -lam)
    return SdpSolution(
        status=status,
        x=x,
        objective=float(sdp.c @ x),
        max_violation=max(viol, 0.0),
        iterations=iterations,
        message=message,
    )


def solve(sdp: StandardSdp, options: SolverOptions | None = None) -> SdpSolution:
    """Solve a compiled problem.

    Parameters
    ----------
    sdp : StandardSdp
        Output of :meth:`dsmx.lmi.LmiProblem.compile`.
    options : SolverOptions, optional

    Returns
    -------
    SdpSolution
        ``status`` is one of Optimal, Infeasible, NumericalTrouble or
        IterationLimit.  Feasibility of an Optimal point is re-checked by an
        eigenvalue decomposition of every block and reported as
        ``max_violation``.

    Raises
    ------
    ValueError
        On structurally empty or degenerate problems (no blocks, or an
        objective direction entirely absent from the constraints).
    """
    opts = options or SolverOptions()
    if not sdp.blocks:
        raise ValueError("problem has no matrix blocks")
    m = sdp.num_vars
    if m == 0:
        feasible = all(
            float(np.linalg.eigvalsh(_sym(b.const))[0]) >= 0.0 for b in sdp.blocks
        )
        status = OPTIMAL if feasible else INFEASIBLE
        return _finalize(sdp, status, np.zeros(0), 0)

    ok, blocks, c_red, _, recover = _eliminate_equalities(sdp)
    if not ok:
        return _finalize(sdp, INFEASIBLE, np.zeros(m), 0,
                         "inconsistent linear equalities")

    # constant blocks decide feasibility on their own; drop them
    live = []
    for b in blocks:
        if b.act.size == 0:
            if float(np.linalg.eigvalsh(_sym(b.const))[0]) < 0.0:
                return _finalize(sdp, INFEASIBLE, recover(np.zeros(c_red.size)), 0,
                                 "constant block is not PSD")
        else:
            live.append(b)

    n_red = c_red.size
    used = np.zeros(n_red, dtype=bool)
    for b in live:
        used[b.act] = True
    if np.any(~used & (c_red != 0.0)):
        raise ValueError("objective pushes along a direction absent from all blocks")
    if not live:
        return _finalize(sdp, OPTIMAL, recover(np.zeros(n_red)), 0)

    if np.any(~used):
        # pin variables that appear nowhere; they stay zero
        keep = np.nonzero(used)[0]
        live = [_Block(b.dim, b.const, b.coeffs[keep]) for b in live]
        c_work = c_red[keep]

        def expand(y: np.ndarray) -> np.ndarray:
            full = np.zeros(n_red)
            full[keep] = y
            return full
    else:
        c_work = c_red

        def expand(y: np.ndarray) -> np.ndarray:
            return y

    pure_feasibility = not np.any(c_work)

    if pure_feasibility:
        verdict, y_feas, iters = _phase1(live, c_work.size, opts)
        if verdict is True:
            return _finalize(sdp, OPTIMAL, recover(expand(y_feas)), iters)
        if verdict is False:
            return _finalize(sdp, INFEASIBLE, recover(expand(y_feas)), iters)
        return _finalize(sdp, NUMERICAL_TROUBLE, recover(expand(y_feas)), iters,
                         NUMERICAL_MESSAGE)

    x0, big_x0, s0 = _cold_start(live, c_work)
    res = _ipm(live, c_work, x0, big_x0, s0, opts)
    if res.code == "converged":
        return _finalize(sdp, OPTIMAL, recover(expand(res.x)), res.iterations)
    if res.code == "iteration_limit":
        return _finalize(sdp, ITERATION_LIMIT, recover(expand(res.x)), res.iterations)

    # stalled: classify via the feasibility oracle, then retry warm
    verdict, y_feas, it1 = _phase1(live, c_work.size, opts)
    iters = res.iterations + it1
    if verdict is False:
        return _finalize(sdp, INFEASIBLE, recover(expand(y_feas)), iters)
    if verdict is True:
        s_warm = [b.affine(y_feas) for b in live]
        if all(float(np.linalg.eigvalsh(s)[0]) > 0.0 for s in s_warm):
            big_x0 = [max(10.0, np.sqrt(b.dim)) * np.eye(b.dim) for b in live]
            res2 = _ipm(live, c_work, y_feas.copy(), big_x0, s_warm, opts)
            iters += res2.iterations
            if res2.code == "converged":
                return _finalize(sdp, OPTIMAL, recover(expand(res2.x)), iters)
            if res2.code == "iteration_limit":
                return _finalize(sdp, ITERATION_LIMIT, recover(expand(res2.x)), iters)
            return _finalize(sdp, NUMERICAL_TROUBLE, recover(expand(res2.x)), iters,
                             NUMERICAL_MESSAGE)
    return _finalize(sdp, NUMERICAL_TROUBLE, recover(expand(y_feas)), iters,
                     NUMERICAL_MESSAGE)
