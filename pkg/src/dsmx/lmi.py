"""Affine LMI modeling and compilation to standard SDP block data.

A problem is built from symmetric-matrix and scalar decision variables,
strict matrix inequalities on affine expressions of those variables, linear
equalities and a linear objective over scalars.  ``compile`` flattens
everything into per-block coefficient matrices

    F_b(x) = G0_b + sum_k x_k G_{k,b}  >= 0,

with strictness folded in as a fixed margin: an expression required ``< 0``
becomes -expr - eps*I >= 0.  The decision vector stacks, per variable, the
upper-triangle entries of each symmetric matrix (row-major by (i, j), i <= j)
followed by scalars, in declaration order; the layout is bijective, so any
assignment of variable values maps to exactly one vector and back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "VarRef",
    "AffineMatrixExpr",
    "LmiProblem",
    "SdpBlock",
    "StandardSdp",
    "dump_standard_sdp",
]

NEGATIVE = "negative"
POSITIVE = "positive"


@dataclass(frozen=True)
class VarRef:
    """Handle to a declared decision variable.

    ``kind`` is "symmetric" or "scalar"; ``n`` is the matrix side (1 for
    scalars); ``offset`` is the variable's first position in the stacked
    decision vector.
    """

    vid: int
    name: str
    kind: str
    n: int
    offset: int

    @property
    def size(self) -> int:
        return self.n * (self.n + 1) // 2 if self.kind == "symmetric" else 1

    def entry_index(self, i: int, j: int) -> int:
        """Decision-vector position of matrix entry (i, j), i <= j."""
        if self.kind != "symmetric":
            raise ValueError("entry_index applies to symmetric variables")
        if not (0 <= i <= j < self.n):
            raise ValueError("need 0 <= i <= j < n")
        return self.offset + i * self.n - i * (i - 1) // 2 + (j - i)


def _tri_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    iu = np.triu_indices(n)
    return iu[0], iu[1]


class AffineMatrixExpr:
    """Symmetric-matrix expression affine in the decision variables.

    The expression value is

        constant
        + sum over matrix terms  coeff * sym(L @ V @ R)
        + sum over scalar terms  v * G,

    with sym(M) = (M + M.T)/2 and G symmetric.  Congruences L = R.T keep
    sym() a no-op; the general form covers the skew couplings of the
    frequency-weighted blocks.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.constant = np.zeros((dim, dim))
        self.mat_terms: list[tuple[VarRef, np.ndarray, np.ndarray, float]] = []
        self.scalar_terms: list[tuple[VarRef, np.ndarray]] = []

    def add_constant(self, c: np.ndarray) -> "AffineMatrixExpr":
        c = np.asarray(c, dtype=float)
        if c.shape != (self.dim, self.dim):
            raise ValueError("constant shape mismatch")
        if not np.array_equal(c, c.T):
            raise ValueError("constant must be symmetric")
        self.constant = self.constant + c
        return self

    def add_matrix_term(
        self, var: VarRef, left: np.ndarray, right: np.ndarray, coeff: float = 1.0
    ) -> "AffineMatrixExpr":
        if var.kind != "symmetric":
            raise ValueError("matrix terms need a symmetric variable")
        left = np.asarray(left, dtype=float)
        right = np.asarray(right, dtype=float)
        if left.shape != (self.dim, var.n) or right.shape != (var.n, self.dim):
            raise ValueError("selector shape mismatch")
        self.mat_terms.append((var, left, right, float(coeff)))
        return self

    def add_scalar_term(self, var: VarRef, g: np.ndarray, coeff: float = 1.0) -> "AffineMatrixExpr":
        if var.kind != "scalar":
            raise ValueError("scalar terms need a scalar variable")
        g = np.asarray(g, dtype=float) * float(coeff)
        if g.shape != (self.dim, self.dim) or not np.allclose(g, g.T, atol=0, rtol=0):
            raise ValueError("G must be symmetric with matching shape")
        self.scalar_terms.append((var, g))
        return self

    def evaluate(self, values: dict[int, np.ndarray | float]) -> np.ndarray:
        """Evaluate at ``values`` mapping vid -> matrix/scalar value."""
        out = self.constant.copy()
        for var, left, right, coeff in self.mat_terms:
            v = np.asarray(values[var.vid], dtype=float)
            m = left @ v @ right
            out += coeff * 0.5 * (m + m.T)
        for var, g in self.scalar_terms:
            out += float(values[var.vid]) * g
        return out


@dataclass
class SdpBlock:
    """One PSD block: F(x) = const + unvec(coeffs.T @ x) must be PSD.

    ``coeffs`` is sparse with shape (num_vars, dim*dim); row k holds
    vec(G_k) row-major.
    """

    dim: int
    const: np.ndarray
    coeffs: sp.csr_matrix


@dataclass
class StandardSdp:
    """Compiled problem: minimize c @ x subject to PSD blocks and eq_A x = eq_b."""

    num_vars: int
    c: np.ndarray
    blocks: list[SdpBlock]
    eq_A: np.ndarray
    eq_b: np.ndarray
    eps: float


@dataclass
class LmiProblem:
    """Container for variables, strict LMIs, equalities and the objective."""

    variables: list[VarRef] = field(default_factory=list)
    lmis: list[tuple[AffineMatrixExpr, str]] = field(default_factory=list)
    equalities: list[tuple[list[tuple[VarRef, int, float]], float]] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)

    def declare_symmetric(self, n: int, name: str) -> VarRef:
        if n < 1:
            raise ValueError("matrix side must be positive")
        self._check_name(name)
        off = self.num_vars
        var = VarRef(len(self.variables), name, "symmetric", n, off)
        self.variables.append(var)
        return var

    def declare_scalar(self, name: str) -> VarRef:
        self._check_name(name)
        off = self.num_vars
        var = VarRef(len(self.variables), name, "scalar", 1, off)
        self.variables.append(var)
        return var

    def _check_name(self, name: str) -> None:
        if any(v.name == name for v in self.variables):
            raise ValueError(f"variable name {name!r} already declared")

    @property
    def num_vars(self) -> int:
        return sum(v.size for v in self.variables)

    def _check_owned(self, var: VarRef) -> None:
        if var.vid >= len(self.variables) or self.variables[var.vid] is not var:
            raise ValueError(f"variable {var.name!r} does not belong to this problem")

    def add_strict_lmi(self, expr: AffineMatrixExpr, sense: str) -> None:
        if sense not in (NEGATIVE, POSITIVE):
            raise ValueError("sense must be 'negative' or 'positive'")
        for var, *_ in expr.mat_terms:
            self._check_owned(var)
        for var, _ in expr.scalar_terms:
            self._check_owned(var)
        self.lmis.append((expr, sense))

    def add_equality(self, terms: list[tuple[VarRef, int, float]], rhs: float) -> None:
        for var, local, _ in terms:
            self._check_owned(var)
            if not (0 <= local < var.size):
                raise ValueError("local index out of range")
        self.equalities.append((list(terms), float(rhs)))

    def set_objective(self, terms: dict[VarRef, float]) -> None:
        obj: dict[int, float] = {}
        for var, coeff in terms.items():
            self._check_owned(var)
            if var.kind != "scalar":
                raise ValueError("objective supports scalar variables only")
            obj[var.vid] = float(coeff)
        self.objective = obj

    def assignment_to_vector(self, values: dict[int, np.ndarray | float]) -> np.ndarray:
        """Flatten per-variable values into the stacked decision vector."""
        x = np.zeros(self.num_vars)
        for var in self.variables:
            v = values[var.vid]
            if var.kind == "scalar":
                x[var.offset] = float(v)
            else:
                m = np.asarray(v, dtype=float)
                ii, jj = _tri_pairs(var.n)
                x[var.offset : var.offset + var.size] = m[ii, jj]
        return x

    def value_of(self, var: VarRef, x: np.ndarray) -> float | np.ndarray:
        """Recover a variable's value from a decision vector."""
        self._check_owned(var)
        if var.kind == "scalar":
            return float(x[var.offset])
        m = np.zeros((var.n, var.n))
        ii, jj = _tri_pairs(var.n)
        m[ii, jj] = x[var.offset : var.offset + var.size]
        m[jj, ii] = m[ii, jj]
        return m

    def compile(self, eps: float = 1e-8) -> StandardSdp:
        """Flatten to standard block data with strictness margin ``eps``.

        An empty problem compiles to an SDP with no blocks.  An objective
        variable that no inequality or equality mentions is rejected: nothing
        would bound it, so minimization is meaningless.
        """
        if eps <= 0:
            raise ValueError("eps must be positive")
        if self.objective:
            referenced = set()
            for expr, _ in self.lmis:
                referenced.update(var.vid for var, *_ in expr.mat_terms)
                referenced.update(var.vid for var, _ in expr.scalar_terms)
            for terms, _ in self.equalities:
                referenced.update(var.vid for var, _, _ in terms)
            for vid in self.objective:
                if vid not in referenced:
                    raise ValueError(
                        f"objective variable {self.variables[vid].name!r} is "
                        "not referenced by any constraint"
                    )
        m = self.num_vars
        c = np.zeros(m)
        for vid, coeff in self.objective.items():
            c[self.variables[vid].offset] = coeff

        blocks = []
        for expr, sense in self.lmis:
            sign = -1.0 if sense == NEGATIVE else 1.0
            dim = expr.dim
            const = sign * expr.constant - eps * np.eye(dim)
            rows: list[int] = []
            cols: list[int] = []
            vals: list[float] = []

            def emit(k: int, g: np.ndarray) -> None:
                nz = np.nonzero(g)
                rows.extend([k] * nz[0].size)
                cols.extend((nz[0] * dim + nz[1]).tolist())
                vals.extend(g[nz].tolist())

            for var, left, right, coeff in expr.mat_terms:
                ii, jj = _tri_pairs(var.n)
                for i, j in zip(ii, jj):
                    basis = np.outer(left[:, i], right[j]) * (sign * coeff)
                    if i != j:
                        basis = basis + np.outer(left[:, j], right[i]) * (sign * coeff)
                    emit(var.offset + (i * var.n - i * (i - 1) // 2) + (j - i),
                         0.5 * (basis + basis.T))
            for var, g in expr.scalar_terms:
                emit(var.offset, sign * g)

            coeffs = sp.csr_matrix(
                (vals, (rows, cols)), shape=(m, dim * dim), dtype=float
            )
            coeffs.sum_duplicates()
            blocks.append(SdpBlock(dim, const, coeffs))

        p = len(self.equalities)
        eq_A = np.zeros((p, m))
        eq_b = np.zeros(p)
        for r, (terms, rhs) in enumerate(self.equalities):
            for var, local, coeff in terms:
                eq_A[r, var.offset + local] += coeff
            eq_b[r] = rhs
        return StandardSdp(m, c, blocks, eq_A, eq_b, eps)


def dump_standard_sdp(sdp: StandardSdp, path: str) -> None:
    """Write the compiled data as sparse triplets for external inspection.

    One entry per line: ``block row col var coeff`` where ``var`` is the
    decision-vector index or -1 for the constant part.  Equalities follow as
    ``eq row var coeff`` and ``eqrhs row value`` lines, objective entries as
    ``obj var coeff``.
    """
    with open(path, "w") as fh:
        fh.write(f"# dsmx standard sdp: vars={sdp.num_vars} blocks={len(sdp.blocks)} "
                 f"eqs={sdp.eq_b.size} eps={sdp.eps:.17g}\n")
        for k in np.nonzero(sdp.c)[0]:
            fh.write(f"obj {k} {sdp.c[k]:.17g}\n")
        for b, blk in enumerate(sdp.blocks):
            nz = np.nonzero(blk.const)
            for i, j in zip(*nz):
                fh.write(f"{b} {i} {j} -1 {blk.const[i, j]:.17g}\n")
            coo = blk.coeffs.tocoo()
            for k, pos, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{b} {pos // blk.dim} {pos % blk.dim} {k} {v:.17g}\n")
        for r in range(sdp.eq_b.size):
            for k in np.nonzero(sdp.eq_A[r])[0]:
                fh.write(f"eq {r} {k} {sdp.eq_A[r, k]:.17g}\n")
            fh.write(f"eqrhs {r} {sdp.eq_b[r]:.17g}\n")
