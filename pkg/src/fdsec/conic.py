"""Canonical real-valued conic programs with a verified solve contract.

A :class:`ConicProgram` is a linear objective over named real variables
subject to linear rows, second-order cones ``||F x + g|| <= d.x + e`` and
rotated cones ``||F x + g||^2 <= (d1.x + e1)(d2.x + e2)`` (both factors
are forced nonnegative by the cone).  Complex quantities enter through
the embedding helpers at the bottom: each complex scalar becomes two
reals and Hermitian quadratic forms become stacked norm rows.

Solving delegates to the Clarabel interior-point solver behind this
interface; the contract (statuses, residual guarantees, determinism) is
what the tests pin down, not the mechanism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

import clarabel

DEFAULT_TOL = 1e-8

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_LIMIT = "numerical-limit"


class LinExpr:
    """Sparse affine expression ``sum_i coef_i x_i + const``."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: dict[int, float] | None = None, const: float = 0.0):
        self.terms = terms or {}
        self.const = float(const)

    @staticmethod
    def constant(c: float) -> "LinExpr":
        return LinExpr({}, c)

    def copy(self) -> "LinExpr":
        return LinExpr(dict(self.terms), self.const)

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return LinExpr(dict(self.terms), self.const + other)
        out = dict(self.terms)
        for i, c in other.terms.items():
            out[i] = out.get(i, 0.0) + c
        return LinExpr(out, self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return LinExpr({i: -c for i, c in self.terms.items()}, -self.const)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return LinExpr(dict(self.terms), self.const - other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, s: float):
        return LinExpr({i: c * s for i, c in self.terms.items()}, self.const * s)

    __rmul__ = __mul__

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(c * x[i] for i, c in self.terms.items())


def _combine(indices, coefs, const: float) -> LinExpr:
    terms: dict[int, float] = {}
    for i, c in zip(indices, coefs):
        if c != 0.0:
            terms[int(i)] = terms.get(int(i), 0.0) + float(c)
    return LinExpr(terms, const)


def _magnitude(expr: LinExpr) -> float:
    """Largest coefficient or constant magnitude, floored away from zero."""
    m = abs(expr.const)
    for c in expr.terms.values():
        m = max(m, abs(c))
    return m if m > 1e-30 else 1.0


@dataclass
class _LinearRow:
    expr: LinExpr
    rhs: float
    equality: bool = False


@dataclass
class _ConeRow:
    vec: list[LinExpr]
    bound: LinExpr | None = None  # second-order cone: ||vec|| <= bound
    y: LinExpr | None = None  # rotated cone: ||vec||^2 <= y * z
    z: LinExpr | None = None


@dataclass
class Solution:
    status: str
    x: np.ndarray
    objective: float
    r_prim: float
    r_dual: float
    iterations: int


class ConicProgram:
    def __init__(self) -> None:
        self.n = 0
        self.names: list[str] = []
        self.objective: LinExpr = LinExpr.constant(0.0)
        self.blocks: list[_LinearRow | _ConeRow] = []

    # -- variables ---------------------------------------------------------

    def add_vars(self, name: str, count: int) -> np.ndarray:
        idx = np.arange(self.n, self.n + count)
        self.names.extend(f"{name}[{j}]" if count > 1 else name for j in range(count))
        self.n += count
        return idx

    def add_var(self, name: str) -> int:
        return int(self.add_vars(name, 1)[0])

    def add_complex(self, name: str, shape) -> "ComplexVar":
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        count = int(np.prod(shape))
        re = self.add_vars(f"{name}.re", count).reshape(shape)
        im = self.add_vars(f"{name}.im", count).reshape(shape)
        return ComplexVar(re=re, im=im)

    def x(self, idx: int) -> LinExpr:
        return LinExpr({int(idx): 1.0})

    # -- objective and rows --------------------------------------------------

    def maximize(self, expr: LinExpr) -> None:
        self.objective = expr.copy()

    def le(self, expr: LinExpr, rhs: float = 0.0) -> None:
        """Add ``expr <= rhs`` (stored normalized by its largest coefficient)."""
        s = _magnitude(expr)
        self.blocks.append(_LinearRow(expr=expr * (1.0 / s), rhs=float(rhs) / s))

    def ge(self, expr: LinExpr, rhs: float = 0.0) -> None:
        self.le(-expr, -rhs)

    def eq(self, expr: LinExpr, rhs: float = 0.0) -> None:
        s = _magnitude(expr)
        self.blocks.append(
            _LinearRow(expr=expr * (1.0 / s), rhs=float(rhs) / s, equality=True)
        )

    def soc(self, vec: list[LinExpr], bound: LinExpr) -> None:
        """Add ``||vec|| <= bound``."""
        if not vec:
            self.ge(bound)
            return
        # center the block: a uniform positive scale is cone-invariant
        lam = 1.0 / math.sqrt(max(_magnitude(e) for e in vec) * _magnitude(bound))
        self.blocks.append(
            _ConeRow(vec=[e * lam for e in vec], bound=bound * lam)
        )

    def rsoc(self, vec: list[LinExpr], y: LinExpr, z: LinExpr) -> None:
        """Add ``||vec||^2 <= y * z`` with ``y, z >= 0`` part of the cone.

        The block is stored rebalanced: a uniform scale on (vec, y, z) and
        an inverse tilt between y and z leave the constraint unchanged and
        keep the solver data well conditioned across physical scales.
        """
        cy, cz = _magnitude(y), _magnitude(z)
        mu = math.sqrt(cy / cz)
        cu = max((_magnitude(e) for e in vec), default=1.0)
        g = math.sqrt(cy * cz)
        lam = 1.0 / math.sqrt(cu * g)
        self.blocks.append(
            _ConeRow(
                vec=[e * lam for e in vec],
                y=y * (lam / mu),
                z=z * (lam * mu),
            )
        )

    def without_block(self, index: int) -> "ConicProgram":
        out = ConicProgram()
        out.n = self.n
        out.names = list(self.names)
        out.objective = self.objective.copy()
        out.blocks = [b for j, b in enumerate(self.blocks) if j != index]
        return out

    # -- solving -------------------------------------------------------------

    def _assemble(self):
        rows_i: list[int] = []
        cols: list[int] = []
        vals: list[float] = []
        b: list[float] = []
        cones: list = []
        row = 0

        def put(expr: LinExpr, rhs: float, sign: float = 1.0):
            """Emit one solver row with slack ``rhs - sign * expr``."""
            nonlocal row
            for i, c in expr.terms.items():
                if c != 0.0:
                    rows_i.append(row)
                    cols.append(i)
                    vals.append(sign * c)
            b.append(rhs - sign * expr.const)
            row += 1

        eq_rows = [blk for blk in self.blocks if isinstance(blk, _LinearRow) and blk.equality]
        le_rows = [blk for blk in self.blocks if isinstance(blk, _LinearRow) and not blk.equality]
        cone_rows = [blk for blk in self.blocks if isinstance(blk, _ConeRow)]

        for blk in eq_rows:
            put(blk.expr, blk.rhs)
        if eq_rows:
            cones.append(clarabel.ZeroConeT(len(eq_rows)))

        for blk in le_rows:
            put(blk.expr, blk.rhs)
        if le_rows:
            cones.append(clarabel.NonnegativeConeT(len(le_rows)))

        for blk in cone_rows:
            if blk.bound is not None:
                # s = (bound, vec) in the second-order cone
                put(blk.bound, 0.0, sign=-1.0)
                for e in blk.vec:
                    put(e, 0.0, sign=-1.0)
                cones.append(clarabel.SecondOrderConeT(1 + len(blk.vec)))
            else:
                # ||u||^2 <= y z  <=>  ||(y - z, 2u)|| <= y + z
                put(blk.y + blk.z, 0.0, sign=-1.0)
                put(blk.y - blk.z, 0.0, sign=-1.0)
                for e in blk.vec:
                    put(e * 2.0, 0.0, sign=-1.0)
                cones.append(clarabel.SecondOrderConeT(2 + len(blk.vec)))

        a_mat = sparse.csc_matrix(
            (vals, (rows_i, cols)), shape=(row, self.n), dtype=float
        )
        return a_mat, np.array(b, dtype=float), cones

    def solve(
        self,
        tol: float = DEFAULT_TOL,
        max_iter: int = 200,
        shift: np.ndarray | None = None,
    ) -> Solution:
        """Solve to KKT residuals at most ``tol``; deterministic per input.

        ``shift`` recenters the problem on a known (ideally feasible)
        point: the solver works on the deviation variables, which keeps
        its arithmetic free of the large cancelling terms that appear
        when rate expressions are evaluated far from the iterate.
        """
        a_mat, b, cones = self._assemble()
        if shift is not None:
            b = b - a_mat @ shift
        q = np.zeros(self.n)
        for i, c in self.objective.terms.items():
            q[i] = -c  # maximize c.x  ->  minimize -c.x

        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.max_iter = max_iter
        settings.tol_gap_abs = tol * 0.1
        settings.tol_gap_rel = tol * 0.1
        settings.tol_feas = tol * 0.1
        # keep the KKT perturbation well below the target accuracy, and give
        # the scaling loop extra headroom for the wide dynamic range
        settings.static_regularization_constant = tol * 1e-2
        settings.equilibrate_max_scaling = 1e6
        p_mat = sparse.csc_matrix((self.n, self.n))
        solver = clarabel.DefaultSolver(p_mat, q, a_mat, b, cones, settings)
        res = solver.solve()

        status = str(res.status)
        if status == "Solved":
            mapped = OPTIMAL
        elif status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            mapped = INFEASIBLE
        elif status in ("DualInfeasible", "AlmostDualInfeasible"):
            mapped = UNBOUNDED
        else:
            mapped = NUMERICAL_LIMIT

        x = np.array(res.x) if len(res.x) == self.n else np.zeros(self.n)
        if shift is not None and mapped not in (INFEASIBLE, UNBOUNDED):
            x = x + shift
        obj = self.objective.value(x) if mapped in (OPTIMAL, NUMERICAL_LIMIT) else math.nan
        return Solution(
            status=mapped,
            x=x,
            objective=obj,
            r_prim=float(res.r_prim),
            r_dual=float(res.r_dual),
            iterations=int(res.iterations),
        )

    # -- verification ----------------------------------------------------------

    def violations(self, x: np.ndarray) -> list[float]:
        """Violation of each stored block at ``x`` (<= 0 means satisfied).

        Blocks are stored normalized by their largest coefficient, so the
        raw violations are already comparable; they are further divided
        by ``1 + |rhs|`` (or the cone-factor magnitude) only.
        """
        out: list[float] = []
        for blk in self.blocks:
            if isinstance(blk, _LinearRow):
                lhs = blk.expr.value(x)
                v = abs(lhs - blk.rhs) if blk.equality else (lhs - blk.rhs)
                out.append(v / (1.0 + abs(blk.rhs)))
            elif blk.bound is not None:
                norm = math.sqrt(sum(e.value(x) ** 2 for e in blk.vec))
                bound = blk.bound.value(x)
                out.append((norm - bound) / (1.0 + abs(bound)))
            else:
                sq = sum(e.value(x) ** 2 for e in blk.vec)
                y, z = blk.y.value(x), blk.z.value(x)
                v = max(sq - y * z, -min(y, 0.0), -min(z, 0.0))
                out.append(v / (1.0 + abs(y * z)))
        return out

    def max_violation(self, x: np.ndarray) -> float:
        vio = self.violations(x)
        return max(vio) if vio else 0.0

    # -- debugging ---------------------------------------------------------------

    def _fmt(self, expr: LinExpr) -> str:
        parts = [f"{c:.6g}*{self.names[i]}" for i, c in sorted(expr.terms.items())]
        if expr.const or not parts:
            parts.append(f"{expr.const:.6g}")
        return " + ".join(parts).replace("+ -", "- ")

    def dump(self) -> str:
        """One line per block, human readable."""
        lines = [f"maximize {self._fmt(self.objective)}"]
        for blk in self.blocks:
            if isinstance(blk, _LinearRow):
                op = "==" if blk.equality else "<="
                lines.append(f"lin: {self._fmt(blk.expr)} {op} {blk.rhs:.6g}")
            elif blk.bound is not None:
                vec = ", ".join(self._fmt(e) for e in blk.vec)
                lines.append(f"soc: ||[{vec}]|| <= {self._fmt(blk.bound)}")
            else:
                vec = ", ".join(self._fmt(e) for e in blk.vec)
                lines.append(f"rsoc: ||[{vec}]||^2 <= ({self._fmt(blk.y)}) * ({self._fmt(blk.z)})")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Complex-to-real embedding helpers.


@dataclass
class ComplexVar:
    """Index maps of the real/imaginary parts of a complex variable."""

    re: np.ndarray
    im: np.ndarray

    @property
    def shape(self):
        return self.re.shape

    def column(self, j: int) -> "ComplexVar":
        return ComplexVar(re=self.re[:, j], im=self.im[:, j])

    def all_indices(self) -> np.ndarray:
        return np.concatenate([self.re.ravel(), self.im.ravel()])

    def value(self, x: np.ndarray) -> np.ndarray:
        return x[self.re] + 1j * x[self.im]


def re_inner(c: np.ndarray, var: ComplexVar) -> LinExpr:
    """Re{c^H x} as a linear form over the embedded reals."""
    c = np.asarray(c).ravel()
    return _combine(
        np.concatenate([var.re.ravel(), var.im.ravel()]),
        np.concatenate([c.real, c.imag]),
        0.0,
    )


def im_inner(c: np.ndarray, var: ComplexVar) -> LinExpr:
    """Im{c^H x} as a linear form over the embedded reals."""
    c = np.asarray(c).ravel()
    return _combine(
        np.concatenate([var.im.ravel(), var.re.ravel()]),
        np.concatenate([c.real, -c.imag]),
        0.0,
    )


def matvec_rows(a: np.ndarray, var: ComplexVar) -> list[LinExpr]:
    """Stacked Re/Im rows of ``a^H x`` so their squared sum is ``||a^H x||^2``."""
    rows: list[LinExpr] = []
    for e in range(a.shape[1]):
        rows.append(re_inner(a[:, e], var))
        rows.append(im_inner(a[:, e], var))
    return rows


def norm_rows(var: ComplexVar) -> list[LinExpr]:
    """Rows whose squared sum is the squared Frobenius norm of the variable."""
    return [LinExpr({int(i): 1.0}) for i in var.all_indices()]


def hermitian_sqrt(q: np.ndarray, eig_floor: float = 1e-14) -> np.ndarray:
    """Factor R with R^H R = Q for Hermitian PSD Q (rank-revealing)."""
    qh = 0.5 * (q + q.conj().T)
    if np.linalg.norm(q - qh, "fro") > 1e-10 * max(1.0, np.linalg.norm(q, "fro")):
        raise ValueError("quadratic-form matrix must be Hermitian")
    evals, evecs = np.linalg.eigh(qh)
    top = float(evals.max(initial=0.0))
    keep = evals > eig_floor * max(top, 1.0)
    return (np.sqrt(evals[keep])[:, None] * evecs[:, keep].conj().T)


def quad_form_rows(q: np.ndarray, var: ComplexVar) -> list[LinExpr]:
    """Rows whose squared sum equals ``x^H Q x`` for Hermitian PSD Q."""
    r = hermitian_sqrt(q)
    rows: list[LinExpr] = []
    for j in range(r.shape[0]):
        c = r[j].conj()  # row j of R applied to x is c^H x
        rows.append(re_inner(c, var))
        rows.append(im_inner(c, var))
    return rows


def stack_complex(z: np.ndarray) -> np.ndarray:
    """Embed a complex array as the real vector [Re(z); Im(z)]."""
    z = np.asarray(z)
    return np.concatenate([z.real.ravel(), z.imag.ravel()])


def unstack_complex(x: np.ndarray, shape) -> np.ndarray:
    """Inverse of :func:`stack_complex`."""
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    n = int(np.prod(shape))
    return x[:n].reshape(shape) + 1j * x[n : 2 * n].reshape(shape)
