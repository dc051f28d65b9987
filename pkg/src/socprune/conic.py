"""Cone-program data model, builders, and plain-text serialization.

A ConeProgram is a linear objective over affine equalities and a partition
of the variables into nonnegative-orthant, quadratic (second-order), and
rotated quadratic cones, plus free variables.  The main builder turns a
QuadraticSurrogate into the sparse L1-regularized pruning program: the
quadratic objective term becomes a single epigraph cone through its
Cholesky factor, and each weight gets a 2-dimensional absolute-value cone
feeding a budget variable.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import (
    DomainError,
    MalformedProgram,
    NotPositiveDefinite,
    ParseError,
    ShapeMismatch,
    VersionMismatch,
)
from .loss import QuadraticSurrogate

NONNEG_ORTHANT = "nonneg_orthant"
QUADRATIC = "quadratic"
ROTATED_QUADRATIC = "rotated_quadratic"
CONE_KINDS = (NONNEG_ORTHANT, QUADRATIC, ROTATED_QUADRATIC)

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_MAX_ITERS = "max_iters"
STATUS_NUMERICAL = "numerical"
SOLVE_STATUSES = (
    STATUS_OPTIMAL,
    STATUS_INFEASIBLE,
    STATUS_UNBOUNDED,
    STATUS_MAX_ITERS,
    STATUS_NUMERICAL,
)

FORMAT_NAME = "socprune-cone-program"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Cone:
    """One cone membership over an ordered subset of program variables.

    For ``quadratic`` the first listed variable is the head t0 and
    membership means ``||tail||_2 <= t0``.  For ``rotated_quadratic`` the
    first two are the heads and membership means ``2 x0 x1 >= ||tail||^2``
    with ``x0, x1 >= 0``.
    """

    kind: str
    var_indices: tuple

    def __post_init__(self):
        if self.kind not in CONE_KINDS:
            raise MalformedProgram(f"unknown cone kind {self.kind!r}")
        idx = tuple(int(i) for i in self.var_indices)
        object.__setattr__(self, "var_indices", idx)
        if len(idx) == 0:
            raise MalformedProgram("cone has no variables")
        if len(set(idx)) != len(idx):
            raise MalformedProgram("cone lists a variable twice")
        if any(i < 0 for i in idx):
            raise MalformedProgram("negative variable index in cone")
        if self.kind == ROTATED_QUADRATIC and len(idx) < 3:
            raise MalformedProgram("rotated quadratic cone needs dim >= 3")

    @property
    def dim(self) -> int:
        return len(self.var_indices)


@dataclass(eq=False)
class ConeProgram:
    """min objective @ x  subject to  eq_A @ x = eq_b  and cone memberships.

    Every variable belongs to exactly one cone or to ``free_vars``.
    Immutable after construction.
    """

    num_vars: int
    objective: np.ndarray
    eq_A: sp.csr_matrix
    eq_b: np.ndarray
    cones: tuple
    free_vars: tuple

    def __post_init__(self):
        n = int(self.num_vars)
        if n <= 0:
            raise MalformedProgram("program needs at least one variable")
        obj = np.ascontiguousarray(np.asarray(self.objective, dtype=np.float64))
        if obj.shape != (n,):
            raise MalformedProgram(f"objective has shape {obj.shape}, expected ({n},)")
        A = sp.csr_matrix(self.eq_A, dtype=np.float64)
        if A.shape[1] != n:
            raise MalformedProgram(
                f"equality matrix has {A.shape[1]} columns, expected {n}"
            )
        b = np.ascontiguousarray(np.asarray(self.eq_b, dtype=np.float64))
        if b.shape != (A.shape[0],):
            raise MalformedProgram(f"rhs has shape {b.shape}, expected ({A.shape[0]},)")
        if not (np.all(np.isfinite(obj)) and np.all(np.isfinite(b)) and np.all(np.isfinite(A.data))):
            raise MalformedProgram("program data contains non-finite entries")
        cones = tuple(self.cones)
        free = tuple(int(i) for i in self.free_vars)
        seen = np.zeros(n, dtype=np.int64)
        for cone in cones:
            if not isinstance(cone, Cone):
                raise MalformedProgram("cones must be Cone instances")
            for i in cone.var_indices:
                if i >= n:
                    raise MalformedProgram(f"cone index {i} out of range")
                seen[i] += 1
        for i in free:
            if not 0 <= i < n:
                raise MalformedProgram(f"free index {i} out of range")
            seen[i] += 1
        if np.any(seen != 1):
            bad = int(np.argmax(seen != 1))
            raise MalformedProgram(
                f"variable {bad} appears in {seen[bad]} cones/free sets, expected exactly 1"
            )
        obj.setflags(write=False)
        b.setflags(write=False)
        A.data.setflags(write=False)
        self.num_vars = n
        self.objective = obj
        self.eq_A = A
        self.eq_b = b
        self.cones = cones
        self.free_vars = free

    @property
    def num_eqs(self) -> int:
        return self.eq_A.shape[0]


@dataclass(eq=False)
class ConicSolution:
    """Solver output: primal x, equality duals y, cone duals s, and quality stats."""

    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    status: str
    iterations: int
    gap: float
    primal_residual: float
    dual_residual: float

    def __post_init__(self):
        if self.status not in SOLVE_STATUSES:
            raise DomainError(f"unknown solver status {self.status!r}")


def cone_margin(kind: str, values) -> float:
    """Smallest membership slack of a value vector; >= 0 iff inside the cone.

    Debugging helper; the slacks mix scales (linear for heads, quadratic for
    the rotated product), so only the sign is meaningful.
    """
    v = np.asarray(values, dtype=np.float64)
    if kind == NONNEG_ORTHANT:
        return float(v.min())
    if kind == QUADRATIC:
        return float(v[0] - np.linalg.norm(v[1:]))
    if kind == ROTATED_QUADRATIC:
        return float(min(v[0], v[1], 2.0 * v[0] * v[1] - v[2:] @ v[2:]))
    raise MalformedProgram(f"unknown cone kind {kind!r}")


def cholesky_lower(Q, ridge: float = 0.0) -> np.ndarray:
    """Lower-triangular L with (Q + ridge*I) = L @ L.T and positive diagonal.

    Q must be symmetric to about 1e-10 (relative).  Raises
    NotPositiveDefinite when the shifted matrix has a nonpositive pivot.
    """
    Q = np.asarray(Q, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got shape {Q.shape}")
    if not np.all(np.isfinite(Q)):
        raise DomainError("matrix contains non-finite entries")
    scale = max(1.0, float(np.linalg.norm(Q)))
    if np.abs(Q - Q.T).max(initial=0.0) > 1e-10 * scale:
        raise DomainError("matrix is not symmetric to 1e-10")
    if ridge < 0:
        raise DomainError("ridge must be nonnegative")
    shifted = Q + ridge * np.eye(Q.shape[0])
    try:
        return scipy.linalg.cholesky(shifted, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def epigraph_vector(root, x, t: float) -> np.ndarray:
    """Cone vector (1 + t, 2 R x, 1 - t) for the epigraph of x' (R'R) x.

    ``root`` is any matrix R with R.T @ R equal to the quadratic-form
    matrix; membership in the quadratic cone is equivalent to
    t >= x' (R'R) x, since (1+t)^2 - (1-t)^2 = 4t.
    """
    root = np.asarray(root, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    return np.concatenate(([1.0 + t], 2.0 * (root @ x), [1.0 - t]))


class ProgramBuilder:
    """Incremental ConeProgram assembly: variables, triplet equalities, cones."""

    def __init__(self):
        self._num_vars = 0
        self._obj = {}
        self._entry_rows = []
        self._entry_cols = []
        self._entry_vals = []
        self._rhs = []
        self._cones = []
        self._free = []

    def add_variables(self, count: int) -> np.ndarray:
        if count < 0:
            raise MalformedProgram("variable count must be nonnegative")
        start = self._num_vars
        self._num_vars += int(count)
        return np.arange(start, self._num_vars)

    def add_variable(self) -> int:
        return int(self.add_variables(1)[0])

    def set_objective(self, index: int, coeff: float):
        self._obj[int(index)] = float(coeff)

    def add_equality(self, cols, vals, rhs: float):
        cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
        vals = np.atleast_1d(np.asarray(vals, dtype=np.float64))
        if cols.shape != vals.shape:
            raise ShapeMismatch("equality columns and values differ in length")
        row = len(self._rhs)
        self._entry_rows.extend([row] * len(cols))
        self._entry_cols.extend(int(c) for c in cols)
        self._entry_vals.extend(float(v) for v in vals)
        self._rhs.append(float(rhs))
        return row

    def add_cone(self, kind: str, indices):
        self._cones.append(Cone(kind=kind, var_indices=tuple(int(i) for i in np.atleast_1d(indices))))

    def mark_free(self, indices):
        self._free.extend(int(i) for i in np.atleast_1d(indices))

    def build(self) -> ConeProgram:
        n = self._num_vars
        objective = np.zeros(n)
        for i, v in self._obj.items():
            objective[i] = v
        eq_A = sp.coo_matrix(
            (self._entry_vals, (self._entry_rows, self._entry_cols)),
            shape=(len(self._rhs), n),
        ).tocsr()
        return ConeProgram(
            num_vars=n,
            objective=objective,
            eq_A=eq_A,
            eq_b=np.asarray(self._rhs, dtype=np.float64),
            cones=tuple(self._cones),
            free_vars=tuple(self._free),
        )


@dataclass(frozen=True)
class VariableMap:
    """Where the pruning program's named quantities live in the variable array."""

    x_indices: tuple
    t_index: int
    u_abs_indices: tuple
    u_index: int
    cone_aux_indices: tuple
    simplex_slack_indices: tuple | None = None


def build_pruning_socp(
    surrogate: QuadraticSurrogate,
    alpha: float,
    lam: float,
    simplex: bool = False,
):
    """Sparse pruning program for a quadratic surrogate at trade-off alpha.

    Minimizes ``alpha*t + (alpha*lin_accuracy + (1-alpha)*lin_diversity) @ x
    + lam*u`` subject to: t >= x' (quad + ridge*I) x (epigraph cone through
    the Cholesky factor), |x_i| <= u_abs_i (2-dim cones), sum(u_abs) = u,
    and t, u >= 0.  With ``simplex=True`` adds x >= 0 (via orthant slacks)
    and sum(x) = 1.  Returns (program, variable map).
    """
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    if lam < 0.0:
        raise DomainError(f"lambda must be nonnegative, got {lam}")
    m = surrogate.num_models
    root = cholesky_lower(surrogate.quad, surrogate.ridge).T
    c_all = surrogate.combined_linear(alpha)

    builder = ProgramBuilder()
    x = builder.add_variables(m)
    t = builder.add_variable()
    u_abs = builder.add_variables(m)
    u = builder.add_variable()
    aux = builder.add_variables(m + 2)

    for i in range(m):
        builder.set_objective(x[i], c_all[i])
    builder.set_objective(t, alpha)
    builder.set_objective(u, lam)

    # aux = (1 + t, 2 R x, 1 - t)
    builder.add_equality([aux[0], t], [1.0, -1.0], 1.0)
    for r in range(m):
        cols = [aux[1 + r]] + [x[k] for k in range(r, m)]
        vals = [1.0] + [-2.0 * root[r, k] for k in range(r, m)]
        builder.add_equality(cols, vals, 0.0)
    builder.add_equality([aux[m + 1], t], [1.0, 1.0], 1.0)
    builder.add_equality(list(u_abs) + [u], [1.0] * m + [-1.0], 0.0)

    builder.add_cone(QUADRATIC, aux)
    for i in range(m):
        builder.add_cone(QUADRATIC, [u_abs[i], x[i]])
    orthant = [t, u]

    slack_indices = None
    if simplex:
        slacks = builder.add_variables(m)
        for i in range(m):
            builder.add_equality([slacks[i], x[i]], [1.0, -1.0], 0.0)
        builder.add_equality(list(x), [1.0] * m, 1.0)
        orthant = orthant + list(slacks)
        slack_indices = tuple(int(i) for i in slacks)
    builder.add_cone(NONNEG_ORTHANT, orthant)

    program = builder.build()
    var_map = VariableMap(
        x_indices=tuple(int(i) for i in x),
        t_index=int(t),
        u_abs_indices=tuple(int(i) for i in u_abs),
        u_index=int(u),
        cone_aux_indices=tuple(int(i) for i in aux),
        simplex_slack_indices=slack_indices,
    )
    return program, var_map


@dataclass(eq=False)
class QpConeForm:
    """Cone form of a convex QP plus the data needed to map back.

    The program minimizes the epigraph head u0 of ``||R x + v||`` with
    R'R = Q and v = (1/2) R^{-T} a; the original QP value at the optimum is
    ``u0^2 + shift`` with ``shift = beta - (1/4) a' Q^{-1} a``.
    """

    program: ConeProgram
    x_indices: tuple
    epigraph_index: int
    shift: float

    def qp_value(self, solution) -> float:
        u0 = float(np.asarray(solution.x)[self.epigraph_index])
        return u0 * u0 + self.shift

    def minimizer(self, solution) -> np.ndarray:
        return np.asarray(solution.x)[list(self.x_indices)]


def qp_to_socp(Q, a, beta: float, A=None, b=None) -> QpConeForm:
    """Rewrite min x'Qx + a'x + beta s.t. Ax = b as a cone program.

    Q must be symmetric positive definite.  The returned objective is the
    scalar epigraph head; recover the QP optimum as head^2 + shift (see
    QpConeForm.qp_value).
    """
    Q = np.asarray(Q, dtype=np.float64)
    n = Q.shape[0]
    a = np.zeros(n) if a is None else np.asarray(a, dtype=np.float64)
    if a.shape != (n,):
        raise ShapeMismatch(f"linear term has shape {a.shape}, expected ({n},)")
    L = cholesky_lower(Q, 0.0)
    root = L.T
    v = scipy.linalg.solve_triangular(L, 0.5 * a, lower=True)
    shift = float(beta) - float(v @ v)

    if A is None:
        A = np.zeros((0, n))
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[1] != n:
        raise ShapeMismatch(f"constraint matrix has shape {A.shape}, expected (*, {n})")
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=np.float64)
    if b.shape != (A.shape[0],):
        raise ShapeMismatch(f"rhs has shape {b.shape}, expected ({A.shape[0]},)")

    builder = ProgramBuilder()
    x = builder.add_variables(n)
    head = builder.add_variable()
    tail = builder.add_variables(n)
    builder.mark_free(x)
    builder.set_objective(head, 1.0)
    # R x - tail = -v, so tail = R x + v and ||tail|| <= head.
    for r in range(n):
        cols = [int(tail[r])] + [int(x[k]) for k in range(r, n)]
        vals = [-1.0] + [root[r, k] for k in range(r, n)]
        builder.add_equality(cols, vals, -v[r])
    for r in range(A.shape[0]):
        nz = np.nonzero(A[r])[0]
        if nz.size == 0 and b[r] == 0.0:
            continue
        builder.add_equality([int(x[k]) for k in nz] if nz.size else [int(x[0])],
                             [A[r, k] for k in nz] if nz.size else [0.0],
                             b[r])
    builder.add_cone(QUADRATIC, [head] + list(tail))
    return QpConeForm(
        program=builder.build(),
        x_indices=tuple(int(i) for i in x),
        epigraph_index=int(head),
        shift=shift,
    )


@dataclass(eq=False)
class QuadConstraintFragment:
    """Cone + affine rows encoding x' B'B x + a'x + beta <= 0.

    ``entries`` are (row, col, value) triplets over the caller's variable
    numbering; rows 0..k+1 define the auxiliary variables:
    row 0:      u0 + (a/2)'x            = (1 - beta)/2
    rows 1..k:  ubar_r - (B x)_r        = 0
    row k+1:    ubar_k - (a/2)'x        = (beta + 1)/2
    with cone membership ||ubar|| <= u0.
    """

    cone: Cone
    entries: tuple
    rhs: tuple
    aux_indices: tuple
    _B: np.ndarray
    _a: np.ndarray
    _beta: float

    def evaluate(self, x):
        """Auxiliary values (u0, ubar) implied by the affine rows at x."""
        x = np.asarray(x, dtype=np.float64)
        s = float(self._a @ x) + self._beta
        u0 = 0.5 * (1.0 - s)
        ubar = np.concatenate((self._B @ x, [0.5 * (s + 1.0)]))
        return u0, ubar


def quad_constraint_to_cone(B, a, beta: float, x_indices=None, aux_start=None) -> QuadConstraintFragment:
    """Cone encoding of the convex quadratic constraint x'B'Bx + a'x + beta <= 0.

    With s = a'x + beta, membership of (u0, ubar) = ((1-s)/2, (Bx, (s+1)/2))
    in the quadratic cone is equivalent to the constraint, since
    u0^2 - ||ubar||^2 = -s - ||Bx||^2.  Returns the affine rows that define
    the k+2 auxiliary variables and the cone over them.
    """
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    k, n = B.shape
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (n,):
        raise ShapeMismatch(f"linear term has shape {a.shape}, expected ({n},)")
    if x_indices is None:
        x_indices = tuple(range(n))
    x_indices = tuple(int(i) for i in x_indices)
    if len(x_indices) != n:
        raise ShapeMismatch("x_indices length does not match B's column count")
    if aux_start is None:
        aux_start = max(x_indices) + 1
    aux = tuple(range(int(aux_start), int(aux_start) + k + 2))

    entries = []
    rhs = []
    entries.append((0, aux[0], 1.0))
    for j, xi in enumerate(x_indices):
        if a[j] != 0.0:
            entries.append((0, xi, 0.5 * a[j]))
    rhs.append(0.5 * (1.0 - beta))
    for r in range(k):
        entries.append((1 + r, aux[1 + r], 1.0))
        for j, xi in enumerate(x_indices):
            if B[r, j] != 0.0:
                entries.append((1 + r, xi, -B[r, j]))
        rhs.append(0.0)
    entries.append((k + 1, aux[k + 1], 1.0))
    for j, xi in enumerate(x_indices):
        if a[j] != 0.0:
            entries.append((k + 1, xi, -0.5 * a[j]))
    rhs.append(0.5 * (beta + 1.0))

    return QuadConstraintFragment(
        cone=Cone(kind=QUADRATIC, var_indices=aux),
        entries=tuple(entries),
        rhs=tuple(rhs),
        aux_indices=aux,
        _B=B,
        _a=a,
        _beta=float(beta),
    )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def serialize_cone_program(p: ConeProgram) -> str:
    """Versioned newline-delimited text form; round-trips to 1e-12."""
    lines = [f"{FORMAT_NAME} {FORMAT_VERSION}"]
    lines.append(f"vars {p.num_vars}")
    lines.append(f"eqs {p.num_eqs}")
    nz = np.nonzero(p.objective)[0]
    lines.append(f"objective {len(nz)}")
    for i in nz:
        lines.append(f"{i} {_fmt(p.objective[i])}")
    coo = p.eq_A.tocoo()
    lines.append(f"eq_entries {coo.nnz}")
    for r, c, v in zip(coo.row, coo.col, coo.data):
        lines.append(f"{r} {c} {_fmt(v)}")
    lines.append(f"eq_rhs {p.num_eqs}")
    for v in p.eq_b:
        lines.append(_fmt(v))
    lines.append(f"cones {len(p.cones)}")
    for cone in p.cones:
        lines.append(" ".join([cone.kind, str(cone.dim)] + [str(i) for i in cone.var_indices]))
    lines.append(f"free {len(p.free_vars)}")
    for i in p.free_vars:
        lines.append(str(i))
    lines.append("end")
    return "\n".join(lines) + "\n"


class _LineReader:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self) -> tuple:
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line:
                return line, self.pos
        raise ParseError("unexpected end of input", line=len(self.lines))

    def expect_header(self, keyword: str) -> tuple:
        line, lineno = self.next()
        tokens = line.split()
        if tokens[0] != keyword:
            raise ParseError(f"expected {keyword!r}, got {tokens[0]!r}", line=lineno)
        return tokens, lineno


def _parse_int(token: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"expected an integer, got {token!r}", line=lineno) from None


def _parse_float(token: str, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"expected a number, got {token!r}", line=lineno) from None


def parse_cone_program(text: str) -> ConeProgram:
    """Inverse of serialize_cone_program; raises ParseError with line numbers."""
    reader = _LineReader(text)
    line, lineno = reader.next()
    tokens = line.split()
    if tokens[0] != FORMAT_NAME:
        raise ParseError(f"not a {FORMAT_NAME} file", line=lineno)
    if len(tokens) != 2 or _parse_int(tokens[1], lineno) != FORMAT_VERSION:
        raise VersionMismatch(
            f"unsupported format version {tokens[1:]}; this reader handles {FORMAT_VERSION}",
            line=lineno,
        )
    tokens, lineno = reader.expect_header("vars")
    num_vars = _parse_int(tokens[1], lineno)
    tokens, lineno = reader.expect_header("eqs")
    num_eqs = _parse_int(tokens[1], lineno)

    tokens, lineno = reader.expect_header("objective")
    objective = np.zeros(num_vars)
    for _ in range(_parse_int(tokens[1], lineno)):
        line, lineno = reader.next()
        parts = line.split()
        if len(parts) != 2:
            raise ParseError("objective entry needs 'index value'", line=lineno)
        i = _parse_int(parts[0], lineno)
        if not 0 <= i < num_vars:
            raise ParseError(f"objective index {i} out of range", line=lineno)
        objective[i] = _parse_float(parts[1], lineno)

    tokens, lineno = reader.expect_header("eq_entries")
    rows, cols, vals = [], [], []
    for _ in range(_parse_int(tokens[1], lineno)):
        line, lineno = reader.next()
        parts = line.split()
        if len(parts) != 3:
            raise ParseError("equality entry needs 'row col value'", line=lineno)
        r = _parse_int(parts[0], lineno)
        c = _parse_int(parts[1], lineno)
        if not 0 <= r < num_eqs:
            raise ParseError(f"equality row {r} out of range", line=lineno)
        if not 0 <= c < num_vars:
            raise ParseError(f"equality column {c} out of range", line=lineno)
        rows.append(r)
        cols.append(c)
        vals.append(_parse_float(parts[2], lineno))

    tokens, lineno = reader.expect_header("eq_rhs")
    if _parse_int(tokens[1], lineno) != num_eqs:
        raise ParseError("eq_rhs count disagrees with eqs header", line=lineno)
    rhs = np.zeros(num_eqs)
    for r in range(num_eqs):
        line, lineno = reader.next()
        rhs[r] = _parse_float(line.split()[0], lineno)

    tokens, lineno = reader.expect_header("cones")
    cones = []
    for _ in range(_parse_int(tokens[1], lineno)):
        line, lineno = reader.next()
        parts = line.split()
        if len(parts) < 3:
            raise ParseError("cone line needs 'kind dim indices...'", line=lineno)
        kind = parts[0]
        if kind not in CONE_KINDS:
            raise ParseError(f"unknown cone kind {kind!r}", line=lineno)
        dim = _parse_int(parts[1], lineno)
        idx = [_parse_int(tok, lineno) for tok in parts[2:]]
        if len(idx) != dim:
            raise ParseError(f"cone lists {len(idx)} indices but dim {dim}", line=lineno)
        cones.append(Cone(kind=kind, var_indices=tuple(idx)))

    tokens, lineno = reader.expect_header("free")
    free = []
    for _ in range(_parse_int(tokens[1], lineno)):
        line, lineno = reader.next()
        free.append(_parse_int(line.split()[0], lineno))

    line, lineno = reader.next()
    if line != "end":
        raise ParseError(f"expected 'end', got {line!r}", line=lineno)

    try:
        return ConeProgram(
            num_vars=num_vars,
            objective=objective,
            eq_A=sp.coo_matrix((vals, (rows, cols)), shape=(num_eqs, num_vars)).tocsr(),
            eq_b=rhs,
            cones=tuple(cones),
            free_vars=tuple(free),
        )
    except MalformedProgram as exc:
        raise ParseError(f"structurally invalid program: {exc}", line=lineno) from None


def write_cone_program(p: ConeProgram, path):
    """Atomic write of the text form (temp file + rename)."""
    path = os.fspath(path)
    text = serialize_cone_program(p)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)) or ".",
                               prefix=".tmp-cone-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_cone_program(path) -> ConeProgram:
    with open(os.fspath(path), "r") as fh:
        return parse_cone_program(fh.read())
