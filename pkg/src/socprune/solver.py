"""Primal-dual path-following interior-point solver for ConeProgram instances.

Handles nonnegative-orthant, quadratic, and rotated quadratic cones plus
free variables.  The algorithm is a Nesterov-Todd scaled Mehrotra
predictor-corrector: at each iteration the scaled complementarity system is
reduced to a quasi-definite KKT solve (dense LDL' with static
regularization and iterative refinement), and a single step length is
taken along the combined primal-dual direction.  Rotated cones are mapped
to standard quadratic cones up front by the involutive orthogonal
transform (x1, x2, rest) -> ((x1+x2)/sqrt2, (x1-x2)/sqrt2, rest).  A
terminal active-set polish sharpens the returned point when it can verify
an improvement.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .conic import (
    NONNEG_ORTHANT,
    QUADRATIC,
    ROTATED_QUADRATIC,
    STATUS_INFEASIBLE,
    STATUS_MAX_ITERS,
    STATUS_NUMERICAL,
    STATUS_OPTIMAL,
    STATUS_UNBOUNDED,
    ConeProgram,
    ConicSolution,
)
from .errors import DomainError, MalformedProgram, ShapeMismatch

_STALL_WINDOW = 10
_STALL_PROGRESS = 1e-3
_CERT_TOL = 1e-6


@dataclass(frozen=True)
class SolverSettings:
    """Termination tolerances and step-control knobs."""

    tol_gap: float = 1e-8
    tol_primal: float = 1e-8
    tol_dual: float = 1e-8
    max_iters: int = 100
    step_fraction: float = 0.99
    regularization: float = 1e-9
    verbose: bool = False

    def __post_init__(self):
        if min(self.tol_gap, self.tol_primal, self.tol_dual) <= 0:
            raise DomainError("tolerances must be positive")
        if self.max_iters < 1:
            raise DomainError("max_iters must be at least 1")
        if not 0.0 < self.step_fraction < 1.0:
            raise DomainError("step_fraction must lie in (0, 1)")
        if self.regularization < 0:
            raise DomainError("regularization must be nonnegative")


def _inf_norm(v) -> float:
    return float(np.abs(v).max(initial=0.0))


class _Structure:
    """Index bookkeeping after rotating away rotated cones.

    dim-1 quadratic cones are folded into the orthant coordinates, and
    dim-2 quadratic cones are polyhedral (u >= |x| is the pair of
    halfplanes u+x >= 0, u-x >= 0), so they are rotated into two orthant
    coordinates; this keeps the scaling well conditioned when such a cone
    is active at the optimum.  Rotated cones of dim >= 3 become standard
    quadratic cones under the same involutive transform.
    """

    def __init__(self, program: ConeProgram):
        orth = []
        socs = []
        rot_pairs = []
        for cone in program.cones:
            idx = np.asarray(cone.var_indices, dtype=np.int64)
            if cone.kind == NONNEG_ORTHANT:
                orth.extend(idx)
            elif cone.kind == QUADRATIC:
                if idx.size == 1:
                    orth.extend(idx)
                elif idx.size == 2:
                    rot_pairs.append((int(idx[0]), int(idx[1])))
                    orth.extend(idx)
                else:
                    socs.append(idx)
            elif cone.kind == ROTATED_QUADRATIC:
                rot_pairs.append((int(idx[0]), int(idx[1])))
                socs.append(idx)
            else:  # pragma: no cover - Cone validates kinds
                raise MalformedProgram(f"unknown cone kind {cone.kind!r}")
        self.orth = np.asarray(sorted(orth), dtype=np.int64)
        self.socs = socs
        self.rot_pairs = rot_pairs
        self.free = np.asarray(sorted(program.free_vars), dtype=np.int64)
        self.degree = len(self.orth) + len(self.socs)


def _rotate_vector(v: np.ndarray, rot_pairs) -> None:
    """In-place involutive mixing of rotated-cone head pairs."""
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for i, j in rot_pairs:
        a, bb = v[i], v[j]
        v[i] = (a + bb) * inv_sqrt2
        v[j] = (a - bb) * inv_sqrt2


def _rotate_columns(A: np.ndarray, rot_pairs) -> None:
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for i, j in rot_pairs:
        a = A[:, i].copy()
        bb = A[:, j].copy()
        A[:, i] = (a + bb) * inv_sqrt2
        A[:, j] = (a - bb) * inv_sqrt2


class _SocScale:
    """Nesterov-Todd scaling data for one quadratic-cone block."""

    __slots__ = ("idx", "eta", "wbar", "q", "lam")

    def __init__(self, idx, x, s):
        rho_x2 = x[0] * x[0] - x[1:] @ x[1:]
        rho_s2 = s[0] * s[0] - s[1:] @ s[1:]
        if x[0] <= 0 or s[0] <= 0 or rho_x2 <= 0 or rho_s2 <= 0:
            raise FloatingPointError("iterate left the cone interior")
        rho_x = np.sqrt(rho_x2)
        rho_s = np.sqrt(rho_s2)
        xb = x / rho_x
        sb = s / rho_s
        gamma = np.sqrt((1.0 + xb @ sb) / 2.0)
        wbar = np.empty_like(xb)
        wbar[0] = (xb[0] + sb[0]) / (2.0 * gamma)
        wbar[1:] = (xb[1:] - sb[1:]) / (2.0 * gamma)
        self.idx = idx
        self.eta = np.sqrt(rho_x / rho_s)
        self.wbar = wbar
        q = wbar.copy()
        q[1:] = -q[1:]
        self.q = q
        self.lam = self.mul_winv(x)

    def mul_w(self, z: np.ndarray) -> np.ndarray:
        w0 = self.wbar[0]
        w1 = self.wbar[1:]
        dot = w1 @ z[1:]
        out = np.empty_like(z)
        out[0] = w0 * z[0] + dot
        out[1:] = z[1:] + (z[0] + dot / (1.0 + w0)) * w1
        return self.eta * out

    def mul_winv(self, z: np.ndarray) -> np.ndarray:
        w0 = self.wbar[0]
        w1 = self.wbar[1:]
        dot = w1 @ z[1:]
        out = np.empty_like(z)
        out[0] = w0 * z[0] - dot
        out[1:] = z[1:] + (-z[0] + dot / (1.0 + w0)) * w1
        return out / self.eta

    def hessian(self) -> np.ndarray:
        k = self.idx.size
        J = -np.eye(k)
        J[0, 0] = 1.0
        return (2.0 * np.outer(self.q, self.q) - J) / (self.eta * self.eta)


def _arrow_solve(lam: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Solve L_lam g = d where L_lam is the arrow matrix of lam."""
    det = lam[0] * lam[0] - lam[1:] @ lam[1:]
    out = np.empty_like(d)
    out[0] = (lam[0] * d[0] - lam[1:] @ d[1:]) / det
    out[1:] = (d[1:] - out[0] * lam[1:]) / lam[0]
    return out


def _jordan(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    out[0] = u @ v
    out[1:] = u[0] * v[1:] + v[0] * u[1:]
    return out


def _smallest_positive_root(a: float, b: float, c: float) -> float:
    """Smallest positive root of a t^2 + b t + c with c > 0, else +inf."""
    if a == 0.0:
        return -c / b if b < 0 else np.inf
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return np.inf
    sq = np.sqrt(disc)
    q = -0.5 * (b + sq) if b >= 0 else -0.5 * (b - sq)
    roots = [q / a]
    if q != 0.0:
        roots.append(c / q)
    positive = [r for r in roots if r > 0.0]
    return min(positive) if positive else np.inf


def _max_step(z: np.ndarray, dz: np.ndarray, structure: _Structure) -> float:
    """Largest step with z + alpha*dz still in the cone (boundary step)."""
    alpha = np.inf
    if structure.orth.size:
        zo = z[structure.orth]
        dzo = dz[structure.orth]
        neg = dzo < 0
        if neg.any():
            alpha = min(alpha, float(np.min(-zo[neg] / dzo[neg])))
    for idx in structure.socs:
        zb = z[idx]
        db = dz[idx]
        a = db[0] * db[0] - db[1:] @ db[1:]
        b = 2.0 * (zb[0] * db[0] - zb[1:] @ db[1:])
        c = zb[0] * zb[0] - zb[1:] @ zb[1:]
        alpha = min(alpha, _smallest_positive_root(float(a), float(b), float(c)))
    return alpha


class _KktSolver:
    """Dense LDL' of the regularized KKT matrix with iterative refinement."""

    def __init__(self, H: np.ndarray, A: np.ndarray, regularization: float):
        n = H.shape[0]
        m = A.shape[0]
        self.n = n
        self.m = m
        K = np.zeros((n + m, n + m))
        K[:n, :n] = -H
        K[:n, n:] = A.T
        K[n:, :n] = A
        self.K_exact = K
        # residuals for iterative refinement are accumulated in extended
        # precision; the factorization itself stays in double
        self.K_long = K.astype(np.longdouble)
        K_reg = K.copy()
        K_reg[np.arange(n), np.arange(n)] -= regularization
        K_reg[np.arange(n, n + m), np.arange(n, n + m)] += regularization
        lu, d, perm = scipy.linalg.ldl(K_reg)
        self.lower = lu[perm]
        self.perm = perm
        nm = n + m
        ab = np.zeros((3, nm))
        ab[1] = np.diag(d)
        if nm > 1:
            ab[0, 1:] = np.diag(d, 1)
            ab[2, :-1] = np.diag(d, -1)
        self.bands = ab

    def _solve_factored(self, rhs: np.ndarray) -> np.ndarray:
        u = rhs[self.perm]
        v = scipy.linalg.solve_triangular(self.lower, u, lower=True, unit_diagonal=True)
        w = scipy.linalg.solve_banded((1, 1), self.bands, v)
        t = scipy.linalg.solve_triangular(self.lower.T, w, lower=False, unit_diagonal=True)
        out = np.empty_like(t)
        out[self.perm] = t
        return out

    def solve(self, rhs_x: np.ndarray, rhs_y: np.ndarray):
        rhs = np.concatenate((rhs_x, rhs_y))
        z = self._solve_factored(rhs)
        # refine against the unregularized matrix; extra passes matter once
        # the barrier parameter drops below the first pass's solve error
        rhs_long = rhs.astype(np.longdouble)
        best_norm = np.inf
        for _ in range(3):
            residual = (rhs_long - self.K_long @ z.astype(np.longdouble)).astype(np.float64)
            norm = _inf_norm(residual)
            if not np.isfinite(norm) or norm >= 0.5 * best_norm:
                break
            best_norm = norm
            z = z + self._solve_factored(residual)
        return z[: self.n], z[self.n :]


def _scaling_apply(structure, soc_scales, orth_vals, z, func_orth, with_eta):
    """Shared helper for blockwise W / W^-1 products (orthant part diagonal)."""
    out = np.zeros_like(z)
    if structure.orth.size:
        out[structure.orth] = func_orth(z[structure.orth], orth_vals)
    for sc in soc_scales:
        out[sc.idx] = with_eta(sc, z[sc.idx])
    return out


# Path-following alone leaves an O(sqrt(gap)) error in the primal point when a
# quadratic cone is active at the optimum: ray misalignment enters the
# complementarity products only quadratically, so the products cannot see it.
# A terminal active-set polish removes that error.  The polished point is
# adopted only when it strictly improves the residual merit and stays inside
# the cones, so a wrong active-set guess degrades nothing.
_POLISH_INTERIOR = 1e-2
_POLISH_FEAS_TOL = 1e-9


def _polish(structure, A, b, c, x, y, s):
    """Newton solve of the reduced KKT system for the guessed active set.

    Works in the rotated variable space.  Returns (x, y, s) or None when the
    construction fails; the caller decides acceptance by recomputed merit.
    """
    n = c.size
    m = A.shape[0]
    pinned = []
    dual_zero = list(structure.free)
    ray_blocks = []
    for i in structure.orth:
        if x[i] <= s[i]:
            pinned.append(int(i))
        else:
            dual_zero.append(int(i))
    for idx in structure.socs:
        xb = x[idx]
        sb = s[idx]
        nx2 = float(xb @ xb)
        ns2 = float(sb @ sb)
        bx = (2.0 * xb[0] * xb[0] - nx2) / max(nx2, 1e-300)
        bs = (2.0 * sb[0] * sb[0] - ns2) / max(ns2, 1e-300)
        if bx >= _POLISH_INTERIOR:
            dual_zero.extend(int(i) for i in idx)
        elif bs >= _POLISH_INTERIOR:
            pinned.extend(int(i) for i in idx)
        else:
            ray_blocks.append(idx)
    pinned_mask = np.zeros(n, dtype=bool)
    pinned_mask[pinned] = True
    unpin = np.nonzero(~pinned_mask)[0]
    p = unpin.size
    r = len(ray_blocks)
    col_of = np.full(n, -1, dtype=np.int64)
    col_of[unpin] = np.arange(p)

    theta0 = np.empty(r)
    for bi, idx in enumerate(ray_blocks):
        nx = float(np.linalg.norm(x[idx]))
        theta0[bi] = float(np.linalg.norm(s[idx])) / max(nx, 1e-300)
    v = np.concatenate((x[unpin], y, theta0))
    n_eq = m + len(dual_zero) + sum(idx.size for idx in ray_blocks) + r
    A_unpin = A[:, unpin]

    def residual_and_jacobian(v):
        xf = np.zeros(n)
        xf[unpin] = v[:p]
        yv = v[p:p + m]
        th = v[p + m:]
        F = np.zeros(n_eq)
        J = np.zeros((n_eq, p + m + r))
        F[:m] = A_unpin @ v[:p] - b
        J[:m, :p] = A_unpin
        row = m
        for i in dual_zero:
            F[row] = c[i] - A[:, i] @ yv
            J[row, p:p + m] = -A[:, i]
            row += 1
        for bi, idx in enumerate(ray_blocks):
            kb = idx.size
            jx = xf[idx].copy()
            jx[1:] = -jx[1:]
            F[row:row + kb] = c[idx] - A[:, idx].T @ yv - th[bi] * jx
            J[row:row + kb, p:p + m] = -A[:, idx].T
            sign = np.ones(kb)
            sign[1:] = -1.0
            for j, i in enumerate(idx):
                J[row + j, col_of[i]] = -th[bi] * sign[j]
            J[row:row + kb, p + m + bi] = -jx
            row += kb
        for bi, idx in enumerate(ray_blocks):
            xb = xf[idx]
            F[row] = 0.5 * (xb[0] * xb[0] - xb[1:] @ xb[1:])
            J[row, col_of[idx[0]]] = xb[0]
            for i in idx[1:]:
                J[row, col_of[i]] = -xf[i]
            row += 1
        return F, J, xf, yv, th

    best = None
    for _ in range(4):
        F, J, xf, yv, th = residual_and_jacobian(v)
        norm = _inf_norm(F)
        if not np.isfinite(norm):
            break
        if best is None or norm < best[0]:
            best = (norm, xf, yv, th)
        if norm < 1e-14 * (1.0 + _inf_norm(c)):
            break
        try:
            dv, *_ = np.linalg.lstsq(J, -F, rcond=None)
        except np.linalg.LinAlgError:
            break
        v = v + dv
    if best is None:
        return None
    _, xf, yv, th = best

    s_pol = np.zeros(n)
    for i in pinned:
        s_pol[i] = c[i] - A[:, i] @ yv
    for bi, idx in enumerate(ray_blocks):
        if th[bi] < -_POLISH_FEAS_TOL:
            return None
        jx = xf[idx].copy()
        jx[1:] = -jx[1:]
        s_pol[idx] = max(th[bi], 0.0) * jx

    scale = _POLISH_FEAS_TOL * (1.0 + _inf_norm(xf) + _inf_norm(s_pol))
    if structure.orth.size:
        xo = xf[structure.orth]
        so = s_pol[structure.orth]
        if xo.min(initial=0.0) < -scale or so.min(initial=0.0) < -scale:
            return None
        xf[structure.orth] = np.maximum(xo, 0.0)
        s_pol[structure.orth] = np.maximum(so, 0.0)
    for idx in structure.socs:
        for vec in (xf[idx], s_pol[idx]):
            margin = vec[0] - np.linalg.norm(vec[1:])
            if margin < -scale:
                return None
    return xf, yv, s_pol


def solve(program: ConeProgram, settings: SolverSettings | None = None) -> ConicSolution:
    """Solve the cone program; never raises for well-formed inputs.

    Returns status ``optimal`` only when the complementarity gap and both
    residuals (recomputed in the original variable space) meet the
    configured relative tolerances.  Runs are bit-deterministic for
    identical inputs and settings.
    """
    if not isinstance(program, ConeProgram):
        raise MalformedProgram("solve expects a ConeProgram")
    if settings is None:
        settings = SolverSettings()

    n = program.num_vars
    b_full = np.asarray(program.eq_b, dtype=np.float64)
    c_orig = np.asarray(program.objective, dtype=np.float64)

    # presolve: drop all-zero equality rows; a zero row with nonzero rhs is
    # an immediate infeasibility certificate.
    row_nnz = program.eq_A.getnnz(axis=1)
    empty = np.nonzero(row_nnz == 0)[0]
    for r in empty:
        if b_full[r] != 0.0:
            y_cert = np.zeros(b_full.size)
            y_cert[r] = np.sign(b_full[r])
            return ConicSolution(
                x=np.zeros(n), y=y_cert, s=np.zeros(n),
                status=STATUS_INFEASIBLE, iterations=0,
                gap=0.0, primal_residual=np.inf, dual_residual=0.0,
            )
    keep_rows = np.nonzero(row_nnz > 0)[0]
    A = program.eq_A[keep_rows].toarray()
    b = b_full[keep_rows]
    m = A.shape[0]

    structure = _Structure(program)
    c = c_orig.copy()
    _rotate_columns(A, structure.rot_pairs)
    _rotate_vector(c, structure.rot_pairs)

    def finish(x, y, s, status, iterations):
        x = x.copy()
        s = s.copy()
        _rotate_vector(x, structure.rot_pairs)
        _rotate_vector(s, structure.rot_pairs)
        y_full = np.zeros(b_full.size)
        y_full[keep_rows] = y
        gap, pres, dres = kkt_residuals(
            program,
            ConicSolution(x=x, y=y_full, s=s, status=status, iterations=iterations,
                          gap=0.0, primal_residual=0.0, dual_residual=0.0),
        )
        return ConicSolution(x=x, y=y_full, s=s, status=status, iterations=iterations,
                             gap=gap, primal_residual=pres, dual_residual=dres)

    if structure.degree == 0:
        return _solve_equality_only(program, structure, A, b, c, keep_rows, b_full, settings)

    zeta = 1.0 + max(_inf_norm(b), _inf_norm(c))
    x = np.zeros(n)
    s = np.zeros(n)
    if structure.orth.size:
        x[structure.orth] = zeta
        s[structure.orth] = zeta
    for idx in structure.socs:
        x[idx[0]] = zeta
        s[idx[0]] = zeta
    y = np.zeros(m)

    b_scale = 1.0 + _inf_norm(b)
    c_scale = 1.0 + _inf_norm(c)
    nu = structure.degree
    merits = []
    ratios = []
    status = STATUS_MAX_ITERS
    iterations = settings.max_iters
    step = 0.0
    best_merit = np.inf
    best_point = None

    for k in range(settings.max_iters + 1):
        r_p = b - A @ x
        r_d = c - A.T @ y - s
        inner = float(x @ s)
        cx = float(c @ x)
        # report the dual residual in the original (unrotated) space
        dual_vec = r_d.copy()
        _rotate_vector(dual_vec, structure.rot_pairs)
        pres = _inf_norm(r_p) / b_scale
        dres = _inf_norm(dual_vec) / c_scale
        gap = abs(inner) / (1.0 + abs(cx))
        if settings.verbose:
            sys.stderr.write(
                f"iter={k} gap={gap:.6e} pres={pres:.6e} dres={dres:.6e} step={step:.4f}\n"
            )
        merit = max(gap / settings.tol_gap, pres / settings.tol_primal,
                    dres / settings.tol_dual)
        if merit < best_merit:
            best_merit = merit
            best_point = (x.copy(), y.copy(), s.copy(), k)
        if merit <= 1.0:
            status = STATUS_OPTIMAL
            iterations = k
            break
        if k == settings.max_iters:
            iterations = k
            break

        merits.append(merit)
        ratios.append((_inf_norm(r_p) + _inf_norm(dual_vec)) / max(inner, 1e-300))
        if len(merits) > _STALL_WINDOW:
            stalled = merits[-1] > (1.0 - _STALL_PROGRESS) * merits[-1 - _STALL_WINDOW]
            worsening = ratios[-1] > ratios[-1 - _STALL_WINDOW]
            if stalled and worsening:
                by = float(b @ y)
                if by > 1e-10 * (1.0 + _inf_norm(y)):
                    y_hat = y / by
                    s_hat = s / by
                    cert = _inf_norm(A.T @ y_hat + s_hat)
                    if cert <= _CERT_TOL * (1.0 + _inf_norm(y_hat)):
                        status = STATUS_INFEASIBLE
                        iterations = k
                        break
                if cx < -1e-10 * (1.0 + _inf_norm(x)):
                    x_hat = x / (-cx)
                    if _inf_norm(A @ x_hat) <= _CERT_TOL * (1.0 + _inf_norm(x_hat)):
                        status = STATUS_UNBOUNDED
                        iterations = k
                        break

        mu = inner / nu
        try:
            orth_w = None
            if structure.orth.size:
                xo = x[structure.orth]
                so = s[structure.orth]
                if np.any(xo <= 0) or np.any(so <= 0):
                    raise FloatingPointError("orthant iterate not interior")
                orth_w = np.sqrt(xo / so)
            soc_scales = [_SocScale(idx, x[idx], s[idx]) for idx in structure.socs]

            lam = np.zeros(n)
            if structure.orth.size:
                lam[structure.orth] = np.sqrt(x[structure.orth] * s[structure.orth])
            for sc in soc_scales:
                lam[sc.idx] = sc.lam

            H = np.zeros((n, n))
            if structure.orth.size:
                H[structure.orth, structure.orth] = s[structure.orth] / x[structure.orth]
            for sc in soc_scales:
                H[np.ix_(sc.idx, sc.idx)] = sc.hessian()

            kkt = _KktSolver(H, A, settings.regularization)
        except (FloatingPointError, scipy.linalg.LinAlgError, ZeroDivisionError):
            status = STATUS_NUMERICAL
            iterations = k
            break

        # predictor: drive the scaled complementarity to zero
        dx_aff, dy_aff = kkt.solve(r_d + s, r_p)
        ds_aff = -s - H @ dx_aff
        alpha_aff = min(
            1.0,
            _max_step(x, dx_aff, structure),
            _max_step(s, ds_aff, structure),
        )
        mu_aff = max(0.0, float((x + alpha_aff * dx_aff) @ (s + alpha_aff * ds_aff))) / nu
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3))

        # corrector: recentering plus the Mehrotra cross term in scaled space
        u = _scaling_apply(structure, soc_scales, orth_w,
                           dx_aff, lambda z, w: z / w, _SocScale.mul_winv)
        v = _scaling_apply(structure, soc_scales, orth_w,
                           ds_aff, lambda z, w: z * w, _SocScale.mul_w)
        g = np.zeros(n)
        if structure.orth.size:
            o = structure.orth
            d_o = sigma * mu - lam[o] * lam[o] - u[o] * v[o]
            g[o] = d_o / lam[o]
        for sc in soc_scales:
            d_blk = -_jordan(sc.lam, sc.lam) - _jordan(u[sc.idx], v[sc.idx])
            d_blk[0] += sigma * mu
            g[sc.idx] = _arrow_solve(sc.lam, d_blk)
        winv_g = _scaling_apply(structure, soc_scales, orth_w,
                                g, lambda z, w: z / w, _SocScale.mul_winv)

        dx, dy = kkt.solve(r_d - winv_g, r_p)
        ds = winv_g - H @ dx
        alpha_max = min(_max_step(x, dx, structure), _max_step(s, ds, structure))
        step = min(1.0, settings.step_fraction * alpha_max)

        x = x + step * dx
        y = y + step * dy
        s = s + step * ds

    if status in (STATUS_INFEASIBLE, STATUS_UNBOUNDED) or best_point is None:
        return finish(x, y, s, status, iterations)

    def merit_of(xv, yv, sv):
        dual_vec = c - A.T @ yv - sv
        _rotate_vector(dual_vec, structure.rot_pairs)
        pres = _inf_norm(b - A @ xv) / b_scale
        dres = _inf_norm(dual_vec) / c_scale
        gap = abs(float(xv @ sv)) / (1.0 + abs(float(c @ xv)))
        return max(gap / settings.tol_gap, pres / settings.tol_primal,
                   dres / settings.tol_dual)

    # return the best iterate seen; late iterations can degrade numerically
    bx, by, bs, bk = best_point
    polished = _polish(structure, A, b, c, bx, by, bs)
    if polished is not None:
        pm = merit_of(*polished)
        if np.isfinite(pm) and pm < best_merit:
            bx, by, bs = polished
            best_merit = pm
    if best_merit <= 1.0:
        status = STATUS_OPTIMAL
        iterations = max(iterations, bk)
    return finish(bx, by, bs, status, iterations)


def _solve_equality_only(program, structure, A, b, c, keep_rows, b_full, settings):
    """All-free program: one regularized KKT solve decides the status."""
    n = program.num_vars
    m = A.shape[0]
    kkt = _KktSolver(np.zeros((n, n)), A, max(settings.regularization, 1e-12))
    _, y = kkt.solve(c, b)
    # optimality for a linear objective over equalities: A'y = c and Ax = b;
    # take the least-squares primal point and the KKT dual estimate
    x_ls, *_ = np.linalg.lstsq(A, b, rcond=None) if m else (np.zeros(n),)
    pres_vec = b - A @ x_ls if m else np.zeros(0)
    dres_vec = c - A.T @ y if m else c
    pres = _inf_norm(pres_vec) / (1.0 + _inf_norm(b))
    dres = _inf_norm(dres_vec) / (1.0 + _inf_norm(c))
    if pres > settings.tol_primal:
        y_hat = pres_vec / max(float(b @ pres_vec), 1e-300)
        y_full = np.zeros(b_full.size)
        y_full[keep_rows] = y_hat
        return ConicSolution(x=np.zeros(n), y=y_full, s=np.zeros(n),
                             status=STATUS_INFEASIBLE, iterations=1,
                             gap=0.0, primal_residual=pres, dual_residual=0.0)
    if dres > settings.tol_dual:
        # c has a component outside range(A'): moving along -dres_vec is an
        # unbounded descent direction in the null space of A
        return ConicSolution(x=-dres_vec, y=np.zeros(b_full.size), s=np.zeros(n),
                             status=STATUS_UNBOUNDED, iterations=1,
                             gap=0.0, primal_residual=pres, dual_residual=dres)
    y_full = np.zeros(b_full.size)
    y_full[keep_rows] = y
    sol = ConicSolution(x=x_ls, y=y_full, s=np.zeros(n), status=STATUS_OPTIMAL,
                        iterations=1, gap=0.0, primal_residual=0.0, dual_residual=0.0)
    gap, pres2, dres2 = kkt_residuals(program, sol)
    return ConicSolution(x=x_ls, y=y_full, s=np.zeros(n), status=STATUS_OPTIMAL,
                         iterations=1, gap=gap, primal_residual=pres2, dual_residual=dres2)


def kkt_residuals(program: ConeProgram, solution: ConicSolution):
    """(gap, primal_residual, dual_residual) recomputed from scratch.

    gap  = |x's| / (1 + |c'x|)
    primal = ||A x - b||_inf / (1 + ||b||_inf)
    dual   = ||A'y + s - c||_inf / (1 + ||c||_inf)
    """
    x = np.asarray(solution.x, dtype=np.float64)
    y = np.asarray(solution.y, dtype=np.float64)
    s = np.asarray(solution.s, dtype=np.float64)
    if x.shape != (program.num_vars,) or s.shape != (program.num_vars,):
        raise ShapeMismatch("solution primal/dual cone vectors do not match the program")
    if y.shape != (program.num_eqs,):
        raise ShapeMismatch("solution equality duals do not match the program")
    A = program.eq_A
    b = program.eq_b
    c = program.objective
    pres = _inf_norm(A @ x - b) / (1.0 + _inf_norm(b))
    dres = _inf_norm(A.T @ y + s - c) / (1.0 + _inf_norm(c))
    gap = abs(float(x @ s)) / (1.0 + abs(float(c @ x)))
    return gap, pres, dres
