"""Log-det programs, their convexification and a log-barrier Newton solver.

A program has Hermitian PSD matrix variables ``X_k`` (optionally capped,
``X_k <= cap I``) and nonnegative scalars ``s``.  Every nonlinear piece is a
signed log-det of an affine image,

    coef * log2 det(A0 + sum_k sigma_k M_k X_k M_k^H),

which is concave when ``coef > 0``.  The objective is maximized and the
constraints read ``h_j(X, s) <= b_j``.  A program is *convex* when the
objective only has ``coef > 0`` terms and the constraints only
``coef < 0`` terms; :meth:`LogDetProgram.majorize` produces such a program
by replacing the offending terms with their tangent planes.

Newton steps use a congruence scaling ``X = R (I + D) R^H`` with
``R = chol(X)`` so that the PSD barrier has identity Hessian; the search
direction ``D`` is expanded in an orthonormal basis of Hermitian matrices.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linprog

from .linalg import LN2, hermitian

OK, CAPPED, INFEASIBLE = "ok", "capped", "infeasible"
CONVERGED, MAX_ITER, PARTIAL = "converged", "max-iter", "partial"


class ProgramError(ValueError):
    """Structurally invalid program."""


@dataclass
class MatrixVar:
    dim: int
    cap: float | None = None
    name: str = ""


@dataclass
class LogDetTerm:
    """``coef * log2 det(a0 + sum sign * M X_k M^H)``; maps hold ``(k, M, sign)``."""

    a0: np.ndarray
    maps: list
    coef: float = 1.0

    def matrix(self, mats) -> np.ndarray:
        if len(self.maps) < 2:
            F = np.array(self.a0, dtype=complex)
            for k, M, sg in self.maps:
                F = F + sg * (M @ mats[k] @ M.conj().T)
            return hermitian(F)
        st = self.__dict__.get("_stack")
        if st is None:
            Mcat = np.hstack([np.asarray(M, dtype=complex) for _, M, _ in self.maps])
            offs = np.concatenate([[0], np.cumsum([np.shape(M)[1] for _, M, _ in self.maps])]).astype(int)
            blocks = [(k, slice(offs[i], offs[i + 1]), sg) for i, (k, _, sg) in enumerate(self.maps)]
            st = self.__dict__["_stack"] = (Mcat, Mcat.conj().T, np.array(self.a0, dtype=complex), blocks)
        Mcat, MH, a0, blocks = st
        D = np.zeros((Mcat.shape[1], Mcat.shape[1]), dtype=complex)
        for k, sl, sg in blocks:
            D[sl, sl] = sg * mats[k] if sg != 1 else mats[k]
        return hermitian(a0 + Mcat @ D @ MH)

    def value(self, mats) -> float:
        return self.coef * _logdet2_or_nan(self.matrix(mats))

    @property
    def variables(self) -> set[int]:
        return {k for k, _, _ in self.maps}


@dataclass
class Linear:
    """``const + sum_k Re tr(W_k X_k) + a . s``."""

    const: float = 0.0
    mats: dict = field(default_factory=dict)
    scal: dict = field(default_factory=dict)

    def value(self, mats, scalars) -> float:
        v = self.const
        for k, W in self.mats.items():
            v += float(np.real(np.vdot(W.conj().T, mats[k])))
        for j, a in self.scal.items():
            v += a * scalars[j]
        return float(v)

    def scaled(self, c: float) -> "Linear":
        return Linear(c * self.const, {k: c * W for k, W in self.mats.items()},
                      {j: c * a for j, a in self.scal.items()})


def _add_linear(a: Linear, b: Linear) -> Linear:
    mats = dict(a.mats)
    for k, W in b.mats.items():
        mats[k] = mats[k] + W if k in mats else W
    scal = dict(a.scal)
    for j, v in b.scal.items():
        scal[j] = scal.get(j, 0.0) + v
    return Linear(a.const + b.const, mats, scal)


@dataclass
class Constraint:
    terms: list
    linear: Linear
    bound: float
    name: str = ""

    def value(self, mats, scalars) -> float:
        return sum(t.value(mats) for t in self.terms) + self.linear.value(mats, scalars)

    @property
    def variables(self) -> set[int]:
        out = set(self.linear.mats)
        for t in self.terms:
            out |= t.variables
        return out


@dataclass
class Point:
    mats: list
    scalars: np.ndarray

    def copy(self) -> "Point":
        return Point([m.copy() for m in self.mats], self.scalars.copy())


@dataclass
class LogDetProgram:
    """Maximize ``sum objective_terms + objective_linear`` subject to constraints.

    ``scalar_rows`` / ``scalar_bounds`` hold pure linear rows ``A s <= b``.
    ``init_order`` is the order in which :func:`feasible_init` fixes the
    matrix variables; a constraint is settled by the last of its variables.
    """

    variables: list
    n_scalars: int = 0
    objective_terms: list = field(default_factory=list)
    objective_linear: Linear = field(default_factory=Linear)
    constraints: list = field(default_factory=list)
    scalar_rows: np.ndarray | None = None
    scalar_bounds: np.ndarray | None = None
    init_order: Sequence[int] | None = None

    def __post_init__(self):
        if self.scalar_rows is None:
            self.scalar_rows = np.zeros((0, self.n_scalars))
            self.scalar_bounds = np.zeros(0)
        self.scalar_bounds = np.asarray(self.scalar_bounds, dtype=float).ravel()
        self.scalar_rows = np.asarray(self.scalar_rows, dtype=float).reshape(self.scalar_bounds.size,
                                                                            self.n_scalars)
        if self.scalar_rows.shape[0] != self.scalar_bounds.size:
            raise ProgramError("scalar rows and bounds disagree in length")
        for t in self._all_terms():
            for k, M, sg in t.maps:
                if M.shape != (t.a0.shape[0], self.variables[k].dim):
                    raise ProgramError(f"map for variable {k} has shape {M.shape}")

    def _all_terms(self):
        yield from self.objective_terms
        for c in self.constraints:
            yield from c.terms

    @property
    def is_convex(self) -> bool:
        return (all(t.coef >= 0 for t in self.objective_terms)
                and all(t.coef <= 0 for c in self.constraints for t in c.terms))

    def objective(self, x: Point) -> float:
        return sum(t.value(x.mats) for t in self.objective_terms) + self.objective_linear.value(x.mats, x.scalars)

    def constraint_values(self, x: Point) -> np.ndarray:
        return np.array([c.value(x.mats, x.scalars) for c in self.constraints])

    def max_violation(self, x: Point) -> float:
        """Largest relative violation over constraints, scalar rows and PSD/cap bounds."""
        v = 0.0
        for c, h in zip(self.constraints, self.constraint_values(x)):
            if not np.isfinite(h):
                return np.inf
            v = max(v, (h - c.bound) / max(1.0, abs(c.bound)))
        if self.scalar_bounds.size:
            r = self.scalar_rows @ x.scalars - self.scalar_bounds
            v = max(v, float(np.max(r / np.maximum(1.0, np.abs(self.scalar_bounds)))))
        if x.scalars.size:
            v = max(v, float(-x.scalars.min()))
        for var, X in zip(self.variables, x.mats):
            w = np.linalg.eigvalsh(hermitian(X))
            scale = max(1.0, float(np.abs(w).max()))
            v = max(v, -w.min() / scale)
            if var.cap is not None:
                v = max(v, (w.max() - var.cap) / max(1.0, var.cap))
        return max(v, 0.0)

    def is_strictly_feasible(self, x: Point) -> bool:
        """Interior check: PD below the caps, positive scalars, all slacks positive."""
        if x.scalars.size and x.scalars.min() <= 0:
            return False
        if self.scalar_bounds.size and np.any(self.scalar_rows @ x.scalars >= self.scalar_bounds):
            return False
        for var, X in zip(self.variables, x.mats):
            if not np.all(np.isfinite(X)):
                return False
            w = np.linalg.eigvalsh(hermitian(X))
            if w.min() <= 0 or (var.cap is not None and w.max() >= var.cap):
                return False
        if self.constraints:
            try:
                h = self.constraint_values(x)
            except np.linalg.LinAlgError:
                return False
            if not np.all(h < np.array([c.bound for c in self.constraints])):
                return False
        return True

    def majorize(self, x0: Point) -> "LogDetProgram":
        """Convex surrogate, tight at ``x0``.

        Objective terms with negative coefficient and constraint terms with
        positive coefficient are replaced by the linear ``phi`` tangent;
        the surrogate objective is a minorant and the surrogate
        constraints are majorants of the original ones.
        """
        obj_terms, obj_lin = [], self.objective_linear
        for t in self.objective_terms:
            if t.coef < 0:
                obj_lin = _add_linear(obj_lin, _tangent(t, x0.mats))
            else:
                obj_terms.append(t)
        cons = []
        for c in self.constraints:
            terms, lin = [], c.linear
            for t in c.terms:
                if t.coef > 0:
                    lin = _add_linear(lin, _tangent(t, x0.mats))
                else:
                    terms.append(t)
            cons.append(Constraint(terms, lin, c.bound, c.name))
        return LogDetProgram(self.variables, self.n_scalars, obj_terms, obj_lin, cons,
                             self.scalar_rows, self.scalar_bounds, self.init_order)


def _tangent(t: LogDetTerm, mats) -> Linear:
    """``coef * phi(F(X), F(X0))`` written as a linear functional of ``X``."""
    Y = t.matrix(mats)
    m = Y.shape[0]
    Yinv = np.linalg.inv(Y)
    const = _logdet2(Y) + (float(np.real(np.trace(Yinv @ t.a0))) - m) / LN2
    W = {}
    for k, M, sg in t.maps:
        w = sg * (M.conj().T @ Yinv @ M) / LN2
        W[k] = W[k] + w if k in W else w
    return Linear(t.coef * const, {k: t.coef * hermitian(w) for k, w in W.items()}, {})


def _logdet2(F) -> float:
    if F.shape[0] == 0:
        return 0.0
    L = np.linalg.cholesky(F)
    return float(2.0 * np.sum(np.log(np.real(np.diag(L)))) / LN2)


def _logdet2_or_nan(F) -> float:
    try:
        return _logdet2(F)
    except np.linalg.LinAlgError:
        return np.nan


# ---------------------------------------------------------------- basis

def _hermitian_basis(n: int):
    """Orthonormal real basis of n x n Hermitian matrices as an (n^2, n^2) array.

    Column ``a`` holds ``vec(E_a)`` (row-major); returned with the flat
    index arrays ``P, Q`` so that entry ``(P[i], Q[i])`` is row ``i``.
    """
    U = np.zeros((n * n, n * n), dtype=complex)
    a = 0
    s = 1.0 / np.sqrt(2.0)
    for p in range(n):
        U[p * n + p, a] = 1.0
        a += 1
    for p in range(n):
        for q in range(p + 1, n):
            U[p * n + q, a] = s
            U[q * n + p, a] = s
            U[p * n + q, a + 1] = 1j * s
            U[q * n + p, a + 1] = -1j * s
            a += 2
    P, Q = np.divmod(np.arange(n * n), n)
    return U, P, Q


_BASIS_CACHE: dict[int, tuple] = {}


def _basis(n):
    if n not in _BASIS_CACHE:
        _BASIS_CACHE[n] = _hermitian_basis(n)
    return _BASIS_CACHE[n]


class _Layout:
    """Real parameter layout: matrix variables first, then scalars."""

    def __init__(self, program: LogDetProgram):
        self.dims = [v.dim for v in program.variables]
        self.offsets = np.concatenate([[0], np.cumsum([d * d for d in self.dims])]).astype(int)
        self.n_mat = int(self.offsets[-1])
        self.n = self.n_mat + program.n_scalars

    def var_slice(self, k):
        return slice(self.offsets[k], self.offsets[k + 1])

    def scal_slice(self):
        return slice(self.n_mat, self.n)


class _TermStructure:
    """Index bookkeeping for the derivatives of one log-det term."""

    def __init__(self, term: LogDetTerm, layout: _Layout):
        P, Q, U, gidx, signs, cols = [], [], [], [], [], []
        off = 0
        for k, M, sg in term.maps:
            n = M.shape[1]
            Uk, Pk, Qk = _basis(n)
            P.append(Pk + off)
            Q.append(Qk + off)
            U.append(Uk)
            gidx.append(np.arange(layout.offsets[k], layout.offsets[k + 1]))
            signs.append(np.full(n, float(sg)))
            off += n
        self.P = np.concatenate(P) if P else np.zeros(0, int)
        self.Q = np.concatenate(Q) if Q else np.zeros(0, int)
        self.U = sla.block_diag(*U) if U else np.zeros((0, 0))
        self.gidx = np.concatenate(gidx) if gidx else np.zeros(0, int)
        self.signs = np.concatenate(signs) if signs else np.zeros(0)
        self.unique = len(set(self.gidx.tolist())) == self.gidx.size


# ---------------------------------------------------------------- solver

@dataclass
class SolverReport:
    x: Point
    objective: float
    max_violation: float
    iterations: int
    status: str
    message: str = ""
    t: float = np.nan
    gap: float = np.nan


@dataclass
class SolverOptions:
    gap_tol: float = 1e-6
    mu: float = 100.0
    newton_tol: float = 1e-7
    max_newton: int = 200
    max_total: int = 2000
    t_min: float = 1e-3


def _is_separable(term: LogDetTerm) -> bool:
    """A single identity map: ``log det(a0 + sign X_k)``."""
    if len(term.maps) != 1:
        return False
    _, M, _ = term.maps[0]
    return M.shape[0] == M.shape[1] and np.array_equal(M, np.eye(M.shape[0]))


class _SeparableGroup:
    """Batch of separable terms sharing one variable dimension."""

    def __init__(self, d):
        self.d = d
        self.var, self.a0, self.sign, self.scale, self.owner = [], [], [], [], []

    def add(self, var, a0, sign, scale, owner):
        self.var.append(var)
        self.a0.append(np.asarray(a0, dtype=complex))
        self.sign.append(float(sign))
        self.scale.append(float(scale))
        self.owner.append(owner)

    def freeze(self):
        self.var = np.array(self.var, dtype=int)
        self.a0 = np.array(self.a0).reshape(-1, self.d, self.d)
        self.sign = np.array(self.sign)
        self.scale = np.array(self.scale)
        self.owner = np.array(self.owner, dtype=int)


class _Barrier:
    """Barrier function of a convex program at scale ``t``.

    Every nonlinear or linear piece is attributed to an *owner*: 0 is the
    objective (bits), ``1..m`` the constraints (bits) and ``m+1`` the
    cone barriers (natural log).  Single-variable identity-map terms are
    evaluated in batches, which covers the PSD barriers, the caps and the
    ``-log det X`` parts of the rate constraints.
    """

    def __init__(self, program: LogDetProgram, convex: bool = True):
        if convex and not program.is_convex:
            raise ProgramError("solve() needs a convex program; call majorize() first")
        self.p = p = program
        self.layout = lay = _Layout(program)
        m = len(p.constraints)
        self.m = m
        self.direct = m + 1
        self.n_own = m + 2
        self.groups: dict[int, _SeparableGroup] = {}
        self.general = []
        self.bounds = np.array([c.bound for c in p.constraints], dtype=float)

        def add_term(term, owner, scale):
            if _is_separable(term):
                k, _, sg = term.maps[0]
                d = lay.dims[k]
                self.groups.setdefault(d, _SeparableGroup(d)).add(k, term.a0, sg, scale * term.coef, owner)
            elif term.maps:
                self.general.append((term, _TermStructure(term, lay), owner, scale * term.coef))

        for t in p.objective_terms:
            add_term(t, 0, 1.0 / LN2)
        for j, c in enumerate(p.constraints):
            for t in c.terms:
                add_term(t, j + 1, 1.0 / LN2)
        for k, v in enumerate(p.variables):
            add_term(LogDetTerm(np.zeros((v.dim, v.dim)), [(k, np.eye(v.dim), 1.0)], 1.0), self.direct, 1.0)
            if v.cap is not None:
                add_term(LogDetTerm(v.cap * np.eye(v.dim), [(k, np.eye(v.dim), -1.0)], 1.0), self.direct, 1.0)
        for g in self.groups.values():
            g.freeze()
            g.cols = lay.offsets[g.var][:, None] + np.arange(g.d * g.d)[None, :]

        # constant terms (no maps) and linear parts
        self.const = np.zeros(self.n_own)
        for t in p.objective_terms:
            if not t.maps:
                self.const[0] += t.value([])
        for j, c in enumerate(p.constraints):
            for t in c.terms:
                if not t.maps:
                    self.const[j + 1] += t.value([])
        lins = [p.objective_linear] + [c.linear for c in p.constraints]
        self.As = np.zeros((self.n_own, p.n_scalars))
        wk: dict[int, tuple[list, list]] = {}
        for o, lin in enumerate(lins):
            self.const[o] += lin.const
            for j, a in lin.scal.items():
                self.As[o, j] += a
            for k, W in lin.mats.items():
                wk.setdefault(k, ([], []))
                wk[k][0].append(o)
                wk[k][1].append(np.asarray(W, dtype=complex))
        self.lin = {k: (np.array(o, dtype=int), np.array(W)) for k, (o, W) in wk.items()}
        # variables batched by dimension
        self.by_dim: dict[int, np.ndarray] = {}
        for k, d in enumerate(lay.dims):
            self.by_dim.setdefault(d, [])
            self.by_dim[d].append(k)
        self.by_dim = {d: np.array(ks, dtype=int) for d, ks in self.by_dim.items()}
        self.nu = (sum(v.dim for v in p.variables)
                   + sum(v.dim for v in p.variables if v.cap is not None)
                   + p.n_scalars + m + p.scalar_bounds.size)

    # values -------------------------------------------------------------
    def _owner_values(self, mats, scalars):
        """Per-owner values, or ``None`` outside the domain of a log-det."""
        vals = self.const + self.As @ scalars if scalars.size else self.const.copy()
        for k, (own, W) in self.lin.items():
            vals[own] += np.real(np.einsum("lij,ji->l", W, mats[k]))
        for d, g in self.groups.items():
            X = np.array([mats[k] for k in g.var])
            F = g.a0 + g.sign[:, None, None] * X
            try:
                L = np.linalg.cholesky(F)
            except np.linalg.LinAlgError:
                return None
            ld = 2.0 * np.sum(np.log(np.real(np.diagonal(L, axis1=1, axis2=2))), axis=1)
            np.add.at(vals, g.owner, g.scale * ld)
        for term, _, owner, scale in self.general:
            F = term.matrix(mats)
            try:
                L = np.linalg.cholesky(F)
            except np.linalg.LinAlgError:
                return None
            vals[owner] += scale * 2.0 * float(np.sum(np.log(np.real(np.diag(L)))))
        return vals

    def _barrier_from(self, vals, scalars) -> float:
        p = self.p
        val = vals[self.direct]
        if scalars.size:
            if np.any(scalars <= 0):
                return -np.inf
            val += float(np.sum(np.log(scalars)))
        if p.scalar_bounds.size:
            sl = p.scalar_bounds - p.scalar_rows @ scalars
            if np.any(sl <= 0):
                return -np.inf
            val += float(np.sum(np.log(sl)))
        if self.m:
            sl = self.bounds - vals[1:self.m + 1]
            if np.any(sl <= 0) or not np.all(np.isfinite(sl)):
                return -np.inf
            val += float(np.sum(np.log(sl)))
        return float(val)

    def barrier_value(self, x: Point) -> float:
        """Barrier part only; ``-inf`` outside the domain."""
        vals = self._owner_values(x.mats, x.scalars)
        if vals is None:
            return -np.inf
        return self._barrier_from(vals, x.scalars)

    def value(self, x: Point, t: float) -> float:
        vals = self._owner_values(x.mats, x.scalars)
        if vals is None:
            return -np.inf
        b = self._barrier_from(vals, x.scalars)
        if not np.isfinite(b):
            return -np.inf
        return t * vals[0] + b

    # derivatives --------------------------------------------------------
    def _term_derivs(self, term: LogDetTerm, st: _TermStructure, R, scale):
        """Gradient/Hessian of ``scale * ln det F`` in the scaled coordinates."""
        F = term.matrix([r @ r.conj().T for r in R])
        G = np.hstack([M @ R[k] for k, M, _ in term.maps])
        cf = sla.cho_factor(F, lower=True)
        C = G.conj().T @ sla.cho_solve(cf, G)
        sp = st.signs[st.P]
        gvec = sp * C[st.Q, st.P]
        Z = C[np.ix_(st.Q, st.P)]
        Hc = Z * Z.T * np.outer(sp, sp)
        g = scale * np.real(st.U.T @ gvec)
        H = -scale * np.real(st.U.T @ Hc @ st.U)
        return g, H

    def _cholesky_all(self, mats):
        R = [None] * len(mats)
        for d, ks in self.by_dim.items():
            L = np.linalg.cholesky(np.array([mats[k] for k in ks]))
            for k, l in zip(ks, L):
                R[k] = l
        return R

    def derivatives(self, x: Point, t: float):
        """Gradient and Hessian of ``t f0 + barrier`` plus the objective gradient."""
        lay, p = self.layout, self.p
        n = lay.n
        vals = self._owner_values(x.mats, x.scalars)
        sl = self.bounds - vals[1:self.m + 1]
        w = np.empty(self.n_own)
        w[0] = t
        w[1:self.m + 1] = -1.0 / sl
        w[self.direct] = 1.0
        G = np.zeros((self.n_own, n))
        H = np.zeros((n, n))
        R = self._cholesky_all(x.mats)
        off = lay.offsets
        for d, g in self.groups.items():
            U, P, Q = _basis(d)
            Rs = np.array([R[k] for k in g.var])
            X = Rs @ np.conj(np.transpose(Rs, (0, 2, 1)))
            K = np.linalg.inv(g.a0 + g.sign[:, None, None] * X)
            C = np.conj(np.transpose(Rs, (0, 2, 1))) @ K @ Rs
            gvec = g.sign[:, None] * C[:, Q, P]
            Z = C[:, Q][:, :, P]
            Hc = Z * np.transpose(Z, (0, 2, 1))
            gr = np.real(gvec @ U) * g.scale[:, None]
            Hr = -np.real(U.T @ Hc @ U) * (g.scale * w[g.owner])[:, None, None]
            np.add.at(G, (g.owner[:, None], g.cols), gr)
            np.add.at(H, (g.cols[:, :, None], g.cols[:, None, :]), Hr)
        for term, st, owner, scale in self.general:
            gl, hl = self._term_derivs(term, st, R, scale)
            if st.unique:
                G[owner, st.gidx] += gl
                H[np.ix_(st.gidx, st.gidx)] += w[owner] * hl
            else:
                np.add.at(G[owner], st.gidx, gl)
                np.add.at(H, (st.gidx[:, None], st.gidx[None, :]), w[owner] * hl)
        for k, (own, W) in self.lin.items():
            U, P, Q = _basis(lay.dims[k])
            Rk = R[k]
            B = Rk.conj().T @ W @ Rk
            gr = np.real(B[:, Q, P] @ U)
            np.add.at(G, (own[:, None], np.arange(off[k], off[k + 1])[None, :]), gr)
        ss = lay.scal_slice()
        s0 = x.scalars
        if s0.size:
            G[:, ss] += self.As * s0[None, :]
        g = w @ G
        if self.m:
            Gc = G[1:self.m + 1]
            H -= (Gc.T * (1.0 / sl ** 2)) @ Gc
        if s0.size:
            g[ss] += 1.0
            H[ss, ss] -= np.eye(s0.size)
            if p.scalar_bounds.size:
                A = p.scalar_rows * s0[None, :]
                slr = p.scalar_bounds - p.scalar_rows @ s0
                g[ss] -= A.T @ (1.0 / slr)
                H[ss, ss] -= (A.T * (1.0 / slr ** 2)) @ A
        return g, H, G[0]

    # steps --------------------------------------------------------------
    def step(self, x: Point, d: np.ndarray, alpha: float) -> Point:
        lay = self.layout
        mats = list(x.mats)
        for dim, ks in self.by_dim.items():
            U, _, _ = _basis(dim)
            D = np.array([(U @ d[lay.var_slice(k)]).reshape(dim, dim) for k in ks])
            Rs = np.linalg.cholesky(np.array([x.mats[k] for k in ks]))
            Xn = Rs @ (np.eye(dim) + alpha * D) @ np.conj(np.transpose(Rs, (0, 2, 1)))
            Xn = 0.5 * (Xn + np.conj(np.transpose(Xn, (0, 2, 1))))
            for k, X in zip(ks, Xn):
                mats[k] = X
        s = x.scalars * (1.0 + alpha * d[lay.scal_slice()])
        return Point(mats, s)

    def max_step(self, d: np.ndarray) -> float:
        """Largest step keeping ``I + a D`` and ``1 + a delta`` positive."""
        lay = self.layout
        amax = np.inf
        for dim, ks in self.by_dim.items():
            U, _, _ = _basis(dim)
            D = np.array([(U @ d[lay.var_slice(k)]).reshape(dim, dim) for k in ks])
            D = 0.5 * (D + np.conj(np.transpose(D, (0, 2, 1))))
            lo = np.linalg.eigvalsh(D).min()
            if lo < 0:
                amax = min(amax, -1.0 / lo)
        ds = d[lay.scal_slice()]
        if ds.size and ds.min() < 0:
            amax = min(amax, -1.0 / ds.min())
        return amax


def _newton_direction(g, H):
    n = g.size
    A = -H
    for reg in (0.0, 1e-12, 1e-9, 1e-6):
        try:
            cf = sla.cho_factor(A + reg * np.eye(n), lower=True)
            return sla.cho_solve(cf, g)
        except np.linalg.LinAlgError:
            continue
    return np.linalg.lstsq(A, g, rcond=None)[0]


def _damped_newton_direction(g, H):
    """Ascent direction from ``-H + tau I`` with the smallest ``tau >= 0`` making it positive definite."""
    n = g.size
    A = -H
    scale = max(1.0, float(np.abs(np.diag(A)).max()) if n else 1.0)
    tau = 0.0
    for _ in range(40):
        try:
            cf = sla.cho_factor(A + tau * np.eye(n), lower=True)
            return sla.cho_solve(cf, g)
        except np.linalg.LinAlgError:
            tau = max(10.0 * tau, 1e-10 * scale)
    return g / scale


def _initial_t(bar: _Barrier, x: Point, opts: SolverOptions, t_final: float) -> float:
    """Scale that best centers ``x`` (least squares on the gradient)."""
    gb, Hb, g0 = bar.derivatives(x, 0.0)
    w0 = _newton_direction(g0, Hb)
    den = float(g0 @ w0)
    if den <= 1e-300:
        return max(opts.t_min, 1.0)
    t = -float(gb @ w0) / den
    return float(np.clip(t, opts.t_min, t_final))


def solve(program: LogDetProgram, warm_start: Point | None = None,
          options: SolverOptions | None = None, t_start: float | None = None,
          max_stages: int | None = None) -> SolverReport:
    """Maximize a convex log-det program by the barrier method.

    The warm start must be strictly feasible; without one,
    :func:`feasible_init` supplies it.  The returned point is never worse
    than the warm start (the warm start itself is returned otherwise).

    ``t_start`` and ``max_stages`` allow a partial path: centering starts
    at ``t_start`` and stops after ``max_stages`` values of ``t``.  The
    report's ``t`` is the last centered value and ``status`` is
    ``CONVERGED`` only once the duality gap bound is met.
    """
    opts = options or SolverOptions()
    bar = _Barrier(program)
    if warm_start is None:
        init = feasible_init(program)
        if init.status != OK:
            return SolverReport(init.point, np.nan, np.inf, 0, INFEASIBLE, init.message)
        warm_start = init.point
    x = warm_start.copy()
    if not np.isfinite(bar.barrier_value(x)):
        return SolverReport(x, program.objective(x), program.max_violation(x), 0, INFEASIBLE,
                            "warm start is not strictly feasible")
    f_start = program.objective(x)
    t_final = bar.nu / opts.gap_tol
    if bar.layout.n == 0:
        return SolverReport(x, f_start, program.max_violation(x), 0, CONVERGED, t=t_final, gap=0.0)

    t = _initial_t(bar, x, opts, t_final) if t_start is None else float(min(t_start, t_final))
    total = stages = 0
    status, message = PARTIAL, ""
    while True:
        stalled = False
        for _ in range(opts.max_newton):
            g, H, _ = bar.derivatives(x, t)
            d = _newton_direction(g, H)
            lam2 = float(g @ d)
            if lam2 / 2.0 <= opts.newton_tol:
                break
            total += 1
            alpha = min(1.0, 0.99 * bar.max_step(d))
            v0 = bar.value(x, t)
            while alpha > 1e-6:
                xn = bar.step(x, d, alpha)
                vn = bar.value(xn, t)
                if np.isfinite(vn) and vn >= v0 + 0.25 * alpha * lam2:
                    x = xn
                    break
                alpha *= 0.5
            else:
                # the barrier Hessian is too ill-conditioned at this t for
                # further progress; the current gap bound still holds roughly
                stalled = True
                message = f"stalled at t={t:.3e} (gap ~ {bar.nu / t:.1e})"
                break
            if total >= opts.max_total:
                status = MAX_ITER
                break
        stages += 1
        if status == MAX_ITER or stalled:
            break
        if bar.nu / t <= opts.gap_tol * (1 + 1e-12):
            status = CONVERGED
            break
        if max_stages is not None and stages >= max_stages:
            break
        t = min(t * opts.mu, t_final)

    f = program.objective(x)
    if not np.isfinite(f) or f < f_start:
        x, f = warm_start.copy(), f_start
    return SolverReport(x, f, program.max_violation(x), total, status, message, t, bar.nu / t)


def refine(program: LogDetProgram, x0: Point, options: SolverOptions | None = None,
           t_start: float | None = None, max_newton: int = 300, max_failures: int = 3) -> SolverReport:
    """Second-order local refinement of a (possibly nonconvex) signed log-det program.

    Follows the barrier path of the program itself with damped Newton
    steps (the Hessian is shifted until negative definite), starting from
    the strictly feasible ``x0``.  The result replaces ``x0`` only when it
    is strictly feasible and has a larger objective, so it can be chained
    after :func:`minorize_maximize` without breaking monotonicity.  A
    failed line search (a nearly singular shifted Hessian) moves on to the
    next ``t``; after ``max_failures`` of them the refinement stops.
    """
    opts = options or SolverOptions()
    bar = _Barrier(program, convex=False)
    x = x0.copy()
    f0 = program.objective(x0)
    if bar.layout.n == 0 or not np.isfinite(bar.barrier_value(x)):
        return SolverReport(x0, f0, program.max_violation(x0), 0, PARTIAL, "nothing to refine")
    t_final = bar.nu / opts.gap_tol
    t = float(min(t_start, t_final)) if t_start else _initial_t(bar, x, opts, t_final)
    total = failures = 0
    status, message = PARTIAL, ""
    while total < max_newton:
        for _ in range(opts.max_newton):
            g, H, _ = bar.derivatives(x, t)
            d = _damped_newton_direction(g, H)
            lam2 = float(g @ d)
            if lam2 / 2.0 <= opts.newton_tol:
                break
            total += 1
            alpha = min(1.0, 0.99 * bar.max_step(d))
            v0 = bar.value(x, t)
            while alpha > 1e-8:
                xn = bar.step(x, d, alpha)
                vn = bar.value(xn, t)
                if np.isfinite(vn) and vn >= v0 + 0.25 * alpha * lam2:
                    x = xn
                    break
                alpha *= 0.5
            else:
                failures += 1
                message = f"line search failed at t={t:.3e}"
                break
            if total >= max_newton:
                break
        if failures > max_failures or total >= max_newton:
            break
        if bar.nu / t <= opts.gap_tol * (1 + 1e-12):
            status = CONVERGED
            break
        t = min(t * opts.mu, t_final)
    f = program.objective(x)
    if failures <= max_failures and status != CONVERGED:
        message = message or "newton budget exhausted"
    if not (np.isfinite(f) and f > f0 and program.is_strictly_feasible(x)):
        return SolverReport(x0, f0, program.max_violation(x0), total, status, message or "no improvement", t,
                            bar.nu / t)
    return SolverReport(x, f, program.max_violation(x), total, status, message, t, bar.nu / t)


# ---------------------------------------------------------------- init

@dataclass
class InitResult:
    point: Point
    status: str
    message: str = ""


def _scalar_start(program: LogDetProgram):
    S = program.n_scalars
    if S == 0:
        return np.zeros(0), True
    A = program.scalar_rows
    b = program.scalar_bounds
    # maximize tau s.t. A s + tau <= b, tau <= s, tau <= 1
    c = np.zeros(S + 1)
    c[-1] = -1.0
    rows = [np.hstack([A, np.ones((A.shape[0], 1))]),
            np.hstack([-np.eye(S), np.ones((S, 1))])]
    A_ub = np.vstack(rows)
    b_ub = np.concatenate([b, np.zeros(S)])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * S + [(None, 1.0)], method="highs")
    if res.status != 0 or res.x[-1] <= 0:
        return np.zeros(S), False
    return res.x[:S], True


def feasible_init(program: LogDetProgram, margin: float = 0.01) -> InitResult:
    """Strictly feasible start with ``X_k = c_k I``.

    Scalars come from an LP maximizing the smallest slack.  Matrix
    variables are fixed in ``init_order``; each constraint is settled by
    its last variable, whose ``c`` is the smallest value (log-scale
    bisection) leaving a slack of ``margin`` times the constraint's range
    between its bound and its value at the cap.
    """
    s, ok = _scalar_start(program)
    if not ok:
        return InitResult(Point([np.eye(v.dim, dtype=complex) for v in program.variables], s),
                          INFEASIBLE, "linear constraints admit no interior point")
    nv = len(program.variables)
    order = list(program.init_order) if program.init_order is not None else list(range(nv))
    rank = {k: r for r, k in enumerate(order)}
    owner: dict[int, list] = {k: [] for k in range(nv)}
    for c in program.constraints:
        vs = c.variables
        if vs:
            owner[max(vs, key=lambda k: rank[k])].append(c)
    mats = [np.eye(v.dim, dtype=complex) for v in program.variables]
    for k, v in enumerate(program.variables):
        if v.cap is not None and v.cap <= 1.0:
            mats[k] = 0.5 * v.cap * np.eye(v.dim)
    status, msg = OK, ""
    for k in order:
        var = program.variables[k]
        cons = owner[k]
        if not cons:
            continue
        I = np.eye(var.dim, dtype=complex)
        hi = var.cap if var.cap is not None else 1e12

        def slack_ok(c_val, ref):
            mats[k] = c_val * I
            good = True
            for c, top in zip(cons, ref):
                h = c.value(mats, s)
                need = c.bound - margin * abs(c.bound - top)
                if not np.isfinite(h) or h > need:
                    good = False
            return good

        lo = hi * 1e-16
        mats[k] = hi * I
        at_hi = [c.value(mats, s) for c in cons]
        mats[k] = lo * I
        at_lo = [c.value(mats, s) for c in cons]
        ok_hi = all(np.isfinite(h) and h < c.bound for c, h in zip(cons, at_hi))
        ok_lo = all(np.isfinite(h) and h < c.bound for c, h in zip(cons, at_lo))
        if not (ok_hi or ok_lo):
            status, msg = CAPPED, f"variable {k} cannot meet its constraints even at the cap"
            mats[k] = hi * I
            continue
        # rate-type constraints decrease in c: search for the smallest c
        ref = at_hi if ok_hi else at_lo
        if slack_ok(lo if ok_hi else hi, ref):
            mats[k] = (lo if ok_hi else hi) * I
            continue
        good, bad = (np.log(hi), np.log(lo)) if ok_hi else (np.log(lo), np.log(hi))
        for _ in range(100):
            m = 0.5 * (good + bad)
            if slack_ok(np.exp(m), ref):
                good = m
            else:
                bad = m
            if abs(good - bad) < 1e-10:
                break
        mats[k] = np.exp(good) * I
    x = Point(mats, s)
    if status == OK:
        vals = program.constraint_values(x)
        for c, h in zip(program.constraints, vals):
            if not np.isfinite(h) or h >= c.bound:
                status, msg = INFEASIBLE, f"constraint {c.name or '?'} not strictly satisfied"
                break
    return InitResult(x, status, msg)


# ---------------------------------------------------------------- MM

@dataclass
class MMResult:
    x: Point
    objective: float
    trace: list
    residuals: list
    iterations: int
    status: str
    monotone: bool

    def check(self, slack: float = 1e-7, feas_tol: float = 1e-6):
        """Assert non-decreasing objectives and feasible iterates."""
        tr = np.asarray(self.trace)
        assert np.all(np.diff(tr) >= -slack), f"MM objective decreased: {tr}"
        assert max(self.residuals, default=0.0) < feas_tol, f"infeasible iterate: {self.residuals}"


def _geodesic(A, B, tau):
    """Point ``tau`` on the positive-definite geodesic through ``A`` (0) and ``B`` (1)."""
    w, V = np.linalg.eigh(hermitian(A))
    if w.min() <= 0:
        return None
    Ah = (V * np.sqrt(w)) @ V.conj().T
    Aih = (V / np.sqrt(w)) @ V.conj().T
    m, U = np.linalg.eigh(hermitian(Aih @ B @ Aih))
    if m.min() <= 0:
        return None
    return hermitian(Ah @ ((U * m ** tau) @ U.conj().T) @ Ah)


def _extrapolate(program, fval, x_old: Point, x: Point, f: float, beta: float):
    """Try the point ``beta`` steps beyond ``x`` along the move from ``x_old``.

    Matrices follow the positive-definite geodesic and scalars move
    geometrically, so eigenvalues that shrink or grow by a constant factor
    per iteration keep doing so.  Returns ``(point, value)`` or ``None``.
    """
    mats = [_geodesic(Xo, X, 1.0 + beta) for X, Xo in zip(x.mats, x_old.mats)]
    if any(m is None for m in mats):
        return None
    so, sn = x_old.scalars, x.scalars
    if so.size and (so.min() <= 0 or sn.min() <= 0):
        return None
    y = Point(mats, sn * (sn / so) ** beta if so.size else sn.copy())
    try:
        if not program.is_strictly_feasible(y):
            return None
        fy = fval(y)
    except np.linalg.LinAlgError:
        return None
    if not np.isfinite(fy) or fy <= f:
        return None
    return y, fy


def minorize_maximize(program: LogDetProgram, x0: Point, max_iter: int = 50, tol: float = 1e-5,
                      options: SolverOptions | None = None,
                      objective: Callable[[Point], float] | None = None,
                      path_gap: float = 1e-4, extrapolate: bool = True,
                      gap_ratio: float | None = 1.0, newton_per_iter: int | None = 10,
                      extrapolate_tries: int = 3) -> MMResult:
    """Successive convex approximation of a signed log-det program.

    Surrogates are centered at the current barrier scale ``t`` only; the
    scale grows by ``options.mu`` (up to a gap bound of ``path_gap``) once
    an outer step gains less than the gap bound at ``t``.  The barrier
    path is thus followed once across all surrogates.  The last surrogate
    (gain below ``tol`` at the capped scale, or the iteration cap) is
    solved to the full gap tolerance; if that still gains more than
    ``tol`` the iterations resume at the capped scale.  A step that lowers the true objective is not taken.

    With ``extrapolate`` every accepted step is followed by a trial point
    further along the same direction, kept only when it is strictly
    feasible for the original program and raises its objective; the
    trial length doubles after a success and halves after a failure.

    ``objective`` may override the traced value (it must equal the program
    objective up to constants).
    """
    opts = options or SolverOptions()
    path_gap = max(path_gap, opts.gap_tol)
    fval = objective or program.objective
    x = x0
    f = fval(x)
    trace = [f]
    residuals = [program.max_violation(x)]
    status = MAX_ITER
    t = None
    polish = False
    beta = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        polish = polish or it == max_iter
        sopts = opts if (polish or newton_per_iter is None) else replace(opts, max_newton=newton_per_iter)
        rep = solve(program.majorize(x), x, sopts, t_start=t, max_stages=None if polish else 1)
        if rep.status == INFEASIBLE:
            status = INFEASIBLE
            break
        f_new = fval(rep.x)
        gain = f_new - f
        if f_new >= f:
            x_new = rep.x
            if extrapolate and not polish and it > 1:
                base, hit = x_new, False
                for _ in range(extrapolate_tries):
                    ext = _extrapolate(program, fval, x, base, f_new, beta)
                    if ext is not None:
                        x_new, f_new = ext
                        hit = True
                        beta = min(2.0 * beta, 1e3)
                    elif hit:
                        break
                    else:
                        beta = max(0.5 * beta, 0.25)
            gain = f_new - f
            residuals.append(program.max_violation(x_new))
            trace.append(f_new)
            x, f = x_new, f_new
        nu = rep.gap * rep.t
        t_cap = nu / path_gap
        if polish:
            if gain < tol:
                status = CONVERGED
                break
            # still climbing: back to short surrogate solves on the capped path
            polish = False
            t = t_cap
            continue
        if gain < tol:
            polish = rep.t >= t_cap * (1 - 1e-12)
        if gap_ratio is None:
            t = max(min(rep.t * opts.mu, t_cap), rep.t) if gain < rep.gap else rep.t
        else:
            t = max(rep.t, min(nu / (gap_ratio * max(gain, 1e-300)), t_cap, rep.t * opts.mu))
    monotone = bool(np.all(np.diff(trace) >= -1e-7))
    return MMResult(x, f, trace, residuals, it, status, monotone)
