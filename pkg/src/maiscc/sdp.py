"""Small dense convex solver over Hermitian PSD blocks.

Problems have the form

    maximize    f_0(X)
    subject to  f_i(X) {<=, >=, ==} b_i,   X_b >= 0 for every block b,

where every functional is real-affine in the blocks plus an optional sum of
weighted natural logs of real-affine arguments.  Constraint and objective
functionals must be concave in the direction that keeps the problem convex.
Linear-only specs are ordinary SDPs.

The default backend is a log-barrier path-following interior-point method
with a Phase I feasibility search.  Each Hermitian d x d block is stored in
an orthonormal real coordinate system of dimension d**2 (diagonal entries plus
sqrt(2)-scaled real/imaginary parts of the strict upper triangle), so the
Newton systems are real symmetric.  A cvxpy backend is available for
cross-checks.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

FEAS_TOL = 1e-7
GAP_TOL = 1e-6
MAX_ITERS = 200


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class LogTerm:
    """``weight * ln(<coeffs, X> + const)``; the argument must stay positive."""

    weight: float
    coeffs: Mapping[str, np.ndarray]
    const: float = 0.0


@dataclass(frozen=True)
class Functional:
    """Real-affine functional ``sum_b Re tr(C_b X_b) + const`` plus log terms."""

    coeffs: Mapping[str, np.ndarray] = field(default_factory=dict)
    const: float = 0.0
    log_terms: tuple[LogTerm, ...] = ()


@dataclass(frozen=True)
class Constraint:
    functional: Functional
    sense: str
    bound: float
    name: str = ""

    def __post_init__(self):
        if self.sense not in ("<=", ">=", "=="):
            raise ValueError(f"unknown constraint sense {self.sense!r}")


@dataclass
class SubproblemSpec:
    blocks: list[tuple[str, int]]
    objective: Functional
    constraints: list[Constraint] = field(default_factory=list)

    def validate(self) -> None:
        dims = dict(self.blocks)
        if len(dims) != len(self.blocks):
            raise ValueError("duplicate block names")
        functionals = [self.objective] + [c.functional for c in self.constraints]
        for fn in functionals:
            mats = list(fn.coeffs.items())
            for lt in fn.log_terms:
                mats += list(lt.coeffs.items())
            for name, C in mats:
                if name not in dims:
                    raise ValueError(f"unknown block {name!r}")
                C = np.asarray(C)
                if C.shape != (dims[name], dims[name]):
                    raise ValueError(f"coefficient for {name!r} has shape {C.shape}")
                if not np.allclose(C, C.conj().T, atol=1e-10 * (1 + np.abs(C).max())):
                    raise ValueError(f"coefficient for {name!r} is not Hermitian")
        if any(lt.weight < 0 for lt in self.objective.log_terms):
            raise ValueError("objective log terms must have non-negative weight")
        for con in self.constraints:
            ws = [lt.weight for lt in con.functional.log_terms]
            if con.sense == "==" and ws:
                raise ValueError("equality constraints must be affine")
            if con.sense == ">=" and any(w < 0 for w in ws):
                raise ValueError(f"constraint {con.name!r} is not convex")
            if con.sense == "<=" and any(w > 0 for w in ws):
                raise ValueError(f"constraint {con.name!r} is not convex")


@dataclass
class SubproblemSolution:
    blocks: dict[str, np.ndarray]
    objective_value: float
    status: str
    kkt_residual: float
    dual_bound: float = math.nan
    iterations: int = 0

    @property
    def duality_gap(self) -> float:
        return self.dual_bound - self.objective_value


# ---------------------------------------------------------------------------
# Hermitian coordinates


@lru_cache(maxsize=None)
def hermitian_basis(d: int) -> np.ndarray:
    """Orthonormal basis of d x d Hermitian matrices, rows are row-major vecs."""
    basis = np.zeros((d * d, d * d), dtype=complex)
    k = 0
    for i in range(d):
        basis[k, i * d + i] = 1.0
        k += 1
    s = 1 / math.sqrt(2)
    for i in range(d):
        for j in range(i + 1, d):
            basis[k, i * d + j] = s
            basis[k, j * d + i] = s
            k += 1
            basis[k, i * d + j] = 1j * s
            basis[k, j * d + i] = -1j * s
            k += 1
    basis.setflags(write=False)
    return basis


def to_coords(Z: np.ndarray) -> np.ndarray:
    d = Z.shape[0]
    return np.real(hermitian_basis(d).conj() @ Z.ravel())


def from_coords(x: np.ndarray, d: int) -> np.ndarray:
    Z = (hermitian_basis(d).T @ x).reshape(d, d)
    return 0.5 * (Z + Z.conj().T)


def psd_project(X: np.ndarray, floor: float = 0.0, herm_tol: float = 1e-8) -> np.ndarray:
    """Nearest (Frobenius) Hermitian matrix with eigenvalues >= ``floor``."""
    X = np.asarray(X)
    scale = 1.0 + np.abs(X).max(initial=0.0)
    if not np.allclose(X, X.conj().T, atol=herm_tol * scale):
        raise ValueError("input is not Hermitian")
    if floor < 0:
        raise ValueError("floor must be non-negative")
    H = 0.5 * (X + X.conj().T)
    vals, vecs = np.linalg.eigh(H)
    if vals.min(initial=np.inf) >= floor:
        return H
    vals = np.maximum(vals, floor)
    out = (vecs * vals) @ vecs.conj().T
    return 0.5 * (out + out.conj().T)


# ---------------------------------------------------------------------------
# compiled representation


@dataclass
class _Func:
    c: np.ndarray
    c0: float
    log_w: np.ndarray
    log_L: np.ndarray
    log_l0: np.ndarray

    def args(self, x):
        return self.log_L @ x + self.log_l0

    def value(self, x):
        v = self.c @ x + self.c0
        if self.log_w.size:
            v += self.log_w @ np.log(self.args(x))
        return float(v)

    def derivs(self, x):
        grad = self.c.copy()
        if not self.log_w.size:
            return self.value(x), grad, None
        a = self.args(x)
        grad += (self.log_w / a) @ self.log_L
        hess = -(self.log_L.T * (self.log_w / a**2)) @ self.log_L
        return self.c @ x + self.c0 + self.log_w @ np.log(a), grad, hess

    def curvature(self, x):
        """(value, grad, rows, weights) with Hessian ``-sum_i w_i r_i r_i^T``."""
        v = float(self.c @ x + self.c0)
        grad = self.c.copy()
        if not self.log_w.size:
            return v, grad, self.log_L[:0], self.log_w[:0]
        a = self.args(x)
        grad += (self.log_w / a) @ self.log_L
        return v + float(self.log_w @ np.log(a)), grad, self.log_L, self.log_w / a**2

    def scaled(self, s: float) -> "_Func":
        return _Func(self.c * s, self.c0 * s, self.log_w * s, self.log_L, self.log_l0)

    def with_extra(self, extra: np.ndarray) -> "_Func":
        pad = len(extra)
        return _Func(
            np.concatenate([self.c, extra]),
            self.c0,
            self.log_w,
            np.pad(self.log_L, ((0, 0), (0, pad))),
            self.log_l0,
        )


class _Problem:
    """Vectorised problem.

    ``blocks`` holds (d, offset, shift): the PSD matrix of a block is built
    from ``x[offset:offset + d*d]`` minus ``x[shift] * I`` when ``shift`` is
    not None (Phase I margin variable).
    """

    def __init__(self, n, blocks, objective, ineqs, A_eq, b_eq):
        self.n = n
        self.blocks = blocks
        self.objective = objective
        self.ineqs = ineqs  # list of _Func, constraint is g(x) > 0
        self.A_eq = A_eq
        self.b_eq = b_eq
        # each log argument inside a constraint row carries its own -log term,
        # which makes the row barrier self-concordant (exponential-cone style)
        self.theta = len(ineqs) + sum(g.log_w.size for g in ineqs) + sum(d for d, _, _ in blocks)

    def block_mats(self, x):
        mats = []
        for d, off, shift in self.blocks:
            Z = from_coords(x[off : off + d * d], d)
            if shift is not None:
                Z = Z - x[shift] * np.eye(d)
            mats.append(Z)
        return mats

    def in_domain(self, x) -> bool:
        for f in [self.objective, *self.ineqs]:
            if f.log_w.size and np.any(f.args(x) <= 0):
                return False
        for g in self.ineqs:
            if not g.value(x) > 0:
                return False
        for Z in self.block_mats(x):
            try:
                np.linalg.cholesky(Z)
            except np.linalg.LinAlgError:
                return False
        return True

    def scaled_system(self, x, t):
        """Newton data in block-scaled coordinates.

        Each block is reparametrised as ``X = Z^1/2 U Z^1/2`` around the
        current point, which turns the log-det Hessian into the identity;
        forming it in the original coordinates and transforming would cancel
        catastrophically once a block is nearly singular.  The remaining
        curvature is low rank, so the negated Hessian is returned as
        ``diag(unit) + V^T V + shift_terms`` in factored form.

        Returns (f, grad, V, T, shift_terms) where ``T`` maps scaled steps back
        to the original coordinates.
        """
        f, gf, rows, w = self.objective.curvature(x)
        grad = t * gf
        parts = [rows * np.sqrt(t * w)[:, None]]
        for g in self.ineqs:
            v, gg, r, wg = g.curvature(x)
            grad += gg / v
            parts.append((gg / v)[None, :])
            parts.append(r * np.sqrt(wg / v)[:, None])
            if g.log_w.size:
                a = g.args(x)
                grad += (1.0 / a) @ g.log_L
                parts.append(g.log_L / a[:, None])
        V = np.concatenate(parts, axis=0)
        T = np.eye(self.n)
        mats = self.block_mats(x)
        for (d, off, _), Z in zip(self.blocks, mats):
            w_, Q = np.linalg.eigh(Z)
            R = (Q * np.sqrt(np.maximum(w_, 0.0))) @ Q.conj().T
            B = hermitian_basis(d)
            T[off : off + d * d, off : off + d * d] = np.real(B.conj() @ np.kron(R, R.T) @ B.T)
        grad = T.T @ grad
        V = V @ T
        shift_terms = []
        for (d, off, shift), Z in zip(self.blocks, mats):
            grad[off : off + d * d] += _identity_coords(d)
            if shift is not None:
                Y = np.linalg.inv(Z)
                Y = 0.5 * (Y + Y.conj().T)
                grad[shift] -= float(np.real(np.trace(Y)))
                shift_terms.append((off, d, shift, to_coords(Y), float(np.real(np.trace(Y @ Y)))))
        return f, grad, V, T, shift_terms

    def newton_matrix(self, V, shift_terms) -> np.ndarray:
        """Dense negated Hessian in scaled coordinates."""
        N = V.T @ V
        for d, off, _ in self.blocks:
            idx = np.arange(off, off + d * d)
            N[idx, idx] += 1.0
        for off, d, shift, y, yy in shift_terms:
            N[off : off + d * d, shift] -= y
            N[shift, off : off + d * d] -= y
            N[shift, shift] += yy
        return N

    def barrier_value(self, x, t) -> float:
        v = t * self.objective.value(x)
        for g in self.ineqs:
            v += math.log(g.value(x))
            if g.log_w.size:
                v += float(np.sum(np.log(g.args(x))))
        for Z in self.block_mats(x):
            L = np.linalg.cholesky(Z)
            v += 2 * np.sum(np.log(np.real(np.diag(L))))
        return v


@lru_cache(maxsize=None)
def _identity_coords(d: int) -> np.ndarray:
    return to_coords(np.eye(d))


def _compile_functional(fn: Functional, layout, n) -> _Func:
    def vec(coeffs):
        out = np.zeros(n)
        for name, C in coeffs.items():
            off, d = layout[name]
            out[off : off + d * d] += to_coords(np.asarray(C, dtype=complex))
        return out

    c = vec(fn.coeffs)
    if fn.log_terms:
        log_w = np.array([lt.weight for lt in fn.log_terms], dtype=float)
        log_L = np.array([vec(lt.coeffs) for lt in fn.log_terms])
        log_l0 = np.array([lt.const for lt in fn.log_terms], dtype=float)
    else:
        log_w, log_L, log_l0 = np.zeros(0), np.zeros((0, n)), np.zeros(0)
    return _Func(c, float(fn.const), log_w, log_L, log_l0)


def _compile(spec: SubproblemSpec):
    layout = {}
    off = 0
    for name, d in spec.blocks:
        layout[name] = (off, d)
        off += d * d
    n = off
    blocks = [(d, layout[name][0], None) for name, d in spec.blocks]
    objective = _compile_functional(spec.objective, layout, n)
    ineqs, eq_rows, eq_b, names = [], [], [], []
    for con in spec.constraints:
        f = _compile_functional(con.functional, layout, n)
        if con.sense == ">=":
            f.c0 -= con.bound
            ineqs.append(f)
            names.append(con.name)
        elif con.sense == "<=":
            f = f.scaled(-1.0)
            f.c0 += con.bound
            ineqs.append(f)
            names.append(con.name)
        else:
            eq_rows.append(f.c)
            eq_b.append(con.bound - f.c0)
    A_eq = np.array(eq_rows).reshape(len(eq_rows), n)
    b_eq = np.array(eq_b, dtype=float)
    return layout, _Problem(n, blocks, objective, ineqs, A_eq, b_eq), names


# ---------------------------------------------------------------------------
# barrier core


def _dense_step(N, grad, A_eq):
    """Solve ``N dx = grad`` (with equalities via KKT), Jacobi-scaled."""
    N = 0.5 * (N + N.T)
    diag = np.abs(np.diag(N))
    dscale = 1.0 / np.sqrt(np.where(diag > 0, diag, 1.0))
    Ns = N * dscale[:, None] * dscale[None, :]
    gs = grad * dscale
    n = len(N)
    if A_eq.shape[0] == 0:
        try:
            L = np.linalg.cholesky(Ns + 1e-13 * np.eye(n))
            y = np.linalg.solve(L.T, np.linalg.solve(L, gs))
        except np.linalg.LinAlgError:
            y = np.linalg.lstsq(Ns, gs, rcond=None)[0]
        return y * dscale
    m = A_eq.shape[0]
    As = A_eq * dscale[None, :]
    kkt = np.block([[Ns + 1e-13 * np.eye(n), As.T], [As, np.zeros((m, m))]])
    rhs = np.concatenate([gs, np.zeros(m)])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:n] * dscale


def _newton_step(prob: _Problem, grad, V, T, shift_terms):
    """Ascent direction in scaled coordinates."""
    A_eq = prob.A_eq @ T if prob.A_eq.shape[0] else prob.A_eq
    if shift_terms or A_eq.shape[0] or sum(d * d for d, _, _ in prob.blocks) != prob.n:
        return _dense_step(prob.newton_matrix(V, shift_terms), grad, A_eq)
    # (I + V^T V)^-1 g by Woodbury; the small inner system is Jacobi-scaled
    inner = V @ V.T
    diag = 1.0 + np.diag(inner)
    sc = 1.0 / np.sqrt(diag)
    inner = (inner + np.eye(len(inner))) * sc[:, None] * sc[None, :]
    rhs = (V @ grad) * sc
    try:
        L = np.linalg.cholesky(inner)
        y = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    except np.linalg.LinAlgError:
        y = np.linalg.lstsq(inner, rhs, rcond=None)[0]
    return grad - V.T @ (y * sc)


def _center(prob: _Problem, x, t, budget, tol=1e-10):
    """Damped Newton maximisation of the barrier-augmented objective at ``t``."""
    used = 0
    dec = math.inf
    prev = math.inf
    while used < budget:
        f, grad, V, T, shift_terms = prob.scaled_system(x, t)
        du = _newton_step(prob, grad, V, T, shift_terms)
        dec = float(grad @ du)
        dx = T @ du
        used += 1
        # decrements below the rounding floor of t*f carry no information
        floor = max(tol, 1e-13 * t * (1.0 + abs(f)))
        if dec / 2 <= floor or (dec < 1e-4 and dec > 0.25 * prev):
            break
        prev = dec
        if dec < 0.1:
            # quadratic-convergence region: full step, only the domain is checked
            step = 1.0
            while not prob.in_domain(x + step * dx):
                step *= 0.5
                if step < 1e-12:
                    return x, used, max(dec, 0.0)
            x = x + step * dx
            continue
        phi0 = prob.barrier_value(x, t)
        step = 1.0
        while step > 1e-12:
            xn = x + step * dx
            if prob.in_domain(xn) and prob.barrier_value(xn, t) >= phi0 + 0.25 * step * dec:
                break
            step *= 0.5
        else:
            break
        x = xn
    return x, used, max(dec, 0.0)


def _initial_t(prob: _Problem, x, gap_tol) -> float:
    """Barrier weight that makes ``x`` as central as possible.

    Least-squares fit of ``t grad f + grad phi = 0`` in the barrier's local
    norm, clamped to a sane range.
    """
    f, gb, V, T, shift_terms = prob.scaled_system(x, 0.0)
    gf = T.T @ prob.objective.curvature(x)[1]
    lo = prob.theta / (1.0 + abs(f))
    hi = prob.theta / (gap_tol * (1.0 + abs(f)))
    try:
        hf = _newton_step(prob, gf, V, T, shift_terms)
        hb = _newton_step(prob, gb, V, T, shift_terms)
    except np.linalg.LinAlgError:
        return lo
    den = float(gf @ hf)
    if not den > 0:
        return lo
    t = -float(gf @ hb) / den
    return float(np.clip(t, lo, hi)) if math.isfinite(t) else lo


def _path_follow(prob: _Problem, x, t0, mu, gap_tol, max_iters, stop=None):
    t = t0
    used = 0
    while True:
        x, k, dec = _center(prob, x, t, max_iters - used)
        used += k
        f = prob.objective.value(x)
        gap = prob.theta / t
        if stop is not None and stop(x, f, gap):
            return x, t, used, "stopped", dec
        if gap <= gap_tol * (1 + abs(f)):
            return x, t, used, "optimal", dec
        if used >= max_iters:
            return x, t, used, "max_iters", dec
        t *= mu


def _project_equalities(prob: _Problem, x):
    if prob.A_eq.shape[0] == 0:
        return x
    r = prob.b_eq - prob.A_eq @ x
    return x + np.linalg.lstsq(prob.A_eq, r, rcond=None)[0]


def _phase_one(prob: _Problem, x0, max_iters):
    """Find a strictly feasible point or certify that none exists.

    Maximises a common margin ``s`` with ``X_b - s I >= 0`` and
    ``g_i(x) / |grad g_i| - s >= 0``; ``s* < 0`` certifies infeasibility.
    Returns (x or None, newton iterations used).
    """
    x = _project_equalities(prob, x0)
    margins = []
    for f in [prob.objective, *prob.ineqs]:
        if f.log_w.size and np.any(f.args(x) <= 0):
            raise SolverError("log argument non-positive at the start point")
    scales = []
    for g in prob.ineqs:
        _, gg, _ = g.derivs(x)
        scale = float(np.linalg.norm(gg)) or 1.0
        scales.append(scale)
        margins.append(g.value(x) / scale)
    for Z in prob.block_mats(x):
        margins.append(float(np.linalg.eigvalsh(Z).min()))
    m0 = min(margins) if margins else 1.0
    if m0 > 0 and prob.in_domain(x):
        return x, 0

    n = prob.n
    blocks = [(d, off, n) for d, off, _ in prob.blocks]
    ineqs = [g.scaled(1.0 / sc).with_extra(np.array([-1.0])) for g, sc in zip(prob.ineqs, scales)]
    cap = 1.0 + 2.0 * abs(m0)
    ineqs.append(_Func(np.concatenate([np.zeros(n), [-1.0]]), cap, np.zeros(0), np.zeros((0, n + 1)), np.zeros(0)))
    obj = _Func(np.concatenate([np.zeros(n), [1.0]]), 0.0, np.zeros(0), np.zeros((0, n + 1)), np.zeros(0))
    A_eq = np.hstack([prob.A_eq, np.zeros((prob.A_eq.shape[0], 1))])
    aug = _Problem(n + 1, blocks, obj, ineqs, A_eq, prob.b_eq)
    s0 = m0 - 0.5 * (1.0 + abs(m0))
    xa = np.concatenate([x, [s0]])
    verdict = {}

    def stop(xa, s, gap):
        if s > 0 and s >= 0.5 * (s + gap):
            verdict["feasible"] = True
            return True
        if s + gap < -1e-12:
            verdict["feasible"] = False
            return True
        return False

    xa, _, used, status, _ = _path_follow(aug, xa, 1.0, 10.0, 1e-9, max_iters, stop=stop)
    if verdict.get("feasible") or (status != "stopped" and xa[-1] > 0):
        return xa[:n], used
    return None, used


def _pack(spec: SubproblemSpec, layout, n, blocks) -> np.ndarray:
    x = np.zeros(n)
    for name, d in spec.blocks:
        off, _ = layout[name]
        x[off : off + d * d] = to_coords(np.asarray(blocks[name], dtype=complex))
    return x


def is_interior(spec: SubproblemSpec, blocks: Mapping[str, np.ndarray]) -> bool:
    """True when ``blocks`` is strictly feasible (PD blocks, strict inequalities)."""
    layout, prob, _ = _compile(spec)
    x = _pack(spec, layout, prob.n, blocks)
    if prob.A_eq.shape[0] and np.abs(prob.A_eq @ x - prob.b_eq).max() > FEAS_TOL:
        return False
    return prob.in_domain(x)


def _barrier_solve(spec: SubproblemSpec, x0=None, gap_tol=GAP_TOL, max_iters=MAX_ITERS, mu=20.0):
    layout, prob, _ = _compile(spec)
    n = prob.n
    if x0 is None:
        total = sum(d for _, d in spec.blocks)
        x = _pack(spec, layout, n, {name: np.eye(d) / total for name, d in spec.blocks})
    else:
        x = _pack(spec, layout, n, x0)

    def unpack(x):
        return {name: from_coords(x[off : off + d * d], d) for name, (off, d) in layout.items()}

    xf, used = _phase_one(prob, x, max_iters)
    if xf is None:
        return SubproblemSolution(unpack(x), math.nan, "infeasible", math.inf, math.nan, used)
    t0 = _initial_t(prob, xf, gap_tol)
    xs, t, k, status, dec = _path_follow(prob, xf, t0, mu, gap_tol, max_iters)
    f = prob.objective.value(xs)
    gap = prob.theta / t
    kkt = max(math.sqrt(dec) / t, gap / (1 + abs(f)))
    return SubproblemSolution(unpack(xs), f, status, kkt, f + gap, used + k)


# ---------------------------------------------------------------------------
# external backend


def _cvxpy_solve(spec: SubproblemSpec, solver=None) -> SubproblemSolution:
    import cvxpy as cp

    vars_ = {name: cp.Variable((d, d), hermitian=True) for name, d in spec.blocks}

    def expr(fn: Functional):
        terms = [fn.const]
        for name, C in fn.coeffs.items():
            terms.append(cp.real(cp.trace(np.asarray(C) @ vars_[name])))
        for lt in fn.log_terms:
            arg = lt.const + sum(cp.real(cp.trace(np.asarray(C) @ vars_[nm])) for nm, C in lt.coeffs.items())
            terms.append(lt.weight * cp.log(arg))
        return sum(terms[1:], terms[0])

    cons = [v >> 0 for v in vars_.values()]
    for con in spec.constraints:
        e = expr(con.functional)
        cons.append({"<=": e <= con.bound, ">=": e >= con.bound, "==": e == con.bound}[con.sense])
    prob = cp.Problem(cp.Maximize(expr(spec.objective)), cons)
    prob.solve(solver=solver or cp.CLARABEL)
    if prob.status in ("infeasible", "infeasible_inaccurate"):
        return SubproblemSolution({n: np.zeros((d, d)) for n, d in spec.blocks}, math.nan, "infeasible", math.inf)
    status = "optimal" if prob.status == "optimal" else "max_iters"
    blocks = {name: np.asarray(v.value) for name, v in vars_.items()}
    return SubproblemSolution(blocks, float(prob.value), status, 0.0, float(prob.value), 0)


def solve(
    spec: SubproblemSpec,
    *,
    x0: Mapping[str, np.ndarray] | None = None,
    gap_tol: float = GAP_TOL,
    max_iters: int = MAX_ITERS,
    backend: str = "barrier",
) -> SubproblemSolution:
    """Solve ``spec``.

    ``x0`` is an optional starting point (block name -> matrix); it need not
    be feasible.  ``max_iters`` caps Newton iterations per phase.
    """
    spec.validate()
    if backend == "barrier":
        return _barrier_solve(spec, x0=x0, gap_tol=gap_tol, max_iters=max_iters)
    if backend == "cvxpy":
        return _cvxpy_solve(spec)
    raise ValueError(f"unknown backend {backend!r}")


def evaluate(fn: Functional, blocks: Mapping[str, np.ndarray]) -> float:
    """Value of ``fn`` at explicit block matrices."""
    v = fn.const
    for name, C in fn.coeffs.items():
        v += float(np.real(np.trace(np.asarray(C) @ blocks[name])))
    for lt in fn.log_terms:
        arg = lt.const
        for name, C in lt.coeffs.items():
            arg += float(np.real(np.trace(np.asarray(C) @ blocks[name])))
        v += lt.weight * math.log(arg)
    return float(v)


def constraint_violations(spec: SubproblemSpec, blocks: Mapping[str, np.ndarray]) -> list[float]:
    out = []
    for con in spec.constraints:
        v = evaluate(con.functional, blocks)
        if con.sense == ">=":
            out.append(max(0.0, con.bound - v))
        elif con.sense == "<=":
            out.append(max(0.0, v - con.bound))
        else:
            out.append(abs(v - con.bound))
    return out


__all__: Sequence[str] = [
    "Constraint",
    "Functional",
    "LogTerm",
    "SolverError",
    "SubproblemSolution",
    "SubproblemSpec",
    "constraint_violations",
    "evaluate",
    "from_coords",
    "hermitian_basis",
    "psd_project",
    "solve",
    "to_coords",
]
