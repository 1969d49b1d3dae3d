"""Steady-state LQG quantities and the minimum control-rate threshold per CAV.

The rate threshold follows the rate-cost tradeoff for LQG control over a
rate-limited channel::

    R_min = eta + (n1 / 2) * log2(1 + n1 * det(N M)^(1/n1) / (l - l_min))

with ``eta = log2 |det A|``, ``N = A Sigma A^T - Sigma + Sigma_v`` built from
the steady-state Kalman error covariance and ``M = S B (R + B^T S B)^-1 B^T S``
from the LQR Riccati solution ``S``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np


class ControlError(ValueError):
    pass


class InfeasibleBudgetError(ControlError):
    def __init__(self, budget: float, l_min: float):
        super().__init__(f"LQR budget {budget:.6g} does not exceed the minimum cost {l_min:.6g}")
        self.budget = budget
        self.l_min = l_min


@dataclass(frozen=True)
class ControlPlant:
    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    Q: np.ndarray
    Q1: np.ndarray
    R: np.ndarray
    Sigma_v: np.ndarray
    Sigma_w: np.ndarray
    lqr_budget: float

    def __post_init__(self):
        for name in ("A", "B", "G", "Q", "Q1", "R", "Sigma_v", "Sigma_w"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        n1, n2, n3 = self.A.shape[0], self.B.shape[1], self.G.shape[0]
        shapes = {
            "A": (n1, n1),
            "B": (n1, n2),
            "G": (n3, n1),
            "Q": (n1, n1),
            "Q1": (n1, n1),
            "R": (n2, n2),
            "Sigma_v": (n1, n1),
            "Sigma_w": (n3, n3),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ControlError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        for name in ("Q", "Q1", "R", "Sigma_v", "Sigma_w"):
            M = getattr(self, name)
            if not np.allclose(M, M.T, atol=1e-10):
                raise ControlError(f"{name} must be symmetric")
            floor = np.linalg.eigvalsh(M).min()
            strict = name in ("R", "Sigma_w")
            if (strict and floor <= 0) or floor < -1e-10:
                raise ControlError(f"{name} must be positive {'definite' if strict else 'semidefinite'}")
        if math.isnan(self.lqr_budget):
            raise ControlError("lqr_budget must be a number")

    @property
    def n1(self) -> int:
        return self.A.shape[0]

    def to_dict(self) -> dict[str, Any]:
        out = {k: getattr(self, k).tolist() for k in ("A", "B", "G", "Q", "Q1", "R", "Sigma_v", "Sigma_w")}
        out["lqr_budget"] = float(self.lqr_budget)
        return out

    @classmethod
    def from_dict(cls, raw: dict[str, Any], key: str = "plant") -> "ControlPlant":
        from .scenario import ConfigError

        if not isinstance(raw, dict):
            raise ConfigError(key, "expected a mapping")
        allowed = {"A", "B", "G", "Q", "Q1", "R", "Sigma_v", "Sigma_w", "lqr_budget"}
        for k in raw:
            if k not in allowed:
                raise ConfigError(f"{key}.{k}", "unknown key")
        for k in allowed:
            if k not in raw:
                raise ConfigError(f"{key}.{k}", "missing")
        try:
            return cls(**raw)
        except (ControlError, ValueError, TypeError) as exc:
            raise ConfigError(key, str(exc)) from None


@dataclass(frozen=True)
class ControlDerived:
    S: np.ndarray
    M_mat: np.ndarray
    P: np.ndarray
    K_gain: np.ndarray
    Sigma: np.ndarray
    N_mat: np.ndarray
    l_min: float
    eta: float
    R_min: float


def _sym(X):
    return 0.5 * (X + X.T)


def dare_residual(A, B, Q, R, X) -> np.ndarray:
    """Residual of ``X = Q + A^T X A - A^T X B (R + B^T X B)^-1 B^T X A``."""
    XB = X @ B
    gain = XB @ np.linalg.solve(R + B.T @ XB, XB.T)
    return Q + A.T @ (X - gain) @ A - X


def solve_dare(A, B, Q, R, tol: float = 1e-11, max_iters: int = 100_000) -> np.ndarray:
    """Stabilising solution of the control-form DARE.

    Runs the Riccati value iteration in doubled form (structure-preserving
    doubling: step k advances the recursion by 2**k steps), then polishes with
    plain fixed-point sweeps.  Raises ``ControlError`` when the iteration does
    not settle, which happens for non-stabilisable / non-detectable data.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    I = np.eye(n)
    Ak = A.copy()
    Gk = B @ np.linalg.solve(R, B.T)
    Hk = np.asarray(Q, dtype=float).copy()
    iters = 0
    converged = False
    while iters < max_iters:
        iters += 1
        try:
            W = np.linalg.inv(I + Gk @ Hk)
        except np.linalg.LinAlgError:
            break
        AW = Ak @ W
        H_next = _sym(Hk + Ak.T @ Hk @ W @ Ak)
        G_next = _sym(Gk + AW @ Gk @ Ak.T)
        Ak = AW @ Ak
        if not (np.all(np.isfinite(H_next)) and np.all(np.isfinite(Ak))):
            break
        change = np.linalg.norm(H_next - Hk)
        Hk, Gk = H_next, G_next
        if change <= tol * (1.0 + np.linalg.norm(Hk)):
            converged = True
            break
        if iters > 200:
            break
    X = Hk
    # fixed-point polish
    for _ in range(min(max_iters, 1000)):
        res = dare_residual(A, B, Q, R, X)
        if not np.all(np.isfinite(res)):
            converged = False
            break
        if np.linalg.norm(res) <= tol * (1.0 + np.linalg.norm(X)):
            converged = True
            break
        X = _sym(X + res)
    if not converged:
        raise ControlError("Riccati iteration did not converge (not stabilizable/detectable?)")
    return X


def solve_dare_lqr(plant: ControlPlant, tol: float = 1e-11, max_iters: int = 100_000):
    """LQR Riccati solution ``S`` and ``M = S B (R + B^T S B)^-1 B^T S``."""
    try:
        S = solve_dare(plant.A, plant.B, plant.Q, plant.R, tol, max_iters)
    except ControlError:
        raise ControlError("LQR Riccati iteration did not converge; (A, B) not stabilizable?") from None
    SB = S @ plant.B
    M = _sym(SB @ np.linalg.solve(plant.R + plant.B.T @ SB, SB.T))
    return S, M


def solve_dare_filter(plant: ControlPlant, tol: float = 1e-11, max_iters: int = 100_000):
    """Kalman steady state: prior covariance ``P``, gain ``K`` and error covariance."""
    A, G = plant.A, plant.G
    try:
        P = solve_dare(A.T, G.T, plant.Sigma_v, plant.Sigma_w, tol, max_iters)
    except ControlError:
        raise ControlError("filter Riccati iteration did not converge; (A, G) not detectable?") from None
    innov = G @ P @ G.T + plant.Sigma_w
    K = np.linalg.solve(innov, G @ P).T
    Sigma = _sym(P - K @ innov @ K.T)
    return P, K, Sigma


def entropy_rate(A: np.ndarray, clamp: bool = True) -> float:
    det = abs(float(np.linalg.det(A)))
    if det == 0.0:
        return 0.0 if clamp else -math.inf
    eta = math.log2(det)
    return max(eta, 0.0) if clamp else eta


def aux_matrices(plant: ControlPlant, S, M_mat, Sigma, entropy_clamp: bool = True):
    """(N, l_min, eta) from the Riccati/Kalman products."""
    A = plant.A
    if plant.Sigma_w.shape != S.shape:
        raise ControlError("minimum-cost formula needs measurement and state dimensions to agree")
    N = _sym(A @ Sigma @ A.T - Sigma + plant.Sigma_v)
    l_min = float(np.trace(plant.Sigma_w @ S) + np.trace(Sigma @ S @ A.T @ M_mat @ A))
    return N, l_min, entropy_rate(A, entropy_clamp)


def rate_threshold(n1: int, N, M_mat, eta: float, budget: float, l_min: float) -> float:
    if budget <= l_min:
        raise InfeasibleBudgetError(budget, l_min)
    det = max(float(np.linalg.det(N @ M_mat)), 0.0)
    if math.isinf(budget):
        return eta
    return eta + 0.5 * n1 * math.log2(1.0 + n1 * det ** (1.0 / n1) / (budget - l_min))


def min_rate_threshold(plant: ControlPlant, derived: ControlDerived) -> float:
    return rate_threshold(plant.n1, derived.N_mat, derived.M_mat, derived.eta, plant.lqr_budget, derived.l_min)


def control_qos_slack(rate: float, R_min: float) -> float:
    """Positive when the CAV rate meets its threshold (feasible iff >= -1e-9)."""
    return rate - R_min


def derive(plant: ControlPlant, tol: float = 1e-11, max_iters: int = 100_000, entropy_clamp: bool = True) -> ControlDerived:
    """All steady-state products for one CAV, including its rate threshold."""
    S, M = solve_dare_lqr(plant, tol, max_iters)
    P, K, Sigma = solve_dare_filter(plant, tol, max_iters)
    N, l_min, eta = aux_matrices(plant, S, M, Sigma, entropy_clamp)
    R_min = rate_threshold(plant.n1, N, M, eta, plant.lqr_budget, l_min)
    return ControlDerived(S, M, P, K, Sigma, N, l_min, eta, R_min)


def default_plant(lqr_budget: float | None = None) -> ControlPlant:
    """Repository-chosen CAV plant (two-state, mildly unstable).

    Its minimum LQR cost is computed, not tuned to any published figure; the
    default budget is twice that minimum.
    """
    A = np.array([[1.1, 0.1], [0.0, 1.05]])
    B = np.eye(2)
    G = np.eye(2)
    Q = np.eye(2)
    R = np.eye(2)
    Sigma_v = 0.1 * np.eye(2)
    Sigma_w = 0.05 * np.eye(2)
    if lqr_budget is None:
        probe = ControlPlant(A, B, G, Q, Q, R, Sigma_v, Sigma_w, math.inf)
        S, M = solve_dare_lqr(probe)
        _, _, Sigma = solve_dare_filter(probe)
        _, l_min, _ = aux_matrices(probe, S, M, Sigma)
        lqr_budget = round(2.0 * l_min, 4)
    return ControlPlant(A, B, G, Q, Q, R, Sigma_v, Sigma_w, lqr_budget)
