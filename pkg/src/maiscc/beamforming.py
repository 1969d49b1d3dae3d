"""SCA-linearised semidefinite-relaxation beamforming for a fixed placement.

Internally the lifted variables are normalised by the power budget
(``X = P_max * X_tilde``) and channel Gram matrices by the noise power
(``H_tilde = P_max / sigma^2 * h h^H``), so interference-plus-noise terms are
measured in noise units and the power row reads ``sum tr(X_tilde) <= 1``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import metrics, sdp
from .channel import ChannelSet
from .metrics import BeamVectors, LiftedBeamforming
from .scenario import ScenarioConfig

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)


class InfeasibleScenarioError(RuntimeError):
    """No beamformer satisfies the sensing/control/power constraints."""

    def __init__(self, message: str, slacks: dict | None = None):
        super().__init__(message)
        self.slacks = slacks or {}


class ExtractionError(RuntimeError):
    def __init__(self, message: str, ratios):
        super().__init__(message)
        self.ratios = ratios


def block_names(N: int, J: int) -> list[str]:
    return [f"W_gu{n}" for n in range(N)] + [f"W_cav{j}" for j in range(J)] + ["R0"]


def _to_blocks(X: LiftedBeamforming, scale: float = 1.0) -> dict[str, np.ndarray]:
    N, J = len(X.W_gu), len(X.W_cav)
    mats = list(X.W_gu) + list(X.W_cav) + [X.R0]
    return {name: np.asarray(B) * scale for name, B in zip(block_names(N, J), mats)}


def _from_blocks(blocks: dict[str, np.ndarray], N: int, J: int, M: int, scale: float = 1.0) -> LiftedBeamforming:
    gu = np.array([blocks[f"W_gu{n}"] for n in range(N)]).reshape(N, M, M) * scale
    cav = np.array([blocks[f"W_cav{j}"] for j in range(J)]).reshape(J, M, M) * scale
    return LiftedBeamforming(gu, cav, np.asarray(blocks["R0"]) * scale)


@dataclass(frozen=True)
class ScaIterate:
    """Expansion point of the l-th SCA step with its interference terms."""

    X: LiftedBeamforming
    E: np.ndarray
    F: np.ndarray
    surrogate_value: float
    l: int


def make_iterate(channels: ChannelSet, X: LiftedBeamforming, noise: float, l: int = 0) -> ScaIterate:
    E, F = metrics.interference_terms(channels, X, noise)
    return ScaIterate(X, E, F, metrics.sum_rate(channels, X, noise), l)


def _surrogate(h, own_W, all_blocks, expansion_interf, noise):
    """Shared body of the GU/CAV surrogates; values in watts."""
    total = sum(all_blocks)
    received = float(np.real(h.conj() @ total @ h))
    interf = received - float(np.real(h.conj() @ own_W @ h)) + noise
    return math.log2(received + noise) - math.log2(expansion_interf) - (interf - expansion_interf) / (LN2 * expansion_interf)


def surrogate_rate_gu(n: int, channels: ChannelSet, X: LiftedBeamforming, iterate: ScaIterate, noise: float) -> float:
    """Concave minorant of R_n, tight at the expansion point."""
    return _surrogate(channels.h_gu[n], X.W_gu[n], list(X.blocks()), float(iterate.E[n]), noise)


def surrogate_rate_cav(j: int, channels: ChannelSet, X: LiftedBeamforming, iterate: ScaIterate, noise: float) -> float:
    return _surrogate(channels.h_cav[j], X.W_cav[j], list(X.blocks()), float(iterate.F[j]), noise)


def _rate_functional(gram: np.ndarray, own: str, names: list[str], expansion: float) -> sdp.Functional:
    """Surrogate of one rate in normalised units (expansion is in noise units)."""
    lin = {b: -gram / (LN2 * expansion) for b in names if b != own}
    const = -math.log2(expansion) + 1.0 / (LN2 * expansion) * (expansion - 1.0)
    log = sdp.LogTerm(1.0 / LN2, {b: gram for b in names}, 1.0)
    return sdp.Functional(lin, const, (log,))


def build_subproblem(channels: ChannelSet, iterate: ScaIterate, config: ScenarioConfig, R_min) -> sdp.SubproblemSpec:
    """Convex SDR surrogate problem at ``iterate`` (normalised variables).

    Blocks: one per GU beam, one per CAV beam, and R0.  Rows: one sensing
    row per target, one surrogate-rate row per CAV, and the power row.
    """
    P, noise = config.max_power, config.noise_power
    N, J = channels.h_gu.shape[0], channels.h_cav.shape[0]
    M = channels.num_antennas
    names = block_names(N, J)
    scale = P / noise
    E = np.asarray(iterate.E) / noise
    F = np.asarray(iterate.F) / noise

    objective_parts = [
        _rate_functional(scale * np.outer(channels.h_gu[n], channels.h_gu[n].conj()), f"W_gu{n}", names, E[n])
        for n in range(N)
    ]
    obj = _sum_functionals(objective_parts)
    cons = []
    need = metrics.sensing_threshold(channels.target_dist, config.sense_thresh) / P
    for k in range(channels.target_steer.shape[0]):
        a = channels.target_steer[k]
        A = np.outer(a, a.conj())
        cons.append(sdp.Constraint(sdp.Functional({b: A for b in names}), ">=", float(need[k]), f"sensing{k}"))
    for j in range(J):
        gram = scale * np.outer(channels.h_cav[j], channels.h_cav[j].conj())
        cons.append(sdp.Constraint(_rate_functional(gram, f"W_cav{j}", names, F[j]), ">=", float(R_min[j]), f"control{j}"))
    I = np.eye(M)
    cons.append(sdp.Constraint(sdp.Functional({b: I for b in names}), "<=", 1.0, "power"))
    return sdp.SubproblemSpec([(b, M) for b in names], obj, cons)


def _sum_functionals(parts: list[sdp.Functional]) -> sdp.Functional:
    coeffs: dict[str, np.ndarray] = {}
    const = 0.0
    logs: list[sdp.LogTerm] = []
    for fn in parts:
        for b, C in fn.coeffs.items():
            coeffs[b] = coeffs[b] + C if b in coeffs else C
        const += fn.const
        logs.extend(fn.log_terms)
    return sdp.Functional(coeffs, const, tuple(logs))


# ---------------------------------------------------------------------------
# constraint accounting


def control_slacks(channels: ChannelSet, x, noise: float, R_min) -> np.ndarray:
    return metrics.cav_rates(channels, x, noise) - np.asarray(R_min, dtype=float)


def relative_slacks(channels: ChannelSet, x, config: ScenarioConfig, R_min) -> dict[str, np.ndarray]:
    """Constraint slacks normalised by their thresholds (feasible iff >= -tol)."""
    need = metrics.sensing_threshold(channels.target_dist, config.sense_thresh)
    sens = metrics.sensing_slacks(channels, x, config.sense_thresh) / np.maximum(need, 1e-300)
    ctrl = control_slacks(channels, x, config.noise_power, R_min) / np.maximum(1.0, np.abs(R_min))
    power = (config.max_power - metrics.total_power(x)) / config.max_power
    return {"sensing": sens, "control": ctrl, "power": np.array([power])}


def is_feasible(channels, x, config, R_min, tol: float = 1e-6) -> bool:
    return all(np.all(v >= -tol) for v in relative_slacks(channels, x, config, R_min).values())


# ---------------------------------------------------------------------------
# initial point


def initial_feasible(channels: ChannelSet, config: ScenarioConfig, R_min) -> LiftedBeamforming:
    """Lifted point maximising the worst relative margin of the QoS rows.

    CAV rows use the exact SINR form ``tr(W_j H_j) >= gamma_j (F_j)``, which is
    linear in the lifted variables.  Raises ``InfeasibleScenarioError`` when the
    best margin is negative.
    """
    P, noise = config.max_power, config.noise_power
    N, J = channels.h_gu.shape[0], channels.h_cav.shape[0]
    K = channels.target_steer.shape[0]
    M = channels.num_antennas
    names = block_names(N, J)
    nblocks = len(names)
    if J == 0 and K == 0:
        eye = np.eye(M) * (P / (nblocks * M))
        return LiftedBeamforming(np.array([eye] * N).reshape(N, M, M), np.zeros((0, M, M), complex), eye.astype(complex))

    scale = P / noise
    gamma = 2.0 ** np.asarray(R_min, dtype=float) - 1.0
    need = metrics.sensing_threshold(channels.target_dist, config.sense_thresh) / P
    I = np.eye(M)

    rows = []  # (coeffs, const) with row value >= margin
    for k in range(K):
        a = channels.target_steer[k]
        A = np.outer(a, a.conj()) / need[k]
        rows.append(({b: A for b in names}, -1.0, f"sensing{k}"))
    for j in range(J):
        H = scale * np.outer(channels.h_cav[j], channels.h_cav[j].conj())
        g = max(gamma[j], 1e-12)
        coeffs = {b: -H for b in names}
        coeffs[f"W_cav{j}"] = H / g
        rows.append((coeffs, -1.0, f"control{j}"))

    # free margin t = tau - offset with a 1x1 PSD block tau
    uniform = {b: I / (nblocks * M) for b in names}
    t_uniform = min(sdp.evaluate(sdp.Functional(c, c0), uniform) for c, c0, _ in rows)
    offset = max(1.0, 1.0 - t_uniform)
    cap = 1.0
    one = np.ones((1, 1))
    cons = [
        sdp.Constraint(sdp.Functional({**c, "tau": -one}, c0 + offset), ">=", 0.0, name) for c, c0, name in rows
    ]
    cons.append(sdp.Constraint(sdp.Functional({b: I for b in names}), "<=", 1.0, "power"))
    cons.append(sdp.Constraint(sdp.Functional({"tau": one}), "<=", cap + offset, "cap"))
    spec = sdp.SubproblemSpec([(b, M) for b in names] + [("tau", 1)], sdp.Functional({"tau": one}), cons)
    x0 = {**{b: I / (2 * nblocks * M) for b in names}, "tau": one * max(offset + t_uniform - 0.5, 1e-3)}
    sol = sdp.solve(spec, x0=x0)
    if sol.status == "infeasible":
        raise InfeasibleScenarioError("feasibility program has no interior point")
    t_star = float(np.real(sol.blocks["tau"][0, 0])) - offset
    X = _from_blocks(sol.blocks, N, J, M, scale=P)
    if t_star < 0:
        slacks = {name: sdp.evaluate(sdp.Functional(c, c0), {b: sol.blocks[b] for b in names}) for c, c0, name in rows}
        raise InfeasibleScenarioError(f"QoS constraints infeasible (best margin {t_star:.3g})", slacks)
    return X


# ---------------------------------------------------------------------------
# SCA loop


@dataclass
class ScaTraceRow:
    l: int
    surrogate: float
    objective: float
    min_slack: float


@dataclass
class ScaResult:
    X: LiftedBeamforming
    trace: list[ScaTraceRow] = field(default_factory=list)
    iterations: int = 0


def _min_slack(channels, X, config, R_min) -> float:
    vals = np.concatenate(list(relative_slacks(channels, X, config, R_min).values()))
    return float(vals.min()) if vals.size else math.inf


def _interior_hint(X: LiftedBeamforming, P: float, mix: float = 1e-3) -> dict[str, np.ndarray]:
    """Normalised start point nudged off the PSD boundary.

    Lifted rank-one points sit on the cone boundary; a small blend with a
    scaled identity usually keeps every QoS row satisfied and spares the
    solver its feasibility phase (which it still runs if needed).
    """
    blocks = _to_blocks(X, 1.0 / P)
    M = X.R0.shape[0]
    spare = max(0.0, 1.0 - sum(float(np.real(np.trace(B))) for B in blocks.values()))
    fill = np.eye(M) * (mix + spare * 0.5) / (len(blocks) * M)
    return {k: (1 - mix) * B + fill for k, B in blocks.items()}


def sca_solve(channels: ChannelSet, config: ScenarioConfig, R_min, X0: LiftedBeamforming) -> ScaResult:
    """Maximise the GU sum rate by successive concave-minorant maximisation.

    Each step re-expands the interference terms at the previous solution and
    solves the relaxed subproblem.  The true objective never decreases: a step
    that fails to improve it is discarded and the loop stops.
    """
    noise, P = config.noise_power, config.max_power
    N, J = channels.h_gu.shape[0], channels.h_cav.shape[0]
    M = channels.num_antennas
    R_min = np.asarray(R_min, dtype=float).reshape(J)
    X = X0
    obj = metrics.sum_rate(channels, X, noise)
    result = ScaResult(X, [ScaTraceRow(0, obj, obj, _min_slack(channels, X, config, R_min))])
    for l in range(1, config.ao.sca_max_iters + 1):
        it = make_iterate(channels, X, noise, l)
        spec = build_subproblem(channels, it, config, R_min)
        start = _to_blocks(X, 1.0 / P)
        if not sdp.is_interior(spec, start):
            start = _interior_hint(X, P)
        sol = sdp.solve(spec, x0=start)
        result.iterations = l
        if sol.status == "infeasible":
            if l == 1:
                raise InfeasibleScenarioError("SCA subproblem infeasible at the initial point")
            break
        X_new = _from_blocks(sol.blocks, N, J, M, scale=P)
        obj_new = metrics.sum_rate(channels, X_new, noise)
        gain = sol.objective_value - obj
        improved = obj_new >= obj and is_feasible(channels, X_new, config, R_min)
        if improved:
            X, obj = X_new, obj_new
        result.trace.append(ScaTraceRow(l, sol.objective_value, obj, _min_slack(channels, X, config, R_min)))
        logger.debug("sca l=%d surrogate=%.6f objective=%.6f", l, sol.objective_value, obj)
        if not improved or gain <= config.ao.sca_tol:
            break
    result.X = X
    return result


# ---------------------------------------------------------------------------
# rank-one restoration


def rank_one_ratios(X: LiftedBeamforming) -> np.ndarray:
    out = []
    for W in list(X.W_gu) + list(X.W_cav):
        vals = np.linalg.eigvalsh(W)
        tr = vals.sum()
        out.append(float(vals[-1] / tr) if tr > 0 else 1.0)
    return np.array(out)


def _dominant(W: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(W)
    return math.sqrt(max(vals[-1], 0.0)) * vecs[:, -1]


def eigen_extract(X: LiftedBeamforming) -> BeamVectors:
    M = X.R0.shape[0]
    gu = np.array([_dominant(W) for W in X.W_gu]).reshape(-1, M)
    cav = np.array([_dominant(W) for W in X.W_cav]).reshape(-1, M)
    return BeamVectors(gu, cav, np.asarray(X.R0))


def covariance_preserving_extract(X: LiftedBeamforming, channels: ChannelSet) -> BeamVectors:
    """Rank-one beams that leave every SINR, beam-pattern gain and the power unchanged.

    ``w = W h / sqrt(h^H W h)`` keeps the useful power ``h^H W h`` and
    ``W - w w^H`` (PSD by Cauchy-Schwarz) moves into the sensing covariance,
    so the total transmit covariance is untouched.
    """
    M = X.R0.shape[0]
    R0 = np.array(X.R0, dtype=complex)

    def one(W, h):
        q = float(np.real(h.conj() @ W @ h))
        if q <= 0:
            return np.zeros(M, complex), W
        w = W @ h / math.sqrt(q)
        return w, W - np.outer(w, w.conj())

    gu, cav = [], []
    for W, h in zip(X.W_gu, channels.h_gu):
        w, rest = one(W, h)
        gu.append(w)
        R0 = R0 + rest
    for W, h in zip(X.W_cav, channels.h_cav):
        w, rest = one(W, h)
        cav.append(w)
        R0 = R0 + rest
    R0 = 0.5 * (R0 + R0.conj().T)
    return BeamVectors(np.array(gu).reshape(-1, M), np.array(cav).reshape(-1, M), R0)


def gaussian_randomization(
    X: LiftedBeamforming, channels: ChannelSet, config: ScenarioConfig, R_min, rng: np.random.Generator, samples: int = 200
) -> BeamVectors | None:
    """Best feasible draw of ``w ~ CN(0, W)`` per beam, scaled to the power budget."""
    noise, P = config.noise_power, config.max_power
    M = X.R0.shape[0]
    roots = []
    for W in list(X.W_gu) + list(X.W_cav):
        vals, vecs = np.linalg.eigh(W)
        roots.append(vecs * np.sqrt(np.maximum(vals, 0.0)))
    N = len(X.W_gu)
    best, best_val = None, -math.inf
    for _ in range(samples):
        ws = []
        for root in roots:
            z = (rng.standard_normal(M) + 1j * rng.standard_normal(M)) / math.sqrt(2)
            ws.append(root @ z)
        ws = np.array(ws).reshape(-1, M)
        cand = BeamVectors(ws[:N], ws[N:], np.asarray(X.R0))
        power = metrics.total_power(cand)
        if power > P:
            cand = cand.scaled(P / power)
        if not is_feasible(channels, cand, config, R_min):
            continue
        val = metrics.sum_rate(channels, cand, noise)
        if val > best_val:
            best, best_val = cand, val
    return best


@dataclass
class Extraction:
    beams: BeamVectors
    method: str
    ratios: np.ndarray


def rank_one_extract(
    X: LiftedBeamforming, channels: ChannelSet, config: ScenarioConfig, R_min, rng: np.random.Generator | None = None
) -> Extraction:
    """Recover vector beams from a relaxed solution.

    Tries the dominant eigenvector of each block first; if that breaks a
    constraint or loses objective, falls back to the covariance-preserving
    construction, then to Gaussian randomisation.
    """
    noise = config.noise_power
    ratios = rank_one_ratios(X)
    lifted_obj = metrics.sum_rate(channels, X, noise)
    beams = eigen_extract(X)
    if is_feasible(channels, beams, config, R_min) and metrics.sum_rate(channels, beams, noise) >= lifted_obj - 1e-9:
        return Extraction(beams, "eigen", ratios)
    beams = covariance_preserving_extract(X, channels)
    if is_feasible(channels, beams, config, R_min):
        return Extraction(beams, "covariance", ratios)
    if rng is None:
        from .scenario import rng_stream

        rng = rng_stream(config.seed, "randomization")
    beams = gaussian_randomization(X, channels, config, R_min, rng)
    if beams is None:
        raise ExtractionError("no feasible rank-one beams recovered", ratios)
    return Extraction(beams, "randomization", ratios)


def optimize_beams(channels: ChannelSet, config: ScenarioConfig, R_min, X0: LiftedBeamforming | None = None):
    """Feasible start (if needed) + SCA + extraction; returns (Extraction, ScaResult)."""
    if X0 is None:
        X0 = initial_feasible(channels, config, R_min)
    res = sca_solve(channels, config, R_min, X0)
    return rank_one_extract(res.X, channels, config, R_min), res
