"""Particle swarm search over antenna positions with fixed beams.

Constraints enter the fitness as penalties: one flat penalty if any sensing
target is under-illuminated, one if any CAV misses its rate threshold, and one
per antenna pair closer than the minimum spacing.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .channel import AntennaPlacement, LinkGeometry, count_spacing_violations
from .metrics import BeamVectors
from .scenario import PsoParams, ScenarioConfig

logger = logging.getLogger(__name__)

# relative tolerance shared with the beamforming feasibility checks
FEAS_TOL = 1e-6


@dataclass
class SwarmState:
    positions: np.ndarray  # (P, M, 2)
    velocities: np.ndarray  # (P, M, 2)
    pbest_pos: np.ndarray
    pbest_fit: np.ndarray  # (P,)
    pbest_feasible: np.ndarray  # (P,) bool
    gbest_pos: np.ndarray  # (M, 2)
    gbest_fit: float
    gbest_feasible: bool
    iteration: int = 0

    def refresh_gbest(self) -> None:
        # first index wins ties, so the result does not depend on evaluation order
        k = int(np.argmax(self.pbest_fit))
        self.gbest_pos = self.pbest_pos[k].copy()
        self.gbest_fit = float(self.pbest_fit[k])
        self.gbest_feasible = bool(self.pbest_feasible[k])


@dataclass(frozen=True)
class FitnessBreakdown:
    sum_rate: np.ndarray
    sensing_violated: np.ndarray
    control_violated: np.ndarray
    spacing_pairs: np.ndarray

    @property
    def feasible(self) -> np.ndarray:
        return ~self.sensing_violated & ~self.control_violated & (self.spacing_pairs == 0)


@dataclass
class PsoResult:
    placement: AntennaPlacement
    fitness: float
    feasible: bool
    fell_back: bool
    trace: list[tuple[int, float, bool]] = field(default_factory=list)


def evaluate_swarm(
    positions: np.ndarray, geometry: LinkGeometry, beams: BeamVectors, config: ScenarioConfig, R_min
) -> FitnessBreakdown:
    """Rates and constraint status for a batch of placements (P, M, 2)."""
    positions = np.asarray(positions, dtype=float)
    h_gu, h_cav, a_t = geometry.channels_batch(positions)
    gu_r, cav_r = metrics.batch_rates(h_gu, h_cav, beams, config.noise_power)
    R_min = np.asarray(R_min, dtype=float).reshape(-1)
    gain = metrics.batch_beampattern(a_t, beams)
    need = metrics.sensing_threshold(geometry.target_dist, config.sense_thresh)
    sens_bad = np.any(gain < need * (1 - FEAS_TOL), axis=1)
    ctrl_bad = np.any(cav_r < R_min - FEAS_TOL * np.maximum(1.0, np.abs(R_min)), axis=1)
    pairs = count_spacing_violations(positions, config.min_spacing)
    return FitnessBreakdown(gu_r.sum(axis=1), sens_bad, ctrl_bad, pairs)


def penalised(b: FitnessBreakdown, params: PsoParams) -> np.ndarray:
    return (
        b.sum_rate
        - params.penalty_sensing * b.sensing_violated
        - params.penalty_control * b.control_violated
        - params.penalty_spacing * b.spacing_pairs
    )


def fitness(positions, geometry: LinkGeometry, beams: BeamVectors, config: ScenarioConfig, R_min) -> np.ndarray:
    """Penalised sum rate for one placement (M, 2) or a batch (P, M, 2)."""
    positions = np.asarray(positions, dtype=float)
    single = positions.ndim == 2
    batch = positions[None] if single else positions
    out = penalised(evaluate_swarm(batch, geometry, beams, config, R_min), config.pso)
    return float(out[0]) if single else out


def inertia(i: int, params: PsoParams) -> float:
    """Linearly decreasing inertia weight over ``params.max_iters`` iterations."""
    T = params.max_iters
    if T == 0:
        return params.inertia_max
    return params.inertia_max - (params.inertia_max - params.inertia_min) * i / T


def update_velocity(state: SwarmState, params: PsoParams, omega: float, rng: np.random.Generator, region: float):
    """New velocities for all particles; |v| is clamped to the region size."""
    P = state.positions.shape[0]
    shape = state.positions.shape if params.per_coordinate_draws else (P, 1, 1)
    tau1 = rng.random(shape)
    tau2 = rng.random(shape)
    v = (
        omega * state.velocities
        + params.cognitive * tau1 * (state.pbest_pos - state.positions)
        + params.social * tau2 * (state.gbest_pos[None] - state.positions)
    )
    return np.clip(v, -region, region)


def update_position(r, v, step_scale: float, region: float) -> np.ndarray:
    return np.clip(r + step_scale * v, 0.0, region)


def init_swarm(
    config: ScenarioConfig,
    geometry: LinkGeometry,
    beams: BeamVectors,
    R_min,
    rng: np.random.Generator,
    seed_placement: AntennaPlacement | np.ndarray | None = None,
) -> SwarmState:
    P, M, D = config.pso.swarm_size, config.num_antennas, config.region_size
    pos = rng.uniform(0.0, D, size=(P, M, 2))
    if seed_placement is not None:
        pos[0] = np.asarray(getattr(seed_placement, "positions", seed_placement), dtype=float)
    b = evaluate_swarm(pos, geometry, beams, config, R_min)
    fit = penalised(b, config.pso)
    state = SwarmState(pos, np.zeros_like(pos), pos.copy(), fit, b.feasible.copy(), pos[0].copy(), -np.inf, False)
    state.refresh_gbest()
    return state


def step(state: SwarmState, config: ScenarioConfig, geometry, beams, R_min, rng) -> SwarmState:
    """One velocity/position/best update of the whole swarm (in place)."""
    params, D = config.pso, config.region_size
    state.iteration += 1
    omega = inertia(state.iteration, params)
    state.velocities = update_velocity(state, params, omega, rng, D)
    state.positions = update_position(state.positions, state.velocities, params.step_scale, D)
    b = evaluate_swarm(state.positions, geometry, beams, config, R_min)
    fit = penalised(b, params)
    better = fit > state.pbest_fit
    state.pbest_pos[better] = state.positions[better]
    state.pbest_fit[better] = fit[better]
    state.pbest_feasible[better] = b.feasible[better]
    state.refresh_gbest()
    return state


def optimize_positions(
    config: ScenarioConfig,
    geometry: LinkGeometry,
    beams: BeamVectors,
    R_min,
    rng: np.random.Generator,
    warm_start: AntennaPlacement | np.ndarray | None = None,
) -> PsoResult:
    """Run the swarm for ``max_iters`` iterations and return the best placement.

    The warm start seeds particle 0, so the returned fitness is never below
    the incumbent's.  If the best particle still violates a constraint the
    warm start is returned instead.
    """
    state = init_swarm(config, geometry, beams, R_min, rng, warm_start)
    trace = [(0, state.gbest_fit, state.gbest_feasible)]
    for _ in range(config.pso.max_iters):
        step(state, config, geometry, beams, R_min, rng)
        trace.append((state.iteration, state.gbest_fit, state.gbest_feasible))
    if not state.gbest_feasible and warm_start is not None:
        logger.info("swarm best violates constraints; keeping the warm start")
        ws = np.asarray(getattr(warm_start, "positions", warm_start), dtype=float)
        return PsoResult(AntennaPlacement(ws), fitness(ws, geometry, beams, config, R_min), False, True, trace)
    return PsoResult(AntennaPlacement(state.gbest_pos), state.gbest_fit, state.gbest_feasible, False, trace)
