"""Alternating optimisation of antenna positions and beams, plus baselines.

Each outer iteration runs the swarm over positions with the beams frozen,
then re-optimises the beams by SCA at the new placement.  Both halves are
warm-started from the incumbent, so the sum rate never decreases.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import beamforming as bf
from . import control, metrics, pso
from .channel import AntennaPlacement, ChannelSet, LinkGeometry, build_channel_set, count_spacing_violations
from .metrics import BeamVectors, LiftedBeamforming
from .scenario import ScenarioConfig, place_entities, rng_stream

logger = logging.getLogger(__name__)

MAX_PLACEMENT_ATTEMPTS = 10_000


@dataclass
class AoResult:
    scheme: str
    status: str  # converged | max_iters | infeasible
    placement: AntennaPlacement | None = None
    beams: BeamVectors | None = None
    lifted: LiftedBeamforming | None = None
    sum_rate: float = math.nan
    gu_rates: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cav_rates: np.ndarray = field(default_factory=lambda: np.zeros(0))
    R_min: np.ndarray = field(default_factory=lambda: np.zeros(0))
    slacks: dict[str, np.ndarray] = field(default_factory=dict)
    trace: list[tuple[int, float]] = field(default_factory=list)
    extraction: str = ""
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.status != "infeasible"

    @property
    def min_sensing_slack(self) -> float:
        s = self.slacks.get("sensing", np.zeros(0))
        return float(s.min()) if s.size else math.inf


@dataclass(frozen=True)
class Problem:
    """Per-seed data shared by every scheme: link geometry and rate thresholds."""

    config: ScenarioConfig
    geometry: LinkGeometry
    R_min: np.ndarray


def rate_thresholds(config: ScenarioConfig) -> np.ndarray:
    """Minimum control rate of every CAV; raises InfeasibleBudgetError."""
    ao = config.ao
    return np.array(
        [
            control.derive(p, ao.dare_tol, ao.dare_max_iters, config.entropy_clamp).R_min
            for p in config.cav_plants
        ],
        dtype=float,
    )


def setup(config: ScenarioConfig) -> Problem:
    layout = place_entities(config)
    return Problem(config, LinkGeometry.build(config, layout), rate_thresholds(config))


# ---------------------------------------------------------------------------
# placements


def fap_placement(config: ScenarioConfig) -> np.ndarray:
    """Rows of ``ceil(sqrt(2M))`` antennas at max(lambda/2, d_min), centred in the region.

    For M=8 this is the 4 x 2 half-wavelength grid.
    """
    M = config.num_antennas
    gap = max(0.5, config.min_spacing)
    cols = min(M, math.ceil(math.sqrt(2 * M)))
    pts = np.array([[gap * (k % cols), gap * (k // cols)] for k in range(M)], dtype=float)
    centre = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
    pts += config.region_size / 2 - centre
    if np.any(pts < 0) or np.any(pts > config.region_size):
        raise ValueError("fixed grid does not fit in the movement region")
    return pts


def rap_placement(config: ScenarioConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Uniform placement, redrawn as a whole until the spacing rule holds."""
    rng = rng if rng is not None else rng_stream(config.seed, "rap")
    M, D = config.num_antennas, config.region_size
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        pos = rng.uniform(0.0, D, size=(M, 2))
        if count_spacing_violations(pos[None], config.min_spacing)[0] == 0:
            return pos
    raise RuntimeError(f"no valid random placement in {MAX_PLACEMENT_ATTEMPTS} attempts; region too tight")


# ---------------------------------------------------------------------------
# result assembly


def _finish(scheme, status, prob: Problem, channels: ChannelSet, ex: bf.Extraction, lifted, trace, message=""):
    cfg = prob.config
    noise = cfg.noise_power
    slacks = bf.relative_slacks(channels, ex.beams, cfg, prob.R_min)
    slacks["spacing"] = np.array([-float(channels.placement.spacing_violations(cfg.min_spacing))])
    return AoResult(
        scheme=scheme,
        status=status,
        placement=channels.placement,
        beams=ex.beams,
        lifted=lifted,
        sum_rate=metrics.sum_rate(channels, ex.beams, noise),
        gu_rates=metrics.gu_rates(channels, ex.beams, noise),
        cav_rates=metrics.cav_rates(channels, ex.beams, noise),
        R_min=prob.R_min,
        slacks=slacks,
        trace=trace,
        extraction=ex.method,
        message=message,
    )


def _infeasible(scheme, prob: Problem, message: str) -> AoResult:
    logger.info("%s: infeasible (%s)", scheme, message)
    return AoResult(scheme=scheme, status="infeasible", R_min=prob.R_min, message=message)


def _beamform(prob: Problem, channels: ChannelSet, X0: LiftedBeamforming | None = None):
    cfg = prob.config
    if X0 is None:
        X0 = bf.initial_feasible(channels, cfg, prob.R_min)
    res = bf.sca_solve(channels, cfg, prob.R_min, X0)
    ex = bf.rank_one_extract(res.X, channels, cfg, prob.R_min, rng_stream(cfg.seed, "randomization"))
    return ex, res


def beamforming_only(scheme: str, prob: Problem, positions: np.ndarray) -> AoResult:
    """Fixed placement, beams optimised once (the baseline schemes)."""
    channels = build_channel_set(prob.geometry, positions)
    try:
        ex, res = _beamform(prob, channels)
    except (bf.InfeasibleScenarioError, bf.ExtractionError) as exc:
        return _infeasible(scheme, prob, str(exc))
    obj = metrics.sum_rate(channels, ex.beams, prob.config.noise_power)
    return _finish(scheme, "converged", prob, channels, ex, res.X, [(0, obj)])


def fap_baseline(config: ScenarioConfig, prob: Problem | None = None) -> AoResult:
    prob = prob or setup(config)
    return beamforming_only("fap", prob, fap_placement(config))


def rap_baseline(config: ScenarioConfig, rng: np.random.Generator | None = None, prob: Problem | None = None) -> AoResult:
    prob = prob or setup(config)
    return beamforming_only("rap", prob, rap_placement(config, rng))


# ---------------------------------------------------------------------------
# alternating optimisation


def _usable(prev: AoResult | None, prob: Problem) -> bool:
    """Whether a result from a neighbouring sweep point is feasible here."""
    if prev is None or prev.beams is None or prev.placement is None:
        return False
    channels = build_channel_set(prob.geometry, prev.placement)
    return bf.is_feasible(channels, prev.beams, prob.config, prob.R_min)


def alternating_optimize(
    config: ScenarioConfig,
    rng: np.random.Generator | None = None,
    prob: Problem | None = None,
    warm_start: AoResult | None = None,
    baselines: dict[str, AoResult] | None = None,
) -> AoResult:
    """Alternate swarm placement search and SCA beamforming until the gain stalls.

    The starting point follows ``config.ao.init_placement``: the fixed grid,
    the random placement, or whichever of the two scores higher after
    beamforming.  Pre-computed baseline results may be passed in to avoid
    solving them twice.  ``warm_start`` (e.g. the solution at a looser
    neighbouring sweep point) replaces the start when it is feasible here and
    better.
    """
    prob = prob or setup(config)
    cfg = prob.config
    rng = rng if rng is not None else rng_stream(cfg.seed, "pso")
    baselines = dict(baselines or {})
    noise = cfg.noise_power

    mode = cfg.ao.init_placement
    wanted = ("fap", "rap") if mode == "best" else (mode,)
    starts = []
    for name in wanted:
        res = baselines.get(name)
        if res is None:
            res = fap_baseline(cfg, prob) if name == "fap" else rap_baseline(cfg, prob=prob)
        if res.feasible:
            starts.append(res)
    if _usable(warm_start, prob):
        channels = build_channel_set(prob.geometry, warm_start.placement)
        ws = AoResult("warm", "converged", warm_start.placement, warm_start.beams, warm_start.lifted)
        ws.sum_rate = metrics.sum_rate(channels, warm_start.beams, noise)
        starts.append(ws)
    if not starts:
        return _infeasible("ao", prob, "no feasible starting point")
    best = max(starts, key=lambda r: r.sum_rate)  # first wins ties

    placement, beams, lifted = best.placement, best.beams, best.lifted
    channels = build_channel_set(prob.geometry, placement)
    obj = metrics.sum_rate(channels, beams, noise)
    trace = [(0, obj)]
    ex = bf.Extraction(beams, best.extraction or "warm", bf.rank_one_ratios(beams.lift()))
    status = "max_iters"
    for o in range(1, cfg.ao.max_outer + 1):
        found = pso.optimize_positions(cfg, prob.geometry, beams, prob.R_min, rng, placement)
        cand_channels = build_channel_set(prob.geometry, found.placement)
        try:
            cand_ex, cand_res = _beamform(prob, cand_channels, beams.lift())
        except (bf.InfeasibleScenarioError, bf.ExtractionError) as exc:
            logger.info("outer %d: beamforming failed at the new placement (%s)", o, exc)
            cand_ex = None
        gain = 0.0
        if cand_ex is not None:
            cand_obj = metrics.sum_rate(cand_channels, cand_ex.beams, noise)
            if cand_obj >= obj and bf.is_feasible(cand_channels, cand_ex.beams, cfg, prob.R_min):
                gain = cand_obj - obj
                placement, beams, lifted, channels, ex, obj = (
                    found.placement,
                    cand_ex.beams,
                    cand_res.X,
                    cand_channels,
                    cand_ex,
                    cand_obj,
                )
        trace.append((o, obj))
        logger.debug("outer %d objective %.6f gain %.3g", o, obj, gain)
        if gain <= cfg.ao.outer_tol:
            status = "converged"
            break
    return _finish("ao", status, prob, channels, ex, lifted, trace)


def run_scheme(scheme: str, config: ScenarioConfig, prob: Problem | None = None, **kwargs) -> AoResult:
    prob = prob or setup(config)
    if scheme == "ao":
        return alternating_optimize(config, prob=prob, **kwargs)
    if scheme == "rap":
        return rap_baseline(config, prob=prob)
    if scheme == "fap":
        return fap_baseline(config, prob=prob)
    raise ValueError(f"unknown scheme {scheme!r}")
