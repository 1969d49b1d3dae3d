import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from maiscc import driver, metrics, pso
from maiscc.channel import build_channel_set, count_spacing_violations
from maiscc.metrics import BeamVectors
from maiscc.scenario import PsoParams, ScenarioConfig, rng_stream

from conftest import crandn


def beams_for(cfg, seed=0):
    rng = np.random.default_rng(seed)
    M = cfg.num_antennas
    b = BeamVectors(crandn(rng, cfg.num_gus, M), crandn(rng, cfg.num_cavs, M), np.eye(M) * 0.1)
    return b.scaled(cfg.max_power / metrics.total_power(b))


def setup(cfg):
    prob = driver.setup(cfg)
    return prob.geometry, prob.R_min


def state_of(pos, vel, pbest, gbest):
    P = len(pos)
    return pso.SwarmState(
        np.asarray(pos, float), np.asarray(vel, float), np.asarray(pbest, float),
        np.zeros(P), np.ones(P, bool), np.asarray(gbest, float), 0.0, True,
    )  # fmt: skip


def test_inertia_schedule():
    params = PsoParams()
    assert pso.inertia(0, params) == pytest.approx(0.9)
    assert pso.inertia(params.max_iters, params) == pytest.approx(0.4)
    assert pso.inertia(params.max_iters // 2, params) == pytest.approx(0.65)
    assert pso.inertia(0, PsoParams(max_iters=0)) == 0.9


def test_velocity_unchanged_without_attraction():
    rng = np.random.default_rng(0)
    pos, vel = rng.uniform(0, 10, (3, 4, 2)), rng.uniform(-1, 1, (3, 4, 2))
    st_ = state_of(pos, vel, rng.uniform(0, 10, (3, 4, 2)), rng.uniform(0, 10, (4, 2)))
    out = pso.update_velocity(st_, PsoParams(cognitive=0, social=0), 1.0, rng, 10.0)
    np.testing.assert_array_equal(out, vel)


def test_velocity_decays_at_best_positions():
    rng = np.random.default_rng(1)
    pos = rng.uniform(0, 10, (1, 4, 2))
    vel = rng.uniform(-1, 1, (1, 4, 2))
    out = pso.update_velocity(state_of(pos, vel, pos, pos[0]), PsoParams(), 0.7, rng, 10.0)
    np.testing.assert_allclose(out, 0.7 * vel, atol=1e-15)


@pytest.mark.parametrize("per_coordinate", [False, True])
def test_velocity_arithmetic(per_coordinate):
    rng = np.random.default_rng(2)
    pos, vel = rng.uniform(0, 10, (2, 3, 2)), rng.uniform(-2, 2, (2, 3, 2))
    pbest, gbest = rng.uniform(0, 10, (2, 3, 2)), rng.uniform(0, 10, (3, 2))
    params = PsoParams(per_coordinate_draws=per_coordinate)
    out = pso.update_velocity(state_of(pos, vel, pbest, gbest), params, 0.8, np.random.default_rng(9), 10.0)
    replay = np.random.default_rng(9)
    shape = pos.shape if per_coordinate else (2, 1, 1)
    t1, t2 = replay.random(shape), replay.random(shape)
    ref = 0.8 * vel + 1.5 * t1 * (pbest - pos) + 1.5 * t2 * (gbest - pos)
    np.testing.assert_allclose(out, np.clip(ref, -10, 10), atol=1e-14)


def test_velocity_clamped():
    pos = np.zeros((1, 1, 2))
    out = pso.update_velocity(state_of(pos, np.full((1, 1, 2), 50.0), pos, pos[0]), PsoParams(), 1.0, np.random.default_rng(0), 10.0)
    np.testing.assert_array_equal(out, np.full((1, 1, 2), 10.0))


def test_position_update_and_clamping():
    r = np.array([[1.0, 2.0], [9.5, 0.5]])
    v = np.array([[0.5, -0.5], [1.0, -1.0]])
    out = pso.update_position(r, v, 1.0, 10.0)
    np.testing.assert_array_equal(out, [[1.5, 1.5], [10.0, 0.0]])


@given(st.integers(0, 10_000), st.floats(0.1, 3.0))
def test_positions_stay_in_region(seed, scale):
    rng = np.random.default_rng(seed)
    r = rng.uniform(0, 10, (5, 4, 2))
    v = rng.uniform(-10, 10, (5, 4, 2))
    out = pso.update_position(r, v, scale, 10.0)
    assert out.min() >= 0.0 and out.max() <= 10.0


def test_fitness_spacing_penalty_counts_pairs():
    cfg = ScenarioConfig(num_cavs=0, num_targets=0, plants=())
    geo, R_min = setup(cfg)
    beams = beams_for(cfg)
    pos = driver.fap_placement(cfg)
    clean = pso.fitness(pos, geo, beams, cfg, R_min)
    ch = build_channel_set(geo, pos)
    assert clean == pytest.approx(metrics.sum_rate(ch, beams, cfg.noise_power), rel=1e-12)
    crowded = pos.copy()
    crowded[1] = crowded[0] + [0.1, 0.0]
    crowded[3] = crowded[2] + [0.0, -0.2]
    assert count_spacing_violations(crowded[None], 0.5)[0] == 2
    ch = build_channel_set(geo, crowded)
    ref = metrics.sum_rate(ch, beams, cfg.noise_power) - 200.0
    assert pso.fitness(crowded, geo, beams, cfg, R_min) == pytest.approx(ref, rel=1e-12)


def test_fitness_all_penalties():
    cfg = ScenarioConfig(sense_thresh_dbm=60.0, seed=3)
    geo, R_min = setup(cfg)
    beams = beams_for(cfg).scaled(1e-6)
    pos = driver.fap_placement(cfg)
    pos[5] = pos[4] + [0.05, 0.05]
    b = pso.evaluate_swarm(pos[None], geo, beams, cfg, R_min)
    assert b.sensing_violated[0] and b.control_violated[0] and b.spacing_pairs[0] >= 1
    ch = build_channel_set(geo, pos)
    ref = metrics.sum_rate(ch, beams, cfg.noise_power) - 100.0 - 100.0 - 100.0 * b.spacing_pairs[0]
    assert pso.fitness(pos, geo, beams, cfg, R_min) == pytest.approx(ref, rel=1e-12)
    assert not b.feasible[0]


def test_single_particle_keeps_seed():
    cfg = ScenarioConfig(pso=PsoParams(swarm_size=1, max_iters=0))
    geo, R_min = setup(cfg)
    seed_pos = driver.fap_placement(cfg)
    st_ = pso.init_swarm(cfg, geo, beams_for(cfg), R_min, np.random.default_rng(0), seed_pos)
    np.testing.assert_array_equal(st_.gbest_pos, seed_pos)


def test_swarm_init_deterministic_and_uniform():
    cfg = ScenarioConfig(pso=PsoParams(swarm_size=625))
    geo, R_min = setup(cfg)
    beams = beams_for(cfg)
    a = pso.init_swarm(cfg, geo, beams, R_min, rng_stream(5, "pso"))
    b = pso.init_swarm(cfg, geo, beams, R_min, rng_stream(5, "pso"))
    np.testing.assert_array_equal(a.positions, b.positions)
    coords = a.positions.ravel()
    assert coords.size == 10_000
    assert stats.kstest(coords / cfg.region_size, "uniform").pvalue > 0.01


def test_zero_iterations_return_initial_best():
    cfg = ScenarioConfig(pso=PsoParams(swarm_size=30, max_iters=0))
    geo, R_min = setup(cfg)
    beams = beams_for(cfg)
    res = pso.optimize_positions(cfg, geo, beams, R_min, rng_stream(0, "pso"))
    init = pso.init_swarm(cfg, geo, beams, R_min, rng_stream(0, "pso"))
    assert res.fitness == init.pbest_fit.max()
    assert len(res.trace) == 1


def test_gbest_trace_non_decreasing_single_antenna():
    cfg = ScenarioConfig(num_antennas=1, pso=PsoParams(swarm_size=15, max_iters=40))
    geo, R_min = setup(cfg)
    res = pso.optimize_positions(cfg, geo, beams_for(cfg), R_min, rng_stream(0, "pso"))
    fits = [f for _, f, _ in res.trace]
    assert np.all(np.diff(fits) >= 0)


def test_determinism_and_region():
    cfg = ScenarioConfig(pso=PsoParams(swarm_size=20, max_iters=15))
    geo, R_min = setup(cfg)
    beams = beams_for(cfg)
    a = pso.optimize_positions(cfg, geo, beams, R_min, rng_stream(1, "pso"))
    b = pso.optimize_positions(cfg, geo, beams, R_min, rng_stream(1, "pso"))
    np.testing.assert_array_equal(a.placement.positions, b.placement.positions)
    assert a.fitness == b.fitness
    assert a.placement.positions.min() >= 0 and a.placement.positions.max() <= cfg.region_size
    fits = [f for _, f, _ in a.trace]
    assert np.all(np.diff(fits) >= 0)


def test_huge_spacing_penalty_respects_min_spacing():
    params = PsoParams(swarm_size=30, max_iters=30, penalty_spacing=1e6)
    cfg = ScenarioConfig(num_cavs=0, num_targets=0, plants=(), pso=params)
    geo, R_min = setup(cfg)
    res = pso.optimize_positions(cfg, geo, beams_for(cfg), R_min, rng_stream(2, "pso"), driver.fap_placement(cfg))
    assert res.placement.spacing_violations(cfg.min_spacing) == 0


def test_warm_start_fallback_when_nothing_feasible():
    cfg = ScenarioConfig(sense_thresh_dbm=60.0, pso=PsoParams(swarm_size=5, max_iters=3))
    geo, R_min = setup(cfg)
    warm = driver.fap_placement(cfg)
    res = pso.optimize_positions(cfg, geo, beams_for(cfg), R_min, rng_stream(0, "pso"), warm)
    assert res.fell_back and not res.feasible
    np.testing.assert_array_equal(res.placement.positions, warm)


def test_warm_start_is_never_lost():
    cfg = ScenarioConfig(pso=PsoParams(swarm_size=10, max_iters=5))
    geo, R_min = setup(cfg)
    beams = beams_for(cfg)
    warm = driver.fap_placement(cfg)
    res = pso.optimize_positions(cfg, geo, beams, R_min, rng_stream(0, "pso"), warm)
    assert res.fitness >= pso.fitness(warm, geo, beams, cfg, R_min)
