import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maiscc import beamforming as bf
from maiscc import driver, metrics, sdp
from maiscc.channel import build_channel_set
from maiscc.metrics import BeamVectors, LiftedBeamforming
from maiscc.scenario import ScenarioConfig, rng_stream

from conftest import crandn, random_psd, toy_channels


def default_instance(seed=0, **kw):
    cfg = ScenarioConfig(seed=seed, **kw)
    prob = driver.setup(cfg)
    return cfg, prob, build_channel_set(prob.geometry, driver.fap_placement(cfg))


def random_lifted(rng, N, J, M, scale=1.0, rank=None):
    return LiftedBeamforming(
        np.array([random_psd(rng, M, rank, scale) for _ in range(N)]).reshape(N, M, M),
        np.array([random_psd(rng, M, rank, scale) for _ in range(J)]).reshape(J, M, M),
        random_psd(rng, M, rank, scale),
    )


def perturbed(rng, X, spread):
    """Random PSD point around X (each block moved independently)."""
    M = X.R0.shape[0]
    move = lambda B: B * rng.uniform(0, 2) + random_psd(rng, M, int(rng.integers(1, M + 1)), spread)
    return LiftedBeamforming(
        np.array([move(B) for B in X.W_gu]).reshape(X.W_gu.shape),
        np.array([move(B) for B in X.W_cav]).reshape(X.W_cav.shape),
        move(X.R0),
    )


def test_surrogate_exact_at_expansion_point():
    rng = np.random.default_rng(0)
    M, noise = 4, 0.1
    ch = toy_channels(crandn(rng, 3, M), crandn(rng, 2, M))
    X = random_lifted(rng, 3, 2, M)
    it = bf.make_iterate(ch, X, noise)
    for n in range(3):
        assert abs(bf.surrogate_rate_gu(n, ch, X, it, noise) - metrics.gu_rates(ch, X, noise)[n]) <= 1e-9
    for j in range(2):
        assert abs(bf.surrogate_rate_cav(j, ch, X, it, noise) - metrics.cav_rates(ch, X, noise)[j]) <= 1e-9


def test_surrogate_exact_without_interference():
    rng = np.random.default_rng(1)
    M, noise = 3, 0.2
    ch = toy_channels(crandn(rng, 1, M))
    zero = np.zeros((M, M))
    X0 = LiftedBeamforming(np.array([random_psd(rng, M)]), np.zeros((0, M, M)), zero)
    it = bf.make_iterate(ch, X0, noise)
    for _ in range(10):
        X = LiftedBeamforming(np.array([random_psd(rng, M, scale=5)]), np.zeros((0, M, M)), zero)
        assert bf.surrogate_rate_gu(0, ch, X, it, noise) == pytest.approx(metrics.gu_rates(ch, X, noise)[0], abs=1e-12)


@given(st.integers(0, 10_000))
def test_surrogate_is_minorant(seed):
    rng = np.random.default_rng(seed)
    M, noise = 4, 0.05
    ch = toy_channels(crandn(rng, 3, M), crandn(rng, 2, M))
    X = random_lifted(rng, 3, 2, M)
    it = bf.make_iterate(ch, X, noise)
    for _ in range(100):
        Y = perturbed(rng, X, spread=float(rng.uniform(0.01, 3)))
        gu, cav = metrics.gu_rates(ch, Y, noise), metrics.cav_rates(ch, Y, noise)
        for n in range(3):
            assert bf.surrogate_rate_gu(n, ch, Y, it, noise) <= gu[n] + 1e-9
        for j in range(2):
            assert bf.surrogate_rate_cav(j, ch, Y, it, noise) <= cav[j] + 1e-9


def test_subproblem_objective_matches_surrogate():
    cfg, prob, ch = default_instance(seed=1)
    X = bf.initial_feasible(ch, cfg, prob.R_min)
    it = bf.make_iterate(ch, X, cfg.noise_power)
    spec = bf.build_subproblem(ch, it, cfg, prob.R_min)
    rng = np.random.default_rng(0)
    for _ in range(5):
        Y = perturbed(rng, X, spread=1.0)
        blocks = bf._to_blocks(Y, 1.0 / cfg.max_power)
        ref = sum(bf.surrogate_rate_gu(n, ch, Y, it, cfg.noise_power) for n in range(3))
        assert sdp.evaluate(spec.objective, blocks) == pytest.approx(ref, abs=1e-9)
        for j in range(2):
            con = spec.constraints[3 + j]
            ref = bf.surrogate_rate_cav(j, ch, Y, it, cfg.noise_power)
            assert sdp.evaluate(con.functional, blocks) == pytest.approx(ref, abs=1e-9)


def _toy_config(**kw):
    base = dict(num_gus=1, num_cavs=0, num_targets=0, plants=())
    base.update(kw)
    return ScenarioConfig(**base)


def test_subproblem_structure():
    rng = np.random.default_rng(2)
    M = 3
    cfg = _toy_config(num_antennas=M)
    ch = toy_channels(crandn(rng, 1, M))
    X = random_lifted(rng, 1, 0, M)
    spec = bf.build_subproblem(ch, bf.make_iterate(ch, X, cfg.noise_power), cfg, [])
    assert [b for b, _ in spec.blocks] == ["W_gu0", "R0"]
    assert [(c.name, c.sense) for c in spec.constraints] == [("power", "<=")]
    cfg = _toy_config(num_antennas=M, num_targets=1)
    ch = toy_channels(crandn(rng, 1, M), target_steer=np.ones(M), target_dist=[100.0])
    spec = bf.build_subproblem(ch, bf.make_iterate(ch, X, cfg.noise_power), cfg, [])
    assert [(c.name, c.sense) for c in spec.constraints] == [("sensing0", ">="), ("power", "<=")]


def test_subproblem_structure_default_shape():
    cfg, prob, ch = default_instance()
    X = bf.initial_feasible(ch, cfg, prob.R_min)
    spec = bf.build_subproblem(ch, bf.make_iterate(ch, X, cfg.noise_power), cfg, prob.R_min)
    assert len(spec.blocks) == 3 + 2 + 1
    assert len(spec.constraints) == 3 + 2 + 1
    assert sum(c.sense == ">=" for c in spec.constraints) == 3 + 2


def test_initial_feasible_trivial_case():
    rng = np.random.default_rng(3)
    M = 4
    cfg = _toy_config(num_antennas=M, num_gus=2)
    X = bf.initial_feasible(toy_channels(crandn(rng, 2, M) * 1e-5), cfg, [])
    assert metrics.total_power(X) == pytest.approx(cfg.max_power, rel=1e-12)
    np.testing.assert_allclose(X.W_gu[0], X.R0)
    np.testing.assert_allclose(X.R0, np.eye(M) * X.R0[0, 0])


def test_initial_feasible_loose_qos():
    cfg, prob, ch = default_instance(seed=2, sense_thresh_dbm=-200.0)
    R_min = np.full(2, 1e-6)
    X = bf.initial_feasible(ch, cfg, R_min)
    slacks = bf.relative_slacks(ch, X, cfg, R_min)
    assert np.all(slacks["sensing"] > 0) and np.all(slacks["control"] > 0)
    assert slacks["power"][0] >= -1e-9


def test_initial_feasible_census():
    ok = 0
    for seed in range(20):
        cfg, prob, ch = default_instance(seed=seed)
        try:
            X = bf.initial_feasible(ch, cfg, prob.R_min)
        except bf.InfeasibleScenarioError:
            continue
        ok += bf.is_feasible(ch, X, cfg, prob.R_min)
    assert ok >= 18


def test_initial_feasible_reports_infeasibility():
    cfg, prob, ch = default_instance(seed=0, sense_thresh_dbm=40.0)
    with pytest.raises(bf.InfeasibleScenarioError):
        bf.initial_feasible(ch, cfg, prob.R_min)


def test_sca_single_user_reaches_mrt_rate():
    rng = np.random.default_rng(4)
    M = 4
    cfg = _toy_config(num_antennas=M, max_power_dbm=30.0)
    h = crandn(rng, 1, M) * 1e-5
    ch = toy_channels(h)
    res = bf.sca_solve(ch, cfg, [], bf.initial_feasible(ch, cfg, []))
    best = math.log2(1 + cfg.max_power * np.linalg.norm(h) ** 2 / cfg.noise_power)
    assert metrics.sum_rate(ch, res.X, cfg.noise_power) == pytest.approx(best, abs=1e-3)


@pytest.mark.parametrize("seed", [0, 3])
def test_sca_trace_monotone_and_feasible(seed):
    cfg, prob, ch = default_instance(seed=seed)
    res = bf.sca_solve(ch, cfg, prob.R_min, bf.initial_feasible(ch, cfg, prob.R_min))
    objs = [row.objective for row in res.trace]
    assert np.all(np.diff(objs) >= -1e-6)
    assert all(row.min_slack >= -1e-6 for row in res.trace)
    assert bf.is_feasible(ch, res.X, cfg, prob.R_min)


def test_sca_fixed_point_single_iteration():
    cfg, prob, ch = default_instance(seed=0)
    first = bf.sca_solve(ch, cfg, prob.R_min, bf.initial_feasible(ch, cfg, prob.R_min))
    again = bf.sca_solve(ch, cfg, prob.R_min, first.X)
    assert again.iterations == 1
    before = metrics.sum_rate(ch, first.X, cfg.noise_power)
    after = metrics.sum_rate(ch, again.X, cfg.noise_power)
    assert before - 1e-9 <= after <= before + cfg.ao.sca_tol


def test_extract_exact_rank_one():
    rng = np.random.default_rng(5)
    M = 4
    w = crandn(rng, 2, M)
    X = BeamVectors(w, np.zeros((0, M)), np.zeros((M, M))).lift()
    out = bf.eigen_extract(X)
    for n in range(2):
        assert abs(np.vdot(out.w_gu[n], w[n])) == pytest.approx(np.linalg.norm(w[n]) ** 2, rel=1e-10)


def test_extract_continuity_near_rank_one():
    rng = np.random.default_rng(6)
    M = 4
    ch = toy_channels(crandn(rng, 2, M), crandn(rng, 1, M), crandn(rng, 2, M), [1.0, 1.0])
    w = crandn(rng, 3, M)
    W = [np.outer(v, v.conj()) for v in w]
    tiny = 1e-12
    W = [B + tiny * np.trace(B).real * random_psd(rng, M) / M for B in W]
    X = LiftedBeamforming(np.array(W[:2]), np.array(W[2:]), random_psd(rng, M, scale=0.1))
    assert np.all(bf.rank_one_ratios(X) >= 1 - 1e-11)
    b = bf.eigen_extract(X)
    noise = 0.3
    np.testing.assert_allclose(metrics.gu_rates(ch, b, noise), metrics.gu_rates(ch, X, noise), atol=1e-9)
    np.testing.assert_allclose(metrics.cav_rates(ch, b, noise), metrics.cav_rates(ch, X, noise), atol=1e-9)
    np.testing.assert_allclose(metrics.beampattern_gain(ch.target_steer, b), metrics.beampattern_gain(ch.target_steer, X), rtol=1e-9)


def test_covariance_preserving_extraction_keeps_metrics():
    rng = np.random.default_rng(7)
    M, noise = 4, 0.2
    ch = toy_channels(crandn(rng, 3, M), crandn(rng, 2, M), crandn(rng, 3, M), [1.0, 2.0, 3.0])
    X = random_lifted(rng, 3, 2, M)
    b = bf.covariance_preserving_extract(X, ch)
    np.testing.assert_allclose(metrics.gu_rates(ch, b, noise), metrics.gu_rates(ch, X, noise), rtol=1e-10)
    np.testing.assert_allclose(metrics.cav_rates(ch, b, noise), metrics.cav_rates(ch, X, noise), rtol=1e-10)
    np.testing.assert_allclose(metrics.beampattern_gain(ch.target_steer, b), metrics.beampattern_gain(ch.target_steer, X), rtol=1e-10)
    assert metrics.total_power(b) == pytest.approx(metrics.total_power(X), rel=1e-12)
    assert np.linalg.eigvalsh(b.R0).min() >= -1e-12


def test_randomization_on_rank_two_block():
    rng = np.random.default_rng(8)
    M = 4
    cfg = _toy_config(num_antennas=M, max_power_dbm=20.0)
    h = crandn(rng, 1, M) * 1e-5
    ch = toy_channels(h)
    W = random_psd(rng, M, rank=2)
    W *= cfg.max_power / np.trace(W).real
    X = LiftedBeamforming(W[None], np.zeros((0, M, M)), np.zeros((M, M)))
    lifted = metrics.sum_rate(ch, X, cfg.noise_power)
    b = bf.gaussian_randomization(X, ch, cfg, [], rng_stream(0, "randomization"))
    assert b is not None
    assert bf.is_feasible(ch, b, cfg, [])
    assert metrics.sum_rate(ch, b, cfg.noise_power) >= 0.95 * lifted


def test_rank_one_extract_on_solved_instance():
    cfg, prob, ch = default_instance(seed=1)
    ex, res = bf.optimize_beams(ch, cfg, prob.R_min)
    assert bf.is_feasible(ch, ex.beams, cfg, prob.R_min)
    lifted = metrics.sum_rate(ch, res.X, cfg.noise_power)
    assert abs(metrics.sum_rate(ch, ex.beams, cfg.noise_power) - lifted) <= 0.01 * lifted
    if np.all(ex.ratios >= 0.99):
        np.testing.assert_allclose(
            metrics.cav_rates(ch, ex.beams, cfg.noise_power), metrics.cav_rates(ch, res.X, cfg.noise_power), rtol=0.01
        )
