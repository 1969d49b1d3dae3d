import dataclasses
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from maiscc import metrics
from maiscc.channel import (
    AntennaPlacement,
    LinkGeometry,
    build_channel_set,
    count_spacing_violations,
    direction_between,
    draw_nlos,
    large_scale_amplitude,
    rician_channel,
    steering_matrix,
    steering_vector,
)
from maiscc.scenario import ScenarioConfig


def test_direction_vertical_axis():
    d = direction_between((100, 100, 10), (100, 100, 110))
    np.testing.assert_allclose(d.p, [0.0, 1.0], atol=1e-15)


def test_direction_horizontal_axis():
    d = direction_between((100, 100, 10), (150, 100, 10))
    np.testing.assert_allclose(d.p, [1.0, 0.0], atol=1e-15)


def test_direction_diagonal():
    d = direction_between((0, 0, 0), (100, 0, 100), (1, 0, 0), (0, 0, 1))
    np.testing.assert_allclose(d.p, [1 / math.sqrt(2), 1 / math.sqrt(2)], atol=1e-15)


def test_direction_coincident_points_rejected():
    with pytest.raises(ValueError):
        direction_between((1, 2, 3), (1, 2, 3))


def test_steering_zero_positions_all_ones():
    a = steering_vector(np.zeros((5, 2)), (0.3, -0.7))
    np.testing.assert_allclose(a, np.ones(5), atol=1e-15)


def test_steering_half_wavelength():
    lam = 0.01
    a = steering_vector(np.array([[0.0, 0.0], [lam / 2, 0.0]]), (1.0, 0.0), wavelength=lam)
    assert a[1] == pytest.approx(-1.0, abs=1e-12)


def test_steering_matches_high_precision_oracle():
    rng = np.random.default_rng(11)
    pos = rng.uniform(0, 10, size=(4, 2))
    p = rng.uniform(-1, 1, size=2)
    a = steering_vector(pos, p)
    mpmath.mp.dps = 40
    for m in range(4):
        phase = 2 * mpmath.pi * (mpmath.mpf(p[0]) * mpmath.mpf(pos[m, 0]) + mpmath.mpf(p[1]) * mpmath.mpf(pos[m, 1]))
        ref = complex(mpmath.exp(1j * phase))
        assert abs(a[m] - ref) <= 1e-12


def test_steering_matrix_agrees_with_vector_form():
    rng = np.random.default_rng(2)
    pos = rng.uniform(0, 10, size=(3, 6, 2))
    dirs = rng.uniform(-1, 1, size=(4, 2))
    S = steering_matrix(pos, dirs)
    assert S.shape == (3, 4, 6)
    for b in range(3):
        for l in range(4):
            np.testing.assert_allclose(S[b, l], steering_vector(pos[b], dirs[l]), atol=1e-12)


@given(
    arrays(float, (6, 2), elements=st.floats(0, 10)),
    st.floats(-1, 1),
    st.floats(-1, 1),
)
def test_steering_norm_is_M(pos, px, py):
    a = steering_vector(pos, (px, py))
    assert abs(np.vdot(a, a).real - 6) <= 1e-10


def test_rician_limits():
    rng = np.random.default_rng(0)
    los = np.exp(1j * rng.uniform(0, 2 * np.pi, 8))
    nlos = (rng.standard_normal(8) + 1j * rng.standard_normal(8)) / math.sqrt(2)
    g = 0.3
    np.testing.assert_allclose(rician_channel(los, nlos, math.inf, g), g * los, atol=1e-15)
    np.testing.assert_allclose(rician_channel(los, nlos, 1e12, g), g * los, atol=1e-6)
    np.testing.assert_allclose(rician_channel(los, nlos, 0.0, g), g * nlos, atol=1e-15)


def test_rician_oracle_value():
    rng = np.random.default_rng(5)
    los = np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
    nlos = (rng.standard_normal(4) + 1j * rng.standard_normal(4)) / math.sqrt(2)
    amp = large_scale_amplitude(100.0, 1e-6, 2.0)
    h = rician_channel(los, nlos, 31.3, amp)
    g = math.sqrt(1e-6 * 100.0**-2)
    for m in range(4):
        ref = g * (math.sqrt(31.3 / 32.3) * complex(los[m]) + math.sqrt(1 / 32.3) * complex(nlos[m]))
        assert abs(h[m] - ref) <= 1e-12 * g


def test_amplitude_convention_switch():
    assert large_scale_amplitude(100.0, 1e-6, 2.0, "power") == pytest.approx(1e-5, rel=1e-12)
    assert large_scale_amplitude(100.0, 1e-6, 2.0, "amplitude") == pytest.approx(1e-10, rel=1e-12)
    with pytest.raises(ValueError):
        large_scale_amplitude(1.0, 1.0, 2.0, "other")


@pytest.mark.parametrize("k", [0.0, 31.3])
def test_mean_channel_power(k):
    cfg = ScenarioConfig(num_gus=10_000, num_cavs=0, plants=(), seed=1)
    nlos = draw_nlos(cfg).gu
    los = steering_vector(np.random.default_rng(0).uniform(0, 10, (8, 2)), (0.2, 0.5))
    amp = large_scale_amplitude(100.0, 1e-6, 2.0)
    h = rician_channel(np.broadcast_to(los, nlos.shape), nlos, k, np.full(len(nlos), amp))
    expected = 1e-6 * 100.0**-2
    assert abs(np.mean(np.abs(h) ** 2) / expected - 1) <= 0.03


def _geometry(seed=0, **kw):
    return LinkGeometry.build(ScenarioConfig(seed=seed, **kw))


def test_channel_set_is_pure():
    geo = _geometry()
    pos = np.random.default_rng(1).uniform(0, 10, (8, 2))
    a, b = build_channel_set(geo, pos), build_channel_set(geo, pos)
    np.testing.assert_array_equal(a.h_gu, b.h_gu)
    np.testing.assert_array_equal(a.h_cav, b.h_cav)
    np.testing.assert_array_equal(a.target_steer, b.target_steer)


def test_moving_one_antenna_keeps_nlos():
    geo = _geometry()
    pos = np.random.default_rng(1).uniform(0, 10, (8, 2))
    moved = pos.copy()
    moved[3] += [0.37, -0.21]
    a, b = build_channel_set(geo, pos), build_channel_set(geo, moved)
    others = [m for m in range(8) if m != 3]
    np.testing.assert_allclose(a.h_gu[:, others], b.h_gu[:, others], atol=0)
    np.testing.assert_allclose(np.abs(a.target_steer), np.abs(b.target_steer), atol=1e-15)
    assert not np.allclose(a.h_gu[:, 3], b.h_gu[:, 3])
    assert a.geometry.nlos is b.geometry.nlos


def test_translation_is_a_common_phase_and_keeps_los_sinrs():
    geo = dataclasses.replace(_geometry(seed=3), rician_k=math.inf)
    rng = np.random.default_rng(4)
    pos = rng.uniform(2, 8, (8, 2))
    delta = np.array([0.61, -1.13])
    a, b = build_channel_set(geo, pos), build_channel_set(geo, pos + delta)
    ratio = b.target_steer / a.target_steer
    np.testing.assert_allclose(ratio, ratio[:, :1] * np.ones((1, 8)), atol=1e-12)
    beams = metrics.BeamVectors(
        (rng.standard_normal((3, 8)) + 1j * rng.standard_normal((3, 8))),
        (rng.standard_normal((2, 8)) + 1j * rng.standard_normal((2, 8))),
        np.eye(8) * 0.1,
    )
    noise = 1e-13
    np.testing.assert_allclose(metrics.gu_sinrs(a, beams, noise), metrics.gu_sinrs(b, beams, noise), rtol=1e-9)
    np.testing.assert_allclose(metrics.cav_sinrs(a, beams, noise), metrics.cav_sinrs(b, beams, noise), rtol=1e-9)


def test_batch_channels_match_single():
    geo = _geometry(seed=2)
    pos = np.random.default_rng(3).uniform(0, 10, (5, 8, 2))
    h_gu, h_cav, a_t = geo.channels_batch(pos)
    for p in range(5):
        cs = build_channel_set(geo, pos[p])
        np.testing.assert_allclose(h_gu[p], cs.h_gu, atol=1e-20)
        np.testing.assert_allclose(h_cav[p], cs.h_cav, atol=1e-20)
        np.testing.assert_allclose(a_t[p], cs.target_steer, atol=1e-12)


def test_spacing_violations_count_pairs():
    pos = np.array([[0.0, 0.0], [0.2, 0.0], [0.0, 0.3], [5.0, 5.0]])
    assert count_spacing_violations(pos[None], 0.5)[0] == 3
    placement = AntennaPlacement(pos)
    assert placement.spacing_violations(0.1) == 0
    with pytest.raises(ValueError):
        placement.validate(10.0, 0.5)
    assert placement.validate(10.0, 0.1).validated
    with pytest.raises(ValueError):
        AntennaPlacement(pos + 8).validate(10.0, 0.1)
