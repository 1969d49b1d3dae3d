import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from maiscc.channel import AntennaPlacement, ChannelSet, LinkGeometry, NlosDraws
from maiscc.scenario import AoParams, PsoParams, ScenarioConfig

settings.register_profile(
    "repo", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("repo")


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_psd(rng, M, rank=None, scale=1.0):
    rank = M if rank is None else rank
    V = crandn(rng, M, rank)
    return scale * (V @ V.conj().T) / M


def toy_channels(h_gu, h_cav=None, target_steer=None, target_dist=None):
    """ChannelSet with explicit channel vectors (no geometry behind them)."""
    h_gu = np.atleast_2d(np.asarray(h_gu, dtype=complex))
    M = h_gu.shape[1]
    h_cav = np.zeros((0, M), complex) if h_cav is None else np.atleast_2d(np.asarray(h_cav, dtype=complex))
    if target_steer is None:
        target_steer = np.zeros((0, M), complex)
        target_dist = np.zeros(0)
    target_steer = np.atleast_2d(np.asarray(target_steer, dtype=complex)).reshape(-1, M)
    target_dist = np.asarray(target_dist, dtype=float).reshape(-1)
    empty2 = np.zeros((0, 2))
    geom = LinkGeometry(
        np.ones(len(h_gu)), empty2, np.ones(len(h_gu)),
        np.ones(len(h_cav)), empty2, np.ones(len(h_cav)),
        target_dist, np.zeros((len(target_dist), 2)),
        NlosDraws(np.zeros_like(h_gu), np.zeros_like(h_cav)), 0.0,
    )  # fmt: skip
    placement = AntennaPlacement(np.zeros((M, 2)))
    return ChannelSet(placement, geom, h_gu.copy(), h_cav.copy(), target_steer, h_gu, h_cav)


@pytest.fixture
def small_config():
    """Default physics with a light swarm and few outer steps."""
    return ScenarioConfig(
        pso=PsoParams(swarm_size=20, max_iters=20),
        ao=AoParams(max_outer=3),
    )
