"""Steering vectors, link geometry and Rician channel synthesis.

Antenna coordinates are expressed in wavelengths, so the phase of antenna m
toward direction p is ``2*pi * p . s_m``.  Functions taking an explicit
``wavelength`` accept coordinates in any unit consistent with it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import Layout, ScenarioConfig, place_entities, rng_stream


@dataclass(frozen=True)
class AntennaPlacement:
    """M planar antenna coordinates (wavelengths), shape (M, 2)."""

    positions: np.ndarray
    validated: bool = False

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 2)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def num_antennas(self) -> int:
        return self.positions.shape[0]

    def pair_distances(self) -> np.ndarray:
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        return np.linalg.norm(diff, axis=-1)

    def spacing_violations(self, min_spacing: float) -> int:
        return int(count_spacing_violations(self.positions[None], min_spacing)[0])

    def validate(self, region_size: float, min_spacing: float) -> "AntennaPlacement":
        pos = self.positions
        if np.any(pos < 0) or np.any(pos > region_size):
            raise ValueError("antenna outside the movement region")
        if self.spacing_violations(min_spacing):
            raise ValueError("antennas closer than the minimum spacing")
        return AntennaPlacement(pos, validated=True)


def count_spacing_violations(positions: np.ndarray, min_spacing: float) -> np.ndarray:
    """Number of antenna pairs closer than ``min_spacing``; positions (..., M, 2)."""
    M = positions.shape[-2]
    i, j = np.triu_indices(M, k=1)
    diff = positions[..., i, :] - positions[..., j, :]
    return np.sum(diff[..., 0] ** 2 + diff[..., 1] ** 2 < min_spacing**2, axis=-1)


@dataclass(frozen=True)
class DirectionVector:
    p: np.ndarray
    theta: float
    phi: float


def direction_between(q_bs, q, x_axis=(1.0, 0.0, 0.0), y_axis=(0.0, 0.0, 1.0)) -> DirectionVector:
    """Virtual AoD vector ``(sin(theta) cos(phi), cos(theta))`` from the BS to ``q``.

    The components are the projections of the unit LoS vector on the array's
    horizontal and vertical axes.
    """
    v = np.asarray(q, dtype=float) - np.asarray(q_bs, dtype=float)
    dist = np.linalg.norm(v)
    if dist == 0:
        raise ValueError("direction undefined for coincident points")
    u = v / dist
    p = np.array([u @ np.asarray(x_axis, float), u @ np.asarray(y_axis, float)])
    p = np.clip(p, -1.0, 1.0)
    theta = math.acos(p[1])
    s = math.sin(theta)
    phi = math.acos(float(np.clip(p[0] / s, -1.0, 1.0))) if s > 1e-15 else 0.0
    return DirectionVector(p, theta, phi)


def steering_vector(positions, p, wavelength: float = 1.0) -> np.ndarray:
    """Entry m is ``exp(1j * 2*pi/wavelength * p . s_m)``."""
    positions = np.asarray(getattr(positions, "positions", positions), dtype=float)
    p = np.asarray(getattr(p, "p", p), dtype=float)
    return np.exp(1j * (2 * np.pi / wavelength) * (positions @ p))


def steering_matrix(positions: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Batched steering vectors.

    positions: (..., M, 2) in wavelengths; directions: (L, 2).
    Returns (..., L, M).
    """
    phase = (2 * np.pi) * np.swapaxes(positions @ np.asarray(directions, dtype=float).T, -1, -2)
    out = np.empty(phase.shape, dtype=complex)
    out.real = np.cos(phase)
    out.imag = np.sin(phase)
    return out


def large_scale_amplitude(distance, ref_gain: float, pathloss_exp: float, convention: str = "power"):
    """Amplitude factor multiplying the small-scale channel.

    ``power``: ref_gain * d^-alpha is a power gain, amplitude is its square
    root.  ``amplitude``: the factor multiplies the amplitude directly.
    """
    gain = ref_gain * np.asarray(distance, dtype=float) ** (-pathloss_exp)
    if convention == "power":
        return np.sqrt(gain)
    if convention == "amplitude":
        return gain
    raise ValueError(f"unknown path-loss convention {convention!r}")


def rician_channel(los, nlos, rician_k: float, amplitude) -> np.ndarray:
    """``amplitude * (sqrt(K/(K+1)) los + sqrt(1/(K+1)) nlos)``; broadcasts."""
    amplitude = np.asarray(amplitude, dtype=float)
    if math.isinf(rician_k):
        mix = np.asarray(los, dtype=complex)
    else:
        mix = math.sqrt(rician_k / (rician_k + 1)) * los + math.sqrt(1 / (rician_k + 1)) * nlos
    return amplitude[..., None] * mix


@dataclass(frozen=True)
class NlosDraws:
    """Frozen small-scale NLoS vectors, CN(0, I) per link."""

    gu: np.ndarray  # (N, M)
    cav: np.ndarray  # (J, M)


def draw_nlos(config: ScenarioConfig, rng: np.random.Generator | None = None) -> NlosDraws:
    if rng is None:
        rng = rng_stream(config.seed, "nlos")
    M = config.num_antennas

    def cn(count):
        z = rng.standard_normal((count, M, 2))
        return (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2)

    return NlosDraws(cn(config.num_gus), cn(config.num_cavs))


@dataclass(frozen=True)
class LinkGeometry:
    """Placement-independent link data: distances, directions and amplitudes."""

    gu_dist: np.ndarray
    gu_dir: np.ndarray
    gu_amp: np.ndarray
    cav_dist: np.ndarray
    cav_dir: np.ndarray
    cav_amp: np.ndarray
    target_dist: np.ndarray
    target_dir: np.ndarray
    nlos: NlosDraws
    rician_k: float

    @classmethod
    def build(cls, config: ScenarioConfig, layout: Layout | None = None, nlos: NlosDraws | None = None):
        layout = layout if layout is not None else place_entities(config)
        nlos = nlos if nlos is not None else draw_nlos(config)
        q_bs = np.asarray(config.bs_position, float)

        def geom(points):
            points = np.asarray(points, float).reshape(-1, 3)
            dist = np.linalg.norm(points - q_bs, axis=1)
            dirs = [direction_between(q_bs, q, config.array_x_axis, config.array_y_axis).p for q in points]
            return dist, np.array(dirs, dtype=float).reshape(-1, 2)

        gd, gdir = geom(layout.gus)
        cd, cdir = geom(layout.cavs)
        td, tdir = geom(layout.targets)
        amp = lambda d: large_scale_amplitude(d, config.ref_gain, config.pathloss_exp, config.pathloss_convention)
        return cls(gd, gdir, amp(gd), cd, cdir, amp(cd), td, tdir, nlos, config.rician_k)

    def channels_batch(self, positions: np.ndarray):
        """Channels for a batch of placements (..., M, 2).

        Returns (h_gu (..., N, M), h_cav (..., J, M), a_target (..., K, M)).
        """
        N, J = len(self.gu_dir), len(self.cav_dir)
        dirs = np.concatenate([self.gu_dir, self.cav_dir, self.target_dir]).reshape(-1, 2)
        steer = steering_matrix(positions, dirs)
        h_gu = rician_channel(steer[..., :N, :], self.nlos.gu, self.rician_k, self.gu_amp)
        h_cav = rician_channel(steer[..., N : N + J, :], self.nlos.cav, self.rician_k, self.cav_amp)
        return h_gu, h_cav, steer[..., N + J :, :]


@dataclass(frozen=True)
class ChannelSet:
    """Channels for one placement.  Arrays are (links, M)."""

    placement: AntennaPlacement
    geometry: LinkGeometry
    gu_steer: np.ndarray
    cav_steer: np.ndarray
    target_steer: np.ndarray
    h_gu: np.ndarray
    h_cav: np.ndarray

    @property
    def target_dist(self) -> np.ndarray:
        return self.geometry.target_dist

    @property
    def num_antennas(self) -> int:
        return self.placement.num_antennas


def build_channel_set(geometry: LinkGeometry, placement: AntennaPlacement | np.ndarray) -> ChannelSet:
    """Recompute all LoS-dependent quantities for ``placement``; NLoS is reused."""
    if not isinstance(placement, AntennaPlacement):
        placement = AntennaPlacement(placement)
    pos = placement.positions
    gu_steer = steering_matrix(pos, geometry.gu_dir)
    cav_steer = steering_matrix(pos, geometry.cav_dir)
    t_steer = steering_matrix(pos, geometry.target_dir)
    h_gu = rician_channel(gu_steer, geometry.nlos.gu, geometry.rician_k, geometry.gu_amp)
    h_cav = rician_channel(cav_steer, geometry.nlos.cav, geometry.rician_k, geometry.cav_amp)
    return ChannelSet(placement, geometry, gu_steer, cav_steer, t_steer, h_gu, h_cav)
