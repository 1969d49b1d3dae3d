"""SINRs, rates, beam-pattern gain and transmit power.

Every metric accepts either ``BeamVectors`` (w_n, w_j, R0) or their lifted
``LiftedBeamforming`` (W_n, W_j, R0) form; with ``W = w w^H`` both agree.
All quantities are in linear units (watts).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .channel import ChannelSet


@dataclass(frozen=True)
class BeamVectors:
    w_gu: np.ndarray  # (N, M)
    w_cav: np.ndarray  # (J, M)
    R0: np.ndarray  # (M, M)

    def lift(self) -> "LiftedBeamforming":
        outer = lambda w: np.einsum("ki,kj->kij", w, w.conj())
        return LiftedBeamforming(outer(self.w_gu), outer(self.w_cav), np.array(self.R0, dtype=complex))

    def scaled(self, c: float) -> "BeamVectors":
        return BeamVectors(self.w_gu * np.sqrt(c), self.w_cav * np.sqrt(c), self.R0 * c)


@dataclass(frozen=True)
class LiftedBeamforming:
    W_gu: np.ndarray  # (N, M, M)
    W_cav: np.ndarray  # (J, M, M)
    R0: np.ndarray  # (M, M)

    def total(self) -> np.ndarray:
        return self.W_gu.sum(axis=0) + self.W_cav.sum(axis=0) + self.R0

    def blocks(self):
        yield from self.W_gu
        yield from self.W_cav
        yield self.R0

    def min_eigenvalue(self) -> float:
        return min(float(np.linalg.eigvalsh(B).min()) for B in self.blocks())

    def scaled(self, c: float) -> "LiftedBeamforming":
        return LiftedBeamforming(self.W_gu * c, self.W_cav * c, self.R0 * c)


Beams = Union[BeamVectors, LiftedBeamforming]


class NotPSDError(ValueError):
    pass


def _quad(h: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Real h_l^H X h_l for h (L, M) and X (..., M, M) -> (..., L)."""
    return np.real(np.einsum("lm,...mk,lk->...l", h.conj(), X, h))


def stream_powers(h: np.ndarray, x: Beams):
    """Received power of every stream at receivers ``h`` (L, M).

    Returns (gu (L, N), cav (L, J), sensing (L,)).
    """
    if isinstance(x, BeamVectors):
        gu = np.abs(h.conj() @ x.w_gu.T) ** 2
        cav = np.abs(h.conj() @ x.w_cav.T) ** 2
    else:
        gu = _quad(h, x.W_gu).T.reshape(h.shape[0], x.W_gu.shape[0])
        cav = _quad(h, x.W_cav).T.reshape(h.shape[0], x.W_cav.shape[0])
    sens = _quad(h, np.asarray(x.R0))
    return gu, cav, sens


def gu_sinrs(channels: ChannelSet, x: Beams, noise: float) -> np.ndarray:
    gu, cav, sens = stream_powers(channels.h_gu, x)
    signal = np.diag(gu).copy()
    interference = gu.sum(axis=1) - signal + cav.sum(axis=1) + sens
    return signal / (interference + noise)


def cav_sinrs(channels: ChannelSet, x: Beams, noise: float) -> np.ndarray:
    gu, cav, sens = stream_powers(channels.h_cav, x)
    signal = np.diag(cav).copy()
    interference = cav.sum(axis=1) - signal + gu.sum(axis=1) + sens
    return signal / (interference + noise)


def sinr_gu(n: int, channels: ChannelSet, x: Beams, noise: float) -> float:
    return float(gu_sinrs(channels, x, noise)[n])


def sinr_cav(j: int, channels: ChannelSet, x: Beams, noise: float) -> float:
    return float(cav_sinrs(channels, x, noise)[j])


def rate(sinr):
    """Achievable rate in bits/s/Hz."""
    return np.log2(1.0 + np.asarray(sinr))


def gu_rates(channels: ChannelSet, x: Beams, noise: float) -> np.ndarray:
    return rate(gu_sinrs(channels, x, noise))


def cav_rates(channels: ChannelSet, x: Beams, noise: float) -> np.ndarray:
    return rate(cav_sinrs(channels, x, noise))


def sum_rate(channels: ChannelSet, x: Beams, noise: float) -> float:
    """Sum rate of the ground users (CAV rates are not part of the objective)."""
    return float(np.sum(gu_rates(channels, x, noise)))


def total_covariance(x: Beams) -> np.ndarray:
    if isinstance(x, BeamVectors):
        return x.w_gu.T @ x.w_gu.conj() + x.w_cav.T @ x.w_cav.conj() + x.R0
    return x.total()


def beampattern_gain(steer: np.ndarray, x: Beams):
    """``a^H (sum W + R0) a`` for one steering vector (M,) or a stack (K, M)."""
    steer = np.asarray(steer)
    C = total_covariance(x)
    if steer.ndim == 1:
        return float(np.real(steer.conj() @ C @ steer))
    return _quad(steer, C)


def sensing_threshold(target_dist, sense_thresh: float) -> np.ndarray:
    return np.asarray(target_dist, dtype=float) ** 2 * sense_thresh


def sensing_slacks(channels: ChannelSet, x: Beams, sense_thresh: float) -> np.ndarray:
    """gain_k - d_k^2 * Gamma per target (watts)."""
    gains = beampattern_gain(channels.target_steer, x).reshape(-1)
    return gains - sensing_threshold(channels.target_dist, sense_thresh)


def sensing_feasible(channels: ChannelSet, x: Beams, sense_thresh: float) -> bool:
    need = sensing_threshold(channels.target_dist, sense_thresh)
    return bool(np.all(sensing_slacks(channels, x, sense_thresh) >= -1e-9 * need))


def total_power(x: Beams) -> float:
    if isinstance(x, BeamVectors):
        return float(np.sum(np.abs(x.w_gu) ** 2) + np.sum(np.abs(x.w_cav) ** 2) + np.real(np.trace(x.R0)))
    return float(sum(np.real(np.trace(B)) for B in x.blocks()))


def interference_terms(channels: ChannelSet, X: Beams, noise: float):
    """(E_n per GU, F_j per CAV): interference-plus-noise at each receiver."""
    gu, cav, sens = stream_powers(channels.h_gu, X)
    E = gu.sum(axis=1) - np.diag(gu) + cav.sum(axis=1) + sens + noise
    gu2, cav2, sens2 = stream_powers(channels.h_cav, X)
    F = cav2.sum(axis=1) - np.diag(cav2) + gu2.sum(axis=1) + sens2 + noise
    return E, F


def _check_psd(X: LiftedBeamforming, tol: float):
    scale = max(1.0, max(float(np.abs(B).max(initial=0.0)) for B in X.blocks()))
    if X.min_eigenvalue() < -tol * scale:
        raise NotPSDError("lifted beamforming block is not PSD within tolerance")


def lifted_rate_gu(n: int, channels: ChannelSet, X: LiftedBeamforming, noise: float, psd_tol: float = 1e-9) -> float:
    """``log2(tr(W_n H_n) + E_n) - log2(E_n)`` in trace form."""
    _check_psd(X, psd_tol)
    h = channels.h_gu[n]
    signal = float(np.real(h.conj() @ X.W_gu[n] @ h))
    E, _ = interference_terms(channels, X, noise)
    return float(np.log2(signal + E[n]) - np.log2(E[n]))


def lifted_rate_cav(j: int, channels: ChannelSet, X: LiftedBeamforming, noise: float, psd_tol: float = 1e-9) -> float:
    _check_psd(X, psd_tol)
    h = channels.h_cav[j]
    signal = float(np.real(h.conj() @ X.W_cav[j] @ h))
    _, F = interference_terms(channels, X, noise)
    return float(np.log2(signal + F[j]) - np.log2(F[j]))


# ---------------------------------------------------------------------------
# batched evaluation over many candidate placements


def batch_link_powers(h: np.ndarray, beams: BeamVectors):
    """Stream powers for batched receivers h (P, L, M) with fixed vector beams."""
    hc = h.conj()
    gu = _abs2(hc @ beams.w_gu.T)
    cav = _abs2(hc @ beams.w_cav.T)
    sens = np.real(np.sum((hc @ beams.R0) * h, axis=-1))
    return gu, cav, sens


def _abs2(z: np.ndarray) -> np.ndarray:
    return z.real**2 + z.imag**2


def batch_rates(h_gu: np.ndarray, h_cav: np.ndarray, beams: BeamVectors, noise: float):
    """GU and CAV rates for a batch of channel realisations."""
    gu, cav, sens = batch_link_powers(h_gu, beams)
    sig = np.diagonal(gu, axis1=1, axis2=2)
    gu_r = np.log2(1 + sig / (gu.sum(axis=2) - sig + cav.sum(axis=2) + sens + noise))
    gu2, cav2, sens2 = batch_link_powers(h_cav, beams)
    sig2 = np.diagonal(cav2, axis1=1, axis2=2)
    cav_r = np.log2(1 + sig2 / (cav2.sum(axis=2) - sig2 + gu2.sum(axis=2) + sens2 + noise))
    return gu_r, cav_r


def batch_beampattern(steer: np.ndarray, beams: BeamVectors) -> np.ndarray:
    C = total_covariance(beams)
    return np.real(np.sum((steer.conj() @ C) * steer, axis=-1))
