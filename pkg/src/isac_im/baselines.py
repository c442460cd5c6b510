"""DQPSK modulation and the TIN / SIC sensor baselines.

Both baselines see the same transmit signal as the proposed sensor path.
TIN fits the raw sensor samples against the known sensing signals and
leaves the communication part in the residual.  SIC first guesses the
communication part: it takes the TIN residual, averages it over the slots
in which the communication symbols are held, detects a DQPSK track on it
and then fits sensing signals and that track jointly.

The sensor has no channel knowledge, so when several messages reach it at
once it only ever sees their sum.  Detecting a single DQPSK track on a sum
of streams is lossy, which caps how much interference SIC can remove.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, RankDeficientPilots
from .pilots import COND_LIMIT, LsEstimate, cee, ls_estimate

M = 4
TIE_TOL = 1e-12


@dataclass(frozen=True)
class DqpskStream:
    indices: np.ndarray
    symbols: np.ndarray
    ref_phase: float

    @classmethod
    def from_indices(cls, indices, ref_phase: float = 0.0) -> "DqpskStream":
        idx = np.asarray(indices, dtype=int)
        return cls(idx, dqpsk_modulate(idx, ref_phase), float(ref_phase))

    def with_reference(self) -> np.ndarray:
        """Symbols preceded by the reference symbol s_0."""
        return np.concatenate([[np.exp(1j * self.ref_phase)], self.symbols])


def dqpsk_modulate(indices, ref_phase: float = 0.0, include_reference: bool = False) -> np.ndarray:
    """s_n = s_{n-1} exp(j 2 pi a_n / 4) starting from s_0 = exp(j ref_phase)."""
    idx = np.asarray(indices, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() > M - 1):
        raise InvalidArgument("DQPSK indices must be in {0, 1, 2, 3}")
    # accumulate the phase index mod 4 so the constellation stays exact
    steps = np.concatenate([[0], np.cumsum(idx) % M])
    s = np.exp(1j * ref_phase) * (1j ** steps)
    return s if include_reference else s[1:]


def dqpsk_differential_detect(y) -> np.ndarray:
    """Index of the nearest phase increment between consecutive samples.

    The increment is wrapped to (-pi, pi]; an increment exactly half way
    between two candidates goes to the smaller index.
    """
    y = np.asarray(y, dtype=complex)
    if y.ndim != 1 or y.size < 2:
        raise InvalidArgument("differential detection needs at least two samples")
    dphi = np.angle(y[1:]) - np.angle(y[:-1])
    dphi = np.pi - np.mod(np.pi - dphi, 2 * np.pi)
    theta = 2 * np.pi * np.arange(M) / M
    dist = np.abs(np.pi - np.mod(np.pi - (dphi[:, None] - theta[None, :]), 2 * np.pi))
    best = dist.min(axis=1, keepdims=True)
    # first index within tolerance of the minimum
    return np.argmax(dist <= best + TIE_TOL, axis=1)


def tin_sensor_estimate(y_s, sensing, h=None) -> LsEstimate:
    """LS fit of the raw sensor samples against the known sensing signals.

    ``sensing`` is m' x T: the per-slot sensing signal of every transmitter
    the sensor hears.
    """
    return ls_estimate(y_s, sensing, h)


@dataclass(frozen=True)
class SicEstimate:
    H_hat: np.ndarray
    cee: float | None
    condition: float
    fallback: bool
    indices: np.ndarray | None


def _track(c: np.ndarray, indices: np.ndarray) -> np.ndarray:
    ref = float(np.angle(c[0]))
    return dqpsk_modulate(indices, ref, include_reference=True)


def sic_sensor_estimate(y_s, sensing, hold: int = 1, h=None, detector=dqpsk_differential_detect) -> SicEstimate:
    """Detect-then-fit sensor baseline.

    ``hold`` is the number of consecutive slots over which the transmitted
    communication symbols stay fixed.  If the detected track together with
    the sensing rows is rank deficient the TIN estimate is returned and
    ``fallback`` is set.
    """
    y = np.asarray(y_s, dtype=complex).reshape(-1)
    S = np.atleast_2d(np.asarray(sensing, dtype=complex))
    T = y.size
    if S.shape[1] != T:
        raise InvalidArgument("sensing signals and observations differ in length")
    if hold < 1 or T % hold:
        raise InvalidArgument(f"hold={hold} does not divide {T} slots")
    tin = ls_estimate(y, S)
    resid = y - (tin.H_hat @ S).reshape(-1)
    c = resid.reshape(-1, hold).mean(axis=1)
    if c.size < 2:
        return SicEstimate(tin.H_hat, None if h is None else cee(h, tin.H_hat), tin.condition, True, None)
    idx = np.asarray(detector(c), dtype=int)
    track = np.repeat(_track(c, idx), hold)
    A = np.vstack([S, track[None, :]])
    try:
        joint = ls_estimate(y, A)
    except RankDeficientPilots:
        fb = tin_sensor_estimate(y, S, h)
        return SicEstimate(fb.H_hat, fb.cee, fb.condition, True, idx)
    H_hat = joint.H_hat[:, : S.shape[0]]
    return SicEstimate(H_hat, None if h is None else cee(h, H_hat), joint.condition, False, idx)


def genie_sensor_estimate(y_s, sensing, comm_at_sensor, h=None) -> LsEstimate:
    """LS fit after removing the true communication contribution."""
    y = np.asarray(y_s, dtype=complex) - np.asarray(comm_at_sensor, dtype=complex)
    return ls_estimate(y, sensing, h)


__all__ = [
    "COND_LIMIT",
    "DqpskStream",
    "SicEstimate",
    "dqpsk_differential_detect",
    "dqpsk_modulate",
    "genie_sensor_estimate",
    "sic_sensor_estimate",
    "tin_sensor_estimate",
]
