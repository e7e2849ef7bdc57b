"""
Uplink air interface: system parameters, Rayleigh multipath channels,
orthogonal pilots, and the symbol-sampled received signal.

Blocks are transmitted with a cyclic prefix, so the channel acts as a
circular convolution over each block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


def as_rng(seed) -> np.random.Generator:
    """Accept a Generator, SeedSequence, int or sequence of ints."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def complex_normal(rng, shape, var=1.0):
    """Circularly-symmetric complex Gaussian samples of variance ``var``."""
    scale = np.sqrt(np.asarray(var) / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass(frozen=True)
class SystemConfig:
    """
    Parameters of a single-cell uplink.

    ``beta_p`` holds the received powers beta_k * P_k of the K users and
    ``pdp`` the K x L power delay profile; all powers are linear.
    """

    m_antennas: int
    k_users: int
    l_taps: int
    pilot_excess: int = 1
    n_data: int = 256
    beta_p: np.ndarray = field(default=None)
    noise_power: float = 1.0
    pdp: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("m_antennas", "k_users", "l_taps", "pilot_excess"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        beta_p = np.ones(self.k_users) if self.beta_p is None else np.asarray(self.beta_p, float)
        beta_p = np.broadcast_to(beta_p, (self.k_users,)).copy()
        if self.pdp is None:
            pdp = np.full((self.k_users, self.l_taps), 1.0 / self.l_taps)
        else:
            pdp = np.broadcast_to(np.asarray(self.pdp, float), (self.k_users, self.l_taps)).copy()
        if np.any(beta_p < 0) or np.any(pdp < 0) or self.noise_power < 0:
            raise ValueError("powers must be nonnegative")
        if np.any(np.abs(pdp.sum(axis=1) - 1) > 1e-12):
            raise ValueError("each power delay profile must sum to one")
        beta_p.setflags(write=False)
        pdp.setflags(write=False)
        object.__setattr__(self, "beta_p", beta_p)
        object.__setattr__(self, "pdp", pdp)

    @classmethod
    def uniform(cls, m_antennas, k_users, l_taps, snr_db=0.0, pilot_excess=1,
                n_data=256, noise_power=1.0):
        """Equal received SNR for every user and a uniform delay profile."""
        beta_p = np.full(k_users, noise_power * 10 ** (snr_db / 10))
        return cls(m_antennas, k_users, l_taps, pilot_excess, n_data, beta_p, noise_power)

    @property
    def n_pilots(self) -> int:
        return self.pilot_excess * self.k_users * self.l_taps

    @property
    def rx_power(self) -> float:
        return float(np.sum(self.beta_p) + self.noise_power)

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class ChannelRealization:
    """Small-scale taps (M x K x L) and their length-N frequency response."""

    taps: np.ndarray
    freq: np.ndarray

    @property
    def block_len(self) -> int:
        return self.freq.shape[-1]


@dataclass(frozen=True)
class PilotBook:
    pilots: np.ndarray  # K x N_p, unit modulus

    @property
    def n_pilots(self) -> int:
        return self.pilots.shape[1]


def frequency_response(taps, block_len):
    """sum_l h[l] exp(-j 2 pi l nu / N) along the last axis."""
    return np.fft.fft(taps, n=block_len, axis=-1)


def draw_channel(cfg: SystemConfig, block_len: int, seed) -> ChannelRealization:
    """i.i.d. Rayleigh taps following each user's delay profile."""
    if block_len < cfg.l_taps:
        raise ValueError("block_len must be at least l_taps")
    rng = as_rng(seed)
    shape = (cfg.m_antennas, cfg.k_users, cfg.l_taps)
    taps = complex_normal(rng, shape, cfg.pdp[np.newaxis])
    return ChannelRealization(taps, frequency_response(taps, block_len))


def zadoff_chu(length: int, root: int = 1) -> np.ndarray:
    """Unit-modulus sequence with perfect periodic autocorrelation."""
    if math.gcd(length, root) != 1:
        raise ValueError("root must be coprime with length")
    n = np.arange(length)
    if length % 2 == 0:
        phase = np.pi * root * n * n / length
    else:
        phase = np.pi * root * n * (n + 1) / length
    return np.exp(-1j * phase)


def build_pilots(k_users: int, l_taps: int, pilot_excess: int = 1) -> PilotBook:
    """
    Cyclic shifts of one Zadoff-Chu sequence, user k shifted by k*L*mu.

    Shift separations are at least L, so every cross-correlation within
    lags -(L-1)..L-1 vanishes.
    """
    n_p = pilot_excess * k_users * l_taps
    base = zadoff_chu(n_p)
    shift = l_taps * pilot_excess
    pilots = np.stack([np.roll(base, k * shift) for k in range(k_users)])
    return PilotBook(pilots)


def pilot_correlations(pilots, l_taps):
    """C[k, k', l] = sum_n x_k[n] conj(x_k'[n + l]) for l = 0..L-1, cyclic."""
    pilots = np.asarray(pilots)
    n_p = pilots.shape[1]
    corr = np.empty((pilots.shape[0], pilots.shape[0], l_taps), dtype=complex)
    for lag in range(l_taps):
        shifted = np.roll(pilots, -lag, axis=1)  # shifted[:, n] = x[n + lag]
        corr[:, :, lag] = pilots @ shifted.conj().T
    return corr


def verify_pilots(book: PilotBook | np.ndarray, l_taps: int) -> float:
    """Largest deviation from the pilot orthogonality requirement."""
    pilots = book.pilots if isinstance(book, PilotBook) else np.asarray(book)
    k_users, n_p = pilots.shape
    target = np.zeros((k_users, k_users, l_taps), dtype=complex)
    target[np.arange(k_users), np.arange(k_users), 0] = n_p
    return float(np.max(np.abs(pilot_correlations(pilots, l_taps) - target)))


def propagate(cfg: SystemConfig, chan: ChannelRealization, tx) -> np.ndarray:
    """Noiseless M x N received block: circular convolution summed over users."""
    tx = np.asarray(tx)
    n = tx.shape[-1]
    if n < cfg.l_taps:
        raise ValueError("block shorter than the channel")
    amp = np.sqrt(cfg.beta_p)[:, np.newaxis]
    tx_f = np.fft.fft(amp * tx, axis=-1)  # K x N
    h_f = np.fft.fft(chan.taps, n=n, axis=-1)  # M x K x N
    return np.fft.ifft(np.einsum("mkn,kn->mn", h_f, tx_f), axis=-1)


def awgn(cfg: SystemConfig, shape, seed) -> np.ndarray:
    """White complex Gaussian noise of power N_0, independent across antennas."""
    return complex_normal(as_rng(seed), shape, cfg.noise_power)


def receive_block(cfg: SystemConfig, chan: ChannelRealization, tx, seed) -> np.ndarray:
    """Received M x N block including thermal noise of power N_0."""
    clean = propagate(cfg, chan, tx)
    return clean + awgn(cfg, clean.shape, seed)


def to_frequency(block) -> np.ndarray:
    """Unitary DFT along the sample axis."""
    return np.fft.fft(block, axis=-1, norm="ortho")


def from_frequency(block) -> np.ndarray:
    return np.fft.ifft(block, axis=-1, norm="ortho")


def gaussian_symbols(k_users: int, n: int, seed) -> np.ndarray:
    """Unit-power complex Gaussian data symbols."""
    return complex_normal(as_rng(seed), (k_users, n))
