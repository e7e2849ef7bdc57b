"""Pilot-based LMMSE channel estimation from (possibly quantized) samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .airlink import PilotBook, SystemConfig, frequency_response


@dataclass(frozen=True)
class EstimationReport:
    est_freq: np.ndarray  # M x K x N
    c: np.ndarray  # per-user estimation variance


def correlate(quantized_pilot_rx, book: PilotBook, rho: float) -> np.ndarray:
    """
    Correlate the received pilot block against each user's pilot.

    ``r[m, k, l] = 1/(rho sqrt(N_p)) sum_n q_m[n] conj(x_k[n - l])`` with
    cyclic indexing, so that without noise and quantization
    ``r = sqrt(beta_k P_k N_p) h_mk[l]``.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    q = np.asarray(quantized_pilot_rx)
    pilots = book.pilots
    n_p = book.n_pilots
    if q.shape[-1] != n_p:
        raise ValueError("received block length does not match the pilots")
    # circular cross-correlation through the DFT, all lags at once
    q_f = np.fft.fft(q, axis=-1)  # M x N_p
    x_f = np.fft.fft(pilots, axis=-1)  # K x N_p
    full = np.fft.ifft(q_f[:, np.newaxis, :] * np.conj(x_f)[np.newaxis], axis=-1)
    return full / (rho * np.sqrt(n_p))


def wiener_weights(cfg: SystemConfig, q_mse: float) -> np.ndarray:
    """Per-user, per-tap scalar LMMSE weights (K x L).

    The correlator output is ``sqrt(beta P N_p) h + noise`` with noise power
    ``Q + N_0``, hence the sqrt(N_p) in the numerator.
    """
    if q_mse < 0:
        raise ValueError("q_mse must be nonnegative")
    bp = cfg.beta_p[:, np.newaxis]
    pdp = cfg.pdp
    denom = bp * cfg.n_pilots * pdp + q_mse + cfg.noise_power
    return np.divide(np.sqrt(bp * cfg.n_pilots) * pdp, denom, out=np.zeros_like(denom), where=denom > 0)


def estimation_variance(cfg: SystemConfig, q_mse: float) -> np.ndarray:
    """Variance c_k of the LMMSE frequency-response estimate for every user."""
    if q_mse < 0:
        raise ValueError("q_mse must be nonnegative")
    bpn = cfg.beta_p[:, np.newaxis] * cfg.n_pilots
    pdp = cfg.pdp
    denom = pdp * bpn + q_mse + cfg.noise_power
    # a vanishing denominator means a vanishing numerator as well
    terms = np.divide(pdp ** 2 * bpn, denom, out=np.zeros_like(denom), where=denom > 0)
    return terms.sum(axis=1)


def lmmse_estimate(obs, cfg: SystemConfig, q_mse: float, block_len: int) -> EstimationReport:
    """Weight the correlator outputs tap by tap and move to the frequency domain.

    ``obs`` may be the full correlator output; only lags 0..L-1 are used.
    """
    obs = np.asarray(obs)[..., :cfg.l_taps]
    taps = wiener_weights(cfg, q_mse)[np.newaxis] * obs
    return EstimationReport(frequency_response(taps, block_len), estimation_variance(cfg, q_mse))
