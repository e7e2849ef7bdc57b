"""
Achievable uplink rates with linear combining and quantized receivers.

The closed form holds in the limit of many channel taps; the moment form
:func:`general_rate_from_moments` is exact for any estimate of the
transmitted symbol and is shared with the Monte Carlo path.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields

import numpy as np

from .airlink import SystemConfig
from .estimation import estimation_variance
from .quantizer import Family, normalized_mse


class CombinerKind(str, enum.Enum):
    MR = "mr"
    ZF = "zf"

    def array_gain(self, m_antennas: int, k_users: int) -> int:
        if self is CombinerKind.MR:
            return m_antennas
        if m_antennas <= k_users:
            raise ValueError(f"zero forcing needs M > K, got M={m_antennas}, K={k_users}")
        return m_antennas - k_users

    @property
    def interference(self) -> int:
        return 1 if self is CombinerKind.MR else 0


@dataclass(frozen=True)
class RateReport:
    """Per-user large-L SINR decomposition; every field is a length-K array."""

    signal: np.ndarray
    gain_uncertainty: np.ndarray
    interference: np.ndarray
    est_error: np.ndarray
    noise: np.ndarray
    quantization: np.ndarray

    @property
    def disturbance(self) -> np.ndarray:
        return (self.gain_uncertainty + self.interference + self.est_error
                + self.noise + self.quantization)

    @property
    def sinr(self) -> np.ndarray:
        return self.signal / self.disturbance

    @property
    def rate(self) -> np.ndarray:
        return np.log2(1 + self.sinr)

    def subset(self, users) -> "RateReport":
        return RateReport(**{f.name: getattr(self, f.name)[users] for f in fields(self)})


def analytic_rate(cfg: SystemConfig, kind: CombinerKind | str, q_mse: float, c,
                  error_model: str = "interferer") -> RateReport:
    """
    Large-L achievable rate of every user.

    ``error_model`` selects whose estimation variance scales the
    estimation-error leakage of interferer k': ``"interferer"`` uses c_k'
    (the error of the k'-th channel estimate), ``"desired"`` uses the
    desired user's c_k for all k', which reproduces the reference near-far
    degradation figures.
    """
    kind = CombinerKind(kind)
    c = np.broadcast_to(np.asarray(c, float), (cfg.k_users,))
    if np.any(c < 0) or np.any(c > 1 + 1e-12):
        raise ValueError("estimation variances must lie in [0, 1]")
    gain = kind.array_gain(cfg.m_antennas, cfg.k_users)
    inter = kind.interference
    bp = cfg.beta_p
    k = cfg.k_users

    if error_model == "interferer":
        est_error = np.full(k, np.sum(bp * (1 - c)))
        interference = inter * (np.sum(bp * c) - bp * c)
    elif error_model == "desired":
        est_error = np.sum(bp) * (1 - c)
        interference = inter * c * (np.sum(bp) - bp)
    else:
        raise ValueError(f"unknown error_model {error_model!r}")

    return RateReport(
        signal=bp * c * gain,
        gain_uncertainty=inter * bp * c,
        interference=interference,
        est_error=est_error,
        noise=np.full(k, float(cfg.noise_power)),
        quantization=np.full(k, float(q_mse)),
    )


def general_rate_from_moments(corr, second_moment):
    """
    ``log2(1 + |E[x_hat* x]|^2 / (E|x_hat|^2 - |E[x_hat* x]|^2))``.

    Raises ValueError if the second moment is below ``|corr|^2``, which
    cannot happen for consistent moment estimates.
    """
    a = np.abs(np.asarray(corr)) ** 2
    s = np.asarray(second_moment, dtype=float)
    gap = s - a
    if np.any(gap < 0):
        raise ValueError("second moment smaller than |corr|^2")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log2(s) - np.log2(gap)
    out = np.where(a == 0, 0.0, out)
    return out[()] if out.ndim == 0 else out


def equal_power(cfg: SystemConfig, snr_db: float) -> SystemConfig:
    return cfg.with_(beta_p=np.full(cfg.k_users, cfg.noise_power * 10 ** (snr_db / 10)))


def quantized_report(cfg: SystemConfig, kind, bits, family=Family.OPTIMAL,
                     error_model="interferer") -> RateReport:
    """Rate report with Q computed at the matched AGC for ``cfg``'s power."""
    q_mse = normalized_mse(bits, family) * cfg.rx_power
    c = estimation_variance(cfg, q_mse)
    return analytic_rate(cfg, kind, q_mse, c, error_model)


def rate_sweep(cfg_template: SystemConfig, kind, bits_list, snr_db_list,
               family=Family.OPTIMAL):
    """
    Rate of user 0 over a grid of resolutions and equal-power SNRs.

    Returns a list of ``(bits, snr_db, rate)`` tuples; ``bits=None`` means
    no quantization.
    """
    rows = []
    for bits in bits_list:
        for snr_db in snr_db_list:
            report = quantized_report(equal_power(cfg_template, snr_db), kind, bits, family)
            rows.append((bits, float(snr_db), float(report.rate[0])))
    return rows


def operating_snr(cfg_template: SystemConfig, kind, target: float = 3.5, bits=None,
                  lo: float = -40.0, hi: float = 40.0, tol: float = 0.01) -> float:
    """SNR in dB where the equal-power rate crosses ``target``, by bisection."""
    def rate_at(snr_db):
        return quantized_report(equal_power(cfg_template, snr_db), kind, bits).rate[0]

    if not rate_at(lo) < target < rate_at(hi):
        raise ValueError(f"target rate {target} not bracketed in [{lo}, {hi}] dB")
    while True:
        mid = 0.5 * (lo + hi)
        r = rate_at(mid)
        if abs(r - target) < tol:
            return mid
        if r < target:
            lo = mid
        else:
            hi = mid


def relative_loss(cfg_template: SystemConfig, kind, bits, target: float = 3.5,
                  tol: float = 0.01) -> float:
    """Fractional rate loss of ``bits``-bit ADCs where the ideal system delivers ``target``."""
    snr_db = operating_snr(cfg_template, kind, target, None, tol=tol)
    cfg = equal_power(cfg_template, snr_db)
    ideal = quantized_report(cfg, kind, None).rate[0]
    quant = quantized_report(cfg, kind, bits).rate[0]
    return float(1 - quant / ideal)


def near_far_rate(cfg: SystemConfig, kind, bits, strong_extra_db: float,
                  family=Family.OPTIMAL) -> RateReport:
    """
    Rates of users 2..K when user 1 is received ``strong_extra_db`` stronger.

    The AGC is re-matched to the inflated received power, so Q grows with
    the strong user, degrading both the estimates and the data phase.
    """
    if cfg.k_users < 2:
        raise ValueError("near-far needs at least two users")
    beta_p = np.array(cfg.beta_p)
    beta_p[0] *= 10 ** (strong_extra_db / 10)
    inflated = cfg.with_(beta_p=beta_p)
    report = quantized_report(inflated, kind, bits, family, error_model="desired")
    return report.subset(slice(1, None))
