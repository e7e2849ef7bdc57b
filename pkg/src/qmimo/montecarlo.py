"""
Symbol-level simulation of the quantized uplink.

Each trial draws a channel, sends pilots through the ADC, estimates the
channel, sends a Gaussian data block through the ADC and combines on every
subcarrier. Moments of the symbol estimate are averaged over subcarriers
within a trial and over trials; standard errors come from the spread of the
per-trial averages.

Every trial runs on its own RNG stream derived from ``(seed, trial)``, so
results do not depend on execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import airlink
from .airlink import SystemConfig
from .estimation import correlate, estimation_variance, lmmse_estimate
from .quantizer import Family, adc, bussgang_decompose, cached_design
from .rate import CombinerKind, RateReport, analytic_rate, general_rate_from_moments

# Gram-matrix condition number beyond which a ZF draw is rejected.
MAX_CONDITION = 1e12

# Fraction of rejected trials that aborts a run.
MAX_REJECT_FRACTION = 1e-3

TERM_NAMES = ("signal", "gain_uncertainty", "interference", "est_error", "noise", "quantization")


class RankDeficientError(ValueError):
    """The estimated channel matrix cannot be zero-forced."""


@dataclass(frozen=True)
class SimResult:
    """
    Empirical moments of the combined symbol estimate, one entry per user.

    ``corr`` is E[x_hat^* x]; ``terms`` holds, when instrumented, the
    per-trial K x 6 x 6 Gram matrices of the six expansion terms in
    :data:`TERM_NAMES` order.
    """

    corr: np.ndarray
    second_moment: np.ndarray
    corr_se: np.ndarray
    second_moment_se: np.ndarray
    rate: np.ndarray
    rate_se: np.ndarray
    n_realizations: int
    n_subcarriers: int
    rejected: int = 0
    terms: np.ndarray | None = field(default=None, repr=False)


def trial_rng(seed, trial: int, attempt: int = 0) -> np.random.Generator:
    return np.random.default_rng([int(seed), trial, attempt])


def combiner_weights(est_freq, kind: CombinerKind | str) -> np.ndarray:
    """
    Unit-norm combining vectors for each user.

    ``est_freq`` is M x K, or ... x M x K for a batch of subcarriers; the
    symbol estimate of user k is ``w_k^H q``.
    """
    kind = CombinerKind(kind)
    h = np.asarray(est_freq)
    if kind is CombinerKind.MR:
        w = h
    else:
        gram = np.conj(np.swapaxes(h, -1, -2)) @ h
        if h.shape[-1] > h.shape[-2] or np.any(np.linalg.cond(gram) > MAX_CONDITION):
            raise RankDeficientError("estimated channel matrix is rank deficient")
        # columns of pinv(H)^H = H (H^H H)^-1
        w = h @ np.linalg.inv(gram)
    norms = np.linalg.norm(w, axis=-2, keepdims=True)
    return np.divide(w, norms, out=np.zeros_like(w), where=norms > 0)


def _receiver_stats(cfg, spec):
    stats = bussgang_decompose(spec, 0.0, cfg.rx_power)
    return stats.rho, stats.q_mse


def _trial(cfg, kind, spec, rho, q_mse, book, rng, perfect_csi, instrument):
    n = cfg.n_data
    chan = airlink.draw_channel(cfg, n, rng)

    if perfect_csi:
        est = chan.freq
    else:
        y_p = airlink.propagate(cfg, chan, book.pilots)
        y_p = y_p + airlink.awgn(cfg, y_p.shape, rng)
        q_p = adc(y_p, spec, cfg.rx_power)
        est = lmmse_estimate(correlate(q_p, book, rho), cfg, q_mse, n).est_freq

    x = airlink.gaussian_symbols(cfg.k_users, n, rng)
    clean = airlink.propagate(cfg, chan, x)
    z = airlink.awgn(cfg, clean.shape, rng)
    y = clean + z
    q = adc(y, spec, cfg.rx_power)

    w = combiner_weights(np.moveaxis(est, -1, 0), kind)  # N x M x K
    q_f = airlink.to_frequency(q)  # M x N
    x_f = airlink.to_frequency(x)  # K x N
    x_hat = np.einsum("nmk,mn->kn", np.conj(w), q_f) / rho

    corr = np.mean(np.conj(x_hat) * x_f, axis=1)
    second = np.mean(np.abs(x_hat) ** 2, axis=1)
    if not instrument:
        return corr, second, None

    # decomposition of x_hat into the expansion terms (raw form; the signal
    # and gain-uncertainty parts are separated once the mean gain is known)
    amp = np.sqrt(cfg.beta_p)
    h_f = np.moveaxis(chan.freq, -1, 0)  # N x M x K
    eps = np.moveaxis(est, -1, 0) - h_f
    est_b = np.moveaxis(est, -1, 0)
    gains = np.einsum("nmk,nmj->nkj", np.conj(w), est_b)  # w_k^H h_hat_j
    leak = np.einsum("nmk,nmj->nkj", np.conj(w), eps)  # w_k^H eps_j
    xs = (amp[:, None] * x_f).T  # N x K, sqrt(beta P) x
    own = np.einsum("nkk->nk", gains) * xs
    inter = np.einsum("nkj,nj->nk", gains, xs) - own
    err = -np.einsum("nkj,nj->nk", leak, xs)
    noise = np.einsum("nmk,mn->nk", np.conj(w), airlink.to_frequency(z))
    e = q - rho * y
    quant = np.einsum("nmk,mn->nk", np.conj(w), airlink.to_frequency(e)) / rho
    raw = np.stack([own, xs, inter, err, noise, quant], axis=-1)  # N x K x 6
    gram = np.einsum("nki,nkj->kij", raw, np.conj(raw)) / n
    own_gain = np.mean(np.einsum("nkk->nk", gains), axis=0)
    return corr, second, (gram, own_gain)


def run_trials(cfg: SystemConfig, kind, bits, n_trials: int, seed, *,
               family=Family.OPTIMAL, perfect_csi: bool = False,
               instrument: bool = False) -> SimResult:
    """
    Simulate ``n_trials`` coherence blocks and collect symbol-estimate moments.

    ``bits=None`` simulates ideal ADCs. ZF draws whose estimated channel
    cannot be inverted are redrawn from a derived stream and counted;
    a run with more than 0.1% rejected trials raises RankDeficientError.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if cfg.n_data < cfg.l_taps:
        raise ValueError("data block must be at least as long as the channel")
    kind = CombinerKind(kind)
    spec = None if bits is None else cached_design(int(bits), Family(family).value)
    rho, q_mse = _receiver_stats(cfg, spec)
    book = airlink.build_pilots(cfg.k_users, cfg.l_taps, cfg.pilot_excess)

    corrs = np.empty((n_trials, cfg.k_users), dtype=complex)
    seconds = np.empty((n_trials, cfg.k_users))
    grams, own_gains = [], []
    rejected = 0
    for t in range(n_trials):
        attempt = 0
        while True:
            rng = trial_rng(seed, t, attempt)
            try:
                corr, second, extra = _trial(cfg, kind, spec, rho, q_mse, book, rng,
                                             perfect_csi, instrument)
                break
            except RankDeficientError:
                rejected += 1
                attempt += 1
                if rejected > MAX_REJECT_FRACTION * n_trials:
                    raise
        corrs[t], seconds[t] = corr, second
        if extra is not None:
            grams.append(extra[0])
            own_gains.append(extra[1])

    corr = corrs.mean(axis=0)
    second = seconds.mean(axis=0)
    sqrt_n = math.sqrt(n_trials)
    ddof = 1 if n_trials > 1 else 0
    corr_se = np.std(corrs, axis=0, ddof=ddof) / sqrt_n
    second_se = np.std(seconds, axis=0, ddof=ddof) / sqrt_n
    rate = general_rate_from_moments(corr, second)
    rate_se = _rate_se(corrs, seconds, corr, second)

    terms = None
    if instrument:
        terms = _split_signal(np.array(grams), np.mean(own_gains, axis=0))
    return SimResult(corr, second, corr_se, second_se, np.atleast_1d(rate), rate_se,
                     n_trials, cfg.n_data, rejected, terms)


def _rate_se(corrs, seconds, corr, second):
    """Delta-method standard error of the rate from per-trial moments."""
    n = corrs.shape[0]
    if n < 2:
        return np.full(corr.shape, np.nan)
    a = np.abs(corr) ** 2
    gap = second - a
    with np.errstate(divide="ignore", invalid="ignore"):
        d_second = (1 / second - 1 / gap) / math.log(2)
        d_a = 1 / (gap * math.log(2))
        infl = (d_second * (seconds - second)
                + d_a * 2 * np.real(np.conj(corr) * (corrs - corr)))
    return np.std(infl, axis=0, ddof=1) / math.sqrt(n)


def _split_signal(grams, own_gain):
    """Map raw-term Gram matrices to the six expansion terms.

    Raw order is (own, bare symbol, interference, error, noise, quant); the
    signal term is ``g_mean * bare`` and the gain uncertainty ``own - signal``.
    """
    n_trials, k_users = grams.shape[:2]
    out = np.empty_like(grams)
    for k in range(k_users):
        t = np.zeros((6, 6), dtype=complex)
        t[0, 1] = own_gain[k]
        t[1, 0] = 1
        t[1, 1] = -own_gain[k]
        t[2:, 2:] = np.eye(4)
        out[:, k] = t @ grams[:, k] @ t.conj().T
    return out


def term_statistics(result: SimResult):
    """Mean and standard error across trials of the term Gram matrices (K x 6 x 6)."""
    if result.terms is None:
        raise ValueError("result was not instrumented")
    g = result.terms
    n = g.shape[0]
    return g.mean(axis=0), g.std(axis=0, ddof=1) / math.sqrt(n)


def analytic_for(cfg: SystemConfig, kind, bits, family=Family.OPTIMAL) -> RateReport:
    """Closed-form counterpart of a simulated configuration."""
    spec = None if bits is None else cached_design(int(bits), Family(family).value)
    _, q_mse = _receiver_stats(cfg, spec)
    return analytic_rate(cfg, kind, q_mse, estimation_variance(cfg, q_mse))


@dataclass(frozen=True)
class EstimateCheck:
    """Empirical estimate variance per user against the closed form."""

    c_analytic: np.ndarray
    c_empirical: np.ndarray
    c_se: np.ndarray
    err_var: np.ndarray
    cross: np.ndarray
    cross_se: np.ndarray
    n_samples: int


def estimate_variance_trials(cfg: SystemConfig, bits, n_realizations: int, seed,
                             family=Family.OPTIMAL) -> EstimateCheck:
    """
    Monte Carlo of the pilot phase alone.

    Each (antenna, realization) pair is one independent sample; its value is
    the subcarrier average of ``|h_hat|^2``. Also returns the error variance
    and the estimate/error cross-correlation with its standard error.
    """
    spec = None if bits is None else cached_design(int(bits), Family(family).value)
    rho, q_mse = _receiver_stats(cfg, spec)
    book = airlink.build_pilots(cfg.k_users, cfg.l_taps, cfg.pilot_excess)
    n = max(cfg.n_pilots, cfg.l_taps)
    power, errs, cross = [], [], []
    for r in range(n_realizations):
        rng = trial_rng(seed, r)
        chan = airlink.draw_channel(cfg, n, rng)
        y_p = airlink.propagate(cfg, chan, book.pilots)
        y_p = y_p + airlink.awgn(cfg, y_p.shape, rng)
        q_p = adc(y_p, spec, cfg.rx_power)
        est = lmmse_estimate(correlate(q_p, book, rho), cfg, q_mse, n).est_freq
        eps = est - chan.freq
        power.append(np.mean(np.abs(est) ** 2, axis=-1))  # M x K
        errs.append(np.mean(np.abs(eps) ** 2, axis=-1))
        cross.append(np.mean(est * np.conj(eps), axis=-1))
    power = np.concatenate(power)  # (R*M) x K
    errs = np.concatenate(errs)
    cross = np.concatenate(cross)
    n_samples = power.shape[0]
    root = math.sqrt(n_samples)
    return EstimateCheck(
        c_analytic=estimation_variance(cfg, q_mse),
        c_empirical=power.mean(axis=0),
        c_se=power.std(axis=0, ddof=1) / root,
        err_var=errs.mean(axis=0),
        cross=cross.mean(axis=0),
        cross_se=np.sqrt(np.sum(np.abs(cross - cross.mean(axis=0)) ** 2, axis=0)
                         / (n_samples - 1)) / root,
        n_samples=n_samples,
    )


@dataclass(frozen=True)
class CaveatReport:
    sim: SimResult
    analytic: RateReport

    @property
    def ratio(self) -> np.ndarray:
        """Empirical over analytic rate, per user."""
        return self.sim.rate / self.analytic.rate


def flat_channel_caveat(cfg: SystemConfig, bits=1, n_trials: int = 200, seed=0,
                        kind=CombinerKind.ZF) -> CaveatReport:
    """
    Simulate a channel with few taps next to its large-L closed form.

    With one tap and a dominant user the quantization distortion adds up
    coherently over the array and the closed form is far too optimistic.
    """
    sim = run_trials(cfg, kind, bits, n_trials, seed)
    return CaveatReport(sim, analytic_for(cfg, kind, bits))
