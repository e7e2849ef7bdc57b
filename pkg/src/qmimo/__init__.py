"""Achievable uplink rates of massive MIMO receivers with low-resolution ADCs."""

from .airlink import SystemConfig, build_pilots, draw_channel, verify_pilots
from .estimation import estimation_variance, lmmse_estimate
from .montecarlo import SimResult, flat_channel_caveat, run_trials
from .quantizer import Family, QuantizerSpec, bussgang_decompose, design, normalized_mse
from .rate import CombinerKind, RateReport, analytic_rate, near_far_rate, quantized_report

__version__ = "0.1.0"

__all__ = [
    "CombinerKind", "Family", "QuantizerSpec", "RateReport", "SimResult", "SystemConfig",
    "analytic_rate", "build_pilots", "bussgang_decompose", "design", "draw_channel",
    "estimation_variance", "flat_channel_caveat", "lmmse_estimate", "near_far_rate",
    "normalized_mse", "quantized_report", "run_trials", "verify_pilots",
]
