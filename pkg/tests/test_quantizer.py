import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from qmimo.quantizer import (
    ConvergenceError, Family, QuantizerSpec, adc, agc_sweep, bussgang_decompose,
    cached_design, design, design_lloyd_max, design_uniform, lloyd_step,
    mc_bussgang_oracle, mse, normalized_mse, quantize,
)


def quadrature_mse(spec):
    """Distortion of a unit Gaussian integrated cell by cell."""
    edges = np.concatenate([[-np.inf], spec.thresholds, [np.inf]])
    total = 0.0
    for lo, hi, lv in zip(edges[:-1], edges[1:], spec.levels):
        val, _ = integrate.quad(lambda x: (x - lv) ** 2 * stats.norm.pdf(x), lo, hi,
                                epsabs=1e-13, epsrel=1e-12)
        total += val
    return total


def test_one_bit_level_is_half_normal_mean():
    spec = design_lloyd_max(1)
    assert spec.levels == pytest.approx([-math.sqrt(2 / math.pi), math.sqrt(2 / math.pi)], abs=1e-14)
    assert spec.thresholds == pytest.approx([0.0])


def test_two_bit_design_matches_brute_force_grid():
    # exhaustive search over symmetric level pairs with nearest-level cells
    a, b = np.meshgrid(np.linspace(0.40, 0.50, 401), np.linspace(1.45, 1.55, 401), indexing="ij")
    t = 0.5 * (a + b)
    phi, cdf = stats.norm.pdf, stats.norm.cdf

    def cell(lo, hi, lv):
        p = cdf(hi) - cdf(lo)
        m1 = phi(lo) - phi(hi)
        m2 = p + lo * phi(lo) - (0.0 if np.isscalar(hi) and np.isinf(hi) else hi * phi(hi))
        return m2 - 2 * lv * m1 + lv ** 2 * p

    dist = 2 * (cell(0.0, t, a) + cell(t, np.inf, b))
    i, j = np.unravel_index(np.argmin(dist), dist.shape)
    spec = design_lloyd_max(2)
    assert spec.positive_levels == pytest.approx([a[i, j], b[i, j]], abs=5e-4)
    assert mse(spec) <= dist[i, j] + 1e-12


def test_two_bit_levels_known_values():
    spec = design_lloyd_max(2)
    assert spec.positive_levels == pytest.approx([0.4528, 1.5104], abs=1e-4)
    assert spec.positive_thresholds == pytest.approx([0.9816], abs=1e-4)


@pytest.mark.parametrize("bits", [1, 2, 3, 4])
@pytest.mark.parametrize("family", list(Family))
def test_closed_form_mse_matches_quadrature(bits, family):
    spec = design(bits, family)
    assert mse(spec) == pytest.approx(quadrature_mse(spec), abs=1e-10)


@pytest.mark.parametrize("bits", range(1, 9))
def test_lloyd_fixed_point(bits):
    spec = design_lloyd_max(bits)
    again = lloyd_step(spec)
    assert np.max(np.abs(again.levels - spec.levels)) < 1e-10
    # thresholds sit halfway between neighbouring levels
    assert spec.thresholds == pytest.approx(0.5 * (spec.levels[:-1] + spec.levels[1:]))
    assert np.all(np.diff(spec.levels) > 0)
    assert spec.levels == pytest.approx(-spec.levels[::-1])


@pytest.mark.parametrize("bits", [2, 3, 4, 5])
def test_lloyd_is_local_minimum(bits):
    spec = design_lloyd_max(bits)
    base = mse(spec)
    rng = np.random.default_rng(bits)
    for _ in range(50):
        delta = rng.normal(scale=1e-3, size=spec.levels.shape)
        assert mse(spec, spec.levels + delta) >= base - 1e-15


@pytest.mark.parametrize("bits", range(1, 9))
def test_optimal_beats_uniform(bits):
    assert normalized_mse(bits, "optimal") <= normalized_mse(bits, "uniform") + 1e-12


@pytest.mark.parametrize("bits, step", [(2, 0.9957), (3, 0.5860), (4, 0.3352)])
def test_uniform_step_known_values(bits, step):
    spec = design_uniform(bits)
    assert spec.levels[1] - spec.levels[0] == pytest.approx(step, abs=2e-4)


def test_mse_decreases_with_bits():
    for family in Family:
        q = [normalized_mse(b, family) for b in range(1, 9)]
        assert np.all(np.diff(q) < 0)


def test_ideal_adc_has_no_distortion():
    stats_ = bussgang_decompose(None, 3.0, 7.0)
    assert (stats_.rho, stats_.err_var, stats_.q_mse) == (1.0, 0.0, 0.0)
    assert normalized_mse(None) == 0.0
    y = np.array([1 + 2j, -3j])
    assert np.array_equal(adc(y, None, 1.0), y)


@pytest.mark.parametrize("db", [-10.0, -3.0, 0.0, 4.5, 10.0])
def test_one_bit_identity(db):
    assert normalized_mse(1, agc_gain_db=db) == pytest.approx(math.pi / 2 - 1, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(bits=st.integers(1, 5), db=st.floats(-10, 10), power=st.floats(1e-3, 1e3))
def test_q_scales_with_received_power(bits, db, power):
    spec = cached_design(bits, "optimal")
    ref = bussgang_decompose(spec, db, 1.0)
    scaled = bussgang_decompose(spec, db, power)
    assert scaled.q_mse / power == pytest.approx(ref.q_mse, rel=1e-10)
    # rho refers the output to the unscaled input, so it carries 1/sqrt(P)
    assert scaled.rho * math.sqrt(power) == pytest.approx(ref.rho, rel=1e-10)


@pytest.mark.parametrize("bits, db", [(1, 0.0), (2, -4.0), (3, 0.0), (4, 6.0)])
def test_bussgang_matches_sampling(bits, db):
    spec = cached_design(bits, "optimal")
    exact = bussgang_decompose(spec, db, 2.5)
    sampled, se = mc_bussgang_oracle(spec, db, 2.5, 400_000, seed=bits)
    assert abs(sampled.q_mse - exact.q_mse) < 4 * se
    assert sampled.rho == pytest.approx(exact.rho, rel=1e-2)


def test_bussgang_error_uncorrelated_with_input():
    spec = cached_design(2, "optimal")
    rng = np.random.default_rng(0)
    y = math.sqrt(3 / 2) * (rng.standard_normal(500_000) + 1j * rng.standard_normal(500_000))
    st_ = bussgang_decompose(spec, 0.0, 3.0)
    e = adc(y, spec, 3.0) - st_.rho * y
    assert abs(np.mean(e * np.conj(y))) < 5 * math.sqrt(st_.err_var * 3.0 / y.size)
    assert np.mean(np.abs(e) ** 2) == pytest.approx(st_.err_var, rel=1e-2)


def test_agc_sweep_minimum_at_matched_gain():
    sweep = dict(agc_sweep(cached_design(4, "optimal"), np.arange(-10, 11)))
    assert min(sweep, key=sweep.get) == 0
    with pytest.raises(ValueError):
        agc_sweep(cached_design(4, "optimal"), [])


def test_quantize_threshold_ties_go_up():
    spec = design_lloyd_max(2)
    t = spec.thresholds
    out = quantize(t, 1.0, spec)
    assert np.array_equal(out, spec.levels[1:])
    assert quantize(0.0, 1.0, spec) == spec.levels[2]


def test_quantize_complex_branches_independent():
    spec = design_lloyd_max(3)
    x = np.array([0.3 - 2.0j, -5 + 0.01j])
    out = quantize(x, 1.0, spec)
    assert np.array_equal(out.real, quantize(x.real, 1.0, spec))
    assert np.array_equal(out.imag, quantize(x.imag, 1.0, spec))
    assert np.isscalar(quantize(0.1, 1.0, spec)) or np.ndim(quantize(0.1, 1.0, spec)) == 0


def test_quantize_outputs_are_levels():
    spec = design_uniform(3)
    x = np.random.default_rng(1).normal(scale=3, size=1000)
    assert set(np.unique(quantize(x, 1.0, spec))) <= set(spec.levels)


@pytest.mark.parametrize("bits", [0, 9, 2.5, "3"])
def test_bad_bits(bits):
    with pytest.raises(ValueError):
        design_lloyd_max(bits)


def test_bad_arguments():
    spec = design_lloyd_max(2)
    with pytest.raises(ValueError):
        quantize(1.0, 0.0, spec)
    with pytest.raises(ValueError):
        bussgang_decompose(spec, 0.0, 0.0)
    with pytest.raises(ValueError):
        design_lloyd_max(2, tol=0)
    with pytest.raises(ValueError):
        QuantizerSpec(2, [0.0, 1.0], [0.5], "optimal")
    with pytest.raises(ValueError):
        mc_bussgang_oracle(spec, 0.0, 1.0, 1000, 0)


def test_nonconvergence_is_reported():
    with pytest.raises(ConvergenceError):
        design_lloyd_max(4, max_iterations=2)


def test_design_is_immutable():
    spec = design_lloyd_max(3)
    with pytest.raises(ValueError):
        spec.levels[0] = 0.0
