"""
Acceptance criteria 1-10, each at its stated tolerance.

Every test records one PASS/FAIL line, collected in the terminal summary.
Reference numbers below are the published values, not outputs of this code.
"""

import math
import time

import numpy as np
import pytest

from qmimo.airlink import SystemConfig, build_pilots, verify_pilots
from qmimo.cli import main
from qmimo.montecarlo import analytic_for, estimate_variance_trials, flat_channel_caveat, run_trials
from qmimo.quantizer import bussgang_decompose, design, mse, normalized_mse
from qmimo.rate import near_far_rate, rate_sweep, relative_loss

TABLE_OPTIMAL = [0.5708, 0.1331, 0.03576, 0.009573, 0.002492]
TABLE_UNIFORM = [0.5708, 0.1349, 0.03889, 0.01166, 0.003506]
AGC_ANCHORS = {-8: 0.036781, -1: 0.010142, 0: 0.009573, 5: 0.038561, 10: 0.14168}
THREE_BIT = 0.03576


def test_criterion_1_table(verdict):
    start = time.perf_counter()
    worst = 0.0
    for family, table in (("optimal", TABLE_OPTIMAL), ("uniform", TABLE_UNIFORM)):
        for bits, ref in enumerate(table, 1):
            q = bussgang_decompose(design(bits, family)).q_mse
            worst = max(worst, abs(q - ref))
    elapsed = time.perf_counter() - start
    ok = worst < 5e-5 and elapsed < 1.0
    assert verdict("criterion 1", ok, f"max |Q - table| = {worst:.2e}, {elapsed:.3f} s")


def test_criterion_2_one_bit_identity(verdict):
    dbs = np.linspace(-10, 10, 201)
    worst = max(abs(normalized_mse(1, "optimal", db) - (math.pi / 2 - 1)) for db in dbs)
    assert verdict("criterion 2", worst < 1e-10, f"max deviation {worst:.2e} over 201 offsets")


def test_criterion_3_agc_anchors(verdict):
    worst = max(abs(normalized_mse(4, "optimal", db) - ref) for db, ref in AGC_ANCHORS.items())
    grid = np.round(np.arange(-10, 10.001, 0.01), 2)
    q = np.array([normalized_mse(4, "optimal", db) for db in grid])
    inside = (grid >= -8) & (grid <= 5)
    peak = q[inside].max()
    below = grid[q < THREE_BIT + 5e-4]
    ok = worst < 5e-4 and peak < THREE_BIT + 5e-4
    assert verdict("criterion 3", ok,
                   f"max anchor error {worst:.2e}; max Q on [-8, 5] dB = {peak:.6f} "
                   f"vs bound {THREE_BIT + 5e-4:.5f}; bound holds on "
                   f"[{below.min():+.2f}, {below.max():+.2f}] dB")


def test_criterion_4_pilot_orthogonality(verdict):
    worst, cases = 0.0, 0
    for k in range(1, 17):
        for l in range(1, 33):
            for mu in range(1, 5):
                if mu * k * l > 512:
                    continue
                worst = max(worst, verify_pilots(build_pilots(k, l, mu), l))
                cases += 1
    assert verdict("criterion 4", worst < 1e-9, f"{cases} (K, L, mu) cases, max violation {worst:.2e}")


def test_criterion_5_estimation_variance(verdict):
    start = time.perf_counter()
    failures, lines = [], []
    for bits in (None, 1, 3):
        for snr in (-10.0, 0.0, 10.0):
            for mu in (1, 2):
                cfg = SystemConfig.uniform(16, 4, 8, snr, mu)
                chk = estimate_variance_trials(cfg, bits, 1250, seed=5)
                assert chk.n_samples >= 20_000
                z = (chk.c_empirical - chk.c_analytic) / chk.c_se
                cell = f"b={bits} snr={snr:+.0f} mu={mu}: max|z|={np.max(np.abs(z)):.1f}"
                lines.append(cell)
                if np.any(np.abs(z) > 3):
                    failures.append(cell)
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 60
    detail = f"{12 - len(failures)}/12 cells within 3 SE, {elapsed:.1f} s"
    if failures:
        detail += "; failing " + "; ".join(failures)
    print("\n".join(lines))
    assert verdict("criterion 5", ok, detail)


def test_criterion_6_rate_validation(verdict):
    start = time.perf_counter()
    cfg = SystemConfig.uniform(32, 4, 16, 0.0, 1, n_data=256)
    worst, cells = 0.0, []
    for kind in ("mr", "zf"):
        for bits in (None, 1, 3):
            sim = run_trials(cfg, kind, bits, 400, seed=42)
            analytic = np.mean(analytic_for(cfg, kind, bits).rate)
            rel = np.mean(sim.rate) / analytic - 1
            worst = max(worst, abs(rel))
            cells.append(f"{kind}/{bits}:{rel:+.3f}")
    elapsed = time.perf_counter() - start
    ok = worst < 0.10 and elapsed < 180
    assert verdict("criterion 6", ok, f"relative errors {' '.join(cells)}, {elapsed:.0f} s")


def test_criterion_7_conclusion_anchors(verdict):
    tmpl = SystemConfig.uniform(100, 5, 1)
    loss3 = relative_loss(tmpl, "zf", 3, 3.5)
    loss1 = relative_loss(tmpl, "zf", 1, 3.5)
    ok = abs(loss3 - 0.04) <= 0.02 and abs(loss1 - 0.40) <= 0.05
    assert verdict("criterion 7", ok, f"3-bit loss {loss3:.2%}, 1-bit loss {loss1:.2%}")


def test_criterion_8_near_far(verdict):
    cfg = SystemConfig.uniform(100, 5, 1, -5.0)

    def degradation(bits):
        base = near_far_rate(cfg, "zf", bits, 0.0).rate[0]
        return 1 - near_far_rate(cfg, "zf", bits, 10.0).rate[0] / base

    ideal, one = degradation(None), degradation(1)
    ok = abs(ideal - 0.15) <= 0.04 and abs(one - 0.50) <= 0.06
    assert verdict("criterion 8", ok, f"ideal {ideal:.1%}, 1-bit {one:.1%}")


def test_criterion_9_flat_channel(verdict):
    ratios = []
    for l_taps in (1, 4, 16):
        cfg = SystemConfig.uniform(32, 1, l_taps, 20.0)
        ratios.append(float(flat_channel_caveat(cfg, bits=1, n_trials=200, seed=7).ratio[0]))
    gaps = np.abs(1 - np.array(ratios))
    ok = ratios[0] < 0.8 and np.all(np.diff(gaps) < 0) and gaps[-1] < 0.15
    assert verdict("criterion 9", ok,
                   "empirical/analytic at L=1,4,16: " + ", ".join(f"{r:.3f}" for r in ratios))


def _variance_halving():
    cfg = SystemConfig.uniform(16, 2, 4, 0.0)
    small = run_trials(cfg, "mr", 1, 100, seed=1)
    large = run_trials(cfg, "mr", 1, 200, seed=2)
    ratios = np.concatenate([(small.second_moment_se / large.second_moment_se) ** 2,
                             (small.corr_se / large.corr_se) ** 2])
    return bool(np.all((ratios >= 1) & (ratios <= 4))), ratios


def test_criterion_10_properties(verdict, tmp_path):
    checks = {}

    rng = np.random.default_rng(0)
    local = True
    for bits in range(2, 6):
        spec = design(bits, "optimal")
        base = mse(spec)
        local &= all(mse(spec, spec.levels + rng.normal(scale=1e-3, size=spec.levels.shape)) >= base
                     for _ in range(50))
    checks["lloyd local minimum"] = local

    checks["optimal <= uniform"] = all(
        normalized_mse(b, "optimal") <= normalized_mse(b, "uniform") + 1e-12 for b in range(1, 9))

    mono = True
    tmpl = SystemConfig.uniform(100, 5, 1)
    snrs = np.arange(-10.0, 11.0)
    for kind in ("mr", "zf"):
        table = np.array([r for *_, r in rate_sweep(tmpl, kind, [1, 2, 3, 4, 5, None], snrs)])
        table = table.reshape(6, len(snrs))
        mono &= bool(np.all(np.diff(table, axis=0) >= 0) and np.all(np.diff(table, axis=1) > 0))
    checks["rate monotone in bits and SNR"] = mono

    args = ["--seed", "3", "validate", "--m-antennas", "8", "--k-users", "2", "--l-taps", "4",
            "--trials", "10", "--n-data", "32", "--tolerance", "1"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(args + ["--out", str(a)])
    main(args + ["--out", str(b)])
    checks["byte-identical CSV"] = a.read_bytes() == b.read_bytes()

    halving, ratios = _variance_halving()
    checks["variance halving"] = halving

    ok = all(checks.values())
    detail = ", ".join(f"{k}={'ok' if v else 'FAILED'}" for k, v in checks.items())
    detail += f" (variance ratios {ratios.min():.2f}..{ratios.max():.2f})"
    assert verdict("criterion 10", ok, detail)
