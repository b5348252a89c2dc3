"""Acceptance suite: the quantitative anchors of the simulator.

Each test prints one PASS/FAIL line (run with -s to see them).  The
Monte Carlo criteria use frozen seeds; runtime for the full module is a
few minutes, dominated by the 1e7-bit saturation run.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import ks_2samp

from uwocdma import ber, linksim, mai, ooc, transport, turbulence

DET = ber.DetectorParams(quantum_efficiency=0.8, wavelength=532e-9,
                         load_resistance=100.0, temperature=290.0,
                         dark_current=1.226e-9, background_rate=1.206e10)
TC = 1e-8
CODE = ooc.OocParams(50, 3)
P2P = ooc.OocParams(1, 1)
TURB = turbulence.TurbulenceParams(chi_t=1e-7, epsilon=5e-5, w_ratio=-3.5)

# published clear-ocean characterization (collimated, 10 ns chips)
TABLE_ROWS = {
    90.0: (3.99e-7, 0.9738, 0.17),
    70.0: (7.812e-6, 0.616, 0.12),
    45.0: (3.135e-4, 0.271, 0.06),
    30.0: (3.1e-3, 0.1248, 0.029),
    22.5: (9.4e-3, 0.071, 0.017),
    18.0: (1.82e-2, 0.0452, 0.011),
}


def report(criterion, ok, detail):
    print("%s criterion %s: %s" % ("PASS" if ok else "FAIL", criterion, detail))
    assert ok, detail


def make_link(users, hops, avg_power_dbm, s2th, code=CODE):
    power = 1e-3 * 10 ** (avg_power_dbm / 10.0)
    chip = ber.PowerPlan(avg_bit_power=power).resolve_chip_power(code, len(hops))
    return ber.LinkEvaluation(users=users, ooc=code, hops=tuple(hops),
                              detector=DET, chip_power=chip, chip_duration=TC,
                              thermal_var=s2th)


def hop_for(range_m, index=1):
    loss, _, s2x = TABLE_ROWS[range_m]
    return ber.HopSpec(loss, turbulence.FadingModel(sigma2_x=s2x), index)


def chain(range_m, n_hops):
    return [hop_for(range_m, i + 1) for i in range(n_hops)]


def p2p_power_at(hops, target_ber, s2th=3.12e7, lo=-60.0, hi=90.0):
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if ber.p2p_ber(make_link(1, hops, mid, s2th, code=P2P)) > target_ber:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_criterion_01_interference_table():
    t0 = time.perf_counter()
    p_l = [mai.prob_num_interferers(l, 5, CODE) for l in range(5)]
    printed = [0.6857, 0.2713, 0.0402, 0.0027, 6.561e-5]
    ok = all(round(v, 4) == pytest.approx(p) for v, p in zip(p_l[:4], printed[:4]))
    ok = ok and p_l[4] == pytest.approx(6.561e-5, rel=1e-9)
    expected_rows = {
        (0, (0, 0, 0)): (1, Fraction(1), 0, 1),
        (1, (0, 0, 1)): (3, Fraction(1, 3), 2, 2),
        (2, (0, 0, 2)): (6, Fraction(1, 9), 2, 2),
        (2, (0, 1, 1)): (6, Fraction(2, 9), 2, 3),
        (3, (0, 0, 3)): (10, Fraction(1, 27), 2, 2),
        (3, (0, 1, 2)): (10, Fraction(1, 9), 5, 3),
        (3, (1, 1, 1)): (10, Fraction(2, 9), 0, 4),
        (4, (0, 0, 4)): (15, Fraction(1, 81), 2, 2),
        (4, (0, 1, 3)): (15, Fraction(4, 81), 5, 3),
        (4, (0, 2, 2)): (15, Fraction(2, 27), 2, 3),
        (4, (1, 1, 2)): (15, Fraction(4, 27), 2, 4),
    }
    rows = {(r["interferers"], r["pattern"]): (
        r["num_patterns"], r["conditional_prob"], r["similar_patterns"],
        r["dimension_offset"]) for r in mai.interference_table(5, CODE)}
    ok = ok and rows == expected_rows
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 1.0
    report(1, ok, "interference table reproduced exactly in %.3f s" % elapsed)


def test_criterion_02_thermal_variance():
    value = ber.thermal_variance(DET, TC)
    ok = abs(value - 3.12e7) <= 0.01 * 3.12e7
    report(2, ok, "thermal variance %.4e vs 3.12e7 (%.2f%% off)"
           % (value, abs(value - 3.12e7) / 3.12e7 * 100))


def test_criterion_03_fading_conversions():
    ok = True
    details = []
    for _, s2i, s2x_printed in TABLE_ROWS.values():
        derived = turbulence.fading_from_scintillation(s2i).sigma2_x
        decimals = len(str(s2x_printed).split(".")[-1])
        ok = ok and round(derived, decimals) == pytest.approx(s2x_printed)
        round_trip = math.expm1(4.0 * derived)
        ok = ok and abs(round_trip - s2i) <= 1e-12
        details.append("%.4g->%g" % (s2i, round(derived, decimals)))
    report(3, ok, "log-amplitude variances %s, round trips exact" % ", ".join(details))


def test_criterion_04_scintillation_integral():
    t0 = time.perf_counter()
    computed = {r: turbulence.scintillation_index(TURB, r, 532e-9)
                for r in sorted(TABLE_ROWS)}
    errors = {r: abs(computed[r] - TABLE_ROWS[r][1]) / TABLE_ROWS[r][1]
              for r in computed}
    ordered = [computed[r] for r in sorted(computed)]
    monotone = all(a < b for a, b in zip(ordered, ordered[1:]))
    elapsed = time.perf_counter() - t0
    ok = max(errors.values()) <= 0.15 and monotone and elapsed < 300.0
    report(4, ok, "scintillation index within %.1f%% of published values, "
           "monotone in range, %.1f s" % (max(errors.values()) * 100, elapsed))


def test_criterion_05_uplink_saturation():
    t0 = time.perf_counter()
    link = make_link(4, [hop_for(70.0)], 40.0, 1e5)
    analytic = ber.uplink_ber(link)
    codebook = ooc.generate_codebook(CODE, 4, seed=1)
    run = linksim.SimRun(link=link, direction="uplink", bit_count=10_000_000,
                         seed=3, codebook=codebook)
    mc = linksim.run_simulation(run)
    elapsed = time.perf_counter() - t0
    band = (7.3e-5, 8.9e-5)
    ok = (band[0] <= analytic <= band[1] and band[0] <= mc.ber <= band[1]
          and elapsed < 600.0)
    report(5, ok, "saturation analytic %.3e, monte carlo %.3e (%d errors / 1e7 "
           "bits) in [7.3e-5, 8.9e-5], %.0f s" % (analytic, mc.ber, mc.errors,
                                                  elapsed))


def test_criterion_06_analytic_vs_monte_carlo():
    ok = True
    details = []
    for s2x in (0.0, 0.06):
        for target in (5e-2, 1e-2, 2e-3):
            lo, hi = -20.0, 40.0
            for _ in range(50):
                mid = 0.5 * (lo + hi)
                link = make_link(1, [ber.HopSpec(7.812e-6,
                                                 turbulence.FadingModel(sigma2_x=s2x))],
                                 mid, 3.12e7, code=P2P)
                if ber.p2p_ber(link) > target:
                    lo = mid
                else:
                    hi = mid
            link = make_link(1, [ber.HopSpec(7.812e-6,
                                             turbulence.FadingModel(sigma2_x=s2x))],
                             0.5 * (lo + hi), 3.12e7, code=P2P)
            analytic = ber.uplink_ber(link)
            assert 1e-3 <= analytic <= 1e-1
            res = linksim.run_simulation(linksim.SimRun(
                link=link, direction="uplink", bit_count=1_000_000, seed=21))
            se = math.sqrt(analytic * (1 - analytic) / res.bits)
            z = (res.ber - analytic) / se
            ok = ok and abs(z) <= 3.0
            details.append("s2x=%g@%.0e:z=%+.2f" % (s2x, analytic, z))
    report(6, ok, "analytic vs 1e6-bit monte carlo %s" % ", ".join(details))


def test_criterion_07_multihop_gain():
    p_direct = p2p_power_at(chain(90.0, 1), 1e-6)
    p_dual = p2p_power_at(chain(45.0, 2), 1e-6)
    gain = p_direct - p_dual
    ok = gain >= 25.0
    report(7, ok, "dual-hop advantage %.1f dB at BER 1e-6 (needs >= 25)" % gain)


def test_criterion_08_multihop_equivalence():
    ok = True
    details = []
    for n_relays, hop_range in ((1, 45.0), (2, 30.0)):
        p_multi = p2p_power_at(chain(hop_range, n_relays + 1), 1e-4)
        p_single = p2p_power_at(chain(hop_range, 1), 1e-4)
        expected_gap = 10.0 * math.log10(n_relays + 1)
        residual = abs(p_multi - p_single - expected_gap)
        ok = ok and residual <= 1.0
        details.append("N=%d residual %.2f dB" % (n_relays, residual))
    report(8, ok, "multi-hop power offset matches 10log10(N+1) within 1 dB: %s"
           % ", ".join(details))


def test_criterion_09_downlink_dominance():
    ok = True
    details = []
    # Grid: per relay count, eight power points spanning the region where
    # the 5-user curves have separated (downlink BER between 1e-4 and
    # 1e-9; the uplink is then pinned near its interference saturation
    # while the downlink keeps falling).  At high BER the two transmission
    # directions sit within a few percent of each other and the simple
    # threshold's interference benefit on lit chips can slightly favor
    # the uplink; that crossover is pinned in the engine's test module.
    for n_relays, hop_range in ((0, 90.0), (1, 45.0), (2, 30.0)):
        hops = chain(hop_range, n_relays + 1)

        def down(dbm):
            return ber.downlink_ber(make_link(5, hops, dbm, 3.12e7))

        bounds = []
        for target in (1e-4, 1e-9):
            lo, hi = -30.0, 80.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if down(mid) > target:
                    lo = mid
                else:
                    hi = mid
            bounds.append(0.5 * (lo + hi))
        grid = np.linspace(bounds[0], bounds[1], 8)
        worst = 0.0
        for dbm in grid:
            link = make_link(5, hops, dbm, 3.12e7)
            u, d = ber.uplink_ber(link), ber.downlink_ber(link)
            worst = max(worst, d - u)
            ok = ok and d <= u
        details.append("N=%d max(down-up)=%.1e" % (n_relays, worst))
    # equality below the code weight
    for users in (2, 3):
        for dbm in np.linspace(10.0, 40.0, 5):
            link = make_link(users, chain(45.0, 2), dbm, 3.12e7)
            u, d = ber.uplink_ber(link), ber.downlink_ber(link)
            rel = abs(u - d) / max(d, 1e-300)
            ok = ok and rel <= 1e-9
    report(9, ok, "downlink <= uplink for 5 users on every grid point (%s); "
           "uplink == downlink to 1e-9 for 2-3 users" % ", ".join(details))


def test_criterion_10_pipeline_bound():
    def exact_pipeline(p_first, later, sent):
        # walk the chip through every hop decision, exact enumeration
        def rec(value, prob, hops):
            if not hops:
                return prob if value != sent else 0.0
            if isinstance(hops[0], tuple):
                flip = hops[0][0] if value == 0 else hops[0][1]
            else:
                flip = hops[0]
            return (rec(1 - value, prob * flip, hops[1:])
                    + rec(value, prob * (1 - flip), hops[1:]))
        return rec(sent, 1.0, [p_first] + later)

    rng = np.random.default_rng(41)
    ok = True
    for _ in range(20):
        n_relayed = int(rng.integers(0, 5))
        p10 = float(rng.uniform(0, 0.9))
        p01 = float(rng.uniform(0, 0.5))
        later = [float(rng.uniform(0, 0.5)) for _ in range(n_relayed)]
        ok = ok and ber.e2e_cer([p10] + later) >= exact_pipeline(
            (p10, p01), later, 0) - 1e-14
        ok = ok and ber.e2e_cer([p01] + later) >= exact_pipeline(
            (p10, p01), later, 1) - 1e-14

    # the measured pipeline chip error rate never beats the bound by > 3 SE
    details = []
    for dbm, n_hops in ((6.0, 3), (2.0, 2), (10.0, 3)):
        hops = chain(45.0, n_hops)
        link = make_link(1, hops, dbm, 3.12e7, code=P2P)
        bound = ber.p2p_ber(link)
        res = linksim.run_simulation(linksim.SimRun(
            link=link, direction="p2p", bit_count=100_000, seed=13))
        measured = res.e2e_chip_errors / res.chips
        se = math.sqrt(max(bound, 1e-12) / res.chips)
        ok = ok and measured <= bound + 3 * se
        details.append("%.3e<=%.3e" % (measured, bound + 3 * se))
    report(10, ok, "composition bound dominates the exact pipeline (20 random "
           "points) and the measured chain (%s)" % ", ".join(details))


def test_criterion_11_lognormal_sum_accuracy():
    rng = np.random.default_rng(31)
    n = 1_000_000
    model = turbulence.FadingModel(sigma2_x=0.06)
    ok = True
    details = []
    for terms in (1, 2, 3):
        direct = np.zeros(n)
        for _ in range(terms):
            direct += turbulence.sample_fading(model, n, seed=rng)
        approx = turbulence.approx_lognormal_sum([1.0] * terms, [0.06] * terms)
        stat = ks_2samp(direct, approx.sample(n, seed=rng)).statistic
        ok = ok and stat <= 0.05
        details.append("%d-term KS %.4f" % (terms, stat))
    report(11, ok, "lognormal-sum surrogate: %s (threshold 0.05)" % ", ".join(details))


def test_criterion_12_photon_transport():
    ok = True
    details = []

    # Beer-Lambert limit, pure absorption
    water = transport.WaterOptics.from_ab(0.114, 0.0)
    geom = transport.LinkGeometry(range_m=30.0, tx_full_divergence_deg=0.02)
    cfg = transport.McTransportConfig(photon_count=400_000, seed=5)
    ir = transport.simulate_impulse_response(water, geom, cfg)
    expected = math.exp(-0.114 * 30.0)
    se = math.sqrt(expected * (1 - expected) / cfg.photon_count)
    ok = ok and abs(ir.total_received_fraction - expected) <= 3 * se
    details.append("beer-lambert z=%+.2f"
                   % ((ir.total_received_fraction - expected) / se))

    # energy conservation and published-loss comparison over 18-45 m
    for rng_m in (18.0, 22.5, 30.0, 45.0):
        geom = transport.LinkGeometry(range_m=rng_m, tx_full_divergence_deg=0.02)
        cfg = transport.McTransportConfig(photon_count=400_000, seed=7)
        ir = transport.simulate_impulse_response(transport.CLEAR_OCEAN, geom, cfg)
        ok = ok and abs(ir.ledger.accounted - 1.0) <= 1e-6
        loss = transport.channel_loss(ir, TC)
        ratio = loss / TABLE_ROWS[rng_m][0]
        ok = ok and 0.2 <= ratio <= 5.0
        details.append("%gm x%.2f" % (rng_m, ratio))

    # bit-exact seed determinism
    cfg = transport.McTransportConfig(photon_count=100_000, seed=9)
    geom = transport.LinkGeometry(range_m=22.5, tx_full_divergence_deg=0.02)
    a = transport.simulate_impulse_response(transport.CLEAR_OCEAN, geom, cfg)
    b = transport.simulate_impulse_response(transport.CLEAR_OCEAN, geom, cfg)
    ok = ok and np.array_equal(a.bins, b.bins)
    details.append("deterministic=%s" % np.array_equal(a.bins, b.bins))
    report(12, ok, "photon transport: %s" % ", ".join(details))
