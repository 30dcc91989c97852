import math
from fractions import Fraction

import numpy as np
import pytest

from wickworks import torusfield as tf
from wickworks.torusfield import (
    GFF,
    WHITE,
    FieldSample,
    ModeLattice,
    SpectralProfile,
    c_variance,
    c_variance_exact,
    gff1_increment_variance,
    green_exact_1d,
    green_truncated,
    pair_with_testfunction,
    sample_field,
    sobolev_sum,
    wick_integral_variance,
    wick_integral_variance_bruteforce,
    wick_integral_variance_exact,
    wick_power_field,
    young_sum_check,
)


class TestLattice:
    def test_mode_counts(self):
        assert len(ModeLattice(1, 3).modes) == 7
        assert len(ModeLattice(2, 2).modes) == 13  # 2*2^2 + 2*2 + 1
        assert len(ModeLattice(3, 1).modes) == 7

    def test_symmetric_under_negation(self):
        lat = ModeLattice(2, 3)
        modes = set(lat.modes)
        assert all(tuple(-c for c in k) in modes for k in modes)

    def test_positive_modes_split(self):
        lat = ModeLattice(2, 3)
        pos = set(lat.positive_modes())
        neg = {tuple(-c for c in k) for k in pos}
        assert pos.isdisjoint(neg)
        assert len(pos) * 2 + 1 == len(lat.modes)

    def test_weights_positive(self):
        lat = ModeLattice(3, 2)
        assert all(lat.lam(k) > 0 for k in lat.modes)
        assert lat.lam((0, 0, 0)) == 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            ModeLattice(4, 1)
        with pytest.raises(ValueError):
            ModeLattice(1, -1)


class TestVariance:
    def test_d1_n0(self):
        assert c_variance(1, 0) == 1.0

    def test_d1_converges_to_resolvent(self):
        # partial sums approach the periodic-resolvent value at 0; the tail
        # decays like 1/N
        target = green_exact_1d(0.0)
        errs = [abs(c_variance(1, N) - target) for N in (8, 32, 128)]
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 3e-3

    def test_d2_log_law(self):
        # C_{2N} - C_N -> log(2)/(2 pi)
        target = math.log(2.0) / (2.0 * math.pi)
        diff = c_variance(2, 256) - c_variance(2, 128)
        assert abs(diff - target) / target < 0.05

    def test_exact_rational(self):
        got = c_variance_exact(1, 2, Fraction(6))
        assert got == 1 + 2 * Fraction(1, 7) + 2 * Fraction(1, 25)


class TestGreen:
    def test_at_zero_is_variance(self):
        for d, N in [(1, 6), (2, 4), (3, 2)]:
            x = 0.0 if d == 1 else (0.0,) * d
            assert green_truncated(x, d, N) == pytest.approx(c_variance(d, N), rel=1e-12)

    def test_even(self):
        assert green_truncated(0.3, 1, 8) == pytest.approx(
            green_truncated(-0.3, 1, 8), rel=1e-12
        )

    def test_d1_converges_to_resolvent(self):
        for x in (0.1, 0.25, 0.5):
            target = green_exact_1d(x)
            errs = [abs(green_truncated(x, 1, N) - target) for N in (8, 32, 128)]
            assert errs[-1] < 5e-4
            assert errs[0] > errs[-1]

    def test_resolvent_properties(self):
        # integral of the resolvent over the circle is 1 (the k = 0 weight)
        xs = np.arange(2000) / 2000
        vals = [green_exact_1d(x) for x in xs]
        assert np.mean(vals) == pytest.approx(1.0, abs=1e-6)

    def test_d3_scaling_window(self):
        # G_N(x) (||x|| + 1/N) stays inside a fixed band over a grid of x and
        # a ladder of N; the band is wide because the (2 pi)^3 weight keeps
        # the asymptotic constants apart at desk-scale cutoffs
        ratios = []
        for N in (8, 16, 32):
            for x1 in (0.06, 0.12, 0.25, 0.5):
                val = green_truncated((x1, 0.0, 0.0), 3, N)
                ratios.append(val * (x1 + 1.0 / N))
        lo, hi = min(ratios), max(ratios)
        assert lo > 0.0
        assert hi / lo < 25.0


class TestSampler:
    def test_deterministic(self):
        lat = ModeLattice(1, 4)
        a = sample_field(GFF, lat, seed=7)
        b = sample_field(GFF, lat, seed=7)
        assert a.amplitudes == b.amplitudes

    def test_variance_at_point(self):
        lat = ModeLattice(1, 8)
        nsamples = 20_000
        amps = tf.batch_amplitudes(lat, GFF, nsamples, seed=3)
        B = tf.synthesis_matrix(lat, np.array([[0.37]]))
        vals = (B @ amps)[0]
        target = c_variance(1, 8)
        se = vals.var(ddof=1) * math.sqrt(2.0 / nsamples)  # var of variance estimate
        assert abs(vals.var(ddof=1) - target) < 4 * se

    def test_covariance_matches_green(self):
        lat = ModeLattice(1, 6)
        nsamples = 40_000
        x, y = 0.15, 0.55
        amps = tf.batch_amplitudes(lat, GFF, nsamples, seed=5)
        B = tf.synthesis_matrix(lat, np.array([[x], [y]]))
        vals = B @ amps
        cov = np.mean(vals[0] * vals[1])
        target = green_truncated(y - x, 1, 6)
        spread = np.std(vals[0] * vals[1], ddof=1) / math.sqrt(nsamples)
        assert abs(cov - target) < 4 * spread

    def test_mode_covariance_identity(self):
        # empirical covariance of the raw amplitudes is the diagonal weight^2
        lat = ModeLattice(2, 2)
        nsamples = 30_000
        amps = tf.batch_amplitudes(lat, GFF, nsamples, seed=11)
        labels = tf.mode_labels(lat)
        emp = amps @ amps.T / nsamples
        for i, (k, _) in enumerate(labels):
            w2 = float(lat.lam(k)) ** -1.0
            assert abs(emp[i, i] - w2) < 5 * w2 * math.sqrt(2.0 / nsamples)
            for j in range(i):
                bound = 5 * math.sqrt(emp[i, i] * emp[j, j] / nsamples)
                assert abs(emp[i, j]) < bound

    def test_white_profile_weights_are_one(self):
        lat = ModeLattice(1, 3)
        s = sample_field(WHITE, lat, seed=1)
        assert s.variance_target() == len(lat.modes)


class TestPairing:
    def test_zero_mode_indicator(self):
        lat = ModeLattice(1, 3)
        s = sample_field(WHITE, lat, seed=2)
        zero = ((0,), "c")
        assert pair_with_testfunction(s, {zero: 1.0}) == s.amplitudes[zero]

    def test_unsupported_mode(self):
        lat = ModeLattice(1, 2)
        s = sample_field(WHITE, lat, seed=2)
        with pytest.raises(ValueError):
            pair_with_testfunction(s, {((5,), "c"): 1.0})

    def test_white_noise_covariance(self):
        # E[<xi, phi1><xi, phi2>] = <phi1, phi2> in the real basis
        lat = ModeLattice(1, 4)
        phi1 = {((1,), "c"): 0.7, ((2,), "s"): -0.3, ((0,), "c"): 0.2}
        phi2 = {((1,), "c"): -1.1, ((2,), "s"): 0.5}
        target = 0.7 * -1.1 + -0.3 * 0.5
        nsamples = 40_000
        vals = []
        amps = tf.batch_amplitudes(lat, WHITE, nsamples, seed=13)
        labels = tf.mode_labels(lat)
        idx = {lab: i for i, lab in enumerate(labels)}
        v1 = sum(c * amps[idx[m]] for m, c in phi1.items())
        v2 = sum(c * amps[idx[m]] for m, c in phi2.items())
        prod = v1 * v2
        se = prod.std(ddof=1) / math.sqrt(nsamples)
        assert abs(prod.mean() - target) < 4 * se

    def test_scaled_bump_variance(self):
        # Var<xi, S^lambda phi> tracks lambda^-d ||phi||^2 for a narrow bump
        lat = ModeLattice(1, 24)

        def bump(width):
            def f(p):
                u = (p[0] % 1.0) - 0.5
                return math.exp(-0.5 * (u / width) ** 2)

            return f

        width0 = 0.04
        targets = {}
        for lam in (1.0, 0.5, 0.25):
            # S^lambda phi(x) = lambda^-d phi(x / lambda): narrower, taller bump
            def scaled(p, lam=lam):
                u = ((p[0] - 0.5) % 1.0 + 0.5) % 1.0  # recenter
                v = (p[0] % 1.0) - 0.5
                return (1.0 / lam) * math.exp(-0.5 * (v / (lam * width0)) ** 2)

            phihat = tf.testfunction_from_values(lat, scaled, grid=512)
            var_exact = sum(c * c for c in phihat.values())
            targets[lam] = var_exact
        # the mode-space variance should scale like lambda^-1 (d = 1)
        assert targets[0.5] / targets[1.0] == pytest.approx(2.0, rel=0.1)
        assert targets[0.25] / targets[1.0] == pytest.approx(4.0, rel=0.2)


class TestSobolev:
    def test_gff_s0_is_variance(self):
        assert sobolev_sum(0.0, 1, 6, GFF) == pytest.approx(c_variance(1, 6), rel=1e-12)

    def test_white_threshold_d2(self):
        # s = -1.01 Cauchy-converges in N; s = -0.99 keeps growing
        def ladder(s):
            return [sobolev_sum(s, 2, N, WHITE) for N in (16, 32, 64, 128, 256)]

        conv = ladder(-1.01)
        div = ladder(-0.99)
        conv_incr = [b - a for a, b in zip(conv, conv[1:])]
        div_incr = [b - a for a, b in zip(div, div[1:])]
        # Cauchy: increments shrink at every doubling; divergent: they grow
        assert all(b / a < 1.0 for a, b in zip(conv_incr, conv_incr[1:]))
        assert all(b / a > 1.0 for a, b in zip(div_incr, div_incr[1:]))

    def test_gff_threshold_d2(self):
        def ladder(s):
            return [sobolev_sum(s, 2, N, GFF) for N in (16, 32, 64, 128, 256)]

        conv = ladder(-0.01)
        div = ladder(0.01)
        conv_incr = [b - a for a, b in zip(conv, conv[1:])]
        div_incr = [b - a for a, b in zip(div, div[1:])]
        assert all(b / a < 1.0 for a, b in zip(conv_incr, conv_incr[1:]))
        assert all(b / a > 1.0 for a, b in zip(div_incr, div_incr[1:]))

    def test_profile_validation(self):
        with pytest.raises(ValueError):
            sobolev_sum(0.0, 2, 4, SpectralProfile("fractional", 1.0))


class TestWickPowers:
    def test_n1_is_field(self):
        lat = ModeLattice(1, 4)
        s = sample_field(GFF, lat, seed=3)
        grid = 32
        np.testing.assert_allclose(
            wick_power_field(s, 1, grid), s.evaluate_grid(grid), rtol=1e-12
        )

    def test_square_integral_centered(self):
        lat = ModeLattice(1, 6)
        nsamples = 4000
        vals = [
            tf.integral_wick_square(sample_field(GFF, lat, seed=1000 + j))
            for j in range(nsamples)
        ]
        mean = np.mean(vals)
        se = np.std(vals, ddof=1) / math.sqrt(nsamples)
        assert abs(mean) < 4 * se

    def test_square_integral_variance_matches_lattice_sum(self):
        lat = ModeLattice(1, 6)
        nsamples = 6000
        vals = np.array(
            [
                tf.integral_wick_square(sample_field(GFF, lat, seed=5000 + j))
                for j in range(nsamples)
            ]
        )
        target = wick_integral_variance(1, 6, 2)
        est = vals.var(ddof=1)
        se = est * math.sqrt(2.0 / nsamples) * 2  # loose var-of-var band
        assert abs(est - target) < 4 * se

    def test_grid_route_matches_mode_route(self):
        lat = ModeLattice(1, 4)
        s = sample_field(GFF, lat, seed=9)
        grid = 4 * 4 + 1
        w2 = wick_power_field(s, 2, grid)
        assert float(w2.mean()) == pytest.approx(tf.integral_wick_square(s), rel=1e-9)


class TestWickIntegralVariance:
    def test_n2_closed_form(self):
        lat = ModeLattice(1, 5)
        direct = 2.0 * sum(1.0 / float(lat.lam(k)) ** 2 for k in lat.modes)
        assert wick_integral_variance(1, 5, 2) == pytest.approx(direct, rel=1e-12)

    def test_convolution_equals_bruteforce_floats(self):
        # the full stated grid: d <= 2, N <= 4, n <= 4
        for d in (1, 2):
            for N in (1, 2, 3, 4):
                for n in (2, 3, 4):
                    conv = wick_integral_variance(d, N, n)
                    brute = wick_integral_variance_bruteforce(d, N, n)
                    assert conv == pytest.approx(brute, rel=1e-11), (d, N, n)

    def test_convolution_equals_bruteforce_exact(self):
        coupling = Fraction(39, 10)
        for d, N, n in [(1, 4, 2), (1, 3, 4), (2, 2, 3), (2, 2, 4)]:
            conv = wick_integral_variance_exact(d, N, n, coupling)
            brute = wick_integral_variance_bruteforce(d, N, n, coupling=coupling)
            assert conv == brute, (d, N, n)

    def test_d2_increasing_and_cauchy(self):
        for n in (2, 3):
            ladder = [wick_integral_variance(2, N, n) for N in (8, 16, 32, 64)]
            assert all(b > a for a, b in zip(ladder, ladder[1:]))
            assert ladder[-1] - ladder[-2] < 0.05 * ladder[-1]

    def test_rejects_small_n(self):
        with pytest.raises(ValueError):
            wick_integral_variance(1, 4, 1)


class TestYoung:
    def test_preconditions(self):
        with pytest.raises(ValueError):
            young_sum_check(2, 1, 1, 4)  # n + m = d is not admissible
        with pytest.raises(ValueError):
            young_sum_check(3, 3, 1, 4)

    def test_smallest_admissible_case_bounded(self):
        rows, sup = young_sum_check(3, 2, 2, 3)
        assert all(w <= sup for _, _, w in rows)
        assert sup < 60.0

    def test_truncation_stable(self):
        _, sup1 = young_sum_check(3, 2, 2, 2, truncation=16)
        _, sup2 = young_sum_check(3, 2, 2, 2, truncation=32)
        assert abs(sup2 - sup1) / sup2 < 0.05


class TestIncrement:
    def test_zero_at_equal_points(self):
        assert gff1_increment_variance(0.3, 0.3, 16) == 0.0

    def test_linear_scaling_band(self):
        v1 = gff1_increment_variance(0.2, 0.2 + 0.08, 256)
        v2 = gff1_increment_variance(0.2, 0.2 + 0.04, 256)
        assert 0.3 < v2 / v1 < 0.7

    def test_fitted_constant_stable_under_doubling(self):
        def fit(N):
            seps = [0.01, 0.02, 0.04, 0.08]
            return max(gff1_increment_variance(0.1, 0.1 + h, N) / h for h in seps)

        c256, c512 = fit(256), fit(512)
        assert abs(c512 - c256) / c512 < 0.05

    def test_matches_mc(self):
        lat = ModeLattice(1, 8)
        nsamples = 30_000
        amps = tf.batch_amplitudes(lat, GFF, nsamples, seed=21)
        B = tf.synthesis_matrix(lat, np.array([[0.2], [0.45]]))
        vals = B @ amps
        inc = vals[1] - vals[0]
        est = inc.var(ddof=1)
        target = gff1_increment_variance(0.2, 0.45, 8)
        se = est * math.sqrt(2.0 / nsamples)
        assert abs(est - target) < 4 * se


class TestGFFMoments:
    def test_even_moments_track_double_factorials(self):
        # MC E[phi(x)^(2p)] / C_N^p ~ (2p-1)!! within Monte Carlo error
        lat = ModeLattice(1, 8)
        nsamples = 60_000
        amps = tf.batch_amplitudes(lat, GFF, nsamples, seed=31)
        B = tf.synthesis_matrix(lat, np.array([[0.41]]))
        vals = (B @ amps)[0]
        cn = c_variance(1, 8)
        for p, target in [(2, 3.0), (3, 15.0)]:
            draws = vals ** (2 * p) / cn**p
            est = draws.mean()
            se = draws.std(ddof=1) / math.sqrt(nsamples)
            assert abs(est - target) < 4 * se, p


class TestReproducibility:
    def test_convolution_bit_identical(self):
        a = wick_integral_variance(2, 16, 3)
        b = wick_integral_variance(2, 16, 3)
        assert a == b  # bitwise

    def test_parallel_map_order_independent_of_threads(self):
        from wickworks.cli import parallel_map

        tasks = [(d, N, n) for d in (1, 2) for N in (2, 3) for n in (2, 3)]
        serial = parallel_map(lambda t: wick_integral_variance(*t), tasks, 1)
        threaded = parallel_map(lambda t: wick_integral_variance(*t), tasks, 4)
        assert serial == threaded  # bitwise, fixed collection order


class TestExport:
    def test_roundtrip_and_determinism(self, tmp_path):
        lat = ModeLattice(2, 3)
        s = sample_field(GFF, lat, seed=99)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        tf.write_sample(s, str(p1), grid=8)
        tf.write_sample(sample_field(GFF, ModeLattice(2, 3), seed=99), str(p2), grid=8)
        assert p1.read_bytes() == p2.read_bytes()
        header = tf.read_sample_header(str(p1))
        assert header["d"] == 2 and header["N"] == 3 and header["profile"] == "gff"
        assert header["seed"] == 99 and header["grid"] == 8
