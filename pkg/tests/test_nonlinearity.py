import math

import numpy as np
import pytest
from scipy import integrate

from sdns import streams
from sdns.nonlinearity import (
    NO_DEALIAS,
    NO_MOLLIFIER,
    TWO_THIRDS,
    MollifierParam,
    bilinear_B,
    bilinear_Bm,
    check_B_bounds,
    convolution_B_oracle,
    mollify,
    rho_lp_norm,
)
from sdns.spectral import (
    FieldError,
    Grid,
    SpectralField,
    apply_Js,
    inner_product,
    leray_project,
    lp_norm,
    random_field,
    single_mode_field,
    sobolev_norm,
)


def _rand(grid, seed, **kw):
    return random_field(grid, streams.stream(seed), **kw)


class TestBilinearB:
    def test_zero_left_argument(self, grid2):
        v = _rand(grid2, 1)
        b = bilinear_B(SpectralField.zero(grid2), v)
        assert sobolev_norm(0.0, b) == 0.0

    def test_grid_mismatch_rejected(self, grid2):
        with pytest.raises(FieldError):
            bilinear_B(_rand(grid2, 2), _rand(Grid(2, 8), 3))

    def test_skew_symmetry(self, field_pairs_16):
        for pairs in field_pairs_16.values():
            for u, v in pairs:
                pairing = inner_product(bilinear_B(u, v), v)
                bound = 1e-10 * sobolev_norm(0.0, u) * sobolev_norm(1.0, v) ** 2
                assert abs(pairing) <= bound

    def test_transposition(self, field_pairs_16):
        for d, pairs in field_pairs_16.items():
            grid = Grid(d, 16)
            for i, (u, v) in enumerate(pairs[:6]):
                z = _rand(grid, 40 + i)
                lhs = inner_product(bilinear_B(u, v), z)
                rhs = -inner_product(bilinear_B(u, z), v)
                scale = (
                    sobolev_norm(0.0, u)
                    * sobolev_norm(1.0, v)
                    * sobolev_norm(1.0, z)
                )
                assert abs(lhs - rhs) <= 1e-10 * scale

    def test_bilinearity(self, grid2):
        u, w, v = _rand(grid2, 4), _rand(grid2, 5), _rand(grid2, 6)
        a, b = 0.7, -1.3
        lhs = bilinear_B(a * u + b * w, v)
        rhs = a * bilinear_B(u, v) + b * bilinear_B(w, v)
        assert np.max(np.abs(lhs.coeffs - rhs.coeffs)) <= 1e-12

    @pytest.mark.parametrize("d", [2, 3])
    def test_matches_convolution_oracle(self, d):
        grid = Grid(d, 8)
        u, v = _rand(grid, 7), _rand(grid, 8)
        fast = bilinear_B(u, v)
        slow = convolution_B_oracle(u, v)
        assert np.max(np.abs(fast.coeffs - slow.coeffs)) <= 1e-13

    def test_output_structure(self, field_pairs_16):
        u, v = field_pairs_16[3][0]
        b = bilinear_B(u, v)
        assert b.is_divergence_free()
        assert b.is_hermitian()


class TestMollify:
    def test_infinite_width_is_identity(self, grid2):
        u = _rand(grid2, 9)
        assert mollify(NO_MOLLIFIER, u) is u

    def test_single_mode_factor(self, grid2):
        u = single_mode_field(grid2, (1, 1))  # |k|^2 = 2
        w = mollify(MollifierParam(1.0), u)
        assert np.max(np.abs(w.coeffs - math.exp(-1.0) * u.coeffs)) <= 1e-15

    def test_contraction(self, grid3):
        u = _rand(grid3, 10)
        for m in (0.5, 2.0, 50.0):
            assert sobolev_norm(0.0, mollify(MollifierParam(m), u)) <= sobolev_norm(0.0, u)

    def test_rejects_nonpositive_width(self):
        with pytest.raises(ValueError):
            MollifierParam(0.0)

    def test_commutes_with_other_multipliers(self, grid2):
        u = _rand(grid2, 11, divergence_free=False)
        m = MollifierParam(3.0)
        a = leray_project(mollify(m, u))
        b = mollify(m, leray_project(u))
        assert np.max(np.abs(a.coeffs - b.coeffs)) <= 1e-14
        a = apply_Js(1.0, mollify(m, u))
        b = mollify(m, apply_Js(1.0, u))
        assert np.max(np.abs(a.coeffs - b.coeffs)) <= 1e-14

    def test_removal_is_monotone_in_m(self, grid2):
        u = _rand(grid2, 12)
        gaps = [
            sobolev_norm(0.0, mollify(MollifierParam(m), u) - u)
            for m in (1.0, 2.0, 4.0, 8.0, 16.0)
        ]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))


class TestBilinearBm:
    def test_zero_argument(self, grid3):
        v = _rand(grid3, 13)
        out = bilinear_Bm(MollifierParam(2.0), SpectralField.zero(grid3), v)
        assert sobolev_norm(0.0, out) == 0.0

    def test_skew_symmetry(self, field_pairs_16):
        m = MollifierParam(5.0)
        for pairs in field_pairs_16.values():
            for u, v in pairs[:8]:
                pairing = inner_product(bilinear_Bm(m, u, v), v)
                bound = 1e-10 * sobolev_norm(0.0, u) * sobolev_norm(1.0, v) ** 2
                assert abs(pairing) <= bound

    def test_limit_to_B_monotone(self, grid3):
        rng = streams.stream(14)
        u = random_field(grid3, rng, spectral_slope=6.0)
        v = random_field(grid3, rng, spectral_slope=6.0)
        base = bilinear_B(u, v)
        gaps = [
            sobolev_norm(-3.0, bilinear_Bm(MollifierParam(m), u, v) - base)
            for m in (1.0, 4.0, 16.0, 64.0)
        ]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] <= 0.05 * gaps[0]


class TestRhoNorm:
    def test_unit_mass(self):
        for m in (0.1, 1.0, 7.3, 1000.0):
            assert rho_lp_norm(m, 1.0) == pytest.approx(1.0, rel=1e-12)

    def test_closed_form_L2_at_2pi(self):
        assert rho_lp_norm(2.0 * math.pi, 2.0) == pytest.approx(2.0**-0.75, rel=1e-12)

    def test_matches_radial_quadrature(self):
        # int rho_m^p over R^3 via the radial rule, for the exponent used
        # in the rough-pair bounds.
        g = 0.5
        p = 6.0 / (4.0 + g)
        m = 2.0 * math.pi

        def integrand(r):
            return 4.0 * math.pi * r**2 * ((m / (2 * math.pi)) ** 1.5 * math.exp(-m * r**2 / 2.0)) ** p

        val, _ = integrate.quad(integrand, 0.0, 10.0)
        assert rho_lp_norm(m, p) == pytest.approx(val ** (1.0 / p), rel=1e-9)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            rho_lp_norm(-1.0, 2.0)
        with pytest.raises(ValueError):
            rho_lp_norm(1.0, 0.5)


class TestCheckBBounds:
    def test_L4_ratio_bounded(self, field_pairs_16):
        report = check_B_bounds(field_pairs_16[3][:10], MollifierParam(10.0))
        by_name = {r.name: r for r in report}
        assert by_name["mollified_L4_bound"].max_ratio <= 1.05

    def test_single_low_mode_ratio_below_one(self):
        grid = Grid(3, 16)
        u = single_mode_field(grid, (1, 0, 0))
        # A single divergence-free mode is a steady solution: B(u,u) = 0.
        report = check_B_bounds([(u, u)], MollifierParam(4.0))
        by_name = {r.name: r for r in report}
        assert by_name["mollified_L4_bound"].max_ratio == 0.0
        # A crossed pair of low modes transports for real and stays below 1.
        v = single_mode_field(grid, (0, 1, 0))
        report = check_B_bounds([(u, v)], MollifierParam(4.0))
        by_name = {r.name: r for r in report}
        assert 0.0 < by_name["mollified_L4_bound"].max_ratio < 1.0

    def test_zero_pair_skipped_and_reported(self, grid3):
        zero = SpectralField.zero(grid3)
        report = check_B_bounds([(zero, zero)], MollifierParam(4.0))
        assert all(r.count == 0 for r in report)
        assert all(r.skipped == 1 for r in report)


class TestDealiasRule:
    def test_unknown_kind_rejected(self):
        from sdns.nonlinearity import DealiasRule

        with pytest.raises(ValueError):
            DealiasRule("half")

    def test_cutoff_band(self, grid2):
        mask = TWO_THIRDS.mask(grid2)
        m = grid2.modes()
        assert bool(mask[tuple([0] * 2)])
        # |m_i| = 5 exceeds floor(16/3) = 5? floor is 5, so kept; 6 dropped.
        assert bool(mask[5, 0])
        assert not bool(mask[6, 0])

    def test_none_rule_keeps_everything(self, grid2):
        u = _rand(grid2, 15, dealias_fraction=None)
        assert NO_DEALIAS.apply(u) is u
