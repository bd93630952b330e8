import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfrie.spectrum import (
    DENSITY_FLOOR,
    SingularSpectrum,
    SpectralEvaluator,
    default_eta_scale,
    substitute_edges,
)
from mfrie.transforms import GaussianIIDSingular


def gaussian_spectrum(n, m, seed):
    rng = np.random.default_rng(seed)
    return SingularSpectrum.from_matrix(rng.standard_normal((n, m)) / np.sqrt(n))


class TestSingularSpectrum:
    def test_sorted_nonincreasing(self):
        sp = SingularSpectrum([1.0, 3.0, 2.0], 3, 5)
        np.testing.assert_array_equal(sp.gammas, [3.0, 2.0, 1.0])
        assert sp.k == 3
        np.testing.assert_allclose(sp.alpha, 0.6)

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            SingularSpectrum([1.0, 2.0], 3, 5)

    def test_negative_values(self):
        with pytest.raises(ValueError):
            SingularSpectrum([1.0, -2.0], 2, 2)

    def test_tall_matrix(self):
        sp = gaussian_spectrum(40, 20, 0)
        assert sp.k == 20
        assert sp.alpha == 2.0

    def test_from_file(self, tmp_path):
        path = tmp_path / "gammas.txt"
        np.savetxt(path, [0.5, 2.0, 1.0])
        sp = SingularSpectrum.from_file(path, 3, 4)
        np.testing.assert_array_equal(sp.gammas, [2.0, 1.0, 0.5])


class TestSymmetrizedStieltjes:
    def test_single_atom(self):
        ev = SpectralEvaluator(SingularSpectrum([1.0], 1, 1))
        z = 2.0 - 0.01j
        np.testing.assert_allclose(ev.symmetrized_stieltjes(z),
                                   0.5 * (1 / (z - 1) + 1 / (z + 1)), rtol=1e-15)

    def test_schwarz_reflection(self):
        ev = SpectralEvaluator(gaussian_spectrum(50, 80, 1))
        z = 0.7 + 0.1j
        np.testing.assert_allclose(ev.symmetrized_stieltjes(z),
                                   np.conj(ev.symmetrized_stieltjes(np.conj(z))))

    @settings(max_examples=50, deadline=None)
    @given(re=st.floats(-5, 5), im=st.floats(1e-3, 2))
    def test_odd(self, re, im):
        ev = SpectralEvaluator(SingularSpectrum([0.3, 1.0, 2.5], 3, 4))
        z = complex(re, -im)
        np.testing.assert_allclose(ev.symmetrized_stieltjes(-z),
                                   -ev.symmetrized_stieltjes(z), rtol=1e-14, atol=1e-15)

    def test_real_point_raises(self):
        ev = SpectralEvaluator(SingularSpectrum([1.0], 1, 1))
        with pytest.raises(ValueError):
            ev.symmetrized_stieltjes(0.5)

    def test_matches_marchenko_pastur(self):
        sp = gaussian_spectrum(2000, 4000, 2)
        ev = SpectralEvaluator(sp)
        bulk = sp.gammas[(sp.gammas > np.quantile(sp.gammas, 0.05))
                         & (sp.gammas < np.quantile(sp.gammas, 0.95))]
        z = ev.point(bulk)
        exact = GaussianIIDSingular(0.5).symmetrized_stieltjes(z)
        assert np.max(np.abs(ev.symmetrized_stieltjes(z) - exact)) < 0.02

    def test_error_shrinks_with_n(self):
        errs = []
        for n in (500, 1000, 2000):
            sp = gaussian_spectrum(n, 2 * n, 10 + n)
            ev = SpectralEvaluator(sp)
            x = np.linspace(0.5, 1.6, 30)
            z = ev.point(x)
            exact = GaussianIIDSingular(0.5).symmetrized_stieltjes(z)
            errs.append(np.max(np.abs(ev.symmetrized_stieltjes(z) - exact)))
        assert errs[2] < errs[0]


class TestDensityAndHilbert:
    def test_symmetry(self):
        ev = SpectralEvaluator(gaussian_spectrum(100, 200, 3))
        x = np.array([0.4, 1.0, 1.3])
        d_pos, h_pos = ev.density_and_hilbert(x)
        d_neg, h_neg = ev.density_and_hilbert(-x)
        np.testing.assert_allclose(d_neg, d_pos, rtol=1e-12)
        np.testing.assert_allclose(h_neg, -h_pos, rtol=1e-12)

    def test_density_at_bulk_median(self):
        sp = gaussian_spectrum(2000, 4000, 4)
        ev = SpectralEvaluator(sp)
        x = np.median(sp.gammas)
        dens, _ = ev.density_and_hilbert(x)
        exact = GaussianIIDSingular(0.5).symmetrized_stieltjes(x - 1e-9j).imag / np.pi
        np.testing.assert_allclose(dens, exact, rtol=0.05)

    def test_density_far_outside(self):
        ev = SpectralEvaluator(gaussian_spectrum(500, 1000, 5))
        dens, _ = ev.density_and_hilbert(20.0)
        assert dens < 1e-3

    def test_density_integrates_to_one_constant_eta(self):
        ev = SpectralEvaluator(gaussian_spectrum(1000, 2000, 6), eta=np.sqrt(1 / 2000))
        x = np.linspace(-30, 30, 200001)
        dens, _ = ev.density_and_hilbert(x)
        np.testing.assert_allclose(np.trapezoid(dens, x), 1.0, atol=0.02)

    def test_density_integrates_to_one_near_support(self):
        # the scale-relative offset gives 1/|x| tails, so integrate over a
        # window of twice the spectral radius
        sp = gaussian_spectrum(1000, 2000, 6)
        ev = SpectralEvaluator(sp)
        edge = 2.0 * sp.gammas[0]
        x = np.linspace(-edge, edge, 200001)
        dens, _ = ev.density_and_hilbert(x)
        np.testing.assert_allclose(np.trapezoid(dens, x), 1.0, atol=0.02)


class TestEvaluatorSettings:
    def test_default_eta(self):
        sp = gaussian_spectrum(200, 400, 7)
        ev = SpectralEvaluator(sp)
        scale = default_eta_scale(200)
        np.testing.assert_allclose(scale, np.sqrt(1 / 400))
        np.testing.assert_allclose(ev.eta_at(3.0), scale * 3.0)
        np.testing.assert_allclose(ev.eta_at(0.0), scale * sp.rms)

    def test_constant_eta(self):
        ev = SpectralEvaluator(gaussian_spectrum(20, 40, 8), eta=0.05)
        np.testing.assert_allclose(ev.point(1.0), 1.0 - 0.05j)
        np.testing.assert_allclose(ev.zero_point, -0.05j)

    def test_invalid_eta(self):
        with pytest.raises(ValueError):
            SpectralEvaluator(gaussian_spectrum(20, 40, 8), eta=0.0)

    def test_edge_flags_follow_floor(self):
        ev = SpectralEvaluator(gaussian_spectrum(200, 400, 9))
        np.testing.assert_array_equal(ev.edge_flags, ev.mode_density < DENSITY_FLOOR)
        assert not ev.edge_flags.any()

    def test_isolated_outlier_is_edge(self):
        g = np.concatenate([[1e4], np.linspace(0.5, 1.5, 199)])
        ev = SpectralEvaluator(SingularSpectrum(g, 200, 400))
        assert ev.edge_flags[0]
        assert not ev.edge_flags[1:].any()


class TestSubstituteEdges:
    def test_nearest_unflagged(self):
        vals = np.array([9.0, 1.0, 2.0, 9.0, 3.0, 9.0])
        flags = np.array([True, False, False, True, False, True])
        np.testing.assert_array_equal(substitute_edges(vals, flags),
                                      [1.0, 1.0, 2.0, 2.0, 3.0, 3.0])

    def test_all_flagged_raises(self):
        with pytest.raises(ValueError):
            substitute_edges(np.ones(3), np.ones(3, dtype=bool))
