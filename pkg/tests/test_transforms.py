import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from mfrie.transforms import (
    BernoulliSpectral,
    EmpiricalSamples,
    GaussianIIDSingular,
    MarchenkoPasturEig,
    PointMass,
    SemicircleEig,
    ShiftedWignerEig,
    SolverError,
    SqrtMarchenkoPasturEig,
    SquaredMeasureOf,
    UniformSingular,
    complex_newton,
    damped_fixed_point,
    inverse_stieltjes,
    plemelj_split,
    r_transform,
    rect_c_transform,
    rect_moment,
    rect_moment_inverse,
    stieltjes,
)

CONTINUOUS = [
    SemicircleEig(),
    ShiftedWignerEig(3.0),
    MarchenkoPasturEig(0.25),
    MarchenkoPasturEig(1.0),
    SqrtMarchenkoPasturEig(0.25),
    SquaredMeasureOf(SemicircleEig()),
    SquaredMeasureOf(SqrtMarchenkoPasturEig(0.25)),
    UniformSingular(1.0, 3.0),
]

WITH_CLOSED_R = [
    SemicircleEig(),
    ShiftedWignerEig(3.0),
    SquaredMeasureOf(SemicircleEig()),
    SquaredMeasureOf(SqrtMarchenkoPasturEig(0.25)),
    MarchenkoPasturEig(0.25),
    BernoulliSpectral(0.3),
]

below_axis = st.builds(complex, st.floats(-6, 6), st.floats(-3, -1e-3))


class TestStieltjes:
    def test_semicircle_outside_support(self):
        np.testing.assert_allclose(stieltjes(SemicircleEig(), 2.5), 0.5, atol=1e-14)

    def test_semicircle_matches_wigner_resolvent_trace(self):
        # Monte-Carlo trace of the resolvent of a Wigner matrix
        n = 2000
        rng = np.random.default_rng(7)
        a = rng.standard_normal((n, n))
        eigs = np.linalg.eigvalsh((a + a.T) / np.sqrt(2 * n))
        mc = np.mean(1.0 / (2.5 - eigs))
        np.testing.assert_allclose(stieltjes(SemicircleEig(), 2.5), mc, atol=1e-2)

    @pytest.mark.parametrize("law", CONTINUOUS + [BernoulliSpectral(0.5)], ids=repr)
    def test_far_field(self, law):
        z = 1e6
        np.testing.assert_allclose(stieltjes(law, z) * z, 1.0, rtol=1e-5)

    def test_bernoulli_atoms(self):
        np.testing.assert_allclose(stieltjes(BernoulliSpectral(0.5), 2.0), 0.75)

    def test_empirical_is_sample_mean(self):
        vals = np.array([-1.0, 0.5, 2.0])
        z = 0.3 - 0.2j
        np.testing.assert_allclose(stieltjes(EmpiricalSamples(vals), z),
                                   np.mean(1.0 / (z - vals)))

    def test_real_point_on_support_raises(self):
        with pytest.raises(ValueError):
            stieltjes(SemicircleEig(), 1.0)

    @pytest.mark.parametrize("law", CONTINUOUS, ids=repr)
    def test_matches_quadrature(self, law):
        z = np.array([0.7 - 0.3j, 2.0 - 0.05j, -1.0 - 1.0j])
        lo, hi = law.support()
        for zz in z:
            re = integrate.quad(lambda x: (law.density(x) / (zz - x)).real, lo, hi,
                                limit=400)[0]
            im = integrate.quad(lambda x: (law.density(x) / (zz - x)).imag, lo, hi,
                                limit=400)[0]
            np.testing.assert_allclose(law.stieltjes(zz), re + 1j * im, atol=1e-6)

    @settings(max_examples=60, deadline=None)
    @given(z=below_axis)
    def test_conjugate_symmetry(self, z):
        for law in CONTINUOUS:
            np.testing.assert_allclose(law.stieltjes(np.conj(z)),
                                       np.conj(law.stieltjes(z)), atol=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(z=below_axis)
    def test_positive_imaginary_part_below_axis(self, z):
        for law in CONTINUOUS:
            assert law.stieltjes(z).imag > 0

    @settings(max_examples=60, deadline=None)
    @given(z=below_axis)
    def test_semicircle_is_odd(self, z):
        law = SemicircleEig()
        np.testing.assert_allclose(law.stieltjes(-z), -law.stieltjes(z), atol=1e-12)


class TestDensity:
    @pytest.mark.parametrize("law", CONTINUOUS, ids=repr)
    def test_integrates_to_one(self, law):
        lo, hi = law.support()
        total = integrate.quad(law.density, lo, hi, limit=400, epsabs=1e-12)[0]
        np.testing.assert_allclose(total, 1.0, atol=1e-8)

    @pytest.mark.parametrize("law", CONTINUOUS, ids=repr)
    def test_plemelj_density_integrates_to_one(self, law):
        lo, hi = law.support()
        x = np.linspace(lo - 1.0, hi + 1.0, 400001)
        _, dens = plemelj_split(law, x, 1e-4)
        np.testing.assert_allclose(np.trapezoid(dens, x), 1.0, atol=1e-3)


class TestPlemelj:
    def test_semicircle_at_zero(self):
        hilbert, dens = plemelj_split(SemicircleEig(), 0.0, 1e-6)
        np.testing.assert_allclose(dens, 1 / np.pi, atol=1e-6)
        np.testing.assert_allclose(hilbert, 0.0, atol=1e-12)

    def test_marchenko_pastur_density(self):
        law = MarchenkoPasturEig(0.25)
        _, dens = plemelj_split(law, 4.0, 1e-6)
        np.testing.assert_allclose(dens, law.density(4.0), atol=1e-4)

    @pytest.mark.parametrize("eta", [0.0, -1e-3])
    def test_nonpositive_eta_raises(self, eta):
        with pytest.raises(ValueError):
            plemelj_split(SemicircleEig(), 0.0, eta)


class TestRTransform:
    def test_shifted_wigner(self):
        np.testing.assert_allclose(r_transform(ShiftedWignerEig(3.0), 0.2), 3.2)

    def test_squared_semicircle(self):
        np.testing.assert_allclose(r_transform(SquaredMeasureOf(SemicircleEig()), 0.5), 2.0)

    def test_numeric_semicircle_identity(self):
        np.testing.assert_allclose(r_transform(SemicircleEig(), 0.3, method="numeric"),
                                   0.3, atol=1e-8)

    @pytest.mark.parametrize("law", WITH_CLOSED_R, ids=repr)
    def test_numeric_matches_closed_on_grid(self, law):
        w = np.linspace(0.05, 0.3, 50) + 0.02j
        np.testing.assert_allclose(r_transform(law, w, method="numeric"),
                                   r_transform(law, w, method="closed"), atol=1e-8)

    def test_closed_requested_but_missing(self):
        with pytest.raises(ValueError):
            r_transform(UniformSingular(1.0, 3.0), 0.1, method="closed")

    def test_inverse_stieltjes_round_trip(self):
        law = MarchenkoPasturEig(0.25)
        z = np.array([6.0 - 0.5j, 3.0 - 0.2j])
        np.testing.assert_allclose(inverse_stieltjes(law, law.stieltjes(z)), z, atol=1e-9)


def _uniform_series_c(alpha, z, terms=8):
    """Rectangular R-transform of Uniform[1, 3] from its first even moments."""
    k = np.arange(1, terms + 1)
    moments = (3.0 ** (2 * k + 1) - 1.0) / (2.0 * (2 * k + 1))
    m_poly = np.polynomial.Polynomial(np.concatenate([[0.0], moments]))
    u = np.polynomial.Polynomial([0.0, 1.0])
    h = u * (alpha * m_poly + 1.0) * (m_poly + 1.0)
    roots = (h - z).roots()
    root = roots[np.argmin(np.abs(roots - z))]
    v = z / root
    disc = np.sqrt((alpha + 1.0) ** 2 - 4.0 * alpha * (1.0 - v))
    return (-(alpha + 1.0) + disc) / (2.0 * alpha)


class TestRectangular:
    def test_gaussian_closed(self):
        np.testing.assert_allclose(rect_c_transform(GaussianIIDSingular(0.5), 0.5, 0.3), 0.6)

    def test_gaussian_exact_on_grid(self):
        z = np.linspace(-0.5, 0.5, 100) + 0.1j
        out = rect_c_transform(GaussianIIDSingular(0.5), 0.5, z)
        assert np.array_equal(out, z / 0.5)

    def test_gaussian_numeric_path(self):
        z = np.linspace(0.01, 0.3, 100) - 0.05j
        np.testing.assert_allclose(
            rect_c_transform(GaussianIIDSingular(0.5), 0.5, z, method="numeric"),
            z / 0.5, atol=1e-7)

    @pytest.mark.parametrize("law", [GaussianIIDSingular(0.5), UniformSingular(1.0, 3.0)],
                             ids=repr)
    def test_zero_at_origin(self, law):
        assert rect_c_transform(law, 0.5, 0.0) == 0.0

    def test_uniform_matches_moment_series(self):
        z = 0.01
        np.testing.assert_allclose(
            rect_c_transform(UniformSingular(1.0, 3.0), 0.5, z, method="numeric"),
            _uniform_series_c(0.5, z), atol=1e-6)

    def test_alpha_out_of_range(self):
        with pytest.raises(ValueError):
            rect_c_transform(GaussianIIDSingular(0.5), 1.5, 0.1)

    def test_moment_inverse_round_trip(self):
        law = UniformSingular(1.0, 3.0)
        x = np.array([0.01 - 0.002j, 0.03 + 0.01j])
        np.testing.assert_allclose(rect_moment_inverse(law, rect_moment(law, x)), x,
                                   rtol=1e-9)

    def test_moment_of_empirical_law(self):
        vals = np.array([1.0, 2.0])
        z = 0.05 - 0.01j
        expect = np.mean(1.0 / (1.0 - vals ** 2 * z)) - 1.0
        np.testing.assert_allclose(rect_moment(EmpiricalSamples(vals), z), expect)


class TestLaws:
    def test_point_mass(self):
        law = PointMass(1.0)
        np.testing.assert_allclose(law.stieltjes(3.0), 0.5)
        np.testing.assert_allclose(r_transform(law, 0.2), 1.0)

    def test_squared_law_push_forward(self, rng):
        base = SemicircleEig()
        sq = SquaredMeasureOf(base)
        samples = base.sample(rng, 200000) ** 2
        z = 2.0 - 0.5j
        np.testing.assert_allclose(sq.stieltjes(z), np.mean(1.0 / (z - samples)), atol=5e-3)

    @pytest.mark.parametrize("args", [(0.0,), (1.5,)])
    def test_bernoulli_invalid(self, args):
        with pytest.raises(ValueError):
            BernoulliSpectral(*args)

    def test_uniform_invalid(self):
        with pytest.raises(ValueError):
            UniformSingular(3.0, 1.0)


class TestSolvers:
    def test_newton_vectorized(self):
        target = np.array([2.0, 9.0, 16.0]) + 0j
        root = complex_newton(lambda x: x * x - target, np.ones(3, dtype=complex))
        np.testing.assert_allclose(root, np.sqrt(target), atol=1e-12)

    def test_newton_failure_reports_residual(self):
        with pytest.raises(SolverError) as info:
            complex_newton(lambda x: x * x + 1.0, 0.0 + 0j, max_iter=5)
        assert info.value.residual > 0

    def test_damped_fixed_point(self):
        x, change = damped_fixed_point(lambda v: np.cos(v), 1.0 + 0j)
        np.testing.assert_allclose(x, 0.7390851332151607, atol=1e-9)
        assert change < 1e-10
