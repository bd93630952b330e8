import numpy as np
import pytest

from mfrie import ensembles as ens
from mfrie.evaluate import ObservationSVD
from mfrie.spectrum import SpectralEvaluator


def make_instance(x_prior, y_prior, n, m, kappa, seed=0, cell=()):
    """Synthesize an observation and its SVD and evaluator."""
    spec = ens.EnsembleSpec(x_prior, y_prior, n, m, kappa, seed)
    inst = ens.synthesize(spec, cell=cell)
    svd = ObservationSVD.from_matrix(inst.s)
    return spec, inst, svd, SpectralEvaluator(svd.gammas)


@pytest.fixture(scope="session")
def wishart_small():
    return make_instance(ens.Wishart(0.25), ens.GaussianIID(), 200, 400, 1.0, seed=3)


@pytest.fixture(scope="session")
def shifted_small():
    return make_instance(ens.ShiftedWigner(3.0), ens.GaussianIID(), 200, 400, 1.0, seed=4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def limiting_stieltjes(rho_x, z, alpha, kappa, start):
    """Limiting symmetrized Stieltjes value of ``S`` for Gaussian ``Y`` and ``W``.

    Solves ``kappa zeta G = G_{X^2}((z - zeta) / (kappa zeta))`` with
    ``zeta = G + (1 - alpha) / (alpha z)`` (``alpha <= 1``) by Newton's
    method from ``start``.
    """
    from scipy import optimize

    def residual(g, zz):
        zeta = g + (1 - alpha) / (alpha * zz)
        return kappa * zeta * g - rho_x.squared_stieltjes((zz - zeta) / (kappa * zeta))

    return np.array([optimize.newton(residual, g0, args=(zz,), tol=1e-13)
                     for zz, g0 in zip(np.ravel(z), np.ravel(start))])


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
