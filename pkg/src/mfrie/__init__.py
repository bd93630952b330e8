"""
Rotation-invariant estimators for extensive-rank matrix factorization.

The observation model is ``S = sqrt(kappa) X Y + W`` with ``X`` symmetric
``N x N`` and ``Y``, ``W`` of size ``N x M``. Modules:

transforms
    Spectral laws, Stieltjes, R- and rectangular R-transforms.
spectrum
    Cauchy-kernel estimates of the singular-value law of ``S``.
ensembles
    Random priors and synthetic observations.
rie_x, rie_y
    Estimators of ``X``, ``X^2``, ``Y`` and of the product ``X Y``.
evaluate
    Oracle estimators, error metrics, overlaps.
cli
    Monte-Carlo harness.
"""

from .ensembles import EnsembleSpec, synthesize
from .evaluate import ObservationSVD, normalized_mse, oracle_x, oracle_xy, oracle_y
from .rie_x import estimate_x, estimate_x2, sqrt_psd_estimate
from .rie_y import denoise_xy, estimate_y, threshold_sparse
from .spectrum import SingularSpectrum, SpectralEvaluator

__version__ = "0.1.0"

__all__ = [
    "EnsembleSpec",
    "synthesize",
    "ObservationSVD",
    "normalized_mse",
    "oracle_x",
    "oracle_y",
    "oracle_xy",
    "estimate_x",
    "estimate_x2",
    "sqrt_psd_estimate",
    "estimate_y",
    "denoise_xy",
    "threshold_sparse",
    "SingularSpectrum",
    "SpectralEvaluator",
]
