"""
Random ensembles for the factorization model ``S = sqrt(kappa) X Y + W``.

``X`` is symmetric ``N x N``, ``Y`` and ``W`` are ``N x M``. All entries are
scaled by ``1/sqrt(N)`` so that spectra stay of order one.

Randomness comes from counter-based Philox generators. A seed and an
optional cell key (for example the indices of a parameter sweep) are fed to
:class:`numpy.random.SeedSequence`, which then spawns one independent
substream for each of ``X``, ``Y`` and ``W``.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .transforms import (
    BernoulliSpectral,
    GaussianIIDSingular,
    MarchenkoPasturEig,
    MeasureModel,
    PointMass,
    SemicircleEig,
    ShiftedWignerEig,
    SqrtMarchenkoPasturEig,
)

__all__ = [
    "ShiftedWigner",
    "WignerSym",
    "Wishart",
    "SqrtWishart",
    "BernoulliSpectralHaar",
    "Identity",
    "GaussianIID",
    "HaarWithSingulars",
    "BernoulliRademacher",
    "EnsembleSpec",
    "ObservationInstance",
    "substreams",
    "haar_orthogonal",
    "sample_x",
    "sample_y",
    "sample_w",
    "synthesize",
    "dump_instance",
    "load_instance",
]


def _symmetric_gaussian(n, rng):
    a = rng.standard_normal((n, n))
    return (a + a.T) / np.sqrt(2.0 * n)


def _rotate_spectrum(values, rng):
    q = haar_orthogonal(values.size, rng)
    out = (q * values) @ q.T
    return 0.5 * (out + out.T)


# priors on X

@dataclass(frozen=True)
class ShiftedWigner:
    """Wigner matrix plus ``c`` times the identity."""

    c: float = 0.0

    def law(self):
        return ShiftedWignerEig(self.c)

    def sample(self, n, rng):
        return _symmetric_gaussian(n, rng) + self.c * np.eye(n)


@dataclass(frozen=True)
class WignerSym(ShiftedWigner):
    """Centred Wigner matrix."""

    c: float = field(default=0.0, init=False)

    def law(self):
        return SemicircleEig()


@dataclass(frozen=True)
class Wishart:
    """``H H^T`` with ``H`` of size ``N x N/aspect`` and entry variance ``1/N``."""

    aspect: float

    def __post_init__(self):
        if not 0.0 < self.aspect <= 1.0:
            raise ValueError("aspect must lie in (0, 1]")

    def law(self):
        return MarchenkoPasturEig(self.aspect)

    def sample(self, n, rng):
        h = rng.standard_normal((n, int(round(n / self.aspect)))) / np.sqrt(n)
        return h @ h.T


@dataclass(frozen=True)
class SqrtWishart(Wishart):
    """Positive square root of a :class:`Wishart` matrix."""

    def law(self):
        return SqrtMarchenkoPasturEig(self.aspect)

    def sample(self, n, rng):
        vals, vecs = np.linalg.eigh(super().sample(n, rng))
        out = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
        return 0.5 * (out + out.T)


@dataclass(frozen=True)
class BernoulliSpectralHaar:
    """Haar-rotated projector with eigenvalue 0 w.p. ``p`` and 1 otherwise."""

    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie in (0, 1)")

    def law(self):
        return BernoulliSpectral(self.p)

    def sample(self, n, rng):
        return _rotate_spectrum((rng.random(n) >= self.p).astype(float), rng)


@dataclass(frozen=True)
class Identity:
    """Deterministic ``X = I`` (plain matrix denoising)."""

    def law(self):
        return PointMass(1.0)

    def sample(self, n, rng):
        return np.eye(n)


# priors on Y and W

@dataclass(frozen=True)
class GaussianIID:
    """I.i.d. Gaussian entries of variance ``1/N``."""

    def law(self, alpha):
        return GaussianIIDSingular(alpha)

    def sample(self, n, m, rng):
        return rng.standard_normal((n, m)) / np.sqrt(n)


@dataclass(frozen=True)
class HaarWithSingulars:
    """``U diag(sigma) V^T`` with Haar ``U, V`` and i.i.d. singular values from ``law``."""

    singular_law: MeasureModel

    def law(self, alpha):
        return self.singular_law

    def sample(self, n, m, rng):
        k = min(n, m)
        sigma = self.singular_law.sample(rng, k)
        u = haar_orthogonal(n, rng)
        v = haar_orthogonal(m, rng)
        return (u[:, :k] * sigma) @ v[:, :k].T


@dataclass(frozen=True)
class BernoulliRademacher:
    """Entries ``0`` w.p. ``p`` and ``+-1/sqrt(N)`` otherwise."""

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError("p must lie in [0, 1)")

    def law(self, alpha):
        # same limiting singular law as a Gaussian matrix of equal variance
        return GaussianIIDSingular(alpha, variance=1.0 - self.p)

    def sample(self, n, m, rng):
        signs = rng.choice(np.array([-1.0, 1.0]), size=(n, m))
        keep = rng.random((n, m)) >= self.p
        return np.where(keep, signs, 0.0) / np.sqrt(n)


@dataclass(frozen=True)
class EnsembleSpec:
    """Priors, dimensions, SNR and seed of one experiment."""

    x_prior: object
    y_prior: object
    n: int
    m: int
    kappa: float
    seed: int = 0
    w_prior: object = GaussianIID()

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("dimensions must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def alpha(self):
        return self.n / self.m

    @property
    def rho_x(self):
        return self.x_prior.law()

    @property
    def mu_y(self):
        return self.y_prior.law(self.alpha)

    @property
    def mu_w(self):
        return self.w_prior.law(self.alpha)


@dataclass(frozen=True, eq=False)
class ObservationInstance:
    """A synthetic draw ``(x, y, w, s)`` with ``s = sqrt(kappa) x y + w``."""

    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    s: np.ndarray
    kappa: float
    spec: EnsembleSpec = None


def substreams(seed, cell=()):
    """Independent Philox generators for ``X``, ``Y`` and ``W``.

    Parameters
    ----------
    seed : int
        64-bit base seed.
    cell : tuple of int
        Extra key words; distinct cells give unrelated streams.

    Returns
    -------
    dict
        Generators under the keys ``"x"``, ``"y"`` and ``"w"``.
    """
    root = np.random.SeedSequence([int(seed), *map(int, cell)])
    return {name: np.random.Generator(np.random.Philox(child))
            for name, child in zip("xyw", root.spawn(3))}


def haar_orthogonal(dim, rng):
    """Haar-distributed orthogonal matrix.

    QR of a Gaussian matrix, with columns multiplied by the signs of the
    diagonal of ``R`` so that the law is exactly Haar.
    """
    if dim < 1:
        raise ValueError("dim must be at least 1")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.Generator(np.random.Philox(rng))
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def sample_x(spec, rng=None):
    """Draw the symmetric factor of ``spec``."""
    rng = substreams(spec.seed)["x"] if rng is None else rng
    return spec.x_prior.sample(spec.n, rng)


def sample_y(spec, rng=None):
    """Draw the rectangular factor of ``spec``."""
    rng = substreams(spec.seed)["y"] if rng is None else rng
    return spec.y_prior.sample(spec.n, spec.m, rng)


def sample_w(spec, rng=None):
    """Draw the noise of ``spec``."""
    rng = substreams(spec.seed)["w"] if rng is None else rng
    return spec.w_prior.sample(spec.n, spec.m, rng)


def synthesize(spec, cell=(), x=None):
    """Draw one observation.

    Parameters
    ----------
    spec : EnsembleSpec
    cell : tuple of int
        Sweep key mixed into the seed.
    x : ndarray, optional
        Fixed symmetric factor to use instead of a fresh draw.

    Returns
    -------
    ObservationInstance
    """
    streams = substreams(spec.seed, cell)
    if x is None:
        x = sample_x(spec, streams["x"])
    elif np.shape(x) != (spec.n, spec.n):
        raise ValueError("x has the wrong shape")
    y = sample_y(spec, streams["y"])
    w = sample_w(spec, streams["w"])
    s = np.sqrt(spec.kappa) * (x @ y) + w
    return ObservationInstance(x, y, w, s, float(spec.kappa), spec)


_MAGIC = b"MFRIE001"


def dump_instance(inst, path):
    """Write ``x, y, w, s`` and ``kappa`` to a flat binary file.

    Layout: 8-byte magic, little-endian float64 ``kappa``, then for each
    matrix two uint64 dimensions followed by row-major float64 data.
    """
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<d", inst.kappa))
        for mat in (inst.x, inst.y, inst.w, inst.s):
            mat = np.ascontiguousarray(mat, dtype="<f8")
            fh.write(struct.pack("<QQ", *mat.shape))
            fh.write(mat.tobytes(order="C"))


def load_instance(path):
    """Read a file written by :func:`dump_instance`."""
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError("not an instance file")
        (kappa,) = struct.unpack("<d", fh.read(8))
        mats = []
        for _ in range(4):
            rows, cols = struct.unpack("<QQ", fh.read(16))
            buf = fh.read(8 * rows * cols)
            mats.append(np.frombuffer(buf, dtype="<f8").reshape(rows, cols).copy())
    return ObservationInstance(*mats, kappa)
