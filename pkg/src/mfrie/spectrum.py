"""
Spectral estimation from observed singular values.

The symmetrized singular law of the observation,
``(1/2K) sum_k [delta(x - gamma_k) + delta(x + gamma_k)]``, is probed
through its Stieltjes transform evaluated slightly below the real axis
(Cauchy kernel). Density and Hilbert transform follow from the Plemelj
split.

The imaginary offset used at a point ``x`` is, by default,

    eta(x) = sqrt(1 / (2N)) * max(|x|, s)

where ``s`` is the root-mean-square singular value. The offset is thus
relative to the spectral scale, so estimators behave the same whatever the
units of ``S``. A constant offset can be forced with ``eta=...``.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DENSITY_FLOOR",
    "SingularSpectrum",
    "SpectralEvaluator",
    "default_eta_scale",
    "substitute_edges",
]

DENSITY_FLOOR = 1e-4
_CHUNK = 512


def default_eta_scale(n):
    """Relative offset ``sqrt(1 / (2 n))`` applied to the spectral scale."""
    return np.sqrt(1.0 / (2.0 * n))


@dataclass(frozen=True, eq=False)
class SingularSpectrum:
    """Singular values of an ``n x m`` observation.

    Parameters
    ----------
    gammas : array_like
        Singular values, stored sorted in nonincreasing order.
    n, m : int
        Row and column counts of the observation.
    """

    gammas: np.ndarray
    n: int
    m: int

    def __post_init__(self):
        g = np.asarray(self.gammas, dtype=float).ravel()
        if g.size != min(self.n, self.m):
            raise ValueError(
                f"expected {min(self.n, self.m)} singular values, got {g.size}")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("singular values must be finite and nonnegative")
        object.__setattr__(self, "gammas", np.sort(g)[::-1].copy())

    @property
    def alpha(self):
        return self.n / self.m

    @property
    def k(self):
        return self.gammas.size

    @property
    def rms(self):
        """Root-mean-square singular value (spread of the symmetrized law)."""
        return float(np.sqrt(np.mean(self.gammas ** 2)))

    @classmethod
    def from_matrix(cls, s):
        s = np.asarray(s, dtype=float)
        if s.ndim != 2:
            raise ValueError("observation must be a 2-d array")
        gammas = np.linalg.svd(s, compute_uv=False)
        return cls(gammas, *s.shape)

    @classmethod
    def from_file(cls, path, n, m):
        """Read a one-column plain-text file of singular values."""
        return cls(np.loadtxt(path, dtype=float, ndmin=1), n, m)


@dataclass(frozen=True, eq=False)
class SpectralEvaluator:
    """Cauchy-kernel evaluator of the symmetrized singular law.

    Parameters
    ----------
    spectrum : SingularSpectrum
    eta : float, optional
        Constant imaginary offset. When omitted the scale-relative rule of
        the module docstring is used.
    density_floor : float
        Modes whose estimated density falls below this value are flagged
        as edge modes.
    """

    spectrum: SingularSpectrum
    eta: float = None
    density_floor: float = DENSITY_FLOOR
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be positive")

    def eta_at(self, x):
        """Imaginary offset used at real point(s) ``x``."""
        x = np.asarray(x, dtype=float)
        if self.eta is not None:
            return np.full(x.shape, float(self.eta))[()]
        scale = default_eta_scale(self.spectrum.n)
        return scale * np.maximum(np.abs(x), self.spectrum.rms)

    def point(self, x):
        """Complex evaluation point ``x - i eta(x)``."""
        x = np.asarray(x, dtype=float)
        return x - 1j * self.eta_at(x)

    def symmetrized_stieltjes(self, z):
        """``(1/2K) sum_k [1/(z - gamma_k) + 1/(z + gamma_k)]``.

        Raises
        ------
        ValueError
            If any point lies on the real axis.
        """
        z = np.asarray(z, dtype=complex)
        if np.any(z.imag == 0):
            raise ValueError("evaluation point must be off the real axis")
        g = self.spectrum.gammas
        flat = z.ravel()
        out = np.empty(flat.shape, dtype=complex)
        for start in range(0, flat.size, _CHUNK):
            zc = flat[start:start + _CHUNK, None]
            # 1/(z-g) + 1/(z+g) = 2z/(z^2-g^2)
            out[start:start + _CHUNK] = np.mean(zc / (zc * zc - g * g), axis=1)
        return out.reshape(z.shape)[()]

    def density_and_hilbert(self, x):
        """Density and Hilbert transform estimates at ``x``.

        Returns
        -------
        density, hilbert : ndarray
            ``Im G / pi`` and ``Re G / pi`` at ``x - i eta(x)``.
        """
        g = self.symmetrized_stieltjes(self.point(x))
        return g.imag / np.pi, g.real / np.pi

    # per-mode quantities, computed once

    @property
    def mode_points(self):
        if "z" not in self._cache:
            self._cache["z"] = self.point(self.spectrum.gammas)
        return self._cache["z"]

    @property
    def mode_stieltjes(self):
        if "g" not in self._cache:
            self._cache["g"] = self.symmetrized_stieltjes(self.mode_points)
        return self._cache["g"]

    @property
    def mode_density(self):
        return self.mode_stieltjes.imag / np.pi

    @property
    def edge_flags(self):
        return self.mode_density < self.density_floor

    @property
    def zero_point(self):
        """Evaluation point for the modes paired with zero singular values."""
        if self.eta is not None:
            return -1j * float(self.eta)
        return -1j * default_eta_scale(self.spectrum.n) * self.spectrum.rms

    @property
    def zero_stieltjes(self):
        if "g0" not in self._cache:
            self._cache["g0"] = self.symmetrized_stieltjes(self.zero_point)
        return self._cache["g0"]


def substitute_edges(values, edge_flags):
    """Replace flagged entries by the nearest unflagged entry (by index).

    Raises
    ------
    ValueError
        If every entry is flagged.
    """
    values = np.array(values, copy=True)
    edge_flags = np.asarray(edge_flags, dtype=bool)
    if not edge_flags.any():
        return values
    good = np.flatnonzero(~edge_flags)
    if good.size == 0:
        raise ValueError("all modes are edge modes; no estimate available")
    bad = np.flatnonzero(edge_flags)
    pos = np.searchsorted(good, bad)
    left = good[np.clip(pos - 1, 0, good.size - 1)]
    right = good[np.clip(pos, 0, good.size - 1)]
    nearest = np.where(np.abs(bad - left) <= np.abs(right - bad), left, right)
    values[bad] = values[nearest]
    return values
