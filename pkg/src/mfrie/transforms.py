"""
Spectral laws and their transforms.

Every law exposes its Stieltjes transform ``G(z) = int rho(x) / (z - x) dx``.
From it the module derives the Plemelj split (density and Hilbert transform),
the R-transform ``R(w) = G^{-1}(w) - 1/w`` and, for laws of singular values,
the rectangular R-transform ``C^{(alpha)}``.

Closed forms are used where they exist. Everything else goes through a
damped complex Newton solver, which raises :class:`SolverError` rather than
returning an unconverged value.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre

__all__ = [
    "SolverError",
    "complex_newton",
    "damped_fixed_point",
    "MeasureModel",
    "ShiftedWignerEig",
    "SemicircleEig",
    "MarchenkoPasturEig",
    "SqrtMarchenkoPasturEig",
    "SquaredMeasureOf",
    "BernoulliSpectral",
    "PointMass",
    "GaussianIIDSingular",
    "UniformSingular",
    "EmpiricalSamples",
    "stieltjes",
    "plemelj_split",
    "r_transform",
    "rect_moment",
    "rect_moment_inverse",
    "rect_c_transform",
]

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 200


class SolverError(RuntimeError):
    """Raised when an iterative solver fails to reach its tolerance.

    Attributes
    ----------
    residual : float
        Largest residual magnitude at the last iterate.
    """

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = float(residual)


def _as_complex(z):
    z = np.asarray(z, dtype=complex)
    return z


def complex_newton(func, x0, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER,
                   deriv=None, name="newton"):
    """Solve ``func(x) = 0`` elementwise with a damped complex Newton method.

    Parameters
    ----------
    func : callable
        Elementwise analytic function of a complex array. It is always
        called with arrays shaped like ``x0``.
    x0 : array_like
        Initial guess.
    tol : float
        Absolute tolerance on ``|func(x)|``.
    max_iter : int
        Maximum number of Newton steps.
    deriv : callable, optional
        Derivative of ``func``. A central difference is used when omitted.
    name : str
        Label used in error messages.

    Returns
    -------
    x : ndarray
        Root with the shape of ``x0``.

    Raises
    ------
    SolverError
        If any element fails to converge.

    Notes
    -----
    A step is halved, up to 40 times, whenever it would increase the
    residual of that element.
    """
    x = np.array(_as_complex(x0), copy=True)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)

    def f(v):
        return np.atleast_1d(_as_complex(func(v[0] if scalar else v)))

    fx = f(x)
    for _ in range(max_iter):
        active = ~(np.abs(fx) <= tol)
        if not active.any():
            break
        if deriv is None:
            h = 1e-7 * (1.0 + np.abs(x))
            dx = (f(x + h) - f(x - h)) / (2.0 * h)
        else:
            dx = np.atleast_1d(_as_complex(deriv(x[0] if scalar else x)))
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(active, fx / dx, 0.0)
        step = np.where(np.isfinite(step), step, 0.0)
        base = np.abs(fx)
        trial = x - step
        ftrial = f(trial)
        for _ in range(40):
            worse = active & ~(np.abs(ftrial) <= base)
            if not worse.any():
                break
            step = np.where(worse, 0.5 * step, step)
            trial = x - step
            ftrial = f(trial)
        x, fx = trial, ftrial
    res = np.abs(fx)
    if not np.all(res <= tol):
        raise SolverError(f"{name} did not converge in {max_iter} iterations",
                          np.nanmax(np.where(np.isfinite(res), res, np.inf)))
    return x[0] if scalar else x


def damped_fixed_point(update, x0, damping=0.5, tol=1e-10, max_iter=500,
                       name="fixed point"):
    """Iterate ``x <- (1 - damping) x + damping update(x)`` to convergence.

    Parameters
    ----------
    update : callable
        Map returning an array (or tuple of arrays) shaped like its input.
    x0 : ndarray or tuple of ndarray
        Starting point.
    damping : float
        Weight of the new iterate.
    tol : float
        Tolerance on the largest elementwise change.
    max_iter : int
        Iteration cap.

    Returns
    -------
    x : same structure as ``x0``
    residual : float
        Largest change at the final iteration.
    """
    is_tuple = isinstance(x0, tuple)
    x = tuple(np.asarray(v, dtype=complex) for v in x0) if is_tuple else (
        np.asarray(x0, dtype=complex),)
    change = np.inf
    for _ in range(max_iter):
        new = update(*x) if is_tuple else (update(x[0]),)
        change = max(float(np.max(np.abs(n - o), initial=0.0)) for n, o in zip(new, x))
        x = tuple((1.0 - damping) * o + damping * n for n, o in zip(new, x))
        if not np.isfinite(change):
            break
        if change <= tol:
            return (x if is_tuple else x[0]), change
    raise SolverError(f"{name} did not converge in {max_iter} iterations", change)


def _sqrt_product(z, a, b):
    # sqrt(z-a)*sqrt(z-b) with principal roots: analytic off [a, b], ~ z at infinity
    return np.sqrt(z - a) * np.sqrt(z - b)


def _legendre_rule(order=2000):
    nodes, weights = roots_legendre(order)
    # map to theta in [0, pi]
    theta = 0.5 * np.pi * (nodes + 1.0)
    return theta, 0.5 * np.pi * weights


_THETA, _THETA_W = _legendre_rule()
_QUAD_CHUNK = 256


class MeasureModel:
    """Base class for a probability law on the real line.

    Subclasses implement :meth:`stieltjes`, :meth:`density` and
    :meth:`support`. Optional closed forms are exposed through
    :meth:`r_closed` and :meth:`squared_stieltjes`.
    """

    symmetric = False
    atomic = False

    def stieltjes(self, z):
        raise NotImplementedError

    def density(self, x):
        raise NotImplementedError

    def support(self):
        raise NotImplementedError

    def r_closed(self, w):
        """Closed-form R-transform, or ``None`` when unavailable."""
        return None

    def squared_stieltjes(self, z):
        """Stieltjes transform of the push-forward law of ``x**2``."""
        z = _as_complex(z)
        root = np.sqrt(z)
        return (self.stieltjes(root) - self.stieltjes(-root)) / (2.0 * root)

    def symmetrized_stieltjes(self, z):
        """Stieltjes transform of ``(rho(x) + rho(-x)) / 2``."""
        z = _as_complex(z)
        return 0.5 * (self.stieltjes(z) - self.stieltjes(-z))

    def sample(self, rng, size):
        raise NotImplementedError(f"{type(self).__name__} has no sampler")

    def _quadrature_stieltjes(self, z):
        # cosine substitution absorbs square-root edges of the density; the
        # density at Re z is subtracted and integrated exactly so that the
        # rule stays accurate close to the real axis
        lo, hi = self.support()
        t = lo + 0.5 * (hi - lo) * (1.0 - np.cos(_THETA))
        weights = _THETA_W * 0.5 * (hi - lo) * np.sin(_THETA)
        dens_t = self.density(t)
        z = _as_complex(z)
        flat = z.ravel()
        out = np.empty(flat.shape, dtype=complex)
        for start in range(0, flat.size, _QUAD_CHUNK):
            zc = flat[start:start + _QUAD_CHUNK]
            dens_x = self.density(zc.real)
            body = np.sum(weights * (dens_t - dens_x[:, None]) / (zc[:, None] - t), axis=1)
            out[start:start + _QUAD_CHUNK] = body + dens_x * np.log((zc - lo) / (zc - hi))
        return out.reshape(z.shape)[()]


@dataclass(frozen=True)
class ShiftedWignerEig(MeasureModel):
    """Semicircle law of radius 2 centred at ``c``."""

    c: float = 0.0

    @property
    def symmetric(self):
        return self.c == 0.0

    def stieltjes(self, z):
        z = _as_complex(z) - self.c
        return 0.5 * (z - _sqrt_product(z, 2.0, -2.0))

    def density(self, x):
        u = np.asarray(x, dtype=float) - self.c
        return np.sqrt(np.clip(4.0 - u * u, 0.0, None)) / (2.0 * np.pi)

    def support(self):
        return (self.c - 2.0, self.c + 2.0)

    def r_closed(self, w):
        return _as_complex(w) + self.c

    def sample(self, rng, size):
        # (x + 2) / 4 is Beta(3/2, 3/2) under the semicircle
        return self.c + 4.0 * rng.beta(1.5, 1.5, size) - 2.0


@dataclass(frozen=True)
class SemicircleEig(ShiftedWignerEig):
    """Centred semicircle on ``[-2, 2]``."""

    c: float = field(default=0.0, init=False)


@dataclass(frozen=True)
class MarchenkoPasturEig(MeasureModel):
    """Eigenvalue law of ``H H^T`` with ``H`` of size ``N x N/aspect``.

    Entries of ``H`` have variance ``1/N``, so the mean is ``1/aspect`` and the
    support is ``[(1/sqrt(aspect) - 1)^2, (1/sqrt(aspect) + 1)^2]``.
    """

    aspect: float

    def __post_init__(self):
        if not 0.0 < self.aspect <= 1.0:
            raise ValueError("aspect must lie in (0, 1]")

    def support(self):
        r = 1.0 / np.sqrt(self.aspect)
        return ((r - 1.0) ** 2, (r + 1.0) ** 2)

    def stieltjes(self, z):
        z = _as_complex(z)
        lo, hi = self.support()
        with np.errstate(divide="ignore", invalid="ignore"):
            g = (z - (1.0 / self.aspect - 1.0) - _sqrt_product(z, lo, hi)) / (2.0 * z)
        return g

    def density(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.support()
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.sqrt(np.clip((x - lo) * (hi - x), 0.0, None)) / (2.0 * np.pi * x)
        return np.where((x > lo) & (x < hi), d, 0.0)

    def r_closed(self, w):
        return (1.0 / self.aspect) / (1.0 - _as_complex(w))


@dataclass(frozen=True)
class SqrtMarchenkoPasturEig(MeasureModel):
    """Law of ``sqrt(lambda)`` for ``lambda`` Marchenko-Pastur (see above)."""

    aspect: float

    def __post_init__(self):
        if not 0.0 < self.aspect <= 1.0:
            raise ValueError("aspect must lie in (0, 1]")

    @property
    def squared(self):
        return MarchenkoPasturEig(self.aspect)

    def support(self):
        lo, hi = self.squared.support()
        return (np.sqrt(lo), np.sqrt(hi))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return 2.0 * np.abs(x) * self.squared.density(x * x) * (x >= 0)

    def stieltjes(self, z):
        return self._quadrature_stieltjes(z)

    def squared_stieltjes(self, z):
        return self.squared.stieltjes(z)


@dataclass(frozen=True)
class SquaredMeasureOf(MeasureModel):
    """Push-forward of ``base`` under ``x -> x**2``."""

    base: MeasureModel

    @property
    def _closed(self):
        # semicircle squared is Marchenko-Pastur with unit aspect
        if isinstance(self.base, ShiftedWignerEig) and self.base.c == 0.0:
            return MarchenkoPasturEig(1.0)
        if isinstance(self.base, SqrtMarchenkoPasturEig):
            return MarchenkoPasturEig(self.base.aspect)
        return None

    @property
    def atomic(self):
        return self.base.atomic

    def stieltjes(self, z):
        closed = self._closed
        if closed is not None:
            return closed.stieltjes(z)
        return self.base.squared_stieltjes(z)

    def density(self, x):
        closed = self._closed
        if closed is not None:
            return closed.density(x)
        x = np.asarray(x, dtype=float)
        root = np.sqrt(np.clip(x, 0.0, None))
        with np.errstate(divide="ignore", invalid="ignore"):
            d = (self.base.density(root) + self.base.density(-root)) / (2.0 * root)
        return np.where(x > 0, d, 0.0)

    def support(self):
        lo, hi = self.base.support()
        top = max(lo * lo, hi * hi)
        bottom = 0.0 if lo <= 0.0 <= hi else min(lo * lo, hi * hi)
        return (bottom, top)

    def r_closed(self, w):
        closed = self._closed
        return None if closed is None else closed.r_closed(w)


@dataclass(frozen=True)
class BernoulliSpectral(MeasureModel):
    """Two atoms: ``0`` with probability ``p`` and ``1`` with ``1 - p``."""

    p: float
    atomic = True

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie in (0, 1)")

    def stieltjes(self, z):
        z = _as_complex(z)
        return self.p / z + (1.0 - self.p) / (z - 1.0)

    def density(self, x):
        raise ValueError("atomic law has no density")

    def support(self):
        return (0.0, 1.0)

    def r_closed(self, w):
        # inverse of p/z + (1-p)/(z-1) on the branch z ~ 1/w
        w = _as_complex(w)
        disc = np.sqrt((w + 1.0) ** 2 - 4.0 * self.p * w)
        return ((w - 1.0) + disc) / (2.0 * w)

    def sample(self, rng, size):
        return (rng.random(size) >= self.p).astype(float)


@dataclass(frozen=True)
class PointMass(MeasureModel):
    """Dirac mass at ``value``."""

    value: float = 1.0
    atomic = True

    @property
    def symmetric(self):
        return self.value == 0.0

    def stieltjes(self, z):
        return 1.0 / (_as_complex(z) - self.value)

    def density(self, x):
        raise ValueError("atomic law has no density")

    def support(self):
        return (self.value, self.value)

    def r_closed(self, w):
        return np.full(np.shape(w), self.value, dtype=complex)[()]

    def sample(self, rng, size):
        return np.full(size, float(self.value))


@dataclass(frozen=True)
class GaussianIIDSingular(MeasureModel):
    """Singular-value law of an ``N x M`` matrix with i.i.d. centred entries.

    ``alpha = N/M`` and the entry variance is ``variance / N``. Only the
    ``min(N, M)`` singular values are counted.
    """

    alpha: float
    variance: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError("alpha must be positive")
        if not self.variance > 0.0:
            raise ValueError("variance must be positive")

    @property
    def _squared_scale(self):
        # squared singulars are MP(alpha) or (1/alpha) * MP(1/alpha), times variance
        if self.alpha <= 1.0:
            return MarchenkoPasturEig(self.alpha), self.variance
        return MarchenkoPasturEig(1.0 / self.alpha), self.variance / self.alpha

    def squared_stieltjes(self, z):
        law, scale = self._squared_scale
        return law.stieltjes(_as_complex(z) / scale) / scale

    def symmetrized_stieltjes(self, z):
        z = _as_complex(z)
        return z * self.squared_stieltjes(z * z)

    def support(self):
        law, scale = self._squared_scale
        lo, hi = law.support()
        return (np.sqrt(scale * lo), np.sqrt(scale * hi))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        law, scale = self._squared_scale
        return 2.0 * np.abs(x) * law.density(x * x / scale) / scale * (x >= 0)

    def stieltjes(self, z):
        return self._quadrature_stieltjes(z)

    def rect_closed(self, ratio, z):
        """Closed-form rectangular R-transform at ``ratio = min(alpha, 1/alpha)``.

        Returns ``None`` for any other ratio.
        """
        if not np.isclose(ratio, min(self.alpha, 1.0 / self.alpha), rtol=1e-12):
            return None
        return self.variance * _as_complex(z) / min(self.alpha, 1.0)


@dataclass(frozen=True)
class UniformSingular(MeasureModel):
    """Uniform law on ``[a, b]`` with ``0 <= a < b``."""

    a: float
    b: float

    def __post_init__(self):
        if not 0.0 <= self.a < self.b:
            raise ValueError("need 0 <= a < b")

    def stieltjes(self, z):
        z = _as_complex(z)
        return np.log((z - self.a) / (z - self.b)) / (self.b - self.a)

    def squared_stieltjes(self, z):
        z = _as_complex(z)
        root = np.sqrt(z)
        return (np.arctanh(self.b / root) - np.arctanh(self.a / root)) / (
            root * (self.b - self.a))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.a) & (x <= self.b), 1.0 / (self.b - self.a), 0.0)

    def support(self):
        return (self.a, self.b)

    def sample(self, rng, size):
        return rng.uniform(self.a, self.b, size)


@dataclass(frozen=True, eq=False)
class EmpiricalSamples(MeasureModel):
    """Empirical law of a finite sample; transforms are exact kernel sums."""

    values: np.ndarray
    atomic = True

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if v.size == 0:
            raise ValueError("empty sample")
        object.__setattr__(self, "values", v)

    @property
    def symmetric(self):
        return bool(np.allclose(self.values, -self.values[::-1], atol=1e-12))

    def stieltjes(self, z):
        z = _as_complex(z)
        flat = z.ravel()
        out = np.empty(flat.shape, dtype=complex)
        for start in range(0, flat.size, 256):
            chunk = flat[start:start + 256]
            out[start:start + 256] = np.mean(1.0 / (chunk[:, None] - self.values), axis=1)
        return out.reshape(z.shape)

    def squared_stieltjes(self, z):
        return EmpiricalSamples(self.values ** 2).stieltjes(z)

    def density(self, x):
        raise ValueError("empirical law has no density; use plemelj_split")

    def support(self):
        return (self.values[0], self.values[-1])

    def sample(self, rng, size):
        return rng.choice(self.values, size=size, replace=True)


def stieltjes(m, z):
    """Stieltjes transform ``G_m(z) = int m(dx) / (z - x)``.

    Parameters
    ----------
    m : MeasureModel
    z : complex or array_like
        Points off the real support of ``m``.

    Returns
    -------
    complex or ndarray

    Raises
    ------
    ValueError
        If a point lies on the real support.
    """
    z = _as_complex(z)
    lo, hi = m.support()
    on_support = (z.imag == 0) & (z.real >= lo) & (z.real <= hi)
    if np.any(on_support):
        raise ValueError("Stieltjes transform evaluated on the real support")
    return m.stieltjes(z)


def plemelj_split(m, x, eta):
    """Hilbert transform and density from ``G(x - i eta)``.

    Returns
    -------
    hilbert, density : ndarray
        ``Re G / pi`` and ``Im G / pi``.
    """
    if not np.all(np.asarray(eta) > 0):
        raise ValueError("eta must be positive")
    g = m.stieltjes(np.asarray(x, dtype=float) - 1j * np.asarray(eta, dtype=float))
    return g.real / np.pi, g.imag / np.pi


def inverse_stieltjes(m, w):
    """Solve ``G_m(z) = w`` by complex Newton from ``z = 1/w``."""
    w = _as_complex(w)
    return complex_newton(lambda z: m.stieltjes(z) - w, 1.0 / w,
                          name="Stieltjes inversion")


def r_transform(m, w, method="auto"):
    """R-transform ``R(w) = G^{-1}(w) - 1/w``.

    Parameters
    ----------
    m : MeasureModel
    w : complex or array_like
    method : {"auto", "closed", "numeric"}
        ``auto`` prefers the closed form when the law has one.
    """
    w = _as_complex(w)
    if method in ("auto", "closed"):
        closed = m.r_closed(w)
        if closed is not None:
            return closed
        if method == "closed":
            raise ValueError(f"no closed-form R-transform for {m!r}")
    return inverse_stieltjes(m, w) - 1.0 / w


def rect_moment(m, z):
    """``M_mu(z) = int 1 / (1 - t^2 z) mu(dt) - 1`` for a singular-value law."""
    z = _as_complex(z)
    out = np.zeros(z.shape, dtype=complex)
    nz = z != 0
    if isinstance(m, EmpiricalSamples):
        t2 = m.values ** 2
        zz = z[nz]
        out[nz] = np.mean((t2 * zz[:, None]) / (1.0 - t2 * zz[:, None]), axis=1)
    else:
        zz = z[nz]
        out[nz] = m.squared_stieltjes(1.0 / zz) / zz - 1.0
    return out[()] if out.ndim == 0 else out


def rect_moment_inverse(m, k):
    """Solve ``M_m(x) = k`` for ``x`` on the branch where ``x -> 0`` as ``k -> 0``.

    Works in ``s = 1/x``, where the equation reads ``s G_{m^2}(s) = 1 + k``
    and ``s ~ E[t^2] / k`` for small ``k``.

    Raises
    ------
    SolverError
        If Newton's method fails.
    """
    k = _as_complex(k)
    big = 1e4 * (1.0 + max(abs(b) for b in m.support()) ** 2)
    second = (big * (big * m.squared_stieltjes(big + 0j) - 1.0)).real
    s = complex_newton(lambda s: s * m.squared_stieltjes(s) - 1.0 - k,
                       second / k, name="moment inversion")
    return 1.0 / s


def _t_transform(u, ratio):
    return (ratio * u + 1.0) * (u + 1.0)


def _t_inverse(v, ratio):
    # root of ratio u^2 + (ratio+1) u + 1 - v = 0 continuing u = 0 at v = 1
    disc = np.sqrt((ratio + 1.0) ** 2 - 4.0 * ratio * (1.0 - v))
    r1 = (-(ratio + 1.0) + disc) / (2.0 * ratio)
    r2 = (-(ratio + 1.0) - disc) / (2.0 * ratio)
    guess = (v - 1.0) / (ratio + 1.0)
    return np.where(np.abs(r1 - guess) <= np.abs(r2 - guess), r1, r2)


def rect_c_transform(m, alpha, z, method="auto"):
    """Rectangular R-transform ``C^{(alpha)}_m(z)``.

    Computed as ``T^{-1}(z / H^{-1}(z))`` with ``T(u) = (alpha u + 1)(u + 1)``
    and ``H(u) = u T(M_m(u))``.

    Parameters
    ----------
    m : MeasureModel
        Law of singular values.
    alpha : float
        Aspect ratio in ``(0, 1]``.
    z : complex or array_like
    method : {"auto", "closed", "numeric"}

    Raises
    ------
    SolverError
        If the inversion of ``H`` fails.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    z = _as_complex(z)
    if method in ("auto", "closed") and hasattr(m, "rect_closed"):
        closed = m.rect_closed(alpha, z)
        if closed is not None:
            return closed
    if method == "closed":
        raise ValueError(f"no closed-form rectangular R-transform for {m!r}")
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.zeros(z.shape, dtype=complex)
    nz = z != 0
    if nz.any():
        target = z[nz]

        def h_minus_target(u):
            return u * _t_transform(rect_moment(m, u), alpha) - target

        root = complex_newton(h_minus_target, target, name="rectangular R inversion")
        out[nz] = _t_inverse(target / root, alpha)
    return out[0] if scalar else out
