"""
Rotation-invariant estimation of the symmetric factor ``X``.

The estimator keeps the left singular vectors ``u_i`` of ``S`` and replaces
the spectrum by ``xi_i``. Each ``xi_i`` is a function of the symmetrized
Stieltjes transform ``G`` of ``S`` at ``z_i = gamma_i - i eta``, the priors,
and three auxiliary complex parameters ``zeta_1, zeta_2, zeta_3``.

Both aspect-ratio regimes share one set of equations once ``p1`` denotes the
Stieltjes value on the ``N`` side and ``p2`` the one on the ``M`` side::

    alpha <= 1:  p1 = G,                         p2 = alpha G + (1 - alpha)/z
    alpha  > 1:  p1 = G/alpha + (1 - 1/alpha)/z,  p2 = G

    zeta1 = w C_W(p1 p2) / p1
    zeta3 = w C_Y(p2 p3) / p3,   p3 = ((z - zeta1) p1 - 1) / zeta3

with ``w = min(1, 1/alpha)`` and ``C`` the rectangular R-transform at ratio
``min(alpha, 1/alpha)``.
"""

from dataclasses import dataclass, replace

import numpy as np

from .spectrum import substitute_edges
from .transforms import (
    GaussianIIDSingular,
    damped_fixed_point,
    rect_c_transform,
    rect_moment_inverse,
)

__all__ = [
    "XParams",
    "XEstimate",
    "solve_x_params",
    "estimate_x",
    "estimate_x2",
    "sqrt_psd_estimate",
    "overlap_x_theory",
    "x2_gaussian_closed_form",
    "x2_gaussian_closed_form_real",
    "even_stieltjes",
]

ZETA_DAMPING = 0.5
ZETA_TOL = 1e-10
ZETA_MAX_ITER = 500


@dataclass(frozen=True, eq=False)
class XParams:
    """Saddle-point parameters at one or more spectral points.

    All fields are complex arrays of a common shape.
    """

    z: np.ndarray
    zeta1: np.ndarray
    zeta2: np.ndarray
    zeta3: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray
    alpha: float
    residual: float = 0.0

    @property
    def weight(self):
        """Ratio ``K/N`` of nonzero singular values; scales per-mode formulas."""
        return 1.0 if self.alpha <= 1.0 else self.alpha

    def __getitem__(self, idx):
        fields = ("z", "zeta1", "zeta2", "zeta3", "p1", "p2", "p3")
        return replace(self, **{f: np.asarray(getattr(self, f))[idx] for f in fields})


@dataclass(frozen=True, eq=False)
class XEstimate:
    """Estimated eigenvalues of ``X`` (or ``X^2``) in the basis of ``u_i``.

    Attributes
    ----------
    xi : ndarray or None
        Eigenvalue estimates, length ``N``.
    xi2 : ndarray or None
        Estimates of the eigenvalues of ``X^2``.
    edge_flags : ndarray of bool
        Modes whose value was substituted from a neighbour.
    params : XParams
        Parameters at the nonzero singular values.
    zero_params : XParams or None
        Parameters shared by the ``N - M`` null modes when ``alpha > 1``.
    n_clamped : int
        Number of negative ``xi2`` values clamped by :func:`sqrt_psd_estimate`.
    """

    xi: np.ndarray
    xi2: np.ndarray = None
    edge_flags: np.ndarray = None
    params: XParams = None
    zero_params: XParams = None
    n_clamped: int = 0

    @property
    def residual(self):
        res = [0.0]
        for p in (self.params, self.zero_params):
            if p is not None:
                res.append(p.residual)
        return max(res)

    def matrix(self, u, values=None):
        """Assemble ``U diag(values) U^T`` (``values`` defaults to ``xi``)."""
        values = self.xi if values is None else values
        out = (u * values) @ u.T
        return 0.5 * (out + out.T)


def _side_stieltjes(g, z, alpha):
    if alpha <= 1.0:
        return g, alpha * g + (1.0 - alpha) / z
    return g / alpha + (1.0 - 1.0 / alpha) / z, g


def _ratio_weight(alpha):
    return min(alpha, 1.0 / alpha), min(1.0, 1.0 / alpha)


def _is_standard_gaussian(mu, alpha):
    return (isinstance(mu, GaussianIIDSingular) and np.isclose(mu.alpha, alpha)
            and mu.variance == 1.0)


def _reduced_zeta3(mu_y, z, zeta1, p1, p2, alpha):
    # zeta3 = w C_Y(p2 p3)/p3 with p3 = (tau - 1)/zeta3 forces C_Y(p2 p3) = (tau - 1)/w,
    # and C(u) = k holds exactly when u = x T(k) with M_Y(x) = k
    ratio, weight = _ratio_weight(alpha)
    k = ((z - zeta1) * p1 - 1.0) / weight
    x = rect_moment_inverse(mu_y, k)
    u = x * (ratio * k + 1.0) * (k + 1.0)
    return weight * k * p2 / u


def solve_x_params(ev, mu_y, mu_w, z=None, alpha=None, g=None, method="auto"):
    """Solve for the saddle-point parameters of the ``X`` estimator.

    Parameters
    ----------
    ev : SpectralEvaluator
    mu_y, mu_w : MeasureModel
        Singular-value laws of ``Y`` and ``W``.
    z : complex or ndarray, optional
        Evaluation points; defaults to the per-mode points of ``ev``.
    alpha : float, optional
        Aspect ratio; defaults to that of the spectrum.
    g : complex or ndarray, optional
        Precomputed symmetrized Stieltjes values at ``z``.
    method : {"auto", "reduced", "fixed_point"}
        How ``zeta3`` is found for non-Gaussian ``Y``. ``reduced`` solves the
        equivalent scalar moment equation, which always stays on the
        physical branch. ``fixed_point`` iterates the ``zeta3`` equation
        from the Gaussian value and can leave the domain of ``C_Y``.
        ``auto`` uses the closed form for standard Gaussian ``Y`` and
        ``reduced`` otherwise.

    Returns
    -------
    XParams

    Raises
    ------
    SolverError
        If the ``zeta3`` solve does not converge.
    """
    alpha = ev.spectrum.alpha if alpha is None else float(alpha)
    if z is None:
        z, g = ev.mode_points, ev.mode_stieltjes
    z = np.asarray(z, dtype=complex)
    g = ev.symmetrized_stieltjes(z) if g is None else np.asarray(g, dtype=complex)
    ratio, weight = _ratio_weight(alpha)
    p1, p2 = _side_stieltjes(g, z, alpha)

    if _is_standard_gaussian(mu_w, alpha):
        # C_W(u) = u / min(alpha, 1), simplified so that zeta1 = zeta3 exactly
        zeta1 = weight * p2 / min(alpha, 1.0)
    else:
        zeta1 = weight * rect_c_transform(mu_w, ratio, p1 * p2) / p1
    if alpha <= 1.0:
        zeta2 = alpha * z * (z * g - 1.0) / (alpha * z * g + 1.0 - alpha)
    else:
        zeta2 = z - 1.0 / g

    # Gaussian Y makes C_Y linear, so zeta3 no longer depends on p3
    gaussian_zeta3 = weight * p2 / min(alpha, 1.0)
    residual = 0.0
    if method == "auto" and _is_standard_gaussian(mu_y, alpha):
        zeta3 = gaussian_zeta3
    elif method in ("auto", "reduced"):
        zeta3 = _reduced_zeta3(mu_y, z, zeta1, p1, p2, alpha)
    elif method == "fixed_point":
        def update(zeta3):
            p3 = ((z - zeta1) * p1 - 1.0) / zeta3
            return weight * rect_c_transform(mu_y, ratio, p2 * p3) / p3

        zeta3, residual = damped_fixed_point(
            update, gaussian_zeta3, damping=ZETA_DAMPING, tol=ZETA_TOL,
            max_iter=ZETA_MAX_ITER, name="zeta3 iteration")
    else:
        raise ValueError(f"unknown method {method!r}")
    p3 = ((z - zeta1) * p1 - 1.0) / zeta3
    return XParams(z, zeta1, zeta2, zeta3, p1, p2, p3, alpha, residual)


def even_stieltjes(rho, s):
    """``G(w) + G(-w)`` for ``w**2 = s``; independent of the root chosen."""
    w = np.sqrt(np.asarray(s, dtype=complex))
    return rho.stieltjes(w) + rho.stieltjes(-w)


def _xi_from_params(params, rho_x, kappa, mass):
    s = (params.z - params.zeta1) / (kappa * params.zeta3)
    return np.imag(even_stieltjes(rho_x, s) / params.zeta3) / (2.0 * kappa * mass)


def _mode_mass(ev, params):
    # pi * density, rescaled to a per-mode weight of the N-dimensional side
    return np.pi * ev.mode_density / params.weight


def _zero_mass(ev, alpha):
    eta0 = -np.imag(ev.zero_point)
    return (1.0 - 1.0 / alpha) / eta0


def _finish(values, edge_flags):
    if edge_flags.any():
        values = substitute_edges(values, edge_flags)
    return values


def estimate_x(ev, rho_x, mu_y, mu_w, kappa, alpha=None):
    """Rotation-invariant estimate of the eigenvalues of ``X``.

    Parameters
    ----------
    ev : SpectralEvaluator
    rho_x : MeasureModel
        Eigenvalue law of ``X``.
    mu_y, mu_w : MeasureModel
        Singular-value laws of ``Y`` and ``W``.
    kappa : float
        Signal-to-noise ratio. Must be positive unless ``rho_x`` is
        symmetric, in which case the estimate is zero for any ``kappa``.
    alpha : float, optional

    Returns
    -------
    XEstimate
        ``xi`` has length ``N``. When ``alpha > 1`` the last ``N - M``
        entries belong to the null space of ``S^T`` and share one value.
    """
    symmetric = getattr(rho_x, "symmetric", False)
    if not (kappa > 0 or (symmetric and kappa == 0)):
        raise ValueError("kappa must be positive")
    alpha = ev.spectrum.alpha if alpha is None else float(alpha)
    params = solve_x_params(ev, mu_y, mu_w, alpha=alpha)
    if symmetric:
        xi = np.zeros(ev.spectrum.k)
    else:
        xi = _xi_from_params(params, rho_x, kappa, _mode_mass(ev, params))
    edges = ev.edge_flags
    if edges.all():
        raise ValueError("all modes are edge modes; no estimate available")
    xi = _finish(xi, edges)
    zero_params = None
    n_null = ev.spectrum.n - ev.spectrum.k
    if n_null > 0:
        zero_params = solve_x_params(ev, mu_y, mu_w, z=ev.zero_point,
                                     alpha=alpha, g=ev.zero_stieltjes)
        if symmetric:
            xi0 = 0.0
        else:
            xi0 = _xi_from_params(zero_params, rho_x, kappa, _zero_mass(ev, alpha))
        xi = np.concatenate([xi, np.full(n_null, float(xi0))])
        edges = np.concatenate([edges, np.zeros(n_null, dtype=bool)])
    return XEstimate(xi=xi, edge_flags=edges, params=params, zero_params=zero_params)


def _xi2_from_params(params, kappa, mass):
    return np.imag(params.p3) / (kappa * mass)


def estimate_x2(ev, mu_y, mu_w, kappa, alpha=None):
    """Rotation-invariant estimate of the eigenvalues of ``X^2``.

    The eigenvalue law of ``X`` is not needed. When ``Y`` and ``W`` are both
    standard Gaussian the closed form :func:`x2_gaussian_closed_form` is used.

    Returns
    -------
    XEstimate
        With ``xi2`` filled and ``xi`` left as ``None``.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    alpha = ev.spectrum.alpha if alpha is None else float(alpha)
    gaussian = _is_standard_gaussian(mu_y, alpha) and _is_standard_gaussian(mu_w, alpha)
    params = solve_x_params(ev, mu_y, mu_w, alpha=alpha)
    if gaussian:
        xi2 = x2_gaussian_closed_form(ev.mode_stieltjes, ev.mode_points, alpha, kappa)
    else:
        xi2 = _xi2_from_params(params, kappa, _mode_mass(ev, params))
    edges = ev.edge_flags
    if edges.all():
        raise ValueError("all modes are edge modes; no estimate available")
    xi2 = _finish(xi2, edges)
    zero_params = None
    n_null = ev.spectrum.n - ev.spectrum.k
    if n_null > 0:
        zero_params = solve_x_params(ev, mu_y, mu_w, z=ev.zero_point,
                                     alpha=alpha, g=ev.zero_stieltjes)
        xi20 = _xi2_from_params(zero_params, kappa, _zero_mass(ev, alpha))
        xi2 = np.concatenate([xi2, np.full(n_null, float(xi20))])
        edges = np.concatenate([edges, np.zeros(n_null, dtype=bool)])
    return XEstimate(xi=None, xi2=xi2, edge_flags=edges, params=params,
                     zero_params=zero_params)


def x2_gaussian_closed_form(g, z, alpha, kappa):
    """``X^2`` eigenvalue estimate for Gaussian ``Y`` and ``W``.

    Parameters
    ----------
    g : complex or ndarray
        Symmetrized Stieltjes value of ``S`` at ``z``.
    z : complex or ndarray
        Evaluation point. For real ``z`` and ``alpha <= 1`` this reduces to
        :func:`x2_gaussian_closed_form_real`.
    alpha, kappa : float
    """
    g = np.asarray(g, dtype=complex)
    z = np.asarray(z, dtype=complex)
    p1, p2 = _side_stieltjes(g, z, alpha)
    zeta = min(1.0, 1.0 / alpha) * p2 / min(alpha, 1.0)
    weight = 1.0 if alpha <= 1.0 else alpha
    p3 = ((z - zeta) * p1 - 1.0) / zeta
    return weight * np.imag(p3) / (kappa * np.imag(g))


def x2_gaussian_closed_form_real(density, hilbert, gamma, alpha, kappa):
    """Closed form in terms of the density and Hilbert transform at ``gamma``.

    ``(1/kappa) [-1 + 1 / (alpha ((pi mu)^2 + (pi H + (1 - alpha)/(alpha gamma))^2))]``,
    valid for ``alpha <= 1``.
    """
    if alpha > 1.0:
        raise ValueError("real-variable closed form requires alpha <= 1")
    pm = np.pi * np.asarray(density, dtype=float)
    ph = np.pi * np.asarray(hilbert, dtype=float) + (1.0 - alpha) / (alpha * np.asarray(gamma))
    return (-1.0 + 1.0 / (alpha * (pm ** 2 + ph ** 2))) / kappa


def sqrt_psd_estimate(est):
    """Estimate ``X`` as the square root of the ``X^2`` estimate.

    Negative ``xi2`` values are clamped to zero and counted in
    ``n_clamped``.
    """
    if est.xi2 is None:
        raise ValueError("estimate carries no xi2 values")
    xi2 = np.asarray(est.xi2, dtype=float)
    negative = xi2 < 0
    return replace(est, xi=np.sqrt(np.where(negative, 0.0, xi2)),
                   n_clamped=int(negative.sum()))


def overlap_x_theory(params, lam, mu_bar_density, *, kappa):
    """Rescaled mean squared overlap ``N E[(u_i . x_j)^2]``.

    Parameters
    ----------
    params : XParams
        Parameters at the point of ``u_i``.
    lam : float or ndarray
        Eigenvalue(s) of ``X``.
    mu_bar_density : float
        Symmetrized density of ``S`` at the same point.
    kappa : float
    """
    lam = np.asarray(lam, dtype=float)
    z = np.asarray(params.z)[..., None] if np.ndim(params.z) else params.z
    zeta1 = np.asarray(params.zeta1)[..., None] if np.ndim(params.z) else params.zeta1
    zeta3 = np.asarray(params.zeta3)[..., None] if np.ndim(params.z) else params.zeta3
    dens = np.asarray(mu_bar_density)[..., None] if np.ndim(params.z) else mu_bar_density
    out = np.imag(1.0 / (z - zeta1 - kappa * zeta3 * lam * lam))
    return params.weight * out / (np.pi * dens)
