"""
Rotation-invariant estimation of the rectangular factor ``Y``.

The estimator keeps both singular bases of ``S`` and replaces the singular
values by ``xi_i = w Im q4 / (sqrt(kappa) pi mu(gamma_i))``, with ``w = 1``
for ``alpha <= 1`` and ``w = alpha`` otherwise. ``q4`` comes from a small
complex system in ``(beta1, beta4)``::

    q3 = ((z - beta1)^2 q1 - (z - beta1)) / beta4^2
    q4 = ((z - beta1) q1 - 1) / beta4
    s  = sqrt(q1 q3)
    beta1 = beta1_0 + (s / 2 q1) (R(q4 + s) - R(q4 - s))
    beta4 = (R(q4 + s) + R(q4 - s)) / 2

where ``R`` is the R-transform of the eigenvalue law of ``X`` and
``beta1_0`` the value at ``X = I``. Writing ``sqrt(q3/q1)`` as ``s/q1``
makes every update independent of the square-root branch.

The law of ``Y`` itself is never needed.
"""

from dataclasses import dataclass, replace

import numpy as np

from .spectrum import substitute_edges
from .transforms import (
    GaussianIIDSingular,
    ShiftedWignerEig,
    SolverError,
    complex_newton,
    rect_c_transform,
)

__all__ = [
    "YParams",
    "YEstimate",
    "solve_y_params",
    "q4_cubic",
    "cubic_roots",
    "estimate_y",
    "denoise_xy",
    "overlap_y_theory",
    "threshold_sparse",
]

BETA_TOL = 1e-10
NEWTON_PAIR_MAX_ITER = 60
CUBIC_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class YParams:
    """Parameters of the ``Y`` system at one or more spectral points."""

    z: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    beta3: np.ndarray
    beta4: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    q3: np.ndarray
    q4: np.ndarray
    alpha: float
    residual: float = 0.0
    method: str = "fixed_point"
    n_fallback: int = 0

    @property
    def Z1(self):
        return (self.z - self.beta1) * (self.z - self.beta2)

    @property
    def Z2(self):
        return self.beta4 ** 2 + self.beta3 * (self.z - self.beta1)

    @property
    def weight(self):
        return 1.0 if self.alpha <= 1.0 else self.alpha

    def __getitem__(self, idx):
        fields = ("z", "beta1", "beta2", "beta3", "beta4", "q1", "q2", "q3", "q4")
        return replace(self, **{f: np.asarray(getattr(self, f))[idx] for f in fields})


@dataclass(frozen=True, eq=False)
class YEstimate:
    """Estimated singular values of ``Y`` (or of ``X Y``).

    Attributes
    ----------
    xi : ndarray
        Length ``min(N, M)``, ordered like the singular values of ``S``.
    edge_flags : ndarray of bool
    params : YParams or None
    """

    xi: np.ndarray
    edge_flags: np.ndarray = None
    params: YParams = None

    @property
    def residual(self):
        return 0.0 if self.params is None else self.params.residual

    def matrix(self, u, v):
        """Assemble ``U [diag(xi) | 0] V^T`` from full or thin bases."""
        k = self.xi.size
        return (u[:, :k] * self.xi) @ v[:, :k].T


def _side_stieltjes(g, z, alpha):
    if alpha <= 1.0:
        return g, alpha * g + (1.0 - alpha) / z
    return g / alpha + (1.0 - 1.0 / alpha) / z, g


def _identity_beta1(mu_w, q1, q2, alpha):
    ratio = min(alpha, 1.0 / alpha)
    cw = rect_c_transform(mu_w, ratio, q1 * q2)
    return min(1.0, 1.0 / alpha) * cw / q1, min(alpha, 1.0) * cw / q2


def _q_from_beta(z, q1, beta1, beta4):
    zb = z - beta1
    q3 = (zb * zb * q1 - zb) / (beta4 * beta4)
    q4 = (zb * q1 - 1.0) / beta4
    return q3, q4


def cubic_roots(a, c):
    """All three roots of ``2x^3 + 3c x^2 + (c^2 + 2 + a) x + c (a + 1) = 0``.

    Root ``k`` uses the ``k``-th cube root of ``B``; ``k = 0`` is the
    principal branch.

    Returns
    -------
    roots : ndarray, shape ``(3,) + a.shape``
    residuals : ndarray, same shape
    """
    a = np.asarray(a, dtype=complex)
    p = 12.0 - 3.0 * c * c + 6.0 * a
    b = -216.0 * c * a + 4.0 * np.sqrt(4.0 * p ** 3 + (54.0 * c * a) ** 2)
    cb = b ** (1.0 / 3.0)
    roots = []
    for k in range(3):
        ck = cb * np.exp(2j * np.pi * k / 3.0)
        roots.append(-c / 2.0 - p / (3.0 * ck) + ck / 12.0)
    roots = np.array(roots)
    res = np.abs(2 * roots ** 3 + 3 * c * roots ** 2 + (c * c + 2.0 + a) * roots
                 + c * (a + 1.0))
    return roots, res


def _select_root(a, c):
    """Principal-branch root when admissible, else the best admissible root.

    A root is admissible when ``Im q4 >= 0`` and its residual is below
    ``CUBIC_TOL``. All three roots usually solve the cubic to rounding
    error and two of them can lie in the upper half plane, so the residual
    alone does not identify the physical root. The principal branch is
    the one that matches the general fixed point.

    Returns
    -------
    q4 : ndarray
    residual : float
    n_fallback : int
        Number of points where the principal branch was rejected.
    """
    roots, res = cubic_roots(a, c)
    admissible = (roots.imag >= -1e-12 * (1.0 + np.abs(roots))) & (res <= CUBIC_TOL)
    score = np.where(admissible, res, np.inf)
    pick = np.where(admissible[0], 0, np.argmin(score, axis=0))
    q4 = np.take_along_axis(roots, pick[None], axis=0)[0]
    best = np.take_along_axis(score, pick[None], axis=0)[0]
    if not np.all(np.isfinite(best)):
        worst = np.min(res, axis=0)
        raise SolverError("no admissible cubic root", np.max(worst, initial=0.0))
    return q4, float(np.max(best, initial=0.0)), int(np.count_nonzero(pick))


def q4_cubic(gs, z, c, alpha):
    """``q4`` for a shifted-Wigner ``X`` and Gaussian ``W`` from the cubic.

    Parameters
    ----------
    gs : complex or ndarray
        Symmetrized Stieltjes value of ``S`` at ``z``.
    z : complex or ndarray
    c : float
        Shift of the Wigner law, nonzero.
    alpha : float

    Returns
    -------
    complex or ndarray

    Raises
    ------
    SolverError
        If no branch with ``Im q4 >= 0`` solves the cubic to ``1e-8``.
    """
    if c == 0:
        raise ValueError("shift c must be nonzero; use the symmetric short cut")
    gs = np.asarray(gs, dtype=complex)
    z = np.asarray(z, dtype=complex)
    q1, q2 = _side_stieltjes(gs, z, alpha)
    beta1_0, _ = _identity_beta1(GaussianIIDSingular(alpha), q1, q2, alpha)
    q4, _, _ = _select_root(-(z - beta1_0) * q1, c)
    return q4[()]


def _params_from_q4(z, q1, q2, q4, c, beta2, alpha, residual):
    # for R(w) = w + c: beta4 = q4 + c, beta3 = q1
    beta4 = q4 + c
    beta1 = z - (q4 * beta4 + 1.0) / q1
    q3, _ = _q_from_beta(z, q1, beta1, beta4)
    return YParams(z, beta1, beta2, q1, beta4, q1, q2, q3, q4, alpha, residual,
                   method="cubic")


def _pair_size(r):
    out = np.max(np.abs(r), axis=0)
    return np.where(np.isfinite(out), out, np.inf)


def _newton_pair(resid, b, tol=BETA_TOL, max_iter=NEWTON_PAIR_MAX_ITER):
    """Newton iteration on ``resid(b) = 0`` for ``b`` of shape ``(2, ...)``.

    ``resid`` is analytic in both unknowns, so the 2x2 complex Jacobian is
    taken from central differences along the real axis. Steps that raise
    the residual of a point are halved.

    Returns
    -------
    b : ndarray
    err : ndarray
        Final residual per point; points above ``tol`` did not converge.
    """
    b = np.array(b, dtype=complex)
    f = resid(b)
    for _ in range(max_iter):
        err = _pair_size(f)
        if np.all(err <= tol):
            break
        jac = np.empty((2, 2) + b.shape[1:], dtype=complex)
        for k in range(2):
            h = 1e-7 * (1.0 + np.abs(b[k]))
            up, dn = b.copy(), b.copy()
            up[k] += h
            dn[k] -= h
            jac[:, k] = (resid(up) - resid(dn)) / (2.0 * h)
        det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.array([jac[1, 1] * f[0] - jac[0, 1] * f[1],
                             jac[0, 0] * f[1] - jac[1, 0] * f[0]]) / det
        step = np.where(np.isfinite(step) & (err > tol), step, 0.0)
        trial = b - step
        ftrial = resid(trial)
        for _ in range(40):
            worse = ~(_pair_size(ftrial) <= err)
            if not worse.any():
                break
            step = np.where(worse, 0.5 * step, step)
            trial = b - step
            ftrial = resid(trial)
        b, f = trial, ftrial
    return b, _pair_size(f)


class _TrackedR:
    """``R(w) = G^{-1}(w) - 1/w`` with ``G^{-1}`` continued from a previous root.

    Closed forms of ``R`` fix one branch of a multivalued inverse; marching
    the preimage instead follows the analytic continuation.
    """

    def __init__(self, law, guesses):
        self.law = law
        self.guesses = np.asarray(guesses, dtype=complex)

    def __call__(self, w):
        roots = np.empty(2, dtype=complex)
        for k in range(2):
            try:
                roots[k] = complex_newton(lambda x, k=k: self.law.stieltjes(x) - w[k],
                                          self.guesses[k], max_iter=50)
            except SolverError:
                return np.full(2, np.nan + 0j), roots
        return roots - 1.0 / w, roots


def _march(order, anchor, z, q1, beta1_0, law, b0, r0):
    """Solve the points in ``order`` one at a time, each from its predecessor.

    Returned R values follow the order of :func:`_arguments`.
    """
    b_prev = b0
    w_prev = _arguments(z[anchor], q1[anchor], *b0)
    roots_prev = r0 + 1.0 / w_prev
    out = []
    for i in order:
        tracked = _TrackedR(law, roots_prev)

        def args(v):
            # the principal root in s can flip sign between modes; the system
            # is symmetric in the pair, so keep the order of the previous mode
            w = _arguments(z[i], q1[i], v[0], v[1])
            swap = (np.abs(w[0] - w_prev[1]) + np.abs(w[1] - w_prev[0])
                    < np.abs(w[0] - w_prev[0]) + np.abs(w[1] - w_prev[1]))
            return (w[::-1], True) if swap else (w, False)

        def resid(v):
            w, _ = args(v)
            if not np.all(np.isfinite(w)):
                return np.full(2, np.nan + 0j)
            r, _ = tracked(w)
            return _beta_from_r(q1[i], beta1_0[i], w, r) - v

        b, err = _newton_pair(resid, b_prev)
        if not err <= BETA_TOL:
            raise SolverError(f"Y system continuation from mode {anchor} failed at mode {i}",
                              float(err))
        w_prev, swapped = args(b)
        r, roots_prev = tracked(w_prev)
        out.append((i, b, r[::-1] if swapped else r))
        b_prev = b
    return out


def _arguments(z, q1, beta1, beta4):
    q3, q4 = _q_from_beta(z, q1, beta1, beta4)
    s = np.sqrt(q1 * q3)
    return np.array([q4 + s, q4 - s])


def _beta_from_r(q1, beta1_0, w, r):
    s = 0.5 * (w[0] - w[1])
    return np.array([beta1_0 + 0.5 * (s / q1) * (r[0] - r[1]), 0.5 * (r[0] + r[1])])


def solve_y_params(ev, rho_x, mu_w, z=None, alpha=None, g=None, method="auto"):
    """Solve the ``Y`` system at the per-mode points (or at ``z``).

    Parameters
    ----------
    ev : SpectralEvaluator
    rho_x : MeasureModel
        Eigenvalue law of ``X``. Outside the symmetric and cubic cases it
        must have a closed-form R-transform.
    mu_w : MeasureModel
        Singular-value law of the noise.
    z, g : ndarray, optional
        Evaluation points and Stieltjes values; default to the modes of ``ev``.
    alpha : float, optional
    method : {"auto", "fixed_point", "cubic"}
        ``auto`` uses the cubic for a shifted-Wigner ``X`` with Gaussian
        noise and a Newton solve of the fixed-point system otherwise.

    Returns
    -------
    YParams

    Raises
    ------
    SolverError
        If a mode cannot be solved.
    ValueError
        If ``rho_x`` has no closed-form R-transform.

    Notes
    -----
    Newton starts every mode from the identity value of ``beta1`` and the
    mean of ``X`` for ``beta4``. A closed-form R-transform with a square
    root is single-valued only on one sheet, and some modes need the other
    one; those are solved by continuation from the nearest converged mode,
    inverting the Stieltjes transform of ``rho_x`` from the previous root.
    """
    alpha = ev.spectrum.alpha if alpha is None else float(alpha)
    if z is None:
        z, g = ev.mode_points, ev.mode_stieltjes
    z = np.asarray(z, dtype=complex)
    g = ev.symmetrized_stieltjes(z) if g is None else np.asarray(g, dtype=complex)
    q1, q2 = _side_stieltjes(g, z, alpha)
    beta1_0, beta2 = _identity_beta1(mu_w, q1, q2, alpha)

    if getattr(rho_x, "symmetric", False):
        zero = np.zeros_like(z)
        q3, _ = _q_from_beta(z, q1, beta1_0, np.ones_like(z))
        return YParams(z, beta1_0, beta2, zero, zero, q1, q2, q3, zero, alpha,
                       method="symmetric")

    gaussian_w = (isinstance(mu_w, GaussianIIDSingular) and mu_w.variance == 1.0
                  and np.isclose(mu_w.alpha, alpha))
    use_cubic = isinstance(rho_x, ShiftedWignerEig) and gaussian_w
    if method == "cubic" and not use_cubic:
        raise ValueError("cubic path needs a shifted-Wigner X and Gaussian noise")
    if method == "cubic" or (method == "auto" and use_cubic):
        # the coefficient is even under z -> -conj(z) and admissibility holds
        # for Re z > 0, so left half-plane points use the mirrored root
        left = z.real < 0
        a = -(z - beta1_0) * q1
        q4, res, n_fallback = _select_root(np.where(left, np.conj(a), a), rho_x.c)
        q4 = np.where(left, np.conj(q4), q4)
        params = _params_from_q4(z, q1, q2, q4, rho_x.c, beta2, alpha, res)
        return replace(params, n_fallback=n_fallback)

    if rho_x.r_closed(np.array([0.1 + 0j])) is None:
        raise ValueError(f"the Y system needs a closed-form R-transform; {rho_x!r} has none")

    def r_pair(w):
        return np.array([rho_x.r_closed(w[0]), rho_x.r_closed(w[1])])

    def resid(v):
        w = _arguments(z, q1, v[0], v[1])
        return _beta_from_r(q1, beta1_0, w, r_pair(w)) - v

    # R_X near the origin is the mean of X, a start inside the physical basin
    mean = rho_x.r_closed(np.array([1e-8 + 0j]))[0]
    b, err = _newton_pair(resid, [beta1_0, np.full_like(z, mean)])
    with np.errstate(invalid="ignore", divide="ignore"):
        r = r_pair(_arguments(z, q1, b[0], b[1]))
    failed = ~(err <= BETA_TOL)
    if failed.all():
        raise SolverError("Y system solve did not converge at any mode", float(np.max(err)))
    # modes off the principal branch of R are reached by continuation from
    # the nearest converged mode
    for block in np.split(np.flatnonzero(failed),
                          np.flatnonzero(np.diff(np.flatnonzero(failed)) > 1) + 1):
        if block.size == 0:
            continue
        lo, hi = block[0], block[-1]
        if lo > 0:
            anchor, order = lo - 1, block
        else:
            anchor, order = hi + 1, block[::-1]
        for i, bi, ri in _march(order, anchor, z, q1, beta1_0, rho_x, b[:, anchor],
                                r[:, anchor]):
            b[:, i], r[:, i], err[i] = bi, ri, 0.0
    beta1, beta4 = b
    q3, q4 = _q_from_beta(z, q1, beta1, beta4)
    s = np.sqrt(q1 * q3)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta3 = np.where(s != 0, 0.5 * (q1 / s) * (r[0] - r[1]), 0.0)
    residual = float(np.max(err)) if err.size else 0.0
    return YParams(z, beta1, beta2, beta3, beta4, q1, q2, q3, q4, alpha, residual)


def _from_q4(ev, params, kappa):
    mass = np.pi * ev.mode_density / params.weight
    xi = np.imag(params.q4) / (np.sqrt(kappa) * mass)
    edges = ev.edge_flags
    if edges.all():
        raise ValueError("all modes are edge modes; no estimate available")
    if edges.any():
        xi = substitute_edges(xi, edges)
    return YEstimate(xi=xi, edge_flags=edges, params=params)


def estimate_y(ev, rho_x, mu_w, kappa, alpha=None, method="auto"):
    """Rotation-invariant estimate of the singular values of ``Y``.

    Parameters
    ----------
    ev : SpectralEvaluator
    rho_x : MeasureModel
    mu_w : MeasureModel
    kappa : float
        Signal-to-noise ratio. Must be positive unless ``rho_x`` is
        symmetric, in which case the estimate is zero for any ``kappa``.
    alpha : float, optional
    method : str
        Passed to :func:`solve_y_params`.

    Returns
    -------
    YEstimate
    """
    symmetric = getattr(rho_x, "symmetric", False)
    if not (kappa > 0 or (symmetric and kappa == 0)):
        raise ValueError("kappa must be positive")
    params = solve_y_params(ev, rho_x, mu_w, alpha=alpha, method=method)
    if params.method == "symmetric":
        k = ev.spectrum.k
        return YEstimate(xi=np.zeros(k), edge_flags=ev.edge_flags, params=params)
    return _from_q4(ev, params, kappa)


def denoise_xy(ev, mu_w, kappa, alpha=None):
    """Estimate the product ``X Y`` as a single rectangular signal.

    This is the ``Y`` estimator with ``X`` replaced by the identity, for
    which the system is solved in closed form: ``beta4 = 1``,
    ``beta3 = 0`` and ``beta1`` equals its identity value.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    alpha = ev.spectrum.alpha if alpha is None else float(alpha)
    z, g = ev.mode_points, ev.mode_stieltjes
    q1, q2 = _side_stieltjes(g, z, alpha)
    beta1, beta2 = _identity_beta1(mu_w, q1, q2, alpha)
    ones = np.ones_like(z)
    q3, q4 = _q_from_beta(z, q1, beta1, ones)
    params = YParams(z, beta1, beta2, np.zeros_like(z), ones, q1, q2, q3, q4, alpha,
                     method="identity")
    return _from_q4(ev, params, kappa)


def overlap_y_theory(params, sigma, mu_bar_density, *, kappa):
    """Rescaled mean overlap ``N E[(u_i . y_l)(v_i . y_r)]``.

    Parameters
    ----------
    params : YParams
        Parameters at the point of ``(u_i, v_i)``.
    sigma : float or ndarray
        Singular value(s) of ``Y``.
    mu_bar_density : float
        Symmetrized density of ``S`` at the same point.
    kappa : float
    """
    sigma = np.sqrt(kappa) * np.asarray(sigma, dtype=float)
    expand = np.ndim(params.z) > 0

    def col(v):
        return np.asarray(v)[..., None] if expand else v

    out = np.imag(col(params.beta4) * sigma / (col(params.Z1) - col(params.Z2) * sigma ** 2))
    return params.weight * out / (np.pi * col(mu_bar_density))


def threshold_sparse(est_matrix, h, n):
    """Map entries to ``{-1, 0, 1} / sqrt(n)`` with cutoff ``h / sqrt(n)``.

    Parameters
    ----------
    est_matrix : ndarray
    h : float
        Relative threshold in ``[0, 1]``.
    n : int
        Row count used for the entry scale.
    """
    if not 0.0 <= h <= 1.0:
        raise ValueError("h must lie in [0, 1]")
    est_matrix = np.asarray(est_matrix, dtype=float)
    scale = 1.0 / np.sqrt(n)
    return np.where(np.abs(est_matrix) > h * scale, np.sign(est_matrix) * scale, 0.0)
