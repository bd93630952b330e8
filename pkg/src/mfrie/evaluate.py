"""
Oracle estimators, error metrics, overlaps and matrix identities.

The oracle estimators use the ground truth and are the best possible
estimators sharing the singular vectors of ``S``; they bound every
rotation-invariant estimator from below on each instance.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .rie_x import XEstimate
from .rie_y import YEstimate
from .spectrum import SingularSpectrum

__all__ = [
    "ObservationSVD",
    "MseReport",
    "oracle_x",
    "oracle_y",
    "oracle_xy",
    "normalized_mse",
    "empirical_overlap_x",
    "empirical_overlap_y",
    "hermitize_resolvent",
    "rank_two_eigs",
    "sylvester_gap",
]


@dataclass(frozen=True, eq=False)
class ObservationSVD:
    """Full SVD ``S = U Gamma V^T`` with deterministic signs.

    Build with :meth:`from_matrix`.
    """

    u: np.ndarray
    v: np.ndarray
    gammas: SingularSpectrum

    @classmethod
    def from_matrix(cls, s):
        """Compute the SVD of ``s``.

        Each ``u_i`` is flipped so that its first entry above ``1e-12`` in
        magnitude is positive; ``v_i`` is flipped with it so ``S`` is
        unchanged. Columns of ``U`` or ``V`` beyond ``min(N, M)`` are fixed
        the same way.
        """
        s = np.asarray(s, dtype=float)
        u, g, vt = np.linalg.svd(s, full_matrices=True)
        v = vt.T
        k = g.size
        su = _first_sign(u)
        u = u * su
        v[:, :k] = v[:, :k] * su[:k]
        if v.shape[1] > k:
            v[:, k:] = v[:, k:] * _first_sign(v[:, k:])
        return cls(u, v, SingularSpectrum(g, *s.shape))

    @property
    def k(self):
        return self.gammas.k

    def reconstruct(self):
        g = self.gammas.gammas
        return (self.u[:, :self.k] * g) @ self.v[:, :self.k].T


def _first_sign(cols):
    lead = np.argmax(np.abs(cols) > 1e-12, axis=0)
    return np.where(cols[lead, np.arange(cols.shape[1])] < 0, -1.0, 1.0)


@dataclass(frozen=True)
class MseReport:
    """Squared Frobenius error, raw and normalized by the signal."""

    raw_mse: float
    normalized_mse: float
    kappa: float = float("nan")
    seed: int = -1
    estimator_name: str = ""


def normalized_mse(estimate_matrix, truth_matrix, kappa=float("nan"), seed=-1,
                   estimator_name=""):
    """``||estimate - truth||_F^2 / ||truth||_F^2``.

    Raises
    ------
    ValueError
        On shape mismatch or an all-zero truth.
    """
    est = np.asarray(estimate_matrix, dtype=float)
    truth = np.asarray(truth_matrix, dtype=float)
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch {est.shape} vs {truth.shape}")
    norm = float(np.sum(truth * truth))
    if norm == 0.0:
        raise ValueError("truth has zero norm")
    raw = float(np.sum((est - truth) ** 2))
    return MseReport(raw, raw / norm, float(kappa), int(seed), estimator_name)


def oracle_x(svd, x_true):
    """Oracle eigenvalues ``u_i^T X u_i``."""
    x_true = np.asarray(x_true, dtype=float)
    if x_true.shape != (svd.u.shape[0],) * 2:
        raise ValueError("x_true does not match the observation")
    xi = np.einsum("ij,ij->j", svd.u, x_true @ svd.u)
    return XEstimate(xi=xi, edge_flags=np.zeros(xi.size, dtype=bool))


def _oracle_rect(svd, signal):
    signal = np.asarray(signal, dtype=float)
    if signal.shape != (svd.u.shape[0], svd.v.shape[0]):
        raise ValueError("signal does not match the observation")
    k = svd.k
    xi = np.einsum("ij,ij->j", svd.u[:, :k], signal @ svd.v[:, :k])
    return YEstimate(xi=xi, edge_flags=np.zeros(k, dtype=bool))


def oracle_y(svd, y_true):
    """Oracle singular values ``u_i^T Y v_i``."""
    return _oracle_rect(svd, y_true)


def oracle_xy(svd, x_true, y_true):
    """Oracle singular values ``u_i^T X Y v_i`` for the product."""
    return _oracle_rect(svd, np.asarray(x_true) @ np.asarray(y_true))


def empirical_overlap_x(svd, x_eigvecs, i, j):
    """``N (u_i . x_j)^2``; ``i`` and ``j`` may be index arrays."""
    n = svd.u.shape[0]
    return n * (svd.u[:, i].T @ x_eigvecs[:, j]) ** 2


def empirical_overlap_y(svd, y_left, y_right, i, j):
    """``N (u_i . y_j^l)(v_i . y_j^r)`` for singular pairs of ``Y``."""
    n = svd.u.shape[0]
    return n * (svd.u[:, i].T @ y_left[:, j]) * (svd.v[:, i].T @ y_right[:, j])


def hermitize_resolvent(s, z):
    """Blocks of ``(z I - [[0, S], [S^T, 0]])^{-1}``.

    Uses ``G = (z^2 I - S^T S)^{-1}``; the blocks are
    ``(I + S G S^T)/z``, ``S G``, ``G S^T`` and ``z G``.

    Returns
    -------
    upper_left, upper_right, lower_left, lower_right : ndarray
    """
    s = np.asarray(s, dtype=float)
    if np.imag(z) == 0:
        raise ValueError("z must be off the real axis")
    m = s.shape[1]
    g = linalg.solve(z * z * np.eye(m) - s.T @ s, np.eye(m, dtype=complex),
                     assume_a="sym")
    sg = s @ g
    upper_left = (np.eye(s.shape[0]) + sg @ s.T) / z
    return upper_left, sg, g @ s.T, z * g


def rank_two_eigs(x, y):
    """Nonzero eigenvalues ``x.y +- |x||y|`` of ``x y^T + y x^T``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("vectors must have equal length")
    dot = float(x @ y)
    spread = float(np.linalg.norm(x) * np.linalg.norm(y))
    return dot + spread, dot - spread


def sylvester_gap(a, b, z):
    """Relative gap between ``z^M det(zI_N - BA)`` and ``z^N det(zI_M - AB)``.

    ``a`` is ``M x N`` and ``b`` is ``N x M``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = a.shape
    lhs = z ** m * np.linalg.det(z * np.eye(n) - b @ a)
    rhs = z ** n * np.linalg.det(z * np.eye(m) - a @ b)
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs))
