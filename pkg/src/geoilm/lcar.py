"""Leroux conditional autoregressive prior for the area random effects.

The K-vector of spatial effects is multivariate normal with mean zero and
precision (lam * R + (1 - lam) * I) / sigma2, where R has neighbour counts
on the diagonal and -1 for adjacent pairs.  lam = 0 is the independence
case; lam = 1 is the improper intrinsic limit and is excluded from joint
density evaluation (the univariate full conditional remains valid there).
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from .errors import NumericalError, ValidationError
from .population import AreaGraph

_LOG_2PI = float(np.log(2.0 * np.pi))


def neighborhood_matrix(graph: AreaGraph) -> np.ndarray:
    """K x K matrix with m_k on the diagonal and -1 for adjacent pairs.

    Symmetric with zero row sums; positive semidefinite.
    """
    K = graph.K
    R = np.zeros((K, K))
    for k in range(K):
        R[k, k] = graph.m[k]
        R[k, graph.neighbors[k]] = -1.0
    return R


def build_precision(graph: AreaGraph, lam: float) -> np.ndarray:
    """Unscaled precision lam * R + (1 - lam) * I; positive definite for lam in [0, 1)."""
    if not 0.0 <= lam < 1.0:
        raise ValidationError(
            f"lambda must lie in [0, 1) for a proper joint density, got {lam}")
    return lam * neighborhood_matrix(graph) + (1.0 - lam) * np.eye(graph.K)


def _cholesky(L: np.ndarray) -> np.ndarray:
    try:
        return linalg.cholesky(L, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"precision matrix not positive definite: {exc}") from exc


class PrecisionFactor:
    """Cached Cholesky factorization of the unscaled precision for one (graph, lam).

    K is small in practice, so a dense factorization is the baseline; the
    matrix is sparse (band-ish under a good area ordering) if larger K ever
    demands it.  Safe for concurrent reads once built.
    """

    def __init__(self, graph: AreaGraph, lam: float):
        self.lam = float(lam)
        self.K = graph.K
        self.L = build_precision(graph, lam)
        self.chol = _cholesky(self.L)
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def quad_form(self, phi: np.ndarray) -> float:
        """phi' (lam R + (1-lam) I) phi."""
        y = self.chol.T @ np.asarray(phi, dtype=float)
        return float(y @ y)

    def log_density(self, phi: np.ndarray, sigma2: float) -> float:
        if not sigma2 > 0:
            raise ValidationError(f"sigma2 must be > 0, got {sigma2}")
        phi = np.asarray(phi, dtype=float)
        if phi.size != self.K:
            raise ValidationError(f"phi has length {phi.size}, expected {self.K}")
        return 0.5 * (self.logdet - self.K * np.log(sigma2)) \
            - 0.5 * self.K * _LOG_2PI - self.quad_form(phi) / (2.0 * sigma2)

    def sample(self, sigma2: float, rng: np.random.Generator) -> np.ndarray:
        """Exact draw from MVN(0, sigma2 * L^{-1}) via the Cholesky factor.

        With L = C C', solving C' x = z for z ~ N(0, I) gives cov(x) = L^{-1}.
        """
        z = rng.standard_normal(self.K)
        x = linalg.solve_triangular(self.chol, z, lower=True, trans="T")
        return np.sqrt(sigma2) * x


def log_density(phi: np.ndarray, lam: float, sigma2: float, graph: AreaGraph) -> float:
    """Joint log-density of the spatial effects under the Leroux prior."""
    return PrecisionFactor(graph, lam).log_density(phi, sigma2)


def quad_form(phi: np.ndarray, lam: float, graph: AreaGraph) -> float:
    """phi' (lam R + (1-lam) I) phi without factorization (used by the Gibbs step)."""
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"lambda must lie in [0, 1], got {lam}")
    phi = np.asarray(phi, dtype=float)
    R = neighborhood_matrix(graph)
    return float(phi @ (lam * (R @ phi) + (1.0 - lam) * phi))


def full_conditional(k: int, phi: np.ndarray, lam: float, sigma2: float,
                     graph: AreaGraph) -> tuple[float, float]:
    """Normal (mean, variance) of effect k given all other effects.

    mean = lam * sum(neighbour effects) / (m_k lam + 1 - lam),
    var  = sigma2 / (m_k lam + 1 - lam).  Valid for lam in [0, 1]; an island
    area (m_k = 0) degenerates to mean 0, variance sigma2 / (1 - lam).
    """
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"lambda must lie in [0, 1], got {lam}")
    if not sigma2 > 0:
        raise ValidationError(f"sigma2 must be > 0, got {sigma2}")
    phi = np.asarray(phi, dtype=float)
    m_k = float(graph.m[k])
    denom = m_k * lam + 1.0 - lam
    if denom <= 0.0:
        raise ValidationError("degenerate conditional: island area with lambda = 1")
    mean = lam * float(np.sum(phi[graph.neighbors[k]])) / denom
    return mean, sigma2 / denom


def sample_prior(lam: float, sigma2: float, graph: AreaGraph,
                 rng: np.random.Generator) -> np.ndarray:
    """One exact draw of the K spatial effects from the Leroux prior."""
    return PrecisionFactor(graph, lam).sample(sigma2, rng)
