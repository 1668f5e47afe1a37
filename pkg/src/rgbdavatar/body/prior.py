"""Gaussian-mixture pose prior over joint rotation vectors."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from ..errors import DimensionMismatch, InvalidSpec


@dataclass
class GmmPrior:
    """Mixture components over a D-dimensional pose vector.

    weights : (K,) positive mixture weights summing to 1.
    means : (K, D) component means.
    chols : (K, D, D) lower Cholesky factors of the covariances.
    """

    weights: np.ndarray
    means: np.ndarray
    chols: np.ndarray

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.means = np.ascontiguousarray(self.means, dtype=np.float64)
        self.chols = np.ascontiguousarray(self.chols, dtype=np.float64)
        k, d = self.means.shape
        if self.weights.shape != (k,) or self.chols.shape != (k, d, d):
            raise DimensionMismatch("inconsistent mixture shapes")
        if (self.weights <= 0).any():
            raise InvalidSpec("mixture weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-8:
            raise InvalidSpec("mixture weights must sum to 1")
        for ll in self.chols:
            if (np.diag(ll) <= 0).any():
                raise InvalidSpec("Cholesky factors need positive diagonals")

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def num_components(self):
        return len(self.weights)

    def _component_stats(self, x):
        """Per-component log densities and precision-weighted residuals."""
        k, d = self.means.shape
        log_n = np.empty(k)
        prec_res = np.empty((k, d))
        const = -0.5 * d * np.log(2.0 * np.pi)
        for i in range(k):
            ll = self.chols[i]
            res = x - self.means[i]
            y = solve_triangular(ll, res, lower=True)
            prec_res[i] = solve_triangular(ll.T, y, lower=False)
            log_n[i] = const - np.log(np.diag(ll)).sum() - 0.5 * float(y @ y)
        return log_n, prec_res

    def neg_log(self, x):
        """Negative log likelihood, its gradient, and a PSD Hessian estimate.

        Returns (energy, grad (D,), hess (D, D)); the Hessian is the
        responsibility-weighted sum of component precisions (always PSD).
        """
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if len(x) != self.dim:
            raise DimensionMismatch(
                f"prior expects dim {self.dim}, got {len(x)}")
        log_n, prec_res = self._component_stats(x)
        logits = np.log(self.weights) + log_n
        m = logits.max()
        lse = m + np.log(np.exp(logits - m).sum())
        resp = np.exp(logits - lse)
        grad = resp @ prec_res
        hess = np.zeros((self.dim, self.dim))
        for i in range(self.num_components):
            ll = self.chols[i]
            inv_l = solve_triangular(ll, np.eye(self.dim), lower=True)
            hess += resp[i] * (inv_l.T @ inv_l)
        return float(-lse), grad, hess


def default_prior(num_joints, std_rad=np.sqrt(0.5)):
    """Single isotropic Gaussian centred on the rest pose.

    Covers the 3*(J-1) non-root joint angles; used when no learned mixture
    file is supplied.
    """
    d = 3 * (num_joints - 1)
    return GmmPrior(
        weights=np.array([1.0]),
        means=np.zeros((1, d)),
        chols=std_rad * np.eye(d)[None, :, :],
    )
