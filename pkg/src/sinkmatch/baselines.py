"""Reference similarity measures: global-embedding cosine (VSE),
cross-attention (CAM) and the closed-form Gaussian Wasserstein distance
used by probabilistic embeddings (PEM)."""

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, InvalidInput
from .ot import similarity_matrix
from .validation import check_positive

_ATTENDED_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class CamConfig:
    temperature: float = 0.1
    sparsity_threshold: float = 0.0

    def __post_init__(self):
        check_positive(self.temperature, "CAM temperature")


@dataclass(frozen=True, eq=False)
class GaussianEmbedding:
    mean: np.ndarray
    covariance_diag: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.covariance_diag, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != mean.shape:
            raise DimensionMismatch("mean and covariance diagonal must be vectors of equal length")
        if np.any(cov < 0):
            raise InvalidInput("covariance entries must be non-negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance_diag", cov)

    @classmethod
    def from_fragments(cls, fragments):
        """Moment-match a diagonal Gaussian to the unit fragments of a set."""
        return cls(fragments.unit.mean(axis=0), fragments.unit.var(axis=0))


def vse_similarity(a, b):
    """Cosine between the two global embeddings."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"fragment dimensions differ: {a.dim} vs {b.dim}")
    return float(a.global_embedding @ b.global_embedding)


def cam_similarity(query, target, cfg=None):
    """Cross-attention similarity of ``query`` fragments attending over ``target``.

    For every query fragment ``t_j`` the target fragments with cosine at
    least ``cfg.sparsity_threshold`` are softmax-weighted (all of them if
    none qualify). The weights are scaled by ``1/L`` and divided by the
    norm of the softmax-attended target vector, so the result is the mean
    over query fragments of the cosine to their attended vector. Swapping
    the arguments gives the other attention direction; the measure is not
    symmetric.
    """
    cfg = cfg or CamConfig()
    sims = similarity_matrix(target, query)  # (K targets, L queries)
    K, L = sims.shape
    total = 0.0
    for j in range(L):
        column = sims[:, j]
        keep = column >= cfg.sparsity_threshold
        if not keep.any():
            keep = np.ones(K, dtype=bool)
        logits = column[keep] / cfg.temperature
        attn = np.exp(logits - logits.max())
        attn /= attn.sum()
        norm = max(np.linalg.norm(attn @ target.unit[keep]), _ATTENDED_NORM_FLOOR)
        total += float(np.sum(attn / L / norm * column[keep]))
    return total


def pem_wasserstein(a, b):
    """``sqrt(|mu_a - mu_b|^2 + |sigma_a - sigma_b|^2)`` for diagonal Gaussians."""
    if a.mean.shape != b.mean.shape:
        raise DimensionMismatch(f"Gaussian dimensions differ: {a.mean.size} vs {b.mean.size}")
    mean_gap = np.sum((a.mean - b.mean) ** 2)
    cov_gap = np.sum((a.covariance_diag - b.covariance_diag) ** 2)
    return float(np.sqrt(mean_gap + cov_gap))


def pem_similarity(a, b):
    """Negated PEM distance between moment-matched Gaussians of two sets."""
    return -pem_wasserstein(GaussianEmbedding.from_fragments(a), GaussianEmbedding.from_fragments(b))
