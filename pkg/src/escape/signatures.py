"""Gaussian clip signatures and KL divergence between them.

A signature is a single full-covariance Gaussian fit to a clip's MFCC
frames; symmetric KL between signatures drives label propagation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .dsp import MfccMatrix
from .errors import NotPositiveDefiniteError, SignatureError

DEFAULT_EPSILON = 1e-6


@dataclass
class GaussianSignature:
    clip_id: str
    mean: np.ndarray
    covariance: np.ndarray


def fit_gaussian(mfcc: MfccMatrix, epsilon: float = DEFAULT_EPSILON) -> GaussianSignature:
    """Fit mean and biased (1/L) covariance to a clip's frames.

    epsilon * I is added to the covariance so downstream factorizations
    cannot fail on degenerate (short or quiet) clips.
    """
    frames = np.asarray(mfcc.frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 2:
        raise SignatureError(f"clip {mfcc.clip_id!r}: need at least 2 frames to fit a covariance")
    if epsilon <= 0:
        raise SignatureError("epsilon must be positive")
    mean = frames.mean(axis=0)
    centered = frames - mean
    covariance = centered.T @ centered / frames.shape[0]
    covariance = (covariance + covariance.T) / 2.0
    covariance += epsilon * np.eye(frames.shape[1])
    return GaussianSignature(clip_id=mfcc.clip_id, mean=mean, covariance=covariance)


def _cholesky(signature: GaussianSignature) -> np.ndarray:
    try:
        return np.linalg.cholesky(signature.covariance)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"clip {signature.clip_id!r}: covariance is not positive definite") from exc


def kl_divergence(g0: GaussianSignature, g1: GaussianSignature) -> float:
    """KL(N0 || N1) for Gaussians, via Cholesky factors of both covariances.

    0.5 * ( tr(S1^-1 S0) + (m1-m0)' S1^-1 (m1-m0) - k + ln det S1/det S0 )
    without forming any explicit inverse or raw determinant.
    """
    if g0.mean.shape != g1.mean.shape:
        raise SignatureError(f"dimension mismatch: {g0.mean.shape} vs {g1.mean.shape}")
    chol0 = _cholesky(g0)
    chol1 = _cholesky(g1)
    k = g0.mean.shape[0]
    # tr(S1^-1 S0) = ||L1^-1 L0||_F^2 with S = L L'
    a = solve_triangular(chol1, chol0, lower=True)
    trace_term = float((a * a).sum())
    z = solve_triangular(chol1, g1.mean - g0.mean, lower=True)
    quad_term = float(z @ z)
    log_det = 2.0 * float(np.log(np.diag(chol1)).sum() - np.log(np.diag(chol0)).sum())
    return 0.5 * (trace_term + quad_term - k + log_det)


def sym_kl(g0: GaussianSignature, g1: GaussianSignature) -> float:
    """Symmetrized divergence: KL(g0 || g1) + KL(g1 || g0)."""
    return kl_divergence(g0, g1) + kl_divergence(g1, g0)
