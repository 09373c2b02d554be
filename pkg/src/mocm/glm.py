"""Design matrices from stimulus onsets and least-squares regressors."""

import logging

import numpy as np
from scipy.special import gammaln

logger = logging.getLogger(__name__)

# double-gamma shape: response peak, undershoot, unit scales, undershoot ratio
HRF_PEAK_SHAPE = 6.0
HRF_UNDER_SHAPE = 16.0
HRF_SCALE = 1.0
HRF_UNDER_RATIO = 1.0 / 6.0


def _gamma_pdf(t, shape, scale):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    out[pos] = np.exp((shape - 1) * np.log(tp) - tp / scale - shape * np.log(scale) - gammaln(shape))
    return out


def hrf_curve(t):
    """Unnormalised canonical double-gamma response at times ``t`` (seconds)."""
    return _gamma_pdf(t, HRF_PEAK_SHAPE, HRF_SCALE) - HRF_UNDER_RATIO * _gamma_pdf(
        t, HRF_UNDER_SHAPE, HRF_SCALE
    )


def hrf_kernel(tr: float, duration: float = 32.0) -> np.ndarray:
    """Double-gamma HRF sampled every ``tr`` seconds on [0, duration], peak 1."""
    if not tr > 0:
        raise ValueError(f"TR must be positive, got {tr}")
    n = int(np.floor(duration / tr + 1e-9)) + 1
    h = hrf_curve(np.arange(n) * tr)
    return h / np.max(h)


def design_matrix(tau, tr: float, duration: float = 32.0) -> np.ndarray:
    """Convolve every onset column with the HRF kernel, truncated to T rows."""
    tau = np.atleast_2d(np.asarray(tau, dtype=float))
    T = tau.shape[0]
    h = hrf_kernel(tr, duration)
    return np.column_stack([np.convolve(tau[:, c], h)[:T] for c in range(tau.shape[1])])


def least_squares_beta(F, D) -> np.ndarray:
    """Regressors minimising ``||F - D beta||_F^2`` (minimum-norm if D is rank deficient)."""
    F = np.asarray(F, dtype=float)
    D = np.asarray(D, dtype=float)
    beta, _, rank, _ = np.linalg.lstsq(D, F, rcond=None)
    if rank < D.shape[1]:
        logger.warning("design matrix has rank %d < %d columns; using minimum-norm solution", rank, D.shape[1])
    return beta
