"""Feature mappings applied to the fitted responses before alignment."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist


class MappingKind(str, enum.Enum):
    LINEAR = "linear"
    GAUSSIAN = "gaussian"
    SVD = "svd"


@dataclass(frozen=True)
class MappingSpec:
    kind: MappingKind
    output_dim: int
    gamma: Optional[float] = None
    anchors: Optional[np.ndarray] = None
    basis: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", MappingKind(self.kind))
        if self.kind is MappingKind.GAUSSIAN:
            if self.anchors is None or self.gamma is None:
                raise ValueError("gaussian mapping needs anchors and gamma")
            if self.anchors.shape[0] != self.output_dim:
                raise ValueError("gaussian output_dim must equal the number of anchors")
        elif self.kind is MappingKind.SVD:
            if self.basis is None or self.basis.shape[1] != self.output_dim:
                raise ValueError("svd output_dim must equal the number of basis columns")

    def __call__(self, M) -> np.ndarray:
        return apply_mapping(self, M)


def phi_linear(M) -> np.ndarray:
    return np.asarray(M, dtype=float)


def phi_gaussian(M, anchors, gamma: float) -> np.ndarray:
    """Entry (i, j) is ``exp(-gamma * ||M_i - anchors_j||^2)``."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    if anchors.shape[0] < 1:
        raise ValueError("need at least one anchor row")
    d2 = cdist(np.atleast_2d(np.asarray(M, dtype=float)), anchors, "sqeuclidean")
    return np.exp(-gamma * d2)


def svd_select(stack, V: int) -> np.ndarray:
    """Top-``V`` right singular vectors of ``stack`` as a V_org x V basis.

    Each vector is sign-flipped so its largest-magnitude entry is positive.
    """
    stack = np.asarray(stack, dtype=float)
    rows, cols = stack.shape
    if not 1 <= V <= min(rows, cols):
        raise ValueError(f"V={V} must lie in [1, {min(rows, cols)}]")
    _, s, vt = np.linalg.svd(stack, full_matrices=False)
    tol = s.max() * max(rows, cols) * np.finfo(float).eps if s.size else 0.0
    rank = int(np.sum(s > tol))
    if V > rank:
        raise ValueError(f"V={V} exceeds the attainable rank {rank} of the training data")
    basis = vt[:V].T.copy()
    idx = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[idx, np.arange(V)])
    return basis * signs


def apply_mapping(spec: MappingSpec, M) -> np.ndarray:
    if spec.kind is MappingKind.LINEAR:
        return phi_linear(M)
    if spec.kind is MappingKind.GAUSSIAN:
        return phi_gaussian(M, spec.anchors, spec.gamma)
    return np.asarray(M, dtype=float) @ spec.basis


def linear_spec(v_org: int) -> MappingSpec:
    return MappingSpec(MappingKind.LINEAR, output_dim=v_org)


def gaussian_spec(anchors, gamma: Optional[float] = None) -> MappingSpec:
    """Gaussian mapping; gamma defaults to 1 / number of input features."""
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    if gamma is None:
        gamma = 1.0 / anchors.shape[1]
    return MappingSpec(MappingKind.GAUSSIAN, output_dim=anchors.shape[0], gamma=float(gamma), anchors=anchors)


def svd_spec(stack, V: int) -> MappingSpec:
    basis = svd_select(stack, V)
    return MappingSpec(MappingKind.SVD, output_dim=V, basis=basis)
