"""Training and testing objectives of the multi-objective cognitive model.

Training minimises the vector ``[theta1, theta2, theta3, theta4]`` over
per-subject regressors ``beta``, per-subject rotations ``R`` and the decision
surface ``W``:

* ``theta1`` GLM residual, ``(1/S) sum ||F - D beta||_F^2``
* ``theta2`` functional alignment of the mapped responses ``A = Phi(D beta) R``
  plus a soft orthogonality penalty ``lambda_orth * sum ||A^T A - I||_F^2``
* ``theta3`` spread of per-category cosine similarity before/after rotation
* ``theta4`` squared-hinge classification loss with an L1 penalty on ``W``

Testing keeps ``W`` and the shared space ``G`` fixed and minimises the first
three terms, with alignment measured against ``G``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataset import derive_labels, random_rotation
from .glm import design_matrix, least_squares_beta
from .mapping import MappingSpec, apply_mapping

logger = logging.getLogger(__name__)

WORST_COST = 1e300
BETA_SCALE = 0.1
WEIGHT_SCALE = 0.1


class DegenerateInputError(ValueError):
    """Cosine similarity requested for a zero-norm vector."""


class RankDeficientError(ValueError):
    pass


@dataclass
class TrainingParams:
    beta: list
    rotation: list
    weights: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        if len(self.beta) != len(self.rotation):
            raise ValueError("need one beta and one rotation per subject")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


@dataclass
class TestingParams:
    __test__ = False  # not a pytest class

    beta: list
    rotation: list

    def __post_init__(self):
        if len(self.beta) != len(self.rotation):
            raise ValueError("need one beta and one rotation per subject")


@dataclass(frozen=True)
class ParamShape:
    """Flat layout: beta blocks (subject-major, row-major), R blocks, then W."""

    S: int
    C: int
    V_org: int
    V: int
    with_weights: bool = True

    @property
    def size(self) -> int:
        return self.S * self.C * self.V_org + self.S * self.V * self.V + (self.V if self.with_weights else 0)


def encode(p) -> np.ndarray:
    parts = [np.asarray(b, dtype=float).ravel() for b in p.beta]
    parts += [np.asarray(r, dtype=float).ravel() for r in p.rotation]
    if isinstance(p, TrainingParams):
        parts.append(np.asarray(p.weights, dtype=float).ravel())
    return np.concatenate(parts) if parts else np.zeros(0)


def decode(flat, shape: ParamShape, alpha: float = 1.0):
    flat = np.asarray(flat, dtype=float)
    if flat.size != shape.size:
        raise ValueError(f"flat vector has length {flat.size}, layout needs {shape.size}")
    S, C, Vo, V = shape.S, shape.C, shape.V_org, shape.V
    nb = C * Vo
    beta = [flat[i * nb : (i + 1) * nb].reshape(C, Vo).copy() for i in range(S)]
    off = S * nb
    rot = [flat[off + i * V * V : off + (i + 1) * V * V].reshape(V, V).copy() for i in range(S)]
    off += S * V * V
    if shape.with_weights:
        return TrainingParams(beta, rot, flat[off : off + V].copy(), alpha)
    return TestingParams(beta, rot)


def _same_shapes(mats, what):
    shapes = {np.shape(m) for m in mats}
    if len(shapes) != 1:
        raise ValueError(f"{what} have inconsistent shapes {sorted(shapes)}")


def theta1(F: Sequence, D: Sequence, beta: Sequence) -> float:
    if not (len(F) == len(D) == len(beta)) or not F:
        raise ValueError("F, D and beta need one entry per subject")
    total = 0.0
    for Fi, Di, bi in zip(F, D, beta):
        Di, bi, Fi = np.asarray(Di), np.asarray(bi), np.asarray(Fi)
        if Di.shape[1] != bi.shape[0] or Di.shape[0] != Fi.shape[0] or bi.shape[1] != Fi.shape[1]:
            raise ValueError(f"dimension mismatch: F {Fi.shape}, D {Di.shape}, beta {bi.shape}")
        total += float(np.sum((Fi - Di @ bi) ** 2))
    return total / len(F)


def orthogonality_penalty(A: Sequence) -> float:
    """Sum over subjects of ``||A^T A - I||_F^2``."""
    total = 0.0
    for Ai in A:
        Ai = np.asarray(Ai)
        T, V = Ai.shape
        gram = Ai @ Ai.T if T < V else Ai.T @ Ai
        total += float(np.sum(gram * gram) - 2.0 * np.trace(gram) + V)
    return max(total, 0.0)


def theta2_pairwise(A: Sequence, lambda_orth: float = 1.0) -> float:
    if not A:
        raise ValueError("need at least one mapped matrix")
    _same_shapes(A, "mapped matrices")
    S = len(A)
    fit = 0.0
    for i in range(S):
        for j in range(i + 1, S):
            fit += float(np.sum((A[i] - A[j]) ** 2))
    pen = lambda_orth * orthogonality_penalty(A) if lambda_orth else 0.0
    return fit / S + pen


def shared_space(A: Sequence) -> np.ndarray:
    if not len(A):
        raise ValueError("cannot build a shared space from no subjects")
    _same_shapes(A, "mapped matrices")
    return np.mean(np.stack([np.asarray(a, dtype=float) for a in A]), axis=0)


def theta2_shared(A: Sequence, G, lambda_orth: float = 1.0) -> float:
    if not A:
        raise ValueError("need at least one mapped matrix")
    G = np.asarray(G)
    for Ai in A:
        if np.shape(Ai) != G.shape:
            raise ValueError(f"mapped matrix {np.shape(Ai)} does not match shared space {G.shape}")
    fit = sum(float(np.sum((G - Ai) ** 2)) for Ai in A)
    pen = lambda_orth * orthogonality_penalty(A) if lambda_orth else 0.0
    return fit / len(A) + pen


def ise(x, g) -> float:
    """Cosine similarity between a pattern before and after mapping."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    nx, ng = np.linalg.norm(x), np.linalg.norm(g)
    if nx == 0 or ng == 0:
        raise DegenerateInputError("ISE of a zero-norm vector")
    return float(np.clip(x @ g / (nx * ng), -1.0, 1.0))


def category_means(M, labels, n_categories: int) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    labels = np.asarray(labels)
    rows = []
    for c in range(1, n_categories + 1):
        mask = labels == c
        if not mask.any():
            raise ValueError(f"category {c} has no labeled time points")
        rows.append(M[mask].mean(axis=0))
    return np.vstack(rows)


def theta3(X: Sequence, A: Sequence, labels, n_categories: Optional[int] = None) -> float:
    """Mean over subjects of squared pairwise differences of per-category ISE."""
    labels = np.asarray(labels)
    C = int(labels.max()) if n_categories is None else n_categories
    if len(X) != len(A) or not X:
        raise ValueError("X and A need one entry per subject")
    total = 0.0
    for Xi, Ai in zip(X, A):
        if np.shape(Xi) != np.shape(Ai):
            raise ValueError(f"pre/post mapping shapes differ: {np.shape(Xi)} vs {np.shape(Ai)}")
        if C < 2:
            continue
        xm = category_means(Xi, labels, C)
        gm = category_means(Ai, labels, C)
        cos = np.array([ise(xm[c], gm[c]) for c in range(C)])
        diff = cos[:, None] - cos[None, :]
        total += float(np.sum(np.triu(diff, 1) ** 2))
    return total / len(X)


def theta4(A: Sequence, W, Y, alpha: float = 1.0) -> float:
    """Squared hinge over labeled time points (Y = 0 is skipped) plus ``||W||_1``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    Y = np.asarray(Y)
    if not np.all(np.isin(Y, (-1, 0, 1))):
        raise ValueError("labels must be -1 or +1 (0 marks excluded time points)")
    W = np.asarray(W, dtype=float)
    mask = Y != 0
    loss = 0.0
    for Ai in A:
        margins = Y[mask] * (np.asarray(Ai)[mask] @ W)
        loss += float(np.sum(np.maximum(0.0, 1.0 - margins) ** 2))
    return alpha * loss / len(A) + float(np.sum(np.abs(W)))


def binary_targets(labels, positive: int) -> np.ndarray:
    """+1 for ``positive``, -1 for other labeled points, 0 for excluded points."""
    labels = np.asarray(labels)
    y = np.where(labels == positive, 1, -1)
    y[labels == 0] = 0
    return y


def procrustes(X, target) -> np.ndarray:
    """Orthogonal R minimising ``||X R - target||_F``."""
    u, _, vt = np.linalg.svd(np.asarray(X).T @ np.asarray(target))
    return u @ vt


def nearest_orthonormal(A) -> np.ndarray:
    u, _, vt = np.linalg.svd(np.asarray(A, dtype=float), full_matrices=False)
    return u @ vt


def repair_rotation(X, R) -> np.ndarray:
    """Re-solve R so that ``X R`` is the column-orthonormal matrix nearest to ``X R``."""
    X = np.asarray(X, dtype=float)
    T, V = X.shape
    if V > T:
        raise RankDeficientError(f"hard repair needs V <= T, got V={V}, T={T}")
    s = np.linalg.svd(X, compute_uv=False)
    tol = s.max() * max(X.shape) * np.finfo(float).eps if s.size else 0.0
    if s.size == 0 or np.sum(s > tol) < V:
        raise RankDeficientError("mapped responses are rank deficient")
    target = nearest_orthonormal(X @ R)
    return np.linalg.pinv(X) @ target


def fit_weights(A: Sequence, Y, alpha: float = 1.0, n_iter: int = 200, W0=None) -> np.ndarray:
    """Accelerated proximal gradient on theta4 for fixed mapped responses."""
    Y = np.asarray(Y)
    mask = Y != 0
    Z = np.vstack([Y[mask, None] * np.asarray(Ai)[mask] for Ai in A])
    c = alpha / len(A)
    V = Z.shape[1]
    W = np.zeros(V) if W0 is None else np.asarray(W0, dtype=float).copy()
    lip = 2.0 * c * np.linalg.norm(Z, 2) ** 2
    if lip == 0:
        return W
    step = 1.0 / lip
    prev, mom, t = W.copy(), W.copy(), 1.0
    for _ in range(n_iter):
        slack = np.maximum(0.0, 1.0 - Z @ mom)
        grad = -2.0 * c * (Z.T @ slack)
        z = mom - step * grad
        W = np.sign(z) * np.maximum(np.abs(z) - step, 0.0)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = W + ((t - 1.0) / t_next) * (W - prev)
        prev, t = W, t_next
    return W


def _guard(fn, *args):
    try:
        val = fn(*args)
    except DegenerateInputError:
        return WORST_COST
    return val if np.isfinite(val) else WORST_COST


class _Problem:
    """Shared plumbing: fixed data, mapping, and which parameter blocks are free."""

    def __init__(self, F, tau, mapping: MappingSpec, TR: float, n_categories: int,
                 lambda_orth: float, fixed_beta=None, fixed_rotation=None, repair_mode="soft"):
        self.F = [np.asarray(f, dtype=float) for f in F]
        self.tau = [np.asarray(t, dtype=float) for t in tau]
        self.D = [design_matrix(t, TR) for t in self.tau]
        self.labels = derive_labels(self.tau[0])
        for t in self.tau[1:]:
            if not np.array_equal(derive_labels(t), self.labels):
                raise ValueError("stimuli must be time-synchronised across subjects")
        self.mapping = mapping
        self.C = n_categories
        self.lambda_orth = lambda_orth
        self.S = len(self.F)
        self.V_org = self.F[0].shape[1]
        self.V = mapping.output_dim
        self.fixed_beta = fixed_beta
        self.fixed_rotation = fixed_rotation
        if repair_mode not in ("soft", "hard"):
            raise ValueError(f"repair mode must be 'soft' or 'hard', got {repair_mode!r}")
        self.repair_mode = repair_mode
        self._warned = False

    @property
    def n_beta(self) -> int:
        return 0 if self.fixed_beta is not None else self.S * self.C * self.V_org

    @property
    def n_rotation(self) -> int:
        return 0 if self.fixed_rotation is not None else self.S * self.V * self.V

    def _split(self, flat):
        flat = np.asarray(flat, dtype=float)
        nb, nr = self.n_beta, self.n_rotation
        if self.fixed_beta is not None:
            beta = [np.asarray(b, dtype=float) for b in self.fixed_beta]
        else:
            beta = [b.reshape(self.C, self.V_org) for b in np.split(flat[:nb], self.S)]
        if self.fixed_rotation is not None:
            rot = [np.asarray(r, dtype=float) for r in self.fixed_rotation]
        else:
            rot = [r.reshape(self.V, self.V) for r in np.split(flat[nb : nb + nr], self.S)]
        return beta, rot, flat[nb + nr :]

    def mapped(self, beta, rotation):
        X = [apply_mapping(self.mapping, D @ b) for D, b in zip(self.D, beta)]
        for Xi in X:
            if Xi.shape[1] != self.V:
                raise ValueError(f"mapping output {Xi.shape[1]} differs from V={self.V}")
        A = [Xi @ R for Xi, R in zip(X, rotation)]
        return X, A

    def _sample_core(self, rng):
        parts = []
        if self.fixed_beta is None:
            parts.append(BETA_SCALE * rng.standard_normal(self.n_beta))
        if self.fixed_rotation is None:
            parts.extend(random_rotation(rng, self.V).ravel() for _ in range(self.S))
        return parts

    def repair(self, flat):
        if self.repair_mode == "soft" or self.fixed_rotation is not None:
            return flat
        beta, rot, rest = self._split(flat)
        X, _ = self.mapped(beta, rot)
        try:
            fixed = [repair_rotation(Xi, R) for Xi, R in zip(X, rot)]
        except RankDeficientError as exc:
            if not self._warned:
                logger.warning("hard repair unavailable (%s); falling back to soft penalty", exc)
                self._warned = True
            return flat
        out = np.array(flat, dtype=float, copy=True)
        nb = self.n_beta
        out[nb : nb + self.n_rotation] = np.concatenate([r.ravel() for r in fixed])
        return out


class TrainingProblem(_Problem):
    """Objective ``flat -> [theta1..theta4]`` over the free training blocks.

    Blocks given through ``fixed_beta``/``fixed_rotation`` are held constant and
    drop out of the search vector; ``W`` is always searched.
    """

    def __init__(self, F, tau, Y, mapping: MappingSpec, TR: float, n_categories: int,
                 alpha: float = 1.0, lambda_orth: float = 1.0, **kw):
        super().__init__(F, tau, mapping, TR, n_categories, lambda_orth, **kw)
        if not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        self.alpha = alpha
        self.Y = np.asarray(Y)

    @property
    def dim(self) -> int:
        return self.n_beta + self.n_rotation + self.V

    @property
    def shape(self) -> ParamShape:
        return ParamShape(self.S, self.C, self.V_org, self.V, True)

    def params(self, flat) -> TrainingParams:
        beta, rot, W = self._split(flat)
        return TrainingParams([b.copy() for b in beta], [r.copy() for r in rot], W.copy(), self.alpha)

    def flat(self, p: TrainingParams) -> np.ndarray:
        parts = []
        if self.fixed_beta is None:
            parts += [np.asarray(b).ravel() for b in p.beta]
        if self.fixed_rotation is None:
            parts += [np.asarray(r).ravel() for r in p.rotation]
        parts.append(np.asarray(p.weights).ravel())
        return np.concatenate(parts)

    def evaluate(self, p: TrainingParams, guard: bool = False) -> np.ndarray:
        X, A = self.mapped(p.beta, p.rotation)
        t1 = theta1(self.F, self.D, p.beta)
        t2 = theta2_pairwise(A, self.lambda_orth)
        t3 = _guard(theta3, X, A, self.labels, self.C) if guard else theta3(X, A, self.labels, self.C)
        t4 = theta4(A, p.weights, self.Y, self.alpha)
        out = np.array([t1, t2, t3, t4])
        if guard:
            out[~np.isfinite(out)] = WORST_COST
        return out

    def __call__(self, flat) -> np.ndarray:
        return self.evaluate(self.params(flat), guard=True)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        parts = self._sample_core(rng)
        parts.append(WEIGHT_SCALE * rng.standard_normal(self.V))
        return np.concatenate(parts)

    def warm_start(self) -> np.ndarray:
        """Least-squares beta, Procrustes rotations to the mean response, fitted W."""
        beta = (self.fixed_beta if self.fixed_beta is not None
                else [least_squares_beta(F, D) for F, D in zip(self.F, self.D)])
        X = [apply_mapping(self.mapping, D @ b) for D, b in zip(self.D, beta)]
        if self.fixed_rotation is not None:
            rot = list(self.fixed_rotation)
        else:
            target = np.mean(X, axis=0)
            rot = [procrustes(Xi, target) for Xi in X]
        A = [Xi @ R for Xi, R in zip(X, rot)]
        W = fit_weights(A, self.Y, self.alpha, n_iter=50)
        return self.flat(TrainingParams(list(beta), rot, W, self.alpha))


class TestingProblem(_Problem):
    """Objective ``flat -> [theta1, theta2 against G, theta3]`` for new subjects."""

    __test__ = False

    def __init__(self, F, tau, G, mapping: MappingSpec, TR: float, n_categories: int,
                 lambda_orth: float = 1.0, **kw):
        super().__init__(F, tau, mapping, TR, n_categories, lambda_orth, **kw)
        self.G = np.asarray(G, dtype=float)
        if self.G.shape != (self.F[0].shape[0], self.V):
            raise ValueError(f"shared space {self.G.shape} does not match T={self.F[0].shape[0]}, V={self.V}")

    @property
    def dim(self) -> int:
        return self.n_beta + self.n_rotation

    @property
    def shape(self) -> ParamShape:
        return ParamShape(self.S, self.C, self.V_org, self.V, False)

    def params(self, flat) -> TestingParams:
        beta, rot, _ = self._split(flat)
        return TestingParams([b.copy() for b in beta], [r.copy() for r in rot])

    def flat(self, p: TestingParams) -> np.ndarray:
        parts = []
        if self.fixed_beta is None:
            parts += [np.asarray(b).ravel() for b in p.beta]
        if self.fixed_rotation is None:
            parts += [np.asarray(r).ravel() for r in p.rotation]
        return np.concatenate(parts) if parts else np.zeros(0)

    def evaluate(self, p: TestingParams, guard: bool = False) -> np.ndarray:
        X, A = self.mapped(p.beta, p.rotation)
        t1 = theta1(self.F, self.D, p.beta)
        t2 = theta2_shared(A, self.G, self.lambda_orth)
        t3 = _guard(theta3, X, A, self.labels, self.C) if guard else theta3(X, A, self.labels, self.C)
        out = np.array([t1, t2, t3])
        if guard:
            out[~np.isfinite(out)] = WORST_COST
        return out

    def __call__(self, flat) -> np.ndarray:
        return self.evaluate(self.params(flat), guard=True)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        parts = self._sample_core(rng)
        return np.concatenate(parts) if parts else np.zeros(0)

    def warm_start(self) -> np.ndarray:
        beta = (self.fixed_beta if self.fixed_beta is not None
                else [least_squares_beta(F, D) for F, D in zip(self.F, self.D)])
        X = [apply_mapping(self.mapping, D @ b) for D, b in zip(self.D, beta)]
        rot = (list(self.fixed_rotation) if self.fixed_rotation is not None
               else [procrustes(Xi, self.G) for Xi in X])
        return self.flat(TestingParams(list(beta), rot))


def k_train(F, tau, p: TrainingParams, mapping: MappingSpec, Y, TR: float,
            n_categories: Optional[int] = None, lambda_orth: float = 1.0) -> np.ndarray:
    C = n_categories if n_categories is not None else np.shape(tau[0])[1]
    prob = TrainingProblem(F, tau, Y, mapping, TR, C, p.alpha, lambda_orth)
    return prob.evaluate(p)


def k_test(F, tau, G, p: TestingParams, mapping: MappingSpec, TR: float,
           n_categories: Optional[int] = None, lambda_orth: float = 1.0) -> np.ndarray:
    C = n_categories if n_categories is not None else np.shape(tau[0])[1]
    prob = TestingProblem(F, tau, G, mapping, TR, C, lambda_orth)
    return prob.evaluate(p)


def sign_labels(scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    return np.where(scores >= 0, 1, -1)


@dataclass
class CognitiveModel:
    """Trained shared space and decision surface for one binary task."""

    shared_space: np.ndarray
    weights: np.ndarray
    mapping: MappingSpec
    alpha: float
    lambda_orth: float
    category: int
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        V = self.mapping.output_dim
        if self.shared_space.shape[1] != V or self.weights.shape != (V,):
            raise ValueError(
                f"mapping output {V} inconsistent with shared space {self.shared_space.shape} "
                f"and weights {self.weights.shape}"
            )


def scores_for(F, tau, model: CognitiveModel, p: TestingParams, TR: float) -> list:
    """Raw decision values ``Phi(D beta) R W`` per subject."""
    out = []
    for Fi, ti, b, R in zip(F, tau, p.beta, p.rotation):
        D = design_matrix(ti, TR)
        if b.shape != (D.shape[1], np.shape(Fi)[1]):
            raise ValueError(f"beta shape {b.shape} does not match data {np.shape(Fi)} / design {D.shape}")
        X = apply_mapping(model.mapping, D @ b)
        if X.shape[1] != model.weights.shape[0] or R.shape != (X.shape[1], X.shape[1]):
            raise ValueError(f"mapped shape {X.shape} / rotation {R.shape} incompatible with model V={model.weights.shape[0]}")
        out.append(X @ R @ model.weights)
    return out


def predict(F, tau, model: CognitiveModel, p: TestingParams, TR: float):
    """Scores and +/-1 labels (sign of the score, zero counts as +1) per subject."""
    scores = scores_for(F, tau, model, p, TR)
    return scores, [sign_labels(s) for s in scores]
