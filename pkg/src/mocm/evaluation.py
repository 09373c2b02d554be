"""One-vs-all training/prediction, LOSO cross-validation and metrics."""

from __future__ import annotations

import logging
import zlib
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .config import RunConfig
from .dataset import Dataset, SubjectScan, derive_labels, loso_splits
from .engine import OptimizationTrace, derive_seed, optimize
from .glm import design_matrix, least_squares_beta
from .mapping import MappingKind, MappingSpec, gaussian_spec, linear_spec, svd_spec
from .objectives import (
    CognitiveModel,
    TestingParams,
    TestingProblem,
    TrainingProblem,
    binary_targets,
    fit_weights,
    scores_for,
    shared_space,
)

logger = logging.getLogger(__name__)

# spawn-key namespaces for derived seeds
CATEGORY_KEY = 101
TEST_KEY = 202


def model_categories(C: int) -> list:
    """Positive category of each binary model; two categories need one model."""
    if C < 2:
        raise ValueError("one-vs-all needs at least two categories")
    return [1] if C == 2 else list(range(1, C + 1))


def build_mapping(config: RunConfig, train: Dataset) -> MappingSpec:
    """Fit the feature mapping on training subjects only."""
    kind = MappingKind(config.mapping)
    if kind is MappingKind.LINEAR:
        return linear_spec(train.V_org)
    if kind is MappingKind.GAUSSIAN:
        responses = [train.design(s.id) @ least_squares_beta(s.F, train.design(s.id)) for s in train.scans]
        return gaussian_spec(np.mean(responses, axis=0), config.gamma)
    stack = np.vstack([s.F for s in train.scans])
    return svd_spec(stack, int(config.svd_dim))


def _frozen(config: RunConfig, scans, TR, V):
    if not config.freeze_rotation:
        return {}
    beta = [least_squares_beta(s.F, design_matrix(s.tau, TR)) for s in scans]
    return {"fixed_beta": beta, "fixed_rotation": [np.eye(V) for _ in scans]}


def one_vs_all_train(dataset: Dataset, train_ids, config: RunConfig):
    """Train one model per category (a single model when C = 2).

    Only the scans listed in ``train_ids`` are ever read.
    """
    train = dataset.subset(train_ids)
    mapping = build_mapping(config, train)
    labels = derive_labels(train.scans[0].tau)
    F = [s.F for s in train.scans]
    tau = [s.tau for s in train.scans]
    frozen = _frozen(config, train.scans, train.TR, mapping.output_dim)
    for c in range(1, train.C + 1):
        if not np.any(labels == c):
            raise ValueError(f"category {train.category_names[c - 1]} (index {c}) is absent from the training labels")
    models, traces = [], []
    for c in model_categories(train.C):
        Y = binary_targets(labels, c)
        problem = TrainingProblem(F, tau, Y, mapping, train.TR, train.C, config.alpha, config.lambda_orth,
                                  repair_mode=config.repair, **frozen)
        opt = config.optimizer(seed=derive_seed(config.seed, CATEGORY_KEY, c))
        initial = [problem.warm_start()] if config.warm_start else None
        res = optimize(problem, problem.sample, opt, repair=problem.repair, threads=config.threads, initial=initial)
        p = problem.params(res.best.params)
        _, A = problem.mapped(p.beta, p.rotation)
        models.append(CognitiveModel(shared_space(A), p.weights, mapping, config.alpha, config.lambda_orth, c,
                                     {"run": config.to_dict(), "category_seed": opt.seed}))
        traces.append(res.trace)
    return models, traces


def fit_test_params(model: CognitiveModel, scan: SubjectScan, TR: float, C: int, config: RunConfig):
    """Fit beta-hat and R-hat for one new subject against the model's shared space."""
    frozen = _frozen(config, [scan], TR, model.mapping.output_dim)
    problem = TestingProblem([scan.F], [scan.tau], model.shared_space, model.mapping, TR, C,
                             model.lambda_orth, repair_mode=config.repair, **frozen)
    if problem.dim == 0:
        return problem.params(np.zeros(0)), None
    seed = derive_seed(config.seed, TEST_KEY, zlib.crc32(scan.id.encode()), model.category)
    initial = [problem.warm_start()] if config.warm_start else None
    res = optimize(problem, problem.sample, config.optimizer(seed=seed), repair=problem.repair,
                   threads=config.threads, initial=initial)
    return problem.params(res.best.params), res.trace


@dataclass
class Prediction:
    subject: str
    labels: np.ndarray  # true category per TR, 0 = excluded
    predicted: np.ndarray  # predicted category per TR
    scores: np.ndarray  # models x T raw decision values
    categories: list  # positive category of each model row

    @property
    def mask(self) -> np.ndarray:
        return self.labels != 0


def decide(scores: np.ndarray, categories: list) -> np.ndarray:
    """Argmax category per TR; the binary model votes +score / -score."""
    scores = np.atleast_2d(scores)
    if len(categories) == 1:
        stacked = np.vstack([scores[0], -scores[0]])
        return np.argmax(stacked, axis=0) + 1
    return np.asarray(categories)[np.argmax(scores, axis=0)]


def one_vs_all_predict(models, scan: SubjectScan, TR: float, C: int, config: RunConfig) -> Prediction:
    V = {m.mapping.output_dim for m in models}
    if len(V) != 1:
        raise ValueError(f"models disagree on mapped dimension: {sorted(V)}")
    rows = []
    for m in models:
        p, _ = fit_test_params(m, scan, TR, C, config)
        rows.append(scores_for([scan.F], [scan.tau], m, p, TR)[0])
    scores = np.vstack(rows)
    cats = [m.category for m in models]
    return Prediction(scan.id, derive_labels(scan.tau), decide(scores, cats), scores, cats)


def accuracy(pred, truth) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth differ in length")
    if truth.size == 0:
        raise ValueError("no labeled time points")
    return float(np.mean(pred == truth))


def auc(scores, truth) -> float:
    """Mann-Whitney AUC for +/-1 (or boolean) truth; ties count one half."""
    scores = np.asarray(scores, dtype=float)
    pos = np.asarray(truth) > 0
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def prediction_metrics(pred: Prediction, C: int) -> dict:
    m = pred.mask
    truth, guess = pred.labels[m], pred.predicted[m]
    acc = accuracy(guess, truth)
    if len(pred.categories) == 1:
        fold_auc = auc(pred.scores[0][m], truth == pred.categories[0])
    else:
        fold_auc = float(np.mean([auc(pred.scores[k][m], truth == c) for k, c in enumerate(pred.categories)]))
    per_cat = {}
    for c in range(1, C + 1):
        sel = truth == c
        per_cat[str(c)] = float(np.mean(guess[sel] == c)) if sel.any() else None
    return {"accuracy": acc, "auc": fold_auc, "per_category_accuracy": per_cat}


@dataclass
class MetricsReport:
    folds: list
    accuracy_mean: float
    accuracy_std: float
    auc_mean: float
    auc_std: float
    per_category_accuracy: dict
    config: dict
    seed: int
    traces: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("traces")
        return d


def cross_validate(dataset: Dataset, config: RunConfig) -> MetricsReport:
    """Leave-one-subject-out evaluation; std is the population std over folds."""
    folds, traces = [], []
    for k, split in enumerate(loso_splits(dataset)):
        try:
            models, tr = one_vs_all_train(dataset, split.train_ids, config)
            scan = dataset.scan(split.test_ids[0])
            pred = one_vs_all_predict(models, scan, dataset.TR, dataset.C, config)
            metrics = prediction_metrics(pred, dataset.C)
        except Exception as exc:
            raise RuntimeError(f"fold {k} (test subject {split.test_ids[0]}) failed: {exc}") from exc
        folds.append({"fold": k, "train_ids": split.train_ids, "test_ids": split.test_ids,
                      "iterations": [t.iterations_run for t in tr],
                      "termination": [t.termination.value for t in tr], **metrics})
        traces.append(tr)
        logger.info("fold %d: accuracy %.4f auc %.4f", k, metrics["accuracy"], metrics["auc"])
    accs = np.array([f["accuracy"] for f in folds])
    aucs = np.array([f["auc"] for f in folds])
    per_cat = {}
    for c in range(1, dataset.C + 1):
        vals = [f["per_category_accuracy"][str(c)] for f in folds if f["per_category_accuracy"][str(c)] is not None]
        per_cat[str(c)] = float(np.mean(vals)) if vals else None
    return MetricsReport(folds, float(accs.mean()), float(accs.std()), float(aucs.mean()), float(aucs.std()),
                         per_cat, config.to_dict(), config.seed, traces)


def oracle_cross_validate(dataset: Dataset, rotations, config: RunConfig, n_iter: int = 2000) -> float:
    """LOSO accuracy with generator rotations undone and only W trained.

    Each subject's least-squares regressors are rotated back into the template
    space before mapping, so the rotations are known exactly; W is fitted by
    proximal gradient on theta4. Returns the mean fold accuracy.
    """
    rot = dict(zip(dataset.ids, rotations))

    def unrotated(ds, s):
        D = ds.design(s.id)
        return D, least_squares_beta(s.F, D) @ rot[s.id].T

    accs = []
    for split in loso_splits(dataset):
        train = dataset.subset(split.train_ids)
        resp = [D @ b for D, b in (unrotated(train, s) for s in train.scans)]
        kind = MappingKind(config.mapping)
        if kind is MappingKind.GAUSSIAN:
            mapping = gaussian_spec(np.mean(resp, axis=0), config.gamma)
        elif kind is MappingKind.SVD:
            mapping = svd_spec(np.vstack([s.F @ rot[s.id].T for s in train.scans]), int(config.svd_dim))
        else:
            mapping = linear_spec(train.V_org)
        X = [mapping(r) for r in resp]
        labels = derive_labels(train.scans[0].tau)
        cats = model_categories(dataset.C)
        weights = [fit_weights(X, binary_targets(labels, c), config.alpha, n_iter=n_iter) for c in cats]
        test = dataset.scan(split.test_ids[0])
        D, b = unrotated(dataset, test)
        Xt = mapping(D @ b)
        scores = np.vstack([Xt @ w for w in weights])
        truth = derive_labels(test.tau)
        mask = truth != 0
        accs.append(accuracy(decide(scores, cats)[mask], truth[mask]))
    return float(np.mean(accs))


def trace_rows(trace: OptimizationTrace) -> list:
    return [[i, *map(float, vec)] for i, vec in enumerate(trace.best)]
