"""Indicator-based non-dominated evolutionary optimizer.

The optimizer keeps a population of ``O`` parameter vectors. Each iteration it
pools the population with ``O`` averaged offspring and ``O`` fresh random
samples, partitions the pool into non-dominated fronts and ranks each front by
``max(I1, I2)`` where ``I1`` is an exponentially weighted additive-epsilon sum
and ``I2`` a shift-based density distance to earlier-positioned members.

Random streams are derived from one master seed by counter-based splitting:
``SeedSequence(seed, spawn_key=(purpose, iteration))`` with purposes
``STREAM_INIT``, ``STREAM_OFFSPRING`` and ``STREAM_EXPLORE``. Evaluation order
never touches a random stream, so results do not depend on thread count.
"""

from __future__ import annotations

import enum
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

logger = logging.getLogger(__name__)

STREAM_INIT = 0
STREAM_OFFSPRING = 1
STREAM_EXPLORE = 2

ObjectiveFn = Callable[[np.ndarray], np.ndarray]
Sampler = Callable[[np.random.Generator], np.ndarray]
Repair = Callable[[np.ndarray], np.ndarray]


class EvaluationError(RuntimeError):
    """An objective evaluation failed or produced a non-finite vector."""

    def __init__(self, message: str, uid: Optional[int] = None, iteration: Optional[int] = None):
        parts = [message]
        if uid is not None:
            parts.append(f"candidate={uid}")
        if iteration is not None:
            parts.append(f"iteration={iteration}")
        super().__init__(" | ".join(parts))
        self.uid = uid
        self.iteration = iteration


class Termination(str, enum.Enum):
    MAX_IT = "MaxItReached"
    MAX_SAME = "MaxSameReached"


@dataclass
class Candidate:
    """Parameter vector plus its cached objectives and sorting bookkeeping.

    ``delta`` holds the ``uid`` values of candidates this one dominates; ``a``
    and ``b`` are the I1 and I2 scores from the last front it was ranked in.
    """

    params: np.ndarray
    uid: int = 0
    objectives: Optional[np.ndarray] = None
    n_p: int = 0
    delta: set = field(default_factory=set)
    a: float = 0.0
    b: float = 0.0
    front: int = 0

    def evaluate(self, objective_fn: ObjectiveFn) -> np.ndarray:
        if self.objectives is None:
            self.objectives = _checked_objectives(objective_fn(self.params), self.uid)
        return self.objectives


@dataclass
class OptimizerConfig:
    population_size: int = 50
    max_iterations: int = 1000
    max_same: int = 5
    seed: int = 0
    kappa: float = 0.05
    no_predecessor_i2: float = 0.0
    swap_indicator_args: bool = False

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError(f"population_size must be >= 2, got {self.population_size}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.max_same < 1:
            raise ValueError(f"max_same must be >= 1, got {self.max_same}")
        if self.max_same > self.max_iterations:
            raise ValueError(
                f"max_same ({self.max_same}) must not exceed max_iterations ({self.max_iterations})"
            )
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")


@dataclass
class OptimizationTrace:
    best: list = field(default_factory=list)
    elapsed: list = field(default_factory=list)
    iterations_run: int = 0
    termination: Termination = Termination.MAX_IT
    wall_time: float = 0.0

    def records(self) -> list[dict]:
        return [
            {"iteration": i, "best": [float(v) for v in vec], "elapsed": float(t)}
            for i, (vec, t) in enumerate(zip(self.best, self.elapsed))
        ]

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")


@dataclass
class OptimizationResult:
    best: Candidate
    trace: OptimizationTrace
    population: list


def stream(seed: int, iteration: int, purpose: int) -> np.random.Generator:
    """Independent generator for one (purpose, iteration) pair of a run."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(purpose, iteration)))


def derive_seed(seed: int, *key: int) -> int:
    """64-bit child seed of ``seed`` for the given counter key."""
    words = np.random.SeedSequence(seed, spawn_key=key).generate_state(2, dtype=np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


def _as_vector(v) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(-1)


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = _as_vector(a), _as_vector(b)
    if a.shape != b.shape:
        raise ValueError(f"objective vectors differ in length: {a.size} vs {b.size}")
    return a, b


def _checked_objectives(values, uid=None) -> np.ndarray:
    vec = _as_vector(values)
    if vec.size == 0:
        raise EvaluationError("objective function returned an empty vector", uid=uid)
    if not np.all(np.isfinite(vec)):
        raise EvaluationError(f"non-finite objective vector {vec.tolist()}", uid=uid)
    return vec


def dominates(a, b) -> bool:
    """True when ``a`` is no worse than ``b`` everywhere and better somewhere."""
    a, b = _pair(a, b)
    return bool(np.all(a <= b) and np.any(a < b))


def epsilon_indicator(p, q) -> float:
    """Smallest additive shift ``eps`` with ``p - eps <= q`` componentwise."""
    p, q = _pair(p, q)
    return float(np.max(p - q))


def _scaled_norm(v: np.ndarray) -> float:
    # plain sqrt(sum(v**2)) overflows for the 1e300 guard costs
    scale = float(np.max(np.abs(v))) if v.size else 0.0
    if scale == 0.0:
        return 0.0
    return scale * float(np.sqrt(np.sum((v / scale) ** 2)))


def isde(p, q) -> float:
    """Shift-based density distance: norm of the components where p < q."""
    p, q = _pair(p, q)
    shifted = np.where(p < q, p - q, 0.0)
    return _scaled_norm(shifted)


def _objs(c) -> np.ndarray:
    if isinstance(c, Candidate):
        if c.objectives is None:
            raise ValueError(f"candidate {c.uid} has no evaluated objectives")
        return c.objectives
    return _as_vector(c)


def indicator_i1(q, front: Sequence, kappa: float = 0.05, swap: bool = False) -> float:
    """Sum of ``exp(-I_eps(q, p) / kappa)`` over the other members of ``front``.

    Members are matched by identity, so duplicates of ``q``'s values still count.
    With ``swap`` the epsilon arguments are reversed.
    """
    log_val = _log_i1(q, front, kappa, swap)
    return float(np.exp(log_val))


def _log_i1(q, front, kappa, swap) -> float:
    qv = _objs(q)
    terms = []
    for p in front:
        if p is q:
            continue
        pv = _objs(p)
        eps = epsilon_indicator(pv, qv) if swap else epsilon_indicator(qv, pv)
        terms.append(-eps / kappa)
    if not terms:
        return -np.inf
    return float(logsumexp(terms))


def indicator_i2(q, front: Sequence, sentinel: float = 0.0, swap: bool = False) -> float:
    """Minimum ``isde(q, p)`` over members positioned before ``q`` in ``front``."""
    qv = _objs(q)
    position = next((i for i, p in enumerate(front) if p is q), None)
    if position is None:
        raise ValueError("q is not a member of front")
    if position == 0:
        return float(sentinel)
    vals = [
        isde(_objs(p), qv) if swap else isde(qv, _objs(p))
        for p in front[:position]
    ]
    return float(min(vals))


def dominance_matrix(objectives: np.ndarray) -> np.ndarray:
    """``M[i, j]`` is True when row i dominates row j."""
    le = np.all(objectives[:, None, :] <= objectives[None, :, :], axis=2)
    lt = np.any(objectives[:, None, :] < objectives[None, :, :], axis=2)
    return le & lt


def non_dominated_partition(population: Sequence[Candidate]) -> list[list[int]]:
    """Peel ``population`` into fronts, filling ``n_p``, ``delta`` and ``front``.

    Returns fronts as lists of positions into ``population``; each front is in
    ascending position order.
    """
    if not population:
        return []
    objs = np.vstack([_objs(c) for c in population])
    if not np.all(np.isfinite(objs)):
        bad = [c.uid for c, row in zip(population, objs) if not np.all(np.isfinite(row))]
        raise EvaluationError(f"non-finite objectives for candidates {bad}")
    dom = dominance_matrix(objs)
    counts = dom.sum(axis=0).astype(int)
    for i, cand in enumerate(population):
        cand.n_p = int(counts[i])
        cand.delta = {population[j].uid for j in np.flatnonzero(dom[i])}

    remaining = counts.copy()
    fronts = []
    current = [i for i in range(len(population)) if remaining[i] == 0]
    while current:
        for i in current:
            population[i].front = len(fronts)
        fronts.append(current)
        nxt = []
        for i in current:
            for j in np.flatnonzero(dom[i]):
                remaining[j] -= 1
                if remaining[j] == 0:
                    nxt.append(int(j))
        current = sorted(nxt)
    return fronts


def _score_front(objs: np.ndarray, kappa: float, swap: bool, sentinel: float):
    """Log I1 and raw I2 for every member of a position-ordered front."""
    k = objs.shape[0]
    # eps[i, j] = I_eps(row i, row j)
    eps = np.max(objs[:, None, :] - objs[None, :, :], axis=2)
    if swap:
        eps = eps.T
    expo = -eps / kappa
    np.fill_diagonal(expo, -np.inf)
    log_a = logsumexp(expo, axis=1) if k > 1 else np.full(k, -np.inf)

    # dist[i, j] = isde(row i, row j), rescaled per pair against overflow
    sd = objs[:, None, :] - objs[None, :, :]
    sd = np.where(sd < 0, sd, 0.0)
    scale = np.max(np.abs(sd), axis=2)
    safe = np.where(scale > 0, scale, 1.0)
    dist = scale * np.sqrt(np.sum((sd / safe[:, :, None]) ** 2, axis=2))
    if swap:
        dist = dist.T
    b = np.full(k, float(sentinel))
    for i in range(1, k):
        b[i] = dist[i, :i].min()
    return log_a, b


def sort_select(
    objective_fn: Optional[ObjectiveFn],
    U: Sequence[Candidate],
    O: int,
    kappa: float = 0.05,
    swap_indicator_args: bool = False,
    no_predecessor_i2: float = 0.0,
) -> list[Candidate]:
    """Rank ``U`` front by front until at least ``O`` candidates are collected.

    Whole fronts are appended, so the result can be longer than ``O``; the first
    ``O`` entries are the selection. Within a front the order is ascending
    ``max(a, b)``, then ascending ``a``, then position in ``U``.
    """
    if len(U) < 1:
        raise ValueError("sort_select needs at least one candidate")
    if objective_fn is not None:
        for cand in U:
            try:
                cand.evaluate(objective_fn)
            except EvaluationError:
                raise
            except Exception as exc:  # surface the failing candidate
                raise EvaluationError(f"objective evaluation failed: {exc}", uid=cand.uid) from exc

    fronts = non_dominated_partition(U)
    selected: list[Candidate] = []
    for members in fronts:
        if len(selected) >= O:
            break
        objs = np.vstack([U[i].objectives for i in members])
        log_a, b = _score_front(objs, kappa, swap_indicator_args, no_predecessor_i2)
        with np.errstate(over="ignore"):
            a = np.exp(log_a)
        # compare max(a, b) in log space since a can overflow; a >= 0 always
        keys = []
        for k in range(len(members)):
            primary = log_a[k] if b[k] <= 0 else max(log_a[k], float(np.log(b[k])))
            keys.append((primary, log_a[k], members[k]))
        order = sorted(range(len(members)), key=lambda k: keys[k])
        for k in order:
            cand = U[members[k]]
            cand.a = float(a[k])
            cand.b = float(b[k])
            selected.append(cand)
    return selected


def _evaluate_all(objective_fn, candidates, threads, iteration):
    pending = [c for c in candidates if c.objectives is None]
    if not pending:
        return

    def run(cand):
        try:
            return objective_fn(cand.params)
        except Exception as exc:
            raise EvaluationError(f"objective evaluation failed: {exc}", uid=cand.uid, iteration=iteration) from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, pending))
    else:
        results = [run(c) for c in pending]
    for cand, values in zip(pending, results):
        try:
            cand.objectives = _checked_objectives(values, cand.uid)
        except EvaluationError as exc:
            raise EvaluationError(str(exc), iteration=iteration) from exc


def optimize(
    objective_fn: ObjectiveFn,
    sampler: Sampler,
    config: OptimizerConfig,
    repair: Optional[Repair] = None,
    threads: int = 1,
    initial: Optional[Sequence[np.ndarray]] = None,
    on_iteration: Optional[Callable[[int, Candidate], None]] = None,
) -> OptimizationResult:
    """Run the evolutionary loop until MaxIt or MaxSame is reached.

    ``initial`` optionally replaces the first entries of the random initial
    population (used for warm-seeding). ``repair`` is applied to every
    offspring after averaging.
    """
    O = config.population_size
    seed = config.seed
    uid = 0

    def new(params):
        nonlocal uid
        cand = Candidate(params=np.asarray(params, dtype=float), uid=uid)
        uid += 1
        return cand

    def draw(rng, iteration):
        try:
            return np.asarray(sampler(rng), dtype=float)
        except Exception as exc:
            raise EvaluationError(f"sampler failed: {exc}", iteration=iteration) from exc

    rng0 = stream(seed, 0, STREAM_INIT)
    population = [new(draw(rng0, 0)) for _ in range(O)]
    for k, params in enumerate(list(initial or [])[:O]):
        population[k] = new(params)
    _evaluate_all(objective_fn, population, threads, 0)

    trace = OptimizationTrace()
    start = time.perf_counter()
    prev_best = None
    i = j = 0
    while i < config.max_iterations and j < config.max_same:
        rng_off = stream(seed, i, STREAM_OFFSPRING)
        offspring = []
        for _ in range(O):
            a, b = rng_off.choice(O, size=2, replace=False)
            child = 0.5 * (population[a].params + population[b].params)
            if repair is not None:
                try:
                    child = np.asarray(repair(child), dtype=float)
                except Exception as exc:
                    raise EvaluationError(f"repair failed: {exc}", iteration=i) from exc
            offspring.append(new(child))
        rng_exp = stream(seed, i, STREAM_EXPLORE)
        explore = [new(draw(rng_exp, i)) for _ in range(O)]

        pool = population + offspring + explore
        _evaluate_all(objective_fn, pool, threads, i)
        try:
            ranked = sort_select(
                None, pool, O,
                kappa=config.kappa,
                swap_indicator_args=config.swap_indicator_args,
                no_predecessor_i2=config.no_predecessor_i2,
            )
        except EvaluationError as exc:
            raise EvaluationError(str(exc), iteration=i) from exc
        population = ranked[:O]
        best = population[0]

        key = best.objectives.tobytes()
        j = j + 1 if prev_best is not None and key == prev_best else 0
        prev_best = key
        trace.best.append(best.objectives.copy())
        trace.elapsed.append(time.perf_counter() - start)
        if on_iteration is not None:
            on_iteration(i, best)
        i += 1
        logger.debug("iteration %d best=%s same=%d", i, best.objectives, j)

    trace.iterations_run = i
    trace.termination = Termination.MAX_SAME if j >= config.max_same else Termination.MAX_IT
    trace.wall_time = time.perf_counter() - start
    return OptimizationResult(best=population[0], trace=trace, population=population)


def config_dict(config: OptimizerConfig) -> dict:
    return asdict(config)
