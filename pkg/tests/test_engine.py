import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from mocm.engine import (
    Candidate,
    EvaluationError,
    OptimizerConfig,
    Termination,
    derive_seed,
    dominates,
    epsilon_indicator,
    indicator_i1,
    indicator_i2,
    isde,
    non_dominated_partition,
    optimize,
    sort_select,
    stream,
)

vec = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3)


def cands(vectors):
    return [Candidate(params=np.zeros(1), uid=i, objectives=np.asarray(v, float)) for i, v in enumerate(vectors)]


def convex(x):
    return np.array([(x[0] - 1.0) ** 2, (x[0] + 1.0) ** 2])


def uniform5(rng):
    return rng.uniform(-5, 5, 1)


# dominance and indicators

@pytest.mark.parametrize("a,b,expected", [
    ([1, 1], [2, 2], True),
    ([1, 2], [1, 2], False),
    ([1, 3], [2, 2], False),
    ([2, 2], [1, 3], False),
])
def test_dominates_examples(a, b, expected):
    assert dominates(a, b) is expected


def test_dominates_length_mismatch():
    with pytest.raises(ValueError):
        dominates([1, 2], [1, 2, 3])


@given(vec, vec, vec)
def test_dominance_is_strict_partial_order(a, b, c):
    assert not dominates(a, a)
    assert not (dominates(a, b) and dominates(b, a))
    if dominates(a, b) and dominates(b, c):
        assert dominates(a, c)


@pytest.mark.parametrize("p,q,expected", [([1, 3], [2, 2], 1.0), ([5, 5], [5, 5], 0.0), ([0, 0], [2, 3], -2.0)])
def test_epsilon_examples(p, q, expected):
    assert epsilon_indicator(p, q) == expected


@given(vec, vec)
def test_epsilon_nonpositive_means_weak_dominance(p, q):
    assert epsilon_indicator(p, p) == 0.0
    if epsilon_indicator(p, q) <= 0:
        assert dominates(p, q) or np.array_equal(p, q) or all(x <= y for x, y in zip(p, q))


@pytest.mark.parametrize("p,q,expected", [([1, 3], [2, 2], 1.0), ([4, 4], [4, 4], 0.0), ([0, 0], [3, 4], 5.0)])
def test_isde_examples(p, q, expected):
    assert isde(p, q) == pytest.approx(expected, abs=1e-12)


def test_isde_handles_huge_costs():
    assert isde([0.0, 0.0], [1e300, 1e300]) == pytest.approx(math.sqrt(2) * 1e300, rel=1e-12)


def test_i1_examples():
    q, p1, p2 = cands([[0, 0], [-0.05, 0], [-0.10, 0]])
    assert indicator_i1(q, [q]) == 0.0
    assert indicator_i1(q, [q, p1], kappa=0.05) == pytest.approx(math.exp(-1), abs=1e-12)
    assert indicator_i1(q, [q, p1, p2], kappa=0.05) == pytest.approx(0.503214724408055, abs=1e-12)


def test_i1_counts_duplicates_by_identity():
    q, twin = cands([[1, 1], [1, 1]])
    assert indicator_i1(q, [q, twin]) == pytest.approx(1.0, abs=1e-12)


@given(vec, vec, vec)
def test_i1_monotone_in_front(q, p1, p2):
    q, p1, p2 = cands([q, p1, p2])
    small = indicator_i1(q, [q, p1], kappa=1.0)
    assert indicator_i1(q, [q, p1, p2], kappa=1.0) > small


def test_i2_examples():
    q0, other = cands([[1, 3], [2, 2]])
    assert indicator_i2(q0, [q0, other]) == 0.0
    p, q = cands([[2, 2], [1, 3]])
    assert indicator_i2(q, [p, q]) == pytest.approx(1.0, abs=1e-12)
    p1, p2, q = cands([[2.5, 0], [0.7, 0], [0, 0]])
    assert indicator_i2(q, [p1, p2, q]) == pytest.approx(0.7, abs=1e-12)


def test_i2_sentinel_and_membership():
    q, = cands([[1, 1]])
    assert indicator_i2(q, [q], sentinel=-1.0) == -1.0
    stranger, = cands([[0, 0]])
    with pytest.raises(ValueError):
        indicator_i2(stranger, [q])


def test_swap_reverses_arguments():
    q, p = cands([[1, 3], [2, 2]])
    assert indicator_i1(q, [q, p], kappa=1.0, swap=True) == pytest.approx(math.exp(-epsilon_indicator(p.objectives, q.objectives)))
    assert indicator_i2(q, [p, q], swap=True) == pytest.approx(isde(p.objectives, q.objectives))


# partition

def test_identical_vectors_form_one_front():
    pop = cands([[1, 1]] * 5)
    assert non_dominated_partition(pop) == [[0, 1, 2, 3, 4]]
    assert all(c.n_p == 0 and not c.delta for c in pop)


def test_chain_gives_singleton_fronts():
    pop = cands([[1, 1], [2, 2], [3, 3]])
    assert non_dominated_partition(pop) == [[0], [1], [2]]
    assert [c.n_p for c in pop] == [0, 1, 2]
    assert pop[0].delta == {1, 2}


def test_partition_matches_peel_oracle_20x3():
    rng = np.random.default_rng(3)
    vectors = rng.random((20, 3))
    fronts = non_dominated_partition(cands(vectors))
    assert fronts == oracles.peel_fronts(vectors.tolist())


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 25), st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_partition_property(n, m, seed):
    vectors = np.random.default_rng(seed).integers(0, 4, (n, m)).astype(float)
    pop = cands(vectors)
    fronts = non_dominated_partition(pop)
    assert fronts == oracles.peel_fronts(vectors.tolist())
    assert sorted(i for f in fronts for i in f) == list(range(n))
    for a in fronts[0]:
        for b in fronts[0]:
            assert not dominates(vectors[a], vectors[b])


def test_partition_rejects_non_finite():
    with pytest.raises(EvaluationError):
        non_dominated_partition(cands([[1, np.nan], [0, 0]]))


# sort_select

def three_candidates():
    # I1 values 0.8 (A) and 0.9 (B) come from eps = -kappa * ln(score)
    k = 0.05
    A = [0.0, -k * math.log(0.8)]
    B = [-k * math.log(0.9), 0.0]
    C = [1.0, 1.0]
    return cands([C, B, A])


def test_three_candidate_order():
    C, B, A = U = three_candidates()
    out = sort_select(None, U, 3)
    assert [c.uid for c in out] == [A.uid, B.uid, C.uid]
    assert A.front == B.front == 0 and C.front == 1
    assert max(A.a, A.b) == pytest.approx(0.8, abs=1e-12)
    assert max(B.a, B.b) == pytest.approx(0.9, abs=1e-12)


def test_small_pool_returned_whole():
    U = cands(np.random.default_rng(0).random((6, 2)))
    out = sort_select(None, U, 10)
    assert sorted(c.uid for c in out) == list(range(6))


def test_sort_select_matches_straight_line_oracle():
    vectors = np.random.default_rng(11).random((30, 2))
    out = sort_select(None, cands(vectors), 10)
    expected = oracles.sort_select(vectors.tolist(), 10)
    assert [c.uid for c in out] == expected
    assert [c.uid for c in out[:10]] == expected[:10]


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 30), st.integers(1, 30), st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_sort_select_is_front_ordered_permutation_prefix(n, O, m, seed):
    vectors = np.random.default_rng(seed).random((n, m))
    U = cands(vectors)
    out = sort_select(None, U, O)
    uids = [c.uid for c in out]
    assert len(set(uids)) == len(uids) and set(uids) <= set(range(n))
    assert len(out) >= min(O, n)
    assert [c.front for c in out] == sorted(c.front for c in out)
    assert uids == oracles.sort_select(vectors.tolist(), O)


def test_sort_select_survives_overflowing_i1():
    # eps of -100 with kappa 0.05 gives exp(2000), beyond float range
    U = cands([[0.0, 100.0], [100.0, 0.0], [50.0, 50.0]])
    out = sort_select(None, U, 3)
    assert len(out) == 3 and all(np.isinf(c.a) or np.isfinite(c.a) for c in out)


def test_sort_select_attaches_candidate_on_failure():
    U = [Candidate(params=np.array([1.0]), uid=7)]

    def boom(p):
        raise RuntimeError("bad")

    with pytest.raises(EvaluationError, match="candidate=7"):
        sort_select(boom, U, 1)


# optimize

def test_constant_objective_stops_after_max_same_plus_one():
    cfg = OptimizerConfig(population_size=6, max_iterations=100, max_same=4, seed=1)
    res = optimize(lambda x: np.array([1.0, 1.0]), uniform5, cfg)
    assert res.trace.iterations_run == 5
    assert res.trace.termination is Termination.MAX_SAME
    assert len(res.trace.best) == 5


def test_max_it_one():
    cfg = OptimizerConfig(population_size=4, max_iterations=1, max_same=1, seed=0)
    res = optimize(convex, uniform5, cfg)
    assert res.trace.iterations_run == 1 and len(res.trace.best) == 1
    assert res.trace.termination is Termination.MAX_IT


def test_convex_best_inside_pareto_set():
    # dense grid oracle: objectives trade off exactly on [-1, 1]
    grid = np.linspace(-5, 5, 100001)
    f = np.stack([(grid - 1) ** 2, (grid + 1) ** 2], axis=1)
    nd = [x for x, v in zip(grid[::100], f[::100]) if not np.any(np.all(f <= v, 1) & np.any(f < v, 1))]
    assert min(nd) >= -1.0 - 1e-9 and max(nd) <= 1.0 + 1e-9

    cfg = OptimizerConfig(population_size=20, max_iterations=200, seed=0)
    res = optimize(convex, uniform5, cfg)
    assert -1.05 <= res.best.params[0] <= 1.05
    # the x tolerance propagated to the objectives: (1.05 + 1)^2
    assert np.all(res.best.objectives <= 2.05 ** 2)


def test_optimize_is_deterministic_and_thread_independent():
    cfg = OptimizerConfig(population_size=10, max_iterations=15, seed=9)
    r1 = optimize(convex, uniform5, cfg)
    r2 = optimize(convex, uniform5, cfg)
    r3 = optimize(convex, uniform5, cfg, threads=3)
    for other in (r2, r3):
        assert [v.tobytes() for v in r1.trace.best] == [v.tobytes() for v in other.trace.best]
        assert [c.params.tobytes() for c in r1.population] == [c.params.tobytes() for c in other.population]


def test_best_not_dominated_by_final_population():
    cfg = OptimizerConfig(population_size=10, max_iterations=10, seed=2)
    res = optimize(lambda x: np.array([x[0] ** 2, (x[0] - 2) ** 2, abs(x[1])]),
                   lambda rng: rng.normal(size=2), cfg)
    assert not any(dominates(c.objectives, res.best.objectives) for c in res.population)


def test_initial_candidates_and_repair_are_used():
    seen = []
    cfg = OptimizerConfig(population_size=4, max_iterations=2, max_same=2, seed=0)

    def repair(x):
        seen.append(x)
        return np.clip(x, -1, 1)

    res = optimize(convex, uniform5, cfg, repair=repair, initial=[np.array([0.0])])
    assert len(seen) == 8
    assert res.best.objectives[0] <= 1.0


def test_sampler_failure_reports_iteration():
    calls = {"n": 0}

    def sampler(rng):
        calls["n"] += 1
        if calls["n"] > 4:
            raise RuntimeError("exhausted")
        return rng.uniform(-1, 1, 1)

    cfg = OptimizerConfig(population_size=4, max_iterations=3, max_same=3, seed=0)
    with pytest.raises(EvaluationError, match="iteration=0"):
        optimize(convex, sampler, cfg)


def test_non_finite_objective_is_fatal():
    cfg = OptimizerConfig(population_size=3, max_iterations=3, max_same=3, seed=0)
    with pytest.raises(EvaluationError, match="non-finite"):
        optimize(lambda x: np.array([np.inf, 0.0]), uniform5, cfg)


@pytest.mark.parametrize("kw", [
    {"population_size": 1},
    {"max_iterations": 0},
    {"max_same": 0},
    {"max_same": 6, "max_iterations": 5},
    {"seed": -1},
    {"seed": 2**64},
    {"kappa": 0.0},
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        OptimizerConfig(**kw)


def test_trace_jsonl(tmp_path):
    cfg = OptimizerConfig(population_size=4, max_iterations=3, max_same=3, seed=0)
    res = optimize(convex, uniform5, cfg)
    path = tmp_path / "t.jsonl"
    res.trace.to_jsonl(path)
    lines = path.read_text().splitlines()
    assert len(lines) == res.trace.iterations_run


def test_streams_are_keyed():
    a = stream(1, 0, 1).random(3)
    assert np.array_equal(a, stream(1, 0, 1).random(3))
    assert not np.array_equal(a, stream(1, 0, 2).random(3))
    assert not np.array_equal(a, stream(1, 1, 1).random(3))
    assert derive_seed(4, 1, 2) == derive_seed(4, 1, 2) != derive_seed(4, 2, 1)
    assert 0 <= derive_seed(4, 1) < 2**64
