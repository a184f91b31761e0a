import numpy as np
import pytest

from onlinesurrogate.models import get_model
from onlinesurrogate.optimize import SolverConfig
from onlinesurrogate.samplers import (
    SamplerConfig,
    lattice_starts,
    random_batch,
    sample_iteration,
    sparsity_starts,
)
from onlinesurrogate.store import EvalStore

BOX = [(-2.0, 2.0), (0.0, 1.0)]


def test_random_batch_in_box(rng):
    X = random_batch(BOX, 1000, rng)
    assert X.shape == (1000, 2)
    assert X[:, 0].min() >= -2 and X[:, 0].max() <= 2
    assert X[:, 1].min() >= 0 and X[:, 1].max() <= 1


def test_random_batch_seeded():
    a = random_batch(BOX, 10, np.random.default_rng(1))
    b = random_batch(BOX, 10, np.random.default_rng(1))
    assert np.array_equal(a, b)


def test_lattice_one_start_per_cell(rng):
    X = lattice_starts(BOX, (4, 5), rng)
    assert X.shape == (20, 2)
    cells = {(int((x + 2) // 1.0), int(y // 0.2)) for x, y in X}
    assert len(cells) == 20


@pytest.mark.parametrize("n_s", [1, 7, 10, 16, 40])
def test_lattice_scalar_distinct_cells(rng, n_s):
    X = lattice_starts([(0, 1), (0, 1)], n_s, rng)
    b = int(np.ceil(np.sqrt(n_s)))
    cells = {(int(x * b), int(y * b)) for x, y in X}
    assert len(X) == n_s and len(cells) == n_s


def test_sparsity_prefers_empty_region(rng):
    existing = rng.uniform(0, 0.5, (200, 2))
    picks = sparsity_starts([(0, 1), (0, 1)], existing, 5, rng)
    assert np.all(np.max(picks, axis=1) > 0.5)


def test_sparsity_picks_spread(rng):
    picks = sparsity_starts([(0, 1), (0, 1)], np.empty((0, 2)), 4, rng, pool_size=2000)
    D = np.sqrt(((picks[:, None] - picks[None]) ** 2).sum(-1))
    np.fill_diagonal(D, np.inf)
    assert D.min() > 0.5


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(strategy="sobol")
    with pytest.raises(ValueError):
        SamplerConfig(strategy="random", n_s=(2, 2))
    with pytest.raises(ValueError):
        SamplerConfig(warm=0)
    assert SamplerConfig(strategy="lattice", n_s=(3, 4)).ensemble_size == 12


def test_traditional_iteration_counts(rng):
    m = get_model("rastrigin2")
    store = EvalStore(2)
    out = sample_iteration(m, store, SamplerConfig(warm=1000, batch_size=300), None, m.spec.bounds, 0, rng)
    assert out.new_evals == 1000 == len(store)
    assert out.traces == []
    assert {r.source for r in store.records} == {"sampler-start"}


def test_directed_iteration_records_solver_steps(rng):
    m = get_model("rosenbrock2")
    store = EvalStore(2)
    cfg = SamplerConfig(directed=True, n_s=8, warm=300)
    out = sample_iteration(m, store, cfg, SolverConfig(), m.spec.bounds, 2, rng)
    assert out.new_evals == len(store) >= 300
    assert len(out.traces) % 8 == 0
    srcs = [r.source for r in store.records]
    assert srcs.count("sampler-start") == len(out.traces)
    assert "solver-step" in srcs
    assert {r.iteration for r in store.records} == {2}
    # every solver probe is stored
    for t in out.traces:
        for x, y in t.evaluations:
            assert store.lookup(x) == y


def test_model_failure_keeps_evaluations(rng):
    calls = []

    def bad(x):
        calls.append(1)
        if len(calls) > 50:
            raise RuntimeError("model crashed")
        return float(np.sum(np.asarray(x) ** 2))

    m = get_model("rosenbrock2")
    m = type(m)(m.spec, bad)
    store = EvalStore(2)
    with pytest.raises(RuntimeError):
        sample_iteration(m, store, SamplerConfig(directed=True, n_s=4, warm=500), None, m.spec.bounds, 0, rng)
    assert len(store) == 50


def test_seeded_iteration_reproducible():
    m = get_model("easom")
    cfg = SamplerConfig(directed=True, n_s=6, warm=200, strategy="lattice")
    stores = []
    for _ in range(2):
        s = EvalStore(2)
        sample_iteration(m, s, cfg, None, m.spec.bounds, 0, np.random.default_rng(9))
        stores.append(s.records)
    assert stores[0] == stores[1]
