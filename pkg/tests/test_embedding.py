import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgbo.embedding import (
    block_basis,
    direct_sparse_tune,
    embedded_basis,
    make_embedding,
    project,
    rembo_tune,
    regularize,
)
from hgbo.hypergraph import DimensionError
from hgbo.simulator import generate_task, perturbed_start
from hgbo.surrogate import ParameterError
from hgbo.tuner import TunerConfig

FAST = dict(inner_iters=10, init_samples=4, candidate_pool=200, gp_restarts=2, outer_iters=2)


def test_hand_example():
    emb = make_embedding(2, 1, matrix=[[2.0], [-2.0]], base_weights=[0.5, 0.5])
    np.testing.assert_array_equal(emb.matrix_reg, [[1.0], [-1.0]])
    np.testing.assert_allclose(project(emb, [0.3]), [0.8, 0.2], atol=1e-15)
    np.testing.assert_array_equal(project(emb, [0.0]), [0.5, 0.5])


def test_rows_have_unit_l1_norm():
    for seed in range(20):
        emb = make_embedding(200, 8, seed=seed)
        assert np.max(np.abs(np.abs(emb.matrix_reg).sum(axis=1) - 1.0)) <= 1e-12


def test_update_stays_in_box():
    rng = np.random.default_rng(0)
    for seed in range(1000):
        emb = make_embedding(30, 4, seed=seed)
        z = rng.uniform(-0.1, 0.1, size=4)
        assert np.max(np.abs(project(emb, z))) <= np.max(np.abs(z)) + 1e-15


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(-3, 3), st.floats(-3, 3))
def test_projection_is_affine(seed, a, b):
    rng = np.random.default_rng(seed)
    emb = make_embedding(12, 3, seed=seed)
    z1, z2 = rng.normal(size=3), rng.normal(size=3)
    lhs = project(emb, a * z1 + b * z2)
    rhs = a * (project(emb, z1) - emb.base_weights) + b * (project(emb, z2) - emb.base_weights) + emb.base_weights
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_construction_errors():
    with pytest.raises(ParameterError):
        make_embedding(5, 0)
    with pytest.raises(ParameterError):
        make_embedding(5, 6)
    with pytest.raises(DimensionError):
        make_embedding(5, 2, matrix=np.ones((4, 2)))
    with pytest.raises(DimensionError):
        project(make_embedding(5, 2), [0.1])
    with pytest.raises(ValueError):
        regularize([[0.0, 0.0], [1.0, 1.0]])


def test_embedding_is_seeded():
    a = make_embedding(50, 5, seed=(1, 2))
    b = make_embedding(50, 5, seed=(1, 2))
    np.testing.assert_array_equal(a.matrix_raw, b.matrix_raw)
    assert not np.array_equal(a.matrix_raw, make_embedding(50, 5, seed=(1, 3)).matrix_raw)


def test_bases():
    B = block_basis(5, [1, 3])
    np.testing.assert_array_equal(B @ [2.0, 3.0], [0, 2.0, 0, 3.0, 0])
    emb = make_embedding(2, 2, seed=0)
    E = embedded_basis(5, [3, 4], emb)
    z = np.array([0.05, -0.02])
    np.testing.assert_allclose((E @ z)[3:], emb.matrix_reg @ z)
    assert not np.any((E @ z)[:3])


@pytest.fixture(scope="module")
def sparse_task():
    return generate_task(num_sentences=10, K=4, depth=5, seed=3, fanout=3, sparse_dims=6, sparse_active=2,
                         sparse_node_rate=0.3)


def test_rembo_freezes_core_in_step_two(sparse_task):
    K = sparse_task.num_features
    w0 = perturbed_start(sparse_task, 0.3, seed=3)
    _, rec = rembo_tune(sparse_task, TunerConfig(**FAST), w0, sparse_dims=6, low_dim=2, restarts=2)
    core = [it for it in rec.iterations if it.stage == "core"]
    for it in core:
        assert not np.any(np.array(it.weights)[4:])
    w1 = np.array(max(core, key=lambda it: it.dev_bleu).weights)
    for it in rec.iterations:
        if it.stage.startswith("sparse"):
            np.testing.assert_array_equal(np.array(it.weights)[:4], w1[:4])
    assert rec.final_dev_bleu >= rec.extra["core_dev_bleu"]
    assert len(rec.extra["embeddings"]) == 2
    assert len(rec.final_weights) == K


def test_low_dim_zero_is_core_only(sparse_task):
    w0 = perturbed_start(sparse_task, 0.3, seed=3)
    _, rec = rembo_tune(sparse_task, TunerConfig(**FAST), w0, sparse_dims=6, low_dim=0)
    assert {it.stage for it in rec.iterations} == {"core"}
    with pytest.raises(ParameterError):
        rembo_tune(sparse_task, TunerConfig(**FAST), w0, sparse_dims=6, low_dim=7)


def test_identity_embedding_matches_direct_search(sparse_task):
    # a square identity embedding reproduces bounded search on the raw sparse coordinates
    cfg = TunerConfig(**FAST)
    w0 = perturbed_start(sparse_task, 0.3, seed=3)
    _, rec = rembo_tune(sparse_task, cfg, w0, sparse_dims=6, low_dim=6, restarts=1, matrix=np.eye(6))
    core = [it for it in rec.iterations if it.stage == "core"]
    w1 = np.array(max(core, key=lambda it: it.dev_bleu).weights)
    _, direct = direct_sparse_tune(sparse_task, cfg, w1, range(4, 10))
    sparse = [it for it in rec.iterations if it.stage == "sparse-0"]
    assert [it.dev_bleu for it in sparse] == direct.dev_trace
    assert [it.weights for it in sparse] == [it.weights for it in direct.iterations]
