import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from fasttls.errors import DegenerateInputError, DimensionError
from fasttls.sketch import (
    CombinedTransform,
    CountSketchTransform,
    GaussianTransform,
    apply_combined_left,
    apply_countsketch_left,
    apply_gaussian_left,
    apply_left,
    apply_sampler_left,
    build_row_sampler,
    count_apply_work,
    derive_seed,
    leverage_scores,
    sample_columns,
)

from oracles import gram_schmidt_leverage


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 30), st.integers(1, 60), st.integers(0, 2**40))
def test_countsketch_one_signed_entry_per_column(rows, dim, seed):
    S = CountSketchTransform.draw(rows, dim, seed)
    Phi = S.matrix().toarray()
    assert Phi.shape == (rows, dim)
    assert np.all(np.count_nonzero(Phi, axis=0) == 1)
    assert set(np.unique(Phi[Phi != 0])) <= {-1.0, 1.0}


def test_transforms_are_pure_functions_of_seed():
    a = CountSketchTransform.draw(5, 40, 11)
    b = CountSketchTransform.draw(5, 40, 11)
    assert np.array_equal(a.buckets, b.buckets) and np.array_equal(a.signs, b.signs)
    assert np.array_equal(GaussianTransform.draw(4, 50, 3).matrix(),
                          GaussianTransform.draw(4, 50, 3).matrix())
    M = np.random.default_rng(0).standard_normal((12, 3))
    r1, r2 = build_row_sampler(M, 7, seed=5), build_row_sampler(M, 7, seed=5)
    assert np.array_equal(r1.indices, r2.indices)


def test_derive_seed_separates_labels():
    assert derive_seed(1, "S1") == derive_seed(1, "S1")
    assert derive_seed(1, "S1") != derive_seed(1, "S2")
    assert derive_seed(1, "S1") != derive_seed(2, "S1")
    assert 0 <= derive_seed(-5, "x") < 2**63


def test_countsketch_unbiased():
    m, n, trials = 20, 5, 10_000
    acc = np.zeros((m, m))
    for t in range(trials):
        P = CountSketchTransform.draw(n, m, derive_seed(t, "mc")).matrix().toarray()
        acc += P.T @ P
    assert np.max(np.abs(acc / trials - np.eye(m))) <= 0.05


def test_leverage_sampler_unbiased():
    M = np.random.default_rng(7).standard_normal((6, 2))
    trials = 10_000
    acc = np.zeros((6, 6))
    for t in range(trials):
        R = build_row_sampler(M, 20, seed=derive_seed(t, "mc")).matrix().toarray()
        acc += R.T @ R
    assert np.max(np.abs(acc / trials - np.eye(6))) <= 0.05


def test_sampler_norm_preservation_in_expectation():
    rng = np.random.default_rng(2)
    M = rng.standard_normal((30, 3))
    x = rng.standard_normal(3)
    target = np.sum((M @ x) ** 2)
    vals = [np.sum((apply_sampler_left(build_row_sampler(M, 10, seed=t), M) @ x) ** 2)
            for t in range(10_000)]
    assert abs(np.mean(vals) / target - 1) <= 0.05


def test_subspace_embedding_spot_check():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((200, 5))
    xs = rng.standard_normal((5, 20))
    base = np.linalg.norm(A @ xs, axis=0)
    good = 0
    for t in range(1000):
        SA = apply_countsketch_left(CountSketchTransform.draw(50, 200, t), A)
        ratio = np.linalg.norm(SA @ xs, axis=0) / base
        good += np.all((ratio >= 0.5) & (ratio <= 1.5))
    assert good >= 950


def test_leverage_scores_identity_top():
    M = np.vstack([np.eye(3), np.zeros((4, 3))])
    p = leverage_scores(M)
    assert np.allclose(p, [1 / 3] * 3 + [0] * 4)
    assert np.allclose(leverage_scores(sp.csr_matrix(M)), p)


def test_leverage_scores_orthonormal_columns():
    Q = np.linalg.qr(np.random.default_rng(1).standard_normal((10, 4)))[0]
    assert np.allclose(leverage_scores(Q), np.sum(Q**2, axis=1) / 4)


@pytest.mark.parametrize("seed", range(5))
def test_leverage_scores_match_gram_schmidt(seed):
    M = np.random.default_rng(seed).standard_normal((8, 3))
    p = leverage_scores(M)
    assert p.sum() == pytest.approx(1.0)
    assert np.allclose(p, gram_schmidt_leverage(M), atol=1e-12)
    assert np.allclose(leverage_scores(sp.csr_matrix(M)), p, atol=1e-10)


def test_leverage_scores_rank_deficient_sparse():
    rng = np.random.default_rng(4)
    M = rng.standard_normal((9, 2)) @ rng.standard_normal((2, 4))
    M[[1, 5]] = 0
    assert np.allclose(leverage_scores(sp.csr_matrix(M)), gram_schmidt_leverage(M), atol=1e-8)


def test_leverage_of_zero_matrix_is_degenerate():
    with pytest.raises(DegenerateInputError):
        leverage_scores(np.zeros((3, 2)))
    with pytest.raises(DegenerateInputError):
        leverage_scores(sp.csr_matrix((3, 2)))


def test_sampler_only_hits_leveraged_rows():
    M = np.vstack([np.eye(2), np.zeros((5, 2))])
    R = build_row_sampler(M, 50, seed=1)
    assert set(R.indices) <= {0, 1}
    assert np.allclose(R.probabilities, leverage_scores(M))


def test_sampler_beta_mixture():
    M = np.random.default_rng(0).standard_normal((10, 2))
    R = build_row_sampler(M, 5, beta=0.5, seed=0)
    assert np.all(R.probabilities >= 0.5 * leverage_scores(M) - 1e-15)
    assert R.probabilities.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        build_row_sampler(M, 5, beta=0.0)
    with pytest.raises(ValueError):
        build_row_sampler(M, 0)


def test_sampler_forced_and_uniform_cases():
    M = np.zeros((4, 1))
    M[2, 0] = 5.0
    R = build_row_sampler(M, 1, seed=0)
    assert np.array_equal(apply_sampler_left(R, M), [[5.0]])
    U = np.eye(4)
    R = build_row_sampler(U, 4, seed=3)
    out = apply_sampler_left(R, U)
    assert np.allclose(np.abs(out).sum(axis=1), 1.0)


def test_countsketch_apply_matches_explicit_product():
    rng = np.random.default_rng(5)
    M = sp.random(40, 6, density=0.2, random_state=5, format="csr")
    S = CountSketchTransform.draw(7, 40, 9)
    Phi = np.zeros((7, 40))
    Phi[S.buckets, np.arange(40)] = S.signs
    assert np.allclose(apply_countsketch_left(S, M), Phi @ M.toarray())
    Md = rng.standard_normal((40, 3))
    assert np.allclose(apply_countsketch_left(S, Md), Phi @ Md)


def test_countsketch_identity_and_one_sparse():
    M = np.random.default_rng(0).standard_normal((6, 2))
    assert np.array_equal(apply_countsketch_left(CountSketchTransform.identity(6), M), M)
    E = np.zeros((6, 1))
    E[4, 0] = -2.5
    out = apply_countsketch_left(CountSketchTransform.draw(3, 6, 1), E)
    assert np.count_nonzero(out) == 1 and np.abs(out).max() == 2.5


def test_gaussian_apply_sparse_dense_and_blocks():
    G = GaussianTransform.draw(5, 70, 4)
    M = sp.random(70, 3, density=0.1, random_state=1, format="csr")
    ref = G.matrix() @ M.toarray()
    assert np.allclose(apply_gaussian_left(G, M), ref)
    assert np.allclose(apply_gaussian_left(G, M.toarray(), block=9), ref)
    assert np.array_equal(apply_gaussian_left(G, sp.csr_matrix((70, 3))), np.zeros((5, 3)))
    cols = G.columns([3, 40, 69])
    assert np.array_equal(cols, G.matrix()[:, [3, 40, 69]])
    with pytest.raises(DimensionError):
        G.columns([70])


def test_gaussian_scaling_is_unbiased():
    acc = np.zeros((8, 8))
    for t in range(4000):
        P = GaussianTransform.draw(3, 8, t).matrix()
        acc += P.T @ P
    assert np.max(np.abs(acc / 4000 - np.eye(8))) <= 0.1


def test_combined_transform():
    M = np.random.default_rng(2).standard_normal((30, 4))
    T = CombinedTransform.draw(3, 10, 30, 8)
    assert np.allclose(apply_combined_left(T, M), T.matrix() @ M)
    assert np.allclose(apply_left(T, np.zeros((30, 4))), 0)
    ident = CombinedTransform(CountSketchTransform.identity(30), GaussianTransform.draw(3, 30, 1))
    assert np.allclose(apply_left(ident, M), apply_gaussian_left(ident.outer, M))
    with pytest.raises(DimensionError):
        CombinedTransform(CountSketchTransform.identity(5), GaussianTransform.draw(2, 6, 0))


def test_sample_columns_sparse_and_dense():
    M = np.random.default_rng(3).standard_normal((5, 8))
    R = build_row_sampler(M.T, 4, seed=2)
    dense = sample_columns(R, M)
    assert np.allclose(dense, (R.matrix() @ M.T).T)
    assert np.allclose(sample_columns(R, sp.csr_matrix(M)).toarray(), dense)


def test_apply_rejects_mismatched_operands():
    with pytest.raises(DimensionError):
        apply_left(CountSketchTransform.draw(2, 5, 0), np.zeros((4, 1)))
    with pytest.raises(TypeError):
        apply_left(object(), np.zeros((4, 1)))


def test_countsketch_work_is_nnz():
    M = sp.random(500, 4, density=0.05, random_state=0, format="csr")
    with count_apply_work() as work:
        apply_countsketch_left(CountSketchTransform.draw(10, 500, 0), M)
    assert work.total == M.nnz
    assert work.by_op == {"countsketch": M.nnz}
