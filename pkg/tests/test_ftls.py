import dataclasses

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from fasttls.data import gen_gaussian_family, gen_identity_family, gen_small_gaussian, gen_toy
from fasttls.errors import (
    BoostingError,
    CorruptedStateError,
    DimensionError,
    IrreparableRankError,
)
from fasttls.ftls import (
    FactoredLowRank,
    FtlsConfig,
    boost_seeds,
    coupling_gap,
    draw_sketch,
    estimate_cost,
    estimator_rows,
    evaluate,
    ftls_boosted,
    ftls_solve,
    sketch_sizes,
    split,
)
from fasttls.matrix_core import as_dense, hstack
from fasttls.sketch import CountSketchTransform, GaussianTransform, LeverageSampler
from fasttls.tls_exact import ls_solve, tls_cost

from oracles import naive_evaluate

APPLY_OPS = ("countsketch", "sampler", "gaussian")


def _dense_instance(seed, m=40, n=3, d=2):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((m, n)), rng.standard_normal((m, d))


def test_config_validation():
    for bad in ({"eps": 0.0}, {"eps": 1.0}, {"rho": 0.0}, {"rho": 1.5}, {"delta": 0.0},
                {"mode": "fast"}, {"c1": 0.5}, {"s1_kind": "fft"}):
        with pytest.raises(ValueError):
            FtlsConfig(**bad)
    cfg = FtlsConfig(seed=3)
    assert cfg.with_seed(9).seed == 9 and cfg.seed == 3
    assert cfg.perturbation(10, 5) == pytest.approx(cfg.delta / 50)


def test_sketch_sizes_theory_and_density():
    cfg = FtlsConfig(eps=0.5)
    sizes = sketch_sizes(cfg, m=10_000, n=4, d=1)
    assert sizes["s1"] == 4 * 8 and sizes["s2"] == 4 * 8
    assert sizes["d2"] == 4 * int(np.ceil(8 * np.log(10)))
    assert sizes["d1"] == 5 and not sizes["d_large"]
    small = sketch_sizes(cfg, m=12, n=4, d=1)
    assert small["s1"] == small["s2"] == small["d2"] == 12
    dens = sketch_sizes(FtlsConfig(mode="density", rho=0.3), m=200, n=20, d=1)
    assert dens["s1"] == dens["s2"] == dens["d2"] == 60
    wide = sketch_sizes(FtlsConfig(mode="density", rho=0.1), m=100, n=1, d=50)
    assert wide["d_large"] and wide["d1"] == 6


def test_sizes_override():
    sizes = sketch_sizes(FtlsConfig(sketch_rows=2), m=3, n=2, d=1)
    assert sizes["s1"] == sizes["s2"] == sizes["d2"] == 2


def test_draw_sketch_kinds():
    dense = np.ones((20, 3))
    sparse = sp.csr_matrix(dense)
    assert isinstance(draw_sketch("auto", 5, dense, 1.0, 0), CountSketchTransform)
    assert isinstance(draw_sketch("auto", 5, sparse, 1.0, 0), GaussianTransform)
    assert isinstance(draw_sketch("auto", 5, dense, 1.0, 0, dense_kind="leverage"),
                      LeverageSampler)
    assert isinstance(draw_sketch("leverage", 5, sparse, 1.0, 0), LeverageSampler)
    ident = draw_sketch("gaussian", 20, dense, 1.0, 0)
    assert np.array_equal(ident.matrix().toarray(), np.eye(20))


@pytest.mark.parametrize("seed", range(10))
def test_solution_satisfies_sketched_system(seed):
    A, B = _dense_instance(seed)
    res = ftls_solve(A, B, FtlsConfig(mode="density", rho=0.5, seed=seed))
    s = res.split
    assert np.linalg.norm(s.A_bar @ res.X - s.B_bar) <= 1e-8 * max(np.linalg.norm(s.B_bar), 1)
    assert res.diagnostics.residual <= 1e-8 * max(np.linalg.norm(s.B_bar), 1)
    assert res.cost >= tls_cost(A, B) - 1e-8


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["theory", "density"]))
def test_cost_sandwich(seed, mode):
    inst = gen_small_gaussian(seed, m=25, n=3)
    res = ftls_solve(inst.A, inst.B, FtlsConfig(mode=mode, rho=0.4, seed=seed))
    assert res.cost >= tls_cost(inst.A, inst.B) - 1e-8


def test_consistent_system_has_zero_cost():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((100, 3))
    B = A @ rng.standard_normal((3, 2))
    for seed in range(3):
        assert ftls_solve(A, B, FtlsConfig(mode="density", rho=0.3, seed=seed)).cost <= 1e-6


def test_split_invariants_on_toy():
    inst = gen_toy()
    for seed in range(30):
        res = ftls_solve(inst.A, inst.B, FtlsConfig(sketch_rows=2, seed=seed))
        s = res.split
        used = [j for j in s.pi if j is not None]
        assert len(used) == len(set(used))
        diff = s.A_bar - s.A_bar_unperturbed
        for i in range(s.A_bar.shape[1]):
            if s.pi[i] is None:
                assert np.all(diff[:, i] == 0)
            else:
                assert np.allclose(diff[:, i], s.perturb_delta * s.B_bar[:, s.pi[i]], atol=1e-15)
        bound = s.perturb_delta * np.sqrt(2) * np.linalg.norm(s.B_bar, axis=0).max()
        assert np.linalg.norm(diff) <= bound + 1e-15
        assert np.linalg.norm(diff) <= FtlsConfig().delta


def test_split_full_rank_is_untouched():
    rng = np.random.default_rng(1)
    left = rng.standard_normal((30, 4))
    factors = FactoredLowRank(left, np.eye(4), np.eye(4))
    s = split(factors, 3, 1e-6, seed=0, rows=10)
    assert s.repairs == {} and np.array_equal(s.A_bar, s.A_bar_unperturbed)
    with pytest.raises(ValueError):
        split(factors, 3, 0.0, seed=0, rows=10)


def test_toy_two_rows_mostly_beats_ls():
    inst = gen_toy()
    costs = [ftls_solve(inst.A, inst.B, FtlsConfig(sketch_rows=2, seed=s)).cost
             for s in range(100)]
    assert np.median(costs) < 9
    assert np.mean(np.array(costs) < 9) >= 0.9
    assert min(costs) >= 1 - 1e-8


def test_identity_median_between_tls_and_ls():
    inst = gen_identity_family(10)
    for cfg in (FtlsConfig(), FtlsConfig(mode="density", rho=0.3)):
        med = np.median([ftls_solve(inst.A, inst.B, cfg.with_seed(s)).cost for s in range(50)])
        assert 1 - 1e-8 <= med < 9


def test_density_monotone_on_gaussian_family():
    inst = gen_gaussian_family(10, seed=0)
    med = {}
    for rho in (0.9, 0.1):
        cfg = FtlsConfig(mode="density", rho=rho)
        med[rho] = np.median([ftls_solve(inst.A, inst.B, cfg.with_seed(s)).cost
                              for s in range(50)])
    assert med[0.9] <= med[0.1]


@pytest.mark.parametrize("block_rows", [1, 7, 1024])
def test_evaluate_matches_naive(block_rows):
    A, B = _dense_instance(4, m=30)
    res = ftls_solve(A, B, FtlsConfig(mode="density", rho=0.4, seed=2))
    f = res.factors
    C_hat = as_dense(f.left) @ f.mid @ f.right
    ref = naive_evaluate(C_hat, np.hstack([A, B]), 3, res.X, res.split.repairs,
                         res.split.perturb_delta)
    got = evaluate(f, res.X, res.split.repairs, res.split.perturb_delta, res.C, block_rows)
    assert got == pytest.approx(ref, rel=1e-10, abs=1e-12)


def test_evaluate_replays_repairs_on_sparse():
    inst = gen_toy()
    res = ftls_solve(inst.A, inst.B, FtlsConfig(sketch_rows=2, seed=1, perturb_delta=0.1))
    f = res.factors
    C_hat = as_dense(f.left) @ f.mid @ f.right
    ref = naive_evaluate(C_hat, as_dense(res.C), 2, res.X, res.split.repairs, 0.1)
    assert res.cost == pytest.approx(ref, rel=1e-10, abs=1e-12)
    gap = coupling_gap(f, res.X, res.split.repairs, 0.1)
    assert gap == pytest.approx(naive_evaluate(C_hat, C_hat, 2, res.X, res.split.repairs, 0.1),
                                rel=1e-10, abs=1e-12)


def test_evaluate_rejects_bad_state():
    A, B = _dense_instance(0)
    res = ftls_solve(A, B, FtlsConfig(mode="density", rho=0.5))
    with pytest.raises(CorruptedStateError):
        evaluate(res.factors, res.X, {0: 7}, 1e-3, res.C)
    with pytest.raises(DimensionError):
        evaluate(res.factors, res.X, {}, 1e-3, res.C[:-1])


def test_estimator_is_median_of_unbiased_sketches():
    A, B = _dense_instance(5, m=400)
    res = ftls_solve(A, B, FtlsConfig(mode="density", rho=0.3, seed=0))
    exact = res.cost
    args = (res.factors, res.X, res.split.repairs, res.split.perturb_delta, res.C)
    assert estimator_rows(0.2) == 100
    assert estimate_cost(*args, seed=3) == estimate_cost(*args, seed=3)
    assert abs(estimate_cost(*args, seed=3) / exact - 1) <= 0.2
    full = estimate_cost(*args, rows=400, trials=1, seed=0)
    assert full > 0
    with pytest.raises(ValueError):
        estimate_cost(*args, trials=4)
    with pytest.raises(ValueError):
        estimate_cost(*args, eps_est=1.0)


def test_boosting_picks_lowest_score_deterministically():
    inst = gen_identity_family(5)
    cfg = FtlsConfig(mode="density", rho=0.1, seed=4)
    a = ftls_boosted(inst.A, inst.B, cfg, runs=5)
    b = ftls_boosted(inst.A, inst.B, cfg, runs=5, workers=3)
    assert a.diagnostics.extra["boost_index"] == b.diagnostics.extra["boost_index"]
    assert np.array_equal(a.X, b.X)
    scores = a.diagnostics.extra["boost_scores"]
    assert a.diagnostics.extra["boost_index"] == int(np.argmin(scores))
    assert boost_seeds(4, 5)[0] == 4 and len(set(boost_seeds(4, 5))) == 5
    one = ftls_boosted(inst.A, inst.B, cfg, runs=1)
    assert one.cost == pytest.approx(ftls_solve(inst.A, inst.B, cfg).cost)
    assert a.cost >= tls_cost(inst.A, inst.B) - 1e-8


def test_boosting_error_when_every_run_fails(monkeypatch):
    import fasttls.ftls as mod

    def broken(A, B, cfg):
        raise IrreparableRankError(f"seed {cfg.seed}")

    monkeypatch.setattr(mod, "ftls_solve", broken)
    A, B = _dense_instance(0)
    with pytest.raises(BoostingError) as info:
        ftls_boosted(A, B, FtlsConfig(), runs=3)
    assert len(info.value.errors) == 3
    with pytest.raises(ValueError):
        ftls_boosted(A, B, runs=0)


def test_boosting_survives_partial_failures(monkeypatch):
    import fasttls.ftls as mod

    real = mod.ftls_solve

    def flaky(A, B, cfg):
        if cfg.seed == 4:
            raise IrreparableRankError("first run fails")
        return real(A, B, cfg)

    monkeypatch.setattr(mod, "ftls_solve", flaky)
    inst = gen_identity_family(5)
    res = ftls_boosted(inst.A, inst.B, FtlsConfig(mode="density", rho=0.3, seed=4), runs=3)
    assert res.diagnostics.extra["boost_index"] != 0
    assert res.diagnostics.extra["boost_scores"][0] == np.inf


def test_dimension_checks():
    with pytest.raises(DimensionError):
        ftls_solve(np.zeros((4, 2)), np.zeros((5, 1)))
    with pytest.raises(DimensionError):
        ftls_solve(np.zeros((2, 2)), np.zeros((2, 1)))


def test_same_seed_same_answer():
    inst = gen_identity_family(5)
    cfg = FtlsConfig(mode="density", rho=0.3, seed=11)
    a, b = ftls_solve(inst.A, inst.B, cfg), ftls_solve(inst.A, inst.B, cfg)
    assert np.array_equal(a.X, b.X) and a.cost == b.cost


def test_apply_work_linear_in_nnz():
    nz, work = [], []
    for k in (5, 10, 20, 40):
        inst = gen_identity_family(k)
        cfg = FtlsConfig(mode="density", rho=0.3, seed=1, s1_kind="countsketch",
                         d2_kind="leverage", s2_kind="countsketch")
        res = ftls_solve(inst.A, inst.B, cfg)
        by_op = res.diagnostics.extra["work_by_op"]
        nz.append(hstack(inst.A, inst.B).nnz)
        work.append(sum(by_op.get(op, 0) for op in APPLY_OPS))
    slope = np.polyfit(np.log(nz), np.log(work), 1)[0]
    assert 1 / 1.5 <= slope <= 1.5


def test_diagnostics_record():
    inst = gen_identity_family(5)
    res = ftls_solve(inst.A, inst.B, FtlsConfig(mode="density", rho=0.3))
    d = res.diagnostics.to_dict()
    assert d["method"] == "FTLS" and d["rho"] == 0.3 and d["eps"] is None
    assert set(d["sketch_sizes"]) == {"s1", "s2", "d1", "d2"}
    assert d["wall_time_seconds"] > 0
    lazy = ftls_solve(inst.A, inst.B, dataclasses.replace(FtlsConfig(), evaluate=False))
    assert lazy.cost is None


def test_ls_baseline_is_worse_on_identity():
    inst = gen_identity_family(5)
    assert ls_solve(inst.A, inst.B).cost == pytest.approx(9.0)
