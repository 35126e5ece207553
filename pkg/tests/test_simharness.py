import math

import numpy as np
import pytest
from scipy import stats

from specter.errors import DomainError, ParseError
from specter.matcore import coherence
from specter.simharness import (
    FactorDist,
    FactorExperimentConfig,
    Mechanism,
    PerturbExperimentConfig,
    ResultRow,
    factor_v,
    gen_factor_panel,
    gen_incoherent_lowrank,
    gen_perturbation,
    loglog_slope,
    make_rng,
    rows_to_csv,
    run_factor_experiment,
    run_perturb_experiment,
)


class TestRng:
    def test_streams(self):
        a = make_rng(1, 2, 3).standard_normal(4)
        assert np.array_equal(a, make_rng(1, 2, 3).standard_normal(4))
        assert not np.array_equal(a, make_rng(1, 3, 2).standard_normal(4))
        assert isinstance(make_rng(0).bit_generator, np.random.Philox)


class TestLowRank:
    def test_eigenvalues(self):
        A, V, D = gen_incoherent_lowrank(30, 3, 7.0, 5)
        ev = np.sort(np.linalg.eigvalsh(A))[::-1]
        assert np.abs(ev[:3] - [21.0, 14.0, 7.0]).max() <= 1e-8
        assert np.abs(ev[3:]).max() <= 1e-8
        assert np.allclose(V.T @ V, np.eye(3), atol=1e-12)

    def test_coherence_envelope(self):
        d = 400
        hits = sum(coherence(gen_incoherent_lowrank(d, 3, 1.0, s)[1]) <= 3 * math.log(d) for s in range(100))
        assert hits >= 95

    def test_reproducible(self):
        a = gen_incoherent_lowrank(50, 2, 3.0, 11)[0]
        assert np.array_equal(a, gen_incoherent_lowrank(50, 2, 3.0, 11)[0])

    def test_rank_domain(self):
        with pytest.raises(DomainError):
            gen_incoherent_lowrank(3, 4, 1.0, 0)


class TestPerturbation:
    def test_toeplitz_row_sum_30(self):
        E = gen_perturbation(800, Mechanism("toeplitz", L_prime=7.5, rho=0.5))
        assert np.abs(E).sum(axis=1).max() <= 30.0
        assert np.array_equal(E, E.T)

    def test_toeplitz_d1(self):
        assert np.array_equal(gen_perturbation(1, Mechanism("toeplitz", L_prime=2.5, rho=0.3)), [[2.5]])

    def test_sparse_rows(self):
        m = Mechanism("sparse_rows", s=10, L=3.0)
        E = gen_perturbation(100, m, make_rng(4))
        assert np.array_equal(E, E.T)
        # replay the same stream to recover the unsymmetrised draw
        rng = make_rng(4)
        cols = np.argsort(rng.random((100, 100)), axis=1)[:, :10]
        vals = rng.uniform(0.0, 3.0, size=(100, 10))
        E0 = np.zeros((100, 100))
        np.put_along_axis(E0, cols, vals, axis=1)
        assert np.all((E0 != 0).sum(axis=1) == 10)
        assert E0.min() >= 0 and E0.max() <= 3.0
        assert np.array_equal(0.5 * (E0 + E0.T), E)

    def test_mechanism_validation(self):
        with pytest.raises(DomainError):
            Mechanism("toeplitz", L_prime=1.0, rho=1.0)
        with pytest.raises(DomainError):
            Mechanism("sparse_rows", s=0, L=1.0)
        with pytest.raises(DomainError):
            Mechanism("other")
        with pytest.raises(DomainError):
            gen_perturbation(5, Mechanism("sparse_rows", s=6, L=1.0), 0)


class TestPerturbExperiment:
    def _cfg(self, **kw):
        base = dict(d_grid=(40, 80), mechanism=Mechanism("sparse_rows", s=3, L=1.0), gamma=50.0, replications=2, seed=3)
        base.update(kw)
        return PerturbExperimentConfig(**base)

    def test_rows_and_determinism(self):
        cfg = self._cfg()
        rows = run_perturb_experiment(cfg)
        assert rows == sorted(rows)
        metrics = {r.metric for r in rows}
        assert metrics == {"err", "err_max", "err_max_scaled", "loglog_slope"}
        assert rows_to_csv(rows) == rows_to_csv(run_perturb_experiment(cfg))
        assert rows_to_csv(rows) == rows_to_csv(run_perturb_experiment(cfg, threads=4))
        errs = {(r.d, r.rep): r.value for r in rows if r.metric == "err"}
        mx = {r.d: r.value for r in rows if r.metric == "err_max"}
        assert mx[40] == max(errs[(40, 0)], errs[(40, 1)])

    def test_single_replication(self):
        cfg = self._cfg(replications=1)
        assert rows_to_csv(run_perturb_experiment(cfg)) == rows_to_csv(run_perturb_experiment(cfg))

    def test_gamma_sqrt_d(self):
        cfg = self._cfg(gamma=None, gamma_sqrt_d=400.0)
        assert cfg.gamma_for(100) == pytest.approx(40.0)
        with pytest.raises(DomainError):
            self._cfg(gamma_sqrt_d=400.0)

    def test_from_dict(self):
        cfg = PerturbExperimentConfig.from_dict(
            {"d_grid": [40, 80], "mechanism": {"kind": "toeplitz", "L_prime": 1, "rho": 0.5}, "gamma": 10},
            default_seed=9,
        )
        assert cfg.seed == 9 and cfg.r == 3 and cfg.mechanism.kind == "toeplitz"
        with pytest.raises(ParseError):
            PerturbExperimentConfig.from_dict({"mechanism": {"kind": "toeplitz", "L_prime": 1, "rho": 0.5}, "bogus": 1})
        with pytest.raises(ParseError):
            PerturbExperimentConfig.from_dict({"gamma": 1})
        with pytest.raises(DomainError):
            PerturbExperimentConfig.from_dict({"d_grid": [80, 40], "mechanism": {"kind": "sparse_rows", "s": 1, "L": 1}, "gamma": 1})


def test_loglog_slope():
    ds = [100, 200, 400]
    assert loglog_slope(ds, [d**-0.5 for d in ds]) == pytest.approx(-0.5)
    with pytest.raises(DomainError):
        loglog_slope([1], [1])


def test_csv_format():
    rows = [ResultRow("x", "p", 10, 0, "m", 0.1), ResultRow("x", "p", 10, -1, "m", math.inf)]
    text = rows_to_csv(rows)
    assert text.splitlines()[0] == "experiment,d,param,rep,metric,value"
    assert "x,10,p,0,m,0.10000000000000001" in text and "inf" in text


class TestFactorPanel:
    def test_gaussian_covariance(self):
        cfg = FactorExperimentConfig(d_grid=(6,), dist=FactorDist("mvt", math.inf), r=2)
        rng = make_rng(2)
        X, B, sigma, sigma_u = gen_factor_panel(cfg, 6, 100_000, rng)
        # regenerate the latent draw to check cov(f, u)
        rng = make_rng(2)
        rng.standard_normal((6, 2))
        Z = rng.standard_normal((100_000, 8)) * np.sqrt([1, 1, 5, 5, 5, 5, 5, 5])
        C = np.cov(Z, rowvar=False, bias=True)
        assert np.abs(C - np.diag([1, 1, 5, 5, 5, 5, 5, 5])).max() <= 0.05
        assert np.array_equal(X.values, Z[:, :2] @ B.T + Z[:, 2:])
        assert np.array_equal(sigma, B @ B.T + 5 * np.eye(6))
        assert np.array_equal(sigma_u, 5 * np.eye(6))

    @pytest.mark.parametrize("kind", ["mvt", "iid_t"])
    def test_heavy_tails_same_covariance(self, kind):
        cfg = FactorExperimentConfig(d_grid=(5,), dist=FactorDist(kind, 3.0), r=1)
        X, B, sigma, _ = gen_factor_panel(cfg, 5, 100_000, make_rng(6))
        Y = X.values
        assert np.all(stats.kurtosis(Y, axis=0) > 3)
        # heavy tails make the empirical covariance noisy; check the diagonal loosely
        assert np.allclose(np.diag(np.cov(Y, rowvar=False)), np.diag(sigma), rtol=0.25)

    def test_factor_v(self):
        cfg = FactorExperimentConfig(d_grid=(4,), dist=FactorDist("mvt", math.inf), r=1)
        B = np.ones((4, 1))
        sigma = B @ B.T + 5 * np.eye(4)
        # Gaussian: Var(y_i y_j) = s_ii s_jj + s_ij^2, maximal on the diagonal
        assert factor_v(cfg, B, sigma) == pytest.approx(math.sqrt(2) * 6)
        heavy = FactorExperimentConfig(d_grid=(4,), dist=FactorDist("iid_t", 4.0), r=1)
        assert factor_v(heavy, B, sigma) == math.inf

    def test_factor_v_monte_carlo(self):
        cfg = FactorExperimentConfig(d_grid=(3,), dist=FactorDist("iid_t", 9.0), r=1)
        X, B, sigma, _ = gen_factor_panel(cfg, 3, 400_000, make_rng(12))
        Y = X.values
        prods = (Y[:, :, None] * Y[:, None, :]).reshape(len(Y), -1)
        assert factor_v(cfg, B, sigma) == pytest.approx(math.sqrt(prods.var(axis=0).max()), rel=0.1)

    def test_dist_validation(self):
        with pytest.raises(DomainError):
            FactorDist("mvt", 2.0)
        with pytest.raises(DomainError):
            FactorDist("normal", 5.0)
        assert FactorDist.from_dict({"kind": "mvt", "nu": "inf"}).nu == math.inf


class TestFactorExperiment:
    def _cfg(self, **kw):
        base = dict(d_grid=(30,), dist=FactorDist("iid_t", 5.0), r=2, replications=3, seed=1)
        base.update(kw)
        return FactorExperimentConfig(**base)

    def test_self_ratio(self):
        rows = run_factor_experiment(self._cfg(methods=(1,)))
        ratios = [r.value for r in rows if r.metric.startswith("ratio_") and not r.metric.endswith("_iqr")]
        assert ratios and all(v == 1.0 for v in ratios)

    def test_thread_invariance(self):
        cfg = self._cfg()
        a = rows_to_csv(run_factor_experiment(cfg, threads=1))
        assert a == rows_to_csv(run_factor_experiment(cfg, threads=4))
        params = {r.split(",")[2] for r in a.splitlines()[1:]}
        assert params == {f"iid_t(nu=5);method={m}" for m in (1, 2, 3, 4)}

    def test_n_rule(self):
        assert self._cfg().n_for(100) == 50
        assert self._cfg(n_rule=40).n_for(100) == 40

    def test_from_dict(self):
        cfg = FactorExperimentConfig.from_dict(
            {"d_grid": [20], "dist": {"kind": "iid_t", "nu": 3}, "n_rule": {"fixed": 10}, "methods": [2, 1]}
        )
        assert cfg.n_rule == 10 and cfg.methods == (1, 2)
        with pytest.raises(ParseError):
            FactorExperimentConfig.from_dict({"dist": {"kind": "iid_t", "nu": 3}, "n_rule": "all"})
        with pytest.raises(ParseError):
            FactorExperimentConfig.from_dict({"dist": {"kind": "iid_t", "nu": 3}, "extra": 0})
        with pytest.raises(DomainError):
            FactorExperimentConfig.from_dict({"dist": {"kind": "iid_t", "nu": 3}, "methods": [5]})
