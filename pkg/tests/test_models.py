import numpy as np
import pytest

from calfmetrics import models
from calfmetrics.errors import RankDeficient, ShapeError, VarianceNotIdentifiable
from calfmetrics.models.gbm import _Tree


class TestOls:
    def test_exact_linear_recovery(self):
        age = np.arange(1.0, 11.0).reshape(-1, 1)
        y = 2.0 * age[:, 0] + 1.0
        fit = models.ols_fit(age, y)
        assert fit.intercept == pytest.approx(1.0, abs=1e-10)
        assert fit.coefficients[0] == pytest.approx(2.0, abs=1e-10)

    def test_constant_target(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(20, 3))
        fit = models.ols_fit(X, np.full(20, 7.25))
        assert fit.intercept == pytest.approx(7.25, abs=1e-10)
        np.testing.assert_allclose(fit.coefficients, 0.0, atol=1e-10)

    def test_duplicated_column_rank_deficient(self):
        rng = np.random.default_rng(1)
        base = rng.normal(size=(20, 2))
        X = np.hstack([base, base[:, :1]])
        with pytest.raises(RankDeficient):
            models.ols_fit(X, rng.normal(size=20))

    def test_too_few_rows(self):
        with pytest.raises(ShapeError):
            models.ols_fit(np.eye(3), np.ones(3))

    def test_residuals_orthogonal_to_columns(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            X = rng.normal(size=(30, 4))
            y = rng.normal(size=30)
            fit = models.ols_fit(X, y)
            resid = y - models.predict(fit, X)
            scale = np.linalg.norm(y)
            for col in range(4):
                assert abs(resid @ X[:, col]) / scale < 1e-8

    def test_intercept_shift_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            X = rng.normal(size=(25, 3))
            y = rng.normal(size=25)
            c = rng.uniform(-100, 100)
            a = models.ols_fit(X, y)
            b = models.ols_fit(X, y + c)
            assert b.intercept - a.intercept == pytest.approx(c, abs=1e-9)
            np.testing.assert_allclose(a.coefficients, b.coefficients, atol=1e-9)


class TestGbm:
    def test_zero_estimators_predicts_mean(self):
        X = np.arange(8.0).reshape(-1, 1)
        y = np.array([1.0, 2, 3, 4, 5, 6, 7, 8])
        model = models.gbm_fit(X, y, models.GbmHyperParams(n_estimators=0))
        np.testing.assert_allclose(model.predict(X), 4.5)

    def test_hand_traced_single_stump(self):
        # base = 5, gradients (5,5,-5,-5); the separating split gives
        # leaf weights -G/(H+0): left -10/2 = -5, right +10/2 = +5
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0.0, 0.0, 10.0, 10.0])
        hyper = models.GbmHyperParams(
            learning_rate=1.0, n_estimators=1, l1_alpha=0.0, l2_lambda=0.0, max_depth=1
        )
        model = models.gbm_fit(X, y, hyper)
        np.testing.assert_allclose(model.predict(X), y)
        tree = model.trees[0]
        assert sorted(tree.value[tree.feature < 0]) == [-5.0, 5.0]

    def test_huge_lambda_shrinks_to_mean(self):
        # leaf weight |w| = |G|/(H+lam) <= n*max|resid|/lam, so lambda 1e6
        # pins every prediction to the training mean
        rng = np.random.default_rng(4)
        X = rng.normal(size=(60, 3))
        y = rng.uniform(0, 10, 60)
        hyper = models.GbmHyperParams(
            learning_rate=0.9, n_estimators=20, l2_lambda=1e6
        )
        model = models.gbm_fit(X, y, hyper)
        assert np.abs(model.predict(X) - y.mean()).max() < 1e-3
        per_round_bound = 0.9 * len(y) * np.abs(y - y.mean()).max() / 1e6
        deltas = np.abs(np.diff(np.sqrt(model.train_losses)))
        assert (deltas <= per_round_bound + 1e-15).all()

    def test_training_loss_non_increasing(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(50, 4))
        y = rng.normal(size=50)
        model = models.gbm_fit(
            X, y, models.GbmHyperParams(learning_rate=0.3, n_estimators=60)
        )
        losses = np.array(model.train_losses)
        assert (np.diff(losses) <= 1e-12).all()

    def test_interpolates_distinct_rows(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(40, 2))
        y = rng.uniform(-5, 5, 40)
        hyper = models.GbmHyperParams(
            learning_rate=1.0, n_estimators=50, max_depth=50
        )
        model = models.gbm_fit(X, y, hyper)
        rmse = np.sqrt(np.mean((model.predict(X) - y) ** 2))
        assert rmse < 1e-6

    def test_prediction_is_additive_over_hand_built_trees(self):
        stump1 = _Tree(
            feature=np.array([0, -1, -1]),
            threshold=np.array([1.5, 0.0, 0.0]),
            left=np.array([1, -1, -1]),
            right=np.array([2, -1, -1]),
            value=np.array([0.0, -2.0, 4.0]),
        )
        stump2 = _Tree(
            feature=np.array([1, -1, -1]),
            threshold=np.array([0.0, 0.0, 0.0]),
            left=np.array([1, -1, -1]),
            right=np.array([2, -1, -1]),
            value=np.array([0.0, 10.0, 20.0]),
        )
        model = models.GbmModel(
            base_score=100.0,
            trees=[stump1, stump2],
            hyper=models.GbmHyperParams(learning_rate=0.5),
        )
        X = np.array([[1.0, -1.0], [2.0, 3.0]])
        # row 0: 100 + 0.5*(-2 + 10) = 104; row 1: 100 + 0.5*(4 + 20) = 112
        np.testing.assert_allclose(model.predict(X), [104.0, 112.0])

    def test_max_depth_respected(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(80, 3))
        y = rng.normal(size=80)
        for depth in (1, 2, 4):
            model = models.gbm_fit(
                X, y, models.GbmHyperParams(n_estimators=5, max_depth=depth)
            )
            assert all(t.depth() <= depth for t in model.trees)

    def test_deterministic(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(30, 3))
        y = rng.normal(size=30)
        m1 = models.gbm_fit(X, y, models.GbmHyperParams(n_estimators=10))
        m2 = models.gbm_fit(X, y, models.GbmHyperParams(n_estimators=10))
        np.testing.assert_array_equal(m1.predict(X), m2.predict(X))


class TestGbmRandomSearch:
    def _step_data(self, seed=0, n=120):
        rng = np.random.default_rng(seed)
        X = rng.uniform(0, 10, size=(n, 2))
        y = 20.0 + 30.0 * (X[:, 0] > 5) + rng.normal(0, 0.5, n)
        groups = np.repeat(np.arange(n // 6), 6)[:n]
        return X, y, groups

    def test_single_iteration_returns_the_draw(self):
        X, y, groups = self._step_data()
        hyper = models.gbm_random_search(X, y, groups, iterations=1, seed=3)
        assert isinstance(hyper, models.GbmHyperParams)

    def test_same_seed_same_selection(self):
        X, y, groups = self._step_data()
        space = models.GbmSearchSpace(n_estimators=(50, 200))
        h1 = models.gbm_random_search(X, y, groups, space, iterations=5, seed=11)
        h2 = models.gbm_random_search(X, y, groups, space, iterations=5, seed=11)
        assert h1 == h2

    def test_beats_ols_on_step_function(self):
        X, y, groups = self._step_data(seed=9)
        space = models.GbmSearchSpace(n_estimators=(50, 400))
        hyper = models.gbm_random_search(X, y, groups, space, iterations=8, seed=1)
        # rebuild the inner split the search used to compare fairly
        rng = np.random.default_rng(1)
        distinct = np.unique(groups)
        order = rng.permutation(len(distinct))
        n_test = min(max(1, round(0.2 * len(distinct))), len(distinct) - 1)
        test_groups = set(distinct[order[:n_test]].tolist())
        test_mask = np.array([g in test_groups for g in groups])
        gbm = models.gbm_fit(X[~test_mask], y[~test_mask], hyper)
        ols = models.ols_fit(X[~test_mask], y[~test_mask])
        rmse_gbm = np.sqrt(np.mean((gbm.predict(X[test_mask]) - y[test_mask]) ** 2))
        rmse_ols = np.sqrt(np.mean((ols.predict(X[test_mask]) - y[test_mask]) ** 2))
        assert rmse_gbm <= rmse_ols

    def test_needs_two_groups(self):
        X = np.zeros((10, 1))
        with pytest.raises(ShapeError):
            models.gbm_random_search(X, np.zeros(10), np.zeros(10, dtype=int))


def simulate_lmm(rng, n_calves, per_calf, sigma_u, sigma_e, beta=(50.0, 2.0)):
    rows = n_calves * per_calf
    X = rng.uniform(0, 10, size=(rows, 1))
    calf_ids = np.repeat([f"c{i}" for i in range(n_calves)], per_calf)
    intercepts = rng.normal(0, sigma_u, n_calves)
    y = beta[0] + beta[1] * X[:, 0]
    y = y + np.repeat(intercepts, per_calf) + rng.normal(0, sigma_e, rows)
    return X, y, calf_ids


class TestLmm:
    def test_within_calf_constant_gives_anova_blups(self):
        # intercept-only, balanced 4 calves x 5 obs, zero within-calf noise:
        # all variance is between calves, BLUPs approach calf mean - grand mean
        calf_means = np.array([10.0, 14.0, 6.0, 12.0])
        y = np.repeat(calf_means, 5)
        X = np.zeros((20, 0))
        calf_ids = np.repeat([f"c{i}" for i in range(4)], 5)
        fit = models.lmm_fit(X, y, calf_ids)
        grand = calf_means.mean()
        assert fit.sigma_e2 < 1e-6
        for i, m in enumerate(calf_means):
            assert fit.blup[f"c{i}"] == pytest.approx(m - grand, abs=1e-6)

    def test_matches_balanced_anova_estimators(self):
        rng = np.random.default_rng(10)
        n_calves, per = 12, 6
        y = np.repeat(rng.normal(0, 3.0, n_calves), per) + rng.normal(
            0, 1.0, n_calves * per
        )
        calf_ids = np.repeat([f"c{i}" for i in range(n_calves)], per)
        fit = models.lmm_fit(np.zeros((len(y), 0)), y, calf_ids)
        groups = y.reshape(n_calves, per)
        ssw = ((groups - groups.mean(axis=1, keepdims=True)) ** 2).sum()
        ssb = per * ((groups.mean(axis=1) - y.mean()) ** 2).sum()
        msw = ssw / (len(y) - n_calves)
        msb = ssb / (n_calves - 1)
        assert msb > msw  # interior solution this seed
        assert fit.sigma_e2 == pytest.approx(msw, rel=1e-6)
        assert fit.sigma_u2 == pytest.approx((msb - msw) / per, rel=1e-6)

    def test_no_calf_effect_shrinks_sigma_u(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(200, 2))
        y = 5.0 + X @ np.array([1.0, -2.0]) + rng.normal(0, 1.0, 200)
        calf_ids = np.repeat([f"c{i}" for i in range(20)], 10)
        fit = models.lmm_fit(X, y, calf_ids)
        assert fit.sigma_u2 <= 0.05 * fit.sigma_e2

    def test_recovers_simulated_variances(self):
        rng = np.random.default_rng(12)
        X, y, calf_ids = simulate_lmm(rng, 50, 10, sigma_u=2.0, sigma_e=1.0)
        fit = models.lmm_fit(X, y, calf_ids)
        assert fit.sigma_u2 == pytest.approx(4.0, rel=0.30)
        assert fit.sigma_e2 == pytest.approx(1.0, rel=0.30)

    def test_theta_zero_reproduces_ols(self):
        rng = np.random.default_rng(13)
        X, y, calf_ids = simulate_lmm(rng, 10, 5, sigma_u=1.0, sigma_e=1.0)
        lmm = models.lmm_fit(X, y, calf_ids, fixed_theta=0.0)
        ols = models.ols_fit(X, y)
        assert lmm.beta[0] == pytest.approx(ols.intercept, abs=1e-8)
        np.testing.assert_allclose(lmm.beta[1:], ols.coefficients, atol=1e-8)

    def test_blup_shrinks_toward_zero(self):
        rng = np.random.default_rng(14)
        X, y, calf_ids = simulate_lmm(rng, 15, 6, sigma_u=3.0, sigma_e=1.0)
        fit = models.lmm_fit(X, y, calf_ids)
        resid = y - (fit.beta[0] + X @ fit.beta[1:])
        for i in range(15):
            rbar = resid[np.asarray(calf_ids) == f"c{i}"].mean()
            assert abs(fit.blup[f"c{i}"]) <= abs(rbar) + 1e-12

    def test_single_calf_rejected(self):
        X = np.random.default_rng(15).normal(size=(10, 1))
        with pytest.raises(VarianceNotIdentifiable):
            models.lmm_fit(X, np.arange(10.0), ["c0"] * 10)

    def test_unseen_calf_uses_fixed_effects_only(self):
        rng = np.random.default_rng(16)
        X, y, calf_ids = simulate_lmm(rng, 8, 6, sigma_u=2.0, sigma_e=0.5)
        fit = models.lmm_fit(X, y, calf_ids)
        Xnew = rng.normal(size=(3, 1))
        fixed = fit.beta[0] + Xnew @ fit.beta[1:]
        np.testing.assert_allclose(
            models.predict(fit, Xnew, ["ghost"] * 3), fixed
        )
        known = models.predict(fit, Xnew, ["c0"] * 3)
        np.testing.assert_allclose(known, fixed + fit.blup["c0"])

    def test_matches_statsmodels_reml(self):
        sm = pytest.importorskip("statsmodels.api")
        rng = np.random.default_rng(17)
        X, y, calf_ids = simulate_lmm(rng, 20, 8, sigma_u=2.5, sigma_e=1.2)
        fit = models.lmm_fit(X, y, calf_ids)
        ref = sm.MixedLM(
            y, np.hstack([np.ones((len(y), 1)), X]), groups=np.asarray(calf_ids)
        ).fit(reml=True)
        np.testing.assert_allclose(fit.beta, ref.fe_params, rtol=1e-5)
        assert fit.sigma_e2 == pytest.approx(ref.scale, rel=1e-4)
        assert fit.sigma_u2 == pytest.approx(float(np.asarray(ref.cov_re)[0, 0]), rel=1e-4)


class TestSerialization:
    def test_ols_roundtrip(self):
        model = models.OlsModel(1.25, np.array([2.0, -3.5, 0.0]))
        doc = models.model_to_json(model)
        back = models.model_from_json(doc)
        assert models.model_to_json(back) == doc

    def test_gbm_roundtrip_predictions(self):
        rng = np.random.default_rng(18)
        X = rng.normal(size=(40, 3))
        y = rng.normal(size=40)
        model = models.gbm_fit(X, y, models.GbmHyperParams(n_estimators=12))
        back = models.model_from_json(models.model_to_json(model))
        np.testing.assert_array_equal(model.predict(X), back.predict(X))
        assert models.model_to_json(back) == models.model_to_json(model)

    def test_lmm_roundtrip(self):
        rng = np.random.default_rng(19)
        X, y, calf_ids = simulate_lmm(rng, 6, 5, sigma_u=1.0, sigma_e=0.8)
        model = models.lmm_fit(X, y, calf_ids)
        back = models.model_from_json(models.model_to_json(model))
        assert models.model_to_json(back) == models.model_to_json(model)
        np.testing.assert_array_equal(
            models.predict(model, X, calf_ids), models.predict(back, X, calf_ids)
        )

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            models.model_from_json({"kind": "mystery", "version": 1})

    def test_wrong_version_rejected(self):
        with pytest.raises(ValueError):
            models.model_from_json({"kind": "ols", "version": 99})
