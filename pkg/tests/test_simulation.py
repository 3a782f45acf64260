import math

import numpy as np
import pytest
from scipy.stats import norm

from mlrperm import _rng
from mlrperm.cluster import ClusterStructure, Scenario
from mlrperm.errors import ConfigError
from mlrperm.simulation import (
    ANTICONSERVATIVE,
    CONSERVATIVE,
    EXPECTED,
    MATCHES,
    TABLE_ROWS,
    Method,
    SimConfig,
    SimResult,
    classify,
    compare_methods,
    configs_from_json,
    generate_dataset,
    layout,
    run_scenario,
    table_configs,
)


class TestConfig:
    def test_defaults(self):
        c = SimConfig()
        assert (c.n_per_group, c.singleton_fraction, c.alpha, c.sigma_u, c.sigma_e) == (20, 0.5, 0.05, 1.0, 1.0)
        assert (c.beta0, c.beta1, c.beta2) == (0.0, 1.0, 0.0)

    @pytest.mark.parametrize(
        "kw",
        [{"beta2": 0.3}, {"alpha": 0.0}, {"alpha": 1.0}, {"S": 0}, {"B": 0}, {"error_dist": "cauchy"},
         {"scenario": "nested"}, {"method": "lme"}, {"sigma_e": 0.0},
         {"scenario": "homogeneous", "n_per_group": 20, "singleton_fraction": 0.45}],
    )
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            SimConfig(**kw)

    def test_from_json_defaults_and_rows(self):
        cfgs = configs_from_json({"defaults": {"S": 10, "B": 20}, "rows": [{"method": "ols_t"}, {"S": 5}]})
        assert [c.S for c in cfgs] == [10, 5] and cfgs[0].B == 20

    def test_from_json_unknown_key(self):
        with pytest.raises(ConfigError, match="row 0"):
            configs_from_json([{"sims": 3}])

    def test_empty(self):
        assert configs_from_json([]) == []
        assert configs_from_json({"rows": []}) == []


class TestLayout:
    def test_homogeneous(self):
        cfg = SimConfig(scenario="homogeneous")
        x2, fam = layout(cfg)
        s = ClusterStructure.from_labels(fam, x2, Scenario.HOMOGENEOUS)
        assert len(s.singletons()) == 20 and len(s.pairs()) == 10
        assert x2.sum() == 20

    def test_heterogeneous(self):
        x2, fam = layout(SimConfig(scenario="heterogeneous"))
        s = ClusterStructure.from_labels(fam, x2, Scenario.HETEROGENEOUS)
        assert len(s.singletons()) == 20 and len(s.pairs()) == 10
        assert all(f.pattern == (0, 1) for f in s.pairs())

    def test_independent(self):
        x2, fam = layout(SimConfig(scenario="independent"))
        assert len(set(fam)) == 40

    def test_total_reading_of_group_size(self):
        x2, _ = layout(SimConfig(n_per_group=10, scenario="heterogeneous"))
        assert len(x2) == 20


class TestGenerate:
    def test_response_variance(self):
        # beta = 0, sigma_u = sigma_e = 1: var(y) = 2 exactly
        cfg = SimConfig(scenario="homogeneous", beta1=0.0)
        ys = np.concatenate([generate_dataset(cfg, _rng.path_rng(1, i)).y for i in range(2500)])
        se = math.sqrt(2 / len(ys)) * 2 * math.sqrt(1.5)  # generous: pairs are correlated
        assert abs(ys.var() - 2.0) <= 3 * se

    def test_family_correlation(self):
        cfg = SimConfig(scenario="homogeneous", beta1=0.0, sigma_u=3.0)
        a, b = [], []
        for i in range(400):
            d = generate_dataset(cfg, _rng.path_rng(2, i))
            s = ClusterStructure.from_labels(d.family_id, d.x2, Scenario.HOMOGENEOUS)
            for f in s.pairs():
                a.append(d.y[f.members[0]])
                b.append(d.y[f.members[1]])
        assert np.corrcoef(a, b)[0, 1] > 0.8  # 9 / 10 in the limit

    def test_no_cluster_effect(self):
        cfg = SimConfig(scenario="homogeneous", beta1=0.0, sigma_u=0.0)
        a, b = [], []
        for i in range(400):
            d = generate_dataset(cfg, _rng.path_rng(3, i))
            s = ClusterStructure.from_labels(d.family_id, d.x2, Scenario.HOMOGENEOUS)
            for f in s.pairs():
                a.append(d.y[f.members[0]])
                b.append(d.y[f.members[1]])
        assert abs(np.corrcoef(a, b)[0, 1]) < 4 / math.sqrt(len(a))

    def test_skewed_errors(self):
        cfg = SimConfig(sigma_u=0.0, beta1=0.0, error_dist="exponential")
        ys = np.concatenate([generate_dataset(cfg, _rng.path_rng(4, i)).y for i in range(500)])
        assert abs(ys.mean()) < 0.05
        assert ((ys - ys.mean()) ** 3).mean() > 1.0


class TestClassify:
    def test_three_outcomes(self):
        assert classify(0.05, (0.04, 0.06)) == MATCHES
        assert classify(0.05, (0.06, 0.09)) == ANTICONSERVATIVE
        assert classify(0.05, (0.01, 0.04)) == CONSERVATIVE

    def test_result_invariant(self):
        with pytest.raises(ValueError):
            SimResult(0.2, (0.0, 0.1), MATCHES)


class TestRunScenario:
    def test_deterministic_across_jobs(self):
        cfg = SimConfig(scenario="heterogeneous", method="correct_permutation", S=24, B=99, seed=5)
        a = run_scenario(cfg)
        b = run_scenario(cfg, n_jobs=4)
        assert a == b

    def test_single_row_compare_equals_run(self):
        cfg = SimConfig(scenario="homogeneous", method="naive_permutation", S=10, B=49, seed=1)
        assert compare_methods([cfg]) == [run_scenario(cfg)]

    def test_rows_in_order_with_labels(self):
        cfgs = table_configs(S=3, B=19, seed=2)
        out = compare_methods(cfgs)
        assert [r.label for r in out] == [c.name for c in cfgs]
        assert out[2].label == "lm homogeneous"
        assert len(TABLE_ROWS) == len(EXPECTED) == 8

    def test_failed_row_is_reported(self):
        cfg = SimConfig(S=2, B=5, seed=0, n_per_group=2, scenario="independent")
        bad = SimConfig(S=2, B=5, seed=0, n_per_group=2, scenario="heterogeneous", singleton_fraction=0.0)
        out = compare_methods([cfg, bad])
        assert len(out) == 2
        assert out[1].error is not None or out[1].classification != "error"

    def test_rate_matches_alpha_for_ols_without_clustering(self):
        cfg = SimConfig(scenario="independent", method="ols_t", S=3000, sigma_u=0.0, seed=11)
        r = run_scenario(cfg, n_jobs=4)
        assert r.ci[0] <= 0.05 <= r.ci[1]

    def test_methods_agree_without_cluster_effect(self):
        rates = []
        for m in Method:
            cfg = SimConfig(scenario="homogeneous", method=m, S=300, B=199, sigma_u=0.0, seed=21)
            rates.append(run_scenario(cfg, n_jobs=4))
        for a in rates:
            for b in rates:
                # two-proportion z-test at 0.001
                p = (a.rejections + b.rejections) / (a.S + b.S)
                se = math.sqrt(max(p * (1 - p), 1e-12) * (1 / a.S + 1 / b.S))
                assert abs(a.rejection_rate - b.rejection_rate) <= norm.ppf(0.9995) * se + 1e-12

    def test_different_seeds_within_binomial_error(self):
        a = run_scenario(SimConfig(method="ols_t", scenario="homogeneous", S=1500, seed=1), n_jobs=4)
        b = run_scenario(SimConfig(method="ols_t", scenario="homogeneous", S=1500, seed=2), n_jobs=4)
        p = (a.rejections + b.rejections) / 3000
        se = math.sqrt(p * (1 - p) * (2 / 1500))
        assert abs(a.rejection_rate - b.rejection_rate) <= 3.29 * se

    def test_homogeneous_ols_is_anticonservative(self):
        r = run_scenario(SimConfig(method="ols_t", scenario="homogeneous", S=4000, seed=3), n_jobs=4)
        assert r.classification == ANTICONSERVATIVE and r.rejection_rate <= 0.12

    def test_heterogeneous_ols_is_conservative(self):
        r = run_scenario(SimConfig(method="ols_t", scenario="heterogeneous", S=4000, seed=3), n_jobs=4)
        assert r.classification == CONSERVATIVE
