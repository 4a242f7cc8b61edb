import math

import numpy as np
import pytest

from ppca_quotient.errors import ConfigurationError, InvalidInputError
from ppca_quotient.lab import (
    ExperimentConfig,
    continuity_diagnostic,
    empirical_covariance_error,
    estimate_sup_ratio,
    project_off_C,
    run_consistency_experiment,
    wald_decay_diagnostic,
    weak_lln_diagnostic,
)
from ppca_quotient.model import GeneratorSpec, PpcaParams, log_density, random_params, sample_iid
from ppca_quotient.quotient import IdentifiedSet, distance_to_C
from ppca_quotient.rng import child_seed, make_rng

SUP_CFG = ExperimentConfig(
    p=4, q=1, theta0_spec={"random": {"seed": 42}}, n_grid=(1000, 10_000, 100_000), eta=0.5, master_seed=42
)


class TestConfig:
    def test_validation(self):
        base = {"p": 3, "q": 1, "theta0_spec": {"random": {"seed": 0}}}
        for bad in ({"q": 3}, {"n_grid": (10, 5)}, {"reps": 0}, {"eta": 0.0}, {"n_grid": ()}):
            with pytest.raises(ConfigurationError):
                ExperimentConfig(**{**base, **bad})
        with pytest.raises(ConfigurationError):
            ExperimentConfig(p=3, q=1, theta0_spec={"w": [[1.0], [0.0]], "sigma2": 1.0})

    def test_reference_theta0(self):
        th = SUP_CFG.theta0()
        np.testing.assert_allclose(th.w[:, 0], [0.3047, -1.0400, 0.7505, 0.9406], atol=1e-4)
        assert th.sigma2 == 1.0

    def test_threads_do_not_affect_equality(self):
        a = ExperimentConfig(p=3, q=1, theta0_spec={"random": {"seed": 0}}, threads=1)
        b = ExperimentConfig(p=3, q=1, theta0_spec={"random": {"seed": 0}}, threads=4)
        assert a == b


class TestConsistency:
    def test_isotropic_truth_shrinks(self):
        cfg = ExperimentConfig(
            p=3, q=1, theta0_spec={"w": [[0.0], [0.0], [0.0]], "sigma2": 1.0}, n_grid=(100, 10_000), reps=10
        )
        med = run_consistency_experiment(cfg).medians("d_quotient")
        assert med[-1] < med[0]

    def test_deterministic_and_thread_independent(self):
        kw = dict(p=4, q=2, theta0_spec={"random": {"seed": 1}}, n_grid=(50, 500), reps=6, master_seed=9)
        a = run_consistency_experiment(ExperimentConfig(**kw))
        b = run_consistency_experiment(ExperimentConfig(**kw, threads=3))
        assert a.rows == b.rows
        assert a.summary() == b.summary()

    def test_small_reference_shape(self):
        cfg = ExperimentConfig(
            p=5, q=2, theta0_spec={"random": {"seed": 42}}, n_grid=(100, 1000, 10_000), reps=10, master_seed=42
        )
        rep = run_consistency_experiment(cfg)
        assert len(rep.rows) == 30
        med = rep.medians("d_quotient")
        assert med[0] > med[1] > med[2]
        assert rep.slope() < -0.3
        summary = rep.summary()
        assert "slope" in str(summary)


class TestSupRatio:
    def test_frozen_reference_value(self):
        row = estimate_sup_ratio(SUP_CFG, 10_000, child_seed(42, "sup-ratio", 1))
        assert row.sup_log_ratio < 0
        assert row.h_hat < 1
        assert row.h_hat == pytest.approx(0.9632252665428886, rel=1e-6)
        assert distance_to_C(row.best_theta, IdentifiedSet(SUP_CFG.theta0())) >= 0.5 * (1 - 1e-9)

    def test_sup_dominates_probe(self):
        ident = IdentifiedSet(SUP_CFG.theta0())
        rng = make_rng(4)
        w = SUP_CFG.theta0().w + rng.standard_normal((4, 1))
        probe = project_off_C(w, 1.2, ident, 0.5)
        seed = 77
        row = estimate_sup_ratio(SUP_CFG, 1000, seed, probes=[probe])
        from ppca_quotient.model import log_likelihood_ratio, sample

        data = sample(SUP_CFG.theta0(), 1000, SUP_CFG.generator, seed)
        assert row.sup_log_ratio >= log_likelihood_ratio(data, probe, SUP_CFG.theta0()) - 1e-9

    def test_probe_inside_eta_ball_rejected(self):
        with pytest.raises(InvalidInputError):
            estimate_sup_ratio(SUP_CFG, 100, 1, probes=[SUP_CFG.theta0()])

    def test_projection_reaches_eta(self, rng):
        th0 = random_params(4, 2, 3)
        ident = IdentifiedSet(th0)
        for _ in range(20):
            w = th0.w + 0.01 * rng.standard_normal((4, 2))
            proj = project_off_C(w, th0.sigma2 + 0.001, ident, 0.5)
            assert distance_to_C(proj, ident) == pytest.approx(0.5, rel=1e-9)
        assert project_off_C(th0.w, 0.1, ident, 5.0) is None


class TestWald:
    def test_variance_path(self):
        th = random_params(6, 2, 0)
        x = sample_iid(th, 1, 5).rows[0]
        rows = wald_decay_diagnostic(th, [10.0**k for k in range(7)], x)
        ld = [r["log_density"] for r in rows]
        assert all(b < a for a, b in zip(ld, ld[1:]))
        assert rows[0]["log_density"] == float(log_density(x, th))
        for r in rows:
            assert r["log_density"] <= r["gaussian_bound"] + 1e-12
            assert r["logdet_bound"] <= r["spectral_bound"] + 1e-12 or r["sigma2"] < 1

    def test_joint_path_decreases(self):
        th = random_params(5, 1, 2)
        rows = wald_decay_diagnostic(th, [1.0, 10.0, 100.0], np.ones(5), mode="joint")
        assert rows[2]["log_density"] < rows[0]["log_density"]

    def test_bad_grid(self):
        th = random_params(3, 1, 0)
        with pytest.raises(InvalidInputError):
            wald_decay_diagnostic(th, [1.0, 0.5], np.zeros(3))
        with pytest.raises(InvalidInputError):
            wald_decay_diagnostic(th, [1.0], np.zeros(3), mode="other")


class TestContinuity:
    def test_reference_instance(self):
        # x and E come from the same seed streams as the wald-diagnostics command
        th0 = random_params(4, 2, 42)
        x = sample_iid(th0, 1, child_seed(42, "wald-x")).rows[0]
        rows = continuity_diagnostic(th0, 10_000, x, seed=child_seed(42, "continuity"))
        last = rows[-1]
        assert last["i"] == 10_000
        assert last["density_gap"] < 1e-6
        assert last["param_distance"] > 0.1
        d = [r["distance_to_C"] for r in rows[5:]]
        assert all(b < a for a, b in zip(d, d[1:]))

    def test_q1_uses_reflection(self):
        th0 = random_params(4, 1, 42)
        rows = continuity_diagnostic(th0, 10_000, np.full(4, 0.3))
        assert rows[-1]["log_density_gap"] < 1e-3
        assert rows[-1]["param_distance"] > 0.1

    def test_identity_rotation_converges(self):
        th0 = random_params(4, 2, 42)
        rows = continuity_diagnostic(th0, 10_000, np.zeros(4), rotate=False)
        assert rows[-1]["density_gap"] < 1e-6
        assert rows[-1]["param_distance"] < 1e-3


class TestWeakLln:
    def cfg(self, m):
        return ExperimentConfig(
            p=4, q=1, theta0_spec={"random": {"seed": 3}}, generator=GeneratorSpec("m_dependent", m), master_seed=5
        )

    def test_on_identified_set(self):
        cfg = self.cfg(5)
        rows = weak_lln_diagnostic(cfg, cfg.theta0(), [1000, 10_000])
        assert all(r["mean"] == 0.0 for r in rows)

    def test_off_set_mean_and_variance(self):
        cfg5, cfg0 = self.cfg(5), self.cfg(0)
        other = PpcaParams(cfg5.theta0().w * 1.3, 1.4)
        r5 = weak_lln_diagnostic(cfg5, other, [1000, 100_000])
        r0 = weak_lln_diagnostic(cfg0, other, [1000, 100_000])
        assert r5[1]["var_of_mean"] < r5[0]["var_of_mean"]
        se = math.hypot(r5[1]["stderr"], r0[1]["stderr"])
        assert abs(r5[1]["mean"] - r0[1]["mean"]) < 3 * se
        assert r5[1]["mean"] < 0

    def test_needs_dependent_generator(self):
        cfg = ExperimentConfig(p=3, q=1, theta0_spec={"random": {"seed": 0}})
        with pytest.raises(ConfigurationError):
            weak_lln_diagnostic(cfg, cfg.theta0(), [10])


def test_empirical_covariance_error_lln():
    th = random_params(4, 2, 0)
    assert empirical_covariance_error(th, sample_iid(th, 100_000, 1)) < 0.05
