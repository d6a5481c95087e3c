import dataclasses

import numpy as np
import pytest

from epr_alloc.allocation import NodeProfile
from epr_alloc.montecarlo import (ExperimentConfig, compare_plans, prepare, run_experiment,
                                  run_trial)
from epr_alloc.risk import CategoricalLogLoss, QuadraticEmbedding
from epr_alloc.simplex import Distribution


def fixture_config(helpers=(400,), **kw):
    kw.setdefault("trials", 200)
    return ExperimentConfig(QuadraticEmbedding([[0.0], [1.0]]), Distribution.from_probs([0.5, 0.5]),
                            NodeProfile(400, helpers), **kw)


def records_key(report):
    return [(r.trial_id, r.excess_risk, r.phi_dist, r.mass_defect, r.flagged) for r in report.records]


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            fixture_config(plan_source="nope")
        with pytest.raises(ValueError):
            fixture_config(theta_method="nope")
        with pytest.raises(ValueError):
            fixture_config(trials=0)
        with pytest.raises(ValueError):
            fixture_config(plan_source="explicit")
        with pytest.raises(ValueError):
            fixture_config(plan_source="explicit", plan=[[3]])
        with pytest.raises(ValueError):
            fixture_config(plan_source="explicit", plan=[[1], [1]])
        with pytest.raises(ValueError):
            ExperimentConfig(CategoricalLogLoss(2), Distribution.from_probs([1.0, 0.0]),
                             NodeProfile(10))

    def test_hash_tracks_content(self):
        assert fixture_config().config_hash == fixture_config().config_hash
        assert fixture_config().config_hash != fixture_config(seed=1).config_hash


class TestPrepare:
    def test_fixture(self):
        s = prepare(fixture_config())
        assert s.plan.index_sets == ((1,),)
        assert s.predicted_epr == pytest.approx(0.25 / 800 / 2)
        assert s.baseline_epr == pytest.approx(0.25 / 400 / 2)

    def test_brute_force_source_agrees(self):
        cfg = ExperimentConfig(CategoricalLogLoss(4), Distribution.from_probs([0.1, 0.2, 0.3, 0.4]),
                               NodeProfile(50, (80, 30, 60), 2))
        a = prepare(cfg)
        b = prepare(dataclasses.replace(cfg, plan_source="brute-force"))
        assert a.predicted_epr == pytest.approx(b.predicted_epr, rel=1e-12)

    def test_baseline_source(self):
        s = prepare(fixture_config(plan_source="baseline"))
        assert s.predicted_epr == pytest.approx(s.baseline_epr, rel=1e-12)


class TestTrials:
    def test_deterministic(self):
        cfg = fixture_config()
        a, b = run_trial(cfg, 17), run_trial(cfg, 17)
        assert a.excess_risk == b.excess_risk and a.phi_dist == b.phi_dist
        assert run_trial(cfg, 18).excess_risk != a.excess_risk

    def test_common_random_numbers(self):
        # the target's sample does not depend on the plan, so with no helpers
        # and a baseline plan the same trial gives the same risk
        a = run_trial(fixture_config(helpers=()), 3)
        b = run_trial(fixture_config(plan_source="baseline"), 3)
        assert a.excess_risk == b.excess_risk

    def test_record_fields(self):
        r = run_trial(fixture_config(), 0)
        assert r.trial_id == 0 and r.excess_risk >= 0 and r.phi_dist >= 0
        assert not r.flagged

    def test_envelope_per_trial(self):
        cfg = ExperimentConfig(QuadraticEmbedding([[0.0], [1.0]]), Distribution.from_probs([0.5, 0.5]),
                               NodeProfile(10_000), plan_source="baseline", trials=1)
        setup = prepare(cfg)
        bound = 10 * setup.H.trace / 10_000
        for t in range(200):
            r = run_trial(cfg, t, setup)
            assert -1e-12 <= r.excess_risk <= bound

    def test_perturbation_matches_erm_for_quadratic(self):
        a = run_trial(fixture_config(), 5)
        b = run_trial(fixture_config(theta_method="perturbation"), 5)
        assert b.excess_risk == pytest.approx(a.excess_risk, rel=1e-9, abs=1e-18)


class TestExperiment:
    def test_thread_count_does_not_matter(self):
        cfg = fixture_config(helpers=(400, 200), trials=120)
        one = run_experiment(cfg, threads=1)
        many = run_experiment(cfg, threads=4)
        assert records_key(one) == records_key(many)
        d1, d2 = one.to_dict(), many.to_dict()
        d1.pop("wall_time"), d2.pop("wall_time")
        assert d1 == d2

    def test_envelope(self):
        rep = run_experiment(fixture_config(trials=3000))
        assert abs(rep.ratio - 1) < 4 * rep.empirical_se / rep.predicted_epr + 0.02
        assert rep.quality_ok and rep.n_flagged == 0

    def test_logloss_runs(self):
        cfg = ExperimentConfig(CategoricalLogLoss(3), Distribution.from_probs([0.2, 0.3, 0.5]),
                               NodeProfile(300, (300, 150)), trials=400)
        rep = run_experiment(cfg)
        assert rep.quality_ok
        assert 0.8 < rep.ratio < 1.2

    def test_to_dict(self):
        d = run_experiment(fixture_config(trials=5)).to_dict()
        assert d["trials"] == 5 and d["plan"]["index_sets"] == [[1]]
        assert set(d) >= {"predicted_epr", "empirical_epr", "ratio", "wall_time", "config_hash"}


class TestCompare:
    def test_identical_plans_identical_results(self):
        out = compare_plans(fixture_config(helpers=(400, 400)), [[[1], [1]], [[1], [1]]])
        (_, a), (_, b) = out
        assert records_key(a) == records_key(b)

    def test_baseline_ranks_last(self):
        out = compare_plans(fixture_config(trials=300), ["baseline", "algorithm"])
        assert [label for label, _ in out] == ["algorithm", "baseline"]

    def test_needs_two(self):
        with pytest.raises(ValueError):
            compare_plans(fixture_config(), ["algorithm"])

    def test_plan_objects(self):
        cfg = fixture_config(trials=50)
        plan = prepare(cfg).plan
        out = compare_plans(cfg, [plan, "algorithm"])
        assert records_key(out[0][1]) == records_key(out[1][1])

    def test_as_printed_changes_result(self):
        cfg = fixture_config(trials=50)
        a = run_experiment(cfg)
        b = run_experiment(dataclasses.replace(cfg, as_printed=True))
        assert not np.isclose(a.empirical_epr, b.empirical_epr)
