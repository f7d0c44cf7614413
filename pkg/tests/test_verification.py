"""
Tests for the randomized verification harness.
"""
import pytest

from schur_varpro.errors import NonIncidenceError
from schur_varpro.schur import detect_incidence
from schur_varpro.verification import (
    CHECKS,
    MAX_CONSTRAINED_ROWS,
    MAX_POINTS,
    TOLERANCES,
    draw_params,
    inject_non_incidence,
    random_instance,
    run_verification,
)


class TestInstances:

    def test_draw_params_deterministic(self):
        assert draw_params(3, 2, 1) == draw_params(3, 2, 1)

    @pytest.mark.parametrize("d", [2, 3])
    @pytest.mark.parametrize("seed", range(6))
    def test_size_bounds(self, seed, d):
        """Instances stay within the sizes the dense references are checked at."""
        params = draw_params(seed, d, 1 + seed % 2)
        layout = random_instance(params).layout
        assert params.n_poses >= 2
        assert layout.n_c <= MAX_CONSTRAINED_ROWS
        assert layout.n_f <= MAX_POINTS

    def test_sizes_span_the_range(self):
        sizes = [random_instance(draw_params(seed, 2, 1)).layout.n_f for seed in range(60)]
        assert max(sizes) > 30
        assert min(sizes) < 15

    def test_injected_fault(self):
        model = random_instance(draw_params(1, 2, 1)).model()
        faulty = inject_non_incidence(model)
        assert faulty.m == model.m + 1
        with pytest.raises(NonIncidenceError):
            detect_incidence(faulty.A_f)


class TestRunVerification:

    def test_every_check_has_a_tolerance(self):
        assert set(CHECKS) == set(TOLERANCES)

    def test_passes(self):
        report = run_verification(trials=4, seed=0)
        assert report.passed, "\n".join(str(f) for f in report.failures)
        assert set(report.max_errors) == set(CHECKS)

    def test_fault_fails_every_trial(self):
        report = run_verification(trials=3, seed=0, inject_fault="non-incidence")
        assert not report.passed
        assert [f.check for f in report.failures] == ["build"] * 3
        assert all(f.message.startswith("NonIncidence") for f in report.failures)

    @pytest.mark.parametrize("kwargs", [dict(trials=0), dict(inject_fault="overflow")])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            run_verification(**kwargs)

    @pytest.mark.slow
    def test_default_trial_count(self):
        """200 instances, half of them with two components; five gradient pairs each."""
        report = run_verification(seed=100)
        assert report.trials == 200
        assert report.passed, "\n".join(str(f) for f in report.failures[:10])
