import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osls.core import (
    DegenerateSample,
    ExtendedDistribution,
    PredictionRecord,
    ProbabilityVector,
    RecordSet,
    ValidationError,
    extend_distribution,
)
from osls.correction import (
    classify,
    correct_posterior,
    correct_posterior_closed_set,
    correct_records,
)


def _record(f, h):
    return PredictionRecord(ProbabilityVector(f), h)


class TestCorrectPosterior:
    def test_identity_reweighting(self):
        c_ext = extend_distribution([0.3, 0.7], 0.6)
        rec = _record([0.2, 0.8], 0.9)
        out = correct_posterior(rec, c_ext, c_ext)
        np.testing.assert_allclose(out.probs.entries, rec.extended().entries, atol=1e-15)

    def test_point_mass_preserved(self):
        c_ext = extend_distribution([0.5, 0.5], 0.5)
        pi_ext = extend_distribution([0.9, 0.1], 0.8)
        rec = _record([1.0, 0.0], 1.0)
        out = correct_posterior(rec, c_ext, pi_ext)
        np.testing.assert_allclose(out.probs.entries, [1.0, 0.0, 0.0], atol=1e-15)

    def test_single_class_direct(self):
        c_ext = ExtendedDistribution([0.5, 0.5])
        pi_ext = ExtendedDistribution([0.8, 0.2])
        rec = _record([1.0], 0.5)
        out = correct_posterior(rec, c_ext, pi_ext)
        np.testing.assert_allclose(out.probs.entries, [0.8, 0.2], atol=1e-15)

    def test_zero_normalizer(self):
        c_ext = extend_distribution([1.0], 0.5)
        pi_ext = extend_distribution([1.0], 1.0)  # no OOD mass
        rec = _record([1.0], 0.0)  # pure-OOD record
        with pytest.raises(DegenerateSample):
            correct_posterior(rec, c_ext, pi_ext)

    def test_requires_positive_source(self):
        c_ext = extend_distribution([1.0], 1.0)  # zero OOD entry
        pi_ext = extend_distribution([1.0], 0.5)
        with pytest.raises(ValidationError):
            correct_posterior(_record([1.0], 0.5), c_ext, pi_ext)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.05, 20.0))
    def test_argmax_invariant_to_ratio_scaling(self, scale):
        rec = _record([0.5, 0.3, 0.2], 0.7)
        c_ext = extend_distribution([0.2, 0.3, 0.5], 0.6)
        pi_ext = extend_distribution([0.5, 0.25, 0.25], 0.4)
        label = classify(correct_posterior(rec, c_ext, pi_ext))
        ratios = pi_ext.entries / c_ext.entries
        scaled = scale * ratios * rec.extended().entries
        assert label == int(np.argmax(scaled)) + 1


class TestClassify:
    def test_argmax(self):
        assert classify([0.1, 0.7, 0.2]) == 2

    def test_tie_toward_smallest(self):
        assert classify([0.5, 0.5]) == 1

    def test_ood_class(self):
        k = 4
        one_hot = np.zeros(k + 1)
        one_hot[k] = 1.0
        assert classify(one_hot) == k + 1


class TestClosedSet:
    def test_identity(self):
        f = ProbabilityVector([0.3, 0.7])
        c = ProbabilityVector([0.5, 0.5])
        out = correct_posterior_closed_set(f, c, c)
        np.testing.assert_allclose(out.entries, f.entries, atol=1e-15)

    def test_uniform_inputs(self):
        out = correct_posterior_closed_set([0.5, 0.5], [0.5, 0.5], [0.9, 0.1])
        np.testing.assert_allclose(out.entries, [0.9, 0.1], atol=1e-15)

    def test_hand_arithmetic(self):
        out = correct_posterior_closed_set([0.8, 0.2], [0.4, 0.6], [0.6, 0.4])
        unnorm = np.array([0.6 / 0.4 * 0.8, 0.4 / 0.6 * 0.2])
        np.testing.assert_allclose(out.entries, unnorm / unnorm.sum(), atol=1e-12)
        np.testing.assert_allclose(out.entries, [0.9, 0.1], atol=1e-12)


class TestCorrectRecords:
    def test_matches_per_record(self, rng):
        f = rng.dirichlet(np.ones(3), size=50)
        h = rng.random(50)
        records = RecordSet(f, h)
        c_ext = extend_distribution([0.2, 0.4, 0.4], 0.7)
        pi_ext = extend_distribution([0.6, 0.2, 0.2], 0.4)
        posteriors, labels = correct_records(records, c_ext, pi_ext)
        for i in (0, 13, 49):
            single = correct_posterior(records[i], c_ext, pi_ext)
            np.testing.assert_allclose(posteriors[i], single.probs.entries, rtol=0, atol=1e-12)
            assert labels[i] == classify(single)

    def test_on_simplex(self, rng):
        f = rng.dirichlet(np.ones(4), size=200)
        h = rng.random(200)
        posteriors, _ = correct_records(
            RecordSet(f, h),
            extend_distribution(np.full(4, 0.25), 0.5),
            extend_distribution([0.7, 0.1, 0.1, 0.1], 0.9),
        )
        np.testing.assert_allclose(posteriors.sum(axis=1), 1.0, atol=1e-12)
        assert posteriors.min() >= 0.0
