"""Target-adapted (K+1)-class posteriors built by reweighting classifier outputs.

Each record's combined output [h*f, 1-h] is multiplied by the per-class ratio
of target to source extended probabilities and renormalized. The ratio vector
depends only on the estimates, so batch correction computes it once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from .core import (
    DegenerateSample,
    ExtendedDistribution,
    PredictionRecord,
    ProbabilityVector,
    RecordSet,
    ValidationError,
)


@dataclass(frozen=True, eq=False)
class CorrectedPosterior:
    """A (K+1)-class posterior adapted to the target domain."""

    probs: ExtendedDistribution


def _ratio_vector(c_ext: ExtendedDistribution, pi_ext: ExtendedDistribution) -> np.ndarray:
    if c_ext.entries.size != pi_ext.entries.size:
        raise ValidationError("extended distributions must have matching length")
    if np.any(c_ext.entries <= 0.0):
        raise ValidationError("source extended distribution must be strictly positive")
    return pi_ext.entries / c_ext.entries


def correct_posterior(
    record: PredictionRecord,
    c_ext: ExtendedDistribution,
    pi_ext: ExtendedDistribution,
) -> CorrectedPosterior:
    """Reweight one record's combined output toward the target label model."""
    ratios = _ratio_vector(c_ext, pi_ext)
    if record.k + 1 != ratios.size:
        raise ValidationError(f"record has K={record.k} but distributions have K={ratios.size - 1}")
    unnorm = ratios * record.extended().entries
    total = unnorm.sum()
    if total <= 0.0:
        raise DegenerateSample(0, "zero normalizer while correcting record")
    return CorrectedPosterior(ExtendedDistribution(unnorm / total))


def classify(posterior: Union[CorrectedPosterior, ExtendedDistribution, Sequence[float]]) -> int:
    """1-based argmax label; ties break toward the smallest index."""
    if isinstance(posterior, CorrectedPosterior):
        entries = posterior.probs.entries
    elif isinstance(posterior, ExtendedDistribution):
        entries = posterior.entries
    else:
        entries = np.asarray(posterior, dtype=float)
    return int(np.argmax(entries)) + 1


def correct_posterior_closed_set(f, c, pi) -> ProbabilityVector:
    """The same reweighting restricted to the K ID classes."""
    f = f.entries if isinstance(f, ProbabilityVector) else ProbabilityVector(f).entries
    c = c.entries if isinstance(c, ProbabilityVector) else ProbabilityVector(c).entries
    pi = pi.entries if isinstance(pi, ProbabilityVector) else ProbabilityVector(pi).entries
    if np.any(c <= 0.0):
        raise ValidationError("c must be strictly positive")
    unnorm = (pi / c) * f
    total = unnorm.sum()
    if total <= 0.0:
        raise DegenerateSample(0, "zero normalizer in closed-set correction")
    return ProbabilityVector(unnorm / total)


def correct_records(
    records: Union[RecordSet, Sequence[PredictionRecord]],
    c_ext: ExtendedDistribution,
    pi_ext: ExtendedDistribution,
) -> Tuple[np.ndarray, np.ndarray]:
    """Correct a whole record set; returns the (N, K+1) posteriors and labels.

    The ratio vector is computed once for the batch so per-record numerics are
    identical to correct_posterior.
    """
    records = RecordSet.coerce(records)
    ratios = _ratio_vector(c_ext, pi_ext)
    if records.k + 1 != ratios.size:
        raise ValidationError(
            f"records have K={records.k} but distributions have K={ratios.size - 1}"
        )
    unnorm = records.extended_f() * ratios
    totals = unnorm.sum(axis=1)
    if np.any(totals <= 0.0):
        raise DegenerateSample(int(np.argmax(totals <= 0.0)))
    posteriors = unnorm / totals[:, None]
    labels = posteriors.argmax(axis=1) + 1
    return posteriors, labels
