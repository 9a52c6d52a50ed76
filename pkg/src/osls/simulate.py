"""Synthetic open-set scenarios with exact Bayes-posterior classifier outputs.

Each scenario is a Gaussian mixture over K ID classes plus one OOD class.
Source and target domains share one set of class-conditional components and
differ only in priors, so the label-shift premise holds by construction. The
simulated classifier outputs f and h are the exact posteriors under the
source priors (oracle mode); a temperature above 1 softens them on the
log-odds scale to emulate mis-calibration.

Random streams are split per purpose from the root seed so that, e.g.,
drawing more OOD reference samples never perturbs the target data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .core import (
    PredictionRecord,
    ProbabilityVector,
    RecordSet,
    TargetLabelModel,
    ValidationError,
    _as_probability_vector,
)

# Purpose offsets for per-stream seeding.
_STREAM_SHIFT = 0
_STREAM_SOURCE_LABELS = 1
_STREAM_SOURCE_FEATURES = 2
_STREAM_TARGET_LABELS = 3
_STREAM_TARGET_FEATURES = 4
_STREAM_OODREF_FEATURES = 5
_STREAM_PSEUDO_NOISE = 6
_STREAM_SUBSAMPLE = 7


def _mask_seed(seed: int) -> int:
    return int(seed) & 0xFFFF_FFFF_FFFF_FFFF


def _stream(seed: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng([_mask_seed(seed), purpose])


def dirichlet_shift(k: int, alpha: float, seed) -> ProbabilityVector:
    """One draw from the symmetric Dirichlet(alpha) via normalized Gamma draws."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    if alpha <= 0.0:
        raise ValidationError("alpha must be > 0")
    if k == 1:
        return ProbabilityVector([1.0])
    rng = np.random.default_rng(seed)
    for _ in range(100):
        draws = rng.gamma(alpha, 1.0, size=k)
        if draws.sum() > 0.0:
            return ProbabilityVector(draws / draws.sum())
    return ProbabilityVector(np.full(k, 1.0 / k))


def ordered_lt_shift(k: int, imbalance: float, order: str = "forward") -> ProbabilityVector:
    """Long-tailed distribution pi_j proportional to imbalance^(-(j-1)/(K-1))."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    if imbalance < 1.0:
        raise ValidationError("imbalance must be >= 1")
    if order not in ("forward", "backward"):
        raise ValidationError(f"order must be forward or backward; got {order!r}")
    if k == 1:
        return ProbabilityVector([1.0])
    weights = imbalance ** (-np.arange(k) / (k - 1.0))
    if order == "backward":
        weights = weights[::-1]
    return ProbabilityVector(weights / weights.sum())


@dataclass(frozen=True, eq=False)
class ShiftSpec:
    """How the target ID label distribution is derived from the source one."""

    kind: str
    alpha: float = 1.0
    imbalance: float = 1.0
    order: str = "forward"

    def __post_init__(self):
        if self.kind not in ("none", "dirichlet", "ordered_lt"):
            raise ValidationError(f"unknown shift kind {self.kind!r}")
        if self.kind == "dirichlet" and self.alpha <= 0.0:
            raise ValidationError("dirichlet shift needs alpha > 0")
        if self.kind == "ordered_lt":
            if self.imbalance < 1.0:
                raise ValidationError("ordered_lt shift needs imbalance >= 1")
            if self.order not in ("forward", "backward"):
                raise ValidationError("order must be forward or backward")

    @classmethod
    def none(cls) -> "ShiftSpec":
        return cls(kind="none")

    @classmethod
    def dirichlet(cls, alpha: float) -> "ShiftSpec":
        return cls(kind="dirichlet", alpha=float(alpha))

    @classmethod
    def ordered_lt(cls, imbalance: float, order: str = "forward") -> "ShiftSpec":
        return cls(kind="ordered_lt", imbalance=float(imbalance), order=order)

    @classmethod
    def parse(cls, text: str) -> "ShiftSpec":
        """Parse compact forms like "none", "dirichlet:1.0", "lt:100:forward"."""
        parts = [p.strip() for p in str(text).split(":")]
        kind = parts[0].lower()
        if kind == "none":
            return cls.none()
        if kind == "dirichlet":
            return cls.dirichlet(float(parts[1]) if len(parts) > 1 else 1.0)
        if kind in ("lt", "ordered_lt"):
            imbalance = float(parts[1]) if len(parts) > 1 else 1.0
            order = parts[2].lower() if len(parts) > 2 else "forward"
            return cls.ordered_lt(imbalance, order)
        raise ValidationError(f"cannot parse shift spec {text!r}")

    def key(self) -> str:
        if self.kind == "none":
            return "none"
        if self.kind == "dirichlet":
            return f"dirichlet:{self.alpha:g}"
        return f"lt:{self.imbalance:g}:{self.order}"

    def apply(self, c: ProbabilityVector, seed) -> ProbabilityVector:
        if self.kind == "none":
            return c
        if self.kind == "dirichlet":
            return dirichlet_shift(c.k, self.alpha, seed)
        return ordered_lt_shift(c.k, self.imbalance, self.order)


class GaussianComponents:
    """Isotropic Gaussian class-conditionals shared by source and target."""

    def __init__(self, means: np.ndarray, scales: np.ndarray):
        means = np.atleast_2d(np.asarray(means, dtype=float))
        scales = np.asarray(scales, dtype=float).ravel()
        if means.shape[0] != scales.size:
            raise ValidationError("one scale per component is required")
        if np.any(scales <= 0.0):
            raise ValidationError("scales must be > 0")
        for i in range(means.shape[0]):
            for j in range(i + 1, means.shape[0]):
                if np.allclose(means[i], means[j]):
                    raise ValidationError(f"component means {i} and {j} coincide")
        means = means.copy()
        scales = scales.copy()
        means.flags.writeable = False
        scales.flags.writeable = False
        self.means = means
        self.scales = scales

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        """(N, n_components) log densities (isotropic normal, constants kept)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = self.dim
        diff = x[:, None, :] - self.means[None, :, :]
        sq = np.sum(diff * diff, axis=2)
        return (
            -0.5 * sq / (self.scales**2)[None, :]
            - d * np.log(self.scales)[None, :]
            - 0.5 * d * np.log(2.0 * np.pi)
        )

    def sample(self, labels0: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Features for 0-based component labels."""
        noise = rng.standard_normal((labels0.size, self.dim))
        return self.means[labels0] + self.scales[labels0, None] * noise


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Full description of one synthetic open-set scenario.

    ``class_means`` and ``class_scales`` cover K+1 components, the last being
    the OOD class. ``r`` is the target OOD-to-ID sample ratio, so the target
    ID data ratio is 1 / (1 + r). ``temperature`` = 1 keeps the simulated
    classifier outputs exactly calibrated.
    """

    k: int
    class_means: np.ndarray
    class_scales: np.ndarray
    c: ProbabilityVector
    rho_s: float
    n_source: int
    n_target: int
    n_ood_ref: int
    shift: ShiftSpec
    r: float
    seed: int
    feature_dim: int = 2
    temperature: float = 1.0

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        means = np.atleast_2d(np.asarray(self.class_means, dtype=float))
        scales = np.asarray(self.class_scales, dtype=float).ravel()
        if means.shape != (self.k + 1, self.feature_dim):
            raise ValidationError(
                f"class_means must have shape ({self.k + 1}, {self.feature_dim}); got {means.shape}"
            )
        if scales.size == 1:
            scales = np.full(self.k + 1, float(scales[0]))
        if scales.size != self.k + 1:
            raise ValidationError(f"class_scales must have {self.k + 1} entries")
        c = _as_probability_vector(self.c)
        if c.k != self.k:
            raise ValidationError(f"c must have {self.k} entries")
        if not 0.0 < self.rho_s < 1.0:
            raise ValidationError("rho_s must lie strictly in (0, 1)")
        for name in ("n_source", "n_target", "n_ood_ref"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be >= 1")
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.r <= 0.0:
            raise ValidationError("r must be > 0")
        if self.temperature <= 0.0:
            raise ValidationError("temperature must be > 0")
        means = means.copy()
        scales = scales.copy()
        means.flags.writeable = False
        scales.flags.writeable = False
        object.__setattr__(self, "class_means", means)
        object.__setattr__(self, "class_scales", scales)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "rho_s", float(self.rho_s))
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "temperature", float(self.temperature))
        # Means must be pairwise distinct for the posteriors to be informative.
        GaussianComponents(means, scales)

    @property
    def rho_t(self) -> float:
        return 1.0 / (1.0 + self.r)


def ring_config(
    k: int,
    *,
    radius: float = 3.0,
    scale: float = 1.0,
    ood_scale: Optional[float] = None,
    c: Optional[Sequence[float]] = None,
    rho_s: float = 0.7,
    n_source: int = 10_000,
    n_target: int = 10_000,
    n_ood_ref: int = 5_000,
    shift: Optional[ShiftSpec] = None,
    r: float = 1.0,
    seed: int = 0,
    feature_dim: int = 2,
    temperature: float = 1.0,
) -> ScenarioConfig:
    """Standard layout: ID means on a circle of given radius, OOD at the origin."""
    if feature_dim < 2:
        raise ValidationError("ring layout needs feature_dim >= 2")
    angles = 2.0 * np.pi * np.arange(k) / k
    means = np.zeros((k + 1, feature_dim))
    means[:k, 0] = radius * np.cos(angles)
    means[:k, 1] = radius * np.sin(angles)
    scales = np.full(k + 1, scale)
    scales[k] = scale if ood_scale is None else ood_scale
    return ScenarioConfig(
        k=k,
        class_means=means,
        class_scales=scales,
        c=ProbabilityVector(np.full(k, 1.0 / k) if c is None else np.asarray(c, dtype=float)),
        rho_s=rho_s,
        n_source=n_source,
        n_target=n_target,
        n_ood_ref=n_ood_ref,
        shift=shift or ShiftSpec.none(),
        r=r,
        seed=seed,
        feature_dim=feature_dim,
        temperature=temperature,
    )


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """One simulated sample: classifier outputs plus the ground-truth label."""

    record: PredictionRecord
    true_label: int


class LabeledDataset:
    """A record set with ground-truth labels and the features that produced it.

    Features are kept beside (never inside) the records: they exist only so
    the pseudo-OOD generator can blend noise into raw inputs.
    """

    __slots__ = ("records", "features")

    def __init__(self, records: RecordSet, features: np.ndarray):
        if records.y is None:
            raise ValidationError("labeled dataset needs ground-truth labels")
        features = np.atleast_2d(np.asarray(features, dtype=float))
        if features.shape[0] != len(records):
            raise ValidationError("one feature row per record is required")
        features = features.copy()
        features.flags.writeable = False
        self.records = records
        self.features = features

    @property
    def y(self) -> np.ndarray:
        return self.records.y

    @property
    def k(self) -> int:
        return self.records.k

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int) -> LabeledSample:
        return LabeledSample(record=self.records[i], true_label=int(self.records.y[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Scenario:
    """A realized scenario: shared class-conditionals, truth, and samplers."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.components = GaussianComponents(config.class_means, config.class_scales)
        # Structural embodiment of the shared-conditionals premise: both
        # domains sample from the very same component object.
        self.source_components = self.components
        self.target_components = self.components
        pi = config.shift.apply(
            config.c, [_mask_seed(config.seed), _STREAM_SHIFT]
        )
        self.truth = TargetLabelModel(pi, config.rho_t)

    @property
    def k(self) -> int:
        return self.config.k

    def oracle_scores(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Exact posteriors (f, h) under the source priors, temperature applied."""
        cfg = self.config
        logp = self.components.log_pdf(x)
        log_prior = np.concatenate(
            [np.log(cfg.rho_s) + np.log(cfg.c.entries), [np.log(1.0 - cfg.rho_s)]]
        )
        joint = logp + log_prior[None, :]
        joint_id = joint[:, : cfg.k]
        m = joint_id.max(axis=1, keepdims=True)
        tau = cfg.temperature
        ef = np.exp((joint_id - m) / tau)
        f = ef / ef.sum(axis=1, keepdims=True)
        lse_id = (m[:, 0] + np.log(np.exp(joint_id - m).sum(axis=1)))
        h = _sigmoid((lse_id - joint[:, cfg.k]) / tau)
        return f, h

    def _dataset(self, labels0: np.ndarray, rng: np.random.Generator) -> LabeledDataset:
        x = self.components.sample(labels0, rng)
        f, h = self.oracle_scores(x)
        records = RecordSet(f, h, labels0 + 1)
        return LabeledDataset(records, x)

    def sample_source(self) -> LabeledDataset:
        """ID-only labeled source data with labels drawn from c."""
        cfg = self.config
        rng_labels = _stream(cfg.seed, _STREAM_SOURCE_LABELS)
        labels0 = rng_labels.choice(cfg.k, size=cfg.n_source, p=cfg.c.entries)
        return self._dataset(labels0, _stream(cfg.seed, _STREAM_SOURCE_FEATURES))

    def sample_target(self) -> LabeledDataset:
        """Unlabeled-by-convention target mixture; truth labels kept for scoring."""
        cfg = self.config
        rng_labels = _stream(cfg.seed, _STREAM_TARGET_LABELS)
        is_id = rng_labels.random(cfg.n_target) < self.truth.rho_t
        id_labels = rng_labels.choice(cfg.k, size=cfg.n_target, p=self.truth.pi.entries)
        labels0 = np.where(is_id, id_labels, cfg.k)
        return self._dataset(labels0, _stream(cfg.seed, _STREAM_TARGET_FEATURES))

    def sample_target_exact_ratio(self) -> LabeledDataset:
        """Target draw with the OOD count pinned to round(r * n_ID).

        ID labels are still i.i.d. from pi; only the ID/OOD split is exact,
        mirroring the protocol of subsampling OOD data to a prescribed ratio.
        """
        cfg = self.config
        rng_labels = _stream(cfg.seed, _STREAM_TARGET_LABELS)
        n_id = int(np.rint(cfg.n_target * self.truth.rho_t))
        n_ood = int(np.rint(cfg.r * n_id))
        if n_id + n_ood < 1:
            raise ValidationError("target size rounds to zero samples")
        id_labels = rng_labels.choice(cfg.k, size=n_id, p=self.truth.pi.entries)
        labels0 = np.concatenate([id_labels, np.full(n_ood, cfg.k, dtype=np.int64)])
        labels0 = labels0[rng_labels.permutation(labels0.size)]
        return self._dataset(labels0, _stream(cfg.seed, _STREAM_TARGET_FEATURES))

    def sample_ood_ref(self) -> LabeledDataset:
        """Reference draws from the OOD class-conditional."""
        cfg = self.config
        labels0 = np.full(cfg.n_ood_ref, cfg.k, dtype=np.int64)
        return self._dataset(labels0, _stream(cfg.seed, _STREAM_OODREF_FEATURES))

    def pseudo_ood_scores(self, features: np.ndarray, gamma: float) -> np.ndarray:
        """ID scores of noise-blended copies of the given features."""
        blended = gen_pseudo_ood(
            features, gamma, [_mask_seed(self.config.seed), _STREAM_PSEUDO_NOISE]
        )
        _, h = self.oracle_scores(blended)
        return h


def make_scenario(
    config: ScenarioConfig,
) -> Tuple[LabeledDataset, LabeledDataset, LabeledDataset, TargetLabelModel]:
    """Generate (source, target, ood_ref, truth) for one scenario config."""
    scenario = Scenario(config)
    return (
        scenario.sample_source(),
        scenario.sample_target(),
        scenario.sample_ood_ref(),
        scenario.truth,
    )


def gen_pseudo_ood(source_features: np.ndarray, gamma: float, seed) -> np.ndarray:
    """Blend standard-normal noise into features: (1-gamma)*x + gamma*eps.

    eps is drawn fresh per sample and per coordinate.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValidationError(f"gamma must lie in [0, 1]; got {gamma}")
    x = np.atleast_2d(np.asarray(source_features, dtype=float))
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(x.shape)
    return (1.0 - gamma) * x + gamma * eps


DatasetLike = Union[LabeledDataset, RecordSet, Sequence[LabeledSample]]


def _coerce_labeled(target: DatasetLike) -> Tuple[RecordSet, Optional[np.ndarray]]:
    if isinstance(target, LabeledDataset):
        return target.records, target.features
    if isinstance(target, RecordSet):
        if target.y is None:
            raise ValidationError("record set has no labels")
        return target, None
    samples = list(target)
    if not samples:
        raise ValidationError("empty sample list")
    records = RecordSet(
        np.stack([s.record.f.entries for s in samples]),
        np.array([s.record.h for s in samples]),
        np.array([s.true_label for s in samples], dtype=np.int64),
    )
    return records, None


def _rebuild(records: RecordSet, features: Optional[np.ndarray]):
    if features is None:
        return records
    return LabeledDataset(records, features)


def subsample_to_ratio(target: DatasetLike, r: float, seed) -> Tuple[DatasetLike, bool]:
    """Keep all ID samples and subsample OOD ones to round(r * n_ID).

    Returns the subsampled data (original order preserved) and a flag that is
    True when fewer OOD samples were available than requested.
    """
    if r <= 0.0:
        raise ValidationError("r must be > 0")
    records, features = _coerce_labeled(target)
    k = records.k
    id_idx = np.flatnonzero(records.y <= k)
    ood_idx = np.flatnonzero(records.y == k + 1)
    if id_idx.size == 0:
        raise ValidationError("target contains no ID samples")
    n_keep = int(np.rint(r * id_idx.size))
    capped = n_keep > ood_idx.size
    if capped:
        chosen = ood_idx
    else:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(ood_idx, size=n_keep, replace=False)
    keep = np.sort(np.concatenate([id_idx, chosen]))
    out = records.take(keep)
    return _rebuild(out, None if features is None else features[keep]), capped


def distort_scorer(samples: DatasetLike, a: float, b: float) -> DatasetLike:
    """Replace each h by a + b*h, an affine scorer mis-specification.

    The map must keep every score inside [0, 1]; affinity preserves equal
    per-ID-class mean responses whenever the original scorer had them.
    """
    records, features = _coerce_labeled(samples)
    new_h = a + b * records.h
    if new_h.min() < 0.0 or new_h.max() > 1.0:
        raise ValidationError(
            f"distorted scores fall outside [0, 1]: range [{new_h.min():.3g}, {new_h.max():.3g}]"
        )
    return _rebuild(records.with_h(new_h), features)
