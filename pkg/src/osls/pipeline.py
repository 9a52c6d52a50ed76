"""End-to-end estimation pipeline and the experiment sweep engine.

The open-set pipeline runs, in order: source class frequencies from labels,
source ID ratio from reference score means, EM for (pi, rho_t), and the
affine ratio correction. Closed-set baselines (mlls / mapls / bbse) and the
uniform no-estimation baseline plug into the same report shape so sweeps can
compare methods row for row.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from . import baselines as bl
from .core import ProbabilityVector, RecordSet, SourceLabelModel, ValidationError
from .correction import correct_records
from .em import EmConfig, run_em
from .estimators import ScoreMeans, correct_rho, estimate_rho_s
from .metrics import rho_abs_error, w_mse
from .simulate import Scenario

OSLS_METHODS = ("osls-mle", "osls-map")
CLOSED_SET_METHODS = ("mlls", "mapls", "bbse")
ALL_METHODS = OSLS_METHODS + CLOSED_SET_METHODS + ("uniform",)


@dataclass(frozen=True, eq=False)
class EstimateResult:
    """Uniform report shape across estimation methods.

    Ratio fields are None for closed-set methods, which do not model the OOD
    class. ``method`` records the effective estimator: an OSLS run whose
    priors are all ones is reported as "osls-mle".
    """

    method: str
    k: int
    pi_hat: ProbabilityVector
    c_hat: ProbabilityVector
    rho_s_hat: Optional[float] = None
    mu1_hat: Optional[float] = None
    mu0_hat: Optional[float] = None
    rho_t_hat: Optional[float] = None
    rho_t_star: Optional[float] = None
    nll_initial: Optional[float] = None
    nll_final: Optional[float] = None
    iterations: Optional[int] = None
    converged: Optional[bool] = None

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "K": self.k,
            "c_hat": [float(v) for v in self.c_hat.entries],
            "pi_hat": [float(v) for v in self.pi_hat.entries],
        }
        for name in (
            "rho_s_hat",
            "mu1_hat",
            "mu0_hat",
            "rho_t_hat",
            "rho_t_star",
            "nll_initial",
            "nll_final",
            "iterations",
        ):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        if self.converged is not None:
            out["converged"] = bool(self.converged)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "EstimateResult":
        return cls(
            method=obj["method"],
            k=int(obj["K"]),
            pi_hat=ProbabilityVector(np.array(obj["pi_hat"], dtype=float)),
            c_hat=ProbabilityVector(np.array(obj["c_hat"], dtype=float)),
            rho_s_hat=obj.get("rho_s_hat"),
            mu1_hat=obj.get("mu1_hat"),
            mu0_hat=obj.get("mu0_hat"),
            rho_t_hat=obj.get("rho_t_hat"),
            rho_t_star=obj.get("rho_t_star"),
            nll_initial=obj.get("nll_initial"),
            nll_final=obj.get("nll_final"),
            iterations=obj.get("iterations"),
            converged=obj.get("converged"),
        )


def source_class_frequencies(source: RecordSet) -> ProbabilityVector:
    """Empirical ID class frequencies from source ground-truth labels."""
    if source.y is None:
        raise ValidationError("source records need ground-truth labels")
    if np.any(source.y > source.k):
        raise ValidationError("source records must be ID-only (labels in 1..K)")
    counts = np.bincount(source.y - 1, minlength=source.k).astype(float)
    if np.any(counts == 0):
        missing = int(np.argmax(counts == 0)) + 1
        raise ValidationError(f"source class {missing} has no samples")
    return ProbabilityVector(counts / counts.sum())


def estimate(
    method: str,
    source: RecordSet,
    target: RecordSet,
    *,
    mu0_hat: Optional[float] = None,
    n_ood: Optional[int] = None,
    em_config: Optional[EmConfig] = None,
    mapls_alpha: float = 2.0,
    apply_rho_correction: bool = True,
) -> EstimateResult:
    """Run one estimation method and return the uniform report.

    ``mu0_hat`` is the OOD-reference score mean (already rescaled when it
    comes from pseudo-OOD samples); it is required for the osls methods and
    ignored by the closed-set ones.
    """
    method = method.lower()
    if method not in ALL_METHODS:
        raise ValidationError(f"unknown method {method!r}; expected one of {ALL_METHODS}")
    if target.k != source.k:
        raise ValidationError("source and target record sets have different K")
    c_hat = source_class_frequencies(source)
    k = source.k

    if method in OSLS_METHODS:
        if mu0_hat is None:
            raise ValidationError("osls methods need an OOD reference score mean")
        em_config = em_config or EmConfig()
        if method == "osls-map" and em_config.is_mle:
            method = "osls-mle"
        if method == "osls-mle" and not em_config.is_mle:
            raise ValidationError("osls-mle requested but em_config carries non-trivial priors")
        mu1_hat = float(np.mean(source.h))
        means = ScoreMeans(
            mu1_hat=mu1_hat,
            mu0_hat=float(mu0_hat),
            n_id=len(source),
            n_ood=int(n_ood) if n_ood is not None else len(source),
        )
        rho_s_hat = estimate_rho_s(means)
        source_model = SourceLabelModel(c_hat, rho_s_hat)
        trace = run_em(source_model, target, em_config)
        rho_t_star = None
        if apply_rho_correction:
            rho_t_star = correct_rho(trace.rho_t_final, mu1_hat, float(mu0_hat))
        return EstimateResult(
            method=method,
            k=k,
            pi_hat=trace.pi_final,
            c_hat=c_hat,
            rho_s_hat=rho_s_hat,
            mu1_hat=mu1_hat,
            mu0_hat=float(mu0_hat),
            rho_t_hat=trace.rho_t_final,
            rho_t_star=rho_t_star,
            nll_initial=float(trace.nll_per_iter[0]),
            nll_final=float(trace.nll_per_iter[-1]),
            iterations=trace.iterations_run,
            converged=trace.converged,
        )

    if method == "mlls":
        pi_hat = bl.mlls(target.f, c_hat)
    elif method == "mapls":
        alpha = np.full(k, float(mapls_alpha))
        pi_hat = bl.mapls(target.f, c_hat, alpha)
    elif method == "bbse":
        pred = bl.argmax_labels(source.f)
        confusion = bl.ConfusionMatrix.from_labels(pred, source.y, k)
        q = bl.predicted_class_frequencies(target.f, k)
        pi_hat = bl.bbse(confusion, q)
    else:  # uniform baseline: no estimation, assume uniform labels and r = 1
        pi_hat = ProbabilityVector(np.full(k, 1.0 / k))
        return EstimateResult(method=method, k=k, pi_hat=pi_hat, c_hat=c_hat, rho_t_hat=0.5)
    return EstimateResult(method=method, k=k, pi_hat=pi_hat, c_hat=c_hat)


def correct_with_estimate(result: EstimateResult, target: RecordSet):
    """Apply the (K+1)-class correction using a pipeline estimate."""
    from .core import extend_distribution

    if result.rho_s_hat is None or result.rho_t_hat is None:
        raise ValidationError(f"method {result.method!r} does not produce ratio estimates")
    rho_t = result.rho_t_star if result.rho_t_star is not None else result.rho_t_hat
    c_ext = extend_distribution(result.c_hat, result.rho_s_hat)
    pi_ext = extend_distribution(result.pi_hat, rho_t)
    return correct_records(target, c_ext, pi_ext)


# ---------------------------------------------------------------------------
# sweep engine
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SweepCell:
    """Aggregated metrics for one (method, shift, r) cell of the grid."""

    method: str
    shift: str
    r: float
    seeds: int
    w_mse_mean: float
    w_mse_std: float
    rho_err_mean: Optional[float]
    rho_err_std: Optional[float]

    def key(self) -> Tuple[str, str, float]:
        return (self.method, self.shift, self.r)

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "shift": self.shift,
            "r": self.r,
            "seeds": self.seeds,
            "w_mse_mean": self.w_mse_mean,
            "w_mse_std": self.w_mse_std,
        }
        if self.rho_err_mean is not None:
            out["rho_err_mean"] = self.rho_err_mean
            out["rho_err_std"] = self.rho_err_std
        return out


def _run_sweep_point(args) -> Tuple[Tuple[str, float, int], dict]:
    """One (shift, r, seed) grid point: simulate once, estimate with all methods."""
    from .io import scenario_from_kv
    from .simulate import make_scenario

    base_kv, shift_text, r, seed, methods, em_iters = args
    kv = dict(base_kv)
    kv["shift"] = shift_text
    kv["r"] = repr(float(r))
    kv["seed"] = str(int(seed))
    config = scenario_from_kv(kv)
    source, target, ood_ref, truth = make_scenario(config)
    mu0_hat = float(np.mean(ood_ref.records.h))
    out = {}
    for method in methods:
        try:
            result = estimate(
                method,
                source.records,
                target.records,
                mu0_hat=mu0_hat,
                n_ood=len(ood_ref),
                em_config=EmConfig(max_iters=em_iters),
            )
            err = w_mse(result.pi_hat, truth.pi, config.c)
            rho_hat = (
                result.rho_t_star if result.rho_t_star is not None else result.rho_t_hat
            )
            rho_err = None if rho_hat is None else rho_abs_error(rho_hat, truth.rho_t)
            out[method] = {"w_mse": err, "rho_err": rho_err}
        except Exception as exc:  # cell failures are recorded, sweep continues
            out[method] = {"error": f"{type(exc).__name__}: {exc}"}
    return (shift_text, float(r), int(seed)), out


def run_sweep(
    base_kv: dict,
    shifts: Sequence[str],
    r_values: Sequence[float],
    seeds: Sequence[int],
    methods: Sequence[str],
    *,
    em_iters: int = 100,
    workers: int = 1,
) -> Tuple[list, list]:
    """Run the simulate-estimate-evaluate grid; returns (cells, failures).

    Cells aggregate mean and standard deviation across seeds per
    (method, shift, r) and come back sorted by that key so output files are
    order-independent of scheduling.
    """
    points = [
        (dict(base_kv), shift, r, seed, tuple(methods), em_iters)
        for shift in shifts
        for r in r_values
        for seed in seeds
    ]
    results = {}
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            for key, value in pool.map(_run_sweep_point, points):
                results[key] = value
    else:
        for point in points:
            key, value = _run_sweep_point(point)
            results[key] = value

    cells = []
    failures = []
    for shift in shifts:
        for r in r_values:
            per_method = {m: {"w_mse": [], "rho_err": []} for m in methods}
            for seed in seeds:
                point = results[(shift, float(r), int(seed))]
                for method in methods:
                    res = point[method]
                    if "error" in res:
                        failures.append(
                            {"method": method, "shift": shift, "r": float(r),
                             "seed": int(seed), "error": res["error"]}
                        )
                        continue
                    per_method[method]["w_mse"].append(res["w_mse"])
                    per_method[method]["rho_err"].append(res["rho_err"])
            for method in methods:
                vals = per_method[method]["w_mse"]
                if not vals:
                    continue
                rho_errs = [v for v in per_method[method]["rho_err"] if v is not None]
                cells.append(
                    SweepCell(
                        method=method,
                        shift=shift,
                        r=float(r),
                        seeds=len(vals),
                        w_mse_mean=float(np.mean(vals)),
                        w_mse_std=float(np.std(vals)),
                        rho_err_mean=float(np.mean(rho_errs)) if rho_errs else None,
                        rho_err_std=float(np.std(rho_errs)) if rho_errs else None,
                    )
                )
    cells.sort(key=lambda cell: cell.key())
    return cells, failures


def pseudo_ood_mu0(scenario: Scenario, features: np.ndarray, gamma: float, T: float) -> float:
    """Pseudo-OOD score mean: blend, score through the scenario oracle, rescale."""
    from .estimators import rescale_mu0

    h = scenario.pseudo_ood_scores(features, gamma)
    return rescale_mu0(float(np.mean(h)), T)
