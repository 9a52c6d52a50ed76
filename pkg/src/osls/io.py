"""File formats: prediction records, truth files, reports, and config parsing.

Prediction files are line-delimited JSON objects ``{"f": [...], "h": x, "y": k}``
(``y`` optional); a CSV alternative with header ``f1,...,fK,h[,y]`` is selected
by the ``.csv`` extension on both read and write. All files are UTF-8 and
floats are serialized with repr (shortest exact round-trip), so fixed inputs
produce byte-identical outputs.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import ProbabilityVector, RecordSet, ValidationError
from .simulate import ScenarioConfig, ShiftSpec

PathLike = Union[str, Path]


def _is_csv(path: PathLike) -> bool:
    return str(path).lower().endswith(".csv")


def read_records(path: PathLike) -> RecordSet:
    """Read a prediction file (JSONL by default, CSV by extension)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        if _is_csv(path):
            return _records_from_csv(text)
        return _records_from_jsonl(text)
    except ValidationError:
        raise
    except (ValueError, KeyError, IndexError) as exc:
        raise ValidationError(f"cannot parse prediction file {path}: {exc}") from exc


def _records_from_jsonl(text: str) -> RecordSet:
    f_rows, h_vals, y_vals = [], [], []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        f_rows.append([float(v) for v in obj["f"]])
        h_vals.append(float(obj["h"]))
        y_vals.append(int(obj["y"]) if "y" in obj and obj["y"] is not None else None)
    if not f_rows:
        raise ValidationError("prediction file contains no records")
    y = None
    if all(v is not None for v in y_vals):
        y = np.array(y_vals, dtype=np.int64)
    return RecordSet(np.array(f_rows), np.array(h_vals), y)


def _records_from_csv(text: str) -> RecordSet:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2:
        raise ValidationError("CSV prediction file needs a header and at least one row")
    header = [h.strip() for h in lines[0].split(",")]
    if "h" not in header:
        raise ValidationError("CSV header must contain an 'h' column")
    h_col = header.index("h")
    has_y = "y" in header
    y_col = header.index("y") if has_y else -1
    k = h_col
    if header[:k] != [f"f{j + 1}" for j in range(k)]:
        raise ValidationError("CSV header must start with f1,...,fK")
    f_rows, h_vals, y_vals = [], [], []
    for line in lines[1:]:
        cells = [cell.strip() for cell in line.split(",")]
        f_rows.append([float(v) for v in cells[:k]])
        h_vals.append(float(cells[h_col]))
        if has_y:
            y_vals.append(int(float(cells[y_col])))
    y = np.array(y_vals, dtype=np.int64) if has_y else None
    return RecordSet(np.array(f_rows), np.array(h_vals), y)


def write_records(path: PathLike, records: RecordSet) -> None:
    """Write a prediction file; format chosen by extension."""
    path = Path(path)
    if _is_csv(path):
        header = [f"f{j + 1}" for j in range(records.k)] + ["h"]
        if records.y is not None:
            header.append("y")
        lines = [",".join(header)]
        for i in range(len(records)):
            cells = [repr(float(v)) for v in records.f[i]] + [repr(float(records.h[i]))]
            if records.y is not None:
                cells.append(str(int(records.y[i])))
            lines.append(",".join(cells))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return
    lines = []
    for i in range(len(records)):
        obj = {"f": [float(v) for v in records.f[i]], "h": float(records.h[i])}
        if records.y is not None:
            obj["y"] = int(records.y[i])
        lines.append(json.dumps(obj))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_corrected(
    path: PathLike,
    posteriors: np.ndarray,
    labels: np.ndarray,
    y: Optional[np.ndarray] = None,
) -> None:
    """Write corrected (K+1)-class posteriors with argmax labels."""
    path = Path(path)
    posteriors = np.atleast_2d(np.asarray(posteriors, dtype=float))
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if _is_csv(path):
        header = [f"g{j + 1}" for j in range(posteriors.shape[1])] + ["y_hat"]
        if y is not None:
            header.append("y")
        lines = [",".join(header)]
        for i in range(posteriors.shape[0]):
            cells = [repr(float(v)) for v in posteriors[i]] + [str(int(labels[i]))]
            if y is not None:
                cells.append(str(int(y[i])))
            lines.append(",".join(cells))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return
    lines = []
    for i in range(posteriors.shape[0]):
        obj = {"g": [float(v) for v in posteriors[i]], "y_hat": int(labels[i])}
        if y is not None:
            obj["y"] = int(y[i])
        lines.append(json.dumps(obj))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_corrected(path: PathLike) -> dict:
    """Read a corrected predictions file into arrays g, y_hat and optional y."""
    path = Path(path)
    g_rows, y_hat, y_vals = [], [], []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        g_rows.append([float(v) for v in obj["g"]])
        y_hat.append(int(obj["y_hat"]))
        y_vals.append(int(obj["y"]) if "y" in obj and obj["y"] is not None else None)
    if not g_rows:
        raise ValidationError(f"corrected file {path} contains no records")
    y = None
    if all(v is not None for v in y_vals):
        y = np.array(y_vals, dtype=np.int64)
    return {"g": np.array(g_rows), "y_hat": np.array(y_hat, dtype=np.int64), "y": y}


def write_features(path: PathLike, x: np.ndarray) -> None:
    """Write raw feature rows as CSV with header x1,...,xd."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    lines = [",".join(f"x{j + 1}" for j in range(x.shape[1]))]
    for row in x:
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_features(path: PathLike) -> np.ndarray:
    lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if len(lines) < 2:
        raise ValidationError(f"feature file {path} needs a header and at least one row")
    try:
        rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    except ValueError as exc:
        raise ValidationError(f"cannot parse feature file {path}: {exc}") from exc
    return np.array(rows)


def write_json(path: PathLike, obj: dict) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def read_json(path: PathLike) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_truth(path: PathLike, c, rho_s: float, pi, rho_t: float) -> None:
    c = c.entries if isinstance(c, ProbabilityVector) else np.asarray(c, dtype=float)
    pi = pi.entries if isinstance(pi, ProbabilityVector) else np.asarray(pi, dtype=float)
    write_json(
        path,
        {
            "K": int(c.size),
            "c": [float(v) for v in c],
            "rho_s": float(rho_s),
            "pi": [float(v) for v in pi],
            "rho_t": float(rho_t),
        },
    )


def read_truth(path: PathLike) -> dict:
    obj = read_json(path)
    for key in ("K", "c", "rho_s", "pi", "rho_t"):
        if key not in obj:
            raise ValidationError(f"truth file {path} is missing field {key!r}")
    return obj


def scenario_to_dict(config: ScenarioConfig) -> dict:
    return {
        "k": config.k,
        "feature_dim": config.feature_dim,
        "class_means": [[float(v) for v in row] for row in config.class_means],
        "class_scales": [float(v) for v in config.class_scales],
        "c": [float(v) for v in config.c.entries],
        "rho_s": config.rho_s,
        "n_source": config.n_source,
        "n_target": config.n_target,
        "n_ood_ref": config.n_ood_ref,
        "shift": config.shift.key(),
        "r": config.r,
        "seed": config.seed,
        "temperature": config.temperature,
    }


def scenario_from_dict(obj: dict) -> ScenarioConfig:
    return ScenarioConfig(
        k=int(obj["k"]),
        class_means=np.array(obj["class_means"], dtype=float),
        class_scales=np.array(obj["class_scales"], dtype=float),
        c=ProbabilityVector(np.array(obj["c"], dtype=float)),
        rho_s=float(obj["rho_s"]),
        n_source=int(obj["n_source"]),
        n_target=int(obj["n_target"]),
        n_ood_ref=int(obj["n_ood_ref"]),
        shift=ShiftSpec.parse(obj["shift"]),
        r=float(obj["r"]),
        seed=int(obj["seed"]),
        feature_dim=int(obj["feature_dim"]),
        temperature=float(obj.get("temperature", 1.0)),
    )


def parse_kv_file(path: PathLike) -> dict:
    """Parse a plain-text key = value configuration file ('#' starts a comment)."""
    out = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"cannot parse config line: {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip().lower()] = value.strip()
    return out


def _parse_floats(text: str) -> list:
    return [float(tok) for tok in text.replace(",", " ").split()]


def scenario_from_kv(kv: dict) -> ScenarioConfig:
    """Build a scenario config from key-value pairs.

    Means come either from the ring layout keys (radius / scale / ood_scale)
    or from an explicit ``class_means`` row list separated by semicolons.
    """
    try:
        k = int(kv["k"])
        seed = int(kv.get("seed", "0"))
    except KeyError as exc:
        raise ValidationError(f"scenario config is missing key {exc}") from exc
    feature_dim = int(kv.get("feature_dim", "2"))
    shift = ShiftSpec.parse(kv.get("shift", "none"))
    c = None
    if "c" in kv:
        c = np.array(_parse_floats(kv["c"]))

    common = dict(
        rho_s=float(kv.get("rho_s", "0.7")),
        n_source=int(kv.get("n_source", "10000")),
        n_target=int(kv.get("n_target", "10000")),
        n_ood_ref=int(kv.get("n_ood_ref", "5000")),
        r=float(kv.get("r", "1.0")),
        temperature=float(kv.get("temperature", "1.0")),
    )
    if "class_means" in kv:
        means = np.array([_parse_floats(row) for row in kv["class_means"].split(";")])
        scales = (
            np.array(_parse_floats(kv["class_scales"]))
            if "class_scales" in kv
            else np.full(k + 1, float(kv.get("scale", "1.0")))
        )
        return ScenarioConfig(
            k=k,
            class_means=means,
            class_scales=scales,
            c=ProbabilityVector(c if c is not None else np.full(k, 1.0 / k)),
            shift=shift,
            seed=seed,
            feature_dim=means.shape[1],
            **common,
        )
    from .simulate import ring_config

    ood_scale = float(kv["ood_scale"]) if "ood_scale" in kv else None
    return ring_config(
        k,
        radius=float(kv.get("radius", "3.0")),
        scale=float(kv.get("scale", "1.0")),
        ood_scale=ood_scale,
        c=c,
        shift=shift,
        seed=seed,
        feature_dim=feature_dim,
        **common,
    )


def sweep_from_kv(kv: dict) -> dict:
    """Split a sweep config into grid axes and the base scenario keys."""
    grid_keys = ("shifts", "r_values", "seeds", "methods")
    shifts = [s.strip() for s in kv.get("shifts", "none").split(",") if s.strip()]
    r_values = _parse_floats(kv.get("r_values", "1.0"))
    seeds = [int(float(s)) for s in _parse_floats(kv.get("seeds", "0"))]
    methods = [m.strip().lower() for m in kv.get("methods", "osls-mle,mlls").split(",") if m.strip()]
    base = {key: value for key, value in kv.items() if key not in grid_keys}
    return {
        "shifts": shifts,
        "r_values": r_values,
        "seeds": seeds,
        "methods": methods,
        "base": base,
    }
