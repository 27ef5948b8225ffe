"""Dataset manifests, long-CSV / binary readers and writers, result documents.

The long CSV (header ``obs_id,i1,...,iD,value``, 1-based indices, any row
order, every cell exactly once) is the canonical interchange format;
``bin-f64`` (raw little-endian doubles, observations concatenated in
canonical layout, no header) is the fast path for large inputs.  All floats
in JSON documents are written by Python's shortest round-trip repr, so a
write/read cycle reproduces every double bit for bit.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._version import __version__
from .em import FitOptions, FitReport, MixtureModel, SharedMcdFactors, SingularEvent
from .errors import DataFormatError
from .mda import Mda, as_batch
from .mlnd import MlndParams
from .parsimony import GpcmVviFactors, McdFactors, ScaleModel

_FORMATS = ("csv-long", "bin-f64")


@dataclass(frozen=True)
class DatasetManifest:
    """Shape and location of one dataset on disk."""

    dims: tuple[int, ...]
    n_obs: int
    data: str
    format: str = "csv-long"
    dim_names: tuple[str, ...] | None = None
    temporal: tuple[bool, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        if len(self.dims) < 2 or any(n < 1 for n in self.dims):
            raise DataFormatError("dims must have order >= 2 with positive extents")
        if self.n_obs < 1:
            raise DataFormatError("n_obs must be >= 1")
        if self.format not in _FORMATS:
            raise DataFormatError(
                f"unknown format tag {self.format!r} (expected one of {_FORMATS})"
            )
        if self.dim_names is not None:
            object.__setattr__(self, "dim_names", tuple(str(s) for s in self.dim_names))
            if len(self.dim_names) != len(self.dims):
                raise DataFormatError("dim_names must have one entry per dimension")
        if self.temporal is not None:
            object.__setattr__(self, "temporal", tuple(bool(b) for b in self.temporal))
            if len(self.temporal) != len(self.dims):
                raise DataFormatError("temporal must have one flag per dimension")

    def to_dict(self) -> dict:
        out = {
            "dims": list(self.dims),
            "n_obs": self.n_obs,
            "data": self.data,
            "format": self.format,
        }
        if self.dim_names is not None:
            out["dim_names"] = list(self.dim_names)
        if self.temporal is not None:
            out["temporal"] = list(self.temporal)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        try:
            return cls(
                dims=d["dims"],
                n_obs=d["n_obs"],
                data=d["data"],
                format=d.get("format", "csv-long"),
                dim_names=d.get("dim_names"),
                temporal=d.get("temporal"),
            )
        except KeyError as exc:
            raise DataFormatError(f"manifest is missing required field {exc}") from None


def read_manifest(path) -> DatasetManifest:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"manifest {path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise DataFormatError(f"manifest {path}: expected a JSON object")
    return DatasetManifest.from_dict(doc)


def write_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve(manifest_path, data_path: str) -> str:
    if os.path.isabs(data_path):
        return data_path
    return os.path.join(os.path.dirname(os.path.abspath(manifest_path)), data_path)


def _load_csv_long(path, dims: tuple[int, ...], n_obs: int) -> np.ndarray:
    d = len(dims)
    expected_header = ["obs_id"] + [f"i{k + 1}" for k in range(d)] + ["value"]
    values = np.empty((n_obs,) + dims)
    seen = np.zeros((n_obs,) + dims, dtype=bool)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if [h.strip() for h in header] != expected_header:
            raise DataFormatError(
                f"{path}: bad header {header!r}, expected {expected_header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise DataFormatError(
                    f"{path}: row {lineno}: expected {d + 2} fields, got {len(row)}"
                )
            try:
                obs = int(row[0])
                idx = tuple(int(v) for v in row[1 : d + 1])
                val = float(row[d + 1])
            except ValueError as exc:
                raise DataFormatError(f"{path}: row {lineno}: {exc}") from None
            if not 1 <= obs <= n_obs:
                raise DataFormatError(
                    f"{path}: row {lineno}: obs_id {obs} outside 1..{n_obs}"
                )
            for k, (i, n) in enumerate(zip(idx, dims)):
                if not 1 <= i <= n:
                    raise DataFormatError(
                        f"{path}: row {lineno}: i{k + 1}={i} outside 1..{n}"
                    )
            if not np.isfinite(val):
                raise DataFormatError(f"{path}: row {lineno}: value {row[d+1]!r} not finite")
            cell = (obs - 1,) + tuple(i - 1 for i in idx)
            if seen[cell]:
                raise DataFormatError(
                    f"{path}: row {lineno}: duplicate cell obs_id={obs}, index={idx}"
                )
            seen[cell] = True
            values[cell] = val
    if not seen.all():
        missing = np.argwhere(~seen)
        first = missing[0]
        raise DataFormatError(
            f"{path}: {len(missing)} missing cells, first: obs_id={first[0] + 1}, "
            f"index={tuple(int(i) + 1 for i in first[1:])}"
        )
    return values


def _load_bin_f64(path, dims: tuple[int, ...], n_obs: int) -> np.ndarray:
    raw = np.fromfile(path, dtype="<f8")
    n_star = int(np.prod(dims))
    if raw.size != n_obs * n_star:
        raise DataFormatError(
            f"{path}: expected {n_obs * n_star} doubles ({n_obs} x {dims}), got {raw.size}"
        )
    if not np.all(np.isfinite(raw)):
        bad = int(np.flatnonzero(~np.isfinite(raw))[0])
        raise DataFormatError(f"{path}: non-finite value at element {bad}")
    return raw.astype(np.float64).reshape((n_obs,) + dims)


def load_dataset(manifest_path, data_path: str | None = None) -> list[Mda]:
    """Load the observations a manifest describes, in ascending obs_id order.

    ``data_path`` overrides the manifest's data file location (same format).
    """
    manifest = read_manifest(manifest_path)
    path = data_path if data_path is not None else _resolve(manifest_path, manifest.data)
    if not os.path.exists(path):
        raise DataFormatError(f"data file not found: {path}")
    if manifest.format == "csv-long":
        batch = _load_csv_long(path, manifest.dims, manifest.n_obs)
    else:
        batch = _load_bin_f64(path, manifest.dims, manifest.n_obs)
    return [Mda(batch[i]) for i in range(manifest.n_obs)]


def write_csv_long(path, data) -> None:
    """Write a batch in the long format, cells in canonical (row-major) order."""
    batch = as_batch(data)
    dims = batch.shape[1:]
    d = len(dims)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["obs_id"] + [f"i{k + 1}" for k in range(d)] + ["value"])
        for obs in range(batch.shape[0]):
            flat = batch[obs].reshape(-1)
            for j, idx in enumerate(np.ndindex(dims)):
                w.writerow([obs + 1] + [i + 1 for i in idx] + [repr(float(flat[j]))])


def write_bin_f64(path, data) -> None:
    batch = as_batch(data)
    np.ascontiguousarray(batch, dtype="<f8").tofile(path)


# --- fit result documents ---------------------------------------------------------


def _mat(a: np.ndarray) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def _factors_to_json(dim: int, spec: ScaleModel, record) -> dict:
    if isinstance(record, SharedMcdFactors):
        return {
            "family": spec.value,
            "t": _mat(record.t),
            "deltas": [float(v) for v in record.deltas],
        }
    groups = []
    for fac in record:
        if isinstance(fac, McdFactors):
            groups.append({"t": _mat(fac.t), "delta": float(fac.delta)})
        elif isinstance(fac, GpcmVviFactors):
            groups.append({"scale": float(fac.scale), "shape": [float(v) for v in fac.shape]})
        else:  # pragma: no cover
            raise TypeError(f"unknown factor {type(fac).__name__}")
    return {"family": spec.value, "groups": groups}


def _factors_from_json(doc: dict):
    spec = ScaleModel.from_token(doc["family"])
    if spec is ScaleModel.MCD_EVI:
        return SharedMcdFactors(
            t=np.asarray(doc["t"], dtype=np.float64),
            deltas=np.asarray(doc["deltas"], dtype=np.float64),
        )
    if spec is ScaleModel.MCD_VVI:
        return tuple(
            McdFactors(t=np.asarray(g["t"], dtype=np.float64), delta=float(g["delta"]))
            for g in doc["groups"]
        )
    if spec is ScaleModel.GPCM_VVI:
        return tuple(
            GpcmVviFactors(
                scale=float(g["scale"]), shape=np.asarray(g["shape"], dtype=np.float64)
            )
            for g in doc["groups"]
        )
    raise DataFormatError(f"family {spec.value} stores no factor record")


def result_document(
    model: MixtureModel,
    report: FitReport,
    options: FitOptions,
    manifest: DatasetManifest | None = None,
) -> dict:
    """Assemble the JSON-serializable record of one fit."""
    dims = model.dims
    doc = {
        "version": __version__,
        "dims": list(dims),
        "n_obs": int(report.responsibilities.shape[0]),
        "n_groups": model.n_groups,
        "scale_models": [s.value for s in model.specs],
        "weights": [float(w) for w in model.weights],
        "groups": [
            {
                "mean_matricization": _mat(comp.mean.matrix),
                "scales": [_mat(s) for s in comp.scales],
            }
            for comp in model.components
        ],
        "factors": {
            str(dim): _factors_to_json(dim, model.specs[dim - 1], rec)
            for dim, rec in sorted(model.factors.items())
        },
        "labels": [int(v) for v in report.labels],
        "responsibilities": _mat(report.responsibilities),
        "loglik_trace": [float(v) for v in report.loglik_trace],
        "loglik": report.loglik,
        "bic": float(report.bic),
        "rho": int(report.rho),
        "converged": bool(report.converged),
        "n_iterations": int(report.n_iterations),
        "singular_events": [
            {"group": e.group, "dim": e.dim, "iteration": e.iteration}
            for e in report.singular_events
        ],
        "config": {
            "max_iterations": options.max_iterations,
            "aitken_epsilon": options.aitken_epsilon,
            "reg_epsilon": options.reg_epsilon,
            "kmeans_restarts": options.kmeans_restarts,
            "seed": list(options.seed) if isinstance(options.seed, tuple) else options.seed,
        },
    }
    if manifest is not None:
        doc["manifest"] = manifest.to_dict()
    return doc


def write_result(doc: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def read_result(path) -> tuple[MixtureModel, FitReport, dict]:
    """Rebuild (model, report, config echo) from a written result document."""
    with open(path) as fh:
        doc = json.load(fh)
    dims = tuple(doc["dims"])
    specs = tuple(ScaleModel.from_token(t) for t in doc["scale_models"])
    from .mda import Matricization  # local: narrow dependency

    components = []
    for gdoc in doc["groups"]:
        mat = np.asarray(gdoc["mean_matricization"], dtype=np.float64)
        mean = Matricization(matrix=mat, dims=dims)
        scales = tuple(np.asarray(s, dtype=np.float64) for s in gdoc["scales"])
        components.append(MlndParams(mean=mean, scales=scales))
    factors = {
        int(dim): _factors_from_json(rec) for dim, rec in doc["factors"].items()
    }
    model = MixtureModel(
        weights=np.asarray(doc["weights"], dtype=np.float64),
        components=tuple(components),
        specs=specs,
        factors=factors,
    )
    report = FitReport(
        loglik_trace=np.asarray(doc["loglik_trace"], dtype=np.float64),
        converged=doc["converged"],
        n_iterations=doc["n_iterations"],
        singular_events=[
            SingularEvent(group=e["group"], dim=e["dim"], iteration=e["iteration"])
            for e in doc["singular_events"]
        ],
        rho=doc["rho"],
        bic=doc["bic"],
        labels=np.asarray(doc["labels"], dtype=np.int64),
        responsibilities=np.asarray(doc["responsibilities"], dtype=np.float64),
    )
    return model, report, doc["config"]


def write_labels_csv(path, labels, responsibilities) -> None:
    """Labels CSV: obs_id, 1-based MAP label, z_1..z_G responsibilities."""
    labels = np.asarray(labels)
    z = np.asarray(responsibilities, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] != labels.shape[0]:
        raise ValueError("responsibilities must be (N, G) matching labels")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["obs_id", "map_label"] + [f"z_{g + 1}" for g in range(z.shape[1])])
        for i in range(labels.shape[0]):
            w.writerow([i + 1, int(labels[i]) + 1] + [repr(float(v)) for v in z[i]])


def read_labels_csv(path) -> np.ndarray:
    """MAP labels (0-based) from a labels CSV written by :func:`write_labels_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["obs_id", "map_label"]:
            raise DataFormatError(f"{path}: expected a labels CSV header")
        rows = [(int(r[0]), int(r[1])) for r in reader if r]
    rows.sort()
    return np.asarray([lbl - 1 for _, lbl in rows], dtype=np.int64)


__all__ = [
    "DatasetManifest",
    "load_dataset",
    "read_labels_csv",
    "read_manifest",
    "read_result",
    "result_document",
    "write_bin_f64",
    "write_csv_long",
    "write_labels_csv",
    "write_manifest",
    "write_result",
]
