"""File formats: matrix/data CSV, model files and experiment spec files.

Matrix CSV: one matrix row per line, comma-separated decimal literals, no
header. Data CSV is the same with one observation per row.

Model and spec files are YAML (JSON is accepted too, being a YAML subset)
and carry ``schema_version: 1``. See README.md for the full schemas.
"""

import hashlib
import json
from pathlib import Path

import numpy as np
import yaml

from ._validation import check_matrix
from .estimators import SampleSet
from .exceptions import ContractError
from .experiment import ExperimentSpec, LambdaPolicy
from .model import KronSumCovariance, random_psd_factor
from .rearrangement import BlockShape

__all__ = [
    "SCHEMA_VERSION",
    "FormatError",
    "read_matrix_csv",
    "write_matrix_csv",
    "matrix_to_csv",
    "read_data_csv",
    "load_model",
    "dump_model",
    "load_experiment_spec",
    "file_sha256",
]

SCHEMA_VERSION = 1


class FormatError(ValueError):
    """A file could not be parsed or does not follow its schema."""


def matrix_to_csv(m):
    """CSV text with full round-trip precision (shortest repr of each float)."""
    m = np.asarray(m, dtype=np.float64)
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in m)


def write_matrix_csv(path, m):
    Path(path).write_text(matrix_to_csv(m))


def read_matrix_csv(path):
    """Read a headerless numeric CSV into a 2-D float array."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from exc
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows:
        raise FormatError(f"{path}: file is empty")
    try:
        parsed = [[float(tok) for tok in line.split(",")] for line in rows]
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    widths = {len(r) for r in parsed}
    if len(widths) != 1:
        raise FormatError(f"{path}: rows have differing lengths {sorted(widths)}")
    try:
        return check_matrix(parsed, str(path))
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def read_data_csv(path, pre_center=False):
    """Observations as a :class:`SampleSet`; optionally subtract the column mean."""
    x = read_matrix_csv(path)
    if pre_center:
        x = x - x.mean(axis=0)
    return SampleSet(x)


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_document(path):
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise FormatError(f"{path}: not valid YAML/JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top level must be a mapping")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise FormatError(
            f"{path}: unsupported schema_version {version!r} (expected {SCHEMA_VERSION})"
        )
    return doc


def _load_factor(entry, dim, base, label):
    if isinstance(entry, list):
        m = np.asarray(entry, dtype=np.float64)
    elif isinstance(entry, dict) and "csv" in entry:
        m = read_matrix_csv(base / entry["csv"])
    elif isinstance(entry, dict) and "effective_rank" in entry:
        m = random_psd_factor(
            dim,
            entry["effective_rank"],
            seed=entry.get("seed"),
            spectrum=entry.get("spectrum", "geometric"),
        )
    elif isinstance(entry, dict) and entry.get("identity"):
        m = np.eye(dim)
    else:
        raise FormatError(
            f"{label}: expected inline rows, {{csv: path}}, {{effective_rank: r}} "
            "or {identity: true}"
        )
    if m.shape != (dim, dim):
        raise FormatError(f"{label}: expected {dim}x{dim}, got {m.shape}")
    return m


def load_model(path):
    """Parse a model file.

    Returns
    -------
    model : KronSumCovariance
    sampling : dict
        The optional ``sampling`` section (``n``, ``seed``), possibly empty.
    """
    path = Path(path)
    doc = _load_document(path)
    try:
        shape = BlockShape(int(doc["shape"]["p"]), int(doc["shape"]["q"]))
        terms = doc["terms"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: missing field {exc}") from exc
    if not isinstance(terms, list) or not terms:
        raise FormatError(f"{path}: 'terms' must be a non-empty list")
    if "k" in doc and doc["k"] != len(terms):
        raise FormatError(f"{path}: k={doc['k']} but {len(terms)} terms listed")
    factors = []
    for j, term in enumerate(terms):
        try:
            phi = _load_factor(term["phi"], shape.p, path.parent, f"{path}: terms[{j}].phi")
            psi = _load_factor(term["psi"], shape.q, path.parent, f"{path}: terms[{j}].psi")
        except (KeyError, TypeError) as exc:
            raise FormatError(f"{path}: terms[{j}] is missing {exc}") from exc
        factors.append((phi, psi))
    try:
        model = KronSumCovariance(shape, tuple(factors))
    except ContractError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return model, dict(doc.get("sampling") or {})


def dump_model(model, path, sampling=None):
    """Write `model` with inline factor matrices."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "shape": {"p": model.shape.p, "q": model.shape.q},
        "k": model.k,
        "terms": [
            {"phi": phi.tolist(), "psi": psi.tolist()} for phi, psi in model.factors
        ],
    }
    if sampling:
        doc["sampling"] = dict(sampling)
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False))


_SPEC_KEYS = {
    "schema_version",
    "shape",
    "k_rank",
    "factor_effective_ranks",
    "n_grid",
    "delta",
    "estimators",
    "lambda_policy",
    "trials",
    "seed",
    "fixed_model",
    "omega",
    "spectrum",
    "calibration",
}


def load_experiment_spec(path):
    """Parse an experiment spec file.

    Returns
    -------
    spec : ExperimentSpec
    calibration : dict or None
        ``{"reference_n": ..., "pilot_trials": ...}`` when the lambda policy
        asks for ``omega: calibrate``.
    """
    path = Path(path)
    doc = _load_document(path)
    unknown = set(doc) - _SPEC_KEYS
    if unknown:
        raise FormatError(f"{path}: unknown fields {sorted(unknown)}")
    try:
        ranks = doc["factor_effective_ranks"]
        if isinstance(ranks, dict):
            phi_ranks, psi_ranks = ranks["phi"], ranks["psi"]
        else:
            phi_ranks = psi_ranks = ranks
        policy = dict(doc.get("lambda_policy") or {"kind": "grid_select"})
        calibration = None
        if policy.get("omega") == "calibrate":
            calibration = {"reference_n": 256, "pilot_trials": 200}
            calibration.update(doc.get("calibration") or {})
            policy["omega"] = 1.0  # placeholder until calibrated
        spec = ExperimentSpec(
            shape=BlockShape(int(doc["shape"]["p"]), int(doc["shape"]["q"])),
            k_rank=int(doc["k_rank"]),
            phi_ranks=phi_ranks,
            psi_ranks=psi_ranks,
            n_grid=tuple(int(n) for n in doc["n_grid"]),
            delta=float(doc.get("delta", 0.05)),
            estimators=tuple(doc.get("estimators", ("sample", "pls_soft"))),
            lambda_policy=LambdaPolicy(**policy),
            trials=int(doc.get("trials", 1)),
            seed=int(doc.get("seed", 0)),
            fixed_model=bool(doc.get("fixed_model", False)),
            omega=None if doc.get("omega") is None else float(doc["omega"]),
            spectrum=doc.get("spectrum", "geometric"),
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: missing or malformed field {exc}") from exc
    except ContractError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return spec, calibration


def spec_to_json(spec):
    return json.dumps(spec.to_dict(), sort_keys=True, indent=2)
