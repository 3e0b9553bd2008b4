"""Model artifacts: versioned, checksummed JSON text.

Floats go through ``repr`` (shortest round-trip decimal), so a loaded model
predicts bitwise identically to the saved one.
"""
from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from .data import FeatureSchema, atomic_write_text
from .em import LINKS, ZitModel
from .gbdt import Ensemble

FORMAT_NAME = "zitweedie-model"
FORMAT_VERSION = "1.0"


class ArtifactError(ValueError):
    pass


def _plain(obj):
    """Coerce numpy scalars/arrays and tuples into JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return _plain(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)  # "nan" / "inf"; meta only, never model parameters
    return obj


def _canonical(payload):
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)


def model_to_dict(model: ZitModel):
    return {
        "zeta": model.zeta,
        "links": dict(model.links),
        "schema": None if model.schema is None else model.schema.to_dict(),
        "ensembles": {
            "mean": model.f_mu.to_dict(),
            "dispersion": model.f_phi.to_dict(),
            "zero_state": model.f_pi.to_dict(),
        },
        "training_meta": _plain(model.training_meta),
    }


def model_from_dict(d) -> ZitModel:
    if d.get("links", LINKS) != LINKS:
        raise ArtifactError(f"unsupported link functions {d['links']}")
    ens = d["ensembles"]
    return ZitModel(
        zeta=float(d["zeta"]),
        f_mu=Ensemble.from_dict(ens["mean"]),
        f_phi=Ensemble.from_dict(ens["dispersion"]),
        f_pi=Ensemble.from_dict(ens["zero_state"]),
        schema=None if d["schema"] is None else FeatureSchema.from_dict(d["schema"]),
        training_meta=d.get("training_meta", {}),
    )


def dumps_model(model: ZitModel) -> str:
    payload = json.loads(_canonical(_plain(model_to_dict(model))))
    doc = {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "sha256": hashlib.sha256(_canonical(payload).encode()).hexdigest(),
        "payload": payload,
    }
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"


def loads_model(text: str) -> ZitModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise ArtifactError("not a zitweedie model artifact")
    version = str(doc.get("format_version", ""))
    if version.split(".")[0] != FORMAT_VERSION.split(".")[0]:
        raise ArtifactError(f"unsupported format version {version!r} (reader is {FORMAT_VERSION})")
    payload = doc.get("payload")
    digest = hashlib.sha256(_canonical(payload).encode()).hexdigest()
    if digest != doc.get("sha256"):
        raise ArtifactError("checksum mismatch: model file is corrupted")
    try:
        return model_from_dict(payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"malformed model payload: {exc}") from None


def save_model(model: ZitModel, path):
    atomic_write_text(path, dumps_model(model))


def load_model(path) -> ZitModel:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())
