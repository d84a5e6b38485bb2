"""JSON container for named float64 parameter tensors.

Floats are written with ``repr`` precision, so a save/load round trip is
exact.
"""

import json

import numpy as np

FORMAT = "qeew-params"
VERSION = 1


class ModelFormatError(ValueError):
    pass


def dump_params(fh, kind, config, params, extra=None):
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "config": config,
        "extra": extra or {},
        "params": {
            name: {"shape": list(arr.shape), "data": np.asarray(arr, dtype=np.float64).ravel().tolist()}
            for name, arr in sorted(params.items())
        },
    }
    json.dump(doc, fh, sort_keys=True)
    fh.write("\n")


def load_params(fh, kind):
    try:
        doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelFormatError("not a qeew parameter file")
    if doc.get("version") != VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}, expected {VERSION}")
    if doc.get("kind") != kind:
        raise ModelFormatError(f"model kind {doc.get('kind')!r} where {kind!r} was expected")
    params = {}
    for name, rec in doc["params"].items():
        arr = np.asarray(rec["data"], dtype=np.float64)
        try:
            params[name] = arr.reshape(rec["shape"])
        except ValueError as exc:
            raise ModelFormatError(f"tensor {name!r}: {exc}") from exc
    return doc["config"], params, doc.get("extra", {})
