"""Canonical JSON output and file readers for circuits, bubbles and decompositions.

Output JSON has sorted keys, floats at 17 significant digits and a
``schema`` field, so the same input always yields the same bytes.
"""
import json
import math

import numpy as np

from qcevents.algebra import is_proj_decomp
from qcevents.circuit import IN, OUT, Placement, circuit_from_dict
from qcevents.errors import InputError, NumericDefect
from qcevents.influence import PlacedDecomp
from qcevents.tensor import matrix_from_json, matrix_to_json


def _float(x):
    x = float(x)
    if not math.isfinite(x):
        raise NumericDefect(f"non-finite value {x} in output")
    if x == 0.0:
        x = 0.0  # drop the sign of negative zero
    return format(x, ".17g")


def _encode(obj, out):
    if obj is None:
        out.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for k, key in enumerate(sorted(obj, key=str)):
            if k:
                out.append(",")
            out.append(json.dumps(str(key)))
            out.append(":")
            _encode(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        for k, item in enumerate(obj):
            if k:
                out.append(",")
            _encode(item, out)
        out.append("]")
    else:
        raise TypeError(f"cannot encode {type(obj).__name__}")


def canonical_json(obj, schema=None):
    """Serialise ``obj`` deterministically; ``schema`` is added as a top-level field."""
    if schema is not None:
        obj = dict(obj)
        obj["schema"] = schema
    out = []
    _encode(obj, out)
    return "".join(out) + "\n"


def load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc.msg}") from exc


def read_circuit(path):
    return circuit_from_dict(load_json(path))


def bubble_from_dict(data):
    if isinstance(data, dict):
        data = data.get("bubble")
    if not isinstance(data, list) or not all(isinstance(w, str) for w in data):
        raise InputError("bubble JSON must be {\"bubble\": [wire ids]}")
    return list(data)


def read_bubble(path):
    return bubble_from_dict(load_json(path))


def decomps_from_dict(data, c):
    """Placed decompositions from ``{"decompositions": [...]}``.

    Each entry has ``wire``, ``side`` (``IN`` or ``OUT``), ``projectors`` as
    flat ``[re, im]`` lists and an optional ``label``. Preferred-set output
    (key ``entries``) is accepted as well.
    """
    if isinstance(data, dict):
        entries = data.get("decompositions", data.get("entries"))
    else:
        entries = data
    if not isinstance(entries, list):
        raise InputError("decomposition JSON needs a 'decompositions' list")
    out = []
    for k, e in enumerate(entries):
        try:
            wire, side = str(e["wire"]), str(e.get("side", IN)).upper()
            projs = e["projectors"]
        except (KeyError, TypeError, AttributeError) as exc:
            raise InputError(f"decomposition {k} is malformed") from exc
        if side not in (IN, OUT):
            raise InputError(f"decomposition {k} has side {side!r}")
        d = c.dim(wire)
        mats = tuple(matrix_from_json(p, d, d) for p in projs)
        if not is_proj_decomp(mats, 1e-8):
            raise InputError(f"decomposition {k} on {wire!r} is not a projective decomposition")
        out.append(PlacedDecomp(mats, Placement(wire, side), str(e.get("label", ""))))
    return out


def read_decomps(path, c):
    return decomps_from_dict(load_json(path), c)


def decomps_to_dict(placed):
    return {
        "decompositions": [
            {"wire": p.at.wire, "side": p.at.side, "label": p.label, "projectors": [matrix_to_json(q) for q in p.decomp]}
            for p in placed
        ]
    }


__all__ = [
    "canonical_json",
    "load_json",
    "read_circuit",
    "bubble_from_dict",
    "read_bubble",
    "decomps_from_dict",
    "read_decomps",
    "decomps_to_dict",
]
