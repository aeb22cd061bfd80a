"""Readers and writers for kernel specs, point sets, Gram matrices and reports.

JSON output is deterministic: keys sorted, floats with 17 significant
digits, and files replaced atomically.
"""

import csv
import io
import json
import math
import os
import tempfile
import warnings
from pathlib import Path

import jsonschema
import numpy as np

from . import sphere_basis as sb
from .exceptions import DomainError, SpecFileError
from .kernel_model import CoefficientScheme, HERMITIAN_RTOL, Structure, TailDescriptor, index_of

_NUM = {"type": "number"}
_INT = {"type": "integer"}
_NONNEG = {"type": "integer", "minimum": 0}
_POS = {"type": "integer", "minimum": 1}
_TAILIDX = {"type": "array", "items": _NONNEG}

_ENTRY_SCHEMAS = {
    "general": {"j": _NONNEG, "k": _POS, "jp": _NONNEG, "kp": _POS, "re": _NUM, "im": _NUM},
    "convolutional": {"j": _NONNEG, "k": _POS, "kp": _POS, "re": _NUM, "im": _NUM},
    "convolutional_diagonal": {"j": _NONNEG, "k": _POS, "value": _NUM},
    "axial": {"l1": _INT, "row": _TAILIDX, "col": _TAILIDX, "re": _NUM, "im": _NUM},
    "isotropic": {"j": _NONNEG, "value": _NUM},
}
_OPTIONAL = {"im"}


def _entry_schema(kind):
    props = _ENTRY_SCHEMAS[kind]
    return {
        "type": "object",
        "properties": props,
        "required": sorted(set(props) - _OPTIONAL),
        "additionalProperties": False,
    }


SPEC_SCHEMA = {
    "type": "object",
    "required": ["ambient_dim", "truncation_degree", "scheme"],
    "additionalProperties": False,
    "properties": {
        "ambient_dim": {"type": "integer", "minimum": 2},
        "truncation_degree": _NONNEG,
        "description": {"type": "string"},
        "scheme": {
            "type": "object",
            "required": ["type", "coefficients"],
            "additionalProperties": False,
            "properties": {
                "type": {"enum": sorted(_ENTRY_SCHEMAS)},
                "coefficients": {"type": "array", "items": {"type": "object"}},
            },
        },
        "tail": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["power", "none"]},
                "s": _NUM,
                "amplitude": {"type": "number", "exclusiveMinimum": 0},
                "parity": {"enum": ["even", "odd", "all"]},
                "l1_support": {
                    "oneOf": [{"const": "all"}, {"type": "array", "items": _INT}]
                },
            },
        },
    },
}


def _field_path(path):
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _entry_line(text, n):
    """Line of the ``n``-th object inside the coefficients array (best effort)."""
    start = text.find('"coefficients"')
    if start < 0:
        return None
    depth, count = 0, -1
    for pos in range(text.find("[", start) + 1, len(text)):
        ch = text[pos]
        if ch == "{":
            if depth == 0:
                count += 1
                if count == n:
                    return text.count("\n", 0, pos) + 1
            depth += 1
        elif ch == "}":
            depth -= 1
    return None


def _fail(text, path, msg):
    where = _field_path(path)
    line = None
    if len(path) >= 3 and path[0] == "scheme" and path[1] == "coefficients":
        line = _entry_line(text, path[2])
    loc = f"{where} (line {line})" if line else where
    raise SpecFileError(f"{loc}: {msg}")


def parse_spec(text):
    """Validate a spec document and build the :class:`CoefficientScheme`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecFileError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    validator = jsonschema.Draft7Validator(SPEC_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        _fail(text, list(e.path), e.message)
    kind = doc["scheme"]["type"]
    entry_validator = jsonschema.Draft7Validator(_entry_schema(kind))
    for n, entry in enumerate(doc["scheme"]["coefficients"]):
        for e in entry_validator.iter_errors(entry):
            _fail(text, ["scheme", "coefficients", n] + list(e.path), e.message)
    d, L = doc["ambient_dim"], doc["truncation_degree"]
    tail = _parse_tail(text, doc.get("tail"), d)
    entries = {}
    for n, entry in enumerate(doc["scheme"]["coefficients"]):
        path = ["scheme", "coefficients", n]
        try:
            pairs = _entry_pairs(kind, d, L, entry)
        except DomainError as exc:
            _fail(text, path, str(exc))
        for key, value, mirror in pairs:
            _store(text, path, entries, key, value)
            if mirror and key[0] != key[1]:
                _store(text, path, entries, (key[1], key[0]), value.conjugate(), mirrored=True)
            elif mirror and value.imag != 0:
                _fail(text, path, "diagonal entry must be real")
    structure = Structure(kind)
    scheme = CoefficientScheme(d, L, structure, {k: v for k, (v, _) in entries.items()}, tail)
    return scheme, doc


def _parse_tail(text, raw, d):
    if raw is None or raw["kind"] == "none":
        return TailDescriptor()
    for key in ("s", "amplitude"):
        if key not in raw:
            _fail(text, ["tail", key], "required for a power tail")
    try:
        tail = TailDescriptor.power(raw["s"], raw["amplitude"], raw.get("parity", "all"),
                                    raw.get("l1_support", "all"))
        tail.check_convergent(d)
    except DomainError as exc:
        _fail(text, ["tail"], str(exc))
    return tail


def _store(text, path, entries, key, value, mirrored=False):
    old = entries.get(key)
    if old is None:
        entries[key] = (value, mirrored)
        return
    prev, _ = old
    if abs(prev - value) > HERMITIAN_RTOL * max(abs(prev), abs(value)):
        a, b = key
        _fail(text, path, f"contradicts an earlier entry for ({a}, {b}): {prev} vs {value}")


def _check_degree(idx, L):
    if idx.degree > L:
        raise DomainError(f"index {idx} has degree {idx.degree} > truncation_degree {L}")
    return idx


def _entry_pairs(kind, d, L, e):
    """``[(key, value, mirror)]`` for one entry object."""
    for key in ("re", "im", "value"):
        if key in e and not math.isfinite(e[key]):
            raise DomainError(f"{key} must be finite")
    if kind in ("general", "convolutional"):
        jp = e["jp"] if kind == "general" else e["j"]
        a = _check_degree(index_of(d, e["j"], e["k"]), L)
        b = _check_degree(index_of(d, jp, e["kp"]), L)
        return [((a, b), complex(e["re"], e.get("im", 0.0)), True)]
    if kind == "axial":
        a = sb.HarmonicIndex(e["l1"], tuple(e["row"]))
        b = sb.HarmonicIndex(e["l1"], tuple(e["col"]))
        for idx in (a, b):
            idx.validate(d)
            _check_degree(idx, L)
        return [((a, b), complex(e["re"], e.get("im", 0.0)), True)]
    if kind == "convolutional_diagonal":
        a = _check_degree(index_of(d, e["j"], e["k"]), L)
        return [((a, a), complex(e["value"]), False)]
    j = e["j"]
    if j > L:
        raise DomainError(f"degree {j} > truncation_degree {L}")
    return [((i, i), complex(e["value"]), False) for i in sb.degree_indices(d, j)]


def load_spec(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecFileError(f"{path}: {exc.strerror}") from None
    return parse_spec(text)


def scheme_to_spec(scheme, description=None):
    """Serialize a scheme as a spec document (general entries, both halves)."""
    from .kernel_model import label_of

    d = scheme.ambient_dim
    coeffs = []
    for (a, b), v in sorted(scheme.entries.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        if scheme.structure is Structure.AXIAL:
            coeffs.append({"l1": a.l1, "row": list(a.tail), "col": list(b.tail),
                           "re": v.real, "im": v.imag})
        else:
            j, k = label_of(d, a)
            jp, kp = label_of(d, b)
            coeffs.append({"j": j, "k": k, "jp": jp, "kp": kp, "re": v.real, "im": v.imag})
    kind = "axial" if scheme.structure is Structure.AXIAL else "general"
    doc = {
        "ambient_dim": d,
        "truncation_degree": scheme.truncation_degree,
        "scheme": {"type": kind, "coefficients": coeffs},
        "tail": scheme.tail.to_dict(),
    }
    if description:
        doc["description"] = description
    return doc


# ---------------------------------------------------------------------------
# Points


def parse_points(text, d=None, source="points"):
    """Points CSV -> (polar array, values or None, ambient dimension)."""
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise SpecFileError(f"{source}: empty file")
    header = [c.strip() for c in rows[0]]
    has_values = header[-2:] == ["value_re", "value_im"]
    coords = header[:-2] if has_values else header
    if coords and all(c == f"theta{i + 1}" for i, c in enumerate(coords)):
        mode, dim = "polar", len(coords) + 1
    elif coords and all(c == f"x{i + 1}" for i, c in enumerate(coords)):
        mode, dim = "cartesian", len(coords)
    else:
        raise SpecFileError(
            f"{source} line 1: header must be theta1..theta{{d-1}} or x1..x{{d}}, "
            "optionally followed by value_re,value_im"
        )
    if dim < 2:
        raise SpecFileError(f"{source} line 1: need at least 2 ambient dimensions")
    if d is not None and dim != d:
        raise SpecFileError(f"{source} line 1: header describes d={dim} but the kernel has d={d}")
    if len(rows) < 2:
        raise SpecFileError(f"{source}: no data rows")
    data = []
    for n, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise SpecFileError(f"{source} line {n}: expected {len(header)} fields, got {len(r)}")
        try:
            vals = [float(c) for c in r]
        except ValueError:
            raise SpecFileError(f"{source} line {n}: non-numeric field") from None
        if not all(math.isfinite(v) for v in vals):
            raise SpecFileError(f"{source} line {n}: non-finite value")
        data.append(vals)
    arr = np.array(data, dtype=float)
    ncoord = len(coords)
    X = arr[:, :ncoord]
    if mode == "cartesian":
        norms = np.linalg.norm(X, axis=1)
        if np.any(norms == 0):
            bad = int(np.flatnonzero(norms == 0)[0]) + 2
            raise SpecFileError(f"{source} line {bad}: zero vector is not a sphere point")
        dev = np.abs(norms - 1.0)
        if dev.max() > 1e-6:
            warnings.warn(
                f"{source}: {int((dev > 1e-6).sum())} Cartesian rows normalized "
                f"(max deviation {dev.max():.3e})",
                UserWarning,
                stacklevel=2,
            )
        polar = sb.cartesian_to_polar(X / norms[:, None])
    else:
        polar = X
    values = arr[:, ncoord] + 1j * arr[:, ncoord + 1] if has_values else None
    return polar, values, dim


def load_points(path, d=None):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecFileError(f"{path}: {exc.strerror}") from None
    return parse_points(text, d, source=str(path))


def points_csv(polar, values=None):
    polar = np.atleast_2d(np.asarray(polar, dtype=float))
    header = [f"theta{i + 1}" for i in range(polar.shape[1])]
    if values is not None:
        header += ["value_re", "value_im"]
    lines = [",".join(header)]
    for n, row in enumerate(polar):
        cells = [fmt_float(v) for v in row]
        if values is not None:
            cells += [fmt_float(values[n].real), fmt_float(values[n].imag)]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def values_csv(values):
    lines = ["value_re,value_im"]
    lines += [f"{fmt_float(v.real)},{fmt_float(v.imag)}" for v in np.asarray(values, complex)]
    return "\n".join(lines) + "\n"


def gram_csv(G):
    """Interleaved ``re_j,im_j`` columns, one row per point."""
    n = G.shape[1]
    header = ",".join(f"re{j + 1},im{j + 1}" for j in range(n))
    lines = [header]
    for row in G:
        lines.append(",".join(f"{fmt_float(v.real)},{fmt_float(v.imag)}" for v in row))
    return "\n".join(lines) + "\n"


def read_gram_csv(text):
    rows = list(csv.reader(io.StringIO(text)))[1:]
    arr = np.array([[float(c) for c in r] for r in rows if r], dtype=float)
    return arr[:, 0::2] + 1j * arr[:, 1::2]


# ---------------------------------------------------------------------------
# Deterministic JSON


def fmt_float(x):
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    if x == 0:
        return "0.0"
    s = "%.17g" % x
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _dump(obj, indent, level, out):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        out.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt_float(obj))
    elif isinstance(obj, complex):
        _dump({"re": obj.real, "im": obj.imag}, indent, level, out)
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = sorted((str(k), v) for k, v in obj.items())
        for n, (k, v) in enumerate(items):
            out.append(pad + json.dumps(k) + ": ")
            _dump(v, indent, level + 1, out)
            out.append(",\n" if n < len(items) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else list(obj)
        if not seq:
            out.append("[]")
            return
        out.append("[\n")
        for n, v in enumerate(seq):
            out.append(pad)
            _dump(v, indent, level + 1, out)
            out.append(",\n" if n < len(seq) - 1 else "\n")
        out.append(end + "]")
    elif hasattr(obj, "value"):
        _dump(obj.value, indent, level, out)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent=2):
    """Deterministic JSON text with sorted keys and 17-digit floats."""
    out = []
    _dump(obj, indent, 0, out)
    return "".join(out) + "\n"


def atomic_write(path, text):
    """Write via a temporary file in the same directory and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    atomic_write(path, dumps(obj))


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise SpecFileError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise SpecFileError(f"{path} line {exc.lineno}: {exc.msg}") from None
