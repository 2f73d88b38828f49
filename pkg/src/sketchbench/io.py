"""Matrix Market I/O, JSON reports, CSV traces and score files.

The Matrix Market reader is hand-written (rather than ``scipy.io.mmread``)
so that malformed input is reported with the offending line and column.
Supported: ``matrix coordinate|array`` with ``real|integer`` fields and
``general|symmetric|skew-symmetric`` symmetry.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ParseError

SCHEMA_VERSION = 1
_FORMATS = ("coordinate", "array")
_FIELDS = ("real", "integer", "double")
_SYMMETRIES = ("general", "symmetric", "skew-symmetric")


def _tokens(line: str):
    """Yield ``(token, 1-based column)`` pairs of a whitespace-separated line."""
    col = 0
    for part in line.split():
        col = line.index(part, col)
        yield part, col + 1
        col += len(part)


def _number(tok: str, col: int, path, lineno: int, integer: bool):
    try:
        v = int(tok) if integer else float(tok)
    except ValueError:
        raise ParseError(f"expected {'integer' if integer else 'number'}, got {tok!r}",
                         path, lineno, col) from None
    if not integer and not math.isfinite(v):
        raise ParseError(f"non-finite value {tok!r}", path, lineno, col)
    return v


def parse_matrix_market(text: str, path=None, sparse: bool | None = None):
    """Parse Matrix Market text; returns a dense array or a CSR array.

    By default coordinate files give CSR and array files give dense output;
    ``sparse`` forces one or the other.
    """
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file", path, 1)
    head = lines[0].split()
    if len(head) != 5 or head[0].lower() != "%%matrixmarket":
        raise ParseError("header must read '%%MatrixMarket matrix <format> <field> <symmetry>'", path, 1)
    obj, fmt, fld, sym = (h.lower() for h in head[1:])
    if obj != "matrix":
        raise ParseError(f"unsupported object {head[1]!r}", path, 1)
    if fmt not in _FORMATS:
        raise ParseError(f"unsupported format {head[2]!r}", path, 1)
    if fld not in _FIELDS:
        raise ParseError(f"unsupported field {head[3]!r}", path, 1)
    if sym not in _SYMMETRIES:
        raise ParseError(f"unsupported symmetry {head[4]!r}", path, 1)
    integer_field = fld == "integer"

    body = [(i + 1, ln) for i, ln in enumerate(lines) if i > 0 and ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise ParseError("missing size line", path, len(lines))
    size_no, size_line = body[0]
    size_toks = list(_tokens(size_line))
    want = 3 if fmt == "coordinate" else 2
    if len(size_toks) != want:
        raise ParseError(f"size line needs {want} integers", path, size_no)
    dims = [_number(t, c, path, size_no, True) for t, c in size_toks]
    if any(v < 0 for v in dims):
        raise ParseError("negative size", path, size_no)
    rows, cols = dims[0], dims[1]
    if sym != "general" and rows != cols:
        raise ParseError(f"{sym} matrix must be square", path, size_no)
    entries = body[1:]

    if fmt == "coordinate":
        nnz = dims[2]
        if len(entries) != nnz:
            ln = entries[nnz][0] if len(entries) > nnz else len(lines)
            raise ParseError(f"expected {nnz} entries, found {len(entries)}", path, ln)
        r = np.empty(nnz, dtype=np.int64)
        c = np.empty(nnz, dtype=np.int64)
        v = np.empty(nnz)
        for k, (no, ln) in enumerate(entries):
            toks = list(_tokens(ln))
            if len(toks) != 3:
                raise ParseError("coordinate entry needs 'row col value'", path, no)
            i = _number(*toks[0], path, no, True)
            j = _number(*toks[1], path, no, True)
            if not 1 <= i <= rows:
                raise ParseError(f"row index {i} out of range 1..{rows}", path, no, toks[0][1])
            if not 1 <= j <= cols:
                raise ParseError(f"column index {j} out of range 1..{cols}", path, no, toks[1][1])
            if sym != "general" and j > i:
                raise ParseError("symmetric storage must list the lower triangle", path, no)
            r[k], c[k] = i - 1, j - 1
            v[k] = _number(*toks[2], path, no, integer_field)
        if sym != "general":
            off = r != c
            sign = -1.0 if sym == "skew-symmetric" else 1.0
            r, c, v = (np.concatenate([r, c[off]]), np.concatenate([c, r[off]]),
                       np.concatenate([v, sign * v[off]]))
        M = sp.coo_array((v, (r, c)), shape=(rows, cols)).tocsr()
        M.sum_duplicates()
        return M.toarray() if sparse is False else M

    # array format: column-major, lower triangle only for symmetric kinds
    values = []
    for no, ln in entries:
        toks = list(_tokens(ln))
        if len(toks) != 1:
            raise ParseError("array entry needs exactly one value", path, no)
        values.append(_number(*toks[0], path, no, integer_field))
    if sym == "general":
        expected = rows * cols
    elif sym == "symmetric":
        expected = rows * (rows + 1) // 2
    else:
        expected = rows * (rows - 1) // 2
    if len(values) != expected:
        raise ParseError(f"expected {expected} values, found {len(values)}", path,
                         entries[-1][0] if entries else size_no)
    A = np.zeros((rows, cols))
    it = iter(values)
    for j in range(cols):
        start = {"general": 0, "symmetric": j, "skew-symmetric": j + 1}[sym]
        for i in range(start if sym != "general" else 0, rows):
            A[i, j] = next(it)
    if sym == "symmetric":
        A = A + np.tril(A, -1).T
    elif sym == "skew-symmetric":
        A = A - A.T
    return sp.csr_array(A) if sparse else A


def load_matrix(path, sparse: bool | None = None):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path) from exc
    return parse_matrix_market(text, path, sparse)


def _fmt(x: float) -> str:
    return repr(float(x))


def format_matrix_market(M, comment: str | None = None, field: str = "real") -> str:
    """Serialize a dense array (array format) or sparse matrix (coordinate format).

    Reals are written with ``repr`` so reading back is exact.
    """
    out = []
    if sp.issparse(M):
        C = sp.coo_array(M)
        out.append(f"%%MatrixMarket matrix coordinate {field} general")
        if comment:
            out.extend(f"% {c}" for c in comment.splitlines())
        out.append(f"{C.shape[0]} {C.shape[1]} {C.nnz}")
        order = np.lexsort((C.col, C.row))
        for k in order:
            v = int(C.data[k]) if field == "integer" else _fmt(C.data[k])
            out.append(f"{C.row[k] + 1} {C.col[k] + 1} {v}")
    else:
        A = np.asarray(M, dtype=np.float64)
        if A.ndim == 1:
            A = A[:, None]
        out.append(f"%%MatrixMarket matrix array {field} general")
        if comment:
            out.extend(f"% {c}" for c in comment.splitlines())
        out.append(f"{A.shape[0]} {A.shape[1]}")
        out.extend(str(int(v)) if field == "integer" else _fmt(v) for v in A.T.reshape(-1))
    return "\n".join(out) + "\n"


def save_matrix(M, path, comment: str | None = None) -> None:
    Path(path).write_text(format_matrix_market(M, comment))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def report_json(report: dict, timing: dict | None = None) -> str:
    """Canonical JSON text: sorted keys, ``schema`` stamped, timing kept apart."""
    body = dict(_jsonable(report))
    body["schema"] = SCHEMA_VERSION
    if timing is not None:
        body["timing"] = _jsonable(timing)
    return json.dumps(body, sort_keys=True, indent=2) + "\n"


def save_report(report: dict, path, timing: dict | None = None) -> None:
    Path(path).write_text(report_json(report, timing))


def strip_timing(report_text: str) -> str:
    body = json.loads(report_text)
    body.pop("timing", None)
    return json.dumps(body, sort_keys=True, indent=2)


def save_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def save_sketch(S, path) -> None:
    """Write the unscaled sketch as coordinate Matrix Market plus a ``.json`` sidecar."""
    path = Path(path)
    save_matrix(S.matrix, path)
    P = S.params
    meta = {
        "kind": P.kind, "m": P.m, "n": P.n, "p": P.p, "p_eff": S.p_eff,
        "seed": P.seed, "scale": S.scale, "bits_used": S.bits_used,
        "summands": S.summands, "clamped_columns": S.clamped_columns,
        "round_up": P.round_up,
    }
    save_report(meta, path.with_suffix(path.suffix + ".json"))


def save_scores(scores, path) -> None:
    """Scores as little-endian float64 binary plus a JSON metadata file."""
    path = Path(path)
    np.asarray(scores.scores, dtype="<f8").tofile(path)
    floored = scores.floored if scores.floored is not None else np.zeros(scores.n, bool)
    meta = {"n": scores.n, "d": scores.d, "beta1": scores.beta1, "beta2": scores.beta2,
            "floored_rows": np.flatnonzero(floored).tolist()}
    save_report(meta, path.with_suffix(path.suffix + ".json"))


def load_scores(path):
    from .leverage import LeverageScoreSet
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    s = np.fromfile(path, dtype="<f8")
    if s.size != meta["n"]:
        raise ParseError(f"expected {meta['n']} scores, found {s.size}", path)
    floored = np.zeros(s.size, bool)
    floored[meta.get("floored_rows", [])] = True
    return LeverageScoreSet(s, meta["d"], meta["beta1"], meta["beta2"], floored=floored)
