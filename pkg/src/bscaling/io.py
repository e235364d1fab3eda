"""CSV tables and the JSON model file."""

from __future__ import annotations

import csv
import datetime as _dt
import json
from pathlib import Path

import numpy as np

from .core import FittedBScaling, RescaleParams
from .errors import DataError, DimensionMismatch
from .spline_basis import KnotSet

FORMAT_VERSION = 1
SIGN_CONVENTION = "largest-abs-coefficient-positive"


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Numeric CSV with a header row. Blank, non-numeric and non-finite cells are errors."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, a header row is required") from None
        header = [h.strip() for h in header]
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(rec)} cells, header has {len(header)}")
            vals = []
            for col, cell in zip(header, rec):
                try:
                    v = float(cell.strip())
                except ValueError:
                    raise DataError(f"{path}: row {lineno}, column '{col}': not a number: {cell!r}") from None
                if not np.isfinite(v):
                    raise DataError(f"{path}: row {lineno}, column '{col}': non-finite value {cell!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return header, np.array(rows, dtype=float)


def select_columns(header, data, wanted) -> np.ndarray:
    missing = [c for c in wanted if c not in header]
    if missing:
        raise DataError(f"missing column(s): {', '.join(missing)}")
    return data[:, [header.index(c) for c in wanted]]


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path_or_fh, header, rows):
    """Write rows (sequences or dicts keyed by header) as RFC-4180 CSV."""
    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            if isinstance(r, dict):
                r = [r[h] for h in header]
            w.writerow([_fmt(v) for v in r])

    if hasattr(path_or_fh, "write"):
        _write(path_or_fh)
    else:
        with open(path_or_fh, "w", newline="", encoding="utf-8") as fh:
            _write(fh)


def model_to_dict(model: FittedBScaling, meta: dict | None = None, timestamp: bool = True) -> dict:
    meta = dict(meta or {})
    meta.setdefault("n", model.n)
    meta.setdefault("k0", model.k0)
    meta.setdefault("warnings", list(model.warnings))
    meta.setdefault("ridge_applied", model.ridge_applied)
    if timestamp:
        meta["created"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return {
        "format_version": FORMAT_VERSION,
        "column_names": list(model.column_names),
        "rescale": {"min": model.rescale.mins.tolist(), "max": model.rescale.maxs.tolist()},
        "order": model.order,
        "knots": [list(ks.knots) for ks in model.knots],
        "a_hat": model.a_hat.tolist(),
        "block_offsets": list(model.block_offsets),
        "b_hat": model.b_hat.tolist(),
        "eigenvalues": model.eigenvalues.tolist(),
        "d_min": model.d_min,
        "b_variance": model.b_variance,
        "sign_convention": SIGN_CONVENTION,
        "sign": model.sign,
        "meta": meta,
    }


def model_from_dict(d: dict) -> FittedBScaling:
    try:
        if d["format_version"] != FORMAT_VERSION:
            raise DataError(f"unsupported model format_version {d['format_version']}")
        order = int(d["order"])
        knots = tuple(KnotSet(order, tuple(k)) for k in d["knots"])
        a = np.asarray(d["a_hat"], dtype=float)
        offsets = list(d["block_offsets"])
        if offsets != [0] + list(np.cumsum([ks.basis_count for ks in knots])):
            raise DimensionMismatch("block_offsets do not match the knot sets")
        if a.size != offsets[-1]:
            raise DimensionMismatch("a_hat length does not match the knot sets")
        meta = d.get("meta", {})
        return FittedBScaling(
            rescale=RescaleParams(np.asarray(d["rescale"]["min"]), np.asarray(d["rescale"]["max"])),
            knots=knots,
            a_hat=a,
            b_hat=np.asarray(d["b_hat"], dtype=float),
            eigenvalues=np.asarray(d["eigenvalues"], dtype=float),
            d_min=float(d["d_min"]),
            b_variance=float(d["b_variance"]),
            sign=float(d.get("sign", 1.0)),
            column_names=tuple(d["column_names"]),
            n=int(meta.get("n", 0)),
            k0=meta.get("k0"),
            ridge_applied=float(meta.get("ridge_applied", 0.0)),
            warnings=tuple(meta.get("warnings", ())),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model file: {exc}") from None


def save_model(model: FittedBScaling, path, meta: dict | None = None, timestamp: bool = True):
    # json writes floats with repr, the shortest string that round-trips exactly.
    text = json.dumps(model_to_dict(model, meta, timestamp), indent=2)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_model(path) -> FittedBScaling:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from None
    return model_from_dict(d)
