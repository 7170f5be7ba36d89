"""Machine-readable input/output formats.

Complex numbers are serialized as [re, im] pairs, matrices as row-major lists
of rows. CSV files are RFC-4180 style with a mandatory header row and numbers
printed with 17 significant digits, so CSV and JSON duals round-trip to the
same values.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from datetime import datetime, timezone

import numpy as np

from ._version import __version__
from .channels import KrausChannel, kraus_from_unitary
from .harness import RunSummary, TrialRecord, VariantValues
from .linalg import SubsystemLayout


class SpecParseError(ValueError):
    """Input document violates the expected schema; carries the offending path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def encode_complex(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


def encode_matrix(m: np.ndarray) -> list[list[list[float]]]:
    return [[encode_complex(z) for z in row] for row in np.asarray(m, dtype=complex)]


def decode_matrix(obj, path: str) -> np.ndarray:
    if not isinstance(obj, list) or not obj:
        raise SpecParseError(path, "expected a non-empty list of rows")
    ncols = None
    rows = []
    for i, row in enumerate(obj):
        if not isinstance(row, list) or not row:
            raise SpecParseError(f"{path}[{i}]", "expected a non-empty row list")
        if ncols is None:
            ncols = len(row)
        elif len(row) != ncols:
            raise SpecParseError(f"{path}[{i}]", f"row has {len(row)} entries, expected {ncols}")
        entries = []
        for j, entry in enumerate(row):
            if (not isinstance(entry, list)) or len(entry) != 2:
                raise SpecParseError(f"{path}[{i}][{j}]", "expected a [re, im] pair")
            re, im = entry
            if not all(isinstance(x, (int, float)) and math.isfinite(x) for x in (re, im)):
                raise SpecParseError(f"{path}[{i}][{j}]", "entries must be finite numbers")
            entries.append(complex(re, im))
        rows.append(entries)
    return np.array(rows, dtype=complex)


def channel_from_spec(obj, path: str = "channel") -> KrausChannel:
    """Channel from a JSON object: either a dilation or an explicit Kraus list.

    {"unitary": matrix, "dims": [dim_S, dim_E], "env_initial": 0}  or
    {"kraus": [matrix, ...], "no_jump_index": 0}
    """
    if not isinstance(obj, dict):
        raise SpecParseError(path, "expected an object")
    if "unitary" in obj:
        u = decode_matrix(obj["unitary"], f"{path}.unitary")
        dims = obj.get("dims")
        if (not isinstance(dims, list)) or len(dims) != 2 or not all(isinstance(d, int) and d > 0 for d in dims):
            raise SpecParseError(f"{path}.dims", "expected [dim_S, dim_E] positive integers")
        env_initial = obj.get("env_initial", 0)
        if not isinstance(env_initial, int) or not 0 <= env_initial < dims[1]:
            raise SpecParseError(f"{path}.env_initial", f"expected an integer in [0, {dims[1]})")
        return kraus_from_unitary(u, SubsystemLayout(tuple(dims), ("S", "E")), env_initial)
    if "kraus" in obj:
        ops_obj = obj["kraus"]
        if not isinstance(ops_obj, list) or not ops_obj:
            raise SpecParseError(f"{path}.kraus", "expected a non-empty list of matrices")
        ops = tuple(decode_matrix(m, f"{path}.kraus[{i}]") for i, m in enumerate(ops_obj))
        no_jump = obj.get("no_jump_index", 0)
        if not isinstance(no_jump, int) or not 0 <= no_jump < len(ops):
            raise SpecParseError(f"{path}.no_jump_index", f"expected an integer in [0, {len(ops)})")
        return KrausChannel(ops, no_jump_index=no_jump)
    raise SpecParseError(path, "expected either a 'unitary' or a 'kraus' entry")


# Fixed column order of trials.csv; trials.json mirrors it exactly.
CSV_COLUMNS = (
    ("trial_id", "gamma")
    + tuple(f"theta_{i}" for i in range(1, 13))
    + ("a_i", "a_j", "b_i", "b_j")
    + tuple(f"{q}_{v}" for v in ("exact", "approx", "sampled")
            for q in ("c_real", "xi_b", "q_ab", "lower", "upper", "tur_lhs"))
    + ("postselect_p0", "violated_exact", "violated_sampled")
)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".17g")


def _variant_cells(v: VariantValues | None) -> list:
    if v is None:
        return [None] * 6
    return [v.c_real, v.xi_b, v.q_ab, v.lower, v.upper, v.tur_lhs]


def record_row(r: TrialRecord) -> dict:
    row: dict = {"trial_id": r.trial_id, "gamma": r.gamma}
    for i, t in enumerate(r.thetas, start=1):
        row[f"theta_{i}"] = t
    row["a_i"], row["a_j"] = r.a_idx
    row["b_i"], row["b_j"] = r.b_idx
    for variant, values in (("exact", r.exact), ("approx", r.approx), ("sampled", r.sampled)):
        for name, cell in zip(("c_real", "xi_b", "q_ab", "lower", "upper", "tur_lhs"), _variant_cells(values)):
            row[f"{name}_{variant}"] = cell
    row["postselect_p0"] = r.postselect_p0
    row["violated_exact"] = r.exact.tur_violated
    row["violated_sampled"] = None if r.sampled is None else r.sampled.tur_violated
    return row


def trials_csv_text(records: list[TrialRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        row = record_row(r)
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def _sanitize(x):
    """Replace non-finite floats (degenerate ratios) with string markers for JSON."""
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if isinstance(x, dict):
        return {k: _sanitize(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_sanitize(v) for v in x]
    return x


def dumps_json(obj) -> str:
    return json.dumps(_sanitize(obj), indent=2, sort_keys=False, default=_json_default, allow_nan=False) + "\n"


def trials_json_text(records: list[TrialRecord]) -> str:
    return dumps_json({"trials": [record_row(r) for r in records]})


def summary_json_text(summary: RunSummary) -> str:
    # Wall-clock runtime is recorded in the manifest instead so that identical
    # configurations reproduce byte-identical artifact checksums.
    data = {
        "n_trials": summary.n_trials,
        "violations": summary.violations,
        "margin_min": summary.margin_min,
        "margin_median": summary.margin_median,
        "degenerate_trials": summary.degenerate_trials,
        "failed_trials": summary.failed_trials,
        "gap_bucket_edges": list(summary.gap_bucket_edges),
        "gap_bucket_medians": list(summary.gap_bucket_medians),
    }
    return dumps_json(data)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def manifest_text(config_echo: dict, outputs: dict[str, bytes], runtime_seconds: float) -> str:
    """Run manifest referencing every emitted data file exactly once."""
    config_blob = json.dumps(config_echo, sort_keys=True).encode()
    data = {
        "tool_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "config": config_echo,
        "inputs_checksum": sha256_hex(config_blob),
        "runtime_seconds": runtime_seconds,
        "outputs": [
            {"path": name, "sha256": sha256_hex(blob), "bytes": len(blob)}
            for name, blob in sorted(outputs.items())
        ],
    }
    return dumps_json(data)
