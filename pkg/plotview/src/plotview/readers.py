"""Strict readers for the mfelab artifact schemas.

Any mismatch is reported with the offending column or key by name; nothing
is silently coerced.
"""

from __future__ import annotations

import json

import numpy as np

BRANCH_COLUMNS = ("step", "lambda", "u_max", "J", "qid_residual", "n_peaks",
                  "peak1_x", "peak1_y", "peak1_m1", "peak1_mg",
                  "min_bdry_dist", "u_minus_sup")
FAMILY_COLUMNS = ("r", "theta", "J", "K1", "Kg", "cm_x", "cm_y")
DIAGNOSTICS_KEYS = ("thresholds", "peaks", "quantization", "concentration",
                    "center_of_mass")


class SchemaError(ValueError):
    """Artifact does not match the documented schema."""


def _check_header(found: list[str], expected: tuple[str, ...], what: str):
    for pos, name in enumerate(expected):
        if pos >= len(found):
            raise SchemaError(f"{what}: missing column '{name}'")
        if found[pos] != name:
            raise SchemaError(f"{what}: expected column '{name}' at position "
                              f"{pos}, found '{found[pos]}'")
    if len(found) > len(expected):
        raise SchemaError(f"{what}: unexpected column '{found[len(expected)]}'")


def _read_csv(path, expected: tuple[str, ...], what: str) -> dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip()
        _check_header(header.split(","), expected, what)
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(expected):
                raise SchemaError(f"{what}: row {lineno} has {len(parts)} fields, "
                                  f"expected {len(expected)}")
            try:
                rows.append([float(v) for v in parts])
            except ValueError as exc:
                raise SchemaError(f"{what}: row {lineno}: {exc}") from exc
    if not rows:
        raise SchemaError(f"{what}: no data rows")
    data = np.array(rows)
    return {name: data[:, k] for k, name in enumerate(expected)}


def read_branch_csv(path) -> dict[str, np.ndarray]:
    return _read_csv(path, BRANCH_COLUMNS, "branch CSV")


def read_family_csv(path) -> dict[str, np.ndarray]:
    return _read_csv(path, FAMILY_COLUMNS, "family CSV")


def read_diagnostics_json(path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    for key in DIAGNOSTICS_KEYS:
        if key not in data:
            raise SchemaError(f"diagnostics JSON: missing key '{key}'")
    conc = data["concentration"]
    for key in ("radii", "values"):
        if key not in conc:
            raise SchemaError(f"diagnostics JSON: concentration missing key '{key}'")
    if len(conc["radii"]) != len(conc["values"]):
        raise SchemaError("diagnostics JSON: concentration radii/values lengths differ")
    return data


def read_field_dump(path) -> dict:
    """Field dump: `nx ny spacing shape-tag` header, then `i j x y value`
    rows; unknown trailing columns are ignored."""
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) < 4:
            raise SchemaError("field dump: malformed header (need 'nx ny spacing shape-tag')")
        try:
            nx, ny, spacing = int(head[0]), int(head[1]), float(head[2])
        except ValueError as exc:
            raise SchemaError(f"field dump: malformed header: {exc}") from exc
        i, j, x, y, v = [], [], [], [], []
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 5:
                raise SchemaError(f"field dump: row {lineno} has {len(parts)} "
                                  "columns, need at least 5")
            i.append(int(parts[0]))
            j.append(int(parts[1]))
            x.append(float(parts[2]))
            y.append(float(parts[3]))
            v.append(float(parts[4]))
    if not v:
        raise SchemaError("field dump: no data rows")
    return {"nx": nx, "ny": ny, "spacing": spacing, "shape_tag": head[3],
            "i": np.array(i), "j": np.array(j), "x": np.array(x),
            "y": np.array(y), "values": np.array(v)}
