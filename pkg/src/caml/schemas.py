"""Column schemas for every CSV the harness writes, and a strict checker."""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path

SCHEMAS = {
    "curves": [("learner", str), ("query_type", int), ("seed", int), ("update", int),
               ("mean_return", float), ("std_return", float)],
    "endpoints": [("learner", str), ("query_type", int), ("seed", int), ("update", int),
                  ("episode", int), ("x", float), ("y", float)],
    "bandit": [("query_type", int), ("seed", int), ("rollout", int), ("medoid_index", int),
               ("episode_return", float), ("chosen", int)],
    "assignment": [("index", int), ("label", int), ("is_medoid", int)],
    "divergence_summary": [("update", int), ("mean_intra", float), ("mean_inter", float),
                           ("ratio", float), ("ari", float)],
    "population_summary": [("id", int), ("latent_group", int), ("remap", str),
                           ("offset_left", float), ("offset_right", float),
                           ("offset_down", float), ("offset_up", float)],
}


class SchemaError(ValueError):
    pass


def _check_value(kind, col, typ, value, lineno):
    try:
        if typ is int:
            if value.strip() != value or not value.lstrip("-").isdigit():
                raise ValueError
            int(value)
        elif typ is float:
            if not math.isfinite(float(value)):
                raise ValueError
    except ValueError:
        raise SchemaError(f"{kind}: line {lineno} column {col!r}: {value!r} is not {typ.__name__}") from None


def validate_rows(text, kind):
    """Check header and per-cell types; returns the parsed rows as dicts."""
    if kind == "distance_matrix":
        return validate_distance_matrix(text)
    schema = SCHEMAS[kind]
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise SchemaError(f"{kind}: empty file")
    header = rows[0]
    expected = [c for c, _ in schema]
    if header != expected:
        raise SchemaError(f"{kind}: header {header} != {expected}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(schema):
            raise SchemaError(f"{kind}: line {lineno} has {len(row)} fields, expected {len(schema)}")
        for (col, typ), value in zip(schema, row):
            _check_value(kind, col, typ, value, lineno)
        out.append(dict(zip(expected, row)))
    return out


def validate_distance_matrix(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][:1] != ["id"]:
        raise SchemaError("distance_matrix: header must start with 'id'")
    ids = rows[0][1:]
    if len(rows) - 1 != len(ids):
        raise SchemaError("distance_matrix: row count does not match header")
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(ids) + 1 or row[0] != ids[lineno - 2]:
            raise SchemaError(f"distance_matrix: line {lineno} malformed")
        for v in row[1:]:
            _check_value("distance_matrix", "entry", float, v, lineno)
    return rows


def validate_csv(path, kind):
    return validate_rows(Path(path).read_text(), kind)
