"""
Reading and writing matrix and block cut files.

Files ending in ``.json`` hold ``{"rows": m, "cols": n, "data": [...]}`` with
``data`` a flat row-major list, or a list of rows.
Anything else is whitespace separated text: ``m n`` on the first line followed
by ``m`` lines of ``n`` integers. Lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import TextIO

import jsonschema

from hegemm_errors import HegemmError, MatrixFormatError
from hegmm_algos import BlockPlan
from matrix_core import Matrix

log = logging.getLogger(__name__)

MATRIX_SCHEMA = {
    "type": "object",
    "required": ["rows", "cols", "data"],
    "properties": {
        "rows": {"type": "integer", "minimum": 1},
        "cols": {"type": "integer", "minimum": 1},
        "data": {
            "oneOf": [
                {"type": "array", "items": {"type": "integer"}},
                {"type": "array", "minItems": 1, "items": {"type": "array", "items": {"type": "integer"}}},
            ]
        },
    },
}

CUTS_SCHEMA = {
    "type": "object",
    "required": ["row_cuts", "inner_cuts", "col_cuts"],
    "additionalProperties": False,
    "properties": {
        name: {"type": "array", "minItems": 2, "items": {"type": "integer", "minimum": 0}}
        for name in ("row_cuts", "inner_cuts", "col_cuts")
    },
}


def is_json_path(path: str | Path) -> bool:
    return Path(path).suffix.lower() == ".json"


def _content_lines(text: str) -> list[str]:
    return [line for line in (raw.strip() for raw in text.splitlines()) if line and not line.startswith("#")]


def _parse_int_row(line: str, what: str) -> list[int]:
    try:
        return [int(token) for token in line.split()]
    except ValueError as e:
        raise MatrixFormatError(f"{what}: non-integer value in '{line}'") from e


def parse_matrix_text(text: str, what: str = "matrix") -> Matrix:
    lines = _content_lines(text)
    if not lines:
        raise MatrixFormatError(f"{what}: empty input")
    header = _parse_int_row(lines[0], what)
    if len(header) != 2:
        raise MatrixFormatError(f"{what}: first line must hold 'rows cols', got '{lines[0]}'")
    rows, cols = header
    body = [_parse_int_row(line, what) for line in lines[1:]]
    if len(body) != rows or any(len(row) != cols for row in body):
        raise MatrixFormatError(f"{what}: expected {rows} rows of {cols} integers")
    return _build(rows, cols, body, what)


def parse_matrix_json(text: str, what: str = "matrix") -> Matrix:
    try:
        document = json.loads(text)
        jsonschema.validate(document, MATRIX_SCHEMA)
    except (json.JSONDecodeError, jsonschema.ValidationError) as e:
        raise MatrixFormatError(f"{what}: {e}") from e
    rows, cols, data = document["rows"], document["cols"], document["data"]
    if data and all(isinstance(value, int) for value in data):
        if len(data) != rows * cols:
            raise MatrixFormatError(f"{what}: 'data' holds {len(data)} values, expected {rows * cols}")
        data = [data[row * cols : (row + 1) * cols] for row in range(rows)]
    if len(data) != rows or any(len(row) != cols for row in data):
        raise MatrixFormatError(f"{what}: 'data' is not a {rows}x{cols} array")
    return _build(rows, cols, data, what)


def _build(rows: int, cols: int, data: list[list[int]], what: str) -> Matrix:
    if rows < 1 or cols < 1:
        raise MatrixFormatError(f"{what}: dimensions must be positive, got {rows}x{cols}")
    try:
        return Matrix.from_rows(data)
    except HegemmError:
        raise
    except (TypeError, ValueError) as e:
        raise MatrixFormatError(f"{what}: {e}") from e


def read_matrix(path: str | Path) -> Matrix:
    """
    Load a matrix, choosing the format by file extension.

    :raises MatrixFormatError: If the content does not parse.
    :raises OSError: If the file cannot be read.
    """
    text = Path(path).read_text(encoding="utf-8")
    if is_json_path(path):
        return parse_matrix_json(text, str(path))
    return parse_matrix_text(text, str(path))


def format_matrix(matrix: Matrix, as_json: bool = False) -> str:
    if as_json:
        return json.dumps({"rows": matrix.rows, "cols": matrix.cols, "data": matrix.data.tolist()}) + "\n"
    lines = [f"{matrix.rows} {matrix.cols}"]
    lines.extend(" ".join(str(value) for value in row) for row in matrix.to_rows())
    return "\n".join(lines) + "\n"


def write_matrix(matrix: Matrix, stream: TextIO, as_json: bool = False):
    stream.write(format_matrix(matrix, as_json))


def read_cuts(path: str | Path) -> BlockPlan:
    """
    Load block cuts.

    JSON files hold ``row_cuts``, ``inner_cuts`` and ``col_cuts`` arrays; text
    files hold the three cut lists on three lines in that order.
    """
    text = Path(path).read_text(encoding="utf-8")
    if is_json_path(path):
        try:
            document = json.loads(text)
            jsonschema.validate(document, CUTS_SCHEMA)
        except (json.JSONDecodeError, jsonschema.ValidationError) as e:
            raise MatrixFormatError(f"{path}: {e}") from e
        return BlockPlan(document["row_cuts"], document["inner_cuts"], document["col_cuts"])
    lines = _content_lines(text)
    if len(lines) != 3:
        raise MatrixFormatError(f"{path}: expected three lines of cuts, got {len(lines)}")
    row_cuts, inner_cuts, col_cuts = (_parse_int_row(line, str(path)) for line in lines)
    return BlockPlan(row_cuts, inner_cuts, col_cuts)
