"""Reader and writer for the LibSVM sparse text format.

Each line is ``label idx:val idx:val ...`` with 1-based, strictly increasing
feature indices.  ``#`` starts a comment that runs to the end of the line.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np

from .errors import ParseError


@dataclass
class SparseExamples:
    rows: list[tuple[float, list[tuple[int, float]]]]
    num_features: int

    def __post_init__(self):
        for r, (_, entries) in enumerate(self.rows):
            prev = 0
            for idx, _ in entries:
                if idx <= prev or idx > self.num_features:
                    raise ValueError(f"row {r}: bad feature index {idx}")
                prev = idx

    def __len__(self):
        return len(self.rows)

    @property
    def labels(self) -> np.ndarray:
        return np.array([label for label, _ in self.rows], dtype=float)

    def to_dense(self) -> np.ndarray:
        F = np.zeros((len(self.rows), self.num_features))
        for r, (_, entries) in enumerate(self.rows):
            for idx, val in entries:
                F[r, idx - 1] = val
        return F

    def head(self, k: int) -> "SparseExamples":
        return SparseExamples(self.rows[:k], self.num_features)


def _as_lines(text) -> Iterable[str]:
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    if isinstance(text, str):
        return io.StringIO(text)
    return (line.decode("utf-8") if isinstance(line, bytes) else line for line in text)


def parse_libsvm(text: str | bytes | IO, max_rows: int | None = None,
                 num_features: int | None = None) -> SparseExamples:
    """Parse LibSVM-formatted text.

    Parameters
    ----------
    text : str, bytes or file object
    max_rows : int, optional
        Stop after this many data rows.
    num_features : int, optional
        Override the feature count; defaults to the largest index seen.

    Raises
    ------
    ParseError
        With 1-based line and column of the offending token.
    """
    rows = []
    max_idx = 0
    for lineno, raw in enumerate(_as_lines(text), start=1):
        if max_rows is not None and len(rows) >= max_rows:
            break
        line = raw.split("#", 1)[0].rstrip("\r\n")
        tokens = []
        pos = 0
        for tok in line.split():
            pos = line.index(tok, pos)
            tokens.append((pos + 1, tok))
            pos += len(tok)
        if not tokens:
            continue
        col, tok = tokens[0]
        try:
            label = float(tok)
        except ValueError:
            raise ParseError(lineno, col, f"non-numeric label {tok!r}") from None
        entries = []
        prev = 0
        for col, tok in tokens[1:]:
            key, sep, val = tok.partition(":")
            if not sep or not key or not val:
                raise ParseError(lineno, col, f"malformed pair {tok!r}")
            try:
                idx = int(key)
            except ValueError:
                raise ParseError(lineno, col, f"non-integer index {key!r}") from None
            try:
                value = float(val)
            except ValueError:
                raise ParseError(lineno, col, f"non-numeric value {val!r}") from None
            if idx < 1:
                raise ParseError(lineno, col, f"index {idx} is not positive")
            if idx <= prev:
                raise ParseError(lineno, col, f"index {idx} does not increase (previous {prev})")
            prev = idx
            entries.append((idx, value))
        max_idx = max(max_idx, prev)
        rows.append((label, entries))
    if num_features is None:
        num_features = max_idx
    elif num_features < max_idx:
        raise ParseError(0, 0, f"num_features={num_features} below largest index {max_idx}")
    return SparseExamples(rows, num_features)


def dump_libsvm(examples: SparseExamples) -> str:
    lines = []
    for label, entries in examples.rows:
        parts = [repr(float(label))] + [f"{idx}:{val!r}" for idx, val in entries]
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def read_libsvm(path, max_rows: int | None = None) -> SparseExamples:
    with open(path, "rb") as fh:
        return parse_libsvm(fh, max_rows=max_rows)
