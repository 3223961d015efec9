"""Subset a large word-vector text file to a class vocabulary.

The engine resolves a class name by exact token first, then by averaging
the vectors of its sub-tokens (split on spaces, underscores, hyphens).
The exporter mirrors that rule when deciding which source lines a class
needs, and passes the matching lines through unchanged.
"""
from __future__ import annotations

import re

from .errors import ExportError, MissingTokenError

_SPLIT = re.compile(r"[ _\-]+")


def read_class_list(path) -> list[str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            names = [line.strip() for line in fh if line.strip()]
    except OSError as exc:
        raise ExportError(f"cannot read class list {path}: {exc}") from exc
    if not names:
        raise ExportError(f"class list {path} is empty")
    return names


def _scan_source(path) -> dict[str, str]:
    """First line per token, verbatim minus trailing whitespace."""
    table: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for raw in fh:
                parts = raw.split()
                if len(parts) < 2:
                    continue
                table.setdefault(parts[0], raw.rstrip())
    except OSError as exc:
        raise ExportError(f"cannot read vector source {path}: {exc}") from exc
    if not table:
        raise ExportError(f"vector source {path} holds no vectors")
    return table


def subset_word_vectors(class_names: list[str], source_path) -> list[str]:
    """Source lines covering every class, in class order, deduplicated."""
    table = _scan_source(source_path)
    lines: list[str] = []
    emitted: set[str] = set()
    missing: list[str] = []

    def emit(token: str) -> None:
        if token not in emitted:
            emitted.add(token)
            lines.append(table[token])

    for name in class_names:
        if name in table:
            emit(name)
            continue
        hits = [tok for tok in _SPLIT.split(name) if tok in table]
        if hits:
            for tok in hits:
                emit(tok)
        else:
            missing.append(name)
    if missing:
        raise MissingTokenError(missing)

    widths = {len(line.split()) for line in lines}
    if len(widths) > 1:
        raise ExportError(
            f"selected source lines disagree on width: {sorted(widths)}"
        )
    return lines


def write_word_vectors(path, lines: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
