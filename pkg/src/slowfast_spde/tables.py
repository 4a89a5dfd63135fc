"""Deterministic CSV output: repr floats, '#' header comments, no timestamps.

Byte-identical reruns are an acceptance requirement, so formatting is pinned
here and nowhere else.
"""

import os

import numpy as np


def format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, columns: dict, header_comments=()) -> None:
    names = list(columns)
    cols = [list(columns[n]) for n in names]
    n_rows = len(cols[0]) if cols else 0
    if any(len(c) != n_rows for c in cols):
        raise ValueError("CSV columns have unequal lengths")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    lines = [f"# {c}" for c in header_comments]
    lines.append(",".join(names))
    for i in range(n_rows):
        lines.append(",".join(format_cell(col[i]) for col in cols))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path):
    """Read back a CSV written by write_csv: (comments, columns of strings)."""
    comments = []
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# "):
                comments.append(line[2:])
            elif line:
                rows.append(line.split(","))
    names = rows[0]
    columns = {n: [r[i] for r in rows[1:]] for i, n in enumerate(names)}
    return comments, columns
