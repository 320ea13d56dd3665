"""Plain-text complex matrices and vectors.

Format::

    matrix 3            (or: vector 3)
    1+0i 0+0i 0+0i
    0+0i 0+1i 0+0i
    0+0i 0+0i -1+0i

Entries are ``a+bi`` pairs separated by whitespace, one matrix row per line
(one entry per line for vectors). Blank lines and ``#`` comments are skipped.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def format_complex(z: complex) -> str:
    return f"{z.real:.17g}{z.imag:+.17g}i"


def parse_complex(token: str) -> complex:
    t = token.strip().replace("I", "i")
    if t.endswith("i"):
        t = t[:-1] + "j"
    try:
        return complex(t)
    except ValueError:
        raise ValueError(f"cannot parse complex entry {token!r}") from None


def loads(text: str) -> np.ndarray:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError("empty file")
    head = lines[0].split()
    if len(head) != 2 or head[0] not in ("matrix", "vector") or not head[1].isdigit():
        raise ValueError(f"bad header {lines[0]!r}; expected 'matrix <d>' or 'vector <d>'")
    kind, d = head[0], int(head[1])
    rows = [[parse_complex(tok) for tok in ln.split()] for ln in lines[1:]]
    if kind == "vector":
        entries = [z for row in rows for z in row]
        if len(entries) != d:
            raise ValueError(f"expected {d} vector entries, got {len(entries)}")
        return np.array(entries, dtype=complex)
    if len(rows) != d or any(len(r) != d for r in rows):
        raise ValueError(f"expected a {d}x{d} matrix")
    return np.array(rows, dtype=complex)


def dumps(a: np.ndarray) -> str:
    a = np.asarray(a, dtype=complex)
    if a.ndim == 1:
        return f"vector {a.shape[0]}\n" + "".join(format_complex(z) + "\n" for z in a)
    out = [f"matrix {a.shape[0]}"]
    out += [" ".join(format_complex(z) for z in row) for row in a]
    return "\n".join(out) + "\n"


def load(path) -> np.ndarray:
    return loads(Path(path).read_text())


def save(path, a: np.ndarray):
    Path(path).write_text(dumps(a))
