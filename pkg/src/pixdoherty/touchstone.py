"""Minimal Touchstone v1 reader/writer for 1- to 4-port scattering data."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParseError
from .netalg import Kind, NetworkMatrix

_UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}


def _order(n):
    # Touchstone v1 stores 2-ports column-major (S11 S21 S12 S22), larger ones row-major
    if n == 2:
        return [(0, 0), (1, 0), (0, 1), (1, 1)]
    return [(i, j) for i in range(n) for j in range(n)]


def format_touchstone(net: NetworkMatrix, fmt="RI", comments=()) -> str:
    if net.kind is not Kind.SCATTERING:
        raise TypeError("only scattering data is exported to Touchstone")
    fmt = fmt.upper()
    if fmt not in ("RI", "MA"):
        raise ValueError("fmt must be 'RI' or 'MA'")
    n = net.nports
    lines = [f"! {c}" for c in comments]
    lines.append(f"# HZ S {fmt} R {net.z_ref:g}")
    for f, m in zip(net.freqs, net.data):
        vals = []
        for i, j in _order(n):
            v = m[i, j]
            if fmt == "RI":
                vals.append(f"{v.real:.12e} {v.imag:.12e}")
            else:
                vals.append(f"{abs(v):.12e} {np.degrees(np.angle(v)):.12e}")
        per_line = 4 if n > 2 else len(vals)
        chunks = [vals[k : k + per_line] for k in range(0, len(vals), per_line)]
        first = f"{f:.12e} " + " ".join(chunks[0])
        lines.append(first)
        for c in chunks[1:]:
            lines.append(" " * 20 + " ".join(c))
    return "\n".join(lines) + "\n"


def write_touchstone(net: NetworkMatrix, path, fmt="RI", comments=()) -> Path:
    path = Path(path)
    path.write_text(format_touchstone(net, fmt, comments))
    return path


def parse_touchstone(text: str, nports: int) -> NetworkMatrix:
    unit, fmt, z_ref = 1e9, "MA", 50.0
    tokens = []
    seen_option = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("!", 1)[0].strip()
        if not line:
            continue
        if line.startswith("#"):
            if seen_option:
                raise ParseError("duplicate option line", lineno)
            seen_option = True
            opts = line[1:].upper().split()
            k = 0
            while k < len(opts):
                o = opts[k]
                if o in _UNITS:
                    unit = _UNITS[o]
                elif o in ("RI", "MA", "DB"):
                    fmt = o
                elif o == "S":
                    pass
                elif o in ("Y", "Z", "H", "G"):
                    raise ParseError(f"unsupported parameter type {o}", lineno)
                elif o == "R":
                    try:
                        z_ref = float(opts[k + 1])
                    except (IndexError, ValueError):
                        raise ParseError("missing reference impedance after R", lineno) from None
                    k += 1
                else:
                    raise ParseError(f"unknown option {o!r}", lineno)
                k += 1
            continue
        for col, tok in enumerate(line.split(), 1):
            try:
                tokens.append(float(tok))
            except ValueError:
                raise ParseError(f"bad number {tok!r}", lineno, col) from None
    per = 1 + 2 * nports * nports
    if not tokens or len(tokens) % per:
        raise ParseError(f"{len(tokens)} numbers is not a multiple of {per} for a {nports}-port")
    rows = np.asarray(tokens).reshape(-1, per)
    freqs = rows[:, 0] * unit
    a, b = rows[:, 1::2], rows[:, 2::2]
    if fmt == "RI":
        vals = a + 1j * b
    elif fmt == "MA":
        vals = a * np.exp(1j * np.radians(b))
    else:
        vals = 10 ** (a / 20) * np.exp(1j * np.radians(b))
    data = np.zeros((len(freqs), nports, nports), dtype=complex)
    for k, (i, j) in enumerate(_order(nports)):
        data[:, i, j] = vals[:, k]
    return NetworkMatrix(Kind.SCATTERING, freqs, data, z_ref)


def read_touchstone(path) -> NetworkMatrix:
    path = Path(path)
    suffix = path.suffix.lower()
    if not (suffix.startswith(".s") and suffix.endswith("p") and suffix[2:-1].isdigit()):
        raise ParseError(f"cannot infer port count from extension {path.suffix!r}")
    return parse_touchstone(path.read_text(), int(suffix[2:-1]))
