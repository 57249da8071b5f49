"""Plain-text LP file writer for the k-median / k-facility-location integer program."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .metric import DistanceMatrix

_TERMS_PER_LINE = 6


def _num(v: float) -> str:
    v = float(v)
    if v == 0:
        v = 0.0  # never print -0
    return format(v, ".17g")


def _wrap(head: str, terms: list[str], tail: str = "") -> list[str]:
    lines = []
    for start in range(0, len(terms), _TERMS_PER_LINE):
        chunk = " ".join(terms[start:start + _TERMS_PER_LINE])
        lines.append((head if start == 0 else "  ") + " " + chunk)
    if not lines:
        lines.append(head)
    if tail:
        lines[-1] += " " + tail
    return lines


def export_ilp(D: DistanceMatrix, k: int, opening: Optional[np.ndarray] = None) -> str:
    """Write the integer program with variables ``y_<i>`` and ``x_<i>_<j>``.

    Site indices name the variables. The model has n + n*m binaries and
    m assignment rows, one cardinality row and n*m linking rows.
    """
    E, P = D.rows, D.cols
    out = ["\\ k-median" + (" with opening costs" if opening is not None else "")
           + f": {len(E)} facilities, {len(P)} clients, k = {k}"]
    out.append("Minimize")
    terms = []
    if opening is not None:
        for i, c in zip(E, opening):
            terms.append(f"+ {_num(c)} y_{i}")
    for a, i in enumerate(E):
        for b, j in enumerate(P):
            terms.append(f"+ {_num(D.values[a, b])} x_{i}_{j}")
    out += _wrap(" obj:", terms)

    out.append("Subject To")
    for j in P:
        out += _wrap(f" assign_{j}:", [f"+ x_{i}_{j}" for i in E], "= 1")
    out += _wrap(" card:", [f"+ y_{i}" for i in E], f"<= {int(k)}")
    for i in E:
        for j in P:
            out.append(f" link_{i}_{j}: + x_{i}_{j} - y_{i} <= 0")

    out.append("Bounds")
    for i in E:
        out.append(f" 0 <= y_{i} <= 1")
    for i in E:
        for j in P:
            out.append(f" 0 <= x_{i}_{j} <= 1")

    out.append("Binaries")
    names = [f"y_{i}" for i in E] + [f"x_{i}_{j}" for i in E for j in P]
    for start in range(0, len(names), 10):
        out.append(" " + " ".join(names[start:start + 10]))
    out.append("End")
    return "\n".join(out) + "\n"
