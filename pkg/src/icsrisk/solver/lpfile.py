"""CPLEX-style LP text files and ``name value`` solution files.

Every column appears in the Bounds section in column order, so a parsed file
restores the original ordering. Numbers are written with ``repr`` and round
trip exactly. The objective constant has no LP-format syntax and is carried
in a comment on the objective line.
"""
from __future__ import annotations

import math
import re
import warnings
from pathlib import Path

import numpy as np
import scipy.sparse as sp

SECTIONS = ("Minimize", "Subject To", "Bounds", "Binary", "General", "End")
_CONST_RE = re.compile(r"\\\s*constant\s*=\s*(\S+)")
_SENSE_OUT = {"L": "<=", "G": ">=", "E": "="}
_SENSE_IN = {"<=": "L", "=<": "L", "<": "L", ">=": "G", "=>": "G", ">": "G", "=": "E"}
TERMS_PER_LINE = 6


class LpFormatError(ValueError):
    pass


def _num(v: float) -> str:
    if math.isinf(v):
        return "+inf" if v > 0 else "-inf"
    return repr(float(v))


def _terms(cols, vals, names) -> list[str]:
    out = []
    for j, v in zip(cols, vals):
        out.append(f"{'-' if v < 0 else '+'} {_num(abs(v))} {names[j]}")
    return out


def _wrap(head: str, terms: list[str], tail: str = "") -> list[str]:
    lines = []
    for k in range(0, max(len(terms), 1), TERMS_PER_LINE):
        chunk = " ".join(terms[k:k + TERMS_PER_LINE])
        lines.append(("  " if k else head) + chunk)
    lines[-1] += tail
    return lines


def format_lp(instance) -> str:
    names, A = instance.names, sp.csr_matrix(instance.A)
    out = [f"\\ {len(names)} columns, {len(instance.row_names)} rows", "Minimize"]
    nz = np.nonzero(instance.c)[0]
    obj_terms = _terms(nz, instance.c[nz], names) or [f"+ 0.0 {names[0]}"]
    out.append(f" obj: \\ constant = {_num(instance.constant)}")
    out += _wrap("   ", obj_terms)
    out.append("Subject To")
    for r, rname in enumerate(instance.row_names):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        terms = _terms(A.indices[lo:hi], A.data[lo:hi], names) or [f"+ 0.0 {names[0]}"]
        tail = f" {_SENSE_OUT[instance.sense[r]]} {_num(instance.rhs[r])}"
        out += _wrap(f" {rname}: ", terms, tail)
    out.append("Bounds")
    for j, n in enumerate(names):
        lo, hi = instance.lb[j], instance.ub[j]
        if lo == hi:
            out.append(f" {n} = {_num(lo)}")
        else:
            out.append(f" {_num(lo)} <= {n} <= {_num(hi)}")
    for section, kind in (("Binary", "B"), ("General", "I")):
        cols = [n for n, k in zip(names, instance.kinds) if k == kind]
        if cols:
            out.append(section)
            out += [f" {n}" for n in cols]
    out.append("End")
    return "\n".join(out) + "\n"


def export_lp(instance, path) -> Path:
    path = Path(path)
    path.write_text(format_lp(instance))
    return path


def _parse_float(tok: str) -> float:
    t = tok.lower()
    if t in ("+inf", "inf", "+infinity", "infinity"):
        return math.inf
    if t in ("-inf", "-infinity"):
        return -math.inf
    return float(tok)


def _parse_expr(text: str) -> list[tuple[str, float]]:
    toks = text.split()
    terms, k = [], 0
    while k < len(toks):
        sign = 1.0
        if toks[k] in "+-":
            sign = -1.0 if toks[k] == "-" else 1.0
            k += 1
        coef = 1.0
        try:
            coef = float(toks[k])
            k += 1
        except (ValueError, IndexError):
            pass
        if k >= len(toks):
            raise LpFormatError(f"dangling coefficient in {text!r}")
        terms.append((toks[k], sign * coef))
        k += 1
    return terms


def parse_lp(text: str):
    """Parse a file written by ``format_lp`` back into a MilpInstance."""
    from ..milp import MilpInstance  # local import keeps the solver package standalone

    section, constant = None, 0.0
    chunks: dict[str, list[str]] = {s: [] for s in SECTIONS}
    for raw in text.splitlines():
        m = _CONST_RE.search(raw)
        if m:
            constant = _parse_float(m.group(1))
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        if line in SECTIONS:
            section = line
            continue
        if section is None:
            raise LpFormatError(f"content before the first section: {line!r}")
        chunks[section].append(line)

    names, lb, ub = [], [], []
    for line in chunks["Bounds"]:
        toks = line.split()
        if len(toks) == 3 and toks[1] == "=":
            names.append(toks[0]); lb.append(_parse_float(toks[2])); ub.append(_parse_float(toks[2]))
        elif len(toks) == 5 and toks[1] == toks[3] == "<=":
            names.append(toks[2]); lb.append(_parse_float(toks[0])); ub.append(_parse_float(toks[4]))
        else:
            raise LpFormatError(f"unsupported bound line {line!r}")
    col = {n: j for j, n in enumerate(names)}
    kinds = np.array(["C"] * len(names))
    for section, kind in (("Binary", "B"), ("General", "I")):
        for line in chunks[section]:
            for n in line.split():
                kinds[col[n]] = kind

    def lookup(n):
        if n not in col:
            raise LpFormatError(f"variable {n!r} missing from Bounds")
        return col[n]

    obj = " ".join(chunks["Minimize"])
    if not obj.startswith("obj:"):
        raise LpFormatError("objective must be labelled obj:")
    c = np.zeros(len(names))
    for n, v in _parse_expr(obj[4:]):
        c[lookup(n)] += v

    rows, sense, rhs, data, ri, ci = [], [], [], [], [], []
    pending = ""
    for line in chunks["Subject To"]:
        pending = f"{pending} {line}" if pending else line
        m = re.search(r"(<=|>=|=<|=>|<|>|=)\s*(\S+)$", pending)
        if not m:
            continue
        name, expr = pending[:m.start()].split(":", 1)
        r = len(rows)
        rows.append(name.strip())
        sense.append(_SENSE_IN[m.group(1)])
        rhs.append(_parse_float(m.group(2)))
        for n, v in _parse_expr(expr):
            if v != 0.0:
                ri.append(r); ci.append(lookup(n)); data.append(v)
        pending = ""
    if pending:
        raise LpFormatError(f"unterminated constraint {pending!r}")
    A = sp.csr_matrix((data, (ri, ci)), shape=(len(rows), len(names)))
    A.sort_indices()
    return MilpInstance(names=names, kinds=kinds, lb=np.array(lb, dtype=float),
                        ub=np.array(ub, dtype=float), A=A, sense=np.array(sense),
                        rhs=np.array(rhs, dtype=float), row_names=rows, c=c, constant=constant)


def read_lp(path):
    return parse_lp(Path(path).read_text())


def write_solution(path, names, x) -> Path:
    path = Path(path)
    path.write_text("".join(f"{n} {_num(v)}\n" for n, v in zip(names, x)))
    return path


def import_solution(path, instance) -> np.ndarray:
    """Vector aligned with ``instance.name_map``; absent names default to 0."""
    x = np.zeros(instance.n_cols)
    seen = np.zeros(instance.n_cols, dtype=bool)
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if len(toks) != 2:
            raise LpFormatError(f"line {lineno}: expected 'name value', got {raw!r}")
        if toks[0] not in instance.name_map:
            raise LpFormatError(f"line {lineno}: unknown variable {toks[0]!r}")
        j = instance.name_map[toks[0]]
        x[j] = _parse_float(toks[1])
        seen[j] = True
    missing = int((~seen).sum())
    if missing:
        warnings.warn(f"{missing} variables absent from solution file default to 0", stacklevel=2)
    return x
