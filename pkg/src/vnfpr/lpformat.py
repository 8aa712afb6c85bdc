"""Plain-text model interchange (LP and MPS style) and solution files.

The LP writer/parser round-trips a model exactly: coefficients are written
with repr() so float(text) returns the original bits.  Variable and
constraint names encode their semantic tags reversibly (see names.py).

Solution files are one ``name value`` pair per line; ``#`` starts a comment.
"""

from __future__ import annotations

import re
from typing import Mapping

from .model import Constraint, MilpModel, Objective, Variable
from .names import decode_name
from .solver import check_feasible


class FormatError(ValueError):
    pass


def _num(x: float) -> str:
    return repr(float(x))


def export_model(model: MilpModel, fmt: str = "lp") -> str:
    if fmt == "lp":
        return write_lp(model)
    if fmt == "mps":
        return write_mps(model)
    raise FormatError(f"unknown format {fmt!r}")


def _expr(coeffs: Mapping[int, float], model: MilpModel) -> str:
    parts = []
    for vid, coef in coeffs.items():
        name = model.variables[vid].name
        if coef >= 0:
            parts.append(f"+ {_num(coef)} {name}")
        else:
            parts.append(f"- {_num(-coef)} {name}")
    return " ".join(parts) if parts else "+ 0.0 ZERO_EXPR"


def write_lp(model: MilpModel) -> str:
    lines = ["Minimize"]
    obj = _expr(model.objective.coeffs, model)
    if model.objective.constant:
        obj += f" + {_num(model.objective.constant)} CONSTANT_ONE"
    lines.append(f" obj: {obj}")
    lines.append("Subject To")
    sense_txt = {"<=": "<=", ">=": ">=", "=": "="}
    for c in model.constraints:
        lines.append(f" {c.name}: {_expr(c.coeffs, model)} {sense_txt[c.sense]} {_num(c.rhs)}")
    lines.append("Bounds")
    for v in model.variables:
        lo = "-inf" if v.lb == float("-inf") else _num(v.lb)
        hi = "+inf" if v.ub == float("inf") else _num(v.ub)
        lines.append(f" {lo} <= {v.name} <= {hi}")
    binaries = [v.name for v in model.variables if v.kind == "bin"]
    if binaries:
        lines.append("Binaries")
        for i in range(0, len(binaries), 8):
            lines.append(" " + " ".join(binaries[i : i + 8]))
    lines.append("End")
    return "\n".join(lines) + "\n"


_TERM = re.compile(r"([+-])\s*([0-9.eE+-]+)\s+(\S+)")


def _parse_expr(text: str, line_no: int) -> list[tuple[str, float]]:
    terms = []
    pos = 0
    text = text.strip()
    if text and text[0] not in "+-":
        text = "+ " + text
    for m in _TERM.finditer(text):
        sign = -1.0 if m.group(1) == "-" else 1.0
        try:
            coef = float(m.group(2))
        except ValueError as exc:
            raise FormatError(f"line {line_no}: bad coefficient {m.group(2)!r}") from exc
        terms.append((m.group(3), sign * coef))
        pos = m.end()
    if text[pos:].strip():
        raise FormatError(f"line {line_no}: trailing junk {text[pos:]!r}")
    return terms


def parse_lp(text: str) -> MilpModel:
    """Rebuild a model from LP text written by write_lp.

    Index keys decoded from names are strings; semantic lookups that rely on
    typed keys are not available on parsed models (the constraint matrix,
    bounds and kinds are complete).
    """
    section = None
    obj_terms: list[tuple[str, float]] = []
    rows: list[tuple[str, list[tuple[str, float]], str, float]] = []
    bounds: dict[str, tuple[float, float]] = {}
    binaries: set[str] = set()
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("\\")[0].strip()
        if not line:
            continue
        low = line.lower()
        if low in ("minimize", "maximize", "subject to", "bounds", "binaries", "end"):
            section = low
            continue
        if section == "minimize":
            body = line.split(":", 1)[1] if ":" in line else line
            obj_terms.extend(_parse_expr(body, line_no))
        elif section == "subject to":
            if ":" not in line:
                raise FormatError(f"line {line_no}: constraint without a name")
            name, body = line.split(":", 1)
            m = re.search(r"(<=|>=|=)\s*([^<>=]+)$", body)
            if not m:
                raise FormatError(f"line {line_no}: no constraint sense")
            sense = m.group(1)
            rhs = float(m.group(2))
            rows.append((name.strip(), _parse_expr(body[: m.start()], line_no), sense, rhs))
        elif section == "bounds":
            m = re.match(r"(\S+)\s*<=\s*(\S+)\s*<=\s*(\S+)$", line)
            if not m:
                raise FormatError(f"line {line_no}: bad bounds line {line!r}")
            lo = float("-inf") if m.group(1) == "-inf" else float(m.group(1))
            hi = float("inf") if m.group(3) == "+inf" else float(m.group(3))
            bounds[m.group(2)] = (lo, hi)
        elif section == "binaries":
            binaries.update(line.split())
        elif section is None:
            raise FormatError(f"line {line_no}: content before any section")

    names: list[str] = []
    seen = set()
    for name in bounds:
        if name in seen:
            raise FormatError(f"duplicate variable name {name!r}")
        seen.add(name)
        names.append(name)
    by_name = {name: idx for idx, name in enumerate(names)}

    def vid(name: str, line_ctx: str) -> int:
        if name not in by_name:
            raise FormatError(f"{line_ctx}: unknown variable {name!r}")
        return by_name[name]

    variables = []
    for name in names:
        sym, key = decode_name(name)
        lo, hi = bounds[name]
        variables.append(
            Variable(
                id=by_name[name],
                name=name,
                kind="bin" if name in binaries else "cont",
                lb=lo,
                ub=hi,
                sym=sym,
                key=key,
            )
        )
    objective = Objective()
    for name, coef in obj_terms:
        if name in ("ZERO_EXPR", "CONSTANT_ONE"):
            if name == "CONSTANT_ONE":
                objective.constant += coef
            continue
        objective.coeffs[vid(name, "objective")] = (
            objective.coeffs.get(vid(name, "objective"), 0.0) + coef
        )
    constraints = []
    con_names = set()
    for name, terms, sense, rhs in rows:
        if name in con_names:
            raise FormatError(f"duplicate constraint name {name!r}")
        con_names.add(name)
        coeffs: dict[int, float] = {}
        for var_name, coef in terms:
            if var_name == "ZERO_EXPR":
                continue
            i = vid(var_name, f"constraint {name}")
            coeffs[i] = coeffs.get(i, 0.0) + coef
        family, _key = decode_name(name)
        constraints.append(Constraint(name, family, coeffs, sense, rhs))
    return MilpModel(variables=variables, constraints=constraints, objective=objective)


parse_model = parse_lp


def write_mps(model: MilpModel) -> str:
    lines = ["NAME          VNFPR", "ROWS", " N  obj"]
    sense_tag = {"<=": "L", ">=": "G", "=": "E"}
    for c in model.constraints:
        lines.append(f" {sense_tag[c.sense]}  {c.name}")
    lines.append("COLUMNS")
    entries: dict[int, list[tuple[str, float]]] = {v.id: [] for v in model.variables}
    for vid, coef in model.objective.coeffs.items():
        entries[vid].append(("obj", coef))
    for c in model.constraints:
        for vid, coef in c.coeffs.items():
            entries[vid].append((c.name, coef))
    in_int = False
    marker = 0
    for v in model.variables:
        want_int = v.kind == "bin"
        if want_int and not in_int:
            lines.append(f"    MARKER{marker:04d}  'MARKER'  'INTORG'")
            marker += 1
            in_int = True
        elif not want_int and in_int:
            lines.append(f"    MARKER{marker:04d}  'MARKER'  'INTEND'")
            marker += 1
            in_int = False
        for row, coef in entries[v.id]:
            lines.append(f"    {v.name}  {row}  {_num(coef)}")
    if in_int:
        lines.append(f"    MARKER{marker:04d}  'MARKER'  'INTEND'")
    lines.append("RHS")
    for c in model.constraints:
        if c.rhs:
            lines.append(f"    RHS  {c.name}  {_num(c.rhs)}")
    lines.append("BOUNDS")
    for v in model.variables:
        if v.kind == "bin":
            lines.append(f" BV BND  {v.name}")
            continue
        if v.lb == float("-inf"):
            lines.append(f" MI BND  {v.name}")
        elif v.lb != 0.0:
            lines.append(f" LO BND  {v.name}  {_num(v.lb)}")
        if v.ub != float("inf"):
            lines.append(f" UP BND  {v.name}  {_num(v.ub)}")
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def write_solution(model: MilpModel, assignment: Mapping[int, float]) -> str:
    lines = ["# variable value"]
    for v in model.variables:
        lines.append(f"{v.name} {_num(assignment[v.id])}")
    return "\n".join(lines) + "\n"


class SolutionImportError(ValueError):
    pass


def import_solution(text: str, model: MilpModel) -> dict[int, float]:
    """Parse a ``name value`` solution file and validate it against the model.

    Unknown names, repeated names and malformed lines are reported with their
    line number; a parsed assignment that violates the model is rejected with
    the violated constraints' tags.
    """
    assignment: dict[int, float] = {}
    seen: set[str] = set()
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise SolutionImportError(f"line {line_no}: expected 'name value'")
        name, value = parts
        if name in seen:
            raise SolutionImportError(f"line {line_no}: duplicate entry for {name!r}")
        seen.add(name)
        if name not in model.var_names:
            raise SolutionImportError(f"line {line_no}: unknown variable {name!r}")
        try:
            assignment[model.var_names[name]] = float(value)
        except ValueError as exc:
            raise SolutionImportError(f"line {line_no}: bad value {value!r}") from exc
    missing = [v.name for v in model.variables if v.id not in assignment]
    if missing:
        raise SolutionImportError(f"missing values for {len(missing)} variables, e.g. {missing[0]}")
    violations = check_feasible(model, assignment)
    if violations:
        tags = ", ".join(v.name for v in violations[:5])
        raise SolutionImportError(f"solution violates the model: {tags}")
    return assignment
