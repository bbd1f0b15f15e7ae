"""Text instance format and canonical report encoding.

The instance format is line oriented and bit-exact under round-trip: floats
are written with ``repr`` (shortest string that parses back to the same
double), sections are emitted in sorted-name order, and shift entries carry
the full (anchor; source cube; source pattern; target cube; target pattern;
coefficient) record.  Loading re-runs every construction invariant, so a
tampered file fails with a diagnostic instead of producing a broken object.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .functions import Measure, StepFunction
from .lattice import Cube, DyadicLattice
from .martingale import HaarFunction
from .shifts import ShiftBlock, ShiftEntry, ShiftSpec

MAGIC = "dyadlab-instance 1"


class ParseError(ValueError):
    """Malformed instance text; carries the 1-based line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass
class Instance:
    """Everything one run works on: a lattice plus named payload sections."""

    lattice: DyadicLattice
    measures: dict[str, Measure] = field(default_factory=dict)
    functions: dict[str, StepFunction] = field(default_factory=dict)
    shifts: dict[str, ShiftSpec] = field(default_factory=dict)


def format_float(x: float) -> str:
    return repr(float(x))


def _check_name(name: str) -> str:
    if not name or any(c.isspace() for c in name):
        raise ValueError(f"section names must be nonempty and space-free, got {name!r}")
    return name


def _format_cube(cube: Cube) -> str:
    return f"{cube.level}:{','.join(str(c) for c in cube.coords)}"


def _format_bits(bits: tuple[int, ...]) -> str:
    return ",".join(str(b) for b in bits)


def format_instance(instance: Instance) -> str:
    lat = instance.lattice
    lines = [MAGIC, f"lattice {lat.dimension} {lat.top} {lat.leaf}"]
    for name in sorted(instance.measures):
        measure = instance.measures[_check_name(name)]
        if measure.lattice != lat:
            raise ValueError(f"measure {name!r} lives on a different lattice")
        lines.append(f"measure {name} {measure.mass.size}")
        lines.extend(format_float(v) for v in measure.mass)
    for name in sorted(instance.functions):
        func = instance.functions[_check_name(name)]
        if func.lattice != lat:
            raise ValueError(f"function {name!r} lives on a different lattice")
        lines.append(f"function {name} {func.values.size}")
        lines.extend(format_float(v) for v in func.values)
    for name in sorted(instance.shifts):
        spec = instance.shifts[_check_name(name)]
        if spec.lattice != lat:
            raise ValueError(f"shift {name!r} lives on a different lattice")
        lines.append(
            f"shift {name} {spec.m} {spec.n} {int(spec.specific_form)} {spec.n_entries()}"
        )
        for block in spec.blocks:
            for e in block.entries:
                lines.append(
                    "entry "
                    f"{_format_cube(block.cube)} "
                    f"{_format_cube(e.source.cube)} {_format_bits(e.source.pattern)} "
                    f"{_format_cube(e.target.cube)} {_format_bits(e.target.pattern)} "
                    f"{format_float(e.coeff)}"
                )
    return "\n".join(lines) + "\n"


def _parse_int(token: str, lineno: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(lineno, f"expected integer {what}, got {token!r}") from None


def _parse_float(token: str, lineno: int, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(lineno, f"expected number {what}, got {token!r}") from None


def _parse_cube(token: str, lineno: int, dimension: int) -> Cube:
    level_part, sep, coord_part = token.partition(":")
    if not sep:
        raise ParseError(lineno, f"malformed cube {token!r} (expected level:c0,c1,...)")
    level = _parse_int(level_part, lineno, "cube level")
    coords = tuple(_parse_int(c, lineno, "cube coordinate") for c in coord_part.split(","))
    if len(coords) != dimension:
        raise ParseError(lineno, f"cube {token!r} has {len(coords)} coordinates, lattice has {dimension}")
    return Cube(level, coords)


def _parse_bits(token: str, lineno: int, dimension: int) -> tuple[int, ...]:
    bits = tuple(_parse_int(b, lineno, "pattern bit") for b in token.split(","))
    if len(bits) != dimension or any(b not in (0, 1) for b in bits):
        raise ParseError(lineno, f"malformed pattern {token!r}")
    return bits


def parse_instance(text: str) -> Instance:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise ParseError(1, f"missing header {MAGIC!r}")
    pos = 1

    def next_line() -> tuple[int, str]:
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            return len(lines) + 1, ""
        pos += 1
        return pos, lines[pos - 1].strip()

    lineno, header = next_line()
    parts = header.split()
    if len(parts) != 4 or parts[0] != "lattice":
        raise ParseError(lineno, "expected 'lattice N T L' after the header")
    dim = _parse_int(parts[1], lineno, "dimension")
    top = _parse_int(parts[2], lineno, "top scale")
    leaf = _parse_int(parts[3], lineno, "leaf level")
    try:
        lattice = DyadicLattice(dim, top, leaf)
    except ValueError as exc:
        raise ParseError(lineno, str(exc)) from None
    instance = Instance(lattice)

    while True:
        lineno, line = next_line()
        if not line:
            break
        parts = line.split()
        kind = parts[0]
        if kind in ("measure", "function"):
            if len(parts) != 3:
                raise ParseError(lineno, f"expected '{kind} <name> <count>'")
            name, count = parts[1], _parse_int(parts[2], lineno, "value count")
            if count != lattice.n_leaves:
                raise ParseError(
                    lineno, f"{kind} {name!r} declares {count} values, lattice has {lattice.n_leaves} leaves"
                )
            values = np.empty(count)
            for i in range(count):
                vlineno, vline = next_line()
                if not vline or len(vline.split()) != 1:
                    raise ParseError(vlineno, f"expected value {i + 1}/{count} of {kind} {name!r}")
                values[i] = _parse_float(vline, vlineno, f"value of {name!r}")
            target = instance.measures if kind == "measure" else instance.functions
            if name in target:
                raise ParseError(lineno, f"duplicate {kind} name {name!r}")
            try:
                target[name] = (Measure if kind == "measure" else StepFunction)(lattice, values)
            except ValueError as exc:
                raise ParseError(lineno, f"{kind} {name!r}: {exc}") from None
        elif kind == "shift":
            if len(parts) != 6:
                raise ParseError(lineno, "expected 'shift <name> <m> <n> <specific> <entries>'")
            name = parts[1]
            m = _parse_int(parts[2], lineno, "source depth")
            n = _parse_int(parts[3], lineno, "target depth")
            specific = _parse_int(parts[4], lineno, "specific-form flag")
            n_entries = _parse_int(parts[5], lineno, "entry count")
            if specific not in (0, 1):
                raise ParseError(lineno, "specific-form flag must be 0 or 1")
            if name in instance.shifts:
                raise ParseError(lineno, f"duplicate shift name {name!r}")
            blocks: dict[Cube, list[ShiftEntry]] = {}
            for i in range(n_entries):
                elineno, eline = next_line()
                eparts = eline.split()
                if len(eparts) != 7 or eparts[0] != "entry":
                    raise ParseError(
                        elineno, f"expected entry {i + 1}/{n_entries} of shift {name!r}"
                    )
                anchor = _parse_cube(eparts[1], elineno, dim)
                src = _parse_cube(eparts[2], elineno, dim)
                src_bits = _parse_bits(eparts[3], elineno, dim)
                tgt = _parse_cube(eparts[4], elineno, dim)
                tgt_bits = _parse_bits(eparts[5], elineno, dim)
                coeff = _parse_float(eparts[6], elineno, "coefficient")
                entry = ShiftEntry(
                    source=HaarFunction(src, src_bits),
                    target=HaarFunction(tgt, tgt_bits),
                    coeff=coeff,
                )
                blocks.setdefault(anchor, []).append(entry)
            try:
                instance.shifts[name] = ShiftSpec(
                    lattice=lattice,
                    m=m,
                    n=n,
                    blocks=tuple(
                        ShiftBlock(cube, tuple(entries)) for cube, entries in blocks.items()
                    ),
                    specific_form=bool(specific),
                )
            except ValueError as exc:
                raise ParseError(lineno, f"shift {name!r}: {exc}") from None
        else:
            raise ParseError(lineno, f"unknown section {kind!r}")
    return instance


def write_instance(path, instance: Instance) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_instance(instance))


def read_instance(path) -> Instance:
    with open(path, "r", encoding="ascii") as fh:
        return parse_instance(fh.read())


# ---------------------------------------------------------------------------
# canonical structured output
# ---------------------------------------------------------------------------


def _py(value):
    """Recursively coerce report content to canonical JSON-ready types."""
    if isinstance(value, dict):
        return {str(k): _py(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_py(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_py(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, Cube):
        return _format_cube(value)
    return value


def canonical_json(data) -> str:
    """Sorted-keys JSON with round-trip float formatting; newline terminated."""
    return json.dumps(_py(data), sort_keys=True, indent=1) + "\n"


def estimate_record(name: str, estimate) -> dict:
    """Serializable record of a ConstantEstimate including its witness."""
    record = {
        "name": name,
        "value": float(estimate.value),
        "kind": estimate.kind,
        "witness": _py(estimate.witness),
        "diagnostics": _py(estimate.diagnostics),
    }
    if estimate.bracket is not None:
        record["bracket"] = [float(estimate.bracket[0]), float(estimate.bracket[1])]
    return record
