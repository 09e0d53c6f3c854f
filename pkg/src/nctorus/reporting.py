"""Checks, result tables and the run manifest, plus their deterministic writers."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel

from . import __version__
from .operators import MatrixOperator
from .utils import filter_none_values, format_float, to_jsonable

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Check:
    """One pass/fail comparison of a measured value against a tolerance.

    Non-gating checks are reported but do not affect the exit status.
    """

    name: str
    passed: bool
    measured: Any
    tolerance: Any = None
    gating: bool = True
    detail: str = ""

    @classmethod
    def at_most(cls, name: str, measured: float, tolerance: float, **kwargs) -> "Check":
        return cls(name, bool(measured <= tolerance), measured, tolerance, **kwargs)

    def to_dict(self) -> Dict[str, Any]:
        return filter_none_values(
            {
                "name": self.name,
                "passed": self.passed,
                "measured": to_jsonable(self.measured),
                "tolerance": to_jsonable(self.tolerance),
                "gating": self.gating,
                "detail": self.detail or None,
            }
        )


@dataclass
class Table:
    columns: Tuple[str, ...]
    rows: List[Tuple[Any, ...]] = field(default_factory=list)

    def add(self, *row: Any) -> None:
        self.rows.append(tuple(row))


@dataclass
class ExperimentResult:
    """Everything one experiment kind produces before it is written out."""

    kind: str
    checks: List[Check] = field(default_factory=list)
    tables: Dict[str, Table] = field(default_factory=dict)
    values: Dict[str, Any] = field(default_factory=dict)
    operators: Dict[str, MatrixOperator] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.gating)

    def merge(self, other: "ExperimentResult", prefix: Optional[str] = None) -> None:
        prefix = prefix or other.kind
        self.checks.extend(
            Check(f"{prefix}.{c.name}", c.passed, c.measured, c.tolerance, c.gating, c.detail)
            for c in other.checks
        )
        for name, table in other.tables.items():
            self.tables[name if name.startswith(prefix) else f"{prefix}-{name}"] = table
        self.values[prefix] = other.values
        for name, op in other.operators.items():
            self.operators[f"{prefix}-{name}"] = op


class RunManifest(BaseModel):
    config_hash: str
    tool_version: str = __version__
    kind: str
    passed: bool
    checks: List[Dict[str, Any]]
    files: List[str]
    values: Dict[str, Any] = {}
    wall_time: Optional[float] = None

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1


def _cell(value: Any) -> List[str]:
    if isinstance(value, (complex, np.complexfloating)):
        return [format_float(value.real), format_float(value.imag)]
    if isinstance(value, (bool, np.bool_)):
        return ["true" if value else "false"]
    if isinstance(value, (int, np.integer)):
        return [str(int(value))]
    if isinstance(value, (float, np.floating)):
        return [format_float(value)]
    return [str(value)]


def render_csv(table: Table) -> str:
    """CSV text with 17-significant-digit floats; complex columns split into re/im."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    header: List[str] = []
    first = table.rows[0] if table.rows else ()
    for i, name in enumerate(table.columns):
        if i < len(first) and isinstance(first[i], (complex, np.complexfloating)):
            header.extend([f"{name}_re", f"{name}_im"])
        else:
            header.append(name)
    writer.writerow(header)
    for row in table.rows:
        cells: List[str] = []
        for value in row:
            cells.extend(_cell(value))
        writer.writerow(cells)
    return buffer.getvalue()


def _dump_operator(op: MatrixOperator, path: Path, fmt: Literal["csv", "npz"]) -> Path:
    if fmt == "npz":
        target = path.with_suffix(".npz")
        sp.save_npz(target, sp.csr_matrix(op.matrix), compressed=True)
        return target
    table = Table(("row", "col", "re", "im"), [tuple(t) for t in op.to_triplets()])
    target = path.with_suffix(".csv")
    target.write_text(render_csv(table), encoding="utf-8")
    return target


def write_outputs(
    result: ExperimentResult,
    *,
    config_digest: str,
    output_dir: Path,
    matrix_dump: Literal["none", "csv", "npz"] = "none",
    wall_time: Optional[float] = None,
) -> RunManifest:
    """Write every table, optional matrix dumps and ``manifest.json``; single writer, sorted order."""
    output_dir.mkdir(parents=True, exist_ok=True)
    files: List[str] = []
    for name in sorted(result.tables):
        target = output_dir / f"{name}-{config_digest}.csv"
        target.write_text(render_csv(result.tables[name]), encoding="utf-8")
        files.append(target.name)
    if matrix_dump != "none":
        for name in sorted(result.operators):
            target = _dump_operator(
                result.operators[name], output_dir / f"matrix-{name}-{config_digest}", matrix_dump
            )
            files.append(target.name)

    manifest = RunManifest(
        config_hash=config_digest,
        kind=result.kind,
        passed=result.passed,
        checks=[c.to_dict() for c in result.checks],
        files=files,
        values=to_jsonable(result.values),
        wall_time=wall_time,
    )
    payload = filter_none_values(manifest.model_dump())
    (output_dir / "manifest.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    failed = [c.name for c in result.checks if c.gating and not c.passed]
    if failed:
        logger.warning("Failed checks: %s", ", ".join(failed))
    logger.info("Wrote %d file(s) and manifest.json to %s", len(files), output_dir)
    return manifest


def sampled_function_table(rows: Sequence[Tuple[float, ...]], dim: int) -> Table:
    columns = ("u",) if dim == 1 else ("u1", "u2")
    return Table(columns + ("re", "im"), list(rows))
