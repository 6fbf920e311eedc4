"""Type-aware rendering of retrieved CSV rows and dataset snapshots."""
from __future__ import annotations

import os
from typing import Optional, Sequence, Union

from ..refdata import ProblemType
from ..retrieval import CsvError, CsvTable, format_rows, read_csv

SNAPSHOT_ROWS = 5


class MissingColumnError(ValueError):
    pass


def _is_number(s: str) -> bool:
    try:
        float(s.replace(",", ""))
        return True
    except ValueError:
        return False


def _is_matrix(table: CsvTable) -> bool:
    """First column holds row labels, every other column is numeric."""
    if len(table.header) < 2 or not table.rows:
        return False
    return all(_is_number(c) for r in table.rows for c in r[1:])


def _has_column(table: CsvTable, *words: str) -> bool:
    return any(w in h.lower() for h in table.header for w in words)


def _pick(tables: list[CsvTable], used: set[int], *words: str) -> Optional[int]:
    for k, t in enumerate(tables):
        if k not in used and _has_column(t, *words):
            return k
    return None


def _pick_matrix(tables: list[CsvTable], used: set[int]) -> Optional[int]:
    # prefer a file that calls itself a cost table
    order = sorted((k for k in range(len(tables)) if k not in used),
                   key=lambda k: (0 if "cost" in tables[k].name.lower() else 1, k))
    for k in order:
        if _is_matrix(tables[k]):
            return k
    return None


def _rows_block(title: str, table: CsvTable) -> list[str]:
    return [title] + format_rows(table, table.rows)


def _matrix_block(title: str, table: CsvTable, symbol: str = "C") -> list[str]:
    labels = [r[0] for r in table.rows]
    lines = [f"{title} (rows: {', '.join(labels)}; columns: {', '.join(table.header[1:])})", f"{symbol} = ["]
    for k, r in enumerate(table.rows):
        sep = "," if k < len(table.rows) - 1 else ""
        lines.append("  [" + ", ".join(c.replace(",", "") for c in r[1:]) + "]" + sep)
    lines.append("]")
    return lines


def format_retrieved_data(ptype: ProblemType, tables: Sequence[CsvTable]) -> str:
    """Lay out retrieved rows the way each problem type is easiest to transcribe.

    RA/NRM/SBLP and the agnostic types list one product per line; AP gets the
    cost matrix alone; TP gets supply, demand and cost matrix blocks; FLP gets
    facility, demand and cost matrix blocks.
    """
    tables = list(tables)
    if not tables:
        raise MissingColumnError("no tables to format")
    if ptype is ProblemType.AP:
        k = _pick_matrix(tables, set())
        if k is None:
            raise MissingColumnError("assignment data needs a cost matrix (label column plus numeric columns)")
        t = tables[k]
        return "\n".join([f"Here is all the data from {t.name}:"] + _matrix_block("Cost matrix", t)
                         + ["This is the complete cost matrix C with no simplification or abbreviation."])
    if ptype in (ProblemType.TP, ProblemType.FLP):
        used: set[int] = set()
        if ptype is ProblemType.TP:
            first = _pick(tables, used, "supply")
            first_title, first_need = "1. Supply Data", "a supply column"
        else:
            first = _pick(tables, used, "capacity", "opening", "fixed", "setup")
            first_title, first_need = "1. Facility Data", "a capacity or opening-cost column"
        if first is None:
            raise MissingColumnError(f"{ptype.code} data needs a table with {first_need}")
        used.add(first)
        demand = _pick(tables, used, "demand")
        if demand is None:
            raise MissingColumnError(f"{ptype.code} data needs a table with a demand column")
        used.add(demand)
        matrix = _pick_matrix(tables, used)
        if matrix is None:
            raise MissingColumnError(f"{ptype.code} data needs a cost matrix table")
        lines = _rows_block(first_title, tables[first]) + [""]
        lines += _rows_block("2. Demand Data", tables[demand]) + [""]
        lines += _matrix_block("3. Full Cost Matrix C", tables[matrix])
        return "\n".join(lines)
    blocks = []
    for k, t in enumerate(tables, 1):
        if not t.header:
            raise MissingColumnError(f"{t.name} has no columns")
        blocks.append(f"----------------DataFrame {k} - {t.name}:----------------")
        blocks.extend(format_rows(t, t.rows))
    return "\n".join(blocks)


TableLike = Union[CsvTable, str, "os.PathLike[str]"]


def as_tables(datasets: Sequence[TableLike]) -> list[CsvTable]:
    return [d if isinstance(d, CsvTable) else read_csv(d) for d in datasets]


def csv_schema_snapshot(datasets: Sequence[TableLike], n_rows: int = SNAPSHOT_ROWS) -> str:
    """Name, header, first rows and row count of every dataset."""
    if n_rows < 0:
        raise ValueError("n_rows must be non-negative")
    out = []
    for t in as_tables(datasets):
        out.append(f"File: {t.name}")
        out.append("Columns: " + ", ".join(t.header))
        shown = t.rows[:n_rows]
        if shown:
            out.append(f"First {len(shown)} rows:")
            out.append(",".join(t.header))
            out.extend(",".join(r) for r in shown)
        n = len(t.rows)
        out.append(f"{n} row" + ("" if n == 1 else "s"))
        out.append("")
    return "\n".join(out).rstrip("\n")


__all__ = ["MissingColumnError", "format_retrieved_data", "csv_schema_snapshot", "as_tables", "CsvError"]
