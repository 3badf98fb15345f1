"""Table data model: column typing, validation, and record layout arithmetic."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

NULL_TOKEN = "\x00NULL"


class ColumnKind(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    DISCRETE = "discrete"


@dataclass(frozen=True)
class ColumnMeta:
    """Metadata for a single table column.

    Binary columns carry exactly 2 categories, discrete >= 2, continuous none.
    """

    name: str
    kind: ColumnKind
    categories: tuple[str, ...] = ()
    nullable: bool = False

    def __post_init__(self):
        if self.kind == ColumnKind.CONTINUOUS:
            if self.categories:
                raise ValueError(f"column {self.name!r}: continuous columns take no categories")
        elif self.kind == ColumnKind.BINARY:
            if len(self.categories) != 2:
                raise ValueError(f"column {self.name!r}: binary columns need exactly 2 categories")
        else:
            if len(self.categories) < 2:
                raise ValueError(f"column {self.name!r}: discrete columns need >= 2 categories")
        if len(set(self.categories)) != len(self.categories):
            raise ValueError(f"column {self.name!r}: duplicate categories")

    @property
    def is_discrete(self) -> bool:
        return self.kind != ColumnKind.CONTINUOUS


@dataclass(frozen=True)
class TableSchema:
    """Ordered collection of columns describing one table."""

    columns: tuple[ColumnMeta, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("duplicate column names")

    @property
    def n_continuous(self) -> int:
        return sum(1 for c in self.columns if not c.is_discrete)

    @property
    def n_discrete(self) -> int:
        return sum(1 for c in self.columns if c.is_discrete)

    @property
    def continuous_columns(self) -> list[ColumnMeta]:
        return [c for c in self.columns if not c.is_discrete]

    @property
    def discrete_columns(self) -> list[ColumnMeta]:
        return [c for c in self.columns if c.is_discrete]

    def column(self, name: str) -> ColumnMeta:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        cols = []
        for c in self.columns:
            d = {"name": c.name, "kind": c.kind.value, "nullable": c.nullable}
            if c.categories:
                d["categories"] = list(c.categories)
            cols.append(d)
        return {"columns": cols}

    @classmethod
    def from_dict(cls, doc: dict) -> "TableSchema":
        cols = []
        for d in doc["columns"]:
            cols.append(
                ColumnMeta(
                    name=d["name"],
                    kind=ColumnKind(d["kind"]),
                    categories=tuple(d.get("categories", ())),
                    nullable=bool(d.get("nullable", False)),
                )
            )
        return cls(columns=tuple(cols))

    @classmethod
    def from_json_file(cls, path) -> "TableSchema":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_null_tokens(self) -> "TableSchema":
        """Append the explicit null category to every nullable discrete column."""
        cols = []
        for c in self.columns:
            if c.is_discrete and c.nullable and NULL_TOKEN not in c.categories:
                cols.append(
                    ColumnMeta(
                        name=c.name,
                        kind=ColumnKind.DISCRETE,
                        categories=c.categories + (NULL_TOKEN,),
                        nullable=True,
                    )
                )
            else:
                cols.append(c)
        return TableSchema(columns=tuple(cols))


Cell = Optional[object]  # number | category string | None


@dataclass
class RawTable:
    """Schema plus heterogeneous rows as read from CSV."""

    schema: TableSchema
    rows: list[list[Cell]]

    def __len__(self) -> int:
        return len(self.rows)

    def column_values(self, name: str) -> list[Cell]:
        idx = [c.name for c in self.schema.columns].index(name)
        return [row[idx] for row in self.rows]


@dataclass(frozen=True)
class Span:
    """Half-open slot range [start, stop) owned by one column."""

    column: str
    start: int
    stop: int
    # continuous spans: slot `start` is the scalar, the rest are mode indicators
    is_discrete: bool

    @property
    def width(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class RecordLayout:
    """Slot assignment for encoded records: continuous spans first, then discrete."""

    continuous_spans: tuple[Span, ...]
    discrete_spans: tuple[Span, ...]
    total_width: int
    modes: int

    @property
    def n_t(self) -> int:
        """Total number of discrete one-hot slots."""
        return sum(s.width for s in self.discrete_spans)

    @property
    def discrete_start(self) -> int:
        return self.continuous_spans[-1].stop if self.continuous_spans else 0

    def span_for(self, column: str) -> Span:
        for s in self.continuous_spans + self.discrete_spans:
            if s.column == column:
                return s
        raise KeyError(column)


def build_layout(schema: TableSchema, modes: int) -> RecordLayout:
    """Assign contiguous slot spans: (scalar + modes) per continuous column,
    |categories| one-hot slots per discrete column."""
    if not schema.columns:
        raise ValueError("no columns")
    if modes < 1:
        raise ValueError("modes must be >= 1")
    cont, disc = [], []
    offset = 0
    for c in schema.columns:
        if not c.is_discrete:
            cont.append(Span(column=c.name, start=offset, stop=offset + 1 + modes, is_discrete=False))
            offset += 1 + modes
    for c in schema.columns:
        if c.is_discrete:
            disc.append(Span(column=c.name, start=offset, stop=offset + len(c.categories), is_discrete=True))
            offset += len(c.categories)
    return RecordLayout(
        continuous_spans=tuple(cont),
        discrete_spans=tuple(disc),
        total_width=offset,
        modes=modes,
    )


@dataclass(frozen=True)
class Violation:
    row: Optional[int]
    column: Optional[str]
    rule: str

    def __str__(self) -> str:
        loc = []
        if self.row is not None:
            loc.append(f"row {self.row}")
        if self.column is not None:
            loc.append(f"column {self.column!r}")
        where = ", ".join(loc) or "table"
        return f"{where}: {self.rule}"


def validate_table(table: RawTable) -> list[Violation]:
    """Check every row against the schema; violations are data, not exceptions."""
    out: list[Violation] = []
    cols = table.schema.columns
    for i, row in enumerate(table.rows):
        if len(row) != len(cols):
            out.append(Violation(row=i, column=None, rule=f"expected {len(cols)} cells, got {len(row)}"))
            continue
        for c, cell in zip(cols, row):
            if cell is None:
                if not c.nullable:
                    out.append(Violation(row=i, column=c.name, rule="null in non-nullable column"))
                continue
            if c.is_discrete:
                if cell not in c.categories:
                    out.append(Violation(row=i, column=c.name, rule=f"unknown category {cell!r}"))
            else:
                if not isinstance(cell, (int, float)):
                    out.append(Violation(row=i, column=c.name, rule=f"non-numeric value {cell!r}"))
    return out


def read_csv_table(path, schema: TableSchema) -> RawTable:
    """Read an RFC-4180 CSV with a header matching the schema column names.

    Empty cells become None; continuous cells parse as float.
    """
    rows: list[list[Cell]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        expected = [c.name for c in schema.columns]
        if header != expected:
            raise ValueError(f"{path}: header {header} does not match schema columns {expected}")
        for raw in reader:
            row: list[Cell] = []
            for c, text in zip(schema.columns, raw):
                if text == "":
                    row.append(None)
                elif c.is_discrete:
                    row.append(text)
                else:
                    row.append(float(text))
            # preserve ragged rows so validate_table can report them
            row.extend(raw[len(schema.columns):])
            rows.append(row)
    return RawTable(schema=schema, rows=rows)


def write_csv_table(path, table: RawTable) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([c.name for c in table.schema.columns])
        for row in table.rows:
            out = []
            for c, cell in zip(table.schema.columns, row):
                if cell is None or cell == NULL_TOKEN:
                    out.append("")
                elif c.is_discrete:
                    out.append(cell)
                else:
                    out.append(repr(float(cell)))
            writer.writerow(out)
