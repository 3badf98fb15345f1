import numpy as np
import pytest

from tabsynth.schema import ColumnKind, ColumnMeta, RawTable, TableSchema


@pytest.fixture
def mixed_schema():
    return TableSchema(
        columns=(
            ColumnMeta("age", ColumnKind.CONTINUOUS),
            ColumnMeta("income", ColumnKind.CONTINUOUS),
            ColumnMeta("score", ColumnKind.CONTINUOUS),
            ColumnMeta("city", ColumnKind.DISCRETE, ("north", "south", "east", "west")),
            ColumnMeta("tier", ColumnKind.DISCRETE, ("gold", "silver", "bronze")),
            ColumnMeta("active", ColumnKind.BINARY, ("no", "yes")),
        )
    )


def random_mixed_rows(schema: TableSchema, n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n):
        row = []
        for c in schema.columns:
            if c.is_discrete:
                row.append(str(rng.choice(list(c.categories))))
            else:
                # bimodal so several mixture modes activate
                center = -3.0 if rng.random() < 0.5 else 3.0
                row.append(float(rng.normal(center, 1.0)))
        rows.append(row)
    return rows


@pytest.fixture
def mixed_table(mixed_schema):
    return RawTable(schema=mixed_schema, rows=random_mixed_rows(mixed_schema, 300, seed=7))


def two_cluster_table(n: int, seed: int) -> RawTable:
    """Two Gaussian clusters in x1 plus a 3-category column recoverable from
    (x1, x2): cluster one is 'a'; cluster two splits into 'b'/'c' along x2."""
    rng = np.random.default_rng(seed)
    schema = TableSchema(
        columns=(
            ColumnMeta("x1", ColumnKind.CONTINUOUS),
            ColumnMeta("x2", ColumnKind.CONTINUOUS),
            ColumnMeta("label", ColumnKind.DISCRETE, ("a", "b", "c")),
        )
    )
    rows = []
    for _ in range(n):
        u = rng.random()
        if u < 1 / 3:
            rows.append([float(rng.normal(-3.0, 0.5)), float(rng.normal(0.0, 0.5)), "a"])
        elif u < 2 / 3:
            rows.append([float(rng.normal(3.0, 0.5)), float(rng.normal(2.0, 0.5)), "b"])
        else:
            rows.append([float(rng.normal(3.0, 0.5)), float(rng.normal(-2.0, 0.5)), "c"])
    return RawTable(schema=schema, rows=rows)
