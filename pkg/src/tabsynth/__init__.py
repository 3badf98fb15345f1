"""Schema-aware tabular data synthesis with a two-discriminator conditional GAN."""

from .schema import (
    ColumnKind,
    ColumnMeta,
    RawTable,
    RecordLayout,
    TableSchema,
    build_layout,
    validate_table,
)
from .transform import FittedTransformer, fit_transformer, fit_vgm

__all__ = [
    "ColumnKind",
    "ColumnMeta",
    "RawTable",
    "RecordLayout",
    "TableSchema",
    "build_layout",
    "validate_table",
    "FittedTransformer",
    "fit_transformer",
    "fit_vgm",
]

__version__ = "0.1.0"
