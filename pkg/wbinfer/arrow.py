from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import pyarrow as pa

RESULT_FIELDS = [
    pa.field("experiment", pa.string()),
    pa.field("test", pa.string()),
    pa.field("param1", pa.float64()),
    pa.field("param2", pa.float64()),
    pa.field("n", pa.int64()),
    pa.field("estimate", pa.float64()),
    pa.field("se", pa.float64()),
    pa.field("reps", pa.int64()),
    pa.field("seed", pa.uint64()),
]

RESULT_SCHEMA = pa.schema(RESULT_FIELDS)

RESULT_COLUMNS = [f.name for f in RESULT_FIELDS]


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    test: str
    param1: float
    param2: float
    n: int
    estimate: float
    se: float
    reps: int
    seed: int


def record_batch_for_rows(rows: Sequence[ResultRow]) -> pa.RecordBatch | None:
    if not rows:
        return None

    arrays = [
        pa.array([row.experiment for row in rows], type=pa.string()),
        pa.array([row.test for row in rows], type=pa.string()),
        pa.array([row.param1 for row in rows], type=pa.float64()),
        pa.array([row.param2 for row in rows], type=pa.float64()),
        pa.array([row.n for row in rows], type=pa.int64()),
        pa.array([row.estimate for row in rows], type=pa.float64()),
        pa.array([row.se for row in rows], type=pa.float64()),
        pa.array([row.reps for row in rows], type=pa.int64()),
        pa.array([row.seed for row in rows], type=pa.uint64()),
    ]
    return pa.RecordBatch.from_arrays(arrays, schema=RESULT_SCHEMA)


def rows_from_table(table: pa.Table) -> list[ResultRow]:
    return [ResultRow(**record) for record in table.select(RESULT_COLUMNS).to_pylist()]
