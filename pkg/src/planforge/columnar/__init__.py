from .schema import DTYPES, FIXED_WIDTH, Field, Schema
from .table import (
    ColumnVector,
    RecordBatch,
    Table,
    batch_from_pydict,
    batches_equal,
    column_from_pylist,
    concat_batches,
    slice_batch,
    table_from_pydict,
    tables_equal,
)
from .region import BufferRegion, RegionRegistry
from .cbuf import decode_batch, decode_frames, encode_batch, encode_table_frames
from .colf import ChunkStats, ReadReport, chunk_stats_of_batch, read_colf, write_colf

__all__ = [
    "DTYPES", "FIXED_WIDTH", "Field", "Schema",
    "ColumnVector", "RecordBatch", "Table",
    "batch_from_pydict", "batches_equal", "column_from_pylist",
    "concat_batches", "slice_batch", "table_from_pydict", "tables_equal",
    "BufferRegion", "RegionRegistry",
    "decode_batch", "decode_frames", "encode_batch", "encode_table_frames",
    "ChunkStats", "ReadReport", "chunk_stats_of_batch", "read_colf", "write_colf",
]
