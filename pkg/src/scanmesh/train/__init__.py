"""Staged training, datasets and the scaling benchmark."""

from .bench import BENCH_COLUMNS, BenchRow, bench_scaling, write_bench_csv
from .config import STAGES, TrainConfig
from .data import DatasetIndex, IndexEntry, Sample, builtin_samples, generate_dataset, make_sample
from .trainer import (NumericError, StageOrderError, StageResult, Trainer, check_stage_order,
                      load_model, mesh_score, save_model, train_schedule)

__all__ = [
    "BENCH_COLUMNS", "BenchRow", "DatasetIndex", "IndexEntry", "NumericError", "STAGES", "Sample",
    "StageOrderError", "StageResult", "TrainConfig", "Trainer", "bench_scaling", "builtin_samples",
    "check_stage_order", "generate_dataset", "load_model", "make_sample", "mesh_score", "save_model",
    "train_schedule", "write_bench_csv",
]
