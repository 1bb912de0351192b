# toimit/dataset - reference trajectory datasets
from toimit.dataset.generation import (
    DroppedTask,
    GenerationResult,
    generate_dataset,
    generate_records,
    task_seeds,
)
from toimit.dataset.trjd import (
    DatasetRecord,
    DatasetSlice,
    ReferenceTuple,
    read_dataset,
    read_datasets,
    reference_at,
    split_holdout,
    write_dataset,
)

__all__ = [
    "DatasetRecord",
    "DatasetSlice",
    "DroppedTask",
    "GenerationResult",
    "ReferenceTuple",
    "generate_dataset",
    "generate_records",
    "read_dataset",
    "read_datasets",
    "reference_at",
    "split_holdout",
    "task_seeds",
    "write_dataset",
]
