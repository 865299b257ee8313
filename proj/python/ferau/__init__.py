"""Action-unit-guided interpretable expression classification."""

from ._ferau import (
    Dataset,
    FerauError,
    Model,
    Sample,
    SplitDatasets,
    SynthConfig,
    build_au_map,
    evaluate,
    fit,
    generate,
    grad_check_sum,
    load_dataset,
    save_dataset,
)

__all__ = [
    "Dataset",
    "FerauError",
    "Model",
    "Sample",
    "SplitDatasets",
    "SynthConfig",
    "build_au_map",
    "evaluate",
    "fit",
    "generate",
    "grad_check_sum",
    "load_dataset",
    "save_dataset",
]
