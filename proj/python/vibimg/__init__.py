"""Vibration-image bearing fault classification."""

from ._core import (
    Model,
    VibimgError,
    decimate,
    evaluate,
    format_frequency,
    from_vibration_image,
    normalize_signal,
    read_mat5,
    read_mat5_bytes,
    rotate90,
    run_repeated,
    signal_to_images,
    summarize,
    synth_dataset,
    to_vibration_image,
    train,
    train_count,
)

__all__ = [
    "Model",
    "VibimgError",
    "decimate",
    "evaluate",
    "format_frequency",
    "from_vibration_image",
    "normalize_signal",
    "read_mat5",
    "read_mat5_bytes",
    "rotate90",
    "run_repeated",
    "signal_to_images",
    "summarize",
    "synth_dataset",
    "to_vibration_image",
    "train",
    "train_count",
]
