"""Clip containers, quality control, splitting, windowing and synthetic data."""

from .clip import (
    ClipPair,
    ContainerError,
    load_clip,
    load_dataset,
    load_descriptor,
    read_index,
    read_index_header,
    save_clip,
    write_index,
)
from .dataset import split_dataset, window_clips
from .qc import FRAME_FLAGS, SEQUENCE_FLAGS, QcReport, QcThresholds, validate_clip
from .synth import SynthConfig, synth_clip, synth_dataset

__all__ = [
    "FRAME_FLAGS",
    "SEQUENCE_FLAGS",
    "ClipPair",
    "ContainerError",
    "QcReport",
    "QcThresholds",
    "SynthConfig",
    "load_clip",
    "load_dataset",
    "load_descriptor",
    "read_index",
    "read_index_header",
    "save_clip",
    "split_dataset",
    "synth_clip",
    "synth_dataset",
    "validate_clip",
    "window_clips",
    "write_index",
]
