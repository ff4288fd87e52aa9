"""llec: lossless event-camera codec with octree occupancy coding and a
learned hyperprior entropy model."""

from .container import decode_stream, encode_stream, measure_bitstream
from .event_io import EventStream, compute_stats, parse_csv, parse_evt2, \
    serialize_csv, serialize_evt2
from .hyperprior import HyperpriorModel
from .preprocess import PreprocessConfig, canonicalize
from .synth import generate_synthetic
from .trainer import TrainConfig, build_dataset, train

__all__ = [
    "EventStream", "HyperpriorModel", "PreprocessConfig", "TrainConfig",
    "build_dataset", "canonicalize", "compute_stats", "decode_stream",
    "encode_stream", "generate_synthetic", "measure_bitstream", "parse_csv",
    "parse_evt2", "serialize_csv", "serialize_evt2", "train",
]
