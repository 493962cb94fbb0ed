"""Data ingestion (KITTI layout, synthetic scenes), run configuration and CLI."""
from .config import RunConfig, dump_config, load_config, read_config
from .imageio import read_image, read_pnm, write_image, write_pnm
from .kitti import CalibrationError, load_kitti_layout, parse_calibration
from .synth import SceneConfig, in_view_fraction, synth_dataset, synth_scene
from .types import ImageTriplet

__all__ = [
    "CalibrationError",
    "ImageTriplet",
    "RunConfig",
    "SceneConfig",
    "dump_config",
    "in_view_fraction",
    "load_config",
    "load_kitti_layout",
    "parse_calibration",
    "read_config",
    "read_image",
    "read_pnm",
    "synth_dataset",
    "synth_scene",
    "write_image",
    "write_pnm",
]
