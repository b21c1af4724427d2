"""Windowed MMSE denoising, baselines and detection scoring for FTIR hyperspectral cubes."""

__version__ = "0.1.0"

from .cube import HyperCube, PixelMask, WavenumberAxis, load_cube, save_cube
from .mmse import MmseConfig, denoise_mmse
from .synth import SceneSpec, default_scene_spec, generate_scene

__all__ = [
    "HyperCube",
    "PixelMask",
    "WavenumberAxis",
    "load_cube",
    "save_cube",
    "MmseConfig",
    "denoise_mmse",
    "SceneSpec",
    "default_scene_spec",
    "generate_scene",
]
