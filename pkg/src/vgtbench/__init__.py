"""Repeatability benchmark for 2D interest point detectors on rendered 3D scenes."""
from .assets import load_builtin
from .detect import ALL_DETECTORS, DetectorId, DetectorParams, InterestPoint, detect
from .geom import MODE_2D, MODE_3D, PairSet, PreselectMode, WorldPoint, preselect
from .mesh_io import Mesh, load_mesh, mesh_aabb, normalize_mesh
from .metrics import EpsilonGrid, classify_repeated, informedness_curve, roc_auc
from .raster import Camera, GBuffer, SceneTransform, build_transform_suite, make_transform, render

__version__ = "0.1.0"
