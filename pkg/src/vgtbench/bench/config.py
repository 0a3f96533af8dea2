"""Run configuration: one TOML file drives a full benchmark run.

Minimal file::

    models = ["builtin:relief"]

Everything else has defaults. Full layout::

    models = ["builtin:relief", "meshes/bunny.ply"]   # or [[model]] tables
    detectors = ["HarrisA", "KLT"]
    modes = ["2D", "3D"]
    epsilons = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0]
    output = "results"
    workers = 1
    seed = 0

    [[model]]
    path = "meshes/owl.obj"
    textured = true

    [[suite]]
    kind = "RotX"
    start = -50
    stop = 50
    step = 10
    exclude = [0]

    [detector_params]
    nms_radius = 3           # applies to every detector

    [detector_params.HarrisA]
    integration_sigma = 2.0  # per-detector override

    [camera]
    width = 300
    height = 300
"""
from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..assets import resolve
from ..detect import ALL_DETECTORS, DetectorId, DetectorParams
from ..geom import PreselectMode
from ..metrics import DEFAULT_EPSILONS, EpsilonGrid
from ..raster import DEFAULT_SUITE, Camera, SuiteError, build_transform_suite


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelEntry:
    path: str
    textured: bool = True

    @property
    def resolved(self) -> Path:
        return resolve(self.path)


@dataclass(frozen=True)
class RunConfig:
    models: tuple
    suite: tuple = DEFAULT_SUITE
    detectors: tuple = ALL_DETECTORS
    detector_params: dict = field(default_factory=dict)  # DetectorId -> DetectorParams
    grid: EpsilonGrid = EpsilonGrid()
    modes: tuple = (PreselectMode(2), PreselectMode(3))
    camera: Camera = Camera()
    output: str = "results"
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.models:
            raise ConfigError("models: at least one model is required")
        if not self.detectors:
            raise ConfigError("detectors: at least one detector is required")
        if not self.modes:
            raise ConfigError("modes: at least one pre-selection mode is required")
        if self.workers < 1:
            raise ConfigError(f"workers: must be >= 1, got {self.workers}")

    def params_for(self, detector: DetectorId) -> DetectorParams:
        return self.detector_params.get(detector, DetectorParams())

    def transforms(self):
        return build_transform_suite(self.suite)

    def to_dict(self) -> dict:
        """Plain-data echo of the configuration (written next to results)."""
        return {
            "models": [dataclasses.asdict(m) for m in self.models],
            "suite": [dict(r) for r in self.suite],
            "detectors": [d.value for d in self.detectors],
            "detector_params": {d.value: dataclasses.asdict(self.params_for(d)) for d in self.detectors},
            "epsilons": list(self.grid.thresholds),
            "modes": [m.label for m in self.modes],
            "camera": dataclasses.asdict(self.camera),
            "seed": self.seed,
        }


_TOP_KEYS = {"models", "model", "suite", "detectors", "detector_params", "epsilons", "modes",
             "camera", "output", "workers", "seed"}
_SUITE_KEYS = {"kind", "start", "stop", "step", "exclude", "values"}
_CAMERA_KEYS = {f.name for f in dataclasses.fields(Camera)}
_PARAM_KEYS = {f.name for f in dataclasses.fields(DetectorParams)}


def _reject_unknown(table: dict, allowed: set, where: str) -> None:
    extra = sorted(set(table) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {extra}; allowed: {sorted(allowed)}")


def _num(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


def parse_config(data: dict, base_dir: Path | None = None) -> RunConfig:
    data = copy.deepcopy(data)
    _reject_unknown(data, _TOP_KEYS, "config")

    models = []
    for i, m in enumerate(data.get("models", [])):
        if not isinstance(m, str):
            raise ConfigError(f"models[{i}]: expected a path string, got {m!r}")
        models.append(ModelEntry(_rebase(m, base_dir)))
    for i, m in enumerate(data.get("model", [])):
        if not isinstance(m, dict) or "path" not in m:
            raise ConfigError(f"model[{i}]: expected a table with a 'path' key")
        _reject_unknown(m, {"path", "textured"}, f"model[{i}]")
        models.append(ModelEntry(_rebase(str(m["path"]), base_dir), bool(m.get("textured", True))))
    if not models:
        raise ConfigError("models: at least one model is required")

    suite = DEFAULT_SUITE
    if "suite" in data:
        suite = []
        for i, rng in enumerate(data["suite"]):
            where = f"suite[{i}]"
            if not isinstance(rng, dict):
                raise ConfigError(f"{where}: expected a table")
            _reject_unknown(rng, _SUITE_KEYS, where)
            if "kind" not in rng:
                raise ConfigError(f"{where}: missing 'kind'")
            if "values" not in rng and "start" not in rng:
                raise ConfigError(f"{where}: needs 'start' (with 'stop'/'step') or 'values'")
            for key in ("start", "stop", "step"):
                if key in rng:
                    _num(rng[key], f"{where}.{key}")
            if "step" in rng and rng["step"] <= 0:
                raise ConfigError(f"{where}.step: must be positive, got {rng['step']}")
            suite.append(rng)
        suite = tuple(suite)
        try:
            build_transform_suite(suite)
        except (SuiteError, KeyError) as exc:
            raise ConfigError(f"suite: {exc}") from exc

    try:
        detectors = tuple(DetectorId.parse(d) for d in data.get("detectors", [d.value for d in ALL_DETECTORS]))
    except ValueError as exc:
        raise ConfigError(f"detectors: {exc}") from exc
    if len(set(detectors)) != len(detectors):
        raise ConfigError("detectors: duplicate entries")

    params = {}
    raw_params = data.get("detector_params", {})
    if not isinstance(raw_params, dict):
        raise ConfigError("detector_params: expected a table")
    shared = {k: v for k, v in raw_params.items() if not isinstance(v, dict)}
    per_det = {k: v for k, v in raw_params.items() if isinstance(v, dict)}
    _reject_unknown(shared, _PARAM_KEYS, "detector_params")
    for name in per_det:
        try:
            DetectorId.parse(name)
        except ValueError as exc:
            raise ConfigError(f"detector_params.{name}: {exc}") from exc
        _reject_unknown(per_det[name], _PARAM_KEYS, f"detector_params.{name}")
    for d in detectors:
        kw = {**shared, **per_det.get(d.value, {})}
        try:
            params[d] = DetectorParams(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"detector_params for {d.value}: {exc}") from exc

    try:
        grid = EpsilonGrid(tuple(_num(e, "epsilons") for e in data.get("epsilons", DEFAULT_EPSILONS)))
    except ValueError as exc:
        raise ConfigError(f"epsilons: {exc}") from exc

    try:
        modes = tuple(PreselectMode.parse(m) for m in data.get("modes", ["2D", "3D"]))
    except ValueError as exc:
        raise ConfigError(f"modes: {exc}") from exc
    if len(set(modes)) != len(modes):
        raise ConfigError("modes: duplicate entries")
    modes = tuple(sorted(modes, key=lambda m: m.dims))

    cam = data.get("camera", {})
    _reject_unknown(cam, _CAMERA_KEYS, "camera")
    cam = {k: tuple(v) if isinstance(v, list) else v for k, v in cam.items()}
    try:
        camera = Camera(**cam)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"camera: {exc}") from exc

    workers = data.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError(f"workers: expected a positive integer, got {workers!r}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError(f"seed: expected an integer, got {seed!r}")
    output = data.get("output", "results")
    if not isinstance(output, str):
        raise ConfigError(f"output: expected a path string, got {output!r}")

    return RunConfig(tuple(models), suite, detectors, params, grid, modes, camera,
                     _rebase(output, base_dir), workers, seed)


def _rebase(path: str, base_dir: Path | None) -> str:
    if base_dir is None or path.startswith("builtin:") or Path(path).is_absolute():
        return path
    return str(base_dir / path)


def validate_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        return parse_config(data, base_dir=path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
