"""End-to-end benchmark run over models x transforms x detectors x modes.

Per model: render the identity reference once, detect with every detector,
lift and cull. Every other transform is scored independently against that
reference (render, detect, lift, map back to the reference frame, cull,
overlap-filter, pre-select per mode, classify). Scene jobs are pure and may
run in a process pool; results are collected by key and written in lattice
order, so output bytes do not depend on the worker count.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..detect import DetectorId, DetectorParams, detect
from ..geom import (bbox_tolerance, cull_bbox, lift_points, occluded_count, overlap_filter,
                    preselect, to_reference_frame)
from ..mesh_io import Mesh, MeshError, load_mesh, mesh_aabb, normalize_mesh
from ..metrics import (AggregateRepeatability, EpsilonGrid, NoDefinedScenes, RepeatabilityResult,
                       aggregate_repeatability, best_epsilon, classify_repeated,
                       informedness_curve, mean_curve, pooled_informedness, roc_auc)
from ..raster import Camera, GBuffer, SceneTransform, make_transform, render
from .config import RunConfig

log = logging.getLogger(__name__)

CSV_HEADER = ["model", "transform_index", "transform_desc", "detector", "mode", "epsilon",
              "repeated", "denominator", "rate", "tpr", "fpr", "informedness", "flags"]


class MeshLoadError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReferenceScene:
    gbuffer: GBuffer
    points: dict  # DetectorId -> list[WorldPoint] (lifted, bbox-culled)
    detected: dict  # DetectorId -> int
    dropped: dict  # DetectorId -> int background drops


@dataclass
class DetectorOutcome:
    detected: int
    dropped_background: int
    dropped_bbox: int
    ref_count: int
    cand_count: int
    occluded: int
    results: dict  # mode label -> RepeatabilityResult
    curve: list | None = None


@dataclass
class SceneOutcome:
    index: int
    desc: str
    detectors: dict = field(default_factory=dict)  # DetectorId -> DetectorOutcome


def load_models(config: RunConfig) -> list[Mesh]:
    """Load and normalize every model before any rendering happens."""
    meshes = []
    for entry in config.models:
        path = entry.resolved
        try:
            mesh = normalize_mesh(load_mesh(path))
        except (OSError, MeshError) as exc:
            raise MeshLoadError(f"{entry.path}: {exc}") from exc
        if not entry.textured and mesh.texture is not None:
            mesh = Mesh(mesh.vertices, mesh.faces, mesh.normals, mesh.uvs, None, mesh.name, mesh.meta)
        meshes.append(mesh)
    names = [m.name for m in meshes]
    if len(set(names)) != len(names):
        # disambiguate duplicate stems by manifest position
        meshes = [Mesh(m.vertices, m.faces, m.normals, m.uvs, m.texture, f"{i}_{m.name}", m.meta)
                  for i, m in enumerate(meshes)]
    return meshes


def reference_scene(mesh: Mesh, camera: Camera, detectors, params: dict) -> ReferenceScene:
    gb = render(mesh, make_transform("Identity", index=1), camera)
    aabb = mesh_aabb(mesh)
    tol = bbox_tolerance(aabb)
    pts, det, drop = {}, {}, {}
    for d in detectors:
        found = detect(gb.intensity, d, params.get(d, DetectorParams()))
        lifted, dropped = lift_points(found, gb, scene_index=1)
        pts[d] = cull_bbox(lifted, aabb, tol)
        det[d], drop[d] = len(found), dropped
    return ReferenceScene(gb, pts, det, drop)


def score_scene(mesh: Mesh, camera: Camera, transform: SceneTransform, ref: ReferenceScene,
                detectors, params: dict, modes, grid: EpsilonGrid) -> SceneOutcome:
    """Score one transformed scene against the reference for every detector and mode."""
    gb = render(mesh, transform, camera)
    aabb = mesh_aabb(mesh)
    tol = bbox_tolerance(aabb)
    out = SceneOutcome(transform.index, transform.desc)
    for d in detectors:
        found = detect(gb.intensity, d, params.get(d, DetectorParams()))
        lifted, dropped = lift_points(found, gb, scene_index=transform.index)
        in_ref = to_reference_frame(lifted, transform)
        culled = cull_bbox(in_ref, aabb, tol)
        ref_pts, cand_pts = overlap_filter(ref.points[d], culled, transform, camera, ref.gbuffer, gb)
        results = {}
        for mode in modes:
            pairs = preselect(ref_pts, cand_pts, mode)
            results[mode.label] = classify_repeated(pairs, camera, grid, scene_index=transform.index,
                                                    detector=d.value)
        curve = None
        if "2D" in results and "3D" in results:
            curve = informedness_curve(results["2D"], results["3D"], grid)
        out.detectors[d] = DetectorOutcome(
            detected=len(found), dropped_background=dropped, dropped_bbox=len(in_ref) - len(culled),
            ref_count=len(ref_pts), cand_count=len(cand_pts),
            occluded=occluded_count(cand_pts, camera, ref.gbuffer), results=results, curve=curve)
    return out


def _scene_job(args):
    return score_scene(*args)


@dataclass
class ModelRun:
    mesh_name: str
    reference: dict  # detector value -> {"detected", "dropped_background", "kept"}
    scenes: list  # SceneOutcome in suite order


@dataclass
class ResultSet:
    config: RunConfig
    models: list  # ModelRun

    def rows(self):
        grid = self.config.grid
        for mr in self.models:
            for sc in mr.scenes:
                for d in self.config.detectors:
                    do = sc.detectors[d]
                    for mode in self.config.modes:
                        res: RepeatabilityResult = do.results[mode.label]
                        for k, eps in enumerate(grid):
                            flags = []
                            if not res.defined:
                                flags.append("undefined_scene")
                            if do.curve is None:
                                tpr = fpr = inf = 0.0
                                flags.append("single_mode")
                            else:
                                pt = do.curve[k]
                                tpr, fpr, inf = pt.tpr, pt.fpr, pt.informedness
                                if pt.tpr_degenerate:
                                    flags.append("tpr_zero_denominator")
                                if pt.fpr_degenerate:
                                    flags.append("fpr_zero_denominator")
                            yield [mr.mesh_name, sc.index, sc.desc, d.value, mode.label, eps,
                                   res.repeated_count[k], res.denominator, res.rate[k],
                                   tpr, fpr, inf, ";".join(flags)]


def _fmt(x):
    return repr(x) if isinstance(x, float) else str(x)


def results_csv_text(rs: ResultSet) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_HEADER)
    for row in rs.rows():
        wr.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _curve_json(curve):
    return [{"epsilon": p.epsilon, "tpr": p.tpr, "fpr": p.fpr, "informedness": p.informedness}
            for p in curve]


def _agg_json(agg: AggregateRepeatability | None, grid):
    if agg is None:
        return {"mean_rate": [0.0] * len(grid), "n_defined": 0, "n_excluded": None}
    return {"mean_rate": list(agg.mean_rate), "n_defined": agg.n_defined, "n_excluded": agg.n_excluded}


def _detector_summary(config: RunConfig, d: DetectorId, outcomes: list) -> dict:
    """Aggregate one detector over a list of DetectorOutcome (one model or all)."""
    grid = config.grid
    out = {"repeatability": {}}
    for mode in config.modes:
        try:
            agg = aggregate_repeatability(o.results[mode.label] for o in outcomes)
        except NoDefinedScenes:
            agg = None
        out["repeatability"][mode.label] = _agg_json(agg, grid)
        if agg is None:
            out["repeatability"][mode.label]["n_excluded"] = len(outcomes)
    curves = [o.curve for o in outcomes if o.curve is not None]
    if curves:
        pooled = pooled_informedness((o.results["2D"], o.results["3D"]) for o in outcomes)
        meaned = mean_curve(curves)
        eps, inf = best_epsilon(pooled)
        eps_m, inf_m = best_epsilon(meaned)
        out["informedness_pooled"] = _curve_json(pooled)
        out["informedness_mean_of_curves"] = _curve_json(meaned)
        out["auc_pooled"] = roc_auc(pooled)
        out["auc_mean_of_curves"] = roc_auc(meaned)
        out["best_epsilon_pooled"] = {"epsilon": eps, "informedness": inf}
        out["best_epsilon_mean_of_curves"] = {"epsilon": eps_m, "informedness": inf_m}
    out["totals"] = {
        "detected": sum(o.detected for o in outcomes),
        "dropped_background": sum(o.dropped_background for o in outcomes),
        "dropped_bbox": sum(o.dropped_bbox for o in outcomes),
        "occluded_candidates": sum(o.occluded for o in outcomes),
    }
    return out


def direction_table(summary_block: dict, config: RunConfig, eps: float = 1.5) -> list[dict]:
    """2D vs 3D comparison at ``eps`` per detector, from a summary block."""
    k = config.grid.index(eps)
    rows = []
    for d in config.detectors:
        s = summary_block[d.value]
        if "informedness_pooled" not in s:
            continue
        rep2 = s["repeatability"]["2D"]["mean_rate"][k]
        rep3 = s["repeatability"]["3D"]["mean_rate"][k]
        pt = s["informedness_pooled"][k]
        rows.append({"detector": d.value, "epsilon": eps, "rep2d": rep2, "rep3d": rep3,
                     "tpr": pt["tpr"], "fpr": pt["fpr"], "informedness": pt["informedness"],
                     "rep2d_ge_rep3d": rep2 >= rep3, "fpr_positive": pt["fpr"] > 0,
                     "best_epsilon": s["best_epsilon_pooled"]["epsilon"]})
    return rows


def build_summary(rs: ResultSet) -> dict:
    cfg = rs.config
    summary = {"config": cfg.to_dict(), "models": {}, "undefined_scenes": {}}
    everything = {d: [] for d in cfg.detectors}
    for mr in rs.models:
        block = {}
        for d in cfg.detectors:
            outs = [sc.detectors[d] for sc in mr.scenes]
            everything[d].extend(outs)
            block[d.value] = _detector_summary(cfg, d, outs)
            block[d.value]["reference"] = mr.reference[d.value]
        summary["models"][mr.mesh_name] = block
        summary["undefined_scenes"][mr.mesh_name] = {
            d.value: [sc.index for sc in mr.scenes
                      if not next(iter(sc.detectors[d].results.values())).defined]
            for d in cfg.detectors}
    agg = {d.value: _detector_summary(cfg, d, everything[d]) for d in cfg.detectors}
    summary["aggregate"] = agg
    if len(cfg.modes) == 2:
        summary["direction_eps_1_5"] = direction_table(agg, cfg, 1.5)
    summary["scene_count"] = sum(len(mr.scenes) for mr in rs.models)
    summary["row_count"] = summary["scene_count"] * len(cfg.detectors) * len(cfg.modes) * len(cfg.grid)
    return summary


def run(config: RunConfig, out_dir=None, workers: int | None = None, write: bool = True) -> ResultSet:
    """Execute the full benchmark; writes results.csv and summary.json into ``out_dir``."""
    meshes = load_models(config)
    transforms = [t for t in config.transforms() if not t.is_identity]
    workers = workers or config.workers
    params = {d: config.params_for(d) for d in config.detectors}
    models = []
    for mesh in meshes:
        log.info("model %s: reference scene", mesh.name)
        ref = reference_scene(mesh, config.camera, config.detectors, params)
        jobs = [(mesh, config.camera, t, ref, config.detectors, params, config.modes, config.grid)
                for t in transforms]
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                outcomes = {o.index: o for o in pool.map(_scene_job, jobs)}
        else:
            outcomes = {}
            for job in jobs:
                o = _scene_job(job)
                outcomes[o.index] = o
        scenes = [outcomes[t.index] for t in transforms]
        reference = {d.value: {"detected": ref.detected[d], "dropped_background": ref.dropped[d],
                               "kept": len(ref.points[d])} for d in config.detectors}
        models.append(ModelRun(mesh.name, reference, scenes))
    rs = ResultSet(config, models)
    if write:
        write_results(rs, out_dir or config.output)
    return rs


def write_results(rs: ResultSet, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(results_csv_text(rs), encoding="utf-8")
    (out / "summary.json").write_text(json.dumps(build_summary(rs), indent=2, sort_keys=False) + "\n",
                                      encoding="utf-8")
    return out
