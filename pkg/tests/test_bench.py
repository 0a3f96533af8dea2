import csv
import json

import pytest

from vgtbench import cli as cli_mod
from vgtbench.assets import builtin_path
from vgtbench.bench import pipeline
from vgtbench.bench.config import ConfigError, parse_config, validate_config
from vgtbench.bench.pipeline import CSV_HEADER, MeshLoadError, results_csv_text, run
from vgtbench.bench.report import EmptyResults, format_direction, report
from vgtbench.detect import ALL_DETECTORS
from vgtbench.raster import DEFAULT_SUITE, Camera

SMALL = {
    "models": ["builtin:cube"],
    "suite": [{"kind": "RotZ", "values": [10]}, {"kind": "RotX", "values": [20]},
              {"kind": "ScaleXY", "values": [1.5]}],
    "detectors": ["HarrisA", "FAST"],
}


def write_toml(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# --- config ---

def test_minimal_config_defaults(tmp_path):
    cfg = validate_config(write_toml(tmp_path / "c.toml", 'models = ["builtin:relief"]\n'))
    assert cfg.camera == Camera() and (cfg.camera.width, cfg.camera.height) == (300, 300)
    assert cfg.suite == DEFAULT_SUITE and len(cfg.transforms()) == 51
    assert cfg.detectors == ALL_DETECTORS
    assert [m.label for m in cfg.modes] == ["2D", "3D"]
    assert cfg.grid.thresholds == (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0)
    assert cfg.output == str(tmp_path / "results")


def test_config_relative_paths_and_overrides(tmp_path):
    text = """
models = ["m.ply"]
detectors = ["KLT"]
modes = ["3D"]
workers = 2
[detector_params]
nms_radius = 4
[detector_params.KLT]
integration_sigma = 2.0
[camera]
width = 64
height = 48
"""
    cfg = validate_config(write_toml(tmp_path / "c.toml", text))
    assert cfg.models[0].path == str(tmp_path / "m.ply")
    p = cfg.params_for(cfg.detectors[0])
    assert (p.nms_radius, p.integration_sigma) == (4, 2.0)
    assert cfg.camera.width == 64 and cfg.workers == 2


@pytest.mark.parametrize("text, fragment", [
    ('models = ["a.ply"]\nepsilons = [0.5, 1.0, 2.0]\n', "1.5"),
    ('models = ["a.ply"]\n[[suite]]\nkind = "RotX"\nstart = 0\nstop = 10\nstep = -10\n', "step"),
    ('models = ["a.ply"]\ncolour = "red"\n', "colour"),
    ('models = ["a.ply"]\ndetectors = ["SIFT"]\n', "SIFT"),
    ('models = []\n', "model"),
    ('models = ["a.ply"]\nmodes = ["4D"]\n', "modes"),
    ('models = ["a.ply"]\n[camera]\nfov = 30\n', "fov"),
])
def test_config_errors(tmp_path, text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        validate_config(write_toml(tmp_path / "c.toml", text))


def test_toml_syntax_error_reports_line(tmp_path):
    with pytest.raises(ConfigError, match="line 2"):
        validate_config(write_toml(tmp_path / "c.toml", 'models = ["a.ply"]\nworkers = = 3\n'))


# --- run ---

@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    rs = run(parse_config(SMALL), out_dir=out, workers=1)
    return rs, out


def test_small_run_row_count(small_run):
    _, out = small_run
    with open(out / "results.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == CSV_HEADER
    assert len(rows) - 1 == 3 * 2 * 2 * 8
    lattice = {(r[1], r[3], r[4], r[5]) for r in rows[1:]}
    assert len(lattice) == 96
    summary = json.loads((out / "summary.json").read_text())
    assert summary["row_count"] == 96 and summary["scene_count"] == 3


def test_rerun_is_byte_identical(small_run, tmp_path):
    _, out = small_run
    run(parse_config(SMALL), out_dir=tmp_path, workers=2)
    assert (tmp_path / "results.csv").read_bytes() == (out / "results.csv").read_bytes()
    assert (tmp_path / "summary.json").read_bytes() == (out / "summary.json").read_bytes()


def test_missing_mesh_fails_before_rendering(monkeypatch, tmp_path):
    calls = []
    monkeypatch.setattr(pipeline, "render", lambda *a, **k: calls.append(a))
    cfg = parse_config({"models": ["builtin:cube", str(tmp_path / "missing.ply")]})
    with pytest.raises(MeshLoadError, match="missing.ply"):
        run(cfg, out_dir=tmp_path)
    assert calls == []


def test_single_mode_rows_are_flagged(tmp_path):
    cfg = parse_config({**SMALL, "modes": ["3D"], "detectors": ["KLT"]})
    text = results_csv_text(run(cfg, write=False))
    rows = list(csv.DictReader(text.splitlines()))
    assert len(rows) == 3 * 8
    assert all("single_mode" in r["flags"] for r in rows)


# --- report ---

def test_report_inventory(small_run):
    _, out = small_run
    files = report(out)
    names = sorted(p.relative_to(out).as_posix() for p in files)
    assert names == ["plots/informedness_vs_epsilon.svg", "plots/repeatability_per_transform.svg",
                     "plots/repeatability_vs_epsilon.svg", "tables/auc.csv", "tables/comparison.csv"]
    for p in files:
        if p.suffix == ".svg":
            text = p.read_text()
            assert text.startswith("<svg") and 'viewBox="0 0 800 500"' in text


def _max_eps_rows(out):
    report(out)
    with open(out / "tables" / "comparison.csv", newline="") as fh:
        return [r for r in csv.DictReader(fh) if float(r["epsilon"]) == 5.0]


def test_informedness_zero_at_max_epsilon(tmp_path):
    cfg = parse_config({**SMALL, "models": ["builtin:relief"],
                        "detectors": ["HarrisA", "KLT", "FAST"]})
    run(cfg, out_dir=tmp_path)
    rows = _max_eps_rows(tmp_path)
    assert len(rows) == 3
    for r in rows:
        assert float(r["informedness_pooled"]) == 0.0


def test_max_epsilon_without_2d_only_repeats(small_run):
    # on the cube 2D and 3D can agree completely: the empty fpr denominator makes fpr 0
    _, out = small_run
    for r in _max_eps_rows(out):
        inf, tpr, fpr = (float(r[k]) for k in ("informedness_pooled", "tpr_pooled", "fpr_pooled"))
        assert inf == 0.0 or (tpr, fpr, inf) == (1.0, 0.0, 1.0)


def test_multi_model_report(tmp_path):
    cfg = parse_config({**SMALL, "models": ["builtin:cube", "builtin:icosphere"], "detectors": ["KLT"]})
    run(cfg, out_dir=tmp_path)
    files = {p.relative_to(tmp_path).as_posix() for p in report(tmp_path)}
    for sub in ("", "cube/", "icosphere/"):
        assert f"plots/{sub}repeatability_vs_epsilon.svg" in files
        assert f"tables/{sub}auc.csv" in files


def test_report_on_empty_dir(tmp_path):
    with pytest.raises(EmptyResults):
        report(tmp_path)


def test_direction_text(small_run):
    _, out = small_run
    text = format_direction(json.loads((out / "summary.json").read_text()))
    assert "2D >= 3D at eps=1.5:" in text and "HarrisA" in text


# --- CLI ---

def invoke(argv):
    with pytest.raises(SystemExit) as exc:
        cli_mod.main(argv)
    return exc.value.code


def test_cli_run_and_report(tmp_path, capsys):
    cfg = write_toml(tmp_path / "c.toml", 'models = ["builtin:cube"]\ndetectors = ["KLT"]\n'
                     '[[suite]]\nkind = "RotZ"\nvalues = [30]\n')
    assert invoke(["run", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "plots" / "informedness_vs_epsilon.svg").is_file()
    assert invoke(["report", "--results", str(tmp_path / "r")]) == 0
    assert "2D >= 3D" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path):
    bad = write_toml(tmp_path / "bad.toml", 'models = ["builtin:cube"]\nepsilons = [1.0]\n')
    assert invoke(["run", "--config", str(bad)]) == 1
    missing = write_toml(tmp_path / "m.toml", f'models = ["{tmp_path / "nope.ply"}"]\n')
    assert invoke(["run", "--config", str(missing), "--out", str(tmp_path / "o")]) == 2
    assert invoke(["report", "--results", str(tmp_path / "empty")]) == 2
    assert invoke(["frobnicate"]) == 1
    assert invoke(["render", "--model", "builtin:cube", "--transform", "Spin:3"]) == 1


def test_cli_render_and_detect(tmp_path, capsys):
    assert invoke(["render", "--model", str(builtin_path("cube")), "--transform", "RotY:30",
                   "--dump-gbuffer", "--out", str(tmp_path), "--size", "64"]) == 0
    png = tmp_path / "cube_RotY_30.png"
    assert png.is_file() and (tmp_path / "cube_RotY_30.gbuf").stat().st_size == 8 + 64 * 64 * 29
    capsys.readouterr()
    assert invoke(["detect", "--image", str(png), "--detector", "HarrisA"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("detector,u,v,response")
    assert len(out) > 1
    assert invoke(["detect", "--image", str(png), "--detector", "SIFT"]) == 1
    assert invoke(["detect", "--image", str(tmp_path / "none.png"), "--detector", "KLT"]) == 2
