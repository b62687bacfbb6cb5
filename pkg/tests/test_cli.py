import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from multiverse import AntennaPattern, Codebook, save_codebook, synthetic_codebook
from multiverse.cli import (EXIT_ARTIFACT, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK,
                            load_run_config, main)

CONFIGS = Path(__file__).parents[1] / "configs"


def small_config(tmp: Path, out: str = "out", **overrides) -> Path:
    """The shipped three-twin config with short grids and few samples."""
    raw = yaml.safe_load((CONFIGS / "multiverse.yaml").read_text())
    raw["out"] = out
    for t in raw["twins"]:
        t["scene"] = str(CONFIGS / t["scene"])
        if t["rx_grid"]["n_points"] > 1:
            t["rx_grid"]["n_points"] = 24
    for sc in raw["ground_truth"]["synthetic"]["scenarios"]:
        sc["scene"] = str(CONFIGS / sc["scene"])
        sc["n_samples"] = 30
    raw["selection"].update(overrides)
    path = tmp / "run.yaml"
    path.write_text(yaml.safe_dump(raw))
    return path


def outputs(out: Path) -> dict:
    return {str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*"))
            if p.is_file() and p.name != "run.log"}


@pytest.fixture(scope="module")
def traced(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = small_config(tmp)
    assert main(["trace", "--config", str(cfg)]) == EXIT_OK
    return cfg, tmp / "out"


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["trace", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG
    assert "not found" in capsys.readouterr().err


def test_missing_scene_exits_2(tmp_path):
    cfg = small_config(tmp_path)
    raw = yaml.safe_load(cfg.read_text())
    raw["twins"][0]["scene"] = "gone.yaml"
    cfg.write_text(yaml.safe_dump(raw))
    assert main(["trace", "--config", str(cfg)]) == EXIT_CONFIG


def test_bad_comm_model_exits_2(tmp_path):
    cfg = small_config(tmp_path, comm_model="carrier-pigeon")
    assert main(["select", "--config", str(cfg)]) == EXIT_CONFIG


def test_missing_tables_exit_3(tmp_path):
    cfg = small_config(tmp_path)
    for cmd in ("select", "pipeline", "evaluate"):
        assert main([cmd, "--config", str(cfg)]) == EXIT_ARTIFACT


def test_trace_writes_tables_and_manifest(traced):
    _, out = traced
    tables = sorted(p.name for p in (out / "tables").glob("*.mvlt") if ".downlink" not in p.name)
    assert tables == ["T1-baseline.mvlt", "T2-1refl.mvlt", "T3-3refl.mvlt"]
    manifest = json.loads((out / "trace_manifest.json").read_text())
    twins = manifest["twins"]
    assert twins["T1-baseline"]["n_points"] == 1
    assert twins["T2-1refl"]["n_points"] == 24 and twins["T2-1refl"]["n_beams"] == 34
    assert twins["T3-3refl"]["total"] > twins["T2-1refl"]["total"] > twins["T1-baseline"]["total"]
    for name in tables:
        assert manifest["outputs"][f"tables/{name}"]
    assert "config" in manifest["inputs"]


def test_select_usage_rows(traced):
    cfg, out = traced
    assert main(["select", "--config", str(cfg)]) == EXIT_OK
    with open(out / "usage.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    assert {(r["alpha"], r["comm_budget_ms"]) for r in rows} == \
        {(a, b) for a in ("0.0", "0.2") for b in ("0.78", "1.56", "2.34")}
    for r in rows:
        shares = [float(r[t]) for t in ("T1-baseline", "T2-1refl", "T3-3refl")]
        assert sum(shares) == pytest.approx(100.0)
    assert (out / "decisions.jsonl").read_text().count("\n") == 6 * 30


def test_select_single_twin_full_usage(traced, tmp_path):
    cfg, out = traced
    raw = yaml.safe_load(cfg.read_text())
    raw["out"] = str(out)
    raw["twins"] = [t for t in raw["twins"] if t["id"] == "T3-3refl"]
    raw["selection"]["sweep"] = {"alphas": [0.0], "comm_budgets_ms": [2.34]}
    one = tmp_path / "one.yaml"
    one.write_text(yaml.safe_dump(raw))
    assert main(["select", "--config", str(one)]) == EXIT_OK
    with open(out / "usage.csv") as fh:
        (row,) = list(csv.DictReader(fh))
    assert float(row["T3-3refl"]) == 100.0


def test_select_infeasible_exits_4(traced):
    cfg, _ = traced
    assert main(["select", "--config", str(cfg), "--comp-budget", "1e-9"]) == EXIT_INFEASIBLE


def test_pipeline_report(traced):
    cfg, out = traced
    assert main(["pipeline", "--config", str(cfg)]) == EXIT_OK
    routes = {json.loads(line)["route"] for line in (out / "dispatch.jsonl").open()}
    assert routes == {"Local", "Multiverse"}
    report = json.loads((out / "pipeline_report.json").read_text())
    assert 85.07 - 0.01 <= report["improvement_pct"]["K=1"] <= 85.08 + 0.01
    assert report["improvement_pct"]["K=12"] == pytest.approx(52.72, abs=0.01)
    assert report["routes"]["Local"] == 30
    assert set(report["fine_tune"]["acc_by_ratio"]) == {"0", "0.5", "1"}


def test_evaluate_report(traced):
    cfg, out = traced
    assert main(["evaluate", "--config", str(cfg)]) == EXIT_OK
    report = json.loads((out / "evaluation.json").read_text())
    assert set(report["twins"]) == {"T1-baseline", "T2-1refl", "T3-3refl"}
    header = (out / "heatmap.csv").read_text().splitlines()[0]
    assert header == "twin_id,scenario_id,K,region_index,probability"


def test_run_config_overrides(traced):
    cfg, _ = traced
    args = type("A", (), {"seed": 3, "out": None, "alpha": 0.5, "comm_budget_ms": None,
                          "comp_budget": None, "comm_model": "nr5g", "k_max": 4})()
    rc = load_run_config(cfg, args)
    assert (rc.seed, rc.alpha, rc.alphas, rc.comm_model, rc.k_max) == (3, 0.5, [0.5], "nr5g", 4)


def _negated(cb: Codebook) -> Codebook:
    return Codebook(tuple(AntennaPattern(p.az_min, p.az_step, p.el_min, p.el_step,
                                         1.0 / p.amplitude, p.phase) for p in cb))


def test_antenna_compare(tmp_path, capsys):
    cb = synthetic_codebook(n_beams=4, az_step=10, el_step=10)
    a = save_codebook(cb, tmp_path / "a")
    b = save_codebook(_negated(cb), tmp_path / "b")
    out = tmp_path / "cmp"
    assert main(["antenna-compare", str(a), str(a), "--out", str(out)]) == EXIT_OK
    assert json.loads((out / "antenna_report.json").read_text())["mean_delta"] == 0.0
    assert main(["antenna-compare", str(a), str(b), "--radius", "db", "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "antenna_report.json").read_text())
    assert report["mean_delta"] == pytest.approx(2.0, abs=1e-12)
    assert "mean discrepancy" in capsys.readouterr().out
    deltas = np.loadtxt(out / "antenna_delta.csv", delimiter=",", skiprows=1)
    assert deltas.shape == (4, 3)


def test_antenna_compare_errors(tmp_path):
    a = save_codebook(synthetic_codebook(n_beams=2, az_step=10, el_step=10), tmp_path / "a")
    b = save_codebook(synthetic_codebook(n_beams=2, az_step=20, el_step=10), tmp_path / "b")
    c = save_codebook(synthetic_codebook(n_beams=3, az_step=10, el_step=10), tmp_path / "c")
    out = str(tmp_path / "o")
    assert main(["antenna-compare", str(a), str(b), "--out", out]) == EXIT_CONFIG
    assert main(["antenna-compare", str(a), str(c), "--out", out]) == EXIT_CONFIG
    assert main(["antenna-compare", str(a), str(tmp_path / "x.json"), "--out", out]) == EXIT_CONFIG


def test_outputs_deterministic_across_runs_and_workers(tmp_path):
    runs = []
    for name, workers in (("a", "1"), ("b", "1"), ("c", "4")):
        (tmp_path / name).mkdir()
        cfg = small_config(tmp_path / name)
        assert main(["trace", "--config", str(cfg), "--workers", workers]) == EXIT_OK
        assert main(["pipeline", "--config", str(cfg)]) == EXIT_OK
        runs.append(outputs(tmp_path / name / "out"))
    assert runs[0].keys() == runs[1].keys() == runs[2].keys()
    for key in runs[0]:
        assert runs[0][key] == runs[1][key] == runs[2][key], key
    assert (tmp_path / "a" / "out" / "run.log").exists()
