"""``multiverse`` command line: trace twins, select twin/K, run the pipeline, evaluate.

Exit codes: 0 ok, 2 configuration error, 3 missing artifact or trace
failure, 4 no feasible twin.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .antenna import (Codebook, load_codebook, mean_codebook_discrepancy, pattern_discrepancy,
                      read_pattern_csv, synthetic_codebook)
from .errors import (ConfigError, DuplicateCellError, GeometryInvalidError, GridMismatchError,
                     IncompleteGridError, MultiverseError, NoFeasibleTwinError, SizeMismatchError,
                     SpecParseError, TwinNotBuiltError, ZeroNormSampleError)
from .metrics import LatencyBudget, acc_grid, latency_report
from .pipeline import (ROUTE_LOCAL, ROUTE_MULTIVERSE, GroundTruthSet, KNNPredictor,
                       ThresholdOodDetector, dispatch_batch, exhaustive_sweep, fine_tune,
                       read_ground_truth_csv, write_ground_truth_csv, write_trace_jsonl)
from .raytracer import PropagationConfig
from .selector import (DEFAULT_K_MAX, CommCostModel, SelectionConstraints, fit_inclusion_model,
                       select_twin_and_k, usage_breakdown)
from .synthetic import synthesize_ground_truth
from .twin import (TwinConfig, export_lookup_csv, generate_lookup_table, load_lookup_table,
                   save_lookup_table)
from .world import load_scene, make_rx_grid

EXIT_OK, EXIT_CONFIG, EXIT_ARTIFACT, EXIT_INFEASIBLE = 0, 2, 3, 4

log = logging.getLogger("multiverse")


class ArtifactError(MultiverseError):
    """A file produced by an earlier step is missing or unreadable."""


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class TwinSpec:
    twin_id: str
    scene: str
    rho: int
    rx_grid: dict
    scenario_id: str
    map_cost: Optional[float] = None


@dataclass
class RunConfig:
    path: Path
    raw: dict
    twins: list
    codebook: Optional[str]
    rx_pattern: Optional[str]
    prop: PropagationConfig
    seed: int
    out: Path
    alpha: float = 0.0
    comm_budget_ms: float = 2.34
    comp_budget: float = 1e12
    comm_model: str = "linear"
    k_max: int = DEFAULT_K_MAX
    region_width: float = 8.0
    smoothing: float = 1.0
    alphas: list = field(default_factory=list)
    comm_budgets: list = field(default_factory=list)
    pipeline: dict = field(default_factory=dict)
    latency: dict = field(default_factory=dict)
    ground_truth: object = None
    unit_cost: float = 1.0
    seconds_per_unit: float = 1e-6

    @property
    def base(self) -> Path:
        return self.path.parent

    def resolve(self, rel) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base / p

    @property
    def scenario_ids(self) -> list:
        return sorted({t.scenario_id for t in self.twins})


def _section(d, key) -> dict:
    v = d.get(key) or {}
    if not isinstance(v, dict):
        raise ConfigError(f"config section '{key}' must be a mapping")
    return v


def _propagation(d: dict) -> PropagationConfig:
    types = {f.name: f.type for f in dataclasses.fields(PropagationConfig)}
    kw = {}
    for k, v in d.items():
        if k not in types:
            raise ConfigError(f"propagation: unknown key {k!r}")
        try:  # YAML 1.1 reads exponents without a sign (6.0e9) as strings
            kw[k] = {"float": float, "int": int, "bool": bool}.get(types[k], lambda x: x)(v)
        except (TypeError, ValueError):
            raise ConfigError(f"propagation: bad value for {k}: {v!r}") from None
    return PropagationConfig(**kw)


def load_run_config(path, args: Optional[argparse.Namespace] = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise SpecParseError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    prop = _propagation(_section(raw, "propagation"))
    default_scene = raw.get("scene")
    default_scenario = raw.get("scenario_id", "")
    twins = []
    for i, t in enumerate(raw.get("twins") or []):
        if not isinstance(t, dict) or "id" not in t or "rx_grid" not in t:
            raise ConfigError(f"twin {i}: needs 'id' and 'rx_grid'")
        scene = t.get("scene", default_scene)
        if scene is None:
            raise ConfigError(f"twin {t['id']}: no scene")
        twins.append(TwinSpec(str(t["id"]), str(scene), int(t.get("rho", prop.max_reflections)),
                              dict(t["rx_grid"]), str(t.get("scenario_id", default_scenario)),
                              t.get("map_cost")))
    ids = [t.twin_id for t in twins]
    if len(set(ids)) != len(ids):
        raise ConfigError("twin ids must be unique")
    sel = _section(raw, "selection")
    cost = _section(raw, "cost")
    cfg = RunConfig(
        path=path, raw=raw, twins=twins, codebook=raw.get("codebook"),
        rx_pattern=raw.get("rx_pattern"), prop=prop, seed=int(raw.get("seed", 0)),
        out=Path(raw.get("out", "out")),
        alpha=float(sel.get("alpha", 0.0)),
        comm_budget_ms=float(sel.get("comm_budget_ms", 2.34)),
        comp_budget=float(sel.get("comp_budget", 1e12)),
        comm_model=str(sel.get("comm_model", "linear")),
        k_max=int(sel.get("k_max", DEFAULT_K_MAX)),
        region_width=float(sel.get("region_width", 8.0)),
        smoothing=float(sel.get("smoothing", 1.0)),
        alphas=[float(a) for a in (sel.get("sweep") or {}).get("alphas", [])],
        comm_budgets=[float(b) for b in (sel.get("sweep") or {}).get("comm_budgets_ms", [])],
        pipeline=_section(raw, "pipeline"), latency=_section(raw, "latency"),
        ground_truth=raw.get("ground_truth"),
        unit_cost=float(cost.get("unit_cost", 1.0)),
        seconds_per_unit=float(cost.get("seconds_per_unit", 1e-6)),
    )
    if not cfg.out.is_absolute():
        cfg.out = cfg.base / cfg.out
    if args is not None:
        if getattr(args, "seed", None) is not None:
            cfg.seed = args.seed
        if getattr(args, "out", None) is not None:
            cfg.out = Path(args.out)
        for name in ("alpha", "comm_budget_ms", "comp_budget", "comm_model", "k_max"):
            v = getattr(args, name, None)
            if v is not None:
                setattr(cfg, name, v)
        if getattr(args, "alpha", None) is not None:
            cfg.alphas = [args.alpha]
        if getattr(args, "comm_budget_ms", None) is not None:
            cfg.comm_budgets = [args.comm_budget_ms]
    if not cfg.alphas:
        cfg.alphas = [cfg.alpha]
    if not cfg.comm_budgets:
        cfg.comm_budgets = [cfg.comm_budget_ms]
    CommCostModel(cfg.comm_model)  # validates the variant
    for t in twins:
        if not cfg.resolve(t.scene).is_file():
            raise ConfigError(f"twin {t.twin_id}: scene file not found: {t.scene}")
    for key in ("codebook", "rx_pattern"):
        v = getattr(cfg, key)
        if v is not None and not cfg.resolve(v).is_file():
            raise ConfigError(f"{key} file not found: {v}")
    return cfg


# ---------------------------------------------------------------------------
# helpers


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write_json(path: Path, obj) -> None:
    path.write_text(_dumps(obj))


class _Run:
    """Collects input/output hashes and writes the manifest plus the timestamped sidecar log."""

    def __init__(self, command: str, out: Path, seed: Optional[int] = None):
        self.command = command
        self.out = out
        self.seed = seed
        self.inputs: dict = {}
        self.outputs: dict = {}
        self.extra: dict = {}
        self.t0 = time.time()
        out.mkdir(parents=True, exist_ok=True)

    def input(self, role: str, path: Path, label: Optional[str] = None) -> None:
        self.inputs[role] = {"path": label if label is not None else Path(path).name,
                             "sha256": _sha256(path)}

    def output(self, path: Path) -> None:
        self.outputs[str(Path(path).relative_to(self.out))] = _sha256(path)

    def finish(self) -> None:
        manifest = {"command": self.command, "version": __version__, "seed": self.seed,
                    "inputs": self.inputs, "outputs": dict(sorted(self.outputs.items())),
                    **self.extra}
        _write_json(self.out / f"{self.command}_manifest.json", manifest)
        stamp = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        with open(self.out / "run.log", "a") as fh:
            fh.write(f"{stamp} {self.command} ok in {time.time() - self.t0:.3f}s; "
                     f"{len(self.outputs)} outputs\n")


def _codebook(cfg: RunConfig, run: Optional[_Run] = None) -> Codebook:
    if cfg.codebook is None:
        return synthetic_codebook()
    p = cfg.resolve(cfg.codebook)
    if run is not None:
        run.input("codebook", p, cfg.codebook)
    return load_codebook(p)


def _rx_pattern(cfg: RunConfig, run: Optional[_Run] = None):
    if cfg.rx_pattern is None:
        return None
    p = cfg.resolve(cfg.rx_pattern)
    if run is not None:
        run.input("rx_pattern", p, cfg.rx_pattern)
    return read_pattern_csv(p)


def _grid(spec: dict, scenario_id: str):
    try:
        return make_rx_grid(spec["start"], spec["end"], int(spec["n_points"]),
                            float(spec["height"]), scenario_id)
    except KeyError as exc:
        raise ConfigError(f"rx_grid needs start, end, n_points and height (missing {exc})") from None


def _table_path(cfg: RunConfig, twin_id: str) -> Path:
    return cfg.out / "tables" / f"{twin_id}.mvlt"


def _load_tables(cfg: RunConfig, run: _Run) -> list:
    if not cfg.twins:
        raise ConfigError("no twins configured")
    lts = []
    for t in cfg.twins:
        p = _table_path(cfg, t.twin_id)
        if not p.is_file():
            raise TwinNotBuiltError(f"lookup table for twin {t.twin_id} not found at {p}; "
                                    "run 'multiverse trace' first")
        run.input(f"table:{t.twin_id}", p, f"tables/{p.name}")
        lts.append(load_lookup_table(p))
    return lts


def _ground_truth(cfg: RunConfig, run: _Run, codebook: Codebook,
                  path_override: Optional[str] = None) -> GroundTruthSet:
    src = path_override if path_override is not None else cfg.ground_truth
    if src is None:
        raise ConfigError("no ground truth configured")
    if isinstance(src, str):
        p = Path(src) if path_override is not None else cfg.resolve(src)
        if not p.is_file():
            raise ConfigError(f"ground truth file not found: {src}")
        run.input("ground_truth", p, Path(src).name)
        return read_ground_truth_csv(p)
    syn = (src or {}).get("synthetic") if isinstance(src, dict) else None
    if not isinstance(syn, dict):
        raise ConfigError("ground_truth must be a CSV path or {synthetic: {...}}")
    cache = cfg.out / "ground_truth.csv"
    parts, first = [], 0
    for k, sc in enumerate(syn.get("scenarios") or []):
        scene_path = cfg.resolve(sc["scene"])
        if not scene_path.is_file():
            raise ConfigError(f"ground-truth scene not found: {sc['scene']}")
        run.input(f"gt_scene:{sc['id']}", scene_path, sc["scene"])
        spec = yaml.safe_load(scene_path.read_text())
        gt = synthesize_ground_truth(int(sc["n_samples"]), codebook, cfg.seed * 1000 + k,
                                     str(sc["id"]), scene=spec,
                                     cfg=dataclasses.replace(cfg.prop, max_reflections=int(
                                         syn.get("rho", cfg.prop.max_reflections))),
                                     noise_db=float(syn.get("noise_db", 1.0)),
                                     offset_x=float(sc.get("offset_x", 0.0)),
                                     height=float(sc.get("height", 1.645)), first_id=first)
        first += len(gt)
        parts.append(gt)
    if not parts:
        raise ConfigError("synthetic ground truth needs at least one scenario")
    gt = GroundTruthSet(np.concatenate([g.sample_ids for g in parts]),
                        np.concatenate([g.scenario_ids for g in parts]),
                        np.concatenate([g.positions for g in parts]),
                        np.concatenate([g.snr_db for g in parts]))
    write_ground_truth_csv(gt, cache)
    run.output(cache)
    return read_ground_truth_csv(cache)


def _comm(cfg: RunConfig) -> CommCostModel:
    return CommCostModel(cfg.comm_model)


def _latency_budget(cfg: RunConfig) -> LatencyBudget:
    lat = cfg.latency
    return LatencyBudget(float(lat.get("downlink_ms", 0.1292)), float(lat.get("solve_ms", 0.023)),
                         _comm(cfg), float(lat.get("exhaustive_ms", 1.27)))


def _predicted(lt, gt: GroundTruthSet) -> np.ndarray:
    return np.array([lt.snr_db[lt.nearest_index(p)] for p in gt.positions], dtype=float)


def _acc_report(gt: GroundTruthSet, pred: np.ndarray) -> dict:
    return acc_grid(gt, pred) if len(gt) else {}


# ---------------------------------------------------------------------------
# commands


def cmd_trace(cfg: RunConfig, workers: Optional[int] = None) -> int:
    run = _Run("trace", cfg.out, cfg.seed)
    run.input("config", cfg.path)
    if not cfg.twins:
        raise ConfigError("no twins configured")
    codebook = _codebook(cfg, run)
    rx_pattern = _rx_pattern(cfg, run)
    tables_dir = cfg.out / "tables"
    tables_dir.mkdir(parents=True, exist_ok=True)
    costs = {}
    for t in cfg.twins:
        scene_path = cfg.resolve(t.scene)
        run.input(f"scene:{t.twin_id}", scene_path, t.scene)
        world = load_scene(scene_path)
        twin = TwinConfig(t.twin_id, t.scenario_id, world, codebook, t.rho,
                          dataclasses.replace(cfg.prop,
                                              max_reflections=max(t.rho, cfg.prop.max_reflections)),
                          _grid(t.rx_grid, t.scenario_id), rx_pattern, t.map_cost,
                          unit_cost=cfg.unit_cost, seconds_per_unit=cfg.seconds_per_unit)
        try:
            lt = generate_lookup_table(twin, workers)
        except ConfigError:
            raise
        except (MultiverseError, ValueError, FloatingPointError) as exc:
            raise ArtifactError(f"tracing twin {t.twin_id} failed: {exc}") from exc
        p = _table_path(cfg, t.twin_id)
        size = save_lookup_table(lt, p)
        down = save_lookup_table(lt, tables_dir / f"{t.twin_id}.downlink.mvlt", include_rays=False)
        csv_path = tables_dir / f"{t.twin_id}.csv"
        export_lookup_csv(lt, csv_path)
        for q in (p, tables_dir / f"{t.twin_id}.downlink.mvlt", csv_path):
            run.output(q)
        costs[t.twin_id] = {**dataclasses.asdict(lt.comp_cost), "rho": t.rho,
                            "n_points": lt.n_points, "n_beams": lt.n_beams,
                            "scenario_id": t.scenario_id, "file_bytes": size,
                            "downlink_bytes": down}
        log.info("twin %s: %d x %d table, total cost %.6g", t.twin_id, lt.n_points,
                 lt.n_beams, lt.comp_cost.total)
    run.extra["twins"] = costs
    run.finish()
    return EXIT_OK


def cmd_select(cfg: RunConfig, gt_path: Optional[str] = None) -> int:
    run = _Run("select", cfg.out, cfg.seed)
    run.input("config", cfg.path)
    lts = _load_tables(cfg, run)
    codebook = _codebook(cfg, run)
    gt_all = _ground_truth(cfg, run, codebook, gt_path)
    comm = _comm(cfg)
    decisions_path = cfg.out / "decisions.jsonl"
    usage_path = cfg.out / "usage.csv"
    inclusion_path = cfg.out / "inclusion.csv"
    twin_ids = [lt.twin_id for lt in lts]
    lines, usage_rows, total = [], [], 0
    scenarios = [s for s in cfg.scenario_ids if s in set(gt_all.scenario_ids)]
    if not scenarios:
        raise ConfigError("ground truth has no samples for the twins' scenarios")
    gt = gt_all.subset(np.isin(gt_all.scenario_ids, scenarios))
    model = fit_inclusion_model(gt, lts, cfg.region_width, cfg.smoothing)
    model.export_csv(inclusion_path)
    run.output(inclusion_path)
    for alpha in cfg.alphas:
        for budget in cfg.comm_budgets:
            cell = []
            for s in gt.samples():
                cons = SelectionConstraints(budget, cfg.comp_budget, alpha,
                                            scenario_id=s.scenario_id, position=s.position)
                rec = {"alpha": alpha, "comm_budget_ms": budget, "sample": s.index}
                try:
                    d = select_twin_and_k([lt for lt in lts if lt.scenario_id == s.scenario_id],
                                          model, cons, comm, cfg.k_max)
                    cell.append(d)
                    rec["decision"] = d.to_dict()
                except NoFeasibleTwinError:
                    rec["decision"] = None
                lines.append(json.dumps(rec, sort_keys=True, allow_nan=False))
            total += len(cell)
            usage = usage_breakdown(cell, twin_ids) if cell else {t: 0.0 for t in twin_ids}
            usage_rows.append([alpha, budget, len(cell)] + [usage[t] for t in sorted(usage)])
    decisions_path.write_text("".join(line + "\n" for line in lines))
    with open(usage_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "comm_budget_ms", "n_decisions"] + sorted(twin_ids))
        for row in usage_rows:
            w.writerow([repr(row[0]), repr(row[1]), row[2]] + [repr(float(x)) for x in row[3:]])
    run.output(decisions_path)
    run.output(usage_path)
    run.finish()
    if total == 0:
        raise NoFeasibleTwinError("no feasible twin for any sample and constraint cell")
    return EXIT_OK


def _split(n: int, fraction: float, seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    k = int(round(fraction * n))
    return np.sort(perm[:k]), np.sort(perm[k:])


def cmd_pipeline(cfg: RunConfig, gt_path: Optional[str] = None) -> int:
    run = _Run("pipeline", cfg.out, cfg.seed)
    run.input("config", cfg.path)
    lts = _load_tables(cfg, run)
    codebook = _codebook(cfg, run)
    gt = _ground_truth(cfg, run, codebook, gt_path)
    pc = cfg.pipeline
    seen = str(pc.get("seen_scenario", ""))
    unseen = str(pc.get("unseen_scenario", cfg.scenario_ids[0] if cfg.scenario_ids else ""))
    seen_gt, unseen_gt = gt.scenario(seen), gt.scenario(unseen)
    if len(unseen_gt) == 0:
        raise ConfigError(f"no ground truth for unseen scenario {unseen!r}")
    B = gt.n_beams
    scale = float(pc.get("knn_scale", 1.0))
    predictor = KNNPredictor(B, scale)
    for s, v in zip(seen_gt.samples(), seen_gt.snr_db):
        predictor.ingest(s, exhaustive_sweep(v))
    detector = (ThresholdOodDetector().fit(predictor, float(pc.get("ood_quantile", 0.05)))
                if len(predictor) >= 2 else ThresholdOodDetector.constant(1.0))
    cal_idx, eval_idx = _split(len(unseen_gt), float(pc.get("calibration_fraction", 0.5)),
                               cfg.seed)
    calib, evaluation = unseen_gt.subset(cal_idx), unseen_gt.subset(eval_idx)
    model = fit_inclusion_model(calib, lts, cfg.region_width, cfg.smoothing)
    comm = _comm(cfg)
    budget = _latency_budget(cfg)
    cons = SelectionConstraints(cfg.comm_budget_ms, cfg.comp_budget, cfg.alpha)
    test = GroundTruthSet(np.concatenate([seen_gt.sample_ids, evaluation.sample_ids]),
                          np.concatenate([seen_gt.scenario_ids, evaluation.scenario_ids]),
                          np.concatenate([seen_gt.positions, evaluation.positions]),
                          np.concatenate([seen_gt.snr_db, evaluation.snr_db]))
    results = dispatch_batch(test, predictor, detector, lts, model, cons, comm, cfg.k_max,
                             budget)
    trace_path = cfg.out / "dispatch.jsonl"
    write_trace_jsonl(results, trace_path)
    run.output(trace_path)

    best = test.best_beams
    routes = {ROUTE_LOCAL: 0, ROUTE_MULTIVERSE: 0}
    exact = {ROUTE_LOCAL: 0, ROUTE_MULTIVERSE: 0}
    for r, b in zip(results, best):
        routes[r.route] += 1
        exact[r.route] += int(r.beam == b)
    mv = [r for r in results if r.route == ROUTE_MULTIVERSE]
    twins_by_id = {lt.twin_id: lt for lt in lts}
    label_twin = str(pc.get("label_twin", max(lts, key=lambda lt: (lt.comp_cost.total,
                                                                   lt.twin_id)).twin_id))
    if label_twin not in twins_by_id:
        raise ConfigError(f"label_twin {label_twin!r} is not a configured twin")
    fine = {}
    for ratio in pc.get("labeling_ratios", [0.0, 0.5, 1.0]):
        p = KNNPredictor(B, scale)
        for s, label in zip(predictor.positions, predictor.labels):
            p.positions.append(s)
            p.labels.append(label)
        fine_tune(p, twins_by_id[label_twin], calib.samples(), float(ratio), cfg.seed)
        scores = np.array([p.predict(s) for s in evaluation.samples()])
        fine[f"{float(ratio):g}"] = _acc_report(evaluation, scores)
    lat_rows = latency_report(budget, (1, cfg.k_max))
    report = {
        "scenarios": {"seen": seen, "unseen": unseen},
        "n_samples": {"seen": len(seen_gt), "calibration": len(calib),
                      "evaluation": len(evaluation)},
        "routes": routes,
        "exhaustive_match": {k: (exact[k] / routes[k] if routes[k] else None) for k in routes},
        "mean_K": (float(np.mean([r.decision.K for r in mv])) if mv else None),
        "mean_multiverse_latency_ms": (float(np.mean([r.latency_ms for r in mv])) if mv else None),
        "usage_pct": usage_breakdown([r.decision for r in mv], [lt.twin_id for lt in lts])
        if mv else {},
        "twin_acc": {lt.twin_id: _acc_report(evaluation, _predicted(lt, evaluation))
                     for lt in lts},
        "fine_tune": {"label_twin": label_twin, "acc_by_ratio": fine},
        "latency": lat_rows,
        "improvement_pct": {f"K={row['K']}": row["improvement_pct"] for row in lat_rows},
    }
    report_path = cfg.out / "pipeline_report.json"
    _write_json(report_path, report)
    run.output(report_path)
    run.finish()
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, gt_path: Optional[str] = None) -> int:
    run = _Run("evaluate", cfg.out, cfg.seed)
    run.input("config", cfg.path)
    lts = _load_tables(cfg, run)
    codebook = _codebook(cfg, run)
    gt_all = _ground_truth(cfg, run, codebook, gt_path)
    report = {"twins": {}}
    heat_path = cfg.out / "heatmap.csv"
    models = []
    for scen in cfg.scenario_ids:
        gt = gt_all.scenario(scen)
        if len(gt) == 0:
            continue
        scen_lts = [lt for lt in lts if lt.scenario_id == scen]
        model = fit_inclusion_model(gt, scen_lts, cfg.region_width, cfg.smoothing)
        models.append((scen, scen_lts, model))
        for lt in scen_lts:
            report["twins"][lt.twin_id] = {
                "scenario_id": scen, "n_samples": len(gt),
                "acc_kt": _acc_report(gt, _predicted(lt, gt)),
                "comp_cost": dataclasses.asdict(lt.comp_cost),
            }
    if not models:
        raise ConfigError("ground truth has no samples for the twins' scenarios")
    with open(heat_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["twin_id", "scenario_id", "K", "region_index", "probability"])
        for scen, scen_lts, model in models:
            for lt in scen_lts:
                for key in model.keys(lt.twin_id, scen):
                    for k, p in enumerate(model.bins[key], start=1):
                        w.writerow([lt.twin_id, scen, k, key[2], repr(float(p))])
    run.output(heat_path)
    budget = _latency_budget(cfg)
    rows = latency_report(budget, (1, cfg.k_max))
    report["latency"] = rows
    report["improvement_pct"] = {f"K={r['K']}": r["improvement_pct"] for r in rows}
    path = cfg.out / "evaluation.json"
    _write_json(path, report)
    run.output(path)
    run.finish()
    return EXIT_OK


def cmd_antenna_compare(manifest_a: str, manifest_b: str, out: Path,
                        radius: str = "amplitude") -> int:
    run = _Run("antenna_compare", out)
    for role, m in (("codebook_a", manifest_a), ("codebook_b", manifest_b)):
        if not Path(m).is_file():
            raise ConfigError(f"codebook manifest not found: {m}")
        run.input(role, Path(m), Path(m).name)
    ca, cb = load_codebook(manifest_a), load_codebook(manifest_b)
    if len(ca) != len(cb):
        raise SizeMismatchError(f"codebooks have {len(ca)} and {len(cb)} beams")
    deltas = [pattern_discrepancy(a, b, radius) for a, b in zip(ca, cb)]
    csv_path = out / "antenna_delta.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beam", "delta", "count"])
        for m, d in enumerate(deltas):
            w.writerow([m, repr(d.delta), d.count])
    mean = mean_codebook_discrepancy(ca, cb, radius)
    summary = out / "antenna_report.json"
    _write_json(summary, {"radius": radius, "n_beams": len(deltas), "mean_delta": mean})
    run.output(csv_path)
    run.output(summary)
    run.finish()
    print(f"mean discrepancy {mean:.6f} over {len(deltas)} beams")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multiverse", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"multiverse {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        if needs_config:
            sp.add_argument("--config", required=True, help="run configuration YAML")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="output directory (default: config 'out')")
        sp.add_argument("-v", "--verbose", action="store_true")

    def selection(sp):
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--comm-budget-ms", dest="comm_budget_ms", type=float)
        sp.add_argument("--comp-budget", dest="comp_budget", type=float)
        sp.add_argument("--comm-model", dest="comm_model", choices=("nr5g", "linear"))
        sp.add_argument("--k-max", dest="k_max", type=int)
        sp.add_argument("--ground-truth", dest="ground_truth", help="ground-truth CSV")

    sp = sub.add_parser("trace", help="build one lookup table per twin")
    common(sp)
    sp.add_argument("--workers", type=int, help="worker processes (default: $MULTIVERSE_WORKERS or 1)")
    for name, text in (("select", "choose twin and K for every ground-truth sample"),
                       ("pipeline", "dispatch samples and report accuracy and latency"),
                       ("evaluate", "accuracy grid, inclusion heatmaps and latency report")):
        sp = sub.add_parser(name, help=text)
        common(sp)
        selection(sp)
    sp = sub.add_parser("antenna-compare", help="discrepancy between two codebooks")
    sp.add_argument("manifest_a")
    sp.add_argument("manifest_b")
    sp.add_argument("--radius", choices=("amplitude", "power", "db"), default="amplitude")
    common(sp, needs_config=False)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "antenna-compare":
            return cmd_antenna_compare(args.manifest_a, args.manifest_b,
                                       Path(args.out or "."), args.radius)
        cfg = load_run_config(args.config, args)
        if args.command == "trace":
            return cmd_trace(cfg, args.workers)
        gt = getattr(args, "ground_truth", None)
        return {"select": cmd_select, "pipeline": cmd_pipeline,
                "evaluate": cmd_evaluate}[args.command](cfg, gt)
    except NoFeasibleTwinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (TwinNotBuiltError, ArtifactError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except (ConfigError, SpecParseError, GeometryInvalidError, GridMismatchError,
            SizeMismatchError, IncompleteGridError, DuplicateCellError,
            ZeroNormSampleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MultiverseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT


if __name__ == "__main__":
    sys.exit(main())
