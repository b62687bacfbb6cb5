"""Multiverse beam selection: ray-traced twins, lookup tables, twin/top-K selection, metrics."""

__version__ = "0.1.0"

from .antenna import (AntennaPattern, Codebook, PatternSimilarity, gain, isotropic_pattern,
                      load_codebook, load_pattern_grid, mean_codebook_discrepancy,
                      pattern_discrepancy, read_pattern_csv, save_codebook, synthetic_codebook,
                      vector_discrepancy, write_pattern_csv)
from .errors import *  # noqa: F401,F403
from .metrics import (AccuracyQuery, LatencyBudget, acc_grid, acc_kt, downlink_ms,
                      improvement_vs_exhaustive, inclusion_heatmap, multiverse_latency,
                      threshold_set)
from .pipeline import (D_ID, D_OOD, ROUTE_LOCAL, ROUTE_MULTIVERSE, DispatchResult,
                       GroundTruthSet, KNNPredictor, SensorSample, ThresholdOodDetector,
                       baseline_ood_classify, dispatch, dispatch_batch, exhaustive_sweep,
                       fine_tune, read_ground_truth_csv, sweep_candidates,
                       write_ground_truth_csv)
from .raytracer import (PropagationConfig, RayPath, ReceivedPower, Tracer, dedupe_paths,
                        knife_edge_loss_db, power_to_dbm, received_power,
                        reception_sphere_radius, shoot_paths, snr_dbm, trace_paths)
from .selector import (CommCostModel, InclusionModel, SelectionConstraints, SelectionDecision,
                       comm_cost, fit_inclusion_model, select_twin_and_k, top_k_beams,
                       usage_breakdown)
from .twin import (CostBreakdown, LookupEntry, LookupTable, MapCostModel, TwinConfig,
                   count_reflective_surfaces, export_lookup_csv, generate_lookup_table,
                   load_lookup_table, lookup_cost, prop_cost_factor, save_lookup_table,
                   total_cost)
from .world import (Bounds, Building, Material, Obstacle, Placement, RxGrid, WorldModel,
                    build_world, load_scene, make_rx_grid, parse_scene, serialize_world)

__all__ = [
    "__version__",
    "AntennaPattern",
    "Codebook",
    "PatternSimilarity",
    "gain",
    "isotropic_pattern",
    "load_codebook",
    "load_pattern_grid",
    "mean_codebook_discrepancy",
    "pattern_discrepancy",
    "read_pattern_csv",
    "save_codebook",
    "synthetic_codebook",
    "vector_discrepancy",
    "write_pattern_csv",
    "AccuracyQuery",
    "LatencyBudget",
    "acc_grid",
    "acc_kt",
    "downlink_ms",
    "improvement_vs_exhaustive",
    "inclusion_heatmap",
    "multiverse_latency",
    "threshold_set",
    "D_ID",
    "D_OOD",
    "ROUTE_LOCAL",
    "ROUTE_MULTIVERSE",
    "DispatchResult",
    "GroundTruthSet",
    "KNNPredictor",
    "SensorSample",
    "ThresholdOodDetector",
    "baseline_ood_classify",
    "dispatch",
    "dispatch_batch",
    "exhaustive_sweep",
    "fine_tune",
    "read_ground_truth_csv",
    "sweep_candidates",
    "write_ground_truth_csv",
    "PropagationConfig",
    "RayPath",
    "ReceivedPower",
    "Tracer",
    "dedupe_paths",
    "knife_edge_loss_db",
    "power_to_dbm",
    "received_power",
    "reception_sphere_radius",
    "shoot_paths",
    "snr_dbm",
    "trace_paths",
    "CommCostModel",
    "InclusionModel",
    "SelectionConstraints",
    "SelectionDecision",
    "comm_cost",
    "fit_inclusion_model",
    "select_twin_and_k",
    "top_k_beams",
    "usage_breakdown",
    "CostBreakdown",
    "LookupEntry",
    "LookupTable",
    "MapCostModel",
    "TwinConfig",
    "count_reflective_surfaces",
    "export_lookup_csv",
    "generate_lookup_table",
    "load_lookup_table",
    "lookup_cost",
    "prop_cost_factor",
    "save_lookup_table",
    "total_cost",
    "Bounds",
    "Building",
    "Material",
    "Obstacle",
    "Placement",
    "RxGrid",
    "WorldModel",
    "build_world",
    "load_scene",
    "make_rx_grid",
    "parse_scene",
    "serialize_world",
    "BeamIndexError",
    "ConfigError",
    "CorruptTableError",
    "CostOverflowError",
    "DegenerateGridError",
    "DuplicateCellError",
    "EmptyCandidatesError",
    "EmptyInputError",
    "EmptyLookupError",
    "GeometryInvalidError",
    "GridMismatchError",
    "IncompleteGridError",
    "InvalidKError",
    "MultiverseError",
    "NegativePowerError",
    "NoFeasibleTwinError",
    "NonPositiveBaselineError",
    "SchemaVersionMismatchError",
    "ShapeMismatchError",
    "SizeMismatchError",
    "SpecParseError",
    "TwinNotBuiltError",
    "UnfittedDetectorError",
    "UnknownTwinError",
    "ZeroNormSampleError",
]
