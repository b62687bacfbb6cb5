"""End-to-end beam selection: local prediction, OOD routing, Multiverse fallback, fine-tuning."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

from .errors import (BeamIndexError, ConfigError, EmptyCandidatesError, EmptyInputError,
                     EmptyLookupError, SpecParseError, TwinNotBuiltError, UnfittedDetectorError)
from .metrics import LatencyBudget, multiverse_latency
from .selector import (CommCostModel, InclusionModel, SelectionConstraints, SelectionDecision,
                       select_twin_and_k, top_k_beams)
from .twin import LookupTable

D_ID = "ID"
D_OOD = "OOD"
ROUTE_LOCAL = "Local"
ROUTE_MULTIVERSE = "Multiverse"


@dataclass(frozen=True)
class SensorSample:
    position: tuple
    scenario_id: str = ""
    index: int = 0
    features: Optional[tuple] = None

    def __post_init__(self):
        p = tuple(float(c) for c in self.position)
        if len(p) != 3 or not all(math.isfinite(c) for c in p):
            raise ValueError("position must be three finite coordinates")
        object.__setattr__(self, "position", p)


@dataclass(frozen=True, eq=False)
class GroundTruthSet:
    """Measured per-beam SNR (dB) at known positions.  ``-inf`` marks no signal."""

    sample_ids: np.ndarray
    scenario_ids: np.ndarray
    positions: np.ndarray
    snr_db: np.ndarray

    def __post_init__(self):
        snr = np.asarray(self.snr_db, dtype=float)
        pos = np.asarray(self.positions, dtype=float)
        if snr.ndim != 2 or pos.shape != (len(snr), 3):
            raise ValueError("snr_db must be (V, B) and positions (V, 3)")
        object.__setattr__(self, "snr_db", snr)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "sample_ids", np.asarray(self.sample_ids, dtype=np.int64))
        object.__setattr__(self, "scenario_ids", np.asarray(self.scenario_ids, dtype=str))

    def __len__(self):
        return len(self.snr_db)

    def __eq__(self, other):
        if not isinstance(other, GroundTruthSet):
            return NotImplemented
        return (np.array_equal(self.sample_ids, other.sample_ids)
                and np.array_equal(self.scenario_ids, other.scenario_ids)
                and self.positions.tobytes() == other.positions.tobytes()
                and self.snr_db.tobytes() == other.snr_db.tobytes())

    @property
    def n_beams(self) -> int:
        return self.snr_db.shape[1]

    @property
    def best_beams(self) -> np.ndarray:
        return np.array([exhaustive_sweep(v) for v in self.snr_db], dtype=np.int64)

    @property
    def records(self) -> list:
        return [(int(i), tuple(p), v) for i, p, v in
                zip(self.sample_ids, self.positions, self.snr_db)]

    def samples(self) -> list:
        return [SensorSample(tuple(p), str(s), int(i)) for i, s, p in
                zip(self.sample_ids, self.scenario_ids, self.positions)]

    def subset(self, mask) -> "GroundTruthSet":
        m = np.asarray(mask)
        return GroundTruthSet(self.sample_ids[m], self.scenario_ids[m], self.positions[m],
                              self.snr_db[m])

    def scenario(self, scenario_id: str) -> "GroundTruthSet":
        return self.subset(self.scenario_ids == scenario_id)


def write_ground_truth_csv(gt: GroundTruthSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "scenario_id", "pos_x", "pos_y", "pos_z"]
                   + [f"snr_{m}" for m in range(gt.n_beams)])
        for i, s, p, v in zip(gt.sample_ids, gt.scenario_ids, gt.positions, gt.snr_db):
            w.writerow([int(i), s] + [repr(float(c)) for c in p] + [repr(float(x)) for x in v])


def read_ground_truth_csv(path) -> GroundTruthSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SpecParseError(f"{path}: empty ground-truth file") from None
        beams = [c for c in header if c.startswith("snr_")]
        if header[:5] != ["sample_id", "scenario_id", "pos_x", "pos_y", "pos_z"] or not beams:
            raise SpecParseError(f"{path}: unexpected ground-truth header")
        ids, scen, pos, snr = [], [], [], []
        for n, row in enumerate(reader, start=2):
            try:
                ids.append(int(row[0]))
                scen.append(row[1])
                pos.append([float(x) for x in row[2:5]])
                snr.append([float(x) for x in row[5:5 + len(beams)]])
            except (ValueError, IndexError):
                raise SpecParseError(f"{path}:{n}: malformed row") from None
            if len(snr[-1]) != len(beams):
                raise SpecParseError(f"{path}:{n}: expected {len(beams)} SNR values")
    return GroundTruthSet(np.array(ids, dtype=np.int64), np.array(scen, dtype=str),
                          np.array(pos, dtype=float).reshape(-1, 3),
                          np.array(snr, dtype=float).reshape(-1, len(beams)))


# ---------------------------------------------------------------------------
# sweeps


def exhaustive_sweep(gt) -> int:
    """Index of the strongest beam; the lowest index wins ties."""
    v = np.asarray(gt, dtype=float)
    if v.size == 0:
        raise EmptyInputError("empty SNR vector")
    return int(np.argmax(np.where(np.isnan(v), -np.inf, v)))


def sweep_candidates(gt, candidates: Sequence[int]) -> int:
    """Strongest beam among ``candidates`` (lowest index on ties)."""
    v = np.asarray(gt, dtype=float)
    cand = sorted({int(c) for c in candidates})
    if not cand:
        raise EmptyCandidatesError("no candidate beams")
    if cand[0] < 0 or cand[-1] >= len(v):
        raise BeamIndexError(f"candidate beam outside [0, {len(v)})")
    sub = np.where(np.isnan(v[cand]), -np.inf, v[cand])
    return cand[int(np.argmax(sub))]


# ---------------------------------------------------------------------------
# local predictor and OOD detector


class LocalPredictor(Protocol):
    n_beams: int

    def predict(self, sample: SensorSample) -> np.ndarray: ...

    def confidence(self, sample: SensorSample) -> float: ...

    def ingest(self, sample: SensorSample, label: int) -> "LocalPredictor": ...


@dataclass
class KNNPredictor:
    """Nearest stored position wins; its label gets score 0 and every other beam -inf.

    Confidence decays as ``exp(-distance / scale)``.  Ingesting a sample at
    an already stored position replaces that label.
    """

    n_beams: int
    scale: float = 1.0
    positions: list = field(default_factory=list)
    labels: list = field(default_factory=list)

    def __post_init__(self):
        if self.n_beams < 1 or not self.scale > 0:
            raise ConfigError("n_beams must be >= 1 and scale > 0")

    def __len__(self):
        return len(self.labels)

    def _nearest(self, position, exclude: Optional[int] = None) -> tuple:
        if not self.labels:
            return -1, math.inf
        d = np.linalg.norm(np.asarray(self.positions) - np.asarray(position, dtype=float), axis=1)
        if exclude is not None:
            d[exclude] = np.inf
        i = int(np.argmin(d))
        return i, float(d[i])

    def predict_label(self, sample: SensorSample) -> int:
        i, _ = self._nearest(sample.position)
        return 0 if i < 0 else self.labels[i]

    def predict(self, sample: SensorSample) -> np.ndarray:
        scores = np.full(self.n_beams, -np.inf)
        scores[self.predict_label(sample)] = 0.0
        return scores

    def confidence(self, sample: SensorSample) -> float:
        _, d = self._nearest(sample.position)
        return math.exp(-d / self.scale)

    def loo(self, i: int) -> tuple:
        """Leave-one-out (label, confidence) for stored sample ``i``."""
        j, d = self._nearest(self.positions[i], exclude=i)
        if j < 0 or not math.isfinite(d):
            return 0, 0.0
        return self.labels[j], math.exp(-d / self.scale)

    def ingest(self, sample: SensorSample, label: int) -> "KNNPredictor":
        if not 0 <= label < self.n_beams:
            raise BeamIndexError(f"label {label} outside [0, {self.n_beams})")
        p = tuple(sample.position)
        for i, q in enumerate(self.positions):
            if q == p:
                self.labels[i] = int(label)
                return self
        self.positions.append(p)
        self.labels.append(int(label))
        return self


@dataclass
class ThresholdOodDetector:
    """Flags a sample as OOD when confidence falls below its predicted class's threshold.

    :meth:`fit` sets each class threshold to the ``quantile`` of
    leave-one-out confidences of correctly predicted training samples in
    that class.  Classes with fewer than ``min_samples`` such samples or a
    correct ratio below ``min_correct_ratio`` use the global threshold.
    """

    thresholds: dict = field(default_factory=dict)
    default: Optional[float] = None
    correct_ratio: dict = field(default_factory=dict)

    @classmethod
    def constant(cls, threshold: float) -> "ThresholdOodDetector":
        return cls({}, float(threshold))

    @property
    def fitted(self) -> bool:
        return self.default is not None

    def fit(self, predictor: KNNPredictor, quantile: float = 0.05, min_samples: int = 3,
            min_correct_ratio: float = 0.0) -> "ThresholdOodDetector":
        if len(predictor) < 2:
            raise EmptyInputError("need at least two training samples")
        conf_by_class: dict = {}
        total_by_class: dict = {}
        correct_conf = []
        for i in range(len(predictor)):
            label, conf = predictor.loo(i)
            total_by_class[label] = total_by_class.get(label, 0) + 1
            if label == predictor.labels[i]:
                conf_by_class.setdefault(label, []).append(conf)
                correct_conf.append(conf)
        pool = correct_conf or [predictor.loo(i)[1] for i in range(len(predictor))]
        self.default = float(np.quantile(pool, quantile))
        self.thresholds = {}
        self.correct_ratio = {}
        for c in sorted(total_by_class):
            confs = conf_by_class.get(c, [])
            ratio = len(confs) / total_by_class[c]
            self.correct_ratio[c] = ratio
            if len(confs) >= min_samples and ratio >= min_correct_ratio:
                self.thresholds[c] = float(np.quantile(confs, quantile))
        return self

    def threshold(self, label: int) -> float:
        if not self.fitted:
            raise UnfittedDetectorError("detector has not been fitted")
        return self.thresholds.get(label, self.default)

    def classify(self, sample: SensorSample, predictor: LocalPredictor) -> str:
        label = int(np.argmax(predictor.predict(sample)))
        return D_OOD if predictor.confidence(sample) < self.threshold(label) else D_ID


def baseline_ood_classify(sample: SensorSample, predictor: LocalPredictor,
                          thresholds: ThresholdOodDetector) -> str:
    return thresholds.classify(sample, predictor)


# ---------------------------------------------------------------------------
# dispatch


@dataclass(frozen=True)
class DispatchResult:
    beam: int
    route: str
    decision: Optional[SelectionDecision] = None
    latency_ms: float = 0.0
    sample_index: int = 0

    def to_dict(self) -> dict:
        return {"sample": self.sample_index, "route": self.route, "beam": self.beam,
                "latency_ms": self.latency_ms,
                "decision": None if self.decision is None else self.decision.to_dict()}


def dispatch(sample: SensorSample, predictor: LocalPredictor, detector: ThresholdOodDetector,
             multiverse: Sequence[LookupTable], model: InclusionModel,
             cfg: SelectionConstraints, comm: CommCostModel, gt_vector,
             k_max: int = 12, budget: Optional[LatencyBudget] = None) -> DispatchResult:
    """Route one sample: local argmax when in distribution, else twin top-K plus a sweep.

    ``multiverse`` holds the available tables; those of the sample's
    scenario are eligible.  Without any, :class:`TwinNotBuiltError` is raised.
    """
    if detector.classify(sample, predictor) == D_ID:
        beam = int(np.argmax(predictor.predict(sample)))
        return DispatchResult(beam, ROUTE_LOCAL, None, 0.0, sample.index)
    tables = [lt for lt in multiverse if lt.scenario_id == sample.scenario_id]
    if not tables:
        raise TwinNotBuiltError(f"no lookup table for scenario {sample.scenario_id!r}")
    cons = dataclasses.replace(cfg, scenario_id=sample.scenario_id, position=sample.position)
    decision = select_twin_and_k(tables, model, cons, comm, k_max)
    beam = sweep_candidates(gt_vector, decision.beams)
    if budget is not None:
        latency = multiverse_latency(dataclasses.replace(budget, sweep=comm), decision.K)
    else:
        latency = decision.comm_cost_ms
    return DispatchResult(beam, ROUTE_MULTIVERSE, decision, latency, sample.index)


def dispatch_batch(gt: GroundTruthSet, predictor: LocalPredictor, detector: ThresholdOodDetector,
                   multiverse: Sequence[LookupTable], model: InclusionModel,
                   cfg: SelectionConstraints, comm: CommCostModel, k_max: int = 12,
                   budget: Optional[LatencyBudget] = None) -> list:
    return [dispatch(s, predictor, detector, multiverse, model, cfg, comm, v, k_max, budget)
            for s, v in zip(gt.samples(), gt.snr_db)]


def write_trace_jsonl(results: Sequence[DispatchResult], path) -> None:
    with open(path, "w") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# fine-tuning with twin labels


def fine_tune(predictor: LocalPredictor, lt: LookupTable, samples: Sequence[SensorSample],
              labeling_ratio: float, seed: int) -> LocalPredictor:
    """Label a seeded random ``labeling_ratio`` share of ``samples`` with the twin's best beam.

    Each chosen sample gets the top-1 beam of the nearest table entry and
    is ingested, in sample order.
    """
    if lt is None or lt.n_points == 0:
        raise EmptyLookupError("lookup table is empty")
    if not 0.0 <= labeling_ratio <= 1.0:
        raise ConfigError("labeling_ratio must lie in [0, 1]")
    n = int(round(labeling_ratio * len(samples)))
    if n == 0:
        return predictor
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(len(samples), size=n, replace=False))
    for i in chosen:
        s = samples[int(i)]
        label = top_k_beams(lt.entry(lt.nearest_index(s.position)), 1)[0]
        predictor.ingest(s, label)
    return predictor
