"""Inclusion-probability model, beam-sweep cost models and joint twin/top-K choice."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (ConfigError, EmptyInputError, InvalidKError, NoFeasibleTwinError,
                     UnknownTwinError)
from .twin import LookupEntry, LookupTable

DEFAULT_K_MAX = 12


@dataclass(frozen=True)
class CommCostModel:
    """Time to sweep K candidate beams.

    ``nr5g``: one SS burst of up to 32 beams every ``t_p`` ms, ``t_ssb`` ms
    for the last burst.  ``linear``: ``per_beam`` ms per probed beam.
    """

    variant: str = "linear"
    t_p: float = 20.0
    t_ssb: float = 5.0
    per_beam: float = 1.27 / 34

    def __post_init__(self):
        if self.variant not in ("nr5g", "linear"):
            raise ConfigError(f"unknown comm model {self.variant!r}")
        if not (self.t_p > 0 and self.t_ssb > 0 and self.per_beam > 0):
            raise ConfigError("comm model parameters must be positive")


def comm_cost(model: CommCostModel, K: int) -> float:
    if K < 1:
        raise InvalidKError(f"K must be >= 1, got {K}")
    if model.variant == "nr5g":
        return model.t_p * ((K - 1) // 32) + model.t_ssb
    return K * model.per_beam


def _scores(entry) -> np.ndarray:
    s = np.asarray(entry.snr_db if isinstance(entry, LookupEntry) else entry, dtype=float)
    return np.where(np.isnan(s), -np.inf, s)


def beam_ranking(entry) -> np.ndarray:
    """All beams by descending SNR; equal SNRs keep ascending index, -inf last."""
    return np.argsort(-_scores(entry), kind="stable")


def top_k_beams(entry, K: int) -> list:
    """The K highest-SNR beams of a lookup entry (or plain SNR vector), best first."""
    s = _scores(entry)
    if not 1 <= K <= len(s):
        raise InvalidKError(f"K must lie in [1, {len(s)}], got {K}")
    return [int(b) for b in beam_ranking(s)[:K]]


# ---------------------------------------------------------------------------
# inclusion model


@dataclass(frozen=True)
class _Axis:
    origin: tuple
    direction: tuple  # unit vector; zero for a single-point grid
    n_regions: int

    def along(self, position) -> float:
        p = np.asarray(position, dtype=float)[:2] - np.asarray(self.origin[:2])
        return float(p @ np.asarray(self.direction[:2]))


@dataclass
class InclusionModel:
    """Empirical probability, per road region, that the true best beam is in a twin's top-K.

    ``bins[(twin_id, scenario_id, region)]`` is a vector whose entry ``K-1``
    holds p(K).  Regions are ``region_width``-metre slices of the twin's Rx
    trajectory between ``r_b`` and ``r_e`` (metres from the trajectory
    start; ``r_e=None`` means the trajectory end).
    """

    region_width: float
    smoothing: float = 1.0
    r_b: float = 0.0
    r_e: Optional[float] = None
    bins: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    flagged: set = field(default_factory=set)
    axes: dict = field(default_factory=dict)

    def keys(self, twin_id: str, scenario_id: str) -> list:
        return sorted(k for k in self.bins if k[0] == twin_id and k[1] == scenario_id)

    def _axis(self, twin_id: str, scenario_id: str) -> _Axis:
        try:
            return self.axes[(twin_id, scenario_id)]
        except KeyError:
            raise UnknownTwinError(f"no inclusion model for twin {twin_id!r} "
                                   f"in scenario {scenario_id!r}") from None

    def n_regions(self, twin_id: str, scenario_id: str) -> int:
        return self._axis(twin_id, scenario_id).n_regions

    def region_index(self, twin_id: str, scenario_id: str, along_m: float) -> int:
        ax = self._axis(twin_id, scenario_id)
        r = int(math.floor((along_m - self.r_b) / self.region_width))
        return min(max(r, 0), ax.n_regions - 1)

    def region_of(self, twin_id: str, scenario_id: str, position) -> int:
        return self.region_index(twin_id, scenario_id,
                                 self._axis(twin_id, scenario_id).along(position))

    def position_at(self, twin_id: str, scenario_id: str, along_m: float) -> np.ndarray:
        ax = self._axis(twin_id, scenario_id)
        return np.asarray(ax.origin) + along_m * np.asarray(ax.direction)

    def probability(self, twin_id: str, scenario_id: str, region: int, K: int) -> float:
        self._axis(twin_id, scenario_id)
        vec = self.bins[(twin_id, scenario_id, region)]
        if not 1 <= K <= len(vec):
            raise InvalidKError(f"K must lie in [1, {len(vec)}], got {K}")
        return float(vec[K - 1])

    def vector(self, twin_id: str, scenario_id: str, region: int) -> np.ndarray:
        self._axis(twin_id, scenario_id)
        return self.bins[(twin_id, scenario_id, region)]

    def export_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["twin_id", "scenario_id", "region_index", "K", "probability"])
            for key in sorted(self.bins):
                for k, p in enumerate(self.bins[key], start=1):
                    w.writerow([key[0], key[1], key[2], k, repr(float(p))])


def _ranks(lt_rows: np.ndarray, best: np.ndarray) -> np.ndarray:
    """Zero-based rank of each true best beam in its LT row; B when never a hit."""
    B = lt_rows.shape[1]
    order = np.argsort(-np.where(np.isnan(lt_rows), -np.inf, lt_rows), axis=1, kind="stable")
    rank = np.argmax(order == best[:, None], axis=1)
    finite = np.isfinite(lt_rows[np.arange(len(best)), best])
    return np.where(finite, rank, B)


def fit_inclusion_model(ground_truth, lts: Sequence[LookupTable], region_width: float,
                        smoothing: float = 1.0, r_b: float = 0.0,
                        r_e: Optional[float] = None) -> InclusionModel:
    """Fit p(K) = (hits(K) + s) / (count + 2 s) per twin, scenario and region.

    ``ground_truth`` needs ``positions`` (V, 3), ``snr_db`` (V, B) and
    ``scenario_ids``.  A sample counts as a hit at K when its best beam is
    among the top-K beams of the nearest table entry and has finite SNR
    there.  Bins without samples take the twin's scenario-wide estimate and
    are recorded in ``flagged``.
    """
    if region_width <= 0:
        raise ConfigError("region_width must be positive")
    if smoothing < 0:
        raise ConfigError("smoothing must be >= 0")
    model = InclusionModel(region_width, smoothing, r_b, r_e)
    pos = np.asarray(ground_truth.positions, dtype=float)
    gt = np.asarray(ground_truth.snr_db, dtype=float)
    scen = np.asarray(ground_truth.scenario_ids)
    best = np.argmax(np.where(np.isnan(gt), -np.inf, gt), axis=1) if len(gt) else np.zeros(0, int)
    s = smoothing

    def estimate(hits_by_k, count, B):
        if count + 2 * s == 0:
            return np.zeros(B)
        return (hits_by_k + s) / (count + 2 * s)

    for lt in lts:
        grid = lt.grid
        start = np.asarray(grid.start, dtype=float)
        axis = np.asarray(grid.end, dtype=float) - start
        length = float(np.linalg.norm(axis))
        direction = axis / length if length > 0 else np.zeros(3)
        end = length if r_e is None else r_e
        n_reg = max(1, int(math.ceil((end - r_b) / region_width - 1e-12)))
        model.axes[(lt.twin_id, lt.scenario_id)] = _Axis(tuple(start.tolist()),
                                                         tuple(direction.tolist()), n_reg)
        sel = np.nonzero(scen == lt.scenario_id)[0]
        if len(sel) == 0:
            raise EmptyInputError(f"no ground truth for scenario {lt.scenario_id!r}")
        B = lt.n_beams
        if gt.shape[1] != B:
            raise ConfigError("ground-truth beam count differs from the lookup table")
        nearest = np.array([grid.nearest_index(p) for p in pos[sel]])
        rank = _ranks(lt.snr_db[nearest].astype(float), best[sel])
        ks = np.arange(1, B + 1)
        hit = rank[:, None] < ks[None, :]
        regions = np.array([model.region_of(lt.twin_id, lt.scenario_id, p) for p in pos[sel]])
        overall = estimate(hit.sum(axis=0), len(sel), B)
        for r in range(n_reg):
            key = (lt.twin_id, lt.scenario_id, r)
            m = regions == r
            model.counts[key] = int(m.sum())
            if m.any():
                model.bins[key] = estimate(hit[m].sum(axis=0), int(m.sum()), B)
            else:
                model.bins[key] = overall.copy()
                model.flagged.add(key)
    return model


# ---------------------------------------------------------------------------
# joint twin and K selection


@dataclass(frozen=True)
class SelectionConstraints:
    comm_budget_ms: float
    comp_budget: float
    alpha: float = 0.0
    region: float = 0.0  # metres along the Rx trajectory
    scenario_id: str = ""
    position: Optional[tuple] = None  # overrides ``region`` when given

    def __post_init__(self):
        if not (self.comm_budget_ms > 0 and self.comp_budget > 0):
            raise ConfigError("budgets must be positive")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")


@dataclass(frozen=True)
class SelectionDecision:
    twin_id: str
    K: int
    beams: tuple
    objective: float
    inclusion_probability: float
    comm_cost_ms: float
    comp_cost: float
    region_index: int = 0
    rx_index: int = 0

    def to_dict(self) -> dict:
        return {"twin_id": self.twin_id, "K": self.K, "beams": list(self.beams),
                "objective": self.objective, "inclusion_probability": self.inclusion_probability,
                "comm_cost_ms": self.comm_cost_ms, "comp_cost": self.comp_cost,
                "region_index": self.region_index, "rx_index": self.rx_index}


def objective(p: float, c_comm: float, c_comp: float, cons: SelectionConstraints) -> float:
    return p + (cons.alpha / 2.0) * (1.0 - c_comm / cons.comm_budget_ms) * \
        (1.0 - c_comp / cons.comp_budget)


def select_twin_and_k(lts: Sequence[LookupTable], model: InclusionModel,
                      cons: SelectionConstraints, comm: CommCostModel,
                      k_max: int = DEFAULT_K_MAX) -> SelectionDecision:
    """Pick the twin and K maximising inclusion probability plus the weighted cost slack.

    Both budgets are strict upper bounds.  Among equal objectives the
    cheaper twin wins, then the smaller K, then the smaller twin id.
    """
    if not lts:
        raise EmptyInputError("no lookup tables")
    if k_max < 1:
        raise InvalidKError("k_max must be >= 1")
    best_key, best = None, None
    for lt in lts:
        c_comp = lt.comp_cost.total
        if not c_comp < cons.comp_budget:
            continue
        scen = cons.scenario_id or lt.scenario_id
        if cons.position is not None:
            pos = np.asarray(cons.position, dtype=float)
            region = model.region_of(lt.twin_id, scen, pos)
        else:
            pos = model.position_at(lt.twin_id, scen, cons.region)
            region = model.region_index(lt.twin_id, scen, cons.region)
        probs = model.vector(lt.twin_id, scen, region)
        for K in range(1, min(lt.n_beams, k_max) + 1):
            c = comm_cost(comm, K)
            if not c < cons.comm_budget_ms:
                break  # sweep cost is non-decreasing in K
            p = float(probs[K - 1])
            obj = objective(p, c, c_comp, cons)
            key = (-obj, c_comp, K, lt.twin_id)
            if best_key is None or key < best_key:
                best_key, best = key, (lt, K, obj, p, c, c_comp, region, pos)
    if best is None:
        raise NoFeasibleTwinError("no twin satisfies the communication and computation budgets")
    lt, K, obj, p, c, c_comp, region, pos = best
    j = lt.nearest_index(pos)
    return SelectionDecision(lt.twin_id, K, tuple(top_k_beams(lt.entry(j), K)), obj, p, c,
                             c_comp, region, j)


def usage_breakdown(decisions: Sequence[SelectionDecision],
                    twin_ids: Optional[Sequence[str]] = None) -> dict:
    """Percentage of decisions choosing each twin (keys sorted, zeros for ``twin_ids``)."""
    if not decisions:
        raise EmptyInputError("no decisions")
    counts = {t: 0 for t in (twin_ids or ())}
    for d in decisions:
        counts[d.twin_id] = counts.get(d.twin_id, 0) + 1
    n = len(decisions)
    return {t: 100.0 * counts[t] / n for t in sorted(counts)}
