"""Top-K accuracy within a dB threshold, inclusion heatmaps and latency accounting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (ConfigError, EmptyInputError, NonPositiveBaselineError,
                     ShapeMismatchError, UnknownTwinError)
from .selector import CommCostModel, InclusionModel, comm_cost

# control-channel rate of the 5 GHz band used for table downlink
DEFAULT_DOWNLINK_MBPS = 1733.0
EXHAUSTIVE_SWEEP_MS = 1.27
SOLVE_MS = 0.023

REPORT_KS = (1, 5, 10)
REPORT_TS = (0.0, 1.0, 2.0)


@dataclass(frozen=True)
class AccuracyQuery:
    K: int
    T: float = 0.0

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if not self.T >= 0:
            raise ConfigError("T must be >= 0")


def threshold_set(gt_vector, T: float) -> list:
    """Beams whose SNR is within ``T`` dB of the best one; ``-inf`` beams never qualify."""
    v = np.asarray(gt_vector, dtype=float)
    if v.size == 0:
        raise EmptyInputError("empty SNR vector")
    v = np.where(np.isnan(v), -np.inf, v)
    finite = np.isfinite(v)
    if not finite.any():
        return []
    return [int(m) for m in np.nonzero(finite & (v >= v.max() - T))[0]]


def _as_matrix(x) -> np.ndarray:
    m = np.asarray(getattr(x, "snr_db", x), dtype=float)
    return np.where(np.isnan(m), -np.inf, m)


def _hits(gt: np.ndarray, pred: np.ndarray, K: int, T: float) -> np.ndarray:
    best = gt.max(axis=1, initial=-np.inf)
    good = np.isfinite(gt) & (gt >= (best - T)[:, None])
    order = np.argsort(-pred, axis=1, kind="stable")[:, :K]
    rows = np.arange(len(gt))[:, None]
    cand_ok = np.isfinite(pred[rows, order])
    return (good[rows, order] & cand_ok).any(axis=1)


def acc_kt(gt, predicted, q: AccuracyQuery) -> float:
    """Share of samples where a beam within ``q.T`` dB of the optimum is in the predicted top-K.

    Candidates are the K highest predicted scores (ties to the lower index),
    excluding beams predicted as ``-inf``.
    """
    g, p = _as_matrix(gt), _as_matrix(predicted)
    if g.shape != p.shape or g.ndim != 2:
        raise ShapeMismatchError(f"ground truth {g.shape} vs predicted {p.shape}")
    if len(g) == 0:
        raise EmptyInputError("no samples")
    return float(_hits(g, p, min(q.K, g.shape[1]), q.T).mean())


def acc_grid(gt, predicted, Ks: Sequence[int] = REPORT_KS,
             Ts: Sequence[float] = REPORT_TS) -> dict:
    """``{"K=k,T=t": accuracy}`` over the report grid."""
    return {f"K={k},T={t:g}": acc_kt(gt, predicted, AccuracyQuery(k, t)) for k in Ks for t in Ts}


# ---------------------------------------------------------------------------
# latency


@dataclass(frozen=True)
class LatencyBudget:
    downlink_ms: float = 0.0
    solve_ms: float = SOLVE_MS
    sweep: CommCostModel = field(default_factory=CommCostModel)
    exhaustive_ms: float = EXHAUSTIVE_SWEEP_MS

    def __post_init__(self):
        if min(self.downlink_ms, self.solve_ms, self.exhaustive_ms) < 0:
            raise ConfigError("latency components must be >= 0")


def downlink_ms(n_bytes: float, rate_mbps: float = DEFAULT_DOWNLINK_MBPS) -> float:
    """Transfer time of ``n_bytes`` over a ``rate_mbps`` link, in ms."""
    if not rate_mbps > 0:
        raise ConfigError("rate must be positive")
    return n_bytes * 8.0 / (rate_mbps * 1e6) * 1e3


def multiverse_latency(b: LatencyBudget, K: int) -> float:
    return b.downlink_ms + b.solve_ms + comm_cost(b.sweep, K)


def improvement_vs_exhaustive(latency_ms: float, exhaustive_ms: float) -> float:
    if not exhaustive_ms > 0:
        raise NonPositiveBaselineError("exhaustive baseline must be positive")
    return 100.0 * (1.0 - latency_ms / exhaustive_ms)


def latency_report(b: LatencyBudget, Ks: Sequence[int] = (1, 12)) -> list:
    rows = []
    for k in Ks:
        lat = multiverse_latency(b, k)
        rows.append({"K": k, "latency_ms": lat, "exhaustive_ms": b.exhaustive_ms,
                     "improvement_pct": improvement_vs_exhaustive(lat, b.exhaustive_ms)})
    return rows


# ---------------------------------------------------------------------------
# inclusion heatmaps


def inclusion_heatmap(model: InclusionModel, twin_id: str, scenario_id: str, K: int) -> list:
    """``[(region_index, p(K))]`` in spatial order for one twin."""
    if (twin_id, scenario_id) not in model.axes:
        raise UnknownTwinError(f"unknown twin {twin_id!r} for scenario {scenario_id!r}")
    return [(k[2], model.probability(twin_id, scenario_id, k[2], K))
            for k in model.keys(twin_id, scenario_id)]


def write_heatmap_csv(model: InclusionModel, twin_ids: Sequence[str], scenario_id: str,
                      Ks: Sequence[int], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["twin_id", "scenario_id", "K", "region_index", "probability"])
        for t in twin_ids:
            for k in Ks:
                for r, p in inclusion_heatmap(model, t, scenario_id, k):
                    w.writerow([t, scenario_id, k, r, repr(p)])


def finite_or_none(x: float):
    """JSON-safe float: ``None`` for non-finite values."""
    return float(x) if math.isfinite(x) else None
