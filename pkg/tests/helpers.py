"""Small fixture builders shared by the test modules."""

from __future__ import annotations

import numpy as np

from multiverse import (AntennaPattern, Codebook, CommCostModel, InclusionModel,
                        NoFeasibleTwinError, SelectionConstraints, comm_cost, isotropic_pattern,
                        make_rx_grid, select_twin_and_k)
from multiverse.selector import _Axis
from multiverse.twin import synthetic_table

import oracles

BOUNDS = {"min": [-40.0, -30.0, 0.0], "max": [40.0, 30.0, 30.0]}


def random_canyon_spec(rng: np.random.Generator, with_car: bool | None = None) -> tuple:
    """A street between two rows of boxes, random materials, Tx and one Rx point.

    Returns ``(spec, rx)``.
    """
    north = rng.uniform(3.0, 8.0)
    south = -rng.uniform(3.0, 8.0)
    materials = {
        "facade_a": {"reflection_magnitude": float(rng.uniform(0.1, 0.9)),
                     "reflection_phase_rad": float(rng.uniform(-np.pi, np.pi))},
        "facade_b": {"reflection_magnitude": float(rng.uniform(0.1, 0.9)),
                     "reflection_phase_rad": float(rng.uniform(-np.pi, np.pi))},
        "road_mix": {"reflection_magnitude": float(rng.uniform(0.1, 0.5))},
    }
    buildings = []
    for y0, y1 in ((north, north + rng.uniform(4, 10)), (south - rng.uniform(4, 10), south)):
        x = rng.uniform(-30.0, -15.0)
        for _ in range(int(rng.integers(1, 3))):
            w = rng.uniform(8.0, 20.0)
            buildings.append({"box": [float(x), float(y0), float(x + w), float(y1)],
                              "height": float(rng.uniform(4.0, 20.0)),
                              "material": str(rng.choice(["facade_a", "facade_b"]))})
            x += w + rng.uniform(1.0, 6.0)
    tx = [float(rng.uniform(-5, 5)), float(rng.uniform(south + 0.5, north - 0.5)),
          float(rng.uniform(0.5, 3.0))]
    rx = np.array([rng.uniform(-15, 15), rng.uniform(south + 0.5, north - 0.5),
                   rng.uniform(0.5, 3.0)])
    obstacles = []
    if with_car is None:
        with_car = bool(rng.random() < 0.5)
    if with_car:
        for _ in range(50):
            cx = float((tx[0] + rx[0]) / 2 + rng.uniform(-3, 3))
            cy = float((tx[1] + rx[1]) / 2 + rng.uniform(-1, 1))
            car = {"x": cx, "y": cy, "d0": 1.44, "d1": 1.84, "d2": 4.88, "material": "metal"}
            clear = all(abs(p[0] - cx) > 2.44 + 0.05 or abs(p[1] - cy) > 0.92 + 0.05
                        for p in (tx, rx))
            if clear and south < cy - 0.92 and cy + 0.92 < north:
                obstacles.append(car)
                break
    spec = {"map_id": "random", "bounds": BOUNDS,
            "tx": {"x": tx[0], "y": tx[1], "height": tx[2], "facing_deg": 90.0},
            "buildings": buildings, "obstacles": obstacles, "road": "road_mix",
            "materials": materials}
    return spec, rx


def flat_pattern(value: float = 1.0, phase: float = 0.0, step: float = 10.0) -> AntennaPattern:
    n_az, n_el = int(360 / step) + 1, int(180 / step) + 1
    amp = np.full((n_el, n_az), value)
    return AntennaPattern(-180.0, step, -90.0, step, amp, np.full_like(amp, phase))


def iso_codebook(n: int = 1) -> Codebook:
    return Codebook(tuple(isotropic_pattern(10.0) for _ in range(n)))


def line_grid(n: int, length: float = 10.0, scenario_id: str = "s"):
    return make_rx_grid((0.0, 0.0), (length, 0.0), n, 1.5, scenario_id)


def table(twin_id: str, snr, scenario_id: str = "s", comp: float = 0.0, length: float = 10.0):
    snr = np.asarray(snr, dtype=float)
    return synthetic_table(twin_id, scenario_id, snr, line_grid(len(snr), length, scenario_id),
                           lookup_cost=comp)


def direct_model(twins, scenario="s"):
    """An inclusion model with a single region per twin, built from given p vectors."""
    m = InclusionModel(region_width=100.0, smoothing=0.0)
    for tid, _, p in twins:
        m.bins[(tid, scenario, 0)] = np.asarray(p, dtype=float)
        m.counts[(tid, scenario, 0)] = 1
        m.axes[(tid, scenario)] = _Axis((0.0, 0.0, 1.5), (1.0, 0.0, 0.0), 1)
    return m


def random_instance(rng):
    """Random (twins, tables, comm model, constraints, k_max) for selector comparisons."""
    N = int(rng.integers(1, 6))
    twins, lts = [], []
    for i in range(N):
        B = int(rng.integers(1, 35))
        # coarse values make exact ties common
        p = np.sort(rng.integers(0, 6, size=B) / 5.0)
        comp = float(rng.choice([1.0, 2.0, 5.0, 10.0]))
        tid = f"T{int(rng.integers(0, 9))}{i}"
        twins.append((tid, comp, p))
        lts.append(table(tid, rng.normal(size=(1, B)), comp=comp))
    comm = CommCostModel("nr5g") if rng.random() < 0.3 else \
        CommCostModel(per_beam=float(rng.choice([0.01, 0.05, 1.27 / 34])))
    cons = SelectionConstraints(float(rng.choice([0.1, 0.3, 1.0, 6.0, 30.0])),
                                float(rng.choice([1.5, 4.0, 20.0])),
                                alpha=float(rng.choice([0.0, 0.2, 1.0, 10.0])))
    k_max = int(rng.choice([1, 5, 12, 34]))
    return twins, lts, comm, cons, k_max


def run_both(twins, lts, comm, cons, k_max):
    """``(library decision or None, brute-force answer or None)``."""
    costs = [comm_cost(comm, K) for K in range(1, 35)]
    ref = oracles.brute_force_select(twins, cons.alpha, cons.comm_budget_ms, cons.comp_budget,
                                     costs, k_max)
    try:
        d = select_twin_and_k(lts, direct_model(twins), cons, comm, k_max)
    except NoFeasibleTwinError:
        d = None
    return d, ref


def random_batch(rng):
    """Integer-valued (gt, pred) matrices with ties and some ``-inf`` entries."""
    V, B = int(rng.integers(1, 25)), int(rng.integers(1, 35))
    gt = rng.integers(-6, 6, size=(V, B)).astype(float)
    pred = rng.integers(-6, 6, size=(V, B)).astype(float)
    gt[rng.random(gt.shape) < 0.1] = -np.inf
    pred[rng.random(pred.shape) < 0.1] = -np.inf
    return gt, pred
