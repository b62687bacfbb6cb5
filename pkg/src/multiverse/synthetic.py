"""Desk-scale scenario fixtures: an urban canyon, an open area and synthetic measurements.

The layout follows a roadside 60 GHz setup: the transmitter stands at the
curb facing across the street, the receiver drives along a lane 4.33 m
away, and an optional parked car sits just in front of the transmitter.
"""

from __future__ import annotations

import copy
from typing import Optional

import numpy as np

from .antenna import AntennaPattern, Codebook
from .raytracer import PropagationConfig, Tracer, power_to_dbm
from .world import WorldModel, build_world, make_rx_grid

TX_HEIGHT = 0.95
TX_FACING_DEG = 90.0
LANE_Y = 4.33
TRAJECTORY_X = (-20.0, 20.0)
RX_HEIGHT = 1.645  # some measurement setups use 1.675 m instead
CAR = {"d0": 1.44, "d1": 1.84, "d2": 4.88}
CAR_GAP = 0.35  # distance from the transmitter to the car's near side


def _car(offset_x: float = 0.0, x: float = 0.0) -> dict:
    return {"x": offset_x + x, "y": CAR_GAP + CAR["d1"] / 2, **CAR, "material": "metal"}


def canyon_scene(obstacle: bool = True, offset_x: float = 0.0, block: float = 16.0,
                 gap: float = 2.0, materials: Optional[dict] = None) -> dict:
    """Street canyon: two rows of buildings along x with the lane between them."""
    buildings = []
    x = -30.0
    while x < 30.0:
        buildings.append({"box": [offset_x + x, 8.0, offset_x + x + block, 20.0],
                          "height": 25.0, "material": "concrete"})
        buildings.append({"box": [offset_x + x, -14.0, offset_x + x + block, -3.0],
                          "height": 18.0, "material": "concrete"})
        x += block + gap
    spec = {
        "map_id": "canyon",
        "bounds": {"min": [offset_x - 40.0, -20.0, 0.0], "max": [offset_x + 40.0, 25.0, 40.0]},
        "tx": {"x": offset_x, "y": 0.0, "height": TX_HEIGHT, "facing_deg": TX_FACING_DEG},
        "buildings": buildings,
        "obstacles": [_car(offset_x)] if obstacle else [],
        "road": "asphalt",
    }
    if materials:
        spec["materials"] = copy.deepcopy(materials)
    return spec


def open_area_scene(obstacle: bool = True, offset_x: float = 0.0) -> dict:
    """Same transmitter and road with no buildings."""
    return {
        "map_id": "open",
        "bounds": {"min": [offset_x - 40.0, -20.0, 0.0], "max": [offset_x + 40.0, 25.0, 40.0]},
        "tx": {"x": offset_x, "y": 0.0, "height": TX_HEIGHT, "facing_deg": TX_FACING_DEG},
        "buildings": [],
        "obstacles": [_car(offset_x)] if obstacle else [],
        "road": "asphalt",
    }


def lane_grid(n_points: int = 200, height: float = RX_HEIGHT, offset_x: float = 0.0,
              scenario_id: str = ""):
    return make_rx_grid((offset_x + TRAJECTORY_X[0], LANE_Y),
                        (offset_x + TRAJECTORY_X[1], LANE_Y), n_points, height, scenario_id)


def lane_center_grid(height: float = RX_HEIGHT, offset_x: float = 0.0, scenario_id: str = ""):
    """Single Rx point in the middle of the lane (the cheapest twin's grid)."""
    c = offset_x + sum(TRAJECTORY_X) / 2
    return make_rx_grid((c, LANE_Y), (c, LANE_Y), 1, height, scenario_id)


def lane_positions(n: int, rng: np.random.Generator, height: float = RX_HEIGHT,
                   offset_x: float = 0.0, jitter: float = 0.1) -> np.ndarray:
    """Random positions along the lane with GPS-like jitter."""
    x = rng.uniform(*TRAJECTORY_X, size=n) + offset_x
    y = LANE_Y + rng.normal(0.0, jitter, size=n)
    return np.stack([x, y, np.full(n, height)], axis=1)


def measure(world: WorldModel, codebook: Codebook, positions: np.ndarray,
            cfg: PropagationConfig, rng: Optional[np.random.Generator] = None,
            noise_db: float = 0.0, rx_pattern: Optional[AntennaPattern] = None) -> np.ndarray:
    """Per-beam SNR (dB) at each position, with optional Gaussian measurement noise."""
    tracer = Tracer(world, cfg)
    beams = tuple(codebook)
    out = np.empty((len(positions), len(beams)))
    for j, p in enumerate(positions):
        watts, _ = tracer.beam_powers(tracer.geometric_paths(p), beams, rx_pattern)
        out[j] = [power_to_dbm(w, cfg.system_loss_db) - cfg.noise_power_dbm for w in watts]
    if noise_db > 0 and rng is not None:
        out = out + rng.normal(0.0, noise_db, size=out.shape)
    return out


def reality_scene(obstacle: bool = True, offset_x: float = 0.0) -> dict:
    """The 'physical' canyon: wetter, rougher facades than any twin assumes."""
    return canyon_scene(obstacle, offset_x,
                        materials={"concrete": {"reflection_magnitude": 0.5},
                                   "asphalt": {"reflection_magnitude": 0.35}})


def synthesize_ground_truth(n_samples: int, codebook: Codebook, seed: int,
                            scenario_id: str, scene: Optional[dict] = None,
                            cfg: Optional[PropagationConfig] = None, noise_db: float = 1.0,
                            offset_x: float = 0.0, height: float = RX_HEIGHT,
                            first_id: int = 0, positions: Optional[np.ndarray] = None):
    """Synthetic measurement campaign along the lane of ``scene`` (default: reality canyon)."""
    from .pipeline import GroundTruthSet

    rng = np.random.default_rng(seed)
    world = build_world(scene if scene is not None else reality_scene(True, offset_x))
    cfg = cfg or PropagationConfig(max_reflections=3)
    if positions is None:
        positions = lane_positions(n_samples, rng, height, offset_x)
    snr = measure(world, codebook, positions, cfg, rng, noise_db)
    ids = np.arange(first_id, first_id + len(positions))
    return GroundTruthSet(ids, np.full(len(positions), scenario_id), positions, snr)
