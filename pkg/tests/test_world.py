import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multiverse import (DegenerateGridError, GeometryInvalidError, Obstacle, SpecParseError,
                        build_world, load_scene, make_rx_grid, parse_scene, serialize_world)
from multiverse.synthetic import CAR, CAR_GAP, TX_HEIGHT, canyon_scene, open_area_scene
from multiverse.world import validate_world, world_to_dict


def test_open_area_has_no_buildings():
    w = build_world(open_area_scene(obstacle=False))
    assert w.buildings == ()
    assert w.tx.height == pytest.approx(TX_HEIGHT)
    assert TX_HEIGHT == 0.95


def test_car_obstacle_dimensions_and_gap():
    w = build_world(open_area_scene(obstacle=True))
    assert len(w.obstacles) == 1
    car = w.obstacles[0]
    assert (car.d0, car.d1, car.d2) == (1.44, 1.84, 4.88)
    near_side = car.y - car.d1 / 2
    assert near_side - w.tx.y == pytest.approx(CAR_GAP) and CAR_GAP == 0.35
    assert CAR == {"d0": 1.44, "d1": 1.84, "d2": 4.88}


def test_undefined_material_is_geometry_invalid():
    spec = canyon_scene()
    spec["buildings"][0]["material"] = "mirror"
    with pytest.raises(GeometryInvalidError) as exc:
        build_world(spec)
    assert any("mirror" in d for d in exc.value.diagnostics)


@pytest.mark.parametrize("mutate", [
    lambda s: s["buildings"][0].update(height=0.0),
    lambda s: s["buildings"][0].update(box=[1.0, 1.0, 1.0, 5.0]),
    lambda s: s["buildings"][0].update(box=[100.0, 8.0, 120.0, 20.0]),
])
def test_bad_geometry_rejected(mutate):
    spec = canyon_scene()
    mutate(spec)
    with pytest.raises(GeometryInvalidError):
        build_world(spec)


@pytest.mark.parametrize("spec", [None, [], {"tx": {"x": 0}}, {"bounds": {"min": [0, 0]}}])
def test_malformed_spec(spec):
    with pytest.raises(SpecParseError):
        build_world(spec)


def test_malformed_yaml():
    with pytest.raises(SpecParseError):
        parse_scene("bounds: [unclosed")


def test_schema_version_checked():
    spec = canyon_scene()
    spec["schema_version"] = 99
    with pytest.raises(SpecParseError):
        build_world(spec)


def test_build_is_deterministic():
    assert build_world(canyon_scene()) == build_world(canyon_scene())


def test_materials_override_defaults():
    spec = canyon_scene(materials={"concrete": {"reflection_magnitude": 0.5}})
    w = build_world(spec)
    assert w.material("concrete").reflection_magnitude == 0.5
    assert w.material("concrete").coefficient() == pytest.approx(-0.5)
    assert w.material("metal").reflection_magnitude == 1.0


def test_angle_table_interpolates():
    spec = canyon_scene(materials={"glazed": {"angle_table": [[0, 0.2, math.pi], [90, 1.0, math.pi]]}})
    m = build_world(spec).material("glazed")
    assert abs(m.coefficient(45.0)) == pytest.approx(0.6)


def test_face_ids_and_normals():
    w = build_world(canyon_scene(obstacle=True))
    ids = [f.id for f in w.faces]
    assert ids[:5] == ["building0.wall0", "building0.wall1", "building0.wall2",
                       "building0.wall3", "building0.top"]
    assert ids[-1] == "ground"
    assert "obstacle0.top" in ids
    for f in w.faces:
        centroid = f.vertices.mean(axis=0)
        assert f.normal @ centroid == pytest.approx(f.offset)
    # walls of a box building point away from its centre
    b = w.buildings[0]
    centre = np.mean(b.footprint, axis=0)
    for f in w.faces[:4]:
        assert f.normal[:2] @ (f.vertices[0][:2] - centre) > 0


# -- rx grids ---------------------------------------------------------------


def test_grid_200_points_over_40m():
    g = make_rx_grid((-20, 4.33), (20, 4.33), 200, 1.645)
    assert len(g) == 200
    assert g.spacing == pytest.approx(40 / 199)
    assert round(g.spacing, 2) == 0.20


def test_grid_single_point():
    g = make_rx_grid((1, 2), (5, 6), 1, 1.5)
    assert g.points.tolist() == [[1.0, 2.0, 1.5]]
    assert g.spacing == 0.0


def test_grid_three_points():
    g = make_rx_grid((0, 0), (2, 0), 3, 1.0)
    assert g.points[:, 0].tolist() == [0.0, 1.0, 2.0]
    assert [g.along(p) for p in g.points] == [0.0, 1.0, 2.0]


@pytest.mark.parametrize("n", [0, -1])
def test_grid_bad_count(n):
    with pytest.raises(DegenerateGridError):
        make_rx_grid((0, 0), (1, 0), n, 1.0)


def test_grid_degenerate_segment():
    with pytest.raises(DegenerateGridError):
        make_rx_grid((3, 3), (3, 3), 2, 1.0)


def test_grid_nearest_index():
    g = make_rx_grid((0, 0), (10, 0), 11, 1.0)
    assert g.nearest_index((3.4, 0.3, 1.0)) == 3
    assert g.nearest_index((30, 0, 1)) == 10


coord = st.floats(-100, 100, allow_nan=False)


@given(coord, coord, coord, coord, st.integers(2, 400), st.floats(0.1, 5))
def test_grid_collinear_and_evenly_spaced(x0, y0, x1, y1, n, h):
    if math.hypot(x1 - x0, y1 - y0) < 1e-3:
        return
    g = make_rx_grid((x0, y0), (x1, y1), n, h)
    assert len(g) == n
    assert np.all(g.points[:, 2] == h)
    d = np.linalg.norm(np.diff(g.points, axis=0), axis=1)
    assert np.max(np.abs(d - g.spacing)) < 1e-9
    # distance of every point from the start-end line
    a, b = g.points[0], g.points[-1]
    u = (b - a) / np.linalg.norm(b - a)
    rel = g.points - a
    dev = np.linalg.norm(rel - np.outer(rel @ u, u), axis=1)
    assert dev.max() < 1e-9


# -- validation --------------------------------------------------------------


def test_validate_valid_canyon():
    assert validate_world(build_world(canyon_scene())) == []


def test_validate_zero_height_obstacle():
    w = build_world(canyon_scene(obstacle=False))
    bad = dataclasses.replace(w, obstacles=(Obstacle(0.0, 1.0, 0.0, 1.84, 4.88),))
    assert validate_world(bad) == ["obstacle 0: non-positive height"]


def test_validate_tx_outside():
    w = build_world(canyon_scene())
    bad = dataclasses.replace(w, tx=dataclasses.replace(w.tx, x=500.0))
    diags = validate_world(bad)
    assert len(diags) == 1 and "tx" in diags[0]


def test_validate_is_pure():
    w = build_world(canyon_scene())
    bad = dataclasses.replace(w, tx=dataclasses.replace(w.tx, height=-1.0))
    assert validate_world(bad) == validate_world(bad)


# -- round trip --------------------------------------------------------------


@pytest.mark.parametrize("scene", [canyon_scene(True), canyon_scene(False),
                                   open_area_scene(True)])
def test_serialize_round_trip(scene):
    w = build_world(scene)
    back = parse_scene(serialize_world(w))
    assert back == w
    assert world_to_dict(back) == world_to_dict(w)


@given(st.floats(-30, 30), st.floats(-15, 15), st.floats(0.1, 5), st.floats(0.1, 5),
       st.floats(0.1, 5), st.floats(-180, 180))
def test_round_trip_random_obstacle(x, y, d0, d1, d2, yaw):
    spec = open_area_scene(obstacle=False)
    spec["obstacles"] = [{"x": x, "y": y, "d0": d0, "d1": d1, "d2": d2, "yaw": yaw}]
    w = build_world(spec)
    assert parse_scene(serialize_world(w)) == w


def test_shipped_scene_files_load():
    from pathlib import Path
    scenes = sorted((Path(__file__).parents[1] / "configs" / "scenes").glob("*.yaml"))
    assert scenes
    for p in scenes:
        assert validate_world(load_scene(p)) == []
