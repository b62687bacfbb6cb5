import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from multiverse import (AntennaPattern, Codebook, DuplicateCellError, GridMismatchError,
                        IncompleteGridError, SizeMismatchError, ZeroNormSampleError, gain,
                        load_codebook, load_pattern_grid, mean_codebook_discrepancy,
                        pattern_discrepancy, read_pattern_csv, save_codebook,
                        synthetic_codebook, write_pattern_csv)
from multiverse.antenna import pattern_vectors

from oracles import pattern_discrepancy_loop


def grid_pattern(amp, az_min=0.0, az_step=1.0, el_min=0.0, el_step=1.0, floor=0.0):
    amp = np.asarray(amp, dtype=float)
    return AntennaPattern(az_min, az_step, el_min, el_step, amp, np.zeros_like(amp), floor)


def db_negated(p: AntennaPattern) -> AntennaPattern:
    return grid_pattern(1.0 / p.amplitude, p.az_min, p.az_step, p.el_min, p.el_step)


def rows(p: AntennaPattern, radius):
    r = {"amplitude": p.amplitude, "db": p.gain_db()}[radius]
    return [(az, el, r[i, j]) for i, el in enumerate(p.el_grid) for j, az in enumerate(p.az_grid)]


# -- gridding ---------------------------------------------------------------


def test_measured_grid_snaps_to_integer_steps():
    az = -90 + 1.8 * np.arange(101)
    el = 3.6 * np.arange(10)
    rng = np.random.default_rng(0)
    samples = [(a, e, rng.uniform(-10, 10)) for a in az for e in el]
    p = load_pattern_grid(samples, az_step=2.0, el_step=4.0)
    assert (p.az_min, p.az_max, p.az_step) == (-100.0, 100.0, 2.0)
    assert (p.el_min, p.el_max, p.el_step) == (0.0, 36.0, 4.0)
    assert p.shape == (10, 101)
    # the k-th source sample lands in the k-th target cell
    assert p.gain_db()[3, 7] == pytest.approx(samples[7 * 10 + 3][2])


def test_repeated_value_gives_uniform_pattern():
    samples = [(a, e, 3.0) for a in (0, 1, 2) for e in (0, 1, 2)]
    p = load_pattern_grid(samples)
    assert p.shape == (3, 3)
    assert np.allclose(p.gain_db(), 3.0)


def test_missing_cell():
    samples = [(a, e, 0.0) for a in (0, 1, 2) for e in (0, 1, 2)][:-1]
    with pytest.raises(IncompleteGridError):
        load_pattern_grid(samples)


def test_duplicate_cell():
    samples = [(a, e, 0.0) for a in (0, 1) for e in (0, 1)] + [(0, 0, 1.0)]
    with pytest.raises(DuplicateCellError):
        load_pattern_grid(samples)


def test_uneven_axis():
    samples = [(a, e, 0.0) for a in (0, 1, 3) for e in (0, 1)]
    with pytest.raises(IncompleteGridError):
        load_pattern_grid(samples)


def test_csv_round_trip(tmp_path):
    p = synthetic_codebook(n_beams=2)[1]
    write_pattern_csv(p, tmp_path / "b.csv")
    q = read_pattern_csv(tmp_path / "b.csv")
    assert q.same_grid(p)
    assert np.allclose(q.amplitude, p.amplitude, rtol=1e-12)


def test_codebook_round_trip(tmp_path):
    cb = synthetic_codebook(n_beams=3, el_span=(-90, 90), az_step=10, el_step=10)
    manifest = save_codebook(cb, tmp_path / "cb")
    back = load_codebook(manifest)
    assert len(back) == 3
    for a, b in zip(cb, back):
        assert np.allclose(a.amplitude, b.amplitude, rtol=1e-12)


def test_codebook_needs_shared_grid():
    with pytest.raises(GridMismatchError):
        Codebook((grid_pattern(np.ones((2, 2))), grid_pattern(np.ones((3, 3)))))


def test_synthetic_codebook_shape():
    cb = synthetic_codebook()
    assert len(cb) == 34
    assert all(np.all(b.amplitude > 0) for b in cb)
    # each beam peaks near its own steering azimuth, sweeping left to right
    peaks = [b.az_grid[np.argmax(b.amplitude.max(axis=0))] for b in cb]
    assert peaks[0] < peaks[-1]


# -- lookup ------------------------------------------------------------------


def test_gain_at_node_is_stored_value():
    amp = np.arange(1.0, 10.0).reshape(3, 3)
    p = AntennaPattern(0, 1, 0, 1, amp, np.full((3, 3), 0.25))
    assert gain(p, 2, 1) == (6.0, 0.25)


def test_gain_midpoint():
    p = grid_pattern([[1.0, 3.0]])
    assert gain(p, 0.5, 0.0)[0] == pytest.approx(2.0)


def test_gain_outside_range_is_floor():
    p = grid_pattern(np.ones((3, 3)), el_min=0.0, floor=0.125)
    assert gain(p, 1.0, -10.0) == (0.125, 0.0)
    assert gain(grid_pattern(np.ones((3, 3))), 1.0, -10.0)[0] == 0.0


def test_gain_wraps_azimuth():
    cb = synthetic_codebook(n_beams=1, az_step=10, el_step=10)
    p = cb[0]
    assert gain(p, 190.0, 0.0) == gain(p, -170.0, 0.0)
    assert gain(p, 180.0, 0.0) == gain(p, -180.0, 0.0)


@given(st.floats(-99, 99), st.floats(-35, 35))
def test_gain_is_continuous(az, el):
    p = synthetic_codebook(n_beams=2, az_span=(-100, 100), el_span=(-36, 36))[1]
    a0, _ = gain(p, az, el)
    a1, _ = gain(p, az + 1e-6, el + 1e-6)
    assert abs(a1 - a0) < 1e-6


# -- discrepancy --------------------------------------------------------------


def random_pattern(rng, shape=(5, 7), lo=0.1, hi=3.0):
    return grid_pattern(rng.uniform(lo, hi, size=shape), -30, 10, -20, 10)


def test_identical_is_zero():
    p = random_pattern(np.random.default_rng(1))
    assert pattern_discrepancy(p, p).delta == 0.0
    assert pattern_discrepancy(p, p).count == 35


def test_negated_is_two():
    p = random_pattern(np.random.default_rng(2), lo=1.5, hi=9.0)
    assert pattern_discrepancy(p, db_negated(p), radius="db").delta == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("radius", ["amplitude", "db"])
def test_random_pair_matches_loop(radius):
    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b = random_pattern(rng, lo=1.2), random_pattern(rng, lo=1.2)
        got = pattern_discrepancy(a, b, radius).delta
        assert 0.0 <= got <= 2.0
        assert got == pytest.approx(pattern_discrepancy_loop(rows(a, radius), rows(b, radius)),
                                    abs=1e-12)


def test_grid_mismatch():
    with pytest.raises(GridMismatchError):
        pattern_discrepancy(grid_pattern(np.ones((2, 2))), grid_pattern(np.ones((2, 3))))


def test_zero_norm_reference():
    a = grid_pattern([[0.0, 1.0]])
    with pytest.raises(ZeroNormSampleError):
        pattern_discrepancy(a, grid_pattern([[1.0, 1.0]]))


def test_pattern_vectors_radii():
    p = grid_pattern([[2.0]], 90.0, 1.0, 0.0, 1.0)
    assert np.allclose(pattern_vectors(p), [[0.0, 2.0, 0.0]])
    assert pattern_vectors(p, "power")[0] == pytest.approx([0.0, 4.0, 0.0])
    with pytest.raises(ValueError):
        pattern_vectors(p, "bogus")


def test_mean_codebook_identical_and_half():
    p = random_pattern(np.random.default_rng(4), lo=1.5)
    ca = Codebook((p, p))
    assert mean_codebook_discrepancy(ca, ca) == 0.0
    cb = Codebook((p, db_negated(p)))
    assert mean_codebook_discrepancy(ca, cb, radius="db") == pytest.approx(1.0, abs=1e-12)


def test_mean_codebook_size_mismatch():
    p = random_pattern(np.random.default_rng(5))
    with pytest.raises(SizeMismatchError):
        mean_codebook_discrepancy(Codebook((p,)), Codebook((p, p)))


amps = arrays(np.float64, (3, 4), elements=st.floats(0.01, 100.0))


@given(amps, amps)
def test_discrepancy_bounded_and_reflexive(x, y):
    a, b = grid_pattern(x), grid_pattern(y)
    assert pattern_discrepancy(a, a).delta == 0.0
    d = pattern_discrepancy(a, b).delta
    assert 0.0 <= d <= 2.0 + 1e-12


@given(st.permutations(list(range(4))), st.integers(0, 2**32 - 1))
def test_mean_discrepancy_permutation_covariant(perm, seed):
    rng = np.random.default_rng(seed)
    ra = [random_pattern(rng, (2, 3)) for _ in range(4)]
    rb = [random_pattern(rng, (2, 3)) for _ in range(4)]
    base = mean_codebook_discrepancy(Codebook(tuple(ra)), Codebook(tuple(rb)))
    permuted = mean_codebook_discrepancy(Codebook(tuple(ra[i] for i in perm)),
                                         Codebook(tuple(rb[i] for i in perm)))
    assert permuted == pytest.approx(base, rel=1e-12)
