import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

import gibbsvar as gv
from conftest import random_config
from _reference import brute_neighbors


def test_window_volume():
    w = gv.Window(np.array([0.0, -1.0]), np.array([2.0, 3.0]))
    assert w.volume == pytest.approx(8.0)
    assert w.dim == 2


def test_window_rejects_bad_bounds():
    with pytest.raises(ValueError):
        gv.Window(np.array([0.0, 0.0]), np.array([1.0, 0.0]))


def test_configuration_rejects_outside_and_duplicates(window2):
    with pytest.raises(ValueError):
        gv.Configuration([[3.0, 0.5]], window2)
    with pytest.raises(ValueError):
        gv.Configuration([[0.5, 0.5], [0.5, 0.5]], window2)


def test_build_index_empty(window2):
    config = gv.Configuration(np.zeros((0, 2)), window2)
    index = gv.build_index(config, 0.25)
    assert index.occupied_cells == 0
    ids, sq = index.neighbors_within([1.0, 1.0], 0.25)
    assert len(ids) == 0 and len(sq) == 0


def test_build_index_rejects_nonpositive_range(window2):
    config = gv.Configuration([[1.0, 1.0]], window2)
    with pytest.raises(ValueError):
        gv.build_index(config, 0.0)


def test_two_points_beyond_range(window2):
    config = gv.Configuration([[1.0, 1.0], [1.3, 1.0]], window2)
    index = gv.build_index(config, 0.25)
    for i in range(2):
        ids, _ = index.neighbors_within(config.points[i], 0.25)
        assert len(ids) == 0


def test_neighbor_direct_distance(window2):
    config = gv.Configuration([[1.1, 1.0]], window2)
    index = gv.build_index(config, 0.25)
    ids, sq = index.neighbors_within([1.0, 1.0], 0.25)
    assert list(ids) == [0]
    assert sq[0] == pytest.approx(0.01, rel=1e-15)


def test_query_point_in_configuration_excluded(window2):
    config = gv.Configuration([[1.0, 1.0], [1.05, 1.0]], window2)
    index = gv.build_index(config, 0.25)
    ids, _ = index.neighbors_within([1.0, 1.0], 0.25)
    assert list(ids) == [1]


def test_query_radius_above_build_range_rejected(window2):
    config = gv.Configuration([[1.0, 1.0]], window2)
    index = gv.build_index(config, 0.2)
    with pytest.raises(ValueError):
        index.neighbors_within([0.5, 0.5], 0.6)


def test_neighbors_match_brute_force_uniform(window2):
    rng = np.random.default_rng(7)
    config = random_config(rng, window2, 200)
    index = gv.build_index(config, 0.25)
    for i in range(len(config)):
        ids, sq = index.neighbors_within(config.points[i], 0.25)
        bids, bsq = brute_neighbors(config.points, config.points[i], 0.25)
        assert np.array_equal(ids, bids)
        assert np.allclose(sq, bsq, rtol=1e-12)


def test_boundary_point_queries_match_brute_force(window2):
    rng = np.random.default_rng(12)
    config = random_config(rng, window2, 150)
    index = gv.build_index(config, 0.25)
    for x in ([0.0, 0.0], [2.0, 2.0], [0.0, 1.3], [1.9999, 0.0001]):
        ids, sq = index.neighbors_within(x, 0.25)
        bids, bsq = brute_neighbors(config.points, np.array(x), 0.25)
        assert np.array_equal(ids, bids)
        assert np.allclose(sq, bsq, rtol=1e-12)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(0, 60),
       radius=st.floats(0.05, 0.25))
def test_neighbors_equal_brute_force_property(seed, n, radius):
    rng = np.random.default_rng(seed)
    window = gv.Window(np.zeros(2), np.full(2, 2.0))
    config = random_config(rng, window, n)
    index = gv.build_index(config, 0.25)
    x = rng.random(2) * 2.0
    ids, sq = index.neighbors_within(x, radius)
    bids, bsq = brute_neighbors(config.points, x, radius)
    assert np.array_equal(ids, bids)
    if len(sq):
        assert np.allclose(sq, bsq, rtol=1e-12)


def test_rebuild_after_point_change_matches_fresh_build(window2):
    rng = np.random.default_rng(3)
    config = random_config(rng, window2, 80)
    smaller = gv.Configuration(config.without(17), window2)
    rebuilt = gv.build_index(smaller, 0.25)
    for i in range(len(smaller)):
        ids, sq = rebuilt.neighbors_within(smaller.points[i], 0.25)
        bids, bsq = brute_neighbors(smaller.points, smaller.points[i], 0.25)
        assert np.array_equal(ids, bids)
        assert np.allclose(sq, bsq, rtol=1e-12)


def test_pair_table_directed_and_symmetric(window2):
    rng = np.random.default_rng(5)
    config = random_config(rng, window2, 120)
    tab = gv.build_index(config, 0.25).pairs_within(0.25)
    seen = set(zip(tab.i.tolist(), tab.j.tolist()))
    assert all((j, i) in seen for i, j in seen)
    assert np.all(tab.s > 0) and np.all(tab.s <= 0.25 ** 2 + 1e-15)
    # per-point degree equals brute force
    for i in range(len(config)):
        bids, _ = brute_neighbors(config.points, config.points[i], 0.25)
        assert np.sum(tab.i == i) == len(bids)


def test_pattern_roundtrip_bit_exact(tmp_path, window2):
    rng = np.random.default_rng(11)
    config = random_config(rng, window2, 37)
    path = tmp_path / "pattern.csv"
    gv.write_pattern(config, path)
    back = gv.read_pattern(path)
    assert np.array_equal(back.points, config.points)
    assert np.array_equal(back.window.lower, window2.lower)
    assert np.array_equal(back.window.upper, window2.upper)
    header = path.read_text().splitlines()[0]
    assert header == "x,y"
