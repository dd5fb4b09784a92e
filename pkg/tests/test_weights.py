import math

import numpy as np
import pytest

from patchweave.errors import CandidateSetEmptyError
from patchweave.image import RegionMask
from patchweave.patches import make_gaussian_kernel, patch_distance
from patchweave.weights import (
    SearchConfig,
    WeightField,
    candidate_distances,
    candidate_set,
    entropy,
    extended_weight,
    softmax_rows,
    update_weights,
    write_weights_csv,
)


def test_search_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(search_radius=0)
    with pytest.raises(ValueError):
        SearchConfig(top_k=0)
    with pytest.raises(ValueError):
        SearchConfig(subsample_stride=0)


def test_candidate_set_unbounded_is_extended_known_row_major():
    hole = np.zeros((9, 9), dtype=bool)
    hole[4, 4] = True
    m = RegionMask(hole, 1)
    got = candidate_set((0, 0), SearchConfig(None, None), m)
    expected = [tuple(p) for p in np.argwhere(m.extended_known)]
    assert got == expected


def test_candidate_set_window_matches_enumeration():
    hole = np.zeros((16, 16), dtype=bool)
    hole[6:9, 5:11] = True
    m = RegionMask(hole, 1)
    x = (7, 3)
    got = candidate_set(x, SearchConfig(3, None), m)
    expected = []
    for r in range(x[0] - 3, x[0] + 4):
        for c in range(x[1] - 3, x[1] + 4):
            if 0 <= r < 16 and 0 <= c < 16 and m.extended_known[r, c]:
                expected.append((r, c))
    assert got == expected


def test_candidate_set_stride():
    m = RegionMask.empty((9, 9), 0)
    got = candidate_set((4, 4), SearchConfig(2, None, 2), m)
    assert got == [(r, c) for r in (2, 4, 6) for c in (2, 4, 6)]


def test_candidate_set_empty_in_large_hole():
    hole = np.zeros((30, 30), dtype=bool)
    hole[5:25, 5:25] = True
    with pytest.raises(CandidateSetEmptyError) as exc:
        candidate_set((15, 15), SearchConfig(3, None), RegionMask(hole, 2))
    assert exc.value.pixel == (15, 15)


def test_softmax_two_equal():
    assert softmax_rows(np.array([[3.0, 3.0]]), 1.0).tolist() == [[0.5, 0.5]]


def test_softmax_log2_ratio():
    h = 7.0
    w = softmax_rows(np.array([[0.0, h * math.log(2)]]), h)
    assert w[0] == pytest.approx([2 / 3, 1 / 3], abs=1e-15)


def test_softmax_flat_limit():
    d = np.array([[0.0, 10.0, 500.0, 3.0]])
    assert np.allclose(softmax_rows(d, 1e12), 0.25, atol=1e-6)


def test_softmax_no_overflow():
    d = np.array([[1e6, 1e6 + 1.0, np.inf]])
    w = softmax_rows(d, 1e-3)
    assert np.all(np.isfinite(w))
    assert w[0, 0] == 1.0 and w[0, 2] == 0.0


def _brute_weights(u, mask, kernel, h, s):
    hh, ww = u.shape
    out = {}
    for i in range(hh):
        for j in range(ww):
            cands = candidate_set((i, j), SearchConfig(s, None), mask)
            d = np.array([patch_distance(u, (i, j), y, kernel) for y in cands])
            e = np.exp(-(d - d.min()) / h)
            out[(i, j)] = dict(zip(cands, e / e.sum()))
    return out


def test_update_weights_matches_brute_force(rng):
    u = rng.random((9, 10)) * 255
    hole = np.zeros(u.shape, dtype=bool)
    hole[3:5, 4:6] = True
    mask = RegionMask(hole, 1)
    k = make_gaussian_kernel(1)
    h = 500.0
    field = update_weights(u, mask, k, h, SearchConfig(3, None))
    ref = _brute_weights(u, mask, k, h, 3)
    for x, dist in ref.items():
        row = dict(field.row(x))
        assert set(row) == set(dist)
        for y, p in dist.items():
            assert row[y] == pytest.approx(p, abs=1e-12)
    assert np.allclose(field.row_sums(), 1.0, atol=1e-12)


def test_update_weights_top_k_keeps_closest(rng):
    u = rng.random((10, 10)) * 255
    mask = RegionMask.empty(u.shape, 1)
    k = make_gaussian_kernel(1)
    full = update_weights(u, mask, k, 1000.0, SearchConfig(4, None))
    top = update_weights(u, mask, k, 1000.0, SearchConfig(4, 5))
    for x in [(0, 0), (5, 5), (9, 3)]:
        frow = dict(full.row(x))
        trow = dict(top.row(x))
        assert len(trow) == 5
        best = sorted(frow, key=lambda y: -frow[y])[:5]
        assert set(trow) == set(best)
        # renormalized, same relative order
        scale = sum(frow[y] for y in trow)
        for y in trow:
            assert trow[y] == pytest.approx(frow[y] / scale, rel=1e-12)


def test_update_weights_top_k_ties_go_to_row_major_first():
    u = np.zeros((6, 6))
    mask = RegionMask.empty(u.shape, 0)
    field = update_weights(u, mask, make_gaussian_kernel(0), 1.0, SearchConfig(1, 2))
    assert [y for y, _ in field.row((3, 3))] == [(2, 2), (2, 3)]


def test_candidate_distances_thread_invariant(rng):
    u = rng.random((23, 17)) * 255
    hole = np.zeros(u.shape, dtype=bool)
    hole[8:12, 5:9] = True
    mask = RegionMask(hole, 2)
    k = make_gaussian_kernel(2)
    d1, c1 = candidate_distances(u, mask, k, SearchConfig(5, 7), threads=1)
    d4, c4 = candidate_distances(u, mask, k, SearchConfig(5, 7), threads=4)
    assert np.array_equal(d1, d4) and np.array_equal(c1, c4)


def test_update_weights_domain_and_empty_rows(rng):
    u = rng.random((8, 8)) * 255
    mask = RegionMask.empty(u.shape, 1)
    dom = np.zeros(u.shape, dtype=bool)
    dom[2, 3] = True
    field = update_weights(u, mask, make_gaussian_kernel(1), 100.0, domain=dom)
    sums = field.row_sums()
    assert sums[2, 3] == pytest.approx(1.0)
    assert np.count_nonzero(sums) == 1


def test_update_weights_raises_for_pixel_without_candidates():
    hole = np.zeros((30, 30), dtype=bool)
    hole[3:27, 3:27] = True
    u = np.zeros(hole.shape)
    with pytest.raises(CandidateSetEmptyError) as exc:
        update_weights(u, RegionMask(hole, 1), make_gaussian_kernel(1), 1.0, SearchConfig(3, None))
    assert exc.value.pixel[0] >= 5


def test_entropy_values(rng):
    one = WeightField((1, 2), np.array([[1, -1], [-1, -1]]), np.array([[1.0, 0.0], [0.0, 0.0]]), np.ones((1, 2), bool))
    assert entropy(one) == 0.0
    n = 6
    uni = WeightField((1, 1), np.arange(n)[None], np.full((1, n), 1 / n), np.ones((1, 1), bool))
    assert entropy(uni) == pytest.approx(-math.log(n), abs=1e-14)
    p = rng.random(5)
    p /= p.sum()
    f = WeightField((1, 1), np.arange(5)[None], p[None], np.ones((1, 1), bool))
    assert entropy(f) == pytest.approx(sum(q * math.log(q) for q in p), abs=1e-14)


def test_extended_weight_zero_extension(rng):
    u = rng.random((8, 8)) * 255
    hole = np.zeros(u.shape, dtype=bool)
    hole[4, 4] = True
    mask = RegionMask(hole, 1)
    field = update_weights(u, mask, make_gaussian_kernel(1), 100.0, SearchConfig(3, 4))
    (y, p), = field.row((0, 0))[:1]
    assert extended_weight(field, (0, 0), y) == p
    assert extended_weight(field, (-1, 0), y) == 0.0
    assert extended_weight(field, (0, 0), (4, 4)) == 0.0
    stored = {yy for yy, _ in field.row((0, 0))}
    pruned = next(c for c in candidate_set((0, 0), SearchConfig(3, None), mask) if c not in stored)
    assert extended_weight(field, (0, 0), pruned) == 0.0


def test_weights_csv_dump(tmp_path, rng):
    u = rng.random((6, 6)) * 255
    field = update_weights(u, RegionMask.empty(u.shape, 1), make_gaussian_kernel(1), 100.0, SearchConfig(2, 3))
    p = tmp_path / "w.csv"
    write_weights_csv(field, (2, 2), p)
    lines = p.read_text().splitlines()
    assert lines[0] == "y_row,y_col,weight"
    assert len(lines) == 4
    assert sum(float(l.split(",")[2]) for l in lines[1:]) == pytest.approx(1.0)
