import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajkit import motionlab, trajfield
from trajkit.trajfield import (
    DenseField,
    SparseTracks,
    anchor_grid,
    cell_index,
    coarse_positions,
    denormalize_coords,
    normalize_coords,
    rasterize,
    split_windows,
    to_absolute,
    to_offsets,
)


def _random_tracks(seed=0, t=5, h=16, w=16, s=4):
    rng = np.random.default_rng(seed)
    n = (h // s) * (w // s)
    coords = rng.uniform(-2, max(h, w) + 2, size=(t, n, 2))
    vis = (rng.random((t, n)) > 0.3).astype(np.uint8)
    return SparseTracks(coords, vis, s, h, w)


class TestCellIndex:
    def test_zero_case(self):
        assert cell_index(0, 0, 32, 26) == 1

    def test_second_row(self):
        # W=832, s=32 -> W_c=26; pixel (32, 0) falls in the first cell of row 1.
        assert cell_index(32, 0, 32, 26) == 27

    def test_matches_nested_loop_oracle(self):
        s, h, w = 4, 16, 24
        wc = w // s
        # Independent oracle: enumerate cells row-major and look the pixel up.
        lookup = {}
        idx = 1
        for ci in range(h // s):
            for cj in range(wc):
                for dh in range(s):
                    for dw in range(s):
                        lookup[(ci * s + dh, cj * s + dw)] = idx
                idx += 1
        for hh in range(h):
            for ww in range(w):
                assert cell_index(hh, ww, s, wc) == lookup[(hh, ww)]


class TestRasterize:
    def test_piecewise_constant_within_cells(self):
        field = rasterize(_random_tracks(seed=1))
        s = field.stride
        for t in range(field.frames):
            for i in range(0, field.coords.shape[1], s):
                for j in range(0, field.coords.shape[2], s):
                    block = field.coords[t, i:i + s, j:j + s]
                    assert np.all(block == block[0, 0])
                    mblock = field.mask[t, i:i + s, j:j + s]
                    assert np.all(mblock == mblock[0, 0])

    def test_pixel_maps_to_its_track(self):
        tracks = _random_tracks(seed=2)
        field = rasterize(tracks)
        s, wc = tracks.stride, tracks.width // tracks.stride
        norm = normalize_coords(tracks.coords, tracks.height, tracks.width)
        for (h, w) in [(0, 0), (5, 11), (15, 3), (8, 8)]:
            idx = cell_index(h, w, s, wc) - 1
            assert np.allclose(field.coords[:, h, w], norm[:, idx])

    def test_indivisible_frame_rejected(self):
        with pytest.raises(ValueError):
            SparseTracks(np.zeros((2, 4, 2)), np.ones((2, 4)), 5, 16, 16)


class TestAnchors:
    def test_symmetric_2x2_anchor(self):
        g = anchor_grid(2, 2)
        assert np.allclose(g[0, 0], (-0.5, -0.5))
        assert np.allclose(g[1, 1], (0.5, 0.5))

    @given(h=st.integers(1, 12), w=st.integers(1, 12))
    @settings(max_examples=30, deadline=None)
    def test_anchor_symmetry(self, h, w):
        g = anchor_grid(h, w)
        assert np.allclose(g + g[::-1, ::-1], 0.0, atol=1e-15)


class TestOffsets:
    def test_d_equals_g_gives_zero_offsets(self):
        g = anchor_grid(8, 8)
        field = DenseField(np.broadcast_to(g, (3, 8, 8, 2)).copy(), np.ones((3, 8, 8)), stride=4)
        off = to_offsets(field)
        assert np.all(off.offsets == 0.0)

    def test_absolute_of_zero_offsets_is_anchor_grid(self):
        off = trajfield.OffsetField(np.zeros((2, 4, 4, 2)), np.ones((2, 4, 4)), stride=2)
        dense = to_absolute(off)
        assert np.allclose(dense.coords[0], anchor_grid(4, 4))

    @given(seed=st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_round_trip_exact_in_stored_precision(self, seed):
        rng = np.random.default_rng(seed)
        coords = rng.uniform(-1.2, 1.2, size=(2, 8, 8, 2))
        field = DenseField(coords, np.ones((2, 8, 8)), stride=4)
        back = to_absolute(to_offsets(field))
        assert np.array_equal(back.coords.astype(np.float32), coords.astype(np.float32))

    def test_translated_scene_recovers_generator_truth(self):
        spec = motionlab.MotionSpec("translation", frames=6, height=32, width=32, stride=8,
                                    velocity=(2.0, 1.0))
        tracks = motionlab.generate(spec)
        off = to_offsets(rasterize(tracks))
        pos_px, vis = coarse_positions(off, 32, 32)
        gt = tracks.coords.reshape(6, 4, 4, 2)
        assert np.max(np.abs(pos_px - gt)) < 1e-6


class TestSplitWindows:
    def test_split_162_into_81_81(self):
        field = DenseField(np.zeros((162, 2, 2, 2)), np.ones((162, 2, 2)), stride=2)
        past, future = split_windows(field, 81, 81)
        assert past.frames == 81 and future.frames == 81

    def test_zero_future_rejected(self):
        field = DenseField(np.zeros((4, 2, 2, 2)), np.ones((4, 2, 2)), stride=2)
        with pytest.raises(ValueError):
            split_windows(field, 4, 0)

    def test_concatenation_reproduces_input(self):
        rng = np.random.default_rng(3)
        coords = rng.normal(size=(7, 4, 4, 2))
        mask = (rng.random((7, 4, 4)) > 0.5).astype(np.uint8)
        field = trajfield.OffsetField(coords, mask, stride=2)
        past, future = split_windows(field, 3, 4)
        assert np.array_equal(np.concatenate([past.offsets, future.offsets]), coords)
        assert np.array_equal(np.concatenate([past.mask, future.mask]), mask)


def test_normalize_round_trip():
    rng = np.random.default_rng(4)
    px = rng.uniform(-3, 40, size=(5, 7, 2))
    back = denormalize_coords(normalize_coords(px, 24, 36), 24, 36)
    assert np.allclose(back, px, atol=1e-12)


def test_masks_stay_binary_through_pipeline():
    tracks = _random_tracks(seed=5)
    off = to_offsets(rasterize(tracks))
    assert set(np.unique(off.mask)) <= {0, 1}
