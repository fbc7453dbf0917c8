"""Synthetic triplet generator tests: ground-truth consistency."""

import numpy as np
import pytest

from adacof.datagen import (MotionSpec, augment, generate_triplet,
                            load_triplet, random_spec, read_manifest,
                            save_triplet, smooth_texture, write_dataset)
from adacof.warp import WarpParams, forward_warp


def test_smooth_texture_range_and_determinism():
    t1 = smooth_texture(np.random.default_rng(0), 3, 16, 16)
    t2 = smooth_texture(np.random.default_rng(0), 3, 16, 16)
    np.testing.assert_array_equal(t1, t2)
    assert t1.min() >= 0.05 - 1e-12 and t1.max() <= 0.95 + 1e-12


def test_integer_translation_middle_frame_is_exact_shift():
    spec = MotionSpec(displacement=(2.0, -2.0))
    t = generate_triplet(spec, 24, seed=0)
    first = t.first.pixels
    middle = t.middle.pixels
    # middle(p) = first(p + disp/2): compare shifted interiors
    np.testing.assert_allclose(middle[:, :-1, 1:], first[:, 1:, :-1], atol=1e-12)


def test_middle_frame_matches_truth_flow_warp():
    # warping the first frame by the stored truth flow reproduces the
    # middle frame almost exactly for smooth translational motion
    spec = MotionSpec(displacement=(1.3, -0.6))
    t = generate_triplet(spec, 24, seed=1)
    h, w = 24, 24
    params = WarpParams(np.ones((1, h, w)), t.flow[0:1], t.flow[1:2],
                        kernel_size=1, dilation=0)
    warped = forward_warp(t.first.pixels, params)
    interior = (slice(None), slice(3, -3), slice(3, -3))
    assert np.abs(warped[interior] - t.middle.pixels[interior]).max() < 1e-6


def test_translation_truth_values():
    spec = MotionSpec(displacement=(2.0, 1.0))
    t = generate_triplet(spec, 16, seed=2)
    np.testing.assert_allclose(t.flow[0], 1.0)
    np.testing.assert_allclose(t.flow[1], 0.5)
    np.testing.assert_allclose(t.occlusion, 0.5)


def test_rotation_flow_is_antisymmetric_about_center():
    spec = MotionSpec(kind="rotation", angle_deg=4.0)
    t = generate_triplet(spec, 16, seed=3)
    fy = t.flow[0]
    # rotating the frame 180 degrees negates the displacement field
    np.testing.assert_allclose(fy, -fy[::-1, ::-1], atol=1e-9)
    assert np.abs(t.flow).max() > 0.0


def test_occluder_truth_partitions():
    spec = MotionSpec(kind="occluder", displacement=(0.0, 3.0),
                      occluder_size=6, occluder_pos=(5.0, 2.0))
    t = generate_triplet(spec, 20, seed=4)
    occ = t.occlusion
    assert set(np.unique(occ)) <= {0.0, 0.5, 1.0}
    assert (occ == 1.0).any() and (occ == 0.0).any()
    # background visible only in the first frame must take it fully (V=1)
    # and the flow there is zero (static background)
    np.testing.assert_allclose(t.flow[:, occ == 1.0], 0.0)


def test_motion_exceeding_cap_rejected():
    with pytest.raises(ValueError):
        generate_triplet(MotionSpec(displacement=(5.0, 0.0)), 16, seed=0)
    with pytest.raises(ValueError):
        generate_triplet(MotionSpec(), 8, seed=0)
    with pytest.raises(ValueError):
        MotionSpec(kind="zoom")


def test_augment_flip_consistency():
    spec = MotionSpec(displacement=(1.5, -1.0))
    t = generate_triplet(spec, 16, seed=5)
    # find a seed whose draw flips horizontally only, no swap
    for seed in range(200):
        rng = np.random.default_rng(seed)
        rng.integers(0, 1 + 16 - 16)  # crop y (degenerate)
        rng.integers(0, 1)
        draws = rng.random(3)
        if draws[0] < 0.5 and draws[1] >= 0.5 and draws[2] >= 0.5:
            a = augment(t, seed)
            np.testing.assert_array_equal(a.first.pixels,
                                          t.first.pixels[:, :, ::-1])
            np.testing.assert_allclose(a.flow[1], -t.flow[1][:, ::-1])
            np.testing.assert_allclose(a.flow[0], t.flow[0][:, ::-1])
            return
    pytest.fail("no horizontal-flip-only seed found")


def test_augment_swap_consistency():
    spec = MotionSpec(displacement=(1.5, -1.0))
    t = generate_triplet(spec, 16, seed=6)
    for seed in range(200):
        rng = np.random.default_rng(seed)
        rng.integers(0, 1)
        rng.integers(0, 1)
        draws = rng.random(3)
        if draws[0] >= 0.5 and draws[1] >= 0.5 and draws[2] < 0.5:
            a = augment(t, seed)
            np.testing.assert_array_equal(a.first.pixels, t.last.pixels)
            np.testing.assert_array_equal(a.last.pixels, t.first.pixels)
            np.testing.assert_array_equal(a.middle.pixels, t.middle.pixels)
            np.testing.assert_allclose(a.flow, -t.flow)
            np.testing.assert_allclose(a.occlusion, 1.0 - t.occlusion)
            return
    pytest.fail("no swap-only seed found")


def test_augment_crop_shapes():
    t = generate_triplet(MotionSpec(displacement=(1.0, 1.0)), 24, seed=7)
    a = augment(t, 0, crop=16)
    assert a.first.shape == (3, 16, 16)
    assert a.flow.shape == (2, 16, 16)
    with pytest.raises(ValueError):
        augment(t, 0, crop=32)


def test_random_spec_respects_cap():
    rng = np.random.default_rng(8)
    for _ in range(50):
        spec = random_spec(rng, 3.0, 32)
        t = generate_triplet(spec, 32, seed=0)  # would raise if above cap
        assert t.first.shape == (3, 32, 32)


def test_save_load_roundtrip(tmp_path):
    t = generate_triplet(MotionSpec(displacement=(1.0, -2.0)), 16, seed=9)
    save_triplet(tmp_path / "t0", t)
    back = load_triplet(tmp_path / "t0")
    # frames go through 8-bit quantization
    assert np.abs(back.first.pixels - t.first.pixels).max() <= 0.5 / 255.0
    assert np.abs(back.flow - t.flow).max() < 1e-6
    assert np.abs(back.occlusion - t.occlusion).max() < 1e-6


def test_write_dataset_manifest(tmp_path):
    names = write_dataset(tmp_path, 5, 16, 2.0, seed=3)
    assert names == [f"{i:04d}" for i in range(5)]
    assert read_manifest(tmp_path) == names
    t = load_triplet(tmp_path / "0002")
    assert t.first.shape == (3, 16, 16)
