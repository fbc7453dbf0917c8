"""Synthetic frame-triplet generation with known motion and occlusion truth.

Triplets are rendered by bilinearly sampling a smooth base texture at
shifted/rotated coordinates, using the same sampler convention as the warp
operator, so the middle frame is the exact half-displacement render. The
occluder kind moves a textured square over a static background and emits
the exact covered/uncovered mask.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Frame, sample_grid
from .ppm import read_ppm, write_ppm
from .warp import WarpParams, load_acof, save_acof

KINDS = ("global_translation", "rotation", "occluder")


@dataclass
class MotionSpec:
    kind: str = "global_translation"
    displacement: tuple = (0.0, 0.0)  # (dy, dx) pixels per full step
    angle_deg: float = 0.0            # rotation kinds only, per full step
    occluder_size: int = 10
    occluder_pos: Optional[tuple] = None  # top-left at t=0; default centered
    texture_seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown motion kind {self.kind!r}")


@dataclass
class Triplet:
    first: Frame
    middle: Frame
    last: Frame
    flow: Optional[np.ndarray] = None       # (2, H, W) forward offsets, half step
    occlusion: Optional[np.ndarray] = None  # (H, W) visibility truth


def smooth_texture(rng, channels, h, w, passes=3):
    """Band-limited random texture in [0.05, 0.95]."""
    tex = rng.random((channels, h, w))
    kernel = np.array([1.0, 2.0, 1.0]) / 4.0
    for _ in range(passes):
        for axis in (1, 2):
            tex = (kernel[0] * np.roll(tex, 1, axis=axis) + kernel[1] * tex
                   + kernel[2] * np.roll(tex, -1, axis=axis))
    lo = tex.min(axis=(1, 2), keepdims=True)
    hi = tex.max(axis=(1, 2), keepdims=True)
    return 0.05 + 0.9 * (tex - lo) / np.maximum(hi - lo, 1e-12)


def _max_displacement(spec, size):
    dy, dx = spec.displacement
    disp = max(abs(dy), abs(dx))
    if spec.kind == "rotation":
        radius = math.hypot(size / 2.0, size / 2.0)
        disp = max(disp, radius * abs(math.radians(spec.angle_deg)))
    return disp


def generate_triplet(spec, size, seed, max_disp=3.0):
    """Render (first, middle, last) at t = 0, 1/2, 1 with ground truth."""
    if size < 16:
        raise ValueError("size must be >= 16")
    if _max_displacement(spec, size) > max_disp:
        raise ValueError(f"motion exceeds the configured maximum {max_disp}")
    rng = np.random.default_rng((seed, spec.texture_seed))
    margin = int(math.ceil(max_disp)) + 2
    base = smooth_texture(rng, 3, size + 2 * margin, size + 2 * margin)
    grid_y, grid_x = np.meshgrid(np.arange(size, dtype=np.float64),
                                 np.arange(size, dtype=np.float64), indexing="ij")

    if spec.kind == "occluder":
        return _render_occluder(spec, size, margin, base, rng, grid_y, grid_x)

    dy, dx = spec.displacement
    frames = []
    for t in (0.0, 0.5, 1.0):
        if spec.kind == "global_translation":
            ys = grid_y + t * dy
            xs = grid_x + t * dx
        else:  # rotation about the frame center
            theta = t * math.radians(spec.angle_deg)
            cy = cx = (size - 1) / 2.0
            ry, rx = grid_y - cy, grid_x - cx
            ys = cy + math.cos(theta) * ry - math.sin(theta) * rx + t * dy
            xs = cx + math.sin(theta) * ry + math.cos(theta) * rx + t * dx
        frames.append(Frame(sample_grid(base, ys + margin, xs + margin)))

    if spec.kind == "global_translation":
        flow = np.stack([np.full((size, size), dy / 2.0),
                         np.full((size, size), dx / 2.0)])
    else:
        theta = 0.5 * math.radians(spec.angle_deg)
        cy = cx = (size - 1) / 2.0
        ry, rx = grid_y - cy, grid_x - cx
        flow = np.stack([
            math.cos(theta) * ry - math.sin(theta) * rx - ry + 0.5 * dy,
            math.sin(theta) * ry + math.cos(theta) * rx - rx + 0.5 * dx,
        ])
    occ = np.full((size, size), 0.5)
    return Triplet(frames[0], frames[1], frames[2], flow, occ)


def _render_occluder(spec, size, margin, base, rng, grid_y, grid_x):
    """Static background with a textured square moving over it."""
    dy, dx = spec.displacement
    s = spec.occluder_size
    if spec.occluder_pos is None:
        oy0 = ox0 = (size - s) / 2.0 - max(abs(dy), abs(dx))
    else:
        oy0, ox0 = spec.occluder_pos
    patch = smooth_texture(rng, 3, s + 4, s + 4)

    def cover(t):
        oy, ox = oy0 + t * dy, ox0 + t * dx
        return ((grid_y >= oy) & (grid_y < oy + s)
                & (grid_x >= ox) & (grid_x < ox + s))

    frames = []
    for t in (0.0, 0.5, 1.0):
        oy, ox = oy0 + t * dy, ox0 + t * dx
        img = sample_grid(base, grid_y + margin, grid_x + margin)
        mask = cover(t)
        patch_vals = sample_grid(patch, grid_y - oy + 2.0, grid_x - ox + 2.0)
        img = np.where(mask[None], patch_vals, img)
        frames.append(Frame(img))

    mask_half = cover(0.5)
    flow = np.where(mask_half[None],
                    np.stack([np.full_like(grid_y, dy / 2.0),
                              np.full_like(grid_x, dx / 2.0)]),
                    0.0)
    # V = 1: background visible only in the first frame (covered at t=1),
    # V = 0: visible only in the last; everything else is unoccluded.
    c0, c1 = cover(0.0), cover(1.0)
    occ = np.full((size, size), 0.5)
    occ[~mask_half & c1 & ~c0] = 1.0
    occ[~mask_half & c0 & ~c1] = 0.0
    return Triplet(frames[0], frames[1], frames[2], flow, occ)


def augment(triplet, seed, crop=None, p_flip_h=0.5, p_flip_v=0.5, p_swap=0.5):
    """Random crop, horizontal/vertical flips, and temporal order swap.

    Ground truth transforms consistently: flips negate and mirror the
    matching flow component, the swap negates the flow and complements the
    visibility map.
    """
    rng = np.random.default_rng(seed)
    h, w = triplet.first.height, triplet.first.width
    crop = crop or h
    if crop > h or crop > w:
        raise ValueError(f"crop {crop} larger than frame {h}x{w}")
    y0 = int(rng.integers(0, h - crop + 1))
    x0 = int(rng.integers(0, w - crop + 1))
    frames = [f.pixels[:, y0:y0 + crop, x0:x0 + crop]
              for f in (triplet.first, triplet.middle, triplet.last)]
    flow = None if triplet.flow is None else \
        triplet.flow[:, y0:y0 + crop, x0:x0 + crop].copy()
    occ = None if triplet.occlusion is None else \
        triplet.occlusion[y0:y0 + crop, x0:x0 + crop].copy()

    if rng.random() < p_flip_h:
        frames = [f[:, :, ::-1] for f in frames]
        if flow is not None:
            flow = flow[:, :, ::-1].copy()
            flow[1] = -flow[1]
        if occ is not None:
            occ = occ[:, ::-1]
    if rng.random() < p_flip_v:
        frames = [f[:, ::-1, :] for f in frames]
        if flow is not None:
            flow = flow[:, ::-1, :].copy()
            flow[0] = -flow[0]
        if occ is not None:
            occ = occ[::-1, :]
    if rng.random() < p_swap:
        frames = [frames[2], frames[1], frames[0]]
        if flow is not None:
            flow = -flow
        if occ is not None:
            occ = 1.0 - occ
    return Triplet(Frame(frames[0].copy()), Frame(frames[1].copy()),
                   Frame(frames[2].copy()), flow,
                   None if occ is None else np.ascontiguousarray(occ))


def random_spec(rng, max_disp, size):
    """Draw a motion spec; kinds are sampled uniformly.

    Displacement magnitudes are biased to the upper half of the allowed
    range so the triplets actually exercise motion compensation (tiny
    motions make plain frame averaging near-optimal).
    """
    kind = KINDS[int(rng.integers(0, len(KINDS)))]
    mag = rng.uniform(0.5 * max_disp, max_disp)
    ang = rng.uniform(0.0, 2.0 * math.pi)
    disp = (mag * math.sin(ang), mag * math.cos(ang))
    seed = int(rng.integers(0, 2 ** 31))
    if kind == "rotation":
        radius = math.hypot(size / 2.0, size / 2.0)
        max_angle = math.degrees(max_disp / radius)
        angle = rng.uniform(0.5 * max_angle, max_angle) * rng.choice((-1.0, 1.0))
        return MotionSpec(kind=kind, displacement=(0.0, 0.0),
                          angle_deg=float(angle), texture_seed=seed)
    if kind == "occluder":
        return MotionSpec(kind=kind, displacement=disp,
                          occluder_size=size // 3, texture_seed=seed)
    return MotionSpec(kind=kind, displacement=disp, texture_seed=seed)


def save_triplet(dirpath, triplet):
    os.makedirs(dirpath, exist_ok=True)
    for i, frame in enumerate((triplet.first, triplet.middle, triplet.last)):
        write_ppm(os.path.join(dirpath, f"frame{i}.ppm"), frame)
    if triplet.flow is not None:
        h, w = triplet.flow.shape[1:]
        params = WarpParams(np.ones((1, h, w)), triplet.flow[0:1],
                            triplet.flow[1:2], kernel_size=1, dilation=0)
        occ = triplet.occlusion if triplet.occlusion is not None \
            else np.full((h, w), 0.5)
        save_acof(os.path.join(dirpath, "truth.acof"), params, occ)


def load_triplet(dirpath):
    frames = [read_ppm(os.path.join(dirpath, f"frame{i}.ppm")) for i in range(3)]
    flow = occ = None
    truth_path = os.path.join(dirpath, "truth.acof")
    if os.path.exists(truth_path):
        params, occ = load_acof(truth_path)
        flow = np.concatenate([params.alpha, params.beta])
    return Triplet(frames[0], frames[1], frames[2], flow, occ)


def write_dataset(out_dir, count, size, max_disp, seed):
    """Generate a dataset directory with an index manifest."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    names = []
    for idx in range(count):
        spec = random_spec(rng, max_disp, size)
        triplet = generate_triplet(spec, size, seed=seed + idx, max_disp=max_disp)
        name = f"{idx:04d}"
        save_triplet(os.path.join(out_dir, name), triplet)
        names.append(name)
    with open(os.path.join(out_dir, "index.txt"), "w") as f:
        f.write("\n".join(names) + "\n")
    return names


def read_manifest(data_dir):
    with open(os.path.join(data_dir, "index.txt")) as f:
        return [line.strip() for line in f if line.strip()]
