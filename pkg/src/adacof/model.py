"""Scaled-down trainable network emitting the warp parameter groups.

An encoder-decoder with skip connections (3x3 conv + ReLU units, average
pooling down, bilinear interpolation up) feeds seven convolutional heads:
kernel weights, vertical and horizontal offsets for each warp direction,
and the occlusion map. Weight heads go through a per-pixel softmax over
the tap axis, the occlusion head through a sigmoid, offset heads are left
unconstrained. Heads are zero-initialized so an untrained model emits
uniform weights, zero offsets, and a 0.5 occlusion map.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import nn
from .warp import WarpParams

CKPT_MAGIC = b"ACKP"
CKPT_VERSION = 1


@dataclass
class ModelConfig:
    kernel_size: int = 5
    dilation: int = 1
    depth: int = 3
    widths: tuple = (16, 32, 64)
    in_channels: int = 6
    frontend: bool = True
    seed: int = 0

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if self.depth < 1 or len(self.widths) != self.depth:
            raise ValueError("need one positive width per encoder level")
        if any(w <= 0 for w in self.widths):
            raise ValueError("widths must be positive")
        if self.kernel_size < 1:
            raise ValueError("kernel_size must be >= 1")

    @property
    def taps(self):
        return self.kernel_size * self.kernel_size

    def to_dict(self):
        return {"kernel_size": self.kernel_size, "dilation": self.dilation,
                "depth": self.depth, "widths": list(self.widths),
                "in_channels": self.in_channels, "frontend": self.frontend,
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(kernel_size=d["kernel_size"], dilation=d["dilation"],
                   depth=d["depth"], widths=tuple(d["widths"]),
                   in_channels=d.get("in_channels", 6),
                   frontend=d.get("frontend", True), seed=d.get("seed", 0))

    @property
    def encoder_channels(self):
        return self.in_channels + (MOTION_FEATURES if self.frontend else 0)


HEAD_NAMES = ("weight_f", "alpha_f", "beta_f", "weight_b", "alpha_b", "beta_b", "occ")

# channels appended by the motion frontend: temporal difference, two
# spatial gradients, and the two components of the local least-squares flow
MOTION_FEATURES = 5


def _box5(img):
    """5x5 box sum of a (B, H, W) map with replicate padding."""
    from numpy.lib.stride_tricks import sliding_window_view
    padded = np.pad(img, ((0, 0), (2, 2), (2, 2)), mode="edge")
    return sliding_window_view(padded, (5, 5), axis=(1, 2)).sum(axis=(3, 4))


def motion_features(x, max_flow=3.0):
    """Fixed motion descriptors for a (B, 6, H, W) frame-pair batch.

    Produces the grayscale temporal difference, the spatial gradients of
    the mean frame, and a windowed least-squares brightness-constancy flow
    estimate (clipped to +-max_flow). These are deterministic functions of
    the input, so no gradient flows through them; they give the encoder a
    direct view of local motion instead of leaving it to discover
    correlation features from raw pixels.
    """
    g0 = x[:, :3].mean(axis=1)
    g1 = x[:, 3:6].mean(axis=1)
    it = g1 - g0
    mean = 0.5 * (g0 + g1)
    iy = np.gradient(mean, axis=1)
    ix = np.gradient(mean, axis=2)
    syy = _box5(iy * iy)
    sxx = _box5(ix * ix)
    sxy = _box5(iy * ix)
    syt = _box5(iy * it)
    sxt = _box5(ix * it)
    reg = 1e-4
    det = (syy + reg) * (sxx + reg) - sxy * sxy
    fy = (-(sxx + reg) * syt + sxy * sxt) / det
    fx = (sxy * syt - (syy + reg) * sxt) / det
    fy = np.clip(fy, -max_flow, max_flow)
    fx = np.clip(fx, -max_flow, max_flow)
    return np.stack([it, iy, ix, fy, fx], axis=1)


@dataclass
class ModelOutputs:
    """Batched head outputs after their activation constraints."""

    weight_f: np.ndarray  # (B, F*F, H, W), softmax-normalized
    alpha_f: np.ndarray
    beta_f: np.ndarray
    weight_b: np.ndarray
    alpha_b: np.ndarray
    beta_b: np.ndarray
    occ: np.ndarray       # (B, H, W), sigmoid output

    def sample_params(self, i, kernel_size, dilation):
        """WarpParams pair plus occlusion map for batch element i."""
        pf = WarpParams(self.weight_f[i], self.alpha_f[i], self.beta_f[i],
                        kernel_size=kernel_size, dilation=dilation)
        pb = WarpParams(self.weight_b[i], self.alpha_b[i], self.beta_b[i],
                        kernel_size=kernel_size, dilation=dilation)
        return pf, pb, self.occ[i]


class SynthModel:
    """Fully convolutional parameter estimator with a hand-rolled tape."""

    def __init__(self, config, params=None):
        self.config = config
        self.params = params if params is not None else init_params(config)

    def forward(self, x):
        """Run the network on (B, in_channels, H, W); returns (outputs, tape).

        Height and width must be divisible by 2**depth.
        """
        cfg = self.config
        b, c, h, w = x.shape
        if c != cfg.in_channels:
            raise ValueError(f"expected {cfg.in_channels} input channels, got {c}")
        div = 2 ** cfg.depth
        if h % div or w % div:
            raise ValueError(f"input {h}x{w} not divisible by 2^depth = {div}")
        if cfg.frontend:
            x = np.concatenate([x, motion_features(x)], axis=1)
        p = self.params
        tape = {"enc": [], "dec": [], "heads": {}}
        skips = []
        for i in range(cfg.depth):
            hcur, bw_conv = nn.conv3x3(x if i == 0 else hcur,
                                       p[f"enc{i}.w"], p[f"enc{i}.b"])
            hcur, bw_relu = nn.relu(hcur)
            skips.append(hcur)
            hcur, bw_pool = nn.avgpool2(hcur)
            tape["enc"].append((bw_conv, bw_relu, bw_pool))
        hcur, bw_conv = nn.conv3x3(hcur, p["bottleneck.w"], p["bottleneck.b"])
        hcur, bw_relu = nn.relu(hcur)
        tape["bottleneck"] = (bw_conv, bw_relu)
        for i in reversed(range(cfg.depth)):
            hcur, bw_up = nn.upsample_bilinear2(hcur)
            hcur, bw_cat = nn.concat_channels(hcur, skips[i])
            hcur, bw_conv = nn.conv3x3(hcur, p[f"dec{i}.w"], p[f"dec{i}.b"])
            hcur, bw_relu = nn.relu(hcur)
            tape["dec"].append((bw_up, bw_cat, bw_conv, bw_relu))
        head_out = {}
        for name in HEAD_NAMES:
            y, bw_conv = nn.conv3x3(hcur, p[f"head.{name}.w"], p[f"head.{name}.b"])
            if name.startswith("weight"):
                y, bw_act = nn.softmax_channels(y)
            elif name == "occ":
                y, bw_act = nn.sigmoid(y)
            else:
                bw_act = None
            head_out[name] = y
            tape["heads"][name] = (bw_conv, bw_act)
        out = ModelOutputs(
            weight_f=head_out["weight_f"], alpha_f=head_out["alpha_f"],
            beta_f=head_out["beta_f"], weight_b=head_out["weight_b"],
            alpha_b=head_out["alpha_b"], beta_b=head_out["beta_b"],
            occ=head_out["occ"][:, 0],
        )
        return out, tape

    def backward(self, tape, out_grads):
        """VJP through the whole network.

        out_grads maps head names to upstream gradients on the constrained
        outputs (occ gradient shaped (B, H, W)). Returns a dict of
        parameter gradients congruent with self.params.
        """
        cfg = self.config
        grads = {name: np.zeros_like(arr) for name, arr in self.params.items()}
        gh = None
        for name in HEAD_NAMES:
            g = out_grads.get(name)
            if g is None:
                continue
            bw_conv, bw_act = tape["heads"][name]
            if name == "occ":
                g = g[:, None]
            if bw_act is not None:
                g = bw_act(g)
            gx, gk, gb = bw_conv(g)
            grads[f"head.{name}.w"] += gk
            grads[f"head.{name}.b"] += gb
            gh = gx if gh is None else gh + gx
        if gh is None:
            raise ValueError("no upstream gradients given")
        skip_grads = [None] * cfg.depth
        for stage, i in zip(reversed(tape["dec"]), range(cfg.depth)):
            bw_up, bw_cat, bw_conv, bw_relu = stage
            g = bw_relu(gh)
            gx, gk, gb = bw_conv(g)
            grads[f"dec{i}.w"] += gk
            grads[f"dec{i}.b"] += gb
            g_up, g_skip = bw_cat(gx)
            skip_grads[i] = g_skip
            gh = bw_up(g_up)
        bw_conv, bw_relu = tape["bottleneck"]
        g = bw_relu(gh)
        gh, gk, gb = bw_conv(g)
        grads["bottleneck.w"] += gk
        grads["bottleneck.b"] += gb
        for i in reversed(range(cfg.depth)):
            bw_conv, bw_relu, bw_pool = tape["enc"][i]
            g = bw_pool(gh) + skip_grads[i]
            g = bw_relu(g)
            gh, gk, gb = bw_conv(g)
            grads[f"enc{i}.w"] += gk
            grads[f"enc{i}.b"] += gb
        return grads


def init_params(config):
    """He-style fan-in initialization; all head convolutions start at zero."""
    rng = np.random.default_rng(config.seed)
    params = {}

    def conv(name, cin, cout, zero=False):
        if zero:
            params[f"{name}.w"] = np.zeros((cout, cin, 3, 3))
        else:
            std = np.sqrt(2.0 / (cin * 9))
            params[f"{name}.w"] = rng.normal(0.0, std, size=(cout, cin, 3, 3))
        params[f"{name}.b"] = np.zeros(cout)

    cin = config.encoder_channels
    for i in range(config.depth):
        conv(f"enc{i}", cin, config.widths[i])
        cin = config.widths[i]
    conv("bottleneck", config.widths[-1], config.widths[-1])
    up = config.widths[-1]
    for i in reversed(range(config.depth)):
        conv(f"dec{i}", up + config.widths[i], config.widths[i])
        up = config.widths[i]
    for name in HEAD_NAMES:
        cout = 1 if name == "occ" else config.taps
        conv(f"head.{name}", config.widths[0], cout, zero=True)
    return params


def save_checkpoint(path, model, extra=None):
    """Binary checkpoint: magic, version, JSON config block, named tensors."""
    cfg = dict(model.config.to_dict())
    if extra:
        cfg["extra"] = extra
    blob = json.dumps(cfg, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<2I", CKPT_VERSION, len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(model.params)))
        for name in sorted(model.params):
            arr = np.ascontiguousarray(model.params[name], dtype="<f4")
            nb = name.encode()
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path):
    """Returns (SynthModel, extra-config dict)."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, blob_len = struct.unpack_from("<2I", data, 4)
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    cfg = json.loads(data[pos:pos + blob_len].decode())
    pos += blob_len
    extra = cfg.pop("extra", None)
    config = ModelConfig.from_dict(cfg)
    count, = struct.unpack_from("<I", data, pos)
    pos += 4
    params = {}
    for _ in range(count):
        nlen, = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + nlen].decode()
        pos += nlen
        ndim, = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        n = int(np.prod(shape))
        params[name] = np.frombuffer(data, dtype="<f4", count=n,
                                     offset=pos).astype(np.float64).reshape(shape)
        pos += 4 * n
    return SynthModel(config, params), extra
