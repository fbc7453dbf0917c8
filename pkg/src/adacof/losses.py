"""Training objectives: smooth L1, feature-space distance, and the
dual-frame adversarial pair, plus their combination modes.

The feature extractor for the perceptual term is pluggable; the default is
a fixed 8-orientation gradient filter bank (no pretrained weights), which
keeps the loss a deterministic feature-space distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nn

PROB_CLAMP = 1e-6


@dataclass
class LossConfig:
    epsilon: float = 0.001
    lambda_1: float = 0.01
    lambda_vgg: float = 1.0
    lambda_adv: float = 0.005
    mode: str = "distortion"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if min(self.lambda_1, self.lambda_vgg, self.lambda_adv) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.mode not in ("distortion", "perception"):
            raise ValueError(f"unknown loss mode {self.mode!r}")


def charbonnier_l1(a, b, epsilon=0.001):
    """Mean smooth-L1 distance phi(a-b), phi(x) = sqrt(x^2 + eps^2).

    Returns (loss, grad_a); grad_b is -grad_a.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    phi = np.sqrt(diff * diff + epsilon * epsilon)
    loss = float(phi.mean())
    grad_a = diff / phi / a.size
    return loss, grad_a


class IdentityExtractor:
    """Pass-through feature extractor (features are the pixels)."""

    def __call__(self, image):
        image = np.asarray(image, dtype=np.float64)
        return image, lambda g: g


class GradientBankExtractor:
    """Fixed 8-orientation 3x3 gradient filter bank + ReLU + 2x avg pool.

    Each input channel is filtered with oriented first-derivative kernels
    (no learned weights), giving a deterministic feature map whose distance
    plays the perceptual-loss role.
    """

    def __init__(self, orientations=8):
        kx = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64) / 8.0
        ky = kx.T
        angles = np.arange(orientations) * (2.0 * np.pi / orientations)
        self.filters = np.stack([np.cos(t) * kx + np.sin(t) * ky for t in angles])

    def __call__(self, image):
        image = np.asarray(image, dtype=np.float64)
        c, h, w = image.shape
        nf = len(self.filters)
        # depthwise application via a block-structured kernel
        kernel = np.zeros((c * nf, c, 3, 3))
        for ch in range(c):
            kernel[ch * nf:(ch + 1) * nf, ch] = self.filters
        y, bw_conv = nn.conv3x3(image[None], kernel, np.zeros(c * nf))
        y, bw_relu = nn.relu(y)
        y, bw_pool = nn.avgpool2(y)

        def vjp(g):
            gx, _, _ = bw_conv(bw_relu(bw_pool(g[None] if g.ndim == 3 else g)))
            return gx[0]

        return y[0], vjp


def perceptual_loss(out, gt, extractor):
    """Root-mean-square feature-space distance; returns (loss, grad_out)."""
    f_out, vjp = extractor(np.asarray(out, dtype=np.float64))
    f_gt, _ = extractor(np.asarray(gt, dtype=np.float64))
    diff = f_out - f_gt
    msq = float((diff * diff).mean())
    loss = math.sqrt(msq)
    if loss == 0.0:
        return 0.0, np.zeros_like(np.asarray(out, dtype=np.float64))
    grad_feat = diff / (diff.size * loss)
    return loss, vjp(grad_feat)


def clamp_prob(c):
    return float(np.clip(c, PROB_CLAMP, 1.0 - PROB_CLAMP))


def discriminator_loss(c_real_first, c_fake_first):
    """Classifier objective: -log c1 - log(1 - c2), natural log.

    c1 scores the (real, generated) ordering, c2 the (generated, real) one.
    Returns (loss, dloss_dc1, dloss_dc2).
    """
    c1 = clamp_prob(c_real_first)
    c2 = clamp_prob(c_fake_first)
    loss = -math.log(c1) - math.log(1.0 - c2)
    return loss, -1.0 / c1, 1.0 / (1.0 - c2)


def generator_entropy_loss(c1, c2, full_entropy=False):
    """Adversarial generator objective on the two classifier outputs.

    The literal form is c1*ln(c1) + c2*ln(c2). With full_entropy the loss
    is the negative binary entropy of both outputs (minimized at c = 0.5).
    Returns (loss, dloss_dc1, dloss_dc2).
    """
    c1 = clamp_prob(c1)
    c2 = clamp_prob(c2)
    if full_entropy:
        loss = sum(c * math.log(c) + (1 - c) * math.log(1 - c) for c in (c1, c2))
        return loss, math.log(c1 / (1 - c1)), math.log(c2 / (1 - c2))
    loss = c1 * math.log(c1) + c2 * math.log(c2)
    return loss, math.log(c1) + 1.0, math.log(c2) + 1.0


def combined_loss(config, l1, vgg=None, adv=None):
    """Combine loss terms per the configured mode.

    Returns (loss, weights) where weights holds the linear coefficient of
    each component (gradients superpose with these factors).
    """
    if config.mode == "distortion":
        return l1, {"l1": 1.0, "vgg": 0.0, "adv": 0.0}
    if vgg is None or adv is None:
        raise ValueError("perception mode needs vgg and adv components")
    loss = config.lambda_1 * l1 + config.lambda_vgg * vgg + config.lambda_adv * adv
    return loss, {"l1": config.lambda_1, "vgg": config.lambda_vgg,
                  "adv": config.lambda_adv}


class Discriminator:
    """Tiny convolutional classifier on a temporal 2-frame concatenation.

    Maps (6, H, W) -> probability in (delta, 1 - delta); H and W must be
    divisible by 4.
    """

    def __init__(self, seed=0, width=8):
        rng = np.random.default_rng(seed)
        self.width = width

        def conv(cin, cout):
            std = np.sqrt(2.0 / (cin * 9))
            return rng.normal(0.0, std, size=(cout, cin, 3, 3)), np.zeros(cout)

        self.params = {}
        for name, (cin, cout) in {"c0": (6, width), "c1": (width, width),
                                  "c2": (width, 1)}.items():
            self.params[f"{name}.w"], self.params[f"{name}.b"] = conv(cin, cout)

    def forward(self, x):
        """Returns (probability, tape) for a single (6, H, W) input."""
        p = self.params
        h, ops = x[None], []
        for name in ("c0", "c1"):
            h, bw_conv = nn.conv3x3(h, p[f"{name}.w"], p[f"{name}.b"])
            h, bw_relu = nn.relu(h)
            h, bw_pool = nn.avgpool2(h)
            ops.append((name, bw_conv, bw_relu, bw_pool))
        h, bw_conv = nn.conv3x3(h, p["c2.w"], p["c2.b"])
        h, bw_mean = nn.global_mean(h)
        prob_raw = 1.0 / (1.0 + math.exp(-float(h[0])))
        prob = clamp_prob(prob_raw)
        tape = (ops, bw_conv, bw_mean, prob_raw)
        return prob, tape

    def backward(self, tape, dprob):
        """Returns (param_grads, grad_input). Clamped outputs get zero grad."""
        ops, bw_conv, bw_mean, prob_raw = tape
        grads = {}
        if not (PROB_CLAMP < prob_raw < 1.0 - PROB_CLAMP):
            dprob = 0.0
        g = np.array([dprob * prob_raw * (1.0 - prob_raw)])
        g = bw_mean(g)
        g, gk, gb = bw_conv(g)
        grads["c2.w"], grads["c2.b"] = gk, gb
        for name, bw_c, bw_r, bw_p in reversed(ops):
            g = bw_r(bw_p(g))
            g, gk, gb = bw_c(g)
            grads[f"{name}.w"], grads[f"{name}.b"] = gk, gb
        return grads, g[0]
