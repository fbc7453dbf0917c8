"""Central finite-difference harness and the standard verification suites.

Errors are reported relative to the largest finite-difference magnitude in
each gradient block, which keeps the measure meaningful where individual
entries are near zero.
"""

from __future__ import annotations

import numpy as np

from .losses import (Discriminator, GradientBankExtractor, charbonnier_l1,
                     discriminator_loss, generator_entropy_loss, perceptual_loss)
from .model import ModelConfig, SynthModel
from .warp import (WarpParams, backward_warp_vjp, forward_warp, occlusion_blend,
                   occlusion_blend_vjp)

FD_STEP = 1e-3


def fd_gradient(f, x, h=FD_STEP):
    """Central-difference gradient of scalar f at array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def block_rel_err(analytic, numeric, floor=1e-8):
    """Max |a - n| normalized by the block's largest FD magnitude."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(numeric).max(), np.abs(analytic).max(), floor)
    return float(np.abs(analytic - numeric).max() / scale)


def random_warp_instance(rng, size=4, f=3, d=1, channels=1):
    """Softmax-normalized weights and off-grid-jittered offsets."""
    f2 = f * f
    logits = rng.normal(size=(f2, size, size))
    e = np.exp(logits - logits.max(axis=0))
    weights = e / e.sum(axis=0)
    # keep fractional parts away from the integer-grid kinks
    alpha = rng.uniform(-2.0, 2.0, size=(f2, size, size))
    beta = rng.uniform(-2.0, 2.0, size=(f2, size, size))
    for arr in (alpha, beta):
        frac = arr - np.floor(arr)
        arr += np.where(frac < 0.1, 0.15, 0.0) - np.where(frac > 0.9, 0.15, 0.0)
    image = rng.random((channels, size, size))
    params = WarpParams(weights, alpha, beta, kernel_size=f, dilation=d)
    return image, params


def check_adacof(seed=0, instances=3):
    """FD check of all four warp VJP blocks plus the blend; returns max err."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        image, params = random_warp_instance(rng)
        upstream = rng.normal(size=image.shape)

        def loss(img=None, w=None, a=None, b=None):
            p = WarpParams(w if w is not None else params.weights,
                           a if a is not None else params.alpha,
                           b if b is not None else params.beta,
                           params.kernel_size, params.dilation)
            out = forward_warp(image if img is None else img, p, validate=False)
            return float((out * upstream).sum())

        gi, gw, ga, gb = backward_warp_vjp(image, params, upstream)
        worst = max(worst, block_rel_err(gi, fd_gradient(lambda z: loss(img=z), image.copy())))
        worst = max(worst, block_rel_err(gw, fd_gradient(lambda z: loss(w=z), params.weights.copy())))
        worst = max(worst, block_rel_err(ga, fd_gradient(lambda z: loss(a=z), params.alpha.copy())))
        worst = max(worst, block_rel_err(gb, fd_gradient(lambda z: loss(b=z), params.beta.copy())))

        fwd = rng.random((1, 4, 4))
        bwd = rng.random((1, 4, 4))
        v = rng.uniform(0.1, 0.9, size=(4, 4))
        up = rng.normal(size=fwd.shape)
        gf, gbk, gv = occlusion_blend_vjp(fwd, bwd, v, up)
        blend = lambda f_, b_, v_: float((occlusion_blend(f_, b_, v_) * up).sum())
        worst = max(worst, block_rel_err(gf, fd_gradient(lambda z: blend(z, bwd, v), fwd.copy())))
        worst = max(worst, block_rel_err(gbk, fd_gradient(lambda z: blend(fwd, z, v), bwd.copy())))
        worst = max(worst, block_rel_err(gv, fd_gradient(lambda z: blend(fwd, bwd, z), v.copy())))
    return worst


def check_network(seed=0, size=8):
    """End-to-end FD check through the model, warp, blend, and loss."""
    cfg = ModelConfig(kernel_size=2, dilation=1, depth=1, widths=(6,), seed=seed)
    # search for a well-conditioned instance: every sampling coordinate must
    # sit away from the sampler's integer-grid kinks, or central differences
    # with h=1e-3 see the subgradient jump instead of the derivative
    for attempt in range(64):
        rng = np.random.default_rng((seed, attempt))
        model = SynthModel(cfg)
        # random (not zero-head) parameters so every path carries signal
        for name in model.params:
            model.params[name] = rng.normal(0.0, 0.3, size=model.params[name].shape)
        first = rng.random((3, size, size))
        last = rng.random((3, size, size))
        gt = rng.random((3, size, size))
        x = np.concatenate([first, last])[None]
        out_probe, _ = model.forward(x)
        pf_p, pb_p, _ = out_probe.sample_params(0, cfg.kernel_size, cfg.dilation)
        from .warp import _sample_coords
        dist = 1.0
        for p in (pf_p, pb_p):
            for coords in _sample_coords(p):
                dist = min(dist, np.abs(coords - np.round(coords)).min())
        if dist > 2e-3:
            break
    else:
        raise RuntimeError("could not find a kink-free network instance")

    def loss_from(params):
        m = SynthModel(cfg, params)
        out, _ = m.forward(x)
        pf, pb, v = out.sample_params(0, cfg.kernel_size, cfg.dilation)
        blended = occlusion_blend(forward_warp(first, pf),
                                  forward_warp(last, pb), v)
        return charbonnier_l1(blended, gt)[0]

    out, tape = model.forward(x)
    pf, pb, v = out.sample_params(0, cfg.kernel_size, cfg.dilation)
    warped_f = forward_warp(first, pf)
    warped_b = forward_warp(last, pb)
    blended = occlusion_blend(warped_f, warped_b, v)
    _, g_out = charbonnier_l1(blended, gt)
    gf, gb_, gv = occlusion_blend_vjp(warped_f, warped_b, v, g_out)
    _, gw_f, ga_f, gbt_f = backward_warp_vjp(first, pf, gf)
    _, gw_b, ga_b, gbt_b = backward_warp_vjp(last, pb, gb_)
    grads = model.backward(tape, {
        "weight_f": gw_f[None], "alpha_f": ga_f[None], "beta_f": gbt_f[None],
        "weight_b": gw_b[None], "alpha_b": ga_b[None], "beta_b": gbt_b[None],
        "occ": gv[None]})

    worst = 0.0
    for name in sorted(model.params):
        def f_param(z, name=name):
            p = dict(model.params)
            p[name] = z
            return loss_from(p)

        numeric = fd_gradient(f_param, model.params[name].copy(), h=1e-5)
        worst = max(worst, block_rel_err(grads[name], numeric))
    return worst


def check_losses(seed=0):
    """FD checks for the loss terms and the classifier input gradient."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    a = rng.random((1, 6, 6))
    b = rng.random((1, 6, 6))
    _, ga = charbonnier_l1(a, b)
    worst = max(worst, block_rel_err(
        ga, fd_gradient(lambda z: charbonnier_l1(z, b)[0], a.copy(), h=1e-4)))

    extractor = GradientBankExtractor()
    out = rng.random((3, 8, 8))
    gt = rng.random((3, 8, 8))
    _, g_out = perceptual_loss(out, gt, extractor)
    # small step: the filter-bank ReLU kinks corrupt wider stencils
    worst = max(worst, block_rel_err(
        g_out, fd_gradient(lambda z: perceptual_loss(z, gt, extractor)[0],
                           out.copy(), h=1e-5)))

    c1, c2 = rng.uniform(0.1, 0.9, size=2)
    _, d1, d2 = discriminator_loss(c1, c2)
    fd1 = (discriminator_loss(c1 + 1e-6, c2)[0] - discriminator_loss(c1 - 1e-6, c2)[0]) / 2e-6
    fd2 = (discriminator_loss(c1, c2 + 1e-6)[0] - discriminator_loss(c1, c2 - 1e-6)[0]) / 2e-6
    worst = max(worst, block_rel_err(np.array([d1, d2]), np.array([fd1, fd2])))
    _, e1, e2 = generator_entropy_loss(c1, c2)
    fe1 = (generator_entropy_loss(c1 + 1e-6, c2)[0]
           - generator_entropy_loss(c1 - 1e-6, c2)[0]) / 2e-6
    fe2 = (generator_entropy_loss(c1, c2 + 1e-6)[0]
           - generator_entropy_loss(c1, c2 - 1e-6)[0]) / 2e-6
    worst = max(worst, block_rel_err(np.array([e1, e2]), np.array([fe1, fe2])))

    disc = Discriminator(seed=seed)
    x = rng.random((6, 8, 8))
    prob, tape = disc.forward(x)
    _, gx = disc.backward(tape, 1.0)
    numeric = fd_gradient(lambda z: disc.forward(z)[0], x.copy(), h=1e-5)
    worst = max(worst, block_rel_err(gx, numeric))
    return worst
