"""Training loop: batching, the two-phase objective, validation metrics,
checkpointing, and the end-to-end inference helper shared with the CLI.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import metrics
from .datagen import augment, load_triplet, read_manifest
from .losses import (Discriminator, GradientBankExtractor, LossConfig,
                     charbonnier_l1, discriminator_loss, generator_entropy_loss,
                     perceptual_loss)
from .model import ModelConfig, SynthModel, save_checkpoint
from .optim import AdaMaxState, Schedule, adamax_step
from .warp import (WarpMode, backward_warp_vjp, forward_warp, occlusion_blend,
                   occlusion_blend_vjp, project_mode)


@dataclass
class TrainConfig:
    dataset_dir: str = ""
    kernel_size: int = 5
    dilation: int = 1
    depth: int = 3
    widths: tuple = (16, 32, 64)
    lr: float = 0.001
    batch: int = 4
    epochs: int = 30
    seed: int = 7
    mode: str = "distortion"          # distortion | perception
    warp_mode: str = "adacof"         # adacof | fb | kb | ws | sdc | woocc
    lambda_1: float = 0.01
    lambda_vgg: float = 1.0
    lambda_adv: float = 0.005
    adv_epochs: int = 0               # fine-tuning epochs for perception mode
    schedule_period: int = 20
    val_fraction: float = 0.125
    crop: int = 0                     # 0 = full frame
    augment: bool = True

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            raw = json.load(f)
        key_map = {"F": "kernel_size", "d": "dilation"}
        kwargs = {key_map.get(k, k): v for k, v in raw.items()}
        if "widths" in kwargs:
            kwargs["widths"] = tuple(kwargs["widths"])
        return cls(**kwargs)

    def resolve(self):
        """Warp mode implications: flow-only trains with F=1, d=0;
        'woocc' is plain adacof with blending disabled."""
        mode = self.warp_mode
        occlusion_enabled = mode != "woocc"
        wmode = WarpMode.ADACOF if mode == "woocc" else WarpMode(mode)
        f, d = self.kernel_size, self.dilation
        if wmode is WarpMode.FLOW_ONLY:
            f, d = 1, 0
        model_cfg = ModelConfig(kernel_size=f, dilation=d, depth=self.depth,
                                widths=self.widths, seed=self.seed)
        return wmode, occlusion_enabled, model_cfg


def infer(model, first, last, warp_mode=WarpMode.ADACOF, occlusion_enabled=True,
          threads=1):
    """Full interpolation pass; returns (output, params_fwd, params_bwd, v)."""
    cfg = model.config
    x = np.concatenate([np.asarray(first, dtype=np.float64),
                        np.asarray(last, dtype=np.float64)])[None]
    out, _ = model.forward(x)
    (wf, af, bf), _ = project_mode(warp_mode, out.weight_f[0], out.alpha_f[0],
                                   out.beta_f[0])
    (wb, ab, bb), _ = project_mode(warp_mode, out.weight_b[0], out.alpha_b[0],
                                   out.beta_b[0])
    from .warp import WarpParams
    pf = WarpParams(wf, af, bf, cfg.kernel_size, cfg.dilation)
    pb = WarpParams(wb, ab, bb, cfg.kernel_size, cfg.dilation)
    v = out.occ[0]
    warped_f = forward_warp(x[0, :3], pf, threads=threads)
    warped_b = forward_warp(x[0, 3:], pb, threads=threads)
    blended = occlusion_blend(warped_f, warped_b, v, enabled=occlusion_enabled)
    return blended, pf, pb, v


def _batch_losses_and_grads(model, out, tape, batch, wmode, occlusion_enabled,
                            loss_cfg, extractor=None, disc=None):
    """Loss and parameter gradients for one forward-pass batch.

    Returns (mean loss, model grads, per-sample outputs) where outputs are
    the blended frames (used by the adversarial phase).
    """
    cfg = model.config
    b = len(batch)
    head_grads = {name: np.zeros_like(getattr(out, name))
                  for name in ("weight_f", "alpha_f", "beta_f",
                               "weight_b", "alpha_b", "beta_b", "occ")}
    total = 0.0
    blended_frames = []
    from .warp import WarpParams
    perception = loss_cfg.mode == "perception"
    for i, triplet in enumerate(batch):
        first = triplet.first.pixels
        last = triplet.last.pixels
        gt = triplet.middle.pixels
        (wf, af, bf), vjp_f = project_mode(wmode, out.weight_f[i],
                                           out.alpha_f[i], out.beta_f[i])
        (wb, ab, bb), vjp_b = project_mode(wmode, out.weight_b[i],
                                           out.alpha_b[i], out.beta_b[i])
        pf = WarpParams(wf, af, bf, cfg.kernel_size, cfg.dilation)
        pb = WarpParams(wb, ab, bb, cfg.kernel_size, cfg.dilation)
        v = out.occ[i]
        warped_f = forward_warp(first, pf)
        warped_b = forward_warp(last, pb)
        blended = occlusion_blend(warped_f, warped_b, v, enabled=occlusion_enabled)
        blended_frames.append(blended)

        l1, g_l1 = charbonnier_l1(blended, gt, loss_cfg.epsilon)
        if perception:
            vgg, g_vgg = perceptual_loss(blended, gt, extractor)
            c1, tape1 = disc.forward(np.concatenate([first, blended]))
            c2, tape2 = disc.forward(np.concatenate([blended, last]))
            adv, d_c1, d_c2 = generator_entropy_loss(c1, c2)
            _, g_in1 = disc.backward(tape1, d_c1)
            _, g_in2 = disc.backward(tape2, d_c2)
            g_adv = g_in1[3:] + g_in2[:3]
            loss = (loss_cfg.lambda_1 * l1 + loss_cfg.lambda_vgg * vgg
                    + loss_cfg.lambda_adv * adv)
            g_out = (loss_cfg.lambda_1 * g_l1 + loss_cfg.lambda_vgg * g_vgg
                     + loss_cfg.lambda_adv * g_adv)
        else:
            loss, g_out = l1, g_l1
        total += loss

        gf, gb_, gv = occlusion_blend_vjp(warped_f, warped_b, v, g_out,
                                          enabled=occlusion_enabled)
        _, gw_f, ga_f, gbt_f = backward_warp_vjp(first, pf, gf)
        _, gw_b, ga_b, gbt_b = backward_warp_vjp(last, pb, gb_)
        gw_f, ga_f, gbt_f = vjp_f(gw_f, ga_f, gbt_f)
        gw_b, ga_b, gbt_b = vjp_b(gw_b, ga_b, gbt_b)
        head_grads["weight_f"][i] = gw_f
        head_grads["alpha_f"][i] = ga_f
        head_grads["beta_f"][i] = gbt_f
        head_grads["weight_b"][i] = gw_b
        head_grads["alpha_b"][i] = ga_b
        head_grads["beta_b"][i] = gbt_b
        head_grads["occ"][i] = gv
    for g in head_grads.values():
        g /= b
    grads = model.backward(tape, head_grads)
    return total / b, grads, blended_frames


def _discriminator_step(disc, disc_state, batch, blended_frames):
    """One classifier update on real-first vs generated-first orderings."""
    acc = {name: np.zeros_like(p) for name, p in disc.params.items()}
    total = 0.0
    for triplet, blended in zip(batch, blended_frames):
        c1, tape1 = disc.forward(np.concatenate([triplet.first.pixels, blended]))
        c2, tape2 = disc.forward(np.concatenate([blended, triplet.last.pixels]))
        loss, d_c1, d_c2 = discriminator_loss(c1, c2)
        g1, _ = disc.backward(tape1, d_c1)
        g2, _ = disc.backward(tape2, d_c2)
        for name in acc:
            acc[name] += g1[name] + g2[name]
        total += loss
    for name in acc:
        acc[name] /= len(batch)
    adamax_step(disc_state, disc.params, acc)
    return total / len(batch)


def evaluate(model, triplets, wmode=WarpMode.ADACOF, occlusion_enabled=True):
    """Mean PSNR/SSIM over triplets; returns (psnr, ssim)."""
    psnrs, ssims = [], []
    for t in triplets:
        blended, _, _, _ = infer(model, t.first.pixels, t.last.pixels,
                                 wmode, occlusion_enabled)
        p = metrics.psnr(blended, t.middle.pixels)
        psnrs.append(min(p, 100.0))
        ssims.append(metrics.ssim(blended, t.middle.pixels))
    return float(np.mean(psnrs)), float(np.mean(ssims))


def train(config, out_dir, log=None):
    """Run the full training protocol; returns (model, history).

    Phase 1 minimizes the distortion objective; when the config asks for
    the perception objective, a fine-tuning phase alternates one
    discriminator step with one generator step per batch. History rows
    mirror the metrics CSV: epoch, phase, loss, val_psnr, val_ssim, plus
    per-quarter mean losses.
    """
    os.makedirs(out_dir, exist_ok=True)
    wmode, occlusion_enabled, model_cfg = config.resolve()
    names = read_manifest(config.dataset_dir)
    triplets = [load_triplet(os.path.join(config.dataset_dir, n)) for n in names]
    n_val = max(1, int(round(len(triplets) * config.val_fraction)))
    train_set = triplets[:-n_val]
    val_set = triplets[-n_val:]

    model = SynthModel(model_cfg)
    state = AdaMaxState(lr=config.lr)
    schedule = Schedule(initial_lr=config.lr, period=config.schedule_period)
    loss_cfg = LossConfig(lambda_1=config.lambda_1, lambda_vgg=config.lambda_vgg,
                          lambda_adv=config.lambda_adv, mode="distortion")
    rng = np.random.default_rng(config.seed)
    history = []
    csv_path = os.path.join(out_dir, "metrics.csv")
    with open(csv_path, "w") as f:
        f.write("epoch,phase,loss,val_psnr,val_ssim\n")

    extractor = disc = disc_state = None
    phases = [("distortion", config.epochs)]
    if config.mode == "perception" and config.adv_epochs > 0:
        extractor = GradientBankExtractor()
        disc = Discriminator(seed=config.seed + 1)
        disc_state = AdaMaxState(lr=config.lr)
        phases.append(("perception", config.adv_epochs))

    epoch_index = 0
    for phase, n_epochs in phases:
        phase_cfg = LossConfig(lambda_1=config.lambda_1,
                               lambda_vgg=config.lambda_vgg,
                               lambda_adv=config.lambda_adv, mode=phase)
        for _ in range(n_epochs):
            state.lr = schedule.lr_at(epoch_index)
            order = rng.permutation(len(train_set))
            step_losses = []
            for start in range(0, len(order) - config.batch + 1, config.batch):
                idx = order[start:start + config.batch]
                batch = [_augmented(train_set[i], rng, config.crop,
                                    config.augment) for i in idx]
                x = np.stack([np.concatenate([t.first.pixels, t.last.pixels])
                              for t in batch])
                out, tape = model.forward(x)
                loss, grads, blended = _batch_losses_and_grads(
                    model, out, tape, batch, wmode, occlusion_enabled,
                    phase_cfg, extractor, disc)
                if not np.isfinite(loss):
                    raise FloatingPointError(f"loss became {loss} at epoch "
                                             f"{epoch_index}")
                adamax_step(state, model.params, grads)
                if phase == "perception":
                    _discriminator_step(disc, disc_state, batch, blended)
                step_losses.append(loss)
            quarters = [float(np.mean(q)) for q in
                        np.array_split(np.asarray(step_losses),
                                       min(4, len(step_losses)))]
            val_psnr, val_ssim = evaluate(model, val_set, wmode,
                                          occlusion_enabled)
            row = {"epoch": epoch_index, "phase": phase,
                   "loss": float(np.mean(step_losses)),
                   "val_psnr": val_psnr, "val_ssim": val_ssim,
                   "quarter_losses": quarters}
            history.append(row)
            with open(csv_path, "a") as f:
                f.write(f"{epoch_index},{phase},{row['loss']:.6g},"
                        f"{val_psnr:.6g},{val_ssim:.6g}\n")
            save_checkpoint(os.path.join(out_dir, f"ckpt_epoch{epoch_index:03d}.ackp"),
                            model, extra={"epoch": epoch_index,
                                          "warp_mode": wmode.value,
                                          "occlusion_enabled": occlusion_enabled})
            if log:
                log(f"epoch {epoch_index} [{phase}] loss {row['loss']:.5f} "
                    f"val_psnr {val_psnr:.3f} val_ssim {val_ssim:.4f}")
            epoch_index += 1
    save_checkpoint(os.path.join(out_dir, "ckpt_final.ackp"), model,
                    extra={"epoch": epoch_index - 1, "warp_mode": wmode.value,
                           "occlusion_enabled": occlusion_enabled})
    return model, history


def _augmented(triplet, rng, crop, enabled=True):
    seed = int(rng.integers(0, 2 ** 31))
    if not enabled:
        return triplet
    return augment(triplet, seed, crop=crop or None)
