#!/usr/bin/env python3
"""Desk-scale end-to-end pipeline run.

Builds a synthetic corpus, trains the audio->motion model, synthesizes
held-out audio under swapped and interpolated styles, trains the deferred
renderer on a toy set, and renders a short motion clip to PNG frames.
Everything lands under --out (default runs/desk) together with a summary
JSON.  Defaults are sized to finish in a few minutes on one CPU core; pass
--full for the acceptance-scale configuration.
"""

import argparse
import json
import os
import time

import numpy as np
import torch

from stylefuse import data, face_model, lsf, render, style


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--scales", default="0.5,1.0,2.0")
    ap.add_argument("--clips-per-spec", type=int, default=8)
    ap.add_argument("--duration", type=float, default=10.0)
    ap.add_argument("--lsf-iterations", type=int, default=400)
    ap.add_argument("--render-iterations", type=int, default=200)
    ap.add_argument("--image-size", type=int, default=96)
    ap.add_argument("--full", action="store_true",
                    help="acceptance-scale run: 60 clips/spec, 2000 iterations, 224px frames")
    args = ap.parse_args()
    if args.full:
        args.clips_per_spec, args.lsf_iterations = 60, 2000
        args.render_iterations, args.image_size = 2000, 224

    torch.set_num_threads(1)
    os.makedirs(args.out, exist_ok=True)
    summary = {"config": vars(args)}
    t_start = time.time()

    # 1. corpus ---------------------------------------------------------------
    scales = [float(s) for s in args.scales.split(",")]
    specs = [data.StyleGeneratorSpec.uniform(s, seed=args.seed + 1000 * i)
             for i, s in enumerate(scales)]
    corpus_dir = os.path.join(args.out, "corpus")
    clips, _ = data.build_corpus(
        specs, clips_per_spec=args.clips_per_spec, duration=args.duration,
        out_dir=corpus_dir,
    )
    print(f"[1/6] corpus: {len(clips)} clips x {args.duration:g}s -> {corpus_dir}")

    # 2. train audio->motion --------------------------------------------------
    windows = data.assemble_training_windows(clips, stride=64)
    model = lsf.LsfModel(lsf.LsfConfig(seed=args.seed))
    report = lsf.train(model, windows, lsf.TrainSettings(
        learning_rate=5e-4, batch_size=16, iterations=args.lsf_iterations, seed=args.seed))
    lsf.save_lsf_checkpoint(model, os.path.join(args.out, "lsf.ckpt"),
                            iteration=args.lsf_iterations)
    lsf.write_report(report, os.path.join(args.out, "lsf_losses.csv"))
    summary["lsf"] = {"windows": len(windows), "initial_loss": report.initial_loss,
                      "final_loss": report.final_loss}
    print(f"[2/6] lsf: {len(windows)} windows, "
          f"loss {report.initial_loss:.4f} -> {report.final_loss:.4f}")

    # 3. style transfer on held-out audio -------------------------------------
    calm = data.generate_clip(data.StyleGeneratorSpec.uniform(0.5, seed=args.seed + 9100),
                              duration=args.duration)
    lively = data.generate_clip(data.StyleGeneratorSpec.uniform(2.0, seed=args.seed + 9200),
                                duration=args.duration)
    voice = data.generate_clip(data.StyleGeneratorSpec.uniform(1.0, seed=args.seed + 9300),
                               duration=args.duration)
    transfer = {}
    for name, ref in (("calm", calm), ("lively", lively)):
        motion = lsf.synthesize(model, voice.features, ref.style, window_stride=16)
        style.save_motion(motion, os.path.join(args.out, f"voice_as_{name}.motion"))
        transfer[name] = float(np.linalg.norm(style.style_code(motion).dpose_block))
    summary["style_transfer_pose_sigma"] = transfer
    print(f"[3/6] style transfer: same audio, pose-sigma "
          f"calm={transfer['calm']:.3f} vs lively={transfer['lively']:.3f}")

    # 4. interpolation sweep ---------------------------------------------------
    sweep = []
    for lam in (0.0, 0.25, 0.5, 0.75, 1.0):
        code = style.interpolate(calm.style, lively.style, lam)
        motion = lsf.synthesize(model, voice.features, code, window_stride=16)
        sweep.append({"lambda": lam,
                      "pose_sigma": float(np.linalg.norm(style.style_code(motion).dpose_block))})
    summary["interpolation"] = sweep
    print("[4/6] interpolation:",
          " -> ".join(f"{row['pose_sigma']:.3f}" for row in sweep))

    # 5. train the renderer ----------------------------------------------------
    basis = face_model.generate_synthetic_basis(seed=args.seed)
    face_model.save_basis(basis, os.path.join(args.out, "basis"))
    dataset = render.build_toy_render_set(basis, n_frames=16, seed=args.seed,
                                          image_size=args.image_size, texture_size=64)
    render.save_render_dataset(dataset, os.path.join(args.out, "render_set"))
    config = render.RenderConfig(image_size=args.image_size, seed=args.seed)
    tex_net, tr_net = render.build_render_nets(config)
    phi = render.PerceptualExtractor(seed=config.perceptual_seed)
    rrep = render.train_render(tex_net, tr_net, dataset, render.RenderTrainSettings(
        learning_rate=2e-4, batch_size=4, iterations=args.render_iterations, seed=args.seed),
        phi=phi)
    render.save_render_checkpoint(tex_net, tr_net, config, dataset.framing,
                                  os.path.join(args.out, "render.ckpt"),
                                  iteration=args.render_iterations)
    summary["render"] = {"initial_loss": rrep.initial_loss, "final_loss": rrep.final_loss}
    print(f"[5/6] renderer: loss {rrep.initial_loss:.4f} -> {rrep.final_loss:.4f}")

    # 6. render a short stylized clip -------------------------------------------
    motion = style.load_motion(os.path.join(args.out, "voice_as_lively.motion"))
    short = style.MotionSeries(motion.beta[:25], motion.pose[:25], fps=motion.fps)
    frames = render.render_sequence(short, basis, dataset.portrait, tex_net, tr_net,
                                    os.path.join(args.out, "frames"),
                                    portrait_params=dataset.portrait_params,
                                    framing=dataset.framing,
                                    texture_size=config.texture_size)
    summary["frames"] = len(frames)
    summary["wall_seconds"] = round(time.time() - t_start, 1)
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"[6/6] rendered {len(frames)} frames; "
          f"done in {summary['wall_seconds']:.0f}s -> {args.out}/summary.json")


if __name__ == "__main__":
    main()
