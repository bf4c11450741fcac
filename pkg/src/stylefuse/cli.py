"""Command-line interface.

Every failure path prints a single `error: ...` line on stderr and exits
with status 2.  Commands that train or synthesize accept an optional JSON
run-config file (--config) whose per-command sections supply defaults for
any flag not given explicitly.
"""

import argparse
import json
import os
import sys

import numpy as np


def _require_file(path, what="file"):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _require_dir(path, what="directory"):
    if not os.path.isdir(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _load_run_config(path):
    if path is None:
        return {}
    _require_file(path, "config file")
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: bad JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: run config must be a JSON object")
    return cfg


def _merge_defaults(args, cfg, section_name, defaults):
    """Fill argparse values that are None from the run config, then hard defaults.

    Lookup order per key: explicit flag > per-command section > top-level
    "paths" entry of the same name > top-level "seed" (for seed keys) > the
    hard default.
    """
    section = cfg.get(section_name, {})
    paths = cfg.get("paths", {})
    for key, hard in defaults.items():
        if getattr(args, key, None) is not None:
            continue
        if key in section:
            setattr(args, key, section[key])
        elif key in paths:
            setattr(args, key, paths[key])
        elif key == "seed" and "seed" in cfg:
            setattr(args, key, cfg["seed"])
        else:
            setattr(args, key, hard)


def _load_style_ref(path):
    from . import style as style_mod

    _require_file(path, "style reference")
    if path.endswith(".json"):
        return style_mod.load_style(path)
    return style_mod.style_code(style_mod.load_motion(path))


def _load_feature_input(path, feature_seed):
    from . import audio as audio_mod

    _require_file(path, "audio input")
    if path.endswith(".wav"):
        return audio_mod.surrogate_features(audio_mod.load_wav(path), seed=feature_seed)
    return audio_mod.load_features(path)


# ---------------------------------------------------------------------------

def cmd_gen_basis(args):
    from . import face_model

    basis = face_model.generate_synthetic_basis(seed=args.seed, n_vertices=args.vertices)
    face_model.save_basis(basis, args.out)
    print(
        f"wrote basis: {basis.n_vertices} vertices, {basis.triangles.shape[0]} triangles -> {args.out}"
    )
    return 0


def cmd_build_corpus(args):
    from . import data

    if args.specs:
        _require_file(args.specs, "spec file")
        with open(args.specs) as fh:
            raw = json.load(fh)
        if not isinstance(raw, list) or not raw:
            raise ValueError(f"{args.specs}: expected a nonempty JSON list of specs")
        specs = [data.StyleGeneratorSpec(**{**d, "beta_scales": np.asarray(d["beta_scales"])})
                 if "beta_scales" in d else data.StyleGeneratorSpec(**d) for d in raw]
    else:
        scales = [float(s) for s in args.scales.split(",")]
        specs = [
            data.StyleGeneratorSpec.uniform(s, seed=args.seed + 1000 * i)
            for i, s in enumerate(scales)
        ]
    holdout = [int(h) for h in args.holdout.split(",")] if args.holdout else []
    clips, manifest = data.build_corpus(
        specs,
        clips_per_spec=args.clips_per_spec,
        duration=args.duration,
        out_dir=args.out,
        holdout=holdout,
        feature_seed=args.feature_seed,
        save_audio=args.save_audio,
    )
    print(f"wrote corpus: {len(clips)} clips from {len(specs)} specs -> {args.out}")
    return 0


def cmd_extract_style(args):
    from . import style as style_mod

    _require_file(args.motion, "motion file")
    motion = style_mod.load_motion(args.motion)
    code = style_mod.style_code(motion)
    if args.out:
        style_mod.save_style(code, args.out)
    print(
        "style code: |sigma_beta|={:.4f} |sigma_dbeta|={:.4f} |sigma_dpose|={:.4f}{}".format(
            np.linalg.norm(code.beta_block),
            np.linalg.norm(code.dbeta_block),
            np.linalg.norm(code.dpose_block),
            f" -> {args.out}" if args.out else "",
        )
    )
    return 0


def cmd_stats(args):
    from . import style as style_mod

    _require_file(args.motion, "motion file")
    motion = style_mod.load_motion(args.motion)
    stats = style_mod.observation_stats(motion)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(stats.as_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
    print(
        f"{args.motion}: {len(motion)} frames @ {motion.fps:g} fps, "
        f"|std_beta|={np.linalg.norm(stats.std_beta):.4f}, "
        f"|std_dpose|={np.linalg.norm(stats.std_dpose):.4f}"
        + (f" -> {args.out}" if args.out else "")
    )
    return 0


def cmd_project_styles(args):
    from . import style as style_mod

    ids, codes, groups = [], [], []
    if args.corpus:
        from . import data

        _require_dir(args.corpus, "corpus directory")
        clips, _ = data.load_corpus(args.corpus)
        for clip in clips:
            ids.append(clip.clip_id)
            codes.append(clip.style)
            groups.append(clip.spec_index)
    else:
        for path in args.inputs:
            ids.append(os.path.basename(path))
            codes.append(_load_style_ref(path))
            groups.append(-1)
    coords = style_mod.project_styles_2d(codes)
    with open(args.out, "w") as fh:
        fh.write("id,x,y,group\n")
        for cid, (x, y), g in zip(ids, coords, groups):
            fh.write(f"{cid},{x:.6f},{y:.6f},{g}\n")
    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 4))
        sc = ax.scatter(coords[:, 0], coords[:, 1], c=groups, cmap="viridis", s=18)
        ax.set_xlabel("component 1")
        ax.set_ylabel("component 2")
        ax.set_title("style codes, 2-D projection")
        fig.colorbar(sc, ax=ax, label="group")
        fig.tight_layout()
        fig.savefig(args.plot, dpi=110)
        plt.close(fig)
    print(f"projected {len(codes)} style codes -> {args.out}")
    return 0


def cmd_train_lsf(args):
    from . import data, lsf

    _merge_defaults(
        args,
        _load_run_config(args.config),
        "train_lsf",
        {
            "corpus": None,
            "out": None,
            "iterations": 2000,
            "batch_size": 16,
            "learning_rate": 5e-4,
            "stride": 64,
            "seed": 0,
            "latent_dim": 96,
            "dropout": 0.5,
            "split": "train",
        },
    )
    if not args.corpus or not args.out:
        raise ValueError("train-lsf needs --corpus and --out (flag or config)")
    _require_dir(args.corpus, "corpus directory")
    clips, _ = data.load_corpus(args.corpus, split=args.split or None)
    if not clips:
        raise ValueError(f"no clips with split {args.split!r} in {args.corpus}")
    windows = data.assemble_training_windows(clips, stride=args.stride)
    cfg = lsf.LsfConfig(latent_dim=args.latent_dim, dropout_rate=args.dropout, seed=args.seed)
    model = lsf.LsfModel(cfg)
    settings = lsf.TrainSettings(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        iterations=args.iterations,
        seed=args.seed,
    )
    report = lsf.train(model, windows, settings)
    lsf.save_lsf_checkpoint(model, args.out, iteration=args.iterations)
    if args.report:
        lsf.write_report(report, args.report)
    print(
        f"trained lsf on {len(windows)} windows for {args.iterations} iterations: "
        f"loss {report.initial_loss:.4f} -> {report.final_loss:.4f} -> {args.out}"
    )
    return 0


def cmd_synthesize(args):
    from . import lsf, style as style_mod

    _merge_defaults(
        args,
        _load_run_config(args.config),
        "synthesize",
        {"stride": 16, "blend": "crossfade", "feature_seed": 0},
    )
    _require_file(args.checkpoint, "checkpoint")
    model, _ = lsf.load_lsf_checkpoint(args.checkpoint)
    features = _load_feature_input(args.audio, args.feature_seed)
    code = _load_style_ref(args.style)
    motion = lsf.synthesize(model, features, code, window_stride=args.stride, blend=args.blend)
    style_mod.save_motion(motion, args.out)
    print(f"synthesized {len(motion)} motion frames @ {motion.fps:g} fps -> {args.out}")
    return 0


def cmd_interpolate(args):
    from . import lsf, style as style_mod

    _require_file(args.checkpoint, "checkpoint")
    model, _ = lsf.load_lsf_checkpoint(args.checkpoint)
    features = _load_feature_input(args.audio, args.feature_seed)
    code_a = _load_style_ref(args.style_a)
    code_b = _load_style_ref(args.style_b)
    if args.steps < 2:
        raise ValueError("need at least 2 interpolation steps")
    os.makedirs(args.out_dir, exist_ok=True)
    lambdas = np.linspace(0.0, 1.0, args.steps)
    rows = []
    for i, lam in enumerate(lambdas):
        code = style_mod.interpolate(code_a, code_b, float(lam))
        motion = lsf.synthesize(model, features, code, window_stride=args.stride, blend=args.blend)
        mpath = os.path.join(args.out_dir, f"interp_{i:02d}.motion")
        style_mod.save_motion(motion, mpath)
        style_mod.save_style(code, os.path.join(args.out_dir, f"interp_{i:02d}.style.json"))
        realized = style_mod.style_code(motion)
        norm = float(np.linalg.norm(realized.dpose_block))
        rows.append({"lambda": float(lam), "motion": mpath, "pose_sigma_norm": norm})
        print(f"lambda={lam:.2f}: |sigma_dpose|={norm:.4f} -> {mpath}")
    with open(os.path.join(args.out_dir, "sweep.json"), "w") as fh:
        json.dump({"rows": rows}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return 0


def cmd_plot_lipdist(args):
    from . import face_model, style as style_mod

    _require_dir(args.basis, "basis directory")
    basis = face_model.load_basis(args.basis)
    series = []
    for path in args.motions:
        _require_file(path, "motion file")
        motion = style_mod.load_motion(path)
        dists = [
            face_model.lip_distance(
                basis, face_model.FaceParams(beta=motion.beta[i], pose=motion.pose[i])
            )
            for i in range(len(motion))
        ]
        series.append((os.path.basename(path), np.asarray(dists), motion.fps))
    csv_path = args.csv or os.path.splitext(args.out)[0] + ".csv"
    with open(csv_path, "w") as fh:
        fh.write("file,frame,lip_distance\n")
        for name, dists, _ in series:
            for i, d in enumerate(dists):
                fh.write(f"{name},{i},{d:.6f}\n")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 3.2))
    for name, dists, fps in series:
        ax.plot(np.arange(len(dists)) / fps, dists, label=name, lw=1.0)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("lip distance")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(args.out, dpi=110)
    plt.close(fig)
    print(f"plotted lip distance for {len(series)} series -> {args.out} (table: {csv_path})")
    return 0


def cmd_gen_render_set(args):
    from . import face_model, render

    _require_dir(args.basis, "basis directory")
    basis = face_model.load_basis(args.basis)
    dataset = render.build_toy_render_set(
        basis,
        n_frames=args.frames,
        seed=args.seed,
        image_size=args.image_size,
        texture_size=args.texture_size,
    )
    render.save_render_dataset(dataset, args.out)
    print(f"wrote render set: {len(dataset)} frames @ {args.image_size}px -> {args.out}")
    return 0


def cmd_train_render(args):
    from . import lsf, render

    _merge_defaults(
        args,
        _load_run_config(args.config),
        "train_render",
        {
            "dataset": None,
            "out": None,
            "iterations": 2000,
            "batch_size": 4,
            "learning_rate": 2e-4,
            "seed": 0,
            "texture_base": 16,
            "translate_base": 8,
        },
    )
    if not args.dataset or not args.out:
        raise ValueError("train-render needs --dataset and --out (flag or config)")
    _require_dir(args.dataset, "render dataset")
    dataset = render.load_render_dataset(args.dataset)
    image_size = dataset.targets.shape[-1]
    config = render.RenderConfig(
        image_size=image_size,
        texture_size=dataset.rgb_texture.data.shape[-1],
        texture_base=args.texture_base,
        translate_base=args.translate_base,
        seed=args.seed,
    )
    tex_net, tr_net = render.build_render_nets(config)
    phi = render.PerceptualExtractor(seed=config.perceptual_seed)
    settings = render.RenderTrainSettings(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        iterations=args.iterations,
        seed=args.seed,
    )
    report = render.train_render(tex_net, tr_net, dataset, settings, phi=phi)
    render.save_render_checkpoint(
        tex_net, tr_net, config, dataset.framing, args.out, iteration=args.iterations
    )
    if args.report:
        lsf.write_report(report, args.report)
    print(
        f"trained renderer on {len(dataset)} frames for {args.iterations} iterations: "
        f"loss {report.initial_loss:.4f} -> {report.final_loss:.4f} -> {args.out}"
    )
    return 0


def cmd_render(args):
    from . import face_model, render, style as style_mod

    _require_file(args.motion, "motion file")
    _require_file(args.portrait, "portrait image")
    _require_dir(args.basis, "basis directory")
    _require_file(args.checkpoint, "checkpoint")
    motion = style_mod.load_motion(args.motion)
    basis = face_model.load_basis(args.basis)
    portrait = render.load_png(args.portrait)
    tex_net, tr_net, config, framing, _ = render.load_render_checkpoint(args.checkpoint)
    if portrait.shape[1] != config.image_size or portrait.shape[2] != config.image_size:
        raise ValueError(
            f"portrait is {portrait.shape[2]}x{portrait.shape[1]} but the checkpoint "
            f"was trained at {config.image_size}x{config.image_size}"
        )
    paths = render.render_sequence(
        motion,
        basis,
        portrait,
        tex_net,
        tr_net,
        args.out_dir,
        framing=framing,
        texture_size=config.texture_size,
    )
    print(f"rendered {len(paths)} frames -> {args.out_dir}")
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="stylefuse", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("gen-basis", help="generate the synthetic face basis")
    q.add_argument("out")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--vertices", type=int, default=1200)
    q.set_defaults(func=cmd_gen_basis)

    q = sub.add_parser("build-corpus", help="generate a synthetic audio/motion corpus")
    q.add_argument("--out", required=True)
    q.add_argument("--scales", default="0.5,1.0,2.0", help="comma list for uniform specs")
    q.add_argument("--specs", help="JSON file with explicit generator specs")
    q.add_argument("--clips-per-spec", type=int, default=8)
    q.add_argument("--duration", type=float, default=10.0)
    q.add_argument("--holdout", default="", help="comma list of spec indices tagged as test")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--feature-seed", type=int, default=0)
    q.add_argument("--save-audio", action="store_true")
    q.set_defaults(func=cmd_build_corpus)

    q = sub.add_parser("extract-style", help="motion file -> 135-dim style code")
    q.add_argument("motion")
    q.add_argument("--out")
    q.set_defaults(func=cmd_extract_style)

    q = sub.add_parser("stats", help="observation statistics of a motion file")
    q.add_argument("motion")
    q.add_argument("--out")
    q.set_defaults(func=cmd_stats)

    q = sub.add_parser("project-styles", help="2-D projection of style codes")
    q.add_argument("inputs", nargs="*", help="style .json or motion files")
    q.add_argument("--corpus", help="project every clip of a corpus directory")
    q.add_argument("--out", required=True, help="output CSV")
    q.add_argument("--plot", help="optional scatter PNG")
    q.set_defaults(func=cmd_project_styles)

    q = sub.add_parser("train-lsf", help="train the audio->motion model on a corpus")
    q.add_argument("--corpus")
    q.add_argument("--out")
    q.add_argument("--config")
    q.add_argument("--iterations", type=int)
    q.add_argument("--batch-size", type=int)
    q.add_argument("--learning-rate", type=float)
    q.add_argument("--stride", type=int)
    q.add_argument("--seed", type=int)
    q.add_argument("--latent-dim", type=int)
    q.add_argument("--dropout", type=float)
    q.add_argument("--split")
    q.add_argument("--report", help="write per-iteration loss CSV")
    q.set_defaults(func=cmd_train_lsf)

    q = sub.add_parser("synthesize", help="audio + style -> motion series")
    q.add_argument("audio", help=".wav or a feature container")
    q.add_argument("style", help="style .json or a motion file to mimic")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--config")
    q.add_argument("--stride", type=int)
    q.add_argument("--blend", choices=["crossfade", "overlap_mean"])
    q.add_argument("--feature-seed", type=int)
    q.set_defaults(func=cmd_synthesize)

    q = sub.add_parser("interpolate", help="synthesize along a style interpolation sweep")
    q.add_argument("audio")
    q.add_argument("--style-a", required=True)
    q.add_argument("--style-b", required=True)
    q.add_argument("--steps", type=int, default=5)
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--out-dir", required=True)
    q.add_argument("--stride", type=int, default=16)
    q.add_argument("--blend", choices=["crossfade", "overlap_mean"], default="crossfade")
    q.add_argument("--feature-seed", type=int, default=0)
    q.set_defaults(func=cmd_interpolate)

    q = sub.add_parser("plot-lipdist", help="plot lip distance over time")
    q.add_argument("motions", nargs="+")
    q.add_argument("--basis", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--csv")
    q.set_defaults(func=cmd_plot_lipdist)

    q = sub.add_parser("gen-render-set", help="build a toy deferred-rendering dataset")
    q.add_argument("--basis", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--frames", type=int, default=16)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--image-size", type=int, default=224)
    q.add_argument("--texture-size", type=int, default=64)
    q.set_defaults(func=cmd_gen_render_set)

    q = sub.add_parser("train-render", help="train the deferred neural renderer")
    q.add_argument("--dataset")
    q.add_argument("--out")
    q.add_argument("--config")
    q.add_argument("--iterations", type=int)
    q.add_argument("--batch-size", type=int)
    q.add_argument("--learning-rate", type=float)
    q.add_argument("--seed", type=int)
    q.add_argument("--texture-base", type=int)
    q.add_argument("--translate-base", type=int)
    q.add_argument("--report")
    q.set_defaults(func=cmd_train_render)

    q = sub.add_parser("render", help="motion + portrait -> frame PNGs")
    q.add_argument("motion")
    q.add_argument("--portrait", required=True)
    q.add_argument("--basis", required=True)
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--out-dir", required=True)
    q.set_defaults(func=cmd_render)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single-line error contract
        msg = str(exc).replace("\n", " ").strip() or exc.__class__.__name__
        print(f"error: {msg}", file=sys.stderr)
        return 2


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
