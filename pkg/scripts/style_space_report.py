#!/usr/bin/env python3
"""Study how the 135-dim style code responds to the motion generator knobs.

Sweeps the generator amplitude scale over a grid, measures the style-code
block norms of the realized clips, fits the amplitude->code-norm scaling law,
and writes a CSV, a scaling plot, and a 2-D projection of all codes colored
by scale.  The expression blocks (components 0-127) should scale linearly
with the amplitude knob; the pose block (128-134) follows the pose scale.
"""

import argparse
import os

import numpy as np

from stylefuse import data, style


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/style_report")
    ap.add_argument("--scales", default="0.25,0.5,0.75,1.0,1.5,2.0,3.0")
    ap.add_argument("--clips-per-scale", type=int, default=6)
    ap.add_argument("--duration", type=float, default=10.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    scales = [float(s) for s in args.scales.split(",")]
    rows, codes, groups = [], [], []
    for gi, scale in enumerate(scales):
        for rep in range(args.clips_per_scale):
            spec = data.StyleGeneratorSpec.uniform(
                scale, seed=args.seed + 1000 * gi + rep
            )
            clip = data.generate_clip(spec, duration=args.duration)
            code = clip.style
            codes.append(code)
            groups.append(gi)
            rows.append({
                "scale": scale,
                "rep": rep,
                "beta_norm": float(np.linalg.norm(code.beta_block)),
                "dbeta_norm": float(np.linalg.norm(code.dbeta_block)),
                "dpose_norm": float(np.linalg.norm(code.dpose_block)),
            })
        print(f"scale {scale:>5.2f}: "
              f"|sigma_beta| = {np.mean([r['beta_norm'] for r in rows if r['scale'] == scale]):.4f}")

    csv_path = os.path.join(args.out, "style_blocks.csv")
    with open(csv_path, "w") as fh:
        fh.write("scale,rep,beta_norm,dbeta_norm,dpose_norm\n")
        for r in rows:
            fh.write(f"{r['scale']},{r['rep']},{r['beta_norm']:.6f},"
                     f"{r['dbeta_norm']:.6f},{r['dpose_norm']:.6f}\n")

    # scaling law: log-log slope of mean block norm vs amplitude scale
    mean_beta = [np.mean([r["beta_norm"] for r in rows if r["scale"] == s]) for s in scales]
    slope = np.polyfit(np.log(scales), np.log(mean_beta), 1)[0]
    print(f"log-log slope of |sigma_beta| vs scale: {slope:.3f} (1.0 = linear scaling)")

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for key, label in (("beta_norm", "expression std block"),
                       ("dbeta_norm", "expression velocity block"),
                       ("dpose_norm", "pose velocity block")):
        means = [np.mean([r[key] for r in rows if r["scale"] == s]) for s in scales]
        axes[0].plot(scales, means, "o-", label=label, lw=1.2, ms=4)
    axes[0].set_xlabel("generator amplitude scale")
    axes[0].set_ylabel("style-code block norm")
    axes[0].set_xscale("log")
    axes[0].set_yscale("log")
    axes[0].legend(fontsize=8)
    axes[0].set_title(f"block norms vs amplitude (slope {slope:.2f})")

    coords = style.project_styles_2d(codes)
    sc = axes[1].scatter(coords[:, 0], coords[:, 1],
                         c=[scales[g] for g in groups], cmap="viridis", s=22)
    fig.colorbar(sc, ax=axes[1], label="amplitude scale")
    axes[1].set_title("style codes, 2-D projection")
    axes[1].set_xlabel("component 1")
    axes[1].set_ylabel("component 2")
    fig.tight_layout()
    plot_path = os.path.join(args.out, "style_space.png")
    fig.savefig(plot_path, dpi=120)
    print(f"wrote {csv_path} and {plot_path}")


if __name__ == "__main__":
    main()
