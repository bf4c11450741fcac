"""End-to-end exercise of every CLI subcommand on a desk-sized pipeline."""

import json

import numpy as np
import pytest

from stylefuse import cli, lsf, render, style


def run(*argv):
    return cli.main(list(argv))


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Run the full command chain once; individual tests inspect the artifacts."""
    root = tmp_path_factory.mktemp("cli")
    p = {
        "root": root,
        "basis": root / "basis",
        "corpus": root / "corpus",
        "lsf_ckpt": root / "lsf.ckpt",
        "lsf_report": root / "lsf_report.csv",
        "motion_out": root / "synth.motion",
        "interp_dir": root / "interp",
        "style_json": root / "ref.style.json",
        "stats_json": root / "stats.json",
        "proj_csv": root / "proj.csv",
        "proj_png": root / "proj.png",
        "lip_png": root / "lip.png",
        "render_set": root / "render_set",
        "render_ckpt": root / "render.ckpt",
        "frames_dir": root / "frames",
        "config": root / "run.json",
    }
    assert run("gen-basis", str(p["basis"]), "--seed", "1", "--vertices", "300") == 0
    assert (
        run(
            "build-corpus",
            "--out", str(p["corpus"]),
            "--scales", "0.5,2.0",
            "--clips-per-spec", "2",
            "--duration", "4",
            "--save-audio",
        )
        == 0
    )
    cfg = {
        "seed": 7,
        "paths": {"corpus": str(p["corpus"])},
        "train_lsf": {
            "out": str(p["lsf_ckpt"]),
            "iterations": 4,
            "batch_size": 2,
            "latent_dim": 8,
            "stride": 64,
        },
        "synthesize": {"stride": 8},
    }
    p["config"].write_text(json.dumps(cfg))
    assert (
        run("train-lsf", "--config", str(p["config"]), "--report", str(p["lsf_report"])) == 0
    )
    p["clip_motion"] = p["corpus"] / "clip_00_000" / "motion.series"
    p["clip_wav"] = p["corpus"] / "clip_00_000" / "audio.wav"
    p["clip_style"] = p["corpus"] / "clip_01_000" / "style.json"
    return p


def test_gen_basis_and_corpus_layout(pipeline):
    assert (pipeline["basis"] / "header.json").is_file() or any(pipeline["basis"].iterdir())
    manifest = json.loads((pipeline["corpus"] / "manifest.json").read_text())
    assert manifest["format"] == "stylefuse-corpus"
    assert len(manifest["clips"]) == 4
    assert pipeline["clip_wav"].is_file()


def test_extract_style_and_stats(pipeline, capsys):
    assert run("extract-style", str(pipeline["clip_motion"]),
               "--out", str(pipeline["style_json"])) == 0
    out = capsys.readouterr().out
    assert "|sigma_beta|=" in out
    code = style.load_style(pipeline["style_json"])
    assert code.values.shape == (135,)

    assert run("stats", str(pipeline["clip_motion"]), "--out", str(pipeline["stats_json"])) == 0
    out = capsys.readouterr().out
    assert "100 frames @ 25 fps" in out
    stats = json.loads(pipeline["stats_json"].read_text())
    assert len(stats["std_beta"]) == 64 and len(stats["std_dpose"]) == 7


def test_project_styles_from_corpus(pipeline):
    assert run("project-styles", "--corpus", str(pipeline["corpus"]),
               "--out", str(pipeline["proj_csv"]), "--plot", str(pipeline["proj_png"])) == 0
    rows = pipeline["proj_csv"].read_text().strip().splitlines()
    assert rows[0] == "id,x,y,group"
    assert len(rows) == 5
    assert pipeline["proj_png"].stat().st_size > 0


def test_train_lsf_uses_config_lookup_chain(pipeline):
    # corpus came from cfg["paths"], out from the section, seed from the top level
    model, iteration = lsf.load_lsf_checkpoint(pipeline["lsf_ckpt"])
    assert iteration == 4
    assert model.config.seed == 7
    assert model.config.latent_dim == 8
    report_rows = pipeline["lsf_report"].read_text().strip().splitlines()
    assert report_rows[0] == "iteration,loss"
    assert len(report_rows) == 5


def test_synthesize_uses_config_stride(pipeline, capsys):
    assert (
        run(
            "synthesize",
            str(pipeline["clip_wav"]),
            str(pipeline["clip_style"]),
            "--checkpoint", str(pipeline["lsf_ckpt"]),
            "--out", str(pipeline["motion_out"]),
            "--config", str(pipeline["config"]),
        )
        == 0
    )
    out = capsys.readouterr().out
    assert "synthesized" in out and "@ 25 fps" in out
    motion = style.load_motion(pipeline["motion_out"])
    # 4 s of audio -> 200 feature frames -> 92 motion frames after edge trim
    assert len(motion) == 92


def test_synthesize_accepts_motion_as_style_reference(pipeline, tmp_path):
    out = tmp_path / "m.motion"
    assert (
        run(
            "synthesize",
            str(pipeline["clip_wav"]),
            str(pipeline["clip_motion"]),
            "--checkpoint", str(pipeline["lsf_ckpt"]),
            "--out", str(out),
            "--blend", "overlap_mean",
            "--stride", "16",
        )
        == 0
    )
    assert style.load_motion(out).beta.shape == (92, 64)


def test_interpolate_sweep(pipeline, capsys):
    assert (
        run(
            "interpolate",
            str(pipeline["clip_wav"]),
            "--style-a", str(pipeline["clip_style"]),
            "--style-b", str(pipeline["clip_motion"]),
            "--steps", "3",
            "--checkpoint", str(pipeline["lsf_ckpt"]),
            "--out-dir", str(pipeline["interp_dir"]),
        )
        == 0
    )
    out = capsys.readouterr().out
    assert out.count("lambda=") == 3
    sweep = json.loads((pipeline["interp_dir"] / "sweep.json").read_text())
    assert [r["lambda"] for r in sweep["rows"]] == [0.0, 0.5, 1.0]
    assert (pipeline["interp_dir"] / "interp_02.motion").is_file()


def test_plot_lipdist_writes_plot_and_table(pipeline, capsys):
    assert run("plot-lipdist", str(pipeline["clip_motion"]),
               "--basis", str(pipeline["basis"]), "--out", str(pipeline["lip_png"])) == 0
    out = capsys.readouterr().out
    csv_path = pipeline["lip_png"].with_suffix(".csv")
    assert f"(table: {csv_path})" in out
    rows = csv_path.read_text().strip().splitlines()
    assert rows[0] == "file,frame,lip_distance"
    assert len(rows) == 101  # header + one row per motion frame


def test_render_chain(pipeline, capsys):
    assert (
        run(
            "gen-render-set",
            "--basis", str(pipeline["basis"]),
            "--out", str(pipeline["render_set"]),
            "--frames", "3",
            "--image-size", "32",
            "--texture-size", "16",
        )
        == 0
    )
    assert (
        run(
            "train-render",
            "--dataset", str(pipeline["render_set"]),
            "--out", str(pipeline["render_ckpt"]),
            "--iterations", "3",
            "--batch-size", "2",
            "--texture-base", "4",
            "--translate-base", "4",
        )
        == 0
    )
    full = style.load_motion(pipeline["clip_motion"])
    short = style.MotionSeries(full.beta[:5], full.pose[:5], fps=full.fps)
    short_path = pipeline["root"] / "short.motion"
    style.save_motion(short, short_path)
    assert (
        run(
            "render",
            str(short_path),
            "--portrait", str(pipeline["render_set"] / "portrait.png"),
            "--basis", str(pipeline["basis"]),
            "--checkpoint", str(pipeline["render_ckpt"]),
            "--out-dir", str(pipeline["frames_dir"]),
        )
        == 0
    )
    out = capsys.readouterr().out
    assert "rendered 5 frames" in out
    index = json.loads((pipeline["frames_dir"] / "index.json").read_text())
    assert len(index["frames"]) == 5
    frame = render.load_png(pipeline["frames_dir"] / "frame_0000.png")
    assert frame.shape == (3, 32, 32)


def test_render_rejects_portrait_size_mismatch(pipeline, tmp_path, capsys):
    big = np.zeros((3, 64, 64), dtype=np.float64)
    render.save_png(big, tmp_path / "big.png")
    code = run(
        "render",
        str(pipeline["root"] / "short.motion"),
        "--portrait", str(tmp_path / "big.png"),
        "--basis", str(pipeline["basis"]),
        "--checkpoint", str(pipeline["render_ckpt"]),
        "--out-dir", str(tmp_path / "frames"),
    )
    err = capsys.readouterr().err
    assert code == 2
    assert err.startswith("error:") and "trained at 32x32" in err


# --- error contract --------------------------------------------------------------

@pytest.mark.parametrize(
    "argv",
    [
        ("extract-style", "/nonexistent/motion.series"),
        ("stats", "/nonexistent/motion.series"),
        ("train-lsf", "--corpus", "/nonexistent", "--out", "/tmp/x.ckpt"),
        ("train-lsf",),  # corpus/out missing everywhere
        ("synthesize", "/nonexistent.wav", "/nonexistent.json",
         "--checkpoint", "/nonexistent.ckpt", "--out", "/tmp/x.motion"),
        ("plot-lipdist", "/nonexistent.motion", "--basis", "/nonexistent", "--out", "/tmp/x.png"),
        ("train-render", "--dataset", "/nonexistent", "--out", "/tmp/x.ckpt"),
    ],
)
def test_failures_exit_2_with_single_error_line(argv, capsys):
    assert run(*argv) == 2
    err = capsys.readouterr().err
    lines = err.strip().splitlines()
    assert len(lines) == 1
    assert lines[0].startswith("error: ")


def test_bad_config_json(pipeline, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("train-lsf", "--config", str(bad)) == 2
    assert "bad JSON" in capsys.readouterr().err


def test_interpolate_rejects_single_step(pipeline, capsys):
    assert (
        run(
            "interpolate",
            str(pipeline["clip_wav"]),
            "--style-a", str(pipeline["clip_style"]),
            "--style-b", str(pipeline["clip_style"]),
            "--steps", "1",
            "--checkpoint", str(pipeline["lsf_ckpt"]),
            "--out-dir", str(pipeline["root"] / "unused"),
        )
        == 2
    )
    assert "2 interpolation steps" in capsys.readouterr().err
