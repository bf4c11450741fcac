import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

torch.set_num_threads(1)

settings.register_profile(
    "desk",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("desk")


@pytest.fixture(scope="session")
def small_basis():
    from stylefuse import face_model

    return face_model.generate_synthetic_basis(seed=0, n_vertices=400)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """Two style specs x two clips of 4 s, written to disk with audio."""
    from stylefuse import data

    out = tmp_path_factory.mktemp("corpus")
    specs = [
        data.StyleGeneratorSpec.uniform(0.5, seed=11),
        data.StyleGeneratorSpec.uniform(2.0, seed=22),
    ]
    clips, manifest = data.build_corpus(
        specs, clips_per_spec=2, duration=4.0, out_dir=str(out), save_audio=True
    )
    return {"dir": out, "clips": clips, "manifest": manifest, "specs": specs}


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
