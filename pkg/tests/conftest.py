import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from slat import degradations, image, pipeline, synthetic


@pytest.fixture(scope="session")
def six_phase():
    return synthetic.make_six_phase()


@pytest.fixture(scope="session")
def four_phase():
    return synthetic.make_four_phase()


@pytest.fixture(scope="session")
def pyramid():
    return synthetic.make_pyramid()


@pytest.fixture(scope="session")
def pyramid_run(pyramid, tmp_path_factory):
    """One full pipeline run on the degraded 321x481 pyramid image.

    Several tests reuse this (stage-1 output inspection, cache contract,
    re-threshold timing), so it is computed once per session.
    """
    img, truth = pyramid
    spec = degradations.DegradationSpec(noise="gaussian", noise_var=0.001, seed=21)
    degraded, mask = degradations.degrade(img, spec)
    outdir = tmp_path_factory.mktemp("pyramid")
    cache = str(outdir / "pyramid.gstar.slat")
    config = pipeline.PipelineConfig(lam=32.0, k=2, seed=0)
    seg, smoothed, stack, info = pipeline.stages_on_arrays(degraded, mask, config)
    image.save_raw(stack, cache)
    return {
        "clean": img,
        "truth": truth,
        "degraded": degraded,
        "mask": mask,
        "segmentation": seg,
        "smoothed": smoothed,
        "stack": stack,
        "info": info,
        "cache": cache,
    }


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
