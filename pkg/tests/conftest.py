import numpy as np
import pytest

from faceedit.edits import EditOptions, recover
from faceedit.geometry import make_sample_model
from faceedit.sampledata import make_portrait


@pytest.fixture(scope="session")
def model():
    return make_sample_model()


@pytest.fixture(scope="session")
def portraits(model):
    """Portrait fixtures keyed by name; generated on first use."""
    cache = {}

    def get(name):
        if name not in cache:
            if name.startswith("p"):
                cache[name] = make_portrait(model, seed=int(name[1:]))
            elif name == "hairy":
                cache[name] = make_portrait(model, seed=5, hair=True)
            elif name == "nose_ref":
                cache[name] = make_portrait(model, seed=2, nose_detail=True)
            elif name == "rot_ref":
                cache[name] = make_portrait(model, seed=2, yaw_offset_deg=5.0)
            else:
                raise KeyError(name)
        return cache[name]

    return get


@pytest.fixture(scope="session")
def recovered(model, portraits):
    """Recovered representations keyed by portrait name (recovery is slow)."""
    cache = {}

    def get(name):
        if name not in cache:
            if name == "recolored1":
                base = portraits("p1")
                img = np.clip(base.image * np.array([1.12, 0.97, 0.93]), 0, 1)
                cache[name] = recover(img, base.landmarks, model)
            else:
                p = portraits(name)
                cache[name] = recover(p.image, p.landmarks, model)
        return cache[name]

    return get


@pytest.fixture()
def identity_opts():
    """Options under which edits with the recovered rig reproduce the input."""
    return EditOptions(hair_bright_bias=1.0, background_mix=1.0)
