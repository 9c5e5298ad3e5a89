import numpy as np
import pytest
from hypothesis import settings

from confgate.core import RngStream
from confgate.data import generate_splits
from confgate.model import MlpClassifier, calibrate, train

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def blob_splits():
    per = {"train": 150, "val": 60, "test": 60}
    return generate_splits(3, 8, per, 0.06, RngStream(123))


@pytest.fixture(scope="session")
def blob_model(blob_splits):
    tr = blob_splits["train"]
    model = MlpClassifier.init([8, 16, 3], np.random.default_rng(0))
    model, _ = train(model, tr.X, tr.y, epochs=15, lr=0.2, rng=np.random.default_rng(1))
    val = blob_splits["val"]
    return model, calibrate(model.logits_batch(val.X), val.y)
