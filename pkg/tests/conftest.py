import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ladderlab.config import ExperimentConfig
from ladderlab.pipeline import Pipeline

DESK_SEED = 42


@pytest.fixture(scope="session")
def desk_pipeline():
    """One fully trained desk pipeline on the 8x8 digits, shared by the
    expensive tests (classifier, generator, svm bank all cached inside)."""
    cfg = ExperimentConfig({"data.kind": "digits8", "seeds.root": str(DESK_SEED)})
    pipe = Pipeline(cfg)
    pipe.vanilla()
    pipe.generator()
    return pipe


@pytest.fixture(scope="session")
def digits(desk_pipeline):
    return desk_pipeline.datasets()
