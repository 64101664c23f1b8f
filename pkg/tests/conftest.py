import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for `import oracles`

from aquaclear import degradation as degrade
from aquaclear import network
from aquaclear import training as train  # noqa: E402

DESK_SEED = 42
DESK_PAIRS = 64
DESK_HOLDOUT = 16
DESK_SIZE = 64
DESK_STEPS = 500


@pytest.fixture(scope="session")
def desk_run():
    """The full desk-scale training run (seed 42, 64 pairs, 500 steps).

    Session-scoped: several tests and the learning acceptance criterion read
    the same run, so the few-minute training cost is paid once.
    """
    pairs = degrade.make_pairs(DESK_PAIRS, DESK_SIZE, seed=DESK_SEED)
    held = degrade.make_pairs(DESK_HOLDOUT, DESK_SIZE, seed=DESK_SEED,
                              start_index=DESK_PAIRS)
    cfg = train.TrainConfig(steps=DESK_STEPS, seed=DESK_SEED)
    start = time.time()
    weights, losses = train.train(cfg, pairs)
    elapsed = time.time() - start
    scores = train.evaluate_enhancement(weights, held)
    return {
        "weights": weights,
        "losses": losses,
        "scores": scores,
        "elapsed": elapsed,
        "train_pairs": pairs,
        "holdout_pairs": held,
        "config": cfg,
    }


@pytest.fixture()
def default_net():
    return network.default_network(seed=0)
