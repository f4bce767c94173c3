import os

# Must precede the first numpy import: single-threaded BLAS keeps summation
# orders fixed (byte-reproducible runs) and avoids worker oversubscription.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np
import pytest

from leobeam import config as config_mod


@pytest.fixture
def tiny_config():
    """Small scene for fast unit tests (2 planes x 3 sats, 6 UEs, 30 snapshots)."""
    cfg = config_mod.RunConfig()
    cfg.constellation.num_planes = 2
    cfg.constellation.sats_per_plane = 3
    cfg.constellation.plane_altitudes_km = [1015.0, 1325.0]
    cfg.constellation.num_snapshots = 30
    cfg.constellation.sim_duration_s = 7200.0
    cfg.ue.count = 6
    cfg.fl.rounds = 2
    cfg.fl.local_epochs = 3
    cfg.fl.batch_size = 32
    cfg.fl.n_workers = 0
    cfg.validate()
    return cfg


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
