"""Shared fixtures: tiny trained bundles reused across harness/CLI tests."""

import numpy as np
import pytest

from neuralofdm.trainer import TrainConfig, train_end_to_end


@pytest.fixture(scope="session")
def tiny_deepofdm_bundle():
    """A 6-step pilotless DeepOFDM transceiver on a 64x14 grid.

    Far too short to perform well; exists to exercise plumbing (sweeps,
    ablations, persistence, CLI) at realistic shapes.
    """
    cfg = TrainConfig(m=2, mode="deepofdm", pilots="0P", rx_input="none",
                      n_s=64, n_t=14, batch_size=4, n_steps=6, mod_width=8,
                      rx_width=12, channel_pool=8, seed=21)
    bundle, history = train_end_to_end(cfg)
    return bundle, history


@pytest.fixture(scope="session")
def tiny_csi_bundle():
    """QAM + neural receiver trained with the true channel grid as input."""
    cfg = TrainConfig(m=2, mode="qam", pilots="1P", rx_input="pilots+csi",
                      n_s=64, n_t=14, batch_size=4, n_steps=4, rx_width=12,
                      channel_pool=8, seed=22)
    bundle, _ = train_end_to_end(cfg)
    return bundle


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
