import numpy as np
import pytest

from osls.simulate import ShiftSpec, ring_config


def easy_config(k=3, *, seed=0, shift=None, r=1.0, n=5000, n_ood=2500, rho_s=0.7,
                separation=5.0, temperature=1.0):
    """Well-separated oracle scenario: ID scores saturate near {0, 1}."""
    return ring_config(
        k,
        radius=separation,
        scale=1.0,
        rho_s=rho_s,
        n_source=n,
        n_target=n,
        n_ood_ref=n_ood,
        shift=shift or ShiftSpec.none(),
        r=r,
        seed=seed,
        temperature=temperature,
    )


def overlap_config(k=5, *, seed=0, shift=None, r=1.0, n=10_000, n_ood=5000, rho_s=0.7,
                   separation=2.2):
    """Overlapping classes: classifier outputs stay informative but soft."""
    return ring_config(
        k,
        radius=separation,
        scale=1.0,
        rho_s=rho_s,
        n_source=n,
        n_target=n,
        n_ood_ref=n_ood,
        shift=shift or ShiftSpec.none(),
        r=r,
        seed=seed,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
