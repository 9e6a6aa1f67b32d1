import numpy as np
import pytest

from contactsafe.screening import ScreeningConfig, collect_samples
from contactsafe.systems import make_system, system_names


@pytest.fixture(scope="session")
def models():
    """One shared instance of every benchmark system (treated read-only)."""
    return {name: make_system(name) for name in system_names()}


@pytest.fixture(scope="session")
def samples_cache(models):
    """Lazily collected screening samples at each system's default kappa.

    Several tests need the same boundary-band statistics (delta tables,
    robust-margin selection); collecting them once keeps the suite fast.
    Returns a getter: name -> (samples, fail_rate).
    """
    cache = {}

    def get(name):
        if name not in cache:
            model = models[name]
            cfg = ScreeningConfig(horizon=int(model.params["horizon"]), seed=0)
            cache[name] = collect_samples(model, model.default_kappa, cfg)
        return cache[name]

    return get


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
