import numpy as np
import pytest

from immersion_forge import ambient as am


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def catalog_structures():
    """Extracted structures for every catalog entry (shared, read-only)."""
    out = {}
    for name in am.catalog_names():
        h = am.catalog_entry(name)
        out[name] = (h, am.extract_structure(h))
    return out
