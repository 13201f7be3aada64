import numpy as np
import pytest

from rmtkit.eigs import full_eigh
from rmtkit.ensembles import EnsembleSpec, sample


@pytest.fixture(scope="session")
def goe_eigs_by_n():
    """Seeded GOE spectra reused across statistical tests: values only."""
    out = {}
    for n, n_seeds in ((250, 10), (500, 10), (1000, 20)):
        out[n] = [full_eigh(sample(EnsembleSpec("goe", n, seed=s))).eigenvalues
                  for s in range(n_seeds)]
    return out
