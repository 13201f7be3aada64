"""Random-matrix spectra toolkit: measures and transforms, free additive
convolution, ensemble sampling, eigensolvers, spiked-outlier prediction,
batch-size scaling fits, and local-law diagnostics."""

from . import analysis, eigs, ensembles, errors, fitting, freeconv, measures, outliers

__version__ = "0.1.0"

__all__ = [
    "analysis",
    "eigs",
    "ensembles",
    "errors",
    "fitting",
    "freeconv",
    "measures",
    "outliers",
    "__version__",
]
