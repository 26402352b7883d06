"""seqgp: sequential Gaussian-process inference.

Three scalable routes to streaming GP regression, each cross-checked
against the batch exact-GP oracle in :mod:`seqgp.exact`:

* :mod:`seqgp.features` + :mod:`seqgp.linear_filter` -- finite basis
  expansions (random Fourier features, Hilbert-space eigenbasis) filtered as
  Bayesian linear models, with static / random-walk / back-to-prior /
  general dynamics and Laplace handling of non-Gaussian likelihoods;
* :mod:`seqgp.markovian` -- kernels as LTI SDEs with exact irregular-step
  discretization, Kalman filtering, RTS smoothing, and a Kronecker
  space-time extension;
* :mod:`seqgp.sparse` -- recursive inducing-point updates and the
  information-form variational recursion.

:mod:`seqgp.ensemble` combines any bank of these models online by Bayesian
model averaging or stacking.  The ``seqgp`` command line (``seqgp run``,
``seqgp fit-exact``, ``seqgp check``) streams CSV data through a configured
model prequentially.
"""

from . import ensemble, exact, features, kernels, linear_filter, markovian, sparse
from .errors import (
    ConfigurationError,
    DataError,
    NumericalError,
    SeqgpError,
    ShapeError,
    UnsupportedKernelError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DataError",
    "NumericalError",
    "SeqgpError",
    "ShapeError",
    "UnsupportedKernelError",
    "ensemble",
    "exact",
    "features",
    "kernels",
    "linear_filter",
    "markovian",
    "sparse",
]
