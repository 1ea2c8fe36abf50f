"""blkit: Brascamp-Lieb-type constants and their entropic duals, numerically.

Submodules
----------
measures      finite-alphabet / Gaussian carriers and information functionals
forward       forward inequality: alternating-maximization solver and duality checks
frbl          forward-reverse inequality on product alphabets (coupling programs)
special       Renyi/LPCB, SDPI, Shearer, hypercontractivity, transport checks
gaussian_opt  log-det matrix optimizations for the Gaussian reductions
properties    data-processing / tensorization / convexity falsification suites
cli           the ``blkit`` command-line entry point
"""

__version__ = "0.1.0"

from . import forward, frbl, gaussian_opt, measures, properties, special  # noqa: F401
from .measures import (  # noqa: F401
    CostFunction,
    DiscreteDistribution,
    DiscreteMeasure,
    GaussianChannel,
    GaussianMeasure,
    Kernel,
)
