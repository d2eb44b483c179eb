"""Exact coarse/fine-graining of the H^{2|2} model on the Dyson hierarchical lattice.

Modules: ``hier_graph`` (lattice and wired balls), ``schrodinger`` (H, G and
the u-field), ``samplers`` (Laplace oracle, Metropolis u-sampler, RNG
streams), ``graining`` (pair coarse/fine-graining), ``cascade``
(fine-graining coupling), ``stats`` (measure and tests), ``verify``,
``io``, ``config`` and ``cli``.
"""

from .cascade import CascadeRealization, check_invariants, grow_to, init_root
from .graining import coarse_grain_pair, fine_grain_G, fine_grain_pair
from .hier_graph import HierParams, WeightedGraph, build_level_graph
from .reports import TestReport
from .samplers import RngStream
from .schrodinger import SchrodingerState
from .stats import measure_density

__version__ = "0.1.0"

__all__ = [
    "CascadeRealization", "HierParams", "RngStream", "SchrodingerState", "TestReport",
    "WeightedGraph", "build_level_graph", "check_invariants", "coarse_grain_pair",
    "fine_grain_G", "fine_grain_pair", "grow_to", "init_root", "measure_density",
]
