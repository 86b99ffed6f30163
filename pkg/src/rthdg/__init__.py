"""2D radiative-transfer solver suite.

Monolithic upwind DG, hybridizable DG (element-local condensation with a
skeleton GMRES solve), and HDG accelerated by a feed-forward surrogate that
maps an element's nodal optical coefficients to its in2out / in2mean
operators, plus the data-generation, training, and benchmarking pipeline.
"""

__version__ = "0.1.0"
