"""Heat kernel estimates on metric measure graphs.

Subpackages: :mod:`hkelab.space` (graphs, balls, doubling), :mod:`hkelab.energy`
(Dirichlet forms and energy measures), :mod:`hkelab.spectral` (semigroups and
resolvents), :mod:`hkelab.cutoff` (cutoff functions), :mod:`hkelab.conditions`
(functional inequalities) and :mod:`hkelab.cli`.
"""
__version__ = "0.1.0"
