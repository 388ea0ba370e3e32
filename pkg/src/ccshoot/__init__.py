"""Numerical shooting for a Dirichlet problem of concave-convex type.

Modules: :mod:`odecore` (first-order system and integrator),
:mod:`shooting` (four-colour root localisation), :mod:`continuation`
(branch tracing in lambda), :mod:`analysis` (energy, thresholds and
solution checks) and :mod:`reporting` (config, output files, CLI).
"""
from __future__ import annotations

__version__ = "0.1.0"
