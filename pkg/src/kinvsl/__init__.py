"""Invariance of Sturm-Liouville operators under weighted composition
maps (Kf)(x) = A(x) f(phi(x)): coefficient checks, endpoint analysis,
invariant boundary conditions and their spectral and abstract
counterparts.

Submodules are imported on demand so that ``kinvsl.cli`` can fix thread
limits before numpy is loaded.
"""

__version__ = "0.1.0"

__all__ = ["funcalg", "ktransform", "schroeder", "slcore", "extensions", "lgtransform",
           "spectral", "bkvglab", "gallery", "cli"]
