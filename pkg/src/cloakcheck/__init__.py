"""Numerical checks of conductivity cloaking by singular diffeomorphisms.

Submodules: ``tensor_core`` (tensor fields, sigma/metric dictionary),
``transform`` (maps and push-forwards), ``radial_dtn`` (DtN spectra of
radial conductivities), ``fem2d`` (finite-element DtN on the disk),
``wos`` (walk-on-spheres estimates) and ``cli``.
"""
__version__ = "0.1.0"
