"""Kernel dispatch: compiled Cython kernels when built, numpy otherwise.

Set ``GRIDMARKET_PURE_PYTHON=1`` to force the numpy implementations.
"""
import os

if os.environ.get("GRIDMARKET_PURE_PYTHON"):
    from gridmarket._kernels_py import dual_ratio_test, first_hits, polygon_vertices, ratio_test

    BACKEND = "python"
else:
    try:
        from gridmarket._kernels import dual_ratio_test, first_hits, polygon_vertices, ratio_test

        BACKEND = "cython"
    except ImportError:
        from gridmarket._kernels_py import dual_ratio_test, first_hits, polygon_vertices, ratio_test

        BACKEND = "python"

__all__ = ["BACKEND", "dual_ratio_test", "first_hits", "polygon_vertices", "ratio_test"]
