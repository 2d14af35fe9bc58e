"""Deterministic small networks used in tests and docs.

Random rectangle networks almost never contain exact triple intersections,
so cross points are exercised through hand-built fixtures with exact shared
points.  Trace ids are assigned explicitly to match the documented index
maps (geometric discovery order is arbitrary).
"""

from __future__ import annotations

import importlib.resources

import numpy as np

from .geometry import DFN, CrossPoint, Fracture, Trace, build_dfn, load_dfn

__all__ = ["frac6", "four_fractures", "two_orthogonal_squares", "frac6_path"]


def _rect(fid, p0, p1, p2, p3):
    return Fracture.from_vertices(fid, np.array([p0, p1, p2, p3], dtype=float))


def two_orthogonal_squares() -> DFN:
    """Two congruent unit squares crossing through their midlines."""
    f1 = _rect(1, (-0.5, -0.5, 0), (0.5, -0.5, 0), (0.5, 0.5, 0), (-0.5, 0.5, 0))
    f2 = _rect(2, (0, -0.5, -0.5), (0, 0.5, -0.5), (0, 0.5, 0.5), (0, -0.5, 0.5))
    return build_dfn([f1, f2])


def four_fractures() -> DFN:
    """Four fractures with IT(1)=(1,2), IT(2)=(1,3), IT(3)=(2,3), IT(4)=(1,4)
    and one cross point ICP(1)=(1,2,3) where T1, T2, T3 meet."""
    f1 = _rect(1, (-1, -1, 0), (1, -1, 0), (1, 1, 0), (-1, 1, 0))
    f2 = _rect(2, (0, -1, -1), (0, 1, -1), (0, 1, 1), (0, -1, 1))
    f3 = _rect(3, (-1, 0, -1), (1, 0, -1), (1, 0, 1), (-1, 0, 1))
    f4 = _rect(4, (0.5, 0.2, -0.5), (0.5, 0.8, -0.5), (0.5, 0.8, 0.5), (0.5, 0.2, 0.5))
    traces = [
        Trace(1, np.array([[0.0, -1, 0], [0.0, 1, 0]]), (1, 2)),
        Trace(2, np.array([[-1, 0.0, 0], [1, 0.0, 0]]), (1, 3)),
        Trace(3, np.array([[0.0, 0, -1], [0.0, 0, 1]]), (2, 3)),
        Trace(4, np.array([[0.5, 0.2, 0], [0.5, 0.8, 0]]), (1, 4)),
    ]
    cps = [CrossPoint(1, np.zeros(3), (1, 2, 3), (1, 2, 3))]
    return build_dfn([f1, f2, f3, f4], traces=traces, cross_points=cps)


def frac6() -> DFN:
    """Six fractures, six traces, one cross point.

    IT(1)=(1,2), IT(2)=(2,3), IT(3)=(1,4), IT(4)=(2,6), IT(5)=(3,6),
    IT(6)=(5,6); ICP(1)=(2,3,6) at the origin where T2, T4 and T5 meet.
    With processes P1={F3,F5,F6}, P2={F1,F2,F4} the cut traces are T2 and
    T4, owned by the process of F2.
    """
    f1 = _rect(1, (0.5, 0.2, -0.5), (0.5, 0.9, -0.5), (0.5, 0.9, 0.5), (0.5, 0.2, 0.5))
    f2 = _rect(2, (-1, -1, 0), (1, -1, 0), (1, 1, 0), (-1, 1, 0))
    f3 = _rect(3, (0, -1, -1), (0, 1, -1), (0, 1, 1), (0, -1, 1))
    f4 = _rect(4, (0.3, 0.5, 0.1), (0.7, 0.5, 0.1), (0.7, 0.5, 0.6), (0.3, 0.5, 0.6))
    f5 = _rect(5, (-0.9, -0.4, -0.5), (-0.2, -0.4, -0.5), (-0.2, 0.4, -0.5), (-0.9, 0.4, -0.5))
    f6 = _rect(6, (-1, 0, -1), (1, 0, -1), (1, 0, 1), (-1, 0, 1))
    traces = [
        Trace(1, np.array([[0.5, 0.2, 0.0], [0.5, 0.9, 0.0]]), (1, 2)),
        Trace(2, np.array([[0.0, -1, 0], [0.0, 1, 0]]), (2, 3)),
        Trace(3, np.array([[0.5, 0.5, 0.1], [0.5, 0.5, 0.5]]), (1, 4)),
        Trace(4, np.array([[-1, 0.0, 0], [1, 0.0, 0]]), (2, 6)),
        Trace(5, np.array([[0.0, 0, -1], [0.0, 0, 1]]), (3, 6)),
        Trace(6, np.array([[-0.9, 0.0, -0.5], [-0.2, 0.0, -0.5]]), (5, 6)),
    ]
    cps = [CrossPoint(1, np.zeros(3), (2, 3, 6), (2, 4, 5))]
    return build_dfn([f1, f2, f3, f4, f5, f6], traces=traces, cross_points=cps)


FRAC6_PARTS = {1: 1, 2: 1, 3: 0, 4: 1, 5: 0, 6: 0}
"""Two-process fracture assignment used in the worked example: part 0 holds
F3, F5, F6 and part 1 holds F1, F2, F4 (cut traces T2 and T4)."""


def frac6_path():
    """Path of the bundled frac6 JSON fixture."""
    return importlib.resources.files("dfnpart.data") / "frac6.json"


def load_frac6() -> DFN:
    return load_dfn(frac6_path())
