import numpy as np
import pytest

from dfnpart import fixtures
from dfnpart.geometry import (
    DFN,
    Fracture,
    GeneratorSpec,
    GeometryError,
    build_dfn,
    dfn_from_dict,
    dfn_to_dict,
    generate_dfn,
    intersect_fractures,
    load_dfn,
    save_dfn,
)


def unit_square(fid, z=0.0):
    return Fracture.from_vertices(
        fid, np.array([[0, 0, z], [1, 0, z], [1, 1, z], [0, 1, z]], float)
    )


def test_two_squares_trace():
    dfn = fixtures.two_orthogonal_squares()
    assert dfn.n_traces == 1
    tr = dfn.traces[0]
    assert tr.it_pair == (1, 2)
    assert tr.length() == pytest.approx(1.0, rel=1e-12)
    assert not dfn.cross_points


def test_parallel_fractures_do_not_intersect():
    f1, f2 = unit_square(1, 0.0), unit_square(2, 0.5)
    assert intersect_fractures(f1, f2, 1e-12) is None


def test_four_fractures_maps():
    dfn = fixtures.four_fractures()
    pairs = {t.id: t.it_pair for t in dfn.traces}
    assert pairs[1] == (1, 2) and pairs[2] == (1, 3)
    assert pairs[3] == (2, 3) and pairs[4] == (1, 4)
    (cp,) = dfn.cross_points
    assert cp.icp_triple == (1, 2, 3)
    assert np.allclose(cp.point, 0.0)


def test_frac6_worked_example():
    dfn = fixtures.frac6()
    assert dfn.n_fractures == 6 and dfn.n_traces == 6
    pairs = {t.id: t.it_pair for t in dfn.traces}
    assert pairs[2] == (2, 3) and pairs[4] == (2, 6)
    (cp,) = dfn.cross_points
    assert cp.icp_triple == (2, 3, 6)
    assert sorted(cp.incident_traces) == [2, 4, 5]


def test_frac6_bundled_file_roundtrip():
    dfn = fixtures.load_frac6()
    ref = fixtures.frac6()
    assert dfn.n_traces == ref.n_traces
    assert {t.id: t.it_pair for t in dfn.traces} == {
        t.id: t.it_pair for t in ref.traces
    }


def test_noncoplanar_vertices_rejected():
    bad = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0.3], [0, 1, 0]], float)
    with pytest.raises(GeometryError):
        Fracture.from_vertices(1, bad)


def test_nonconvex_polygon_rejected():
    bad = np.array(
        [[0, 0, 0], [2, 0, 0], [2, 2, 0], [1, 0.5, 0], [0, 2, 0]], float
    )
    with pytest.raises(GeometryError):
        Fracture.from_vertices(1, bad)


def test_generator_deterministic():
    spec = GeneratorSpec(n_fractures=10)
    a = generate_dfn(spec, seed=7)
    b = generate_dfn(spec, seed=7)
    assert a.n_traces == b.n_traces
    for fa, fb in zip(a.fractures, b.fractures):
        assert np.allclose(fa.vertices, fb.vertices)


def test_save_load_roundtrip(tmp_path):
    dfn = generate_dfn(GeneratorSpec(n_fractures=8), seed=2)
    path = tmp_path / "dfn.json"
    save_dfn(dfn, path)
    back = load_dfn(path)
    assert back.n_fractures == dfn.n_fractures
    assert {t.id: t.it_pair for t in back.traces} == {
        t.id: t.it_pair for t in dfn.traces
    }
    again = dfn_from_dict(dfn_to_dict(dfn))
    assert again.n_traces == dfn.n_traces


def test_trace_discovery_order_lexicographic():
    dfn = generate_dfn(GeneratorSpec(n_fractures=10), seed=4)
    pairs = [t.it_pair for t in dfn.traces]
    assert pairs == sorted(pairs)
    assert all(r < s for r, s in pairs)


def test_build_dfn_validates():
    dfn = build_dfn([unit_square(1)])
    assert isinstance(dfn, DFN) and dfn.n_traces == 0
