import numpy as np
import pytest

from dfnpart import fixtures
from dfnpart.dgraph import (
    NodeLabel,
    build_mesh_dof_graph,
    build_pb,
    build_pg,
    build_pt,
    build_wb,
    build_wg,
    build_wt,
    read_graph_file,
    write_graph_file,
)
from dfnpart.geometry import GeneratorSpec, generate_dfn
from dfnpart.mesh import build_minimal_mesh, refine_uniform

ALL_BUILDERS = [build_pg, build_wg, build_pb, build_wb, build_pt, build_wt]


def build_all(dfn, mesh):
    counts = mesh.dof_counts
    out = []
    for b in ALL_BUILDERS:
        g = b(dfn) if b in (build_pg, build_pb, build_pt) else b(dfn, counts)
        out.append(g)
    out.append(build_mesh_dof_graph(mesh))
    return out


def test_all_builders_pass_check():
    dfn = generate_dfn(GeneratorSpec(n_fractures=10), seed=5)
    mesh = refine_uniform(build_minimal_mesh(dfn), 10)
    for g in build_all(dfn, mesh):
        g.check()  # symmetry, no loops, positive weights


def test_frac6_counts():
    dfn = fixtures.frac6()
    mesh = build_minimal_mesh(dfn)
    pg = build_pg(dfn)
    assert (pg.n_nodes, pg.n_edges) == (6, 6)
    pb = build_pb(dfn)
    assert (pb.n_nodes, pb.n_edges) == (12, 12)
    wt = build_wt(dfn, mesh.dof_counts)
    cp = wt.n_nodes - 1
    assert len(wt.neighbors(cp)) == 6
    assert all(w == 6 for w in wt.edge_weights_of(cp))
    assert wt.node_weights[cp] == 1


def test_parallel_trace_edges_merged():
    # Pg merges parallel traces into one edge with summed weight in Wg
    dfn = fixtures.frac6()
    mesh = build_minimal_mesh(dfn)
    pg = build_pg(dfn)
    for u in range(pg.n_nodes):
        nbrs = list(pg.neighbors(u))
        assert len(nbrs) == len(set(nbrs))
    wg = build_wg(dfn, mesh.dof_counts)
    # [F_r] weights: every fracture carries at least one Dof here
    assert all(w >= 1 for w in wg.node_weights)


def test_tripartite_equals_bipartite_without_cross_points():
    dfn = fixtures.two_orthogonal_squares()
    assert not dfn.cross_points
    pb, pt = build_pb(dfn), build_pt(dfn)
    assert pb.n_nodes == pt.n_nodes and pb.n_edges == pt.n_edges
    assert np.array_equal(pb.xadj, pt.xadj)
    for u in range(pb.n_nodes):
        assert sorted(pb.neighbors(u)) == sorted(pt.neighbors(u))


def test_mesh_dof_graph_is_free_nodes():
    dfn = fixtures.frac6()
    mesh = build_minimal_mesh(dfn)
    g = build_mesh_dof_graph(mesh)
    assert g.n_nodes == mesh.dof_counts.n_total
    assert all(lab[0] is NodeLabel.DOF for lab in g.node_labels)


def test_graph_file_roundtrip(tmp_path):
    dfn = fixtures.frac6()
    mesh = build_minimal_mesh(dfn)
    for g in build_all(dfn, mesh):
        path = tmp_path / f"{g.strategy_tag}.graph"
        write_graph_file(g, path)
        back = read_graph_file(path)
        assert back.n_nodes == g.n_nodes and back.n_edges == g.n_edges
        assert list(back.node_weights) == list(g.node_weights)
        for u in range(g.n_nodes):
            assert sorted(back.neighbors(u)) == sorted(g.neighbors(u))


def test_graph_file_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.graph"
    bad.write_text("3 1 011\n2 5\n1 5 9\n")  # inconsistent adjacency
    with pytest.raises(ValueError):
        read_graph_file(bad)
