"""Network graphs in adjacency (CSR) format for partitioning.

Seven builders: the fracture graph (Pg/Wg), the fracture-trace bipartite
graph (Pb/Wb), the tripartite graph with cross points (Pt/Wt), and the
mesh Dof graph (MeshP).  All emit symmetric loop-free graphs with integer
weights >= 1, compatible with external partitioners via the standard
graph file format.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import DFN
from .mesh import DofCounts, NodeKind, PolyMesh

__all__ = [
    "NodeLabel",
    "DfnGraph",
    "build_pg",
    "build_wg",
    "build_pb",
    "build_wb",
    "build_pt",
    "build_wt",
    "build_mesh_dof_graph",
    "write_graph_file",
    "read_graph_file",
]


class NodeLabel(Enum):
    FRACTURE = "fracture"
    TRACE = "trace"
    CROSSPOINT = "crosspoint"
    DOF = "dof"


@dataclass
class DfnGraph:
    n_nodes: int
    xadj: np.ndarray
    adjncy: np.ndarray
    node_weights: np.ndarray
    edge_weights: np.ndarray  # aligned with adjncy
    node_labels: list  # (NodeLabel, object id)
    strategy_tag: str

    @property
    def n_edges(self) -> int:
        return len(self.adjncy) // 2

    def neighbors(self, u: int) -> np.ndarray:
        return self.adjncy[self.xadj[u] : self.xadj[u + 1]]

    def edge_weights_of(self, u: int) -> np.ndarray:
        return self.edge_weights[self.xadj[u] : self.xadj[u + 1]]

    def degree(self, u: int) -> int:
        return int(self.xadj[u + 1] - self.xadj[u])

    def check(self) -> None:
        """Full-scan symmetry / loop / weight assertions."""
        if np.any(self.node_weights < 1) or np.any(self.edge_weights < 1):
            raise ValueError("all weights must be >= 1")
        seen = {}
        for u in range(self.n_nodes):
            for v, w in zip(self.neighbors(u), self.edge_weights_of(u)):
                if v == u:
                    raise ValueError(f"self loop at node {u}")
                seen[(u, int(v))] = int(w)
        for (u, v), w in seen.items():
            if seen.get((v, u)) != w:
                raise ValueError(f"asymmetric edge ({u},{v})")


def _from_edges(n, edges, node_weights, labels, tag) -> DfnGraph:
    """edges: dict (u, v) u<v -> weight; parallel edges already merged."""
    adj: list[list] = [[] for _ in range(n)]
    for (u, v), w in sorted(edges.items()):
        adj[u].append((v, w))
        adj[v].append((u, w))
    xadj = np.zeros(n + 1, dtype=np.int64)
    adjncy = []
    ewts = []
    for u in range(n):
        adj[u].sort()
        for v, w in adj[u]:
            adjncy.append(v)
            ewts.append(w)
        xadj[u + 1] = len(adjncy)
    return DfnGraph(
        n_nodes=n,
        xadj=xadj,
        adjncy=np.array(adjncy, dtype=np.int64),
        edge_weights=np.array(ewts, dtype=np.int64),
        node_weights=np.asarray(node_weights, dtype=np.int64),
        node_labels=labels,
        strategy_tag=tag,
    )


def _fracture_graph(dfn: DFN, counts: DofCounts | None, tag: str) -> DfnGraph:
    n = dfn.n_fractures
    edges: dict = {}
    for tr in dfn.traces:
        r, s = tr.it_pair
        key = (r - 1, s - 1)
        w = counts.per_trace[tr.id] if counts else 1
        edges[key] = edges.get(key, 0) + max(w, 1)
    if counts:
        nwts = [max(counts.per_fracture[f.id], 1) for f in dfn.fractures]
    else:
        nwts = [1] * n
        edges = {k: 1 for k in edges}
    labels = [(NodeLabel.FRACTURE, f.id) for f in dfn.fractures]
    return _from_edges(n, edges, nwts, labels, tag)


def build_pg(dfn: DFN) -> DfnGraph:
    """Fractures as nodes, traces as edges; unit weights."""
    return _fracture_graph(dfn, None, "Pg")


def build_wg(dfn: DFN, counts: DofCounts) -> DfnGraph:
    """Fracture graph weighted by [F_r] on nodes and [T_m] on edges
    (parallel traces of a fracture pair merge with summed weight)."""
    return _fracture_graph(dfn, counts, "Wg")


def _bipartite_graph(dfn: DFN, counts: DofCounts | None, tag: str) -> DfnGraph:
    nf, nt = dfn.n_fractures, dfn.n_traces
    n = nf + nt
    edges: dict = {}
    for tr in dfn.traces:
        tnode = nf + tr.id - 1
        w = max(counts.per_trace[tr.id], 1) if counts else 1
        for rid in tr.it_pair:
            edges[(rid - 1, tnode)] = w
    if counts:
        nwts = [max(counts.per_fracture[f.id], 1) for f in dfn.fractures] + [
            max(counts.per_trace[t.id], 1) for t in dfn.traces
        ]
    else:
        nwts = [1] * n
    labels = [(NodeLabel.FRACTURE, f.id) for f in dfn.fractures] + [
        (NodeLabel.TRACE, t.id) for t in dfn.traces
    ]
    return _from_edges(n, edges, nwts, labels, tag)


def build_pb(dfn: DFN) -> DfnGraph:
    """Bipartite fracture/trace graph; one edge per trace incidence."""
    return _bipartite_graph(dfn, None, "Pb")


def build_wb(dfn: DFN, counts: DofCounts) -> DfnGraph:
    """Bipartite graph with [F_r]/[T_m] node weights, [T_m] edge weights."""
    return _bipartite_graph(dfn, counts, "Wb")


def _tripartite_graph(dfn: DFN, counts: DofCounts | None, tag: str) -> DfnGraph:
    nf, nt = dfn.n_fractures, dfn.n_traces
    ncp = len(dfn.cross_points)
    n = nf + nt + ncp
    edges: dict = {}
    for tr in dfn.traces:
        tnode = nf + tr.id - 1
        w = max(counts.per_trace[tr.id], 1) if counts else 1
        for rid in tr.it_pair:
            edges[(rid - 1, tnode)] = w
    # each standard triple point connects to 3 fractures and 3 traces
    for cp in dfn.cross_points:
        cpnode = nf + nt + cp.id - 1
        deg = len(cp.icp_triple) + len(cp.incident_traces)
        w = deg if counts else 1
        for rid in cp.icp_triple:
            edges[(rid - 1, cpnode)] = w
        for m in cp.incident_traces:
            edges[(nf + m - 1, cpnode)] = w
    if counts:
        nwts = (
            [max(counts.per_fracture[f.id], 1) for f in dfn.fractures]
            + [max(counts.per_trace[t.id], 1) for t in dfn.traces]
            + [1] * ncp
        )
    else:
        nwts = [1] * n
    labels = (
        [(NodeLabel.FRACTURE, f.id) for f in dfn.fractures]
        + [(NodeLabel.TRACE, t.id) for t in dfn.traces]
        + [(NodeLabel.CROSSPOINT, c.id) for c in dfn.cross_points]
    )
    return _from_edges(n, edges, nwts, labels, tag)


def build_pt(dfn: DFN) -> DfnGraph:
    """Tripartite fracture/trace/cross-point graph; unit weights."""
    return _tripartite_graph(dfn, None, "Pt")


def build_wt(dfn: DFN, counts: DofCounts) -> DfnGraph:
    """Tripartite graph; cross-point edges weighted by the point's degree."""
    return _tripartite_graph(dfn, counts, "Wt")


def build_mesh_dof_graph(mesh: PolyMesh) -> DfnGraph:
    """One graph node per free mesh node, one edge per mesh edge."""
    free = mesh.free_node_ids()
    index = {nid: i for i, nid in enumerate(free)}
    edges: dict = {}
    for cell in mesh.cells:
        ids = cell.node_ids
        nn = len(ids)
        for i in range(nn):
            a, b = ids[i], ids[(i + 1) % nn]
            if a in index and b in index:
                u, v = index[a], index[b]
                if u != v:
                    edges[(min(u, v), max(u, v))] = 1
    labels = [(NodeLabel.DOF, nid) for nid in free]
    return _from_edges(len(free), edges, [1] * len(free), labels, "MeshP")


# --- standard partitioner file format ----------------------------------------


def write_graph_file(g: DfnGraph, path) -> None:
    """Header "n m fmt"; fmt=011 when weighted, 000 otherwise; 1-based."""
    weighted = bool(
        np.any(g.node_weights != 1) or np.any(g.edge_weights != 1)
    ) or g.strategy_tag.startswith("W")
    fmt = "011" if weighted else "000"
    lines = [f"{g.n_nodes} {g.n_edges} {fmt}"]
    for u in range(g.n_nodes):
        parts = []
        if weighted:
            parts.append(str(int(g.node_weights[u])))
        for v, w in zip(g.neighbors(u), g.edge_weights_of(u)):
            parts.append(str(int(v) + 1))
            if weighted:
                parts.append(str(int(w)))
        lines.append(" ".join(parts))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_graph_file(path) -> DfnGraph:
    with open(path) as fh:
        # keep blank lines: they encode isolated nodes
        raw = [ln.strip() for ln in fh if not ln.startswith("%")]
    while raw and not raw[-1]:
        raw.pop()
    if not raw:
        raise ValueError(f"{path}: empty graph file")
    head = raw[0].split()
    if len(head) < 2:
        raise ValueError(f"{path}: malformed header {raw[0]!r}")
    n, m = int(head[0]), int(head[1])
    fmt = head[2] if len(head) > 2 else "000"
    has_nw = len(fmt) >= 2 and fmt[-2] == "1"
    has_ew = fmt[-1] == "1"
    if len(raw) - 1 != n:
        raise ValueError(f"{path}: expected {n} node lines, found {len(raw) - 1}")
    nwts = np.ones(n, dtype=np.int64)
    xadj = np.zeros(n + 1, dtype=np.int64)
    adjncy, ewts = [], []
    for u in range(n):
        tok = raw[u + 1].split()
        pos = 0
        if has_nw:
            nwts[u] = int(tok[0])
            pos = 1
        while pos < len(tok):
            v = int(tok[pos]) - 1
            pos += 1
            w = 1
            if has_ew:
                w = int(tok[pos])
                pos += 1
            if not 0 <= v < n:
                raise ValueError(f"{path}: node {u + 1}: neighbor {v + 1} out of range")
            adjncy.append(v)
            ewts.append(w)
        xadj[u + 1] = len(adjncy)
    if len(adjncy) != 2 * m:
        raise ValueError(f"{path}: header claims {m} edges, body lists {len(adjncy)} entries")
    g = DfnGraph(
        n_nodes=n,
        xadj=xadj,
        adjncy=np.array(adjncy, dtype=np.int64),
        edge_weights=np.array(ewts, dtype=np.int64),
        node_weights=nwts,
        node_labels=[(NodeLabel.DOF, u + 1) for u in range(n)],
        strategy_tag="file",
    )
    g.check()
    return g
