"""Global degree-of-freedom numbering.

Two schemes are provided: a serial one that indexes interfaces of
increasing geometric dimension first (cross points, then trace nodes,
then the remaining fracture nodes), and a reordered per-process one
where each process numbers the Dofs it owns locally and converts to
global indices with a prefix-sum offset.  Ownership of interface Dofs
(traces and cross points) goes to the process holding the
lowest-index incident fracture.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import DFN
from .mesh import NodeKind, PolyMesh


class Scheme(Enum):
    SERIAL = "serial"
    REORDERED = "reordered"


class NumberingError(RuntimeError):
    pass


@dataclass
class LocalNetwork:
    """Fractures of one process and the traces internal to them."""

    process: int
    fractures: set = field(default_factory=set)
    internal_traces: set = field(default_factory=set)


@dataclass
class LocalCommunicatingNetwork:
    """Cut-interface view of one process.

    ``owned_traces`` are cut traces whose lower-index fracture is local
    (this process numbers their Dofs); ``recv_fractures`` are local
    fractures that receive interface indices from another process.
    """

    process: int
    recv_fractures: set = field(default_factory=set)
    owned_traces: set = field(default_factory=set)


@dataclass
class DofNumbering:
    """Bijection free mesh node -> 0..n_dofs-1 plus per-process stripes."""

    global_index: np.ndarray  # node id -> index, -1 for Dirichlet nodes
    owner_of: np.ndarray  # node id -> process, -1 for Dirichlet nodes
    stripe_offsets: list  # per process (start, end)
    scheme: Scheme
    n_dofs: int

    def validate(self) -> None:
        idx = np.sort(self.global_index[self.global_index >= 0])
        if idx.size != self.n_dofs or not np.array_equal(idx, np.arange(self.n_dofs)):
            raise NumberingError("global indices are not a permutation of 0..n_dofs-1")
        ends = [e for _, e in self.stripe_offsets]
        starts = [s for s, _ in self.stripe_offsets]
        if starts and (starts[0] != 0 or ends[-1] != self.n_dofs):
            raise NumberingError("stripes do not tile 0..n_dofs-1")
        for (s0, e0), (s1, _) in zip(self.stripe_offsets, self.stripe_offsets[1:]):
            if e0 != s1 or s0 > e0:
                raise NumberingError("stripes are not contiguous")


def build_local_networks(dfn: DFN, assignment: dict):
    """Split the DFN into per-process local and communicating networks.

    ``assignment`` maps fracture id -> process.  Every cut trace lands
    in exactly one ``owned_traces`` set (at the process of its
    lower-index fracture) and induces one receive entry on the other
    side.
    """
    k = max(assignment.values()) + 1
    lns = [LocalNetwork(i) for i in range(k)]
    lcs = [LocalCommunicatingNetwork(i) for i in range(k)]
    for f in dfn.fractures:
        lns[assignment[f.id]].fractures.add(f.id)
    for t in dfn.traces:
        r, s = t.it_pair
        pr, ps = assignment[r], assignment[s]
        if pr == ps:
            lns[pr].internal_traces.add(t.id)
        else:
            lcs[pr].owned_traces.add(t.id)
            lcs[ps].recv_fractures.add(s)
    return lns, lcs


def interface_ownership(dfn: DFN, assignment: dict):
    """Owner process of every trace and cross point.

    The owner is the process of the lowest-index incident fracture.
    """
    trace_owner = {t.id: assignment[t.it_pair[0]] for t in dfn.traces}
    cp_owner = {c.id: assignment[c.icp_triple[0]] for c in dfn.cross_points}
    return trace_owner, cp_owner


def _fracture_interior_nodes(mesh: PolyMesh, fracture_id: int) -> list:
    ids = sorted(mesh.fracture_node_ids(fracture_id))
    return [i for i in ids if mesh.nodes[i].kind is NodeKind.INTERIOR]


def _trace_nodes(mesh: PolyMesh) -> dict:
    """Free non-cross-point nodes per trace, in node id order."""
    out: dict = {t.id: [] for t in mesh.dfn.traces}
    for nd in mesh.nodes:
        if nd.kind is NodeKind.ON_TRACE:
            out[nd.ref].append(nd.id)
    return out


def number_serial(mesh: PolyMesh, n_parts: int = 1) -> DofNumbering:
    """Interface-first numbering: cross points, traces, then interiors.

    With ``n_parts`` > 1 the index range is cut into ``n_parts``
    near-equal contiguous stripes (block-row distribution).
    """
    counts = mesh.dof_counts
    gi = np.full(len(mesh.nodes), -1, dtype=np.int64)
    order: list = []
    cps = sorted(
        (nd for nd in mesh.nodes if nd.kind is NodeKind.CROSS_POINT),
        key=lambda nd: nd.ref,
    )
    order.extend(nd.id for nd in cps)
    per_trace = _trace_nodes(mesh)
    for t in mesh.dfn.traces:
        order.extend(per_trace[t.id])
    for f in mesh.dfn.fractures:
        order.extend(_fracture_interior_nodes(mesh, f.id))
    for idx, nid in enumerate(order):
        gi[nid] = idx
    n = counts.n_total
    bounds = np.linspace(0, n, n_parts + 1).astype(np.int64)
    stripes = [(int(bounds[p]), int(bounds[p + 1])) for p in range(n_parts)]
    owner = np.full(len(mesh.nodes), -1, dtype=np.int64)
    for nid in order:
        owner[nid] = int(np.searchsorted(bounds[1:], gi[nid], side="right"))
    numbering = DofNumbering(gi, owner, stripes, Scheme.SERIAL, n)
    numbering.validate()
    return numbering


def number_reordered(
    mesh: PolyMesh,
    assignment: dict,
    lns: list | None = None,
    lcs: list | None = None,
) -> DofNumbering:
    """Per-process local numbering followed by prefix-sum offsets.

    Each process numbers, in order: cross points it owns, nodes of the
    traces it owns (internal plus cut traces with a local lower
    fracture), then the remaining interior nodes of its fractures.
    Dofs owned elsewhere inherit the owner's global index.
    """
    dfn = mesh.dfn
    if lns is None or lcs is None:
        lns, lcs = build_local_networks(dfn, assignment)
    k = len(lns)
    trace_owner, cp_owner = interface_ownership(dfn, assignment)
    per_trace = _trace_nodes(mesh)

    # phase 1: each process lists its local Dofs independently
    local_order: list = [[] for _ in range(k)]
    for nd in mesh.nodes:
        if nd.kind is NodeKind.CROSS_POINT:
            local_order[cp_owner[nd.ref]].append((0, nd.ref, nd.id))
    for t in dfn.traces:
        p = trace_owner[t.id]
        for nid in per_trace[t.id]:
            local_order[p].append((1, t.id, nid))
    for p in range(k):
        for fid in sorted(lns[p].fractures):
            for nid in _fracture_interior_nodes(mesh, fid):
                local_order[p].append((2, fid, nid))

    # barrier: exchange counts, then offset (prefix sum over processes)
    sizes = [len(lst) for lst in local_order]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    gi = np.full(len(mesh.nodes), -1, dtype=np.int64)
    owner = np.full(len(mesh.nodes), -1, dtype=np.int64)
    for p in range(k):
        for loc, (_, _, nid) in enumerate(sorted(local_order[p])):
            if gi[nid] != -1:
                raise NumberingError(f"node {nid} numbered twice")
            gi[nid] = offsets[p] + loc
            owner[nid] = p
    for nd in mesh.nodes:
        if nd.is_free and gi[nd.id] == -1:
            raise NumberingError(f"node {nd.id} left unnumbered")

    stripes = [(int(offsets[p]), int(offsets[p + 1])) for p in range(k)]
    numbering = DofNumbering(
        gi, owner, stripes, Scheme.REORDERED, mesh.dof_counts.n_total
    )
    numbering.validate()
    return numbering


def write_numbering_csv(mesh: PolyMesh, numbering: DofNumbering, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "global_index", "owner", "kind"])
        for nd in mesh.nodes:
            if nd.is_free:
                w.writerow(
                    [nd.id, int(numbering.global_index[nd.id]),
                     int(numbering.owner_of[nd.id]), nd.kind.value]
                )
