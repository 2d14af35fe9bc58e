"""Trace-conforming polygonal meshes on a DFN.

Each fracture starts as a single convex cell and is split along every
trace crossing it (cut lines extended to cell boundaries where a trace
tip ends inside a cell).  A global node registry merges coincident points
so that trace and cross-point nodes carry a single id on all incident
fractures; hanging points created by refinement are inserted as collinear
vertices of the neighbouring cells, which keeps the mesh conforming.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import DFN, Fracture, GeometryError, _signed_area

__all__ = [
    "MeshError",
    "NodeKind",
    "MeshNode",
    "Cell",
    "DofCounts",
    "PolyMesh",
    "build_minimal_mesh",
    "refine_uniform",
    "refine_marked",
    "neighborhood",
]


class MeshError(RuntimeError):
    """Mesh construction or refinement failure."""


class NodeKind(Enum):
    INTERIOR = "interior"
    ON_TRACE = "on_trace"
    CROSS_POINT = "cross_point"
    BOUNDARY = "boundary"


@dataclass
class MeshNode:
    id: int
    position: np.ndarray
    kind: NodeKind
    ref: int  # fracture id / trace id / cross point id; 0 for BOUNDARY
    adjacency: set = field(default_factory=set)  # incident cell ids

    @property
    def is_free(self) -> bool:
        return self.kind is not NodeKind.BOUNDARY


@dataclass
class Cell:
    id: int
    fracture_id: int
    node_ids: list  # CCW in fracture-local 2D


@dataclass
class DofCounts:
    n_cp: int
    n_trace: int  # includes cross-point Dofs
    n_total: int
    per_fracture: dict  # fracture id -> [F_r]
    per_trace: dict  # trace id -> [T_m] (cross points included)
    free_cp_ids: frozenset = frozenset()  # cross points that carry a Dof


class _Registry:
    """Grid-hashed point registry merging points within a tolerance."""

    def __init__(self, tol: float):
        self.tol = tol
        self.q = 4.0 * tol
        self._grid: dict = {}
        self.points: list = []

    def _key(self, p):
        return (int(round(p[0] / self.q)), int(round(p[1] / self.q)), int(round(p[2] / self.q)))

    def find(self, p) -> int | None:
        kx, ky, kz = self._key(p)
        px, py, pz = float(p[0]), float(p[1]), float(p[2])
        best, bestd2 = None, self.tol * self.tol
        pts = self.points
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    for idx in self._grid.get((kx + dx, ky + dy, kz + dz), ()):
                        q = pts[idx]
                        d2 = (
                            (float(q[0]) - px) ** 2
                            + (float(q[1]) - py) ** 2
                            + (float(q[2]) - pz) ** 2
                        )
                        if d2 <= bestd2:
                            best, bestd2 = idx, d2
        return best

    def insert(self, p) -> tuple[int, bool]:
        """Return (index, created)."""
        found = self.find(p)
        if found is not None:
            return found, False
        idx = len(self.points)
        self.points.append(np.asarray(p, dtype=float))
        self._grid.setdefault(self._key(p), []).append(idx)
        return idx, True


class PolyMesh:
    """Conforming polygonal mesh over all fractures of a DFN."""

    def __init__(self, dfn: DFN, nodes, cells, dirichlet_fractures):
        self.dfn = dfn
        self.nodes: list[MeshNode] = nodes
        self.cells: list[Cell] = cells
        self.dirichlet_fractures: frozenset = frozenset(dirichlet_fractures)
        self._counts: DofCounts | None = None

    # -- geometry helpers --------------------------------------------------

    def frame(self, fracture_id: int):
        return self.dfn.fracture(fracture_id).plane_basis

    def cell_polygon2d(self, cell: Cell) -> np.ndarray:
        basis = self.frame(cell.fracture_id)
        pts = np.array([self.nodes[i].position for i in cell.node_ids])
        return basis.to_local(pts)

    def cell_area(self, cell: Cell) -> float:
        return _signed_area(self.cell_polygon2d(cell))

    def fracture_node_ids(self, fracture_id: int) -> set:
        out: set = set()
        for c in self.cells:
            if c.fracture_id == fracture_id:
                out.update(c.node_ids)
        return out

    # -- Dof bookkeeping ---------------------------------------------------

    @property
    def dof_counts(self) -> DofCounts:
        if self._counts is None:
            self._counts = self._compute_counts()
        return self._counts

    def _compute_counts(self) -> DofCounts:
        n_cp = n_trace = n_total = 0
        per_trace: dict = {t.id: 0 for t in self.dfn.traces}
        free_cps = set()
        for nd in self.nodes:
            if not nd.is_free:
                continue
            n_total += 1
            if nd.kind is NodeKind.CROSS_POINT:
                n_cp += 1
                n_trace += 1
                free_cps.add(nd.ref)
                for m in self.dfn.cross_point(nd.ref).incident_traces:
                    per_trace[m] += 1
            elif nd.kind is NodeKind.ON_TRACE:
                n_trace += 1
                per_trace[nd.ref] += 1
        per_fracture: dict = {}
        for f in self.dfn.fractures:
            ids = self.fracture_node_ids(f.id)
            per_fracture[f.id] = sum(1 for i in ids if self.nodes[i].is_free)
        return DofCounts(
            n_cp=n_cp,
            n_trace=n_trace,
            n_total=n_total,
            per_fracture=per_fracture,
            per_trace=per_trace,
            free_cp_ids=frozenset(free_cps),
        )

    def free_node_ids(self) -> list:
        return [nd.id for nd in self.nodes if nd.is_free]

    def invalidate(self) -> None:
        self._counts = None

    def copy(self) -> "PolyMesh":
        nodes = [
            MeshNode(n.id, n.position.copy(), n.kind, n.ref, set(n.adjacency))
            for n in self.nodes
        ]
        cells = [Cell(c.id, c.fracture_id, list(c.node_ids)) for c in self.cells]
        return PolyMesh(self.dfn, nodes, cells, self.dirichlet_fractures)

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "id": n.id,
                    "xyz": n.position.tolist(),
                    "kind": n.kind.value,
                    "ref": n.ref,
                }
                for n in self.nodes
            ],
            "cells": [
                {"id": c.id, "fracture": c.fracture_id, "nodes": list(c.node_ids)}
                for c in self.cells
            ],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def neighborhood(mesh: PolyMesh, node_id: int) -> set:
    """Union of the node sets of all cells incident to the node (itself included)."""
    if node_id < 0 or node_id >= len(mesh.nodes):
        raise KeyError(f"unknown node id {node_id}")
    out = {node_id}
    for cid in mesh.nodes[node_id].adjacency:
        out.update(mesh.cells[cid].node_ids)
    return out


# --- minimal mesh -----------------------------------------------------------


def _split_polygon(poly: np.ndarray, a: np.ndarray, nrm: np.ndarray, eps: float):
    """Split a convex CCW polygon by the line nrm . (x - a) = 0.

    Returns (neg_side, pos_side) as vertex arrays, either possibly None.
    Vertices within eps of the line are shared by both pieces.
    """
    s = (poly - a) @ nrm
    s[np.abs(s) <= eps] = 0.0
    if np.all(s >= 0.0) or np.all(s <= 0.0):
        return (poly, None) if np.any(s < 0.0) or not np.any(s > 0.0) else (None, poly)
    neg, pos = [], []
    n = len(poly)
    for i in range(n):
        p, sp = poly[i], s[i]
        q, sq = poly[(i + 1) % n], s[(i + 1) % n]
        if sp <= 0.0:
            neg.append(p)
        if sp >= 0.0:
            pos.append(p)
        if (sp < 0.0 < sq) or (sq < 0.0 < sp):
            t = sp / (sp - sq)
            x = p + t * (q - p)
            neg.append(x)
            pos.append(x)
    return np.array(neg), np.array(pos)


def _edge_vectors(poly: np.ndarray) -> np.ndarray:
    e = np.empty_like(poly)
    e[:-1] = poly[1:] - poly[:-1]
    e[-1] = poly[0] - poly[-1]
    return e


def _clip_segment_length(poly: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Length of segment [a, b] inside a convex CCW polygon."""
    # scalar arithmetic on purpose: called once per (trace, cell) and numpy
    # overhead dominates for 3-6 vertex polygons
    ax, ay = float(a[0]), float(a[1])
    dx, dy = float(b[0]) - ax, float(b[1]) - ay
    xs = poly[:, 0].tolist()
    ys = poly[:, 1].tolist()
    tmin, tmax = 0.0, 1.0
    n = len(xs)
    for i in range(n):
        j = i + 1 if i + 1 < n else 0
        nx, ny = ys[i] - ys[j], xs[j] - xs[i]  # inward for CCW
        denom = nx * dx + ny * dy
        num = nx * (xs[i] - ax) + ny * (ys[i] - ay)
        if abs(denom) < 1e-15 * (abs(num) + 1.0):
            if num > 0.0:
                return 0.0
            continue
        t = num / denom
        if denom > 0.0:
            if t > tmin:
                tmin = t
        elif t < tmax:
            tmax = t
        if tmin >= tmax:
            return 0.0
    return (tmax - tmin) * math.hypot(dx, dy)


class _TraceLocator:
    """Nearest trace of a fracture, vectorized over the fracture's traces."""

    def __init__(self, dfn: DFN):
        self._dfn = dfn
        self._cache: dict = {}

    def _entry(self, fracture_id):
        entry = self._cache.get(fracture_id)
        if entry is None:
            trs = self._dfn.traces_of_fracture(fracture_id)
            if trs:
                p0 = np.array([t.endpoints[0] for t in trs])
                d = np.array([t.endpoints[1] - t.endpoints[0] for t in trs])
                sq = np.einsum("ij,ij->i", d, d)
                ids = np.array([t.id for t in trs])
            else:
                p0 = d = np.zeros((0, 3))
                sq = ids = np.zeros(0)
            entry = (p0, d, sq, ids)
            self._cache[fracture_id] = entry
        return entry

    def nearest(self, fracture_id, p) -> tuple[int, float]:
        """(trace id, distance); (0, inf) when the fracture has no trace."""
        p0, d, sq, ids = self._entry(fracture_id)
        if len(ids) == 0:
            return 0, np.inf
        t = np.clip(np.einsum("ij,ij->i", p - p0, d) / sq, 0.0, 1.0)
        off = p0 + t[:, None] * d - p
        d2 = np.einsum("ij,ij->i", off, off)
        i = int(np.argmin(d2))
        return int(ids[i]), float(np.sqrt(d2[i]))


def _point_on_polygon_boundary(poly: np.ndarray, p: np.ndarray, eps: float) -> bool:
    d = _edge_vectors(poly)
    L2 = np.einsum("ij,ij->i", d, d)
    t = np.clip(np.einsum("ij,ij->i", p - poly, d) / L2, 0.0, 1.0)
    off = poly + t[:, None] * d - p
    return bool(np.einsum("ij,ij->i", off, off).min() <= eps * eps)


def build_minimal_mesh(dfn: DFN, dirichlet_fractures=None) -> PolyMesh:
    """(Almost) minimal trace-conforming mesh.

    ``dirichlet_fractures``: fracture ids whose outer boundary carries
    Dirichlet data (those nodes carry no Dof).  None means all fractures,
    matching a homogeneous Dirichlet condition on the whole DFN boundary;
    pass an empty set for a pure free-boundary mesh.
    """
    eps = dfn.eps_geom
    if dirichlet_fractures is None:
        dirichlet_fractures = {f.id for f in dfn.fractures}
    # 1. per-fracture splitting by trace lines
    polys: dict[int, list[np.ndarray]] = {}
    for f in dfn.fractures:
        cells2d = [f.local_polygon]
        basis = f.plane_basis
        for tr in dfn.traces:
            if f.id not in tr.it_pair:
                continue
            a2 = basis.to_local(tr.endpoints[0])[0]
            b2 = basis.to_local(tr.endpoints[1])[0]
            d = b2 - a2
            nrm = np.array([-d[1], d[0]])
            nrm = nrm / np.linalg.norm(nrm)
            out = []
            for poly in cells2d:
                scale = np.max(np.abs(poly)) + 1.0
                if _clip_segment_length(poly, a2, b2) > 10 * eps:
                    neg, pos = _split_polygon(poly, a2, nrm, 10 * eps)
                    if (
                        neg is not None
                        and pos is not None
                        and abs(_signed_area(neg)) > eps * scale
                        and abs(_signed_area(pos)) > eps * scale
                    ):
                        out.extend([neg, pos])
                        continue
                out.append(poly)
            cells2d = out
        polys[f.id] = cells2d

    # 2. lift to 3D, snap to cross points and canonical trace positions
    snap = 1e4 * eps
    verts3d: dict[int, list[np.ndarray]] = {}
    for f in dfn.fractures:
        basis = f.plane_basis
        verts3d[f.id] = [basis.to_world(poly) for poly in polys[f.id]]
    cp_pts = [cp.point for cp in dfn.cross_points]
    cp_arr = np.array(cp_pts).reshape(-1, 3)
    if len(cp_arr):
        for f in dfn.fractures:
            for arr in verts3d[f.id]:
                d2 = np.sum((arr[:, None, :] - cp_arr[None, :, :]) ** 2, axis=2)
                nearest = np.argmin(d2, axis=1)
                hit = d2[np.arange(len(arr)), nearest] <= snap * snap
                arr[hit] = cp_arr[nearest[hit]]

    # canonical nodes along each trace: cluster parameters from both sides
    for tr in dfn.traces:
        L = tr.length()
        dirv = tr.direction()
        refs = []  # (fracture id, poly idx, vert idx, t, on_segment)
        for rid in tr.it_pair:
            arrs = verts3d[rid]
            if not arrs:
                continue
            sizes = np.array([len(a) for a in arrs])
            offsets = np.concatenate([[0], np.cumsum(sizes)])
            big = np.concatenate(arrs)
            rel = big - tr.endpoints[0]
            t = rel @ dirv / L
            off = rel - (t * L)[:, None] * dirv
            hit = np.einsum("ij,ij->i", off, off) <= snap * snap
            for gi in np.flatnonzero(hit):
                pi = int(np.searchsorted(offsets, gi, side="right")) - 1
                vi = int(gi - offsets[pi])
                on_seg = -snap / L <= t[gi] <= 1.0 + snap / L
                refs.append((rid, pi, vi, float(t[gi]), on_seg))
        seg_ts = sorted(t for *_x, t, on in refs if on)
        clusters: list[list[float]] = []
        for t in seg_ts:
            if clusters and t - clusters[-1][-1] <= snap / L:
                clusters[-1].append(t)
            else:
                clusters.append([t])
        centers = [float(np.mean(c)) for c in clusters]
        cluster_pos = [tr.point_at(t) for t in centers]
        # keep cross-point coordinates exact where a cluster holds one
        if len(cp_arr) and cluster_pos:
            d2 = np.sum(
                (np.asarray(cluster_pos)[:, None, :] - cp_arr[None, :, :]) ** 2,
                axis=2,
            )
            nearest = np.argmin(d2, axis=1)
            for ci in np.flatnonzero(
                d2[np.arange(len(cluster_pos)), nearest] <= snap * snap
            ):
                cp = cp_arr[nearest[ci]]
                cluster_pos[ci] = cp
                centers[ci] = tr.param_of(cp)
        # snap on-segment vertices to their cluster position
        for rid, pi, vi, t, on in refs:
            if not on:
                continue
            ci = int(np.argmin([abs(t - c) for c in centers]))
            verts3d[rid][pi][vi] = cluster_pos[ci]
        # conformity: insert missing cluster points into collinear edges
        for rid in tr.it_pair:
            arrs = verts3d[rid]
            if not arrs:
                continue
            big = np.concatenate(arrs)
            rel = big - tr.endpoints[0]
            t_all = rel @ dirv / L
            off = rel - (t_all * L)[:, None] * dirv
            online_all = np.einsum("ij,ij->i", off, off) <= snap * snap
            new_list = []
            pos = 0
            for arr in arrs:
                n = len(arr)
                t = t_all[pos : pos + n]
                online = online_all[pos : pos + n]
                pos += n
                if int(online.sum()) < 2:
                    new_list.append(arr)
                    continue
                rows: list[np.ndarray] = []
                for i in range(n):
                    rows.append(arr[i])
                    j = (i + 1) % n
                    if online[i] and online[j]:
                        lo, hi = sorted((t[i], t[j]))
                        inner = [
                            (c, cluster_pos[ci])
                            for ci, c in enumerate(centers)
                            if lo + snap / L < c < hi - snap / L
                        ]
                        inner.sort(reverse=bool(t[i] > t[j]))
                        rows.extend(p for _c, p in inner)
                new_list.append(np.array(rows))
            verts3d[rid] = new_list

    # 3. global registry and cell construction
    reg = _Registry(tol=snap)
    cells: list[Cell] = []
    for f in dfn.fractures:
        for arr in verts3d[f.id]:
            ids = []
            for p in arr:
                idx, _ = reg.insert(p)
                if not ids or ids[-1] != idx:
                    ids.append(idx)
            if len(ids) > 1 and ids[0] == ids[-1]:
                ids.pop()
            if len(ids) < 3:
                raise MeshError(f"degenerate cell on fracture {f.id}")
            cells.append(Cell(id=len(cells), fracture_id=f.id, node_ids=ids))

    # 4. classify nodes
    nodes = _classify_nodes(dfn, reg.points, cells, dirichlet_fractures, snap)
    mesh = PolyMesh(dfn, nodes, cells, dirichlet_fractures)
    _check_areas(mesh)
    return mesh


def _classify_nodes(dfn, points, cells, dirichlet_fractures, snap):
    node_fracs: dict[int, set] = {}
    for c in cells:
        for nid in c.node_ids:
            node_fracs.setdefault(nid, set()).add(c.fracture_id)
    cp_arr = np.array([cp.point for cp in dfn.cross_points]).reshape(-1, 3)
    locator = _TraceLocator(dfn)
    nodes = []
    for nid, p in enumerate(points):
        kind, ref = NodeKind.INTERIOR, 0
        fracs = node_fracs.get(nid, set())
        on_boundary = False
        for rid in fracs:
            if rid in dirichlet_fractures and _point_on_polygon_boundary(
                dfn.fracture(rid).local_polygon,
                dfn.fracture(rid).plane_basis.to_local(p)[0],
                snap,
            ):
                on_boundary = True
                break
        if on_boundary:
            kind = NodeKind.BOUNDARY
        else:
            cp_id = 0
            if len(cp_arr):
                d2 = np.sum((cp_arr - p) ** 2, axis=1)
                ci = int(np.argmin(d2))
                if d2[ci] <= snap * snap:
                    cp_id = ci + 1
            if cp_id:
                kind, ref = NodeKind.CROSS_POINT, cp_id
            else:
                for rid in sorted(fracs):
                    tr_id, dist = locator.nearest(rid, p)
                    # near a trace tip a node may fall within snap of the
                    # segment while only one of its fractures is meshed there
                    if dist <= snap and set(
                        dfn.trace(tr_id).it_pair
                    ) <= fracs:
                        kind, ref = NodeKind.ON_TRACE, tr_id
                        break
                if kind is NodeKind.INTERIOR:
                    ref = min(fracs) if fracs else 0
        nodes.append(MeshNode(id=nid, position=np.asarray(p), kind=kind, ref=ref))
    for c in cells:
        for nid in c.node_ids:
            nodes[nid].adjacency.add(c.id)
    return nodes


def _check_areas(mesh: PolyMesh) -> None:
    sums: dict[int, float] = {f.id: 0.0 for f in mesh.dfn.fractures}
    for c in mesh.cells:
        a = mesh.cell_area(c)
        if a <= 0.0:
            raise MeshError(f"cell {c.id}: non-positive area {a}")
        sums[c.fracture_id] += a
    for f in mesh.dfn.fractures:
        ref = f.area()
        # snapping of shared trace nodes can displace vertices by up to
        # the merge tolerance; dense networks accumulate slightly more
        if abs(sums[f.id] - ref) > 1e-5 * ref:
            raise MeshError(
                f"fracture {f.id}: cell areas {sums[f.id]} != polygon area {ref}"
            )


# --- refinement -------------------------------------------------------------


def _principal_cut(poly: np.ndarray):
    """Cut line through the centroid, normal = longest principal axis
    of the vertex covariance (splits the cell across its long direction)."""
    c = poly.mean(axis=0)
    dev = poly - c
    cov = dev.T @ dev
    w, v = np.linalg.eigh(cov)
    axis = v[:, int(np.argmax(w))]
    return c, axis  # point on line, line normal


def _split_cells(mesh: PolyMesh, cell_ids) -> int:
    """Split the given cells in place; returns the number of cells split.

    Hanging points created on shared edges (including trace edges, which
    are shared across fractures) are inserted as collinear vertices of all
    other cells carrying that edge, keeping the mesh conforming.
    """
    dfn = mesh.dfn
    snap = 1e4 * dfn.eps_geom
    locator = _TraceLocator(dfn)
    reg = _Registry(tol=snap)
    for nd in mesh.nodes:
        reg.insert(nd.position)

    new_on_edge: dict[tuple, list] = {}  # (u, v) sorted -> [(t along u->v, nid)]

    def edge_param(u, v, p):
        a = mesh.nodes[u].position
        b = mesh.nodes[v].position
        d = b - a
        return float((p - a) @ d / (d @ d))

    def make_node(p, fracture_id, edge):
        idx, created = reg.insert(p)
        if not created:
            return idx, idx < 0
        kind, ref = NodeKind.INTERIOR, fracture_id
        tr_id, dist = locator.nearest(fracture_id, p)
        if dist <= snap and edge is not None:
            # on a trace only when the split edge runs along it; a point can
            # fall within snap of a trace tip without being shared across it
            tr = dfn.trace(tr_id)
            if (
                tr.distance(mesh.nodes[edge[0]].position) <= snap
                and tr.distance(mesh.nodes[edge[1]].position) <= snap
            ):
                kind, ref = NodeKind.ON_TRACE, tr_id
        if kind is NodeKind.INTERIOR and fracture_id in mesh.dirichlet_fractures:
            f = dfn.fracture(fracture_id)
            if _point_on_polygon_boundary(
                f.local_polygon, f.plane_basis.to_local(p)[0], snap
            ):
                kind, ref = NodeKind.BOUNDARY, 0
        mesh.nodes.append(MeshNode(id=idx, position=np.asarray(p), kind=kind, ref=ref))
        return idx, True

    n_split = 0
    for cid in list(cell_ids):
        cell = mesh.cells[cid]
        ids = cell.node_ids
        n = len(ids)
        poly = mesh.cell_polygon2d(cell)
        c2, nrm = _principal_cut(poly)
        s = (poly - c2) @ nrm
        scale = float(np.max(np.abs(s))) + 1e-300
        s[np.abs(s) <= 1e-9 * scale] = 0.0
        if np.all(s >= 0.0) or np.all(s <= 0.0):
            continue  # cut does not separate (degenerate cell); skip
        basis = mesh.frame(cell.fracture_id)
        neg, pos = [], []
        cut_nodes = []
        for i in range(n):
            j = (i + 1) % n
            if s[i] <= 0.0:
                neg.append(ids[i])
            if s[i] >= 0.0:
                pos.append(ids[i])
            if s[i] == 0.0:
                cut_nodes.append(ids[i])
            if (s[i] < 0.0 < s[j]) or (s[j] < 0.0 < s[i]):
                t = s[i] / (s[i] - s[j])
                pu = mesh.nodes[ids[i]].position
                pv = mesh.nodes[ids[j]].position
                p = pu + t * (pv - pu)
                nid, created = make_node(p, cell.fracture_id, (ids[i], ids[j]))
                if nid not in (ids[i], ids[j]):
                    key = (min(ids[i], ids[j]), max(ids[i], ids[j]))
                    tt = edge_param(key[0], key[1], mesh.nodes[nid].position)
                    lst = new_on_edge.setdefault(key, [])
                    if all(x[1] != nid for x in lst):
                        lst.append((tt, nid))
                    neg.append(nid)
                    pos.append(nid)
                    cut_nodes.append(nid)
        if len(neg) < 3 or len(pos) < 3 or len(set(cut_nodes)) < 2:
            continue
        # child polygons inherit parent orientation
        area_neg = _signed_area(
            basis.to_local(np.array([mesh.nodes[i].position for i in neg]))
        )
        area_pos = _signed_area(
            basis.to_local(np.array([mesh.nodes[i].position for i in pos]))
        )
        if area_neg <= snap**2 or area_pos <= snap**2:
            continue
        child_a = Cell(id=cell.id, fracture_id=cell.fracture_id, node_ids=neg)
        child_b = Cell(id=len(mesh.cells), fracture_id=cell.fracture_id, node_ids=pos)
        mesh.cells[cell.id] = child_a
        mesh.cells.append(child_b)
        for nid in set(ids) | set(neg) | set(pos):
            mesh.nodes[nid].adjacency.discard(cell.id)
        for ch in (child_a, child_b):
            for nid in ch.node_ids:
                mesh.nodes[nid].adjacency.add(ch.id)
        n_split += 1

    # conformity pass: insert hanging nodes into every other cell whose
    # boundary runs along a subdivided edge
    for (u, v), items in new_on_edge.items():
        all_on = sorted(items + [(0.0, u), (1.0, v)])
        order = [nid for _t, nid in all_on]
        pos_in = {nid: i for i, nid in enumerate(order)}
        cand_cells = set(mesh.nodes[u].adjacency) | set(mesh.nodes[v].adjacency)
        for cid in cand_cells:
            cell = mesh.cells[cid]
            ids = cell.node_ids
            out = []
            changed = False
            nn = len(ids)
            for i in range(nn):
                a, b = ids[i], ids[(i + 1) % nn]
                out.append(a)
                if a in pos_in and b in pos_in:
                    ia, ib = pos_in[a], pos_in[b]
                    if abs(ia - ib) > 1:
                        step = 1 if ib > ia else -1
                        out.extend(order[ia + step : ib : step])
                        changed = True
            if changed:
                cell.node_ids = out
                for nid in out:
                    mesh.nodes[nid].adjacency.add(cid)
    mesh.invalidate()
    return n_split


def refine_uniform(mesh: PolyMesh, target: int) -> PolyMesh:
    """Split every cell until n_total >= #F * target."""
    if target < 1:
        raise ValueError("target must be >= 1")
    goal = mesh.dfn.n_fractures * target
    if mesh.dof_counts.n_total >= goal:
        return mesh
    out = mesh.copy()
    while out.dof_counts.n_total < goal:
        before = (len(out.nodes), len(out.cells))
        _split_cells(out, [c.id for c in out.cells])
        if (len(out.nodes), len(out.cells)) <= before:
            raise MeshError("refinement stalled: mesh did not grow")
    _check_areas(out)
    return out


def refine_marked(mesh: PolyMesh, marked_cells) -> PolyMesh:
    """Split exactly the marked cells (plus conformity vertex insertions)."""
    marked = set(marked_cells)
    if not marked:
        return mesh
    bad = [c for c in marked if c < 0 or c >= len(mesh.cells)]
    if bad:
        raise MeshError(f"unknown cell ids {bad}")
    out = mesh.copy()
    _split_cells(out, sorted(marked))
    _check_areas(out)
    return out
