"""Order-1 virtual element assembly and striped Jacobi-PCG solve.

The stiffness of each polygonal cell is the classic first-order VEM
form: a consistency term from the projection onto linear polynomials
(computed by boundary integration, i.e. the averaged outward edge
normals) plus a dofi-dofi stabilization scaled by the consistency
trace.  The global matrix is permuted by a DofNumbering and cut into
per-process row stripes; the halo-exchange plan lists, for every
stripe pair, the off-diagonal-block column support.  The CG kernels
run stripe-by-stripe with a fixed reduction order, so results are
bitwise identical for any thread count.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

from .dofs import DofNumbering
from .mesh import PolyMesh, _signed_area


class FemError(RuntimeError):
    pass


class SolverError(FemError):
    pass


@dataclass
class DarcyProblem:
    """Per-fracture transmissivity, forcing term and Dirichlet data."""

    transmissivity: float | dict = 1.0
    forcing: object = None  # callable(xyz) -> float, None = zero
    dirichlet: object = None  # callable(xyz) -> float, None = zero

    def transmissivity_of(self, fracture_id: int) -> float:
        if isinstance(self.transmissivity, dict):
            return float(self.transmissivity.get(fracture_id, 1.0))
        return float(self.transmissivity)


@dataclass
class StripedSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    stripes: list  # per process (start, end) row ranges
    comm_plan: list  # comm_plan[p][q] = sorted column indices, p != q

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def halo_sizes(self) -> list:
        return [sum(len(c) for c in plan.values()) for plan in self.comm_plan]

    def comm_volume(self) -> int:
        return sum(self.halo_sizes())

    def message_count(self) -> int:
        return sum(
            1 for plan in self.comm_plan for c in plan.values() if len(c) > 0
        )

    def offblock_nnz(self) -> int:
        """Nonzeros outside the per-stripe diagonal blocks."""
        total = 0
        a = self.matrix
        for s, e in self.stripes:
            sub = a[s:e]
            cols = sub.indices
            total += int(np.count_nonzero((cols < s) | (cols >= e)))
        return total


@dataclass
class SolveReport:
    iterations: int
    relative_residual: float
    halo_sizes: list
    comm_volume: int
    message_count: int
    wall_time: float
    residual_history: list = field(default_factory=list)
    converged: bool = True


def local_stiffness(poly: np.ndarray, transmissivity: float = 1.0) -> np.ndarray:
    """Order-1 VEM stiffness of one convex polygon (CCW, local 2D coords)."""
    n = len(poly)
    area = _signed_area(poly)
    if area <= 0.0:
        raise FemError("cell with non-positive area")
    edges = np.empty_like(poly)
    edges[:-1] = poly[1:] - poly[:-1]
    edges[-1] = poly[0] - poly[-1]
    normals = np.column_stack([edges[:, 1], -edges[:, 0]])  # unnormalized outward
    prev = np.empty_like(normals)
    prev[0] = normals[-1]
    prev[1:] = normals[:-1]
    q = 0.5 * (prev + normals)
    kc = transmissivity * (q @ q.T) / area
    # projection onto linears evaluated at the vertices
    g = q / area
    vc = poly - poly.mean(axis=0)
    p = np.full((n, n), 1.0 / n) + vc @ g.T
    imp = np.eye(n) - p
    ks = (np.trace(kc) / n) * (imp.T @ imp)
    return kc + ks


def assemble(
    mesh: PolyMesh, numbering: DofNumbering, problem: DarcyProblem | None = None
) -> StripedSystem:
    """Assemble the global striped system under the given numbering.

    Dirichlet rows/columns are eliminated into the right-hand side, so
    the returned matrix acts on free Dofs only and is SPD.
    """
    if problem is None:
        problem = DarcyProblem()
    gi = numbering.global_index
    n = numbering.n_dofs
    for nd in mesh.nodes:
        if nd.is_free and gi[nd.id] < 0:
            raise FemError(f"free node {nd.id} has no global index")

    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    dir_val = {}
    for nd in mesh.nodes:
        if not nd.is_free:
            dir_val[nd.id] = (
                float(problem.dirichlet(nd.position)) if problem.dirichlet else 0.0
            )
    for cell in mesh.cells:
        poly = mesh.cell_polygon2d(cell)
        t = problem.transmissivity_of(cell.fracture_id)
        k = local_stiffness(poly, t)
        ids = cell.node_ids
        m = len(ids)
        if problem.forcing is not None:
            area = _signed_area(poly)
            for i in range(m):
                if mesh.nodes[ids[i]].is_free:
                    rhs[gi[ids[i]]] += (area / m) * float(
                        problem.forcing(mesh.nodes[ids[i]].position)
                    )
        for i in range(m):
            if not mesh.nodes[ids[i]].is_free:
                continue
            r = gi[ids[i]]
            for j in range(m):
                if mesh.nodes[ids[j]].is_free:
                    rows.append(r)
                    cols.append(gi[ids[j]])
                    vals.append(k[i, j])
                else:
                    rhs[r] -= k[i, j] * dir_val[ids[j]]
    a = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    a.sum_duplicates()
    a.eliminate_zeros()
    stripes = list(numbering.stripe_offsets)
    return StripedSystem(a, rhs, stripes, build_comm_plan(a, stripes))


def build_comm_plan(a: sp.csr_matrix, stripes: list) -> list:
    """plan[p][q] = sorted unique columns of stripe-p rows in stripe q."""
    plans = []
    for p, (s, e) in enumerate(stripes):
        cols = np.unique(a[s:e].indices)
        plan = {}
        for q, (qs, qe) in enumerate(stripes):
            if q == p:
                continue
            plan[q] = cols[(cols >= qs) & (cols < qe)]
        plans.append(plan)
    return plans


class _StripedKernels:
    """Per-stripe matvec and fixed-order reductions shared by the solvers."""

    def __init__(self, system: StripedSystem):
        self.stripes = system.stripes
        self.blocks = [system.matrix[s:e] for s, e in system.stripes]

    def matvec(self, x, out, stripe_ids):
        for p in stripe_ids:
            s, e = self.stripes[p]
            out[s:e] = self.blocks[p] @ x

    def partial_dot(self, x, y, partials, stripe_ids):
        for p in stripe_ids:
            s, e = self.stripes[p]
            partials[p] = float(x[s:e] @ y[s:e])

    @staticmethod
    def reduce(partials) -> float:
        # stripe-major order: identical for every thread count
        total = 0.0
        for v in partials:
            total += v
        return total


def _pcg(system: StripedSystem, rtol: float, maxit: int | None, threads: int):
    n = system.n
    if n == 0:
        return np.zeros(0), SolveReport(0, 0.0, [], 0, 0, 0.0, [], True)
    if maxit is None:
        maxit = 10 * n
    diag = system.matrix.diagonal()
    if np.any(diag <= 0.0):
        raise SolverError("non-positive diagonal entry; system not SPD")
    inv_diag = 1.0 / diag
    kern = _StripedKernels(system)
    n_stripes = len(system.stripes)
    if threads < 1 or threads > n_stripes:
        raise SolverError(f"threads must be in 1..{n_stripes}")
    groups = [list(range(p, n_stripes, threads)) for p in range(threads)]

    b = system.rhs
    x = np.zeros(n)
    r = b.copy()
    z = inv_diag * r
    p_vec = z.copy()
    ap = np.empty(n)
    partials = np.zeros(n_stripes)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return x, SolveReport(
            0, 0.0, system.halo_sizes(), system.comm_volume(),
            system.message_count(), 0.0, [], True,
        )

    state = {"rz": 0.0, "pap": 0.0, "stop": False, "err": None}
    history = []
    barrier = threading.Barrier(threads)
    t0 = time.perf_counter()

    def dot(xv, yv, my):
        if threads > 1:
            barrier.wait()  # previous reduce must finish before reuse
        kern.partial_dot(xv, yv, partials, my)
        if threads > 1:
            barrier.wait()
        return kern.reduce(partials)

    def worker(wid):
        nonlocal x, r, z, p_vec
        my = groups[wid]
        try:
            rz = dot(r, z, my)
            if wid == 0:
                state["rz"] = rz
                history.append(np.sqrt(max(rz, 0.0)))
            for it in range(maxit):
                kern.matvec(p_vec, ap, my)  # halo read: off-stripe p entries
                if threads > 1:
                    barrier.wait()
                pap = dot(p_vec, ap, my)
                if wid == 0:
                    if pap <= 0.0:
                        state["err"] = SolverError("p'Ap <= 0: breakdown")
                        state["stop"] = True
                    else:
                        state["alpha"] = state["rz"] / pap
                if threads > 1:
                    barrier.wait()
                if state["stop"]:
                    return
                alpha = state["alpha"]
                for sp_ in my:
                    s, e = kern.stripes[sp_]
                    x[s:e] += alpha * p_vec[s:e]
                    r[s:e] -= alpha * ap[s:e]
                    z[s:e] = inv_diag[s:e] * r[s:e]
                if threads > 1:
                    barrier.wait()
                rz_new = dot(r, z, my)
                rn = dot(r, r, my)
                if wid == 0:
                    history.append(np.sqrt(max(rz_new, 0.0)))
                    state["beta"] = rz_new / state["rz"]
                    state["rz"] = rz_new
                    state["iters"] = it + 1
                    state["rel"] = np.sqrt(rn) / bnorm
                    if state["rel"] <= rtol:
                        state["stop"] = True
                        state["converged"] = True
                if threads > 1:
                    barrier.wait()
                beta = state["beta"]
                for sp_ in my:
                    s, e = kern.stripes[sp_]
                    p_vec[s:e] = z[s:e] + beta * p_vec[s:e]
                if threads > 1:
                    barrier.wait()
                if state["stop"]:
                    return
        except Exception as exc:  # surface worker failures to the caller
            state["err"] = exc
            state["stop"] = True

    if threads == 1:
        worker(0)
    else:
        ts = [threading.Thread(target=worker, args=(w,)) for w in range(threads)]
        for t in ts:
            t.start()
        for t in ts:
            t.join()
    if state["err"] is not None:
        raise state["err"]
    wall = time.perf_counter() - t0
    iters = state.get("iters", 0)
    rel = state.get("rel", 1.0)
    converged = state.get("converged", False)
    report = SolveReport(
        iterations=iters,
        relative_residual=rel,
        halo_sizes=system.halo_sizes(),
        comm_volume=system.comm_volume(),
        message_count=system.message_count(),
        wall_time=wall,
        residual_history=history,
        converged=converged,
    )
    return x, report


def pcg_jacobi(
    system: StripedSystem, rtol: float = 1e-8, maxit: int | None = None
):
    """Jacobi-preconditioned CG; stops at ||r||/||b|| <= rtol or maxit."""
    return _pcg(system, rtol, maxit, threads=1)


def run_parallel(
    system: StripedSystem,
    threads: int,
    rtol: float = 1e-8,
    maxit: int | None = None,
):
    """Worker-per-stripe solve; bitwise identical to the sequential path."""
    x, report = _pcg(system, rtol, maxit, threads=threads)
    return x, report


def write_matrix_market(system: StripedSystem, path) -> None:
    scipy.io.mmwrite(str(path), system.matrix, symmetry="symmetric")


def write_vector(v: np.ndarray, path) -> None:
    np.savetxt(str(path), v)
