"""Graph partitioning with edge-cut minimization under node-weight balance.

The built-in engine is a multilevel recursive bisection: heavy-edge
matching coarsens the graph, a greedy growing heuristic seeds each
bisection, and boundary Fiduccia-Mattheyses passes refine on the way back
up.  Partition files and the graph file format allow external partitioners
to be used as drop-in replacements.

Also computes the network quality metrics: the cut C (number of traces
joining fractures on different processes) and the imbalance I = D_min /
D_max over per-process Dof counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dgraph import DfnGraph, NodeLabel
from .geometry import DFN
from .mesh import DofCounts

__all__ = [
    "PartitionError",
    "BalanceError",
    "Partition",
    "PartitionMetrics",
    "partition_multilevel",
    "fracture_assignment",
    "compute_metrics",
    "export_graph",
    "save_partition",
    "import_partition",
]

COARSE_FLOOR = 200  # stop coarsening at max(30*k, COARSE_FLOOR) nodes
GROW_TRIES = 4  # random restarts of the initial bisection
FM_MAX_PASSES = 10


class PartitionError(RuntimeError):
    pass


class BalanceError(PartitionError):
    """A single node weight exceeds the per-part balance cap."""


@dataclass
class Partition:
    part_of: np.ndarray  # node -> part id
    k: int
    strategy_tag: str = ""
    objective: str = "EDGE_CUT"

    def validate(self) -> None:
        if len(self.part_of) == 0:
            return
        present = np.unique(self.part_of)
        if present.min() < 0 or present.max() >= self.k:
            raise PartitionError("part ids out of range")
        if len(present) != self.k:
            raise PartitionError("some parts are empty")


@dataclass
class PartitionMetrics:
    cut_C: int
    imbalance_I: float
    graph_edge_cut: int
    dof_per_part: list = field(default_factory=list)


def edge_cut(g: DfnGraph, part_of: np.ndarray) -> int:
    """Weighted edge cut, recomputed by full scan."""
    total = 0
    for u in range(g.n_nodes):
        pu = part_of[u]
        for v, w in zip(g.neighbors(u), g.edge_weights_of(u)):
            if v > u and part_of[v] != pu:
                total += int(w)
    return total


# --- multilevel engine -------------------------------------------------------


class _Graph:
    """Lightweight working graph (adjacency lists of (neighbor, weight))."""

    __slots__ = ("adj", "nwts")

    def __init__(self, adj, nwts):
        self.adj = adj
        self.nwts = nwts

    @property
    def n(self):
        return len(self.nwts)

    @staticmethod
    def from_dfngraph(g: DfnGraph) -> "_Graph":
        adj = [
            list(zip(g.neighbors(u).tolist(), g.edge_weights_of(u).tolist()))
            for u in range(g.n_nodes)
        ]
        return _Graph(adj, list(map(int, g.node_weights)))

    def subgraph(self, nodes) -> "_Graph":
        index = {u: i for i, u in enumerate(nodes)}
        adj = []
        for u in nodes:
            adj.append([(index[v], w) for v, w in self.adj[u] if v in index])
        return _Graph(adj, [self.nwts[u] for u in nodes])


def _coarsen(g: _Graph, rng) -> tuple["_Graph", list]:
    """One heavy-edge matching pass; returns coarse graph and fine->coarse map."""
    n = g.n
    order = list(rng.permutation(n))
    match = [-1] * n
    for u in order:
        if match[u] >= 0:
            continue
        best, bestw = -1, -1
        for v, w in g.adj[u]:
            if match[v] < 0 and v != u and (w > bestw or (w == bestw and v < best)):
                best, bestw = v, w
        if best >= 0:
            match[u], match[best] = best, u
        else:
            match[u] = u
    cmap = [-1] * n
    nc = 0
    for u in range(n):
        if cmap[u] < 0:
            cmap[u] = nc
            cmap[match[u]] = nc
            nc += 1
    cwts = [0] * nc
    cedges: list[dict] = [dict() for _ in range(nc)]
    for u in range(n):
        cu = cmap[u]
        for v, w in g.adj[u]:
            cv = cmap[v]
            if cv != cu:
                cedges[cu][cv] = cedges[cu].get(cv, 0) + w
        cwts[cu] += g.nwts[u]
    # matched pairs contribute their weight twice; halve is wrong -- weights
    # were added once per fine node, which is what we want
    cadj = [list(d.items()) for d in cedges]
    return _Graph(cadj, cwts), cmap


def _grow_bisection(g: _Graph, target0: float, rng) -> np.ndarray:
    """Greedy graph growing: BFS-grow side 0 until its weight reaches target."""
    n = g.n
    side = np.ones(n, dtype=np.int8)
    start = int(rng.integers(n))
    w0 = 0
    frontier = [start]
    seen = {start}
    while frontier and w0 < target0:
        u = frontier.pop(0)
        side[u] = 0
        w0 += g.nwts[u]
        for v, _w in sorted(g.adj[u]):
            if v not in seen:
                seen.add(v)
                frontier.append(v)
        if not frontier:
            rest = [v for v in range(n) if side[v] == 1 and v not in seen]
            if rest and w0 < target0:
                frontier.append(rest[0])
                seen.add(rest[0])
    return side


def _fm_refine(g: _Graph, side, caps, min_counts) -> int:
    """Boundary FM passes; mutates side, returns final cut.

    caps[i] is the maximum allowed weight of side i; min_counts[i] the
    minimum node count.  A pass never increases the cut: moves are rolled
    back to the best prefix.
    """
    n = g.n
    w = [0, 0]
    cnt = [0, 0]
    for u in range(n):
        w[side[u]] += g.nwts[u]
        cnt[side[u]] += 1
    cut = 0
    for u in range(n):
        for v, ew in g.adj[u]:
            if v > u and side[u] != side[v]:
                cut += ew
    import heapq

    def feasible(wts):
        return wts[0] <= caps[0] and wts[1] <= caps[1]

    def overflow(wts):
        return max(0.0, wts[0] - caps[0]) + max(0.0, wts[1] - caps[1])

    for _pass in range(FM_MAX_PASSES):
        gain = [0] * n
        for u in range(n):
            for v, ew in g.adj[u]:
                gain[u] += ew if side[v] != side[u] else -ew
        heaps = ([], [])
        for u in range(n):
            # ties broken toward the lowest node id for determinism
            heapq.heappush(heaps[side[u]], (-gain[u], u))
        locked = [False] * n
        stamp = list(gain)
        moves = []
        cur_cut = cut
        start_key = (0 if feasible(w) else 1, overflow(w), cut)
        best_key = start_key
        best_len = 0
        ww = list(w)
        cc = list(cnt)

        def pop_side(s):
            h = heaps[s]
            while h:
                negg, u = h[0]
                if locked[u] or -negg != stamp[u] or side[u] != s:
                    heapq.heappop(h)
                    continue
                return u
            return None

        while True:
            # choose source side: forced when a side is overweight, else the
            # best-gain move whose target stays within its cap, else heavier
            cand = (pop_side(0), pop_side(1))
            if cand == (None, None):
                break
            if ww[0] > caps[0]:
                u = cand[0] if cand[0] is not None else cand[1]
            elif ww[1] > caps[1]:
                u = cand[1] if cand[1] is not None else cand[0]
            else:
                allowed = []
                for s in (0, 1):
                    u = cand[s]
                    if u is None:
                        continue
                    if cc[s] - 1 < min_counts[s]:
                        continue
                    if ww[1 - s] + g.nwts[u] <= caps[1 - s]:
                        allowed.append((-gain[u], u))
                if allowed:
                    u = min(allowed)[1]
                else:
                    heavier = 0 if ww[0] >= ww[1] else 1
                    u = cand[heavier] if cand[heavier] is not None else cand[1 - heavier]
            src, dst = side[u], 1 - side[u]
            heapq.heappop(heaps[src])
            nw = g.nwts[u]
            if cc[src] - 1 < min_counts[src]:
                locked[u] = True
                continue
            locked[u] = True
            side[u] = dst
            ww[src] -= nw
            ww[dst] += nw
            cc[src] -= 1
            cc[dst] += 1
            cur_cut -= gain[u]
            moves.append(u)
            for v, ew in g.adj[u]:
                if not locked[v]:
                    gain[v] += 2 * ew if side[v] == src else -2 * ew
                    stamp[v] = gain[v]
                    heapq.heappush(heaps[side[v]], (-gain[v], v))
            key = (0 if feasible(ww) else 1, overflow(ww), cur_cut)
            if key < best_key:
                best_key = key
                best_len = len(moves)
        # roll back to the best prefix of the move sequence
        for u in moves[best_len:]:
            side[u] = 1 - side[u]
        w = [0, 0]
        cnt = [0, 0]
        for u in range(n):
            w[side[u]] += g.nwts[u]
            cnt[side[u]] += 1
        cut = best_key[2]
        if not (best_len > 0 and best_key < start_key):
            break
    return cut


def _multilevel_bisect(g: _Graph, frac0: float, caps, min_counts, rng) -> np.ndarray:
    """Bisect g into sides (0, 1) with side-0 weight near frac0 * total."""
    levels = []
    cur = g
    while cur.n > COARSE_FLOOR:
        coarse, cmap = _coarsen(cur, rng)
        if coarse.n >= 0.95 * cur.n:
            break
        levels.append((cur, cmap))
        cur = coarse
    total = sum(cur.nwts)
    target0 = frac0 * total
    best_side, best_cut = None, None
    for _try in range(GROW_TRIES):
        side = _grow_bisection(cur, target0, rng)
        if side.min() == side.max():  # degenerate growth
            side[int(rng.integers(cur.n))] ^= 1
        cut = _fm_refine(cur, side, caps, min_counts)
        if best_cut is None or cut < best_cut:
            best_side, best_cut = side.copy(), cut
    side = best_side
    for fine, cmap in reversed(levels):
        fine_side = np.array([side[cmap[u]] for u in range(fine.n)], dtype=np.int8)
        _fm_refine(fine, fine_side, caps, min_counts)
        side = fine_side
    return side


def _kway_polish(g: _Graph, parts, k, cap, rng, rounds=8) -> None:
    """Greedy single-node moves: improve cut, repair balance; in place."""
    n = g.n
    counts = np.bincount(parts, minlength=k)
    weights = np.zeros(k, dtype=np.int64)
    for u in range(n):
        weights[parts[u]] += g.nwts[u]
    for _ in range(rounds):
        changed = False
        for u in rng.permutation(n):
            pu = parts[u]
            if counts[pu] <= 1:
                continue
            link = {}
            for v, w in g.adj[u]:
                link[parts[v]] = link.get(parts[v], 0) + w
            own = link.get(pu, 0)
            over = weights[pu] > cap
            best, best_key = pu, None
            targets = link.keys() if not over else range(k)
            for q in targets:
                if q == pu:
                    continue
                gain = link.get(q, 0) - own
                fits = weights[q] + g.nwts[u] <= cap
                if over:
                    # repair: any move into a part with room, least cut damage
                    if not fits:
                        continue
                    key = (-gain, int(weights[q]))
                    if best_key is None or key < best_key:
                        best, best_key = q, key
                else:
                    if fits and gain > 0 and (best_key is None or -gain < best_key[0]):
                        best, best_key = q, (-gain, int(weights[q]))
            if best != pu:
                weights[pu] -= g.nwts[u]
                weights[best] += g.nwts[u]
                counts[pu] -= 1
                counts[best] += 1
                parts[u] = best
                changed = True
        if not changed:
            break


def _swap_repair(g: _Graph, parts, k, cap) -> bool:
    """Reduce total balance overflow to zero by moves and pairwise swaps.

    Greedy: each step applies the move or swap that most reduces the
    total overflow Sum_p max(0, weight_p - cap), tie-breaking on cut
    damage.  Overflow decreases strictly per step, so this terminates.
    """
    n = g.n
    weights = np.zeros(k, dtype=np.int64)
    counts = np.bincount(parts, minlength=k)
    for u in range(n):
        weights[parts[u]] += g.nwts[u]

    def cut_delta(u, q):
        d = 0
        for v, w in g.adj[u]:
            if parts[v] == parts[u]:
                d += w
            elif parts[v] == q:
                d -= w
        return d

    def over(w):
        return max(0.0, float(w) - cap)

    for _ in range(200):
        overweight = [p for p in range(k) if weights[p] > cap]
        if not overweight:
            return True
        p = max(overweight, key=lambda q: weights[q])
        base = over(weights[p])
        members = [u for u in range(n) if parts[u] == p]
        best = None  # key = (new overflow of {p,q}, cut delta, -shed weight)
        if counts[p] > 1:
            for u in members:
                wu = g.nwts[u]
                for q in range(k):
                    if q == p:
                        continue
                    new_of = over(weights[p] - wu) + over(weights[q] + wu)
                    if new_of >= base + over(weights[q]) - 1e-12:
                        continue
                    key = (new_of, cut_delta(u, q), -wu)
                    if best is None or key < best[0]:
                        best = (key, ("move", u, q, None))
        for u in members:
            wu = g.nwts[u]
            for v in range(n):
                q = parts[v]
                wv = g.nwts[v]
                if q == p or wv >= wu:
                    continue
                new_of = over(weights[p] - wu + wv) + over(weights[q] + wu - wv)
                if new_of >= base + over(weights[q]) - 1e-12:
                    continue
                key = (new_of, cut_delta(u, q) + cut_delta(v, p), wv - wu)
                if best is None or key < best[0]:
                    best = (key, ("swap", u, q, v))
        if best is None:
            return False
        _key, (kind, u, q, v) = best
        weights[p] -= g.nwts[u]
        weights[q] += g.nwts[u]
        counts[p] -= 1
        counts[q] += 1
        parts[u] = q
        if kind == "swap":
            weights[q] -= g.nwts[v]
            weights[p] += g.nwts[v]
            counts[q] -= 1
            counts[p] += 1
            parts[v] = p
    return bool(np.all(weights <= cap))


def partition_multilevel(
    g: DfnGraph, k: int, balance_tol: float = 0.03, seed: int = 0
) -> Partition:
    """Partition into k parts; deterministic in (graph, k, seed).

    Per-part weight is bounded by (1 + balance_tol) * ceil(total / k) on
    success; raises BalanceError when a single node already violates it.
    """
    if k < 1:
        raise PartitionError("k must be >= 1")
    if g.n_nodes < k:
        raise PartitionError(f"cannot split {g.n_nodes} nodes into {k} parts")
    parts = np.zeros(g.n_nodes, dtype=np.int64)
    if k == 1:
        return Partition(part_of=parts, k=1, strategy_tag=g.strategy_tag)
    wg = _Graph.from_dfngraph(g)
    total = sum(wg.nwts)
    cap = (1.0 + balance_tol) * np.ceil(total / k)
    if max(wg.nwts) > cap:
        raise BalanceError(
            f"node weight {max(wg.nwts)} exceeds balance cap {cap:.1f}"
        )
    last_err = None
    for attempt in range(5):
        rng = np.random.default_rng((seed, attempt))
        try:
            return _partition_once(g, wg, k, total, cap, rng)
        except BalanceError as exc:
            last_err = exc
    # balance-first fallback: longest-processing-time assignment, swap
    # repair to feasibility, then cut-improving polish under the cap
    parts = np.empty(g.n_nodes, dtype=np.int64)
    loads = np.zeros(k, dtype=np.int64)
    for u in sorted(range(g.n_nodes), key=lambda x: -wg.nwts[x]):
        p = int(np.argmin(loads))
        parts[u] = p
        loads[p] += wg.nwts[u]
    if not _swap_repair(wg, parts, k, cap):
        raise last_err
    _kway_polish(wg, parts, k, cap, np.random.default_rng((seed, 5)))
    p = Partition(part_of=parts, k=k, strategy_tag=g.strategy_tag)
    p.validate()
    weights = np.zeros(k, dtype=np.int64)
    for u in range(g.n_nodes):
        weights[parts[u]] += wg.nwts[u]
    if weights.max() > cap:
        raise last_err
    return p


def _partition_once(g, wg, k, total, cap, rng) -> Partition:
    parts = np.zeros(g.n_nodes, dtype=np.int64)
    next_part = [0]

    def rec(sub: _Graph, node_ids: np.ndarray, kk: int):
        if kk == 1:
            parts[node_ids] = next_part[0]
            next_part[0] += 1
            return
        k1 = kk // 2
        k2 = kk - k1
        caps = (k1 * cap, k2 * cap)
        side = _multilevel_bisect(sub, k1 / kk, caps, (k1, k2), rng)
        idx0 = np.nonzero(side == 0)[0]
        idx1 = np.nonzero(side == 1)[0]
        if len(idx0) < k1 or len(idx1) < k2:
            # force-feasible fallback: move lightest nodes across
            order = np.argsort([sub.nwts[u] for u in range(sub.n)])
            side = np.zeros(sub.n, dtype=np.int8)
            side[order[k1:]] = 1
            idx0 = np.nonzero(side == 0)[0]
            idx1 = np.nonzero(side == 1)[0]
        rec(sub.subgraph(list(idx0)), node_ids[idx0], k1)
        rec(sub.subgraph(list(idx1)), node_ids[idx1], k2)

    rec(wg, np.arange(g.n_nodes), k)
    _kway_polish(wg, parts, k, cap, rng)
    p = Partition(part_of=parts, k=k, strategy_tag=g.strategy_tag)
    p.validate()
    weights = np.zeros(k, dtype=np.int64)
    for u in range(g.n_nodes):
        weights[parts[u]] += wg.nwts[u]
    if weights.max() > cap:
        if not _swap_repair(wg, parts, k, cap):
            raise BalanceError(
                f"balance {weights.max()} > cap {cap:.1f} after refinement"
            )
        p.validate()
    return p


# --- fracture assignment and quality metrics ---------------------------------


def fracture_assignment(p: Partition, g: DfnGraph) -> dict:
    """Map fracture id -> part, from the FRACTURE-labeled graph nodes."""
    out = {}
    for u, (label, obj) in enumerate(g.node_labels):
        if label is NodeLabel.FRACTURE:
            out[obj] = int(p.part_of[u])
    if not out:
        raise PartitionError(f"graph {g.strategy_tag} carries no fracture nodes")
    return out


def compute_metrics(
    dfn: DFN,
    counts: DofCounts,
    assignment: dict,
    graph: DfnGraph | None = None,
    partition: Partition | None = None,
) -> PartitionMetrics:
    """Cut C, imbalance I and the weighted graph edge cut.

    D_i counts Dofs owned by process i: interface Dofs belong to the
    process of the lowest-index fracture of their trace / cross point.
    """
    k = max(assignment.values()) + 1 if assignment else 1
    cut_c = 0
    for tr in dfn.traces:
        r, s = tr.it_pair
        if assignment[r] != assignment[s]:
            cut_c += 1
    d = np.zeros(k, dtype=np.int64)
    for fid, part in assignment.items():
        d[part] += counts.per_fracture[fid]
    # shared Dofs are counted once per incident fracture above; remove the
    # copies owned by the non-lowest fractures
    cp_by_trace: dict = {}
    for cp in dfn.cross_points:
        if cp.id not in counts.free_cp_ids:
            continue
        for m in cp.incident_traces:
            cp_by_trace[m] = cp_by_trace.get(m, 0) + 1
        _r, s, q = cp.icp_triple
        d[assignment[s]] -= 1
        d[assignment[q]] -= 1
    for tr in dfn.traces:
        non_cp = counts.per_trace[tr.id] - cp_by_trace.get(tr.id, 0)
        d[assignment[tr.it_pair[1]]] -= non_cp
    imbalance = float(d.min() / d.max()) if d.max() > 0 else 1.0
    gcut = 0
    if graph is not None and partition is not None:
        gcut = edge_cut(graph, partition.part_of)
    else:
        pairs = {tr.it_pair for tr in dfn.traces}
        gcut = sum(1 for r, s in pairs if assignment[r] != assignment[s])
    return PartitionMetrics(
        cut_C=cut_c,
        imbalance_I=imbalance,
        graph_edge_cut=gcut,
        dof_per_part=d.tolist(),
    )


# --- external partitioner interop --------------------------------------------


def export_graph(g: DfnGraph, path) -> None:
    from .dgraph import write_graph_file

    write_graph_file(g, path)


def save_partition(p: Partition, path) -> None:
    with open(path, "w") as fh:
        fh.writelines(f"{int(x)}\n" for x in p.part_of)


def import_partition(path, n: int, k: int) -> Partition:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if len(lines) != n:
        raise PartitionError(f"{path}: expected {n} lines, found {len(lines)}")
    try:
        vals = np.array([int(x) for x in lines], dtype=np.int64)
    except ValueError as exc:
        raise PartitionError(f"{path}: non-integer part id: {exc}") from exc
    if vals.min() < 0 or vals.max() >= k:
        raise PartitionError(f"{path}: part id out of range [0, {k})")
    p = Partition(part_of=vals, k=k, strategy_tag="file")
    return p
