"""Discrete fracture network geometry.

A network is a set of planar convex polygonal fractures in 3D.  Pairwise
fracture intersections are stored as traces together with the index map
``IT(m) = (r, s)``; points where three traces meet are cross points with
the map ``ICP(t) = (r, s, q)``.  All index maps are 1-based and ascending.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GeometryError",
    "DegenerateIntersectionError",
    "Fracture",
    "Trace",
    "CrossPoint",
    "DFN",
    "GeneratorSpec",
    "intersect_fractures",
    "compute_traces",
    "detect_cross_points",
    "generate_dfn",
    "load_dfn",
    "save_dfn",
]


class GeometryError(ValueError):
    """Invalid or degenerate geometric input."""


class DegenerateIntersectionError(GeometryError):
    """Four or more traces meet at a single point."""


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise GeometryError("zero-length vector")
    return v / n


def _polygon_normal(vertices: np.ndarray) -> np.ndarray:
    """Newell normal of a 3D polygon (not normalized)."""
    v = vertices
    w = np.roll(v, -1, axis=0)
    return np.array(
        [
            np.sum((v[:, 1] - w[:, 1]) * (v[:, 2] + w[:, 2])),
            np.sum((v[:, 2] - w[:, 2]) * (v[:, 0] + w[:, 0])),
            np.sum((v[:, 0] - w[:, 0]) * (v[:, 1] + w[:, 1])),
        ]
    )


@dataclass(frozen=True)
class PlaneBasis:
    """Orthonormal in-plane frame: origin plus two axes spanning the plane."""

    origin: np.ndarray
    u: np.ndarray
    v: np.ndarray
    normal: np.ndarray

    def to_local(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(points) - self.origin
        return np.column_stack((p @ self.u, p @ self.v))

    def to_world(self, points2d: np.ndarray) -> np.ndarray:
        q = np.atleast_2d(points2d)
        return self.origin + np.outer(q[:, 0], self.u) + np.outer(q[:, 1], self.v)

    def offset(self) -> float:
        return float(self.normal @ self.origin)


@dataclass(frozen=True)
class Fracture:
    """Planar convex polygon, id is the 1-based fracture index."""

    id: int
    vertices: np.ndarray  # (n, 3), ordered
    plane_basis: PlaneBasis = field(compare=False)

    @staticmethod
    def from_vertices(fid: int, vertices, eps_geom: float = 1e-12) -> "Fracture":
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 3:
            raise GeometryError(f"fracture {fid}: need >= 3 vertices in 3D")
        normal = _polygon_normal(v)
        area2 = np.linalg.norm(normal)
        if area2 <= 2.0 * eps_geom**2:
            raise GeometryError(f"fracture {fid}: degenerate polygon")
        n = normal / area2
        origin = v.mean(axis=0)
        dev = np.abs((v - origin) @ n)
        diam = np.max(np.linalg.norm(v - origin, axis=1))
        if np.max(dev) > max(eps_geom, 1e-9 * diam):
            raise GeometryError(f"fracture {fid}: vertices not coplanar")
        u = _unit(v[1] - v[0] - ((v[1] - v[0]) @ n) * n)
        basis = PlaneBasis(origin=origin, u=u, v=np.cross(n, u), normal=n)
        loc = basis.to_local(v)
        if _signed_area(loc) < 0.0:
            v = v[::-1].copy()
            loc = basis.to_local(v)
        if not _is_convex(loc, eps_geom):
            raise GeometryError(f"fracture {fid}: polygon not convex")
        f = Fracture(id=fid, vertices=v, plane_basis=basis)
        return f

    @property
    def local_polygon(self) -> np.ndarray:
        return self.plane_basis.to_local(self.vertices)

    def area(self) -> float:
        return _signed_area(self.local_polygon)

    def diameter(self) -> float:
        d = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((d**2).sum(axis=2).max()))


def _signed_area(poly2d: np.ndarray) -> float:
    x, y = poly2d[:, 0], poly2d[:, 1]
    # shoelace with slice-based shift (np.roll is slow for tiny polygons)
    return 0.5 * (
        float(x[:-1] @ y[1:] - x[1:] @ y[:-1]) + float(x[-1] * y[0] - x[0] * y[-1])
    )


def _is_convex(poly2d: np.ndarray, eps: float) -> bool:
    """CCW polygon convexity; collinear vertices are allowed."""
    n = len(poly2d)
    e = np.roll(poly2d, -1, axis=0) - poly2d
    cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    scale = np.max(np.abs(e)) ** 2 + 1.0
    return bool(np.all(cross >= -1e-12 * scale - eps)) and n >= 3


@dataclass(frozen=True)
class Trace:
    """Intersection segment of two fractures; ``it_pair = (r, s)`` with r < s."""

    id: int
    endpoints: np.ndarray  # (2, 3)
    it_pair: tuple[int, int]

    def length(self) -> float:
        return float(np.linalg.norm(self.endpoints[1] - self.endpoints[0]))

    def direction(self) -> np.ndarray:
        return _unit(self.endpoints[1] - self.endpoints[0])

    def point_at(self, t: float) -> np.ndarray:
        return self.endpoints[0] + t * (self.endpoints[1] - self.endpoints[0])

    def param_of(self, p: np.ndarray) -> float:
        d = self.endpoints[1] - self.endpoints[0]
        return float((p - self.endpoints[0]) @ d / (d @ d))

    def distance(self, p: np.ndarray) -> float:
        t = np.clip(self.param_of(p), 0.0, 1.0)
        return float(np.linalg.norm(p - self.point_at(t)))


@dataclass(frozen=True)
class CrossPoint:
    """Meeting point of exactly three traces, hence three fractures."""

    id: int
    point: np.ndarray
    icp_triple: tuple[int, int, int]
    incident_traces: tuple[int, int, int]


@dataclass
class DFN:
    """Immutable-after-construction fracture network."""

    fractures: list[Fracture]
    traces: list[Trace]
    cross_points: list[CrossPoint]
    eps_geom: float

    def fracture(self, r: int) -> Fracture:
        return self.fractures[r - 1]

    def trace(self, m: int) -> Trace:
        return self.traces[m - 1]

    def cross_point(self, t: int) -> CrossPoint:
        return self.cross_points[t - 1]

    @property
    def n_fractures(self) -> int:
        return len(self.fractures)

    @property
    def n_traces(self) -> int:
        return len(self.traces)

    def traces_of_fracture(self, r: int) -> list[Trace]:
        return [t for t in self.traces if r in t.it_pair]

    def diameter(self) -> float:
        pts = np.vstack([f.vertices for f in self.fractures])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def validate(self) -> None:
        ids = [f.id for f in self.fractures]
        if ids != list(range(1, len(ids) + 1)):
            raise GeometryError("fracture ids must be 1..#F contiguous")
        seen_pairs: dict[tuple, int] = {}
        for tr in self.traces:
            r, s = tr.it_pair
            if not (1 <= r < s <= len(ids)):
                raise GeometryError(f"trace {tr.id}: bad it_pair {tr.it_pair}")
            if tr.length() <= self.eps_geom:
                raise GeometryError(f"trace {tr.id}: degenerate segment")
            for e in tr.endpoints:
                for rid in tr.it_pair:
                    b = self.fracture(rid).plane_basis
                    if abs(b.normal @ e - b.offset()) > 100 * self.eps_geom:
                        raise GeometryError(
                            f"trace {tr.id}: endpoint off plane of F{rid}"
                        )
            key = tuple(sorted(map(tuple, np.round(tr.endpoints, 12))))
            if key in seen_pairs:
                raise GeometryError(
                    f"traces {seen_pairs[key]} and {tr.id} share both endpoints"
                )
            seen_pairs[key] = tr.id
        for cp in self.cross_points:
            if len(set(cp.incident_traces)) != 3:
                raise GeometryError(f"cross point {cp.id}: needs 3 distinct traces")
            pairs = {self.trace(m).it_pair for m in cp.incident_traces}
            r, s, q = cp.icp_triple
            if not (r < s < q):
                raise GeometryError(f"cross point {cp.id}: triple not ascending")
            if pairs != {(r, s), (r, q), (s, q)}:
                raise GeometryError(
                    f"cross point {cp.id}: traces do not pairwise connect triple"
                )
            for m in cp.incident_traces:
                if self.trace(m).distance(cp.point) > 100 * self.eps_geom:
                    raise GeometryError(f"cross point {cp.id}: off trace {m}")


def default_eps(fractures: list[Fracture]) -> float:
    """Single geometric tolerance: 1e-9 of the bounding-box diameter."""
    pts = np.vstack([f.vertices for f in fractures])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    diam = float(np.linalg.norm(hi - lo))
    return 1e-9 * max(diam, 1.0)


def _clip_line_to_polygon(
    p0: np.ndarray, u: np.ndarray, frac: Fracture
) -> tuple[float, float] | None:
    """Clip the line p0 + t*u against a convex fracture polygon.

    Returns the parameter interval of the line inside the polygon, or None.
    """
    basis = frac.plane_basis
    poly = frac.local_polygon
    a = basis.to_local(p0)[0]
    d = np.array([u @ basis.u, u @ basis.v])
    tmin, tmax = -np.inf, np.inf
    n = len(poly)
    for i in range(n):
        e = poly[(i + 1) % n] - poly[i]
        # inward normal of a CCW edge
        nrm = np.array([-e[1], e[0]])
        denom = nrm @ d
        num = nrm @ (poly[i] - a)
        if abs(denom) < 1e-15 * (np.linalg.norm(nrm) + 1.0):
            if num > 0.0:
                return None  # line entirely outside this half plane
            continue
        t = num / denom
        if denom > 0.0:
            tmin = max(tmin, t)
        else:
            tmax = min(tmax, t)
        if tmin > tmax:
            return None
    if not np.isfinite(tmin) or not np.isfinite(tmax):
        return None
    return tmin, tmax


def intersect_fractures(
    f_a: Fracture, f_b: Fracture, eps_geom: float
) -> Trace | None:
    """Intersection segment of two convex fractures, or None.

    The plane-plane line is clipped to both polygons; a segment shorter
    than ``eps_geom`` counts as no intersection.
    """
    n1, n2 = f_a.plane_basis.normal, f_b.plane_basis.normal
    d = np.cross(n1, n2)
    dd = d @ d
    if dd < 1e-24:
        return None  # parallel (or coplanar) planes
    c1, c2 = f_a.plane_basis.offset(), f_b.plane_basis.offset()
    p0 = (c1 * np.cross(n2, d) + c2 * np.cross(d, n1)) / dd
    u = d / np.sqrt(dd)
    ia = _clip_line_to_polygon(p0, u, f_a)
    if ia is None:
        return None
    ib = _clip_line_to_polygon(p0, u, f_b)
    if ib is None:
        return None
    t0, t1 = max(ia[0], ib[0]), min(ia[1], ib[1])
    if t1 - t0 <= eps_geom:
        return None
    e0, e1 = p0 + t0 * u, p0 + t1 * u
    if tuple(e1) < tuple(e0):
        e0, e1 = e1, e0
    r, s = sorted((f_a.id, f_b.id))
    return Trace(id=0, endpoints=np.array([e0, e1]), it_pair=(r, s))


def compute_traces(fractures: list[Fracture], eps_geom: float) -> list[Trace]:
    """All pairwise traces, numbered in lexicographic (r, s) order."""
    traces = []
    nf = len(fractures)
    for i in range(nf):
        for j in range(i + 1, nf):
            tr = intersect_fractures(fractures[i], fractures[j], eps_geom)
            if tr is not None:
                traces.append(
                    Trace(id=len(traces) + 1, endpoints=tr.endpoints, it_pair=tr.it_pair)
                )
    return traces


def _segment_meeting_point(
    a: Trace, b: Trace, eps: float
) -> np.ndarray | None:
    """Closest-approach point of two trace segments if they touch within eps."""
    p, q = a.endpoints[0], b.endpoints[0]
    du = a.endpoints[1] - p
    dv = b.endpoints[1] - q
    w = p - q
    aa, bb, cc = du @ du, du @ dv, dv @ dv
    dd, ee = du @ w, dv @ w
    denom = aa * cc - bb * bb
    if denom < 1e-14 * aa * cc + 1e-30:
        return None  # near-parallel segments
    s = np.clip((bb * ee - cc * dd) / denom, 0.0, 1.0)
    t = np.clip((aa * ee - bb * dd) / denom, 0.0, 1.0)
    pa = p + s * du
    pb = q + t * dv
    if np.linalg.norm(pa - pb) > eps:
        return None
    return 0.5 * (pa + pb)


def detect_cross_points(dfn_or_traces, eps_geom: float | None = None) -> list[CrossPoint]:
    """Points where exactly three traces meet.

    Raises DegenerateIntersectionError when four or more traces meet at one
    point; points touched by only two traces are ignored.
    """
    if isinstance(dfn_or_traces, DFN):
        traces = dfn_or_traces.traces
        eps = eps_geom if eps_geom is not None else dfn_or_traces.eps_geom
    else:
        traces = list(dfn_or_traces)
        if eps_geom is None:
            raise ValueError("eps_geom required when passing a trace list")
        eps = eps_geom
    meet_eps = 10.0 * eps
    n = len(traces)
    if n < 3:
        return []
    p0 = np.array([t.endpoints[0] for t in traces])
    p1 = np.array([t.endpoints[1] for t in traces])
    dirs = p1 - p0
    # pairwise segment closest approach, vectorized over all (i < j)
    iu, ju = np.triu_indices(n, 1)
    du, dv = dirs[iu], dirs[ju]
    w = p0[iu] - p0[ju]
    aa = np.einsum("ij,ij->i", du, du)
    bb = np.einsum("ij,ij->i", du, dv)
    cc = np.einsum("ij,ij->i", dv, dv)
    dd = np.einsum("ij,ij->i", du, w)
    ee = np.einsum("ij,ij->i", dv, w)
    denom = aa * cc - bb * bb
    ok = denom >= 1e-14 * aa * cc + 1e-30  # skip near-parallel pairs
    safe = np.where(ok, denom, 1.0)
    s = np.clip((bb * ee - cc * dd) / safe, 0.0, 1.0)
    t = np.clip((aa * ee - bb * dd) / safe, 0.0, 1.0)
    pa = p0[iu] + s[:, None] * du
    pb = p0[ju] + t[:, None] * dv
    ok &= np.linalg.norm(pa - pb, axis=1) <= meet_eps
    candidates = 0.5 * (pa + pb)[ok]

    points: list[np.ndarray] = []
    for p in candidates:
        if points and np.min(
            np.linalg.norm(np.asarray(points) - p, axis=1)
        ) <= meet_eps:
            continue
        points.append(p)

    sq = np.einsum("ij,ij->i", dirs, dirs)
    out: list[CrossPoint] = []
    for p in points:
        tpar = np.clip(np.einsum("ij,ij->i", p - p0, dirs) / sq, 0.0, 1.0)
        dist = np.linalg.norm(p0 + tpar[:, None] * dirs - p, axis=1)
        incident = [traces[i] for i in np.flatnonzero(dist <= meet_eps)]
        if len(incident) < 3:
            continue
        if len(incident) > 3:
            raise DegenerateIntersectionError(
                f"{len(incident)} traces meet at {p}; only triples are supported"
            )
        fracs = sorted({r for t in incident for r in t.it_pair})
        if len(fracs) != 3:
            continue
        out.append(
            CrossPoint(
                id=len(out) + 1,
                point=p,
                icp_triple=tuple(fracs),
                incident_traces=tuple(t.id for t in incident),
            )
        )
    return out


def build_dfn(
    fractures: list[Fracture],
    traces: list[Trace] | None = None,
    cross_points: list[CrossPoint] | None = None,
    eps_geom: float | None = None,
) -> DFN:
    """Assemble and validate a DFN, computing traces/cross points if absent."""
    eps = eps_geom if eps_geom is not None else default_eps(fractures) if fractures else 1e-12
    if traces is None:
        traces = compute_traces(fractures, eps)
    if cross_points is None:
        cross_points = detect_cross_points(traces, eps)
    dfn = DFN(fractures=fractures, traces=traces, cross_points=cross_points, eps_geom=eps)
    dfn.validate()
    return dfn


@dataclass(frozen=True)
class GeneratorSpec:
    """Random rectangle network: centers in a box, seeded orientation/size."""

    n_fractures: int
    domain_min: tuple[float, float, float] = (0.0, 0.0, 0.0)
    domain_max: tuple[float, float, float] = (1.0, 1.0, 1.0)
    size_min: float = 0.4
    size_max: float = 0.9
    max_retries: int = 50


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def generate_dfn(spec: GeneratorSpec, seed: int) -> DFN:
    """Deterministic random DFN of rotated rectangles; pure in (spec, seed)."""
    rng = np.random.default_rng(seed)
    lo = np.asarray(spec.domain_min, dtype=float)
    hi = np.asarray(spec.domain_max, dtype=float)
    for _ in range(spec.max_retries):
        fractures = []
        ok = True
        for fid in range(1, spec.n_fractures + 1):
            center = lo + rng.random(3) * (hi - lo)
            half = 0.5 * rng.uniform(spec.size_min, spec.size_max, size=2)
            rot = _random_rotation(rng)
            corners = np.array(
                [
                    [-half[0], -half[1], 0.0],
                    [half[0], -half[1], 0.0],
                    [half[0], half[1], 0.0],
                    [-half[0], half[1], 0.0],
                ]
            )
            verts = center + corners @ rot.T
            try:
                fractures.append(Fracture.from_vertices(fid, verts))
            except GeometryError:
                ok = False
                break
        if not ok:
            continue
        try:
            return build_dfn(fractures)
        except DegenerateIntersectionError:
            continue  # exact multi-trace meeting: resample
    raise GeometryError(
        f"DFN generation failed after {spec.max_retries} attempts"
    )


# --- structured-text (JSON) serialization -------------------------------

def dfn_to_dict(dfn: DFN) -> dict:
    return {
        "fractures": [
            {"id": f.id, "vertices": f.vertices.tolist()} for f in dfn.fractures
        ],
        "traces": [
            {
                "id": t.id,
                "endpoints": t.endpoints.tolist(),
                "it_pair": list(t.it_pair),
            }
            for t in dfn.traces
        ],
        "cross_points": [
            {
                "id": c.id,
                "point": c.point.tolist(),
                "icp_triple": list(c.icp_triple),
                "incident_traces": list(c.incident_traces),
            }
            for c in dfn.cross_points
        ],
    }


def dfn_from_dict(data: dict) -> DFN:
    try:
        fractures = [
            Fracture.from_vertices(d["id"], d["vertices"]) for d in data["fractures"]
        ]
    except KeyError as exc:
        raise GeometryError(f"missing field in fracture record: {exc}") from exc
    fractures.sort(key=lambda f: f.id)
    traces = None
    if data.get("traces"):
        traces = [
            Trace(
                id=d["id"],
                endpoints=np.asarray(d["endpoints"], dtype=float),
                it_pair=tuple(d["it_pair"]),
            )
            for d in sorted(data["traces"], key=lambda d: d["id"])
        ]
    cross_points = None
    if data.get("cross_points"):
        cross_points = [
            CrossPoint(
                id=d["id"],
                point=np.asarray(d["point"], dtype=float),
                icp_triple=tuple(d["icp_triple"]),
                incident_traces=tuple(d["incident_traces"]),
            )
            for d in sorted(data["cross_points"], key=lambda d: d["id"])
        ]
    if not fractures:
        return DFN(fractures=[], traces=traces or [], cross_points=cross_points or [], eps_geom=1e-12)
    return build_dfn(fractures, traces=traces, cross_points=cross_points)


def save_dfn(dfn: DFN, path) -> None:
    with open(path, "w") as fh:
        json.dump(dfn_to_dict(dfn), fh, indent=1)


def load_dfn(path) -> DFN:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GeometryError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return dfn_from_dict(data)
