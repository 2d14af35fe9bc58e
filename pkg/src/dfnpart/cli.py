"""Experiment harness: partition tables, sparsity patterns, speedup
curves and the refinement imbalance-decay study, as CLI subcommands.

All outputs are CSV / plain-text files, bit-reproducible for a fixed
(config, seed) except wall-time columns.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dgraph, dofs, fem, geometry, mesh as meshmod, partition

STRATEGIES = ("Pg", "Wg", "Pb", "Wb", "Pt", "Wt", "MeshP")


@dataclass
class ExperimentConfig:
    dfn_file: str | None = None
    n_fractures: int = 16
    seed: int = 0
    n: int = 50  # target Dofs per fracture
    strategies: list = field(default_factory=lambda: ["Pg", "Wg"])
    parts: list = field(default_factory=lambda: [2, 4])
    scheme: str = "reordered"
    threads: list = field(default_factory=lambda: [1, 2])
    rtol: float = 1e-8
    rounds: int = 10
    repartition_every: int = 0  # 0 = never
    out: str = "out"

    def validate(self) -> None:
        if not self.strategies or not self.parts:
            raise ValueError("need at least one strategy and one part count")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        bad = [s for s in self.strategies if s not in STRATEGIES]
        if bad:
            raise ValueError(f"unknown strategies {bad}; choose from {STRATEGIES}")
        if self.scheme not in ("serial", "reordered"):
            raise ValueError("scheme must be serial or reordered")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if getattr(args, "config", None):
        with open(args.config) as fh:
            data = json.load(fh)
        for key, val in data.items():
            if not hasattr(cfg, key):
                raise ValueError(f"unknown config key {key!r}")
            setattr(cfg, key, val)
    overrides = {
        "dfn": "dfn_file",
        "seed": "seed",
        "n": "n",
        "scheme": "scheme",
        "rtol": "rtol",
        "out": "out",
        "rounds": "rounds",
        "repartition_every": "repartition_every",
        "n_fractures": "n_fractures",
    }
    for flag, attr in overrides.items():
        val = getattr(args, flag, None)
        if val is not None:
            setattr(cfg, attr, val)
    if getattr(args, "strategies", None):
        cfg.strategies = args.strategies.split(",")
    if getattr(args, "parts", None):
        cfg.parts = [int(x) for x in args.parts.split(",")]
    if getattr(args, "threads", None):
        cfg.threads = [int(x) for x in args.threads.split(",")]
    cfg.validate()
    return cfg


def _get_dfn(cfg: ExperimentConfig) -> geometry.DFN:
    if cfg.dfn_file:
        return geometry.load_dfn(cfg.dfn_file)
    spec = geometry.GeneratorSpec(n_fractures=cfg.n_fractures)
    return geometry.generate_dfn(spec, seed=cfg.seed)


def _build_graph(strategy, dfn, counts, msh):
    builders = {
        "Pg": lambda: dgraph.build_pg(dfn),
        "Wg": lambda: dgraph.build_wg(dfn, counts),
        "Pb": lambda: dgraph.build_pb(dfn),
        "Wb": lambda: dgraph.build_wb(dfn, counts),
        "Pt": lambda: dgraph.build_pt(dfn),
        "Wt": lambda: dgraph.build_wt(dfn, counts),
        "MeshP": lambda: dgraph.build_mesh_dof_graph(msh),
    }
    return builders[strategy]()


def partition_strategy(strategy, dfn, msh, k, seed):
    """Partition under one strategy; returns (result dict, elapsed seconds).

    DFN-based strategies yield a fracture assignment; MeshP yields a
    direct partition of the free mesh nodes.
    """
    counts = msh.dof_counts
    g = _build_graph(strategy, dfn, counts, msh)
    t0 = time.perf_counter()
    p = partition.partition_multilevel(g, k, seed=seed)
    elapsed = time.perf_counter() - t0
    if strategy == "MeshP":
        free = [nd.id for nd in msh.nodes if nd.is_free]
        part_of = {nid: int(p.part_of[i]) for i, nid in enumerate(free)}
        sizes = np.bincount(p.part_of, minlength=k)
        imb = float(sizes.min() / sizes.max()) if sizes.max() else 1.0
        return {
            "kind": "mesh",
            "node_parts": part_of,
            "cut": partition.edge_cut(g, p.part_of),
            "imbalance": imb,
            "graph": g,
            "partition": p,
        }, elapsed
    assignment = partition.fracture_assignment(p, g)
    met = partition.compute_metrics(dfn, counts, assignment)
    return {
        "kind": "dfn",
        "assignment": assignment,
        "cut": met.cut_C,
        "imbalance": met.imbalance_I,
        "graph": g,
        "partition": p,
    }, elapsed


def _numbering_for(result, msh, k, scheme):
    # the mesh-partitioning baseline assigns node ownership but performs no
    # structure-aware renumbering: rows stay in serial order, striped evenly
    if result["kind"] == "mesh":
        return dofs.number_serial(msh, n_parts=k)
    if scheme == "serial":
        return dofs.number_serial(msh, n_parts=k)
    return dofs.number_reordered(msh, result["assignment"])


def cmd_partition_table(cfg: ExperimentConfig) -> Path:
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    dfn = _get_dfn(cfg)
    msh = meshmod.refine_uniform(meshmod.build_minimal_mesh(dfn), cfg.n)
    path = outdir / "partition_table.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["seed", "strategy", "k", "cut_C", "imbalance_I",
             "partition_time", "resolution_time", "iterations"]
        )
        for strategy in cfg.strategies:
            for k in cfg.parts:
                result, pt = partition_strategy(strategy, dfn, msh, k, cfg.seed)
                numbering = _numbering_for(result, msh, k, cfg.scheme)
                system = fem.assemble(
                    msh, numbering, fem.DarcyProblem(forcing=lambda x: 1.0)
                )
                _, rep = fem.pcg_jacobi(system, rtol=cfg.rtol)
                w.writerow(
                    [cfg.seed, strategy, k, result["cut"],
                     f"{result['imbalance']:.6f}", f"{pt:.6f}",
                     f"{rep.wall_time:.6f}", rep.iterations]
                )
    return path


def cmd_sparsity(cfg: ExperimentConfig) -> Path:
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    dfn = _get_dfn(cfg)
    msh = meshmod.refine_uniform(meshmod.build_minimal_mesh(dfn), cfg.n)
    last = None
    for strategy in cfg.strategies:
        for k in cfg.parts:
            result, _ = partition_strategy(strategy, dfn, msh, k, cfg.seed)
            numbering = _numbering_for(result, msh, k, cfg.scheme)
            system = fem.assemble(msh, numbering, fem.DarcyProblem())
            tag = f"{strategy}_k{k}_{cfg.scheme}"
            coo = system.matrix.tocoo()
            with open(outdir / f"pattern_{tag}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["row", "col"])
                for r, c in zip(coo.row, coo.col):
                    w.writerow([int(r), int(c)])
            # coarse raster of the pattern plus stripe boundaries
            n = system.n
            bins = min(64, n)
            grid = np.zeros((bins, bins), dtype=np.int64)
            ri = np.minimum((coo.row * bins) // n, bins - 1)
            ci = np.minimum((coo.col * bins) // n, bins - 1)
            np.add.at(grid, (ri, ci), 1)
            with open(outdir / f"raster_{tag}.txt", "w") as fh:
                fh.write(f"# n={n} nnz={system.matrix.nnz} bins={bins}\n")
                fh.write(
                    "# stripes="
                    + ",".join(f"{s}:{e}" for s, e in system.stripes) + "\n"
                )
                for row in grid:
                    fh.write(" ".join(str(int(v)) for v in row) + "\n")
            last = outdir / f"raster_{tag}.txt"
    return last


def cmd_speedup(cfg: ExperimentConfig) -> Path:
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    dfn = _get_dfn(cfg)
    msh = meshmod.refine_uniform(meshmod.build_minimal_mesh(dfn), cfg.n)
    path = outdir / "speedup.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["strategy", "scheme", "k", "threads", "t_p", "speedup",
             "iterations", "comm_volume", "messages", "max_halo"]
        )
        for strategy in cfg.strategies:
            for k in cfg.parts:
                result, _ = partition_strategy(strategy, dfn, msh, k, cfg.seed)
                numbering = _numbering_for(result, msh, k, cfg.scheme)
                system = fem.assemble(
                    msh, numbering, fem.DarcyProblem(forcing=lambda x: 1.0)
                )
                t1 = None
                for th in cfg.threads:
                    if th > k:
                        continue
                    _, rep = fem.run_parallel(system, threads=th, rtol=cfg.rtol)
                    if t1 is None:
                        t1 = rep.wall_time
                    sp = t1 / rep.wall_time if rep.wall_time > 0 else 1.0
                    w.writerow(
                        [strategy, cfg.scheme, k, th, f"{rep.wall_time:.6f}",
                         f"{sp:.4f}", rep.iterations, rep.comm_volume,
                         rep.message_count, max(rep.halo_sizes, default=0)]
                    )
    return path


def localized_marks(msh, trace_id: int) -> list:
    """Cells around the midpoint node of one trace (localized refinement).

    Marking a single neighborhood keeps the per-round growth small, so
    repartitioning stays feasible under the balance cap.
    """
    tr = msh.dfn.trace(trace_id)
    mid = tr.point_at(0.5)
    best, best_d = None, np.inf
    for nd in msh.nodes:
        if nd.kind is meshmod.NodeKind.ON_TRACE and nd.ref == trace_id:
            d = float(np.linalg.norm(nd.position - mid))
            if d < best_d:
                best, best_d = nd, d
    if best is None:
        return []
    return sorted(best.adjacency)


def pick_internal_trace(dfn, assignment, counts) -> int:
    """An internal trace inside the heaviest part, so that localized
    refinement grows that part only and the imbalance strictly decays."""
    met = partition.compute_metrics(dfn, counts, assignment)
    order = np.argsort(met.dof_per_part)[::-1]
    for p in order:
        for t in dfn.traces:
            r, s = t.it_pair
            if assignment[r] == assignment[s] == p:
                return t.id
    return dfn.traces[0].id if dfn.traces else 0


def refine_decay_history(dfn, msh, strategy, k, seed, rounds, repartition_every=0):
    """Imbalance per refinement round, optionally repartitioning."""
    result, _ = partition_strategy(strategy, dfn, msh, k, seed)
    if result["kind"] != "dfn":
        raise ValueError("refine-decay requires a DFN-based strategy")
    assignment = result["assignment"]
    trace_id = pick_internal_trace(dfn, assignment, msh.dof_counts)
    history = [(0, result["imbalance"], 0)]
    cur = msh
    for rnd in range(1, rounds + 1):
        cur = meshmod.refine_marked(cur, localized_marks(cur, trace_id))
        repartitioned = 0
        if repartition_every and rnd % repartition_every == 0:
            g = _build_graph(strategy, dfn, cur.dof_counts, cur)
            p = partition.partition_multilevel(g, k, seed=seed)
            assignment = partition.fracture_assignment(p, g)
            repartitioned = 1
        met = partition.compute_metrics(dfn, cur.dof_counts, assignment)
        history.append((rnd, met.imbalance_I, repartitioned))
    return history


def cmd_refine_decay(cfg: ExperimentConfig) -> Path:
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    dfn = _get_dfn(cfg)
    msh = meshmod.refine_uniform(meshmod.build_minimal_mesh(dfn), cfg.n)
    strategy = cfg.strategies[0]
    path = outdir / "refine_decay.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strategy", "k", "round", "imbalance_I", "repartitioned"])
        for k in cfg.parts:
            hist = refine_decay_history(
                dfn, msh, strategy, k, cfg.seed, cfg.rounds,
                cfg.repartition_every,
            )
            for rnd, imb, rep in hist:
                w.writerow([strategy, k, rnd, f"{imb:.6f}", rep])
    return path


def cmd_gen_dfn(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    if out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / f"dfn_{cfg.n_fractures}_{cfg.seed}.json"
    spec = geometry.GeneratorSpec(n_fractures=cfg.n_fractures)
    dfn = geometry.generate_dfn(spec, seed=cfg.seed)
    geometry.save_dfn(dfn, out)
    return out


def cmd_mesh(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    if out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "mesh.json"
    dfn = _get_dfn(cfg)
    msh = meshmod.refine_uniform(meshmod.build_minimal_mesh(dfn), cfg.n)
    msh.save(out)
    return out


def _add_common(sp):
    sp.add_argument("--config", help="JSON config file; flags override it")
    sp.add_argument("--dfn", help="DFN JSON file (default: generate)")
    sp.add_argument("--n-fractures", dest="n_fractures", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--n", type=int, help="target Dofs per fracture")
    sp.add_argument("--strategies", help="comma list, e.g. Pg,Wg,MeshP")
    sp.add_argument("--parts", help="comma list of part counts")
    sp.add_argument("--scheme", choices=["serial", "reordered"])
    sp.add_argument("--threads", help="comma list of thread counts")
    sp.add_argument("--rtol", type=float)
    sp.add_argument("--rounds", type=int)
    sp.add_argument("--repartition-every", dest="repartition_every", type=int)
    sp.add_argument("--out", help="output directory or file")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dfnpart",
        description="DFN partitioning, Dof reordering and Darcy-flow experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "partition-table": cmd_partition_table,
        "sparsity": cmd_sparsity,
        "speedup": cmd_speedup,
        "refine-decay": cmd_refine_decay,
        "gen-dfn": cmd_gen_dfn,
        "mesh": cmd_mesh,
    }
    for name in commands:
        _add_common(sub.add_parser(name))
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        out = commands[args.command](cfg)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
