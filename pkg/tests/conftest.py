"""Shared fixtures; the 64-fracture corpus is session-scoped because
meshing it dominates the suite runtime and two test groups reuse it."""

import numpy as np
import pytest

from dfnpart import dofs, fem
from dfnpart.dgraph import build_wg
from dfnpart.fixtures import frac6
from dfnpart.geometry import GeneratorSpec, generate_dfn
from dfnpart.mesh import MeshError, build_minimal_mesh, refine_uniform
from dfnpart.partition import (
    BalanceError,
    fracture_assignment,
    partition_multilevel,
)

CORPUS_SEEDS = 20
CORPUS_K = 4


@pytest.fixture(scope="session")
def frac6_dfn():
    return frac6()


@pytest.fixture(scope="session")
def frac6_mesh(frac6_dfn):
    return build_minimal_mesh(frac6_dfn)


@pytest.fixture(scope="session")
def corpus64():
    """First 20 seeds of (64-fracture DFN, n=100 mesh, Wg 4-part data)
    where the mesh is non-degenerate and the balance cap is attainable
    at fracture granularity."""
    out = []
    seed = 0
    while len(out) < CORPUS_SEEDS:
        dfn = generate_dfn(GeneratorSpec(n_fractures=64), seed=seed)
        try:
            mesh = refine_uniform(build_minimal_mesh(dfn), 100)
            g = build_wg(dfn, mesh.dof_counts)
            p = partition_multilevel(g, CORPUS_K, seed=seed)
        except (BalanceError, MeshError):
            seed += 1
            continue
        assignment = fracture_assignment(p, g)
        num_r = dofs.number_reordered(mesh, assignment)
        num_s = dofs.number_serial(mesh, n_parts=CORPUS_K)
        sys_r = fem.assemble(mesh, num_r, fem.DarcyProblem())
        sys_s = fem.assemble(mesh, num_s, fem.DarcyProblem())
        out.append(
            {
                "seed": seed,
                "dfn": dfn,
                "mesh": mesh,
                "assignment": assignment,
                "sys_reordered": sys_r,
                "sys_serial": sys_s,
            }
        )
        seed += 1
    return out


def random_assignment(dfn, k, seed):
    rng = np.random.default_rng(seed)
    return {f.id: int(rng.integers(k)) for f in dfn.fractures}
