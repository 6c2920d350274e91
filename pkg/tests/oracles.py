"""Independent brute-force oracles and random-model generators for the tests."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from mdcms.model import AuxModel, joint_from_tensor
from mdcms.probability import JointDistribution, VariableSpec


def entropy_direct(dist: JointDistribution, names: Iterable[str]) -> float:
    """Entropy of a marginal computed straight from the full table.

    Accumulates each marginal cell with an explicit loop over full-table
    entries instead of calling ``numpy.sum`` over axes.  Used as an
    independent check of :func:`entropy`.
    """
    names = [n for n in dist.names if n in set(names)]
    axes = [dist.axis(n) for n in names]
    cells: dict[tuple, float] = {}
    for idx, pr in np.ndenumerate(dist.table):
        key = tuple(idx[a] for a in axes)
        cells[key] = cells.get(key, 0.0) + float(pr)
    h = 0.0
    for pr in cells.values():
        if pr > 0:
            h -= pr * np.log2(pr)
    return h


def cond_direct(dist, A, B=()) -> float:
    A, B = set(A), set(B)
    A -= B
    if not A:
        return 0.0
    return entropy_direct(dist, A | B) - entropy_direct(dist, B)


def random_joint(rng, names, sizes, sparsity: float = 0.0) -> JointDistribution:
    p = rng.dirichlet(np.full(int(np.prod(sizes)), 0.7))
    if sparsity:
        p[rng.random(p.size) < sparsity] = 0.0
        if p.sum() == 0:
            p[0] = 1.0
        p /= p.sum()
    return JointDistribution([VariableSpec(n, s) for n, s in zip(names, sizes)], p, tol=1e-9)


def random_l2_model(rng, scheme: str = "CMS") -> AuxModel:
    """Random two-description model over X, V_12, U_1, U_2, U_12."""
    sizes = [int(rng.integers(2, 4)), *[int(rng.integers(1, 4)) for _ in range(4)]]
    if scheme == "EC":
        sizes[1] = 1
    names = ["X", "V_12", "U_1", "U_2", "U_12"]
    t = random_joint(rng, names, sizes, sparsity=0.2).table
    if scheme == "EC":
        return AuxModel.build(
            2, "EC", joint_from_tensor(["X", "U_1", "U_2", "U_12"], t[:, 0]), None,
            {1: "U_1", 2: "U_2"}, {(1, 2): "U_12"},
        )
    return AuxModel.build(
        2, scheme, joint_from_tensor(names, t), {(1, 2): "V_12"}, {1: "U_1", 2: "U_2"}, {(1, 2): "U_12"}
    )


def random_l3_reducible(rng) -> AuxModel:
    """Random three-description CMS model whose only non-constant shared variable is V_123."""
    names = ["X", "V_123", "U_1", "U_2", "U_3", "U_12", "U_13", "U_23", "U_123"]
    sizes = [2, int(rng.integers(1, 4))] + [int(rng.integers(1, 3)) for _ in range(7)]
    d = random_joint(rng, names, sizes, sparsity=0.1)
    return AuxModel.build(
        3,
        "CMS",
        d,
        {(1, 2, 3): "V_123"},
        {1: "U_1", 2: "U_2", 3: "U_3"},
        {(1, 2): "U_12", (1, 3): "U_13", (2, 3): "U_23", (1, 2, 3): "U_123"},
    )


def l2_bounds_direct(model: AuxModel) -> tuple[float, float, float]:
    """Closed-form two-description bounds (R1, R2, R1+R2) from brute-force entropies.

    Projects the shared/private allocation constraints onto description
    rates: the shared rate enters each bound at its minimum I(X; V_12).
    """
    j = model.joint
    x = model.source
    v = [model.V({1, 2})] if model.V({1, 2}) else []
    u1, u2, u12 = model.U({1}), model.U({2}), model.U({1, 2})
    ixv = cond_direct(j, v) - cond_direct(j, v, [x]) if v else 0.0
    b1 = cond_direct(j, [u1], v) - cond_direct(j, [u1], v + [x])
    b2 = cond_direct(j, [u2], v) - cond_direct(j, [u2], v + [x])
    b12 = (
        cond_direct(j, [u1], v)
        + cond_direct(j, [u2], v)
        + cond_direct(j, [u12], [u1, u2] + v)
        - cond_direct(j, [u1, u2, u12], v + [x])
    )
    return ixv + b1, ixv + b2, 2 * ixv + b12


def grid_min_weighted(bounds, weights, step: float = 2.0**-10) -> float:
    """Exhaustive search over a rate grid for the smallest weighted sum in the region."""
    b1, b2, b12 = bounds
    hi = max(b1, b2, b12) + 4 * step
    r = np.arange(0.0, hi + step, step)
    R1, R2 = np.meshgrid(r, r, indexing="ij")
    ok = (R1 >= b1 - 1e-12) & (R2 >= b2 - 1e-12) & (R1 + R2 >= b12 - 1e-12)
    w1, w2 = weights
    return float(np.min(np.where(ok, w1 * R1 + w2 * R2, np.inf)))
