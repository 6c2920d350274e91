"""Rate and distortion constraints of the VKG and CMS inner bounds.

VKG-type models (EC, ZB, VKG) bound sums of description rates directly.
CMS models bound the shared-codebook rates ``R''_K`` (through ``alpha``) and
the private rates ``R'_l`` (through ``beta``); description rates follow from
the sharing map.  Minimal rates come from small exact LPs.

Strict inequalities of the achievability statements are treated as ``>=``
since the regions are closures; boundary checks use ``BOUNDARY_TOL``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import lattice, lp
from .lattice import DescriptionSet
from .model import AuxModel, DistortionSpec

BOUNDARY_TOL = 1e-9
MAX_CMS_LP_L = 5


class RegionInfeasible(ValueError):
    pass


def _H(model: AuxModel, A: Iterable[str], B: Iterable[str] = ()) -> float:
    A, B = set(A), set(B)
    A -= B
    if not A:
        return 0.0
    j = model.joint
    return j.entropy(A | B) - j.entropy(B)


def _strict_proper(K: DescriptionSet) -> list[DescriptionSet]:
    """Nonempty proper subsets of ``K``."""
    return [s for s in lattice.subsets_of(K) if s != K]


# --- CMS quantities -----------------------------------------------------------


def alpha(model: AuxModel, W: int, Q: Iterable[Iterable[int]]) -> float:
    """Shared-rate lower bound for a family ``Q`` of width-``W`` subsets."""
    Q = lattice.canonical(Q)
    if not Q:
        return 0.0
    if not 2 <= W <= model.L:
        raise ValueError(f"alpha needs 2 <= W <= L, got W={W}")
    for S in Q:
        if len(S) != W or not S <= model.full:
            raise ValueError(f"set {sorted(S)} in Q is not a width-{W} subset of 1..{model.L}")
    above = lattice.tier_above(model.L, W)
    total = 0.0
    for S in Q:
        v = model.V(S)
        if v is None:
            continue
        total += _H(model, [v], model.Vs(T for T in above if S <= T))
    total -= _H(model, model.Vs(Q), model.Vs(above) + [model.source])
    return total


def beta(model: AuxModel, S: Iterable[int]) -> float:
    """Private-rate lower bound for the description set ``S``."""
    S = lattice.as_set(S, model.L)
    if not S:
        return 0.0
    total = 0.0
    for K in lattice.subsets_of(S):
        cond = model.Us(_strict_proper(K)) + model.Vs(lattice.sharing_sets(model.L, K))
        total += _H(model, [model.U(K)], cond)
    all_shared = list(model.shared_vars.values())
    total -= _H(model, model.Us(lattice.subsets_of(S)), all_shared + [model.source])
    return total


# --- VKG quantities -----------------------------------------------------------


def _vkg_shared(model: AuxModel) -> str | None:
    if model.scheme == "CMS" and model.L > 2:
        raise ValueError("vkg_rhs needs a VKG-type model; reduce CMS models with reduce_cms_to_vkg first")
    return model.V(model.full)


def vkg_rhs(model: AuxModel, S: Iterable[int]) -> float:
    """Lower bound on the sum of description rates over ``S``."""
    S = lattice.as_set(S, model.L)
    if not S:
        raise ValueError("vkg_rhs needs a nonempty S")
    v = _vkg_shared(model)
    V = [v] if v is not None else []
    x = model.source
    ixv = _H(model, V) - _H(model, V, [x]) if V else 0.0
    total = len(S) * ixv
    total -= _H(model, model.Us(lattice.subsets_of(S)), [x] + V)
    last_cond = V if model.vkg_last_term_conditions_on_shared else []
    for K in lattice.subsets_of(S):
        total += _H(model, [model.U(K)], model.Us(_strict_proper(K)) + last_cond)
    return total


# --- rates --------------------------------------------------------------------


@dataclass
class RateAllocation:
    private: dict[int, float]
    shared: dict[DescriptionSet, float] = field(default_factory=dict)

    def __post_init__(self):
        self.private = {int(k): float(v) for k, v in self.private.items()}
        self.shared = {frozenset(k): float(v) for k, v in self.shared.items()}
        for v in [*self.private.values(), *self.shared.values()]:
            if not np.isfinite(v) or v < 0:
                raise ValueError("allocation entries must be finite and nonnegative")

    def to_json(self) -> dict:
        return {
            "private": {str(l): r for l, r in sorted(self.private.items())},
            "shared": {
                lattice.label(K): r
                for K, r in sorted(self.shared.items(), key=lambda kv: lattice.canonical_key(kv[0]))
            },
        }

    def shifted(self, delta: float) -> "RateAllocation":
        return RateAllocation(
            {l: r + delta for l, r in self.private.items()},
            {K: r + delta for K, r in self.shared.items()},
        )


def description_rates(alloc: RateAllocation, L: int) -> np.ndarray:
    """Per-description rates: private rate plus every shared rate it carries."""
    rates = np.zeros(L)
    for l in range(1, L + 1):
        rates[l - 1] = alloc.private.get(l, 0.0) + sum(
            alloc.shared.get(K, 0.0) for K in lattice.sharing_sets(L, {l})
        )
    return rates


def alpha_families(L: int):
    """Yield ``(W, Q)`` for every width ``W >= 2`` and nonempty ``Q`` in that tier."""
    for W in range(2, L + 1):
        t = lattice.tier(L, W)
        for r in range(1, len(t) + 1):
            for Q in combinations(t, r):
                yield W, Q


@dataclass
class Violation:
    kind: str  # "alpha" or "beta"
    sets: tuple
    bound: float
    value: float

    @property
    def slack(self) -> float:
        return self.value - self.bound


@dataclass
class FeasibilityReport:
    feasible: bool
    violations: list[Violation]
    min_slack: float


def allocation_feasible(model: AuxModel, alloc: RateAllocation, tol: float = BOUNDARY_TOL) -> FeasibilityReport:
    violations = []
    min_slack = np.inf
    for W, Q in alpha_families(model.L):
        bound = alpha(model, W, Q)
        value = sum(alloc.shared.get(K, 0.0) for K in Q)
        min_slack = min(min_slack, value - bound)
        if value < bound - tol:
            violations.append(Violation("alpha", tuple(sorted(K) for K in Q), bound, value))
    for S in lattice.nonempty_subsets(model.L):
        bound = beta(model, S)
        value = sum(alloc.private.get(l, 0.0) for l in S)
        min_slack = min(min_slack, value - bound)
        if value < bound - tol:
            violations.append(Violation("beta", (sorted(S),), bound, value))
    return FeasibilityReport(not violations, violations, float(min_slack))


@dataclass
class RateProgram:
    """The rate LP of a model: variables, objective map and ``>=`` rows."""

    model: AuxModel
    n_vars: int
    A: np.ndarray
    b: np.ndarray
    rate_map: np.ndarray  # (L, n_vars): description rates as a linear map of the variables
    shared_keys: list[DescriptionSet]


def rate_program(model: AuxModel, margin: float = 0.0) -> RateProgram:
    """Assemble the constraint rows, each bound optionally raised by ``margin``."""
    L = model.L
    if model.scheme != "CMS":
        rows, rhs = [], []
        for S in lattice.nonempty_subsets(L):
            rows.append([1.0 if l in S else 0.0 for l in range(1, L + 1)])
            rhs.append(vkg_rhs(model, S) + margin * len(S))
        return RateProgram(model, L, np.array(rows), np.array(rhs), np.eye(L), [])
    if L > MAX_CMS_LP_L:
        raise ValueError(f"CMS rate LP is enumerated exhaustively and limited to L <= {MAX_CMS_LP_L}")
    keys = list(lattice.sharing_sets(L, model.full))
    n = L + len(keys)
    col = {K: L + i for i, K in enumerate(keys)}
    rows, rhs = [], []
    for W, Q in alpha_families(L):
        r = np.zeros(n)
        for K in Q:
            r[col[K]] = 1.0
        rows.append(r)
        rhs.append(alpha(model, W, Q) + margin * len(Q))
    for S in lattice.nonempty_subsets(L):
        r = np.zeros(n)
        for l in S:
            r[l - 1] = 1.0
        rows.append(r)
        rhs.append(beta(model, S) + margin * len(S))
    rate_map = np.zeros((L, n))
    for l in range(1, L + 1):
        rate_map[l - 1, l - 1] = 1.0
        for K in lattice.sharing_sets(L, {l}):
            rate_map[l - 1, col[K]] = 1.0
    return RateProgram(model, n, np.array(rows), np.array(rhs), rate_map, keys)


@dataclass
class MinRates:
    rates: np.ndarray
    allocation: RateAllocation | None
    distortions: dict[DescriptionSet, float] | None
    value: float


def _check_weights(weights, L: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size != L:
        raise ValueError(f"expected {L} weights, got {w.size}")
    if not np.all(np.isfinite(w)) or np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be finite, nonnegative and not all zero")
    return w


def solve_program(prog: RateProgram, weights, caps: Mapping[int, float] | None = None) -> MinRates:
    L = prog.model.L
    w = _check_weights(weights, L)
    c = w @ prog.rate_map
    A_le, b_le = [], []
    for l, cap in (caps or {}).items():
        A_le.append(prog.rate_map[int(l) - 1])
        b_le.append(float(cap) + BOUNDARY_TOL)
    res = lp.solve(c, prog.A, prog.b, A_le, b_le)
    if not res.ok:
        raise RegionInfeasible(f"rate program is {res.status}")
    x = res.x
    rates = prog.rate_map @ x
    alloc = None
    if prog.shared_keys:
        alloc = RateAllocation(
            {l: x[l - 1] for l in range(1, L + 1)},
            {K: x[L + i] for i, K in enumerate(prog.shared_keys)},
        )
    return MinRates(rates, alloc, None, float(w @ rates))


def min_rates(
    model: AuxModel,
    weights: Sequence[float],
    dspec: DistortionSpec | None = None,
    caps: Mapping[int, float] | None = None,
) -> MinRates:
    """Minimize the weighted description rate over the model's rate region.

    ``caps`` optionally pins description rates from above (``R_l <= cap``),
    which is how cross-sections with some rates held fixed are evaluated.
    """
    out = solve_program(rate_program(model), weights, caps)
    if dspec is not None:
        _, out.distortions = synthesize_decoders(model, dspec)
    return out


def margin_allocation(model: AuxModel, margin: float) -> RateAllocation:
    """Cheapest CMS allocation whose every constraint holds with slack ``margin`` per rate term."""
    prog = rate_program(model, margin=margin)
    if not prog.shared_keys:
        raise ValueError("margin_allocation needs a CMS model")
    return solve_program(prog, np.ones(model.L)).allocation


# --- decoders -----------------------------------------------------------------


@dataclass
class Decoder:
    """Per-letter reconstruction map over the decoder's input variables."""

    inputs: tuple[str, ...]
    table: np.ndarray  # int array, one axis per input

    def __call__(self, symbols: Sequence[np.ndarray]) -> np.ndarray:
        if not self.inputs:
            n = len(symbols[0]) if symbols else 1
            return np.full(n, int(self.table), dtype=int)
        return self.table[tuple(np.asarray(s, dtype=int) for s in symbols)]

    def to_json(self) -> dict:
        return {"inputs": list(self.inputs), "table": np.asarray(self.table).reshape(-1).tolist()}


def _best_decoder(model: AuxModel, K: DescriptionSet, d: np.ndarray) -> tuple[Decoder, float]:
    inputs = model.decoder_inputs(K)
    x = model.source
    p = model.joint.marginal_table([x, *inputs])
    order = [n for n in model.joint.names if n in {x, *inputs}]
    p = np.moveaxis(p, order.index(x), 0)
    inputs = tuple(n for n in order if n != x)
    # cost[xhat, cell] = sum_x p(x, cell) d(x, xhat)
    cost = np.tensordot(d.T, p, axes=(1, 0))
    best = cost.min(axis=0)
    table = np.argmax(cost <= best + 1e-14, axis=0)
    chosen = np.take_along_axis(cost, table[None], axis=0)[0]
    return Decoder(inputs, table), float(chosen.sum())


def synthesize_decoders(model: AuxModel, dspec: DistortionSpec):
    """Bayes-optimal decoders for each constrained subset and their distortions."""
    dspec.check(model)
    decoders, dist = {}, {}
    for K, d in dspec.measures.items():
        decoders[K], dist[K] = _best_decoder(model, K, d)
    return decoders, dist


def decoder_distortion(model: AuxModel, K: Iterable[int], d: np.ndarray, table: np.ndarray) -> float:
    """Expected distortion of an arbitrary decoder table for received set ``K``."""
    inputs = model.decoder_inputs(K)
    x = model.source
    order = [n for n in model.joint.names if n in {x, *inputs}]
    p = np.moveaxis(model.joint.marginal_table([x, *inputs]), order.index(x), 0)
    cost = np.tensordot(np.asarray(d, float).T, p, axes=(1, 0))
    return float(np.take_along_axis(cost, np.asarray(table)[None], axis=0).sum())


# --- reduction and membership -------------------------------------------------


def reduce_cms_to_vkg(model: AuxModel) -> AuxModel:
    """Drop the constant strict-subset shared variables of a CMS model."""
    if model.scheme != "CMS":
        raise ValueError("reduce_cms_to_vkg needs a CMS model")
    drop = []
    for S, n in model.shared_vars.items():
        if S == model.full:
            continue
        if not model.is_constant(n):
            raise ValueError(f"shared variable {n} for {sorted(S)} is not constant; no VKG reduction")
        drop.append(n)
    from .probability import marginalize

    keep = [n for n in model.joint.names if n not in drop]
    joint = marginalize(model.joint, keep)
    return AuxModel.build(
        model.L,
        "VKG",
        joint,
        {model.full: model.shared_vars[model.full]},
        model.private_vars,
        model.refinement_vars,
        source=model.source,
        vkg_last_term_conditions_on_shared=True,
    )


def check_reduction(model: AuxModel) -> float:
    """Largest discrepancy between CMS and reduced-VKG rate constraints.

    For every nonempty ``S`` compares ``beta(S) + |S| alpha_L({L})`` against
    the VKG bound, and the CMS and VKG minimal sum rates over ``S``.
    """
    vkg = reduce_cms_to_vkg(model)
    a = alpha(model, model.L, [model.full])
    cms_prog = rate_program(model)
    vkg_prog = rate_program(vkg)
    worst = 0.0
    for S in lattice.nonempty_subsets(model.L):
        worst = max(worst, abs(beta(model, S) + len(S) * a - vkg_rhs(vkg, S)))
        w = [1.0 if l in S else 0.0 for l in range(1, model.L + 1)]
        worst = max(worst, abs(solve_program(cms_prog, w).value - solve_program(vkg_prog, w).value))
    return worst


def rates_in_region(model: AuxModel, rates: Sequence[float], tol: float = BOUNDARY_TOL) -> bool:
    rates = np.asarray(rates, dtype=float)
    if rates.size != model.L:
        raise ValueError(f"rate vector has {rates.size} entries, model has L={model.L}")
    prog = rate_program(model)
    if not prog.shared_keys:
        return bool(np.all(prog.A @ rates >= prog.b - tol))
    # CMS: is there an allocation whose description rates fit under the target?
    res = lp.solve(np.zeros(prog.n_vars), prog.A, prog.b, prog.rate_map, rates + tol)
    return res.ok


def membership(
    model: AuxModel,
    rates: Sequence[float],
    distortions: Mapping[Iterable[int], float],
    dspec: DistortionSpec,
) -> bool:
    """Is (rates, distortions) inside the region of this single model?"""
    targets = {frozenset(K): float(v) for K, v in distortions.items()}
    if set(targets) != set(dspec.measures):
        raise ValueError("target distortions must cover exactly the constrained subsets")
    _, achieved = synthesize_decoders(model, dspec)
    if any(achieved[K] > targets[K] + BOUNDARY_TOL for K in targets):
        return False
    return rates_in_region(model, rates)


def constraint_table(model: AuxModel) -> list[dict]:
    """Every rate constraint of the model, for reporting."""
    out = []
    if model.scheme == "CMS":
        for W, Q in alpha_families(model.L):
            out.append({"kind": "alpha", "W": W, "Q": [sorted(K) for K in Q], "bound": alpha(model, W, Q)})
        for S in lattice.nonempty_subsets(model.L):
            out.append({"kind": "beta", "S": sorted(S), "bound": beta(model, S)})
    else:
        for S in lattice.nonempty_subsets(model.L):
            out.append({"kind": "sum_rate", "S": sorted(S), "bound": vkg_rhs(model, S)})
    return out
