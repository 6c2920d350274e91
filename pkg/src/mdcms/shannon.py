"""Single-description rate-distortion baselines.

Closed-form R(D) for the fair binary source under Hamming distortion, a
general Blahut-Arimoto solver, and the two-layer degraded construction that
shows the binary source is successively refinable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import AuxModel, DistortionSpec, joint_from_tensor
from .probability import binary_entropy

SLOPE_MIN, SLOPE_MAX = 1e-6, 64.0
MAX_BISECTION = 200


@dataclass(frozen=True)
class RDPoint:
    rate: float
    distortion: float


class InfeasibleDistortion(ValueError):
    pass


def rd_binary(D: float) -> float:
    """R(D) = 1 - h2(D) for a fair bit; zero beyond D = 1/2."""
    if not 0.0 <= D <= 1.0:
        raise ValueError(f"distortion must lie in [0, 1], got {D}")
    if D >= 0.5:
        return 0.0
    return 1.0 - binary_entropy(D)


def _ba_fixed_slope(p, d, s, tol=1e-9, max_iter=10_000):
    """Blahut-Arimoto at slope ``s`` (bits per unit distortion)."""
    m = d.shape[1]
    q = np.full(m, 1.0 / m)
    A = np.exp2(-s * (d - d.min(axis=1, keepdims=True)))
    rate = np.inf
    for _ in range(max_iter):
        Z = A @ q
        W = A * q / Z[:, None]
        q_new = p @ W
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(W > 0, W / q_new[None, :], 1.0)
            r = float(np.sum(p[:, None] * W * np.log2(ratio)))
        q = q_new
        if abs(r - rate) < tol:
            rate = r
            break
        rate = r
    D = float(np.sum(p[:, None] * W * d))
    return max(rate, 0.0), D


def rd_blahut_arimoto(source, d, D: float) -> RDPoint:
    """Point on R(D) with distortion at most ``D`` (up to 1e-6).

    Bisects the Lagrange slope in log space between ``SLOPE_MIN`` and
    ``SLOPE_MAX``; each slope is solved by alternating minimization until
    successive rates agree to 1e-9.
    """
    p = np.asarray(source, dtype=float)
    d = np.asarray(d, dtype=float)
    if p.ndim != 1 or abs(p.sum() - 1) > 1e-9 or np.any(p < 0):
        raise ValueError("source must be a probability vector")
    if d.ndim != 2 or d.shape[0] != p.size or np.any(d < 0):
        raise ValueError("distortion matrix must be nonnegative with one row per source symbol")
    if D < 0:
        raise ValueError("target distortion must be nonnegative")
    d_min = float(p @ d.min(axis=1))
    d_max = float((p @ d).min())
    if D < d_min - 1e-12:
        raise InfeasibleDistortion(f"D = {D} is below the minimum achievable distortion {d_min}")
    if D >= d_max:
        return RDPoint(0.0, d_max)

    lo, hi = np.log(SLOPE_MIN), np.log(SLOPE_MAX)
    best = _ba_fixed_slope(p, d, SLOPE_MAX)
    if best[1] > D + 1e-6:
        # target sits below what the steepest slope reaches; report that point
        return RDPoint(*best)
    for _ in range(MAX_BISECTION):
        mid = 0.5 * (lo + hi)
        r, dist = _ba_fixed_slope(p, d, np.exp(mid))
        if dist <= D:
            hi, best = mid, (r, dist)
        else:
            lo = mid
        if D - best[1] < 1e-9 or hi - lo < 1e-12:
            break
    return RDPoint(*best)


def sr_degraded_model(D1: float, D2: float) -> tuple[AuxModel, DistortionSpec]:
    """Two-layer cascade for the fair binary source.

    The fine layer is ``X ^ bern(D2)`` and the coarse layer flips it again with
    probability ``q = (D1 - D2) / (1 - 2 D2)``, so the coarse one sits at
    distortion ``D1``.  Description 1 carries the coarse layer, the pair adds
    the fine one, and description 2 alone is unconstrained.
    """
    if not 0.0 <= D2 <= D1 < 0.5:
        raise ValueError(f"need 0 <= D2 <= D1 < 0.5, got D1={D1}, D2={D2}")
    q = (D1 - D2) / (1.0 - 2.0 * D2)
    t = np.zeros((2, 2, 2))  # X, coarse, fine
    for x in range(2):
        for fine in range(2):
            pf = D2 if fine != x else 1.0 - D2
            for coarse in range(2):
                pc = q if coarse != fine else 1.0 - q
                t[x, coarse, fine] = 0.5 * pf * pc
    joint = joint_from_tensor(["X", "U_1", "U_12"], t)
    model = AuxModel.build(2, "EC", joint, private={1: "U_1"}, refinement={frozenset({1, 2}): "U_12"})
    return model, DistortionSpec.hamming([{1}, {1, 2}])


def refinement_flip(D1: float, D2: float) -> float:
    return (D1 - D2) / (1.0 - 2.0 * D2)


def rd_curve_rows(Ds, source=None, d=None) -> list[tuple[float, float]]:
    """``(D, R)`` rows; closed form for the fair bit unless a source is given."""
    rows = []
    for D in Ds:
        if source is None:
            rows.append((float(D), rd_binary(float(D))))
        else:
            rows.append((float(D), rd_blahut_arimoto(source, d, float(D)).rate))
    return rows
