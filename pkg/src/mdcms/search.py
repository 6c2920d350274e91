"""Search over auxiliary PMFs for two-description cross-sections and separations.

The cross-section of interest fixes the source to a fair bit under Hamming
distortion, requires lossless joint reconstruction (``D_12 = 0``) and bounds
the side distortions by ``D_1 + D_2 <= 2 D``.  Joint losslessness is built
in by setting the refinement variable ``U_12 = X``; what is searched is the
conditional law of ``(V_12, U_1, U_2)`` given ``X``.

Restarts run in lockstep as one numpy batch.  Every restart keeps its own
state, step size and penalty weight, and every batch operation acts
row-by-row, so a restart's trajectory does not depend on which other
restarts share its batch.  Blocks of restarts may go to worker processes;
the merged result is the same either way.
"""

from __future__ import annotations

import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import regions
from .lattice import full_set
from .model import AuxModel, DistortionSpec, joint_from_tensor
from .probability import JointDistribution
from .shannon import rd_binary, sr_degraded_model

FEAS_TOL = 1e-7
BLOCK = 32


@dataclass(frozen=True)
class SearchConfig:
    seed: int = 7
    restarts: int = 256
    max_iters: int = 60
    step_init: float = 0.2
    step_shrink: float = 0.5
    tol: float = 1e-9
    aux_alphabet_sizes: dict = field(default_factory=lambda: {"U": 2, "V": 3})
    penalty_init: float = 10.0
    penalty_rounds: int = 5
    ec_grid_step: int = 32  # 1/step resolution of the exhaustive EC grid; 0 disables it
    jobs: int = 1

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.step_shrink < 1:
            raise ValueError("step_shrink must lie in (0, 1)")
        if not self.step_init > 0:
            raise ValueError("step_init must be positive")
        if any(int(v) < 1 for v in self.aux_alphabet_sizes.values()):
            raise ValueError("alphabet sizes must be >= 1")
        if self.ec_grid_step < 0:
            raise ValueError("ec_grid_step must be >= 0")

    @property
    def nu(self) -> int:
        return int(self.aux_alphabet_sizes.get("U", 2))

    @property
    def nv(self) -> int:
        return int(self.aux_alphabet_sizes.get("V", 3))

    def to_json(self) -> dict:
        # worker count does not change results, so it stays out of reports
        out = asdict(self)
        out.pop("jobs")
        return out


# --- simplex projection and the batched descent engine ------------------------


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row (last axis) onto the probability simplex."""
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    k = np.arange(1, v.shape[-1] + 1)
    rho = np.count_nonzero(u - css / k > 0, axis=-1)[..., None]
    theta = np.take_along_axis(css, rho - 1, axis=-1) / rho
    return np.maximum(v - theta, 0.0)


def _descend(f: Callable, C: np.ndarray, cfg: SearchConfig):
    """Coordinate perturbation descent with an escalating exact penalty.

    ``C`` has shape (batch, rows, k); each row lives on the simplex.  ``f``
    maps such a batch to ``(value, violation)`` arrays.  Returns the final
    rows and their values and violations.
    """
    C = C.copy()
    B, n_rows, k = C.shape
    mu = np.full(B, cfg.penalty_init)

    def penalized(X):
        val, viol = f(X)
        return val + mu * np.maximum(viol, 0.0), val, viol

    for _ in range(cfg.penalty_rounds):
        cur, _, _ = penalized(C)
        step = np.full(B, cfg.step_init)
        active = np.ones(B, bool)
        for _ in range(cfg.max_iters):
            start = cur.copy()
            for r in range(n_rows):
                for j in range(k):
                    for sgn in (1.0, -1.0):
                        trial = C.copy()
                        trial[:, r, j] += sgn * step
                        trial[:, r] = project_simplex(trial[:, r])
                        val, _, _ = penalized(trial)
                        better = active & (val < cur - 1e-15)
                        C[better] = trial[better]
                        cur[better] = val[better]
            stalled = start - cur <= cfg.tol
            step = np.where(active & stalled, step * cfg.step_shrink, step)
            active &= step > 1e-7
            if not active.any():
                break
        _, val, viol = penalized(C)
        bad = viol > FEAS_TOL
        if not bad.any():
            break
        mu = np.where(bad, mu * 10.0, mu)

    # feasibility polish: push still-violating rows onto the constraint
    _, val, viol = penalized(C)
    bad = viol > FEAS_TOL
    if bad.any():
        step = np.full(B, cfg.step_init)
        for _ in range(cfg.max_iters):
            for r in range(n_rows):
                for j in range(k):
                    for sgn in (1.0, -1.0):
                        trial = C.copy()
                        trial[:, r, j] += sgn * step
                        trial[:, r] = project_simplex(trial[:, r])
                        _, tv = f(trial)
                        _, cv = f(C)
                        better = bad & (tv < cv - 1e-15)
                        C[better] = trial[better]
            _, viol = f(C)
            bad = viol > FEAS_TOL
            step = step * cfg.step_shrink
            if not bad.any() or step.max() < 1e-9:
                break
    val, viol = f(C)
    return C, val, viol


def local_search(objective: Callable[[AuxModel], float], init: AuxModel, cfg: SearchConfig):
    """Minimize ``objective`` over the auxiliary law of ``init`` given its source.

    The source marginal stays fixed; each row of the conditional law of the
    auxiliaries given the source is moved on its simplex.
    """
    j = init.joint
    x_axis = j.axis(init.source)
    t = np.moveaxis(np.asarray(j.table), x_axis, 0)
    px = t.reshape(t.shape[0], -1).sum(axis=1)
    cond = t.reshape(t.shape[0], -1) / np.where(px > 0, px, 1.0)[:, None]
    cond[px == 0] = 1.0 / cond.shape[1]
    def to_model(row_block):
        tensor = (row_block * px[:, None]).reshape(t.shape)
        tensor = np.moveaxis(tensor, 0, x_axis)
        return init.replace(joint=JointDistribution(j.variables, tensor.reshape(-1), tol=1e-9))

    def f(batch):
        vals = np.empty(batch.shape[0])
        for b in range(batch.shape[0]):
            v = float(objective(to_model(batch[b])))
            if not np.isfinite(v):
                raise ValueError("objective returned a non-finite value")
            vals[b] = v
        return vals, np.zeros(batch.shape[0])

    C, val, _ = _descend(f, cond[None], cfg)
    if np.array_equal(C[0], cond):
        return init, float(val[0])
    return to_model(C[0]), float(val[0])


# --- two-description cross-section objective ----------------------------------


def _ent(q: np.ndarray, keep: tuple) -> np.ndarray:
    """Entropy of the marginal of each batch entry over the axes in ``keep``."""
    drop = tuple(a for a in range(1, q.ndim) if a not in keep)
    m = q.sum(axis=drop) if drop else q
    m = m.reshape(m.shape[0], -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(m > 0, m * np.log2(m), 0.0)
    return -t.sum(axis=1)


def two_description_terms(P: np.ndarray):
    """Sum rate and side distortions for a batch of joint laws ``P[b, x, v, u1, u2]``.

    The refinement variable is the source itself (lossless joint decoding),
    and decoders are Bayes-optimal under Hamming distortion.
    """
    X, V, U1, U2 = 1, 2, 3, 4
    Hx = _ent(P, (X,))
    Hv = _ent(P, (V,))
    Hxv = _ent(P, (X, V))
    Hvu1 = _ent(P, (V, U1))
    Hvu2 = _ent(P, (V, U2))
    Hxvu1 = _ent(P, (X, V, U1))
    Hxvu2 = _ent(P, (X, V, U2))
    Hvu = _ent(P, (V, U1, U2))
    ixv = Hx + Hv - Hxv
    pair = 2 * ixv + Hxv + Hvu1 + Hvu2 - 2 * Hv - Hvu
    one = ixv + Hxv + Hvu1 - Hxvu1 - Hv
    two = ixv + Hxv + Hvu2 - Hxvu2 - Hv
    rate = np.maximum(pair, one + two)
    a = P.sum(axis=4)
    d1 = np.minimum(a[:, 0], a[:, 1]).sum(axis=(1, 2))
    b = P.sum(axis=3)
    d2 = np.minimum(b[:, 0], b[:, 1]).sum(axis=(1, 2))
    return rate, d1, d2


def _shape(cfg: SearchConfig, with_shared: bool):
    return (1 if not with_shared else cfg.nv, cfg.nu, cfg.nu)


def _objective(D: float, shape):
    def f(C):
        P = 0.5 * C.reshape(C.shape[0], 2, *shape)
        rate, d1, d2 = two_description_terms(P)
        return rate, d1 + d2 - 2.0 * D

    return f


def _rng(seed: int, restart: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(restart)])


def initial_rows(cfg: SearchConfig, shape, restart: int) -> np.ndarray:
    """Seeded starting point for one restart: rows p(v, u1, u2 | x).

    Even restarts draw a random product of conditionals; odd restarts take a
    random deterministic coupling and blend in some uniform noise.
    """
    rng = _rng(cfg.seed, restart)
    nv, n1, n2 = shape
    rows = np.empty((2, nv * n1 * n2))
    for x in range(2):
        if restart % 2 == 0:
            pv = rng.dirichlet(np.ones(nv))
            pu1 = rng.dirichlet(np.ones(n1), size=nv)
            pu2 = rng.dirichlet(np.ones(n2), size=nv)
            rows[x] = (pv[:, None, None] * pu1[:, :, None] * pu2[:, None, :]).reshape(-1)
        else:
            det = np.zeros((nv, n1, n2))
            det[rng.integers(nv), rng.integers(n1), rng.integers(n2)] = 1.0
            noise = rng.uniform(0.05, 0.35)
            rows[x] = ((1 - noise) * det + noise / det.size).reshape(-1)
    return rows


def _run_block(args):
    D, shape, cfg, indices, warm = args
    C0 = np.stack([initial_rows(cfg, shape, i) for i in indices])
    if warm is not None and indices[0] == 0:
        C0[0] = warm
    C, val, viol = _descend(_objective(D, shape), C0, cfg)
    val = np.where(viol <= FEAS_TOL, val, np.inf)
    return indices, C, val


@dataclass
class CrossSection:
    D: float
    value: float
    model: AuxModel
    rows: np.ndarray
    trace: list[tuple[int, float]]


def _cross_section(D: float, cfg: SearchConfig, with_shared: bool, warm: np.ndarray | None) -> CrossSection:
    if not 0 < D < 0.5:
        raise ValueError(f"target distortion must lie in (0, 0.5), got {D}")
    shape = _shape(cfg, with_shared)
    blocks = [
        (D, shape, cfg, list(range(s, min(s + BLOCK, cfg.restarts))), warm)
        for s in range(0, cfg.restarts, BLOCK)
    ]
    if cfg.jobs > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_block, blocks))
    else:
        results = [_run_block(b) for b in blocks]
    trace, best = [], (np.inf, -1, None)
    for indices, C, val in results:
        for i, c, v in zip(indices, C, val):
            trace.append((i, float(v)))
            if v < best[0] or (v == best[0] and i < best[1]):
                best = (float(v), i, c)
    trace.sort()
    value, _, rows = best
    if rows is None:
        raise RuntimeError(f"no restart reached a feasible point at D={D}")
    model = rows_to_model(rows, shape, with_shared)
    return CrossSection(D, value, model, rows, trace)


def rows_to_model(rows: np.ndarray, shape, with_shared: bool) -> AuxModel:
    """Two-description model with ``U_12 = X`` from conditional rows p(v, u1, u2 | x)."""
    P = 0.5 * np.asarray(rows).reshape(2, *shape)
    t = P[..., None] * np.eye(2).reshape(2, 1, 1, 1, 2)
    if with_shared:
        joint = joint_from_tensor(["X", "V_12", "U_1", "U_2", "U_12"], t)
        return AuxModel.build(
            2, "ZB", joint, {full_set(2): "V_12"}, {1: "U_1", 2: "U_2"}, {frozenset({1, 2}): "U_12"}
        )
    joint = joint_from_tensor(["X", "U_1", "U_2", "U_12"], t[:, 0])
    return AuxModel.build(2, "EC", joint, None, {1: "U_1", 2: "U_2"}, {frozenset({1, 2}): "U_12"})


CROSS_SECTION_DSPEC = DistortionSpec.hamming([{1}, {2}, {1, 2}])


def evaluate_cross_section(model: AuxModel) -> tuple[float, dict]:
    """Re-evaluate a witness with the general region code: (sum rate, distortions)."""
    res = regions.min_rates(model, [1.0, 1.0], CROSS_SECTION_DSPEC)
    return res.value, res.distortions


# --- exhaustive EC grid -------------------------------------------------------


def _simplex_grid(k: int, n: int) -> np.ndarray:
    pts = []
    for c in itertools.combinations(range(n + k - 1), k - 1):
        bounds = (-1,) + c + (n + k - 1,)
        pts.append([bounds[i + 1] - bounds[i] - 1 for i in range(k)])
    return np.asarray(pts, dtype=float) / n


def ec_grid_table(cfg: SearchConfig, Ds: Sequence[float]):
    """Best binary-auxiliary EC model on a 1/step grid for each target in ``Ds``.

    Returns ``{D: (value, rows)}``; rows is ``None`` where nothing on the grid
    meets the target.
    """
    if not cfg.ec_grid_step:
        return {float(D): (np.inf, None) for D in Ds}
    G = _simplex_grid(4, cfg.ec_grid_step)
    Ds = [float(D) for D in Ds]
    best = {D: (np.inf, None) for D in Ds}
    shape = (1, 2, 2)
    for i, row0 in enumerate(G):
        C = np.empty((len(G), 2, 4))
        C[:, 0] = row0
        C[:, 1] = G
        rate, d1, d2 = two_description_terms(0.5 * C.reshape(len(G), 2, *shape))
        s = d1 + d2
        for D in Ds:
            ok = s <= 2 * D + 1e-12
            if ok.any():
                j = int(np.argmin(np.where(ok, rate, np.inf)))
                if rate[j] < best[D][0]:
                    best[D] = (float(rate[j]), C[j].copy())
    return best


def cross_section_ec(D: float, cfg: SearchConfig, grid=None) -> tuple[float, AuxModel]:
    """Heuristic minimum sum rate over EC models (no shared variable)."""
    cs = _ec_section(D, cfg, grid)
    return cs.value, cs.model


def _ec_section(D: float, cfg: SearchConfig, grid=None) -> CrossSection:
    if grid is None:
        grid = ec_grid_table(cfg, [D])
    g_val, g_rows = grid.get(float(D), (np.inf, None))
    warm = g_rows if (g_rows is not None and cfg.nu == 2) else None
    cs = _cross_section(D, cfg, with_shared=False, warm=warm)
    if g_rows is not None and g_val < cs.value and cfg.nu == 2:
        cs = CrossSection(D, g_val, rows_to_model(g_rows, (1, 2, 2), False), g_rows, cs.trace)
    return cs


def _embed_ec(rows: np.ndarray, cfg: SearchConfig) -> np.ndarray:
    """EC rows as ZB rows with all mass on ``V_12 = 0``."""
    out = np.zeros((2, cfg.nv, cfg.nu, cfg.nu))
    out[:, 0] = np.asarray(rows).reshape(2, cfg.nu, cfg.nu)
    return out.reshape(2, -1)


def cross_section_zb(D: float, cfg: SearchConfig, warm_ec_rows: np.ndarray | None = None) -> tuple[float, AuxModel]:
    """Heuristic minimum sum rate over ZB models (shared variable ``V_12``)."""
    cs = _zb_section(D, cfg, warm_ec_rows)
    return cs.value, cs.model


def _zb_section(D: float, cfg: SearchConfig, warm_ec_rows=None) -> CrossSection:
    warm = _embed_ec(warm_ec_rows, cfg) if warm_ec_rows is not None else None
    return _cross_section(D, cfg, with_shared=True, warm=warm)


# --- reports ------------------------------------------------------------------


def _r12(x: float) -> float:
    return float(f"{x:.12g}")


@dataclass
class SeparationReport:
    kind: str
    D_star: float
    value_ec: float  # VKG-side value (EC for the two-description experiment)
    value_cms_or_zb: float
    gap: float
    best_model: AuxModel | None
    per_restart_trace: list[tuple[int, float]]
    wall_time: float = 0.0
    scan: list[dict] = field(default_factory=list)
    details: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def witness(self) -> bool:
        return self.best_model is not None and self.gap > 0

    def to_json(self, include_timing: bool = False) -> dict:
        out = {
            "kind": self.kind,
            "D_star": _r12(self.D_star),
            "value_ec": _r12(self.value_ec),
            "value_cms_or_zb": _r12(self.value_cms_or_zb),
            "gap": _r12(self.gap),
            "scan": [{k: (_r12(v) if isinstance(v, float) else v) for k, v in row.items()} for row in self.scan],
            "details": _round_tree(self.details),
            "config": self.config,
            "per_restart_trace": [[i, _r12(v) if np.isfinite(v) else None] for i, v in self.per_restart_trace],
            "best_model": self.best_model.to_json() if self.best_model is not None else None,
        }
        if include_timing:
            out["wall_time"] = self.wall_time
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=False) + "\n"


def _round_tree(x):
    if isinstance(x, float):
        return _r12(x) if np.isfinite(x) else None
    if isinstance(x, dict):
        return {k: _round_tree(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round_tree(v) for v in x]
    return x


def parse_grid(spec: str) -> list[float]:
    """``"a:b:step"`` to an inclusive list of points, rounded to the step's decimals."""
    try:
        a, b, step = (float(t) for t in spec.split(":"))
    except ValueError:
        raise ValueError(f"grid must look like a:b:step, got {spec!r}") from None
    if step <= 0 or b < a:
        raise ValueError("grid needs step > 0 and b >= a")
    n = int(np.floor((b - a) / step + 1e-9))
    decimals = max(0, -int(np.floor(np.log10(step))) + 3)
    return [round(a + i * step, decimals) for i in range(n + 1)]


def separation_zb(cfg: SearchConfig, D_grid: Sequence[float]) -> SeparationReport:
    """Scan ``D`` and find where the shared variable buys the largest sum-rate saving."""
    t0 = time.perf_counter()
    D_grid = [float(D) for D in D_grid]
    for D in D_grid:
        if not 0 < D < 0.5:
            raise ValueError(f"grid points must lie in (0, 0.5), got {D}")
    grid = ec_grid_table(cfg, D_grid)
    scan, best = [], None
    for D in D_grid:
        ec = _ec_section(D, cfg, grid)
        zb = _zb_section(D, cfg, ec.rows if cfg.nu == ec.model.joint.size("U_1") else None)
        gap = ec.value - zb.value
        scan.append(
            {
                "D": D,
                "value_ec": ec.value,
                "value_zb": zb.value,
                "gap": gap,
                "ec_grid_value": float(grid[D][0]),
            }
        )
        if best is None or gap > best[0] + 1e-12:
            best = (gap, D, ec, zb)
    gap, D, ec, zb = best
    envelope = _lower_envelope([(0.0, 2.0)] + [(r["D"], r["value_ec"]) for r in scan], D)
    details = {
        "ec_evidence": {
            "restarts": cfg.restarts,
            "grid_resolution": (1.0 / cfg.ec_grid_step) if cfg.ec_grid_step else None,
            "aux_alphabet_sizes": dict(cfg.aux_alphabet_sizes),
        },
        "ec_time_sharing_envelope_at_D_star": envelope,
        "gap_vs_envelope": envelope - zb.value,
        "shared_information": _ixv(zb.model),
        "ec_model": ec.model.to_json(),
    }
    return SeparationReport(
        kind="zb",
        D_star=D,
        value_ec=ec.value,
        value_cms_or_zb=zb.value,
        gap=gap,
        best_model=zb.model,
        per_restart_trace=zb.trace,
        wall_time=time.perf_counter() - t0,
        scan=scan,
        details=details,
        config=cfg.to_json(),
    )


def _lower_envelope(points, D) -> float:
    """Lower convex envelope of (D, value) points evaluated at ``D`` (time sharing)."""
    best = np.inf
    for (d0, v0), (d1, v1) in itertools.combinations(points, 2):
        if d0 > d1:
            (d0, v0), (d1, v1) = (d1, v1), (d0, v0)
        if d0 <= D <= d1:
            v = v0 if d1 == d0 else v0 + (v1 - v0) * (D - d0) / (d1 - d0)
            best = min(best, v)
    return float(best)


def _ixv(model: AuxModel) -> float:
    v = model.V(model.full) or model.V({1, 2})
    if v is None:
        return 0.0
    j = model.joint
    return j.entropy([v]) + j.entropy([model.source]) - j.entropy([v, model.source])


# --- L = 4 and L = 3 constructions --------------------------------------------


def _product_given_x(t_a: np.ndarray, t_b: np.ndarray) -> np.ndarray:
    """Join two tensors with X on axis 0 so they are independent given X."""
    px = t_a.reshape(t_a.shape[0], -1).sum(axis=1)
    pb = t_b.reshape(t_b.shape[0], -1).sum(axis=1)
    if not np.allclose(px, pb, atol=1e-12):
        raise ValueError("source marginals differ between the two parts")
    cond_b = t_b / np.where(pb > 0, pb, 1.0).reshape(-1, *([1] * (t_b.ndim - 1)))
    a = t_a.reshape(*t_a.shape, *([1] * (t_b.ndim - 1)))
    b = cond_b.reshape(t_b.shape[0], *([1] * (t_a.ndim - 1)), *t_b.shape[1:])
    return a * b


def _ordered_zb_tensor(zb_model: AuxModel):
    """Tensor over (X, V_12, U_1, U_2, U_12) from a two-description model."""
    j = zb_model.joint
    roles = [
        ("X", zb_model.source),
        ("V_12", zb_model.V({1, 2})),
        ("U_1", zb_model.U({1})),
        ("U_2", zb_model.U({2})),
        ("U_12", zb_model.U({1, 2})),
    ]
    present = [(new, old) for new, old in roles if old is not None]
    olds = [old for _, old in present]
    t = j.marginal_table(olds)
    order = [n for n in j.names if n in olds]
    t = np.transpose(t, [order.index(o) for o in olds])
    if zb_model.V({1, 2}) is None:
        t = t[:, None]
        present.insert(1, ("V_12", None))
    return t


def build_l4_cms(zb_model: AuxModel, D3: float, D34: float) -> tuple[AuxModel, DistortionSpec]:
    """Four-description CMS model: a two-description witness beside a refinement pair.

    Descriptions 1-2 reuse the witness variables (with ``V_12`` the only
    non-constant shared variable); descriptions 3-4 carry the degraded
    successive-refinement cascade at distortions ``(D3, D34)``, independent of
    the first group given the source.  Only ``{1}, {2}, {1,2}, {3}, {3,4}``
    are constrained.
    """
    if not 0 <= D34 <= D3 < 0.5:
        raise ValueError(f"need 0 <= D34 <= D3 < 0.5, got D3={D3}, D34={D34}")
    zb_t = _ordered_zb_tensor(zb_model)
    sr_model, _ = sr_degraded_model(D3, D34)
    sr_t = sr_model.joint.marginal_table(["X", "U_1", "U_12"])
    t = _product_given_x(zb_t, sr_t)
    joint = joint_from_tensor(["X", "V_12", "U_1", "U_2", "U_12", "U_3", "U_34"], t)
    model = AuxModel.build(
        4,
        "CMS",
        joint,
        {frozenset({1, 2}): "V_12"},
        {1: "U_1", 2: "U_2", 3: "U_3"},
        {frozenset({1, 2}): "U_12", frozenset({3, 4}): "U_34"},
    )
    return model, DistortionSpec.hamming([{1}, {2}, {1, 2}, {3}, {3, 4}])


def vkg_variant(model: AuxModel, shared: str = "V_12") -> AuxModel:
    """Same joint law with the given shared variable sent in every description."""
    j = model.joint
    new_name = f"V_{''.join(str(i) for i in range(1, model.L + 1))}"
    drop = [n for S, n in model.shared_vars.items() if n != shared]
    for n in drop:
        if not model.is_constant(n):
            raise ValueError(f"{n} is not constant; cannot form a single-shared-variable model")
    keep = [v for v in j.variables if v.name not in drop]
    t = j.marginal_table([v.name for v in keep])
    names = [new_name if v.name == shared else v.name for v in keep]
    joint = joint_from_tensor(names, t)
    return AuxModel.build(
        model.L,
        "VKG",
        joint,
        {model.full: new_name},
        model.private_vars,
        model.refinement_vars,
        source=model.source,
    )


def separation_l4(
    cfg: SearchConfig,
    zb_report: SeparationReport | None = None,
    D_grid: Sequence[float] | None = None,
    D3: float = 0.25,
    D34: float = 0.1,
) -> SeparationReport:
    """Four-description separation built on the two-description witness."""
    t0 = time.perf_counter()
    if zb_report is None:
        zb_report = separation_zb(cfg, D_grid or parse_grid("0.05:0.45:0.05"))
    if not zb_report.witness:
        return _no_witness("l4", zb_report, t0, cfg)
    cms, dspec = build_l4_cms(zb_report.best_model, D3, D34)
    r3 = regions.min_rates(cms, [0, 0, 1, 0]).value
    r34 = regions.min_rates(cms, [0, 0, 1, 1]).value
    r12 = regions.min_rates(cms, [1, 1, 0, 0]).value
    _, dist = regions.synthesize_decoders(cms, dspec)
    vkg = vkg_variant(cms)
    r34_vkg = regions.min_rates(vkg, [0, 0, 1, 1]).value
    shared_rate = regions.alpha(cms, 2, [{1, 2}])
    details = {
        "D3": D3,
        "D34": D34,
        "cms_R3": r3,
        "cms_R3_plus_R4": r34,
        "cms_R1_plus_R2": r12,
        "rd_D3": rd_binary(D3),
        "rd_D34": rd_binary(D34),
        "zb_witness_value": zb_report.value_cms_or_zb,
        "distortions": {str(sorted(K)): v for K, v in dist.items()},
        "vkg_same_law_R3_plus_R4": r34_vkg,
        "vkg_excess_on_R3_plus_R4": r34_vkg - rd_binary(D34),
        "shared_rate": shared_rate,
        "vkg_value_source": "two-description EC minimum: a single shared codeword must be constant "
        "for R3 + R4 to meet R(D34)",
    }
    return SeparationReport(
        kind="l4",
        D_star=zb_report.D_star,
        value_ec=zb_report.value_ec,
        value_cms_or_zb=r12,
        gap=zb_report.value_ec - r12,
        best_model=cms,
        per_restart_trace=zb_report.per_restart_trace,
        wall_time=time.perf_counter() - t0 + zb_report.wall_time,
        details=details,
        config=cfg.to_json(),
    )


def build_l3_cms(zb_model: AuxModel, D13: float | None = 0.0) -> tuple[AuxModel, DistortionSpec]:
    """Three-description CMS model where pair {1,3} refines description 1.

    ``U_3`` is constant; ``U_13`` is the source through a binary symmetric
    channel with crossover ``D13`` (``None`` makes it constant, so the pair
    decodes no better than description 1 alone).  ``V_12`` is the only
    non-constant shared variable.
    """
    zb_t = _ordered_zb_tensor(zb_model)
    if D13 is None:
        ref = np.array([[0.5], [0.5]])
    else:
        if not 0 <= D13 < 0.5:
            raise ValueError("D13 must lie in [0, 0.5)")
        ref = 0.5 * np.array([[1 - D13, D13], [D13, 1 - D13]])
    t = _product_given_x(zb_t, ref)
    joint = joint_from_tensor(["X", "V_12", "U_1", "U_2", "U_12", "U_13"], t)
    model = AuxModel.build(
        3,
        "CMS",
        joint,
        {frozenset({1, 2}): "V_12"},
        {1: "U_1", 2: "U_2"},
        {frozenset({1, 2}): "U_12", frozenset({1, 3}): "U_13"},
    )
    return model, DistortionSpec.hamming([{1}, {2}, {1, 2}, {1, 3}])


def separation_l3(
    cfg: SearchConfig,
    zb_report: SeparationReport | None = None,
    D_grid: Sequence[float] | None = None,
    D13: float | None = 0.0,
) -> SeparationReport:
    """Rate of description 3 with descriptions 1 and 2 held at the witness rates."""
    t0 = time.perf_counter()
    if zb_report is None:
        zb_report = separation_zb(cfg, D_grid or parse_grid("0.05:0.45:0.05"))
    if not zb_report.witness:
        return _no_witness("l3", zb_report, t0, cfg)
    zb = zb_report.best_model
    pair = regions.min_rates(zb, [1.0, 1.0])
    caps = {1: float(pair.rates[0]), 2: float(pair.rates[1])}
    cms, dspec = build_l3_cms(zb, D13)
    vkg = vkg_variant(cms)
    r3_cms = regions.min_rates(cms, [0, 0, 1], caps=caps)
    r3_vkg = regions.min_rates(vkg, [0, 0, 1], caps=caps)
    r_c = regions.alpha(cms, 2, [{1, 2}])
    _, dist = regions.synthesize_decoders(cms, dspec)
    details = {
        "R1": caps[1],
        "R2": caps[2],
        "R3_vkg": r3_vkg.value,
        "R3_cms": r3_cms.value,
        "common_rate": r_c,
        "D13_channel": D13,
        "distortions": {str(sorted(K)): v for K, v in dist.items()},
        "cms_allocation": r3_cms.allocation.to_json() if r3_cms.allocation else None,
    }
    return SeparationReport(
        kind="l3",
        D_star=zb_report.D_star,
        value_ec=r3_vkg.value,
        value_cms_or_zb=r3_cms.value,
        gap=r3_vkg.value - r3_cms.value,
        best_model=cms,
        per_restart_trace=zb_report.per_restart_trace,
        wall_time=time.perf_counter() - t0 + zb_report.wall_time,
        details=details,
        config=cfg.to_json(),
    )


def _no_witness(kind: str, zb_report: SeparationReport, t0: float, cfg: SearchConfig) -> SeparationReport:
    return SeparationReport(
        kind=kind,
        D_star=zb_report.D_star,
        value_ec=float("nan"),
        value_cms_or_zb=float("nan"),
        gap=float("nan"),
        best_model=None,
        per_restart_trace=zb_report.per_restart_trace,
        wall_time=time.perf_counter() - t0 + zb_report.wall_time,
        details={"status": "no separation witness", "zb_gap": zb_report.gap},
        config=cfg.to_json(),
    )
