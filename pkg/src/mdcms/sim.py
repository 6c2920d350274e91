"""Finite-blocklength random-coding simulation for small models.

Codebooks are layered: the widest shared variable first, then narrower
shared variables, then the base layer ``U_l``, then refinements ``U_K`` by
increasing ``|K|``.  Every codebook is generated letter by letter from the
model's conditional law given the codewords it is conditioned on.

A codebook is stored as an array whose leading axes are the indices of all
*base* codebooks (shared and base-layer ones) it depends on, followed by
the letter axis.  Refinement codebooks have no index of their own: there is
one codeword per tuple of conditioning indices.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import lattice, regions
from .model import AuxModel, DistortionSpec

MAX_L = 3
MAX_N = 12
MAX_CODEWORDS = 4096
MAX_CELLS = 1 << 24  # letters stored per codebook array


@dataclass
class Codebook:
    name: str
    kind: str  # "shared", "private" or "refinement"
    axes: tuple[str, ...]  # base codebooks whose indices address this one (incl. itself)
    size: int  # own index range; 1 for refinement codebooks
    rate: float  # effective rate log2(size) / n
    words: np.ndarray  # shape (*sizes of axes, n)


@dataclass
class CodebookSuite:
    n: int
    order: list[str]
    codebooks: dict[str, Codebook]
    source: str

    @property
    def base(self) -> list[str]:
        return [c for c in self.order if self.codebooks[c].kind != "refinement"]

    def sizes(self) -> dict[str, int]:
        return {c: self.codebooks[c].size for c in self.base}

    def word(self, name: str, indices: dict[str, int]) -> np.ndarray:
        cb = self.codebooks[name]
        missing = [a for a in cb.axes if a not in indices]
        if missing:
            raise ValueError(f"codeword of {name} needs indices for {missing}")
        return cb.words[tuple(int(indices[a]) for a in cb.axes)]

    def effective_rates(self) -> dict[str, float]:
        return {c: self.codebooks[c].rate for c in self.base}


@dataclass
class SimReport:
    trials: int
    encode_failures: int
    empirical_distortions: dict
    analytic_distortions: dict
    n: int
    seed: int
    epsilon: float
    effective_rates: dict = field(default_factory=dict)
    per_trial: list = field(default_factory=list)

    @property
    def failure_rate(self) -> float:
        return self.encode_failures / self.trials

    def to_json(self) -> dict:
        r12 = lambda v: None if v is None else float(f"{v:.12g}")  # noqa: E731
        return {
            "trials": self.trials,
            "encode_failures": self.encode_failures,
            "failure_rate": r12(self.failure_rate),
            "empirical_distortions": {lattice.label(K): r12(v) for K, v in self.empirical_distortions.items()},
            "analytic_distortions": {lattice.label(K): r12(v) for K, v in self.analytic_distortions.items()},
            "n": self.n,
            "seed": self.seed,
            "epsilon": self.epsilon,
            "effective_rates": {k: r12(v) for k, v in self.effective_rates.items()},
        }


# --- model plumbing -----------------------------------------------------------


def as_cms(model: AuxModel) -> AuxModel:
    """The same joint law viewed through the CMS codebook structure."""
    if model.scheme == "CMS":
        return model
    if model.L == 2 or model.scheme == "VKG":
        return model.replace(scheme="CMS")
    raise ValueError(f"cannot simulate a {model.scheme} model at L={model.L}")


def _roles(model: AuxModel):
    """(name, kind, key, parent names) in generation order."""
    L = model.L
    out = []
    for W in range(L, 1, -1):
        for S in lattice.tier(L, W):
            v = model.V(S)
            if v is None:
                continue
            parents = [model.V(T) for T in lattice.sharing_sets(L, S) if T > S and model.V(T)]
            out.append((v, "shared", S, parents))
    for l in range(1, L + 1):
        out.append((model.U({l}), "private", frozenset({l}), model.visible_shared({l})))
    for K in lattice.nonempty_subsets(L):
        if len(K) < 2:
            continue
        proper = [T for T in lattice.subsets_of(K) if T != K]
        out.append((model.U(K), "refinement", K, model.visible_shared(K) + model.Us(proper)))
    return out


def _conditional(model: AuxModel, name: str, parents: list[str]) -> np.ndarray:
    """Table ``p(name | parents)`` with axes (*parents, name).

    Parent cells of probability zero fall back to the marginal of ``name``;
    codewords only land there when a parent codeword is itself atypical.
    """
    j = model.joint
    keep = [*parents, name]
    order = [n for n in j.names if n in keep]
    t = np.transpose(j.marginal_table(keep), [order.index(k) for k in keep])
    denom = t.sum(axis=-1, keepdims=True)
    marg = j.marginal_table([name])
    return np.where(denom > 0, t / np.where(denom > 0, denom, 1.0), marg)


def _check_limits(model: AuxModel, n: int):
    if model.L > MAX_L:
        raise ValueError(f"simulation supports L <= {MAX_L}, got {model.L}")
    if not 1 <= n <= MAX_N:
        raise ValueError(f"blocklength must lie in 1..{MAX_N}, got {n}")


def codebook_size(rate: float, n: int) -> int:
    return 1 << int(math.ceil(n * rate - 1e-12))


def generate_codebooks(model: AuxModel, alloc: regions.RateAllocation, n: int, seed) -> CodebookSuite:
    """Draw every codebook in generation order; ``seed`` is anything ``default_rng`` accepts.

    Codebooks of constant variables get a single codeword whatever their
    allocated rate.
    """
    model = as_cms(model)
    _check_limits(model, n)
    rng = np.random.default_rng(seed)
    books: dict[str, Codebook] = {}
    order = []
    for name, kind, key, parents in _roles(model):
        if kind == "refinement":
            size = 1
        else:
            rate = alloc.private.get(next(iter(key)), 0.0) if kind == "private" else alloc.shared.get(key, 0.0)
            size = 1 if model.is_constant(name) else codebook_size(rate, n)
            if size > MAX_CODEWORDS:
                raise ValueError(
                    f"codebook {name} would need {size} codewords (rate {rate:.4g}, n={n}); limit {MAX_CODEWORDS}"
                )
        axes = []
        for p in parents:
            for a in books[p].axes:
                if a not in axes:
                    axes.append(a)
        base_order = [b for b in order if books[b].kind != "refinement"]
        axes = sorted(axes, key=base_order.index)
        if kind != "refinement":
            axes.append(name)
        shape = tuple(books[a].size if a != name else size for a in axes)
        if int(np.prod(shape, dtype=np.int64)) * n > MAX_CELLS:
            raise ValueError(f"codebook {name} is too large to store ({shape} x {n})")

        cond = _conditional(model, name, parents)
        # parent symbols broadcast to the new codebook's index grid
        sym_idx = []
        for p in parents:
            pw = books[p].words
            view = [1] * len(axes)
            for a, s in zip(books[p].axes, pw.shape[:-1]):
                view[axes.index(a)] = s
            sym_idx.append(pw.reshape(*view, n))
        probs = cond[tuple(sym_idx)] if parents else cond
        probs = np.broadcast_to(probs, (*shape, n, cond.shape[-1]))
        cdf = np.cumsum(probs, axis=-1)
        u = rng.random((*shape, n, 1))
        words = np.minimum((u >= cdf).sum(axis=-1), cond.shape[-1] - 1).astype(np.int16)
        books[name] = Codebook(name, kind, tuple(axes), size, math.log2(size) / n, words)
        order.append(name)
    return CodebookSuite(n, order, books, model.source)


# --- encoding -----------------------------------------------------------------


def joint_type_deviation(model: AuxModel, suite: CodebookSuite, x_seq, indices: dict[str, int]) -> float:
    """Largest per-cell gap between the empirical joint type and the model PMF."""
    model = as_cms(model)
    names = list(model.joint.names)
    seqs = [np.asarray(x_seq) if v == suite.source else suite.word(v, indices) for v in names]
    counts = np.zeros(model.joint.table.shape)
    np.add.at(counts, tuple(seqs), 1.0)
    return float(np.abs(counts / suite.n - model.joint.table).max())


def encode(x_seq, suite: CodebookSuite, epsilon: float, model: AuxModel):
    """First index tuple (in index order) whose joint type is epsilon-typical, else ``None``.

    Depth-first over base codebooks in generation order.  After each level
    the partial type over the variables fixed so far is compared with the
    model marginal; a marginal cell sums ``m`` joint cells, so a deviation
    above ``m * epsilon`` rules out every completion.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    model = as_cms(model)
    x_seq = np.asarray(x_seq, dtype=np.int64)
    n = suite.n
    if x_seq.shape != (n,):
        raise ValueError(f"source sequence must have length {n}")
    j = model.joint
    total_cells = int(np.prod(j.table.shape))
    base = suite.base
    # refinements become known once the last of their base axes is fixed
    attach = {b: [] for b in base}
    for c in suite.order:
        cb = suite.codebooks[c]
        if cb.kind == "refinement":
            last = max((a for a in cb.axes), key=base.index) if cb.axes else None
            if last is None:
                raise ValueError(f"refinement {c} has no conditioning codebook")
            attach[last].append(c)

    levels = []  # (codebook, [vars fixed at this level], target marginal, radix, tol)
    fixed = [suite.source]
    for b in base:
        new = [b] + attach[b]
        fixed = fixed + new
        ordr = [nm for nm in j.names if nm in fixed]
        target = np.transpose(j.marginal_table(fixed), [ordr.index(f) for f in fixed]).reshape(-1)
        radix = [j.size(v) for v in new]
        cells = int(np.prod([j.size(f) for f in fixed]))
        levels.append((b, new, target, radix, epsilon * (total_cells // cells) + 1e-12))

    indices: dict[str, int] = {}

    def rec(k: int, code: np.ndarray) -> bool:
        b, new, target, radix, tol = levels[k]
        M = suite.codebooks[b].size
        ncell = target.size
        c = code[None, :].repeat(M, axis=0)
        for v, r in zip(new, radix):
            cb = suite.codebooks[v]
            sel = tuple(slice(None) if a == b else int(indices[a]) for a in cb.axes)
            w = cb.words[sel].astype(np.int64)  # (M, n) for everything attached to b
            c = c * r + w
        counts = np.zeros((M, ncell))
        np.add.at(counts, (np.arange(M)[:, None].repeat(n, axis=1), c), 1.0)
        ok = np.abs(counts / n - target).max(axis=1) <= tol
        for m in np.nonzero(ok)[0]:
            indices[b] = int(m)
            if k + 1 == len(levels) or rec(k + 1, c[m]):
                return True
        indices.pop(b, None)
        return False

    if rec(0, x_seq.copy()):
        return dict(indices)
    return None


def decode_subset(suite: CodebookSuite, indices: dict[str, int], S, decoders: dict) -> np.ndarray:
    """Per-letter reconstruction for received set ``S``."""
    S = frozenset(S)
    if S not in decoders:
        raise ValueError(f"no decoder for subset {sorted(S)}")
    dec = decoders[S]
    return dec([suite.word(v, indices) for v in dec.inputs] if dec.inputs else [np.zeros(suite.n, int)])


# --- trials -------------------------------------------------------------------


def _trial(args):
    model, alloc, n, epsilon, seed, t, dspec, decoders = args
    suite = generate_codebooks(model, alloc, n, [seed, t, 0])
    px = model.joint.marginal_table([model.source])
    x = np.random.default_rng([seed, t, 1]).choice(px.size, size=n, p=px)
    idx = encode(x, suite, epsilon, model)
    if idx is None:
        return t, False, {}
    dist = {}
    for K, d in dspec.measures.items():
        xhat = decode_subset(suite, idx, K, decoders)
        dist[K] = float(d[x, xhat].mean())
    return t, True, dist


def run_trials(
    model: AuxModel,
    alloc: regions.RateAllocation,
    n: int,
    trials: int,
    epsilon: float,
    seed: int,
    dspec: DistortionSpec | None = None,
    jobs: int = 1,
) -> SimReport:
    """Fresh codebooks and a fresh i.i.d. source block per trial."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    model = as_cms(model)
    _check_limits(model, n)
    if dspec is None:
        dspec = DistortionSpec.hamming(lattice.nonempty_subsets(model.L), model.joint.size(model.source))
    dspec.check(model)
    decoders, analytic = regions.synthesize_decoders(model, dspec)
    # fail early on oversized codebooks
    sizes = generate_codebooks(model, alloc, n, [seed, 0, 0]).effective_rates()
    tasks = [(model, alloc, n, epsilon, seed, t, dspec, decoders) for t in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_trial, tasks, chunksize=max(1, trials // (4 * jobs))))
    else:
        results = [_trial(a) for a in tasks]
    results.sort(key=lambda r: r[0])
    failures = sum(1 for _, ok, _ in results if not ok)
    good = [d for _, ok, d in results if ok]
    empirical = {K: (float(np.mean([d[K] for d in good])) if good else None) for K in dspec.measures}
    per_trial = [(t, ok, d) for t, ok, d in results]
    return SimReport(
        trials=trials,
        encode_failures=failures,
        empirical_distortions=empirical,
        analytic_distortions=dict(analytic),
        n=n,
        seed=seed,
        epsilon=epsilon,
        effective_rates=sizes,
        per_trial=per_trial,
    )
