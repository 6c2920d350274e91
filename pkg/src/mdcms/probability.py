"""Joint PMFs over named finite-alphabet variables and their entropy calculus.

A :class:`JointDistribution` stores a dense probability tensor whose axes
follow the variable order (C order, so the last variable varies fastest in the
flattened form).  All information quantities are in bits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class VariableSpec:
    name: str
    alphabet_size: int

    def __post_init__(self):
        if not self.name:
            raise ValueError("variable name must be nonempty")
        if int(self.alphabet_size) < 1:
            raise ValueError(f"{self.name}: alphabet size must be >= 1")


class JointDistribution:
    """Immutable dense joint PMF.

    ``probs`` may be given flat (last variable fastest) or already shaped.
    Tables that are not normalized to within 1e-12 are rejected rather than
    silently renormalized.
    """

    def __init__(self, variables: Sequence[VariableSpec | tuple], probs, *, tol: float = NORMALIZATION_TOL):
        specs = tuple(v if isinstance(v, VariableSpec) else VariableSpec(*v) for v in variables)
        if not specs:
            raise ValueError("a distribution needs at least one variable")
        names = [v.name for v in specs]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate variable names in {names}")
        shape = tuple(int(v.alphabet_size) for v in specs)
        p = np.array(probs, dtype=float)
        if p.size != int(np.prod(shape)):
            raise ValueError(
                f"probability table has {p.size} entries, expected {int(np.prod(shape))} for alphabets {shape}"
            )
        p = p.reshape(shape)
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("probabilities must be finite and nonnegative")
        total = p.sum()
        if abs(total - 1.0) > tol:
            raise ValueError(f"probabilities sum to {total!r}, not 1 (normalization tolerance {tol})")
        p.setflags(write=False)
        self._variables = specs
        self._index = {n: i for i, n in enumerate(names)}
        self._p = p
        self._hcache: dict[frozenset, float] = {}

    @property
    def variables(self) -> tuple[VariableSpec, ...]:
        return self._variables

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self._variables)

    @property
    def table(self) -> np.ndarray:
        """Read-only probability tensor, one axis per variable."""
        return self._p

    @property
    def probs(self) -> np.ndarray:
        return self._p.reshape(-1)

    def size(self, name: str) -> int:
        return self._variables[self.axis(name)].alphabet_size

    def axis(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown variable {name!r}; have {list(self._index)}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def _resolve(self, names: Iterable[str]) -> frozenset:
        names = frozenset(names)
        for n in names:
            self.axis(n)
        return names

    def marginal_table(self, keep: Iterable[str]) -> np.ndarray:
        """Marginal tensor over ``keep``, axes in the distribution's variable order."""
        keep = self._resolve(keep)
        drop = tuple(i for i, n in enumerate(self.names) if n not in keep)
        return self._p.sum(axis=drop) if drop else self._p

    def entropy(self, names: Iterable[str]) -> float:
        names = self._resolve(names)
        if not names:
            return 0.0
        h = self._hcache.get(names)
        if h is None:
            h = _entropy_of(self.marginal_table(names))
            self._hcache[names] = h
        return h

    def to_json(self) -> dict:
        return {
            "variables": [{"name": v.name, "alphabet": v.alphabet_size} for v in self._variables],
            "probs": [float(x) for x in self.probs],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "JointDistribution":
        try:
            variables = [VariableSpec(v["name"], int(v["alphabet"])) for v in data["variables"]]
            probs = data["probs"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed distribution: missing field {exc}") from None
        return cls(variables, probs)

    def __repr__(self) -> str:
        vs = ", ".join(f"{v.name}:{v.alphabet_size}" for v in self._variables)
        return f"JointDistribution({vs})"


def _entropy_of(p: np.ndarray) -> float:
    q = p[p > 0]
    return float(-(q * np.log2(q)).sum())


def marginalize(dist: JointDistribution, keep: Iterable[str]) -> JointDistribution:
    keep = set(keep)
    if not keep:
        raise ValueError("keep must name at least one variable")
    for n in keep:
        dist.axis(n)
    specs = [v for v in dist.variables if v.name in keep]
    return JointDistribution(specs, dist.marginal_table(keep), tol=1e-9)


def entropy(dist: JointDistribution, A: Iterable[str]) -> float:
    A = set(A)
    if not A:
        raise ValueError("entropy needs a nonempty variable set")
    return dist.entropy(A)


def conditional_entropy(dist: JointDistribution, A: Iterable[str], B: Iterable[str] = ()) -> float:
    """H(A | B) = H(A, B) - H(B)."""
    A, B = set(A), set(B)
    if not A:
        raise ValueError("conditional entropy needs a nonempty A")
    if A & B:
        raise ValueError(f"A and B overlap on {sorted(A & B)}")
    return dist.entropy(A | B) - dist.entropy(B)


def mutual_information(
    dist: JointDistribution, A: Iterable[str], B: Iterable[str], given: Iterable[str] = ()
) -> float:
    """I(A; B | given), clamped to zero when within 1e-12 below it."""
    A, B, C = set(A), set(B), set(given)
    if not A or not B:
        raise ValueError("mutual information needs nonempty A and B")
    if A & B or A & C or B & C:
        raise ValueError("argument sets must be pairwise disjoint")
    val = (
        dist.entropy(A | C) + dist.entropy(B | C) - dist.entropy(A | B | C) - dist.entropy(C)
    )
    if -1e-12 < val < 0:
        return 0.0
    return val


def binary_entropy(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return float(-p * np.log2(p) - (1 - p) * np.log2(1 - p))


def load_distribution(path) -> JointDistribution:
    with open(path) as fh:
        return JointDistribution.from_json(json.load(fh))
