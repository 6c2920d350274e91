"""Auxiliary-variable models and distortion specifications, with JSON I/O.

An :class:`AuxModel` binds variables of a joint PMF to roles: shared
variables ``V_S`` (one per multi-description subset ``S``), base-layer
variables ``U_l`` and refinement variables ``U_K``.  Variables a model does not
declare are materialized as alphabet-1 constants, so every rate formula can
ask for any role it needs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import lattice
from .lattice import DescriptionSet
from .probability import JointDistribution, VariableSpec

SCHEMES = ("EC", "ZB", "VKG", "CMS")
SOURCE = "X"


class ModelError(ValueError):
    """A model or distortion file violates one of its invariants."""


def shared_name(S: Iterable[int]) -> str:
    return f"V_{lattice.label(S)}"


def u_name(K: Iterable[int]) -> str:
    return f"U_{lattice.label(K)}"


@dataclass(frozen=True)
class AuxModel:
    L: int
    scheme: str
    joint: JointDistribution
    shared_vars: Mapping[DescriptionSet, str]
    private_vars: Mapping[int, str]
    refinement_vars: Mapping[DescriptionSet, str]
    source: str = SOURCE
    vkg_last_term_conditions_on_shared: bool = True

    @classmethod
    def build(
        cls,
        L: int,
        scheme: str,
        joint: JointDistribution,
        shared: Mapping | None = None,
        private: Mapping | None = None,
        refinement: Mapping | None = None,
        *,
        source: str = SOURCE,
        vkg_last_term_conditions_on_shared: bool = True,
    ) -> "AuxModel":
        """Validate roles and fill in constants for every undeclared role."""
        lattice._check_L(L)
        if scheme not in SCHEMES:
            raise ModelError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
        full = lattice.full_set(L)
        shared = {lattice.as_set(k, L): v for k, v in (shared or {}).items()}
        private = {int(k): v for k, v in (private or {}).items()}
        refinement = {lattice.as_set(k, L): v for k, v in (refinement or {}).items()}

        if source not in joint:
            raise ModelError(f"source variable {source!r} missing from the joint distribution")
        for l in private:
            if not 1 <= l <= L:
                raise ModelError(f"private variable index {l} outside 1..{L}")
        for K in refinement:
            if len(K) < 2:
                raise ModelError(f"refinement subset {sorted(K)} must have at least two members")
        for S in shared:
            if len(S) < 2:
                raise ModelError(f"shared subset {sorted(S)} must have at least two members")

        if scheme == "EC":
            if L != 2 or shared:
                raise ModelError("EC models have L = 2 and no shared variable")
        elif scheme == "ZB":
            if L != 2 or set(shared) - {full}:
                raise ModelError("ZB models have L = 2 and at most the shared variable V_12")
        elif scheme == "VKG":
            if set(shared) - {full}:
                raise ModelError("VKG models have a single shared variable keyed by the full set")

        names = [*shared.values(), *private.values(), *refinement.values()]
        if len(set(names)) != len(names):
            raise ModelError("a variable may hold only one role")
        for n in names:
            if n not in joint:
                raise ModelError(f"role variable {n!r} missing from the joint distribution")
            if n == source:
                raise ModelError("the source cannot also be an auxiliary variable")

        # materialize constants for absent roles
        extra = []
        for K in lattice.nonempty_subsets(L):
            if len(K) == 1:
                (l,) = K
                if l not in private:
                    private[l] = u_name(K)
                    extra.append(private[l])
            elif K not in refinement:
                refinement[K] = u_name(K)
                extra.append(refinement[K])
        if scheme == "CMS":
            wanted = lattice.sharing_sets(L, full)
        elif scheme == "EC":
            wanted = ()
        else:
            wanted = (full,)
        for S in wanted:
            if S not in shared:
                shared[S] = shared_name(S)
                extra.append(shared[S])
        clash = [n for n in extra if n in joint]
        if clash:
            raise ModelError(f"variables {clash} exist in the joint but are not bound to a role")
        if extra:
            specs = list(joint.variables) + [VariableSpec(n, 1) for n in extra]
            joint = JointDistribution(specs, joint.probs, tol=1e-9)

        return cls(
            L=L,
            scheme=scheme,
            joint=joint,
            shared_vars=dict(sorted(shared.items(), key=lambda kv: lattice.canonical_key(kv[0]))),
            private_vars=dict(sorted(private.items())),
            refinement_vars=dict(sorted(refinement.items(), key=lambda kv: lattice.canonical_key(kv[0]))),
            source=source,
            vkg_last_term_conditions_on_shared=vkg_last_term_conditions_on_shared,
        )

    # -- role lookups ---------------------------------------------------------

    @property
    def full(self) -> DescriptionSet:
        return lattice.full_set(self.L)

    def U(self, K: Iterable[int]) -> str:
        K = frozenset(K)
        if len(K) == 1:
            return self.private_vars[next(iter(K))]
        return self.refinement_vars[K]

    def Us(self, family: Iterable[Iterable[int]]) -> list[str]:
        return [self.U(K) for K in family]

    def V(self, S: Iterable[int]) -> str | None:
        return self.shared_vars.get(frozenset(S))

    def Vs(self, family: Iterable[Iterable[int]]) -> list[str]:
        return [n for n in (self.V(S) for S in family) if n is not None]

    def visible_shared(self, K: Iterable[int]) -> list[str]:
        """Shared variables whose index is carried by some description in ``K``."""
        K = frozenset(K)
        return [n for S, n in self.shared_vars.items() if S & K]

    def decoder_inputs(self, K: Iterable[int]) -> list[str]:
        """Variables available to the decoder for received set ``K``, in joint order."""
        K = frozenset(K)
        names = set(self.visible_shared(K)) | set(self.Us(lattice.subsets_of(K)))
        return [n for n in self.joint.names if n in names]

    def is_constant(self, name: str) -> bool:
        t = self.joint.marginal_table([name])
        return int(np.count_nonzero(t > 0)) <= 1

    def auxiliaries(self) -> list[str]:
        return [n for n in self.joint.names if n != self.source]

    def replace(self, **changes) -> "AuxModel":
        """Rebuild with some fields changed (roles are re-validated)."""
        args = dict(
            L=self.L,
            scheme=self.scheme,
            joint=self.joint,
            shared=self.shared_vars,
            private=self.private_vars,
            refinement=self.refinement_vars,
            source=self.source,
            vkg_last_term_conditions_on_shared=self.vkg_last_term_conditions_on_shared,
        )
        args.update(changes)
        return AuxModel.build(**args)

    # -- serialization --------------------------------------------------------

    def to_json(self) -> dict:
        roles = []
        for S, n in self.shared_vars.items():
            roles.append({"name": n, "kind": "shared", "subset": sorted(S)})
        for l, n in self.private_vars.items():
            roles.append({"name": n, "kind": "private", "subset": [l]})
        for K, n in self.refinement_vars.items():
            roles.append({"name": n, "kind": "refinement", "subset": sorted(K)})
        out = self.joint.to_json()
        out.update({"L": self.L, "scheme": self.scheme, "roles": roles})
        if self.source != SOURCE:
            out["source"] = self.source
        if not self.vkg_last_term_conditions_on_shared:
            out["vkg_last_term_conditions_on_shared"] = False
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "AuxModel":
        for key in ("variables", "probs", "L", "scheme"):
            if key not in data:
                raise ModelError(f"model file is missing required field {key!r}")
        try:
            joint = JointDistribution.from_json(data)
        except ValueError as exc:
            raise ModelError(f"joint distribution invalid: {exc}") from None
        L = int(data["L"])
        shared, private, refinement = {}, {}, {}
        for role in data.get("roles", []):
            try:
                kind, name, subset = role["kind"], role["name"], role["subset"]
            except KeyError as exc:
                raise ModelError(f"role entry missing field {exc}") from None
            S = lattice.as_set(subset, L)
            if kind == "shared":
                shared[S] = name
            elif kind == "private":
                if len(S) != 1:
                    raise ModelError(f"private role {name!r} must name exactly one description")
                private[next(iter(S))] = name
            elif kind == "refinement":
                refinement[S] = name
            else:
                raise ModelError(f"unknown role kind {kind!r}")
        return cls.build(
            L,
            data["scheme"],
            joint,
            shared,
            private,
            refinement,
            source=data.get("source", SOURCE),
            vkg_last_term_conditions_on_shared=bool(data.get("vkg_last_term_conditions_on_shared", True)),
        )


@dataclass(frozen=True)
class DistortionSpec:
    """Per-subset distortion matrices ``d_K[x, xhat]``; absent subsets are unconstrained."""

    measures: Mapping[DescriptionSet, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for K, m in self.measures.items():
            K = frozenset(K)
            m = np.asarray(m, dtype=float)
            if m.ndim != 2:
                raise ModelError(f"distortion matrix for {sorted(K)} must be two-dimensional")
            if not np.all(np.isfinite(m)) or np.any(m < 0):
                raise ModelError(f"distortion matrix for {sorted(K)} must be finite and nonnegative")
            clean[K] = m
        object.__setattr__(
            self, "measures", dict(sorted(clean.items(), key=lambda kv: lattice.canonical_key(kv[0])))
        )

    @property
    def subsets(self) -> list[DescriptionSet]:
        return list(self.measures)

    def check(self, model: AuxModel) -> None:
        nx = model.joint.size(model.source)
        for K, m in self.measures.items():
            if not K or not K <= model.full:
                raise ModelError(f"distortion subset {sorted(K)} is not a nonempty subset of 1..{model.L}")
            if m.shape[0] != nx:
                raise ModelError(
                    f"dimension mismatch: distortion matrix for {sorted(K)} has {m.shape[0]} rows, "
                    f"source alphabet has {nx}"
                )

    @classmethod
    def hamming(cls, subsets: Iterable[Iterable[int]], alphabet: int = 2) -> "DistortionSpec":
        m = 1.0 - np.eye(alphabet)
        return cls({frozenset(K): m for K in subsets})

    def to_json(self) -> dict:
        return {
            json.dumps(sorted(K)): {"alphabet": int(m.shape[1]), "matrix": m.tolist()}
            for K, m in self.measures.items()
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "DistortionSpec":
        measures = {}
        for key, entry in data.items():
            try:
                K = frozenset(int(i) for i in json.loads(key))
                m = np.asarray(entry["matrix"], dtype=float)
            except (ValueError, KeyError, TypeError) as exc:
                raise ModelError(f"bad distortion entry {key!r}: {exc}") from None
            if "alphabet" in entry and m.ndim == 2 and m.shape[1] != int(entry["alphabet"]):
                raise ModelError(
                    f"dimension mismatch: distortion {key} declares alphabet {entry['alphabet']} "
                    f"but its matrix has {m.shape[1]} columns"
                )
            measures[K] = m
        return cls(measures)


def load_model(path) -> tuple[AuxModel, DistortionSpec]:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: not valid JSON ({exc})") from None
    model = AuxModel.from_json(data)
    dspec = DistortionSpec.from_json(data.get("distortions", {}))
    dspec.check(model)
    return model, dspec


def model_document(model: AuxModel, dspec: DistortionSpec | None = None) -> dict:
    doc = model.to_json()
    if dspec is not None and dspec.measures:
        doc["distortions"] = dspec.to_json()
    return doc


def joint_from_tensor(names: list[str], tensor: np.ndarray) -> JointDistribution:
    tensor = np.asarray(tensor, dtype=float)
    return JointDistribution([VariableSpec(n, k) for n, k in zip(names, tensor.shape)], tensor)
