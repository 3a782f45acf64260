"""Restricted permutation of a 0/1 treatment for family-clustered data.

Three layouts are supported, all with families of one or two members:

* ``INDEPENDENT``: every subject is its own family; any rearrangement of the
  treatment vector is valid.
* ``HOMOGENEOUS``: both members of a pair share one treatment.  Whole
  families swap treatments, and only with families of the same size, so the
  subject-level and family-level margins are both kept.
* ``HETEROGENEOUS``: every pair has one exposed and one control member.
  Singletons are permuted among themselves; each pair independently keeps or
  swaps its two labels with probability 1/2.

Treatment is coded 1 = exposed, 0 = control.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _rng
from .core_lm import Dataset, TreatmentBatch
from .errors import DegenerateScheme, InvalidStructure, SpaceOverflow, SpaceTooLarge
from .schemes import ENUMERATION_CAP, NullDistribution, Scheme, observed_t, sample_statistics

_INT64_MAX = (1 << 63) - 1


class Scenario(str, enum.Enum):
    INDEPENDENT = "independent"
    HOMOGENEOUS = "homogeneous"
    HETEROGENEOUS = "heterogeneous"


@dataclass(frozen=True)
class Family:
    id: str
    members: tuple[int, ...]
    pattern: tuple[int, ...]  # sorted treatments of the members

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True, eq=False)
class ClusterStructure:
    families: tuple[Family, ...]
    scenario: Scenario
    x2: np.ndarray

    def __post_init__(self):
        x2 = np.asarray(self.x2)
        if not np.all((x2 == 0) | (x2 == 1)):
            raise InvalidStructure("restricted permutation needs a 0/1 treatment")
        x2 = x2.astype(np.int8)
        x2.setflags(write=False)
        object.__setattr__(self, "x2", x2)
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        covered = sorted(i for f in self.families for i in f.members)
        if covered != list(range(x2.shape[0])):
            raise InvalidStructure("families must partition the observations")
        for f in self.families:
            if f.size not in (1, 2):
                raise InvalidStructure(f"family {f.id!r} has {f.size} members; only 1 or 2 supported")
            if f.pattern != tuple(sorted(int(x2[i]) for i in f.members)):
                raise InvalidStructure(f"family {f.id!r} pattern does not match the treatment")
            if self.scenario is Scenario.INDEPENDENT and f.size != 1:
                raise InvalidStructure("independent scenario requires singleton families")
            if self.scenario is Scenario.HOMOGENEOUS and f.size == 2 and f.pattern not in ((0, 0), (1, 1)):
                raise InvalidStructure(f"family {f.id!r} is mixed in a homogeneous structure")
            if self.scenario is Scenario.HETEROGENEOUS and f.size == 2 and f.pattern != (0, 1):
                raise InvalidStructure(f"family {f.id!r} is not mixed in a heterogeneous structure")

    @property
    def n(self) -> int:
        return int(self.x2.shape[0])

    @property
    def n_exposed(self) -> int:
        return int(self.x2.sum())

    def singletons(self) -> list[Family]:
        return [f for f in self.families if f.size == 1]

    def pairs(self) -> list[Family]:
        return [f for f in self.families if f.size == 2]

    @classmethod
    def from_labels(cls, family_id: Sequence, x2: Sequence, scenario: Scenario | str) -> "ClusterStructure":
        """Group rows by family label; families are ordered by label."""
        groups: dict[str, list[int]] = {}
        for i, f in enumerate(family_id):
            groups.setdefault(str(f), []).append(i)
        x2 = np.asarray(x2)
        fams = tuple(
            Family(fid, tuple(idx), tuple(sorted(int(x2[i]) for i in idx)))
            for fid, idx in sorted(groups.items())
        )
        return cls(fams, Scenario(scenario), x2)

    @classmethod
    def independent(cls, x2: Sequence) -> "ClusterStructure":
        x2 = np.asarray(x2)
        width = len(str(len(x2)))
        fams = tuple(Family(f"{i:0{width}d}", (i,), (int(x2[i]),)) for i in range(len(x2)))
        return cls(fams, Scenario.INDEPENDENT, x2)


@dataclass(frozen=True, eq=False)
class TreatmentAssignment:
    x2_star: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.x2_star).astype(np.int8)
        v.setflags(write=False)
        object.__setattr__(self, "x2_star", v)

    def key(self) -> tuple[int, ...]:
        return tuple(int(v) for v in self.x2_star)


def infer_scenario(family_id: Sequence | None, x2: Sequence) -> Scenario:
    """Heterogeneous if any multi-member family mixes treatments, else
    homogeneous if any family has several members, else independent."""
    if family_id is None:
        return Scenario.INDEPENDENT
    groups: dict[str, set] = {}
    sizes: dict[str, int] = {}
    for f, t in zip(family_id, x2):
        groups.setdefault(str(f), set()).add(t)
        sizes[str(f)] = sizes.get(str(f), 0) + 1
    if any(sizes[f] >= 2 and len(ts) > 1 for f, ts in groups.items()):
        return Scenario.HETEROGENEOUS
    if any(s >= 2 for s in sizes.values()):
        return Scenario.HOMOGENEOUS
    return Scenario.INDEPENDENT


def structure_for(data: Dataset, scenario: Scenario | str | None = None) -> ClusterStructure:
    """Cluster structure of ``data``; ``scenario=None`` infers it from the labels."""
    if scenario is None:
        scenario = infer_scenario(data.family_id, data.x2)
    scenario = Scenario(scenario)
    if data.family_id is None:
        if scenario is not Scenario.INDEPENDENT:
            raise InvalidStructure(f"{scenario.value} scenario needs family labels")
        return ClusterStructure.independent(data.x2)
    return ClusterStructure.from_labels(data.family_id, data.x2, scenario)


def _checked(count: int) -> int:
    if count > _INT64_MAX:
        raise SpaceOverflow(f"permutation space of {count} assignments exceeds int64; use sampling")
    return count


def permutation_space_size(structure: ClusterStructure) -> int:
    """Number of distinct valid treatment assignments."""
    s = structure
    if s.scenario is Scenario.INDEPENDENT:
        return _checked(math.comb(s.n, s.n_exposed))
    singles = s.singletons()
    single_exposed = sum(f.pattern[0] for f in singles)
    if s.scenario is Scenario.HOMOGENEOUS:
        pairs = s.pairs()
        pair_exposed = sum(f.pattern[0] for f in pairs)
        return _checked(math.comb(len(singles), single_exposed) * math.comb(len(pairs), pair_exposed))
    return _checked(math.comb(len(singles), single_exposed) * 2 ** len(s.pairs()))


def valid_assignment(structure: ClusterStructure, x2_star: Sequence) -> bool:
    """Whether ``x2_star`` lies in the structure's permutation space."""
    v = np.asarray(x2_star)
    s = structure
    if v.shape != s.x2.shape or not np.all((v == 0) | (v == 1)):
        return False
    if int(v.sum()) != s.n_exposed:
        return False
    if s.scenario is Scenario.INDEPENDENT:
        return True
    pairs = s.pairs()
    if s.scenario is Scenario.HOMOGENEOUS:
        if any(v[f.members[0]] != v[f.members[1]] for f in pairs):
            return False
        return sum(int(v[f.members[0]]) for f in pairs) == sum(f.pattern[0] for f in pairs)
    return all(v[f.members[0]] != v[f.members[1]] for f in pairs)


def _sampler(structure: ClusterStructure) -> Callable[[np.random.Generator], np.ndarray]:
    s = structure
    x2 = s.x2.astype(float)
    if s.scenario is Scenario.INDEPENDENT:
        # same draw as the unrestricted treatment permutation
        n = s.n
        return lambda rng: x2[rng.permutation(n)]

    single_idx = np.array([f.members[0] for f in s.singletons()], dtype=np.int64)
    single_vals = x2[single_idx]
    pair_idx = np.array([f.members for f in s.pairs()], dtype=np.int64).reshape(-1, 2)

    if s.scenario is Scenario.HOMOGENEOUS:
        pair_vals = x2[pair_idx[:, 0]]

        def draw(rng):
            out = np.empty_like(x2)
            out[single_idx] = single_vals[rng.permutation(single_idx.size)]
            labels = pair_vals[rng.permutation(pair_idx.shape[0])]
            out[pair_idx[:, 0]] = labels
            out[pair_idx[:, 1]] = labels
            return out

        return draw

    first, second = x2[pair_idx[:, 0]], x2[pair_idx[:, 1]]

    def draw(rng):
        out = np.empty_like(x2)
        out[single_idx] = single_vals[rng.permutation(single_idx.size)]
        swap = rng.random(pair_idx.shape[0]) < 0.5
        out[pair_idx[:, 0]] = np.where(swap, second, first)
        out[pair_idx[:, 1]] = np.where(swap, first, second)
        return out

    return draw


def sample_assignment(structure: ClusterStructure, rng: np.random.Generator) -> TreatmentAssignment:
    """One uniform draw from the structure's valid assignments."""
    return TreatmentAssignment(_sampler(structure)(rng))


def enumerate_assignments(structure: ClusterStructure, cap: int = ENUMERATION_CAP) -> list[TreatmentAssignment]:
    """Every valid assignment exactly once."""
    size = permutation_space_size(structure)
    if size > cap:
        raise SpaceTooLarge(f"{size} assignments exceed the cap of {cap}")
    return [TreatmentAssignment(row) for row in _assignment_matrix(structure)]


def _assignment_matrix(structure: ClusterStructure) -> np.ndarray:
    s = structure
    n = s.n
    if s.scenario is Scenario.INDEPENDENT:
        rows = []
        for ones in itertools.combinations(range(n), s.n_exposed):
            v = np.zeros(n, dtype=np.int8)
            v[list(ones)] = 1
            rows.append(v)
        return np.array(rows)

    singles = [f.members[0] for f in s.singletons()]
    pairs = [f.members for f in s.pairs()]
    k_single = sum(f.pattern[0] for f in s.singletons())
    single_choices = list(itertools.combinations(range(len(singles)), k_single))

    if s.scenario is Scenario.HOMOGENEOUS:
        k_pair = sum(f.pattern[0] for f in s.pairs())
        pair_choices = list(itertools.combinations(range(len(pairs)), k_pair))
    else:
        pair_choices = list(itertools.product((0, 1), repeat=len(pairs)))

    rows = []
    for sc, pc in itertools.product(single_choices, pair_choices):
        v = np.zeros(n, dtype=np.int8)
        for j in sc:
            v[singles[j]] = 1
        if s.scenario is Scenario.HOMOGENEOUS:
            for j in pc:
                v[list(pairs[j])] = 1
        else:
            for (a, b), swap in zip(pairs, pc):
                v[b if swap else a] = 1
        rows.append(v)
    return np.array(rows).reshape(len(rows), n)


def _check_match(data: Dataset, structure: ClusterStructure) -> None:
    if structure.n != data.n or not np.array_equal(structure.x2, data.x2):
        raise InvalidStructure("structure does not describe this dataset's treatment")


def assignment_t_stars(data: Dataset, assignments: np.ndarray) -> np.ndarray:
    """Treatment t-statistics for explicit 0/1 assignment rows."""
    tb = TreatmentBatch(data)
    b2, se, ok = tb.stats(np.asarray(assignments, dtype=float).reshape(-1, data.n))
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise DegenerateScheme(f"assignment {bad} gives a degenerate fit")
    return b2 / se


def cluster_null_distribution(
    data: Dataset,
    structure: ClusterStructure,
    b: int,
    seed: int,
    *,
    mode: str = "auto",
    cap: int = ENUMERATION_CAP,
    n_jobs: int = 1,
    key: np.ndarray | None = None,
) -> NullDistribution:
    """Null distribution of the treatment t-statistic under restricted permutation.

    ``mode`` behaves as in :func:`mlrperm.schemes.null_distribution`, with the
    space being the structure's valid assignments.  ``key`` overrides the
    stream derived from ``seed`` (the simulation harness keys streams by
    simulation index).
    """
    _check_match(data, structure)
    if b < 1:
        raise ValueError("B must be at least 1")
    t_obs = observed_t(data)
    try:
        space = permutation_space_size(structure)
    except SpaceOverflow:
        space = None
    exact = mode == "enumerate" or (mode == "auto" and space is not None and space <= cap and space <= b)
    if exact:
        rows = _assignment_matrix(structure) if space is not None and space <= cap else None
        if rows is None:
            raise SpaceTooLarge(f"assignment space exceeds the cap of {cap}")
        t = assignment_t_stars(data, rows)
        return NullDistribution(
            t_stars=t, scheme=Scheme.PERMUTE_X2, b=len(t), seed=seed, t_obs=t_obs,
            exact=True, restriction=structure.scenario.value,
        )

    tb = TreatmentBatch(data)

    def stat(rows):
        b2, se, ok = tb.stats(rows)
        out = np.zeros_like(b2)
        np.divide(b2, se, out=out, where=ok)
        return out, ok

    t, retried = sample_statistics(
        b, _rng.stream_key(seed) if key is None else key, _sampler(structure), stat, n_jobs=n_jobs
    )
    return NullDistribution(
        t_stars=t, scheme=Scheme.PERMUTE_X2, b=b, seed=seed, t_obs=t_obs,
        n_retried=retried, restriction=structure.scenario.value,
    )


def toy_structures() -> dict[Scenario, ClusterStructure]:
    """The three small teaching layouts: 11 singletons; 5 singletons plus 3
    homogeneous pairs; 5 singletons plus 3 mixed pairs."""
    indep = ClusterStructure.independent([1] * 6 + [0] * 5)
    # singletons s1..s5 (3 control), pairs p1..p3
    homo_ids = ["s1", "s2", "s3", "s4", "s5", "p1", "p1", "p2", "p2", "p3", "p3"]
    homo_x2 = [0, 0, 0, 1, 1, 0, 0, 1, 1, 1, 1]
    hetero_x2 = [0, 0, 0, 1, 1, 0, 1, 1, 0, 0, 1]
    return {
        Scenario.INDEPENDENT: indep,
        Scenario.HOMOGENEOUS: ClusterStructure.from_labels(homo_ids, homo_x2, Scenario.HOMOGENEOUS),
        Scenario.HETEROGENEOUS: ClusterStructure.from_labels(homo_ids, hetero_x2, Scenario.HETEROGENEOUS),
    }
