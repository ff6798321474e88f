"""Records, vector groups, and the clipping/scaling primitives.

A record is the unit of privacy: an ordered, named collection of dense
float64 vectors. Groups partition those vectors and carry the mechanism
configuration (clip bound, noise level, optional per-vector scales for the
joint mechanism). Everything here is an immutable value; all operations are
pure functions.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

_NAME_OK = frozenset(
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.+-/"
)


def _check_name(name: str, what: str) -> None:
    if not name or not set(name) <= _NAME_OK:
        raise ValueError(
            f"{what} {name!r} must be nonempty and use only [A-Za-z0-9_.+-/]"
        )


def _as_vector(value, what: str = "vector") -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"{what} must be 1-dimensional with at least one entry")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains NaN or Inf")
    out = arr.copy()
    out.flags.writeable = False
    return out


class Mechanism(enum.Enum):
    """How a group of vectors is clipped and noised."""

    SEPARATE = "separate"
    JOINT = "joint"


@dataclass(frozen=True)
class RecordVectors:
    """One record's named vectors, in a fixed order.

    Names are unique and every vector is finite; both are enforced at
    construction so a bad gradient cannot silently corrupt a privatized sum.
    """

    entries: tuple[tuple[str, np.ndarray], ...]

    def __init__(self, entries):
        items = []
        seen = set()
        for name, vec in entries:
            _check_name(name, "vector name")
            if name in seen:
                raise ValueError(f"duplicate vector name {name!r}")
            seen.add(name)
            items.append((name, _as_vector(vec, f"vector {name!r}")))
        if not items:
            raise ValueError("a record must contain at least one vector")
        object.__setattr__(self, "entries", tuple(items))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.entries)

    @classmethod
    def _trusted(cls, entries) -> "RecordVectors":
        """Skip-validation constructor for hot paths.

        Callers must supply unique valid names and 1-d float64 arrays that
        are finite, non-writeable, and never mutated afterwards; bulk-check
        a whole batch once instead of per record.
        """
        rec = object.__new__(cls)
        object.__setattr__(rec, "entries", tuple(entries))
        return rec

    def get(self, name: str) -> np.ndarray:
        for entry_name, vec in self.entries:
            if entry_name == name:
                return vec
        raise KeyError(name)

    def dims(self) -> dict[str, int]:
        return {name: vec.size for name, vec in self.entries}

    @property
    def total_dim(self) -> int:
        return sum(vec.size for _, vec in self.entries)


@dataclass(frozen=True)
class GroupSpec:
    """Mechanism configuration for one group of vectors.

    clip_s bounds the L2 norm of the (scaled) concatenation of the group's
    members; noise_sigma is the per-average noise standard deviation. For
    the joint mechanism, joint_scales holds one positive scale per member
    and clip_s may not exceed sqrt(k).
    """

    member_names: tuple[str, ...]
    mechanism: Mechanism
    clip_s: float
    noise_sigma: float
    joint_scales: tuple[float, ...] | None = None
    name: str = ""

    def __post_init__(self):
        members = tuple(self.member_names)
        if not members:
            raise ValueError("group must have at least one member")
        if len(set(members)) != len(members):
            raise ValueError(f"duplicate member names in group: {members}")
        for m in members:
            _check_name(m, "member name")
        object.__setattr__(self, "member_names", members)
        if not (math.isfinite(self.clip_s) and self.clip_s > 0):
            raise ValueError(f"clip_s must be positive and finite, got {self.clip_s}")
        if not (math.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise ValueError(
                f"noise_sigma must be nonnegative and finite, got {self.noise_sigma}"
            )
        if self.mechanism is Mechanism.JOINT:
            if self.joint_scales is None:
                raise ValueError("joint mechanism requires joint_scales")
            scales = tuple(float(a) for a in self.joint_scales)
            if len(scales) != len(members):
                raise ValueError(
                    f"joint_scales has {len(scales)} entries for "
                    f"{len(members)} members"
                )
            if any(not (math.isfinite(a) and a > 0) for a in scales):
                raise ValueError("joint_scales must all be positive and finite")
            k = len(members)
            if self.clip_s > math.sqrt(k) * (1 + 1e-12):
                raise ValueError(
                    f"joint clip_s={self.clip_s} exceeds sqrt(k)={math.sqrt(k)}"
                )
            object.__setattr__(self, "joint_scales", scales)
        elif self.joint_scales is not None:
            raise ValueError("joint_scales only apply to the joint mechanism")
        if not self.name:
            object.__setattr__(self, "name", "+".join(members))
        else:
            _check_name(self.name, "group name")

    @property
    def k(self) -> int:
        return len(self.member_names)


@dataclass(frozen=True)
class GroupPartition:
    """A disjoint assignment of every vector name to exactly one group.

    total_dim is the declared sum of member dimensionalities; it is checked
    against actual records by validate_partition.
    """

    groups: tuple[GroupSpec, ...]
    total_dim: int

    def __post_init__(self):
        groups = tuple(self.groups)
        if not groups:
            raise ValueError("partition must contain at least one group")
        seen: set[str] = set()
        for g in groups:
            overlap = seen & set(g.member_names)
            if overlap:
                raise ValueError(f"vector(s) {sorted(overlap)} assigned to two groups")
            seen |= set(g.member_names)
        names = [g.name for g in groups]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate group names: {names}")
        if self.total_dim < 1:
            raise ValueError(f"total_dim must be positive, got {self.total_dim}")
        object.__setattr__(self, "groups", groups)

    def member_names(self) -> set[str]:
        out: set[str] = set()
        for g in self.groups:
            out |= set(g.member_names)
        return out


@dataclass(frozen=True)
class PrivacyTuple:
    """Sensitivity bound and sum-level noise std of one Gaussian sum query."""

    clip_s: float
    sigma_sum: float

    def __post_init__(self):
        if not (math.isfinite(self.clip_s) and self.clip_s > 0):
            raise ValueError(f"clip_s must be positive and finite, got {self.clip_s}")
        if not (math.isfinite(self.sigma_sum) and self.sigma_sum >= 0):
            raise ValueError(
                f"sigma_sum must be nonnegative and finite, got {self.sigma_sum}"
            )


def l2_norm(v) -> float:
    """Euclidean norm of a finite 1-d vector."""
    arr = _as_vector(v)
    return float(np.sqrt(np.dot(arr, arr)))


def _clip_norm_unchecked(arr: np.ndarray, s: float) -> np.ndarray:
    """clip_to_norm's core, for callers that already validated arr."""
    norm = float(np.sqrt(np.dot(arr, arr)))
    if norm <= s:
        return arr
    out = arr * (s / norm)
    for _ in range(4):
        norm = float(np.sqrt(np.dot(out, out)))
        if norm <= s:
            break
        factor = s / norm
        if factor >= 1.0:
            factor = 1.0 - 2.0**-52
        out = out * factor
    return out


def clip_to_norm(v, s: float) -> np.ndarray:
    """Project v onto the L2 ball of radius s.

    Returns v unchanged (bitwise) when its norm is at most s; otherwise
    rescales so the returned norm never exceeds s, re-shrinking if float
    rounding lands a hair above. The zero vector is its own projection.
    """
    if not (math.isfinite(s) and s > 0):
        raise ValueError(f"clip bound must be positive and finite, got {s}")
    out = _clip_norm_unchecked(_as_vector(v), s)
    out.flags.writeable = False
    return out


def scale_group(vs, alphas) -> list[np.ndarray]:
    """Divide vector j by alphas[j]; the pre-processing step of joint clipping."""
    vs = list(vs)
    alphas = [float(a) for a in alphas]
    if len(vs) != len(alphas):
        raise ValueError(f"{len(vs)} vectors but {len(alphas)} scales")
    if any(not (math.isfinite(a) and a > 0) for a in alphas):
        raise ValueError("scales must all be positive and finite")
    return [_as_vector(v) / a for v, a in zip(vs, alphas)]


def unscale_group(vs, alphas) -> list[np.ndarray]:
    """Multiply vector j by alphas[j]; inverse of scale_group."""
    vs = list(vs)
    alphas = [float(a) for a in alphas]
    if len(vs) != len(alphas):
        raise ValueError(f"{len(vs)} vectors but {len(alphas)} scales")
    if any(not (math.isfinite(a) and a > 0) for a in alphas):
        raise ValueError("scales must all be positive and finite")
    return [_as_vector(v) * a for v, a in zip(vs, alphas)]


def concat_norm(vs) -> float:
    """L2 norm of the concatenation of the given vectors."""
    vs = list(vs)
    if not vs:
        raise ValueError("concat_norm of an empty group is undefined")
    return l2_norm(np.concatenate([_as_vector(v) for v in vs]))


@dataclass(frozen=True)
class PartitionReport:
    """Outcome of checking a partition against a concrete record."""

    violations: tuple[str, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_partition(partition: GroupPartition, record: RecordVectors) -> PartitionReport:
    """Check that the partition covers the record exactly and consistently.

    Reports every violation rather than stopping at the first: unassigned or
    unknown vectors, a total_dim that disagrees with the record, and joint
    specs whose scale arity does not match their member count (re-checked
    here to guard against specs built by deserialization or other unchecked
    paths).
    """
    violations: list[str] = []
    record_names = set(record.names)
    assigned = partition.member_names()
    for missing in sorted(record_names - assigned):
        violations.append(f"unassigned vector: {missing!r}")
    for extra in sorted(assigned - record_names):
        violations.append(f"group member not in record: {extra!r}")
    dims = record.dims()
    covered = sum(dims[n] for n in assigned & record_names)
    if not (record_names - assigned) and covered != partition.total_dim:
        violations.append(
            f"total_dim={partition.total_dim} but assigned vectors span {covered}"
        )
    for g in partition.groups:
        if g.mechanism is Mechanism.JOINT:
            scales = g.joint_scales or ()
            if len(scales) != len(g.member_names):
                violations.append(
                    f"group {g.name!r}: {len(scales)} joint scales for "
                    f"{len(g.member_names)} members"
                )
    return PartitionReport(tuple(violations))
