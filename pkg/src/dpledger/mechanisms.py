"""Noisy group queries over sampled records and their round-level algebra.

Two mechanisms privatize a group of vectors: the separate mechanism clips
each group's concatenation to its own bound and adds one Gaussian; the
joint mechanism rescales members by per-vector factors, clips once across
the scaled concatenation, then undoes the scaling on the estimate. Both
emit the (clip_s, sigma_sum) tuple the privacy ledger exists to record,
with sigma_sum = q * n * noise_sigma computed here, once, so the ledger
sees the identical float.

round_compose reduces all tuples of one round to a single equivalent
sensitivity-S*, sigma-1 query: S* = sqrt(sum_g (clip_s_g / sigma_sum_g)^2),
so the round behaves like one Gaussian query at noise multiplier 1/S*.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InfiniteSensitivityError
from .prng import SecureStream
from .vectors import (
    GroupPartition,
    GroupSpec,
    Mechanism,
    PrivacyTuple,
    RecordVectors,
    _clip_norm_unchecked,
)


@dataclass(frozen=True)
class RoundContext:
    """Per-round facts the mechanisms need: sampling rate, population, id.

    insecure_test_mode permits sigma_sum = 0 (no noise, no privacy); any
    round run that way must be treated as tainted downstream.
    """

    q: float
    n: int
    round_id: int
    insecure_test_mode: bool = False

    def __post_init__(self):
        if not (0.0 < self.q <= 1.0):
            raise ValueError(f"q must be in (0, 1], got {self.q}")
        if self.n < 1:
            raise ValueError(f"n must be at least 1, got {self.n}")
        if self.round_id < 0:
            raise ValueError(f"round_id must be nonnegative, got {self.round_id}")

    @property
    def qn(self) -> float:
        """The fixed average denominator: expected sample size q * n."""
        return self.q * self.n


@dataclass(frozen=True)
class GroupEstimate:
    """Privatized average estimates for one group, plus the emitted tuple."""

    group_name: str
    member_names: tuple[str, ...]
    estimates: tuple[np.ndarray, ...]
    emitted: PrivacyTuple

    def get(self, name: str) -> np.ndarray:
        for member, est in zip(self.member_names, self.estimates):
            if member == name:
                return est
        raise KeyError(name)


@dataclass(frozen=True)
class EffectiveQuery:
    """One round collapsed to a single sensitivity-s_star, sigma-1 query."""

    s_star: float
    sigma: float
    z_effective: float

    def __post_init__(self):
        if not (math.isfinite(self.s_star) and self.s_star > 0):
            raise ValueError(f"s_star must be positive and finite, got {self.s_star}")


def gaussian_sum(
    vs,
    sigma_sum: float,
    rng: SecureStream,
    *,
    dim: int | None = None,
    insecure_test_mode: bool = False,
) -> np.ndarray:
    """Sum the vectors and add isotropic Gaussian noise of std sigma_sum.

    All vectors must share one shape; an empty list is legal (a Poisson
    sample can be empty) but then dim must say what shape to noise. Noise
    is always drawn, even at sigma_sum = 0, so replay alignment of the
    keyed stream does not depend on the noise level.
    """
    vs = [np.asarray(v, dtype=np.float64) for v in vs]
    if vs:
        d = vs[0].size
        for v in vs:
            if v.ndim != 1 or v.size != d:
                raise ValueError("all vectors in a sum must share one 1-d shape")
        if dim is not None and dim != d:
            raise ValueError(f"dim={dim} disagrees with vector size {d}")
    elif dim is None:
        raise ValueError("empty input needs an explicit dim for the noise shape")
    else:
        d = int(dim)
        if d < 1:
            raise ValueError(f"dim must be positive, got {dim}")
    if not (math.isfinite(sigma_sum) and sigma_sum >= 0.0):
        raise ValueError(f"sigma_sum must be nonnegative and finite, got {sigma_sum}")
    if sigma_sum == 0.0 and not insecure_test_mode:
        raise ConfigurationError(
            "sigma_sum = 0 adds no noise and gives no privacy; "
            "requires insecure_test_mode=True"
        )
    total = np.zeros(d, dtype=np.float64)
    for v in vs:
        total += v
    return total + sigma_sum * rng.standard_normal(d)


def _member_arrays(
    records, spec: GroupSpec, member_dims
) -> tuple[list[list[np.ndarray]], tuple[int, ...]]:
    """Pull this group's member vectors out of each record, checking shape
    agreement, and resolve the per-member dims (needed when records is empty)."""
    k = spec.k
    rows: list[list[np.ndarray]] = []
    dims: tuple[int, ...] | None = None
    for rec in records:
        if isinstance(rec, RecordVectors):
            vs = [rec.get(name) for name in spec.member_names]
        else:
            vs = [np.asarray(v, dtype=np.float64) for v in rec]
        if len(vs) != k:
            raise ValueError(f"record has {len(vs)} vectors, group expects {k}")
        row_dims = tuple(v.size for v in vs)
        if dims is None:
            dims = row_dims
        elif row_dims != dims:
            raise ValueError(f"inconsistent member shapes: {row_dims} vs {dims}")
        rows.append(vs)
    if dims is None:
        if member_dims is None:
            raise ValueError(
                "no records sampled; pass member_dims so the noise shape is known"
            )
        dims = tuple(int(d) for d in member_dims)
        if len(dims) != k or any(d < 1 for d in dims):
            raise ValueError(f"member_dims must be {k} positive ints, got {member_dims}")
    elif member_dims is not None and tuple(int(d) for d in member_dims) != dims:
        raise ValueError(f"member_dims={tuple(member_dims)} but records have {dims}")
    return rows, dims


def _split(concat: np.ndarray, dims: tuple[int, ...]) -> tuple[np.ndarray, ...]:
    out = []
    at = 0
    for d in dims:
        out.append(concat[at : at + d].copy())
        at += d
    return tuple(out)


def separate_group_query(
    records, spec: GroupSpec, ctx: RoundContext, rng: SecureStream, member_dims=None
) -> GroupEstimate:
    """Clip each record's group concatenation to clip_s, sum, noise, average.

    The estimate of member j is (sum_i clip(v_i) + N(0, sigma_sum^2 I))_j
    divided by q * n. Emits (clip_s, sigma_sum = q * n * noise_sigma).
    """
    if spec.mechanism is not Mechanism.SEPARATE:
        raise ValueError(f"group {spec.name!r} is not configured for separate clipping")
    rows, dims = _member_arrays(records, spec, member_dims)
    # Inputs were validated on the way in; concatenation yields fresh
    # arrays, so the cheap clip core is safe here.
    if spec.k == 1:
        clipped = [_clip_norm_unchecked(vs[0], spec.clip_s) for vs in rows]
    else:
        clipped = [_clip_norm_unchecked(np.concatenate(vs), spec.clip_s) for vs in rows]
    sigma_sum = ctx.qn * spec.noise_sigma
    total = gaussian_sum(
        clipped,
        sigma_sum,
        rng,
        dim=sum(dims),
        insecure_test_mode=ctx.insecure_test_mode,
    )
    estimate = total / ctx.qn
    return GroupEstimate(
        group_name=spec.name,
        member_names=spec.member_names,
        estimates=_split(estimate, dims),
        emitted=PrivacyTuple(clip_s=spec.clip_s, sigma_sum=sigma_sum),
    )


def joint_group_query(
    records, spec: GroupSpec, ctx: RoundContext, rng: SecureStream, member_dims=None
) -> GroupEstimate:
    """Scale members down by alpha_j, clip the joint concatenation once,
    sum, noise, average, then scale estimates back up by alpha_j.

    Member j's coordinates see noise of std alpha_j * noise_sigma after the
    unscaling, while the whole group costs a single (clip_s, sigma_sum)
    tuple instead of k of them.
    """
    if spec.mechanism is not Mechanism.JOINT:
        raise ValueError(f"group {spec.name!r} is not configured for joint clipping")
    assert spec.joint_scales is not None
    rows, dims = _member_arrays(records, spec, member_dims)
    clipped = []
    for vs in rows:
        scaled = np.concatenate([v / a for v, a in zip(vs, spec.joint_scales)])
        clipped.append(_clip_norm_unchecked(scaled, spec.clip_s))
    sigma_sum = ctx.qn * spec.noise_sigma
    total = gaussian_sum(
        clipped,
        sigma_sum,
        rng,
        dim=sum(dims),
        insecure_test_mode=ctx.insecure_test_mode,
    )
    averaged = _split(total / ctx.qn, dims)
    estimates = tuple(a * part for a, part in zip(spec.joint_scales, averaged))
    return GroupEstimate(
        group_name=spec.name,
        member_names=spec.member_names,
        estimates=estimates,
        emitted=PrivacyTuple(clip_s=spec.clip_s, sigma_sum=sigma_sum),
    )


def round_compose(tuples) -> EffectiveQuery:
    """Collapse one round's (clip_s, sigma_sum) tuples to a single
    equivalent query of sensitivity s_star at noise std 1.

    s_star = sqrt(sum_g (clip_s_g / sigma_sum_g)^2); the round's noise
    multiplier is z = 1 / s_star. A zero sigma_sum would make s_star
    infinite, which is rejected rather than represented.
    """
    tuples = list(tuples)
    if not tuples:
        raise ValueError("round_compose needs at least one query tuple")
    acc = 0.0
    for t in tuples:
        if not isinstance(t, PrivacyTuple):
            t = PrivacyTuple(*t)
        if t.sigma_sum == 0.0:
            raise InfiniteSensitivityError(
                "a zero-noise query has unbounded equivalent sensitivity"
            )
        acc += (t.clip_s / t.sigma_sum) ** 2
    s_star = math.sqrt(acc)
    return EffectiveQuery(s_star=s_star, sigma=1.0, z_effective=1.0 / s_star)


def microbatch_reduce(examples, size: int, remainder: str = "drop") -> list[RecordVectors]:
    """Average consecutive runs of `size` examples into one record each.

    Chunking is deterministic by position, never randomized; randomness
    belongs to the sampler that picks which records participate. remainder
    handles a final short run: "drop" discards it, "error" refuses, and
    "pad_with_mean" pads it to full size with its own mean, which leaves
    the chunk average unchanged, so the short run is simply averaged.
    """
    if size < 1:
        raise ValueError(f"microbatch size must be at least 1, got {size}")
    if remainder not in ("drop", "error", "pad_with_mean"):
        raise ValueError(f"unknown remainder policy {remainder!r}")
    examples = list(examples)
    names = None
    for ex in examples:
        if not isinstance(ex, RecordVectors):
            raise TypeError("microbatch_reduce expects RecordVectors examples")
        if names is None:
            names = ex.names
        elif ex.names != names:
            raise ValueError("all examples must share the same vector names")
    if size == 1:
        # Chunks of one average to themselves.
        return examples
    out: list[RecordVectors] = []
    for start in range(0, len(examples), size):
        chunk = examples[start : start + size]
        if len(chunk) < size:
            if remainder == "drop":
                break
            if remainder == "error":
                raise ValueError(
                    f"{len(examples)} examples leave a short chunk of {len(chunk)} "
                    f"at microbatch size {size}"
                )
        averaged = [
            (name, np.mean([ex.get(name) for ex in chunk], axis=0))
            for name in chunk[0].names
        ]
        out.append(RecordVectors(averaged))
    return out


def run_partitioned_round(
    records,
    partition: GroupPartition,
    ctx: RoundContext,
    seed: bytes,
    member_dims: dict[str, tuple[int, ...]] | None = None,
    ledger=None,
) -> dict[str, GroupEstimate]:
    """Run every group's query for one round and optionally record it.

    Each group draws from its own keyed noise stream ("noise/<group>",
    round_id), so group order cannot entangle the randomness. member_dims
    maps group name to per-member dims and is required if records may be
    empty. When a ledger is given, one sum-query event per group is
    appended; the caller records the sample event (it knows the sampler).
    """
    estimates: dict[str, GroupEstimate] = {}
    for spec in partition.groups:
        rng = SecureStream(seed, f"noise/{spec.name}", ctx.round_id)
        dims = None if member_dims is None else member_dims.get(spec.name)
        if spec.mechanism is Mechanism.SEPARATE:
            est = separate_group_query(records, spec, ctx, rng, member_dims=dims)
        else:
            est = joint_group_query(records, spec, ctx, rng, member_dims=dims)
        estimates[spec.name] = est
        if ledger is not None:
            ledger.record_sum_query(
                ctx.round_id,
                clip_s=est.emitted.clip_s,
                sigma_sum=est.emitted.sigma_sum,
                group_name=spec.name,
            )
    return estimates
