import math

import numpy as np
import pytest

from dpledger import (
    GroupPartition,
    GroupSpec,
    Mechanism,
    PrivacyTuple,
    RecordVectors,
    clip_to_norm,
    concat_norm,
    l2_norm,
    scale_group,
    unscale_group,
    validate_partition,
)


# ---------------------------------------------------------------- clipping


def test_clip_shrinks_to_bound():
    out = clip_to_norm([3.0, 4.0], 1.0)
    assert out == pytest.approx([0.6, 0.8], rel=1e-12)
    assert l2_norm(out) <= 1.0 + 1e-12


def test_clip_identity_below_bound():
    v = np.array([0.3, 0.4])
    out = clip_to_norm(v, 1.0)
    assert np.array_equal(out, v)


def test_clip_idempotent_bitwise():
    rng = np.random.default_rng(7)
    for _ in range(200):
        v = rng.normal(size=rng.integers(1, 20)) * rng.choice([1e-3, 1.0, 1e3])
        once = clip_to_norm(v, 1.0)
        twice = clip_to_norm(once, 1.0)
        assert np.array_equal(once, twice)


def test_clip_norm_bound_randomized():
    # 1e4 random draws across scales; the bound must hold with slack 1e-12.
    rng = np.random.default_rng(11)
    dims = rng.integers(1, 50, size=10_000)
    for d in dims:
        v = rng.normal(size=int(d)) * 10.0 ** rng.uniform(-6, 6)
        s = 10.0 ** rng.uniform(-3, 3)
        assert l2_norm(clip_to_norm(v, s)) <= s * (1.0 + 1e-12)


def test_clip_positive_homogeneity():
    rng = np.random.default_rng(13)
    for _ in range(200):
        v = rng.normal(size=8)
        s = float(rng.uniform(0.1, 5.0))
        c = float(rng.uniform(0.1, 10.0))
        left = clip_to_norm(c * v, c * s)
        right = c * clip_to_norm(v, s)
        assert np.allclose(left, right, rtol=1e-12, atol=0.0)


def test_clip_rejects_bad_inputs():
    with pytest.raises(ValueError):
        clip_to_norm([1.0, 2.0], 0.0)
    with pytest.raises(ValueError):
        clip_to_norm([1.0, 2.0], -1.0)
    with pytest.raises(ValueError):
        clip_to_norm([1.0, math.nan], 1.0)
    with pytest.raises(ValueError):
        clip_to_norm([1.0, math.inf], 1.0)
    with pytest.raises(ValueError):
        clip_to_norm([[1.0, 2.0]], 1.0)  # not 1-d


def test_clip_output_not_writeable():
    out = clip_to_norm([3.0, 4.0], 1.0)
    with pytest.raises(ValueError):
        out[0] = 0.0


# ------------------------------------------------------- norms and scaling


def test_concat_norm_matches_concatenation_exactly():
    rng = np.random.default_rng(17)
    for _ in range(50):
        vs = [rng.normal(size=rng.integers(1, 10)) for _ in range(rng.integers(1, 5))]
        assert concat_norm(vs) == l2_norm(np.concatenate(vs))


def test_concat_norm_empty_rejected():
    with pytest.raises(ValueError):
        concat_norm([])


def test_scale_then_clip_norm_at_most_sqrt_k():
    # Scaling each member by its own norm puts every piece on the unit
    # sphere, so the concatenation has norm exactly sqrt(k).
    rng = np.random.default_rng(19)
    for k in (1, 2, 5):
        vs = [rng.normal(size=4) + 0.1 for _ in range(k)]
        alphas = [l2_norm(v) for v in vs]
        scaled = scale_group(vs, alphas)
        assert concat_norm(scaled) == pytest.approx(math.sqrt(k), rel=1e-12)


def test_scale_unscale_roundtrip():
    rng = np.random.default_rng(23)
    vs = [rng.normal(size=3), rng.normal(size=5)]
    alphas = [2.0, 0.25]
    back = unscale_group(scale_group(vs, alphas), alphas)
    for v, b in zip(vs, back):
        assert np.allclose(v, b, rtol=1e-15)


def test_scale_group_validates():
    with pytest.raises(ValueError):
        scale_group([[1.0]], [0.0])
    with pytest.raises(ValueError):
        scale_group([[1.0], [2.0]], [1.0])  # arity mismatch


# ------------------------------------------------------------ record type


def test_record_vectors_basics():
    rec = RecordVectors([("w", [1.0, 2.0]), ("b", [3.0])])
    assert rec.names == ("w", "b")
    assert rec.dims() == {"w": 2, "b": 1}
    assert rec.total_dim == 3
    assert np.array_equal(rec.get("w"), [1.0, 2.0])
    with pytest.raises(KeyError):
        rec.get("missing")


def test_record_vectors_entries_frozen():
    rec = RecordVectors([("w", [1.0, 2.0])])
    with pytest.raises(ValueError):
        rec.get("w")[0] = 9.0


def test_record_vectors_copies_input():
    src = np.array([1.0, 2.0])
    rec = RecordVectors([("w", src)])
    src[0] = 99.0
    assert rec.get("w")[0] == 1.0


def test_record_vectors_rejects_duplicates_and_bad_values():
    with pytest.raises(ValueError):
        RecordVectors([("w", [1.0]), ("w", [2.0])])
    with pytest.raises(ValueError):
        RecordVectors([("w", [math.nan])])
    with pytest.raises(ValueError):
        RecordVectors([("bad name", [1.0])])
    with pytest.raises(ValueError):
        RecordVectors([("w", [[1.0]])])


# ---------------------------------------------------------- specs and parts


def test_group_spec_defaults_and_validation():
    g = GroupSpec(
        member_names=("w", "b"),
        mechanism=Mechanism.SEPARATE,
        clip_s=1.0,
        noise_sigma=0.5,
    )
    assert g.name == "w+b"
    assert g.k == 2

    with pytest.raises(ValueError):
        GroupSpec(member_names=(), mechanism=Mechanism.SEPARATE, clip_s=1.0, noise_sigma=1.0)
    with pytest.raises(ValueError):
        GroupSpec(member_names=("w",), mechanism=Mechanism.SEPARATE, clip_s=0.0, noise_sigma=1.0)
    with pytest.raises(ValueError):
        GroupSpec(member_names=("w",), mechanism=Mechanism.SEPARATE, clip_s=1.0, noise_sigma=-1.0)


def test_joint_spec_scale_rules():
    # joint needs scales, one per member, all positive
    with pytest.raises(ValueError):
        GroupSpec(member_names=("a", "b"), mechanism=Mechanism.JOINT, clip_s=1.0, noise_sigma=1.0)
    with pytest.raises(ValueError):
        GroupSpec(
            member_names=("a", "b"),
            mechanism=Mechanism.JOINT,
            clip_s=1.0,
            noise_sigma=1.0,
            joint_scales=(1.0,),
        )
    with pytest.raises(ValueError):
        GroupSpec(
            member_names=("a", "b"),
            mechanism=Mechanism.JOINT,
            clip_s=1.0,
            noise_sigma=1.0,
            joint_scales=(1.0, 0.0),
        )
    # after per-member scaling each piece has norm <= 1, so clip_s beyond
    # sqrt(k) can never bind
    with pytest.raises(ValueError):
        GroupSpec(
            member_names=("a", "b"),
            mechanism=Mechanism.JOINT,
            clip_s=2.0,
            noise_sigma=1.0,
            joint_scales=(1.0, 1.0),
        )
    ok = GroupSpec(
        member_names=("a", "b"),
        mechanism=Mechanism.JOINT,
        clip_s=math.sqrt(2.0),
        noise_sigma=1.0,
        joint_scales=(1.0, 100.0),
    )
    assert ok.k == 2


def test_partition_disjointness():
    g1 = GroupSpec(member_names=("w",), mechanism=Mechanism.SEPARATE, clip_s=1.0, noise_sigma=1.0)
    g2 = GroupSpec(member_names=("w",), mechanism=Mechanism.SEPARATE, clip_s=1.0, noise_sigma=1.0, name="other")
    with pytest.raises(ValueError):
        GroupPartition(groups=(g1, g2), total_dim=2)


def test_partition_duplicate_group_names():
    g1 = GroupSpec(member_names=("a",), mechanism=Mechanism.SEPARATE, clip_s=1.0, noise_sigma=1.0, name="g")
    g2 = GroupSpec(member_names=("b",), mechanism=Mechanism.SEPARATE, clip_s=1.0, noise_sigma=1.0, name="g")
    with pytest.raises(ValueError):
        GroupPartition(groups=(g1, g2), total_dim=2)


def test_privacy_tuple_validation():
    t = PrivacyTuple(clip_s=1.0, sigma_sum=0.0)  # sigma 0 is representable
    assert t.sigma_sum == 0.0
    with pytest.raises(ValueError):
        PrivacyTuple(clip_s=0.0, sigma_sum=1.0)
    with pytest.raises(ValueError):
        PrivacyTuple(clip_s=1.0, sigma_sum=-1.0)


def test_validate_partition_reports_each_violation():
    g_w = GroupSpec(member_names=("w",), mechanism=Mechanism.SEPARATE, clip_s=1.0, noise_sigma=1.0)
    part = GroupPartition(groups=(g_w,), total_dim=2)
    rec = RecordVectors([("w", [1.0, 2.0]), ("stray", [0.0])])
    report = validate_partition(part, rec)
    assert not report.ok
    assert any("unassigned" in v for v in report.violations)

    ok_rec = RecordVectors([("w", [1.0, 2.0])])
    assert validate_partition(part, ok_rec).ok

    short_rec = RecordVectors([("w", [1.0])])
    report = validate_partition(part, short_rec)
    assert any("total_dim" in v for v in report.violations)


def test_validate_partition_missing_member():
    g = GroupSpec(member_names=("w", "b"), mechanism=Mechanism.SEPARATE, clip_s=1.0, noise_sigma=1.0)
    part = GroupPartition(groups=(g,), total_dim=3)
    rec = RecordVectors([("w", [1.0, 2.0])])
    report = validate_partition(part, rec)
    assert any("not in record" in v for v in report.violations)
