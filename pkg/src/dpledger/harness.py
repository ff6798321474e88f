"""Desk-scale private training demo: logistic regression under the full
sample / clip / noise / record / account pipeline.

The model is binary logistic regression with two parameter groups
(weights, bias) plus a third privatized group carrying a per-record
correctness indicator, so every round answers heterogeneous queries: two
gradient averages and one metric average. The indicator lives in [0, 1],
so its clip bound of 1 is a prior fact about the query, not a data-derived
choice. Averages always divide by q * n, never by the realized sample
size, and the true (non-noisy) metric never reaches any report.

Determinism contract: (seed, config) fixes the dataset, every sample,
every noise draw, the ledger bytes, and therefore the reported guarantee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .accountant import PrivacyGuarantee, account_ledger
from .errors import AccountingRefusal
from .ledger import Ledger, serialize
from .mechanisms import RoundContext, microbatch_reduce, run_partitioned_round
from .prng import SecureStream, coerce_seed
from .sampling import (
    SamplerConfig,
    SamplingPolicy,
    draw_sample,
    partition_epoch,
)
from .vectors import GroupPartition, GroupSpec, Mechanism, RecordVectors


@dataclass(frozen=True)
class SyntheticDataset:
    """Two Gaussian clusters with labels alternating 0, 1, 0, 1, ..."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("features must be n x dim, labels a length-n vector")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels disagree on n")

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])


def generate_synthetic(
    n: int, dim: int, separation: float, seed, *, stream_index: int = 0
) -> SyntheticDataset:
    """Deterministic two-cluster classification data.

    Labels alternate exactly (class balance is exact for even n). Features
    are standard Gaussians shifted +/- separation/2 along one fixed random
    unit direction. stream_index selects a disjoint random stream so a
    held-out split can be drawn independently of the training split.
    """
    if n < 2:
        raise ValueError(f"need at least 2 examples, got {n}")
    if dim < 1:
        raise ValueError(f"dim must be at least 1, got {dim}")
    if not (math.isfinite(separation) and separation >= 0):
        raise ValueError(f"separation must be nonnegative, got {separation}")
    seed = coerce_seed(seed)
    # The cluster axis comes from its own stream so every stream_index
    # (train, holdout) sees the same geometry, just disjoint noise.
    axis_stream = SecureStream(seed, "synthetic-axis", 0)
    direction = axis_stream.standard_normal(dim)
    norm = float(np.sqrt(np.dot(direction, direction)))
    if norm == 0.0:
        direction = np.zeros(dim)
        direction[0] = 1.0
    else:
        direction = direction / norm
    stream = SecureStream(seed, "synthetic-data", stream_index)
    labels = np.arange(n, dtype=np.int64) % 2
    noise = stream.standard_normal(n * dim).reshape(n, dim)
    signs = np.where(labels == 1, 1.0, -1.0)
    features = noise + np.outer(signs * (separation / 2.0), direction)
    return SyntheticDataset(features=features, labels=labels)


def forward_probabilities(features: np.ndarray, w: np.ndarray, b: float) -> np.ndarray:
    """P(label = 1 | x) under the logistic model, numerically stable."""
    u = features @ w + b
    return 0.5 * (1.0 + np.tanh(0.5 * u))


def example_loss(x: np.ndarray, y: int, w: np.ndarray, b: float) -> float:
    """Logistic loss of one example: softplus(u) - y*u with u = x.w + b."""
    u = float(np.dot(x, w) + b)
    return float(np.logaddexp(0.0, u) - y * u)


def per_example_gradients(
    features: np.ndarray, labels: np.ndarray, w: np.ndarray, b: float
) -> tuple[np.ndarray, np.ndarray]:
    """d loss / d(w, b) for every example: ((p - y) x, (p - y))."""
    residual = forward_probabilities(features, w, b) - labels
    return residual[:, None] * features, residual


def make_sgd_partition(
    dim: int,
    *,
    clip_weights: float,
    clip_bias: float,
    sigma_weights: float,
    sigma_bias: float,
    sigma_metrics: float,
) -> GroupPartition:
    """Weights, bias, and the correctness-indicator metric as three
    separate-mechanism groups. Sigmas are per-average noise stds."""
    groups = (
        GroupSpec(
            member_names=("weights",),
            mechanism=Mechanism.SEPARATE,
            clip_s=clip_weights,
            noise_sigma=sigma_weights,
        ),
        GroupSpec(
            member_names=("bias",),
            mechanism=Mechanism.SEPARATE,
            clip_s=clip_bias,
            noise_sigma=sigma_bias,
        ),
        GroupSpec(
            member_names=("metrics",),
            mechanism=Mechanism.SEPARATE,
            clip_s=1.0,
            noise_sigma=sigma_metrics,
        ),
    )
    return GroupPartition(groups=groups, total_dim=dim + 2)


def sigmas_for_target_z(
    target_z: float, clip_bounds, q: float, n: int
) -> tuple[float, ...]:
    """Per-average sigmas that make one round's effective multiplier
    exactly target_z, spreading the budget proportionally to each bound:
    sigma_g = z * sqrt(G) * S_g / (q * n)."""
    if not (math.isfinite(target_z) and target_z > 0):
        raise ValueError(f"target_z must be positive, got {target_z}")
    bounds = [float(s) for s in clip_bounds]
    if not bounds or any(s <= 0 for s in bounds):
        raise ValueError(f"clip bounds must be positive, got {clip_bounds}")
    root_g = math.sqrt(len(bounds))
    return tuple(target_z * root_g * s / (q * n) for s in bounds)


@dataclass(frozen=True)
class TrainConfig:
    """Everything dp_sgd_train needs; see field comments for semantics."""

    n: int
    dim: int
    rounds: int
    sampler: SamplerConfig
    microbatch_size: int
    partition: GroupPartition
    learning_rate: float
    seed: bytes
    delta: float
    separation: float = 4.0
    holdout_n: int = 1000
    microbatch_remainder: str = "drop"
    insecure_test_mode: bool = False
    ledger_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "seed", coerce_seed(self.seed))
        if self.n < 2:
            raise ValueError(f"n must be at least 2, got {self.n}")
        if self.n != self.sampler.n:
            raise ValueError(
                f"config n={self.n} disagrees with sampler n={self.sampler.n}"
            )
        if self.dim < 1:
            raise ValueError(f"dim must be at least 1, got {self.dim}")
        if self.rounds < 1:
            raise ValueError(f"rounds must be at least 1, got {self.rounds}")
        if self.microbatch_size < 1:
            raise ValueError(
                f"microbatch_size must be at least 1, got {self.microbatch_size}"
            )
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ValueError(
                f"learning_rate must be positive, got {self.learning_rate}"
            )
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if self.holdout_n < 2:
            raise ValueError(f"holdout_n must be at least 2, got {self.holdout_n}")
        names = self.partition.member_names()
        if names != {"weights", "bias", "metrics"}:
            raise ValueError(
                f"partition must cover exactly weights/bias/metrics, got {sorted(names)}"
            )
        if self.partition.total_dim != self.dim + 2:
            raise ValueError(
                f"partition total_dim={self.partition.total_dim}, expected dim+2="
                f"{self.dim + 2}"
            )
        zero_noise = [g.name for g in self.partition.groups if g.noise_sigma == 0.0]
        if zero_noise and not self.insecure_test_mode:
            raise ValueError(
                f"groups {zero_noise} have zero noise; set insecure_test_mode=True "
                f"to run without privacy"
            )


@dataclass(frozen=True)
class TrainReport:
    """Training outcome. holdout_accuracy is a non-private test-harness
    measurement on held-out synthetic data; metric_estimates are the
    privatized per-round indicators, the only metric stream that exists."""

    holdout_accuracy: float
    metric_estimates: tuple[float, ...]
    ledger: Ledger
    ledger_path: str | None
    guarantee: PrivacyGuarantee | None
    refusal: str | None


def _effective_q(sampler: SamplerConfig) -> float:
    if sampler.policy is SamplingPolicy.POISSON_IID:
        return sampler.q
    return sampler.batch_size / sampler.n


def dp_sgd_train(cfg: TrainConfig) -> TrainReport:
    """Run the full pipeline and account the emitted ledger.

    Per round: sample records, compute per-example gradients and the
    correctness indicator at the current parameters, reduce microbatches,
    answer each group's noisy average query, step the parameters by the
    noisy gradient estimate, and append the round's events to the ledger.
    If the accountant refuses the finished ledger (unsupported policy,
    zero-noise rounds) the report carries the refusal text instead of a
    number pretending to be a guarantee.
    """
    data = generate_synthetic(cfg.n, cfg.dim, cfg.separation, cfg.seed)
    holdout = generate_synthetic(
        cfg.holdout_n, cfg.dim, cfg.separation, cfg.seed, stream_index=1
    )
    q = _effective_q(cfg.sampler)
    member_dims = {"weights": (cfg.dim,), "bias": (1,), "metrics": (1,)}
    dims_by_group = {
        g.name: tuple(member_dims[m][0] for m in g.member_names)
        for g in cfg.partition.groups
    }

    w = np.zeros(cfg.dim)
    b = 0.0
    ledger = Ledger()
    metric_estimates: list[float] = []
    epoch_batches: list = []
    batches_per_epoch = 0
    if cfg.sampler.policy is SamplingPolicy.DISJOINT_PARTITION:
        batches_per_epoch = cfg.n // cfg.sampler.batch_size

    for t in range(cfg.rounds):
        round_id = ledger.record_sample(q, cfg.n, cfg.sampler.policy.value)
        if cfg.sampler.policy is SamplingPolicy.DISJOINT_PARTITION:
            if t % batches_per_epoch == 0:
                epoch_batches = partition_epoch(cfg.sampler, t // batches_per_epoch)
            sample = epoch_batches[t % batches_per_epoch]
        else:
            sample = draw_sample(cfg.sampler, t)
        idx = np.asarray(sample.indices, dtype=np.int64)

        examples: list[RecordVectors] = []
        if idx.size:
            xs = data.features[idx]
            ys = data.labels[idx].astype(np.float64)
            grad_w, grad_b = per_example_gradients(xs, ys, w, b)
            preds = forward_probabilities(xs, w, b) >= 0.5
            correct = (preds == (ys == 1.0)).astype(np.float64)
            # Validate the whole batch at once, freeze it, and hand out row
            # views through the trusted constructor: same invariants as the
            # checked path at a fraction of the per-example cost.
            if not (np.isfinite(grad_w).all() and np.isfinite(grad_b).all()):
                raise ValueError(f"non-finite gradients in round {round_id}")
            for block in (grad_w, grad_b, correct):
                block.flags.writeable = False
            examples = [
                RecordVectors._trusted(
                    (
                        ("weights", grad_w[i]),
                        ("bias", grad_b[i : i + 1]),
                        ("metrics", correct[i : i + 1]),
                    )
                )
                for i in range(idx.size)
            ]
        records = microbatch_reduce(
            examples, cfg.microbatch_size, remainder=cfg.microbatch_remainder
        )
        ctx = RoundContext(
            q=q, n=cfg.n, round_id=round_id, insecure_test_mode=cfg.insecure_test_mode
        )
        estimates = run_partitioned_round(
            records, cfg.partition, ctx, cfg.seed, member_dims=dims_by_group, ledger=ledger
        )
        ledger.close_round()

        step_w = np.zeros(cfg.dim)
        step_b = 0.0
        for est in estimates.values():
            for member, value in zip(est.member_names, est.estimates):
                if member == "weights":
                    step_w = value
                elif member == "bias":
                    step_b = float(value[0])
                elif member == "metrics":
                    metric_estimates.append(float(value[0]))
        w = w - cfg.learning_rate * step_w
        b = b - cfg.learning_rate * step_b

    holdout_scores = holdout.features @ w + b
    holdout_acc = float(np.mean((holdout_scores >= 0.0) == (holdout.labels == 1)))

    ledger_path = cfg.ledger_path
    if ledger_path is not None:
        with open(ledger_path, "wb") as fh:
            fh.write(serialize(ledger))

    guarantee = None
    refusal = None
    try:
        guarantee = account_ledger(ledger, cfg.delta)
    except AccountingRefusal as exc:
        refusal = str(exc)

    return TrainReport(
        holdout_accuracy=holdout_acc,
        metric_estimates=tuple(metric_estimates),
        ledger=ledger,
        ledger_path=ledger_path,
        guarantee=guarantee,
        refusal=refusal,
    )
