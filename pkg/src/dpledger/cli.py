"""Command-line front end: account | calibrate | train.

Every subcommand that touches a guarantee requires an explicit --delta;
there is deliberately no default failure probability. Exit codes: 0 on
success, 1 when the accountant or calibrator refuses (insecure rounds,
unsupported policy, infeasible target, unreadable ledger), 2 for usage
errors (argparse's convention).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import secrets
import sys

from .accountant import Knob, OrderGrid, account_ledger, calibrate
from .errors import (
    AccountingRefusal,
    CalibrationError,
    LedgerParseError,
    LedgerUsageError,
)
from .harness import (
    TrainConfig,
    dp_sgd_train,
    make_sgd_partition,
    sigmas_for_target_z,
)
from .ledger import deserialize
from .sampling import SamplerConfig, SamplingPolicy

_TUNING_NOTE = (
    "note: if this target or configuration was chosen by measuring utility "
    "on the private data, that selection step is not covered by the "
    "reported guarantee"
)


def _parse_orders(text: str) -> OrderGrid:
    try:
        return OrderGrid(tuple(float(tok) for tok in text.split(",") if tok.strip()))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _print_guarantee(guarantee) -> None:
    print(f"epsilon = {guarantee.epsilon!r}")
    print(f"delta = {guarantee.delta!r}")
    order = guarantee.achieving_order
    print(f"achieving_order = {order if order is not None else 'none'}")
    for caveat in guarantee.caveats:
        print(f"caveat: {caveat}")


def _cmd_account(args) -> int:
    try:
        with open(args.ledger, "rb") as fh:
            ledger = deserialize(fh.read())
    except OSError as exc:
        print(f"error: cannot read ledger: {exc}", file=sys.stderr)
        return 1
    except LedgerParseError as exc:
        print(f"error: {args.ledger}: {exc}", file=sys.stderr)
        return 1
    try:
        guarantee = account_ledger(
            ledger,
            args.delta,
            grid=args.orders,
            allow_insecure=args.allow_insecure,
            wor_as_poisson=not args.no_wor_as_poisson,
        )
    except (AccountingRefusal, LedgerUsageError) as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 1
    _print_guarantee(guarantee)
    if math.isinf(guarantee.epsilon):
        return 1
    return 0


def _cmd_calibrate(args) -> int:
    knob = Knob.SAMPLING_RATE if args.knob == "q" else Knob.NOISE_MULTIPLIER
    if knob is Knob.SAMPLING_RATE and args.z is None:
        print("error: calibrating q requires --z", file=sys.stderr)
        return 1
    if knob is Knob.NOISE_MULTIPLIER and args.q is None:
        print("error: calibrating z requires --q", file=sys.stderr)
        return 1
    try:
        value = calibrate(
            args.target_epsilon,
            args.delta,
            rounds=args.rounds,
            knob=knob,
            q=args.q,
            z=args.z,
            bounds=(args.lo, args.hi),
            tolerance=args.tolerance,
            grid=args.orders,
        )
    except CalibrationError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        if exc.bracket is not None:
            lo_eps, hi_eps = exc.bracket
            print(
                f"epsilon at bounds: eps({args.lo}) = {lo_eps!r}, "
                f"eps({args.hi}) = {hi_eps!r}",
                file=sys.stderr,
            )
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{args.knob} = {value!r}")
    print(_TUNING_NOTE)
    return 0


def _cmd_train(args) -> int:
    seed = args.seed if args.seed is not None else secrets.token_bytes(16).hex()
    policy = {
        "poisson": SamplingPolicy.POISSON_IID,
        "fixed": SamplingPolicy.FIXED_SIZE_WOR,
        "disjoint": SamplingPolicy.DISJOINT_PARTITION,
    }[args.policy]
    try:
        if policy is SamplingPolicy.POISSON_IID:
            sampler = SamplerConfig(policy=policy, n=args.n, seed=seed, q=args.q)
            q_eff = args.q
        else:
            if args.batch_size is None:
                print(
                    f"error: --policy {args.policy} requires --batch-size",
                    file=sys.stderr,
                )
                return 1
            sampler = SamplerConfig(
                policy=policy, n=args.n, seed=seed, batch_size=args.batch_size
            )
            q_eff = args.batch_size / args.n

        clips = (args.clip_weights, args.clip_bias, 1.0)
        if args.insecure_no_noise:
            sigmas = (0.0, 0.0, 0.0)
        else:
            sigmas = sigmas_for_target_z(args.noise_multiplier, clips, q_eff, args.n)
        partition = make_sgd_partition(
            args.dim,
            clip_weights=args.clip_weights,
            clip_bias=args.clip_bias,
            sigma_weights=sigmas[0],
            sigma_bias=sigmas[1],
            sigma_metrics=sigmas[2],
        )
        os.makedirs(args.out_dir, exist_ok=True)
        ledger_path = os.path.join(args.out_dir, "ledger.txt")
        cfg = TrainConfig(
            n=args.n,
            dim=args.dim,
            rounds=args.rounds,
            sampler=sampler,
            microbatch_size=args.microbatch_size,
            partition=partition,
            learning_rate=args.learning_rate,
            seed=seed,
            delta=args.delta,
            separation=args.separation,
            holdout_n=args.holdout_n,
            insecure_test_mode=args.insecure_no_noise,
            ledger_path=ledger_path,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    report = dp_sgd_train(cfg)

    summary = {
        "holdout_accuracy_nonprivate": report.holdout_accuracy,
        "metric_estimates": list(report.metric_estimates),
        "ledger_path": report.ledger_path,
        "epsilon": None if report.guarantee is None else repr(report.guarantee.epsilon),
        "delta": None if report.guarantee is None else repr(report.guarantee.delta),
        "achieving_order": None
        if report.guarantee is None
        else report.guarantee.achieving_order,
        "caveats": [] if report.guarantee is None else list(report.guarantee.caveats),
        "refusal": report.refusal,
        "seed": seed,
    }
    report_path = os.path.join(args.out_dir, "report.json")
    with open(report_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")

    print(f"holdout accuracy (non-private measurement): {report.holdout_accuracy:.4f}")
    print(f"ledger: {report.ledger_path}")
    print(f"report: {report_path}")
    if report.guarantee is not None:
        _print_guarantee(report.guarantee)
    else:
        print(f"accounting refused: {report.refusal}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpledger",
        description="Private multi-group aggregation: account, calibrate, train.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_account = sub.add_parser("account", help="recompute a guarantee from a ledger file")
    p_account.add_argument("--ledger", required=True, help="path to a serialized ledger")
    p_account.add_argument(
        "--delta", type=float, required=True, help="failure probability (no default)"
    )
    p_account.add_argument(
        "--orders",
        type=_parse_orders,
        default=None,
        help="comma-separated Renyi orders (default: built-in grid)",
    )
    p_account.add_argument(
        "--allow-insecure",
        action="store_true",
        help="inspect ledgers containing zero-noise rounds (guarantee is vacuous)",
    )
    p_account.add_argument(
        "--no-wor-as-poisson",
        action="store_true",
        help="refuse fixed-size sampling instead of accounting it at q = b/n",
    )
    p_account.set_defaults(func=_cmd_account)

    p_cal = sub.add_parser("calibrate", help="bisect q or z to hit a target epsilon")
    p_cal.add_argument("--target-epsilon", type=float, required=True)
    p_cal.add_argument("--delta", type=float, required=True)
    p_cal.add_argument("--rounds", type=int, required=True)
    p_cal.add_argument("--knob", choices=("q", "z"), required=True)
    p_cal.add_argument("--q", type=float, default=None, help="fixed q when tuning z")
    p_cal.add_argument("--z", type=float, default=None, help="fixed z when tuning q")
    p_cal.add_argument("--lo", type=float, required=True, help="lower knob bound")
    p_cal.add_argument("--hi", type=float, required=True, help="upper knob bound")
    p_cal.add_argument("--tolerance", type=float, default=1e-3)
    p_cal.add_argument("--orders", type=_parse_orders, default=None)
    p_cal.set_defaults(func=_cmd_calibrate)

    p_train = sub.add_parser("train", help="run the synthetic DP-SGD demo")
    p_train.add_argument("--n", type=int, default=10_000)
    p_train.add_argument("--dim", type=int, default=2)
    p_train.add_argument("--rounds", type=int, default=200)
    p_train.add_argument(
        "--policy", choices=("poisson", "fixed", "disjoint"), default="poisson"
    )
    p_train.add_argument("--q", type=float, default=0.01)
    p_train.add_argument("--batch-size", type=int, default=None)
    p_train.add_argument("--noise-multiplier", type=float, default=1.1)
    p_train.add_argument("--clip-weights", type=float, default=1.0)
    p_train.add_argument("--clip-bias", type=float, default=0.5)
    p_train.add_argument("--microbatch-size", type=int, default=1)
    p_train.add_argument("--learning-rate", type=float, default=1.0)
    p_train.add_argument("--separation", type=float, default=4.0)
    p_train.add_argument("--holdout-n", type=int, default=1000)
    p_train.add_argument("--delta", type=float, required=True)
    p_train.add_argument(
        "--seed", default=None, help="32 hex chars; omitted = fresh secure entropy"
    )
    p_train.add_argument("--out-dir", default="dpledger-out")
    p_train.add_argument(
        "--insecure-no-noise",
        action="store_true",
        help="disable all noise for plumbing tests; the run provides no privacy",
    )
    p_train.set_defaults(func=_cmd_train)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
