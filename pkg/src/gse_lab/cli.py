"""Command-line interface: ``gse-lab <subcommand> [flags]``.

Exit codes: 0 success, 1 analytic or statistical failure (reported, never
hidden), 2 input or validation error. Reports are JSON with sorted keys,
so equal inputs and seeds give byte-identical output.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from .core import (
    GseSignature,
    OrderSet,
    ValidationError,
    gse,
    gse_signature,
    load_distribution,
    load_signature,
)
from .gof import DEFAULT_ORDERS, gof_test, plugin_signature, read_counts, two_sample_test
from .inverse import (
    NoConvergenceError,
    RecoveryResult,
    UnderdeterminedError,
    recover,
    recover_binary,
    recover_multiplicity,
)
from .tp import TOL_REL, jacobian, principal_minors, sweep_pmatrix
from .witness import WitnessError, find_collision

DEFAULT_SEED = 42
SEED_ENV = "GSE_LAB_SEED"
EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError as exc:
        raise ValidationError(f"{SEED_ENV}: not an integer: {raw!r}") from exc


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _emit(args, obj):
    text = dumps(obj)
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _orders_arg(text) -> OrderSet:
    return OrderSet.parse(text)


def _counts_arg(text):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ValidationError(f"multiplicity: cannot parse {text!r}") from exc
    return tuple(vals)


def _values_arg(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ValidationError(f"values: cannot parse {text!r}") from exc


def _tol(args, default):
    tol = getattr(args, "tol", None)
    if tol is None:
        return default
    if not tol > 0 or not math.isfinite(tol):
        raise ValidationError("tol: must be positive")
    return tol


def _seed(args) -> int:
    seed = getattr(args, "seed", None)
    return default_seed() if seed is None else seed


def cmd_compute(args) -> int:
    p = load_distribution(args.probs)
    _emit(args, gse_signature(p, _orders_arg(args.orders)).to_json())
    return EXIT_OK


def cmd_signature(args) -> int:
    M = _orders_arg(args.orders) if args.orders else OrderSet(DEFAULT_ORDERS)
    _emit(args, plugin_signature(read_counts(args.counts), M).to_json())
    return EXIT_OK


def cmd_jacobian(args) -> int:
    J = jacobian(load_distribution(args.probs).sorted(), _orders_arg(args.orders))
    out = J.to_json()
    if J.shape[0] == J.shape[1]:
        out["principal_minors"] = principal_minors(J, args.orientation, _tol(args, TOL_REL)).to_json()
    _emit(args, out)
    return EXIT_OK


def cmd_verify(args) -> int:
    M = _orders_arg(args.orders) if args.orders else None
    if args.samples < 1:
        raise ValidationError("samples: must be positive")
    report = sweep_pmatrix(
        args.K,
        M,
        samples=args.samples,
        seed=_seed(args),
        tol_rel=_tol(args, TOL_REL),
        all_minors=args.all_minors,
        workers=args.workers,
    )
    _emit(args, report.to_json())
    return EXIT_OK if report.all_positive else EXIT_FAIL


def _target(args) -> GseSignature | None:
    if args.signature:
        sig = load_signature(args.signature)
        if args.orders and _orders_arg(args.orders) != sig.orders:
            raise ValidationError("orders: do not match the signature file")
        return sig
    if args.values is None:
        return None
    if not args.orders:
        raise ValidationError("orders: required with --values")
    return GseSignature(_orders_arg(args.orders), _values_arg(args.values))


def _target_orders(args) -> OrderSet:
    if args.signature:
        return load_signature(args.signature).orders
    if not args.orders:
        raise ValidationError("orders: give --orders or --signature")
    return _orders_arg(args.orders)


def cmd_recover(args) -> int:
    tol = _tol(args, 1e-9)
    M = _target_orders(args)
    if args.multiplicity:
        counts = _counts_arg(args.multiplicity)
        if len(M) < len(counts) - 1:
            raise UnderdeterminedError(
                f"{len(M)} orders cannot identify {len(counts)} distinct values; see the witness command"
            )
        target = _target(args)
        if target is None:
            raise ValidationError("values: give --values or --signature")
        try:
            res = recover_multiplicity(counts, M, target, tol, args.max_restarts, _seed(args), args.trace)
        except NoConvergenceError as exc:
            return _not_converged(args, exc)
        _emit(args, res.to_json())
        return EXIT_OK
    if args.K is None:
        raise ValidationError("K: give --K or --multiplicity")
    if args.K < 2:
        raise ValidationError("K: must be at least 2")
    if len(M) < args.K - 1:
        raise UnderdeterminedError(
            f"{len(M)} orders cannot identify a K={args.K} distribution (need {args.K - 1}); "
            "the signature is not injective here, use `gse-lab witness` to exhibit a collision"
        )
    target = _target(args)
    if target is None:
        raise ValidationError("values: give --values or --signature")
    if args.K == 2 and len(M) == 1:
        m, h = float(M.orders[0]), float(target.values[0])
        p = recover_binary(m, h)
        res = RecoveryResult(p, abs(gse(p, m) - h), 0, 0, abs(gse(p, m) - h) <= tol, p.has_ties)
        out = res.to_json()
        out["method"] = "binary-bisection"
        _emit(args, out)
        return EXIT_OK if res.converged else EXIT_FAIL
    try:
        res = recover(args.K, M, target, tol, args.max_restarts, _seed(args), args.trace)
    except NoConvergenceError as exc:
        return _not_converged(args, exc)
    out = res.to_json(trace=args.trace)
    out["method"] = "gauss-newton"
    _emit(args, out)
    return EXIT_OK


def _not_converged(args, exc) -> int:
    out = {"error": str(exc), "converged": False}
    if exc.result is not None:
        out.update(exc.result.to_json(trace=args.trace))
    _emit(args, out)
    print(f"gse-lab: {exc}", file=sys.stderr)
    return EXIT_FAIL


def cmd_witness(args) -> int:
    start = load_distribution(args.start).probs if args.start else None
    try:
        pair = find_collision(args.K, _orders_arg(args.orders), args.min_sep, _seed(args), start=start)
    except WitnessError as exc:
        print(f"gse-lab: {exc}", file=sys.stderr)
        _emit(args, {"error": str(exc)})
        return EXIT_FAIL
    _emit(args, pair.to_json())
    return EXIT_OK


def cmd_gof(args) -> int:
    M = _orders_arg(args.orders) if args.orders else None
    q = load_distribution(args.null)
    report = gof_test(read_counts(args.counts), q, M, args.B, _seed(args))
    _emit(args, report.to_json())
    return EXIT_OK


def cmd_twosample(args) -> int:
    M = _orders_arg(args.orders) if args.orders else None
    report = two_sample_test(read_counts(args.a), read_counts(args.b), M, args.B, _seed(args))
    _emit(args, report.to_json())
    return EXIT_OK


def _global_flags(parser, suppress):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=d, help=f"RNG seed (default {DEFAULT_SEED}, or ${SEED_ENV})")
    parser.add_argument("--tol", type=float, default=d, help="tolerance for the subcommand's main check")
    parser.add_argument("--trace", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="include iteration traces where available")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gse-lab", description="Generalized Shannon entropy toolkit.")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    common.add_argument("--out", help="write the JSON report here instead of stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", parents=[common], help="GSE signature of a distribution")
    p.add_argument("--probs", required=True, help='JSON file {"probs": [...]}')
    p.add_argument("--orders", required=True, help="comma list, e.g. 0.5,2")
    p.set_defaults(func=cmd_compute)

    p = sub.add_parser("signature", parents=[common], help="plug-in signature of counts")
    p.add_argument("--counts", required=True, help="CSV or JSON counts")
    p.add_argument("--orders", help="comma list (default 0.5,1,2)")
    p.set_defaults(func=cmd_signature)

    p = sub.add_parser("jacobian", parents=[common], help="chart Jacobian and its principal minors")
    p.add_argument("--probs", required=True)
    p.add_argument("--orders", required=True)
    p.add_argument("--orientation", choices=("ascending_u", "category"), default="ascending_u")
    p.set_defaults(func=cmd_jacobian)

    p = sub.add_parser("verify", parents=[common], help="principal-minor sweep over random sorted points")
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--orders", help="K-1 orders; omit to draw random orders per point")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--all-minors", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("recover", parents=[common], help="invert a signature")
    p.add_argument("--K", type=int)
    p.add_argument("--multiplicity", help="group sizes, e.g. 2,2")
    p.add_argument("--signature", help='JSON file {"orders": [...], "values": [...]}')
    p.add_argument("--orders")
    p.add_argument("--values", help="comma list matching --orders")
    p.add_argument("--max-restarts", type=int, default=20)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("witness", parents=[common], help="two distributions with equal signatures")
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--orders", required=True)
    p.add_argument("--min-sep", type=float, default=0.02)
    p.add_argument("--start", help="optional starting distribution (JSON)")
    p.set_defaults(func=cmd_witness)

    p = sub.add_parser("gof", parents=[common], help="goodness-of-fit test against a null distribution")
    p.add_argument("--counts", required=True)
    p.add_argument("--null", required=True, help='JSON file {"probs": [...]}')
    p.add_argument("--orders")
    p.add_argument("--B", type=int, default=999)
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("twosample", parents=[common], help="two-sample test across alphabets")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--orders")
    p.add_argument("--B", type=int, default=999)
    p.set_defaults(func=cmd_twosample)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, OSError) as exc:
        print(f"gse-lab: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
