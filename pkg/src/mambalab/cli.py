"""Command-line entry point.

Exit codes: 0 success, 1 I/O failure, 2 numeric or acceptance failure, 64 usage.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import erf as E
from . import experiments as X
from .errors import DegenerateMapError, MambaLabError, PgmFormatError, ShapeError, TensorFormatError
from .losses import LossWeights, PredictionPair, bce, dice_loss, mi_dice, mi_iou, total_loss
from .scan import SelectiveParams, build_kernel, kernel_drift, predicted_mul_count
from .ssm import DiscreteSSM
from .tensor import Rng, pgm_read, tensor_read

EXIT_OK, EXIT_IO, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    vals = [v for v in text.split(",") if v.strip()]
    if not vals:
        raise UsageError("empty list")
    try:
        return [float(v) for v in vals]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _int_list(text: str) -> list[int]:
    vals = _float_list(text)
    if any(v != int(v) or v < 1 for v in vals):
        raise UsageError(f"expected positive integers: {text}")
    return [int(v) for v in vals]


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([E.fmt9(v) if isinstance(v, float) else v for v in row])


# ------------------------------------------------------------- commands


def cmd_disc_compare(args) -> int:
    dts = _float_list(args.dt_list)
    if any(dt <= 0 for dt in dts):
        raise UsageError("dt values must be positive")
    if any(a <= b for a, b in zip(dts, dts[1:])):
        raise UsageError("dt values must be strictly descending")
    try:
        rep = X.convergence_study(dts, args.horizon)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = [
        [dt] + [rep.errors[m.value][i] for m in X.METHODS]
        for i, dt in enumerate(dts)
    ]
    if args.out:
        _write_csv(args.out, ["dt", "err_euler", "err_bilinear", "err_zoh", "err_zoh_approx"], rows)
    for row in rows:
        print(",".join(E.fmt9(v) for v in row))
    print("euler_ratio=" + ",".join(E.fmt9(r) for r in rep.euler_ratios))
    print("bilinear_ratio=" + ",".join(E.fmt9(r) for r in rep.bilinear_ratios))
    print("bbar_gap_ratio=" + ",".join(E.fmt9(r) for r in rep.gap_ratios))
    print(f"bands_ok={str(rep.ok).lower()}")
    return EXIT_OK if rep.ok else EXIT_NUMERIC


def cmd_scan_equiv(args) -> int:
    if not 1 <= args.n <= 64 or not 1 <= args.l <= 4096:
        raise UsageError("need 1 <= n <= 64 and 1 <= l <= 4096")
    print(f"seed={args.seed}")
    rng = Rng(args.seed)
    rows, worst = [], 0.0
    for t in range(args.trials):
        sys_, x = X.random_lti(rng, args.n, args.l)
        err = X.equivalence_error(sys_, x)
        worst = max(worst, err)
        rows.append([t, sys_.N, len(x), err])
    if args.out:
        _write_csv(args.out, ["trial", "n", "l", "max_abs_diff"], rows)
    ok = worst < args.tol
    print(f"trials={args.trials} max_abs_diff={E.fmt9(worst)} tol={E.fmt9(args.tol)} pass={str(ok).lower()}")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_drift(args) -> int:
    if args.l < 2:
        raise UsageError("drift needs l >= 2")
    print(f"seed={args.seed}")
    rng = Rng(args.seed)
    if args.constant:
        A = -rng.uniform(0.5, 2.0, (args.d, args.n))
        p = SelectiveParams.constant(A, rng.normal(0, 1, args.n), rng.normal(0, 1, args.n),
                                     rng.uniform(0.1, 1.0, args.d))
    else:
        p = SelectiveParams.random(rng, args.d, args.n)
    x = rng.normal(0.0, 1.0, (args.l, args.d))
    rep = kernel_drift(p, x)
    rows = []
    for k in range(args.l):
        for d in range(args.d):
            second = rep.second[k - 1, d] if k else float("nan")
            rows.append([k, d, float(rep.leading[k, d]), float(second)])
            print(f"k={k} d={d} tap0={E.fmt9(rep.leading[k, d])}"
                  + (f" tap1={E.fmt9(second)}" if k else ""))
    if args.out:
        _write_csv(args.out, ["k", "d", "tap0", "tap1"], rows)
    print(f"unified={str(rep.unified).lower()}")
    return EXIT_OK


def _load_images(args, rng: Rng):
    if args.images:
        folder = Path(args.images)
        files = sorted(folder.glob("*.pgm"))
        if not files:
            raise OSError(f"no .pgm files in {folder}")
        imgs = [pgm_read(f).array() for f in files]
        if len({im.shape for im in imgs}) != 1:
            raise ShapeError("input images differ in size")
        return np.stack(imgs)
    imgs, _ = E.synth_cracks(rng, args.synth, args.size, args.width, args.noise)
    return np.stack(imgs)


def cmd_erf(args) -> int:
    if args.images is None and args.synth is None:
        raise UsageError("give --images DIR or --synth COUNT")
    if args.synth is not None and (args.synth < 1 or args.size < 16):
        raise UsageError("--synth needs count >= 1 and --size >= 16")
    for target in (args.out, args.csv):
        if target and not Path(target).resolve().parent.is_dir():
            raise OSError(f"output directory missing for {target}")
    print(f"seed={args.seed}")
    rng = Rng(args.seed)
    graph = E.make_graph(args.block, rng, dim=args.dim, state=args.state)
    images = _load_images(args, rng)
    cm = E.contribution(graph, images)
    A = E.erf_image(cm)
    E.write_erf_pgm(A, args.out)
    if args.csv:
        E.write_erf_csv(A, args.csv)
    H, W = A.shape
    if H % 2 and W % 2:
        prof = E.cross_profile(A)
        print(f"crossMean={E.fmt9(prof.crossMean)} offCrossMean={E.fmt9(prof.offCrossMean)} "
              f"centerIsMax={str(prof.centerIsMax).lower()}")
    else:
        print("cross profile skipped: even dims")
    return EXIT_OK


def cmd_bench(args) -> int:
    ns, ls = _int_list(args.n_list), _int_list(args.l_list)
    print(f"seed={args.seed}")
    rng = Rng(args.seed)
    rows, ok = [], True
    for n in ns:
        for L in ls:
            A = rng.normal(0.0, 1.0, (n, n)) / (2.0 * np.sqrt(n))
            sys_ = DiscreteSSM(A, rng.normal(0, 1, n), rng.normal(0, 1, n))
            count = build_kernel(sys_, L).mulCount
            pred = predicted_mul_count(n, L)
            ok &= count == pred
            rows.append([n, L, count, pred, str(count == pred).lower()])
            print(f"n={n} l={L} mulCount={count} predicted={pred} match={str(count == pred).lower()}")
    if args.out:
        _write_csv(args.out, ["n", "l", "mulCount", "predicted", "match"], rows)
    return EXIT_OK if ok else EXIT_NUMERIC


def _image_list(path) -> list[np.ndarray]:
    a = tensor_read(path).array()
    if a.ndim == 2:
        return [a[None]]
    if a.ndim == 3:
        return [a]
    if a.ndim == 4:
        return list(a)
    raise ShapeError(f"{path}: expected rank 2-4, got {a.ndim}")


def cmd_metrics(args) -> int:
    preds, gts = _image_list(args.pred), _image_list(args.gt)
    print(f"mi_iou={mi_iou(preds, gts, args.threshold):.6f}")
    print(f"mi_dice={mi_dice(preds, gts):.6f}")
    return EXIT_OK


def cmd_loss(args) -> int:
    alphas = _float_list(args.alpha)
    if len(alphas) != 3:
        raise UsageError("--alpha takes three comma-separated values")
    w = LossWeights(*alphas)
    preds, gts = _image_list(args.pred), _image_list(args.gt)
    sp, sg = _image_list(args.side_pred), _image_list(args.side_gt)
    if not len(preds) == len(gts) == len(sp) == len(sg):
        raise ShapeError("batch sizes differ")
    batch = [PredictionPair(*t) for t in zip(preds, gts, sp, sg)]
    n = len(batch)
    print(f"bce={sum(bce(p.P, p.G) for p in batch) / n:.6f}")
    print(f"dice={sum(dice_loss(p.P, p.G, w.epsDice) for p in batch) / n:.6f}")
    print(f"side_bce={sum(bce(p.Ps, p.Gs) for p in batch) / n:.6f}")
    print(f"total={total_loss(batch, w):.6f}")
    return EXIT_OK


# --------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mambalab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("disc-compare", help="discretization convergence orders")
    p.add_argument("--dt-list", default="0.1,0.05,0.025")
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_disc_compare)

    p = sub.add_parser("scan-equiv", help="recurrent vs convolutional LTI scan")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--l", type=int, default=64)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out")
    p.set_defaults(func=cmd_scan_equiv)

    p = sub.add_parser("drift", help="per-index kernel taps of a selective scan")
    p.add_argument("--l", type=int, default=6)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--constant", action="store_true", help="input-independent parameters")
    p.add_argument("--out")
    p.set_defaults(func=cmd_drift)

    p = sub.add_parser("erf", help="effective receptive field heatmap")
    p.add_argument("--block", choices=E.BLOCK_NAMES, required=True)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--images")
    src.add_argument("--synth", type=int)
    p.add_argument("--size", type=int, default=33)
    p.add_argument("--width", type=int, default=2)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--dim", type=int, default=4)
    p.add_argument("--state", type=int, default=4)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_erf)

    p = sub.add_parser("bench", help="Krylov multiplication counts")
    p.add_argument("--op", choices=["krylov"], default="krylov")
    p.add_argument("--n-list", default="1,2,4,8,16")
    p.add_argument("--l-list", default="1,3,16,64")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("metrics", help="mi IoU and mi Dice")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("loss", help="mixed BCE + Dice + side BCE loss")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--side-pred", required=True)
    p.add_argument("--side-gt", required=True)
    p.add_argument("--alpha", default="1,1,0.1")
    p.set_defaults(func=cmd_loss)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, TensorFormatError, PgmFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DegenerateMapError, ArithmeticError, MambaLabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
