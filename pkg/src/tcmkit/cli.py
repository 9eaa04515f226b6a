"""Command-line entry point: ``tcmkit <subcommand> [flags]``.

Exit statuses: 0 success, 1 check failure, 2 usage or input error,
3 numerical failure at run time.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .correlation import correlate, correlate_pairs, correlation_flops, default_radius
from .errors import ConfigurationError, DimensionError, EvaluationError, LookupFailure, TcmError, TrainingError
from .match import DisplacementTensor, MatchConfig, estimate_displacements
from .sampling import build_pairs
from .tensors import Tensor, gradcheck, registered_ops, resolve_dtype
from .tensors.io import FormatError, load_tsr1, save_tsr1

log = logging.getLogger("tcmkit")

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
TRAIN_FRACTION = 0.75


class UsageError(Exception):
    """Bad flags or unusable input files (exit 2)."""


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def resolve_threads(flag: Optional[int]) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("TCM_THREADS")
    if env is not None:
        try:
            return _positive_int(env)
        except argparse.ArgumentTypeError:
            raise UsageError(f"TCM_THREADS must be a positive integer, got {env!r}")
    return os.cpu_count() or 1


def _load(path: str, dtype) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    try:
        return load_tsr1(p).astype(dtype, copy=False)
    except FormatError as exc:
        raise UsageError(f"{path}: {exc}")


def _split(samples):
    cut = int(len(samples) * TRAIN_FRACTION)
    return samples[:cut], samples[cut:]


def _load_samples(directory: str, subset: str = "all"):
    from .synth import load_dataset

    if not (Path(directory) / "labels.csv").is_file():
        raise UsageError(f"no dataset at {directory} (labels.csv missing)")
    samples = load_dataset(directory)
    if subset == "all":
        return samples
    train, test = _split(samples)
    return train if subset == "train" else test


def _load_model(directory: str):
    from .synth import ToyNet

    if not (Path(directory) / "config.json").is_file():
        raise UsageError(f"no model at {directory} (config.json missing)")
    return ToyNet.load(directory)


def _cast_samples(samples, dtype):
    for s in samples:
        if s.video.dtype != dtype:
            s.video = Tensor(s.video.data, dtype=dtype)
    return samples


# ---------------------------------------------------------------- commands


def cmd_gradcheck(args) -> int:
    known = registered_ops()
    names = known if args.ops == "all" else [n for n in args.ops.split(",") if n]
    unknown = [n for n in names if n not in known]
    if unknown:
        raise UsageError(f"unknown op: {', '.join(unknown)}")
    eps = 1e-6 if args.dtype == "f64" else 1e-3
    reports = []
    for name in names:
        try:
            reports.append(gradcheck(name, seed=args.seed, tol=args.tol, dtype=args.dtype, eps=eps))
        except LookupFailure as exc:
            raise UsageError(str(exc))
    width = max(len(r.op) for r in reports)
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.op:<{width}}  {r.max_error:.3e}  {status}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["op", "input", "max_rel_err", "passed"])
            for r in reports:
                for op, inp, err, ok in r.rows():
                    w.writerow([op, inp, repr(float(err)), int(ok)])
    failed = [r for r in reports if not r.passed]
    for r in failed:
        print(f"failed: {r.op} max_rel_err={r.max_error:.3e}", file=sys.stderr)
    print(f"{len(reports) - len(failed)}/{len(reports)} ops passed at tol {args.tol:g}")
    return EXIT_CHECK if failed else EXIT_OK


def cmd_correlate(args) -> int:
    dt = resolve_dtype(args.dtype)
    a, b = _load(args.a, dt), _load(args.b, dt)
    if a.shape != b.shape:
        raise UsageError(f"shape mismatch: --a has shape {a.shape}, --b has shape {b.shape}")
    if a.ndim != 3:
        raise UsageError(f"expected [C, H, W] tensors, got shape {a.shape}")
    R = default_radius(a.shape[1]) if args.radius is None else args.radius
    vol = correlate(Tensor(a, dtype=dt), Tensor(b, dtype=dt), R)
    save_tsr1(args.out, vol.data)
    print(f"wrote {args.out} shape={vol.shape} radius={R}")
    return EXIT_OK


def _write_pgm(path: Path, img: np.ndarray) -> None:
    H, W = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{W} {H}\n255\n".encode("ascii"))
        fh.write(img.astype(np.uint8).tobytes())


def _to_bytes(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi <= lo:
        return np.zeros(values.shape, dtype=np.uint8)
    scaled = (np.asarray(values, dtype=np.float64) - lo) / (hi - lo) * 255.0
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def export_pgms(disp: DisplacementTensor, directory) -> List[Path]:
    """One P5 image per channel and frame: dx/dy map [-R, R], confidence [0, max] onto [0, 255]."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    maps, R = disp.maps.data, disp.radius
    written = []
    for c, name in enumerate(DisplacementTensor.CHANNELS):
        chan = maps[c]
        lo, hi = (0.0, float(chan.max())) if name.endswith("conf") else (-R, R)
        for t in range(chan.shape[0]):
            path = directory / f"{name}_t{t:02d}.pgm"
            _write_pgm(path, _to_bytes(chan[t], lo, hi))
            written.append(path)
    return written


def cmd_displace(args) -> int:
    dt = resolve_dtype(args.dtype)
    video = _load(args.video, dt)
    if video.ndim == 3:
        video = video[None]
    if video.ndim != 4 or video.shape[1] < 2:
        raise UsageError(f"expected a [C, T, H, W] or [T, H, W] video with T >= 2, got shape {video.shape}")
    R = default_radius(video.shape[2]) if args.radius is None else args.radius
    try:
        cfg = MatchConfig(sigma=args.sigma, tau=args.tau)
    except ConfigurationError as exc:
        raise UsageError(str(exc))
    fast, slow = correlate_pairs(Tensor(video, dtype=dt), build_pairs(video.shape[1]), R)
    disp = estimate_displacements(fast, slow, cfg)
    save_tsr1(args.out, disp.maps.data)
    print(f"wrote {args.out} shape={disp.maps.shape} radius={R}")
    if args.pgm_dir:
        n = len(export_pgms(disp, args.pgm_dir))
        print(f"wrote {n} PGM files to {args.pgm_dir}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import gen_dataset, save_dataset

    samples = gen_dataset(args.classes, count=args.count, T=args.frames, H=args.size, W=args.size, seed=args.seed,
                          dtype=resolve_dtype(args.dtype))
    save_dataset(args.out, samples)
    print(f"wrote {len(samples)} clips to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .synth import ToyNet, ToyNetConfig, train, write_curve

    if args.lr <= 0:
        raise UsageError(f"--lr must be > 0, got {args.lr}")
    dt = resolve_dtype(args.dtype)
    data = _cast_samples(_load_samples(args.data, "train"), dt)
    if not data:
        raise UsageError(f"no training clips in {args.data}")
    first = data[0].video
    temporal = "tcm" if args.tcm == "on" else ("conv" if args.conv_baseline else "none")
    config = ToyNetConfig(frames=first.shape[1], size=first.shape[2],
                          num_classes=max(s.label for s in data) + 1, temporal=temporal)
    init_seed, order_seed = np.random.SeedSequence(args.seed).generate_state(2)
    model = ToyNet.init(config, seed=int(init_seed), dtype=dt)
    try:
        model, curve = train(model, data, epochs=args.epochs, lr=args.lr, seed=int(order_seed),
                             callback=lambda e, l: log.info("epoch %d loss %.6f", e, l))
    except TrainingError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    model.save(args.out)
    write_curve(Path(args.out) / "curve.csv", curve)
    print(f"final loss {curve[-1]:.6f}" if curve else "no epochs run")
    print(f"wrote model to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .synth import evaluate

    model = _load_model(args.model)
    data = _cast_samples(_load_samples(args.data, args.subset), model.params["head.weight"].dtype)
    acc = evaluate(model, data, stride=args.stride)
    print(f"accuracy {acc:.6f} ({len(data)} clips, stride {args.stride})")
    return EXIT_OK


def cmd_robustness(args) -> int:
    from .synth import accuracy_drop, stride_sweep, write_sweep

    model = _load_model(args.model)
    data = _cast_samples(_load_samples(args.data, args.subset), model.params["head.weight"].dtype)
    strides = args.strides
    if not strides or any(s < 1 for s in strides):
        raise UsageError(f"--strides must be positive integers, got {strides}")
    sweep = stride_sweep(model, data, strides)
    for s, acc in sweep:
        print(f"stride {s}: accuracy {acc:.6f}")
    if 1 in strides:
        print(f"drop {accuracy_drop(sweep):.6f}")
    write_sweep(args.out, sweep)
    return EXIT_OK


def cmd_flops(args) -> int:
    R = default_radius(args.h) if args.radius is None else args.radius
    per_scale = correlation_flops(args.t, args.c, args.h, args.w, R)
    print(f"radius {R}")
    print(f"per-scale {per_scale}")
    print(f"two-scale {2 * per_scale}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--dtype", choices=("f32", "f64"), default="f32")
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="BLAS/OpenMP threads (default: $TCM_THREADS, else all cores)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="tcmkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every op")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--ops", default="all", help="comma-separated op names or 'all'")
    p.add_argument("--out", help="optional CSV report")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("correlate", parents=[common], help="correlation volume of two [C,H,W] tensors")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("displace", parents=[common], help="slow/fast displacement maps of a feature video")
    p.add_argument("--video", required=True)
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--sigma", type=float, default=5.0)
    p.add_argument("--tau", type=float, default=0.01)
    p.add_argument("--out", required=True)
    p.add_argument("--pgm-dir", default=None)
    p.set_defaults(func=cmd_displace)

    p = sub.add_parser("synth", parents=[common], help="generate the synthetic tempo dataset")
    p.add_argument("--classes", type=_float_list, default=[0.0, 1.0, 2.0], help="velocities, e.g. 0,1,2")
    p.add_argument("--count", type=_positive_int, default=400)
    p.add_argument("--frames", type=_positive_int, default=8)
    p.add_argument("--size", type=_positive_int, default=32)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train ToyNet on the first 75%% of a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--tcm", choices=("on", "off"), default="on")
    p.add_argument("--conv-baseline", action="store_true",
                   help="with --tcm off, add the temporal-convolution branch instead of nothing")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    for name, helptext in (("eval", "top-1 accuracy"), ("robustness", "accuracy under frame-stride resampling")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--model", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--subset", choices=("test", "train", "all"), default="test",
                       help="which part of the dataset to score (default: the held-out last 25%%)")
        if name == "eval":
            p.add_argument("--stride", type=_positive_int, default=1)
            p.set_defaults(func=cmd_eval)
        else:
            p.add_argument("--strides", type=_int_list, default=[1, 2, 3, 4])
            p.add_argument("--out", required=True)
            p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("flops", parents=[common], help="correlation FLOPs for a video")
    p.add_argument("--t", type=_positive_int, required=True)
    p.add_argument("--c", type=_positive_int, required=True)
    p.add_argument("--h", type=_positive_int, required=True)
    p.add_argument("--w", type=_positive_int, required=True)
    p.add_argument("--radius", type=int, default=None)
    p.set_defaults(func=cmd_flops)
    return parser


def _config_line(args, threads: int) -> str:
    skip = {"func", "verbose"}
    resolved = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    resolved["threads"] = threads
    return "config " + json.dumps(resolved, sort_keys=True, default=str)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        threads = resolve_threads(args.threads)
        print(_config_line(args, threads))
        with threadpool_limits(limits=threads):
            return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DimensionError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EvaluationError, TrainingError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except TcmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
