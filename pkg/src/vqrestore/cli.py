"""Command-line interface.

Every command can write a CSV run report whose first line is a comment
holding the complete, canonical invocation (all options explicit, paths
absolute). ``vqrestore rerun REPORT`` replays it.

Exit codes: 0 success, 1 usage error, 2 runtime error. Outputs are
computed in full before anything is written, and each file is written
atomically, so a failing command leaves no partial outputs behind.
"""

import argparse
import csv
import glob
import io
import math
import os
import shlex
import sys
import tempfile
import time

import numpy as np

from . import synthetic
from .blur_id import bank_files, build_bic, identify, read_bank
from .cls import ClsConfig, cls_restore, default_alpha
from .degrade import degrade, isnr_db, make_kernel
from .image_io import as_image, load_pgm, write_pgm
from .nnn import nnn_restore, salt_corrupt
from .restore_vq import FlatThreshold, TrainingConfig, restore, train_restoration_codebook
from .vq import load_codebook, save_codebook

PROG = "vqrestore"
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- helpers


def _atomic_write(path, data: bytes):
    path = os.path.abspath(path)
    d = os.path.dirname(path)
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_all(outputs):
    for path, data in outputs.items():
        _atomic_write(path, data)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _report_bytes(invocation, command, inputs, params, metrics, seed):
    buf = io.StringIO()
    buf.write(f"# {invocation}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["section", "name", "value"])
    w.writerow(["command", command, ""])
    for name, path in inputs:
        w.writerow(["input", name, os.path.abspath(path)])
    for name, value in params:
        w.writerow(["param", name, _fmt(value)])
    w.writerow(["seed", "seed", seed])
    for name, value in metrics:
        if not math.isfinite(value):
            raise ValueError(f"metric {name} is not finite ({value})")
        w.writerow(["metric", name, _fmt(value)])
    return buf.getvalue().encode()


def _canonical(parser, ns):
    """Rebuild an argv with every option explicit and paths made absolute."""
    argv = [ns.command]
    for action in parser._actions:
        if isinstance(action, argparse._HelpAction) or action.dest == "command":
            continue
        value = getattr(ns, action.dest, None)
        if value is None or value is False:
            continue
        is_path = action.dest in _PATH_DESTS
        if action.dest == "params":
            vals = [",".join(repr(v) for v in value)]
        elif isinstance(value, list):
            vals = [os.path.abspath(v) if is_path else _fmt(v) for v in value]
        else:
            vals = [os.path.abspath(value) if is_path else _fmt(value)]
        if not action.option_strings:
            argv.extend(vals)
        elif value is True:
            argv.append(action.option_strings[-1])
        else:
            argv.append(action.option_strings[-1])
            argv.extend(vals)
    return " ".join(shlex.quote(a) for a in [PROG] + argv)


_PATH_DESTS = {
    "input", "out", "report", "codebook", "clean", "degraded_ref", "bank", "mask",
    "degraded", "restored", "test", "out_dir", "work_dir", "prototypes",
}


def _power_of_two(text):
    v = int(text)
    if v < 1 or v & (v - 1):
        raise argparse.ArgumentTypeError(f"{v} is not a power of two")
    return v


def _odd(text):
    v = int(text)
    if v < 1 or v % 2 == 0:
        raise argparse.ArgumentTypeError(f"{v} is not a positive odd integer")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{v} must be >= 1")
    return v


def _param_list(text):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad parameter list {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty parameter list")
    return vals


def _expand_globs(patterns):
    paths = sorted({p for pat in patterns for p in glob.glob(pat)})
    if not paths:
        raise FileNotFoundError(f"no prototype images match {patterns}")
    return paths


def _report_outputs(ns, parser, command, inputs, params, metrics):
    if not ns.report:
        return {}
    data = _report_bytes(_canonical(parser, ns), command, inputs, params, metrics, ns.seed)
    return {ns.report: data}


def _mask_path(out_path):
    root, ext = os.path.splitext(out_path)
    return f"{root}.mask{ext or '.pgm'}"


# ---------------------------------------------------------------- commands


def cmd_degrade(ns, parser):
    t0 = time.perf_counter()
    img = load_pgm(ns.input)
    kernel = make_kernel(ns.blur, ns.param)
    pair = degrade(img, kernel, ns.bsnr, seed=ns.seed)
    out = {ns.out: write_pgm(pair.degraded)}
    metrics = [
        ("bsnr_db", pair.realized_bsnr_db),
        ("noise_variance", pair.noise_variance),
        ("wall_time_seconds", time.perf_counter() - t0),
    ]
    params = [("blur", ns.blur), ("param", ns.param), ("target_bsnr_db", ns.bsnr)]
    out.update(_report_outputs(ns, parser, "degrade", [("image", ns.input)], params, metrics))
    _write_all(out)
    print(f"realized BSNR {pair.realized_bsnr_db:.4f} dB, noise variance {pair.noise_variance:.6g}")


def cmd_train(ns, parser):
    t0 = time.perf_counter()
    paths = _expand_globs(ns.prototypes)
    protos = [load_pgm(p) for p in paths]
    cfg = TrainingConfig(
        kernel=make_kernel(ns.blur, ns.param),
        target_bsnr_db=ns.bsnr,
        block_size=ns.block,
        stride=ns.stride,
        T=ns.T,
        seed=ns.seed,
    )
    cb = train_restoration_codebook(protos, cfg)
    out = {ns.out: save_codebook(cb)}
    params = [("blur", ns.blur), ("param", ns.param), ("bsnr_db", ns.bsnr), ("T", ns.T),
              ("block", ns.block), ("stride", ns.stride)]
    metrics = [("wall_time_seconds", time.perf_counter() - t0)]
    inputs = [("prototype", p) for p in paths]
    out.update(_report_outputs(ns, parser, "train", inputs, params, metrics))
    _write_all(out)
    print(f"trained {cb.size} codewords of {cb.block_size}x{cb.block_size} from {len(paths)} prototypes")


def cmd_bank(ns, parser):
    t0 = time.perf_counter()
    paths = _expand_globs(ns.prototypes)
    protos = [load_pgm(p) for p in paths]
    cfg = TrainingConfig(
        kernel=make_kernel(ns.blur, ns.params[0]),
        target_bsnr_db=ns.bsnr,
        block_size=ns.block,
        stride=ns.stride,
        T=ns.T,
        seed=ns.seed,
    )
    bank = build_bic(protos, ns.blur, ns.params, cfg)
    out = bank_files(bank, ns.out)
    params = [("blur", ns.blur), ("params", ",".join(map(repr, ns.params))), ("bsnr_db", ns.bsnr),
              ("T", ns.T), ("block", ns.block), ("stride", ns.stride)]
    metrics = [("wall_time_seconds", time.perf_counter() - t0)]
    out.update(_report_outputs(ns, parser, "bank", [("prototype", p) for p in paths], params, metrics))
    _write_all(out)
    print(f"wrote bank of {len(bank.params)} codebooks to {ns.out}")


def _flat_threshold(ns, image):
    if ns.tau is not None:
        return FlatThreshold(ns.tau, ns.window)
    if ns.noise_var is not None:
        return FlatThreshold.from_noise_variance(ns.noise_var, ns.window)
    r, c, h, w = ns.flat_patch
    patch = image[r : r + h, c : c + w]
    if patch.size < 2:
        raise ValueError("flat patch must cover at least two pixels")
    return FlatThreshold.from_noise_variance(float(np.var(patch)), ns.window)


def _isnr_metrics(ns, restored, degraded_input):
    if not ns.clean:
        return []
    clean = load_pgm(ns.clean)
    degraded = load_pgm(ns.degraded_ref) if ns.degraded_ref else degraded_input
    # compare against the image exactly as it will be stored
    stored = as_image(np.clip(np.floor(restored + 0.5), 0, 255))
    return [("isnr_db", isnr_db(clean, degraded, stored))]


def cmd_restore(ns, parser):
    t0 = time.perf_counter()
    img = load_pgm(ns.input)
    with open(ns.codebook, "rb") as fh:
        cb = load_codebook(fh.read())
    if min(img.shape) < cb.block_size:
        raise ValueError(f"image {img.shape} smaller than codebook block size {cb.block_size}")
    thr = _flat_threshold(ns, img)
    restored = restore(img, cb, thr)
    metrics = _isnr_metrics(ns, restored, img)
    metrics.append(("wall_time_seconds", time.perf_counter() - t0))
    out = {ns.out: write_pgm(restored)}
    inputs = [("image", ns.input), ("codebook", ns.codebook)]
    params = [("tau", thr.tau), ("window", thr.window)]
    out.update(_report_outputs(ns, parser, "restore", inputs, params, metrics))
    _write_all(out)


def cmd_identify(ns, parser):
    img = load_pgm(ns.input)
    bank = read_bank(ns.bank, stride=ns.stride)
    param, curve = identify(bank, img)
    print(repr(param))
    if ns.report:
        buf = io.StringIO()
        buf.write(f"# {_canonical(parser, ns)}\n")
        buf.write(f"# identified_param={param!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["param", "mean_distortion"])
        for p, d in curve:
            w.writerow([repr(p), repr(d)])
        _write_all({ns.report: buf.getvalue().encode()})


def cmd_nnn(ns, parser):
    t0 = time.perf_counter()
    img = load_pgm(ns.input)
    out = {}
    if ns.mask:
        mask = load_pgm(ns.mask) != 0
        if mask.shape != img.shape:
            raise ValueError(f"mask shape {mask.shape} does not match image shape {img.shape}")
        corrupted = img
    else:
        corrupted, mask = salt_corrupt(img, ns.salt, seed=ns.seed)
        out[_mask_path(ns.out)] = write_pgm(np.where(mask, 255.0, 0.0))
    restored = nnn_restore(corrupted, mask, ns.n)
    out[ns.out] = write_pgm(restored)
    metrics = [("corrupt_fraction", float(mask.mean()))]
    if not ns.mask:
        metrics.append(("mse_corrupted", float(np.mean((corrupted - img) ** 2))))
        metrics.append(("mse_restored", float(np.mean((restored - img) ** 2))))
    metrics.append(("wall_time_seconds", time.perf_counter() - t0))
    inputs = [("image", ns.input)] + ([("mask", ns.mask)] if ns.mask else [])
    params = [("n", ns.n)] + ([("salt", ns.salt)] if not ns.mask else [])
    out.update(_report_outputs(ns, parser, "nnn", inputs, params, metrics))
    _write_all(out)


def cmd_cls(ns, parser):
    t0 = time.perf_counter()
    img = load_pgm(ns.input)
    alpha = ns.alpha if ns.alpha is not None else default_alpha(ns.bsnr)
    restored = cls_restore(img, ClsConfig(alpha, make_kernel(ns.blur, ns.param)))
    metrics = _isnr_metrics(ns, restored, img)
    metrics.append(("wall_time_seconds", time.perf_counter() - t0))
    out = {ns.out: write_pgm(restored)}
    params = [("blur", ns.blur), ("param", ns.param), ("alpha", alpha)]
    out.update(_report_outputs(ns, parser, "cls", [("image", ns.input)], params, metrics))
    _write_all(out)
    print(f"alpha {alpha!r}")


def cmd_evaluate(ns, parser):
    f, g, r = load_pgm(ns.clean), load_pgm(ns.degraded), load_pgm(ns.restored)
    if not (f.shape == g.shape == r.shape):
        raise ValueError(f"shape mismatch: {f.shape}, {g.shape}, {r.shape}")
    var_f = float(np.var(f))
    mse_g = float(np.mean((f - g) ** 2))
    mse_r = float(np.mean((f - r) ** 2))
    metrics = [("mse_degraded", mse_g), ("mse_restored", mse_r)]
    if var_f > 0 and mse_g > 0:
        metrics.append(("bsnr_equiv_db", 10 * math.log10(var_f / mse_g)))
    metrics.append(("isnr_db", isnr_db(f, g, r)))
    inputs = [("clean", ns.clean), ("degraded", ns.degraded), ("restored", ns.restored)]
    _write_all(_report_outputs(ns, parser, "evaluate", inputs, [], metrics))
    for name, value in metrics:
        print(f"{name} {value!r}")


def cmd_synth(ns, parser):
    out = {}
    protos = synthetic.prototype_set(ns.seed, ns.size)
    tests = synthetic.held_out_set(ns.seed, ns.size)
    for fam, p, t in zip(synthetic.FAMILIES, protos, tests):
        out[os.path.join(ns.out_dir, f"proto_{fam}.pgm")] = write_pgm(p)
        out[os.path.join(ns.out_dir, f"test_{fam}.pgm")] = write_pgm(t)
    out[os.path.join(ns.out_dir, "test_mosaic.pgm")] = write_pgm(synthetic.mosaic(tests))
    _write_all(out)
    print(f"wrote {len(out)} images to {ns.out_dir}")


REPRODUCE_POINTS = [(1.5, 20.0), (1.5, 10.0), (3.5, 20.0), (3.5, 10.0)]


def cmd_reproduce(ns, parser):
    paths = _expand_globs(ns.prototypes)
    protos = [load_pgm(p) for p in paths]
    test = load_pgm(ns.test)
    rows = []
    images = {}
    for sigma2, bsnr in REPRODUCE_POINTS:
        kernel = make_kernel("gaussian", sigma2)
        cfg = TrainingConfig(kernel=kernel, target_bsnr_db=bsnr, block_size=ns.block,
                             stride=ns.stride, T=ns.T, seed=ns.seed)
        pair = degrade(test, kernel, bsnr, seed=ns.seed + 1000)
        cb = train_restoration_codebook(protos, cfg)
        vq = restore(pair.degraded, cb, FlatThreshold.from_noise_variance(pair.noise_variance))
        alpha = default_alpha(bsnr)
        cl = cls_restore(pair.degraded, ClsConfig(alpha, kernel))
        rows.append([sigma2, bsnr, pair.realized_bsnr_db, pair.noise_variance, alpha,
                     isnr_db(test, pair.degraded, vq), isnr_db(test, pair.degraded, cl)])
        if ns.work_dir:
            tag = f"s{sigma2}_b{bsnr:g}"
            images[os.path.join(ns.work_dir, f"degraded_{tag}.pgm")] = write_pgm(pair.degraded)
            images[os.path.join(ns.work_dir, f"vq_{tag}.pgm")] = write_pgm(vq)
            images[os.path.join(ns.work_dir, f"cls_{tag}.pgm")] = write_pgm(cl)
    buf = io.StringIO()
    buf.write(f"# {_canonical(parser, ns)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sigma2", "bsnr_db", "realized_bsnr_db", "noise_variance", "alpha",
                "isnr_proposed_db", "isnr_cls_db"])
    for row in rows:
        w.writerow([repr(float(v)) for v in row])
    images[ns.out] = buf.getvalue().encode()
    _write_all(images)
    for row in rows:
        print("sigma2=%g bsnr=%g  ISNR proposed %.2f dB, CLS %.2f dB" % (row[0], row[1], row[5], row[6]))


def cmd_rerun(ns, parser):
    with open(ns.report) as fh:
        first = fh.readline()
    if not first.startswith(f"# {PROG} "):
        raise ValueError(f"{ns.report} does not start with a {PROG} invocation comment")
    argv = shlex.split(first[2:])[1:]
    if argv and argv[0] == "rerun":
        raise ValueError("refusing to rerun a rerun")
    return main(argv)


# ---------------------------------------------------------------- parser


def _add_report(p):
    p.add_argument("--report", help="CSV run report to write")


def build_parser():
    parser = _Parser(prog=PROG, description="Codebook-based image restoration toolkit.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)
    cmds = {}

    p = sub.add_parser("degrade", help="blur and add calibrated Gaussian noise")
    p.add_argument("input")
    p.add_argument("--blur", choices=["gaussian", "pillbox"], required=True)
    p.add_argument("--param", type=float, required=True, help="variance (gaussian) or radius (pillbox)")
    p.add_argument("--bsnr", type=float, required=True, help="target BSNR in dB")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_report(p)
    cmds["degrade"] = (p, cmd_degrade)

    p = sub.add_parser("train", help="train a restoration codebook from prototype images")
    p.add_argument("--prototypes", nargs="+", required=True, help="glob pattern(s)")
    p.add_argument("--blur", choices=["gaussian", "pillbox"], required=True)
    p.add_argument("--param", type=float, required=True)
    p.add_argument("--bsnr", type=float, default=20.0)
    p.add_argument("-T", type=_power_of_two, default=32)
    p.add_argument("--block", type=_odd, default=7)
    p.add_argument("--stride", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_report(p)
    cmds["train"] = (p, cmd_train)

    p = sub.add_parser("bank", help="train a blur identification codebook bank")
    p.add_argument("--prototypes", nargs="+", required=True)
    p.add_argument("--blur", choices=["gaussian", "pillbox"], required=True)
    p.add_argument("--params", type=_param_list, required=True, help="comma-separated, increasing")
    p.add_argument("--bsnr", type=float, default=20.0)
    p.add_argument("-T", type=_power_of_two, default=64)
    p.add_argument("--block", type=_odd, default=7)
    p.add_argument("--stride", type=_positive_int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="manifest path; codebooks go beside it")
    _add_report(p)
    cmds["bank"] = (p, cmd_bank)

    p = sub.add_parser("restore", help="restore a degraded image with a codebook")
    p.add_argument("input")
    p.add_argument("--codebook", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--tau", type=float, help="flat/nonflat local-variance threshold")
    g.add_argument("--noise-var", type=float, help="noise variance; tau = 4 x noise variance")
    g.add_argument("--flat-patch", type=int, nargs=4, metavar=("ROW", "COL", "H", "W"),
                   help="flat region whose variance estimates the noise")
    p.add_argument("--window", type=_odd, default=7)
    p.add_argument("--out", required=True)
    p.add_argument("--clean")
    p.add_argument("--degraded-ref")
    p.add_argument("--seed", type=int, default=0)
    _add_report(p)
    cmds["restore"] = (p, cmd_restore)

    p = sub.add_parser("identify", help="identify the blur parameter with a codebook bank")
    p.add_argument("input")
    p.add_argument("--bank", required=True, help="bank manifest")
    p.add_argument("--stride", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="distortion curve CSV")
    cmds["identify"] = (p, cmd_identify)

    p = sub.add_parser("nnn", help="repair corrupted pixels by N-nearest-neighbour lazy median")
    p.add_argument("input")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--mask", help="PGM mask, nonzero = corrupted")
    g.add_argument("--salt", type=float, help="corrupt this fraction of pixels to 255")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-n", type=_positive_int, default=3)
    p.add_argument("--out", required=True)
    _add_report(p)
    cmds["nnn"] = (p, cmd_nnn)

    p = sub.add_parser("cls", help="constrained least squares restoration")
    p.add_argument("input")
    p.add_argument("--blur", choices=["gaussian", "pillbox"], required=True)
    p.add_argument("--param", type=float, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--alpha", type=float)
    g.add_argument("--bsnr", type=float, help="alpha = 1 / BSNR(dB)")
    p.add_argument("--out", required=True)
    p.add_argument("--clean")
    p.add_argument("--degraded-ref")
    p.add_argument("--seed", type=int, default=0)
    _add_report(p)
    cmds["cls"] = (p, cmd_cls)

    p = sub.add_parser("evaluate", help="ISNR and MSE of a restoration")
    p.add_argument("--clean", required=True)
    p.add_argument("--degraded", required=True)
    p.add_argument("--restored", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_report(p)
    cmds["evaluate"] = (p, cmd_evaluate)

    p = sub.add_parser("synth", help="write synthetic prototype and held-out test images")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=256)
    cmds["synth"] = (p, cmd_synth)

    p = sub.add_parser("reproduce", help="proposed vs CLS at sigma2 {1.5, 3.5} x BSNR {20, 10}")
    p.add_argument("--prototypes", nargs="+", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("-T", type=_power_of_two, default=32)
    p.add_argument("--block", type=_odd, default=7)
    p.add_argument("--stride", type=_positive_int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--work-dir", help="also write degraded and restored images here")
    p.add_argument("--out", required=True, help="summary CSV")
    cmds["reproduce"] = (p, cmd_reproduce)

    p = sub.add_parser("rerun", help="replay the invocation recorded in a report")
    p.add_argument("report")
    cmds["rerun"] = (p, cmd_rerun)

    return parser, cmds


def main(argv=None):
    parser, cmds = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    sub, fn = cmds[ns.command]
    try:
        rc = fn(ns, sub)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"{PROG} {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
