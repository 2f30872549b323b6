"""Command-line front end: ``sparsepaint {corpus,train,mask,inpaint,evaluate,benchmark,replay}``.

Every subcommand writes ``manifest.json`` into its ``--out`` directory.  The
manifest echoes the command line and configuration and lists the output files
with their SHA-256 digests.  ``sparsepaint replay`` re-runs a manifest and
checks that the primary outputs (images, masks, checkpoints) come out
byte-identical.

Exit codes: 0 on success, 1 if any input failed or a hard check did not hold,
2 for usage errors.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from functools import partial
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .data import DatasetError, list_images, load_dataset, synthetic_corpus, write_corpus
from .diffusion import ConvergenceError, inpaint_homogeneous
from .image import DimensionError, ImageFormatError, center_crop, load_image, load_mask, quantize, save_image, save_mask
from .metrics import mae, psnr, ssim
from .sparsify import NlpeConfig, SparsificationError, SparsifyConfig, nlpe, probabilistic_sparsification
from .wgan.checkpoint import CheckpointFormatError
from .wgan.inference import generate_mask, inpaint_learned
from .wgan.networks import NetConfig
from .wgan.training import Checkpoint, TrainConfig, TrainingDivergedError, train, write_loss_csv

log = logging.getLogger("sparsepaint")

THREADS_ENV = "SPARSEPAINT_THREADS"
METHODS = ("ps", "ps+nlpe", "mg")
DEFAULT_DENSITIES = (0.05, 0.10, 0.20)
MANIFEST = "manifest.json"
CV_LIMIT = 0.10

# failures that are reported as "error: ..." with exit code 1 instead of a traceback
EXPECTED_ERRORS = (
    DatasetError,
    ImageFormatError,
    DimensionError,
    CheckpointFormatError,
    SparsificationError,
    ConvergenceError,
    ValueError,
    OSError,
)


# ---------------------------------------------------------------- argument types


def fraction(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be a fraction in (0, 1], got {value}")
    return value


def fraction_list(text: str) -> list[float]:
    return [fraction(t) for t in text.split(",") if t.strip()]


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {value}")
    return value


def non_negative_float(text: str) -> float:
    value = float(text)
    if value < 0 or not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"must be a finite non-negative number, got {value}")
    return value


def positive_float(text: str) -> float:
    value = float(text)
    if value <= 0 or not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"must be a finite positive number, got {value}")
    return value


def repetitions(text: str) -> int:
    value = positive_int(text)
    if value < 3:
        raise argparse.ArgumentTypeError(f"need at least 3 repetitions for a spread estimate, got {value}")
    return value


def channel_list(text: str) -> list[int]:
    return [positive_int(t) for t in text.split(",") if t.strip()]


def method_list(text: str) -> list[str]:
    methods = [t.strip() for t in text.split(",") if t.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise argparse.ArgumentTypeError(f"methods must be drawn from {', '.join(METHODS)}")
    return methods


def pct(density: float) -> str:
    return f"{density:g} ({100 * density:g}%)"


# ---------------------------------------------------------------- run manifest


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, (np.floating, np.integer)):
        return _jsonable(value.item())
    return value


class RunManifest:
    """Collects what one invocation did; written exactly once by :func:`main`."""

    def __init__(self, argv: list[str], args: argparse.Namespace):
        self.argv = list(argv)
        self.args = args
        self.out = Path(args.out)
        self.started = datetime.now(timezone.utc).isoformat()
        self.config: dict = {}
        self.results: dict = {}
        self.outputs: list[tuple[Path, bool]] = []

    def add(self, path: Path, primary: bool = True) -> Path:
        self.outputs.append((Path(path), primary))
        return path

    def to_dict(self, exit_code: int) -> dict:
        options = {k: v for k, v in vars(self.args).items() if k != "func"}
        files = []
        for path, primary in sorted(self.outputs, key=lambda item: str(item[0])):
            if path.exists():
                files.append({"path": os.path.relpath(path, self.out), "sha256": sha256(path), "primary": primary})
        return _jsonable({
            "tool": "sparsepaint",
            "version": __version__,
            "command": self.argv,
            "subcommand": self.args.command,
            "cwd": os.getcwd(),
            "options": options,
            "config": self.config,
            "seeds": {"seed": getattr(self.args, "seed", None)},
            "threads": os.environ.get(THREADS_ENV),
            "environment": {"python": platform.python_version(), "numpy": np.__version__},
            "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(),
            "exit_code": exit_code,
            "results": self.results,
            "outputs": files,
        })

    def write(self, exit_code: int) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / MANIFEST
        path.write_text(json.dumps(self.to_dict(exit_code), indent=2, sort_keys=True) + "\n")
        return path


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


# ---------------------------------------------------------------- shared helpers


def load_checkpoints(paths: list[str] | None) -> list[Checkpoint]:
    return [Checkpoint.load(p) for p in paths or []]


def checkpoint_for(ckpts: list[Checkpoint], density: float) -> Checkpoint:
    """The checkpoint whose training density is closest to ``density`` (first wins on ties)."""
    return min(ckpts, key=lambda c: abs(c.train_config.density - density))


def load_input(path: Path, crop: int | None) -> np.ndarray:
    img = load_image(path)
    return center_crop(img, crop) if crop else img


def quality(img: np.ndarray, rec: np.ndarray) -> tuple[float, float, float]:
    """MAE, PSNR and SSIM of the 8-bit reconstruction as it is stored on disk.

    SSIM is NaN for images smaller than its window.
    """
    rec = quantize(rec) / 255.0
    try:
        s = ssim(img, rec)
    except DimensionError:
        s = float("nan")
    return mae(img, rec), psnr(img, rec), s


def optimise_mask(method: str, img: np.ndarray, density: float, opts: dict, ckpt: Checkpoint | None):
    """Run one mask method; returns (mask, reconstruction, MAE of the plain PS mask or None)."""
    diffusion = partial(inpaint_homogeneous, rel_residual=opts["cg_tol"])
    seed = opts["seed"]
    if method == "mg":
        mask = generate_mask(ckpt, img, seed)
        return mask, inpaint_learned(ckpt, img, mask, seed), None
    cfg = SparsifyConfig(density, opts["ps_p"], opts["ps_q"], seed)
    mask = probabilistic_sparsification(img, cfg, diffusion)
    rec = diffusion(img, mask)
    if method == "ps":
        return mask, rec, None
    ps_mae = mae(img, rec)
    mask = nlpe(img, mask, NlpeConfig(opts["nlpe_cycles"], opts["nlpe_cands"], seed), diffusion)
    return mask, diffusion(img, mask), ps_mae


def method_options(args) -> dict:
    return {
        "seed": args.seed,
        "cg_tol": args.cg_tol,
        "ps_p": args.ps_p,
        "ps_q": args.ps_q,
        "nlpe_cycles": args.nlpe_cycles,
        "nlpe_cands": args.nlpe_cands,
    }


def _add_method_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ps-p", type=fraction, default=0.1, help="PS candidate fraction p (default 0.1)")
    p.add_argument("--ps-q", type=fraction, default=0.05, help="PS removal fraction q (default 0.05)")
    p.add_argument("--nlpe-cycles", type=positive_int, default=5, help="NLPE cycles of |mask| iterations")
    p.add_argument("--nlpe-cands", type=positive_int, default=10, help="NLPE candidates per exchange")
    p.add_argument("--cg-tol", type=positive_float, default=1e-6, help="CG relative residual")


# ---------------------------------------------------------------- corpus


def cmd_corpus(args, run: RunManifest) -> int:
    images = synthetic_corpus(args.count, args.size, args.channels, args.seed)
    for path in write_corpus(images, args.out, args.prefix):
        run.add(path)
    print(f"wrote {args.count} synthetic {args.size}x{args.size} images to {args.out}")
    return 0


# ---------------------------------------------------------------- train


def cmd_train(args, run: RunManifest) -> int:
    images, files = load_dataset(args.data, args.crop)
    if images.shape[1] != images.shape[2]:
        raise DatasetError(f"images are {images.shape[1]}x{images.shape[2]}; pass --crop for square inputs")
    size, k = images.shape[1], images.shape[3]
    channels = args.channels
    scales = args.scales or (len(channels) if channels else 4)
    if channels is None:
        channels = [48 * 2**i for i in range(scales)]
    net = NetConfig(image_size=size, channels=k, scales=scales, base_channels=channels,
                    binarization=args.binarization)
    batch = args.batch or (128 if size == 64 else 32)
    cfg = TrainConfig(
        density=args.density, alpha=args.alpha, beta=args.beta, lr=args.lr, batch=batch,
        epochs=args.epochs, n_critic=args.n_critic, seed=args.seed, val_fraction=args.val_fraction,
        mode=args.mode, density_range=tuple(args.density_range),
    )
    run.config.update(net=net.to_dict(), train=cfg.to_dict(), files=[str(f) for f in files])
    print(f"training {args.mode} on {len(files)} images of {size}x{size}x{k}, target density {pct(args.density)}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path, csv_path = out / "model.ckpt", out / "loss.csv"
    try:
        ckpt = train(images, cfg, net)
    except TrainingDivergedError as exc:
        exc.last_checkpoint.save(ckpt_path)
        run.add(ckpt_path)
        run.results["diverged"] = {"epoch": exc.epoch, "batch": exc.batch, "stage": exc.stage}
        print(f"error: {exc}; last finite checkpoint written to {ckpt_path}", file=sys.stderr)
        return 1
    ckpt.save(ckpt_path)
    write_loss_csv(ckpt.history, csv_path)
    run.add(ckpt_path)
    run.add(csv_path, primary=False)
    run.results.update(best_epoch=ckpt.epoch, val_mask_loss=ckpt.val_loss)
    print(f"best epoch {ckpt.epoch}, validation mask loss {ckpt.val_loss:.6f}")
    return 0


# ---------------------------------------------------------------- mask


def _mask_output(out: Path, path: Path, suffix: str = ".mask.pgm") -> Path:
    return out / (path.stem + suffix)


def cmd_mask(args, run: RunManifest) -> int:
    files = list_images(args.input)
    if not files:
        raise DatasetError(f"no P5/P6 images found in {args.input}")
    ckpts = load_checkpoints([args.checkpoint] if args.checkpoint else None)
    ckpt = ckpts[0] if ckpts else None
    density = ckpt.train_config.density if args.method == "mg" else args.density
    opts = method_options(args)
    run.config.update(method=args.method, density=density, **opts)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, failures = [], 0
    for path in files:
        start = time.perf_counter()
        try:
            img = load_input(path, args.crop)
            mask, rec, ps_mae = optimise_mask(args.method, img, density, opts, ckpt)
        except EXPECTED_ERRORS as exc:
            failures += 1
            rows.append([path.name, args.method, density, "", "", "", "", "", f"{type(exc).__name__}: {exc}"])
            print(f"{path.name}: error: {exc}", file=sys.stderr)
            continue
        seconds = time.perf_counter() - start
        target = run.add(_mask_output(out, path))
        save_mask(mask, target)
        err = mae(img, rec)
        known = int(mask.sum())
        rows.append([path.name, args.method, density, known, known / mask.size, err, ps_mae, seconds, ""])
        extra = f" (PS alone {ps_mae:.4f})" if ps_mae is not None else ""
        print(f"{path.name}: {known} pixels, density {pct(known / mask.size)}, MAE {err:.4f}{extra}, {seconds:.3f} s")
    csv_path = run.add(out / "masks.csv", primary=False)
    write_csv(csv_path, ["file", "method", "target_density", "known", "density", "mae", "ps_mae", "seconds", "error"],
              [[fmt(v) for v in r] for r in rows])
    run.results["failures"] = failures
    return 1 if failures else 0


# ---------------------------------------------------------------- inpaint


def cmd_inpaint(args, run: RunManifest) -> int:
    img = load_input(Path(args.image), args.crop)
    mask = load_mask(args.mask)
    if mask.shape != img.shape[:2]:
        raise DimensionError(f"mask is {mask.shape[0]}x{mask.shape[1]} but image is {img.shape[0]}x{img.shape[1]}")
    if args.operator == "mg":
        ckpt = Checkpoint.load(args.checkpoint)
        rec = inpaint_learned(ckpt, img, mask, args.seed)
    else:
        rec = inpaint_homogeneous(img, mask, rel_residual=args.cg_tol)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    target = run.add(out / (Path(args.image).stem + (".inpainted.ppm" if img.shape[2] == 3 else ".inpainted.pgm")))
    save_image(rec, target)
    print(f"wrote {target}")
    if args.reference:
        ref = load_input(Path(args.reference), args.crop)
        if ref.shape != rec.shape:
            raise DimensionError(f"reference shape {ref.shape} differs from reconstruction {rec.shape}")
        m, p, s = quality(ref, rec)
        run.results.update(mae=m, psnr=p, ssim=s)
        s_text = "n/a (image smaller than the 11x11 window)" if math.isnan(s) else f"{s:.4f}"
        print(f"MAE {m:.4f}  PSNR {p:.4f} dB  SSIM {s_text}")
    return 0


# ---------------------------------------------------------------- evaluate

_WORKER_CKPTS: dict[str, Checkpoint] = {}


def _evaluate_item(item):
    """One (image, method, density) cell; runs in a worker process when --workers > 1."""
    path, method, density, crop, opts, ckpt_path, mask_out = item
    row = {"file": Path(path).name, "method": method, "density": density}
    try:
        ckpt = None
        if ckpt_path:
            ckpt = _WORKER_CKPTS.get(ckpt_path) or _WORKER_CKPTS.setdefault(ckpt_path, Checkpoint.load(ckpt_path))
        img = load_input(Path(path), crop)
        start = time.perf_counter()
        mask, rec, _ = optimise_mask(method, img, density, opts, ckpt)
        seconds = time.perf_counter() - start
        m, p, s = quality(img, rec)
        if mask_out:
            Path(mask_out).parent.mkdir(parents=True, exist_ok=True)
            save_mask(mask, mask_out)
        row.update(known=int(mask.sum()), mae=m, psnr=p, ssim=s, seconds=seconds, error="")
    except EXPECTED_ERRORS as exc:
        row.update(error=f"{type(exc).__name__}: {exc}")
    return row


def cmd_evaluate(args, run: RunManifest) -> int:
    files = list_images(args.data)
    if not files:
        raise DatasetError(f"no P5/P6 images found in {args.data}")
    methods = args.methods or (["ps", "ps+nlpe"] + (["mg"] if args.checkpoint else []))
    ckpts = {p: Checkpoint.load(p) for p in args.checkpoint or []}
    opts = method_options(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run.config.update(methods=methods, densities=args.densities, files=[str(f) for f in files], **opts)

    items = []
    for method in methods:
        for density in args.densities:
            ckpt_path = None
            if method == "mg":
                chosen = checkpoint_for(list(ckpts.values()), density)
                ckpt_path = next(p for p, c in ckpts.items() if c is chosen)
                log.info("mg at density %g uses %s", density, ckpt_path)
            for path in files:
                mask_out = None
                if args.save_masks:
                    mask_out = str(out / "masks" / f"{method}_{density:g}" / (path.stem + ".pgm"))
                    run.add(Path(mask_out))
                items.append((str(path), method, density, args.crop, opts, ckpt_path, mask_out))

    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_evaluate_item, items))
    else:
        rows = [_evaluate_item(item) for item in items]

    per_image = ["file", "method", "density", "known", "mae", "psnr", "ssim", "seconds", "error"]
    write_csv(run.add(out / "evaluate_images.csv", primary=False), per_image,
              [[fmt(r.get(c)) for c in per_image] for r in rows])

    table, failures = [], 0
    for method in methods:
        for density in args.densities:
            cell = [r for r in rows if r["method"] == method and r["density"] == density]
            ok = [r for r in cell if not r["error"]]
            failures += len(cell) - len(ok)

            def mean(key):
                return float(np.mean([r[key] for r in ok])) if ok else None

            table.append([method, density, 100 * density, len(ok), len(cell) - len(ok),
                          mean("mae"), mean("psnr"), mean("ssim"), mean("seconds")])
    header = ["method", "density", "percent", "images", "failures", "mae", "psnr", "ssim", "seconds"]
    write_csv(run.add(out / "evaluate.csv", primary=False), header, [[fmt(v) for v in r] for r in table])
    for r in table:
        vals = " ".join(f"{h} {fmt(v)}" for h, v in zip(header[3:], r[3:]))
        print(f"{r[0]:8s} density {pct(r[1])}: {vals}")
    for r in rows:
        if r["error"]:
            print(f"{r['file']} [{r['method']} {r['density']:g}]: error: {r['error']}", file=sys.stderr)
    run.results["failures"] = failures
    return 1 if failures else 0


# ---------------------------------------------------------------- benchmark


def coefficient_of_variation(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(values.std() / values.mean()) if values.mean() > 0 else 0.0


def cmd_benchmark(args, run: RunManifest) -> int:
    files = list_images(args.data)
    if not files:
        raise DatasetError(f"no P5/P6 images found in {args.data}")
    images = [load_input(p, args.crop) for p in files]
    methods = args.methods or (["mg"] if args.checkpoint else []) + ["ps"]
    ckpts = load_checkpoints(args.checkpoint)
    opts = method_options(args)
    run.config.update(methods=methods, densities=args.densities, reps=args.reps, **opts)
    chosen = {d: checkpoint_for(ckpts, d) for d in args.densities} if ckpts else {}

    def once(method, density):
        start = time.perf_counter()
        for img in images:
            optimise_mask(method, img, density, opts, chosen.get(density))
        return (time.perf_counter() - start) / len(images)

    # warm-up builds the networks and touches every code path once
    for method in methods:
        for density in args.densities:
            once(method, density)
    times = {(m, d): [] for m in methods for d in args.densities}
    for rep in range(args.reps):
        # interleave densities within each repetition so slow drifts hit all of them alike
        for density in args.densities:
            for method in methods:
                times[(method, density)].append(once(method, density))

    rows = []
    for method in methods:
        for density in args.densities:
            t = np.array(times[(method, density)])
            rows.append([method, density, 100 * density, args.reps, float(t.mean()), float(t.std(ddof=1))])
            print(f"{method:8s} density {pct(density)}: {t.mean():.6f} s +- {t.std(ddof=1):.6f} per image")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(run.add(out / "benchmark.csv", primary=False),
              ["method", "density", "percent", "reps", "mean_seconds", "std_seconds"], [[fmt(v) for v in r] for r in rows])

    code = 0
    checks = {}
    if "mg" in methods:
        cv = coefficient_of_variation([np.mean(times[("mg", d)]) for d in args.densities])
        passed = cv <= CV_LIMIT
        checks["mg_density_independence"] = {"cv": cv, "limit": CV_LIMIT, "passed": passed}
        print(f"check mg density independence: cv {cv:.4f} <= {CV_LIMIT}: {'PASS' if passed else 'FAIL'}")
        if not passed and args.strict:
            code = 1
    if "ps" in methods and len(args.densities) > 1:
        order = sorted(args.densities)
        means = [np.mean(times[("ps", d)]) for d in order]
        decreasing = all(a >= b for a, b in zip(means, means[1:]))
        checks["ps_decreasing_with_density"] = {"decreasing": decreasing}
        print(f"ps time decreases with density: {'yes' if decreasing else 'no'} (reported, not asserted)")
    run.results["checks"] = checks
    return code


# ---------------------------------------------------------------- replay


def cmd_replay(args, run: RunManifest) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    argv = list(manifest["command"])
    out = str(Path(args.out).resolve())
    if "--out" in argv:
        argv[argv.index("--out") + 1] = out
    else:
        argv += ["--out", out]
    with _chdir(manifest["cwd"]):
        code = main(argv)
    fresh = json.loads((Path(out) / MANIFEST).read_text())
    before = {f["path"]: f["sha256"] for f in manifest["outputs"] if f["primary"]}
    after = {f["path"]: f["sha256"] for f in fresh["outputs"] if f["primary"]}
    mismatched = sorted(p for p in before.keys() | after.keys() if before.get(p) != after.get(p))
    for p in mismatched:
        print(f"differs: {p}", file=sys.stderr)
    print(f"replayed {len(before)} primary outputs: {'identical' if not mismatched else f'{len(mismatched)} differ'}")
    return 1 if mismatched or code else 0


@contextlib.contextmanager
def _chdir(path):
    old = os.getcwd()
    os.chdir(path)
    try:
        yield
    finally:
        os.chdir(old)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsepaint", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--out", required=True, help="output directory")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("corpus", help="write a synthetic toy corpus of ramps and rectangles")
    p.add_argument("--count", type=positive_int, default=200)
    p.add_argument("--size", type=positive_int, default=32)
    p.add_argument("--channels", type=int, choices=(1, 3), default=1)
    p.add_argument("--prefix", default="img")
    common(p)
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("train", help="train the generator, mask generator and critic")
    p.add_argument("data", help="directory of P5/P6 images")
    p.add_argument("--mode", choices=("joint", "random-mask"), default="joint")
    p.add_argument("--density", type=fraction, default=0.1, help="target density as a fraction")
    p.add_argument("--density-range", type=fraction, nargs=2, default=(0.05, 0.2), metavar=("LO", "HI"),
                   help="per-sample density range for --mode random-mask")
    p.add_argument("--alpha", type=non_negative_float, default=0.005)
    p.add_argument("--beta", type=non_negative_float, default=1.0)
    p.add_argument("--lr", type=positive_float, default=5e-5)
    p.add_argument("--batch", type=positive_int, help="batch size (default 128 for 64x64 images, else 32)")
    p.add_argument("--epochs", type=non_negative_int, default=1000)
    p.add_argument("--n-critic", type=positive_int, default=1)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--crop", type=positive_int, help="centre-crop size, e.g. 64 or 128")
    p.add_argument("--scales", type=positive_int, help="hourglass levels (default 4)")
    p.add_argument("--channels", type=channel_list, help="comma-separated channels per level, each divisible by 3")
    p.add_argument("--binarization", choices=("hard_rounding", "stochastic_rounding", "additive_noise"),
                   default="hard_rounding")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("mask", help="optimise inpainting masks")
    p.add_argument("input", help="image file or directory")
    p.add_argument("--method", choices=METHODS, default="ps")
    p.add_argument("--density", type=fraction, default=0.1)
    p.add_argument("--checkpoint", help="trained checkpoint (required for --method mg)")
    p.add_argument("--crop", type=positive_int)
    _add_method_flags(p)
    common(p)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("inpaint", help="reconstruct an image from a mask")
    p.add_argument("image")
    p.add_argument("--mask", required=True, help="P5 mask with values 0 and 255")
    p.add_argument("--operator", choices=("diffusion", "mg"), default="diffusion")
    p.add_argument("--checkpoint", help="trained checkpoint (required for --operator mg)")
    p.add_argument("--cg-tol", type=positive_float, default=1e-6)
    p.add_argument("--reference", help="original image for MAE/PSNR/SSIM")
    p.add_argument("--crop", type=positive_int)
    common(p)
    p.set_defaults(func=cmd_inpaint)

    p = sub.add_parser("evaluate", help="compare mask methods across densities")
    p.add_argument("data", help="image file or directory")
    p.add_argument("--methods", type=method_list, help="comma list from ps,ps+nlpe,mg")
    p.add_argument("--densities", type=fraction_list, default=list(DEFAULT_DENSITIES))
    p.add_argument("--checkpoint", action="append", help="checkpoint for mg; repeat for one per density")
    p.add_argument("--crop", type=positive_int)
    p.add_argument("--save-masks", action="store_true")
    p.add_argument("--workers", type=positive_int, default=None, help=f"worker processes (default ${THREADS_ENV} or 1)")
    _add_method_flags(p)
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="wall-clock mask generation across densities")
    p.add_argument("data", help="image file or directory")
    p.add_argument("--methods", type=method_list, help="comma list from ps,ps+nlpe,mg")
    p.add_argument("--densities", type=fraction_list, default=list(DEFAULT_DENSITIES))
    p.add_argument("--checkpoint", action="append", help="checkpoint for mg; repeat for one per density")
    p.add_argument("--reps", type=repetitions, default=10)
    p.add_argument("--crop", type=positive_int)
    p.add_argument("--strict", action="store_true", help="exit 1 when the density-independence check fails")
    _add_method_flags(p)
    common(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("replay", help="re-run a manifest and compare primary outputs byte for byte")
    p.add_argument("manifest")
    common(p, seed=False)
    p.set_defaults(func=cmd_replay)
    return parser


def validate(parser: argparse.ArgumentParser, args) -> None:
    """Cross-flag checks that must fail before any work is done."""
    ckpt = getattr(args, "checkpoint", None)
    if isinstance(ckpt, str) and ckpt.lower() == "none":
        args.checkpoint = ckpt = None
    if isinstance(ckpt, list):
        args.checkpoint = ckpt = [c for c in ckpt if c.lower() != "none"] or None
    if args.command == "mask" and args.method == "mg" and not ckpt:
        parser.error("--method mg requires --checkpoint")
    if args.command == "inpaint" and args.operator == "mg" and not ckpt:
        parser.error("--operator mg requires --checkpoint")
    if args.command in ("evaluate", "benchmark") and "mg" in (args.methods or []) and not ckpt:
        parser.error("method mg requires --checkpoint")
    if args.command in ("mask", "evaluate", "benchmark") and args.ps_q > args.ps_p:
        parser.error("--ps-q must not exceed --ps-p")
    if args.command == "train" and args.density_range[0] > args.density_range[1]:
        parser.error("--density-range needs LO <= HI")
    if args.command == "train" and not 0 <= args.val_fraction < 1:
        parser.error("--val-fraction must lie in [0, 1)")


def thread_count() -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return None
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value < 1:
        raise SystemExit(f"sparsepaint: error: {THREADS_ENV} must be a positive integer, got {raw!r}")
    return value


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    validate(parser, args)
    threads = thread_count()
    if getattr(args, "workers", "absent") is None:
        args.workers = threads or 1
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(name)s: %(message)s")

    run = RunManifest(argv, args)
    code = 1
    limits = threadpool_limits(limits=threads) if threads else contextlib.nullcontext()
    try:
        with limits:
            code = args.func(args, run)
    except EXPECTED_ERRORS as exc:
        print(f"sparsepaint {args.command}: error: {exc}", file=sys.stderr)
        code = 1
    finally:
        if args.command != "replay":
            run.write(code)
    return code


if __name__ == "__main__":
    sys.exit(main())
