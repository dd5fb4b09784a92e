"""Command-line front end: ``restore``, ``degrade`` and ``metrics``.

Exit codes are a stable contract for batch harnesses:

    0 success, 2 I/O failure, 3 validation failure, 4 solver failure,
    5 metric requested over an empty region.

Every ``restore`` flag may also come from a JSON file given with
``--config``; explicit flags win over the file, the file wins over the
built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CandidateSetEmptyError, ConfigurationError, EmptyRegionError, SolverError
from .image import NoiseSpec, RegionMask, add_gaussian_noise, mse, psnr
from .io import read_image, read_mask, write_image, write_mask
from .multiscale import solve_multiscale
from .solver import SolverConfig, SolverState, solve_decoupled, write_trace_csv
from .weights import SearchConfig, write_weights_csv

EXIT_OK = 0
EXIT_IO = 2
EXIT_INVALID = 3
EXIT_SOLVER = 4
EXIT_EMPTY_REGION = 5

MODES = ("inpaint", "denoise", "restore", "decoupled")
THREADS_ENV = "PATCHWEAVE_THREADS"

logger = logging.getLogger("patchweave")


class InputError(Exception):
    """A file could not be read or written."""


@dataclass(frozen=True)
class RunManifest:
    input: str
    output: str
    mask: str | None = None
    mode: str = "restore"
    sigma: float = 0.0
    h: float | None = None
    lam: float | None = None
    patch_radius: int = 3
    patch_width: float | None = None
    search_radius: int | None = 15
    top_k: int | None = 32
    stride: int = 1
    tol: float = 1e-5
    max_iters: int = 50
    boundary: str = "mirror"
    fidelity_region: str = "known"
    levels: int | None = None
    threads: int = 1
    trace: str | None = None
    report: str | None = None
    snapshots: bool = False
    dump_weights: str | None = None
    dump_pixel: tuple[int, int] | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")
        if self.levels is not None and self.levels < 1:
            raise ConfigurationError("levels must be >= 1")
        if (self.dump_weights is None) != (self.dump_pixel is None):
            raise ConfigurationError("--dump-weights and --dump-pixel go together")

    def solver_config(self) -> SolverConfig:
        try:
            search = SearchConfig(self.search_radius, self.top_k, self.stride)
            cfg = SolverConfig(
                patch_radius=self.patch_radius,
                patch_width=self.patch_width,
                search=search,
                sigma=self.sigma,
                h=self.h,
                lam=self.lam,
                tol=self.tol,
                max_iters=self.max_iters,
                mode="decoupled" if self.mode == "decoupled" else "coupled",
                fidelity_region=self.fidelity_region,
                boundary=self.boundary,
                threads=self.threads,
            )
            cfg.kernel()
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        if self.mode == "inpaint":
            cfg = cfg.inpainting_stage()
        elif self.mode == "denoise":
            cfg = cfg.denoising_stage()
        return cfg


def _read(path: str, reader=read_image) -> np.ndarray:
    try:
        return reader(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def _write(path: str | Path, writer, *args) -> None:
    try:
        writer(path, *args)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from None


def _check_output_path(path: str) -> None:
    suffix = Path(path).suffix.lower()
    if suffix not in (".pgm", ".pnm", ".png"):
        raise ConfigurationError(f"unsupported output format {suffix!r} (use .pgm or .png)")


def snapshot_path(output: str | Path, level: int) -> Path:
    p = Path(output)
    return p.with_name(f"{p.stem}_L{level}{p.suffix}")


def _run_solver(man: RunManifest, v: np.ndarray, mask: RegionMask) -> SolverState:
    cfg = man.solver_config()
    if man.mode == "decoupled":
        return solve_decoupled(v, mask, cfg, n_levels=man.levels)
    on_level = None
    if man.snapshots:
        def on_level(k, state):
            _write(snapshot_path(man.output, k), write_image, state.u)
    return solve_multiscale(v, mask, cfg, n_levels=man.levels, on_level=on_level)


def cmd_restore(man: RunManifest) -> int:
    """Restore ``man.input`` and write the result; returns an exit code."""
    try:
        _check_output_path(man.output)
        v = _read(man.input)
        if man.mask is not None:
            hole = _read(man.mask, read_mask)
        else:
            hole = np.zeros(v.shape, dtype=bool)
        if hole.shape != v.shape:
            raise ConfigurationError(f"mask shape {hole.shape} does not match image shape {v.shape}")
        if man.dump_pixel is not None:
            r, c = man.dump_pixel
            if not (0 <= r < v.shape[0] and 0 <= c < v.shape[1]):
                raise ConfigurationError(f"dump pixel {man.dump_pixel} lies outside the image")
        mask = RegionMask(hole, man.patch_radius)
        state = _run_solver(man, v, mask)
        _write(man.output, write_image, state.u)
        if man.trace:
            _write(man.trace, lambda p: write_trace_csv(state.trace, p))
        if man.dump_weights and state.w is not None:
            _write(man.dump_weights, lambda p: write_weights_csv(state.w, man.dump_pixel, p))
        if man.report:
            _write(man.report, _write_report, man, state)
    except InputError as exc:
        logger.error("%s", exc)
        return EXIT_IO
    except (ConfigurationError, EmptyRegionError) as exc:
        logger.error("invalid input: %s", exc)
        return EXIT_INVALID
    except (SolverError, CandidateSetEmptyError) as exc:
        logger.error("solver failed: %s", exc)
        return EXIT_SOLVER
    return EXIT_OK


def _write_report(path, man: RunManifest, state: SolverState) -> None:
    last = state.trace[-1] if state.trace else None
    report = {
        "manifest": asdict(man),
        "iterations": state.iter,
        "total_iterations": len(state.trace),
        "converged": state.converged,
        "final_energy": None if last is None else last.total,
        "final_rel_change": None if last is None else last.rel_change,
    }
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def parse_mask_spec(spec: str) -> tuple[str, tuple]:
    """``rect:x,y,w,h`` | ``random_blocks:n,size,seed`` | ``file:path``."""
    kind, _, arg = spec.partition(":")
    try:
        if kind == "rect":
            x, y, w, h = (int(t) for t in arg.split(","))
            if w < 0 or h < 0:
                raise ValueError
            return kind, (x, y, w, h)
        if kind == "random_blocks":
            n, size, seed = (int(t) for t in arg.split(","))
            if n < 0 or size < 1:
                raise ValueError
            return kind, (n, size, seed)
    except ValueError:
        raise ConfigurationError(f"malformed mask spec {spec!r}") from None
    if kind == "file" and arg:
        return kind, (arg,)
    raise ConfigurationError(f"malformed mask spec {spec!r}; expected rect:, random_blocks: or file:")


def make_mask(spec: str, shape: tuple[int, int]) -> np.ndarray:
    kind, args = parse_mask_spec(spec)
    hole = np.zeros(shape, dtype=bool)
    if kind == "rect":
        x, y, w, h = args
        if x < 0 or y < 0 or x + w > shape[1] or y + h > shape[0]:
            raise ConfigurationError(f"rect {args} does not fit in image of shape {shape}")
        hole[y:y + h, x:x + w] = True
    elif kind == "random_blocks":
        n, size, seed = args
        if size > min(shape):
            raise ConfigurationError(f"block size {size} exceeds image shape {shape}")
        rng = np.random.default_rng(seed)
        rows = rng.integers(0, shape[0] - size + 1, size=n)
        cols = rng.integers(0, shape[1] - size + 1, size=n)
        for r, c in zip(rows, cols):
            hole[r:r + size, c:c + size] = True
    else:
        hole = _read(args[0], read_mask)
        if hole.shape != shape:
            raise ConfigurationError(f"mask shape {hole.shape} does not match image shape {shape}")
    return hole


def cmd_degrade(
    input: str,
    output: str,
    mask_out: str,
    sigma: float,
    seed: int,
    mask_spec: str | None = None,
    fill: float = 255.0,
) -> int:
    """Add noise on the known region, paint the hole with ``fill``, write image and mask."""
    try:
        _check_output_path(output)
        _check_output_path(mask_out)
        u = _read(input)
        hole = make_mask(mask_spec, u.shape) if mask_spec else np.zeros(u.shape, dtype=bool)
        try:
            noisy = add_gaussian_noise(u, NoiseSpec(sigma, seed), ~hole)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        degraded = np.where(hole, fill, noisy)
        _write(output, write_image, degraded)
        _write(mask_out, write_mask, hole)
    except InputError as exc:
        logger.error("%s", exc)
        return EXIT_IO
    except ConfigurationError as exc:
        logger.error("invalid input: %s", exc)
        return EXIT_INVALID
    return EXIT_OK


def _format_psnr(p: float) -> str:
    return "identical" if math.isinf(p) else f"{p:.4f}"


def cmd_metrics(a: str, b: str, mask: str | None = None, region: str | None = None, out=None) -> int:
    """Print ``region=<name> mse=<v> psnr=<v>`` for the whole image, hole and known set.

    With ``region`` given only that line is printed, and an empty region is
    an error (exit 5). Without it, empty regions are reported and skipped.
    """
    out = sys.stdout if out is None else out
    try:
        ia = _read(a)
        ib = _read(b)
        if ia.shape != ib.shape:
            raise ConfigurationError(f"image shapes differ: {ia.shape} vs {ib.shape}")
        hole = np.zeros(ia.shape, dtype=bool) if mask is None else _read(mask, read_mask)
        if hole.shape != ia.shape:
            raise ConfigurationError(f"mask shape {hole.shape} does not match image shape {ia.shape}")
    except InputError as exc:
        logger.error("%s", exc)
        return EXIT_IO
    except ConfigurationError as exc:
        logger.error("invalid input: %s", exc)
        return EXIT_INVALID
    regions = {"all": np.ones(ia.shape, dtype=bool), "hole": hole, "known": ~hole}
    names = list(regions) if region is None else [region]
    for name in names:
        sel = regions[name]
        if not sel.any():
            print(f"region={name} empty region", file=out)
            if region is not None:
                logger.error("empty region: %s has no pixels", name)
                return EXIT_EMPTY_REGION
            continue
        e = mse(ia, ib, sel)
        print(f"region={name} mse={e:.6f} psnr={_format_psnr(psnr(ia, ib, sel))}", file=out)
    return EXIT_OK


def _opt_int(s: str) -> int | None:
    return None if s.lower() in ("none", "inf", "all") else int(s)


def _pixel(s: str) -> tuple[int, int]:
    try:
        r, c = (int(t) for t in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected ROW,COL, got {s!r}") from None
    return r, c


# restore options that may also come from the config file
_RESTORE_KEYS = [f.name for f in fields(RunManifest) if f.name not in ("input", "output")]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="patchweave", description="Nonlocal patch inpainting and denoising.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("restore", help="inpaint and/or denoise an image")
    r.add_argument("--input", required=True)
    r.add_argument("--output", required=True)
    r.add_argument("--config", help="JSON file with option defaults")
    # defaults are None so that file values can fill in what was not given
    r.add_argument("--mask")
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--sigma", type=float)
    r.add_argument("--h", type=float)
    r.add_argument("--lam", "--lambda", dest="lam", type=float)
    r.add_argument("--patch-radius", type=int)
    r.add_argument("--patch-width", type=float)
    r.add_argument("--search-radius", type=_opt_int, help="integer or 'inf' for the whole image")
    r.add_argument("--top-k", type=_opt_int, help="integer or 'none' to keep every candidate")
    r.add_argument("--stride", type=int)
    r.add_argument("--tol", type=float)
    r.add_argument("--max-iters", type=int)
    r.add_argument("--boundary", choices=("mirror", "clamp"))
    r.add_argument("--fidelity-region", choices=("known", "extended_known"))
    r.add_argument("--levels", type=int, help="pyramid levels (default: from the hole size)")
    r.add_argument("--threads", type=int, help=f"worker threads (fallback: ${THREADS_ENV}, then 1)")
    r.add_argument("--trace", help="write the per-iteration energy trace as CSV")
    r.add_argument("--report", help="write a JSON run summary")
    r.add_argument("--snapshots", action="store_true", default=None,
                   help="write each pyramid level as <out>_L<k>.<ext>")
    r.add_argument("--dump-weights", help="CSV dump of one pixel's final weight distribution")
    r.add_argument("--dump-pixel", type=_pixel, help="ROW,COL for --dump-weights")

    d = sub.add_parser("degrade", help="synthesize a noisy image with a hole")
    d.add_argument("--input", required=True)
    d.add_argument("--output", required=True)
    d.add_argument("--mask-out", required=True)
    d.add_argument("--sigma", type=float, default=0.0)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--mask-spec", help="rect:x,y,w,h | random_blocks:n,size,seed | file:path")

    m = sub.add_parser("metrics", help="MSE and PSNR between two images")
    m.add_argument("a")
    m.add_argument("b")
    m.add_argument("--mask")
    m.add_argument("--region", choices=("all", "hole", "known"))
    return p


def _env_threads() -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def manifest_from_args(ns: argparse.Namespace) -> RunManifest:
    """Merge flags, the optional JSON config file and built-in defaults."""
    values: dict = {}
    if ns.config:
        try:
            loaded = json.loads(Path(ns.config).read_text())
        except OSError as exc:
            raise InputError(f"cannot read {ns.config}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{ns.config}: invalid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"{ns.config}: expected a JSON object")
        unknown = sorted(set(loaded) - set(_RESTORE_KEYS))
        if unknown:
            raise ConfigurationError(f"{ns.config}: unknown keys {unknown}")
        values.update(loaded)
        if "dump_pixel" in values and values["dump_pixel"] is not None:
            values["dump_pixel"] = tuple(values["dump_pixel"])
    if "threads" not in values:
        env = _env_threads()
        if env is not None:
            values["threads"] = env
    for key in _RESTORE_KEYS:
        flag = getattr(ns, key, None)
        if flag is not None:
            values[key] = flag
    try:
        return RunManifest(input=ns.input, output=ns.output, **values)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(ns.verbose, 2),
        format="%(levelname)s: %(message)s",
    )
    if ns.command == "restore":
        try:
            man = manifest_from_args(ns)
        except InputError as exc:
            logger.error("%s", exc)
            return EXIT_IO
        except ConfigurationError as exc:
            logger.error("invalid input: %s", exc)
            return EXIT_INVALID
        return cmd_restore(man)
    if ns.command == "degrade":
        return cmd_degrade(ns.input, ns.output, ns.mask_out, ns.sigma, ns.seed, ns.mask_spec)
    return cmd_metrics(ns.a, ns.b, ns.mask, ns.region)


if __name__ == "__main__":
    sys.exit(main())
