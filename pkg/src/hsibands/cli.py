"""Batch command line: ``hsibands <command> [flags]``.

Exit codes: 0 success, 2 bad flags, 3 I/O or file-format error,
4 numeric / validation failure. Outputs are written through a staging area
so a failed run never leaves partial files behind.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import os
import platform
import shutil
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .classify import SvmParams, classify_bands
from .dataset import (DataFormatError, SynthSpec, load_cube, load_ground_truth, read_pgm,
                      split_train_test, synth_dataset, write_cube, write_pgm)
from .glcm import DIRECTIONS, FEATURES, GLCMConfig, ground_truth_features, texture_features
from .mi import MASK_MODES, band_mi_scan
from .reference import compare_sweep
from .selection import ALGORITHMS, ORDERINGS, SelectionConfig, SelectionResult, select_bands, sweep_experiment

logger = logging.getLogger("hsibands")

EXIT_OK, EXIT_FLAGS, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

# label -> RGB; 0 is black background, 1..16 follow the usual Indian Pines map colours
PALETTE = (
    (0, 0, 0),
    (255, 254, 137), (3, 28, 241), (255, 89, 1), (5, 255, 133),
    (255, 2, 251), (89, 1, 255), (3, 171, 255), (12, 255, 7),
    (172, 175, 84), (160, 78, 158), (101, 173, 255), (60, 91, 112),
    (104, 192, 63), (139, 69, 46), (119, 255, 172), (254, 255, 3),
)


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# output helpers


def _write_atomic(path: Path, data: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode() if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


@contextlib.contextmanager
def staged_outputs(out_dir: str | os.PathLike):
    """Yield a scratch directory whose files move into ``out_dir`` on success."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(dir=out_dir, prefix=".staging-"))
    try:
        yield stage
        for item in sorted(stage.iterdir()):
            os.replace(item, out_dir / item.name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions() -> dict:
    return {"hsibands": __version__, "numpy": np.__version__, "python": platform.python_version()}


# ---------------------------------------------------------------------------
# flag parsing


def _split_list(values, convert):
    out = []
    for v in values if isinstance(values, (list, tuple)) else [values]:
        out.extend(convert(tok) for tok in str(v).split(",") if tok.strip())
    return out


def _directions(text: str) -> tuple[int, ...]:
    dirs = tuple(_split_list(text, int))
    bad = [d for d in dirs if d not in DIRECTIONS]
    if bad or not dirs:
        raise argparse.ArgumentTypeError(f"directions must be a comma list drawn from {DIRECTIONS}")
    return dirs


def _glcm_config(args) -> GLCMConfig:
    return GLCMConfig(levels=args.levels, distance=args.distance, directions=args.directions,
                      symmetric=args.symmetric, aggregation=getattr(args, "aggregation", "average"))


def _svm_params(args) -> SvmParams:
    return SvmParams(C=args.svm_c, kernel=args.kernel, gamma=args.gamma, tol=args.svm_tol,
                     max_iter=args.svm_max_iter, seed=args.seed)


def _load_inputs(args):
    cube = load_cube(args.cube)
    gt = load_ground_truth(args.gt) if getattr(args, "gt", None) else None
    if gt is not None:
        gt.check_matches(cube)
    return cube, gt


# ---------------------------------------------------------------------------
# commands


def cmd_features(args) -> None:
    cube, _ = _load_inputs(argparse.Namespace(cube=args.cube))
    cfg = _glcm_config(args)
    table = texture_features(cube, cfg, args.workers)
    text = table.to_csv()
    if args.gt:
        gt = load_ground_truth(args.gt)
        gt.check_matches(cube)
        text += "".join(ground_truth_features(gt, cfg).to_csv().splitlines(keepends=True)[1:])
    _write_atomic(Path(args.out), text)


def cmd_mi_scan(args) -> None:
    cube, gt = _load_inputs(args)
    scores = band_mi_scan(cube, gt, args.mi_levels, args.mask_mode, args.workers)
    lines = ["band,mi_bits"] + [f"{b},{v:.10f}" for b, v in enumerate(scores)]
    _write_atomic(Path(args.out), "\n".join(lines) + "\n")


def _selection_config(args, algorithm=None, feature=None, ordering=None) -> SelectionConfig:
    return SelectionConfig(
        algorithm=algorithm or args.algorithm,
        feature=feature or args.feature,
        ordering=ordering or args.ordering,
        x=args.x,
        threshold=args.th,
        mi_levels=args.mi_levels,
        glcm=_glcm_config(args),
        mask_mode=args.mask_mode,
    )


def cmd_select(args) -> None:
    cube, gt = _load_inputs(args)
    cfg = _selection_config(args)
    result = select_bands(cube, gt, cfg, workers=args.workers)
    with staged_outputs(args.out_dir) as stage:
        (stage / "selection.json").write_text(result.to_json())
        (stage / "selection.csv").write_text(result.to_csv())


def _report_files(stage: Path, report, prefix: str = "") -> None:
    (stage / f"{prefix}report.json").write_text(report.to_json())
    (stage / f"{prefix}overall.csv").write_text(report.overall_csv())
    (stage / f"{prefix}per_class.csv").write_text(report.per_class_csv())
    if report.predicted_map is not None:
        write_pgm(report.predicted_map, stage / f"{prefix}predicted_map.pgm", maxval=max(report.n_classes, 1))


def cmd_classify(args) -> None:
    cube, gt = _load_inputs(args)
    if args.bands:
        bands = _split_list(args.bands, int)
    elif args.selection:
        bands = SelectionResult.from_dict(json.loads(Path(args.selection).read_text())).retained
        if args.x:
            bands = bands[: args.x]
    else:
        raise CliError("classify needs --bands or --selection", EXIT_FLAGS)
    split = split_train_test(gt, args.split_fraction, args.seed)
    report = classify_bands(cube, gt, bands, split, _svm_params(args))
    with staged_outputs(args.out_dir) as stage:
        _report_files(stage, report)


@dataclass
class ExperimentSpec:
    """Everything a sweep run depends on; written verbatim into the manifest."""

    cube: str
    gt: str
    out_dir: str
    algorithms: list[str] = field(default_factory=lambda: ["spectral", "texture"])
    features: list[str] = field(default_factory=lambda: list(FEATURES))
    orderings: list[str] = field(default_factory=lambda: list(ORDERINGS))
    th_list: list[float] = field(default_factory=lambda: [-0.02, -0.01, -0.005, -0.004, 0.0])
    x_list: list[int] = field(default_factory=lambda: [2, 3, 4, 12, 14, 18, 20, 25, 35, 36, 40, 45, 50, 53, 60, 70, 75, 80])
    levels: int = 16
    distance: int = 1
    directions: list[int] = field(default_factory=lambda: list(DIRECTIONS))
    symmetric: bool = False
    mi_levels: int = 256
    mask_mode: str = "all"
    split_fraction: float = 0.5
    seed: int = 0
    svm_c: float = 1.0
    kernel: str = "linear"
    gamma: float = 1.0
    svm_tol: float = 1e-3
    svm_max_iter: int = 100_000
    compare_reference: bool = False

    def validate(self) -> None:
        for p in (self.cube, self.gt):
            if not Path(p).exists():
                raise FileNotFoundError(p)
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}")
        if not self.th_list or not self.x_list:
            raise ValueError("th_list and x_list must be non-empty")

    def configs(self) -> list[SelectionConfig]:
        glcm = GLCMConfig(self.levels, self.distance, tuple(self.directions), self.symmetric)
        base = dict(x=max(self.x_list), threshold=0.0, mi_levels=self.mi_levels, glcm=glcm, mask_mode=self.mask_mode)
        out = []
        if "spectral" in self.algorithms:
            out.append(SelectionConfig(algorithm="spectral", **base))
        if "texture" in self.algorithms:
            for f in self.features:
                for o in self.orderings:
                    out.append(SelectionConfig(algorithm="texture", feature=f, ordering=o, **base))
        return out


def _spec_from_args(args) -> ExperimentSpec:
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
    # explicit flags win over the config file
    for key in ("cube", "gt", "out_dir", "levels", "distance", "symmetric", "mi_levels", "mask_mode",
                "split_fraction", "seed", "svm_c", "kernel", "gamma", "svm_tol", "svm_max_iter", "compare_reference"):
        v = getattr(args, key)
        if v is not None:
            data[key] = v
    if args.directions is not None:
        data["directions"] = list(args.directions)
    if args.algorithm is not None:
        data["algorithms"] = ["spectral", "texture"] if args.algorithm == "both" else [args.algorithm]
    if args.feature is not None:
        data["features"] = _split_list(args.feature, str)
    if args.ordering is not None:
        data["orderings"] = _split_list(args.ordering, str)
    if args.th_list is not None:
        data["th_list"] = _split_list(args.th_list, float)
    if args.x_list is not None:
        data["x_list"] = _split_list(args.x_list, int)
    missing = [k for k in ("cube", "gt", "out_dir") if not data.get(k)]
    if missing:
        raise CliError(f"experiment needs {', '.join('--' + m.replace('_', '-') for m in missing)}", EXIT_FLAGS)
    try:
        return ExperimentSpec(**data)
    except TypeError as exc:
        raise CliError(f"bad experiment config: {exc}", EXIT_FLAGS) from exc


def cmd_experiment(args) -> None:
    spec = _spec_from_args(args)
    spec.validate()
    cube = load_cube(spec.cube)
    gt = load_ground_truth(spec.gt)
    gt.check_matches(cube)
    svm = SvmParams(C=spec.svm_c, kernel=spec.kernel, gamma=spec.gamma, tol=spec.svm_tol,
                    max_iter=spec.svm_max_iter, seed=spec.seed)
    split = split_train_test(gt, spec.split_fraction, spec.seed)
    configs = spec.configs()
    features = texture_features(cube, configs[-1].glcm, args.workers) if "texture" in spec.algorithms else None

    outputs = {}
    with staged_outputs(spec.out_dir) as stage:
        for cfg in configs:
            label = cfg.label()
            logger.info("sweeping %s", label)
            table = sweep_experiment(cube, gt, cfg, spec.th_list, spec.x_list, svm, spec.split_fraction,
                                     spec.seed, features=features if cfg.algorithm == "texture" else None,
                                     workers=args.workers)
            files = {"sweep": f"sweep_{label}.csv", "selections": f"selections_{label}.json"}
            (stage / files["sweep"]).write_text(table.to_csv())
            selections = {f"{th:g}": table.selections[th].to_dict() for th in table.th_list}
            (stage / files["selections"]).write_text(json.dumps(selections, indent=2) + "\n")
            best = table.best_cell()
            if best is not None:
                th, x = best
                report = classify_bands(cube, gt, table.selections[th].retained[:x], split, svm)
                files["per_class"] = f"per_class_{label}.csv"
                files["map"] = f"map_{label}.pgm"
                (stage / files["per_class"]).write_text(report.per_class_csv())
                write_pgm(report.predicted_map, stage / files["map"], maxval=max(gt.n_classes, 1))
                files["best_cell"] = {"threshold": th, "x": x, "overall_accuracy": round(report.overall_accuracy, 2)}
            if spec.compare_reference:
                files["comparison"] = f"comparison_{label}.csv"
                (stage / files["comparison"]).write_text(compare_sweep(table, cfg.algorithm))
            outputs[label] = files
        # out_dir is left out so the same spec written to two places gives identical files
        manifest = {
            "spec": {k: v for k, v in asdict(spec).items() if k != "out_dir"},
            "inputs": {"cube_header_sha256": _sha256(Path(spec.cube)), "gt_sha256": _sha256(Path(spec.gt))},
            "versions": _versions(),
            "split_warnings": list(split.warnings),
            "outputs": outputs,
        }
        (stage / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_render_map(args) -> None:
    labels = read_pgm(args.labels)
    h, w = labels.shape
    if (args.expect_width is not None and args.expect_width != w) or (
            args.expect_height is not None and args.expect_height != h):
        raise ValueError(f"map is {w}x{h}, expected {args.expect_width}x{args.expect_height}")
    if not args.palette:
        header = f"P5\n{w} {h}\n{max(int(labels.max()), 1)}\n".encode()
        dtype = np.dtype("u1") if labels.max() < 256 else np.dtype(">u2")
        _write_atomic(Path(args.out), header + labels.astype(dtype).tobytes())
        return
    if labels.max() >= len(PALETTE):
        raise ValueError(f"palette covers labels 0..{len(PALETTE) - 1}, map has {labels.max()}")
    rgb = np.array(PALETTE, dtype=np.uint8)[labels]
    _write_atomic(Path(args.out), f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes())


def cmd_synth(args) -> None:
    spec = SynthSpec(width=args.width, height=args.height, n_classes=args.classes,
                     n_informative_bands=args.informative, n_noise_bands=args.noise,
                     n_redundant_bands=args.redundant, texture_mode=args.texture,
                     noise_sigma=args.noise_sigma, seed=args.seed)
    scene = synth_dataset(spec)
    with staged_outputs(args.out_dir) as stage:
        write_cube(scene.cube, stage / "cube.hdr.json")
        write_pgm(scene.gt.labels, stage / "gt.pgm", maxval=max(scene.gt.n_classes, 1))
        manifest = {
            "spec": asdict(spec),
            "informative_bands": list(scene.informative),
            "redundant_bands": list(scene.redundant),
            "redundant_sources": list(scene.redundant_source),
            "noise_bands": list(scene.noise),
            "versions": _versions(),
        }
        (stage / "synth.json").write_text(json.dumps(manifest, indent=2) + "\n")


# ---------------------------------------------------------------------------
# parser


def _add_glcm_flags(p, defaults=True):
    d = (lambda v: v) if defaults else (lambda v: None)
    p.add_argument("--levels", type=int, default=d(16), help="gray levels for GLCM quantization")
    p.add_argument("--distance", type=int, default=d(1), help="co-occurrence pixel distance")
    p.add_argument("--directions", type=_directions, default=d(DIRECTIONS), help="comma list of 0,45,90,135")
    p.add_argument("--symmetric", action="store_true", default=d(False), help="count reversed pairs too")


def _add_svm_flags(p, defaults=True):
    d = (lambda v: v) if defaults else (lambda v: None)
    p.add_argument("--svm-c", type=float, default=d(1.0))
    p.add_argument("--kernel", choices=("linear", "rbf"), default=d("linear"))
    p.add_argument("--gamma", type=float, default=d(1.0), help="rbf kernel width")
    p.add_argument("--svm-tol", type=float, default=d(1e-3))
    p.add_argument("--svm-max-iter", type=int, default=d(100_000))
    p.add_argument("--split-fraction", type=float, default=d(0.5))
    p.add_argument("--seed", type=int, default=d(0))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hsibands", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="GLCM texture features per band (CSV)")
    p.add_argument("--cube", required=True)
    p.add_argument("--gt", help="also emit a row for the ground-truth map")
    p.add_argument("--out", required=True)
    p.add_argument("--aggregation", choices=("average", "per-direction"), default="average")
    p.add_argument("--workers", type=int, default=1)
    _add_glcm_flags(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("mi-scan", help="MI between the ground truth and every band (CSV)")
    p.add_argument("--cube", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mi-levels", type=int, default=256)
    p.add_argument("--mask-mode", choices=MASK_MODES, default="all")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_mi_scan)

    p = sub.add_parser("select", help="run one band selection (JSON + CSV trace)")
    p.add_argument("--cube", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--algorithm", choices=ALGORITHMS, default="spectral")
    p.add_argument("--feature", choices=FEATURES, default="homogeneity")
    p.add_argument("--ordering", choices=ORDERINGS, default="feature-argmax")
    p.add_argument("--x", type=int, default=10, help="maximum number of retained bands")
    p.add_argument("--th", type=float, default=0.0, help="acceptance threshold (bits)")
    p.add_argument("--mi-levels", type=int, default=256)
    p.add_argument("--mask-mode", choices=MASK_MODES, default="all")
    p.add_argument("--seed", type=int, default=0, help="accepted for uniformity; selection is deterministic")
    p.add_argument("--workers", type=int, default=1)
    _add_glcm_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("classify", help="train/evaluate the SVM on given bands")
    p.add_argument("--cube", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--bands", help="comma list of band indices")
    p.add_argument("--selection", help="selection.json produced by `select`")
    p.add_argument("--x", type=int, help="use only the first X retained bands")
    _add_svm_flags(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("experiment", help="threshold x band-count sweeps, per-class tables and maps")
    p.add_argument("--config", help="JSON experiment spec; flags override its fields")
    p.add_argument("--cube")
    p.add_argument("--gt")
    p.add_argument("--out-dir")
    p.add_argument("--algorithm", choices=ALGORITHMS + ("both",))
    p.add_argument("--feature", help="comma list of texture features")
    p.add_argument("--ordering", help="comma list of texture orderings")
    p.add_argument("--th-list", nargs="+", help="thresholds, space or comma separated")
    p.add_argument("--x-list", nargs="+", help="band counts, space or comma separated")
    p.add_argument("--mi-levels", type=int)
    p.add_argument("--mask-mode", choices=MASK_MODES)
    p.add_argument("--compare-reference", action="store_true", default=None,
                   help="diff the sweeps against the published Indian Pines tables")
    p.add_argument("--workers", type=int, default=1)
    _add_glcm_flags(p, defaults=False)
    _add_svm_flags(p, defaults=False)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("render-map", help="render a label PGM as PGM or palette PPM")
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--palette", action="store_true", help="fixed 17-colour palette, 0 = black")
    p.add_argument("--expect-width", type=int)
    p.add_argument("--expect-height", type=int)
    p.set_defaults(func=cmd_render_map)

    p = sub.add_parser("synth", help="write a synthetic labeled cube")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--informative", type=int, default=5)
    p.add_argument("--redundant", type=int, default=0)
    p.add_argument("--noise", type=int, default=10)
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--texture", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (OSError, DataFormatError, json.JSONDecodeError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, FloatingPointError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
