"""Hyperspectral cube / ground-truth I/O, synthetic scenes and stratified splits.

Cubes live on disk as a JSON sidecar header plus a raw band-sequential
(BSQ) little-endian file::

    {"width": 145, "height": 145, "bands": 220, "dtype": "f32",
     "interleave": "bsq", "byte_order": "little", "raw": "cube.raw"}

In memory a cube is a ``(bands, height, width)`` float64 array. Ground truth
maps are ``(height, width)`` integer grids where 0 is unlabeled.

All randomness goes through :func:`make_rng`, a numpy ``Generator`` over the
PCG64 bit generator. PCG64 output is specified bit-for-bit and does not
depend on the platform, so a seed reproduces the same data everywhere.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

DTYPES = {"f32": np.dtype("<f4"), "u16": np.dtype("<u2")}


class DataFormatError(ValueError):
    """A file exists but its contents cannot be decoded."""


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator used by every stochastic operation."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class HyperCube:
    """Reflectance cube stored band-major as ``(bands, height, width)``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"cube must be a non-empty (bands, height, width) array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("cube contains non-finite values")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def n_bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def band(self, index: int) -> np.ndarray:
        return self.data[index]


@dataclass(frozen=True)
class GroundTruth:
    """Per-pixel class labels in ``0..n_classes``; 0 marks unlabeled pixels."""

    labels: np.ndarray
    n_classes: int = -1

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.size == 0:
            raise ValueError(f"ground truth must be a non-empty 2-D grid, got shape {labels.shape}")
        if labels.dtype.kind not in "iu":
            if not np.all(np.isfinite(labels)) or np.any(labels != np.round(labels)):
                raise ValueError("ground truth labels must be integers")
        labels = labels.astype(np.int64)
        if labels.min() < 0:
            raise ValueError("ground truth labels must be non-negative")
        k = int(labels.max()) if self.n_classes < 0 else int(self.n_classes)
        if labels.max() > k:
            raise ValueError(f"label {labels.max()} exceeds n_classes={k}")
        present = np.unique(labels)
        missing = sorted(set(range(1, k + 1)) - set(present.tolist()))
        if missing:
            raise ValueError(f"classes {missing} have no pixels")
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "n_classes", k)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def class_counts(self) -> np.ndarray:
        """Pixel count per class, index 0 holding the unlabeled count."""
        return np.bincount(self.labels.ravel(), minlength=self.n_classes + 1)

    def check_matches(self, cube: HyperCube) -> None:
        if (cube.height, cube.width) != self.shape:
            raise ValueError(
                f"ground truth is {self.width}x{self.height} but cube is {cube.width}x{cube.height}"
            )


@dataclass(frozen=True)
class SplitMask:
    train: np.ndarray
    test: np.ndarray
    warnings: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# cube files


def load_cube(header_path: str | os.PathLike) -> HyperCube:
    """Read a cube from its ``.hdr.json`` sidecar and raw BSQ file.

    Integer samples are converted to float without any scaling.
    """
    header_path = Path(header_path)
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{header_path}: invalid JSON header ({exc})") from exc
    try:
        width, height, bands = int(header["width"]), int(header["height"]), int(header["bands"])
        dtype_name = header["dtype"]
        raw_name = header["raw"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{header_path}: missing or invalid header field ({exc})") from exc
    if dtype_name not in DTYPES:
        raise DataFormatError(f"{header_path}: unsupported dtype {dtype_name!r}")
    if header.get("interleave", "bsq") != "bsq":
        raise DataFormatError(f"{header_path}: unsupported interleave {header['interleave']!r}")
    if header.get("byte_order", "little") != "little":
        raise DataFormatError(f"{header_path}: unsupported byte order {header['byte_order']!r}")
    if min(width, height, bands) < 1:
        raise DataFormatError(f"{header_path}: dimensions must be positive")

    raw_path = header_path.parent / raw_name
    dtype = DTYPES[dtype_name]
    raw = raw_path.read_bytes()
    expected = width * height * bands * dtype.itemsize
    if len(raw) != expected:
        raise DataFormatError(
            f"{raw_path}: header declares {width}x{height}x{bands} {dtype_name} "
            f"({expected} bytes) but file holds {len(raw)} bytes"
        )
    values = np.frombuffer(raw, dtype=dtype).reshape(bands, height, width).astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise DataFormatError(f"{raw_path}: non-finite value found")
    return HyperCube(values)


def write_cube(cube: HyperCube, header_path: str | os.PathLike, dtype: str = "f32",
               raw_name: str | None = None) -> Path:
    """Write ``cube`` as header + raw pair; returns the raw file path."""
    header_path = Path(header_path)
    if dtype not in DTYPES:
        raise ValueError(f"unsupported dtype {dtype!r}")
    if raw_name is None:
        stem = header_path.name[: -len(".hdr.json")] if header_path.name.endswith(".hdr.json") else header_path.stem
        raw_name = stem + ".raw"
    values = cube.data
    if dtype == "u16":
        if values.min() < 0 or values.max() > 65535 or np.any(values != np.round(values)):
            raise ValueError("cube values do not fit u16 without loss")
    raw_path = header_path.parent / raw_name
    raw_path.write_bytes(values.astype(DTYPES[dtype]).tobytes())
    header = {
        "width": cube.width,
        "height": cube.height,
        "bands": cube.n_bands,
        "dtype": dtype,
        "interleave": "bsq",
        "byte_order": "little",
        "raw": raw_name,
    }
    header_path.write_text(json.dumps(header, indent=2) + "\n")
    return raw_path


# ---------------------------------------------------------------------------
# ground truth / label maps


def _pgm_tokens(data: bytes, count: int, start: int = 0) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace separated header tokens, skipping comments."""
    tokens = []
    pos = start
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise DataFormatError("truncated PGM header")
        begin = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[begin:pos])
    return tokens, pos


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    """Decode a P2 (ASCII) or P5 (binary) PGM into an integer grid."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise DataFormatError(f"{path}: not a P2/P5 PGM")
    try:
        (w, h, maxval), pos = _pgm_tokens(data, 3, 2)
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise DataFormatError(f"{path}: malformed PGM header") from exc
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise DataFormatError(f"{path}: invalid PGM dimensions or maxval")
    if magic == b"P2":
        body = data[pos:].split()
        if len(body) != width * height:
            raise DataFormatError(f"{path}: expected {width * height} samples, found {len(body)}")
        try:
            grid = np.array([int(v) for v in body], dtype=np.int64)
        except ValueError as exc:
            raise DataFormatError(f"{path}: non-integer sample") from exc
    else:
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
        raw = data[pos:]
        need = width * height * dtype.itemsize
        if len(raw) != need:
            raise DataFormatError(f"{path}: expected {need} bytes of raster, found {len(raw)}")
        grid = np.frombuffer(raw, dtype=dtype).astype(np.int64)
    if grid.min() < 0 or grid.max() > maxval:
        raise DataFormatError(f"{path}: sample outside 0..{maxval}")
    return grid.reshape(height, width)


def write_pgm(labels: np.ndarray, path: str | os.PathLike, maxval: int | None = None) -> None:
    """Write a label grid as binary PGM, gray value = label value."""
    labels = np.asarray(labels)
    top = int(labels.max()) if labels.size else 0
    maxval = max(top, 1) if maxval is None else int(maxval)
    if labels.min() < 0 or top > maxval or maxval > 65535:
        raise ValueError("labels must lie in 0..maxval <= 65535")
    height, width = labels.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    Path(path).write_bytes(header + labels.astype(dtype).tobytes())


def load_ground_truth(path: str | os.PathLike) -> GroundTruth:
    """Load a PGM (P2/P5) or CSV integer label grid; K is the largest label."""
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(2)
    if magic in (b"P2", b"P5"):
        grid = read_pgm(path)
    else:
        rows = []
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            if not line.strip():
                continue
            try:
                rows.append([int(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: non-integer label") from exc
        if not rows:
            raise DataFormatError(f"{path}: empty grid")
        if len({len(r) for r in rows}) != 1:
            raise DataFormatError(f"{path}: ragged rows")
        grid = np.array(rows, dtype=np.int64)
    if grid.size == 0:
        raise DataFormatError(f"{path}: empty grid")
    if grid.min() < 0:
        raise DataFormatError(f"{path}: negative label")
    # K = largest observed label; intermediate gaps are a data error
    try:
        return GroundTruth(grid)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# synthetic scenes


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic labeled cube.

    ``n_redundant_bands`` are noisy copies of informative bands; they are
    what the redundancy threshold of the selectors is meant to control.
    """

    width: int = 32
    height: int = 32
    n_classes: int = 4
    n_informative_bands: int = 5
    n_noise_bands: int = 10
    texture_mode: bool = False
    noise_sigma: float = 1.0
    seed: int = 0
    n_redundant_bands: int = 0
    shuffle_bands: bool = True


@dataclass(frozen=True)
class SyntheticScene:
    cube: HyperCube
    gt: GroundTruth
    informative: tuple[int, ...]
    redundant: tuple[int, ...] = ()
    noise: tuple[int, ...] = ()
    # for each redundant band, the informative band it copies
    redundant_source: tuple[int, ...] = ()

    def __iter__(self):
        # cube, gt = synth_dataset(spec)
        yield self.cube
        yield self.gt


def _class_regions(width: int, height: int, n_classes: int) -> np.ndarray:
    """Tile the grid with rectangles, one per class; spare tiles stay 0."""
    cols = min(width, math.ceil(math.sqrt(n_classes)))
    rows = math.ceil(n_classes / cols)
    labels = np.zeros((height, width), dtype=np.int64)
    if rows <= height:
        ys = np.linspace(0, height, rows + 1).round().astype(int)
        xs = np.linspace(0, width, cols + 1).round().astype(int)
        for k in range(n_classes):
            r, c = divmod(k, cols)
            labels[ys[r]:ys[r + 1], xs[c]:xs[c + 1]] = k + 1
        return labels
    # too many classes for a tile layout: contiguous row-major runs
    flat = labels.ravel()
    edges = np.linspace(0, flat.size, n_classes + 1).round().astype(int)
    for k in range(n_classes):
        flat[edges[k]:edges[k + 1]] = k + 1
    return flat.reshape(height, width)


def _texture_pattern(kind: int, height: int, width: int) -> np.ndarray:
    """Binary +/-1 periodic pattern number ``kind`` over the full grid."""
    yy, xx = np.mgrid[0:height, 0:width]
    period = 1 + kind // 4
    shape = kind % 4
    if shape == 0:
        p = (xx // period) % 2
    elif shape == 1:
        p = (yy // period) % 2
    elif shape == 2:
        p = (xx // period + yy // period) % 2
    else:
        p = ((xx + yy) // (2 * period)) % 2
    return 2.0 * p - 1.0


def synth_dataset(spec: SynthSpec) -> SyntheticScene:
    """Generate a labeled cube with known informative, redundant and noise bands.

    Spectral mode gives each informative band class means spaced at least
    ``3 * noise_sigma`` apart, in a band-specific class order. Texture mode
    gives each class a periodic +/- pattern (varying by band) with identical
    per-class means, so only the spatial arrangement differs. Noise bands are
    i.i.d. Gaussian, independent of the labels.
    """
    w, h, k = spec.width, spec.height, spec.n_classes
    if k < 2:
        raise ValueError("n_classes must be >= 2")
    if min(w, h, spec.n_informative_bands, spec.n_noise_bands) < 1 or spec.n_redundant_bands < 0:
        raise ValueError("dimensions and band counts must be >= 1")
    if k > w * h:
        raise ValueError(f"{k} classes do not fit in a {w}x{h} grid")
    if spec.noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")

    rng = make_rng(spec.seed)
    labels = _class_regions(w, h, k)
    sigma = float(spec.noise_sigma)
    unit = sigma if sigma > 0 else 1.0
    masks = [labels == c for c in range(k + 1)]

    # class signature shared by every informative band: neighbouring bands
    # of real spectra rank materials alike, they differ in gain and offset
    ranks = rng.permutation(k + 1)
    kinds = rng.permutation(8)
    strengths = rng.permutation(k) + 1.0

    bands = []
    for _ in range(spec.n_informative_bands):
        base = rng.uniform(10.0, 20.0) * unit
        noise = rng.standard_normal((h, w)) * sigma
        if not spec.texture_mode:
            spacing = rng.uniform(3.0, 4.0) * unit
            band = base + spacing * ranks[labels] + noise
        else:
            amplitude = rng.uniform(1.0, 1.5) * unit
            band = np.full((h, w), base)
            for c, m in enumerate(masks):
                if not m.any():
                    continue
                # background is noise only; class means are forced equal
                if c == 0:
                    part = noise
                else:
                    part = amplitude * strengths[c - 1] * _texture_pattern(kinds[(c - 1) % 8], h, w) + noise
                band[m] += part[m] - part[m].mean()
        bands.append(band)

    sources = rng.integers(0, spec.n_informative_bands, size=spec.n_redundant_bands)
    for src in sources:
        gain = rng.uniform(0.8, 1.2)
        bands.append(gain * bands[src] + rng.standard_normal((h, w)) * 0.1 * sigma)

    for _ in range(spec.n_noise_bands):
        base = rng.uniform(10.0, 20.0) * unit
        spread = rng.uniform(1.0, 2.0) * unit * (k if not spec.texture_mode else 1.0)
        bands.append(base + spread * rng.standard_normal((h, w)))

    n_inf, n_red = spec.n_informative_bands, spec.n_redundant_bands
    total = len(bands)
    order = rng.permutation(total) if spec.shuffle_bands else np.arange(total)
    # position[i] = where original band i ends up
    position = np.empty(total, dtype=int)
    position[order] = np.arange(total)
    cube = HyperCube(np.stack([bands[i] for i in order]))
    return SyntheticScene(
        cube=cube,
        gt=GroundTruth(labels, n_classes=k),
        informative=tuple(sorted(int(position[i]) for i in range(n_inf))),
        redundant=tuple(int(position[n_inf + i]) for i in range(n_red)),
        noise=tuple(sorted(int(position[i]) for i in range(n_inf + n_red, total))),
        redundant_source=tuple(int(position[s]) for s in sources),
    )


# ---------------------------------------------------------------------------
# splits


def split_train_test(gt: GroundTruth, fraction: float = 0.5, seed: int = 0) -> SplitMask:
    """Stratified per-class split of the labeled pixels.

    Each class contributes ``round_half_up(fraction * n)`` training pixels,
    clamped to ``[1, n - 1]`` so both sides are non-empty. A class with a
    single pixel puts it in train and records a warning.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    rng = make_rng(seed)
    flat = gt.labels.ravel()
    train = np.zeros(flat.size, dtype=bool)
    test = np.zeros(flat.size, dtype=bool)
    warnings = []
    for c in range(1, gt.n_classes + 1):
        idx = np.flatnonzero(flat == c)
        n = idx.size
        if n == 0:
            continue
        n_train = math.floor(fraction * n + 0.5)
        if n >= 2:
            n_train = min(max(n_train, 1), n - 1)
        else:
            n_train = 1
            warnings.append(f"class {c} has a single pixel; it is used for training only")
            logger.warning(warnings[-1])
        chosen = idx[rng.permutation(n)[:n_train]]
        train[chosen] = True
        test[np.setdiff1d(idx, chosen)] = True
    shape = gt.labels.shape
    return SplitMask(train.reshape(shape), test.reshape(shape), tuple(warnings))
