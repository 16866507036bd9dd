"""Datasets in, models and images out."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import FormatError, ShapeError
from .generation import GmmModel
from .kernels import CenteringStats, KernelSpec, center_gram, kernel_matrix
from .subspace import LatentModel, ViewConfig

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
MAGIC = b"GRKM"
FORMAT_VERSION = 1


@dataclass
class Dataset:
    views: dict[str, np.ndarray]
    labels: np.ndarray | None = None   # integer class per sample, when known
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.views:
            raise ShapeError("a dataset needs at least one view")
        fixed = {}
        n = None
        for name, X in self.views.items():
            X = np.asarray(X, dtype=np.float64)
            if X.ndim == 1:
                X = X[:, None]
            if X.ndim != 2:
                raise ShapeError(f"view {name!r} must be 2-D, got {X.shape}")
            if n is None:
                n = X.shape[0]
            if X.shape[0] != n:
                raise ShapeError(f"view {name!r} has {X.shape[0]} samples, expected {n}")
            if not np.all(np.isfinite(X)):
                raise ValueError(f"view {name!r} contains non-finite values")
            fixed[name] = X
        self.views = fixed

    @property
    def n(self) -> int:
        return next(iter(self.views.values())).shape[0]

    @property
    def dims(self) -> list[int]:
        return [X.shape[1] for X in self.views.values()]

    def subset(self, count: int) -> "Dataset":
        """First ``count`` samples."""
        if not 1 <= count <= self.n:
            raise ValueError(f"subset size must be in [1, {self.n}], got {count}")
        labels = None if self.labels is None else self.labels[:count]
        return Dataset({k: v[:count] for k, v in self.views.items()}, labels, dict(self.meta))


def one_hot(labels, num_classes: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ShapeError("labels must be a 1-D array")
    if y.size and (not np.issubdtype(y.dtype, np.integer) and not np.all(y == np.round(y))):
        raise ValueError("labels must be integers")
    y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes}), got range [{y.min()}, {y.max()}]")
    out = np.zeros((y.shape[0], num_classes))
    out[np.arange(y.shape[0]), y] = 1.0
    return out


TOY_MEANS = ((0.0, 1.5), (-1.3, -0.75), (1.3, -0.75))
TOY_STD = 0.3


def generate_toy_gaussians(means=TOY_MEANS, count: int = 100, stddev: float = TOY_STD,
                           seed: int = 0) -> Dataset:
    """Isotropic Gaussian blobs, ``count`` points per mode, with a one-hot
    label view. Samples are ordered mode by mode."""
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    if means.shape[0] < 1:
        raise ValueError("need at least one mode")
    if count < 1 or stddev < 0:
        raise ValueError("count must be >= 1 and stddev >= 0")
    rng = np.random.default_rng(seed)
    k, d = means.shape
    X = np.concatenate([mu + stddev * rng.standard_normal((count, d)) for mu in means])
    labels = np.repeat(np.arange(k), count)
    return Dataset({"x": X, "label": one_hot(labels, k)}, labels,
                   {"means": means.tolist(), "stddev": stddev, "seed": seed})


def load_csv(path, has_header: bool = False) -> np.ndarray:
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        for lineno, row in enumerate(reader, 1):
            if has_header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
    if not rows:
        raise FormatError(f"{path}: no data rows")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise FormatError(f"{path}: ragged rows ({len(r)} cells in data row {i + 1}, expected {width})")
    X = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise FormatError(f"{path}: non-finite value")
    return X


def write_csv(path, X, header: str | None = None, comments=()) -> None:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    with open(path, "w", newline="") as f:
        for c in comments:
            f.write(f"# {c}\n")
        if header:
            f.write(header + "\n")
        for row in X:
            f.write(",".join(repr(float(v)) for v in row) + "\n")


def load_idx(path) -> np.ndarray:
    """IDX image file -> (N, rows*cols) floats in [0, 1]; label file -> int array."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated IDX header")
    magic, count = struct.unpack(">II", raw[:8])
    if magic == IDX_LABELS:
        payload = raw[8:]
        if len(payload) < count:
            raise FormatError(f"{path}: truncated payload ({len(payload)} of {count} labels)")
        return np.frombuffer(payload, dtype=np.uint8, count=count).astype(np.int64)
    if magic == IDX_IMAGES:
        if len(raw) < 16:
            raise FormatError(f"{path}: truncated IDX header")
        rows, cols = struct.unpack(">II", raw[8:16])
        size = count * rows * cols
        payload = raw[16:]
        if len(payload) < size:
            raise FormatError(f"{path}: truncated payload ({len(payload)} of {size} bytes)")
        pix = np.frombuffer(payload, dtype=np.uint8, count=size).reshape(count, rows * cols)
        return pix.astype(np.float64) / 255.0
    raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}")


def idx_image_shape(path) -> tuple[int, int]:
    with open(path, "rb") as f:
        head = f.read(16)
    if len(head) < 16 or struct.unpack(">I", head[:4])[0] != IDX_IMAGES:
        raise FormatError(f"{path}: not an IDX image file")
    return struct.unpack(">II", head[8:16])


def write_idx_images(path, images) -> None:
    """Inverse of :func:`load_idx` for (N, rows, cols) uint8 arrays."""
    images = np.asarray(images, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES, *images.shape))
        f.write(images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS, labels.shape[0]))
        f.write(labels.tobytes())


# -- images ------------------------------------------------------------------

def image_grid(images, shape, cols: int) -> np.ndarray:
    """Tile (M, h*w) or (M, h*w*3) rows into one array, one pixel padding."""
    images = np.asarray(images, dtype=np.float64)
    h, w = shape[:2]
    ch = shape[2] if len(shape) > 2 else 1
    m = images.shape[0]
    cols = max(1, min(cols, m))
    rows = -(-m // cols)
    grid = np.zeros((rows * (h + 1) + 1, cols * (w + 1) + 1, ch))
    for i in range(m):
        r, c = divmod(i, cols)
        grid[1 + r * (h + 1):1 + r * (h + 1) + h, 1 + c * (w + 1):1 + c * (w + 1) + w] = \
            images[i].reshape(h, w, ch)
    return grid if ch > 1 else grid[:, :, 0]


def write_pnm(path, image, comment: str | None = None) -> None:
    """Plain (ASCII) PGM for 2-D arrays, PPM for (h, w, 3); values in [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    color = img.ndim == 3
    if not (img.ndim == 2 or (color and img.shape[2] == 3)):
        raise ShapeError(f"cannot write image of shape {img.shape}")
    levels = np.rint(np.clip(img, 0.0, 1.0) * 255).astype(int)
    out = io.StringIO()
    out.write("P3\n" if color else "P2\n")
    if comment:
        out.write(f"# {comment}\n")
    out.write(f"{img.shape[1]} {img.shape[0]}\n255\n")
    for row in levels:
        out.write(" ".join(str(v) for v in row.ravel()) + "\n")
    with open(path, "w") as f:
        f.write(out.getvalue())


# -- model container ---------------------------------------------------------
#
# "GRKM" | u32 version | u32 header length | JSON header (utf-8)
# then per array: u64 element count | little-endian f64 data
# then the sha256 of everything before it.

@dataclass
class ModelFile:
    model: LatentModel
    config: dict = field(default_factory=dict)
    gmm: GmmModel | None = None


def _net_meta(p: nn.FeatureMapParams | None):
    if p is None:
        return None
    return [[L.in_dim, L.out_dim, L.activation, L.alpha] for L in p.layers]


def save_model(path, mf: ModelFile) -> None:
    m = mf.model
    arrays: list[tuple[str, np.ndarray]] = [("H", m.H), ("Lambda", m.Lambda)]
    views = []
    for i, v in enumerate(m.views):
        views.append({
            "name": v.name, "eta": v.eta,
            "kernel": None if v.kernel is None else [v.kernel.kind, v.kernel.sigma],
            "feature_map": _net_meta(v.feature_map),
            "preimage_map": _net_meta(v.preimage_map),
        })
        for tag, net in (("fm", v.feature_map), ("pm", v.preimage_map)):
            if net is not None:
                for j, a in enumerate(net.arrays()):
                    arrays.append((f"view{i}.{tag}.{j}", a))
        if m.interconnections[i] is not None:
            arrays.append((f"view{i}.U", m.interconnections[i]))
        if m.feature_means[i] is not None:
            arrays.append((f"view{i}.mean", m.feature_means[i]))
        if m.training_refs is not None:
            arrays.append((f"view{i}.refs", m.training_refs[i]))
    if mf.gmm is not None:
        arrays += [("gmm.weights", mf.gmm.weights), ("gmm.means", mf.gmm.means),
                   ("gmm.variances", mf.gmm.variances)]
    header = {
        "format": "grkm", "centered": m.centered, "config": mf.config, "views": views,
        "arrays": [[name, list(np.shape(a))] for name, a in arrays],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", FORMAT_VERSION, len(head)))
    buf.write(head)
    for _, a in arrays:
        a = np.ascontiguousarray(a, dtype="<f8")
        buf.write(struct.pack("<Q", a.size))
        buf.write(a.tobytes())
    body = buf.getvalue()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(body)
        f.write(hashlib.sha256(body).digest())
    os.replace(tmp, path)


def _read_arrays(body: bytes, offset: int, specs):
    out = {}
    for name, shape in specs:
        if offset + 8 > len(body):
            raise FormatError("truncated model file")
        (count,) = struct.unpack_from("<Q", body, offset)
        offset += 8
        if count != int(np.prod(shape, dtype=np.int64)):
            raise FormatError(f"array {name!r}: size {count} does not match shape {shape}")
        end = offset + 8 * count
        if end > len(body):
            raise FormatError("truncated model file")
        out[name] = np.frombuffer(body[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        offset = end
    if offset != len(body):
        raise FormatError("trailing bytes in model file")
    return out


def _net_from(meta, arrays, prefix):
    if meta is None:
        return None
    layers = [nn.LayerSpec(int(a), int(b), act, float(al)) for a, b, act, al in meta]
    flat = [arrays[f"{prefix}.{j}"] for j in range(2 * len(layers))]
    return nn.FeatureMapParams(layers, flat[0::2], flat[1::2])


def load_model(path) -> ModelFile:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 + 32 or data[:4] != MAGIC:
        raise FormatError(f"{path}: not a GRKM model file")
    body, digest = data[:-32], data[-32:]
    version, head_len = struct.unpack_from("<II", body, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version} (expected {FORMAT_VERSION})")
    if hashlib.sha256(body).digest() != digest:
        raise FormatError(f"{path}: checksum mismatch, file is corrupted")
    try:
        header = json.loads(body[12:12 + head_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header ({exc})") from None
    arrays = _read_arrays(body, 12 + head_len, header["arrays"])

    views, inter, means, refs = [], [], [], []
    for i, vm in enumerate(header["views"]):
        kernel = None if vm["kernel"] is None else KernelSpec(vm["kernel"][0], float(vm["kernel"][1]))
        views.append(ViewConfig(vm["name"], float(vm["eta"]), kernel=kernel,
                                feature_map=_net_from(vm["feature_map"], arrays, f"view{i}.fm"),
                                preimage_map=_net_from(vm["preimage_map"], arrays, f"view{i}.pm")))
        inter.append(arrays.get(f"view{i}.U"))
        means.append(arrays.get(f"view{i}.mean"))
        refs.append(arrays.get(f"view{i}.refs"))
    has_refs = all(r is not None for r in refs) and bool(refs)

    grams = centering = None
    if has_refs and all(v.kernel is not None for v in views):
        # Gram matrices are recomputed rather than stored; the computation is
        # deterministic, so this reproduces the training-time values exactly
        raw = [kernel_matrix(v.kernel, X).gram for v, X in zip(views, refs)]
        centering = [CenteringStats.from_gram(K) for K in raw]
        grams = [center_gram(K) for K in raw] if header["centered"] else raw
    model = LatentModel(H=arrays["H"], Lambda=arrays["Lambda"], views=views, interconnections=inter,
                        training_refs=refs if has_refs else None, centered=header["centered"],
                        grams=grams, centering=centering, feature_means=means)
    gmm = None
    if "gmm.weights" in arrays:
        gmm = GmmModel(arrays["gmm.weights"], arrays["gmm.means"], arrays["gmm.variances"])
    return ModelFile(model, header["config"], gmm)
