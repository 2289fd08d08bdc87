"""Dataset generation and ingestion.

Covers Two Moons synthesis, IDX (MNIST-family) parsing and writing, binary
class filtering, PCA reduction, and affine scaling of features into the
[0, pi] range the angle embedding expects. Every fitting operation (PCA,
scaler) reads training rows only; test rows are transformed, never peeked at.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

TRAIN, TEST = "train", "test"


class IDXFormatError(ValueError):
    """Raised when an IDX file is malformed (bad magic, truncation, mismatch)."""


@dataclass
class Dataset:
    """Feature matrix with integer labels, per-row split tags and provenance."""

    X: np.ndarray  # (m, d) float
    y: np.ndarray  # (m,) int
    split: np.ndarray  # (m,) of {"train", "test"}
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.X) == len(self.y) == len(self.split)):
            raise ValueError(
                f"row counts disagree: X={len(self.X)}, y={len(self.y)}, split={len(self.split)}"
            )
        if len(self.X) and not np.all(np.isfinite(self.X)):
            raise ValueError("feature matrix contains non-finite values")

    @property
    def n_samples(self) -> int:
        return len(self.X)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def part(self, tag: str) -> tuple[np.ndarray, np.ndarray]:
        mask = self.split == tag
        return self.X[mask], self.y[mask]

    @property
    def train(self) -> tuple[np.ndarray, np.ndarray]:
        return self.part(TRAIN)

    @property
    def test(self) -> tuple[np.ndarray, np.ndarray]:
        return self.part(TEST)


def make_two_moons(n_samples: int, noise_sd: float = 0.1, seed: int = 0) -> Dataset:
    """Interleaved half-circles: upper arc (cos t, sin t) labeled 0, lower arc
    (1 - cos t, 0.5 - sin t) labeled 1, t uniform on [0, pi], plus isotropic
    Gaussian noise of std ``noise_sd``. Balanced within one sample."""
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples, got {n_samples}")
    if noise_sd < 0:
        raise ValueError(f"noise_sd must be nonnegative, got {noise_sd}")
    rng = np.random.default_rng(seed)
    n_upper = (n_samples + 1) // 2
    n_lower = n_samples - n_upper
    t_upper = rng.uniform(0.0, np.pi, size=n_upper)
    t_lower = rng.uniform(0.0, np.pi, size=n_lower)
    upper = np.column_stack([np.cos(t_upper), np.sin(t_upper)])
    lower = np.column_stack([1.0 - np.cos(t_lower), 0.5 - np.sin(t_lower)])
    X = np.vstack([upper, lower])
    if noise_sd > 0:
        X = X + rng.normal(0.0, noise_sd, size=X.shape)
    y = np.concatenate([np.zeros(n_upper, dtype=int), np.ones(n_lower, dtype=int)])
    return Dataset(
        X=X,
        y=y,
        split=np.full(n_samples, TRAIN, dtype=object),
        provenance={"generator": "two_moons", "n_samples": n_samples, "noise_sd": noise_sd, "seed": seed},
    )


def train_test_split(ds: Dataset, test_fraction: float, seed: int) -> Dataset:
    """Stratified seeded split; re-tags every row as train or test."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    split = np.full(ds.n_samples, TRAIN, dtype=object)
    for cls in np.unique(ds.y):
        idx = np.flatnonzero(ds.y == cls)
        idx = rng.permutation(idx)
        n_test = int(round(test_fraction * len(idx)))
        split[idx[:n_test]] = TEST
    provenance = dict(ds.provenance, test_fraction=test_fraction, split_seed=seed)
    return Dataset(X=ds.X.copy(), y=ds.y.copy(), split=split, provenance=provenance)


def _read_exact(f, n_bytes: int, path, what: str) -> bytes:
    buf = f.read(n_bytes)
    if len(buf) != n_bytes:
        raise IDXFormatError(f"{path}: truncated file, needed {n_bytes} bytes for {what}, got {len(buf)}")
    return buf


def _read_be32(f, path, what: str) -> int:
    return struct.unpack(">i", _read_exact(f, 4, path, what))[0]


def load_idx(images_path, labels_path) -> Dataset:
    """Parse an IDX image/label file pair into a flat float matrix in [0, 1]."""
    with open(images_path, "rb") as f:
        magic = _read_be32(f, images_path, "magic")
        if magic != IDX_IMAGES_MAGIC:
            raise IDXFormatError(
                f"{images_path}: bad magic 0x{magic & 0xFFFFFFFF:08x}, expected 0x{IDX_IMAGES_MAGIC:08x} (images)"
            )
        n_images = _read_be32(f, images_path, "image count")
        n_rows = _read_be32(f, images_path, "row count")
        n_cols = _read_be32(f, images_path, "column count")
        raw = _read_exact(f, n_images * n_rows * n_cols, images_path, "pixel data")
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(n_images, n_rows * n_cols)
    with open(labels_path, "rb") as f:
        magic = _read_be32(f, labels_path, "magic")
        if magic != IDX_LABELS_MAGIC:
            raise IDXFormatError(
                f"{labels_path}: bad magic 0x{magic & 0xFFFFFFFF:08x}, expected 0x{IDX_LABELS_MAGIC:08x} (labels)"
            )
        n_labels = _read_be32(f, labels_path, "label count")
        labels = np.frombuffer(_read_exact(f, n_labels, labels_path, "label data"), dtype=np.uint8)
    if n_images != n_labels:
        raise IDXFormatError(
            f"sample count mismatch: {images_path} has {n_images} images, {labels_path} has {n_labels} labels"
        )
    return Dataset(
        X=pixels.astype(float) / 255.0,
        y=labels.astype(int),
        split=np.full(n_images, TRAIN, dtype=object),
        provenance={
            "source_images": str(images_path),
            "source_labels": str(labels_path),
            "image_shape": [n_rows, n_cols],
        },
    )


def write_idx(X: np.ndarray, y: np.ndarray, images_path, labels_path, image_shape=None) -> None:
    """Inverse of :func:`load_idx`: features in [0, 1] back to uint8 pixels."""
    m, d = X.shape
    if image_shape is None:
        image_shape = (1, d)
    n_rows, n_cols = image_shape
    if n_rows * n_cols != d:
        raise ValueError(f"image shape {image_shape} does not match {d} features")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">iiii", IDX_IMAGES_MAGIC, m, n_rows, n_cols))
        f.write(np.rint(np.clip(X, 0.0, 1.0) * 255.0).astype(np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">ii", IDX_LABELS_MAGIC, m))
        f.write(np.asarray(y, dtype=np.uint8).tobytes())


def filter_binary(ds: Dataset, class_a: int, class_b: int, n_train: int, n_test: int, seed: int) -> Dataset:
    """Stratified seeded subsample of two classes, remapped to labels {0, 1}."""
    rng = np.random.default_rng(seed)
    picks = {}
    for cls, new_label in ((class_a, 0), (class_b, 1)):
        idx = np.flatnonzero(ds.y == cls)
        need = (n_train + 1) // 2 + (n_test + 1) // 2 if new_label == 0 else n_train // 2 + n_test // 2
        if len(idx) < need:
            raise ValueError(f"class {cls} has {len(idx)} samples, need {need}")
        picks[new_label] = rng.permutation(idx)
    # class 0 takes the ceil half of odd counts
    n_train_0 = (n_train + 1) // 2
    n_test_0 = (n_test + 1) // 2
    rows, labels, split = [], [], []
    for new_label, idx in picks.items():
        n_tr = n_train_0 if new_label == 0 else n_train - n_train_0
        n_te = n_test_0 if new_label == 0 else n_test - n_test_0
        chosen = idx[: n_tr + n_te]
        rows.append(ds.X[chosen])
        labels.append(np.full(n_tr + n_te, new_label, dtype=int))
        split.extend([TRAIN] * n_tr + [TEST] * n_te)
    provenance = dict(
        ds.provenance,
        classes=[class_a, class_b],
        n_train=n_train,
        n_test=n_test,
        filter_seed=seed,
    )
    return Dataset(
        X=np.vstack(rows),
        y=np.concatenate(labels),
        split=np.array(split, dtype=object),
        provenance=provenance,
    )


def pca_reduce(ds: Dataset, k: int) -> tuple[Dataset, np.ndarray]:
    """Project onto the top-k principal directions of the training rows.

    Components are rows of the returned (k, d) basis, ordered by descending
    singular value, each signed so its largest-magnitude entry is positive.
    """
    X_train, _ = ds.train
    if not 1 <= k <= min(ds.d, len(X_train)):
        raise ValueError(f"k={k} out of range for d={ds.d}, n_train={len(X_train)}")
    mean = X_train.mean(axis=0)
    _, _, vt = np.linalg.svd(X_train - mean, full_matrices=False)
    components = vt[:k]
    flip = np.sign(components[np.arange(k), np.argmax(np.abs(components), axis=1)])
    components = components * flip[:, None]
    projected = (ds.X - mean) @ components.T
    provenance = dict(ds.provenance, pca_k=k)
    return (
        Dataset(X=projected, y=ds.y.copy(), split=ds.split.copy(), provenance=provenance),
        components,
    )


@dataclass
class Scaler:
    """Per-feature affine map sending the training range onto [0, pi].

    Constant features map to pi/2; out-of-range values clip to the boundary.
    """

    lo: np.ndarray
    hi: np.ndarray


def fit_scaler(train_X: np.ndarray) -> Scaler:
    return Scaler(lo=train_X.min(axis=0), hi=train_X.max(axis=0))


def apply_scaler(scaler: Scaler, X: np.ndarray) -> np.ndarray:
    """Transform a (m, d) matrix; values outside the fitted range clip to [0, pi]."""
    span = scaler.hi - scaler.lo
    degenerate = span == 0
    safe_span = np.where(degenerate, 1.0, span)
    out = np.clip((X - scaler.lo) / safe_span, 0.0, 1.0) * np.pi
    out[:, degenerate] = np.pi / 2
    return out


def to_csv(ds: Dataset, path) -> None:
    """Plain CSV with header f0..f{d-1},label."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join([f"f{i}" for i in range(ds.d)] + ["label"]) + "\n")
        for row, label in zip(ds.X, ds.y):
            f.write(",".join([repr(float(v)) for v in row] + [str(int(label))]) + "\n")
