"""Datasets, synthetic generators, grid view extraction, and file formats.

A sample is a tuple of per-view feature vectors with one label. Synthetic
data comes from Gaussian clusters whose class separation lives along the
first feature coordinate; the out-of-distribution generator displaces every
cluster along the second coordinate, so the shift is orthogonal to anything
the classifier can use. CSV is the interchange format for datasets,
whitespace text for 2-d grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class MultiViewSample:
    """One labeled sample: a feature vector per view plus an identifier."""

    views: tuple
    label: int
    id: str

    def __post_init__(self):
        views = []
        for v in self.views:
            arr = np.asarray(v, dtype=float).copy()
            if arr.ndim != 1 or arr.size == 0 or not np.all(np.isfinite(arr)):
                raise ValueError(f"sample {self.id}: views must be finite 1-d vectors")
            arr.flags.writeable = False
            views.append(arr)
        if not views:
            raise ValueError(f"sample {self.id}: needs at least one view")
        label = int(self.label)
        if label < 0:
            raise ValueError(f"sample {self.id}: negative label")
        object.__setattr__(self, "views", tuple(views))
        object.__setattr__(self, "label", label)
        object.__setattr__(self, "id", str(self.id))


@dataclass(frozen=True, eq=False)
class MultiViewDataset:
    """Homogeneous collection of multi-view samples."""

    samples: tuple
    num_classes: int
    view_dims: tuple
    provenance: str = ""

    def __post_init__(self):
        samples = tuple(self.samples)
        if not samples:
            raise ValueError("dataset must not be empty")
        dims = tuple(int(d) for d in self.view_dims)
        if len(dims) == 0 or any(d < 1 for d in dims):
            raise ValueError("view_dims must be positive")
        k = int(self.num_classes)
        if k < 2:
            raise ValueError("need at least two classes")
        for s in samples:
            if len(s.views) != len(dims) or tuple(v.size for v in s.views) != dims:
                raise ValueError(f"sample {s.id}: view shapes do not match {dims}")
            if s.label >= k:
                raise ValueError(f"sample {s.id}: label {s.label} outside [0, {k})")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "num_classes", k)
        object.__setattr__(self, "view_dims", dims)

    @property
    def num_views(self) -> int:
        return len(self.view_dims)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=int)


@dataclass(frozen=True)
class ViewGeometry:
    """Square ROI tiled by a sliding window: roi, window, stride in cells."""

    roi_size: int
    window_size: int
    stride: int

    def __post_init__(self):
        roi, win, stride = int(self.roi_size), int(self.window_size), int(self.stride)
        if win < 1 or stride < 1 or roi < 1:
            raise ValueError("geometry values must be positive")
        if win > roi:
            raise ValueError("window must not exceed the ROI")
        if (roi - win) % stride != 0:
            # Exact tiling only; silently cropping a ragged edge would move
            # the patch grid off the stated geometry.
            raise ValueError("(roi - window) must be divisible by stride")
        object.__setattr__(self, "roi_size", roi)
        object.__setattr__(self, "window_size", win)
        object.__setattr__(self, "stride", stride)

    @property
    def patches_per_side(self) -> int:
        return (self.roi_size - self.window_size) // self.stride + 1


def extract_views(grid, geom: ViewGeometry, center=None, cutout=None):
    """Cut the ROI around `center` out of `grid` and tile it.

    Returns (local patches in row-major order, the full ROI). `center`
    defaults to the grid center. `cutout`, if given, is (row, col, size) in
    ROI-local coordinates; that square is zeroed before extraction.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2:
        raise ValueError("grid must be 2-d")
    rows, cols = grid.shape
    if center is None:
        center = (rows // 2, cols // 2)
    cr, cc = int(center[0]), int(center[1])
    half = geom.roi_size // 2
    top, left = cr - half, cc - half
    if top < 0 or left < 0 or top + geom.roi_size > rows or left + geom.roi_size > cols:
        raise ValueError(
            f"ROI of size {geom.roi_size} centered at ({cr}, {cc}) leaves the grid"
        )
    roi = grid[top : top + geom.roi_size, left : left + geom.roi_size].copy()
    if cutout is not None:
        r, c, size = (int(x) for x in cutout)
        if size < 1 or r < 0 or c < 0 or r + size > geom.roi_size or c + size > geom.roi_size:
            raise ValueError("cutout square leaves the ROI")
        roi[r : r + size, c : c + size] = 0.0
    patches = []
    for i in range(geom.patches_per_side):
        for j in range(geom.patches_per_side):
            r0, c0 = i * geom.stride, j * geom.stride
            patches.append(roi[r0 : r0 + geom.window_size, c0 : c0 + geom.window_size].copy())
    return patches, roi


@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    """Gaussian cluster layout: one mean per (class, view), one shared scale."""

    means: np.ndarray  # shape (classes, views, dim)
    scale: float
    n_per_class: int
    seed: int

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float).copy()
        if means.ndim != 3 or means.shape[0] < 2:
            raise ValueError("means must have shape (classes >= 2, views, dim)")
        if not np.all(np.isfinite(means)):
            raise ValueError("means must be finite")
        if not np.isfinite(self.scale) or self.scale <= 0.0:
            raise ValueError("scale must be positive")
        if int(self.n_per_class) < 1:
            raise ValueError("n_per_class must be positive")
        means.flags.writeable = False
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "n_per_class", int(self.n_per_class))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def num_classes(self) -> int:
        return self.means.shape[0]

    @property
    def num_views(self) -> int:
        return self.means.shape[1]

    @property
    def view_dim(self) -> int:
        return self.means.shape[2]

    @classmethod
    def blobs(
        cls,
        num_classes: int,
        num_views: int,
        view_dim: int,
        separation: float = 3.0,
        scale: float = 1.0,
        n_per_class: int = 100,
        seed: int = 0,
    ) -> "SyntheticSpec":
        """Classes spread along coordinate 0, views mildly unequal in signal."""
        if view_dim < 1 or num_views < 1:
            raise ValueError("need positive view count and dimension")
        offsets = (np.arange(num_classes) - (num_classes - 1) / 2.0) * float(separation)
        means = np.zeros((num_classes, num_views, view_dim))
        view_gain = 1.0 + 0.1 * np.arange(num_views)
        means[:, :, 0] = offsets[:, None] * view_gain[None, :]
        return cls(means, scale, n_per_class, seed)


def gen_synthetic(spec: SyntheticSpec) -> MultiViewDataset:
    """Draw the spec's clusters; a pure function of the spec (seed included)."""
    rng = np.random.default_rng(spec.seed)
    k, v, d = spec.means.shape
    samples = []
    for c in range(k):
        noise = rng.normal(0.0, spec.scale, size=(spec.n_per_class, v, d))
        feats = spec.means[c][None, :, :] + noise
        for i in range(spec.n_per_class):
            samples.append(
                MultiViewSample(tuple(feats[i]), c, f"c{c}n{i:04d}")
            )
    order = rng.permutation(len(samples))
    samples = [samples[i] for i in order]
    return MultiViewDataset(
        tuple(samples),
        num_classes=k,
        view_dims=(d,) * v,
        provenance=f"blobs(seed={spec.seed}, n_per_class={spec.n_per_class}, scale={spec.scale})",
    )


def gen_ood(spec: SyntheticSpec, shift: float) -> MultiViewDataset:
    """Same clusters displaced by `shift` along coordinate 1 of every view.

    Coordinate 1 carries no class signal in specs built by blobs(), so this
    is a pure feature shift: labels keep their meaning, the inputs move.
    `shift` is in feature units (the cluster sd is `spec.scale`).
    """
    if not np.isfinite(shift) or shift < 0.0:
        raise ValueError("shift must be a nonnegative real")
    if spec.view_dim < 2:
        raise ValueError("need view_dim >= 2 for an orthogonal shift direction")
    means = spec.means.copy()
    means[:, :, 1] += shift
    shifted = SyntheticSpec(means, spec.scale, spec.n_per_class, spec.seed)
    ds = gen_synthetic(shifted)
    return MultiViewDataset(
        ds.samples,
        num_classes=ds.num_classes,
        view_dims=ds.view_dims,
        provenance=f"{ds.provenance} | shift({shift})",
    )


def resample_class_ratio(ds: MultiViewDataset, ratio, seed: int) -> MultiViewDataset:
    """Seeded subsample of ds hitting the requested class proportions.

    The subset is as large as the per-class supplies allow; counts match the
    ratio to within rounding and the original sample order is preserved.
    """
    ratio = np.asarray(ratio, dtype=float)
    if ratio.size != ds.num_classes:
        raise ValueError("ratio length must equal the number of classes")
    if np.any(~np.isfinite(ratio)) or np.any(ratio <= 0.0):
        raise ValueError("ratio entries must be strictly positive")
    ratio = ratio / ratio.sum()
    labels = ds.labels()
    counts = np.bincount(labels, minlength=ds.num_classes)
    if np.any(counts == 0):
        raise ValueError("dataset is missing a class entirely")
    total = int(np.min(np.floor(counts / ratio)))
    want = np.round(ratio * total).astype(int)
    while np.any(want > counts) or np.any(want < 1):
        if total < ds.num_classes:
            raise ValueError("not enough samples to honor the requested ratio")
        total -= 1
        want = np.round(ratio * total).astype(int)
    rng = np.random.default_rng(seed)
    keep = []
    for c in range(ds.num_classes):
        idx = np.flatnonzero(labels == c)
        keep.extend(rng.choice(idx, size=want[c], replace=False))
    keep = sorted(int(i) for i in keep)
    return MultiViewDataset(
        tuple(ds.samples[i] for i in keep),
        num_classes=ds.num_classes,
        view_dims=ds.view_dims,
        provenance=f"{ds.provenance} | resampled(ratio={ratio.round(6).tolist()}, seed={seed})",
    )


def _csv_header(view_dims) -> str:
    cols = ["id", "label"]
    for v, dim in enumerate(view_dims):
        cols.extend(f"v{v}_{j}" for j in range(dim))
    return ",".join(cols)


def save_csv(ds: MultiViewDataset, path) -> None:
    """One row per sample: id, label, then view features in view order."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_csv_header(ds.view_dims) + "\n")
        for s in ds.samples:
            fields = [s.id, str(s.label)]
            for view in s.views:
                fields.extend(repr(float(x)) for x in view)
            fh.write(",".join(fields) + "\n")


def load_csv(path, num_classes: int, num_views: int, view_dims) -> MultiViewDataset:
    """Parse a dataset saved by save_csv; errors name the offending line."""
    dims = tuple(int(d) for d in view_dims)
    if len(dims) != num_views:
        raise ValueError("view_dims length must equal num_views")
    expected_header = _csv_header(dims)
    n_fields = 2 + sum(dims)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    if lines[0] != expected_header:
        raise ValueError(f"{path}: line 1: header does not match the declared shape")
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != n_fields:
            raise ValueError(
                f"{path}: line {lineno}: expected {n_fields} fields, got {len(fields)}"
            )
        try:
            label = int(fields[1])
            values = [float(x) for x in fields[2:]]
        except ValueError as exc:
            raise ValueError(f"{path}: line {lineno}: {exc}") from exc
        views = []
        pos = 0
        for dim in dims:
            views.append(np.array(values[pos : pos + dim]))
            pos += dim
        if not 0 <= label < num_classes:
            raise ValueError(f"{path}: line {lineno}: label {label} outside [0, {num_classes})")
        samples.append(MultiViewSample(tuple(views), label, fields[0]))
    if not samples:
        raise ValueError(f"{path}: no sample rows")
    return MultiViewDataset(tuple(samples), num_classes, dims, provenance=str(path))


def save_grid(grid, path) -> None:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2:
        raise ValueError("grid must be 2-d")
    with open(path, "w", encoding="utf-8") as fh:
        for row in grid:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def load_grid(path) -> np.ndarray:
    """Whitespace-separated 2-d grid, one row per line."""
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = [float(x) for x in line.split()]
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ValueError(f"{path}: line {lineno}: ragged row")
            rows.append(row)
    if not rows:
        raise ValueError(f"{path}: empty grid")
    return np.array(rows, dtype=float)
