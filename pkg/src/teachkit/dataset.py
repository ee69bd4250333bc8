"""Labeled feature datasets: manifest I/O, validation, and PCA reduction.

A dataset is a JSON manifest (name, class list, item records) plus a feature
file holding one row per item. Features arrive high-dimensional and are
reduced with plain (unwhitened) PCA before any similarity computation.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BINARY_MAGIC_BYTES = 8  # two little-endian uint32: n_items, n_features


class ManifestError(ValueError):
    """Raised when a dataset manifest fails validation."""


class FeatureFileError(ValueError):
    """Raised when a feature file is malformed or inconsistent with its manifest."""


@dataclass(frozen=True)
class ManifestItem:
    id: str
    class_index: int
    image_uri: str


@dataclass(frozen=True)
class DatasetManifest:
    """Declarative description of a labeled image dataset.

    Invariants are enforced by :func:`validate_manifest`: at least two
    classes, every class populated, class indices in range, unique item ids.
    """

    name: str
    classes: list[str]
    items: list[ManifestItem]
    feature_file: str
    feature_dim: int

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def n_items(self) -> int:
        return len(self.items)

    def class_counts(self) -> np.ndarray:
        counts = np.zeros(self.n_classes, dtype=int)
        for item in self.items:
            counts[item.class_index] += 1
        return counts


def validate_manifest(manifest: DatasetManifest) -> None:
    if manifest.n_classes < 2:
        raise ManifestError(
            f"classes: need at least 2 classes, got {manifest.n_classes}"
        )
    if manifest.n_items == 0:
        raise ManifestError("items: manifest contains no items")
    if manifest.feature_dim < 1:
        raise ManifestError(f"feature_dim: must be positive, got {manifest.feature_dim}")
    seen: set[str] = set()
    for item in manifest.items:
        if item.id in seen:
            raise ManifestError(f"items: duplicate id {item.id!r}")
        seen.add(item.id)
        if not 0 <= item.class_index < manifest.n_classes:
            raise ManifestError(
                f"items: class index out of range for id {item.id!r} "
                f"({item.class_index} with {manifest.n_classes} classes)"
            )
    counts = manifest.class_counts()
    for c, count in enumerate(counts):
        if count == 0:
            raise ManifestError(f"classes: empty class {manifest.classes[c]!r}")


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and validate a JSON manifest.

    Raises ManifestError with a diagnostic naming the offending field on any
    validation failure.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"manifest: cannot parse {path}: {exc}") from exc
    for key in ("name", "classes", "items", "feature_file", "feature_dim"):
        if key not in raw:
            raise ManifestError(f"{key}: missing from manifest")
    try:
        items = [
            ManifestItem(
                id=str(entry["id"]),
                class_index=int(entry["class_index"]),
                image_uri=str(entry["image_uri"]),
            )
            for entry in raw["items"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"items: malformed item record ({exc})") from exc
    manifest = DatasetManifest(
        name=str(raw["name"]),
        classes=[str(c) for c in raw["classes"]],
        items=items,
        feature_file=str(raw["feature_file"]),
        feature_dim=int(raw["feature_dim"]),
    )
    validate_manifest(manifest)
    return manifest


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    doc = {
        "name": manifest.name,
        "classes": list(manifest.classes),
        "items": [
            {"id": it.id, "class_index": it.class_index, "image_uri": it.image_uri}
            for it in manifest.items
        ],
        "feature_file": manifest.feature_file,
        "feature_dim": manifest.feature_dim,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_features(manifest: DatasetManifest, base_dir: str | Path | None = None) -> np.ndarray:
    """Load the feature matrix referenced by a manifest.

    The feature file is either the binary format (8-byte header of n_items
    and n_features as little-endian uint32, then float32 rows) or a
    headerless CSV, chosen by extension. Row order must match manifest item
    order; this is a format contract, not something that can be checked here.
    """
    feature_path = Path(manifest.feature_file)
    if base_dir is not None and not feature_path.is_absolute():
        feature_path = Path(base_dir) / feature_path
    if feature_path.suffix.lower() == ".csv":
        features = np.loadtxt(feature_path, delimiter=",", dtype=np.float64, ndmin=2)
    else:
        features = _read_binary_features(feature_path)
    if features.shape[0] != manifest.n_items:
        raise FeatureFileError(
            f"feature_file: {features.shape[0]} rows but manifest lists "
            f"{manifest.n_items} items"
        )
    if features.shape[1] != manifest.feature_dim:
        raise FeatureFileError(
            f"feature_dim: manifest says {manifest.feature_dim}, "
            f"feature file has {features.shape[1]} columns"
        )
    if not np.all(np.isfinite(features)):
        raise FeatureFileError("feature_file: contains non-finite values")
    return features


def _read_binary_features(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < BINARY_MAGIC_BYTES:
        raise FeatureFileError(f"feature_file: {path} too short for header")
    n, m = struct.unpack("<II", raw[:BINARY_MAGIC_BYTES])
    expected = BINARY_MAGIC_BYTES + 4 * n * m
    if len(raw) != expected:
        raise FeatureFileError(
            f"feature_file: {path} has {len(raw)} bytes, header implies {expected}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=BINARY_MAGIC_BYTES)
    return data.reshape(n, m).astype(np.float64)


def save_features(features: np.ndarray, path: str | Path) -> None:
    """Write a feature matrix in the format implied by the path's extension."""
    path = Path(path)
    features = np.asarray(features)
    if features.ndim != 2:
        raise FeatureFileError(f"feature matrix must be 2-D, got shape {features.shape}")
    if path.suffix.lower() == ".csv":
        np.savetxt(path, features, delimiter=",")
        return
    n, m = features.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", n, m))
        fh.write(np.ascontiguousarray(features, dtype="<f4").tobytes())


@dataclass(frozen=True)
class FeatureDataset:
    """In-memory labeled dataset: the pairing of items with feature rows."""

    name: str
    class_names: list[str]
    item_ids: list[str]
    image_uris: list[str]
    labels: np.ndarray  # (N,) int class indices
    features: np.ndarray  # (N, M) float64
    source_dir: Path | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        n = len(self.item_ids)
        if not (len(self.image_uris) == self.labels.shape[0] == self.features.shape[0] == n):
            raise ValueError("item ids, uris, labels, and feature rows must align")

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest, base_dir: str | Path | None = None) -> "FeatureDataset":
        features = load_features(manifest, base_dir)
        return cls(
            name=manifest.name,
            class_names=list(manifest.classes),
            item_ids=[it.id for it in manifest.items],
            image_uris=[it.image_uri for it in manifest.items],
            labels=np.array([it.class_index for it in manifest.items], dtype=int),
            features=features,
            source_dir=Path(base_dir) if base_dir is not None else None,
        )

    def index_of(self, item_id: str) -> int:
        try:
            return self.item_ids.index(item_id)
        except ValueError:
            raise KeyError(f"unknown item id {item_id!r}") from None


@dataclass(frozen=True)
class PcaModel:
    """Linear projection onto the top principal directions.

    Component rows are orthonormal and sign-fixed so that the
    largest-magnitude entry of each row is positive, making fits
    reproducible across runs and BLAS builds.
    """

    mean: np.ndarray  # (M,)
    components: np.ndarray  # (K, M), orthonormal rows
    explained_variance: np.ndarray  # (K,)

    @property
    def target_dim(self) -> int:
        return self.components.shape[0]

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]

    def explained_variance_ratio(self, total_variance: float | None = None) -> np.ndarray:
        total = self.explained_variance.sum() if total_variance is None else total_variance
        return self.explained_variance / total


def fit_pca(features: np.ndarray, target_dim: int) -> PcaModel:
    """Fit plain PCA (no whitening) on all rows of a feature matrix.

    Components are ordered by decreasing explained variance. Deterministic:
    ties in the underlying SVD are resolved by LAPACK and the per-component
    sign is fixed afterwards.
    """
    features = np.asarray(features, dtype=np.float64)
    n, m = features.shape
    if n < 2:
        raise ValueError(f"need at least 2 rows to fit PCA, got {n}")
    if target_dim < 1 or target_dim > min(n, m):
        raise ValueError(
            f"target_dim {target_dim} out of range for {n}x{m} feature matrix"
        )
    mean = features.mean(axis=0)
    centered = features - mean
    # SVD of the centered matrix; right singular vectors are the components.
    _, singular_values, vt = np.linalg.svd(centered, full_matrices=False)
    if singular_values[0] <= 1e-12 * max(n, m):
        raise ValueError("degenerate data: all rows identical")
    components = vt[:target_dim].copy()
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    explained = singular_values[:target_dim] ** 2 / (n - 1)
    return PcaModel(mean=mean, components=components, explained_variance=explained)


def apply_pca(model: PcaModel, features: np.ndarray) -> np.ndarray:
    """Project rows into the PCA subspace: (x - mean) @ components.T."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[None, :]
    if features.shape[1] != model.input_dim:
        raise ValueError(
            f"feature dim {features.shape[1]} does not match PCA input dim {model.input_dim}"
        )
    return (features - model.mean) @ model.components.T


def invert_pca(model: PcaModel, projected: np.ndarray) -> np.ndarray:
    """Map projected rows back to the original space (lossy unless full rank)."""
    projected = np.asarray(projected, dtype=np.float64)
    return projected @ model.components + model.mean


def save_pca(model: PcaModel, path: str | Path) -> None:
    np.savez(
        path,
        mean=model.mean,
        components=model.components,
        explained_variance=model.explained_variance,
    )


def load_pca(path: str | Path) -> PcaModel:
    data = np.load(path)
    return PcaModel(
        mean=data["mean"],
        components=data["components"],
        explained_variance=data["explained_variance"],
    )
