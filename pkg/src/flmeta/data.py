"""Datasets: CIFAR-10 binary batches, a synthetic generator, and the
label-skewed client partitioner.

CIFAR-10 binary layout (one record): 1 label byte in 0..9, then 3072 pixel
bytes (1024 red, 1024 green, 1024 blue, rows within a plane in row-major
order). A batch file holds exactly 10000 records, 30730000 bytes. Pixels
are scaled to [0, 1] as v / 255 on load; encoding reverses that exactly,
so load -> encode round-trips byte for byte.
"""

import os
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, FormatError, ShapeError

RECORD_BYTES = 3073
RECORDS_PER_FILE = 10000
FILE_BYTES = RECORD_BYTES * RECORDS_PER_FILE
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILE = "test_batch.bin"
_CIFAR_CLASSES = 10
_CIFAR_SHAPE = (3, 32, 32)


@dataclass
class LabeledDataset:
    """Images (n, c, h, w) with values in [0, 1] and int labels in [0, num_classes)."""

    images: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ShapeError(f"images must be (n, c, h, w), got ndim={self.images.ndim}")
        if self.labels.ndim != 1 or len(self.labels) != len(self.images):
            raise ShapeError("labels must be 1-D and match the image count")
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise ShapeError(f"labels must be integers, got {self.labels.dtype}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if len(self.labels):
            lo, hi = int(self.labels.min()), int(self.labels.max())
            if lo < 0 or hi >= self.num_classes:
                raise ShapeError(f"labels must lie in [0, {self.num_classes}), found [{lo}, {hi}]")
            vmin, vmax = float(self.images.min()), float(self.images.max())
            if vmin < 0.0 or vmax > 1.0:
                raise ShapeError(f"image values must lie in [0, 1], found [{vmin}, {vmax}]")

    def __len__(self):
        return len(self.images)

    def subset(self, indices):
        return LabeledDataset(self.images[indices], self.labels[indices], self.num_classes)

    def indices_by_class(self):
        return [np.flatnonzero(self.labels == c) for c in range(self.num_classes)]


def decode_records(buf, origin="<bytes>", dtype=np.float64):
    """Parse raw CIFAR-10 record bytes into (images, labels)."""
    if len(buf) == 0 or len(buf) % RECORD_BYTES != 0:
        raise FormatError(
            f"{origin}: length {len(buf)} is not a whole number of {RECORD_BYTES}-byte "
            f"records (last complete record ends at byte offset {len(buf) - len(buf) % RECORD_BYTES})"
        )
    raw = np.frombuffer(buf, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = raw[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels >= _CIFAR_CLASSES)
    if bad.size:
        i = int(bad[0])
        raise FormatError(
            f"{origin}: label byte {labels[i]} out of range at record {i} "
            f"(byte offset {i * RECORD_BYTES})"
        )
    images = raw[:, 1:].reshape(-1, *_CIFAR_SHAPE).astype(dtype) / 255
    return images, labels


def encode_records(images, labels):
    """Serialize (images, labels) back to CIFAR-10 record bytes."""
    if images.ndim != 4 or images.shape[1:] != _CIFAR_SHAPE:
        raise ShapeError(f"images must be (n, 3, 32, 32), got {images.shape}")
    px = np.round(np.asarray(images) * 255).astype(np.uint8)
    rec = np.empty((len(images), RECORD_BYTES), dtype=np.uint8)
    rec[:, 0] = np.asarray(labels, dtype=np.uint8)
    rec[:, 1:] = px.reshape(len(images), -1)
    return rec.tobytes()


def _read_batch_file(path, dtype):
    if not os.path.exists(path):
        raise FormatError(f"{path}: missing CIFAR-10 batch file")
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) != FILE_BYTES:
        raise FormatError(
            f"{path}: expected {FILE_BYTES} bytes, found {len(buf)} "
            f"(truncated at byte offset {min(len(buf), FILE_BYTES)})"
        )
    return decode_records(buf, origin=path, dtype=dtype)


def load_cifar10(dir_path, dtype=np.float64):
    """Load the six binary batch files. Returns (train 50000, test 10000)."""
    parts = [_read_batch_file(os.path.join(dir_path, name), dtype) for name in TRAIN_FILES]
    train = LabeledDataset(
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        _CIFAR_CLASSES,
    )
    ti, tl = _read_batch_file(os.path.join(dir_path, TEST_FILE), dtype)
    return train, LabeledDataset(ti, tl, _CIFAR_CLASSES)


def write_records(path, images, labels):
    """Dump a dataset slice in the CIFAR-10 record layout."""
    with open(path, "wb") as f:
        f.write(encode_records(images, labels))


def class_templates(num_classes, shape, seed):
    """Per-class smooth patterns, values inside [0.1, 0.9].

    Each (class, channel) plane is a sum of two seeded sinusoidal gratings,
    which keeps classes well separated while leaving headroom for additive
    noise before the [0, 1] clamp bites.
    """
    c, h, w = shape
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    yy, xx = np.meshgrid(np.arange(h) / h, np.arange(w) / w, indexing="ij")
    t = np.empty((num_classes, c, h, w))
    for k in range(num_classes):
        for ch in range(c):
            fy1, fx1, fy2, fx2 = rng.uniform(0.5, 3.5, size=4)
            p1, p2 = rng.uniform(0.0, 2.0 * np.pi, size=2)
            plane = 0.25 * np.sin(2 * np.pi * (fx1 * xx + fy1 * yy) + p1)
            plane += 0.15 * np.sin(2 * np.pi * (fx2 * xx - fy2 * yy) + p2)
            t[k, ch] = 0.5 + plane
    return t


def gen_synthetic(num_classes, n_per_class, shape, noise_sigma=0.05, seed=0, dtype=np.float64):
    """Seeded synthetic dataset: class template plus Gaussian noise, clamped.

    Samples are laid out in class blocks (all of class 0, then class 1, ...).
    Templates depend only on (num_classes, shape, seed), so two calls with
    the same seed and different n_per_class share class identities.
    """
    if num_classes < 2:
        raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
    if n_per_class < 1:
        raise ConfigError(f"n_per_class must be >= 1, got {n_per_class}")
    if noise_sigma < 0:
        raise ConfigError(f"noise_sigma must be >= 0, got {noise_sigma}")
    templates = class_templates(num_classes, shape, seed)
    noise_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    images = np.repeat(templates, n_per_class, axis=0)
    images += noise_rng.normal(0.0, noise_sigma, size=images.shape)
    np.clip(images, 0.0, 1.0, out=images)
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), n_per_class)
    return LabeledDataset(images.astype(dtype, copy=False), labels, num_classes)


def synthetic_train_test(num_classes, train_per_class, test_per_class, shape,
                         noise_sigma=0.05, seed=0, dtype=np.float64):
    """One generator call split per class into a train and a held-out set."""
    total = train_per_class + test_per_class
    full = gen_synthetic(num_classes, total, shape, noise_sigma, seed, dtype)
    tr, te = [], []
    for k in range(num_classes):
        block = np.arange(k * total, (k + 1) * total)
        tr.append(block[:train_per_class])
        te.append(block[train_per_class:])
    return full.subset(np.concatenate(tr)), full.subset(np.concatenate(te))


@dataclass
class PartitionPlan:
    """Client index assignments produced by partition_noniid."""

    num_clients: int
    classes_per_client: int
    samples_per_client: int
    seed: int
    client_classes: list
    client_indices: list

    def shortfall(self, client_id):
        return self.samples_per_client - len(self.client_indices[client_id])

    def to_json_dict(self):
        return {
            "num_clients": self.num_clients,
            "classes_per_client": self.classes_per_client,
            "samples_per_client": self.samples_per_client,
            "seed": self.seed,
            "clients": [
                {
                    "id": k,
                    "classes": [int(c) for c in self.client_classes[k]],
                    "size": int(len(self.client_indices[k])),
                    "indices": [int(i) for i in self.client_indices[k]],
                }
                for k in range(self.num_clients)
            ],
        }


def _fit_quotas(quotas, supply, target):
    """Cap quotas at supply, then round-robin the deficit onto spare classes."""
    quotas = [min(q, s) for q, s in zip(quotas, supply)]
    feasible = min(target, sum(supply))
    progress = True
    while sum(quotas) < feasible and progress:
        progress = False
        for i in range(len(quotas)):
            if sum(quotas) >= feasible:
                break
            if quotas[i] < supply[i]:
                quotas[i] += 1
                progress = True
    return quotas


def partition_noniid(dataset, num_clients, classes_per_client, samples_per_client, seed):
    """Label-skewed split: each client samples from a few random classes.

    Per client, `classes_per_client` distinct classes are drawn uniformly,
    then `samples_per_client` indices are drawn without replacement within
    the client, split as evenly across its classes as supply allows (spill
    goes to the client's other classes; a global shortfall is recorded in
    the plan). Different clients may share classes and even samples.
    """
    if num_clients < 1:
        raise ConfigError(f"num_clients must be >= 1, got {num_clients}")
    if not 1 <= classes_per_client <= dataset.num_classes:
        raise ConfigError(
            f"classes_per_client must be in [1, {dataset.num_classes}], got {classes_per_client}"
        )
    if samples_per_client < 1:
        raise ConfigError(f"samples_per_client must be >= 1, got {samples_per_client}")
    rng = np.random.default_rng(seed)
    by_class = dataset.indices_by_class()
    client_classes, client_indices = [], []
    for _ in range(num_clients):
        cls = np.sort(rng.choice(dataset.num_classes, size=classes_per_client, replace=False))
        base, rem = divmod(samples_per_client, classes_per_client)
        quotas = [base + (1 if i < rem else 0) for i in range(classes_per_client)]
        supply = [len(by_class[c]) for c in cls]
        quotas = _fit_quotas(quotas, supply, samples_per_client)
        parts = [rng.choice(by_class[c], size=q, replace=False) for c, q in zip(cls, quotas)]
        client_classes.append([int(c) for c in cls])
        client_indices.append(np.concatenate(parts).astype(np.int64))
    return PartitionPlan(num_clients, classes_per_client, samples_per_client, int(seed),
                         client_classes, client_indices)
