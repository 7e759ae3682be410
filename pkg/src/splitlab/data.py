"""Dataset loading, synthesis, splitting, and batching for ECG-style signals.

CSV schema: UTF-8, comma separated, no header; each row is
``label,v0,v1,...`` with exactly channels*length values after the integer
label. The synthetic generator produces five separable heartbeat-like
classes so the whole pipeline can run without restricted medical data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ParameterError
from .util import derive_rng


@dataclass(frozen=True)
class Profile:
    name: str
    channels: int
    length: int
    classes: int
    class_names: tuple[str, ...]

    @property
    def row_width(self) -> int:
        return 1 + self.channels * self.length


PROFILES = {
    "mitbih": Profile("mitbih", 1, 128, 5, ("N", "L", "R", "A", "V")),
    "ptbxl": Profile("ptbxl", 12, 1000, 5, ("NORM", "MI", "STTC", "CD", "HYP")),
}


def get_profile(name: str) -> Profile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ParameterError(f"unknown dataset profile {name!r} (have {sorted(PROFILES)})") from None


@dataclass
class Dataset:
    samples: np.ndarray  # [count, channels, length] float64
    labels: np.ndarray  # [count] int64 in [0, classes)
    class_names: tuple[str, ...]

    def __post_init__(self):
        if self.samples.ndim != 3 or len(self.labels) != len(self.samples):
            raise ParameterError("samples must be [count, channels, length] aligned with labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ParameterError("labels outside the class range")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


def load_csv(path, profile: Profile) -> Dataset:
    """Parse and validate a CSV export; bad rows fail with their row index."""
    width = profile.row_width
    samples = []
    labels = []
    with open(path) as fh:
        for row_idx, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != width:
                raise FormatError(
                    f"row {row_idx}: expected {width} columns "
                    f"(label + {profile.channels}x{profile.length}), found {len(parts)}"
                )
            try:
                values = np.array(parts, dtype=np.float64)
            except ValueError as exc:
                raise FormatError(f"row {row_idx}: {exc}") from None
            if not np.isfinite(values).all():
                raise FormatError(f"row {row_idx}: non-finite value")
            label = values[0]
            if label != int(label) or not 0 <= label < profile.classes:
                raise FormatError(f"row {row_idx}: label {label} outside 0..{profile.classes - 1}")
            labels.append(int(label))
            samples.append(values[1:].reshape(profile.channels, profile.length))
    return Dataset(
        samples=np.array(samples).reshape(-1, profile.channels, profile.length),
        labels=np.array(labels, dtype=np.int64),
        class_names=profile.class_names,
    )


def save_csv(path, ds: Dataset) -> None:
    with open(path, "w") as fh:
        for x, y in zip(ds.samples, ds.labels):
            flat = ",".join(format(v, ".17g") for v in x.ravel())
            fh.write(f"{int(y)},{flat}\n")


# --- synthetic generator ---------------------------------------------------------

# per class: list of (center, width, amplitude) bumps, in fractions of length
_CLASS_BUMPS = (
    ((0.28, 0.020, 0.25), (0.45, 0.018, 1.30), (0.65, 0.050, 0.35)),
    ((0.45, 0.060, -1.10), (0.70, 0.050, 0.50)),
    ((0.20, 0.015, 0.30), (0.58, 0.012, 1.70)),
    ((0.15, 0.020, 0.45), (0.32, 0.022, 1.10), (0.78, 0.035, -0.45)),
    ((0.50, 0.120, 0.95), (0.78, 0.030, -0.70)),
)


def _waveform(profile: Profile, label: int, rng: np.random.Generator) -> np.ndarray:
    t = np.linspace(0.0, 1.0, profile.length)
    out = np.empty((profile.channels, profile.length))
    jitter = rng.uniform(-0.015, 0.015)
    amp_scale = rng.uniform(0.9, 1.1)
    drift = 0.05 * np.sin(2 * np.pi * (t + rng.uniform(0, 1)))
    for c in range(profile.channels):
        lead_gain = 1.0 if profile.channels == 1 else 0.5 + 0.5 * np.cos(2 * np.pi * c / profile.channels)
        wave = drift.copy()
        for center, width, amp in _CLASS_BUMPS[label % len(_CLASS_BUMPS)]:
            wave += amp * amp_scale * lead_gain * np.exp(
                -0.5 * ((t - center - jitter) / width) ** 2
            )
        out[c] = wave + rng.normal(0.0, 0.05, profile.length)
    return out


def synth_ecg(count: int, profile: Profile, seed: int) -> Dataset:
    """Deterministic five-class synthetic set, balanced to within one sample."""
    if count < 1:
        raise ParameterError("count must be positive")
    rng = derive_rng(seed, "synth", profile.name)
    labels = np.arange(count, dtype=np.int64) % profile.classes
    rng.shuffle(labels)
    samples = np.stack([_waveform(profile, int(y), rng) for y in labels])
    return Dataset(samples=samples, labels=labels, class_names=profile.class_names)


# --- splitting and batching ---------------------------------------------------------


def split_train_test(ds: Dataset, ratio: float, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint, exhaustive shuffle split; ``ratio`` is the train fraction."""
    if not 0.0 < ratio < 1.0:
        raise ParameterError("split ratio must be in (0, 1)")
    perm = derive_rng(seed, "split").permutation(len(ds))
    n_train = round(len(ds) * ratio)
    tr, te = perm[:n_train], perm[n_train:]
    return (
        Dataset(ds.samples[tr], ds.labels[tr], ds.class_names),
        Dataset(ds.samples[te], ds.labels[te], ds.class_names),
    )


@dataclass
class BatchIterator:
    """Reshuffling batch source; epoch e reshuffles with stream (seed, e)."""

    dataset: Dataset
    batch_size: int
    seed: int
    drop_last: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ParameterError("batch size must be positive")

    @property
    def num_batches(self) -> int:
        full, rem = divmod(len(self.dataset), self.batch_size)
        return full if (self.drop_last or rem == 0) else full + 1

    def epoch(self, epoch_index: int):
        order = derive_rng(self.seed, "batches", epoch_index).permutation(len(self.dataset))
        n = self.batch_size
        limit = self.num_batches * n if self.drop_last else len(self.dataset)
        for start in range(0, limit, n):
            idx = order[start : start + n]
            yield self.dataset.samples[idx], self.dataset.labels[idx]


def batches(ds: Dataset, batch_size: int, seed: int, drop_last: bool = True) -> BatchIterator:
    return BatchIterator(dataset=ds, batch_size=batch_size, seed=seed, drop_last=drop_last)
