"""Synthetic classification data: Gaussian class blobs squashed into [0,1].

Stands in for image datasets at desk scale.  Samples are logical 1x8x8
images stored as flat 64-vectors.  Classes get different blob spreads so
sample difficulty varies, which is what gives trained gates something
input-dependent to key on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SynthDataset", "synth_dataset"]

IMAGE_SHAPE = (1, 8, 8)


@dataclass
class SynthDataset:
    inputs: np.ndarray  # (n, 64) in [0,1]
    labels: np.ndarray  # (n,) int
    seed: int
    classes: int

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def split(self, train_frac: float = 0.75):
        """Deterministic train/held-out index split."""
        n_train = int(round(train_frac * len(self)))
        idx = np.arange(len(self))
        return idx[:n_train], idx[n_train:]


def synth_dataset(seed: int, n: int, classes: int) -> SynthDataset:
    if classes < 2:
        raise ValueError("need at least two classes")
    if n < classes:
        raise ValueError("need at least one sample per class")
    dim = int(np.prod(IMAGE_SHAPE))
    rng = np.random.default_rng(int(seed))
    means = rng.normal(0.0, 1.1, (classes, dim))
    # class c count is floor(n/classes) or ceil(n/classes); classes stay balanced
    counts = [n // classes + (1 if c < n % classes else 0) for c in range(classes)]
    raws = []
    labels = []
    for c in range(classes):
        # Tight blobs: per-pixel spread ~0.1 after squashing.  Wider blobs
        # saturate the hot gate subnets of the toy nets across the data.
        spread = 0.35 + 0.25 * c / max(1, classes - 1)
        raws.append(means[c] + rng.normal(0.0, spread, (counts[c], dim)))
        labels += [c] * counts[c]
    raw = np.concatenate(raws, axis=0)
    labels = np.array(labels, dtype=np.int64)
    order = rng.permutation(n)
    inputs = 1.0 / (1.0 + np.exp(-raw[order]))  # logistic squash, strictly inside (0,1)
    return SynthDataset(inputs=inputs, labels=labels[order], seed=int(seed), classes=classes)
