"""Per-class interpolation generators for pseudo replay.

A fitted generator keeps a memory of flattened windows of one class. New
samples are drawn on the segments between a stored vector and one of its k
nearest same-class neighbours (Euclidean, self excluded, distance ties broken
by lower index): s = x_j + u * (x_l - x_j) with u uniform on [0, 1]. Every
output therefore stays inside the per-feature envelope of the memory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import SYNTHETIC_TRIAL_ID, WindowedSample
from .errors import ConfigurationError, DataFormatError
from .seeding import derive_seed


@dataclass(eq=False)
class ClassGenerator:
    class_id: int
    memory: np.ndarray  # [M, D] flattened windows
    k: int
    rng_seed: int
    feature_shape: tuple[int, int]
    neighbors: np.ndarray = field(init=False, repr=False)  # [M, k_eff]

    def __post_init__(self):
        self.memory = np.asarray(self.memory, dtype=float)
        if self.memory.ndim != 2 or self.memory.shape[0] < 2:
            raise ConfigurationError("generator memory must be [M >= 2, D]")
        if not np.all(np.isfinite(self.memory)):
            raise DataFormatError(f"class {self.class_id}: non-finite memory")
        if self.k < 1:
            raise ConfigurationError(f"k must be >= 1, got {self.k}")
        w, c = self.feature_shape
        if w * c != self.memory.shape[1]:
            raise ConfigurationError(
                f"feature_shape {self.feature_shape} does not match memory width {self.memory.shape[1]}"
            )
        self.feature_shape = (int(w), int(c))
        self.neighbors = _neighbor_table(self.memory, self.k)

    @property
    def memory_size(self) -> int:
        return self.memory.shape[0]

    @property
    def k_effective(self) -> int:
        return self.neighbors.shape[1]


@dataclass(frozen=True)
class GenerationRequest:
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ConfigurationError(f"count must be >= 1, got {self.count}")


def _neighbor_table(memory: np.ndarray, k: int) -> np.ndarray:
    """k_eff = min(k, M - 1) nearest indices per row, ties to lower index."""
    m = memory.shape[0]
    k_eff = min(k, m - 1)
    d2 = np.empty((m, m))
    # direct squared differences; chunked to bound the [chunk, M, D] temporary
    step = max(1, int(4e6 // max(1, m * memory.shape[1])))
    for lo in range(0, m, step):
        hi = min(m, lo + step)
        diff = memory[lo:hi, None, :] - memory[None, :, :]
        d2[lo:hi] = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k_eff]


def fit_generator(
    class_id: int,
    samples: list[WindowedSample],
    k: int = 5,
    memory_budget: int | None = None,
    seed: int = 0,
) -> ClassGenerator:
    """Store (a uniform random subset of) one class's windows.

    memory_budget None keeps everything; a budget below the sample count keeps
    a seeded uniform subset in original index order.
    """
    if len(samples) < 2:
        raise DataFormatError(
            f"class {class_id}: need at least 2 samples to fit a generator, got {len(samples)}"
        )
    for s in samples:
        if s.class_id != class_id:
            raise DataFormatError(
                f"sample of class {s.class_id} passed to generator for class {class_id}"
            )
    shape = samples[0].features.shape
    for s in samples:
        if s.features.shape != shape:
            raise DataFormatError("samples disagree on window shape")
    if memory_budget is not None and memory_budget < 2:
        raise ConfigurationError(f"memory_budget must be >= 2, got {memory_budget}")

    vectors = np.stack([s.flat for s in samples])
    if memory_budget is not None and memory_budget < len(samples):
        rng = np.random.default_rng(derive_seed(seed, "subsample", class_id))
        keep = np.sort(rng.choice(len(samples), size=memory_budget, replace=False))
        vectors = vectors[keep]
    return ClassGenerator(
        class_id=class_id,
        memory=vectors,
        k=k,
        rng_seed=seed,
        feature_shape=(int(shape[0]), int(shape[1])),
    )


def nearest_neighbors(gen: ClassGenerator, index: int) -> list[int]:
    """Stored neighbour indices of memory[index], nearest first."""
    if not 0 <= index < gen.memory_size:
        raise ConfigurationError(
            f"index {index} out of range for memory of size {gen.memory_size}"
        )
    return [int(i) for i in gen.neighbors[index]]


def generate(
    gen: ClassGenerator, request: GenerationRequest, seed: int | None = None
) -> list[WindowedSample]:
    """Draw exactly request.count samples, deterministic in (memory, k, seed).

    The count is split across stored samples: floor(S / M) each, with the
    first S mod M samples (index order) taking one extra. A sample with quota
    q <= k_eff draws one candidate per neighbour segment (fresh u each) and
    keeps a uniform subset of q; with q > k_eff every draw picks a segment
    uniformly with replacement and a fresh u.
    """
    rng = np.random.default_rng(gen.rng_seed if seed is None else seed)
    mem = gen.memory
    m = gen.memory_size
    k_eff = gen.k_effective
    s_total = request.count
    base, extra = divmod(s_total, m)

    out: list[WindowedSample] = []
    draw_index = 0
    for j in range(m):
        quota = base + (1 if j < extra else 0)
        if quota == 0:
            continue
        nbr = gen.neighbors[j]
        if quota <= k_eff:
            u = rng.uniform(size=k_eff)
            candidates = mem[j] + u[:, None] * (mem[nbr] - mem[j])
            pick = np.sort(rng.choice(k_eff, size=quota, replace=False))
            rows = candidates[pick]
        else:
            segments = rng.integers(0, k_eff, size=quota)
            u = rng.uniform(size=quota)
            rows = mem[j] + u[:, None] * (mem[nbr[segments]] - mem[j])
        for row in rows:
            out.append(
                WindowedSample(
                    features=row.reshape(gen.feature_shape),
                    class_id=gen.class_id,
                    source=(SYNTHETIC_TRIAL_ID, draw_index),
                )
            )
            draw_index += 1
    return out


def save_generator(path: str | Path, gen: ClassGenerator) -> None:
    doc = {
        "class_id": gen.class_id,
        "k": gen.k,
        "seed": gen.rng_seed,
        "feature_shape": list(gen.feature_shape),
        "memory": [[float(v) for v in row] for row in gen.memory],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_generator(path: str | Path) -> ClassGenerator:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return ClassGenerator(
            class_id=int(doc["class_id"]),
            memory=np.array(doc["memory"], dtype=float),
            k=int(doc["k"]),
            rng_seed=int(doc["seed"]),
            feature_shape=(int(doc["feature_shape"][0]), int(doc["feature_shape"][1])),
        )
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        if isinstance(exc, (ConfigurationError, DataFormatError)):
            raise
        raise DataFormatError(f"{path}: bad generator file: {exc}") from None
