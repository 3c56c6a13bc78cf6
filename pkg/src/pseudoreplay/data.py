"""Trial ingestion, windowing, feature standardization, and synthetic streams.

A trial is one continuous multichannel recording of a single class. Trials are
cut into fixed-length windows; each window flattens row-major over
(timestep, channel), i.e. feature index = t * C + c, and every consumer of
flat vectors in this package uses that same ordering.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataFormatError

# trial_id used to tag generator output in WindowedSample.source
SYNTHETIC_TRIAL_ID = -1


@dataclass(eq=False)
class TimeSeriesTrial:
    """One recording: channels has shape [T, C]."""

    class_id: int
    trial_id: int
    channels: np.ndarray
    sample_rate_hz: float = 1.0

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=float)
        if self.channels.ndim != 2:
            raise DataFormatError(
                f"trial {self.trial_id} of class {self.class_id}: channels must be 2-D [T, C]"
            )
        t, c = self.channels.shape
        if t < 1 or c < 1:
            raise DataFormatError(
                f"trial {self.trial_id} of class {self.class_id}: empty shape {self.channels.shape}"
            )
        if not np.all(np.isfinite(self.channels)):
            raise DataFormatError(
                f"trial {self.trial_id} of class {self.class_id}: non-finite values"
            )
        if self.class_id < 0:
            raise DataFormatError(f"class_id must be >= 0, got {self.class_id}")
        if self.trial_id < 1:
            raise DataFormatError(f"trial_id must be >= 1, got {self.trial_id}")
        if self.sample_rate_hz <= 0:
            raise ConfigurationError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")

    @property
    def length(self) -> int:
        return self.channels.shape[0]

    @property
    def n_channels(self) -> int:
        return self.channels.shape[1]


@dataclass(eq=False)
class WindowedSample:
    """One classifier input: features has shape [W, C].

    source = (trial_id, start index). Generator output carries
    trial_id == SYNTHETIC_TRIAL_ID with start = draw index, which is what the
    replay-purity audit keys on.
    """

    features: np.ndarray
    class_id: int
    source: tuple[int, int]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim != 2:
            raise DataFormatError("window features must be 2-D [W, C]")
        if not np.all(np.isfinite(self.features)):
            raise DataFormatError(f"window from {self.source}: non-finite values")
        self.source = (int(self.source[0]), int(self.source[1]))

    @property
    def flat(self) -> np.ndarray:
        return self.features.reshape(-1)

    @property
    def is_synthetic(self) -> bool:
        return self.source[0] == SYNTHETIC_TRIAL_ID


def window_trial(trial: TimeSeriesTrial, window: int, stride: int | None = None) -> list[WindowedSample]:
    """Cut a trial into windows of length `window` every `stride` steps.

    Default stride equals window (non-overlapping partition). Yields
    floor((T - window) / stride) + 1 samples; trailing remainder is dropped.
    """
    if stride is None:
        stride = window
    if window < 1 or stride < 1:
        raise ConfigurationError(f"window and stride must be >= 1, got {window}, {stride}")
    t = trial.length
    if window > t:
        raise DataFormatError(
            f"trial {trial.trial_id} of class {trial.class_id}: length {t} < window {window}"
        )
    n = (t - window) // stride + 1
    return [
        WindowedSample(
            features=trial.channels[i * stride : i * stride + window],
            class_id=trial.class_id,
            source=(trial.trial_id, i * stride),
        )
        for i in range(n)
    ]


@dataclass(eq=False)
class StandardizationParams:
    """Per-feature affine transform over flattened windows."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.std = np.asarray(self.std, dtype=float).reshape(-1)
        if self.mean.shape != self.std.shape:
            raise ConfigurationError("mean and std must have equal length")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.std))):
            raise ConfigurationError("standardization params must be finite")
        if np.any(self.std <= 0):
            raise ConfigurationError("std entries must be strictly positive")


def fit_standardizer(samples: list[WindowedSample]) -> StandardizationParams:
    """Per-feature mean and population std over flattened samples.

    Features with std below 1e-12 get std 1.0 so constant channels pass
    through centered instead of dividing by ~0.
    """
    if not samples:
        raise ConfigurationError("cannot fit standardizer on empty sample list")
    shape = samples[0].features.shape
    for s in samples:
        if s.features.shape != shape:
            raise DataFormatError(
                f"inconsistent window shapes: {s.features.shape} vs {shape}"
            )
    x = np.stack([s.flat for s in samples])
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    return StandardizationParams(mean=mean, std=sd)


def apply_standardizer(params: StandardizationParams, sample: WindowedSample) -> WindowedSample:
    """Return a standardized copy; class and provenance are preserved."""
    w, c = sample.features.shape
    if w * c != params.mean.shape[0]:
        raise ConfigurationError(
            f"standardizer expects {params.mean.shape[0]} features, window has {w * c}"
        )
    flat = (sample.flat - params.mean) / params.std
    return WindowedSample(
        features=flat.reshape(w, c), class_id=sample.class_id, source=sample.source
    )


def invert_standardizer(params: StandardizationParams, sample: WindowedSample) -> WindowedSample:
    """Undo apply_standardizer: x * std + mean."""
    w, c = sample.features.shape
    if w * c != params.mean.shape[0]:
        raise ConfigurationError(
            f"standardizer expects {params.mean.shape[0]} features, window has {w * c}"
        )
    flat = sample.flat * params.std + params.mean
    return WindowedSample(
        features=flat.reshape(w, c), class_id=sample.class_id, source=sample.source
    )


# ---------------------------------------------------------------------------
# trial CSV: header class_id,trial_id,step,ch1..chC; rows sorted by
# (class_id, trial_id, step); full float precision; UTF-8


def save_trials(path: str | Path, trials: list[TimeSeriesTrial]) -> None:
    if not trials:
        raise ConfigurationError("no trials to save")
    c = trials[0].n_channels
    for t in trials:
        if t.n_channels != c:
            raise DataFormatError("trials disagree on channel count")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class_id", "trial_id", "step"] + [f"ch{i + 1}" for i in range(c)])
        for t in sorted(trials, key=lambda t: (t.class_id, t.trial_id)):
            for step in range(t.length):
                row = [t.class_id, t.trial_id, step]
                row += [format(v, ".17g") for v in t.channels[step]]
                writer.writerow(row)


def load_trials(path: str | Path) -> list[TimeSeriesTrial]:
    """Parse a trial CSV; errors name the offending 1-based file row."""
    path = Path(path)
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if header[:3] != ["class_id", "trial_id", "step"]:
            raise DataFormatError(
                f"{path} row 1: header must start with class_id,trial_id,step"
            )
        chan_names = header[3:]
        if not chan_names or chan_names != [f"ch{i + 1}" for i in range(len(chan_names))]:
            raise DataFormatError(f"{path} row 1: channel columns must be ch1..chN")
        n_chan = len(chan_names)

        groups: dict[tuple[int, int], list[list[float]]] = {}
        prev_key: tuple[int, int] | None = None
        prev_step = -1
        for rownum, row in enumerate(reader, start=2):
            if len(row) != 3 + n_chan:
                raise DataFormatError(
                    f"{path} row {rownum}: expected {3 + n_chan} columns, got {len(row)}"
                )
            try:
                class_id, trial_id, step = int(row[0]), int(row[1]), int(row[2])
                values = [float(v) for v in row[3:]]
            except ValueError as exc:
                raise DataFormatError(f"{path} row {rownum}: {exc}") from None
            if not all(np.isfinite(v) for v in values):
                raise DataFormatError(f"{path} row {rownum}: non-finite value")
            key = (class_id, trial_id)
            if key != prev_key:
                if key in groups:
                    raise DataFormatError(
                        f"{path} row {rownum}: rows of class {class_id} trial {trial_id} are not contiguous"
                    )
                if prev_key is not None and key < prev_key:
                    raise DataFormatError(
                        f"{path} row {rownum}: rows not sorted by (class_id, trial_id)"
                    )
                groups[key] = []
                prev_key, prev_step = key, -1
            if step <= prev_step:
                raise DataFormatError(
                    f"{path} row {rownum}: step {step} not increasing within trial {trial_id}"
                )
            prev_step = step
            groups[key].append(values)

    if not groups:
        raise DataFormatError(f"{path}: no data rows")
    return [
        TimeSeriesTrial(class_id=k[0], trial_id=k[1], channels=np.array(rows))
        for k, rows in groups.items()
    ]


# ---------------------------------------------------------------------------
# synthetic surrogate streams


@dataclass(frozen=True)
class ClassSignal:
    """Signal recipe for one class: per-channel offset plus a shared sinusoid."""

    mean: tuple[float, ...]
    amplitude: float
    frequency: float  # cycles per sample
    noise_std: float


@dataclass(frozen=True)
class SyntheticStreamConfig:
    n_classes: int
    channels: int
    trial_length: int
    trials_per_class: int
    class_signals: tuple[ClassSignal, ...]
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "class_signals", tuple(self.class_signals))
        if self.n_classes < 2:
            raise ConfigurationError(f"n_classes must be >= 2, got {self.n_classes}")
        if self.channels < 1:
            raise ConfigurationError(f"channels must be >= 1, got {self.channels}")
        if self.trial_length < 1:
            raise ConfigurationError(f"trial_length must be >= 1, got {self.trial_length}")
        if self.trials_per_class < 1:
            raise ConfigurationError(
                f"trials_per_class must be >= 1, got {self.trials_per_class}"
            )
        if len(self.class_signals) != self.n_classes:
            raise ConfigurationError(
                f"need {self.n_classes} class_signals, got {len(self.class_signals)}"
            )
        seen = set()
        for i, sig in enumerate(self.class_signals):
            if len(sig.mean) != self.channels:
                raise ConfigurationError(
                    f"class {i}: mean vector length {len(sig.mean)} != channels {self.channels}"
                )
            if sig.noise_std < 0:
                raise ConfigurationError(f"class {i}: noise_std must be >= 0")
            key = (tuple(sig.mean), sig.amplitude, sig.frequency, sig.noise_std)
            if key in seen:
                raise ConfigurationError(f"class {i}: duplicate signal parameters")
            seen.add(key)

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "channels": self.channels,
            "trial_length": self.trial_length,
            "trials_per_class": self.trials_per_class,
            "class_signals": [
                {
                    "mean": list(s.mean),
                    "amplitude": s.amplitude,
                    "frequency": s.frequency,
                    "noise_std": s.noise_std,
                }
                for s in self.class_signals
            ],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticStreamConfig":
        try:
            signals = tuple(
                ClassSignal(
                    mean=tuple(float(v) for v in s["mean"]),
                    amplitude=float(s["amplitude"]),
                    frequency=float(s["frequency"]),
                    noise_std=float(s["noise_std"]),
                )
                for s in doc["class_signals"]
            )
            return cls(
                n_classes=int(doc["n_classes"]),
                channels=int(doc["channels"]),
                trial_length=int(doc["trial_length"]),
                trials_per_class=int(doc["trials_per_class"]),
                class_signals=signals,
                seed=int(doc["seed"]),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"bad synthetic stream config: {exc}") from None


def synthesize_stream(config: SyntheticStreamConfig) -> list[TimeSeriesTrial]:
    """Generate trials for every class; pure function of the config.

    Per trial each channel is mean + amplitude * sin(2*pi*f*t + phase) plus
    Gaussian noise; the phase is redrawn per (trial, channel) so trials of one
    class differ only by phase and noise realization.
    """
    rng = np.random.default_rng(config.seed)
    t_axis = np.arange(config.trial_length)
    trials = []
    for class_id, sig in enumerate(config.class_signals):
        for trial_id in range(1, config.trials_per_class + 1):
            phases = rng.uniform(0.0, 2.0 * np.pi, size=config.channels)
            noise = rng.normal(0.0, 1.0, size=(config.trial_length, config.channels))
            wave = sig.amplitude * np.sin(
                2.0 * np.pi * sig.frequency * t_axis[:, None] + phases[None, :]
            )
            channels = np.asarray(sig.mean)[None, :] + wave + sig.noise_std * noise
            trials.append(
                TimeSeriesTrial(class_id=class_id, trial_id=trial_id, channels=channels)
            )
    return trials


def default_synthetic_config(
    seed: int = 7, trial_length: int = 6250, trials_per_class: int = 5
) -> SyntheticStreamConfig:
    """Three well-separated classes on two channels.

    Channel offsets sit 4x the noise std apart so the benchmark stays easily
    separable; trial_length 6250 yields 125 non-overlapping windows of 50.
    """
    signals = (
        ClassSignal(mean=(0.0, 0.5), amplitude=0.6, frequency=0.05, noise_std=0.5),
        ClassSignal(mean=(2.0, 2.5), amplitude=0.8, frequency=0.11, noise_std=0.5),
        ClassSignal(mean=(4.0, 4.5), amplitude=1.0, frequency=0.23, noise_std=0.5),
    )
    return SyntheticStreamConfig(
        n_classes=3,
        channels=2,
        trial_length=trial_length,
        trials_per_class=trials_per_class,
        class_signals=signals,
        seed=seed,
    )
