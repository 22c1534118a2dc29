"""Waveform feature extraction: window sampling, length standardization,
statistical compression, and dataset assembly.

A failing waveform becomes one fixed-length sample matrix (ticks x signals),
then one feature row of per-signal summary statistics. Rows from many bug
scenarios stack into a single labeled dataset whose size is independent of
waveform length.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import IO, Iterable, Sequence

import numpy as np

from .selection import SelectionReport
from .vcd import ValueChange

DEFAULT_TICK_CAP = 2000


class ExtractError(Exception):
    pass


class EmptyDump(ExtractError):
    """The waveform body contained no value changes at all."""


class HeaderMismatch(ExtractError):
    pass


@dataclass(frozen=True)
class ValueEncoding:
    """Numeric encoding of four-state values.

    Scalars: 0 -> 0.0, 1 -> 1.0, x -> x_value, z -> z_value. Vectors with all
    bits defined become their unsigned integer value; vectors containing any
    x/z collapse to x_value so "unknown happened" stays visible to the
    statistics. Real values pass through numerically.
    """

    x_value: float = -1.0
    z_value: float = -2.0

    @property
    def uninitialized(self) -> float:
        return self.x_value

    def encode(self, value: str) -> float:
        if len(value) == 1:
            if value == "0":
                return 0.0
            if value == "1":
                return 1.0
            if value == "x":
                return self.x_value
            return self.z_value
        if value[0] == "r":
            return float(value[1:])
        try:
            return float(int(value, 2))
        except ValueError:
            return self.x_value


_BASE_STATS = ("mean", "std", "min", "max")


@dataclass(frozen=True)
class StatSet:
    """Ordered list of per-signal summary statistics.

    Default is the nine-statistic set: mean, sample standard deviation
    (ddof=1), min, max, and the 0.1/0.25/0.5/0.75/0.9 quantiles with linear
    interpolation.
    """

    names: tuple[str, ...] = ("mean", "std", "min", "max", "q10", "q25", "q50", "q75", "q90")

    def __post_init__(self):
        if not self.names:
            raise ValueError("empty stat set")
        for name in self.names:
            if name not in _BASE_STATS and self._quantile_of(name) is None:
                raise ValueError(f"unknown statistic {name!r}")

    @staticmethod
    def _quantile_of(name: str) -> float | None:
        if name.startswith("q") and name[1:].isdigit():
            q = int(name[1:]) / 100.0
            if 0.0 <= q <= 1.0:
                return q
        return None

    def __len__(self) -> int:
        return len(self.names)

    @classmethod
    def parse(cls, spec: str) -> "StatSet":
        return cls(tuple(part.strip() for part in spec.split(",") if part.strip()))

    def compute(self, matrix: np.ndarray) -> np.ndarray:
        """Per-column statistics of a (ticks x signals) matrix -> (signals, n)."""
        if matrix.ndim != 2 or matrix.shape[0] < 1:
            raise ValueError("summarize needs a standardized, non-empty window")
        rows = []
        quantile_names = [n for n in self.names if n not in _BASE_STATS]
        quantiles = {}
        if quantile_names:
            qs = [self._quantile_of(n) for n in quantile_names]
            values = np.quantile(matrix, qs, axis=0)
            quantiles = dict(zip(quantile_names, values))
        for name in self.names:
            if name == "mean":
                rows.append(matrix.mean(axis=0))
            elif name == "std":
                if matrix.shape[0] < 2:
                    rows.append(np.zeros(matrix.shape[1]))
                else:
                    rows.append(matrix.std(axis=0, ddof=1))
            elif name == "min":
                rows.append(matrix.min(axis=0))
            elif name == "max":
                rows.append(matrix.max(axis=0))
            else:
                rows.append(quantiles[name])
        return np.stack(rows, axis=1)


DEFAULT_STATS = StatSet()


@dataclass
class WaveWindow:
    """Sampled tail of one failing waveform: ticks x selected signals."""

    matrix: np.ndarray
    tick_times: np.ndarray
    signals: list[str]
    label: str
    scenario_id: str
    available_ticks: int = 0

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        self.tick_times = np.asarray(self.tick_times, dtype=np.int64)
        if self.matrix.shape[0] != self.tick_times.shape[0]:
            raise ValueError("tick_times length must match matrix rows")
        if self.matrix.ndim != 2 or self.matrix.shape[1] != len(self.signals):
            raise ValueError("matrix columns must match signal list")


@dataclass
class FeatureRow:
    features: np.ndarray
    feature_names: list[str]
    label: str
    scenario_id: str

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.shape != (len(self.feature_names),):
            raise ValueError("feature count must match feature_names")
        if not np.isfinite(self.features).all():
            raise ValueError("non-finite feature value")


@dataclass
class Dataset:
    feature_names: list[str]
    matrix: np.ndarray
    labels: list[str]
    scenario_ids: list[str]

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.shape != (len(self.labels), len(self.feature_names)):
            raise ValueError("dataset shape mismatch")
        if len(self.scenario_ids) != len(self.labels):
            raise ValueError("scenario_ids length mismatch")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def class_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for label in self.labels:
            counts[label] = counts.get(label, 0) + 1
        return counts

    def signal_names(self) -> list[str]:
        seen: dict[str, None] = {}
        for name in self.feature_names:
            seen.setdefault(name.rsplit("__", 1)[0], None)
        return list(seen)

    def subset_signals(self, keep: Iterable[str]) -> "Dataset":
        keep_set = set(keep)
        indices = [
            i
            for i, name in enumerate(self.feature_names)
            if name.rsplit("__", 1)[0] in keep_set
        ]
        return Dataset(
            feature_names=[self.feature_names[i] for i in indices],
            matrix=self.matrix[:, indices],
            labels=list(self.labels),
            scenario_ids=list(self.scenario_ids),
        )


def sample_window(
    changes: Iterable[ValueChange],
    selection: SelectionReport,
    tick_cap: int = DEFAULT_TICK_CAP,
    encoding: ValueEncoding = ValueEncoding(),
    label: str = "",
    scenario_id: str = "",
) -> WaveWindow:
    """Sample the last ``tick_cap`` distinct timestamps of a waveform.

    ``changes`` must be the unfiltered change stream so that every timestamp
    in the file defines a sample row; each row holds every selected signal's
    last-known value (forward fill). Signals never assigned before the
    window start hold the encoding's uninitialized value.
    """
    if tick_cap < 1:
        raise ValueError("tick_cap must be >= 1")
    if not selection.selected:
        raise ValueError("empty selection")

    names = selection.full_names()
    columns: dict[str, list[int]] = {}
    for index, (_, id_code, _, _) in enumerate(selection.selected):
        columns.setdefault(id_code, []).append(index)

    from collections import deque

    current = np.full(len(names), encoding.uninitialized, dtype=np.float64)
    rows: deque[tuple[int, np.ndarray]] = deque(maxlen=tick_cap)
    cur_time: int | None = None
    available = 0

    for change in changes:
        if cur_time is None:
            cur_time = change.time
            available = 1
        elif change.time > cur_time:
            rows.append((cur_time, current.copy()))
            cur_time = change.time
            available += 1
        cols = columns.get(change.id_code)
        if cols:
            value = encoding.encode(change.value)
            for col in cols:
                current[col] = value

    if cur_time is None:
        raise EmptyDump(f"no value changes in dump for scenario {scenario_id!r}")
    rows.append((cur_time, current))

    times = np.fromiter((t for t, _ in rows), dtype=np.int64, count=len(rows))
    matrix = np.stack([r for _, r in rows], axis=0)
    return WaveWindow(
        matrix=matrix,
        tick_times=times,
        signals=list(names),
        label=label,
        scenario_id=scenario_id,
        available_ticks=available,
    )


def standardize(window: WaveWindow, tick_cap: int = DEFAULT_TICK_CAP) -> WaveWindow:
    """Force the window to exactly ``tick_cap`` rows.

    Longer windows keep their last rows; shorter ones get all-zero rows
    prepended so the failure edge stays at the final row. Padding rows carry
    tick time -1.
    """
    rows = window.matrix.shape[0]
    if rows == tick_cap:
        return window
    if rows > tick_cap:
        return replace(
            window,
            matrix=window.matrix[-tick_cap:],
            tick_times=window.tick_times[-tick_cap:],
        )
    pad = tick_cap - rows
    matrix = np.vstack([np.zeros((pad, window.matrix.shape[1])), window.matrix])
    times = np.concatenate([np.full(pad, -1, dtype=np.int64), window.tick_times])
    return replace(window, matrix=matrix, tick_times=times)


def feature_names_for(signals: Sequence[str], stats: StatSet = DEFAULT_STATS) -> list[str]:
    return [f"{signal}__{stat}" for signal in signals for stat in stats.names]


def summarize(window: WaveWindow, stats: StatSet = DEFAULT_STATS) -> FeatureRow:
    """Compress a standardized window to one signal-major feature row."""
    table = stats.compute(window.matrix)  # (signals, n)
    return FeatureRow(
        features=table.ravel(),
        feature_names=feature_names_for(window.signals, stats),
        label=window.label,
        scenario_id=window.scenario_id,
    )


def assemble(rows: Sequence[FeatureRow]) -> Dataset:
    """Stack feature rows into one dataset; input order is preserved."""
    if not rows:
        raise ExtractError("no feature rows to assemble")
    header = rows[0].feature_names
    for row in rows[1:]:
        if row.feature_names != header:
            raise HeaderMismatch(
                f"feature names of scenario {row.scenario_id!r} differ from the first row"
            )
    return Dataset(
        feature_names=list(header),
        matrix=np.stack([row.features for row in rows], axis=0),
        labels=[row.label for row in rows],
        scenario_ids=[row.scenario_id for row in rows],
    )


# ---------------------------------------------------------------------------
# CSV interchange

def write_dataset_csv(dataset: Dataset, out: IO[str]) -> None:
    """Final dataset CSV: ``scenario_id,label,<feature names...>``.

    Values use fixed-width scientific notation (17 significant digits), so
    float64 round-trips exactly and the file size depends only on the
    row/column counts, not on the window length that produced the values.
    """
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["scenario_id", "label", *dataset.feature_names])
    for i in range(len(dataset)):
        writer.writerow(
            [dataset.scenario_ids[i], dataset.labels[i]]
            + [f"{v:.17e}" for v in dataset.matrix[i].tolist()]
        )


def read_dataset_csv(stream: IO[str]) -> Dataset:
    reader = csv.reader(stream)
    header = next(reader, None)
    if not header or header[:2] != ["scenario_id", "label"]:
        raise ExtractError("not a dataset CSV: expected scenario_id,label header")
    feature_names = header[2:]
    scenario_ids: list[str] = []
    labels: list[str] = []
    rows: list[list[float]] = []
    for record in reader:
        if not record:
            continue
        scenario_ids.append(record[0])
        labels.append(record[1])
        rows.append([float(v) for v in record[2:]])
    matrix = np.array(rows, dtype=np.float64) if rows else np.empty((0, len(feature_names)))
    return Dataset(
        feature_names=feature_names,
        matrix=matrix,
        labels=labels,
        scenario_ids=scenario_ids,
    )


def write_rough_csv(window: WaveWindow, out: IO[str]) -> None:
    """Per-tick debug CSV of one window: ``tick,<full names...>``."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["tick", *window.signals])
    times = window.tick_times.tolist()
    for i, row in enumerate(window.matrix):
        writer.writerow([times[i]] + [repr(v) for v in row.tolist()])
