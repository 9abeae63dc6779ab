"""Test states, click simulation, dataset I/O and linear-inversion estimates.

A click is one projective Pauli measurement on the output of a map for a
known pure input.  Datasets keep the clicks as parallel arrays
(inputs, axes, outcomes) in acquisition order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .bloch import PauliAxis
from .channel import AffineChannel, MapLike, as_transform, sample_pure_states

_UNIT_TOL = 1e-10


class TestState(NamedTuple):
    id: int
    r: np.ndarray
    label: str


def standard_test_states() -> list[TestState]:
    """Eigenstates of sigma_x, sigma_y, sigma_z, ids 0..5 in the order x+, x-, y+, y-, z+, z-."""
    states = []
    for axis in PauliAxis:
        for sign, tag in ((1, "+"), (-1, "-")):
            r = np.zeros(3)
            r[axis] = sign
            states.append(TestState(len(states), r, f"{axis.label}{tag}"))
    return states


class ClickRecord(NamedTuple):
    input: np.ndarray
    axis: PauliAxis
    outcome: int


class CoverageError(ValueError):
    """A (test state, axis) cell required for linear inversion has no data."""


@dataclass(eq=False)
class ClickDataset:
    inputs: np.ndarray  # (n, 3) pure-state Bloch vectors
    axes: np.ndarray  # (n,) ints in {0, 1, 2}
    outcomes: np.ndarray  # (n,) ints in {+1, -1}
    seed: int | None = None
    source_map: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float).reshape(-1, 3)
        self.axes = np.asarray(self.axes, dtype=np.int64).reshape(-1)
        self.outcomes = np.asarray(self.outcomes, dtype=np.int64).reshape(-1)
        n = len(self.inputs)
        if len(self.axes) != n or len(self.outcomes) != n:
            raise ValueError("inputs, axes and outcomes must have equal length")
        if n and np.max(np.abs(np.linalg.norm(self.inputs, axis=1) - 1.0)) > _UNIT_TOL:
            raise ValueError("click inputs must be pure states")
        if not np.all(np.isin(self.axes, (0, 1, 2))):
            raise ValueError("axes must be 0, 1 or 2")
        if not np.all(np.isin(self.outcomes, (1, -1))):
            raise ValueError("outcomes must be +1 or -1")

    @property
    def n_total(self) -> int:
        return len(self.outcomes)

    def __len__(self):
        return self.n_total

    def records(self) -> Iterator[ClickRecord]:
        for r, a, o in zip(self.inputs, self.axes, self.outcomes):
            yield ClickRecord(r, PauliAxis(int(a)), int(o))

    @classmethod
    def from_records(cls, records: Sequence[ClickRecord], **meta) -> "ClickDataset":
        records = list(records)
        if not records:
            return cls(np.empty((0, 3)), [], [], **meta)
        return cls(
            np.array([rec.input for rec in records]),
            [int(rec.axis) for rec in records],
            [rec.outcome for rec in records],
            **meta,
        )

    @classmethod
    def concatenate(cls, parts: Sequence["ClickDataset"], **meta) -> "ClickDataset":
        return cls(
            np.concatenate([p.inputs for p in parts]) if parts else np.empty((0, 3)),
            np.concatenate([p.axes for p in parts]) if parts else [],
            np.concatenate([p.outcomes for p in parts]) if parts else [],
            **meta,
        )

    def meta(self) -> dict:
        return {"seed": self.seed, "source_map": self.source_map, "n_total": self.n_total, **self.extra}


@dataclass(eq=False)
class SufficientStatistics:
    """Click counts per distinct (input, axis, outcome) cell.

    Counts are floats so that exact expected frequencies can stand in for data
    in oracle tests; simulated data always aggregates to integers.
    """

    inputs: np.ndarray
    axes: np.ndarray
    outcomes: np.ndarray
    counts: np.ndarray

    @property
    def n_total(self) -> float:
        return float(np.sum(self.counts))

    def __len__(self):
        return len(self.counts)

    @classmethod
    def expected(cls, m: MapLike, plan: Sequence[tuple[TestState, int, float]]) -> "SufficientStatistics":
        """Noiseless statistics: each cell gets ``shots * p`` fractional clicks."""
        transform = as_transform(m)
        inputs, axes, outcomes, counts = [], [], [], []
        for state, axis, shots in plan:
            out = np.asarray(transform(np.asarray(state.r, dtype=float)[None, :]))[0]
            p_plus = float(np.clip(0.5 * (1.0 + out[int(axis)]), 0.0, 1.0))
            for outcome, p in ((1, p_plus), (-1, 1.0 - p_plus)):
                inputs.append(state.r)
                axes.append(int(axis))
                outcomes.append(outcome)
                counts.append(shots * p)
        return cls(np.array(inputs, dtype=float).reshape(-1, 3), np.array(axes), np.array(outcomes), np.array(counts))


def aggregate(ds: ClickDataset) -> SufficientStatistics:
    if ds.n_total == 0:
        return SufficientStatistics(np.empty((0, 3)), np.empty(0, int), np.empty(0, int), np.empty(0))
    keys = np.column_stack([ds.inputs, ds.axes, ds.outcomes])
    uniq, first, counts = np.unique(keys, axis=0, return_index=True, return_counts=True)
    # keep first-occurrence order so aggregation is stable for the caller
    order = np.argsort(first, kind="stable")
    idx = first[order]
    return SufficientStatistics(ds.inputs[idx], ds.axes[idx], ds.outcomes[idx], counts[order].astype(float))


def _check_output(out: np.ndarray, what: str) -> np.ndarray:
    out = np.asarray(out, dtype=float)
    if not np.all(np.isfinite(out)):
        raise ValueError(f"map produced a non-finite Bloch vector for {what}: {out}")
    return out


def _draw(p_plus: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return np.where(rng.random(p_plus.shape) < p_plus, 1, -1)


def standard_plan(shots_per_cell: int) -> list[tuple[TestState, PauliAxis, int]]:
    """All 6 x 3 (test state, axis) cells with equal shot counts."""
    return [(s, axis, shots_per_cell) for s in standard_test_states() for axis in PauliAxis]


def simulate_clicks(
    m: MapLike,
    plan: Sequence[tuple[TestState, int, int]],
    rng: np.random.Generator,
    seed: int | None = None,
    source_map: str = "",
) -> ClickDataset:
    """Draw ``shots`` Born-rule outcomes for every plan row, in plan order."""
    transform = as_transform(m)
    inputs, axes, outcomes = [], [], []
    for state, axis, shots in plan:
        if shots < 0:
            raise ValueError("shots must be nonnegative")
        r = np.asarray(state.r, dtype=float)
        out = _check_output(transform(r[None, :])[0], f"input {getattr(state, 'label', r)}")
        p_plus = np.clip(0.5 * (1.0 + out[int(axis)]), 0.0, 1.0)
        inputs.append(np.broadcast_to(r, (shots, 3)))
        axes.append(np.full(shots, int(axis)))
        outcomes.append(_draw(np.full(shots, p_plus), rng))
    if not inputs:
        return ClickDataset(np.empty((0, 3)), [], [], seed=seed, source_map=source_map)
    return ClickDataset(np.concatenate(inputs), np.concatenate(axes), np.concatenate(outcomes), seed=seed, source_map=source_map)


def simulate_random_inputs(
    m: MapLike, n_states: int, rng: np.random.Generator, seed: int | None = None, source_map: str = ""
) -> ClickDataset:
    """One click per random pure input; the measured axis is uniform over x, y, z."""
    if n_states < 1:
        raise ValueError("n_states must be at least 1")
    inputs = sample_pure_states(n_states, rng)
    out = _check_output(as_transform(m)(inputs), "random inputs")
    axes = rng.integers(0, 3, size=n_states)
    p_plus = np.clip(0.5 * (1.0 + out[np.arange(n_states), axes]), 0.0, 1.0)
    return ClickDataset(inputs, axes, _draw(p_plus, rng), seed=seed, source_map=source_map)


def simulate_npr_dataset(theta: float, n_states: int, rng: np.random.Generator, seed: int | None = None) -> ClickDataset:
    from .maps import NprMap

    npr = NprMap(theta)
    return simulate_random_inputs(npr, n_states, rng, seed=seed, source_map=str(npr))


def _standard_frequencies(stats: SufficientStatistics) -> np.ndarray:
    """Estimated output Bloch vectors for the six standard states, shape (6, 3)."""
    states = standard_test_states()
    plus = np.zeros((6, 3))
    total = np.zeros((6, 3))
    for s in states:
        match = np.all(np.abs(stats.inputs - s.r) < 1e-9, axis=1)
        for axis in PauliAxis:
            cell = match & (stats.axes == axis)
            total[s.id, axis] = stats.counts[cell].sum()
            plus[s.id, axis] = stats.counts[cell & (stats.outcomes == 1)].sum()
    missing = [f"{states[i].label}/{PauliAxis(a).label}" for i, a in zip(*np.nonzero(total <= 0))]
    if missing:
        raise CoverageError("no clicks for (state/axis) cells: " + ", ".join(missing))
    return 2.0 * plus / total - 1.0


def linear_inversion(data: ClickDataset | SufficientStatistics) -> AffineChannel:
    """Least-squares affine fit to frequency-reconstructed outputs of the six standard states.

    Clicks from other inputs are ignored.  The result is not forced to be CP.
    """
    stats = aggregate(data) if isinstance(data, ClickDataset) else data
    outputs = _standard_frequencies(stats)
    design = np.column_stack([np.array([s.r for s in standard_test_states()]), np.ones(6)])
    coef, *_ = np.linalg.lstsq(design, outputs, rcond=None)
    return AffineChannel(coef[:3].T, coef[3])


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_dataset(ds: ClickDataset, path: str | Path) -> None:
    """JSON-lines: a ``{"meta": ...}`` header, then one click per line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"meta": ds.meta()}) + "\n")
        for r, a, o in zip(ds.inputs, ds.axes, ds.outcomes):
            fh.write(
                f'{{"rx": {_fmt(r[0])}, "ry": {_fmt(r[1])}, "rz": {_fmt(r[2])}, '
                f'"axis": "{PauliAxis(int(a)).label}", "outcome": {int(o)}}}\n'
            )


def load_dataset(path: str | Path) -> ClickDataset:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    header = json.loads(lines[0])
    if "meta" not in header:
        raise ValueError(f"{path}: first line must be a meta header")
    meta = dict(header["meta"])
    rows = [json.loads(ln) for ln in lines[1:]]
    n_declared = meta.pop("n_total", len(rows))
    if n_declared != len(rows):
        raise ValueError(f"{path}: header declares {n_declared} records, found {len(rows)}")
    inputs = np.array([[row["rx"], row["ry"], row["rz"]] for row in rows], dtype=float).reshape(-1, 3)
    axes = [int(PauliAxis.parse(row["axis"])) for row in rows]
    outcomes = [int(row["outcome"]) for row in rows]
    seed = meta.pop("seed", None)
    source_map = meta.pop("source_map", "")
    return ClickDataset(inputs, axes, outcomes, seed=seed, source_map=source_map, extra=meta)
