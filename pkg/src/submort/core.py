"""Shared domain types: age grid, death/exposure panels and rate surfaces."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_AGES = (0, 1) + tuple(range(5, 90, 5))


class DatasetError(ValueError):
    """Raised when a dataset cannot be constructed or fails validation."""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AgeGrid:
    """Lower bounds of age intervals; the last interval is open-ended."""

    lower_bounds: tuple = DEFAULT_AGES
    open_ended_last: bool = True

    def __post_init__(self):
        lb = tuple(int(x) if float(x).is_integer() else float(x) for x in self.lower_bounds)
        object.__setattr__(self, "lower_bounds", lb)
        if len(lb) == 0 or lb[0] != 0:
            raise DatasetError("age grid must start at 0")
        if any(b <= a for a, b in zip(lb, lb[1:])):
            raise DatasetError("age grid lower bounds must be strictly increasing")
        if not self.open_ended_last:
            raise DatasetError("last age interval must be open-ended")

    @property
    def size(self) -> int:
        return len(self.lower_bounds)

    def __len__(self):
        return self.size

    @property
    def widths(self) -> np.ndarray:
        """Interval widths in years; ``inf`` for the open last group."""
        lb = np.asarray(self.lower_bounds, dtype=float)
        return np.append(np.diff(lb), np.inf)


@dataclass(frozen=True, eq=False)
class MortalityDataset:
    """Deaths and exposures indexed ``[age, area, year]``.

    ``present`` marks which cells were actually supplied; ingestion from
    records can leave holes, which :func:`validate_dataset` reports.
    ``groups`` assigns each area to a pooling group (default: one group).
    """

    areas: tuple
    years: tuple
    deaths: np.ndarray
    exposure: np.ndarray
    age_grid: AgeGrid = field(default_factory=AgeGrid)
    aggregate_deaths: np.ndarray | None = None
    groups: tuple | None = None
    present: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "areas", tuple(str(a) for a in self.areas))
        object.__setattr__(self, "years", tuple(int(t) for t in self.years))
        shape = (self.age_grid.size, len(self.areas), len(self.years))
        deaths = np.asarray(self.deaths, dtype=float)
        exposure = np.asarray(self.exposure, dtype=float)
        if deaths.shape != shape or exposure.shape != shape:
            raise DatasetError(
                f"deaths/exposure must have shape {shape}, got {deaths.shape} and {exposure.shape}"
            )
        object.__setattr__(self, "deaths", _frozen(deaths))
        object.__setattr__(self, "exposure", _frozen(exposure))
        if self.aggregate_deaths is not None:
            agg = np.asarray(self.aggregate_deaths, dtype=float)
            if agg.shape != (shape[0], shape[2]):
                raise DatasetError(f"aggregate_deaths must have shape {(shape[0], shape[2])}")
            object.__setattr__(self, "aggregate_deaths", _frozen(agg))
        if self.groups is not None:
            if len(self.groups) != len(self.areas):
                raise DatasetError("groups must list one entry per area")
            object.__setattr__(self, "groups", tuple(str(g) for g in self.groups))
        present = np.ones(shape, bool) if self.present is None else np.asarray(self.present, bool)
        object.__setattr__(self, "present", _frozen(present, bool))

    @property
    def shape(self):
        return self.deaths.shape

    @property
    def aggregate(self) -> np.ndarray:
        """Aggregate deaths per ``[age, year]``; the area sum when not supplied."""
        if self.aggregate_deaths is not None:
            return self.aggregate_deaths
        return np.where(self.present, self.deaths, 0.0).sum(axis=1)

    @property
    def group_labels(self) -> tuple:
        return tuple(dict.fromkeys(self.groups)) if self.groups else ("all",)

    @property
    def group_index(self) -> np.ndarray:
        """Integer group id per area, in order of first appearance."""
        if not self.groups:
            return np.zeros(len(self.areas), dtype=np.int64)
        labels = {g: k for k, g in enumerate(self.group_labels)}
        return np.array([labels[g] for g in self.groups], dtype=np.int64)

    def subset_areas(self, idx: Sequence[int]) -> "MortalityDataset":
        idx = list(idx)
        return MortalityDataset(
            areas=[self.areas[i] for i in idx],
            years=self.years,
            deaths=self.deaths[:, idx, :],
            exposure=self.exposure[:, idx, :],
            age_grid=self.age_grid,
            aggregate_deaths=None,
            groups=None if self.groups is None else [self.groups[i] for i in idx],
            present=self.present[:, idx, :],
        )

    @classmethod
    def from_records(cls, records, age_grid: AgeGrid | None = None, aggregate_deaths=None):
        """Build from ``(area, year, age_lower, deaths, population[, group])`` tuples.

        Areas and years keep first-appearance order. Cells not listed stay
        absent (``present`` False) and are reported by validation.
        """
        records = list(records)
        if age_grid is None:
            ages = sorted({float(r[2]) for r in records})
            age_grid = AgeGrid(tuple(ages))
        areas = list(dict.fromkeys(str(r[0]) for r in records))
        years = sorted({int(r[1]) for r in records})
        a_idx = {a: i for i, a in enumerate(areas)}
        t_idx = {t: i for i, t in enumerate(years)}
        x_idx = {float(x): i for i, x in enumerate(age_grid.lower_bounds)}
        shape = (age_grid.size, len(areas), len(years))
        deaths = np.zeros(shape)
        exposure = np.zeros(shape)
        present = np.zeros(shape, bool)
        groups: dict[str, str] = {}
        for r in records:
            try:
                x = x_idx[float(r[2])]
            except KeyError:
                raise DatasetError(f"age_lower {r[2]} is not on the age grid") from None
            cell = (x, a_idx[str(r[0])], t_idx[int(r[1])])
            if present[cell]:
                raise DatasetError(f"duplicate cell area={r[0]} year={r[1]} age_lower={r[2]}")
            deaths[cell] = float(r[3])
            exposure[cell] = float(r[4])
            present[cell] = True
            if len(r) > 5 and r[5] is not None:
                prev = groups.setdefault(str(r[0]), str(r[5]))
                if prev != str(r[5]):
                    raise DatasetError(f"area {r[0]} assigned to more than one group")
        grp = [groups[a] for a in areas] if groups else None
        if groups and len(groups) != len(areas):
            raise DatasetError("group column must be filled for every area or none")
        return cls(areas, years, deaths, exposure, age_grid, aggregate_deaths, grp, present)


@dataclass(frozen=True, eq=False)
class RateSurface:
    """Rates per ``[age, area, year]``; NaN marks absent cells."""

    values: np.ndarray
    log: bool = True

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))

    @property
    def absent(self) -> np.ndarray:
        return np.isnan(self.values)


def validate_dataset(d: MortalityDataset) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    out: list[str] = []
    ages = d.age_grid.lower_bounds

    def cell(x, a, t):
        return f"(age_lower={ages[x]}, area={d.areas[a]}, year={d.years[t]})"

    for x, a, t in zip(*np.nonzero(~d.present)):
        out.append(f"incomplete index: missing cell {cell(x, a, t)}")
    pres = d.present
    y, P = d.deaths, d.exposure
    bad = pres & ~(np.isfinite(y) & (y >= 0) & (y == np.round(y)))
    for x, a, t in zip(*np.nonzero(bad)):
        out.append(f"deaths must be a non-negative integer at {cell(x, a, t)}: {y[x, a, t]}")
    bad = pres & ~(np.isfinite(P) & (P >= 0))
    for x, a, t in zip(*np.nonzero(bad)):
        out.append(f"exposure must be finite and non-negative at {cell(x, a, t)}: {P[x, a, t]}")
    bad = pres & (P == 0) & (y != 0)
    for x, a, t in zip(*np.nonzero(bad)):
        out.append(f"deaths with zero exposure at {cell(x, a, t)}: deaths={y[x, a, t]:g}")
    if d.aggregate_deaths is not None:
        agg = d.aggregate_deaths
        for x, t in zip(*np.nonzero(~(np.isfinite(agg) & (agg >= 0)))):
            out.append(f"aggregate deaths invalid at (age_lower={ages[x]}, year={d.years[t]})")
        too_small = agg[:, None, :] < np.where(pres, y, 0)
        for x, a, t in zip(*np.nonzero(too_small)):
            out.append(f"aggregate deaths below single-area count at {cell(x, a, t)}")
    return out


def observed_log_rates(d: MortalityDataset) -> RateSurface:
    """``log(y/P)`` per cell; NaN where deaths or exposure are zero or missing."""
    y, P = d.deaths, d.exposure
    ok = d.present & (y > 0) & (P > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(ok, np.log(np.where(ok, y, 1.0) / np.where(ok, P, 1.0)), np.nan)
    return RateSurface(vals, log=True)
