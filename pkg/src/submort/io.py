"""CSV wire formats: datasets, truth, bases, summaries and flat config files."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .core import AgeGrid, DatasetError, MortalityDataset
from .pca import BasisError, PrincipalComponentBasis

DATASET_HEADER = ("area", "year", "age_lower", "deaths", "population")
SUMMARY_HEADER = ("area", "year", "age_lower", "log_m_median", "log_m_lo", "log_m_hi",
                  "m_median", "m_lo", "m_hi", "rhat")


def fmt(v) -> str:
    """Shortest round-trip decimal; integral values lose the trailing ``.0``."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    r = repr(float(v))
    return r[:-2] if r.endswith(".0") else r


def _writer(f):
    return csv.writer(f, lineterminator="\n")


def read_dataset_csv(path, aggregate_path=None) -> MortalityDataset:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise DatasetError(f"{path}: empty file")
    header = tuple(h.strip() for h in rows[0])
    if header[:5] != DATASET_HEADER or len(header) not in (5, 6) or (len(header) == 6 and header[5] != "group"):
        raise DatasetError(f"{path}: header must be {','.join(DATASET_HEADER)}[,group], got {','.join(header)}")
    recs = []
    for ln, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise DatasetError(f"{path}:{ln}: expected {len(header)} fields, got {len(r)}")
        try:
            deaths = int(r[3])
        except ValueError:
            raise DatasetError(f"{path}:{ln}: deaths must be an integer, got {r[3]!r}") from None
        try:
            rec = (r[0], int(r[1]), float(r[2]), deaths, float(r[4]))
        except ValueError as e:
            raise DatasetError(f"{path}:{ln}: {e}") from None
        recs.append(rec + ((r[5],) if len(header) == 6 else ()))
    agg = None
    if aggregate_path is not None:
        d0 = MortalityDataset.from_records(recs)
        agg = read_aggregate_csv(aggregate_path, d0)
    return MortalityDataset.from_records(recs, aggregate_deaths=agg)


def write_dataset_csv(d: MortalityDataset, path):
    ages = d.age_grid.lower_bounds
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = _writer(f)
        w.writerow(DATASET_HEADER + (("group",) if d.groups else ()))
        for a, area in enumerate(d.areas):
            for t, year in enumerate(d.years):
                for x, age in enumerate(ages):
                    if not d.present[x, a, t]:
                        continue
                    row = [area, year, fmt(age), str(int(d.deaths[x, a, t])), fmt(d.exposure[x, a, t])]
                    if d.groups:
                        row.append(d.groups[a])
                    w.writerow(row)


def read_aggregate_csv(path, d: MortalityDataset) -> np.ndarray:
    """Aggregate deaths file with columns ``year,age_lower,deaths``."""
    agg = np.full((d.age_grid.size, len(d.years)), np.nan)
    x_idx = {float(x): i for i, x in enumerate(d.age_grid.lower_bounds)}
    t_idx = {t: i for i, t in enumerate(d.years)}
    with open(path, newline="", encoding="utf-8") as f:
        r = csv.DictReader(f)
        for row in r:
            try:
                agg[x_idx[float(row["age_lower"])], t_idx[int(row["year"])]] = int(row["deaths"])
            except KeyError as e:
                raise DatasetError(f"{path}: unknown or missing key {e}") from None
    if np.isnan(agg).any():
        raise DatasetError(f"{path}: aggregate deaths missing for some (age, year)")
    return agg


def write_truth_csv(d: MortalityDataset, truth, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = _writer(f)
        w.writerow(("area", "year", "age_lower", "true_m"))
        for a, area in enumerate(d.areas):
            for t, year in enumerate(d.years):
                for x, age in enumerate(d.age_grid.lower_bounds):
                    w.writerow((area, year, fmt(age), fmt(truth[x, a, t])))


def read_truth_csv(path, d: MortalityDataset) -> np.ndarray:
    out = np.full(d.shape, np.nan)
    a_idx = {a: i for i, a in enumerate(d.areas)}
    t_idx = {t: i for i, t in enumerate(d.years)}
    x_idx = {float(x): i for i, x in enumerate(d.age_grid.lower_bounds)}
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            key = (x_idx[float(row["age_lower"])], a_idx[row["area"]], t_idx[int(row["year"])])
            out[key] = float(row["true_m"])
    return out


def write_basis_csv(b: PrincipalComponentBasis, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = _writer(f)
        w.writerow(("age_lower",) + tuple(f"Y{j + 1}" for j in range(b.p)))
        for x, age in enumerate(b.age_grid.lower_bounds):
            w.writerow((fmt(age),) + tuple(fmt(v) for v in b.Y[x]))


def read_basis_csv(path) -> PrincipalComponentBasis:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    header = rows[0]
    if header[0] != "age_lower" or any(h != f"Y{j + 1}" for j, h in enumerate(header[1:])) or len(header) < 2:
        raise BasisError(f"{path}: header must be age_lower,Y1..Yp")
    ages = tuple(float(r[0]) for r in rows[1:])
    Y = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return PrincipalComponentBasis(Y, AgeGrid(ages))


def write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = _writer(f)
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment; dashes in keys become underscores."""
    out = {}
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out
