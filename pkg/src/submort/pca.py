"""Principal-component basis of reference log-mortality schedules."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import AgeGrid, MortalityDataset, DatasetError


class BasisError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ReferenceMatrix:
    """``N x G`` matrix of log-mortality rates, one reference schedule per row."""

    X: np.ndarray
    age_grid: AgeGrid = field(default_factory=AgeGrid)
    labels: tuple = ()

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim != 2:
            raise BasisError("reference matrix must be 2-D")
        if X.shape[1] != self.age_grid.size:
            raise BasisError(f"reference matrix has {X.shape[1]} columns, age grid has {self.age_grid.size}")
        bad = np.argwhere(~np.isfinite(X))
        if len(bad):
            i, j = bad[0]
            raise BasisError(f"non-finite reference log-rate at row {i}, column {j}: {X[i, j]}")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        labels = tuple(self.labels) or tuple(str(i) for i in range(X.shape[0]))
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_dataset(cls, d: MortalityDataset) -> "ReferenceMatrix":
        """One row per (area, year); any zero-death or zero-exposure cell rejects the set."""
        y = d.deaths.transpose(1, 2, 0)
        P = d.exposure.transpose(1, 2, 0)
        bad = ~((y > 0) & (P > 0) & d.present.transpose(1, 2, 0))
        if bad.any():
            a, t, x = np.argwhere(bad)[0]
            raise DatasetError(
                f"reference schedule area={d.areas[a]} year={d.years[t]} has no positive rate "
                f"at age_lower={d.age_grid.lower_bounds[x]}"
            )
        X = np.log(y / P).reshape(-1, d.age_grid.size)
        labels = tuple(f"{a}:{t}" for a in d.areas for t in d.years)
        return cls(X, d.age_grid, labels)


@dataclass(frozen=True, eq=False)
class PrincipalComponentBasis:
    """Loadings ``Y`` (``G x p``); column ``j`` multiplies coefficient ``beta_j``."""

    Y: np.ndarray
    age_grid: AgeGrid = field(default_factory=AgeGrid)
    singular_values: np.ndarray | None = None
    explained_variance_ratio: np.ndarray | None = None
    sign_convention: str = "positive inner product with mean schedule"

    def __post_init__(self):
        Y = np.array(self.Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.shape[0] != self.age_grid.size:
            raise BasisError(f"basis has {Y.shape[0]} rows, age grid has {self.age_grid.size}")
        Y.setflags(write=False)
        object.__setattr__(self, "Y", Y)

    @property
    def p(self) -> int:
        return self.Y.shape[1]


def svd(X):
    """Thin SVD ``X = U diag(D) V'`` with ``D`` descending.

    Accepts a :class:`ReferenceMatrix` or a plain 2-D array.
    """
    A = X.X if isinstance(X, ReferenceMatrix) else np.asarray(X, dtype=float)
    bad = np.argwhere(~np.isfinite(A))
    if len(bad):
        i, j = bad[0]
        raise BasisError(f"non-finite entry at row {i}, column {j}")
    try:
        U, D, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as e:
        raise BasisError(f"SVD failed to converge on {A.shape} matrix: {e}") from e
    return U, D, Vt.T


def _sign_normalize(V, mean_row):
    V = V.copy()
    for j in range(V.shape[1]):
        ip = float(V[:, j] @ mean_row)
        scale = max(1.0, float(np.abs(mean_row).sum()))
        if abs(ip) <= 1e-12 * scale:
            nz = np.flatnonzero(np.abs(V[:, j]) > 1e-12)
            flip = len(nz) and V[nz[0], j] < 0
        else:
            flip = ip < 0
        if flip:
            V[:, j] = -V[:, j]
    return V


def build_basis(X: ReferenceMatrix, p: int = 3) -> PrincipalComponentBasis:
    """First ``p`` right-singular vectors of the (uncentred) reference matrix."""
    if not isinstance(X, ReferenceMatrix):
        X = ReferenceMatrix(np.asarray(X, dtype=float), AgeGrid(tuple(range(np.shape(X)[1]))))
    r = min(X.X.shape)
    if not 1 <= p <= r:
        raise BasisError(f"number of components must be in 1..{r}, got {p}")
    if p not in (2, 3, 4):
        warnings.warn(f"using {p} principal components; 2-4 is the usual range", stacklevel=2)
    _, D, V = svd(X)
    Y = _sign_normalize(V[:, :p], X.X.mean(axis=0))
    ss = float(np.sum(D**2))
    evr = D[:p] ** 2 / ss if ss > 0 else np.zeros(p)
    return PrincipalComponentBasis(Y, X.age_grid, D, evr)
