"""Column-oriented sample container shared by the simulation, learning and CLI layers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

NULL = -1  # symbol used for the dropout null value in discrete columns


@dataclass(frozen=True)
class Dataset:
    """Named 1-D columns of equal length. Discrete columns are integer typed."""

    columns: Mapping[str, np.ndarray]

    def __post_init__(self):
        cols = {str(k): np.asarray(v) for k, v in self.columns.items()}
        lengths = {len(v) for v in cols.values()}
        if len(lengths) > 1:
            raise ValueError(f"columns have different lengths: {sorted(lengths)}")
        for k, v in cols.items():
            if v.ndim != 1:
                raise ValueError(f"column {k!r} is not one-dimensional")
        object.__setattr__(self, "columns", cols)

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def __len__(self):
        return self.n_rows

    def __contains__(self, name):
        return name in self.columns

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise KeyError(f"missing column {name!r}") from None

    def require(self, names: Iterable[str]) -> None:
        missing = [n for n in names if n not in self.columns]
        if missing:
            raise KeyError(f"missing column(s): {', '.join(missing)}")

    def matrix(self, names: Iterable[str]) -> np.ndarray:
        names = list(names)
        self.require(names)
        if not names:
            return np.empty((self.n_rows, 0))
        return np.column_stack([self.columns[n].astype(float) for n in names])

    def select(self, names: Iterable[str]) -> "Dataset":
        names = list(names)
        self.require(names)
        return Dataset({n: self.columns[n] for n in names})

    def take(self, idx) -> "Dataset":
        return Dataset({k: v[idx] for k, v in self.columns.items()})

    def with_columns(self, new: Mapping[str, np.ndarray]) -> "Dataset":
        cols = dict(self.columns)
        cols.update(new)
        return Dataset(cols)

    def strata(self, name: str) -> dict:
        """Row indices for each observed value of a discrete column, sorted by value."""
        col = self[name]
        values = np.unique(col)
        return {v.item(): np.flatnonzero(col == v) for v in values}

    def split(self, test_fraction: float, seed) -> tuple["Dataset", "Dataset"]:
        if not 0 < test_fraction < 1:
            raise ValueError("test_fraction must be in (0, 1)")
        rng = np.random.default_rng(seed)
        perm = rng.permutation(self.n_rows)
        n_test = int(round(test_fraction * self.n_rows))
        return self.take(np.sort(perm[n_test:])), self.take(np.sort(perm[:n_test]))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(dict(self.columns))

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "Dataset":
        return cls({c: df[c].to_numpy() for c in df.columns})

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def read_csv(cls, path, **kwargs) -> "Dataset":
        return cls.from_frame(pd.read_csv(path, **kwargs))
