"""Core value types: data sets, parameter vectors, random streams, settings."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np


class ModelError(Exception):
    """Raised for contract violations: bad shapes, unresolvable elements, etc."""


class UnresolvableElementError(ModelError):
    """No strategy exists to derive the requested model element."""


# ---------------------------------------------------------------------------
# Random streams


class RandomStream:
    """Seeded deterministic random source with reproducible child streams.

    Identical seed + identical call sequence gives identical output.
    ``split(i)`` derives an independent child stream; children are themselves
    reproducible, so replicate work can fan out across workers.
    """

    def __init__(self, seed: int | Sequence[int] = 0):
        if isinstance(seed, (int, np.integer)):
            self._path: tuple[int, ...] = (int(seed),)
        else:
            self._path = tuple(int(s) for s in seed)
        self.seed = self._path[0]
        self.gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self._path)))

    def split(self, index: int) -> "RandomStream":
        return RandomStream(self._path + (int(index),))

    # thin delegation helpers -------------------------------------------------
    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def choice(self, n: int, p=None, size=None):
        return self.gen.choice(n, size=size, p=p)

    def __repr__(self):
        return f"RandomStream{self._path}"


# ---------------------------------------------------------------------------
# Data sets


class DataSet:
    """Ordered, weighted collection of fixed-dimension observation rows.

    Rows are stored as a float array of shape (n, dim); ``dim`` may be zero
    for models over an empty data space. Weights default to 1 per row.
    Optional integer ``groups`` labels partition rows into sub-datasets for
    hierarchical compositions.
    """

    def __init__(self, rows, weights=None, names: list[str] | None = None,
                 groups=None):
        arr = np.asarray(rows, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise ModelError(f"rows must be 1- or 2-dimensional, got shape {arr.shape}")
        self.rows = arr
        n = arr.shape[0]
        if weights is None:
            self.weights = np.ones(n)
        else:
            w = np.asarray(weights, dtype=float)
            if w.shape != (n,):
                raise ModelError(f"weights shape {w.shape} does not match {n} rows")
            if np.any(w < 0):
                raise ModelError("weights must be nonnegative")
            if n and not np.any(w > 0):
                raise ModelError("at least one weight must be positive")
            self.weights = w
        self.names = names
        self.groups = None if groups is None else np.asarray(groups, dtype=int)
        if self.groups is not None and self.groups.shape != (n,):
            raise ModelError("groups must label every row")

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __len__(self) -> int:
        return self.rows.shape[0]

    def sorted(self) -> "DataSet":
        """Rows in lexicographic componentwise order (for PMF CDF support)."""
        order = np.lexsort(self.rows.T[::-1]) if self.dim else np.arange(len(self))
        return DataSet(self.rows[order], self.weights[order], self.names)

    def group_list(self) -> list["DataSet"]:
        if self.groups is None:
            return [self]
        out = []
        for g in np.unique(self.groups):
            sel = self.groups == g
            out.append(DataSet(self.rows[sel], self.weights[sel], self.names))
        return out

    # CSV interface (RFC 4180; optional header; optional final "weight" column)
    @classmethod
    def from_csv(cls, path) -> "DataSet":
        import csv

        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        if not rows:
            return cls(np.empty((0, 0)))
        names = None
        first = rows[0]
        try:
            [float(x) for x in first]
        except ValueError:
            names = [c.strip() for c in first]
            rows = rows[1:]
        data = np.array([[float(x) for x in r] for r in rows])
        weights = None
        if names and names[-1].lower() == "weight":
            weights = data[:, -1]
            data = data[:, :-1]
            names = names[:-1]
        return cls(data, weights=weights, names=names)

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            weighted = not np.allclose(self.weights, 1.0)
            names = self.names or [f"c{i}" for i in range(self.dim)]
            w.writerow(list(names) + (["weight"] if weighted else []))
            for i in range(len(self)):
                row = [repr(float(v)) for v in self.rows[i]]
                if weighted:
                    row.append(repr(float(self.weights[i])))
                w.writerow(row)

    def __repr__(self):
        return f"DataSet({len(self)} rows, dim={self.dim})"


# ---------------------------------------------------------------------------
# Parameters


class Params:
    """Named-block real vector with an optional per-entry fixed mask.

    Blocks are ordered (name, vector) pairs; the flattened vector is their
    concatenation.  ``fixed_mask`` marks pinned entries, which estimation and
    transforms treat as constants.  Concatenation of two Params is the
    Cartesian product of their parameter spaces and is associative.
    """

    def __init__(self, blocks: Iterable[tuple[str, Sequence[float]]],
                 fixed_mask=None):
        self.blocks = [(str(n), np.atleast_1d(np.asarray(v, dtype=float)))
                       for n, v in blocks]
        total = sum(len(v) for _, v in self.blocks)
        if fixed_mask is None:
            self.fixed_mask = np.zeros(total, dtype=bool)
        else:
            m = np.asarray(fixed_mask, dtype=bool)
            if m.shape != (total,):
                raise ModelError(f"fixed_mask length {m.shape} != {total}")
            self.fixed_mask = m

    @classmethod
    def scalars(cls, **kw: float) -> "Params":
        return cls([(k, [v]) for k, v in kw.items()])

    def flatten(self) -> np.ndarray:
        if not self.blocks:
            return np.empty(0)
        return np.concatenate([v for _, v in self.blocks])

    def __len__(self) -> int:
        return sum(len(v) for _, v in self.blocks)

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.blocks]

    def block(self, name: str) -> np.ndarray:
        for n, v in self.blocks:
            if n == name:
                return v
        raise KeyError(name)

    def scalar(self, name: str) -> float:
        v = self.block(name)
        if len(v) != 1:
            raise ModelError(f"block {name!r} is not scalar")
        return float(v[0])

    def labels(self) -> list[str]:
        out = []
        for n, v in self.blocks:
            if len(v) == 1:
                out.append(n)
            else:
                out.extend(f"{n}[{i}]" for i in range(len(v)))
        return out

    def replace(self, vec) -> "Params":
        """Same shape and mask, values taken from the flat vector."""
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (len(self),):
            raise ModelError(f"expected {len(self)} values, got {vec.shape}")
        out, i = [], 0
        for n, v in self.blocks:
            out.append((n, vec[i:i + len(v)].copy()))
            i += len(v)
        return Params(out, self.fixed_mask.copy())

    def with_free(self, free_vec) -> "Params":
        """Fill only the unmasked entries from free_vec."""
        vec = self.flatten()
        vec[~self.fixed_mask] = np.asarray(free_vec, dtype=float)
        return self.replace(vec)

    def free_values(self) -> np.ndarray:
        return self.flatten()[~self.fixed_mask]

    def pin(self, **kw: float) -> "Params":
        """Copy with the named scalar blocks set and marked fixed."""
        vec = self.flatten()
        mask = self.fixed_mask.copy()
        i = 0
        want = dict(kw)
        for n, v in self.blocks:
            if n in want:
                if len(v) != 1:
                    raise ModelError(f"block {n!r} is not scalar; pin via mask")
                vec[i] = float(want.pop(n))
                mask[i] = True
            i += len(v)
        if want:
            raise KeyError(f"unknown parameter block(s): {sorted(want)}")
        return Params(self.blocks, mask).replace(vec)

    def concat(self, other: "Params", prefix: tuple[str, str] | None = None) -> "Params":
        a, b = self.blocks, other.blocks
        if prefix is not None:
            a = [(f"{prefix[0]}{n}", v) for n, v in a]
            b = [(f"{prefix[1]}{n}", v) for n, v in b]
        return Params(a + b, np.concatenate([self.fixed_mask, other.fixed_mask]))

    def copy(self) -> "Params":
        return Params([(n, v.copy()) for n, v in self.blocks], self.fixed_mask.copy())

    def __repr__(self):
        parts = ", ".join(f"{n}={np.array2string(v, precision=6)}" for n, v in self.blocks)
        return f"Params({parts})"


EMPTY_PARAMS = Params([])


# ---------------------------------------------------------------------------
# Settings groups


def _positive(name, value):
    if value <= 0:
        raise ModelError(f"{name} must be strictly positive, got {value}")


@dataclass
class MleSettings:
    method: str = "nelder_mead"  # nelder_mead | annealing | coordinate_cycle
    tolerance: float = 1e-8
    max_iter: int = 5000
    restarts: int = 1

    def __post_init__(self):
        if self.method not in ("nelder_mead", "annealing", "coordinate_cycle"):
            raise ModelError(f"unknown MLE method {self.method!r}")
        _positive("tolerance", self.tolerance)
        _positive("max_iter", self.max_iter)
        _positive("restarts", self.restarts)


@dataclass
class McmcSettings:
    burnin: int = 2000
    proposal: object = None  # Model; isotropic Normal step when None
    step_scale: float = 1.0
    thin: int = 1

    def __post_init__(self):
        _positive("burnin", self.burnin)
        _positive("step_scale", self.step_scale)
        _positive("thin", self.thin)


@dataclass
class KdeSettings:
    kernel: object = None  # Model with closed-form likelihood; Normal when None
    bandwidth: Params | None = None


@dataclass
class TruncMcSettings:
    normalizer_draws: int = 10000

    def __post_init__(self):
        _positive("normalizer_draws", self.normalizer_draws)
