"""Network data container, CSV ingestion and design-matrix builders."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .relindex import n_relations, pair_arrays

__all__ = [
    "NetworkDataError",
    "RankDeficientError",
    "NetworkData",
    "RawNetwork",
    "load_network",
    "build_design_polbooks",
    "build_design_sim",
    "build_design_custom",
    "impute_missing_X",
    "check_full_rank",
    "write_network",
    "read_network",
]


class NetworkDataError(ValueError):
    """Malformed or inconsistent network input."""


class RankDeficientError(NetworkDataError):
    pass


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NetworkData:
    """Binary undirected network with dyadic covariates.

    ``y`` and the rows of ``X`` follow the column-wise upper-triangle dyad
    order. Entries of ``y`` flagged in ``missing`` are placeholders.
    """

    n: int
    y: np.ndarray
    X: np.ndarray
    columns: tuple[str, ...]
    missing: np.ndarray = None
    actor_ids: tuple = None

    def __post_init__(self):
        N = n_relations(self.n)
        if self.n < 3:
            raise NetworkDataError("need at least three actors")
        y = np.asarray(self.y)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        miss = np.zeros(N, bool) if self.missing is None else np.asarray(self.missing, bool)
        if y.shape != (N,) or X.shape[0] != N or miss.shape != (N,):
            raise NetworkDataError(f"array shapes do not match n={self.n} ({N} dyads)")
        if len(self.columns) != X.shape[1]:
            raise NetworkDataError("column names do not match X")
        yo = y[~miss]
        if yo.size and not np.all((yo == 0) | (yo == 1)):
            raise NetworkDataError("observed y must be binary")
        if not np.all(np.isfinite(X)):
            raise NetworkDataError("X has non-finite entries; impute first")
        y = np.where(miss, 0, y)
        object.__setattr__(self, "y", _frozen(y, np.int8))
        object.__setattr__(self, "X", _frozen(X, float))
        object.__setattr__(self, "missing", _frozen(miss, bool))
        object.__setattr__(self, "columns", tuple(self.columns))
        ids = tuple(range(self.n)) if self.actor_ids is None else tuple(self.actor_ids)
        if len(ids) != self.n:
            raise NetworkDataError("actor_ids length must equal n")
        object.__setattr__(self, "actor_ids", ids)

    @property
    def n_rel(self) -> int:
        return n_relations(self.n)

    @property
    def observed(self) -> np.ndarray:
        return ~self.missing

    @property
    def has_missing(self) -> bool:
        return bool(self.missing.any())

    def with_missing(self, idx) -> "NetworkData":
        """Copy with the relations in ``idx`` additionally treated as missing."""
        miss = self.missing.copy()
        miss[np.asarray(idx, dtype=np.int64)] = True
        return NetworkData(self.n, self.y, self.X, self.columns, miss, self.actor_ids)


@dataclass
class RawNetwork:
    """Parsed CSV input before a design formula is applied."""

    ids: list
    y: np.ndarray  # float, nan where unobserved
    edge_attrs: dict[str, np.ndarray] = field(default_factory=dict)
    node_attrs: dict[str, list] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.y)


def _sorted_ids(ids) -> list:
    ids = list(ids)
    try:
        return sorted(ids, key=lambda s: (0, int(s)))
    except ValueError:
        return sorted(ids)


def _read_rows(path: Path) -> tuple[list[str], list[dict]]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise NetworkDataError(f"{path}: empty CSV")
            header = [h.strip() for h in reader.fieldnames]
            rows = [{k.strip(): (v or "").strip() for k, v in r.items() if k is not None} for r in reader]
    except OSError as exc:
        raise NetworkDataError(f"cannot read {path}: {exc}") from None
    except csv.Error as exc:
        raise NetworkDataError(f"{path}: malformed CSV: {exc}") from None
    return header, rows


def _float(s: str, what: str) -> float:
    if s == "" or s.upper() in ("NA", "NAN"):
        return math.nan
    try:
        return float(s)
    except ValueError:
        raise NetworkDataError(f"non-numeric {what}: {s!r}") from None


def load_network(edges: str | Path, nodes: str | Path | None = None) -> RawNetwork:
    """Read an edge CSV (``i,j[,y][,extra...]``) and optional node CSV (``id,...``).

    Without a ``y`` column the file is an edge list: listed pairs are 1 and
    every other pair is 0. With a ``y`` column, unlisted pairs and blank
    ``y`` cells are missing. Extra edge columns become dyadic attributes.
    Actors are relabelled 0..n-1 in sorted order of their original ids.
    """
    header, rows = _read_rows(Path(edges))
    if "i" not in header or "j" not in header:
        raise NetworkDataError("edge file needs columns i and j")
    has_y = "y" in header
    extra = [h for h in header if h not in ("i", "j", "y")]

    node_attrs: dict[str, list] = {}
    if nodes is not None:
        nheader, nrows = _read_rows(Path(nodes))
        if "id" not in nheader:
            raise NetworkDataError("node file needs an id column")
        node_ids = [r["id"] for r in nrows]
        if len(set(node_ids)) != len(node_ids):
            raise NetworkDataError("duplicate ids in node file")
        ids = _sorted_ids(node_ids)
        by_id = {r["id"]: r for r in nrows}
        for col in nheader:
            if col != "id":
                node_attrs[col] = [by_id[a][col] for a in ids]
    else:
        ids = _sorted_ids({r["i"] for r in rows} | {r["j"] for r in rows})

    pos = {a: k for k, a in enumerate(ids)}
    n = len(ids)
    if n < 3:
        raise NetworkDataError("need at least three actors")
    N = n_relations(n)
    y = np.full(N, np.nan) if has_y else np.zeros(N)
    attrs = {c: np.full(N, np.nan) for c in extra}
    seen = np.zeros(N, bool)
    for line, r in enumerate(rows, start=2):
        a, b = r["i"], r["j"]
        if a not in pos or b not in pos:
            raise NetworkDataError(f"line {line}: unknown node id in edge ({a}, {b})")
        i, j = pos[a], pos[b]
        if i == j:
            raise NetworkDataError(f"line {line}: self-loop ({a}, {b}) is not allowed")
        i, j = min(i, j), max(i, j)
        d = j * (j - 1) // 2 + i
        if seen[d]:
            raise NetworkDataError(f"line {line}: duplicate pair ({a}, {b})")
        seen[d] = True
        if has_y:
            v = _float(r["y"], "y")
            if not (math.isnan(v) or v in (0.0, 1.0)):
                raise NetworkDataError(f"line {line}: y must be 0 or 1, got {r['y']!r}")
            y[d] = v
        else:
            y[d] = 1.0
        for c in extra:
            attrs[c][d] = _float(r[c], c)
    return RawNetwork(ids, y, attrs, node_attrs)


_CLASS_ALIASES = {
    "c": "conservative",
    "conservative": "conservative",
    "l": "liberal",
    "liberal": "liberal",
    "n": "neutral",
    "neutral": "neutral",
}


def build_design_polbooks(classes) -> tuple[np.ndarray, tuple[str, ...]]:
    """Columns: intercept, same class, either actor neutral."""
    labels = []
    for k, c in enumerate(classes):
        if c is None or str(c).strip() == "":
            raise NetworkDataError(f"actor {k} has no class label")
        labels.append(_CLASS_ALIASES.get(str(c).strip().lower(), str(c).strip().lower()))
    n = len(labels)
    I, J = pair_arrays(n)
    lab = np.array(labels)
    neutral = lab == "neutral"
    X = np.column_stack(
        [
            np.ones(len(I)),
            (lab[I] == lab[J]).astype(float),
            (neutral[I] | neutral[J]).astype(float),
        ]
    )
    return X, ("intercept", "same_class", "either_neutral")


def build_design_sim(x1, x2, x3) -> tuple[np.ndarray, tuple[str, ...]]:
    """Columns: intercept, both x1 = 1, |x2_i - x2_j|, dyadic x3."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    x3 = np.asarray(x3, dtype=float)
    n = len(x1)
    if len(x2) != n or x3.shape != (n_relations(n),):
        raise NetworkDataError("covariate lengths do not match the actor count")
    I, J = pair_arrays(n)
    X = np.column_stack(
        [
            np.ones(len(I)),
            ((x1[I] == 1) & (x1[J] == 1)).astype(float),
            np.abs(x2[I] - x2[J]),
            x3,
        ]
    )
    return X, ("intercept", "both_x1", "abs_diff_x2", "x3")


def build_design_custom(raw: RawNetwork, columns=None, intercept: bool = True):
    """Dyadic columns taken straight from the edge file.

    Returns ``(X, names, cell_missing)``; blank cells are flagged, not filled.
    """
    names = list(raw.edge_attrs) if columns is None else list(columns)
    cols, out = [], []
    for c in names:
        if c == "intercept":
            continue
        if c not in raw.edge_attrs:
            raise NetworkDataError(f"unknown dyadic column {c!r}")
        cols.append(raw.edge_attrs[c])
        out.append(c)
    N = len(raw.y)
    if intercept or "intercept" in names:
        cols.insert(0, np.ones(N))
        out.insert(0, "intercept")
    if not cols:
        raise NetworkDataError("design has no columns")
    X = np.column_stack(cols)
    return X, tuple(out), np.isnan(X)


def impute_missing_X(X: np.ndarray, cell_missing: np.ndarray) -> np.ndarray:
    """Replace flagged cells by the mean of the observed cells in their column."""
    X = np.array(X, dtype=float, copy=True)
    cell_missing = np.asarray(cell_missing, bool)
    if not cell_missing.any():
        return X
    obs = ~cell_missing
    counts = obs.sum(axis=0)
    if np.any(counts == 0):
        bad = int(np.flatnonzero(counts == 0)[0])
        raise NetworkDataError(f"column {bad} has no observed values")
    means = np.where(obs, X, 0.0).sum(axis=0) / counts
    X[cell_missing] = np.broadcast_to(means, X.shape)[cell_missing]
    return X


def check_full_rank(X: np.ndarray, rows=None) -> None:
    Xs = X if rows is None else X[rows]
    r = np.linalg.matrix_rank(Xs)
    if r < X.shape[1]:
        raise RankDeficientError(f"design matrix has rank {r} < {X.shape[1]} columns")


def write_network(data: NetworkData, directory: str | Path) -> Path:
    """Write ``edges.csv`` (every dyad, blank y when missing) plus ``columns.json``.

    Values use 17 significant digits so a reload is bit-identical.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    I, J = pair_arrays(data.n)
    ids = data.actor_ids
    with open(d / "edges.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "y", *data.columns])
        for k in range(data.n_rel):
            yv = "" if data.missing[k] else str(int(data.y[k]))
            w.writerow([ids[I[k]], ids[J[k]], yv, *("%.17g" % v for v in data.X[k])])
    with open(d / "nodes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id"])
        for a in ids:
            w.writerow([a])
    meta = {"n": data.n, "columns": list(data.columns), "formula": "custom"}
    (d / "columns.json").write_text(json.dumps(meta, indent=2) + "\n")
    return d


def read_network(directory: str | Path) -> NetworkData:
    """Inverse of :func:`write_network`."""
    d = Path(directory)
    meta = json.loads((d / "columns.json").read_text())
    raw = load_network(d / "edges.csv", d / "nodes.csv")
    cols = meta["columns"]
    X = np.column_stack([raw.edge_attrs[c] for c in cols])
    miss = raw.missing
    return NetworkData(raw.n, np.nan_to_num(raw.y), X, tuple(cols), miss, tuple(raw.ids))
