"""Indexing of undirected dyads and of the three dyad-pair classes.

Dyads ``(i, j)`` with ``i < j`` are laid out column by column over the upper
triangle of the adjacency matrix, so ``(0, 1), (0, 2), (1, 2), (0, 3), ...``.
The position of ``(i, j)`` is therefore ``j (j - 1) / 2 + i`` and does not
depend on the number of actors.

Pairs of dyads fall into three classes: identical dyads, dyads sharing exactly
one actor, and disjoint dyads. Counts here are *ordered* pair counts, i.e. the
number of unit entries of the corresponding indicator matrix.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = [
    "DegenerateSampleError",
    "n_relations",
    "n_actors",
    "pair_to_index",
    "index_to_pair",
    "pair_arrays",
    "theta_counts",
    "theta2_population",
    "sample_theta2",
]


class DegenerateSampleError(ValueError):
    """No admissible shared-actor pair exists under the given missingness."""


def n_relations(n: int) -> int:
    return n * (n - 1) // 2


def n_actors(n_rel: int) -> int:
    """Invert ``n_relations``; raises if ``n_rel`` is not triangular."""
    n = int(round((1 + np.sqrt(1 + 8 * n_rel)) / 2))
    if n_relations(n) != n_rel:
        raise ValueError(f"{n_rel} is not a triangular number of dyads")
    return n


def pair_to_index(i: int, j: int, n: int) -> int:
    if not (0 <= i < j < n):
        raise ValueError(f"need 0 <= i < j < n, got i={i}, j={j}, n={n}")
    return j * (j - 1) // 2 + i


def index_to_pair(d: int, n: int) -> tuple[int, int]:
    if not (0 <= d < n_relations(n)):
        raise ValueError(f"relation index {d} out of range for n={n}")
    I, J = pair_arrays(n)
    return int(I[d]), int(J[d])


@lru_cache(maxsize=64)
def _pair_arrays(n: int) -> tuple[np.ndarray, np.ndarray]:
    J = np.repeat(np.arange(1, n), np.arange(1, n))
    I = np.concatenate([np.arange(j) for j in range(1, n)]) if n > 1 else np.empty(0, int)
    I.setflags(write=False)
    J.setflags(write=False)
    return I, J


def pair_arrays(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column actor of every dyad, in relation-index order (read-only)."""
    if n < 2:
        raise ValueError("need at least two actors")
    return _pair_arrays(n)


def theta_counts(n: int) -> tuple[int, int, int]:
    """Ordered pair counts ``(|Theta1|, |Theta2|, |Theta3|)``.

    >>> theta_counts(4)
    (6, 24, 6)
    """
    if n < 3:
        raise ValueError("need at least three actors")
    t1 = n_relations(n)
    t2 = n * (n - 1) * (n - 2)
    t3 = t1 * (n - 2) * (n - 3) // 2
    return t1, t2, t3


def _observed_dyads_by_actor(n: int, missing: np.ndarray | None) -> list[np.ndarray]:
    I, J = pair_arrays(n)
    obs = np.ones(len(I), bool) if missing is None else ~np.asarray(missing, bool)
    return [np.flatnonzero(((I == a) | (J == a)) & obs) for a in range(n)]


def theta2_population(n: int, missing: np.ndarray | None = None) -> int:
    """Number of unordered shared-actor pairs with both dyads observed."""
    if missing is None:
        return n * (n - 1) * (n - 2) // 2
    dyads = _observed_dyads_by_actor(n, missing)
    deg = np.array([len(d) for d in dyads])
    return int((deg * (deg - 1) // 2).sum())


def _enumerate_theta2(dyads: list[np.ndarray]) -> np.ndarray:
    out = []
    for d in dyads:
        if len(d) < 2:
            continue
        a, b = np.triu_indices(len(d), k=1)
        out.append(np.column_stack([d[a], d[b]]))
    if not out:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(out).astype(np.int64)


def sample_theta2(
    n: int,
    m: int,
    rng: np.random.Generator,
    missing: np.ndarray | None = None,
) -> np.ndarray:
    """Sample ``m`` unordered pairs of dyads that share exactly one actor.

    Draws are uniform over admissible pairs (both dyads observed) and made
    with replacement. When ``m`` is at least the population size the whole
    population is returned instead, in a fixed order.

    Returns
    -------
    ndarray of shape (k, 2)
        Relation indices ``(d1, d2)`` of each pair.
    """
    if n < 3:
        raise ValueError("need at least three actors")
    if m < 1:
        raise ValueError("sample size must be positive")

    if missing is None:
        pop = n * (n - 1) * (n - 2) // 2
        if m >= pop:
            dyads = _observed_dyads_by_actor(n, None)
            return _enumerate_theta2(dyads)
        # shared actor, then two distinct partners; each pair has one shared actor
        a = rng.integers(0, n, size=m)
        u = rng.integers(0, n - 1, size=m)
        v = rng.integers(0, n - 2, size=m)
        v = v + (v >= u)
        # u, v index the n - 1 actors other than a
        u = u + (u >= a)
        v = v + (v >= a)
        lo = np.minimum(u, a)
        hi = np.maximum(u, a)
        d1 = hi * (hi - 1) // 2 + lo
        lo = np.minimum(v, a)
        hi = np.maximum(v, a)
        d2 = hi * (hi - 1) // 2 + lo
        return np.column_stack([d1, d2]).astype(np.int64)

    dyads = _observed_dyads_by_actor(n, missing)
    deg = np.array([len(d) for d in dyads])
    weight = deg * (deg - 1) / 2.0
    pop = int(weight.sum())
    if pop == 0:
        raise DegenerateSampleError("no observed pair of dyads shares an actor")
    if m >= pop:
        return _enumerate_theta2(dyads)
    a = rng.choice(n, size=m, p=weight / weight.sum())
    da = deg[a]
    u = (rng.random(m) * da).astype(np.int64)
    v = (rng.random(m) * (da - 1)).astype(np.int64)
    v = v + (v >= u)
    flat = np.concatenate(dyads).astype(np.int64)
    start = np.concatenate([[0], np.cumsum(deg)[:-1]])
    return np.column_stack([flat[start[a] + u], flat[start[a] + v]])
