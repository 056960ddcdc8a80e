"""Spectral seriation of a similarity matrix and related diagnostics."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mi_graph
from .errors import CapacityError, DisconnectedGraphError, ValidationError
from .mi_graph import EPS_EIG, check_weight_matrix

EPS_ROB = 1e-12
MAX_BRUTE_SITES = 10


@dataclass(frozen=True)
class Ordering:
    """A site permutation; ``perm[k]`` is the original site placed at position k."""

    perm: tuple
    cost: float
    stable: bool = True
    lambda1: float = float("nan")
    gap: float = float("nan")
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        perm = tuple(int(v) for v in self.perm)
        if sorted(perm) != list(range(len(perm))):
            raise ValidationError(f"{perm} is not a permutation")
        object.__setattr__(self, "perm", perm)

    def __len__(self):
        return len(self.perm)

    def __iter__(self):
        return iter(self.perm)

    def __getitem__(self, k):
        return self.perm[k]

    @property
    def inverse(self):
        inv = [0] * len(self.perm)
        for pos, site in enumerate(self.perm):
            inv[site] = pos
        return tuple(inv)

    def to_json(self):
        out = {
            "perm": list(self.perm),
            "cost": float(self.cost),
            "stable": bool(self.stable),
            "lambda1": _json_float(self.lambda1),
            "gap": _json_float(self.gap),
        }
        if self.meta:
            out["meta"] = self.meta
        return out

    @classmethod
    def from_json(cls, obj):
        return cls(
            perm=tuple(obj["perm"]),
            cost=float(obj["cost"]),
            stable=bool(obj.get("stable", True)),
            lambda1=_from_json_float(obj.get("lambda1")),
            gap=_from_json_float(obj.get("gap")),
            meta=obj.get("meta", {}),
        )


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _from_json_float(v):
    return float("nan") if v is None else float(v)


def canonicalize(perm):
    """Break the reversal symmetry: the first site index is below the last."""
    perm = list(perm)
    if len(perm) > 1 and perm[0] > perm[-1]:
        perm.reverse()
    return tuple(perm)


def _position_weights(n):
    pos = np.arange(n, dtype=float)
    return (pos[:, None] - pos[None, :]) ** 2


def perm_cost(W, ordering):
    """Half the sum of squared positional distance times permuted weight."""
    W = np.asarray(W, dtype=float)
    perm = np.asarray(getattr(ordering, "perm", ordering), dtype=np.int64)
    if W.shape != (perm.size, perm.size):
        raise ValidationError(f"ordering of length {perm.size} vs weight matrix {W.shape}")
    Wp = W[np.ix_(perm, perm)]
    return float(0.5 * np.sum(_position_weights(perm.size) * Wp))


def relaxed_cost(L, x):
    """x^T L x, the continuous relaxation of :func:`perm_cost`."""
    return mi_graph.quadratic_form(L, x)


def position_vector(perm):
    """Centered, unit-norm positions: entry i encodes where site i sits.

    This is the discrete point the relaxed cost is minimized over, so
    ``relaxed_cost(L, position_vector(p))`` is bounded below by lambda1.
    """
    perm = np.asarray(getattr(perm, "perm", perm), dtype=np.int64)
    n = perm.size
    inv = np.empty(n, dtype=float)
    inv[perm] = np.arange(1, n + 1)
    x = (inv - (n + 1) / 2) / (n / 2)
    norm = np.linalg.norm(x)
    return x / norm if norm > 0 else x


def _require_connected(spec, W=None):
    if spec.n > 1 and spec.eigenvalues[1] <= EPS_EIG:
        if W is not None:
            comps = mi_graph.connected_components(W)
        else:
            comps = _components_from_kernel(spec)
        raise DisconnectedGraphError(comps, lambda1=float(spec.eigenvalues[1]))


def _components_from_kernel(spec):
    # vertices sharing a kernel-basis row pattern lie in the same component
    k = spec.num_zero()
    K = spec.eigenvectors[:, :k]
    rows = np.round(K / np.maximum(np.linalg.norm(K, axis=1, keepdims=True), 1e-300), 6)
    groups = {}
    for v, key in enumerate(map(tuple, rows)):
        groups.setdefault(key, []).append(v)
    return sorted(groups.values())


def fiedler_order(spec, W=None):
    """Stable ascending argsort of the Fiedler vector.

    If ``W`` is given the ordering cost is filled in and, for a disconnected
    graph, the error carries the exact traversal-based components.
    """
    n = spec.n
    if n == 1:
        return Ordering((0,), 0.0, True, 0.0, 0.0)
    _require_connected(spec, W)
    x1 = spec.fiedler_vector
    perm = canonicalize(np.argsort(x1, kind="stable"))
    lam = spec.eigenvalues
    gap = float(lam[2] - lam[1]) if n > 2 else float("inf")
    stable = gap >= EPS_EIG
    cost = perm_cost(W, perm) if W is not None else float("nan")
    return Ordering(perm, cost, stable, float(lam[1]), gap)


def seriate(W, normalized=False):
    """Fiedler ordering straight from a weight matrix."""
    W = check_weight_matrix(W)
    spec = mi_graph.laplacian_spectrum(W, normalized=normalized)
    return fiedler_order(spec, W)


def brute_force_order(W):
    """Exact minimizer of :func:`perm_cost` over canonical permutations.

    Ties go to the lexicographically smallest permutation.
    """
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    if n > MAX_BRUTE_SITES:
        raise CapacityError(f"exhaustive search limited to n <= {MAX_BRUTE_SITES}, got {n}")
    if n == 1:
        return Ordering((0,), 0.0)
    a, b = np.triu_indices(n, 1)
    w = W[a, b]
    best, best_cost = None, math.inf
    for perms, sqdist in _canonical_perm_chunks(n):
        costs = sqdist @ w
        k = int(np.argmin(costs))
        # chunks arrive in lexicographic order; only a strictly better chunk minimum wins
        if best is None or costs[k] < best_cost - 1e-12 * max(1.0, abs(best_cost)):
            tol = 1e-12 * max(1.0, abs(costs[k]))
            k = int(np.flatnonzero(costs <= costs[k] + tol)[0])
            best, best_cost = tuple(perms[k].tolist()), float(costs[k])
    return Ordering(best, perm_cost(W, best))


_CHUNK_CACHE = {}


def _canonical_perm_chunks(n, chunk=1 << 17):
    """Yield (perms, squared positional distance per site pair) in lexicographic order."""
    if n in _CHUNK_CACHE:
        yield from _CHUNK_CACHE[n]
        return
    a, b = np.triu_indices(n, 1)
    chunks = []
    it = (p for p in itertools.permutations(range(n)) if p[0] < p[-1])
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            break
        perms = np.array(block, dtype=np.int8)
        pos = np.argsort(perms, axis=1).astype(float)
        sqdist = (pos[:, a] - pos[:, b]) ** 2
        chunks.append((perms, sqdist))
        yield perms, sqdist
    if n <= 8:
        _CHUNK_CACHE[n] = chunks


def is_robinson(W, eps=EPS_ROB):
    """True iff every row is non-decreasing toward the diagonal.

    Equivalently: left of the diagonal entries rise with the column index,
    right of it they fall.
    """
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    for i in range(n):
        left = W[i, :i]
        right = W[i, i + 1:]
        if np.any(np.diff(left) < -eps) or np.any(np.diff(right) > eps):
            return False
    return True


@dataclass(frozen=True, eq=False)
class Embedding:
    coords: np.ndarray  # shape (n, m)

    @property
    def m(self):
        return self.coords.shape[1]

    def to_csv(self, path):
        header = "site_index," + ",".join(f"coord_{k + 1}" for k in range(self.m))
        lines = [header]
        for i, row in enumerate(self.coords):
            lines.append(f"{i}," + ",".join(repr(float(v)) for v in row))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def spectral_embedding(spec, m):
    """Site i -> (x_1[i], ..., x_m[i]) from the first m nontrivial eigenvectors."""
    n = spec.n
    if not 1 <= m <= n - 1:
        raise ValidationError(f"embedding dimension must be in [1, {n - 1}], got {m}")
    _require_connected(spec)
    U = mi_graph.canonical_signs(spec.eigenvectors[:, 1:m + 1])
    return Embedding(U)


def spectral_gap(spec, k):
    if not 1 <= k <= spec.n - 1:
        raise ValidationError(f"gap index must be in [1, {spec.n - 1}], got {k}")
    lam = spec.eigenvalues
    gap = float(lam[k] - lam[k - 1])
    # below solver resolution the pair is degenerate
    if gap <= mi_graph.EPS_EIG * max(1.0, abs(float(lam[-1]))):
        return 0.0
    return gap


def stability_margin(spec, k, delta_frobenius):
    """Whether a perturbation of Frobenius size ``delta_frobenius`` stays under gap/sqrt(2).

    The boundary counts as stable.
    """
    return bool(delta_frobenius <= spectral_gap(spec, k) / math.sqrt(2.0))


def algebraic_connectivity(W):
    """Second-smallest eigenvalue of the normalized Laplacian."""
    spec = mi_graph.laplacian_spectrum(W, normalized=True)
    return spec.lambda1


def save_ordering(ordering, path):
    Path(path).write_text(json.dumps(ordering.to_json(), sort_keys=True) + "\n", encoding="utf-8")


def load_ordering(path):
    return Ordering.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
