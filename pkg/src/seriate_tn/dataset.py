"""Binary datasets: bars-and-stripes, Ising-tree Gibbs samples, Markov chains.

Samples are stored as a ``(T, n)`` uint8 array. Bit strings are read with
site 0 as the most significant bit whenever a configuration is mapped to an
integer index (see :func:`all_bitstrings`).
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CapacityError, DomainError, ParseError, ValidationError

MAX_ENUM_SITES = 20
MAX_BAS_SITES = 24


@dataclass(frozen=True, eq=False)
class BitDataset:
    samples: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if arr.ndim != 2:
            raise ValidationError(f"samples must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValidationError("no samples")
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ValidationError("samples must contain only 0/1")
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def n(self):
        return self.samples.shape[1]

    @property
    def T(self):
        return self.samples.shape[0]

    def __len__(self):
        return self.T

    def __eq__(self, other):
        if not isinstance(other, BitDataset):
            return NotImplemented
        return np.array_equal(self.samples, other.samples)

    def __hash__(self):
        return hash((self.samples.shape, self.samples.tobytes()))

    def unique(self):
        """Distinct samples and their multiplicities (lexicographic order)."""
        return np.unique(self.samples, axis=0, return_counts=True)

    def empirical_distribution(self):
        """Map bit-string -> probability (multiplicity / T)."""
        uniq, counts = self.unique()
        return {
            "".join(map(str, row)): c / self.T for row, c in zip(uniq.tolist(), counts.tolist())
        }

    def entropy(self):
        """Shannon entropy of the empirical distribution, in nats."""
        _, counts = self.unique()
        p = counts / self.T
        return float(-np.sum(p * np.log(p)))


@dataclass(frozen=True)
class IsingTree:
    n: int
    edges: tuple  # ((i, j, J), ...)

    def __post_init__(self):
        edges = tuple((int(i), int(j), float(J)) for i, j, J in self.edges)
        object.__setattr__(self, "edges", edges)
        _check_tree(self.n, edges)

    @property
    def max_coupling(self):
        return max(abs(J) for _, _, J in self.edges)

    def energies(self):
        """H(s) = -sum J_ij s_i s_j for every configuration (index order of all_bitstrings)."""
        spins = 2.0 * all_bitstrings(self.n) - 1.0
        H = np.zeros(spins.shape[0])
        for i, j, J in self.edges:
            H -= J * spins[:, i] * spins[:, j]
        return H

    def gibbs_distribution(self, beta):
        if beta < 0:
            raise DomainError(f"beta must be >= 0, got {beta}")
        if self.n > MAX_ENUM_SITES:
            raise CapacityError(f"exact enumeration limited to n <= {MAX_ENUM_SITES}, got {self.n}")
        logits = -beta * self.energies()
        logits -= logits.max()
        p = np.exp(logits)
        return p / p.sum()

    def to_json(self):
        return {"n": self.n, "edges": [[i, j, J] for i, j, J in self.edges]}

    @classmethod
    def from_json(cls, obj):
        return cls(n=int(obj["n"]), edges=tuple(tuple(e) for e in obj["edges"]))


def _check_tree(n, edges):
    if n < 2:
        raise DomainError(f"tree needs n >= 2, got {n}")
    if len(edges) != n - 1:
        raise ValidationError(f"a tree on {n} nodes has {n - 1} edges, got {len(edges)}")
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    seen = set()
    for i, j, J in edges:
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise ValidationError(f"bad edge ({i}, {j})")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise ValidationError(f"duplicate edge {key}")
        seen.add(key)
        if J == 0:
            raise ValidationError(f"zero coupling on edge {key}")
        ri, rj = find(i), find(j)
        if ri == rj:
            raise ValidationError(f"edge {key} closes a cycle")
        parent[ri] = rj


def all_bitstrings(n):
    """All 2**n configurations as a uint8 array, site 0 most significant."""
    idx = np.arange(2**n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(np.uint8)


def bits_to_index(samples):
    samples = np.asarray(samples, dtype=np.int64)
    n = samples.shape[-1]
    weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    return samples @ weights


def gen_bas(rows, cols):
    """Every bars and every stripes pattern of a ``rows x cols`` grid, deduplicated.

    Patterns are flattened row-major and returned in lexicographic order.
    """
    if rows < 1 or cols < 1:
        raise DomainError(f"grid must be at least 1x1, got {rows}x{cols}")
    if rows * cols > MAX_BAS_SITES:
        raise CapacityError(f"bars-and-stripes limited to {MAX_BAS_SITES} sites, got {rows * cols}")
    patterns = []
    for bits in all_bitstrings(rows):
        patterns.append(np.repeat(bits[:, None], cols, axis=1).ravel())
    for bits in all_bitstrings(cols):
        patterns.append(np.repeat(bits[None, :], rows, axis=0).ravel())
    return BitDataset(np.unique(np.array(patterns), axis=0))


def prufer_to_edges(seq, n):
    """Decode a Prufer sequence into the n-1 edges of a labeled tree."""
    degree = [1] * n
    for v in seq:
        degree[v] += 1
    leaves = [v for v in range(n) if degree[v] == 1]
    heapq.heapify(leaves)
    edges = []
    for v in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, v))
        degree[v] -= 1
        if degree[v] == 1:
            heapq.heappush(leaves, v)
    u, w = heapq.heappop(leaves), heapq.heappop(leaves)
    edges.append((u, w))
    return edges


def gen_ising_tree(n, seed, coupling_range=(0.1, 1.0)):
    """Uniformly random labeled tree with couplings of random sign.

    ``coupling_range`` gives the magnitude interval ``[lo, hi]``; with a fair
    random sign this is uniform on ``[-hi, -lo] U [lo, hi]``.
    """
    if n < 2:
        raise DomainError(f"tree needs n >= 2, got {n}")
    lo, hi = coupling_range
    if not 0 < lo <= hi:
        raise DomainError(f"coupling magnitudes need 0 < lo <= hi, got {coupling_range}")
    rng = np.random.default_rng(seed)
    seq = rng.integers(0, n, size=n - 2).tolist()
    pairs = prufer_to_edges(seq, n)
    mags = rng.uniform(lo, hi, size=n - 1)
    signs = rng.choice((-1.0, 1.0), size=n - 1)
    edges = tuple(
        (min(i, j), max(i, j), float(s * m)) for (i, j), s, m in zip(pairs, signs, mags)
    )
    return IsingTree(n=n, edges=tuple(sorted(edges)))


def default_beta(tree):
    return 0.6 / tree.max_coupling


def sample_from_distribution(p, n, T, seed):
    rng = np.random.default_rng(seed)
    idx = rng.choice(p.size, size=T, p=p)
    return BitDataset(all_bitstrings(n)[idx])


def sample_gibbs(tree, beta, T, seed):
    """Draw T i.i.d. configurations from exp(-beta H) by exact enumeration."""
    if T < 1:
        raise DomainError(f"T must be >= 1, got {T}")
    p = tree.gibbs_distribution(beta)
    return sample_from_distribution(p, tree.n, T, seed)


def gen_markov_chain(n, flip_prob, T, seed):
    """T independent symmetric two-state chains of length n."""
    if not 0 < flip_prob < 1:
        raise DomainError(f"flip_prob must lie in (0, 1), got {flip_prob}")
    if n < 1 or T < 1:
        raise DomainError(f"need n >= 1 and T >= 1, got n={n}, T={T}")
    rng = np.random.default_rng(seed)
    first = rng.integers(0, 2, size=(T, 1), dtype=np.uint8)
    flips = (rng.random((T, n - 1)) < flip_prob).astype(np.uint8)
    x = np.concatenate([first, flips], axis=1)
    return BitDataset(np.bitwise_xor.accumulate(x, axis=1))


def markov_chain_distribution(n, flip_prob):
    """Exact law of the symmetric chain over all 2**n strings."""
    if not 0 < flip_prob < 1:
        raise DomainError(f"flip_prob must lie in (0, 1), got {flip_prob}")
    if n > MAX_ENUM_SITES:
        raise CapacityError(f"exact enumeration limited to n <= {MAX_ENUM_SITES}, got {n}")
    x = all_bitstrings(n)
    nflips = np.count_nonzero(np.diff(x.astype(np.int8), axis=1), axis=1)
    return 0.5 * flip_prob**nflips * (1 - flip_prob) ** (n - 1 - nflips)


def _as_perm(ordering, n):
    perm = np.asarray(getattr(ordering, "perm", ordering), dtype=np.int64)
    if perm.shape != (n,):
        raise ValidationError(f"ordering has length {perm.size}, dataset has {n} sites")
    if not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValidationError(f"ordering is not a permutation of 0..{n - 1}")
    return perm


def permute_dataset(ds, ordering):
    """Reorder sites: output position k holds input site ``ordering[k]``."""
    perm = _as_perm(ordering, ds.n)
    return BitDataset(ds.samples[:, perm])


def save_dataset(ds, path, comment=None):
    lines = []
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.extend("".join("01"[b] for b in row) for row in ds.samples.tolist())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_dataset(path):
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            bad = set(line) - {"0", "1"}
            if bad:
                raise ParseError(f"invalid character(s) {''.join(sorted(bad))!r}", lineno)
            if width is None:
                width = len(line)
            elif len(line) != width:
                raise ParseError(f"expected {width} bits, got {len(line)}", lineno)
            rows.append([ord(c) - 48 for c in line])
    if not rows:
        raise ParseError("no samples")
    return BitDataset(np.array(rows, dtype=np.uint8))


def save_tree(tree, path):
    Path(path).write_text(json.dumps(tree.to_json()) + "\n", encoding="utf-8")


def load_tree(path):
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from exc
    return IsingTree.from_json(obj)
