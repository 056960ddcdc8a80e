"""Pairwise mutual-information graphs and their Laplacian spectra.

All information quantities are in nats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import MAX_ENUM_SITES, all_bitstrings
from .errors import CapacityError, IsolatedVertexError, ValidationError

EPS_EIG = 1e-9
EPS_ORTH = 1e-8
EPS_SYM = 1e-10
EPS_PROB = 1e-9

UNNORMALIZED = "unnormalized"
NORMALIZED = "normalized"


def check_weight_matrix(W):
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValidationError(f"weight matrix must be square, got shape {W.shape}")
    if not np.all(np.isfinite(W)):
        raise ValidationError("weight matrix has non-finite entries")
    if np.any(W < 0):
        raise ValidationError("weight matrix has negative entries")
    if np.any(np.diag(W) != 0):
        raise ValidationError("weight matrix must have a zero diagonal")
    if np.max(np.abs(W - W.T), initial=0.0) > EPS_SYM * max(1.0, np.max(W, initial=0.0)):
        raise ValidationError("weight matrix is not symmetric")
    return W


def _mi_from_joint(p11, p10, p01, p00):
    """Plug-in MI for a batch of 2x2 joints, with 0 ln 0 = 0."""
    pi1 = p11 + p10
    pj1 = p11 + p01
    pi0 = 1.0 - pi1
    pj0 = 1.0 - pj1
    mi = np.zeros_like(p11)
    for pxy, px, py in ((p11, pi1, pj1), (p10, pi1, pj0), (p01, pi0, pj1), (p00, pi0, pj0)):
        mask = pxy > 0
        mi[mask] += pxy[mask] * np.log(pxy[mask] / (px[mask] * py[mask]))
    return mi


def _assemble(p11, p1):
    """Symmetric MI matrix from pairwise P(x_i=1, x_j=1) and marginals P(x_i=1)."""
    p10 = p1[:, None] - p11
    p01 = p1[None, :] - p11
    p00 = 1.0 - p11 - p10 - p01
    # dust from subtraction can go slightly negative
    joints = [np.clip(q, 0.0, 1.0) for q in (p11, p10, p01, p00)]
    mi = _mi_from_joint(*joints)
    mi = np.maximum(0.5 * (mi + mi.T), 0.0)
    np.fill_diagonal(mi, 0.0)
    return mi


def empirical_pairwise_mi(ds):
    """Maximum-likelihood (plug-in) MI between every pair of sites.

    Each pair's 2x2 joint is built from exact integer counts, so the result
    does not depend on evaluation order.
    """
    X = np.asarray(getattr(ds, "samples", ds), dtype=np.int64)
    T = X.shape[0]
    if T < 1:
        raise ValidationError("no samples")
    n11 = X.T @ X
    n1 = X.sum(axis=0)
    return _assemble(n11 / T, n1 / T)


def exact_pairwise_mi(p, n=None, chunk=1 << 16):
    """Pairwise MI of an explicit distribution over all 2**n bit strings.

    ``p[k]`` is the probability of the string whose binary value is ``k``
    (site 0 most significant).
    """
    p = np.asarray(p, dtype=float)
    if n is None:
        n = int(round(np.log2(p.size)))
    if p.size != 2**n:
        raise ValidationError(f"distribution has {p.size} entries, expected 2**{n}")
    if n > MAX_ENUM_SITES:
        raise CapacityError(f"exact enumeration limited to n <= {MAX_ENUM_SITES}, got {n}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > EPS_PROB:
        raise ValidationError(f"distribution is not normalized (sum={p.sum():.12g})")
    p11 = np.zeros((n, n))
    p1 = np.zeros(n)
    for start in range(0, p.size, chunk):
        block = p[start:start + chunk]
        idx = np.arange(start, start + block.size, dtype=np.int64)
        B = ((idx[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(float)
        p11 += (B * block[:, None]).T @ B
        p1 += block @ B
    return _assemble(p11, p1)


def degrees(W):
    return np.asarray(W, dtype=float).sum(axis=1)


def laplacian(W, normalized=False):
    """L = D - W, or D^{-1/2} L D^{-1/2} when ``normalized``."""
    W = check_weight_matrix(W)
    d = W.sum(axis=1)
    L = np.diag(d) - W
    if not normalized:
        return L
    zero = np.flatnonzero(d <= 0)
    if zero.size:
        raise IsolatedVertexError(int(zero[0]))
    s = 1.0 / np.sqrt(d)
    L = s[:, None] * L * s[None, :]
    return 0.5 * (L + L.T)


def jacobi_eigh(A, tol=1e-15, max_sweeps=100):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, V)`` with eigenvalues ascending and eigenvectors in
    the columns of ``V``. Sweeps stop once the off-diagonal Frobenius mass is
    below ``tol * ||A||_F``.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    if n <= 1:
        return np.diag(A).copy(), V
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(n), V
    thresh = tol * scale
    iu = np.triu_indices(n, 1)
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(A[iu] ** 2))
        if off <= thresh:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300 or abs(apq) < 1e-18 * thresh:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) Givens rotation
                ap = A[:, p].copy()
                aq = A[:, q]
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :]
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q]
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    evals = np.diag(A).copy()
    order = np.argsort(evals, kind="stable")
    return evals[order], V[:, order]


def canonical_signs(V):
    """Flip each column so its largest-magnitude entry (first on ties) is positive."""
    V = np.array(V, dtype=float)
    for k in range(V.shape[1]):
        col = V[:, k]
        peak = np.max(np.abs(col))
        i = int(np.flatnonzero(np.abs(col) >= peak - 1e-12 * max(peak, 1.0))[0])
        if col[i] < 0:
            V[:, k] = -col
    return V


@dataclass(frozen=True, eq=False)
class LapSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns aligned with eigenvalues
    kind: str = UNNORMALIZED

    @property
    def n(self):
        return self.eigenvalues.size

    @property
    def lambda1(self):
        return float(self.eigenvalues[1]) if self.n > 1 else 0.0

    @property
    def fiedler_vector(self):
        return self.eigenvectors[:, 1]

    def num_zero(self, eps=EPS_EIG):
        return int(np.count_nonzero(self.eigenvalues < eps))

    def to_json(self):
        return {
            "kind": self.kind,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "eigenvectors": [[float(v) for v in col] for col in self.eigenvectors.T],
        }

    @classmethod
    def from_json(cls, obj):
        vecs = np.array(obj["eigenvectors"], dtype=float).T
        return cls(np.array(obj["eigenvalues"], dtype=float), vecs, obj.get("kind", UNNORMALIZED))


def eigendecompose(L, kind=UNNORMALIZED):
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValidationError(f"matrix must be square, got shape {L.shape}")
    if np.max(np.abs(L - L.T), initial=0.0) > EPS_SYM * max(1.0, np.max(np.abs(L), initial=0.0)):
        raise ValidationError("matrix is not symmetric")
    evals, V = jacobi_eigh(0.5 * (L + L.T))
    return LapSpectrum(evals, canonical_signs(V), kind)


def laplacian_spectrum(W, normalized=False):
    L = laplacian(W, normalized=normalized)
    return eigendecompose(L, NORMALIZED if normalized else UNNORMALIZED)


def quadratic_form(L, f):
    L = np.asarray(L, dtype=float)
    f = np.asarray(f, dtype=float)
    if f.shape != (L.shape[0],):
        raise ValidationError(f"vector of length {f.size} does not match {L.shape[0]}x{L.shape[1]}")
    return float(f @ L @ f)


def pairwise_difference_sum(W, f):
    """(1/2) sum_ij w_ij (f_i - f_j)^2 by direct double sum."""
    W = np.asarray(W, dtype=float)
    f = np.asarray(f, dtype=float)
    if f.shape != (W.shape[0],):
        raise ValidationError(f"vector of length {f.size} does not match {W.shape[0]}x{W.shape[1]}")
    return float(0.5 * np.sum(W * (f[:, None] - f[None, :]) ** 2))


def connected_components(W, edge_threshold=0.0):
    """Vertex partition of the graph with edges {w_ij > edge_threshold}.

    Components are listed by smallest member; each is sorted.
    """
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    adj = W > edge_threshold
    seen = np.zeros(n, dtype=bool)
    comps = []
    for root in range(n):
        if seen[root]:
            continue
        seen[root] = True
        stack, comp = [root], []
        while stack:
            v = stack.pop()
            comp.append(v)
            for u in np.flatnonzero(adj[v] & ~seen):
                seen[u] = True
                stack.append(int(u))
        comps.append(sorted(comp))
    return comps


def save_matrix_csv(M, path):
    M = np.asarray(M, dtype=float)
    lines = [",".join(repr(float(v)) for v in row) for row in M]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_matrix_csv(path):
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from exc
    M = np.array(rows, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"matrix file must be square, got shape {M.shape}")
    return M


def save_spectrum(spec, path):
    Path(path).write_text(json.dumps(spec.to_json(), sort_keys=True) + "\n", encoding="utf-8")


def load_spectrum(path):
    return LapSpectrum.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
