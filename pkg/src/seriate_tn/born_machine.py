"""Real-valued matrix product state Born machines.

A model with cores ``A[i]`` of shape ``(chi_left, 2, chi_right)`` defines
``P(x) = psi(x)**2 / ||psi||**2`` with ``psi(x) = A[0][:, x0, :] @ ... @ A[n-1][:, x_{n-1}, :]``.
Normalization is always computed by transfer-matrix contraction, so cores
never need to be kept in canonical form.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import MAX_ENUM_SITES, BitDataset
from .errors import CapacityError, DivergenceError, DomainError, SupportError, ValidationError

P_FLOOR = 1e-300
EPS_NORM = 1e-8
MAX_INIT_ATTEMPTS = 10


@dataclass(eq=False)
class MPSModel:
    cores: list

    def __post_init__(self):
        cores = [np.array(c, dtype=np.float64) for c in self.cores]
        if not cores:
            raise ValidationError("model needs at least one core")
        for i, c in enumerate(cores):
            if c.ndim != 3 or c.shape[1] != 2:
                raise ValidationError(f"core {i} has shape {c.shape}, expected (l, 2, r)")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValidationError("boundary bonds must have dimension 1")
        for i in range(len(cores) - 1):
            if cores[i].shape[2] != cores[i + 1].shape[0]:
                raise ValidationError(f"bond mismatch between cores {i} and {i + 1}")
        self.cores = cores

    @property
    def n(self):
        return len(self.cores)

    @property
    def bond_dims(self):
        return tuple(c.shape[2] for c in self.cores[:-1])

    def copy(self):
        return MPSModel([c.copy() for c in self.cores])

    def fingerprint(self):
        """Hex digest of the raw core bytes; equal models share it."""
        import hashlib

        h = hashlib.sha256()
        for c in self.cores:
            h.update(np.ascontiguousarray(c, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 300
    seed: int = 0
    record_every: int = 10

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DomainError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise DomainError(f"epochs must be >= 0, got {self.epochs}")
        if self.record_every < 1:
            raise DomainError(f"record_every must be >= 1, got {self.record_every}")


def capped_bond_dims(n, chi):
    return tuple(min(chi, 2**i, 2 ** (n - i)) for i in range(1, n))


def init_random_mps(n, chi, seed):
    """Gaussian cores, then one common rescaling so that ||psi|| = 1."""
    if n < 1 or chi < 1:
        raise DomainError(f"need n >= 1 and chi >= 1, got n={n}, chi={chi}")
    rng = np.random.default_rng(seed)
    dims = (1,) + capped_bond_dims(n, chi) + (1,)
    cores = [rng.standard_normal((dims[i], 2, dims[i + 1])) for i in range(n)]
    m = MPSModel(cores)
    return normalize(m)


def normalize(m):
    """Rescale every core by the same factor so the state has unit norm."""
    logz = log_norm_squared(m)
    factor = math.exp(-logz / (2 * m.n))
    return MPSModel([c * factor for c in m.cores])


def _left_transfer(cores):
    """Left environments E[i] = contraction of cores[:i] with themselves."""
    env = np.ones((1, 1))
    envs = [env]
    for c in cores:
        env = np.einsum("ab,asc,bsd->cd", env, c, c)
        envs.append(env)
    return envs


def _right_transfer(cores):
    """Right environments R[i] = contraction of cores[i:] with themselves."""
    env = np.ones((1, 1))
    envs = [env]
    for c in reversed(cores):
        env = np.einsum("asc,bsd,cd->ab", c, c, env)
        envs.append(env)
    return envs[::-1]


def log_norm_squared(m):
    """ln ||psi||^2 by transfer-matrix sweep with running rescaling."""
    env = np.ones((1, 1))
    log_scale = 0.0
    for c in m.cores:
        env = np.einsum("ab,asc,bsd->cd", env, c, c)
        s = np.max(np.abs(env))
        if s == 0 or not np.isfinite(s):
            return -math.inf if s == 0 else math.inf
        env /= s
        log_scale += math.log(s)
    return log_scale + math.log(float(env[0, 0])) if env[0, 0] > 0 else -math.inf


def norm_squared(m):
    return math.exp(log_norm_squared(m))


def _as_samples(m, X):
    X = np.asarray(getattr(X, "samples", X))
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != m.n:
        raise ValidationError(f"samples have {X.shape[1]} bits, model has {m.n} sites")
    return X.astype(np.intp)


def amplitudes(m, X):
    """psi(x) for each row of X by a left-to-right matrix chain."""
    X = _as_samples(m, X)
    v = np.ones((X.shape[0], 1))
    for i, c in enumerate(m.cores):
        # c[:, x, :] -> (U, l, r)
        v = np.einsum("ua,uab->ub", v, c[:, X[:, i], :].transpose(1, 0, 2))
    return v[:, 0]


def probs(m, X):
    return amplitudes(m, X) ** 2 / norm_squared(m)


def prob(m, x):
    x = np.asarray(x)
    if x.shape != (m.n,):
        raise ValidationError(f"bit-vector of length {x.size} for a model with {m.n} sites")
    return float(probs(m, x[None, :])[0])


def dense_state(m):
    """Full 2**n amplitude vector by successive core contraction (site 0 most significant)."""
    if m.n > MAX_ENUM_SITES:
        raise CapacityError(f"exact enumeration limited to n <= {MAX_ENUM_SITES}, got {m.n}")
    psi = m.cores[0].reshape(2, -1)
    for c in m.cores[1:]:
        psi = np.tensordot(psi, c, axes=([1], [0])).reshape(-1, c.shape[2])
    return psi[:, 0]


def exact_distribution(m):
    psi = dense_state(m)
    p = psi**2
    return p / p.sum()


def sample(m, T, seed):
    """Exact i.i.d. samples, drawn site by site from conditional marginals."""
    if T < 1:
        raise DomainError(f"T must be >= 1, got {T}")
    rng = np.random.default_rng(seed)
    right = _right_transfer(m.cores)
    out = np.empty((T, m.n), dtype=np.uint8)
    v = np.ones((T, 1))
    for i, c in enumerate(m.cores):
        R = right[i + 1]
        v0 = v @ c[:, 0, :]
        v1 = v @ c[:, 1, :]
        w0 = np.einsum("ua,ab,ub->u", v0, R, v0)
        w1 = np.einsum("ua,ab,ub->u", v1, R, v1)
        p1 = w1 / (w0 + w1)
        bit = rng.random(T) < p1
        out[:, i] = bit
        v = np.where(bit[:, None], v1, v0)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
    return BitDataset(out)


def _weighted_unique(ds):
    uniq, counts = ds.unique()
    return uniq.astype(np.intp), counts / ds.T


def _log_probs(m, X):
    psi = amplitudes(m, X)
    logz = log_norm_squared(m)
    with np.errstate(divide="ignore"):
        lp = 2.0 * np.log(np.abs(psi)) - logz
    return psi, lp, logz


def _check_support(X, lp):
    bad = np.flatnonzero(~(lp > math.log(P_FLOOR)))
    if bad.size:
        raise SupportError(X[bad[0]], int(bad[0]))


def nll(m, ds):
    """Mean of -ln P(x_t) over the dataset."""
    X, w = _weighted_unique(ds)
    if X.shape[1] != m.n:
        raise ValidationError(f"dataset has {X.shape[1]} sites, model has {m.n}")
    _, lp, _ = _log_probs(m, X)
    _check_support(X, lp)
    return float(-np.dot(w, lp))


def kl_empirical(m, ds):
    """KL(P_data || P_model) summed over the distinct samples of ``ds``."""
    X, w = _weighted_unique(ds)
    if X.shape[1] != m.n:
        raise ValidationError(f"dataset has {X.shape[1]} sites, model has {m.n}")
    _, lp, _ = _log_probs(m, X)
    _check_support(X, lp)
    return float(np.dot(w, np.log(w) - lp))


def nll_and_grad(m, X, w):
    """NLL over distinct samples X with weights w, and its gradient per core.

    d NLL / dA = (d ||psi||^2 / dA) / ||psi||^2 - 2 sum_u w_u (d psi_u / dA) / psi_u
    """
    n = m.n
    cores = m.cores
    U = X.shape[0]
    sel = [c[:, X[:, i], :].transpose(1, 0, 2) for i, c in enumerate(cores)]  # (U, l, r)

    left = [np.ones((U, 1))]
    for i in range(n - 1):
        left.append(np.einsum("ua,uab->ub", left[-1], sel[i]))
    right = [None] * n
    right[n - 1] = np.ones((U, 1))
    for i in range(n - 1, 0, -1):
        right[i - 1] = np.einsum("uab,ub->ua", sel[i], right[i])
    psi = np.einsum("ua,uab,ub->u", left[0], sel[0], right[0])

    with np.errstate(divide="ignore"):
        lp_unnorm = 2.0 * np.log(np.abs(psi))
    envL = _left_transfer(cores)
    envR = _right_transfer(cores)
    Z = float(envL[n][0, 0])
    if not (Z > 0 and np.isfinite(Z)):
        raise DivergenceError(-1, Z)
    lp = lp_unnorm - math.log(Z)
    _check_support(X, lp)
    loss = float(-np.dot(w, lp))

    coef = w / psi
    grads = []
    for i, c in enumerate(cores):
        g = 2.0 * np.einsum("ac,csd,db->asb", envL[i], c, envR[i + 1]) / Z
        lw = left[i] * coef[:, None]
        for s in (0, 1):
            mask = X[:, i] == s
            if mask.any():
                g[:, s, :] -= 2.0 * lw[mask].T @ right[i][mask]
        grads.append(g)
    return loss, grads


def train(m, ds, cfg):
    """Full-batch gradient descent on the NLL.

    Returns the trained model and a list of ``(epoch, kl)`` pairs recorded at
    epoch 0, every ``cfg.record_every`` epochs, and at the final epoch.
    """
    X, w = _weighted_unique(ds)
    if X.shape[1] != m.n:
        raise ValidationError(f"dataset has {X.shape[1]} sites, model has {m.n}")
    entropy = float(-np.dot(w, np.log(w)))
    model = m.copy()
    trace = []
    loss, grads = nll_and_grad(model, X, w)
    for epoch in range(cfg.epochs + 1):
        if not math.isfinite(loss):
            raise DivergenceError(epoch, loss)
        if epoch % cfg.record_every == 0 or epoch == cfg.epochs:
            trace.append((epoch, loss - entropy))
        if epoch == cfg.epochs:
            break
        model = MPSModel([c - cfg.learning_rate * g for c, g in zip(model.cores, grads)])
        try:
            loss, grads = nll_and_grad(model, X, w)
        except DivergenceError as exc:
            raise DivergenceError(epoch + 1, exc.value) from None
    return model, trace


def init_supported(n, chi, seed, datasets):
    """First model from seeds seed, seed+1, ... giving every sample positive probability."""
    last = None
    for attempt in range(MAX_INIT_ATTEMPTS):
        m = init_random_mps(n, chi, seed + attempt)
        try:
            for ds in datasets:
                nll(m, ds)
        except SupportError as exc:
            last = exc
            continue
        return m, seed + attempt
    raise last


def save_model(m, path):
    blob = b"".join(np.ascontiguousarray(c, dtype="<f8").tobytes() for c in m.cores)
    obj = {
        "n": m.n,
        "bond_dims": list(m.bond_dims),
        "dtype": "<f8",
        "cores": base64.b64encode(blob).decode("ascii"),
    }
    Path(path).write_text(json.dumps(obj, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path):
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    n = int(obj["n"])
    dims = [1] + [int(b) for b in obj["bond_dims"]] + [1]
    if len(dims) != n + 1:
        raise ValidationError(f"{len(dims) - 2} bond dims for {n} sites")
    flat = np.frombuffer(base64.b64decode(obj["cores"]), dtype="<f8")
    sizes = [dims[i] * 2 * dims[i + 1] for i in range(n)]
    if flat.size != sum(sizes):
        raise ValidationError(f"core block holds {flat.size} values, expected {sum(sizes)}")
    cores, at = [], 0
    for i, size in enumerate(sizes):
        cores.append(flat[at:at + size].reshape(dims[i], 2, dims[i + 1]).astype(np.float64))
        at += size
    return MPSModel(cores)
