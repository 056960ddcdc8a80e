"""Experiment orchestration: ordered-vs-shuffled training, spectral-gap and connectivity sweeps.

Every random quantity is derived from a master seed and a tuple of integer
keys, so reports are pure functions of their inputs and independent of how
trials are scheduled across workers.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import born_machine as bm
from . import dataset as dsmod
from . import mi_graph, seriation
from .errors import DisconnectedGraphError, IsolatedVertexError, SeriationError, ValidationError

log = logging.getLogger(__name__)

THREADS_ENV = "SERIATE_TN_THREADS"
DEFAULT_MARGIN = 0.01

# seed-derivation namespaces
_K_STRUCTURE, _K_SAMPLES, _K_TRIAL, _K_SWEEP, _K_CONNECT = range(5)


def derive_seed(master_seed, *keys):
    """Deterministic 32-bit seed from a master seed and integer keys."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF, *(int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def resolve_threads(threads=None):
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            threads = int(env)
        except ValueError:
            raise ValidationError(f"{THREADS_ENV}={env!r} is not an integer") from None
    threads = 1 if threads is None else int(threads)
    if threads < 1:
        raise ValidationError(f"thread count must be >= 1, got {threads}")
    return threads


def _pmap(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


# -- datasets -----------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSpec:
    """Recipe for a dataset.

    kind is one of ``bas``, ``ising_tree``, ``random_mps``, ``markov``, ``file``.
    ``T`` is ignored for ``bas`` (the pattern set is fixed) and for ``file``
    unless sub-sampling is requested by a sweep.
    """

    kind: str
    rows: int = 4
    cols: int = 3
    n: int = 12
    T: int = 1000
    beta: float | None = None
    p: float = 0.1
    data_chi: int = 4
    path: str | None = None

    def __post_init__(self):
        if self.kind not in ("bas", "ising_tree", "random_mps", "markov", "file"):
            raise ValidationError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ValidationError("file dataset needs a path")

    def descriptor(self):
        keys = {
            "bas": ("rows", "cols"),
            "ising_tree": ("n", "T", "beta"),
            "random_mps": ("n", "data_chi", "T"),
            "markov": ("n", "p", "T"),
            "file": ("path",),
        }[self.kind]
        d = {"kind": self.kind}
        d.update({k: getattr(self, k) for k in keys})
        return d

    @property
    def num_sites(self):
        return self.rows * self.cols if self.kind == "bas" else self.n

    def with_T(self, T):
        return DatasetSpec(**{**asdict(self), "T": int(T)})


def _ising_tree(spec, master_seed):
    tree = dsmod.gen_ising_tree(spec.n, derive_seed(master_seed, _K_STRUCTURE))
    beta = dsmod.default_beta(tree) if spec.beta is None else spec.beta
    return tree, beta


def build_dataset(spec, master_seed, replicate=0):
    """Materialize ``spec``.

    The structure (Ising tree, data-generating MPS) depends only on
    ``master_seed``; the samples also depend on ``replicate``.
    """
    sample_seed = derive_seed(master_seed, _K_SAMPLES, replicate, spec.T)
    if spec.kind == "bas":
        return dsmod.gen_bas(spec.rows, spec.cols)
    if spec.kind == "ising_tree":
        tree, beta = _ising_tree(spec, master_seed)
        return dsmod.sample_gibbs(tree, beta, spec.T, sample_seed)
    if spec.kind == "random_mps":
        model = bm.init_random_mps(spec.n, spec.data_chi, derive_seed(master_seed, _K_STRUCTURE))
        return bm.sample(model, spec.T, sample_seed)
    if spec.kind == "markov":
        return dsmod.gen_markov_chain(spec.n, spec.p, spec.T, sample_seed)
    return dsmod.load_dataset(spec.path)


def exact_distribution(spec, master_seed):
    """The law the samples are drawn from, or None when it is not known."""
    if spec.kind == "ising_tree":
        tree, beta = _ising_tree(spec, master_seed)
        return tree.gibbs_distribution(beta)
    if spec.kind == "random_mps":
        model = bm.init_random_mps(spec.n, spec.data_chi, derive_seed(master_seed, _K_STRUCTURE))
        return bm.exact_distribution(model)
    if spec.kind == "markov":
        return dsmod.markov_chain_distribution(spec.n, spec.p)
    if spec.kind == "bas":
        pats = dsmod.gen_bas(spec.rows, spec.cols).samples
        p = np.zeros(2 ** pats.shape[1])
        p[dsmod.bits_to_index(pats)] = 1.0 / pats.shape[0]
        return p
    return None


# -- seriation policy ---------------------------------------------------------


def seriate_weights(W, normalized=False):
    """Fiedler ordering with the disconnected-graph policy.

    Components are seriated independently and concatenated by decreasing
    size (ties by smallest site). The returned ordering's ``meta`` records
    whether the policy fired.
    """
    W = mi_graph.check_weight_matrix(W)
    perm, comps = _seriate_rec(W, np.arange(W.shape[0]), normalized)
    try:
        spec = mi_graph.laplacian_spectrum(W, normalized=normalized)
    except IsolatedVertexError:
        spec = mi_graph.laplacian_spectrum(W)
    lam = spec.eigenvalues
    n = W.shape[0]
    lambda1 = float(lam[1]) if n > 1 else 0.0
    gap = float(lam[2] - lam[1]) if n > 2 else float("inf")
    perm = seriation.canonicalize(perm)
    meta = {}
    if comps is not None:
        meta = {"disconnected": True, "components": comps}
    stable = comps is None and gap >= mi_graph.EPS_EIG
    return seriation.Ordering(perm, seriation.perm_cost(W, perm), stable, lambda1, gap, meta)


def _seriate_rec(W, sites, normalized):
    if len(sites) <= 2:
        return [int(s) for s in sites], None
    sub = W[np.ix_(sites, sites)]
    try:
        spec = mi_graph.laplacian_spectrum(sub, normalized=normalized)
        order = seriation.fiedler_order(spec, sub)
        return [int(sites[k]) for k in order.perm], None
    except IsolatedVertexError:
        comps = mi_graph.connected_components(sub)
    except DisconnectedGraphError as exc:
        comps = exc.components
    if len(comps) == 1:
        # positive weights everywhere but lambda1 below tolerance: use the solver's vector as is
        spec = mi_graph.laplacian_spectrum(sub, normalized=False)
        perm = np.argsort(spec.fiedler_vector, kind="stable")
        return [int(sites[k]) for k in perm], [[int(s) for s in sites]]
    comps = sorted(comps, key=lambda c: (-len(c), c[0]))
    out, parts = [], []
    for comp in comps:
        part, _ = _seriate_rec(W, sites[comp], normalized)
        out.extend(part)
        parts.append(sorted(int(sites[c]) for c in comp))
    return out, parts


# -- ordered vs shuffled experiment -------------------------------------------


@dataclass(frozen=True)
class _TrialJob:
    index: int
    samples: np.ndarray
    chi: int
    cfg: bm.TrainConfig
    master_seed: int


def run_trial(job):
    """One shuffle: train on shuffled data and on its seriated reordering from the same init."""
    ds = dsmod.BitDataset(job.samples)
    trial_seed = derive_seed(job.master_seed, _K_TRIAL, job.index)
    rng = np.random.default_rng(trial_seed)
    shuffle = rng.permutation(ds.n)
    shuffled = dsmod.permute_dataset(ds, shuffle)
    W = mi_graph.empirical_pairwise_mi(shuffled)
    order = seriate_weights(W)
    seriated = dsmod.permute_dataset(shuffled, order.perm)

    init_seed = derive_seed(trial_seed, 1)
    model, used_seed = bm.init_supported(ds.n, job.chi, init_seed, [shuffled, seriated])
    fingerprint = model.fingerprint()
    _, trace_a = bm.train(model, shuffled, job.cfg)
    if model.fingerprint() != fingerprint:
        raise RuntimeError("initial model mutated during training")
    _, trace_b = bm.train(model, seriated, job.cfg)
    return {
        "trial": job.index,
        "trial_seed": trial_seed,
        "init_seed": used_seed,
        "init_fingerprint": fingerprint,
        "shuffle": [int(v) for v in shuffle],
        "seriation": list(order.perm),
        "seriation_cost": order.cost,
        "disconnected": bool(order.meta.get("disconnected", False)),
        "final_kl_random": trace_a[-1][1],
        "final_kl_seriated": trace_b[-1][1],
        "kl_traces": {
            "random": [[e, kl] for e, kl in trace_a],
            "seriated": [[e, kl] for e, kl in trace_b],
        },
    }


def _safe_trial(job):
    try:
        return run_trial(job)
    except SeriationError as exc:
        return {"trial": job.index, "error": f"{type(exc).__name__}: {exc}"}


def summarize(trials, margin=DEFAULT_MARGIN):
    kr = np.array([t["final_kl_random"] for t in trials], dtype=float)
    ks = np.array([t["final_kl_seriated"] for t in trials], dtype=float)
    if kr.size == 0:
        return {"median_kl_random": None, "median_kl_seriated": None,
                "win_fraction": None, "margin": margin, "num_trials": 0}
    wins = int(np.count_nonzero(ks < kr * (1.0 - margin)))
    return {
        "median_kl_random": float(np.median(kr)),
        "median_kl_seriated": float(np.median(ks)),
        "win_fraction": wins / kr.size,
        "wins": wins,
        "margin": margin,
        "num_trials": int(kr.size),
    }


def run_seriation_experiment(spec, chi=8, cfg=None, num_shuffles=50, master_seed=0,
                             threads=1, margin=DEFAULT_MARGIN):
    """Seriated vs randomly ordered MPS training over ``num_shuffles`` site shuffles."""
    cfg = cfg or bm.TrainConfig()
    if spec.num_sites > dsmod.MAX_ENUM_SITES:
        raise ValidationError(f"experiment limited to n <= {dsmod.MAX_ENUM_SITES}")
    ds = build_dataset(spec, master_seed)
    jobs = [_TrialJob(t, ds.samples, chi, cfg, master_seed) for t in range(num_shuffles)]
    results = _pmap(_safe_trial, jobs, threads)
    trials = [r for r in results if "error" not in r]
    failed = [r for r in results if "error" in r]
    for f in failed:
        log.warning("trial %d failed: %s", f["trial"], f["error"])
    W = mi_graph.empirical_pairwise_mi(ds)
    evals = mi_graph.laplacian_spectrum(W).eigenvalues
    summary = summarize(trials, margin)
    summary["num_failed"] = len(failed)
    summary["num_disconnected"] = sum(t["disconnected"] for t in trials)
    return {
        "dataset": {**spec.descriptor(), "n": ds.n, "T": ds.T, "distinct": int(ds.unique()[0].shape[0])},
        "chi": chi,
        "train": asdict(cfg),
        "master_seed": master_seed,
        "num_shuffles": num_shuffles,
        "trials": trials,
        "failed_trials": failed,
        "summary": summary,
        "laplacian_eigenvalues": [float(v) for v in evals],
    }


# -- sweeps -------------------------------------------------------------------


def _spectrum_row(W):
    spec = mi_graph.laplacian_spectrum(W, normalized=True)
    lam = spec.eigenvalues
    return {
        "lambda1": float(lam[1]),
        "lambda2": float(lam[2]),
        "gap": float(lam[2] - lam[1]),
        "eigenvalues": [float(v) for v in lam],
    }


def _stability_job(args):
    spec, T, replicate, master_seed, base = args
    if spec.kind == "file":
        if T > base.shape[0]:
            raise ValidationError(f"requested {T} samples, file holds {base.shape[0]}")
        rng = np.random.default_rng(derive_seed(master_seed, _K_SWEEP, replicate, T))
        idx = np.sort(rng.choice(base.shape[0], size=T, replace=False))
        ds = dsmod.BitDataset(base[idx])
    else:
        ds = build_dataset(spec.with_T(T), master_seed, replicate=replicate)
    row = {"T": int(T), "replicate": replicate}
    row.update(_spectrum_row(mi_graph.empirical_pairwise_mi(ds)))
    return row


def stability_sweep(spec, sample_counts, master_seed=0, num_seeds=10, threads=1):
    """Normalized-Laplacian spectrum of the MI graph at increasing sample counts.

    Returns ``{"rows": per-replicate rows, "medians": per-count medians,
    "exact": spectrum of the exact MI graph or None}``.
    """
    counts = [int(c) for c in sample_counts]
    if not counts or any(c < 1 for c in counts) or counts != sorted(counts):
        raise ValidationError(f"sample counts must be positive and ascending, got {counts}")
    if spec.num_sites < 3:
        raise ValidationError("stability sweep needs at least 3 sites")
    base = dsmod.load_dataset(spec.path).samples if spec.kind == "file" else None
    jobs = [(spec, T, r, master_seed, base) for T in counts for r in range(num_seeds)]
    rows = _pmap(_stability_job, jobs, threads)
    medians = []
    for T in counts:
        sel = [r for r in rows if r["T"] == T]
        medians.append({
            "T": T,
            "lambda1": float(np.median([r["lambda1"] for r in sel])),
            "lambda2": float(np.median([r["lambda2"] for r in sel])),
            "gap": float(np.median([r["gap"] for r in sel])),
        })
    exact = None
    p = exact_distribution(spec, master_seed)
    if p is not None:
        exact = _spectrum_row(mi_graph.exact_pairwise_mi(p, spec.num_sites))
    return {"dataset": spec.descriptor(), "master_seed": master_seed, "num_seeds": num_seeds,
            "rows": rows, "medians": medians, "exact": exact}


def _connectivity_job(args):
    n, chi, T, replicate, master_seed = args
    seed = derive_seed(master_seed, _K_CONNECT, chi, replicate)
    model = bm.init_random_mps(n, chi, seed)
    ds = bm.sample(model, T, derive_seed(seed, 1))
    W = mi_graph.empirical_pairwise_mi(ds)
    isolated = False
    try:
        lam1 = seriation.algebraic_connectivity(W)
    except IsolatedVertexError:
        # a zero-degree vertex disconnects the graph
        lam1, isolated = 0.0, True
    return {
        "chi": chi,
        "replicate": replicate,
        "lambda1": float(lam1),
        "isolated_vertex": isolated,
        "lambda1_unnormalized": mi_graph.laplacian_spectrum(W).lambda1,
    }


def connectivity_sweep(n, chi_list, T=1000, master_seed=0, num_seeds=20, threads=1):
    """Algebraic connectivity of the sampled-MI graph of random MPS at each bond dimension."""
    if n > dsmod.MAX_ENUM_SITES or n < 2:
        raise ValidationError(f"connectivity sweep needs 2 <= n <= {dsmod.MAX_ENUM_SITES}")
    jobs = [(n, int(c), int(T), r, master_seed) for c in chi_list for r in range(num_seeds)]
    rows = _pmap(_connectivity_job, jobs, threads)
    medians = []
    for c in chi_list:
        sel = [r for r in rows if r["chi"] == c]
        medians.append({
            "chi": int(c),
            "lambda1": float(np.median([r["lambda1"] for r in sel])),
            "lambda1_unnormalized": float(np.median([r["lambda1_unnormalized"] for r in sel])),
            "isolated": sum(r["isolated_vertex"] for r in sel),
        })
    return {"n": n, "T": T, "master_seed": master_seed, "num_seeds": num_seeds,
            "rows": rows, "medians": medians}


def canonical_json(obj):
    """Stable serialization: sorted keys, fixed separators, no NaN."""
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"
