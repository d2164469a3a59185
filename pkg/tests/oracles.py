"""Independent reference computations used by several test modules."""

import itertools

import numpy as np

from seqfill.reconstruct import CandidateSet


def random_candidate_set(rng, n_max=8, nu_max=4, dim=2, singleton_p=0.0, n_min=1):
    N = int(rng.integers(n_min, n_max + 1))
    layers = []
    for _ in range(N):
        nu = 1 if rng.random() < singleton_p else int(rng.integers(1, nu_max + 1))
        layers.append(rng.normal(0, 3, (nu, dim)))
    return CandidateSet.from_layers(layers)


def all_paths(cands):
    return itertools.product(*[range(nu) for nu in cands.sizes])


def brute_force_min(cands, spec):
    """Minimum of ``spec.evaluate`` over every path, and a path attaining it.

    Path costs are first screened in vectorised floating point; every path
    within a small margin of the screened minimum is then re-evaluated with
    ``spec.evaluate`` so the comparison is against the same exactly-rounded
    total the search reports.
    """
    idx = np.indices(cands.sizes).reshape(len(cands), -1)       # (N, n_paths)
    pts = np.stack([cands.layers[n][idx[n]] for n in range(len(cands))])  # (N, P, D)
    approx = np.zeros(idx.shape[1])
    for t in spec.terms:
        kind = type(t).__name__
        if kind == "Continuity":
            w = np.ones(len(cands) - 1) if t.step_weights is None else np.asarray(t.step_weights)
            approx += t.coef * np.sum(w[:, None] * t.norm(np.diff(pts, axis=0)), axis=0)
        elif kind == "Smoothness" and len(cands) >= 3:
            approx += t.coef * np.sum(t.norm(pts[2:] - 2 * pts[1:-1] + pts[:-2]), axis=0)
        elif kind in ("Quadratic", "ForwardMapping"):
            approx += np.sum([spec.__class__((t,)).node_cost(pts[n]) for n in range(len(cands))], axis=0)
    near = np.flatnonzero(approx <= approx.min() + 1e-6 * (1 + abs(approx.min())))
    best, best_path = np.inf, None
    for p in near:
        c = spec.evaluate(cands.sequence(idx[:, p]))
        if c < best:
            best, best_path = c, idx[:, p]
    return best, best_path
